import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dudesqa.evaluation import (
    CATEGORIES,
    NO_PARSE,
    WRONG_PROPERTY,
    WRONG_QUERY_TYPE,
    WRONG_RESOURCE,
    WRONG_SLOT,
    EXECUTION_ERROR,
    answer_scores,
    eval_linking,
    eval_qa,
    evaluate,
    summary_csv,
    summary_table,
)
from dudesqa.kb import ConjunctiveQuery, KbId, KbKind, Var, parse_sparql, query_ids

q = parse_sparql


def test_eval_linking_examples():
    gold = {"a": {"x", "y"}, "b": {"x", "y"}, "c": {"x"}}
    assert eval_linking(dict(gold), gold) == 1.0
    assert eval_linking({k: set() for k in gold}, gold) == 0.0
    mixed = {"a": {"x", "y"}, "b": {"x", "y", "z"}, "c": {"w"}}
    assert eval_linking(mixed, gold) == pytest.approx((1.0 + 0.8 + 0.0) / 3)
    assert eval_linking(mixed, gold) == pytest.approx(0.6)
    with pytest.raises(KeyError):
        eval_linking({"a": set()}, gold)


def test_superset_answers(toy_kb):
    gold = q("SELECT ?x WHERE { dbr:Wikipedia dbo:creator ?x }")
    pred = q("SELECT ?x WHERE { dbr:Wikipedia dbo:author ?x }")
    p, r, f = answer_scores(pred, gold, toy_kb)
    assert (p, r) == (0.5, 1.0) and f == pytest.approx(2 / 3)


def test_identical_and_no_parse(toy_kb):
    gold = q("SELECT ?x WHERE { dbr:Wikipedia dbo:author ?x }")
    assert eval_qa({"a": gold}, {"a": gold}, toy_kb) == 1.0
    assert eval_qa({"a": None}, {"a": gold}, toy_kb) == 0.0


def _report(instances, inferred, toy_kb):
    preds = {i.id: (inferred.get(i.id), query_ids(inferred[i.id]) if inferred.get(i.id) else set())
             for i in instances}
    return {r.id: r for r in evaluate(preds, instances, toy_kb).records}


def test_categories(micro_corpus, toy_kb):
    by_id = {i.id: i for i in micro_corpus}
    inferred = {
        "q1": q("ASK WHERE { dbr:Wikipedia dbo:author ?x }"),
        "q2": None,
        "q3": q("SELECT ?n WHERE { ?n dbo:populationTotal dbr:Poland }"),
        "q4": q("SELECT ?x WHERE { dbr:Hotel_California dbo:musicalArtist ?x }"),
        "q5": q("ASK WHERE { dbr:The_Hunger_Games dbo:author dbr:Jimmy_Wales }"),
    }
    recs = _report(list(by_id.values()), inferred, toy_kb)
    assert recs["q1"].category == WRONG_QUERY_TYPE
    assert recs["q2"].category == NO_PARSE
    assert recs["q3"].category == WRONG_SLOT
    assert recs["q4"].category == WRONG_PROPERTY
    assert recs["q5"].category == WRONG_RESOURCE
    assert recs["q4"].linking_f1 == pytest.approx(0.5)


def test_execution_error_category(micro_corpus, toy_kb):
    bad = ConjunctiveQuery.select([Var("missing")], [(KbId("dbr", "Wikipedia", KbKind.Resource),
                                                      KbId("dbo", "author", KbKind.ObjectProperty), Var("x"))])
    recs = _report(micro_corpus[:1], {micro_corpus[0].id: bad}, toy_kb)
    assert recs[micro_corpus[0].id].category == EXECUTION_ERROR
    assert recs[micro_corpus[0].id].answer_f1 == 0.0


def test_perfect_report(micro_corpus, toy_kb):
    report = evaluate({i.id: (i.gold, i.gold_ids) for i in micro_corpus}, micro_corpus, toy_kb, "gold")
    assert report.macro("linking_f1") == 1.0 and report.macro("answer_f1") == 1.0
    assert all(not r.category for r in report.records)
    table = summary_table([report])
    assert "EN" in table and "Linking" in table and "QA" in table
    assert summary_csv([report]).splitlines()[1] == "gold,en,linking,1.000000"


QUERIES = [
    "SELECT ?x WHERE { dbr:Wikipedia dbo:author ?x }",
    "SELECT ?x WHERE { dbr:Wikipedia dbo:creator ?x }",
    "SELECT ?x WHERE { ?x dbo:author dbr:Jimmy_Wales }",
    "SELECT ?n WHERE { dbr:Poland dbo:populationTotal ?n }",
    "SELECT ?w WHERE { ?w dbo:writer ?p . ?w dbo:musicalArtist ?b }",
    "ASK WHERE { dbr:Wikipedia dbo:author dbr:Jimmy_Wales }",
    "ASK WHERE { dbr:Wikipedia dbo:author dbr:Poland }",
    "SELECT ?x WHERE { dbr:Hotel_California dbo:writer ?x }",
]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(QUERIES), st.sampled_from(QUERIES + [None])), min_size=1, max_size=6))
def test_qa_properties(toy_kb, pairs):
    golds = {str(i): q(g) for i, (g, _) in enumerate(pairs)}
    preds = {str(i): (q(p) if p else None) for i, (_, p) in enumerate(pairs)}
    assert eval_qa(golds, golds, toy_kb) == 1.0
    score = eval_qa(preds, golds, toy_kb)
    assert 0.0 <= score <= 1.0
    per = [answer_scores(preds[k], golds[k], toy_kb)[2] if preds[k] else 0.0 for k in golds]
    assert (score == 1.0) == all(f == 1.0 for f in per)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(QUERIES + [None]), min_size=5, max_size=5))
def test_category_total(micro_corpus, toy_kb, picks):
    recs = _report(micro_corpus, {i.id: (q(p) if p else None) for i, p in zip(micro_corpus, picks)}, toy_kb)
    for r in recs.values():
        if r.answer_f1 < 1.0:
            assert r.category in CATEGORIES
        else:
            assert r.category == ""
