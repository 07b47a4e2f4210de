"""Linking and QA macro F-measures plus error categorisation."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

from .kb import RDF_TYPE, KbId, QueryError, QueryForm, query_ids
from .training import f1

NO_PARSE = "no-parse"
WRONG_RESOURCE = "wrong-resource"
WRONG_PROPERTY = "wrong-property"
WRONG_SLOT = "wrong-slot"
WRONG_QUERY_TYPE = "wrong-query-type"
EXECUTION_ERROR = "execution-error"
OTHER = "other"
CATEGORIES = (NO_PARSE, EXECUTION_ERROR, WRONG_RESOURCE, WRONG_PROPERTY, WRONG_SLOT, WRONG_QUERY_TYPE, OTHER)


@dataclass
class EvalRecord:
    id: str
    lang: str
    gold_query: object
    inferred_query: object = None
    linked_ids: set = field(default_factory=set)
    linking_p: float = 0.0
    linking_r: float = 0.0
    linking_f1: float = 0.0
    answer_p: float = 0.0
    answer_r: float = 0.0
    answer_f1: float = 0.0
    category: str = ""


def prf(predicted: set, gold: set) -> tuple:
    tp = len(predicted & gold)
    p = tp / len(predicted) if predicted else 0.0
    r = tp / len(gold) if gold else 0.0
    return p, r, f1(predicted, gold)


def macro(values) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def eval_linking(predictions: dict, golds: dict) -> float:
    """Macro F1 of linked KB ids, aligned by question id."""
    if set(predictions) != set(golds):
        missing = sorted(set(golds) ^ set(predictions))
        raise KeyError(f"question ids do not align: {missing}")
    return macro(f1(set(predictions[q]), set(golds[q])) for q in sorted(golds))


def answer_scores(predicted, gold, kb) -> tuple:
    """(P, R, F1) of the predicted query's answers against the gold query's."""
    gold_result = kb.execute(gold)
    pred_result = kb.execute(predicted)
    if gold.form is QueryForm.Ask or predicted.form is QueryForm.Ask:
        same = gold.form is predicted.form and gold_result.boolean == pred_result.boolean
        return (1.0, 1.0, 1.0) if same else (0.0, 0.0, 0.0)
    pred, gold_answers = pred_result.answers(), gold_result.answers()
    if not pred and not gold_answers:
        return 1.0, 1.0, 1.0
    return prf(pred, gold_answers)


def eval_qa(predicted: dict, golds: dict, kb, records: Optional[dict] = None) -> float:
    """Macro answer F1. Missing or failing predictions score 0."""
    scores = []
    for qid in sorted(golds):
        pred = predicted.get(qid)
        rec = records.get(qid) if records is not None else None
        if pred is None:
            scores.append(0.0)
            if rec is not None:
                rec.category = NO_PARSE
            continue
        try:
            p, r, f = answer_scores(pred, golds[qid], kb)
        except QueryError:
            p = r = f = 0.0
            if rec is not None:
                rec.category = EXECUTION_ERROR
        if rec is not None:
            rec.answer_p, rec.answer_r, rec.answer_f1 = p, r, f
        scores.append(f)
    return macro(scores)


def _positions(query) -> dict:
    """(predicate, position) -> ids, with rdf:type objects counted as classes."""
    out = defaultdict(set)
    for s, p, o in query.patterns:
        for pos, term in (("s", s), ("o", o)):
            if isinstance(term, KbId):
                out[(p, pos)].add(term)
    return out


def _entities(query) -> set:
    return {t for s, p, o in query.patterns for t in (s, o) if isinstance(t, KbId)}


def _properties(query) -> set:
    return {p for _, p, _ in query.patterns if isinstance(p, KbId) and p != RDF_TYPE}


def categorize_error(record: EvalRecord) -> str:
    """First matching category: resource > property > slot > query type."""
    inferred, gold = record.inferred_query, record.gold_query
    if inferred is None:
        return NO_PARSE
    if record.category == EXECUTION_ERROR:
        return EXECUTION_ERROR
    if _entities(inferred) != _entities(gold):
        return WRONG_RESOURCE
    if _properties(inferred) != _properties(gold):
        return WRONG_PROPERTY
    if _positions(inferred) != _positions(gold):
        return WRONG_SLOT
    if inferred.form is not gold.form:
        return WRONG_QUERY_TYPE
    return OTHER


@dataclass
class EvalReport:
    config: str
    records: list = field(default_factory=list)

    def macro(self, attr: str, lang: Optional[str] = None) -> float:
        return macro(getattr(r, attr) for r in self.records if lang is None or r.lang == lang)

    def languages(self) -> list:
        return sorted({r.lang for r in self.records})

    def category_counts(self) -> dict:
        counts = {c: 0 for c in CATEGORIES}
        for r in self.records:
            if r.category:
                counts[r.category] += 1
        return counts

    def records_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["config", "id", "lang", "inferred_query", "gold_query", "linking_p", "linking_r",
                    "linking_f1", "answer_p", "answer_r", "answer_f1", "category"])
        for r in sorted(self.records, key=lambda r: r.id):
            w.writerow([self.config, r.id, r.lang, r.inferred_query or "", r.gold_query,
                        f"{r.linking_p:.6f}", f"{r.linking_r:.6f}", f"{r.linking_f1:.6f}",
                        f"{r.answer_p:.6f}", f"{r.answer_r:.6f}", f"{r.answer_f1:.6f}", r.category])
        return buf.getvalue()


def evaluate(predictions: dict, instances: list, kb, config: str = "default") -> EvalReport:
    """predictions: id -> (query or None, linked id set)."""
    report = EvalReport(config)
    records = {}
    for inst in instances:
        query, linked = predictions.get(inst.id, (None, set()))
        rec = EvalRecord(inst.id, inst.lang, inst.gold, query, set(linked))
        rec.linking_p, rec.linking_r, rec.linking_f1 = prf(rec.linked_ids, query_ids(inst.gold))
        records[inst.id] = rec
        report.records.append(rec)
    eval_qa({i: records[i].inferred_query for i in records}, {i.id: i.gold for i in instances}, kb, records)
    for rec in report.records:
        if rec.answer_f1 < 1.0 and not rec.category:
            rec.category = categorize_error(rec)
    return report


def summary_table(reports: list) -> str:
    """Language x task rows, one column per lexicon configuration."""
    configs = [r.config for r in reports]
    langs = sorted({lang for r in reports for lang in r.languages()})
    width = max([len(c) for c in configs] + [8])
    header = f"{'Language':<9} {'Task':<8} " + " ".join(f"{c:>{width}}" for c in configs)
    lines = [header, "-" * len(header)]
    for lang in langs:
        for task, attr in (("Linking", "linking_f1"), ("QA", "answer_f1")):
            cells = " ".join(f"{r.macro(attr, lang):>{width}.2f}" for r in reports)
            lines.append(f"{lang.upper():<9} {task:<8} {cells}")
    lines.append("")
    lines.append("error categories (questions with answer F1 < 1):")
    for r in reports:
        counts = r.category_counts()
        parts = ", ".join(f"{k}={v}" for k, v in counts.items() if v)
        lines.append(f"  {r.config}: {parts or 'none'}")
    return "\n".join(lines) + "\n"


def summary_csv(reports: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config", "language", "task", "macro_f1"])
    for r in reports:
        for lang in r.languages():
            w.writerow([r.config, lang, "linking", f"{r.macro('linking_f1', lang):.6f}"])
            w.writerow([r.config, lang, "qa", f"{r.macro('answer_f1', lang):.6f}"])
    return buf.getvalue()
