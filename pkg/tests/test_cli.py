import csv
import io
import json
from pathlib import Path

import pytest

from dudesqa.cli import main
from dudesqa.corpus import fixture
from dudesqa.factors import TemplateModel
from dudesqa.kb import load_turtle_file

FIX = {name: str(fixture(name)) for name in
       ("toy_kb.ttl", "lexicon.tsv", "embeddings.txt", "micro_corpus.json", "micro_corpus.conllu",
        "questions.conllu", "gold_lexicon.tsv")}
BASE = ["--kb", FIX["toy_kb.ttl"], "--lexicon", FIX["lexicon.tsv"]]
DATA = ["--data", FIX["micro_corpus.json"], "--conllu", FIX["micro_corpus.conllu"]]


@pytest.fixture(scope="module")
def model_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "model.tsv"
    assert main(["train", *BASE, *DATA, "--out", str(path)]) == 0
    return path


def test_train_reload_identical(tmp_path, model_file, micro_corpus):
    kb = load_turtle_file(FIX["toy_kb.ttl"])
    other = tmp_path / "again.tsv"
    assert main(["train", *BASE, *DATA, "--out", str(other), "--log", str(tmp_path / "log.csv")]) == 0
    assert other.read_bytes() == model_file.read_bytes()
    a, b = TemplateModel.load(model_file, kb), TemplateModel.load(other, kb)
    for inst in micro_corpus:
        from dudesqa.factors import ParseState
        s = ParseState.empty(inst.tree)
        assert a.model_score(s) == b.model_score(s)
    rows = list(csv.reader(io.StringIO((tmp_path / "log.csv").read_text())))
    assert rows[0] == ["epoch", "mean_linking_f1", "mean_query_similarity"] and len(rows) == 11


def test_config_file(tmp_path):
    out = tmp_path / "m.tsv"
    assert main(["train", "--config", str(Path(__file__).parents[1] / "configs" / "micro.cfg"), "--epochs", "1", "--out", str(out)]) == 0
    assert out.read_text().startswith("# dudesqa-model v1")


@pytest.mark.parametrize("extra, field", [
    (["--use-embeddings"], "embeddings"),
    (["--use-embeddings", "--embeddings", "/nonexistent/vectors.txt"], "embeddings"),
    (["--epochs", "0"], "epochs"),
])
def test_validation_fails_fast(tmp_path, capsys, extra, field):
    out = tmp_path / "model.tsv"
    assert main(["train", *BASE, *DATA, "--out", str(out), "--log", str(tmp_path / "log.csv"), *extra]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith(f"error kind=validation field={field}:")
    assert list(tmp_path.iterdir()) == []


def test_parse_execute(model_file, capsys):
    code = main(["parse", *BASE, "--model", str(model_file), "--conllu", FIX["micro_corpus.conllu"],
                 "--question-id", "q1", "--execute"])
    out = capsys.readouterr().out.splitlines()
    assert code == 0
    assert out[1] == "SELECT DISTINCT ?y WHERE { dbr:Wikipedia dbo:author ?y . }"
    answers = [line for line in out if line.startswith("answer:")]
    assert answers == ["answer: dbr:Jimmy_Wales", "answer: dbr:Larry_Sanger"]


def test_parse_spanish(model_file, capsys):
    assert main(["parse", *BASE, "--model", str(model_file), "--conllu", FIX["questions.conllu"],
                 "--lang", "es", "--explain"]) == 0
    out = capsys.readouterr().out
    assert "(es) ¿Quién creó Wikipedia?" in out
    assert "SELECT DISTINCT ?y WHERE { dbr:Wikipedia dbo:author ?y . }" in out
    assert "model score" in out


def test_garbage_conllu(tmp_path, model_file, capsys):
    bad = tmp_path / "bad.conllu"
    bad.write_text("this is\tnot\na tree\n")
    assert main(["parse", *BASE, "--model", str(model_file), "--conllu", str(bad)]) != 0
    assert "error kind=validation field=conllu" in capsys.readouterr().err


def test_parse_uninterpretable(tmp_path, model_file, capsys):
    text = "# sent_id = x\n1\tBlorf\tblorf\tVERB\t_\t_\t0\troot\t_\t_\n2\tzyx\tzyx\tNOUN\t_\t_\t1\tobj\t_\t_\n"
    path = tmp_path / "x.conllu"
    path.write_text(text)
    assert main(["parse", *BASE, "--model", str(model_file), "--conllu", str(path)]) == 2
    assert "error kind=runtime field=parse" in capsys.readouterr().err


def test_empty_test_set(tmp_path, model_file):
    data, trees = tmp_path / "empty.json", tmp_path / "empty.conllu"
    data.write_text(json.dumps({"questions": []}))
    trees.write_text("")
    out = tmp_path / "report"
    assert main(["eval", *BASE, "--model", str(model_file), "--data", str(data), "--conllu", str(trees),
                 "--out", str(out)]) == 0
    assert (out / "summary.csv").read_text() == "config,language,task,macro_f1\n"


def test_eval_reports(tmp_path, model_file):
    out = tmp_path / "report"
    assert main(["eval", *BASE, "--embeddings", FIX["embeddings.txt"], "--model", str(model_file), *DATA,
                 "--lexicon-config", "DBP+DBLex+Dict", "--lexicon-config", "DBP", "--lexicon-config",
                 "DBP+DBLex+Dict+Embed", "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO((out / "summary.csv").read_text())))
    scores = {(r["config"], r["task"]): float(r["macro_f1"]) for r in rows}
    assert scores[("DBP+DBLex+Dict", "qa")] == 1.0
    assert scores[("DBP", "linking")] <= scores[("DBP+DBLex+Dict", "linking")]
    assert len(list(out.glob("records_*.csv"))) == 3


def test_lexicon_total_population(capsys):
    assert main(["lexicon", *BASE, "--embeddings", FIX["embeddings.txt"], "--lexicon-config", "DBLex+Embed",
                 "total population"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "rank\tkb_id\tscore\torigin"
    first = lines[1].split("\t")
    assert first[1] == "dbo:populationTotal" and float(first[2]) == pytest.approx(1.0, abs=1e-6)
    assert lines[2].split("\t")[1] == "dbo:totalPopulation"


def test_lexicon_oov(capsys):
    assert main(["lexicon", *BASE, "--embeddings", FIX["embeddings.txt"], "--use-embeddings", "qwzx vvq"]) == 0
    assert capsys.readouterr().out.splitlines() == ["rank\tkb_id\tscore\torigin"]


def test_recall_curve(tmp_path):
    out = tmp_path / "recall.csv"
    assert main(["lexicon", *BASE, "--embeddings", FIX["embeddings.txt"], "--use-embeddings",
                 "--recall-eval", FIX["gold_lexicon.tsv"], "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert [int(r["k"]) for r in rows] == list(range(1, 11))
    idx = [float(r["recall_index"]) for r in rows]
    both = [float(r["recall_index_embeddings"]) for r in rows]
    assert idx == sorted(idx) and both == sorted(both)
    assert all(b >= a for a, b in zip(idx, both))
