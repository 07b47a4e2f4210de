import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dudesqa.corpus import build_candidates, fixture, load_dataset  # noqa: E402
from dudesqa.factors import TemplateModel  # noqa: E402
from dudesqa.kb import load_turtle_file  # noqa: E402
from dudesqa.lexicon import read_word2vec_text  # noqa: E402
from dudesqa.training import TrainConfig, train  # noqa: E402


@pytest.fixture(scope="session")
def toy_kb():
    return load_turtle_file(fixture("toy_kb.ttl"))


@pytest.fixture(scope="session")
def embeddings():
    return read_word2vec_text(fixture("embeddings.txt"))


@pytest.fixture(scope="session")
def candidates(toy_kb):
    return build_candidates(toy_kb, [fixture("lexicon.tsv")], langs=("en", "de", "es"))


@pytest.fixture(scope="session")
def micro_corpus():
    return load_dataset(fixture("micro_corpus.json"), fixture("micro_corpus.conllu"))


@pytest.fixture(scope="session")
def multilingual():
    return load_dataset(fixture("questions.json"), fixture("questions.conllu"))


@pytest.fixture(scope="session")
def trained(toy_kb, candidates, micro_corpus):
    """Model trained with the default configuration, plus its log."""
    return train(micro_corpus, TemplateModel(kb=toy_kb), candidates, toy_kb, TrainConfig(seed=0))


_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    outcomes = {}
    for status in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(status, []):
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if not m or getattr(rep, "when", "call") not in ("call", "setup"):
                continue
            n = int(m.group(1))
            ok = status == "passed"
            if rep.when == "setup" and ok:
                continue
            outcomes[n] = outcomes.get(n, True) and ok
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(outcomes):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if outcomes[n] else 'FAIL'}")
