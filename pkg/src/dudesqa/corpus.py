"""Dataset loading (QALD-style JSON + CoNLL-U) and lexicon configurations."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .deptree import parse_conllu
from .dudes import DudeKind
from .kb import KbKind, parse_sparql
from .lexicon import (
    DEFAULT_EMBEDDING_K,
    DEFAULT_THRESHOLD,
    CandidateSource,
    EmbeddingSpace,
    LexiconIndex,
    Source,
    build_index,
    kb_labels,
    label_entries,
    read_lexicon_tsv,
)
from .training import TrainInstance

# lexicon configuration names -> sources
CONFIG_PARTS = {
    "DBP": {Source.KbLabels, Source.TranslatedLabels},
    "DBLex": {Source.ExternalLexicon},
    "Dict": {Source.ManualDict},
    "Embed": set(),
}


class DatasetError(ValueError):
    pass


def fixture(name: str) -> Path:
    """Path of a bundled fixture file."""
    return Path(str(resources.files("dudesqa") / "data" / "fixtures" / name))


def parse_lexicon_config(text: str) -> tuple:
    """'DBP+DBLex+Dict' -> (sources, use_embeddings)."""
    parts = [p.strip() for p in text.split("+") if p.strip()]
    if not parts:
        raise ValueError("empty lexicon configuration")
    sources, embed = set(), False
    for p in parts:
        if p not in CONFIG_PARTS:
            raise ValueError(f"unknown lexicon configuration part {p!r} (known: {', '.join(CONFIG_PARTS)})")
        sources |= CONFIG_PARTS[p]
        embed = embed or p == "Embed"
    return frozenset(sources), embed


def build_candidates(store, lexicon_paths=(), sources=None, embeddings: Optional[EmbeddingSpace] = None,
                     langs=("en",), threshold: float = DEFAULT_THRESHOLD,
                     embedding_k: int = DEFAULT_EMBEDDING_K, cap: int = 20) -> CandidateSource:
    """Index over the selected sources; KB labels are added when KbLabels is selected."""
    sources = set(sources) if sources is not None else set(Source)
    index = LexiconIndex()
    if Source.KbLabels in sources:
        for lang in langs:
            for entry in label_entries(store, lang):
                index.add(entry)
    for path in lexicon_paths:
        for entry in read_lexicon_tsv(path, sources):
            index.add(entry)
    labels = kb_labels(store, (KbKind.ObjectProperty, KbKind.DatatypeProperty)) if embeddings else {}
    return CandidateSource(index, embeddings, labels, (DudeKind.Property,), threshold, embedding_k, cap, store)


@dataclass
class Question:
    id: str
    lang: str
    text: str
    sparql: str
    answers: Optional[list] = None


def read_questions(path) -> list:
    """Flatten a QALD-style JSON file into one Question per (id, language)."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    out = []
    # either QALD's {"questions": [...]} or a flat array of single-language records
    records = data if isinstance(data, list) else data.get("questions", [])
    for q in records:
        try:
            qid = str(q["id"])
            query = q["query"]
            sparql = query["sparql"] if isinstance(query, dict) else str(query)
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"{path}: question without id or query") from exc
        items = q.get("question", [])
        if isinstance(items, str):
            items = [{"language": q.get("language", "en"), "string": items}]
        for item in items:
            out.append(Question(qid, item.get("language", "en"), item.get("string", ""), sparql,
                                q.get("answers")))
    return out


def load_dataset(json_path, conllu_path, lang: Optional[str] = None, prefixes=None) -> list:
    """TrainInstances for every question that has a tree; trees are keyed by (sent_id, lang)."""
    trees = {}
    for t in parse_conllu(Path(conllu_path).read_text(encoding="utf-8")):
        trees[(t.sent_id, t.lang)] = t
    out = []
    for q in read_questions(json_path):
        if lang is not None and q.lang != lang:
            continue
        tree = trees.get((q.id, q.lang)) or (trees.get((q.id, "")) if q.lang else None)
        if tree is None:
            raise DatasetError(f"no dependency tree for question {q.id} ({q.lang})")
        try:
            gold = parse_sparql(q.sparql, prefixes)
        except ValueError as exc:
            raise DatasetError(f"question {q.id}: gold query does not parse: {exc}") from exc
        out.append(TrainInstance(q.id, q.text, q.lang, tree.with_lang(q.lang), gold, q.answers))
    return out
