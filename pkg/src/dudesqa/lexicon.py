"""Candidate generation: inverted index with normalised frequencies plus an
additive word-embedding ranker for mentions the index does not cover."""
from __future__ import annotations

import enum
import math
import re
import unicodedata
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Optional

import numpy as np

from .dudes import DudeKind, Restriction
from .kb import KbId, KbKind, Literal

DEFAULT_THRESHOLD = 0.4
DEFAULT_EMBEDDING_K = 50


class Source(enum.Enum):
    KbLabels = "KbLabels"
    ExternalLexicon = "ExternalLexicon"
    ManualDict = "ManualDict"
    TranslatedLabels = "TranslatedLabels"


class Origin(enum.Flag):
    Index = enum.auto()
    Embedding = enum.auto()


def normalize_term(term: str) -> str:
    return " ".join(unicodedata.normalize("NFC", term).lower().split())


_DUDE_TO_KB_KIND = {
    DudeKind.Resource: KbKind.Resource,
    DudeKind.Class: KbKind.Class,
    DudeKind.Property: KbKind.ObjectProperty,
}


def parse_lexicon_id(text: str, kind: DudeKind):
    """KB id column of the lexicon TSV; restriction classes use ``prop=value``."""
    if kind is DudeKind.RestrictionClass:
        prop, sep, value = text.partition("=")
        if not sep:
            raise ValueError(f"restriction class id must be prop=value, got {text!r}")
        value = value.strip()
        obj = Literal(int(value)) if value.lstrip("-").isdigit() else KbId.parse(value)
        return Restriction(KbId.parse(prop.strip(), KbKind.ObjectProperty), obj)
    return KbId.parse(text, _DUDE_TO_KB_KIND.get(kind, KbKind.Resource))


@dataclass(frozen=True)
class LexEntry:
    term: str
    kb_id: object  # KbId, or Restriction for restriction classes
    dude_kind: DudeKind
    frequency: int = 1
    source: Source = Source.KbLabels
    lang: str = "en"

    def __post_init__(self):
        object.__setattr__(self, "term", normalize_term(self.term))
        if self.frequency < 1:
            raise ValueError(f"frequency must be >= 1, got {self.frequency}")


@dataclass(frozen=True)
class RankedCandidate:
    kb_id: object
    score: float
    origin: Origin = Origin.Index


def _id_key(kb_id) -> str:
    return str(kb_id)


def rank(cands: Iterable[RankedCandidate]) -> list:
    """Sort non-increasing by score, ties by id."""
    return sorted(cands, key=lambda c: (-c.score, _id_key(c.kb_id)))


class LexiconIndex:
    def __init__(self):
        # (lang, kind, term) -> {kb_id: frequency}
        self._freq: dict = defaultdict(lambda: defaultdict(int))
        self._sources: dict = defaultdict(set)

    def add(self, entry: LexEntry):
        self._freq[(entry.lang, entry.dude_kind, entry.term)][entry.kb_id] += entry.frequency
        self._sources[(entry.lang, entry.dude_kind, entry.term, entry.kb_id)].add(entry.source)

    def __len__(self):
        return sum(len(v) for v in self._freq.values())

    def terms(self, lang: Optional[str] = None) -> set:
        return {t for (lg, _, t) in self._freq if lang is None or lg == lang}

    def lookup(self, term: str, kind: DudeKind, lang: str = "en") -> list:
        freqs = self._freq.get((lang, kind, normalize_term(term)))
        if not freqs:
            return []
        total = sum(freqs.values())
        return rank(RankedCandidate(k, f / total, Origin.Index) for k, f in freqs.items())

    def sources_of(self, term: str, kind: DudeKind, kb_id, lang: str = "en") -> set:
        return set(self._sources.get((lang, kind, normalize_term(term), kb_id), ()))


def build_index(entries: Iterable[LexEntry]) -> LexiconIndex:
    idx = LexiconIndex()
    for e in entries:
        idx.add(e)
    return idx


def lookup(idx: LexiconIndex, term: str, kind: DudeKind, lang: str = "en") -> list:
    return idx.lookup(term, kind, lang)


def read_lexicon_tsv(path_or_lines, sources: Optional[set] = None) -> list:
    """Rows ``term, kb_id, kind, frequency, source, lang``; ``#`` lines skipped."""
    if isinstance(path_or_lines, (str, bytes)) or hasattr(path_or_lines, "__fspath__"):
        with open(path_or_lines, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = list(path_or_lines)
    entries = []
    for n, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.rstrip("\n").split("\t")
        if len(cols) != 6:
            raise ValueError(f"lexicon line {n}: expected 6 columns, got {len(cols)}")
        term, kb_text, kind_text, freq, source, lang = cols
        kind = DudeKind(kind_text)
        entry = LexEntry(term, parse_lexicon_id(kb_text, kind), kind, int(freq), Source(source), lang)
        if sources is None or entry.source in sources:
            entries.append(entry)
    return entries


# --------------------------------------------------------------------------
# embeddings

_TOKEN = re.compile(r"\w+", re.UNICODE)
_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


def split_local_name(local: str) -> str:
    """dbo:populationTotal -> 'population total'; underscores become spaces."""
    return " ".join(_CAMEL.sub(" ", local.replace("_", " ")).lower().split())


@lru_cache(maxsize=None)
def bundled_stopwords(lang: str) -> frozenset:
    path = resources.files("dudesqa") / "data" / "stopwords" / f"{lang}.txt"
    if not path.is_file():
        return frozenset()
    return frozenset(w.strip() for w in path.read_text("utf-8").splitlines() if w.strip())


class EmbeddingSpace:
    def __init__(self, vectors: dict, dimension: int = 100, stopwords: Optional[dict] = None):
        self.dimension = dimension
        self.vectors = {}
        for tok, vec in vectors.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (dimension,):
                raise ValueError(f"vector for {tok!r} has shape {vec.shape}, expected ({dimension},)")
            self.vectors[tok] = vec
        self._stopwords = stopwords

    def stopwords(self, lang: str) -> frozenset:
        if self._stopwords is not None:
            return frozenset(self._stopwords.get(lang, ()))
        return bundled_stopwords(lang)

    def __contains__(self, token):
        return token in self.vectors

    def tokens(self, text: str, lang: str = "en") -> list:
        stop = self.stopwords(lang)
        return [t for t in _TOKEN.findall(text.lower()) if t not in stop]

    def mention_vector(self, mention: str, lang: str = "en") -> Optional[np.ndarray]:
        """Sum of covered non-stopword token vectors; None when nothing is covered."""
        covered = [self.vectors[t] for t in self.tokens(mention, lang) if t in self.vectors]
        if not covered:
            return None
        total = np.zeros(self.dimension)
        for v in covered:
            total = total + v
        return total


def mention_vector(space: EmbeddingSpace, mention: str, lang: str = "en") -> Optional[np.ndarray]:
    return space.mention_vector(mention, lang)


def cosine(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> float:
    if a is None or b is None:
        return -1.0
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return -1.0
    return float(np.dot(a, b) / (na * nb))


def read_word2vec_text(path, stopwords: Optional[dict] = None) -> EmbeddingSpace:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: word2vec header must be 'count dim'")
        count, dim = int(header[0]), int(header[1])
        vectors = {}
        for n, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if not parts or not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{n}: expected {dim} components")
            vectors[parts[0]] = [float(x) for x in parts[1:]]
    if len(vectors) != count:
        raise ValueError(f"{path}: header announces {count} vectors, found {len(vectors)}")
    return EmbeddingSpace(vectors, dim, stopwords)


def embedding_candidates(
    space: EmbeddingSpace,
    labels: dict,
    mention: str,
    threshold: float = DEFAULT_THRESHOLD,
    k: int = DEFAULT_EMBEDDING_K,
    lang: str = "en",
) -> list:
    """Top-k entries whose label vector has cosine >= threshold with the mention."""
    if not -1.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [-1, 1]")
    if k < 1:
        raise ValueError("k must be >= 1")
    m = space.mention_vector(mention, lang)
    if m is None:
        return []
    scored = []
    for kb_id, label in labels.items():
        score = cosine(m, space.mention_vector(label, lang))
        if score >= threshold:
            scored.append(RankedCandidate(kb_id, score, Origin.Embedding))
    return rank(scored)[:k]


def merge_candidates(index_cands: list, embedding_cands: list) -> list:
    """Index candidates first (in their order), then embedding-only ones.

    An id found by both keeps its index score and records both origins.
    """
    emb = {c.kb_id: c for c in embedding_cands}
    out = [
        RankedCandidate(c.kb_id, c.score, c.origin | Origin.Embedding) if c.kb_id in emb else c
        for c in index_cands
    ]
    seen = {c.kb_id for c in index_cands}
    out.extend(c for c in embedding_cands if c.kb_id not in seen)
    return out


def recall_at_k(candidates_per_mention: dict, gold: dict, k) -> float:
    """Fraction of gold mentions whose gold id is among their top-k candidates."""
    if not gold:
        raise ValueError("gold must be non-empty")
    if k is None:
        k = math.inf
    hits = 0
    for mention, gold_id in gold.items():
        cands = candidates_per_mention.get(mention, [])
        top = cands if k == math.inf else cands[: int(k)]
        if any((c.kb_id if isinstance(c, RankedCandidate) else c) == gold_id for c in top):
            hits += 1
    return hits / len(gold)


def kb_labels(store, kinds=(KbKind.ObjectProperty, KbKind.DatatypeProperty), lang: str = "en") -> dict:
    """Label per KB id: rdfs:label in lang when present, else the split local name."""
    out = {}
    for kb_id in store.ids():
        if kb_id.kind not in kinds:
            continue
        labels = store.labels(kb_id, lang)
        out[kb_id] = labels[0] if labels else split_local_name(kb_id.local_name)
    return out


def label_entries(store, lang: str = "en") -> list:
    """Index entries derived from KB labels (the DBP configuration)."""
    dude_kind = {
        KbKind.Resource: DudeKind.Resource,
        KbKind.Class: DudeKind.Class,
        KbKind.ObjectProperty: DudeKind.Property,
        KbKind.DatatypeProperty: DudeKind.Property,
    }
    entries = []
    for kb_id in store.ids():
        if kb_id.namespace in ("rdf", "rdfs", "xsd"):
            continue
        labels = store.labels(kb_id, lang) or [split_local_name(kb_id.local_name)]
        for label in labels:
            entries.append(LexEntry(label, kb_id, dude_kind[kb_id.kind], 1, Source.KbLabels, lang))
    return entries


class CandidateSource:
    """Per-node candidate retrieval used by the inference layers."""

    def __init__(
        self,
        index: LexiconIndex,
        embeddings: Optional[EmbeddingSpace] = None,
        labels: Optional[dict] = None,
        embedding_kinds=(DudeKind.Property,),
        threshold: float = DEFAULT_THRESHOLD,
        embedding_k: int = DEFAULT_EMBEDDING_K,
        cap: int = 20,
        store=None,
    ):
        self.index = index
        self.embeddings = embeddings
        self.labels = labels or {}
        self.embedding_kinds = tuple(embedding_kinds)
        self.threshold = threshold
        self.embedding_k = embedding_k
        self.cap = cap
        self.store = store
        self._cache: dict = {}

    def _resolve(self, kb_id):
        if self.store is not None and isinstance(kb_id, KbId):
            return self.store.resolve(kb_id)
        return kb_id

    def candidates(self, node, kind: DudeKind, lang: str = "en") -> list:
        key = (node.surface, node.lemma, kind, lang)
        if key in self._cache:
            return self._cache[key]
        best: dict = {}
        for term in dict.fromkeys((node.lemma, node.surface)):
            for c in self.index.lookup(term, kind, lang):
                if c.kb_id not in best or c.score > best[c.kb_id].score:
                    best[c.kb_id] = c
        found = rank(best.values())
        if self.embeddings is not None and kind in self.embedding_kinds:
            emb = []
            for term in dict.fromkeys((node.surface, node.lemma)):
                emb.extend(embedding_candidates(self.embeddings, self.labels, term, self.threshold,
                                                self.embedding_k, lang))
            dedup: dict = {}
            for c in rank(emb):
                dedup.setdefault(c.kb_id, c)
            found = merge_candidates(found, list(dedup.values()))
        out = [RankedCandidate(self._resolve(c.kb_id), c.score, c.origin) for c in found[: self.cap]]
        self._cache[key] = out
        return out
