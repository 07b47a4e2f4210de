"""Imperatively defined factor graph over parse states.

Templates match fragments of a state (assigned nodes, assigned edges) and emit
sparse feature vectors; a factor's log-score is ``f . theta`` of its template.
The partition function is never computed: inference only compares states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .deptree import DepNode, DepTree, Edge
from .dudes import DudeKind, Restriction
from .kb import KbId, Literal
from .lexicon import Origin, split_local_name

AND = "∧"
MODEL_HEADER = "# dudesqa-model v1"


# --------------------------------------------------------------------------
# state

class ParseState:
    """A partial interpretation (W, E, alpha, beta, gamma) of one tree.

    Treated as immutable: use :meth:`assign` to derive successors.
    """

    __slots__ = ("tree", "alpha", "beta", "gamma", "link_scores",
                 "model_score", "objective_score", "_key", "_sort_key")

    def __init__(self, tree: DepTree, alpha=None, beta=None, gamma=None, link_scores=None):
        self.tree = tree
        self.alpha = dict(alpha or {})
        self.beta = dict(beta or {})
        self.gamma = dict(gamma or {})
        # node -> (retrieval score, Origin) for the assigned KB id
        self.link_scores = dict(link_scores or {})
        self.model_score = 0.0
        self.objective_score = 0.0
        self._key = None
        self._sort_key = None

    @classmethod
    def empty(cls, tree: DepTree) -> "ParseState":
        return cls(tree)

    @property
    def key(self):
        if self._key is None:
            self._key = (
                frozenset(self.alpha.items()),
                frozenset(self.beta.items()),
                frozenset(self.gamma.items()),
            )
        return self._key

    @property
    def sort_key(self) -> tuple:
        if self._sort_key is None:
            self._sort_key = (
                tuple(sorted((n, str(v)) for n, v in self.alpha.items())),
                tuple(sorted((n, v.value) for n, v in self.beta.items())),
                tuple(sorted((e.parent, e.child, e.relation, i) for e, i in self.gamma.items())),
            )
        return self._sort_key

    def __eq__(self, other):
        return isinstance(other, ParseState) and self.tree is other.tree and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def assign(self, nodes=(), edges=()) -> "ParseState":
        """nodes: (node_id, kind, kb_id or None, link score, origin); edges: (edge, index)."""
        new = ParseState(self.tree, self.alpha, self.beta, self.gamma, self.link_scores)
        for node_id, kind, kb_id, score, origin in nodes:
            new.beta[node_id] = kind
            if kb_id is None:
                new.alpha.pop(node_id, None)
                new.link_scores.pop(node_id, None)
            else:
                new.alpha[node_id] = kb_id
                new.link_scores[node_id] = (score, origin)
        for edge, index in edges:
            new.gamma[edge] = index
        return new

    def linked_ids(self) -> set:
        out = set()
        for v in self.alpha.values():
            out |= v.ids() if isinstance(v, Restriction) else {v}
        return out

    def describe(self) -> str:
        lines = []
        for node in self.tree.nodes:
            kind = self.beta.get(node.node_id)
            kb = self.alpha.get(node.node_id)
            lines.append(
                f"node {node.node_id} {node.surface!r}: "
                f"alpha={kb if kb is not None else '-'} beta={kind.value if kind else '-'}"
            )
        for edge in sorted(self.tree.edges):
            if edge in self.gamma:
                lines.append(f"edge {edge.relation}({edge.parent}->{edge.child}): gamma={self.gamma[edge]}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# fragments and factors

@dataclass(frozen=True)
class NodeFragment:
    node: DepNode
    kind: DudeKind
    kb_id: object
    link_score: float
    origin: Optional[Origin]


@dataclass(frozen=True)
class EdgeFragment:
    edge: Edge
    parent: DepNode
    child: DepNode
    parent_kind: Optional[DudeKind]
    parent_id: object
    child_kind: Optional[DudeKind]
    child_id: object
    arg_index: int


@dataclass
class Factor:
    template_id: str
    scope: object
    features: dict

    def log_score(self, weights: dict) -> float:
        return sum(weights.get(name, 0.0) * value for name, value in self.features.items())

    def score(self, weights: dict) -> float:
        return math.exp(self.log_score(weights))


def node_fragments(state: ParseState):
    for node_id, kind in sorted(state.beta.items()):
        score, origin = state.link_scores.get(node_id, (0.0, None))
        yield NodeFragment(state.tree.node(node_id), kind, state.alpha.get(node_id), score, origin)


def edge_fragments(state: ParseState):
    tree = state.tree
    for edge in sorted(state.gamma):
        yield EdgeFragment(
            edge, tree.node(edge.parent), tree.node(edge.child),
            state.beta.get(edge.parent), state.alpha.get(edge.parent),
            state.beta.get(edge.child), state.alpha.get(edge.child),
            state.gamma[edge],
        )


# --------------------------------------------------------------------------
# feature helpers

def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def string_similarity(a: str, b: str) -> float:
    """1 - edit distance / longer length, on lowercased camelCase-split strings."""
    a, b = split_local_name(a), split_local_name(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def _kind(k: Optional[DudeKind]) -> str:
    return k.value if k is not None else "-"


def _id(kb_id) -> str:
    return str(kb_id) if kb_id is not None else "-"


def _local_name(kb_id) -> str:
    if isinstance(kb_id, Restriction):
        kb_id = kb_id.value
    if isinstance(kb_id, KbId):
        return kb_id.local_name
    if isinstance(kb_id, Literal):
        return str(kb_id.value)
    return ""


def conj(*parts) -> str:
    return AND.join(parts)


def restriction_compatibility(kb, prop, child_id, child_kind, arg_index) -> str:
    """domain/range indicator for a property parent and its argument."""
    side = "domain" if arg_index == 1 else "range"
    if kb is None or not isinstance(prop, KbId):
        return f"{side}-unknown"
    domain, rng = kb.domain_range(prop)
    declared = domain if arg_index == 1 else rng
    if declared is None or child_id is None:
        return f"{side}-unknown"
    if child_kind is DudeKind.Class:
        ok = child_id == declared
    elif isinstance(child_id, KbId):
        ok = declared in kb.types_of(child_id)
    else:
        ok = False
    return f"{side}-{'compatible' if ok else 'incompatible'}"


# --------------------------------------------------------------------------
# templates

class Template:
    id = "template"

    def __init__(self, weights: Optional[dict] = None):
        self.weights: dict = dict(weights or {})

    def fragments(self, state: ParseState):
        raise NotImplementedError

    def features(self, fragment, kb=None) -> dict:
        raise NotImplementedError

    def roll_out(self, state: ParseState, kb=None) -> list:
        return [Factor(self.id, frag, self.features(frag, kb)) for frag in self.fragments(state)]


class LinkNodeTemplate(Template):
    """Open-class node assignments: lemma, KB id, POS and DUDES kind, plus
    retrieval score and lemma/id string similarity."""

    id = "l2kb.node"

    def fragments(self, state):
        return [f for f in node_fragments(state) if f.kind is not DudeKind.QueryVar]

    def features(self, frag: NodeFragment, kb=None) -> dict:
        n = frag.node
        kind = _kind(frag.kind)
        feats = {
            conj(f"lemma={n.lemma.lower()}", f"kb={_id(frag.kb_id)}", f"pos={n.upos}", f"kind={kind}"): 1.0,
            conj(f"pos={n.upos}", f"kind={kind}"): 1.0,
            "strsim": string_similarity(_local_name(frag.kb_id), n.lemma),
        }
        if frag.origin is not None and frag.origin & Origin.Index:
            feats["freq"] = frag.link_score
        elif frag.origin is not None:
            feats["cosine"] = frag.link_score
        return feats


class LinkEdgeTemplate(Template):
    id = "l2kb.edge"

    def fragments(self, state):
        return [f for f in edge_fragments(state)
                if f.child_kind is not DudeKind.QueryVar and f.parent_kind is not DudeKind.QueryVar]

    def features(self, frag: EdgeFragment, kb=None) -> dict:
        arg = f"arg={frag.arg_index}"
        rel = f"rel={frag.edge.relation}"
        feats = {
            conj(rel, f"pkind={_kind(frag.parent_kind)}", f"ckind={_kind(frag.child_kind)}", arg): 1.0,
            conj(f"pkb={_id(frag.parent_id)}", f"ckb={_id(frag.child_id)}", arg): 1.0,
            conj(f"plemma={frag.parent.lemma.lower()}", f"clemma={frag.child.lemma.lower()}", arg): 1.0,
            conj(f"ppos={frag.parent.upos}", f"cpos={frag.child.upos}", rel, arg): 1.0,
        }
        if frag.parent_kind is DudeKind.Property:
            feats[restriction_compatibility(kb, frag.parent_id, frag.child_id, frag.child_kind,
                                            frag.arg_index)] = 1.0
        return feats


class QueryNodeTemplate(Template):
    id = "qc.node"

    def fragments(self, state):
        return [f for f in node_fragments(state) if f.kind is DudeKind.QueryVar]

    def features(self, frag: NodeFragment, kb=None) -> dict:
        n = frag.node
        return {
            conj(f"lemma={n.lemma.lower()}", f"pos={n.upos}", "kind=QueryVar"): 1.0,
            conj(f"pos={n.upos}", "kind=QueryVar"): 1.0,
        }


class QueryEdgeTemplate(Template):
    id = "qc.edge"

    def fragments(self, state):
        return [f for f in edge_fragments(state)
                if f.child_kind is DudeKind.QueryVar or f.parent_kind is DudeKind.QueryVar]

    def features(self, frag: EdgeFragment, kb=None) -> dict:
        arg = f"arg={frag.arg_index}"
        return {
            conj(f"rel={frag.edge.relation}", f"pkind={_kind(frag.parent_kind)}",
                 f"ckind={_kind(frag.child_kind)}", arg): 1.0,
            conj(f"plemma={frag.parent.lemma.lower()}", f"clemma={frag.child.lemma.lower()}", arg): 1.0,
            conj(f"pkb={_id(frag.parent_id)}", arg): 1.0,
        }


L2KB_TEMPLATES = (LinkNodeTemplate.id, LinkEdgeTemplate.id)
QC_TEMPLATES = (QueryNodeTemplate.id, QueryEdgeTemplate.id)
ALL_TEMPLATES = L2KB_TEMPLATES + QC_TEMPLATES


def default_templates() -> list:
    return [LinkNodeTemplate(), LinkEdgeTemplate(), QueryNodeTemplate(), QueryEdgeTemplate()]


# --------------------------------------------------------------------------
# model

def dot(weights: dict, feats: dict) -> float:
    return sum(weights.get(k, 0.0) * v for k, v in feats.items())


class TemplateModel:
    """Templates with their shared parameter vectors."""

    def __init__(self, templates: Optional[Iterable[Template]] = None, kb=None):
        self.templates = {t.id: t for t in (templates if templates is not None else default_templates())}
        self.kb = kb

    def __getitem__(self, template_id) -> Template:
        return self.templates[template_id]

    def ids(self, template_ids=None) -> tuple:
        return tuple(self.templates) if template_ids is None else tuple(template_ids)

    def roll_out(self, state: ParseState, template_ids=None) -> list:
        factors = []
        for tid in self.ids(template_ids):
            factors.extend(self.templates[tid].roll_out(state, self.kb))
        return factors

    def features(self, state: ParseState, template_ids=None) -> dict:
        """Per-template feature sums over all rolled-out factors."""
        out = {}
        for tid in self.ids(template_ids):
            agg: dict = {}
            for factor in self.templates[tid].roll_out(state, self.kb):
                for name, value in factor.features.items():
                    agg[name] = agg.get(name, 0.0) + value
            out[tid] = agg
        return out

    def score_features(self, feats: dict) -> float:
        return sum(dot(self.templates[tid].weights, fv) for tid, fv in feats.items())

    def model_score(self, state: ParseState, template_ids=None) -> float:
        """log of the unnormalised factor product: sum of f . theta over factors."""
        return sum(f.log_score(self.templates[f.template_id].weights)
                   for f in self.roll_out(state, template_ids))

    def weights(self) -> dict:
        return {tid: dict(t.weights) for tid, t in self.templates.items()}

    def copy(self) -> "TemplateModel":
        clone = TemplateModel(default_templates(), self.kb)
        for tid, t in self.templates.items():
            clone.templates[tid].weights = dict(t.weights)
        return clone

    # serialisation: sorted "template<TAB>feature<TAB>weight" lines

    def dumps(self) -> str:
        lines = [MODEL_HEADER]
        for tid in sorted(self.templates):
            for name in sorted(self.templates[tid].weights):
                w = self.templates[tid].weights[name]
                if w != 0.0:
                    lines.append(f"{tid}\t{name}\t{w!r}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str, kb=None) -> "TemplateModel":
        lines = text.splitlines()
        if not lines or lines[0].strip() != MODEL_HEADER:
            raise ValueError(f"not a model file (expected header {MODEL_HEADER!r})")
        model = cls(default_templates(), kb)
        for n, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"model line {n}: expected 3 tab-separated fields")
            tid, name, weight = parts
            if tid not in model.templates:
                raise ValueError(f"model line {n}: unknown template {tid!r}")
            model.templates[tid].weights[name] = float(weight)
        return model

    @classmethod
    def load(cls, path, kb=None) -> "TemplateModel":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read(), kb)


def roll_out(state: ParseState, templates) -> list:
    if isinstance(templates, TemplateModel):
        return templates.roll_out(state)
    factors = []
    for t in templates:
        factors.extend(t.roll_out(state))
    return factors


def model_score(state: ParseState, templates) -> float:
    if isinstance(templates, TemplateModel):
        return templates.model_score(state)
    return sum(dot(t.weights, f.features) for t in templates for f in t.roll_out(state))

