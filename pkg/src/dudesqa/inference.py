"""Two-layer MCMC inference: linking (L2KB) then query construction (QC)."""
from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .deptree import CLOSED_CLASS_UPOS, DepTree, preprocess, traversal_candidates
from .dudes import CompositionError, Dude, DudeKind, apply, make_dude, patterns_of, to_query
from .factors import ALL_TEMPLATES, L2KB_TEMPLATES, ParseState, TemplateModel
from .lexicon import CandidateSource


class Mode(enum.Enum):
    Model = "model"
    Objective = "objective"


TEST_SCHEDULE = (Mode.Model,)
ORACLE_SCHEDULE = (Mode.Objective,)
TRAIN_SCHEDULE = (Mode.Objective, Mode.Model)


@dataclass
class ChainConfig:
    steps: int = 50
    beam: int = 10
    model_temperature: float = 1.0
    # objective values live in [0, 1]; a low temperature keeps acceptance near-greedy
    objective_temperature: float = 0.01
    seed: int = 0
    schedule: tuple = TEST_SCHEDULE

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.beam < 1:
            raise ValueError("beam width must be >= 1")
        if not self.schedule:
            raise ValueError("schedule must name at least one score mode")

    def temperature(self, mode: Mode) -> float:
        return self.model_temperature if mode is Mode.Model else self.objective_temperature


def chain_rng(seed, *names) -> random.Random:
    """Independent, reproducible stream for a named chain."""
    return random.Random("/".join([str(seed), *map(str, names)]))


@dataclass
class Proposal:
    parent: ParseState
    state: ParseState
    changes: tuple
    patterns: tuple = ()


class Uninterpretable(Exception):
    def __init__(self, message: str, best: Optional[ParseState] = None):
        super().__init__(message)
        self.best = best


# --------------------------------------------------------------------------
# composition

def node_dude(state: ParseState, node_id: int) -> Optional[Dude]:
    kind = state.beta.get(node_id)
    if kind is None:
        return None
    return make_dude(kind, state.alpha.get(node_id))


def compose_edge(parent: Dude, child: Dude, arg_index: int) -> Dude:
    """Apply the child into the parent's slot, or the parent into the child's
    (modifiers such as restriction-class adjectives take their head)."""
    if parent.slot(arg_index) is not None:
        return apply(parent, child, arg_index)
    if child.slot(arg_index) is not None:
        return apply(child, parent, arg_index)
    raise CompositionError(f"neither side has an open slot {arg_index}")


def compose(state: ParseState) -> Dude:
    """Bottom-up composition along the tree, children in span order."""
    tree = state.tree

    def visit(node_id) -> Optional[Dude]:
        own = node_dude(state, node_id)
        loose = []
        for edge in tree.children(node_id):
            sub = visit(edge.child)
            if sub is None:
                continue
            index = state.gamma.get(edge)
            if own is not None and index is not None:
                own = compose_edge(own, sub, index)
            else:
                loose.append(sub)
        if own is None:
            if len(loose) > 1:
                raise CompositionError(f"unattached fragments below node {node_id}")
            return loose[0] if loose else None
        if loose:
            raise CompositionError(f"fragment without argument index below node {node_id}")
        return own

    result = visit(tree.root)
    if result is None:
        raise CompositionError("no node is assigned")
    return result


def state_query(state: ParseState):
    """Query of a fully composed state, or None when it does not saturate."""
    try:
        return to_query(compose(state))
    except CompositionError:
        return None


# --------------------------------------------------------------------------
# proposals

_LINK_KINDS = (DudeKind.Resource, DudeKind.Class, DudeKind.Property, DudeKind.RestrictionClass)


class L2kbProposer:
    """Joint changes to the KB ids, DUDES kinds and argument index of one edge,
    pruned when the edge's partial representation has no match in the KB."""

    def __init__(self, candidates: CandidateSource, kb, lang: str = "en"):
        self.candidates = candidates
        self.kb = kb
        self.lang = lang
        self._sat: dict = {}
        self._cache: dict = {}
        self._traversal: dict = {}
        self.pruned = 0

    def traversal(self, tree: DepTree):
        key = id(tree)
        if key not in self._traversal:
            self._traversal[key] = (tree, traversal_candidates(tree))
        return self._traversal[key][1]

    def options(self, tree: DepTree, node_id: int) -> list:
        node = tree.node(node_id)
        out = []
        for kind in _LINK_KINDS:
            for cand in self.candidates.candidates(node, kind, self.lang or tree.lang or "en"):
                out.append((kind, cand))
        return out

    def satisfiable(self, patterns) -> bool:
        if patterns not in self._sat:
            self._sat[patterns] = self.kb.is_satisfiable(patterns)
        return self._sat[patterns]

    def edge_patterns(self, pkind, pid, ckind, cid, arg_index):
        """Patterns of the edge's partial DUDES, or None if it cannot compose."""
        try:
            dude = compose_edge(make_dude(pkind, pid), make_dude(ckind, cid), arg_index)
            patterns = patterns_of(dude)
        except CompositionError:
            return None
        return patterns or None

    def __call__(self, state: ParseState) -> list:
        cached = self._cache.get(state.key)
        if cached is not None and cached[0] is state.tree:
            return [Proposal(state, s, ch, pt) for s, ch, pt in cached[1]]
        tree = state.tree
        _, edges = self.traversal(tree)
        found = []
        for edge in sorted(edges):
            p_opts = self.options(tree, edge.parent)
            c_opts = self.options(tree, edge.child)
            for pkind, pc in p_opts:
                for ckind, cc in c_opts:
                    for arg in (1, 2):
                        if (state.beta.get(edge.parent) is pkind and state.alpha.get(edge.parent) == pc.kb_id
                                and state.beta.get(edge.child) is ckind
                                and state.alpha.get(edge.child) == cc.kb_id
                                and state.gamma.get(edge) == arg):
                            continue
                        patterns = self.edge_patterns(pkind, pc.kb_id, ckind, cc.kb_id, arg)
                        if patterns is None or not self.satisfiable(patterns):
                            self.pruned += 1
                            continue
                        changes = (
                            (edge.parent, pkind, pc.kb_id, pc.score, pc.origin),
                            (edge.child, ckind, cc.kb_id, cc.score, cc.origin),
                        )
                        new = state.assign(changes, [(edge, arg)])
                        found.append((new, changes + ((edge, arg),), patterns))
        self._cache[state.key] = (tree, found)
        return [Proposal(state, s, ch, pt) for s, ch, pt in found]


def propose_l2kb(state: ParseState, lexicon: CandidateSource, kb, lang: str = "en") -> list:
    return L2kbProposer(lexicon, kb, lang)(state)


def open_slots(state: ParseState, node_id: int) -> list:
    """Slot indices of an assigned node not yet filled by an assigned edge."""
    kind = state.beta.get(node_id)
    if kind not in (DudeKind.Property, DudeKind.RestrictionClass):
        return []
    own = make_dude(kind, state.alpha.get(node_id))
    filled = {state.gamma[e] for e in state.tree.children(node_id) if e in state.gamma}
    up = state.tree.parent_edge(node_id)
    if up is not None and up in state.gamma:
        parent_kind = state.beta.get(up.parent)
        parent = make_dude(parent_kind, state.alpha.get(up.parent)) if parent_kind else None
        # the head fills this node's slot when it has no matching slot itself
        if parent is None or parent.slot(state.gamma[up]) is None:
            filled.add(state.gamma[up])
    return [s.arg_index for s in own.slots if s.arg_index not in filled]


class QcProposer:
    """QueryVar assignments to closed-class children filling open slots."""

    def __init__(self):
        self._cache: dict = {}

    def __call__(self, state: ParseState) -> list:
        cached = self._cache.get(state.key)
        if cached is not None and cached[0] is state.tree:
            return [Proposal(state, s, ch) for s, ch in cached[1]]
        tree = state.tree
        _, edges = traversal_candidates(tree)
        found = []
        for edge in sorted(edges):
            child = tree.node(edge.child)
            if child.upos not in CLOSED_CLASS_UPOS or edge.child in state.beta or edge in state.gamma:
                continue
            for index in open_slots(state, edge.parent):
                changes = ((edge.child, DudeKind.QueryVar, None, 0.0, None),)
                new = state.assign(changes, [(edge, index)])
                found.append((new, changes + ((edge, index),)))
        self._cache[state.key] = (tree, found)
        return [Proposal(state, s, ch) for s, ch in found]


def propose_qc(state: ParseState) -> list:
    return QcProposer()(state)


# --------------------------------------------------------------------------
# scoring and acceptance

class Scorer:
    """Model and (optionally) objective scores with per-state feature caching."""

    def __init__(self, model: TemplateModel, template_ids=ALL_TEMPLATES,
                 objective: Optional[Callable[[ParseState], float]] = None):
        self.model = model
        self.template_ids = tuple(template_ids)
        self.objective_fn = objective
        self._features: dict = {}
        self._objective: dict = {}

    def features(self, state: ParseState) -> dict:
        key = (id(state.tree), state.key)
        feats = self._features.get(key)
        if feats is None:
            feats = self.model.features(state, self.template_ids)
            self._features[key] = feats
        return feats

    def model_score(self, state: ParseState) -> float:
        return self.model.score_features(self.features(state))

    def objective(self, state: ParseState) -> float:
        if self.objective_fn is None:
            raise RuntimeError("no objective available (test-time inference)")
        key = (id(state.tree), state.key)
        if key not in self._objective:
            self._objective[key] = self.objective_fn(state)
        return self._objective[key]

    def score(self, state: ParseState) -> ParseState:
        state.model_score = self.model_score(state)
        if self.objective_fn is not None:
            state.objective_score = self.objective(state)
        return state


def mode_score(state: ParseState, mode: Mode) -> float:
    return state.model_score if mode is Mode.Model else state.objective_score


def acceptance_probability(current: float, proposed: float, temperature: float = 1.0) -> float:
    delta = (proposed - current) / temperature
    return 1.0 if delta >= 0 else math.exp(delta)


def accept(current: ParseState, proposal: ParseState, mode: Mode, rng: random.Random,
           temperature: float = 1.0) -> ParseState:
    """Metropolis: take the proposal with probability min(1, exp(delta / T))."""
    p = acceptance_probability(mode_score(current, mode), mode_score(proposal, mode), temperature)
    if p >= 1.0 or rng.random() < p:
        return proposal
    return current


def rank_states(states, mode: Mode) -> list:
    return sorted(states, key=lambda s: (-mode_score(s, mode), s.sort_key))


@dataclass
class LayerTrace:
    """Everything a layer run visited, for diagnostics and final selection."""

    visited: dict = field(default_factory=dict)
    accepted: int = 0
    proposed: int = 0


def run_layer(initial: list, proposer, scorer: Scorer, config: ChainConfig, rng: random.Random,
              on_pairs: Optional[Callable[[list], None]] = None,
              trace: Optional[LayerTrace] = None) -> list:
    """m sampling steps over a beam of k states.

    Each beam state's proposals are scored and individually accepted or
    rejected against it under the step's score mode; current states stay in
    the pool, so the best state is never lost. The pool is ranked and cut to
    k. ``on_pairs`` receives the (state, accepted successor) pairs of a step
    after scoring, so parameter updates take effect from the next step on.
    """
    beam = []
    seen = set()
    for s in initial:
        if s.key not in seen:
            seen.add(s.key)
            beam.append(scorer.score(s))
    if trace is not None:
        for s in beam:
            trace.visited.setdefault(s.key, s)
    if config.steps == 0:
        return beam
    mode = config.schedule[0]
    for step in range(config.steps):
        mode = config.schedule[step % len(config.schedule)]
        temperature = config.temperature(mode)
        for s in beam:
            scorer.score(s)
        pool = {s.key: s for s in beam}
        pairs = []
        for s in beam:
            for prop in proposer(s):
                if prop.state.key in pool:
                    continue
                nxt = scorer.score(prop.state)
                if trace is not None:
                    trace.proposed += 1
                if accept(s, nxt, mode, rng, temperature) is nxt:
                    pool[nxt.key] = nxt
                    pairs.append((s, nxt))
        if trace is not None:
            trace.accepted += len(pairs)
            for s in pool.values():
                trace.visited.setdefault(s.key, s)
        if on_pairs is not None and pairs:
            on_pairs(pairs)
        beam = rank_states(pool.values(), mode)[: config.beam]
    for s in beam:
        scorer.score(s)
    return rank_states(beam, mode)


# --------------------------------------------------------------------------

@dataclass
class Interpretation:
    query: object
    state: ParseState
    dude: Dude
    l2kb_beam: list
    qc_beam: list


def interpret(tree: DepTree, model: TemplateModel, lexicon: CandidateSource, kb,
              config: Optional[ChainConfig] = None, lang: Optional[str] = None,
              linking_objective=None, query_objective=None, name: str = "") -> Interpretation:
    """Map a dependency tree to a query.

    With objectives given and an objective-only schedule this is the oracle
    setting; otherwise only the model score drives acceptance.
    """
    config = config or ChainConfig()
    tree = preprocess(tree)
    lang = lang or tree.lang or "en"
    l2kb = L2kbProposer(lexicon, kb, lang)
    l2kb_scorer = Scorer(model, L2KB_TEMPLATES, linking_objective)
    qc_scorer = Scorer(model, ALL_TEMPLATES, query_objective)
    oracle = Mode.Objective in config.schedule

    stream = name or tree.sent_id or tree.text
    beam = run_layer([ParseState.empty(tree)], l2kb, l2kb_scorer, config,
                     chain_rng(config.seed, stream, "l2kb"))
    trace = LayerTrace()
    qc_beam = run_layer(beam, QcProposer(), qc_scorer, config,
                        chain_rng(config.seed, stream, "qc"), trace=trace)

    best = None
    best_key = None
    for state in trace.visited.values():
        query = state_query(state)
        if query is None:
            continue
        qc_scorer.score(state)
        key = ((state.objective_score,) if oracle else ()) + (state.model_score,)
        if best is None or key > best_key or (key == best_key and state.sort_key < best.sort_key):
            best, best_key = state, key
    if best is None:
        partial = qc_beam[0] if qc_beam else (beam[0] if beam else None)
        raise Uninterpretable("no saturated interpretation found", partial)
    return Interpretation(state_query(best), best, compose(best), beam, qc_beam)
