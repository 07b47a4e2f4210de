"""SampleRank training of the template weights."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from .deptree import DepTree, preprocess
from .factors import ALL_TEMPLATES, L2KB_TEMPLATES, ParseState, TemplateModel
from .inference import (
    TRAIN_SCHEDULE,
    ChainConfig,
    L2kbProposer,
    Mode,
    QcProposer,
    Scorer,
    chain_rng,
    rank_states,
    run_layer,
    state_query,
)
from .kb import ConjunctiveQuery, QueryError, Var, query_ids

log = logging.getLogger(__name__)


def f1(predicted: set, gold: set) -> float:
    tp = len(predicted & gold)
    if tp == 0:
        return 0.0
    p, r = tp / len(predicted), tp / len(gold)
    return 2 * p * r / (p + r)


def linking_objective(state: ParseState, gold_ids: set) -> float:
    """F1 between the KB ids linked in the state and those of the gold query."""
    return f1(state.linked_ids(), set(gold_ids))


def _bijections(src: list, dst: list):
    """Injective maps from the smaller variable list into the larger one."""
    if len(src) <= len(dst):
        for image in itertools.permutations(dst, len(src)):
            yield dict(zip(src, image))
    else:
        for image in itertools.permutations(src, len(dst)):
            yield {s: d for s, d in zip(image, dst)}


def query_similarity(inferred: Optional[ConjunctiveQuery], gold: ConjunctiveQuery) -> float:
    """Triple-pattern F1 under the best one-to-one variable renaming."""
    if inferred is None:
        return 0.0
    inf_patterns = set(inferred.patterns)
    gold_patterns = set(gold.patterns)
    if not inf_patterns or not gold_patterns:
        return 0.0
    inf_vars = sorted(inferred.variables())
    gold_vars = sorted(gold.variables())
    best = 0
    for mapping in _bijections(inf_vars, gold_vars):
        # unmapped variables get names that cannot collide with gold ones
        renamed = {
            tuple(mapping.get(t, Var("\0" + t.name)) if isinstance(t, Var) else t for t in p)
            for p in inf_patterns
        }
        best = max(best, len(renamed & gold_patterns))
        if best == len(gold_patterns):
            break
    if best == 0:
        return 0.0
    p, r = best / len(inf_patterns), best / len(gold_patterns)
    return 2 * p * r / (p + r)


def samplerank_update(model: TemplateModel, s_prev: ParseState, s_next: ParseState,
                      objective: Callable[[ParseState], float], eta: float,
                      template_ids=ALL_TEMPLATES, scorer: Optional[Scorer] = None) -> bool:
    """Perceptron step when the model does not rank the objective-preferred
    state strictly higher. Returns whether the weights moved."""
    o_prev, o_next = objective(s_prev), objective(s_next)
    if o_prev == o_next:
        return False
    preferred, other = (s_next, s_prev) if o_next > o_prev else (s_prev, s_next)
    if scorer is not None:
        f_pref, f_other = scorer.features(preferred), scorer.features(other)
    else:
        f_pref = model.features(preferred, template_ids)
        f_other = model.features(other, template_ids)
    if model.score_features(f_pref) > model.score_features(f_other):
        return False
    for tid in f_pref.keys() | f_other.keys():
        a, b = f_pref.get(tid, {}), f_other.get(tid, {})
        weights = model.templates[tid].weights
        for name in sorted(a.keys() | b.keys()):
            step = eta * (a.get(name, 0.0) - b.get(name, 0.0))
            if step:
                weights[name] = weights.get(name, 0.0) + step
    return True


@dataclass
class TrainInstance:
    id: str
    question: str
    lang: str
    tree: DepTree
    gold: ConjunctiveQuery
    answers: Optional[list] = None

    @property
    def gold_ids(self) -> set:
        return query_ids(self.gold)


@dataclass
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.01
    beam: int = 10
    steps: int = 50
    seed: int = 0
    schedule: tuple = TRAIN_SCHEDULE
    model_temperature: float = 1.0
    objective_temperature: float = 0.01

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")

    def chain(self, schedule=None) -> ChainConfig:
        return ChainConfig(self.steps, self.beam, self.model_temperature, self.objective_temperature,
                           self.seed, tuple(schedule or self.schedule))


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (epoch, mean linking F1, mean query similarity)
    updates: int = 0
    skipped: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,mean_linking_f1,mean_query_similarity"]
        lines += [f"{e},{lf:.6f},{qs:.6f}" for e, lf, qs in self.rows]
        return "\n".join(lines) + "\n"


def train(dataset: list, model: TemplateModel, candidates, kb, config: Optional[TrainConfig] = None,
          on_update: Optional[Callable] = None) -> tuple:
    """SampleRank over L2KB chains (linking objective) then QC chains (query
    similarity). Mutates and returns ``model`` together with a :class:`TrainLog`."""
    config = config or TrainConfig()
    if not dataset:
        raise ValueError("training needs at least one instance")
    train_log = TrainLog()
    usable = []
    for inst in dataset:
        try:
            kb.execute(inst.gold)
        except QueryError as exc:
            log.warning("skipping %s: gold query does not execute (%s)", inst.id, exc)
            train_log.skipped.append(inst.id)
            continue
        usable.append((inst, preprocess(inst.tree)))
    chain = config.chain()
    proposers: dict = {}

    for epoch in range(1, config.epochs + 1):
        order = list(usable)
        chain_rng(config.seed, "shuffle", epoch).shuffle(order)
        link_scores, query_scores = [], []
        for inst, tree in order:
            gold_ids = inst.gold_ids
            lang = inst.lang or tree.lang or "en"
            if lang not in proposers:
                proposers[lang] = L2kbProposer(candidates, kb, lang)

            def link_obj(s, gold_ids=gold_ids):
                return linking_objective(s, gold_ids)

            def query_obj(s, gold=inst.gold):
                return query_similarity(state_query(s), gold)

            l2kb_scorer = Scorer(model, L2KB_TEMPLATES, link_obj)
            qc_scorer = Scorer(model, ALL_TEMPLATES, query_obj)

            def updater(scorer, objective, template_ids):
                def on_pairs(pairs):
                    for prev, nxt in pairs:
                        if samplerank_update(model, prev, nxt, objective, config.learning_rate,
                                             template_ids, scorer):
                            train_log.updates += 1
                            if on_update is not None:
                                on_update(prev, nxt)
                return on_pairs

            beam = run_layer([ParseState.empty(tree)], proposers[lang], l2kb_scorer, chain,
                             chain_rng(config.seed, epoch, inst.id, "l2kb"),
                             on_pairs=updater(l2kb_scorer, link_obj, L2KB_TEMPLATES))
            # progress is measured on the state the current model prefers
            link_scores.append(link_obj(rank_states(beam, Mode.Model)[0]))
            beam = rank_states(beam, Mode.Objective)
            qc_beam = run_layer(beam, QcProposer(), qc_scorer, chain,
                                chain_rng(config.seed, epoch, inst.id, "qc"),
                                on_pairs=updater(qc_scorer, query_obj, ALL_TEMPLATES))
            query_scores.append(query_obj(rank_states(qc_beam, Mode.Model)[0]))
        n = max(len(order), 1)
        train_log.rows.append((epoch, sum(link_scores) / n, sum(query_scores) / n))
        log.info("epoch %d: linking F1 %.3f, query similarity %.3f", epoch,
                 train_log.rows[-1][1], train_log.rows[-1][2])
    return model, train_log
