"""Command line entry point: train, parse, eval, lexicon.

Settings come from an optional ``key = value`` config file and are overridden
by flags. Exit codes: 0 success, 1 validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .corpus import DatasetError, build_candidates, load_dataset, parse_lexicon_config
from .deptree import ConlluError, DepNode, parse_conllu
from .dudes import DudeKind
from .evaluation import evaluate, summary_csv, summary_table
from .factors import TemplateModel
from .inference import ORACLE_SCHEDULE, TEST_SCHEDULE, ChainConfig, Uninterpretable, interpret, state_query
from .kb import KbId, QueryForm, TurtleSyntaxError, load_turtle_file, query_ids
from .lexicon import DEFAULT_EMBEDDING_K, DEFAULT_THRESHOLD, read_lexicon_tsv, read_word2vec_text, recall_at_k
from .training import TrainConfig, linking_objective, query_similarity, train

log = logging.getLogger("dudesqa")


class ValidationError(Exception):
    def __init__(self, field_name: str, message: str):
        super().__init__(message)
        self.field = field_name


@dataclass
class RunConfig:
    command: str = ""
    kb: Optional[str] = None
    lexicon: list = field(default_factory=list)
    lexicon_config: list = field(default_factory=list)
    embeddings: Optional[str] = None
    use_embeddings: bool = False
    data: Optional[str] = None
    conllu: Optional[str] = None
    model: Optional[str] = None
    out: Optional[str] = None
    log: Optional[str] = None
    epochs: int = 10
    eta: float = 0.01
    beam: int = 10
    steps: int = 50
    threshold: float = DEFAULT_THRESHOLD
    embedding_k: int = DEFAULT_EMBEDDING_K
    cap: int = 20
    seed: int = 0
    lang: Optional[str] = None
    jobs: int = 1
    # parse / eval / lexicon specifics
    question_id: Optional[str] = None
    explain: bool = False
    execute: bool = False
    oracle: bool = False
    mention: Optional[str] = None
    kind: str = "Property"
    recall_eval: Optional[str] = None
    max_k: int = 10


_PATH_KEYS = {"kb", "lexicon", "embeddings", "data", "conllu", "model", "out", "log", "recall_eval"}
_LIST_KEYS = {"lexicon", "lexicon_config"}


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` comments; list keys may repeat or use commas.
    Relative paths resolve against the file's directory."""
    base = Path(path).resolve().parent
    known = {f.name: f for f in fields(RunConfig)}
    out: dict = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip().replace("-", "_"), value.strip()
            if not sep or key not in known:
                raise ValidationError("config", f"{path}:{n}: unknown or malformed setting {line!r}")
            values = [v.strip() for v in value.split(",")] if key in _LIST_KEYS else [value]
            if key in _PATH_KEYS:
                values = [str(base / v) if v and not os.path.isabs(v) else v for v in values]
            if key in _LIST_KEYS:
                out.setdefault(key, []).extend(values)
                continue
            default = known[key].default
            try:
                if isinstance(default, bool):
                    out[key] = value.lower() in ("1", "true", "yes", "on")
                elif isinstance(default, int):
                    out[key] = int(value)
                elif isinstance(default, float):
                    out[key] = float(value)
                else:
                    out[key] = values[0]
            except ValueError as exc:
                raise ValidationError(key, f"{path}:{n}: {exc}") from exc
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value settings file; flags override it")
    common.add_argument("--kb", help="Turtle knowledge base")
    common.add_argument("--lexicon", action="append", help="lexicon TSV (repeatable)")
    common.add_argument("--lexicon-config", action="append",
                        help="sources joined by '+', e.g. DBP+DBLex+Dict (repeatable for eval)")
    common.add_argument("--embeddings", help="word2vec text file")
    common.add_argument("--use-embeddings", action="store_true", default=None)
    common.add_argument("--threshold", type=float)
    common.add_argument("--embedding-k", type=int)
    common.add_argument("--cap", type=int, help="candidates per node and kind")
    common.add_argument("-k", "--beam", type=int)
    common.add_argument("-m", "--steps", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--lang")
    common.add_argument("--jobs", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dudesqa", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="learn template weights")
    t.add_argument("--data", help="QALD-style JSON")
    t.add_argument("--conllu", help="dependency trees keyed by sent_id")
    t.add_argument("--epochs", type=int)
    t.add_argument("--eta", type=float, help="learning rate")
    t.add_argument("--out", help="model file to write")
    t.add_argument("--log", help="training log CSV to write")

    q = sub.add_parser("parse", parents=[common], help="map trees to queries")
    q.add_argument("--model")
    q.add_argument("--conllu")
    q.add_argument("--question-id", help="only the sentence with this sent_id")
    q.add_argument("--explain", action="store_true", default=None)
    q.add_argument("--execute", action="store_true", default=None)

    e = sub.add_parser("eval", parents=[common], help="linking and QA evaluation")
    e.add_argument("--model")
    e.add_argument("--data")
    e.add_argument("--conllu")
    e.add_argument("--out", help="report directory")
    e.add_argument("--oracle", action="store_true", default=None,
                   help="accept by objective score only (upper bound)")

    x = sub.add_parser("lexicon", parents=[common], help="candidate ranking for a mention")
    x.add_argument("mention", nargs="?")
    x.add_argument("--kind", choices=[k.value for k in DudeKind if k is not DudeKind.QueryVar])
    x.add_argument("--recall-eval", help="gold lexicon TSV: mention, kb_id, kind, lang")
    x.add_argument("--max-k", type=int)
    x.add_argument("--out", help="CSV destination for --recall-eval")
    return p


def resolve_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    settings = read_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ("config", "verbose") or value is None:
            continue
        settings[key] = value
    cfg = RunConfig(**{k: v for k, v in settings.items() if k in {f.name for f in fields(RunConfig)}})
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return cfg


# --------------------------------------------------------------------------
# validation and loading

def _need_file(cfg: RunConfig, name: str, required: bool = True):
    value = getattr(cfg, name)
    if value is None:
        if required:
            raise ValidationError(name, f"--{name.replace('_', '-')} is required for {cfg.command}")
        return
    if not Path(value).is_file():
        raise ValidationError(name, f"file not found: {value}")


def needs_embeddings(cfg: RunConfig) -> bool:
    specs = cfg.lexicon_config or ["DBP+DBLex+Dict"]
    try:
        return cfg.use_embeddings or any(parse_lexicon_config(s)[1] for s in specs)
    except ValueError as exc:
        raise ValidationError("lexicon_config", str(exc)) from exc


def validate(cfg: RunConfig):
    if cfg.epochs < 1:
        raise ValidationError("epochs", f"epochs must be >= 1, got {cfg.epochs}")
    if cfg.eta < 0:
        raise ValidationError("eta", "learning rate must be >= 0")
    if cfg.beam < 1:
        raise ValidationError("beam", "beam width k must be >= 1")
    if cfg.steps < 0:
        raise ValidationError("steps", "step count m must be >= 0")
    if cfg.cap < 1 or cfg.embedding_k < 1 or cfg.max_k < 1:
        raise ValidationError("cap", "cap, embedding-k and max-k must be >= 1")
    if not -1.0 <= cfg.threshold <= 1.0:
        raise ValidationError("threshold", "threshold must lie in [-1, 1]")
    if cfg.jobs < 1:
        raise ValidationError("jobs", "jobs must be >= 1")
    _need_file(cfg, "kb")
    for path in cfg.lexicon:
        if not Path(path).is_file():
            raise ValidationError("lexicon", f"file not found: {path}")
    if needs_embeddings(cfg) and not cfg.embeddings:
        raise ValidationError("embeddings", "embeddings requested but no --embeddings PATH given")
    _need_file(cfg, "embeddings", required=needs_embeddings(cfg))
    if cfg.command == "train":
        _need_file(cfg, "data")
        _need_file(cfg, "conllu")
        if not cfg.out:
            raise ValidationError("out", "--out model path is required for train")
    elif cfg.command == "parse":
        _need_file(cfg, "model")
        _need_file(cfg, "conllu")
    elif cfg.command == "eval":
        _need_file(cfg, "model")
        _need_file(cfg, "data")
        _need_file(cfg, "conllu")
        if not cfg.out:
            raise ValidationError("out", "--out report directory is required for eval")
    elif cfg.command == "lexicon":
        _need_file(cfg, "recall_eval", required=False)
        if cfg.mention is None and cfg.recall_eval is None:
            raise ValidationError("mention", "give a mention or --recall-eval")


@dataclass
class Context:
    cfg: RunConfig
    kb: object
    embeddings: object = None
    model: Optional[TemplateModel] = None
    dataset: list = field(default_factory=list)
    trees: list = field(default_factory=list)

    def candidates(self, spec: str, langs):
        sources, embed = parse_lexicon_config(spec)
        use = self.embeddings if (embed or self.cfg.use_embeddings) else None
        return build_candidates(self.kb, self.cfg.lexicon, sources, use, tuple(langs),
                                self.cfg.threshold, self.cfg.embedding_k, self.cfg.cap)

    def chain(self, oracle: bool = False) -> ChainConfig:
        return ChainConfig(self.cfg.steps, self.cfg.beam, seed=self.cfg.seed,
                           schedule=ORACLE_SCHEDULE if oracle else TEST_SCHEDULE)


def load_context(cfg: RunConfig) -> Context:
    """Parse every input up front so that nothing long-running starts on bad data."""
    try:
        kb = load_turtle_file(cfg.kb)
    except TurtleSyntaxError as exc:
        raise ValidationError("kb", f"{cfg.kb}: line {exc.line}: {exc}") from exc
    ctx = Context(cfg, kb)
    for path in cfg.lexicon:
        try:
            read_lexicon_tsv(path)
        except ValueError as exc:
            raise ValidationError("lexicon", f"{path}: {exc}") from exc
    if needs_embeddings(cfg):
        try:
            ctx.embeddings = read_word2vec_text(cfg.embeddings)
        except ValueError as exc:
            raise ValidationError("embeddings", str(exc)) from exc
    if cfg.model and cfg.command in ("parse", "eval"):
        try:
            ctx.model = TemplateModel.load(cfg.model, kb)
        except (ValueError, KeyError) as exc:
            raise ValidationError("model", f"{cfg.model}: {exc}") from exc
    if cfg.command in ("train", "eval"):
        try:
            ctx.dataset = load_dataset(cfg.data, cfg.conllu, cfg.lang)
        except (DatasetError, ConlluError, TurtleSyntaxError) as exc:
            raise ValidationError("data", str(exc)) from exc
    elif cfg.command == "parse":
        try:
            trees = parse_conllu(Path(cfg.conllu).read_text(encoding="utf-8"))
        except ConlluError as exc:
            raise ValidationError("conllu", f"{cfg.conllu}: {exc}") from exc
        if cfg.question_id is not None:
            trees = [t for t in trees if t.sent_id == cfg.question_id]
            if not trees:
                raise ValidationError("question_id", f"no sentence with sent_id {cfg.question_id!r}")
        if cfg.lang:
            trees = [t for t in trees if not t.lang or t.lang == cfg.lang]
        ctx.trees = trees
    return ctx


def write_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _langs(dataset) -> list:
    return sorted({inst.lang or "en" for inst in dataset}) or ["en"]


# --------------------------------------------------------------------------
# subcommands

def cmd_train(ctx: Context) -> int:
    cfg = ctx.cfg
    spec = (cfg.lexicon_config or ["DBP+DBLex+Dict"])[0]
    candidates = ctx.candidates(spec, _langs(ctx.dataset))
    model = TemplateModel(kb=ctx.kb)
    tc = TrainConfig(cfg.epochs, cfg.eta, cfg.beam, cfg.steps, cfg.seed)
    model, train_log = train(ctx.dataset, model, candidates, ctx.kb, tc)
    outputs = {cfg.out: model.dumps()}
    if cfg.log:
        outputs[cfg.log] = train_log.to_csv()
    for path, text in outputs.items():
        write_atomic(path, text)
    last = train_log.rows[-1] if train_log.rows else (0, 0.0, 0.0)
    print(f"trained {len(ctx.dataset) - len(train_log.skipped)} questions, {cfg.epochs} epochs, "
          f"{train_log.updates} updates; final linking F1 {last[1]:.4f}, query similarity {last[2]:.4f}")
    return 0


def cmd_parse(ctx: Context) -> int:
    cfg = ctx.cfg
    langs = sorted({t.lang or cfg.lang or "en" for t in ctx.trees}) or ["en"]
    candidates = ctx.candidates((cfg.lexicon_config or ["DBP+DBLex+Dict"])[0], langs)
    status = 0
    for tree in ctx.trees:
        lang = tree.lang or cfg.lang or "en"
        header = f"# {tree.sent_id or '-'} ({lang}) {tree.text}".rstrip()
        try:
            result = interpret(tree, ctx.model, candidates, ctx.kb, ctx.chain(), lang)
        except Uninterpretable as exc:
            print(header)
            print(f"error kind=runtime field=parse sent_id={tree.sent_id}: {exc}", file=sys.stderr)
            if exc.best is not None:
                print(exc.best.describe(), file=sys.stderr)
            status = 2
            continue
        print(header)
        print(result.query.to_sparql())
        if cfg.explain:
            print(result.state.describe())
            print(result.dude.render())
            print(f"model score {result.state.model_score:.6f}")
        if cfg.execute:
            rs = ctx.kb.execute(result.query)
            if result.query.form is QueryForm.Ask:
                print("answer:", "true" if rs.boolean else "false")
            else:
                for answer in sorted(rs.answers(), key=str):
                    print("answer:", answer)
    return status


_WORKER: dict = {}


def _init_worker(cfg: RunConfig, spec: str, oracle: bool):
    ctx = load_context(cfg)
    _WORKER.update(ctx=ctx, candidates=ctx.candidates(spec, _langs(ctx.dataset)), oracle=oracle)


def _predict_one(index: int):
    return _predict(_WORKER["ctx"], _WORKER["candidates"], _WORKER["ctx"].dataset[index], _WORKER["oracle"])


def _predict(ctx: Context, candidates, inst, oracle: bool):
    lang = inst.lang or "en"
    link_obj = query_obj = None
    if oracle:
        gold_ids = query_ids(inst.gold)

        def link_obj(s):
            return linking_objective(s, gold_ids)

        def query_obj(s):
            return query_similarity(state_query(s), inst.gold)
    try:
        result = interpret(inst.tree, ctx.model, candidates, ctx.kb, ctx.chain(oracle), lang,
                           link_obj, query_obj, name=f"{inst.id}/{lang}")
        return inst.id, result.query, result.state.linked_ids()
    except Uninterpretable as exc:
        linked = exc.best.linked_ids() if exc.best is not None else set()
        return inst.id, None, linked


def cmd_eval(ctx: Context) -> int:
    cfg = ctx.cfg
    specs = cfg.lexicon_config or ["DBP+DBLex+Dict"]
    reports = []
    for spec in specs:
        name = spec + ("+Embed" if cfg.use_embeddings and "Embed" not in spec else "")
        name += " (oracle)" if cfg.oracle else ""
        if cfg.jobs > 1 and len(ctx.dataset) > 1:
            with ProcessPoolExecutor(cfg.jobs, initializer=_init_worker,
                                     initargs=(cfg, spec, cfg.oracle)) as pool:
                results = list(pool.map(_predict_one, range(len(ctx.dataset))))
        else:
            candidates = ctx.candidates(spec, _langs(ctx.dataset))
            results = [_predict(ctx, candidates, inst, cfg.oracle) for inst in ctx.dataset]
        predictions = {}
        for inst, (qid, query, linked) in zip(ctx.dataset, results):
            predictions[(qid, inst.lang)] = (query, linked)
        keyed = [_Keyed(inst) for inst in ctx.dataset]
        report = evaluate({k.id: predictions[k.key] for k in keyed}, keyed, ctx.kb, name)
        reports.append(report)
    out = Path(cfg.out)
    files = {out / "summary.txt": summary_table(reports), out / "summary.csv": summary_csv(reports)}
    for i, report in enumerate(reports):
        files[out / f"records_{i}_{_slug(report.config)}.csv"] = report.records_csv()
    for path, text in files.items():
        write_atomic(path, text)
    sys.stdout.write(files[out / "summary.txt"])
    return 0


class _Keyed:
    """A dataset instance whose id is unique per language."""

    def __init__(self, inst):
        self.inst = inst
        self.key = (inst.id, inst.lang)
        self.id = f"{inst.id}/{inst.lang}" if inst.lang else inst.id
        self.lang = inst.lang
        self.gold = inst.gold


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in text).strip("_")


def _mention_node(mention: str) -> DepNode:
    return DepNode(0, mention, mention, "X", (0,))


def cmd_lexicon(ctx: Context) -> int:
    cfg = ctx.cfg
    lang = cfg.lang or "en"
    spec = (cfg.lexicon_config or ["DBP+DBLex+Dict"])[0]
    kind = DudeKind(cfg.kind)
    if cfg.mention is not None:
        candidates = ctx.candidates(spec, [lang])
        print("rank\tkb_id\tscore\torigin")
        for i, c in enumerate(candidates.candidates(_mention_node(cfg.mention), kind, lang), start=1):
            origin = "+".join(o.name for o in type(c.origin) if o in c.origin)
            print(f"{i}\t{c.kb_id}\t{c.score:.6f}\t{origin}")
    if cfg.recall_eval is not None:
        text = recall_curve_csv(ctx, spec, cfg.recall_eval, cfg.max_k)
        if cfg.out:
            write_atomic(cfg.out, text)
        else:
            sys.stdout.write(text)
    return 0


def read_gold_lexicon(path) -> list:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 4:
                raise ValidationError("recall_eval", f"{path}:{n}: expected 4 columns")
            mention, kb_text, kind, lang = cols
            rows.append((mention, KbId.parse(kb_text), DudeKind(kind), lang))
    return rows


def recall_curve_csv(ctx: Context, spec: str, gold_path, max_k: int) -> str:
    """Recall@k for k = 1..max_k, index alone versus index plus embeddings."""
    rows = read_gold_lexicon(gold_path)
    sources, _ = parse_lexicon_config(spec)
    langs = sorted({r[3] for r in rows})
    index_only = build_candidates(ctx.kb, ctx.cfg.lexicon, sources, None, langs, cap=10**9)
    combined = None
    if ctx.embeddings is not None:
        combined = build_candidates(ctx.kb, ctx.cfg.lexicon, sources, ctx.embeddings, langs,
                                    ctx.cfg.threshold, ctx.cfg.embedding_k, cap=10**9)
    gold = {(m, kind, lang): kb_id for m, kb_id, kind, lang in rows}

    def ranked(source):
        return {key: source.candidates(_mention_node(key[0]), key[1], key[2]) for key in gold}

    base = ranked(index_only)
    both = ranked(combined) if combined is not None else None
    lines = ["k,recall_index" + (",recall_index_embeddings" if both is not None else "")]
    for k in range(1, max_k + 1):
        row = f"{k},{recall_at_k(base, gold, k):.6f}"
        if both is not None:
            row += f",{recall_at_k(both, gold, k):.6f}"
        lines.append(row)
    return "\n".join(lines) + "\n"


COMMANDS = {"train": cmd_train, "parse": cmd_parse, "eval": cmd_eval, "lexicon": cmd_lexicon}


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
        validate(cfg)
        ctx = load_context(cfg)
    except ValidationError as exc:
        print(f"error kind=validation field={exc.field}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error kind=validation field=io: {exc}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[cfg.command](ctx)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"error kind=runtime field={cfg.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
