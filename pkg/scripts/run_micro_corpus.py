"""Train on the bundled micro-corpus, parse the multilingual running example,
and evaluate learned vs oracle inference over several lexicon configurations.

    python scripts/run_micro_corpus.py --out runs/micro
"""
import argparse
from pathlib import Path

from dudesqa.cli import main
from dudesqa.corpus import fixture

CONFIGS = ["DBP", "DBP+DBLex", "DBP+DBLex+Dict", "DBP+DBLex+Dict+Embed"]


def run(argv):
    print("$ dudesqa " + " ".join(argv))
    code = main(argv)
    if code != 0:
        raise SystemExit(code)


def cli():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/micro")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    out = Path(args.out)
    base = ["--kb", str(fixture("toy_kb.ttl")), "--lexicon", str(fixture("lexicon.tsv")),
            "--embeddings", str(fixture("embeddings.txt")), "--seed", str(args.seed)]
    data = ["--data", str(fixture("micro_corpus.json")), "--conllu", str(fixture("micro_corpus.conllu"))]
    model = out / "model.tsv"
    configs = [a for c in CONFIGS for a in ("--lexicon-config", c)]

    run(["train", *base, *data, "--out", str(model), "--log", str(out / "train_log.csv")])
    run(["parse", *base, "--model", str(model), "--conllu", str(fixture("questions.conllu")), "--execute"])
    run(["eval", *base, *data, "--model", str(model), *configs, "--jobs", str(args.jobs),
         "--out", str(out / "learned")])
    run(["eval", *base, *data, "--model", str(model), *configs, "--jobs", str(args.jobs), "--oracle",
         "--out", str(out / "oracle")])
    print(f"reports written under {out}")


if __name__ == "__main__":
    cli()
