"""Recall@k of lexicon candidates, index alone vs index plus embeddings.

Writes one CSV per lexicon configuration and, if matplotlib is importable,
a PNG with all curves.

    python scripts/recall_curves.py --out runs/recall --max-k 20
"""
import argparse
import csv
from pathlib import Path

from dudesqa.cli import main
from dudesqa.corpus import fixture


def cli():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/recall")
    ap.add_argument("--max-k", type=int, default=20)
    ap.add_argument("--gold", default=str(fixture("gold_lexicon.tsv")))
    ap.add_argument("--configs", nargs="+", default=["DBP", "DBLex", "DBP+DBLex"])
    args = ap.parse_args()

    out = Path(args.out)
    curves = {}
    for spec in args.configs:
        path = out / f"recall_{spec.replace('+', '_')}.csv"
        code = main(["lexicon", "--kb", str(fixture("toy_kb.ttl")), "--lexicon", str(fixture("lexicon.tsv")),
                     "--embeddings", str(fixture("embeddings.txt")), "--use-embeddings",
                     "--lexicon-config", spec, "--recall-eval", args.gold, "--max-k", str(args.max_k),
                     "--out", str(path)])
        if code != 0:
            raise SystemExit(code)
        with open(path) as fh:
            curves[spec] = list(csv.DictReader(fh))
        last = curves[spec][-1]
        print(f"{spec:<12} R@{args.max_k}: index {float(last['recall_index']):.3f}  "
              f"+embeddings {float(last['recall_index_embeddings']):.3f}  ({path})")

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for spec, rows in curves.items():
        ks = [int(r["k"]) for r in rows]
        ax.plot(ks, [float(r["recall_index"]) for r in rows], label=spec)
        ax.plot(ks, [float(r["recall_index_embeddings"]) for r in rows], "--", label=f"{spec}+Embed")
    ax.set_xlabel("k")
    ax.set_ylabel("Recall@k")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "recall.png", dpi=120)
    print(f"plot: {out / 'recall.png'}")


if __name__ == "__main__":
    cli()
