"""Regenerate the bundled 100-d fixture embeddings (word2vec text format).

Label tokens are shared between KB labels, so multi-token labels made of the
same words get identical additive vectors. A few question words are placed
near the property they usually express.
"""
import argparse
from pathlib import Path

import numpy as np

DIM = 100
BASE = [
    "total", "population", "agglomeration", "ranking", "author", "writer", "creator",
    "musical", "artist", "country", "person", "band", "work", "book", "song", "people",
    "inhabitants", "city", "place", "founder",
]
# token -> (anchor, noise scale)
NEAR = {
    "create": ("creator", 0.6), "created": ("creator", 0.6), "wrote": ("writer", 0.5),
    "write": ("writer", 0.5), "founded": ("founder", 0.5), "residents": ("inhabitants", 0.3),
}


def build(seed: int = 7) -> dict:
    rng = np.random.default_rng(seed)
    vecs = {tok: rng.standard_normal(DIM) for tok in BASE}
    for tok, (anchor, scale) in NEAR.items():
        vecs[tok] = vecs[anchor] + scale * rng.standard_normal(DIM)
    return {t: np.round(v, 6) for t, v in vecs.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    default = Path(__file__).resolve().parents[1] / "src/dudesqa/data/fixtures/embeddings.txt"
    ap.add_argument("--out", type=Path, default=default)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    vecs = build(args.seed)
    lines = [f"{len(vecs)} {DIM}"]
    lines += [tok + " " + " ".join(f"{x:.6f}" for x in v) for tok, v in vecs.items()]
    args.out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(vecs)} vectors to {args.out}")


if __name__ == "__main__":
    main()
