#!/usr/bin/env python3
"""Write a synthetic ARU corpus with tones injected into known clips.

    python scripts/make_synthetic_corpus.py /tmp/corpus --files 20 --seed 0

The ground-truth (clip_id, class) pairs go to <out>/truth.csv; the class
list the tones were drawn from goes to <out>/classes.csv.
"""

import argparse
import csv

from pamflow.synth import make_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--files", type=int, default=20)
    ap.add_argument("--duration", type=float, default=60.0, help="seconds per file")
    ap.add_argument("--rate", type=int, default=16000)
    ap.add_argument("--tone-prob", type=float, default=0.4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    corpus = make_corpus(args.out, args.files, args.duration, args.rate, tone_prob=args.tone_prob, seed=args.seed)
    with open(corpus.root / "truth.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["clip_id", "class"])
        w.writerows(sorted(corpus.truth))
    print(f"{len(corpus.files)} files, {len(corpus.truth)} injected tones -> {corpus.root}")


if __name__ == "__main__":
    main()
