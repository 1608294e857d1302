#!/usr/bin/env python3
"""Time `process` at several worker counts and check the outputs are byte-identical.

    python scripts/worker_scaling.py --files 40 --workers 1 2 4
"""

import argparse
import filecmp
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

from pamflow.synth import make_corpus

ARTIFACTS = ("inventory.csv", "scores.csv", "detections.csv", "summary.csv", "review_manifest.csv")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--files", type=int, default=20)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--corpus", help="existing corpus directory (default: generate one)")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(args.corpus) if args.corpus else make_corpus(Path(tmp) / "corpus", n_files=args.files).root
        print(f"corpus: {root}  cpus: {os.cpu_count()}")
        timings = {}
        for w in args.workers:
            out = Path(tmp) / f"out_w{w}"
            t0 = time.perf_counter()
            subprocess.run(
                [sys.executable, "-m", "pamflow", "process", str(root), "-w", str(w), "-q", "-o", str(out)],
                check=True,
                stdout=subprocess.DEVNULL,
            )
            timings[w] = time.perf_counter() - t0
        ref = Path(tmp) / f"out_w{args.workers[0]}"
        for w, t in timings.items():
            out = Path(tmp) / f"out_w{w}"
            same = all(filecmp.cmp(ref / a, out / a, shallow=False) for a in ARTIFACTS)
            print(f"workers={w:<3d} wall={t:7.2f}s  speedup={timings[args.workers[0]] / t:5.2f}  identical={same}")


if __name__ == "__main__":
    main()
