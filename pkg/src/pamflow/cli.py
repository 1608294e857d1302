"""Command-line front end: ``pamflow <mode> <target_dir> [options]``."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import PipelineError, UsageError
from .pipeline import MODES, RunConfig, default_workers, run
from .spectro import SpectroConfig

CLI_SCHEMA = 1

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().strip()}")


def _threshold(text: str) -> tuple[str | None, float]:
    code, sep, value = text.rpartition("=")
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad threshold {text!r}; use CODE=V or V") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold {v} outside [0, 1]")
    if sep and not code:
        raise argparse.ArgumentTypeError(f"bad threshold {text!r}; use CODE=V or V")
    return (code or None), v


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a value >= 1, got {n}")
    return n


def _cap(text: str) -> int | None:
    if text.lower() in ("all", "unlimited", "none"):
        return None
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cap must be a count or 'unlimited', got {text!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError("cap must be non-negative")
    return n


def _seconds(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected seconds, got {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError("clip length must be positive")
    return v


def _part(text: str) -> tuple[int, int]:
    k, sep, n = text.partition("/")
    try:
        k, n = int(k), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"part must look like K/N, got {text!r}") from None
    if not (sep and 1 <= k <= n):
        raise argparse.ArgumentTypeError(f"part must satisfy 1 <= K <= N, got {text!r}")
    return k, n


def build_parser() -> _Parser:
    p = _Parser(
        prog="pamflow",
        description=f"Batch passive acoustic monitoring pipeline (pamflow {__version__}, CLI schema {CLI_SCHEMA}).",
        epilog="modes: " + ", ".join(MODES),
    )
    p.add_argument("mode", help="processing task: " + " | ".join(MODES))
    p.add_argument("target_dir", type=Path, help="directory of audio recordings")
    p.add_argument("-w", "--workers", type=_positive_int, default=None, help="worker processes (default: $PIPELINE_WORKERS or CPUs, max 8)")
    p.add_argument("-c", "--class-list", type=Path, help="class list CSV")
    p.add_argument("-m", "--backend", type=Path, help="backend manifest (default: reference backend)")
    p.add_argument("-o", "--output-dir", type=Path, help="output directory (default: <target_dir>/_outputs)")
    p.add_argument("-t", "--threshold", type=_threshold, action="append", default=[], metavar="CODE=V", help="threshold override, repeatable; bare V applies to all classes")
    p.add_argument("--clip-length", type=_seconds, default=SpectroConfig.clip_length, metavar="SECONDS")
    p.add_argument("--cap", type=_cap, default=None, metavar="N", help="review items per class (default unlimited)")
    p.add_argument("--extensions", default="wav", help="comma-separated audio extensions (default: wav)")
    p.add_argument("--part", type=_part, default=None, metavar="K/N", help="score only the K-th of N interleaved file shares")
    p.add_argument("-k", "--keep-spectrograms", action="store_true", help="write spectrogram PNGs during process/predict")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress per-file progress lines")
    p.add_argument("--version", action="version", version=f"pamflow {__version__} (CLI schema {CLI_SCHEMA})")
    return p


def parse_args(argv: Sequence[str]) -> RunConfig:
    """Parse ``argv`` into a validated :class:`RunConfig`; raises :class:`UsageError`."""
    ns = build_parser().parse_args(list(argv))
    if ns.mode not in MODES:
        raise UsageError(f"unknown mode {ns.mode!r}; valid modes: {', '.join(MODES)}\n{build_parser().format_usage().strip()}")
    overrides, default = {}, None
    for code, v in ns.threshold:
        if code is None:
            default = v
        else:
            overrides[code] = v
    min_tail = min(SpectroConfig.min_tail, ns.clip_length)
    try:
        spectro = SpectroConfig(clip_length=ns.clip_length, min_tail=min_tail)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return RunConfig(
        mode=ns.mode,
        target_dir=ns.target_dir,
        output_dir=ns.output_dir,
        workers=ns.workers if ns.workers is not None else default_workers(),
        class_list=ns.class_list,
        backend=ns.backend,
        spectro=spectro,
        threshold_overrides=overrides,
        default_threshold=default,
        per_class_cap=ns.cap,
        keep_spectrograms=ns.keep_spectrograms,
        quiet=ns.quiet,
        extensions=frozenset(e.strip().lower().lstrip(".") for e in ns.extensions.split(",") if e.strip()),
        part=ns.part,
    )


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
        cfg.validate()
    except UsageError as exc:
        print(f"pamflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run(cfg)
    except UsageError as exc:
        print(f"pamflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"pamflow: failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(report.done_line(), flush=True)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
