"""Stage orchestration: runs one mode over a target directory with a worker pool.

Workers handle one file each (decode, segment, tile, optionally score) and
return plain results; every persisted file is written by the parent after
the results are put back into inventory order, so outputs do not depend on
the number of workers.
"""

from __future__ import annotations

import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from . import classify
from .classify import (
    DetectionClass,
    ScoreRow,
    format_score,
    load_backend,
    load_class_list,
    predict_batch,
    read_scores,
    write_scores,
)
from .detect import apply_thresholds, combine_parts, summarize, write_detections, write_summary
from .errors import IoFailure, PipelineError, UsageError
from .inventory import DEFAULT_EXTENSIONS, Inventory, Status, read_inventory, scan, write_inventory
from .media_io import decode
from .review import ReviewItem, build_review_set, extract_clip, write_review_manifest
from .spectro import Clip, SpectroConfig, parse_clip_id, read_tile_png, segment, tiles_for_buffer, write_tile_png

MODES = ("process", "inventory", "spectro", "predict", "combine", "review", "cleanup")
MAX_DEFAULT_WORKERS = 8

INVENTORY_FILE = "inventory.csv"
SCORES_FILE = "scores.csv"
DETECTIONS_FILE = "detections.csv"
SUMMARY_FILE = "summary.csv"
MANIFEST_FILE = "review_manifest.csv"
PART_GLOB = "scores_part*.csv"


def default_workers() -> int:
    env = os.environ.get("PIPELINE_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"PIPELINE_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise UsageError("PIPELINE_WORKERS must be at least 1")
        return n
    return max(1, min(os.cpu_count() or 1, MAX_DEFAULT_WORKERS))


@dataclass
class RunConfig:
    mode: str
    target_dir: Path
    output_dir: Path | None = None
    workers: int = 1
    class_list: Path | None = None
    backend: Path | None = None  # backend manifest; None selects the reference backend
    spectro: SpectroConfig = field(default_factory=SpectroConfig)
    threshold_overrides: dict[str, float] = field(default_factory=dict)
    default_threshold: float | None = None  # bare ``-t V``: applies to every class
    per_class_cap: int | None = None
    keep_spectrograms: bool = False
    quiet: bool = False
    extensions: frozenset[str] = DEFAULT_EXTENSIONS
    part: tuple[int, int] | None = None  # (k, n): score only every n-th file starting at k

    def __post_init__(self):
        self.target_dir = Path(self.target_dir)
        if self.output_dir is None:
            self.output_dir = self.target_dir / "_outputs"
        self.output_dir = Path(self.output_dir)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}; valid modes: {', '.join(MODES)}")
        if self.workers < 1:
            raise UsageError("workers must be at least 1")
        if not self.target_dir.is_dir():
            raise UsageError(f"target directory {self.target_dir} does not exist")
        if self.per_class_cap is not None and self.per_class_cap < 0:
            raise UsageError("cap must be non-negative")


@dataclass
class RunReport:
    mode: str
    files_seen: int = 0
    clips_generated: int = 0
    rows_scored: int = 0
    detections: int = 0
    elapsed: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def done_line(self) -> str:
        return f"DONE files={self.files_seen} clips={self.clips_generated} detections={self.detections} elapsed_s={self.elapsed:.3f}"


@dataclass
class FileTask:
    path: Path  # absolute
    rel: str
    spectro: SpectroConfig
    class_list: Path | None
    backend: Path | None
    score: bool  # score inside the worker
    tiles_in: Path | None  # read tiles from here when complete
    tiles_out: Path | None  # write tiles here


@dataclass
class FileResult:
    rel: str
    n_clips: int = 0
    rows: list[ScoreRow] | None = None
    tiles: list | None = None
    warning: str | None = None


_BACKENDS: dict = {}


def _worker_backend(class_list: Path, manifest: Path | None, cfg: SpectroConfig):
    key = (class_list, manifest, cfg.working_rate, cfg.n_fft)
    if key not in _BACKENDS:
        classes = load_class_list(class_list, cfg.working_rate)
        _BACKENDS[key] = (classes, load_backend(manifest, classes, cfg.working_rate, cfg.n_fft))
    return _BACKENDS[key]


def _tiles_from_disk(task: FileTask, clips: list[Clip]):
    if task.tiles_in is None:
        return None
    paths = [task.tiles_in / f"{c.clip_id}.png" for c in clips]
    if not clips or not all(p.is_file() for p in paths):
        return None
    return [read_tile_png(p, c, task.spectro) for p, c in zip(paths, clips)]


def process_file(task: FileTask) -> FileResult:
    """Decode, tile and (optionally) score one file; failures become a warning."""
    try:
        buf = decode(task.path)
        cfg = task.spectro
        clips = segment(len(buf.samples) / buf.sample_rate, cfg, task.rel)
        tiles = _tiles_from_disk(task, clips) or tiles_for_buffer(buf, task.rel, cfg)
        if task.tiles_out is not None:
            task.tiles_out.mkdir(parents=True, exist_ok=True)
            for t in tiles:
                write_tile_png(t, task.tiles_out / f"{t.clip.clip_id}.png")
        if not task.score:
            return FileResult(task.rel, len(tiles))
        if task.class_list is None:
            return FileResult(task.rel, len(tiles), tiles=tiles)
        classes, backend = _worker_backend(task.class_list, task.backend, cfg)
        return FileResult(task.rel, len(tiles), rows=predict_batch(backend, tiles, classes))
    except PipelineError as exc:
        return FileResult(task.rel, warning=f"{task.rel}: {exc}")
    except (OSError, ValueError) as exc:
        return FileResult(task.rel, warning=f"{task.rel}: {type(exc).__name__}: {exc}")


def _map(tasks: list[FileTask], workers: int) -> Iterator[FileResult]:
    if workers == 1 or len(tasks) <= 1:
        yield from map(process_file, tasks)
        return
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        # map() yields in submission order regardless of completion order
        yield from pool.map(process_file, tasks, chunksize=1)


class Runner:
    def __init__(self, cfg: RunConfig, err=None):
        self.cfg = cfg
        self.err = err if err is not None else sys.stderr
        self.report = RunReport(cfg.mode)
        self._classes: list[DetectionClass] | None = None

    # helpers

    def log(self, msg: str) -> None:
        if not self.cfg.quiet:
            print(msg, file=self.err, flush=True)

    def warn(self, msg: str) -> None:
        self.report.warnings.append(msg)
        print(f"warning: {msg}", file=self.err, flush=True)

    @property
    def out(self) -> Path:
        return self.cfg.output_dir

    def class_list_path(self) -> Path:
        if self.cfg.class_list is not None:
            return Path(self.cfg.class_list).resolve()
        if self.cfg.backend is not None:
            p = classify.manifest_class_list(self.cfg.backend)
            if p is not None:
                return p.resolve()
        fallback = self.cfg.target_dir / "classes.csv"
        if fallback.is_file():
            return fallback.resolve()
        raise UsageError(f"mode {self.cfg.mode!r} needs a class list (-c PATH)")

    def classes(self) -> list[DetectionClass]:
        if self._classes is None:
            self._classes = load_class_list(self.class_list_path(), self.cfg.spectro.working_rate)
        return self._classes

    def overrides(self) -> dict[str, float]:
        out = {}
        if self.cfg.default_threshold is not None:
            out = {c.code: self.cfg.default_threshold for c in self.classes()}
        out.update(self.cfg.threshold_overrides)
        return out

    def ensure_output_dir(self) -> None:
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailure(f"cannot create output directory {self.out}: {exc}") from exc

    def inventory(self, reuse: bool) -> Inventory:
        path = self.out / INVENTORY_FILE
        if reuse and path.is_file():
            inv = read_inventory(path, self.cfg.target_dir)
        else:
            inv = scan(self.cfg.target_dir, self.cfg.extensions, exclude=[self.out])
            write_inventory(inv, path)
        self.report.files_seen = len(inv.records)
        for r in inv.records:
            if r.status is Status.UNREADABLE:
                self.warn(f"{r.path}: unreadable, skipped")
        return inv

    def processable(self, inv: Inventory) -> list[str]:
        """Readable sources with unique stems (clip ids must be unique in a run)."""
        seen: dict[str, str] = {}
        out = []
        for r in inv.ok_records():
            stem = Path(r.path).stem
            if stem in seen:
                self.warn(f"{r.path}: file stem collides with {seen[stem]}, skipped")
                continue
            seen[stem] = r.path
            out.append(r.path)
        if self.cfg.part is not None:
            k, n = self.cfg.part
            out = out[k - 1 :: n]
        return out

    def run_files(self, sources: list[str], score: bool, write_tiles: bool) -> list[FileResult]:
        cfg = self.cfg
        class_list = self.class_list_path() if score else None
        single_stream = False
        if score:
            backend = load_backend(cfg.backend, self.classes(), cfg.spectro.working_rate, cfg.spectro.n_fft)
            single_stream = backend.descriptor.single_stream
        tiles_root = self.out / "tiles"
        tasks = [
            FileTask(
                path=(cfg.target_dir / rel).resolve(),
                rel=rel,
                spectro=cfg.spectro,
                class_list=None if single_stream else class_list,
                backend=cfg.backend,
                score=score,
                tiles_in=(tiles_root / Path(rel).stem) if cfg.mode == "predict" else None,
                tiles_out=(tiles_root / Path(rel).stem) if write_tiles else None,
            )
            for rel in sources
        ]
        results = []
        for i, res in enumerate(_map(tasks, cfg.workers), start=1):
            if res.warning:
                self.warn(res.warning)
            else:
                if single_stream and score:
                    res.rows = predict_batch(backend, res.tiles, self.classes())
                    res.tiles = None
                self.log(f"[{i}/{len(tasks)}] {res.rel}: {res.n_clips} clips")
            results.append(res)
        ok = [r for r in results if r.warning is None]
        if not ok:
            raise PipelineError(f"no processable audio files under {cfg.target_dir}")
        self.report.clips_generated = sum(r.n_clips for r in ok)
        return ok

    # modes

    def run(self) -> RunReport:
        t0 = time.perf_counter()
        self.ensure_output_dir()
        getattr(self, f"mode_{self.cfg.mode}")()
        self.report.elapsed = time.perf_counter() - t0
        return self.report

    def mode_inventory(self) -> None:
        self.inventory(reuse=False)

    def mode_spectro(self) -> None:
        inv = self.inventory(reuse=True)
        self.run_files(self.processable(inv), score=False, write_tiles=True)

    def _score(self, inv: Inventory) -> list[ScoreRow]:
        results = self.run_files(self.processable(inv), score=True, write_tiles=self.cfg.keep_spectrograms)
        rows = [row for r in results for row in r.rows]
        self.report.rows_scored = len(rows)
        return rows

    def scores_path(self) -> Path:
        if self.cfg.part is not None:
            k, n = self.cfg.part
            return self.out / f"scores_part{k}of{n}.csv"
        return self.out / SCORES_FILE

    def mode_predict(self) -> None:
        inv = self.inventory(reuse=True)
        write_scores(self._score(inv), self.classes(), self.scores_path())

    def mode_combine(self) -> None:
        parts = sorted(self.out.glob(PART_GLOB))
        if not parts:
            raise PipelineError(f"no {PART_GLOB} files in {self.out}")
        table = combine_parts(parts)
        write_scores(table.rows, table.codes, self.out / SCORES_FILE)
        self.report.rows_scored = len(table.rows)
        self.log(f"combined {len(parts)} parts, {len(table.rows)} rows")

    def mode_process(self) -> None:
        inv = self.inventory(reuse=False)
        rows = self._score(inv)
        write_scores(rows, self.classes(), self.scores_path())
        # threshold the rendered values so process and review agree exactly
        rendered = [ScoreRow(r.clip_id, tuple(float(format_score(s)) for s in r.scores)) for r in rows]
        self.detect_and_review(inv, rendered, extract=False)

    def mode_review(self) -> None:
        inv = self.inventory(reuse=True)
        path = self.out / SCORES_FILE
        if not path.is_file():
            raise PipelineError(f"{path} not found; run predict or combine first")
        table = read_scores(path)
        codes = tuple(c.code for c in self.classes())
        if table.codes != codes:
            raise PipelineError(f"{path} class columns do not match the class list")
        self.report.rows_scored = len(table.rows)
        self.detect_and_review(inv, list(table.rows), extract=True)

    def detect_and_review(self, inv: Inventory, rows: list[ScoreRow], extract: bool) -> None:
        cfg = self.cfg
        classes = self.classes()
        stems = {Path(r.path).stem: r.path for r in inv.ok_records()}
        known = []
        for r in rows:
            if parse_clip_id(r.clip_id)[0] in stems:
                known.append(r)
            else:
                self.warn(f"{r.clip_id}: no matching file in inventory, skipped")
        L = cfg.spectro.clip_length
        dets = apply_thresholds(known, classes, self.overrides(), L, stems)
        counts: dict[str, int] = {}
        for r in known:
            src = stems[parse_clip_id(r.clip_id)[0]]
            counts[src] = counts.get(src, 0) + 1
        write_detections(dets, self.out / DETECTIONS_FILE)
        write_summary(summarize(dets, inv, classes, counts, L), self.out / SUMMARY_FILE)
        self.report.detections = len(dets)

        items = build_review_set(dets, cfg.per_class_cap)
        if extract:
            items = self.extract(items)
        write_review_manifest(items, self.out / MANIFEST_FILE)

    def extract(self, items: list[ReviewItem]) -> list[ReviewItem]:
        L = self.cfg.spectro.clip_length
        out = []
        for it in items:
            d = it.detection
            rel = Path("review") / d.class_code / f"{d.clip_id}.wav"
            (self.out / rel.parent).mkdir(parents=True, exist_ok=True)
            _, index = parse_clip_id(d.clip_id)
            try:
                extract_clip(self.cfg.target_dir / d.source, Clip(d.source, index, d.start, L), self.out / rel)
            except PipelineError as exc:
                self.warn(f"{d.clip_id}: clip extraction failed: {exc}")
                out.append(it)
                continue
            out.append(ReviewItem(d, rel.as_posix(), it.rank))
        return out

    def mode_cleanup(self) -> None:
        audio = {e.lower() for e in self.cfg.extensions}
        removed = 0
        tiles = self.out / "tiles"
        targets: list[Path] = sorted(self.out.glob(PART_GLOB)) if self.out.is_dir() else []
        if tiles.is_dir():
            targets += sorted(p for p in tiles.rglob("*") if p.is_file())
        for p in targets:
            if p.suffix.lower().lstrip(".") in audio:
                self.warn(f"{p}: audio file left in place")
                continue
            p.unlink()
            removed += 1
        if tiles.is_dir():
            for d in sorted((p for p in tiles.rglob("*") if p.is_dir()), reverse=True):
                _rmdir_if_empty(d)
            _rmdir_if_empty(tiles)
        self.log(f"removed {removed} files")


def _rmdir_if_empty(d: Path) -> None:
    try:
        d.rmdir()
    except OSError:
        pass


def run(cfg: RunConfig, err=None) -> RunReport:
    cfg.validate()
    return Runner(cfg, err).run()
