"""Detection classes, classifier backends and score tables.

A backend is any object with a ``descriptor`` attribute and a
``predict(batch)`` method mapping an ``(n, height, width)`` array of tile
intensities to an ``(n, n_classes)`` array of independent scores in [0, 1].
"""

from __future__ import annotations

import csv
import importlib
import importlib.util
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import (
    BackendFailure,
    DuplicateCode,
    IoFailure,
    RowParseFailure,
    SchemaMismatch,
    ShapeMismatch,
    ValueOutOfRange,
)
from .spectro import Tile

CLASS_LIST_HEADER = ["code", "label", "threshold", "band_low_hz", "band_high_hz"]
EPS = 1e-12
_CODE_RE = re.compile(r"^[A-Z0-9]+$")
_QUANTUM = Decimal("0.0001")


@dataclass(frozen=True)
class DetectionClass:
    code: str
    label: str
    threshold: float
    band_low: float
    band_high: float


@dataclass(frozen=True)
class ScoreRow:
    clip_id: str
    scores: tuple[float, ...]


@dataclass(frozen=True)
class ScoreTable:
    codes: tuple[str, ...]
    rows: tuple[ScoreRow, ...]


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str  # "reference" or "external"
    source: str
    class_count: int
    single_stream: bool = False


def format_score(x: float) -> str:
    """Render with 4 decimals, rounding half to even on the shortest decimal repr."""
    return str(Decimal(repr(float(x))).quantize(_QUANTUM, rounding=ROUND_HALF_EVEN))


def load_class_list(path, working_rate: int | None = None) -> list[DetectionClass]:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    if not rows or [h.strip() for h in rows[0]] != CLASS_LIST_HEADER:
        raise SchemaMismatch(f"{path}: expected header {','.join(CLASS_LIST_HEADER)}")
    classes: list[DetectionClass] = []
    seen: set[str] = set()
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CLASS_LIST_HEADER):
            raise SchemaMismatch(f"{path}: line {line} has {len(row)} fields")
        code, label, *nums = (v.strip() for v in row)
        if not _CODE_RE.match(code):
            raise ValueOutOfRange("code", line, f"{code!r} is not uppercase alphanumeric")
        if code in seen:
            raise DuplicateCode(code)
        seen.add(code)
        values = []
        for name, raw in zip(CLASS_LIST_HEADER[2:], nums):
            try:
                values.append(float(raw))
            except ValueError:
                raise ValueOutOfRange(name, line, f"{raw!r} is not a number") from None
        threshold, low, high = values
        if not 0.0 <= threshold <= 1.0:
            raise ValueOutOfRange("threshold", line, str(threshold))
        if not 0.0 <= low:
            raise ValueOutOfRange("band_low_hz", line, str(low))
        if not low < high or (working_rate and high > working_rate / 2):
            raise ValueOutOfRange("band_high_hz", line, str(high))
        classes.append(DetectionClass(code, label, threshold, low, high))
    return classes


def write_class_list(classes: Sequence[DetectionClass], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CLASS_LIST_HEADER)
        for c in classes:
            w.writerow([c.code, c.label, repr(c.threshold), repr(c.band_low), repr(c.band_high)])


def _band_mask(freqs: np.ndarray, cls: DetectionClass) -> np.ndarray:
    return (freqs >= cls.band_low) & (freqs <= cls.band_high)


def reference_score(tile: Tile, cls: DetectionClass) -> float:
    """Share of the tile's squared intensity that lies inside the class band."""
    row_energy = np.square(tile.intensities).sum(axis=1)
    total = row_energy.sum()
    if total == 0:
        return 0.0
    inband = row_energy[_band_mask(tile.bin_frequencies(), cls)].sum()
    return float(min(1.0, inband / (total + EPS)))


class Backend(Protocol):
    descriptor: BackendDescriptor

    def predict(self, batch: np.ndarray) -> np.ndarray: ...


class ReferenceBackend:
    """Band-energy scorer; deterministic and safe to call from any worker."""

    def __init__(self, classes: Sequence[DetectionClass], working_rate: int = 16000, n_fft: int = 512):
        self.classes = list(classes)
        self.working_rate = working_rate
        self.n_fft = n_fft
        self.descriptor = BackendDescriptor("reference", "", len(self.classes))

    def predict(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        freqs = np.arange(batch.shape[1]) * self.working_rate / self.n_fft
        masks = [_band_mask(freqs, c) for c in self.classes]
        out = np.zeros((batch.shape[0], len(self.classes)))
        # tile by tile so a score never depends on batch composition
        for i, tile in enumerate(batch):
            row_energy = np.square(tile).sum(axis=1)
            total = row_energy.sum()
            if total == 0:
                continue
            for k, mask in enumerate(masks):
                out[i, k] = min(1.0, row_energy[mask].sum() / (total + EPS))
        return out


class ExternalBackend:
    """Wraps a user-supplied ``predict(batch) -> scores`` callable."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], descriptor: BackendDescriptor):
        self.fn = fn
        self.descriptor = descriptor

    def predict(self, batch: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(batch), dtype=np.float64)


def read_manifest(path) -> dict[str, str]:
    """Parse a ``key=value`` backend manifest; ``#`` starts a comment line."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise RowParseFailure(n, f"{path}: expected key=value, got {line!r}")
        out[key.strip()] = value.strip()
    if out.get("kind") not in ("reference", "external"):
        raise SchemaMismatch(f"{path}: kind must be 'reference' or 'external'")
    return out


def manifest_class_list(path) -> Path | None:
    classes = read_manifest(path).get("classes")
    return (Path(path).parent / classes) if classes else None


def _load_callable(source: str, base: Path) -> Callable:
    # "<file.py>[:name]" or "<dotted.module>[:name]"; name defaults to "predict"
    target, _, name = source.partition(":")
    name = name or "predict"
    if target.endswith(".py"):
        file = (base / target).resolve()
        spec = importlib.util.spec_from_file_location(f"pamflow_backend_{file.stem}", file)
        if spec is None or spec.loader is None:
            raise BackendFailure(f"cannot load backend module {file}")
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
    else:
        module = importlib.import_module(target)
    try:
        return getattr(module, name)
    except AttributeError:
        raise BackendFailure(f"backend module {target!r} has no attribute {name!r}") from None


def load_backend(manifest, classes: Sequence[DetectionClass], working_rate: int = 16000, n_fft: int = 512):
    """Build the backend named by ``manifest`` (``None`` selects the reference backend)."""
    if manifest is None:
        return ReferenceBackend(classes, working_rate, n_fft)
    fields = read_manifest(manifest)
    if fields["kind"] == "reference":
        return ReferenceBackend(classes, working_rate, n_fft)
    source = fields.get("source", "")
    if not source:
        raise SchemaMismatch(f"{manifest}: external backend needs source=")
    try:
        fn = _load_callable(source, Path(manifest).parent)
    except (ImportError, OSError, SyntaxError) as exc:
        raise BackendFailure(f"loading {source!r}: {exc}") from exc
    single = fields.get("single_stream", "false").lower() in ("1", "true", "yes")
    return ExternalBackend(fn, BackendDescriptor("external", source, len(classes), single))


def predict_batch(backend, tiles: Sequence[Tile], classes: Sequence[DetectionClass]) -> list[ScoreRow]:
    if backend.descriptor.class_count != len(classes):
        raise ShapeMismatch(f"backend expects {backend.descriptor.class_count} classes, got {len(classes)}")
    if not tiles:
        return []
    shape = tiles[0].shape
    for t in tiles:
        if t.shape != shape:
            raise ShapeMismatch(f"tile {t.clip.clip_id} has shape {t.shape}, expected {shape}")
    batch = np.stack([t.intensities for t in tiles])
    try:
        scores = backend.predict(batch)
    except Exception as exc:
        raise BackendFailure(f"{backend.descriptor.kind} backend: {exc}") from exc
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(tiles), len(classes)):
        raise BackendFailure(f"backend returned shape {scores.shape}, expected {(len(tiles), len(classes))}")
    if not np.all((scores >= 0) & (scores <= 1)):
        raise BackendFailure("backend returned scores outside [0, 1]")
    return [ScoreRow(t.clip.clip_id, tuple(float(v) for v in s)) for t, s in zip(tiles, scores)]


def write_scores(rows: Sequence[ScoreRow], classes, out_path) -> None:
    codes = [c if isinstance(c, str) else c.code for c in classes]
    try:
        with open(out_path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["clip_id", *codes])
            for r in sorted(rows, key=lambda r: r.clip_id):
                if len(r.scores) != len(codes):
                    raise ShapeMismatch(f"{r.clip_id}: {len(r.scores)} scores for {len(codes)} classes")
                w.writerow([r.clip_id, *(format_score(s) for s in r.scores)])
    except OSError as exc:
        raise IoFailure(f"{out_path}: {exc}") from exc


def read_scores(path) -> ScoreTable:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    if not rows or not rows[0] or rows[0][0] != "clip_id":
        raise SchemaMismatch(f"{path}: first column must be clip_id")
    codes = tuple(rows[0][1:])
    out = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(codes) + 1:
            raise RowParseFailure(line, f"expected {len(codes) + 1} fields, got {len(row)}")
        try:
            scores = tuple(float(v) for v in row[1:])
        except ValueError as exc:
            raise RowParseFailure(line, str(exc)) from exc
        if not all(0.0 <= s <= 1.0 for s in scores):
            raise RowParseFailure(line, "score outside [0, 1]")
        out.append(ScoreRow(row[0], scores))
    return ScoreTable(codes, tuple(out))
