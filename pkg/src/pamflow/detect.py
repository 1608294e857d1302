"""Thresholding of score tables into apparent detections, part merging and station-day summaries."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Mapping, Sequence

from .classify import DetectionClass, ScoreRow, ScoreTable, format_score, read_scores
from .errors import (
    DuplicateClipId,
    HeaderMismatch,
    IoFailure,
    RowParseFailure,
    SchemaMismatch,
    SourceNotInInventory,
    UnknownClassOverride,
)
from .inventory import Inventory
from .spectro import parse_clip_id

DETECTIONS_HEADER = ["class", "clip_id", "source", "start_s", "score", "threshold"]
SUMMARY_HEADER = ["site", "station", "date", "class", "n_detections", "n_clips"]


@dataclass(frozen=True)
class Detection:
    class_code: str
    clip_id: str
    source: str
    start: float
    score: float
    threshold_used: float


@dataclass(frozen=True)
class SummaryRow:
    site: str
    station: str
    date: date | None
    class_code: str
    n_detections: int
    n_clips: int


def _detection_key(d: Detection):
    return (d.class_code, -d.score, d.clip_id)


def effective_thresholds(classes: Sequence[DetectionClass], overrides: Mapping[str, float] | None = None) -> list[float]:
    overrides = dict(overrides or {})
    codes = {c.code for c in classes}
    unknown = sorted(set(overrides) - codes)
    if unknown:
        raise UnknownClassOverride(f"threshold override for unknown class(es): {', '.join(unknown)}")
    for code, t in overrides.items():
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"threshold for {code} must lie in [0, 1], got {t}")
    return [overrides.get(c.code, c.threshold) for c in classes]


def apply_thresholds(
    rows: Sequence[ScoreRow],
    classes: Sequence[DetectionClass],
    overrides: Mapping[str, float] | None = None,
    clip_length: float = 12.0,
    sources: Mapping[str, str] | None = None,
) -> list[Detection]:
    """Emit one detection per (clip, class) whose score reaches the class threshold.

    ``sources`` maps a clip stem back to its source path; without it the
    stem itself is reported as the source.
    """
    thresholds = effective_thresholds(classes, overrides)
    sources = sources or {}
    dets = []
    for row in rows:
        if len(row.scores) != len(classes):
            raise ValueError(f"{row.clip_id}: {len(row.scores)} scores for {len(classes)} classes")
        stem, index = parse_clip_id(row.clip_id)
        source = sources.get(stem, stem)
        start = index * clip_length
        for cls, t, s in zip(classes, thresholds, row.scores):
            if s >= t:
                dets.append(Detection(cls.code, row.clip_id, source, start, s, t))
    dets.sort(key=_detection_key)
    return dets


def combine_parts(part_paths: Sequence) -> ScoreTable:
    """Merge score tables written by separate runs into one table sorted by clip_id."""
    tables = [read_scores(p) for p in part_paths]
    if not tables:
        return ScoreTable((), ())
    header = ("clip_id", *tables[0].codes)
    for path, t in zip(part_paths[1:], tables[1:]):
        other = ("clip_id", *t.codes)
        if other != header:
            for i in range(max(len(header), len(other))):
                a = header[i] if i < len(header) else ""
                b = other[i] if i < len(other) else ""
                if a != b:
                    raise HeaderMismatch(i, a, b)
    seen: set[str] = set()
    rows = []
    for t in tables:
        for r in t.rows:
            if r.clip_id in seen:
                raise DuplicateClipId(r.clip_id)
            seen.add(r.clip_id)
            rows.append(r)
    rows.sort(key=lambda r: r.clip_id)
    return ScoreTable(tables[0].codes, tuple(rows))


def summarize(
    dets: Sequence[Detection],
    inv: Inventory,
    classes: Sequence[DetectionClass],
    clip_counts: Mapping[str, int],
    clip_length: float = 12.0,
) -> list[SummaryRow]:
    """Count detections per (site, station, calendar day, class).

    The day of a clip is the day of file start time plus clip offset, so a
    recording that spans midnight contributes to two days.  Unknown site,
    station or start time are reported as empty fields.
    """
    records = inv.by_path()

    def station_day(source: str, start: float):
        rec = records.get(source)
        if rec is None:
            raise SourceNotInInventory(source)
        day = (rec.start_time + timedelta(seconds=start)).date() if rec.start_time else None
        return (rec.site or "", rec.station or "", day)

    clips_per_day: Counter = Counter()
    for source, n in clip_counts.items():
        for i in range(n):
            clips_per_day[station_day(source, i * clip_length)] += 1

    hits: Counter = Counter()
    for d in dets:
        hits[(*station_day(d.source, d.start), d.class_code)] += 1

    out = [SummaryRow(site, station, day, code, n, clips_per_day[(site, station, day)]) for (site, station, day, code), n in hits.items()]
    out.sort(key=lambda r: (r.site, r.station, r.date.isoformat() if r.date else "", r.class_code))
    return out


def _write(path, header, rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def _read(path, header) -> list[list[str]]:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    if not rows or rows[0] != header:
        raise SchemaMismatch(f"{path}: expected header {','.join(header)}")
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise RowParseFailure(line, f"expected {len(header)} fields, got {len(row)}")
    return rows[1:]


def write_detections(dets: Sequence[Detection], out_path) -> None:
    _write(
        out_path,
        DETECTIONS_HEADER,
        ([d.class_code, d.clip_id, d.source, f"{d.start:.1f}", format_score(d.score), format_score(d.threshold_used)] for d in dets),
    )


def read_detections(path) -> list[Detection]:
    out = []
    for line, (code, clip_id, source, start, score, threshold) in enumerate(_read(path, DETECTIONS_HEADER), start=2):
        try:
            out.append(Detection(code, clip_id, source, float(start), float(score), float(threshold)))
        except ValueError as exc:
            raise RowParseFailure(line, str(exc)) from exc
    return out


def write_summary(rows: Sequence[SummaryRow], out_path) -> None:
    _write(
        out_path,
        SUMMARY_HEADER,
        ([r.site, r.station, r.date.isoformat() if r.date else "", r.class_code, r.n_detections, r.n_clips] for r in rows),
    )


def read_summary(path) -> list[SummaryRow]:
    out = []
    for line, (site, station, day, code, n_det, n_clips) in enumerate(_read(path, SUMMARY_HEADER), start=2):
        try:
            out.append(SummaryRow(site, station, date.fromisoformat(day) if day else None, code, int(n_det), int(n_clips)))
        except ValueError as exc:
            raise RowParseFailure(line, str(exc)) from exc
    return out
