"""Discover audio files, parse ARU filenames and persist the inventory table."""

from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import IoFailure, PipelineError, RowParseFailure, SchemaMismatch, TargetMissing
from .media_io import read_metadata

INVENTORY_HEADER = ["path", "size_bytes", "site", "station", "start_time", "duration_s", "status"]
DEFAULT_EXTENSIONS = frozenset({"wav"})

# <prefix>_<YYYYMMDD>_<HHMMSS>.<ext>; the prefix may itself contain underscores
_NAME_RE = re.compile(r"^(?P<prefix>.+)_(?P<date>\d{8})_(?P<time>\d{6})\.(?P<ext>[^.]+)$")


class Status(str, Enum):
    OK = "OK"
    UNREADABLE = "UNREADABLE"
    UNPARSEABLE_NAME = "UNPARSEABLE_NAME"


@dataclass(frozen=True)
class FileRecord:
    """One discovered audio file.

    ``site``, ``station`` and ``start_time`` are ``None`` when unknown.
    ``duration`` is kept at millisecond resolution so the CSV round-trip
    is exact.
    """

    path: str
    size_bytes: int
    site: str | None
    station: str | None
    start_time: datetime | None
    duration: float
    status: Status


@dataclass
class Inventory:
    records: list[FileRecord]
    target_dir: Path
    created_at: datetime = field(default_factory=datetime.now, compare=False)

    @property
    def total_duration(self) -> float:
        return sum(r.duration for r in self.records)

    def by_path(self) -> dict[str, FileRecord]:
        return {r.path: r for r in self.records}

    def ok_records(self) -> list[FileRecord]:
        return [r for r in self.records if r.status is not Status.UNREADABLE]


def parse_filename(name: str):
    """Return ``(site, station, start_time)`` or ``None`` if ``name`` does not match.

    >>> parse_filename("CLE-01_20230515_021500.wav")
    ('CLE', '01', datetime.datetime(2023, 5, 15, 2, 15))
    """
    m = _NAME_RE.match(name)
    if m is None:
        return None
    try:
        start = datetime.strptime(m["date"] + m["time"], "%Y%m%d%H%M%S")
    except ValueError:
        return None
    prefix = m["prefix"]
    if "-" in prefix:
        site, station = prefix.split("-", 1)
        if not site or not station:
            return None
    else:
        site, station = prefix, None
    return site, station, start


def _sort_key(rel: str) -> bytes:
    return rel.encode("utf-8", "surrogateescape")


def _walk(target: Path, extensions: frozenset[str], exclude: frozenset[Path] = frozenset()) -> list[str]:
    found = []
    for root, dirs, files in os.walk(target):
        if exclude:
            dirs[:] = [d for d in dirs if Path(root, d).resolve() not in exclude]
        for name in files:
            ext = name.rsplit(".", 1)[-1].lower() if "." in name else ""
            if ext in extensions:
                found.append(Path(root, name).relative_to(target).as_posix())
    return sorted(found, key=_sort_key)


def _make_record(target: Path, rel: str) -> FileRecord:
    full = target / rel
    parsed = parse_filename(Path(rel).name)
    site, station, start = parsed if parsed else (None, None, None)
    try:
        size = full.stat().st_size
    except OSError:
        size = 0
    try:
        meta = read_metadata(full)
        duration = round(meta.duration, 3)
        if meta.n_frames == 0:
            raise PipelineError("empty payload")
    except PipelineError:
        return FileRecord(rel, size, site, station, start, 0.0, Status.UNREADABLE)
    status = Status.OK if parsed else Status.UNPARSEABLE_NAME
    return FileRecord(rel, size, site, station, start, duration, status)


def scan(target_dir, extensions: Iterable[str] = DEFAULT_EXTENSIONS, exclude: Iterable = ()) -> Inventory:
    """Recursively inventory every file under ``target_dir`` with a matching extension.

    Directories listed in ``exclude`` (typically the run's output directory)
    are not descended into.
    """
    target = Path(target_dir)
    if not target.is_dir():
        raise TargetMissing(f"{target} is not a directory")
    exts = frozenset(e.lower().lstrip(".") for e in extensions)
    skip = frozenset(Path(p).resolve() for p in exclude)
    records = [_make_record(target, rel) for rel in _walk(target, exts, skip)]
    return Inventory(records, target)


def _row(r: FileRecord) -> list[str]:
    return [
        r.path,
        str(r.size_bytes),
        r.site or "",
        r.station or "",
        r.start_time.isoformat() if r.start_time else "",
        f"{r.duration:.3f}",
        r.status.value,
    ]


def write_inventory(inv: Inventory, out_path) -> None:
    try:
        with open(out_path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(INVENTORY_HEADER)
            w.writerows(_row(r) for r in inv.records)
    except OSError as exc:
        raise IoFailure(f"{out_path}: {exc}") from exc


def read_inventory(path, target_dir=None) -> Inventory:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    if not rows or rows[0] != INVENTORY_HEADER:
        raise SchemaMismatch(f"{path}: expected header {','.join(INVENTORY_HEADER)}")
    records = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(INVENTORY_HEADER):
            raise RowParseFailure(line, f"expected {len(INVENTORY_HEADER)} fields, got {len(row)}")
        rel, size, site, station, start, duration, status = row
        if "," in rel:
            raise RowParseFailure(line, "path contains a comma")
        try:
            records.append(
                FileRecord(
                    rel,
                    int(size),
                    site or None,
                    station or None,
                    datetime.fromisoformat(start) if start else None,
                    float(duration),
                    Status(status),
                )
            )
        except ValueError as exc:
            raise RowParseFailure(line, str(exc)) from exc
        if not (math.isfinite(records[-1].duration) and records[-1].duration >= 0):
            raise RowParseFailure(line, f"negative or non-finite duration {duration!r}")
        if len(records) > 1 and _sort_key(records[-2].path) >= _sort_key(rel):
            raise RowParseFailure(line, f"path {rel!r} out of order or duplicated")
    if target_dir is None:
        target_dir = Path(path).resolve().parent
    return Inventory(records, Path(target_dir))
