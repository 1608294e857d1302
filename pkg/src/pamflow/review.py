"""Ranked review sets, audio clip extraction and the review manifest."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import groupby
from typing import Sequence

from .classify import format_score
from .detect import Detection
from .errors import IoFailure, RowParseFailure, SchemaMismatch
from .media_io import decode, write_wav
from .spectro import Clip, clip_samples

MANIFEST_HEADER = ["class", "rank", "clip_id", "source", "start_s", "score", "clip_audio_path", "verdict"]
VERDICTS = ("", "Y", "N", "U")


@dataclass(frozen=True)
class ReviewItem:
    detection: Detection
    clip_audio_path: str
    rank: int
    verdict: str = ""


def build_review_set(dets: Sequence[Detection], per_class_cap: int | None = None) -> list[ReviewItem]:
    """Top ``per_class_cap`` detections per class by score, ties broken by clip_id.

    ``None`` keeps every detection.
    """
    ordered = sorted(dets, key=lambda d: (d.class_code, -d.score, d.clip_id))
    items = []
    for _, group in groupby(ordered, key=lambda d: d.class_code):
        for rank, det in enumerate(group, start=1):
            if per_class_cap is not None and rank > per_class_cap:
                break
            items.append(ReviewItem(det, "", rank))
    return items


def extract_clip(source, clip: Clip, out_path) -> None:
    """Write ``clip`` of ``source`` as 16-bit PCM at the source's native rate.

    Any part of the clip past the end of the recording is digital silence.
    """
    buf = decode(source)
    write_wav(out_path, clip_samples(buf, clip), buf.sample_rate)


def write_review_manifest(items: Sequence[ReviewItem], out_path) -> None:
    try:
        with open(out_path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(MANIFEST_HEADER)
            for it in items:
                d = it.detection
                w.writerow([d.class_code, it.rank, d.clip_id, d.source, f"{d.start:.1f}", format_score(d.score), it.clip_audio_path, it.verdict])
    except OSError as exc:
        raise IoFailure(f"{out_path}: {exc}") from exc


def read_review_manifest(path) -> list[ReviewItem]:
    """Read a manifest, including any verdicts filled in by reviewers.

    A leading ``#schema=1`` comment line is accepted.  The detection
    threshold is not stored in the manifest and reads back as 0.
    """
    try:
        with open(path, newline="", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    offset = 1
    if lines and lines[0].startswith("#"):
        if lines[0].replace(" ", "") not in ("#schema=1",):
            raise SchemaMismatch(f"{path}: unsupported manifest schema {lines[0]!r}")
        lines, offset = lines[1:], 2
    rows = list(csv.reader(lines))
    if not rows or rows[0] != MANIFEST_HEADER:
        raise SchemaMismatch(f"{path}: expected header {','.join(MANIFEST_HEADER)}")
    items = []
    for line, row in enumerate(rows[1:], start=offset + 1):
        if len(row) != len(MANIFEST_HEADER):
            raise RowParseFailure(line, f"expected {len(MANIFEST_HEADER)} fields, got {len(row)}")
        code, rank, clip_id, source, start, score, audio, verdict = row
        if verdict.strip().upper() not in VERDICTS:
            raise RowParseFailure(line, f"verdict must be one of Y/N/U, got {verdict!r}")
        try:
            det = Detection(code, clip_id, source, float(start), float(score), 0.0)
            items.append(ReviewItem(det, audio, int(rank), verdict))
        except ValueError as exc:
            raise RowParseFailure(line, str(exc)) from exc
    return items
