"""Synthetic ARU corpora with known ground truth, for tests and demos."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .classify import DetectionClass, write_class_list
from .media_io import write_wav
from .spectro import clip_id_for

TONE_CLASSES = (
    DetectionClass("TONEA", "synthetic tone 1 kHz", 0.5, 900.0, 1100.0),
    DetectionClass("TONEB", "synthetic tone 2 kHz", 0.5, 1900.0, 2100.0),
    DetectionClass("TONEC", "synthetic tone 3 kHz", 0.5, 2900.0, 3100.0),
)
STATIONS = ("CLE-01", "CLE-02", "HJA-01", "HJA-02")


@dataclass
class Corpus:
    root: Path
    files: list[str]  # relative paths, sorted
    truth: set[tuple[str, str]]  # (clip_id, class code)
    clips_per_file: int
    class_list: Path


def _tone(n: int, freq: float, amp: float, rate: int, fade: int) -> np.ndarray:
    t = np.arange(n) / rate
    x = amp * np.sin(2 * np.pi * freq * t)
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
    x[:fade] *= ramp
    x[-fade:] *= ramp[::-1]
    return x


def make_corpus(
    root,
    n_files: int = 20,
    duration: float = 60.0,
    rate: int = 16000,
    clip_length: float = 12.0,
    tone_prob: float = 0.4,
    tone_seconds: float = 4.0,
    noise_rms: float = 1e-4,
    classes=TONE_CLASSES,
    seed: int = 0,
) -> Corpus:
    """Write ``n_files`` 16-bit mono WAVs under ``root`` with tones in known clips.

    Each clip receives at most one tone, centred on a frequency bin of the
    default 512-point analysis inside one class band, with low-level
    Gaussian background noise everywhere.  One station starts late in the
    evening so its recordings cross midnight.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n = int(round(duration * rate))
    per_clip = int(round(clip_length * rate))
    clips_per_file = int(duration // clip_length)
    tone_n = int(round(tone_seconds * rate))
    bin_hz = rate / 512
    truth: set[tuple[str, str]] = set()
    files = []
    base = datetime(2023, 5, 15, 21, 0, 0)
    for i in range(n_files):
        station = STATIONS[i % len(STATIONS)]
        start = base + timedelta(hours=i // len(STATIONS) * 0.75, minutes=(i % len(STATIONS)) * 5)
        if station == "HJA-02":
            start = datetime(2023, 5, 15, 23, 59, 30) + timedelta(days=i // len(STATIONS))
        name = f"{station}_{start:%Y%m%d_%H%M%S}.wav"
        rel = f"{station.split('-')[0]}/{station}/{name}"
        x = rng.normal(0.0, noise_rms, n)
        for c in range(clips_per_file):
            if rng.random() >= tone_prob:
                continue
            k = int(rng.integers(len(classes)))
            cls = classes[k]
            centre = round((cls.band_low + cls.band_high) / 2 / bin_hz)
            freq = (centre + int(rng.integers(-1, 2))) * bin_hz
            offset = c * per_clip + int(rng.integers(rate // 2, per_clip - tone_n - rate // 2))
            x[offset : offset + tone_n] += _tone(tone_n, freq, rng.uniform(0.2, 0.6), rate, rate // 50)
            truth.add((clip_id_for(rel, c), cls.code))
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(path, x, rate)
        files.append(rel)
    class_list = root / "classes.csv"
    write_class_list(classes, class_list)
    return Corpus(root, sorted(files), truth, clips_per_file, class_list)
