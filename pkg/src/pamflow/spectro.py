"""Clip segmentation and fixed-size spectrogram tiles."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import PurePosixPath

import numpy as np
from PIL import Image

from .errors import IoFailure
from .media_io import AudioMetadata, SampleBuffer, resample


@dataclass(frozen=True)
class SpectroConfig:
    working_rate: int = 16000
    clip_length: float = 12.0
    n_fft: int = 512
    target_width: int = 1000
    db_floor: float = -80.0
    db_ceiling: float = 0.0
    min_tail: float = 1.0

    def __post_init__(self):
        if self.working_rate <= 0:
            raise ValueError("working_rate must be positive")
        if self.n_fft < 2 or self.n_fft & (self.n_fft - 1):
            raise ValueError(f"n_fft must be a power of two, got {self.n_fft}")
        if not self.db_floor < self.db_ceiling:
            raise ValueError("db_floor must be below db_ceiling")
        if not 0 < self.min_tail <= self.clip_length:
            raise ValueError("min_tail must lie in (0, clip_length]")
        if self.segment_samples < self.target_width:
            raise ValueError("clip too short for target_width columns")

    @property
    def segment_samples(self) -> int:
        return round(self.clip_length * self.working_rate)

    @property
    def hop(self) -> int:
        return self.segment_samples // self.target_width

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.working_rate / self.n_fft


@dataclass(frozen=True)
class Clip:
    source: str
    index: int
    start: float
    length: float
    pad: float = 0.0

    @property
    def clip_id(self) -> str:
        return clip_id_for(self.source, self.index)


def clip_id_for(source: str, index: int) -> str:
    return f"{PurePosixPath(source).stem}_part{index + 1:03d}"


def parse_clip_id(clip_id: str) -> tuple[str, int]:
    """Split ``<stem>_partNNN`` into ``(stem, 0-based index)``."""
    stem, sep, num = clip_id.rpartition("_part")
    if not sep or not num.isdigit() or int(num) < 1:
        raise ValueError(f"malformed clip_id {clip_id!r}")
    return stem, int(num) - 1


def _exact(x: float) -> Fraction:
    # the shortest decimal that round-trips, so 1.001 means 1001/1000
    return Fraction(repr(float(x)))


def clip_count(duration: float, clip_length: float, min_tail: float) -> int:
    d, L = _exact(duration), _exact(clip_length)
    full = d // L
    return int(full) + (1 if d - full * L >= _exact(min_tail) else 0)


def segment(meta, cfg: SpectroConfig, source: str | None = None) -> list[Clip]:
    """Cut a recording into clips of ``cfg.clip_length`` seconds.

    ``meta`` is an :class:`AudioMetadata` or a bare duration in seconds.
    A trailing partial clip is kept only when it holds at least
    ``cfg.min_tail`` seconds of real audio; it is zero-padded to full length.
    Arithmetic is exact on the decimal values of the inputs, so boundary
    tails are not lost to binary rounding.
    """
    if isinstance(meta, AudioMetadata):
        duration, source = meta.duration, source or meta.path.as_posix()
    else:
        duration = float(meta)
    if duration < 0:
        raise ValueError("negative duration")
    d, L = _exact(duration), _exact(cfg.clip_length)
    n = clip_count(duration, cfg.clip_length, cfg.min_tail)
    clips = []
    for i in range(n):
        remaining = d - i * L
        pad = float(L - remaining) if remaining < L else 0.0
        clips.append(Clip(source or "", i, float(i * L), cfg.clip_length, pad))
    return clips


def clip_samples(buf: SampleBuffer, clip: Clip, rate: int | None = None) -> np.ndarray:
    """Samples of ``clip`` from ``buf``, zero-padded to exactly ``clip.length``."""
    rate = rate or buf.sample_rate
    n = round(clip.length * rate)
    lo = round(clip.start * rate)
    out = np.zeros(n)
    chunk = buf.samples[lo : lo + n]
    out[: len(chunk)] = chunk
    return out


def hann(n: int) -> np.ndarray:
    # periodic Hann, the usual choice for spectral analysis
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft_power(segment_samples: np.ndarray, cfg: SpectroConfig) -> np.ndarray:
    """Power spectrogram of one clip, shaped ``(target_width, n_fft // 2 + 1)``.

    Frame ``i`` covers samples ``[i * hop, i * hop + n_fft)``; samples past the
    end of the segment read as zero.
    """
    x = np.asarray(segment_samples, dtype=np.float64)
    hop, n_fft = cfg.hop, cfg.n_fft
    need = (cfg.target_width - 1) * hop + n_fft
    if len(x) < need:
        x = np.concatenate([x, np.zeros(need - len(x))])
    frames = np.lib.stride_tricks.sliding_window_view(x[:need], n_fft)[::hop][: cfg.target_width]
    spec = np.fft.rfft(frames * hann(n_fft), axis=1)
    return spec.real**2 + spec.imag**2


@dataclass(eq=False)
class Tile:
    """Spectrogram image of one clip; row 0 is the lowest frequency bin."""

    clip: Clip
    intensities: np.ndarray
    sample_rate: int
    n_fft: int

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensities.shape

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.height) * self.sample_rate / self.n_fft


def to_tile(power: np.ndarray, cfg: SpectroConfig, clip: Clip | None = None) -> Tile:
    """Normalize a power grid to the tile's own maximum and map dB to [0, 1]."""
    power = np.asarray(power, dtype=np.float64)
    if power.shape != (cfg.target_width, cfg.n_bins):
        raise ValueError(f"power grid shape {power.shape}, expected {(cfg.target_width, cfg.n_bins)}")
    peak = power.max(initial=0.0)
    if peak <= 0:
        intens = np.zeros((cfg.n_bins, cfg.target_width))
    else:
        with np.errstate(divide="ignore"):
            db = 10.0 * np.log10(power / peak)
        db = np.clip(db, cfg.db_floor, cfg.db_ceiling)
        intens = ((db - cfg.db_floor) / (cfg.db_ceiling - cfg.db_floor)).T
    return Tile(clip or Clip("", 0, 0.0, cfg.clip_length), np.ascontiguousarray(intens), cfg.working_rate, cfg.n_fft)


def tiles_for_buffer(buf: SampleBuffer, source: str, cfg: SpectroConfig) -> list[Tile]:
    """Segment a decoded recording at its native duration and render every clip."""
    clips = segment(len(buf.samples) / buf.sample_rate, cfg, source)
    work = resample(buf, cfg.working_rate)
    return [to_tile(stft_power(clip_samples(work, c, cfg.working_rate), cfg), cfg, c) for c in clips]


def write_tile_png(tile: Tile, out_path) -> None:
    pixels = np.round(np.flipud(tile.intensities) * 255.0).astype(np.uint8)
    try:
        Image.fromarray(pixels).save(out_path, format="PNG")
    except OSError as exc:
        raise IoFailure(f"{out_path}: {exc}") from exc


def read_tile_png(path, clip: Clip, cfg: SpectroConfig) -> Tile:
    """Load a tile written by :func:`write_tile_png` (8-bit quantized)."""
    try:
        with Image.open(path) as im:
            pixels = np.asarray(im.convert("L"), dtype=np.float64)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    return Tile(clip, np.ascontiguousarray(np.flipud(pixels) / 255.0), cfg.working_rate, cfg.n_fft)
