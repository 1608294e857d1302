"""RIFF/WAVE decoding, mono mixdown and band-limited resampling.

Only uncompressed WAV is supported: integer PCM at 8/16/24/32 bits and
32-bit IEEE float, including WAVE_FORMAT_EXTENSIBLE wrappers of those.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IoFailure, MalformedHeader, PayloadTruncated, UnsupportedEncoding

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

RESAMPLE_HALF_WIDTH = 32  # zero crossings of the low-pass kernel on each side
KAISER_BETA = 8.6
_RESAMPLE_CHUNK = 16384


@dataclass(frozen=True)
class AudioMetadata:
    path: Path
    sample_rate: int
    channels: int
    bits_per_sample: int
    n_frames: int
    encoding: str = "pcm"  # "pcm" or "float"
    data_offset: int = 0

    @property
    def duration(self) -> float:
        return self.n_frames / self.sample_rate

    @property
    def block_align(self) -> int:
        return self.channels * self.bits_per_sample // 8


@dataclass(eq=False)
class SampleBuffer:
    samples: np.ndarray
    sample_rate: int

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def _parse_fmt(body: bytes, path) -> tuple[int, int, int, str]:
    if len(body) < 16:
        raise MalformedHeader(f"{path}: fmt chunk is {len(body)} bytes, expected at least 16")
    fmt_tag, channels, rate, _byte_rate, block_align, bits = struct.unpack("<HHIIHH", body[:16])
    if fmt_tag == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 26:
            raise MalformedHeader(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE block")
        # first two bytes of the SubFormat GUID carry the real format tag
        (fmt_tag,) = struct.unpack("<H", body[24:26])
    if fmt_tag == WAVE_FORMAT_PCM:
        if bits not in (8, 16, 24, 32):
            raise UnsupportedEncoding(f"{path}: {bits}-bit integer PCM")
        encoding = "pcm"
    elif fmt_tag == WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise UnsupportedEncoding(f"{path}: {bits}-bit float payload")
        encoding = "float"
    else:
        raise UnsupportedEncoding(f"{path}: format tag 0x{fmt_tag:04x}")
    if channels < 1 or rate < 1:
        raise MalformedHeader(f"{path}: channels={channels} sample_rate={rate}")
    if block_align != channels * bits // 8:
        raise MalformedHeader(f"{path}: block_align {block_align} inconsistent with {channels}ch/{bits}bit")
    return rate, channels, bits, encoding


def read_metadata(path) -> AudioMetadata:
    """Parse the RIFF header of ``path`` without touching the sample payload."""
    path = Path(path)
    try:
        file_size = os.path.getsize(path)
        with open(path, "rb") as f:
            preamble = f.read(12)
            if len(preamble) < 12 or preamble[:4] != b"RIFF" or preamble[8:12] != b"WAVE":
                raise MalformedHeader(f"{path}: not a RIFF/WAVE file")
            fmt = None
            pos = 12
            while True:
                head = f.read(8)
                if len(head) < 8:
                    break
                chunk_id, size = struct.unpack("<4sI", head)
                pos += 8
                if chunk_id == b"fmt ":
                    body = f.read(size)
                    if len(body) < size:
                        raise MalformedHeader(f"{path}: fmt chunk runs past end of file")
                    fmt = _parse_fmt(body, path)
                elif chunk_id == b"data":
                    if fmt is None:
                        raise MalformedHeader(f"{path}: data chunk precedes fmt chunk")
                    rate, channels, bits, encoding = fmt
                    block = channels * bits // 8
                    if size % block:
                        raise MalformedHeader(f"{path}: data size {size} not a multiple of block size {block}")
                    return AudioMetadata(path, rate, channels, bits, size // block, encoding, pos)
                else:
                    f.seek(size, os.SEEK_CUR)
                pos += size + (size & 1)
                if pos > file_size:
                    raise MalformedHeader(f"{path}: chunk {chunk_id!r} runs past end of file")
                f.seek(pos)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    raise MalformedHeader(f"{path}: missing {'data' if fmt else 'fmt'} chunk")


def _to_float(raw: bytes, meta: AudioMetadata) -> np.ndarray:
    bits = meta.bits_per_sample
    if meta.encoding == "float":
        x = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        x = np.nan_to_num(x, nan=0.0, posinf=1.0, neginf=-1.0)
    elif bits == 8:
        # 8-bit WAV is unsigned with a 128 offset
        x = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif bits == 16:
        x = np.frombuffer(raw, dtype="<i2") / 32768.0
    elif bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        x = v / float(1 << 23)
    else:
        x = np.frombuffer(raw, dtype="<i4") / float(1 << 31)
    return x


def decode(path) -> SampleBuffer:
    """Decode ``path`` to a mono float buffer in [-1, 1] at the native rate."""
    meta = read_metadata(path)
    want = meta.n_frames * meta.block_align
    try:
        with open(meta.path, "rb") as f:
            f.seek(meta.data_offset)
            raw = f.read(want)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    if len(raw) < want:
        got = len(raw) // meta.block_align
        raise PayloadTruncated(f"{path}: header declares {meta.n_frames} frames, payload holds {got}")
    x = _to_float(raw, meta)
    if meta.channels > 1:
        x = x.reshape(-1, meta.channels).mean(axis=1)
    return SampleBuffer(np.clip(x, -1.0, 1.0), meta.sample_rate)


def write_wav(path, samples, sample_rate: int, channels: int = 1) -> None:
    """Write float samples in [-1, 1] as 16-bit PCM.

    ``samples`` is 1-D for mono or (frames, channels) for interleaved output.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 2:
        channels = x.shape[1]
    q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    block = 2 * channels
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    fmt = struct.pack("<HHIIHH", WAVE_FORMAT_PCM, channels, sample_rate, sample_rate * block, block, 16)
    chunks = header + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload))
    try:
        with open(path, "wb") as f:
            f.write(chunks)
            f.write(payload)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def _kernel_table(up: int, cutoff: float, half: int) -> np.ndarray:
    # one row of taps per output phase; tap k sits at input offset k - half + 1
    offsets = np.arange(-half + 1, half + 1)
    frac = np.arange(up)[:, None] / up
    x = offsets[None, :] - frac
    window = np.i0(KAISER_BETA * np.sqrt(np.clip(1.0 - (x / half) ** 2, 0.0, 1.0))) / np.i0(KAISER_BETA)
    h = cutoff * np.sinc(cutoff * x) * window
    return h / h.sum(axis=1, keepdims=True)


def resample(buf: SampleBuffer, target_rate: int) -> SampleBuffer:
    """Windowed-sinc polyphase resampling to ``target_rate``.

    The anti-aliasing cutoff sits at the lower of the two Nyquist
    frequencies; the Kaiser-windowed kernel spans ``RESAMPLE_HALF_WIDTH``
    zero crossings on each side.  Equal rates return ``buf`` itself.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    src = buf.sample_rate
    if target_rate == src:
        return buf
    g = math.gcd(src, target_rate)
    up, down = target_rate // g, src // g
    n_in = len(buf.samples)
    n_out = (2 * n_in * target_rate + src) // (2 * src)
    cutoff = min(1.0, target_rate / src)
    half = math.ceil(RESAMPLE_HALF_WIDTH / cutoff)
    table = _kernel_table(up, cutoff, half)
    padded = np.concatenate([np.zeros(half), np.asarray(buf.samples, dtype=np.float64), np.zeros(half + 1)])
    offsets = np.arange(-half + 1, half + 1) + half
    out = np.empty(n_out)
    for lo in range(0, n_out, _RESAMPLE_CHUNK):
        j = np.arange(lo, min(lo + _RESAMPLE_CHUNK, n_out), dtype=np.int64)
        base, phase = np.divmod(j * down, up)
        idx = base[:, None] + offsets[None, :]
        out[lo : lo + len(j)] = np.einsum("ij,ij->i", padded[idx], table[phase])
    return SampleBuffer(np.clip(out, -1.0, 1.0), target_rate)
