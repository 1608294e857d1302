import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from conftest import direct_dft
from pamflow.media_io import SampleBuffer
from pamflow.spectro import (
    Clip,
    SpectroConfig,
    clip_count,
    hann,
    parse_clip_id,
    segment,
    stft_power,
    tiles_for_buffer,
    to_tile,
    write_tile_png,
)

CFG = SpectroConfig()
SEG = CFG.segment_samples


def brute_force_count(d_ms: int, l_ms: int, tail_ms: int) -> int:
    """Walk clip starts one by one on an integer millisecond grid."""
    n, start = 0, 0
    while start < d_ms:
        if d_ms - start >= l_ms or d_ms - start >= tail_ms:
            n += 1
        start += l_ms
    return n


def test_segment_exact_tiling():
    clips = segment(60.0, CFG, "x.wav")
    assert len(clips) == 5 and all(c.pad == 0 for c in clips)
    assert [c.start for c in clips] == [0.0, 12.0, 24.0, 36.0, 48.0]


def test_segment_padded_tail():
    clips = segment(66.0, CFG, "x.wav")
    assert len(clips) == 6
    assert (clips[-1].start, clips[-1].pad) == (60.0, 6.0)


def test_segment_short_tail_dropped():
    assert len(segment(60.5, CFG, "x.wav")) == 5


def test_segment_zero_duration():
    assert segment(0.0, CFG) == []


def test_clip_ids():
    clips = segment(36.0, CFG, "site/CLE-01_20230515_021500.wav")
    assert [c.clip_id for c in clips] == [f"CLE-01_20230515_021500_part00{i}" for i in (1, 2, 3)]
    assert parse_clip_id("a_b_part012") == ("a_b", 11)
    with pytest.raises(ValueError):
        parse_clip_id("nopart")


def test_clip_count_against_brute_force():
    rng = np.random.default_rng(20231015)
    for _ in range(1000):
        l_ms = int(rng.integers(100, 30000))
        tail_ms = int(rng.integers(1, l_ms + 1))
        d_ms = int(rng.integers(0, 20 * l_ms))
        cfg = SpectroConfig(clip_length=l_ms / 1000, min_tail=tail_ms / 1000, target_width=10, working_rate=1000)
        assert len(segment(d_ms / 1000, cfg)) == brute_force_count(d_ms, l_ms, tail_ms), (d_ms, l_ms, tail_ms)


@pytest.mark.parametrize("k", [0, 1, 5, 17])
def test_clip_count_boundaries(k):
    # d mod L == 0 and d mod L == min_tail, and one millisecond either side
    for l_ms, tail_ms in [(12000, 1000), (5000, 5000), (1000, 1)]:
        for rem in (0, tail_ms - 1, tail_ms, tail_ms + 1):
            if not 0 <= rem < l_ms:
                continue
            d_ms = k * l_ms + rem
            assert clip_count(d_ms / 1000, l_ms / 1000, tail_ms / 1000) == brute_force_count(d_ms, l_ms, tail_ms)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 3600), st.floats(2.0, 60), st.floats(0.01, 1))
def test_segment_invariants(d, L, tail_frac):
    cfg = SpectroConfig(clip_length=L, min_tail=L * tail_frac, target_width=10, working_rate=100)
    clips = segment(d, cfg)
    for i, c in enumerate(clips):
        assert c.index == i and 0 <= c.pad < L
        assert c.start == pytest.approx(i * L)
    assert all(c.pad == 0 for c in clips[:-1])


def _tone(freqs, amps=None, n=SEG, rate=16000):
    t = np.arange(n) / rate
    amps = amps or [1.0] * len(freqs)
    return sum(a * np.sin(2 * np.pi * f * t) for f, a in zip(freqs, amps))


def test_stft_shape_and_zero():
    p = stft_power(np.zeros(SEG), CFG)
    assert p.shape == (1000, 257) and not p.any()


def test_stft_frames_match_direct_dft():
    x = np.random.default_rng(0).normal(size=SEG)
    p = stft_power(x, CFG)
    padded = np.concatenate([x, np.zeros(CFG.n_fft)])
    for i in (0, 1, 500, 998, 999):
        frame = padded[i * CFG.hop : i * CFG.hop + CFG.n_fft] * hann(CFG.n_fft)
        ref = np.abs(direct_dft(frame)[: CFG.n_bins]) ** 2
        np.testing.assert_allclose(p[i], ref, rtol=1e-9, atol=1e-9 * ref.max())


def test_stft_peak_1khz():
    p = stft_power(_tone([1000.0]), CFG)
    # direct DFT of one interior frame as the oracle
    frame = _tone([1000.0])[CFG.hop * 10 : CFG.hop * 10 + 512] * hann(512)
    assert np.argmax(np.abs(direct_dft(frame)[:257])) == 32
    assert np.all(np.argmax(p[:-3], axis=1) == 32)


def test_stft_two_tones_equal_peaks():
    p = stft_power(_tone([1000.0, 3000.0]), CFG)
    frame = p[100]
    top2 = sorted(np.argsort(frame)[-2:])
    assert top2 == [32, 96]
    assert frame[32] == pytest.approx(frame[96], rel=0.01)


def _full_band_energy(row, n_fft):
    return row[0] + row[n_fft // 2] + 2 * row[1 : n_fft // 2].sum()


def test_parseval_random_tones():
    rng = np.random.default_rng(7)
    w = hann(CFG.n_fft)
    for _ in range(100):
        f = rng.uniform(20, 7900)
        x = _tone([f], [rng.uniform(0.01, 1)])
        p = stft_power(x, CFG)
        for i in (0, 400):
            frame = x[i * CFG.hop : i * CFG.hop + CFG.n_fft] * w
            expected = CFG.n_fft * np.sum(frame**2)
            assert abs(_full_band_energy(p[i], CFG.n_fft) - expected) <= 1e-6 * expected


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_stft_linearity(alpha, seed):
    x = np.random.default_rng(seed).normal(size=SEG)
    p1, p2 = stft_power(x, CFG), stft_power(alpha * x, CFG)
    np.testing.assert_allclose(p2, alpha**2 * p1, rtol=1e-6, atol=1e-6 * alpha**2 * p1.max())


def test_to_tile_zero():
    t = to_tile(np.zeros((1000, 257)), CFG)
    assert t.shape == (257, 1000) and not t.intensities.any()


def test_to_tile_levels():
    grid = np.zeros((1000, 257))
    grid[3, 10] = 2.0
    grid[4, 20] = 0.02  # -20 dB
    grid[5, 30] = 2e-9  # -90 dB, below floor
    t = to_tile(grid, CFG)
    assert t.intensities[10, 3] == 1.0
    assert t.intensities[20, 4] == pytest.approx(0.75)
    assert t.intensities[30, 5] == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_to_tile_monotone_and_bounded(seed):
    rng = np.random.default_rng(seed)
    cfg = SpectroConfig(target_width=20, n_fft=16, working_rate=100, clip_length=1.0)
    grid = rng.exponential(size=(20, 9)) ** rng.uniform(1, 20)
    t = to_tile(grid, cfg).intensities.T.ravel()
    order = np.argsort(grid.ravel(), kind="stable")
    assert np.all(np.diff(t[order]) >= 0)
    assert t.min() >= 0 and t.max() <= 1


def test_tile_shape_constant_across_durations():
    rng = np.random.default_rng(11)
    shapes = set()
    for d in rng.uniform(1.0, 40.0, 6):
        n = int(d * 8000)
        buf = SampleBuffer(rng.uniform(-0.1, 0.1, n), 8000)
        shapes.update(t.shape for t in tiles_for_buffer(buf, "x.wav", CFG))
    assert shapes == {(257, 1000)}


def test_png_zero(tmp_path):
    tile = to_tile(np.zeros((1000, 257)), CFG)
    write_tile_png(tile, tmp_path / "z.png")
    with Image.open(tmp_path / "z.png") as im:
        assert im.mode == "L" and im.size == (1000, 257)
        assert not np.asarray(im).any()


def test_png_orientation_and_values(tmp_path):
    tile = to_tile(stft_power(_tone([1000.0], [0.5]), CFG), CFG, Clip("x.wav", 0, 0.0, 12.0))
    write_tile_png(tile, tmp_path / "t.png")
    with Image.open(tmp_path / "t.png") as im:
        px = np.asarray(im).astype(int)
    expected = np.round(tile.intensities * 255).astype(int)
    assert np.array_equal(px, expected[::-1])
    # top image row is the highest frequency bin; the 1 kHz row sits near the bottom
    assert px.max() == 255
    assert np.argmax(px[:, 500]) == 256 - 32
