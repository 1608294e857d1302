import struct

import numpy as np
import pytest

from pamflow.classify import DetectionClass


def direct_dft(x):
    """O(N^2) DFT written out from the definition; independent of numpy.fft."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    idx = np.arange(n)
    twiddle = np.exp(-2j * np.pi * idx / n)
    out = np.empty(n, dtype=complex)
    for lo in range(0, n, 256):
        k = idx[lo : lo + 256]
        # reduce k*n mod N in integers so the phase stays exact for long inputs
        out[lo : lo + 256] = twiddle[np.outer(k, idx) % n] @ x
    return out


def raw_wav(fmt_tag, channels, rate, bits, payload, declared_frames=None, extensible=False):
    """Build WAV bytes by hand, independent of the package's writer."""
    block = channels * bits // 8
    data_size = len(payload) if declared_frames is None else declared_frames * block
    if extensible:
        fmt = struct.pack("<HHIIHH", 0xFFFE, channels, rate, rate * block, block, bits)
        guid_tail = b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"
        fmt += struct.pack("<HHI", 22, bits, 0) + struct.pack("<H", fmt_tag) + guid_tail
    else:
        fmt = struct.pack("<HHIIHH", fmt_tag, channels, rate, rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", data_size) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


@pytest.fixture
def write_raw(tmp_path):
    def _write(name, *args, **kwargs):
        p = tmp_path / name
        p.write_bytes(raw_wav(*args, **kwargs))
        return p

    return _write


@pytest.fixture
def tone_classes():
    return [
        DetectionClass("TONEA", "1 kHz", 0.5, 900.0, 1100.0),
        DetectionClass("TONEB", "2 kHz", 0.5, 1900.0, 2100.0),
        DetectionClass("TONEC", "3 kHz", 0.5, 2900.0, 3100.0),
    ]


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            if outcome == "passed" and rep.when != "call":
                continue
            name = nodeid.split("::")[-1][len("test_criterion_") :]
            num, _, label = name.partition("_")
            props = dict(getattr(rep, "user_properties", []))
            verdict = props.pop("verdict", "PASS") if outcome == "passed" else outcome.upper()
            notes = "; ".join(f"{k}={v}" for k, v in props.items())
            lines.append((int(num), f"criterion {num} [{label}]: {verdict}" + (f"  ({notes})" if notes else "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(set(lines)):
            terminalreporter.write_line(line)
