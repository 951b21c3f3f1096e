import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fracrd import DepthField
from fracrd.io import (
    FormatError,
    detect_format,
    read_depth,
    read_pfm,
    read_pgm16,
    write_depth,
    write_pfm,
    write_pgm16,
)


def test_pfm_header_and_row_order(tmp_path):
    a = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    p = tmp_path / "d.pfm"
    write_pfm(p, DepthField(a))
    raw = p.read_bytes()
    assert raw.startswith(b"Pf\n3 2\n-1.0\n")
    body = np.frombuffer(raw[len(b"Pf\n3 2\n-1.0\n"):], dtype="<f4")
    # first stored row is the bottom one
    np.testing.assert_array_equal(body, [4, 5, 6, 1, 2, 3])
    np.testing.assert_array_equal(read_pfm(p).data, a)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(2, 7), st.integers(2, 7)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_pfm_lossless_for_float32(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("pfm") / "x.pfm"
    f = DepthField(a.astype(np.float64))
    write_pfm(p, f)
    assert read_pfm(p) == f


def test_pfm_big_endian(tmp_path):
    a = np.arange(6, dtype=">f4").reshape(2, 3)
    p = tmp_path / "be.pfm"
    p.write_bytes(b"Pf\n3 2\n1.0\n" + np.flipud(a).tobytes())
    np.testing.assert_array_equal(read_pfm(p).data, a)


def test_pgm_round_trip_within_step(tmp_path, rng):
    a = rng.uniform(500.0, 4500.0, (9, 11))
    p = tmp_path / "d.pgm"
    write_pgm16(p, DepthField(a))
    back, (lo, hi) = read_pgm16(p, with_range=True)
    assert (lo, hi) == (a.min(), a.max())
    assert np.max(np.abs(back.data - a)) <= (hi - lo) / 65535
    raw = p.read_bytes()
    assert raw.startswith(b"P5\n# depth_range_mm ")
    assert raw.endswith(np.rint((a - lo) / (hi - lo) * 65535).astype(">u2").tobytes())


def test_pgm_constant_field(tmp_path):
    p = tmp_path / "c.pgm"
    write_pgm16(p, DepthField.constant(4, 3, 1200.0))
    assert read_pgm16(p) == DepthField.constant(4, 3, 1200.0)


def test_pgm_explicit_range_clips(tmp_path):
    p = tmp_path / "r.pgm"
    write_pgm16(p, DepthField(np.array([[0.0, 50.0], [100.0, 200.0]])), depth_range=(0.0, 100.0))
    np.testing.assert_allclose(read_pgm16(p).data, [[0, 50], [100, 100]], atol=100 / 65535)
    with pytest.raises(ValueError):
        write_pgm16(p, DepthField.constant(2, 2, 1.0), depth_range=(5.0, 5.0))


def test_read_write_depth_dispatch(tmp_path):
    f = DepthField(np.array([[1.0, 2.0], [3.0, 4.0]]))
    for name, fmt in (("a.pfm", "pfm"), ("a.pgm", "pgm")):
        write_depth(tmp_path / name, f)
        assert detect_format(tmp_path / name) == fmt
        g, got_fmt, rng = read_depth(tmp_path / name)
        assert got_fmt == fmt
        assert (rng is None) == (fmt == "pfm")
        np.testing.assert_allclose(g.data, f.data, atol=3 / 65535)


@pytest.mark.parametrize(
    "content",
    [
        b"P6\n2 2\n255\n",
        b"PF\n2 2\n-1.0\n" + bytes(48),
        b"Pf\n2 2\n-1.0\n" + bytes(8),
        b"Pf\n2 x\n-1.0\n",
        b"Pf\n2 2\n0\n" + bytes(16),
        b"Pf\n2 2\n",
    ],
)
def test_bad_pfm(tmp_path, content):
    p = tmp_path / "bad.pfm"
    p.write_bytes(content)
    with pytest.raises(FormatError):
        read_pfm(p)


@pytest.mark.parametrize(
    "content",
    [
        b"P5\n2 2\n65535\n" + bytes(8),
        b"P5\n# depth_range_mm 0 1\n2 2\n255\n" + bytes(4),
        b"P5\n# depth_range_mm 0 1\n2 2\n65535\n" + bytes(3),
        b"P2\n2 2\n65535\n",
    ],
)
def test_bad_pgm(tmp_path, content):
    p = tmp_path / "bad.pgm"
    p.write_bytes(content)
    with pytest.raises(FormatError):
        read_pgm16(p)


def test_non_finite_pfm_rejected(tmp_path):
    p = tmp_path / "nan.pfm"
    p.write_bytes(b"Pf\n2 1\n-1.0\n" + np.array([1.0, np.nan], dtype="<f4").tobytes())
    with pytest.raises(ValueError):
        read_pfm(p)


def test_pfm_rejects_values_beyond_float32(tmp_path):
    with pytest.raises(ValueError):
        write_pfm(tmp_path / "big.pfm", DepthField.constant(2, 2, 1e39))
    assert not (tmp_path / "big.pfm").exists()
