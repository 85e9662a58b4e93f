import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from padlab import (DimensionError, EncodingKind, GridSize, RngSpec, UnsupportedError, compose_noise_pe,
                    csg, csg_translate, fixed_constant, resize_encoding, spe, spe_frequencies, spe_rotate)
from padlab.tensor import gaussian_batch


def test_csg_anchor_points():
    assert csg(GridSize(2, 2)).values[:, 0, 0].tolist() == [-1.0, -1.0]
    assert csg(GridSize(4, 4)).values[:, 2, 2].tolist() == [0.0, 0.0]
    # literal formula: the bottom-right of a 2x2 grid is the centre, not (+1, +1)
    assert csg(GridSize(2, 2)).values[:, 1, 1].tolist() == [0.0, 0.0]


def test_csg_align_corners_variant():
    g = csg(GridSize(5, 3), align_corners=True).values
    assert g[:, 0, 0].tolist() == [-1.0, -1.0]
    assert g[:, -1, -1].tolist() == [1.0, 1.0]


@given(st.integers(1, 300), st.integers(1, 300))
def test_csg_top_left_is_always_minus_one(h, w):
    assert csg(GridSize(h, w)).values[:, 0, 0].tolist() == [-1.0, -1.0]


def test_csg_translate_examples():
    size = GridSize(4, 4)
    assert np.array_equal(csg_translate(size, (1, 2), (0, 0)), csg(size).values[:, 1, 2])
    assert csg_translate(size, (0, 0), (2, 2)).tolist() == [0.0, 0.0]
    step8 = csg_translate(GridSize(8, 8), (0, 0), (1, 0))[0] - (-1.0)
    step4 = csg_translate(GridSize(4, 4), (0, 0), (1, 0))[0] - (-1.0)
    assert (step8, step4) == (2 / 8, 2 / 4)


@given(st.data())
def test_csg_translate_exact(data):
    h = data.draw(st.integers(1, 200))
    w = data.draw(st.integers(1, 200))
    i0, j0 = data.draw(st.integers(0, h - 1)), data.draw(st.integers(0, w - 1))
    i1, j1 = data.draw(st.integers(0, h - 1)), data.draw(st.integers(0, w - 1))
    got = csg_translate(GridSize(h, w), (i0, j0), (i1 - i0, j1 - j0))
    assert np.array_equal(got, csg(GridSize(h, w)).values[:, i1, j1])


def test_csg_translate_outside():
    with pytest.raises(DimensionError):
        csg_translate(GridSize(4, 4), (3, 3), (1, 0))


def test_csg_step_shrinks_with_scale():
    steps = [np.diff(csg(GridSize(h, 3)).values[0, :, 0]) for h in range(2, 40)]
    for s, h in zip(steps, range(2, 40)):
        np.testing.assert_allclose(s, 2 / h, rtol=1e-14)
    firsts = [s[0] for s in steps]
    assert all(a > b for a, b in zip(firsts, firsts[1:]))


@pytest.mark.parametrize("h, w", [(1, 1), (4, 7), (16, 16), (33, 5)])
def test_csg_locations_distinct(h, w):
    v = csg(GridSize(h, w)).values.reshape(2, -1).T
    assert len({tuple(r) for r in v}) == h * w


def test_spe_row_zero():
    enc = spe(GridSize(5, 5), 8).values
    assert enc[:4, 0, :].T.tolist() == [[0.0, 1.0, 0.0, 1.0]] * 5


def test_spe_frequencies_c8():
    # d = C/2 = 4; k = 0, 1 -> 10000 ** (-0/4), 10000 ** (-2/4)
    expected = [1.0 / math.pow(10000.0, 2 * k / 4) for k in range(2)]
    assert expected == [1.0, 0.01]
    np.testing.assert_allclose(spe_frequencies(8), expected, rtol=1e-15)


def test_spe_frequencies_decreasing():
    w = spe_frequencies(64)
    assert w[0] == 1.0 and np.all(np.diff(w) < 0)


def test_spe_values_at_one():
    enc = spe(GridSize(3, 3), 4).values
    assert enc[0, 1, 0] == pytest.approx(0.841471, abs=1e-6)
    assert enc[1, 1, 0] == pytest.approx(0.540302, abs=1e-6)
    # width half uses the column index
    assert enc[2, 0, 1] == pytest.approx(math.sin(1.0), abs=1e-15)


def test_spe_rejects_bad_channels():
    with pytest.raises(DimensionError):
        spe(GridSize(4, 4), 6)
    with pytest.raises(DimensionError):
        EncodingKind.spe(10)


def test_spe_rotate_examples():
    col = (math.sin(2.0), math.cos(2.0))
    assert np.array_equal(spe_rotate(col, 0, 1.0), np.array(col))
    np.testing.assert_allclose(spe_rotate(col, 3, 1.0), [math.sin(5.0), math.cos(5.0)], atol=1e-12)
    twice = spe_rotate(spe_rotate(col, 4, 0.3), 7, 0.3)
    np.testing.assert_allclose(twice, spe_rotate(col, 11, 0.3), atol=1e-12)


@given(st.integers(0, 15), st.integers(0, 64), st.integers(-32, 32))
def test_spe_rotation_law(k, i0, phi):
    omega = spe_frequencies(64)[k]
    col = (math.sin(omega * i0), math.cos(omega * i0))
    direct = [math.sin(omega * (i0 + phi)), math.cos(omega * (i0 + phi))]
    np.testing.assert_allclose(spe_rotate(col, phi, omega), direct, atol=1e-9)


@given(st.integers(1, 64), st.integers(1, 64), st.sampled_from([4, 8, 16]))
def test_spe_prefix_property(h, h2, c):
    small, big = sorted((h, h2))
    a = spe(GridSize(small, small), c).values
    b = spe(GridSize(big, big), c).values
    assert np.array_equal(b[:, :small, :small], a)


def test_spe_locations_distinct():
    v = spe(GridSize(24, 24), 8).values.reshape(8, -1).T
    assert len({tuple(r) for r in v}) == 24 * 24


def test_fixed_constant():
    a = fixed_constant(8, GridSize(4, 4), RngSpec(9))
    assert a == fixed_constant(8, GridSize(4, 4), RngSpec(9))
    vecs = a.values.reshape(8, -1).T
    assert len({tuple(r) for r in vecs}) == 16
    big = fixed_constant(512, GridSize(4, 4), RngSpec(1))
    assert big.values.shape == (512, 4, 4)


def test_spe_expand_prefix_5_to_7():
    kind = EncodingKind.spe(8)
    base = spe(GridSize(5, 5), 8)
    grown = resize_encoding(kind, base, GridSize(7, 7), "expand")
    assert np.array_equal(grown.values[:, :5, :5], base.values)


@pytest.mark.parametrize("h, w", [(2, 2), (3, 9), (16, 16), (31, 17)])
def test_csg_interp_matches_regenerated(h, w):
    base = csg(GridSize(4, 4), align_corners=True)
    out = resize_encoding(EncodingKind.csg(), base, GridSize(h, w), "interp").values
    np.testing.assert_allclose(out, csg(GridSize(h, w), align_corners=True).values, atol=1e-12)
    lit = resize_encoding(EncodingKind.csg(), csg(GridSize(4, 4)), GridSize(h, w), "interp").values
    assert lit[:, 0, 0].tolist() == [-1.0, -1.0]


def test_expand_rejected_for_non_spe():
    with pytest.raises(UnsupportedError):
        resize_encoding(EncodingKind.csg(), csg(GridSize(4, 4)), GridSize(8, 8), "expand")
    kind = EncodingKind.fixed(3, RngSpec(1))
    with pytest.raises(UnsupportedError):
        resize_encoding(kind, kind.generate(GridSize(4, 4)), GridSize(8, 8), "expand")


def test_compose_noise_pe_zero_noise():
    pe = spe(GridSize(6, 6), 4)
    assert compose_noise_pe(pe, RngSpec(1), scale=0.0) is pe


def test_compose_noise_pe_streams_differ():
    pe = csg(GridSize(6, 6))
    a = compose_noise_pe(pe, RngSpec(1, 0))
    b = compose_noise_pe(pe, RngSpec(1, 1))
    assert not a == b
    assert a == compose_noise_pe(pe, RngSpec(1, 0))


def test_compose_noise_pe_mean():
    pe = csg(GridSize(5, 5))
    n = 100_000
    noise = gaussian_batch(2, GridSize(5, 5), 42, np.arange(n))
    samples = pe.values[None] + noise
    # the first sample is exactly what compose_noise_pe returns for stream 0
    assert np.array_equal(compose_noise_pe(pe, RngSpec(42, 0)).values, samples[0])
    assert np.all(np.abs(samples.mean(axis=0) - pe.values) < 4 / math.sqrt(n))
