import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nsdil import signal
from nsdil.errors import ContractError, FormatError

from conftest import conv_full_loops, dft_direct

small = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
               elements=st.floats(-10, 10, allow_nan=False, allow_infinity=False))


def test_full_conv_identity_element(rng, backend):
    a = rng.standard_normal((11, 11))
    np.testing.assert_array_equal(signal.conv2d_full(a, [[1.0]]), a)


def test_full_conv_size(rng, backend):
    out = signal.conv2d_full(rng.random((11, 11)), rng.random((11, 11)))
    assert out.shape == (21, 21)


def test_full_conv_small_example(backend):
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    expected = conv_full_loops(a, b)
    np.testing.assert_array_equal(expected, [[0, 1, 2], [1, 5, 4], [3, 4, 0]])
    np.testing.assert_allclose(signal.conv2d_full(a, b), expected, atol=0)


@settings(max_examples=60, deadline=None)
@given(small, small)
def test_full_conv_matches_loops_and_commutes(a, b):
    ref = conv_full_loops(a, b)
    np.testing.assert_allclose(signal.conv2d_full(a, b), ref, atol=1e-9)
    np.testing.assert_allclose(signal.conv2d_full(b, a), ref, atol=1e-9)


def test_full_conv_linearity(rng, backend):
    a, b, k = rng.standard_normal((3, 9, 9))
    alpha, beta = 1.7, -0.3
    lhs = signal.conv2d_full(alpha * a + beta * b, k)
    rhs = alpha * signal.conv2d_full(a, k) + beta * signal.conv2d_full(b, k)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_area_property(rng, backend):
    for _ in range(20):
        a = rng.standard_normal(tuple(rng.integers(1, 12, size=2)))
        b = rng.standard_normal(tuple(rng.integers(1, 12, size=2)))
        assert abs(signal.conv2d_full(a, b).sum() - a.sum() * b.sum()) < 1e-9


def test_convolution_theorem(backend):
    for seed in range(50):
        r = np.random.default_rng(seed)
        a = r.standard_normal(tuple(r.integers(1, 12, size=2)))
        b = r.standard_normal(tuple(r.integers(1, 12, size=2)))
        full = signal.conv2d_full(a, b)
        p, q = full.shape
        prod = signal.dft2d(a, p, q) * signal.dft2d(b, p, q)
        assert np.max(np.abs(signal.dft2d(full, p, q) - prod)) <= 1e-8


@pytest.mark.parametrize("pad", ["zero", "reflect"])
def test_same_conv_with_delta_is_identity(rng, pad, backend):
    x = rng.random((8, 13))
    np.testing.assert_array_equal(signal.conv2d_same(x, signal.make_impulse(3, 3), pad), x)


def test_same_conv_counts_overlap(backend):
    out = signal.conv2d_same(np.ones((5, 5)), np.ones((3, 3)), "zero")
    assert out[0, 0] == 4 and out[2, 2] == 9 and out[0, 2] == 6


def test_same_conv_is_crop_of_full(rng, backend):
    x, k = rng.standard_normal((7, 7)), rng.standard_normal((3, 3))
    full = conv_full_loops(x, k)
    np.testing.assert_allclose(signal.conv2d_same(x, k, "zero"), full[1:8, 1:8], atol=1e-12)


def test_same_conv_reflect_is_crop_of_full_on_extended(rng, backend):
    x, k = rng.standard_normal((9, 10)), rng.standard_normal((5, 3))
    ext = np.pad(x, ((2, 2), (1, 1)), mode="reflect")
    full = conv_full_loops(ext, k)
    np.testing.assert_allclose(signal.conv2d_same(x, k, "reflect"), full[4:13, 2:12], atol=1e-12)


def test_same_conv_rejects_even_kernel():
    with pytest.raises(ContractError):
        signal.conv2d_same(np.ones((5, 5)), np.ones((2, 3)))


def test_impulses():
    c = signal.make_impulse(3, 3, "center")
    assert c[1, 1] == 1 and c.sum() == 1
    o = signal.make_impulse(21, 21, "origin")
    assert o[0, 0] == 1 and o.sum() == 1
    with pytest.raises(ContractError):
        signal.make_impulse(4, 3, "center")


def test_dft_of_origin_impulse():
    spec = signal.dft2d(signal.make_impulse(9, 9, "origin"))
    np.testing.assert_array_equal(signal.magnitude(spec), np.ones((9, 9)))
    np.testing.assert_array_equal(signal.phase(spec), np.zeros((9, 9)))


def test_dft_matches_direct_sum(rng):
    g = rng.standard_normal((5, 4))
    np.testing.assert_allclose(signal.dft2d(g, 9, 7), dft_direct(g, 9, 7), atol=1e-12)


def test_dft_origin_is_spatial_sum(rng):
    for _ in range(10):
        g = rng.standard_normal((6, 5))
        assert abs(signal.dft2d(g, 11, 8)[0, 0] - g.sum()) < 1e-12


def test_dft_unit_sum_kernel_has_unit_dc(rng):
    k = rng.random((11, 11))
    k /= k.sum()
    assert abs(abs(signal.dft2d(k, 21, 21)[0, 0]) - 1) < 1e-12


def test_dft_rejects_shrinking():
    with pytest.raises(ContractError):
        signal.dft2d(np.ones((5, 5)), 4, 5)


def test_magnitude_and_phase():
    z = np.array([[1j, -1 + 0j, -1 - 0j]])
    np.testing.assert_allclose(signal.magnitude(z), [[1, 1, 1]])
    ph = signal.phase(z)
    assert ph[0, 0] == pytest.approx(np.pi / 2)
    # principal value excludes -pi
    assert ph[0, 1] == np.pi and ph[0, 2] == np.pi
    assert np.all(signal.phase(np.array([[2.0 + 0j, 0.5 + 0j]])) == 0)


def test_magnitude_squared_definition(rng):
    z = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    np.testing.assert_allclose(signal.magnitude(z) ** 2, z.real ** 2 + z.imag ** 2, atol=1e-12)


def test_center_shift_round_trip(rng):
    np.testing.assert_array_equal(
        signal.center_shift_to_origin(signal.make_impulse(7, 7)), signal.make_impulse(7, 7, "origin"))
    g = rng.standard_normal((5, 9))
    np.testing.assert_array_equal(signal.origin_shift_to_center(signal.center_shift_to_origin(g)), g)
    with pytest.raises(ContractError):
        signal.center_shift_to_origin(np.ones((4, 5)))


def test_symmetric_kernel_is_zero_phase_after_shift():
    v = np.arange(11) - 5
    g = np.exp(-(v[:, None] ** 2 + v[None, :] ** 2) / (2 * 1.3 ** 2))
    g /= g.sum()
    assert np.max(np.abs(signal.phase(signal.dft2d(signal.center_shift_to_origin(g))))) <= 1e-8
    # and when zero-extended to a larger spectrum grid
    assert np.max(np.abs(signal.phase(signal.dft2d(signal.embed_at_origin(g, 21, 21))))) <= 1e-8


def test_embed_matches_symmetric_pad_then_shift(rng):
    g = rng.standard_normal((11, 11))
    padded = np.pad(g, 5)
    np.testing.assert_array_equal(signal.embed_at_origin(g, 21, 21), signal.center_shift_to_origin(padded))
    np.testing.assert_array_equal(signal.extract_from_origin(signal.embed_at_origin(g, 21, 21), 11, 11), g)


def test_bicubic_scale_one_is_identity(rng):
    x = rng.random((17, 23))
    np.testing.assert_allclose(signal.bicubic_resize(x, 1.0), x, atol=1e-12)


@pytest.mark.parametrize("scale", [0.5, 1.5, 2.0, 3.0, 4.0])
def test_bicubic_constant_preserved(scale):
    out = signal.bicubic_resize(np.full((10, 12), 0.37), scale)
    assert out.shape == (round(10 * scale), round(12 * scale))
    np.testing.assert_allclose(out, 0.37, atol=1e-12)


def test_bicubic_reproduces_ramp():
    rows, cols = np.mgrid[0:16, 0:20].astype(float)
    ramp = 0.3 * rows - 0.1 * cols + 2.0
    out = signal.bicubic_resize(ramp, 2.0)
    # output sample (i, j) sits at source coordinate (i + 0.5) / 2 - 0.5
    i, j = np.mgrid[0:32, 0:40].astype(float)
    analytic = 0.3 * ((i + 0.5) / 2 - 0.5) - 0.1 * ((j + 0.5) / 2 - 0.5) + 2.0
    inner = (slice(4, -4), slice(4, -4))
    assert np.max(np.abs(out[inner] - analytic[inner])) <= 1e-6


def test_bicubic_rejects_bad_scale():
    with pytest.raises(ContractError):
        signal.bicubic_resize(np.ones((3, 3)), 0.0)
    with pytest.raises(ContractError):
        signal.bicubic_resize(np.ones((3, 3)), 0.1)


def test_grid_rejects_nonfinite():
    with pytest.raises(ContractError):
        signal.as_grid([[1.0, np.nan]])


def test_grd1_round_trip(tmp_path, rng):
    g = rng.standard_normal((4, 7))
    path = tmp_path / "g.grd"
    signal.save_grid(g, path)
    raw = path.read_bytes()
    assert raw[:4] == b"GRD1" and int.from_bytes(raw[4:8], "little") == 4
    assert int.from_bytes(raw[8:12], "little") == 7 and len(raw) == 12 + 8 * 28
    np.testing.assert_array_equal(signal.load_grid(path), g)


def test_grd1_rejects_bad_files():
    good = signal.encode_grid(np.ones((2, 2)))
    with pytest.raises(FormatError):
        signal.decode_grid(b"XXXX" + good[4:])
    with pytest.raises(FormatError):
        signal.decode_grid(good[:-3])


def test_bicubic_downscale_is_antialiased():
    # a Nyquist checkerboard must not alias into a strong pattern
    rows, cols = np.mgrid[0:64, 0:64]
    board = ((rows + cols) % 2).astype(float)
    out = signal.bicubic_resize(board, 0.5)
    assert out.shape == (32, 32)
    inner = out[4:-4, 4:-4]
    assert np.max(np.abs(inner - 0.5)) <= 1e-12


def test_bicubic_downscale_weights():
    # scale 1/2: each output sample is a stretched-cubic average of 8 inputs
    x = np.zeros((1, 16))
    x[0, 7] = 1.0
    out = signal.bicubic_resize(np.repeat(x, 16, axis=0), 0.5)[0]
    t = (np.arange(8) * 2 + 0.5) - 7  # offsets of output centres from the spike, in input pixels
    k = np.array([signal._cubic(np.array([v / 2]))[0] for v in t])
    np.testing.assert_allclose(out[1:7], k[1:7] / 2, atol=1e-12)
