import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _cases import CASES
from foolforge.autodiff import (
    AffineParams,
    ChecksumError,
    FormatError,
    Graph,
    NonFiniteError,
    OptimConfig,
    Optimizer,
    ShapeError,
    SpectralParam,
    Tensor,
    bilinear_transform,
    grad,
    grad_check,
    load_bundle,
    load_tensor,
    ops,
    optimizer_step,
    save_bundle,
    save_tensor,
    spectral_synthesize,
)
from foolforge.autodiff.serialize import tensor_bytes
from foolforge.autodiff.spectral import frequency_scale, half_plane_shape, spectral_preactivation


@pytest.mark.parametrize("name,fn,make,tol", CASES, ids=[c[0] for c in CASES])
def test_primitive_gradients(name, fn, make, tol):
    errs = [grad_check(fn, make(np.random.default_rng([i, 99])), np.random.default_rng(i)) for i in range(10)]
    assert max(errs) < tol


# -- conv2d --------------------------------------------------------------------

def test_conv_identity_kernel():
    x = np.random.default_rng(0).standard_normal((2, 1, 4, 5))
    out = ops.conv2d(Tensor(x), np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(out.data, x)


def test_conv_all_ones():
    out = ops.conv2d(Tensor(np.ones((1, 1, 2, 2))), np.ones((1, 1, 2, 2)))
    assert out.shape == (1, 1, 1, 1) and out.data.item() == 4.0


def test_conv_output_shape():
    out = ops.conv2d(Tensor(np.zeros((1, 3, 9, 7))), np.zeros((4, 3, 3, 3)), stride=2, pad=1)
    assert out.shape == (1, 4, 5, 4)


def test_conv_matches_direct_cross_correlation():
    rng = np.random.default_rng(3)
    x, w = rng.standard_normal((1, 2, 5, 5)), rng.standard_normal((3, 2, 3, 3))
    out = ops.conv2d(Tensor(x), w, stride=2, pad=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros_like(out)
    for f in range(3):
        for i in range(3):
            for j in range(3):
                ref[0, f, i, j] = (xp[0, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3] * w[f]).sum()
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_conv_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(1, 2, 5, 5\).*\(3, 4, 3, 3\)"):
        ops.conv2d(Tensor(np.zeros((1, 2, 5, 5))), np.zeros((3, 4, 3, 3)))


def test_conv_kernel_larger_than_input_rejected():
    with pytest.raises(ShapeError):
        ops.conv2d(Tensor(np.zeros((1, 1, 2, 2))), np.zeros((1, 1, 5, 5)))


def test_conv_transpose_is_adjoint_of_conv():
    rng = np.random.default_rng(4)
    x, w = rng.standard_normal((1, 2, 6, 6)), rng.standard_normal((3, 2, 4, 4))
    y = rng.standard_normal((1, 3, 3, 3))
    lhs = (ops.conv2d(Tensor(x), w, stride=2, pad=1).data * y).sum()
    rhs = (ops.conv_transpose2d(Tensor(y), w, stride=2, pad=1).data * x).sum()
    assert lhs == pytest.approx(rhs, rel=1e-12)


# -- AdaIN ---------------------------------------------------------------------

def test_adain_identity_on_standardized_input():
    x = np.random.default_rng(0).standard_normal((2, 3, 6, 6))
    x = (x - x.mean(axis=(2, 3), keepdims=True)) / x.std(axis=(2, 3), keepdims=True)
    out = ops.adaptive_instance_norm(Tensor(x), np.ones(3), np.zeros(3), 1e-5).data
    # the eps term rescales by 1/sqrt(1 + eps); undo it before comparing
    np.testing.assert_allclose(out * np.sqrt(1 + 1e-5), x, atol=1e-9)


def test_adain_constant_channel():
    out = ops.adaptive_instance_norm(Tensor(np.full((1, 2, 4, 4), 7.0)), np.full(2, 5.0), np.full(2, 2.0)).data
    np.testing.assert_allclose(out, 2.0, atol=1e-12)


def test_adain_output_statistics():
    x = np.random.default_rng(1).standard_normal((2, 4, 8, 8)) * 4 + 1
    out = ops.adaptive_instance_norm(Tensor(x), np.full(4, 3.0), np.full(4, -1.0), 1e-12).data
    np.testing.assert_allclose(out.mean(axis=(2, 3)), -1.0, atol=1e-6)
    np.testing.assert_allclose(out.std(axis=(2, 3)), 3.0, atol=1e-6)


def test_adain_rejects_bad_eps():
    with pytest.raises(ValueError):
        ops.adaptive_instance_norm(Tensor(np.zeros((1, 1, 2, 2))), np.ones(1), np.zeros(1), 0.0)


# -- spectral parameterization ---------------------------------------------------

def test_spectral_zero_is_half_gray():
    img = spectral_synthesize(SpectralParam.zeros((3, 8, 8)), (3, 8, 8)).data
    np.testing.assert_array_equal(img, 0.5)


def test_spectral_dc_only_is_constant():
    p = SpectralParam.zeros((3, 8, 8))
    p.coeffs[:, 0, 0, 0] = [0.3, -1.0, 2.0]
    img = spectral_synthesize(p, (3, 8, 8)).data
    assert np.ptp(img, axis=(1, 2)).max() < 1e-12
    assert len(np.unique(img.round(12))) == 3


def test_spectral_preactivation_linear():
    rng = np.random.default_rng(2)
    scale = frequency_scale(8, 8)
    a, b = rng.standard_normal((3, 8, 5, 2)), rng.standard_normal((3, 8, 5, 2))
    f = lambda t: spectral_preactivation(Tensor(t), scale, (8, 8)).data  # noqa: E731
    np.testing.assert_allclose(f(a + b), f(a) + f(b), atol=1e-10)


def _brute_idft_real(coeffs, h, w):
    """Hermitian-extend the half plane and evaluate the orthonormal inverse DFT by summation."""
    full = np.zeros((h, w), dtype=complex)
    half = coeffs[..., 0] + 1j * coeffs[..., 1]
    full[:, : half.shape[1]] = half
    for ky in range(h):
        for kx in range(half.shape[1], w):
            full[ky, kx] = np.conj(full[(-ky) % h, (-kx) % w])
    ys, xs = np.arange(h)[:, None], np.arange(w)[None, :]
    out = np.zeros((h, w))
    for ky in range(h):
        for kx in range(w):
            out += (full[ky, kx] * np.exp(2j * np.pi * (ky * ys / h + kx * xs / w))).real
    return out / np.sqrt(h * w)


def test_spectral_energy_matches_brute_force_dft():
    rng = np.random.default_rng(5)
    h = w = 8
    # a Hermitian-consistent half plane: the real transform of a real image
    img = rng.standard_normal((h, w))
    spec = np.fft.rfft2(img, norm="ortho")
    theta = np.stack([spec.real, spec.imag], axis=-1)[None] / frequency_scale(h, w)[None, ..., None]
    pre = spectral_preactivation(Tensor(theta), frequency_scale(h, w), (h, w)).data[0]
    brute = _brute_idft_real(theta[0] * frequency_scale(h, w)[..., None], h, w)
    np.testing.assert_allclose(pre, brute, rtol=1e-10, atol=1e-12)
    energy_pre = (pre**2).sum()
    energy_full = (np.abs(np.fft.fft2(brute, norm="ortho")) ** 2).sum()
    assert abs(energy_pre - energy_full) / energy_full < 1e-10


def test_spectral_rejects_nonfinite():
    p = SpectralParam.zeros((1, 4, 4)).coeffs
    p[0, 0, 0, 0] = np.nan
    with pytest.raises((NonFiniteError, ValueError)):
        spectral_synthesize(p, (1, 4, 4))


def test_spectral_layout_checked():
    with pytest.raises(ShapeError):
        spectral_synthesize(np.zeros((3, 8, 8, 2)), (3, 8, 8))
    assert half_plane_shape(8, 8) == (8, 5)


def test_frequency_scale_positive():
    assert (frequency_scale(7, 9) > 0).all()
    with pytest.raises(ValueError):
        SpectralParam(np.zeros((1, 4, 3, 2)), np.zeros((4, 3)))


# -- warp ----------------------------------------------------------------------

def test_warp_identity():
    x = np.random.default_rng(0).uniform(size=(3, 8, 8))
    np.testing.assert_array_equal(bilinear_transform(x, AffineParams(0.0, 1.0, (0.0, 0.0))).data, x)


def test_warp_jitter_moves_pixel():
    x = np.zeros((1, 7, 7))
    x[0, 3, 3] = 1.0
    out = bilinear_transform(x, AffineParams(0.0, 1.0, (1.0, 0.0))).data
    assert out[0, 3, 4] == pytest.approx(1.0) and out.sum() == pytest.approx(1.0)


def test_warp_edge_padding():
    x = np.ones((1, 6, 6))
    out = bilinear_transform(x, AffineParams(0.3, 0.8, (2.0, -2.0))).data
    np.testing.assert_allclose(out, 1.0, atol=1e-12)


def test_warp_gradient_interior_pixels():
    rng = np.random.default_rng(7)
    x = rng.uniform(size=(3, 10, 10))
    t = AffineParams(0.06, 1.05, (0.7, -0.4))
    r = rng.standard_normal((3, 10, 10))
    xt = Tensor(x, requires_grad=True)
    (g,) = grad(ops.sum(bilinear_transform(xt, t) * r), [xt])
    h = 1e-5
    for _ in range(10):
        c, i, j = rng.integers(3), rng.integers(2, 8), rng.integers(2, 8)
        xp, xm = x.copy(), x.copy()
        xp[c, i, j] += h
        xm[c, i, j] -= h
        num = ((bilinear_transform(xp, t).data - bilinear_transform(xm, t).data) * r).sum() / (2 * h)
        assert abs(num - g[c, i, j]) <= 1e-4 * max(abs(num), 1e-8)


def test_affine_params_validation():
    with pytest.raises(ValueError):
        AffineParams(0.0, 0.0, (0.0, 0.0))
    t = AffineParams.sample(np.random.default_rng(0), 5.0, (0.9, 1.1), 2.0)
    assert abs(t.rotation) <= np.deg2rad(5.0) and 0.9 <= t.scale <= 1.1
    assert AffineParams.sample(np.random.default_rng(0), 0.0, (1.0, 1.0), 0.0).is_identity


# -- backward ------------------------------------------------------------------

def test_backward_leaf():
    x = Tensor(np.array(2.5), requires_grad=True)
    (g,) = grad(x, [x])
    assert g == 1.0


def test_backward_sigmoid_closed_form():
    x = Tensor(np.array(1.0), requires_grad=True)
    (g,) = grad(ops.sigmoid(x), [x])
    s = 1 / (1 + np.exp(-1.0))
    assert g == pytest.approx(s * (1 - s), rel=1e-14)


def test_backward_composite_conv_relu_sum():
    rng = np.random.default_rng(8)
    w = rng.standard_normal((2, 1, 3, 3))
    err = grad_check(lambda x: ops.sum(ops.relu(ops.conv2d(x, w, pad=1))), [rng.standard_normal((1, 1, 5, 5))])
    assert err < 1e-5


def test_backward_rejects_nonscalar_seed():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        grad(x * 2.0, [x])


def test_backward_deterministic():
    rng = np.random.default_rng(9)
    x = Tensor(rng.standard_normal((2, 3, 8, 8)), requires_grad=True)
    w = Tensor(rng.standard_normal((4, 3, 3, 3)), requires_grad=True)
    y = ops.sum(ops.softmax(ops.reshape(ops.max_pool2d(ops.relu(ops.conv2d(x, w, pad=1))), (2, -1))))
    a, b = grad(y, [x, w]), grad(y, [x, w])
    for u, v in zip(a, b):
        assert u.tobytes() == v.tobytes()


def test_graph_topological_order():
    x = Tensor(np.ones(2), requires_grad=True)
    y = ops.sum(ops.exp(x) * x)
    g = Graph.trace(y)
    pos = {n.id: i for i, n in enumerate(g.nodes)}
    for n in g.nodes:
        assert all(pos[p] < pos[n.id] for p in n.parent_ids if p in pos)
    assert g.parameters == [x]


def test_nonfinite_forward_is_an_error():
    with np.errstate(divide="ignore"), pytest.raises(NonFiniteError, match="log"):
        ops.log(Tensor(np.array([0.0])))


def test_relu_gradient_zero_at_zero():
    x = Tensor(np.array([0.0, 1.0, -1.0]), requires_grad=True)
    (g,) = grad(ops.sum(ops.relu(x)), [x])
    np.testing.assert_array_equal(g, [0.0, 1.0, 0.0])


# -- softmax / cross-entropy -----------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 7), elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(z):
    s = ops.softmax(Tensor(z)).data
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("c", [2, 10, 37])
def test_cross_entropy_uniform_logits(c):
    ce = ops.cross_entropy(Tensor(np.zeros((3, c))), np.array([0, 1, c - 1])).item()
    assert abs(ce - np.log(c)) < 1e-12


# -- optimizer -----------------------------------------------------------------

def test_optimizer_zero_gradient_keeps_params():
    p = np.array([1.0, -2.0])
    for kind in ("sgd", "adam"):
        (out,), _ = optimizer_step([p], [np.zeros(2)], OptimConfig(kind, lr=0.1))
        np.testing.assert_array_equal(out, p)


def test_optimizer_plain_descent():
    (out,), _ = optimizer_step([np.array(0.0)], [np.array(1.0)], OptimConfig("sgd", lr=0.1))
    assert out == pytest.approx(-0.1)


def test_optimizer_quadratic_convergence():
    x = Tensor(np.array(0.0), requires_grad=True)
    opt = Optimizer([x], OptimConfig("adam", lr=0.1))
    for _ in range(200):
        opt.step(grad((x - 3.0) * (x - 3.0), [x]))
    assert abs(x.item() - 3.0) < 1e-3


def test_optimizer_rejects_nonfinite_gradient():
    x = Tensor(np.zeros(2), requires_grad=True, name="theta")
    with pytest.raises(NonFiniteError, match=r"theta.*node"):
        Optimizer([x]).step([np.array([np.nan, 0.0])])


def test_optimizer_deterministic():
    rng = np.random.default_rng(0)
    p, g = rng.standard_normal(5), rng.standard_normal(5)
    a, sa = optimizer_step([p], [g], OptimConfig())
    b, sb = optimizer_step([p], [g], OptimConfig())
    assert a[0].tobytes() == b[0].tobytes()
    c, _ = optimizer_step(a, [g], OptimConfig(), sa)
    d, _ = optimizer_step(b, [g], OptimConfig(), sb)
    assert c[0].tobytes() == d[0].tobytes()


# -- serialization -------------------------------------------------------------

def test_tensor_container_layout():
    raw = tensor_bytes(np.arange(6.0).reshape(2, 3))
    assert raw[:4] == b"FFTN"
    assert np.frombuffer(raw[4:12], "<u4").tolist()[1] == 2
    assert np.frombuffer(raw[12:28], "<u8").tolist() == [2, 3]
    assert np.frombuffer(raw[28:], "<f8").tolist() == list(range(6))


def test_tensor_roundtrip(tmp_path):
    x = np.random.default_rng(0).standard_normal((2, 3, 4))
    save_tensor(tmp_path / "x.fftn", x)
    assert load_tensor(tmp_path / "x.fftn").tobytes() == x.tobytes()


def test_bundle_checksum(tmp_path):
    path = tmp_path / "b.ffck"
    save_bundle(path, "demo", {"a": 1}, {"w": np.ones(3)})
    header, tensors = load_bundle(path, kind="demo")
    assert header == {"a": 1} and tensors["w"].tolist() == [1, 1, 1]
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(ChecksumError):
        load_bundle(path)
    path.write_bytes(b"XXXX" + b"\0" * 60)
    with pytest.raises(FormatError):
        load_bundle(path)
