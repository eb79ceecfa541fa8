import itertools

import numpy as np
import pytest

from quantcurve.errors import DomainError
from quantcurve.kernel import FAMILIES, KernelSpec, kernel_quadrature, kernel_value, local_weights

GL_NODES = 64


def tensor_gl(d, n=GL_NODES):
    t, w = np.polynomial.legendre.leggauss(n)
    pts = np.array(list(itertools.product(t, repeat=d)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=d))), axis=1)
    return pts, wts


def ball_integral(k, d, n=GL_NODES):
    """Tensor Gauss-Legendre in polar/spherical coordinates (the ball indicator
    is not smooth on the cube)."""
    t, w = np.polynomial.legendre.leggauss(n)
    r, wr = 0.5 * (t + 1), 0.5 * w
    if d == 1:
        pts, wts = tensor_gl(1, n)
        return float(np.sum(wts * kernel_value(k, pts)))
    phi, wphi = np.pi * (t + 1), np.pi * w
    if d == 2:
        R, P = np.meshgrid(r, phi, indexing="ij")
        W = np.outer(wr, wphi) * R
        z = np.stack([R * np.cos(P), R * np.sin(P)], axis=-1).reshape(-1, 2)
        return float(np.sum(W.ravel() * kernel_value(k, 0.999999 * z)))
    th, wth = 0.5 * np.pi * (t + 1), 0.5 * np.pi * w
    R, T, P = np.meshgrid(r, th, phi, indexing="ij")
    W = (wr[:, None, None] * wth[None, :, None] * wphi[None, None, :]) * R**2 * np.sin(T)
    z = np.stack([R * np.sin(T) * np.cos(P), R * np.sin(T) * np.sin(P), R * np.cos(T)], axis=-1).reshape(-1, 3)
    return float(np.sum(W.ravel() * kernel_value(k, 0.999999 * z)))


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("d", [1, 2, 3])
def test_kernel_integrates_to_one(family, d):
    k = KernelSpec(family, d)
    if family == "uniform-ball":
        total = ball_integral(k, d)
    else:
        pts, wts = tensor_gl(d, GL_NODES if d < 3 else 32)
        total = float(np.sum(wts * kernel_value(k, pts)))
    assert abs(total - 1.0) <= 1e-4


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("d", [1, 2, 3])
def test_package_quadrature_integrates_to_one(family, d):
    z, w = kernel_quadrature(KernelSpec(family, d))
    assert abs(w.sum() - 1.0) <= 1e-6
    assert np.all(w >= 0)


def test_kernel_value_examples():
    assert kernel_value(KernelSpec("uniform-ball", 1), [0.0]) == 0.5
    assert kernel_value(KernelSpec("epanechnikov-product", 1), [1.0]) == 0.0
    assert kernel_value(KernelSpec("epanechnikov-product", 2), [0.0, 0.0]) == pytest.approx(0.5625, abs=1e-15)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("d", [1, 2, 3])
def test_nonnegative_and_compact(family, d):
    k = KernelSpec(family, d)
    z = np.random.default_rng(d).uniform(-1.6, 1.6, size=(100_000, d))
    vals = kernel_value(k, z)
    assert np.all(vals >= 0)
    outside = np.linalg.norm(z, axis=1) > 1 if family == "uniform-ball" else np.max(np.abs(z), axis=1) > 1
    assert np.all(vals[outside] == 0)


def test_positive_on_open_unit_ball():
    for family in FAMILIES:
        k = KernelSpec(family, 2)
        rng = np.random.default_rng(3)
        z = rng.normal(size=(5000, 2))
        z *= (0.999 * rng.uniform(size=(5000, 1)) / np.linalg.norm(z, axis=1, keepdims=True))
        assert np.all(kernel_value(k, z) > 0)


def test_lipschitz_flag():
    assert KernelSpec("uniform-ball", 1).diagnostics == ["non-Lipschitz"]
    assert KernelSpec("epanechnikov-product", 1).lipschitz


def test_unknown_family():
    with pytest.raises(DomainError):
        KernelSpec("gaussian", 1)


def test_local_weights_examples():
    k = KernelSpec("uniform-ball", 2)
    X = np.tile([0.3, -0.2], (5, 1))
    w, active = local_weights(k, X, [0.3, -0.2], 0.1)
    np.testing.assert_array_equal(w, np.full(5, 1 / np.pi))
    k1 = KernelSpec("uniform-ball", 1)
    w, active = local_weights(k1, np.full((4, 1), 0.7), [0.7], 0.2)
    np.testing.assert_array_equal(w, 0.5)
    w, active = local_weights(k1, np.array([[2.0], [-3.0]]), [0.0], 0.5)
    assert np.all(w == 0) and active.size == 0


def test_local_weights_match_pointwise():
    k = KernelSpec("triweight-product", 2)
    rng = np.random.default_rng(5)
    X = rng.uniform(-1, 1, size=(300, 2))
    x, h = np.array([0.1, 0.2]), 0.4
    w, active = local_weights(k, X, x, h)
    ref = np.array([kernel_value(k, (X[i] - x) / h) for i in range(300)])
    np.testing.assert_array_equal(w, ref)
    np.testing.assert_array_equal(active, np.flatnonzero(ref > 0))


def test_local_weights_bad_bandwidth():
    with pytest.raises(DomainError):
        local_weights(KernelSpec(), np.zeros((2, 1)), [0.0], 0.0)


def test_graded_panels_integrate_kink_exactly():
    k = KernelSpec("epanechnikov-product", 1)
    z, w = kernel_quadrature(k, 64, kinks=[[0.0]])
    # int |z|^{3/2} (3/4)(1 - z^2) dz = 3/2 (2/5 - 2/9)
    assert np.sum(w * np.abs(z[:, 0]) ** 1.5) == pytest.approx(1.5 * (2 / 5 - 2 / 9), rel=1e-12)
