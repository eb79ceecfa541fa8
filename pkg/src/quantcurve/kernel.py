"""Compactly supported nonnegative kernels and kernel quadrature rules.

Families
--------
``uniform-ball``
    Constant ``1 / vol(B_d)`` on the closed unit ball.  Not Lipschitz; kept
    because the sharp-divergence constant is classically stated for it.
``epanechnikov-product``
    ``prod_j 3/4 (1 - z_j^2)`` on ``[-1, 1]^d``.  The default.
``triweight-product``
    ``prod_j 35/32 (1 - z_j^2)^3`` on ``[-1, 1]^d``.

Product families vanish on the faces of the cube, so the lower bound on the
closed unit ball only holds on balls of radius ``r < 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, roots_legendre

from .errors import DomainError

FAMILIES = ("uniform-ball", "epanechnikov-product", "triweight-product")
DEFAULT_FAMILY = "epanechnikov-product"
SUPPORT_RADIUS = 1.0

_PRODUCT_FACTORS = {
    "epanechnikov-product": lambda t: 0.75 * (1.0 - t * t),
    "triweight-product": lambda t: (35.0 / 32.0) * (1.0 - t * t) ** 3,
}


def _ball_volume(d: int) -> float:
    return math.exp(0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0))


@dataclass(frozen=True)
class KernelSpec:
    family: str = DEFAULT_FAMILY
    d: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown kernel family {self.family!r}; choose from {FAMILIES}")
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"kernel dimension must be a positive integer, got {self.d}")
        if self.d <= 3:
            total = _integral(self.family, int(self.d))
            if abs(total - 1.0) > 1e-6:
                raise RuntimeError(f"kernel {self.family} (d={self.d}) integrates to {total}")

    @property
    def lipschitz(self) -> bool:
        return self.family != "uniform-ball"

    @property
    def diagnostics(self) -> list[str]:
        return [] if self.lipschitz else ["non-Lipschitz"]

    def __call__(self, z):
        return kernel_value(self, z)


def kernel_value(k: KernelSpec, z) -> np.ndarray | float:
    """Kernel density at ``z`` (a ``d``-vector or an ``(m, d)`` array)."""
    z = np.asarray(z, dtype=float)
    single = z.ndim <= 1
    z = z.reshape(-1, k.d)
    if k.family == "uniform-ball":
        inside = np.einsum("ij,ij->i", z, z) <= 1.0
        out = np.where(inside, 1.0 / _ball_volume(k.d), 0.0)
    else:
        inside = np.all(np.abs(z) < 1.0, axis=1)
        factors = _PRODUCT_FACTORS[k.family](np.clip(z, -1.0, 1.0))
        out = np.where(inside, np.prod(factors, axis=1), 0.0)
    return float(out[0]) if single else out


def local_weights(k: KernelSpec, sample_x, x, h: float):
    """Weights ``K((X_i - x) / h)`` and the indices where they are positive."""
    if not np.isfinite(h) or h <= 0:
        raise DomainError(f"bandwidth must be positive, got {h}")
    sample_x = np.asarray(sample_x, dtype=float).reshape(-1, k.d)
    z = (sample_x - np.asarray(x, dtype=float).reshape(1, k.d)) / h
    w = kernel_value(k, z)
    return w, np.flatnonzero(w > 0.0)


# ---------------------------------------------------------------------------
# quadrature


def _gl01(n: int):
    t, w = roots_legendre(n)
    return 0.5 * (t + 1.0), 0.5 * w


def panel_rule(breaks, n: int, graded=()):
    """Composite Gauss-Legendre rule over consecutive panels of ``breaks``.

    Panels touching a point listed in ``graded`` use the substitution
    ``z = a + (b - a) u^2`` so that ``sqrt``-type kinks there are integrated
    to near machine precision.
    """
    u, wu = _gl01(n)
    nodes, weights = [], []
    graded = np.asarray(graded, dtype=float)
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        ga = graded.size and np.any(np.isclose(graded, a, rtol=0, atol=1e-14))
        gb = graded.size and np.any(np.isclose(graded, b, rtol=0, atol=1e-14))
        if ga and gb:
            mid = 0.5 * (a + b)
            sub = [(a, mid, "left"), (mid, b, "right")]
        elif ga:
            sub = [(a, b, "left")]
        elif gb:
            sub = [(a, b, "right")]
        else:
            sub = [(a, b, None)]
        for lo, hi, side in sub:
            L = hi - lo
            if side == "left":
                nodes.append(lo + L * u * u)
                weights.append(wu * 2.0 * L * u)
            elif side == "right":
                nodes.append(hi - L * u * u)
                weights.append(wu * 2.0 * L * u)
            else:
                nodes.append(lo + L * u)
                weights.append(wu * L)
    return np.concatenate(nodes), np.concatenate(weights)


def default_nodes(d: int) -> int:
    return {1: 64, 2: 32}.get(d, 16)


def kernel_quadrature(k: KernelSpec, n: int | None = None, kinks=None):
    """Nodes ``z`` (``(N, d)``) and weights already multiplied by ``K(z)``.

    ``kinks`` is an optional per-axis list of scaled coordinates in
    ``(-1, 1)`` where the integrand is not smooth; those axes are split
    there and graded toward the kink.  Ball kernels in ``d >= 2`` use
    polar/spherical coordinates and ignore ``kinks``.
    """
    n = default_nodes(k.d) if n is None else int(n)
    if k.family == "uniform-ball" and k.d >= 2:
        return _ball_rule(k.d, n)
    axes = []
    for j in range(k.d):
        pts = [] if kinks is None else [c for c in kinks[j] if -1.0 < c < 1.0]
        breaks = np.unique(np.concatenate([[-1.0, 1.0], pts]))
        t, w = panel_rule(breaks, n, graded=pts)
        if k.family == "uniform-ball":
            w = w * 0.5
        else:
            w = w * _PRODUCT_FACTORS[k.family](t)
        axes.append((t, w))
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return z, w


def _ball_rule(d: int, n: int):
    r, wr = _gl01(n)
    dens = 1.0 / _ball_volume(d)
    if d == 2:
        th, wth = _gl01(n)
        th, wth = 2 * np.pi * th, 2 * np.pi * wth
        R, T = np.meshgrid(r, th, indexing="ij")
        W = np.outer(wr * r, wth)
        z = np.stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()], axis=1)
        return z, dens * W.ravel()
    if d == 3:
        th, wth = _gl01(n)
        th, wth = np.pi * th, np.pi * wth
        ph, wph = _gl01(n)
        ph, wph = 2 * np.pi * ph, 2 * np.pi * wph
        R, T, F = np.meshgrid(r, th, ph, indexing="ij")
        W = (wr * r * r)[:, None, None] * (wth * np.sin(th))[None, :, None] * wph[None, None, :]
        z = np.stack(
            [
                (R * np.sin(T) * np.cos(F)).ravel(),
                (R * np.sin(T) * np.sin(F)).ravel(),
                (R * np.cos(T)).ravel(),
            ],
            axis=1,
        )
        return z, dens * W.ravel()
    # d >= 4: tensor rule on the cube with the indicator; low accuracy
    t, w = _gl01(n)
    t, w = 2 * t - 1, 2 * w
    grids = np.meshgrid(*([t] * d), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), axis=0).reshape(d, -1), axis=0)
    inside = np.einsum("ij,ij->i", z, z) <= 1.0
    return z[inside], dens * W[inside]


@lru_cache(maxsize=None)
def _integral(family: str, d: int) -> float:
    k = object.__new__(KernelSpec)
    object.__setattr__(k, "family", family)
    object.__setattr__(k, "d", d)
    _, w = kernel_quadrature(k, 64 if d <= 2 else 32)
    return float(w.sum())
