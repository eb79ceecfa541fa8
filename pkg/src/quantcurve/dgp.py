"""Synthetic data-generating processes with closed-form quantile functions.

Every shipped model is of location-scale form

    Y = m(X) + sigma(X) * eps,   X ~ U([-1, 1]^d),   eps independent of X,

so ``Q(alpha|x) = m(x) + sigma(x) G^{-1}(alpha)`` with ``G`` the noise CDF and
every partial derivative of ``Q`` in ``x`` is ``D^v m + D^v sigma * G^{-1}(alpha)``.

Names and parameters
--------------------
``location-linear``     m = a + b x (a=0.5, b=2), Gaussian noise.
``signed-sqrt``         m = sign(x) |x|^{1/2}, Gaussian noise; Hoelder 1/2 at 0.
``location-sin``        m = sin(omega x) (omega=2), Gaussian noise.
``heteroskedastic``     m = sin(omega x), sigma = 1 + x^2, Gaussian noise.
``additive-2d``         m = sin(omega x1) + c x2^2 (c=0.5), d=2, Gaussian noise.
``uniform-noise``       m = a + b x, U[0, 1] noise so q(alpha|x) = 1.  Its
                        conditional density vanishes off the noise support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from .basis import MultiIndex, as_multi_index
from .errors import DomainError
from .estimator import Sample

Deriv = Callable[[MultiIndex, np.ndarray], np.ndarray]


def _norm_pdf(t):
    return np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)


_NOISES = {
    "gaussian": (ndtr, _norm_pdf, ndtri),
    "uniform": (
        lambda t: np.clip(t, 0.0, 1.0),
        lambda t: ((t >= 0.0) & (t <= 1.0)).astype(float),
        lambda a: np.asarray(a, dtype=float),
    ),
}


@dataclass(frozen=True)
class Dgp:
    name: str
    d: int
    m_deriv: Deriv = field(repr=False)
    sigma_deriv: Deriv = field(repr=False)
    smoothness: float
    max_derivative: int
    noise: str = "gaussian"
    kinks: tuple = ()
    params: dict = field(default_factory=dict)

    def m(self, x):
        return self.m_deriv(MultiIndex((0,) * self.d), x)

    def sigma(self, x):
        return self.sigma_deriv(MultiIndex((0,) * self.d), x)

    def conditional_cdf(self, y, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        G = _NOISES[self.noise][0]
        return G((np.asarray(y, dtype=float) - self.m(x)) / self.sigma(x))

    def conditional_pdf(self, y, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        g = _NOISES[self.noise][1]
        s = self.sigma(x)
        return g((np.asarray(y, dtype=float) - self.m(x)) / s) / s

    def marginal_pdf(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        inside = np.all(np.abs(x) <= 1.0, axis=1)
        return np.where(inside, 0.5**self.d, 0.0)

    def quantile(self, alpha, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        Ginv = _NOISES[self.noise][2]
        return self.m(x) + self.sigma(x) * Ginv(alpha)

    def true_derivative(self, alpha, x, v) -> np.ndarray:
        """``D^v Q(alpha|x)`` for ``|v| <= max_derivative``."""
        mi = as_multi_index(v, self.d)
        if mi.degree > self.max_derivative:
            raise DomainError(
                f"{self.name}: derivative of order {mi.degree} is not available in closed form"
            )
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        Ginv = _NOISES[self.noise][2]
        return self.m_deriv(mi, x) + self.sigma_deriv(mi, x) * Ginv(alpha)

    def quantile_density(self, alpha, x):
        """``q(alpha|x) = dQ/dalpha = 1 / f(Q(alpha|x) | x)``."""
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        Ginv = _NOISES[self.noise][2]
        g = _NOISES[self.noise][1]
        return self.sigma(x) / g(Ginv(alpha))

    def simulate(self, n: int, x_rng: np.random.Generator, noise_rng: np.random.Generator) -> Sample:
        """Draw ``n`` observations; covariates and noise come from separate streams,
        so samples for increasing ``n`` are nested."""
        x = x_rng.uniform(-1.0, 1.0, size=(n, self.d))
        if self.noise == "gaussian":
            eps = noise_rng.standard_normal(n)
        else:
            eps = noise_rng.uniform(0.0, 1.0, size=n)
        return Sample(x, self.m(x) + self.sigma(x) * eps)

    def axis_kinks(self, x, h):
        """Kink positions in scaled coordinates ``(X - x) / h`` per axis."""
        out = []
        for j in range(self.d):
            ks = [k for axis, k in self.kinks if axis == j]
            out.append([(k - x[j]) / h for k in ks])
        return out


# ---------------------------------------------------------------------------
# derivative tables


def _constant_sigma(v: MultiIndex, x):
    return np.full(x.shape[0], 1.0 if v.degree == 0 else 0.0)


def _linear(a, b):
    def deriv(v, x):
        k = v.degree
        if k == 0:
            return a + b * x[:, 0]
        return np.full(x.shape[0], b if k == 1 else 0.0)

    return deriv


def _sin(omega, axis=0):
    # k-th derivative of sin(omega t) is omega^k sin(omega t + k pi / 2)
    def deriv1(k, t):
        return omega**k * np.sin(omega * t + 0.5 * k * math.pi)

    def deriv(v, x):
        return deriv1(v.degree, x[:, axis])

    return deriv, deriv1


def _signed_sqrt(v, x):
    if v.degree > 0:
        raise DomainError("signed-sqrt regression function is not differentiable at 0")
    t = x[:, 0]
    return np.sign(t) * np.sqrt(np.abs(t))


def _one_plus_square(v, x):
    t = x[:, 0]
    k = v.degree
    if k == 0:
        return 1.0 + t * t
    if k == 1:
        return 2.0 * t
    if k == 2:
        return np.full_like(t, 2.0)
    return np.zeros_like(t)


def _additive(omega, c):
    _, s1 = _sin(omega)

    def deriv(v, x):
        a, b = v.components
        if a > 0 and b > 0:
            return np.zeros(x.shape[0])
        if b == 0:
            base = s1(a, x[:, 0])
            return base + (c * x[:, 1] ** 2 if a == 0 else 0.0)
        if b == 1:
            return 2.0 * c * x[:, 1]
        if b == 2:
            return np.full(x.shape[0], 2.0 * c)
        return np.zeros(x.shape[0])

    return deriv


def location_linear(a: float = 0.5, b: float = 2.0) -> Dgp:
    return Dgp("location-linear", 1, _linear(a, b), _constant_sigma, math.inf, 10,
               params={"a": a, "b": b})


def signed_sqrt() -> Dgp:
    return Dgp("signed-sqrt", 1, _signed_sqrt, _constant_sigma, 0.5, 0, kinks=((0, 0.0),))


def location_sin(omega: float = 2.0) -> Dgp:
    return Dgp("location-sin", 1, _sin(omega)[0], _constant_sigma, math.inf, 10,
               params={"omega": omega})


def heteroskedastic(omega: float = 2.0) -> Dgp:
    m = _sin(omega)[0]
    return Dgp("heteroskedastic", 1, m, _one_plus_square, math.inf, 10, params={"omega": omega})


def additive_2d(omega: float = 2.0, c: float = 0.5) -> Dgp:
    return Dgp("additive-2d", 2, _additive(omega, c), _constant_sigma, math.inf, 10,
               params={"omega": omega, "c": c})


def uniform_noise(a: float = 0.5, b: float = 2.0) -> Dgp:
    return Dgp("uniform-noise", 1, _linear(a, b), _constant_sigma, math.inf, 10,
               noise="uniform", params={"a": a, "b": b})


REGISTRY = {
    "location-linear": location_linear,
    "signed-sqrt": signed_sqrt,
    "location-sin": location_sin,
    "heteroskedastic": heteroskedastic,
    "additive-2d": additive_2d,
    "uniform-noise": uniform_noise,
}


def get_dgp(name: str, **params) -> Dgp:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise DomainError(f"unknown DGP {name!r}; choose from {sorted(REGISTRY)}") from None
    return factory(**params)
