"""Conditional quantile density ``q(alpha|x) = dQ(alpha|x)/dalpha``.

The estimator convolves fitted quantiles with a discrete signed measure
``sum_j kappa_j delta_{t_j}``::

    q_hat(alpha|x) = (1 / h_q) sum_j kappa_j Q_hat_h(alpha + h_q t_j | x)

where ``sum kappa_j = 0``, ``sum t_j kappa_j = 1`` and ``sum t_j^m kappa_j = 0``
for ``m = 2..r``.  One-sided and central difference quotients are special
cases.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .basis import BasisSpec
from .errors import DomainError
from .estimator import EvalPoint, Sample, fit_at
from .kernel import KernelSpec, local_weights
from .qr_solver import SolverOptions

MOMENT_TOL = 1e-12
SCHEME_KINDS = ("forward", "backward", "central", "custom-nodes")

# exact weights for the textbook difference quotients
_CANONICAL = {
    ("forward", 1): ((0.0, -1.0), (1.0, 1.0)),
    ("backward", 1): ((-1.0, -1.0), (0.0, 1.0)),
    ("central", 2): ((-1.0, -0.5), (1.0, 0.5)),
}


def _target(m: int) -> float:
    return 1.0 if m == 1 else 0.0


@dataclass(frozen=True)
class QdScheme:
    nodes: tuple
    weights: tuple
    order: int
    kind: str = "custom-nodes"

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float)
        k = np.asarray(self.weights, dtype=float)
        if t.ndim != 1 or t.shape != k.shape or t.size == 0:
            raise DomainError("scheme needs matching, nonempty node and weight lists")
        if np.unique(t).size != t.size:
            raise DomainError("scheme nodes must be distinct")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(k))):
            raise DomainError("scheme nodes and weights must be finite")
        if self.order < 1:
            raise DomainError(f"scheme order must be >= 1, got {self.order}")
        object.__setattr__(self, "nodes", tuple(float(v) for v in t))
        object.__setattr__(self, "weights", tuple(float(v) for v in k))
        bad = self.moment_violations()
        if bad:
            raise DomainError("scheme violates moment conditions: " + "; ".join(bad))

    def moment_violations(self) -> list[str]:
        t = np.asarray(self.nodes)
        k = np.asarray(self.weights)
        out = []
        for m in range(self.order + 1):
            terms = k * t**m
            scale = max(1.0, float(np.sum(np.abs(terms))))
            err = abs(float(np.sum(terms)) - _target(m))
            if err > MOMENT_TOL * scale:
                out.append(f"moment {m} = {float(np.sum(terms)):.3g}, expected {_target(m):g}")
        return out

    def levels(self, alpha: float, h_q: float) -> np.ndarray:
        return alpha + h_q * np.asarray(self.nodes)


def _solve_weights(nodes, order):
    t = np.asarray(nodes, dtype=float)
    V = np.vander(t, order + 1, increasing=True).T
    rhs = np.array([_target(m) for m in range(order + 1)])
    if V.shape[0] == V.shape[1]:
        try:
            return np.linalg.solve(V, rhs)
        except np.linalg.LinAlgError:
            raise DomainError(f"singular node configuration {t.tolist()}") from None
    kappa, *_ = np.linalg.lstsq(V, rhs, rcond=None)
    if np.max(np.abs(V @ kappa - rhs)) > MOMENT_TOL * max(1.0, np.max(np.abs(V))):
        raise DomainError(f"nodes {t.tolist()} cannot satisfy moment conditions up to order {order}")
    return kappa


def make_scheme(kind: str = "central", order: int = 2, nodes: Sequence[float] | None = None) -> QdScheme:
    """Build a difference scheme.

    ``forward``/``backward`` use nodes ``0..r`` / ``-r..0``; ``central`` uses
    ``+-1, ..., +-ceil(r/2)``.  ``custom-nodes`` solves the Vandermonde moment
    system on the given nodes (least squares when there are more conditions
    than nodes, accepted only if the system is consistent).
    """
    if kind not in SCHEME_KINDS:
        raise DomainError(f"unknown scheme kind {kind!r}; choose from {SCHEME_KINDS}")
    order = int(order)
    if order < 1:
        raise DomainError(f"scheme order must be >= 1, got {order}")
    if (kind, order) in _CANONICAL:
        t, k = zip(*_CANONICAL[kind, order])
        return QdScheme(t, k, order, kind)
    if kind == "custom-nodes":
        if nodes is None:
            raise DomainError("custom-nodes scheme needs a node list")
        t = np.asarray(nodes, dtype=float)
    elif kind == "forward":
        t = np.arange(order + 1, dtype=float)
    elif kind == "backward":
        t = -np.arange(order, -1, -1, dtype=float) + 0.0
    else:
        half = math.ceil(order / 2)
        t = np.concatenate([-np.arange(half, 0, -1), np.arange(1, half + 1)]).astype(float)
    if np.unique(t).size != t.size:
        raise DomainError("scheme nodes must be distinct")
    return QdScheme(tuple(t), tuple(_solve_weights(t, order)), order, kind)


def apply_scheme(scheme: QdScheme, quantile: Callable[[float], float], alpha: float, h_q: float) -> float:
    """``(1/h_q) sum_j kappa_j quantile(alpha + h_q t_j)``."""
    if not h_q > 0:
        raise DomainError(f"h_q must be positive, got {h_q}")
    levels = scheme.levels(alpha, h_q)
    return float(sum(k * quantile(a) for k, a in zip(scheme.weights, levels)) / h_q)


def check_levels(scheme: QdScheme, alpha: float, h_q: float):
    levels = scheme.levels(alpha, h_q)
    bad = [float(a) for a in levels if not (0.0 < a < 1.0)]
    if bad:
        raise DomainError(f"scheme pushes quantile levels outside (0, 1): {bad}")


def fits_inside(scheme: QdScheme, alpha: float, h_q: float) -> bool:
    return bool(np.all((scheme.levels(alpha, h_q) > 0.0) & (scheme.levels(alpha, h_q) < 1.0)))


def one_sided_fallback(scheme: QdScheme, alpha: float, h_q: float) -> QdScheme:
    """Switch a central scheme to a one-sided one of the same order when its
    nodes would leave ``(0, 1)``; returns ``scheme`` unchanged otherwise."""
    if fits_inside(scheme, alpha, h_q) or scheme.kind != "central":
        return scheme
    kind = "forward" if alpha < 0.5 else "backward"
    # the canonical central scheme is second order, keep the same accuracy
    order = max(1, scheme.order)
    return make_scheme(kind, order)


def estimate_qd(
    sample: Sample,
    alpha: float,
    x,
    h: float,
    h_q: float,
    scheme: QdScheme,
    basis: BasisSpec,
    kernel: KernelSpec,
    opts: SolverOptions | None = None,
) -> float:
    check_levels(scheme, alpha, h_q)
    cache = {}

    def q_hat(a):
        if a not in cache:
            cache[a] = fit_at(sample, EvalPoint(a, h, x), basis, kernel, opts).quantile
        return cache[a]

    return apply_scheme(scheme, q_hat, alpha, h_q)


def auction_private_value(alpha: float, q_b_hat: float, Q_b_hat: float, bidders: int) -> float:
    """Private-value quantile ``Q_b + alpha q_b / (I - 1)`` for ``I`` bidders."""
    if int(bidders) != bidders or bidders < 2:
        raise DomainError(f"need at least two bidders, got {bidders}")
    if q_b_hat < 0:
        warnings.warn(f"negative bid quantile density {q_b_hat} at alpha={alpha}", stacklevel=2)
    return float(Q_b_hat + alpha * q_b_hat / (bidders - 1))


def kde_at(sample: Sample, x, h: float, kernel: KernelSpec) -> float:
    """Kernel density estimate ``(n h^d)^{-1} sum K((X_i - x)/h)``."""
    w, _ = local_weights(kernel, sample.x, x, h)
    return float(w.sum() / (sample.n * h**sample.d))


def asymptotic_variance(alpha: float, n: int, h: float, d: int, q_hat: float, f_x: float) -> float:
    """``alpha (1 - alpha) / (n h^d (1/q)^2 f(x))``, up to a kernel-dependent constant."""
    return float(alpha * (1.0 - alpha) * q_hat**2 / (n * h**d * f_x))
