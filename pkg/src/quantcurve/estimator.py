"""Local polynomial conditional quantile estimator.

``fit_at`` solves the kernel-weighted check-loss problem at one evaluation
point ``theta = (alpha, h, x)``; ``fit_grid`` sweeps a grid of such points.
Coefficients are computed in the standardized parameterization
``B = H(h) b`` and reported in both scales.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basis import BasisSpec, as_multi_index, eval_basis, scaling_matrix
from .errors import DomainError, EmptyWindowError
from .kernel import SUPPORT_RADIUS, KernelSpec, local_weights
from .qr_solver import SolverOptions, SolverResult, WeightedQRProblem, solve_weighted_qr

THREADS_ENV = "QUANTCURVE_THREADS"


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise DomainError(f"x has shape {x.shape} but y has {y.shape[0]} rows")
        if y.shape[0] < 1:
            raise DomainError("sample must contain at least one observation")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DomainError("sample contains non-finite values")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class EvalPoint:
    alpha: float
    h: float
    x: tuple

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (np.isfinite(self.h) and self.h > 0):
            raise DomainError(f"bandwidth h must be positive, got {self.h}")
        x = tuple(float(v) for v in np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "h", float(self.h))

    @property
    def d(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class LocalFit:
    theta: EvalPoint
    basis: BasisSpec = field(repr=False)
    coeffs_standardized: np.ndarray
    coeffs_natural: np.ndarray
    solver: SolverResult
    boundary: bool = False

    @property
    def quantile(self) -> float:
        """``Q_h(alpha | x)``, the intercept coefficient."""
        return float(self.coeffs_natural[0])


@dataclass(frozen=True)
class GridCell:
    theta: EvalPoint
    fit: LocalFit | None
    error: str | None = None


@dataclass(frozen=True)
class InnerRegion:
    """Axis-aligned box; evaluation points outside it are flagged ``boundary``."""

    lower: np.ndarray
    upper: np.ndarray

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    @classmethod
    def from_sample(cls, sample: Sample, margin: float) -> "InnerRegion":
        return cls(sample.x.min(axis=0) + margin, sample.x.max(axis=0) - margin)


def _check_dims(sample: Sample, theta: EvalPoint, basis: BasisSpec, kernel: KernelSpec):
    if not (basis.d == sample.d == theta.d == kernel.d):
        raise DomainError(
            f"dimension mismatch: sample d={sample.d}, x d={theta.d}, "
            f"basis d={basis.d}, kernel d={kernel.d}"
        )


def fit_at(
    sample: Sample,
    theta: EvalPoint,
    basis: BasisSpec,
    kernel: KernelSpec,
    opts: SolverOptions | None = None,
    region: InnerRegion | None = None,
) -> LocalFit:
    _check_dims(sample, theta, basis, kernel)
    w, active = local_weights(kernel, sample.x, theta.x, theta.h)
    if active.size == 0:
        raise EmptyWindowError(theta)
    z = (sample.x[active] - np.asarray(theta.x)) / theta.h
    problem = WeightedQRProblem(eval_basis(basis, z), sample.y[active], w[active], theta.alpha)
    result = solve_weighted_qr(problem, opts)
    B = result.coefficients
    natural = B / scaling_matrix(basis, theta.h)
    if region is None:
        region = InnerRegion.from_sample(sample, theta.h * SUPPORT_RADIUS)
    return LocalFit(
        theta=theta,
        basis=basis,
        coeffs_standardized=B,
        coeffs_natural=natural,
        solver=result,
        boundary=not region.contains(theta.x),
    )


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        k = int(raw)
    except ValueError:
        raise DomainError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if k < 0:
        raise DomainError(f"{THREADS_ENV} must be >= 0, got {k}")
    return k or min(8, os.cpu_count() or 1)


def grid_points(alphas: Sequence[float], hs: Sequence[float], xs: Sequence) -> list[EvalPoint]:
    """Evaluation points in output order: alpha outermost, then h, then x."""
    if not len(alphas) or not len(hs) or not len(xs):
        raise DomainError("alpha, h and x grids must all be nonempty")
    return [EvalPoint(a, h, x) for a in alphas for h in hs for x in xs]


def fit_grid(
    sample: Sample,
    alphas: Sequence[float],
    hs: Sequence[float],
    xs: Sequence,
    basis: BasisSpec,
    kernel: KernelSpec,
    opts: SolverOptions | None = None,
    region: InnerRegion | None = None,
    threads: int | None = None,
) -> list[GridCell]:
    """Fit every ``(alpha, h, x)`` combination; failures are recorded per cell."""
    points = grid_points(alphas, hs, xs)
    if region is None:
        region = InnerRegion.from_sample(sample, max(hs) * SUPPORT_RADIUS)

    def one(theta):
        try:
            return GridCell(theta, fit_at(sample, theta, basis, kernel, opts, region))
        except (EmptyWindowError, DomainError, np.linalg.LinAlgError) as exc:
            return GridCell(theta, None, f"{type(exc).__name__}: {exc}")

    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(points) == 1:
        return [one(t) for t in points]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, points))


def derivative(fit: LocalFit, v) -> float:
    """Estimate of the partial derivative of order ``v`` (natural scale)."""
    mi = as_multi_index(v, fit.basis.d)
    if mi.degree > fit.basis.p:
        raise DomainError(f"|v| = {mi.degree} exceeds polynomial order p = {fit.basis.p}")
    return float(fit.coeffs_natural[fit.basis.position(mi)])
