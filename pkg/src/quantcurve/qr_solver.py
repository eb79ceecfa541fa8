"""Kernel-weighted check-loss minimization.

The weighted problem ``min_B sum_i w_i rho_alpha(Y_i - U_i'B)`` is solved as
the linear program

    min  sum_i w_i (alpha u_i + (1 - alpha) v_i)
    s.t. Y_i - U_i'B = u_i - v_i,  u, v >= 0

with a primal-dual (Frisch-Newton) interior-point method using Mehrotra's
predictor-corrector step.  The iterations run on the bounded dual

    max  (wY)'a   s.t. (wU)'a = (1 - alpha) (wU)'1,  0 <= a <= 1

whose multipliers are ``-B``.  The loss ``|q| + (2 alpha - 1) q`` is twice the
pinball loss ``rho_alpha``; both have the same minimizers and the
coefficients reported here carry no factor 2.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


class SolverStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    RANK_DEFICIENT = "rank-deficient-regularized"
    MAX_ITERATIONS = "max-iterations"


@dataclass(frozen=True)
class SolverOptions:
    gap: float = 1e-9
    max_iterations: int = 200
    stall_window: int = 10
    step_fraction: float = 0.99995
    purify: bool = True


@dataclass
class WeightedQRProblem:
    design: np.ndarray
    responses: np.ndarray
    weights: np.ndarray
    alpha: float

    def __post_init__(self):
        self.design = np.atleast_2d(np.asarray(self.design, dtype=float))
        self.responses = np.asarray(self.responses, dtype=float).ravel()
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        m = self.design.shape[0]
        if m < 1:
            raise DomainError("weighted QR problem needs at least one observation")
        if self.responses.shape[0] != m or self.weights.shape[0] != m:
            raise DomainError("design, responses and weights must have the same length")
        if not (
            np.all(np.isfinite(self.design))
            and np.all(np.isfinite(self.responses))
            and np.all(np.isfinite(self.weights))
        ):
            raise DomainError("non-finite entries in weighted QR problem")
        if np.any(self.weights <= 0):
            raise DomainError("weights must be strictly positive")
        _check_alpha(self.alpha)

    @property
    def m(self) -> int:
        return self.design.shape[0]

    @property
    def P(self) -> int:
        return self.design.shape[1]

    def objective(self, B) -> float:
        r = self.responses - self.design @ np.asarray(B, dtype=float)
        return float(np.sum(self.weights * pinball(self.alpha, r)))


@dataclass(frozen=True)
class SolverResult:
    coefficients: np.ndarray
    status: SolverStatus
    duality_gap: float
    iterations: int
    active_points: int
    objective: float

    @property
    def ok(self) -> bool:
        return self.status is SolverStatus.OPTIMAL


def _check_alpha(alpha):
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"quantile level must lie in (0, 1), got {alpha}")


def check_loss(alpha: float, q):
    """``|q| + (2 alpha - 1) q``, equal to ``2 q (alpha - 1{q <= 0})``."""
    _check_alpha(alpha)
    q = np.asarray(q, dtype=float)
    out = np.abs(q) + (2.0 * alpha - 1.0) * q
    return float(out) if out.ndim == 0 else out


def pinball(alpha: float, q):
    """Standard pinball loss ``q (alpha - 1{q < 0})``, half of :func:`check_loss`."""
    q = np.asarray(q, dtype=float)
    return q * (alpha - (q < 0))


def _step_length(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return 1e20
    return float(np.min(-x[neg] / dx[neg]))


def solve_weighted_qr(problem: WeightedQRProblem, opts: SolverOptions | None = None) -> SolverResult:
    opts = opts or SolverOptions()
    X = problem.design * problem.weights[:, None]
    y = problem.responses * problem.weights
    m, P = X.shape
    tau = problem.alpha

    rank = np.linalg.matrix_rank(X) if m >= P else m
    deficient = rank < P
    ridge = 0.0
    if deficient:
        ridge = 1e-8 * max(np.trace(X.T @ X), 1e-300) / P

    A = X.T
    c = -y
    b = (1.0 - tau) * X.sum(axis=0)
    ub = np.ones(m)
    x = np.full(m, 1.0 - tau)
    s = ub - x

    def solve_normal(M, rhs):
        if ridge:
            M = M + ridge * np.eye(P)
        try:
            return np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(M, rhs, rcond=None)[0]

    dual = solve_normal(A @ A.T, A @ c)
    r = c - A.T @ dual
    scale = float(np.sum(np.abs(y)))
    if scale == 0.0:
        scale = 1.0
    # strictly interior start; z - w = r is preserved
    shift = 1e-3 * max(float(np.mean(np.abs(r))), scale / m)
    z = np.maximum(r, 0.0) + shift
    w = np.maximum(-r, 0.0) + shift

    def gap_of(x, dual, w):
        return float(c @ x - dual @ b + w @ ub)

    gap = gap_of(x, dual, w)
    tol = opts.gap * scale
    it = 0
    best = (gap, dual.copy())
    history = [gap]
    status = SolverStatus.OPTIMAL
    beta = opts.step_fraction
    while gap > tol:
        if it >= opts.max_iterations:
            status = SolverStatus.MAX_ITERATIONS
            break
        if len(history) > opts.stall_window and history[-1] >= 0.999 * history[-1 - opts.stall_window]:
            status = SolverStatus.MAX_ITERATIONS
            break
        it += 1
        # affine (predictor) direction
        q = 1.0 / (z / x + w / s)
        r = z - w
        Q = A * q
        AQA = Q @ A.T
        rhs = Q @ r
        dy = solve_normal(AQA, rhs)
        dx = q * (A.T @ dy - r)
        ds = -dx
        dz = -z * (dx / x + 1.0)
        dw = -w * (ds / s + 1.0)
        fp = min(beta * min(_step_length(x, dx), _step_length(s, ds)), 1.0)
        fd = min(beta * min(_step_length(w, dw), _step_length(z, dz)), 1.0)
        if min(fp, fd) < 1.0:
            # Mehrotra corrector with adaptive centering
            mu = z @ x + w @ s
            g = (z + fd * dz) @ (x + fp * dx) + (w + fd * dw) @ (s + fp * ds)
            mu = mu * (g / mu) ** 3 / (2.0 * m)
            dxdz = dx * dz
            dsdw = ds * dw
            xinv = 1.0 / x
            sinv = 1.0 / s
            xi = mu * (xinv - sinv)
            rhs = rhs + Q @ (dxdz - dsdw - xi)
            dy = solve_normal(AQA, rhs)
            dx = q * (A.T @ dy + xi - r - dxdz + dsdw)
            ds = -dx
            dz = mu * xinv - z - xinv * z * dx - dxdz
            dw = mu * sinv - w - sinv * w * ds - dsdw
            fp = min(beta * min(_step_length(x, dx), _step_length(s, ds)), 1.0)
            fd = min(beta * min(_step_length(w, dw), _step_length(z, dz)), 1.0)
        x = x + fp * dx
        s = s + fp * ds
        dual = dual + fd * dy
        w = w + fd * dw
        z = z + fd * dz
        gap = gap_of(x, dual, w)
        history.append(gap)
        if gap < best[0]:
            best = (gap, dual.copy())

    if status is SolverStatus.MAX_ITERATIONS:
        gap, dual = best
    coef = -dual
    obj = problem.objective(coef)
    if deficient:
        status = SolverStatus.RANK_DEFICIENT
    elif opts.purify:
        coef, obj = _purify(problem, coef, obj)
    return SolverResult(
        coefficients=coef,
        status=status,
        duality_gap=max(gap, 0.0) / scale,
        iterations=it,
        active_points=m,
        objective=obj,
    )


def _purify(problem: WeightedQRProblem, coef, obj):
    """Move an interior optimum onto the nearest basic (vertex) solution.

    The ``P`` observations with the smallest residuals are interpolated
    exactly; the vertex replaces the interior point only if its objective is
    no larger.
    """
    U, Y = problem.design, problem.responses
    P = problem.P
    r = np.abs(Y - U @ coef)
    idx = np.sort(np.argsort(r, kind="stable")[:P])
    sub = U[idx]
    if np.linalg.cond(sub) > 1e12:
        return coef, obj
    cand = np.linalg.solve(sub, Y[idx])
    cobj = problem.objective(cand)
    if cobj <= obj + 1e-12 * max(abs(obj), 1e-300):
        return cand, cobj
    return coef, obj
