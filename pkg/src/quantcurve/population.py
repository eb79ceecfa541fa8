"""Population pseudo-true coefficients ``b*(alpha; h, x)``.

For a synthetic DGP the standardized coefficients ``B* = H b*`` solve

    G(B) = int {F(U(z)'B | x + h z) - alpha} f(x + h z) U(z) K(z) dz = 0,

with Jacobian ``int f(U(z)'B | x + h z) f(x + h z) U(z) U(z)' K(z) dz``.
The integrals are discretized with the kernel quadrature rule (panels split
and graded at kinks of the regression function) and the discrete system is
solved by damped Newton iterations started at ``(Q(alpha|x), 0, ..., 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, as_multi_index, eval_basis, scaling_matrix
from .dgp import Dgp
from .errors import ConvergenceError, DomainError
from .estimator import EvalPoint
from .kernel import KernelSpec, kernel_quadrature

MAX_NEWTON_STEPS = 100
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class PopulationFit:
    theta: EvalPoint
    b_star_standardized: np.ndarray
    b_star_natural: np.ndarray
    residual_norm: float
    iterations: int
    jacobian: np.ndarray

    @property
    def quantile(self) -> float:
        return float(self.b_star_natural[0])


class FocSystem:
    """Discretized first-order condition at one evaluation point."""

    def __init__(self, dgp: Dgp, theta: EvalPoint, basis: BasisSpec, kernel: KernelSpec, nodes=None):
        if not (dgp.d == basis.d == kernel.d == theta.d):
            raise DomainError("dimension mismatch between DGP, basis, kernel and x")
        self.dgp, self.theta = dgp, theta
        x = np.asarray(theta.x, dtype=float)
        z, wk = kernel_quadrature(kernel, nodes, kinks=dgp.axis_kinks(x, theta.h))
        pts = x[None, :] + theta.h * z
        fx = dgp.marginal_pdf(pts)
        keep = (wk * fx) > 0
        self.points = pts[keep]
        self.U = eval_basis(basis, z[keep])
        self.mass = (wk * fx)[keep]

    def residual(self, B):
        F = self.dgp.conditional_cdf(self.U @ B, self.points)
        return self.U.T @ (self.mass * (F - self.theta.alpha))

    def jacobian(self, B):
        f = self.dgp.conditional_pdf(self.U @ B, self.points)
        return (self.U * (self.mass * f)[:, None]).T @ self.U


def solve_population_foc(
    dgp: Dgp,
    theta: EvalPoint,
    basis: BasisSpec,
    kernel: KernelSpec,
    nodes: int | None = None,
    tol: float = RESIDUAL_TOL,
) -> PopulationFit:
    system = FocSystem(dgp, theta, basis, kernel, nodes)
    B = np.zeros(basis.P)
    B[0] = float(np.ravel(dgp.quantile(theta.alpha, np.asarray(theta.x)))[0])
    G = system.residual(B)
    norm = np.max(np.abs(G))
    converged_once = False
    for it in range(1, MAX_NEWTON_STEPS + 1):
        J = system.jacobian(B)
        try:
            step = np.linalg.solve(J, -G)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian in population FOC", B, norm) from None
        t = 1.0
        while True:
            trial = B + t * step
            Gt = system.residual(trial)
            nt = np.max(np.abs(Gt))
            if nt < norm or t < 1e-12:
                break
            t *= 0.5
        if nt >= norm:
            # no further decrease possible: at the floating-point floor
            if norm <= tol:
                break
            raise ConvergenceError("damped Newton stalled in population FOC", B, norm)
        small = np.max(np.abs(trial - B)) <= 1e-14 * (1.0 + np.max(np.abs(B)))
        B, G, norm = trial, Gt, nt
        if norm <= tol:
            # one extra full step to reach the floating-point floor
            if converged_once or small:
                break
            converged_once = True
    else:
        if norm > tol:
            raise ConvergenceError(
                f"population FOC did not converge in {MAX_NEWTON_STEPS} steps", B, norm
            )
    J = system.jacobian(B)
    return PopulationFit(
        theta=theta,
        b_star_standardized=B,
        b_star_natural=B / scaling_matrix(basis, theta.h),
        residual_norm=float(norm),
        iterations=it,
        jacobian=J,
    )


def population_bias(dgp: Dgp, theta: EvalPoint, basis: BasisSpec, kernel: KernelSpec, v, nodes=None) -> float:
    """``b*_v(theta) - b_v(alpha|x)`` in natural scale."""
    mi = as_multi_index(v, basis.d)
    pop = solve_population_foc(dgp, theta, basis, kernel, nodes)
    truth = float(np.ravel(dgp.true_derivative(theta.alpha, np.asarray(theta.x), mi))[0])
    return float(pop.b_star_natural[basis.position(mi)]) - truth
