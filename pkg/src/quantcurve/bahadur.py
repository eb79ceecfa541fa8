"""Bahadur decomposition of the local polynomial quantile estimator.

With ``B = H b`` and ``nh = n h^d``::

    S_i  = 2 {1(Y_i <= Q*(X_i)) - alpha} U(Z_i) K(Z_i)
    J_i  = 2 f(Q*(X_i) | X_i) U(Z_i) U(Z_i)' K(Z_i)
    beta = -(sum J_i / nh)^{-1} sum S_i / sqrt(nh)
    e_n  = sqrt(nh) (B_hat - B*) - beta

where ``Z_i = (X_i - x) / h`` and ``Q*(X_i) = U(Z_i)' B*``.  Ties
``Y_i = Q*(X_i)`` count as ``<=``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .basis import BasisSpec, eval_basis
from .dgp import Dgp
from .errors import SingularMatrixError
from .estimator import EvalPoint, LocalFit, Sample, fit_at
from .kernel import KernelSpec, kernel_quadrature, local_weights
from .population import PopulationFit, solve_population_foc

MIN_EIGENVALUE = 1e-10


@dataclass(frozen=True)
class BahadurParts:
    theta: EvalPoint
    score_sum: np.ndarray
    jbar: np.ndarray
    beta_n: np.ndarray
    e_n: np.ndarray
    jbar_min_eigenvalue: float
    scaled_error: np.ndarray


def _window(sample, theta, basis, kernel):
    w, active = local_weights(kernel, sample.x, theta.x, theta.h)
    z = (sample.x[active] - np.asarray(theta.x)) / theta.h
    return w[active], active, eval_basis(basis, z).reshape(active.size, basis.P)


def score_terms(dgp, sample: Sample, theta: EvalPoint, pop: PopulationFit, basis: BasisSpec, kernel: KernelSpec):
    """``(n, P)`` array whose rows are ``S_i``; rows outside the window are zero."""
    out = np.zeros((sample.n, basis.P))
    w, active, U = _window(sample, theta, basis, kernel)
    qstar = U @ pop.b_star_standardized
    ind = (sample.y[active] <= qstar).astype(float)
    out[active] = (2.0 * (ind - theta.alpha) * w)[:, None] * U
    return out


def j_terms(dgp: Dgp, sample: Sample, theta: EvalPoint, pop: PopulationFit, basis: BasisSpec, kernel: KernelSpec):
    """``(n, P, P)`` array of ``J_i``; zero outside the window."""
    out = np.zeros((sample.n, basis.P, basis.P))
    w, active, U = _window(sample, theta, basis, kernel)
    qstar = U @ pop.b_star_standardized
    dens = dgp.conditional_pdf(qstar, sample.x[active])
    out[active] = (2.0 * dens * w)[:, None, None] * U[:, :, None] * U[:, None, :]
    return out


def _sums(dgp, sample, theta, pop, basis, kernel):
    w, active, U = _window(sample, theta, basis, kernel)
    qstar = U @ pop.b_star_standardized
    ind = (sample.y[active] <= qstar).astype(float)
    dens = dgp.conditional_pdf(qstar, sample.x[active])
    score = U.T @ (2.0 * (ind - theta.alpha) * w)
    jsum = (U * (2.0 * dens * w)[:, None]).T @ U
    return score, jsum


def limit_jbar(dgp: Dgp, theta: EvalPoint, pop: PopulationFit, basis: BasisSpec, kernel: KernelSpec, nodes=None):
    """Large-sample limit ``2 f(Q*(x) | x) f(x) int U U' K`` of ``jbar``.

    ``f(x)`` is the covariate density; it enters because ``jbar`` averages
    over the design.
    """
    z, wk = kernel_quadrature(kernel, nodes)
    U = eval_basis(basis, z)
    x = np.asarray(theta.x)
    dens = float(np.ravel(dgp.conditional_pdf(pop.b_star_standardized[0], x))[0])
    fx = float(np.ravel(dgp.marginal_pdf(x))[0])
    return 2.0 * dens * fx * (U * wk[:, None]).T @ U


def decompose(
    dgp: Dgp,
    sample: Sample,
    theta: EvalPoint,
    basis: BasisSpec,
    kernel: KernelSpec,
    fit: LocalFit | None = None,
    pop: PopulationFit | None = None,
) -> BahadurParts:
    pop = pop or solve_population_foc(dgp, theta, basis, kernel)
    fit = fit or fit_at(sample, theta, basis, kernel)
    nh = sample.n * theta.h**basis.d
    score, jsum = _sums(dgp, sample, theta, pop, basis, kernel)
    score_sum = score / np.sqrt(nh)
    jbar = jsum / nh
    jbar = 0.5 * (jbar + jbar.T)
    min_eig = float(np.linalg.eigvalsh(jbar)[0]) if jbar.size else 0.0
    if min_eig <= MIN_EIGENVALUE:
        raise SingularMatrixError(theta, min_eig)
    try:
        factor = cho_factor(jbar)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(theta, min_eig) from None
    beta = -cho_solve(factor, score_sum)
    scaled = np.sqrt(nh) * (fit.coeffs_standardized - pop.b_star_standardized)
    return BahadurParts(
        theta=theta,
        score_sum=score_sum,
        jbar=jbar,
        beta_n=beta,
        e_n=scaled - beta,
        jbar_min_eigenvalue=min_eig,
        scaled_error=scaled,
    )


def plugin_beta(sample: Sample, fit: LocalFit, q_hat: float, basis: BasisSpec, kernel: KernelSpec) -> np.ndarray:
    """Leading Bahadur term on real data (plug-in, no oracle).

    ``Q*`` is replaced by the fitted local polynomial and ``f(Q*|X_i)`` by the
    constant ``1 / q_hat``.
    """
    theta = fit.theta
    w, active, U = _window(sample, theta, basis, kernel)
    qfit = U @ fit.coeffs_standardized
    ind = (sample.y[active] <= qfit).astype(float)
    nh = sample.n * theta.h**basis.d
    score = U.T @ (2.0 * (ind - theta.alpha) * w) / np.sqrt(nh)
    jbar = (U * (2.0 * w / q_hat)[:, None]).T @ U / nh
    return -np.linalg.solve(jbar, score)
