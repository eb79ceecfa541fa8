"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py``.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest
import sympy

sys.path.insert(0, str(Path(__file__).parent))

from oracles import brute_force_qr  # noqa: E402
from quantcurve.bahadur import score_terms  # noqa: E402
from quantcurve.basis import enumerate_indices  # noqa: E402
from quantcurve.cli import main as cli_main  # noqa: E402
from quantcurve.dgp import get_dgp  # noqa: E402
from quantcurve.estimator import EvalPoint  # noqa: E402
from quantcurve.kernel import KernelSpec  # noqa: E402
from quantcurve.mc_lab import COVARIATES, NOISE, RateExperiment, run_experiment, stream  # noqa: E402
from quantcurve.population import solve_population_foc  # noqa: E402
from quantcurve.qdensity import apply_scheme, auction_private_value, make_scheme  # noqa: E402
from quantcurve.qr_solver import WeightedQRProblem, solve_weighted_qr  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"
SEED = 20240611
HS = (0.4, 0.283, 0.2, 0.141, 0.1)
PHI0 = 0.3989422804014327


REPORT = []


def report(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}"
    REPORT.append(line)
    print(line)
    return passed


def check(number, title, passed, detail):
    assert report(number, title, passed, detail), detail


def epanechnikov_limit_closed_form():
    z = sympy.symbols("z", nonnegative=True)
    k = sympy.Rational(3, 4) * (1 - z**2)
    return sympy.integrate(z ** sympy.Rational(3, 2) * k, (z, 0, 1)) / sympy.integrate(z**2 * k, (z, 0, 1))


def test_criterion_01_solver_brute_force():
    rng = np.random.default_rng(SEED)
    start = time.perf_counter()
    worst, count = 0.0, 0
    while count < 100:
        m, P = int(rng.integers(1, 13)), int(rng.integers(1, 3))
        if m < P:
            continue
        design = np.column_stack([np.ones(m)] + [rng.uniform(-1, 1, m) for _ in range(P - 1)])
        y, w, a = rng.normal(size=m), rng.uniform(0.1, 2, m), rng.uniform(0.05, 0.95)
        best, _ = brute_force_qr(design, y, w, a)
        got = solve_weighted_qr(WeightedQRProblem(design, y, w, a)).objective
        worst = max(worst, abs(got - best) / max(best, 1e-300))
        count += 1
    elapsed = time.perf_counter() - start
    check(1, "solver vs brute-force basic solutions", worst <= 1e-8 and elapsed < 10,
          f"max relative objective gap {worst:.2e} on 100 problems in {elapsed:.2f}s")


def test_criterion_02_bias_order():
    start = time.perf_counter()
    smooth = run_experiment(RateExperiment("location-sin", "bias-order", hs=HS, p=3, smoothness=4, xs=((0.3,),)))
    rough = run_experiment(RateExperiment("signed-sqrt", "bias-order", hs=HS, p=1, tolerance=0.1,
                                          xs=((0.25,), (0.5,), (0.75,)), x_in_bandwidth_units=True))
    elapsed = time.perf_counter() - start
    ok = abs(smooth.slope - 4) <= 0.3 and abs(rough.slope - 0.5) <= 0.1 and elapsed < 60
    check(2, "oracle bias order", ok,
          f"location-sin p=3 slope {smooth.slope:.4f} (4 +- 0.3); signed-sqrt p=1 slope {rough.slope:.4f} "
          f"(0.5 +- 0.1); {elapsed:.1f}s")


def sharp(kernel):
    return run_experiment(RateExperiment("signed-sqrt", "sharp-divergence", hs=(0.1, 0.03, 0.01, 0.003, 0.001),
                                         kernel=kernel))


def test_criterion_03_sharp_constant_closed_form():
    uni, epa = sharp("uniform-ball"), sharp("epanechnikov-product")
    exact = float(epanechnikov_limit_closed_form())
    u = uni.extras["scaled_at_smallest_h"]
    e = epa.extras["scaled_at_smallest_h"]
    ok = (abs(u / 1.2 - 1) <= 0.05 and abs(e / exact - 1) <= 0.05
          and abs(uni.slope + 0.5) <= 0.05 and abs(epa.slope + 0.5) <= 0.05)
    check(3, "sharp divergence constant (closed-form integrals)", ok,
          f"uniform h^1/2 b1* = {u:.5f} vs 1.2; Epanechnikov {e:.5f} vs closed form "
          f"{epanechnikov_limit_closed_form()} = {exact:.5f}; slopes {uni.slope:.4f}, {epa.slope:.4f} (-0.5 +- 0.05)")


@pytest.mark.xfail(strict=True, reason="stated Epanechnikov constant 12/7 contradicts its own closed-form "
                                        "integrals, which give 4/3")
def test_criterion_03_stated_epanechnikov_constant():
    e = sharp("epanechnikov-product").extras["scaled_at_smallest_h"]
    check("3 (stated 12/7)", "Epanechnikov constant against the literal 12/7", abs(e / (12 / 7) - 1) <= 0.05,
          f"h^1/2 b1* = {e:.5f} vs 12/7 = {12 / 7:.5f}; expected failure, closed form is 4/3")


def test_criterion_04_score_mean_zero():
    start = time.perf_counter()
    kernel = KernelSpec("epanechnikov-product", 1)
    basis = enumerate_indices(1, 1)
    worst, cells = 0.0, 0
    for k, name in enumerate(("location-linear", "location-sin", "heteroskedastic")):
        dgp = get_dgp(name)
        sample = dgp.simulate(100_000, stream(SEED, k, COVARIATES), stream(SEED, k, NOISE))
        for alpha in (0.25, 0.5, 0.75):
            for x in (-0.3, 0.0, 0.3):
                theta = EvalPoint(alpha, 0.3, (x,))
                pop = solve_population_foc(dgp, theta, basis, kernel)
                S = score_terms(dgp, sample, theta, pop, basis, kernel)
                z = np.abs(S.mean(0)) / (S.std(0, ddof=1) / np.sqrt(sample.n))
                worst = max(worst, float(z.max()))
                cells += 1
    elapsed = time.perf_counter() - start
    check(4, "score mean zero", worst <= 3 and elapsed < 120,
          f"max |mean|/SE = {worst:.3f} over {cells} cells x {basis.P} components (<= 3); {elapsed:.1f}s")


def test_criterion_05_bahadur_remainder():
    start = time.perf_counter()
    res = run_experiment(RateExperiment(
        "location-sin", "bahadur-remainder", ns=(500, 1000, 2000, 4000, 8000), p=1, replications=200, seed=SEED,
        bandwidth_constant=0.2 * 2000 ** (1 / 3), alphas=(0.25, 0.5, 0.75), xs=((-0.4,), (0.0,), (0.4,))))
    elapsed = time.perf_counter() - start
    ratios = res.extras["ratio"]
    ok = res.extras["ratio_strictly_decreasing"] and res.slope <= -0.10 and elapsed < 1800
    check(5, "Bahadur remainder at desk scale", ok,
          f"ratio medians {[round(r, 4) for r in ratios]}; slope {res.slope:.4f} (<= -0.10); "
          f"singular cells {sum(c.failed for c in res.cells)}; {elapsed:.1f}s")


GLOBAL = dict(dgp="location-sin", ns=(500, 1000, 2000, 4000, 8000), p=1, smoothness=2, replications=100,
              seed=SEED, xs=tuple((float(x),) for x in np.linspace(-0.5, 0.5, 11)))


def test_criterion_06_sup_norm_rate():
    start = time.perf_counter()
    res = run_experiment(RateExperiment(target="global-sup-rate", **GLOBAL))
    elapsed = time.perf_counter() - start
    check(6, "sup-norm rate", abs(res.slope - 0.4) <= 0.15 and elapsed < 1800,
          f"slope {res.slope:.4f} +- {res.slope_se:.4f} vs 0.4 +- 0.15; {elapsed:.1f}s")


def test_criterion_07_random_bandwidth():
    start = time.perf_counter()
    res = run_experiment(RateExperiment(target="random-bandwidth", **GLOBAL))
    elapsed = time.perf_counter() - start
    diff = res.extras["slope_difference"]
    check(7, "random bandwidth", abs(diff) <= 0.1 and elapsed < 1800,
          f"random slope {res.slope:.4f}, deterministic {res.extras['deterministic_slope']:.4f}, "
          f"difference {diff:+.4f} (<= 0.1); {elapsed:.1f}s")


def test_criterion_08_quantile_density_rate():
    start = time.perf_counter()
    res = run_experiment(RateExperiment("location-linear", "qdensity-rate", ns=(625, 1250, 2500, 5000, 10000),
                                        p=1, smoothness=2, replications=100, seed=SEED, bandwidth_constant=0.6))
    elapsed = time.perf_counter() - start
    inv = res.cells[-1].extra["median_inverse_q_hat"]
    ok = abs(res.slope - 1 / 3) <= 0.2 and abs(inv / PHI0 - 1) <= 0.1 and elapsed < 1200
    check(8, "quantile density rate", ok,
          f"slope {res.slope:.4f} vs 1/3 +- 0.2; median 1/q_hat at n=10^4 {inv:.4f} vs phi(0) {PHI0:.4f} "
          f"({100 * (inv / PHI0 - 1):+.1f}%); {elapsed:.1f}s")


def test_criterion_09_scheme_moments():
    schemes = [make_scheme("central", 2), make_scheme("forward", 1), make_scheme("backward", 1),
               make_scheme("central", 4), make_scheme("custom-nodes", 4, nodes=[-2, -1, 1, 2])]
    worst_m, worst_p = 0.0, 0.0
    rng = np.random.default_rng(SEED)
    for s in schemes:
        t, k = np.array(s.nodes), np.array(s.weights)
        target = np.eye(s.order + 1)[1]
        worst_m = max(worst_m, float(np.max(np.abs([np.sum(k * t**m) for m in range(s.order + 1)] - target))))
        for h_q in (1e-3, 1e-2, 0.1):
            poly = np.polynomial.Polynomial(rng.normal(size=s.order + 1))
            worst_p = max(worst_p, abs(apply_scheme(s, poly, 0.5, h_q) - poly.deriv()(0.5)))
    check(9, "scheme moments and polynomial exactness", worst_m <= 1e-12 and worst_p <= 1e-10,
          f"max moment error {worst_m:.1e} (<= 1e-12); max exactness error {worst_p:.1e} (<= 1e-10)")


def test_criterion_10_auction():
    v = auction_private_value(0.5, 0.8, 1.0, 2)
    markups = [auction_private_value(0.5, 0.8, 1.0, i) - 1.0 for i in range(2, 30)]
    mono = all(a > b for a, b in zip(markups[:-1], markups[1:]))
    check(10, "auction private value", abs(v - 1.4) <= 1e-15 and mono,
          f"Q_v = {v!r} (1.4); markup strictly decreasing in I over I=2..29: {mono}")


def test_criterion_11_determinism(tmp_path):
    same = True
    for run in ("a", "b"):
        out = tmp_path / run / "tiny.csv"
        code = cli_main(["experiment", "--set", f"experiment={GOLDEN / 'tiny_experiment.cfg'}",
                         "--set", f"output={out}"])
        same &= code == 0
        same &= out.read_bytes() == (GOLDEN / "tiny_experiment.csv").read_bytes()
        same &= out.with_suffix(".json").read_bytes() == (GOLDEN / "tiny_experiment.json").read_bytes()
    check(11, "pinned tiny experiment reproduces golden output", same,
          "two consecutive runs byte-identical to tests/golden/tiny_experiment.{csv,json}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
