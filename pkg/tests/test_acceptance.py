"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from mlpicard import (
    DrawCounter,
    Driver,
    DriverKind,
    PdeProblem,
    SchemeParams,
    Variant,
    mlp_estimate,
    predicted_draw_count,
    root_key,
)
from mlpicard.examples import build_example
from mlpicard.fdref import FdConfig, fd_solve
from mlpicard.harness import ExperimentConfig, collect_runs, dimension_sweep, execute
from mlpicard.quadrature import gauss_legendre, inverse_gamma, rescale
from pde_residual import explicit_residual

SEED = 2016
RUNS = 10


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def fd_values():
    values, times = {}, {}
    for name in ("default-risk", "cva", "borrow-lend", "allen-cahn"):
        start = time.perf_counter()
        values[name] = fd_solve(FdConfig(nsteps=2**11), build_example(name, 1))
        times[name] = time.perf_counter() - start
    return values, times


def stats_at(example, dim, rho_list, reference=None):
    config = ExperimentConfig(example, dim, tuple(rho_list), runs=RUNS, seed=SEED)
    return {row.rho: row for row in execute(config, reference=reference,
                                            use_reference=reference is not None)[1]}


def test_criterion_1_reference_values(fd_values, report):
    values, times = fd_values
    target = {"default-risk": 97.705, "cva": -0.883, "borrow-lend": 7.156,
              "allen-cahn": 0.905}
    rel = {k: abs(values[k] - v) / abs(v) for k, v in target.items()}
    ok = all(r <= 0.005 for r in rel.values()) and all(t < 10.0 for t in times.values())
    detail = ", ".join(f"{k}={values[k]:.6g} (rel {rel[k]:.1e}, {times[k]:.1f}s)"
                       for k in target)
    report(1, ok, detail)


def test_criterion_2_default_risk(fd_values, report):
    row = stats_at("default-risk", 1, [5], fd_values[0]["default-risk"])[5]
    ok = row.rel_error <= 0.01 and row.std <= 1.2
    report(2, ok, f"rel_error={row.rel_error:.4g} (<= 0.01), std={row.std:.4g} (<= 1.2), "
                  f"mean runtime {row.runtime_seconds:.3g}s")


def test_criterion_3_borrow_lend(fd_values, report):
    row = stats_at("borrow-lend", 1, [5], fd_values[0]["borrow-lend"])[5]
    report(3, row.rel_error <= 0.05, f"rel_error={row.rel_error:.4g} (<= 0.05)")


def test_criterion_4_cva(fd_values, report):
    row = stats_at("cva", 1, [5], fd_values[0]["cva"])[5]
    report(4, row.rel_error <= 0.30, f"rel_error={row.rel_error:.4g} (<= 0.30)")


def test_criterion_5_allen_cahn(fd_values, report):
    one = stats_at("allen-cahn", 1, [4], fd_values[0]["allen-cahn"])[4]
    hundred = stats_at("allen-cahn", 100, [1, 2, 3, 4])
    inc = hundred[3].rel_increment
    ok = one.rel_error <= 0.09 and inc <= 0.08
    report(5, ok, f"d=1 rel_error={one.rel_error:.4g} (<= 0.09), "
                  f"d=100 rel_increment(3)={inc:.4g} (<= 0.08)")


def test_criterion_6_explicit(report):
    rows = stats_at("explicit", 100, [3, 4], 0.5)
    e3, e4 = rows[3].rel_error, rows[4].rel_error
    ok = e3 <= 0.25 and e4 <= 0.15
    report(6, ok, f"rel_error(3)={e3:.4g} (<= 0.25), rel_error(4)={e4:.4g} (<= 0.15), "
                  f"runtime(4) {rows[4].runtime_seconds:.3g}s")


def test_criterion_7a_constant_terminal_exact(report):
    problem = PdeProblem(1, 1.0, lambda x: np.full(x.shape[0], -2.5),
                         lambda t, x, y, z: np.zeros_like(y), [0.0])
    failures = []
    for variant in Variant:
        for rho in range(1, 6):
            for k in range(6):
                est = mlp_estimate(problem, Driver(DriverKind.ABM), SchemeParams(rho, variant),
                                   k, 0.0, [0.7], root_key(rho * 10 + k))
                if est.value != -2.5 or np.any(est.zeta != 0.0):
                    failures.append((variant.value, rho, k))
    report("7a", not failures, f"exact for k <= 5, rho <= 5, both variants; failures={failures}")


def test_criterion_7b_quadrature_exactness(report):
    worst = 0.0
    for n in range(1, 21):
        rule = rescale(gauss_legendre(n), 0.0, 1.0)
        for p in range(2 * n):
            exact = 1.0 / (p + 1)
            worst = max(worst, abs(rule.integrate(lambda t: t**p) - exact) / exact)
        # a full random polynomial of degree 2n - 1 on (-1, 1)
        coef = np.random.default_rng(n).standard_normal(2 * n)
        anti = P.polyint(coef)
        exact = P.polyval(1.0, anti) - P.polyval(-1.0, anti)
        got = gauss_legendre(n).integrate(lambda t: P.polyval(t, coef))
        worst = max(worst, abs(got - exact) / max(1.0, abs(exact)))
    report("7b", worst <= 1e-12, f"max relative error {worst:.2e} over n <= 20 (<= 1e-12)")


def test_criterion_7c_inverse_gamma(report):
    pairs = {1: 2, 2: 3, 6: 4, 24: 5, 120: 6}
    worst = max(abs(inverse_gamma(y) - x) for y, x in pairs.items())
    report("7c", worst <= 1e-6, f"max deviation {worst:.2e} (<= 1e-6)")


def test_criterion_7d_draw_counts(report):
    ex = build_example("allen-cahn", 2)
    mismatches = []
    for variant in Variant:
        for rho in range(1, 5):
            for k in range(5):
                params = SchemeParams(rho, variant)
                counter = DrawCounter()
                mlp_estimate(ex.problem, ex.driver, params, k, 0.0, ex.problem.eval_point,
                             root_key(k), counter=counter)
                if counter.draws != predicted_draw_count(ex.problem, params, k):
                    mismatches.append((variant.value, rho, k))
    report("7d", not mismatches, f"instrumented == predicted for k, rho <= 4; "
                                 f"mismatches={mismatches}")


def test_criterion_7e_bit_identical_reruns(report):
    base = dict(example="default-risk", dim=10, rho_list=(1, 2, 3, 4), runs=6, seed=SEED)
    runs = [collect_runs(ExperimentConfig(**base, workers=w))[0] for w in (1, 1, 4)]
    arrays = [np.stack([r.estimate for r in recs]) for recs in runs]
    same = all(np.array_equal(arrays[0], a) for a in arrays[1:])
    report("7e", same, "serial rerun and 4-thread run reproduce every estimate bit for bit")


def test_criterion_7f_explicit_residual(report):
    rng = np.random.default_rng(7)
    dim = 100
    worst = 0.0
    for _ in range(100):
        s = rng.uniform(0.05, 0.45)
        x = rng.uniform(-1.0, 1.0, size=dim) / np.sqrt(dim)
        worst = max(worst, abs(explicit_residual(dim, s, x)))
    report("7f", worst <= 1e-6, f"max |residual| {worst:.2e} at 100 points, d=100 (<= 1e-6)")


def test_criterion_8_dimension_sweep(report):
    dims = [5, 10, 25, 50, 100]
    points = dimension_sweep("default-risk", 4, dims, runs=5, seed=SEED)
    best = [min(p.runtimes) for p in points]
    ratio = best[-1] / best[0]
    steps_ok = all(b >= 0.9 * a for a, b in zip(best, best[1:]))
    strict = best[0] < best[2] < best[4]
    ok = ratio <= 25 and steps_ok and strict
    timings = ", ".join(f"d={d}: {t * 1e3:.1f}ms" for d, t in zip(dims, best))
    report(8, ok, f"runtime(100)/runtime(5)={ratio:.3g} (<= 25); {timings}")
