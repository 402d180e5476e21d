"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math

import numpy as np
import pytest

from qdistinct.asymptotics import omega_max, w_ndim, w_qubit
from qdistinct.capacity import SolverConfig, blahut_arimoto, interval_probes, kkt_verify
from qdistinct.cli import main
from qdistinct.geometry import AngleInterval, DiscreteEnsemble, uniform_angle_grid
from qdistinct.information import (MeasurementChannel, asymptotic_marginal_row, central_band,
                                   information_profile, mutual_information, output_marginal)
from qdistinct.prob_kernel import binomial_log_rows, normalized_gaussian_binomial, total_variation
from qdistinct.simulator import SimulationConfig, build_codebook, error_vs_load_sweep, run_experiment

FULL = AngleInterval.full()
FULL_ARG = "0,1.5707963268"


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {title} ({detail})")
        assert ok, detail
    return emit


def test_criterion_1_formula_fidelity(verdict):
    # reference values re-derived independently (high-precision evaluation)
    checks = [
        ("w_qubit(100)", w_qubit(100, FULL), 7.6026, 1e-3),
        ("w_qubit(1000)", w_qubit(1000, FULL), 24.042, 1e-2),
        ("w_ndim(3,1e4,pi/2)", w_ndim(3, 10**4, math.pi / 2), 1e4 / math.e, 0.5),
        ("omega_max(4)", omega_max(4), 1.2337, 1e-4),
    ]
    bad = [f"{name}={got:.6f} vs {ref:.6f}" for name, got, ref, tol in checks if abs(got - ref) > tol]
    detail = "; ".join(f"{name}={got:.6f}" for name, got, _, _ in checks)
    verdict(1, "formula fidelity", not bad, detail if not bad else "; ".join(bad))


def test_criterion_2_flatness(verdict):
    n = 10**4
    grid = uniform_angle_grid(FULL, 256)
    D = information_profile(grid, MeasurementChannel(2, n))
    # interior: at least three angular standard deviations 1/(2 sqrt n) from either end
    edge = 3.0 / (2.0 * math.sqrt(n))
    alpha = grid.coords[:, 0]
    inner = D[(alpha >= FULL.lo + edge) & (alpha <= FULL.hi - edge)]
    target = 0.5 * math.log(2 * n / (math.pi * math.e)) + math.log(math.pi / 2)
    spread = float(np.ptp(inner))
    mean = float(inner.mean())
    ok = spread <= 0.02 * mean and abs(mean - target) <= 0.02 * target
    verdict(2, "individual information flat for the uniform-angle ensemble", ok,
            f"{inner.size} interior points, spread={spread:.4f}, mean={mean:.4f}, target={target:.4f}")


def test_criterion_3_capacity_convergence(verdict):
    grid = uniform_angle_grid(FULL, 256)
    ch = MeasurementChannel(2, 1000)
    res = blahut_arimoto(grid, ch, SolverConfig(tolerance=1e-6))
    monotone = bool(np.all(np.diff(res.lower_bounds) >= 0))
    rep = kkt_verify(res.optimal_weights, grid, ch, interval_probes(FULL, 256), tol=0.05)
    ok = res.converged and monotone and abs(res.capacity - 3.1800) <= 0.1 and rep.passed
    verdict(3, "Blahut-Arimoto convergence", ok,
            f"C={res.capacity:.6f}, gap={res.kkt_gap:.2e}, converged={res.converged}, "
            f"monotone={monotone}, KKT={rep.verdict}")


def test_criterion_4_position_independence(verdict):
    ch = MeasurementChannel(2, 1000)
    a = blahut_arimoto(uniform_angle_grid(AngleInterval(0.1, 0.5), 256), ch).capacity
    b = blahut_arimoto(uniform_angle_grid(AngleInterval(1.0, 1.4), 256), ch).capacity
    verdict(4, "capacity independent of interval position", abs(a - b) <= 0.02,
            f"C[0.1,0.5]={a:.6f}, C[1.0,1.4]={b:.6f}, diff={abs(a - b):.2e}")


def _mi_oracle(ps, ws, n):
    rows = [[math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n + 1)] for p in ps]
    q = [sum(w * r[k] for w, r in zip(ws, rows)) for k in range(n + 1)]
    return sum(w * r[k] * math.log(r[k] / q[k]) for w, r in zip(ws, rows) for k in range(n + 1) if r[k] > 0)


def test_criterion_5_oracle_equivalence(verdict):
    rng = np.random.default_rng(12345)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 13))
        m = int(rng.integers(1, 9))
        ps = rng.choice(np.linspace(0.0, 1.0, 101), size=m, replace=False)
        ws = rng.dirichlet(np.ones(m))
        ws /= ws.sum()
        ens = DiscreteEnsemble(np.column_stack([ps, 1 - ps]), ws)
        worst = max(worst, abs(mutual_information(ens, MeasurementChannel(2, n)) - _mi_oracle(ps, ws, n)))
    verdict(5, "mutual information matches direct summation", worst <= 1e-9, f"max abs diff={worst:.2e}")


def test_criterion_6_gaussian_approximation(verdict):
    def tv(n, p):
        return total_variation(np.exp(binomial_log_rows(n, p)), normalized_gaussian_binomial(n, p))

    at_1000 = {p: tv(1000, p) for p in (0.2, 0.3, 0.5, 0.8)}
    trend = [tv(n, 0.3) for n in (100, 1000, 10_000)]
    ok = max(at_1000.values()) <= 0.02 and trend[0] > trend[1] > trend[2]
    verdict(6, "Gaussian approximation", ok,
            "TV(n=1000)=" + ", ".join(f"{p}:{v:.4f}" for p, v in at_1000.items())
            + "; p=0.3 trend " + " > ".join(f"{v:.5f}" for v in trend))


def test_criterion_7_marginal_asymptotics(verdict):
    n = 10**4
    exact = output_marginal(uniform_angle_grid(FULL, 64), MeasurementChannel(2, n)).probs
    approx = asymptotic_marginal_row(n, FULL)
    ks = central_band(n, FULL)
    rel = np.abs(exact[ks] / approx[ks] - 1.0)
    verdict(7, "output marginal matches its large-n form", float(rel.max()) <= 0.05,
            f"{ks.size} k values, max relative error={rel.max():.4f}")


def test_criterion_8_distinguishability_threshold(verdict):
    def err(M):
        return run_experiment(SimulationConfig(build_codebook(FULL, M), 1000, 10_000, seed=0))

    low, high = err(12), err(72)
    disjoint = low.wilson_ci_95[1] < high.wilson_ci_95[0] or high.wilson_ci_95[1] < low.wilson_ci_95[0]
    rows = error_vs_load_sweep(FULL, [100, 1000, 10_000], [0.5], trials=10_000, seed=0)
    trend = all(b["error_rate"] <= a["error_rate"] or (a["ci_lo"] <= b["ci_hi"] and b["ci_lo"] <= a["ci_hi"])
                for a, b in zip(rows, rows[1:]))
    ok = low.error_rate < 0.05 and high.error_rate > 0.2 and disjoint and len(rows) == 3 and trend
    verdict(8, "distinguishability threshold", ok,
            f"err(M=12)={low.error_rate:.4f} CI={tuple(round(x, 4) for x in low.wilson_ci_95)}, "
            f"err(M=72)={high.error_rate:.4f} CI={tuple(round(x, 4) for x in high.wilson_ci_95)}, "
            "load 0.5: " + ", ".join(f"n={r['n']}:{r['error_rate']:.4f}" for r in rows))


def _cli_output(capsys, threads, argv):
    code = main(["--threads", str(threads), *argv])
    return code, capsys.readouterr().out


def test_criterion_9_determinism(capsys, verdict):
    runs = [
        ["capacity", "--n", "1000", "--grid", "256", "--interval", FULL_ARG, "--tol", "1e-6", "--kkt"],
        ["simulate", "--n", "1000", "--interval", FULL_ARG, "--codebook", "12", "--trials", "10000", "--seed", "0"],
        ["simulate", "--n", "1000", "--interval", FULL_ARG, "--codebook", "72", "--trials", "10000", "--seed", "0"],
        ["simulate", "--n", "100", "--n", "1000", "--n", "10000", "--interval", FULL_ARG, "--load", "0.5",
         "--trials", "10000", "--seed", "0"],
    ]
    mismatches = []
    for argv in runs:
        for fmt in ("csv", "json"):
            c1, one = _cli_output(capsys, 1, [*argv, "--format", fmt])
            c8, eight = _cli_output(capsys, 8, [*argv, "--format", fmt])
            if fmt == "json":
                # the manifest records wall-clock times and the thread count
                one = json.dumps({k: v for k, v in json.loads(one).items() if k != "manifest"})
                eight = json.dumps({k: v for k, v in json.loads(eight).items() if k != "manifest"})
            if c1 != c8 or one.encode() != eight.encode():
                mismatches.append(f"{argv[0]} {fmt}")
    verdict(9, "identical output for 1 and 8 threads", not mismatches,
            f"{2 * len(runs)} output pairs compared" + (f"; differing: {mismatches}" if mismatches else ""))
