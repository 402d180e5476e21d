import math

import numpy as np
import pytest

from qdistinct.geometry import HALF_PI, AngleInterval, SphericalDomain
from qdistinct.simulator import (Codebook, SimulationConfig, build_codebook, error_vs_load_sweep, ml_decode,
                                 ml_decode_batch, run_experiment, wilson_interval)

FULL = AngleInterval.full()


def book(ps):
    ps = np.asarray(ps, dtype=float)
    return Codebook(np.column_stack([ps, 1 - ps]), np.arccos(np.sqrt(ps))[:, None], FULL)


def cis_overlap(a, b):
    return a["ci_lo"] <= b["ci_hi"] and b["ci_lo"] <= a["ci_hi"]


@pytest.mark.parametrize("M, angles", [(1, [math.pi / 4]), (2, [math.pi / 8, 3 * math.pi / 8]),
                                       (3, [math.pi / 12, 3 * math.pi / 12, 5 * math.pi / 12])])
def test_codebook_examples(M, angles):
    cb = build_codebook(FULL, M)
    assert len(cb) == M
    assert cb.coords[:, 0] == pytest.approx(angles, abs=1e-15)
    assert cb.probs[:, 0] == pytest.approx(np.cos(angles) ** 2, abs=1e-15)


def test_codebook_too_large():
    with pytest.raises(ValueError):
        build_codebook(AngleInterval(0.5, 0.5 + 1e-9), 10_000)
    with pytest.raises(ValueError):
        build_codebook(FULL, 0)


def test_qudit_codebook_equal_area():
    dom = SphericalDomain.orthant(3)
    cb = build_codebook(dom, 20)
    assert len(cb) == 20 and cb.N == 3
    assert np.all(cb.coords >= 0) and np.all(cb.coords <= HALF_PI)
    assert len({tuple(np.round(p, 12)) for p in cb.probs}) == 20
    # each band of the polar angle carries area in proportion to its points
    t1 = np.unique(cb.coords[:, 0])
    assert len(t1) == 4
    # the band midpoints split cos(theta_1) at the centers of equal-count bands
    counts = [np.sum(cb.coords[:, 0] == t) for t in t1]
    edges = np.concatenate([[0], np.cumsum(counts)]) / 20
    assert 1 - np.cos(t1) == pytest.approx(0.5 * (edges[:-1] + edges[1:]), abs=1e-6)


def test_multi_box_codebook():
    dom = SphericalDomain.box([(0.0, 0.5), (0.0, HALF_PI)]).union(
        SphericalDomain.box([(1.0, HALF_PI), (0.0, HALF_PI)]))
    cb = build_codebook(dom, 17)
    assert len(cb) == 17
    t1 = cb.coords[:, 0]
    assert np.all((t1 <= 0.5) | (t1 >= 1.0))


def test_ml_decode_examples():
    assert ml_decode((10, 0), book([0.1, 0.9])) == 1
    assert ml_decode((50, 50), book([0.25, 0.75])) == 0
    assert ml_decode((50, 50), book([0.75, 0.25])) == 0
    assert ml_decode((30, 70), book([0.25, 0.5, 0.75])) == 0


def test_ml_decode_permutation_covariance():
    rng = np.random.default_rng(5)
    ps = np.array([0.05, 0.2, 0.45, 0.6, 0.9])
    counts = np.column_stack([k := rng.integers(0, 41, 200), 40 - k])
    base = ml_decode_batch(counts, book(ps))
    perm = rng.permutation(5)
    shuffled = ml_decode_batch(counts, book(ps[perm]))
    assert np.array_equal(perm[shuffled], base)


def test_single_codeword_never_errs():
    rep = run_experiment(SimulationConfig(build_codebook(FULL, 1), 1000, 100, seed=3))
    assert rep.errors == 0 and rep.error_rate == 0.0


def test_noiseless_codebook():
    cb = Codebook(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[0.0], [HALF_PI]]), FULL)
    rep = run_experiment(SimulationConfig(cb, 1, 500, seed=0))
    assert rep.error_rate == 0.0


def test_threshold_behaviour():
    low = run_experiment(SimulationConfig(build_codebook(FULL, 12), 1000, 10_000, seed=0))
    high = run_experiment(SimulationConfig(build_codebook(FULL, 72), 1000, 10_000, seed=0))
    assert low.error_rate < 0.05 and high.error_rate > 0.2
    assert low.wilson_ci_95[1] < high.wilson_ci_95[0]


def test_report_consistency():
    rep = run_experiment(SimulationConfig(build_codebook(FULL, 30), 500, 3000, seed=9))
    assert rep.error_rate == rep.errors / rep.trials
    lo, hi = rep.wilson_ci_95
    assert lo <= rep.error_rate <= hi
    assert rep.draws.sum() == 3000
    assert rep.codeword_errors.sum() == rep.errors
    per = rep.per_codeword_error
    assert np.nansum(per * rep.draws) == pytest.approx(rep.errors, abs=1e-9)
    assert rep.load_factor == pytest.approx(30 / rep.w_predicted)
    conf = rep.most_common_confusions()
    assert len(conf) == 30
    for j, c in enumerate(conf):
        if c is not None:
            assert c != j
    d = rep.to_dict()
    assert d["errors"] == rep.errors and len(d["per_codeword_error"]) == 30


def test_thread_independence():
    cfg = SimulationConfig(build_codebook(FULL, 20), 300, 5000, seed=42)
    a = run_experiment(cfg, threads=1)
    b = run_experiment(cfg, threads=4)
    assert np.array_equal(a.confusion, b.confusion)
    assert a.summary() == b.summary()


def test_seed_changes_draws():
    cb = build_codebook(FULL, 20)
    a = run_experiment(SimulationConfig(cb, 300, 2000, seed=1))
    b = run_experiment(SimulationConfig(cb, 300, 2000, seed=2))
    assert not np.array_equal(a.confusion, b.confusion)


def test_symmetric_pair_equal_error():
    rep = run_experiment(SimulationConfig(book([0.45, 0.55]), 51, 20_000, seed=4))
    e0, e1 = rep.per_codeword_error
    ci0 = wilson_interval(int(rep.codeword_errors[0]), int(rep.draws[0]))
    ci1 = wilson_interval(int(rep.codeword_errors[1]), int(rep.draws[1]))
    assert ci0[0] <= ci1[1] and ci1[0] <= ci0[1]


def test_config_validation():
    cb = build_codebook(FULL, 2)
    with pytest.raises(ValueError):
        SimulationConfig(cb, 10, 0)
    with pytest.raises(ValueError):
        SimulationConfig(cb, 0, 10)
    with pytest.raises(ValueError):
        SimulationConfig(cb, 10, 10, seed=-1)


def test_sweep_skips_and_orders():
    rows = error_vs_load_sweep(FULL, [100], [0.0, 0.5, 1.0], trials=500, seed=1)
    assert [r["load"] for r in rows] == [0.5, 1.0]
    with pytest.raises(ValueError):
        error_vs_load_sweep(FULL, [], [1.0], trials=10, seed=0)
    again = error_vs_load_sweep(FULL, [100], [0.0, 0.5, 1.0], trials=500, seed=1)
    assert rows == again


def test_sweep_monotone_in_load():
    rows = error_vs_load_sweep(FULL, [1000], [0.25, 0.5, 1, 2, 4], trials=10_000, seed=0)
    for a, b in zip(rows, rows[1:]):
        assert b["error_rate"] >= a["error_rate"] or cis_overlap(a, b)
    half, two = rows[1], rows[3]
    assert half["ci_hi"] < two["ci_lo"]


def test_sweep_nonincreasing_in_n():
    rows = error_vs_load_sweep(FULL, [100, 1000, 10_000], [0.5], trials=10_000, seed=0)
    for a, b in zip(rows, rows[1:]):
        assert b["error_rate"] <= a["error_rate"] or cis_overlap(a, b)
