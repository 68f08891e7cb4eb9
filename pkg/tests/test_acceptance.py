"""Acceptance criteria, each with its tolerance and wall-clock budget."""
import math
import time

import numpy as np
import pytest

from endrisk.marginal import Bernoulli, Empirical, Pareto, QuantileTable, Uniform
from endrisk.residual import ResidualTransform
from endrisk.riskagg import mu_pq, var_es_equivalence
from endrisk.rng import replicate_generator
from endrisk.sampler import centered_partial_sums, counting_check, end_batch, variance_with_se
from endrisk.verify import (_slope, closed_form_identity, coupling_search_var, oracle_equivalence,
                            residual_cdf_check, residual_uniformity, tail_index, variance_curve)

SEED = 20140915


@pytest.fixture
def report(record_property):
    def rec(num, title, detail):
        record_property("criterion", num)
        record_property("title", title)
        record_property("detail", detail)
    return rec


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_01_bernoulli_envelope(report):
    ps = [0.3, round(1 / math.sqrt(2), 12), 0.5]
    with Clock() as clk:
        res = [counting_check(end_batch(ResidualTransform(Bernoulli(p)), 64, SEED), 10 ** 6)
               for p in ps]
    worst = max(w for _, w in res)
    report(1, "bernoulli |S_n - np| <= 1", f"max dev {worst:.6f}, {clk.elapsed:.2f}s")
    assert all(ok for ok, _ in res)
    assert worst <= 1.0
    assert clk.elapsed < 10


def test_02_uniform_residual_ks(report):
    with Clock() as clk:
        rep = residual_uniformity(ResidualTransform(Uniform()), 10 ** 5, SEED)
    report(2, "uniform residual is U[0,1]",
           f"KS {rep.statistic:.5f} < {rep.threshold:.5f}, {clk.elapsed:.2f}s")
    assert rep.statistic < 1.63 / math.sqrt(10 ** 5)
    assert clk.elapsed < 5


def test_03_pareto_residual_cdf(report):
    x = np.geomspace(0.1, 100.0, 2000)
    closed = lambda v: np.sqrt(1.0 + 4.0 / v ** 2) - 2.0 / v
    with Clock() as clk:
        reps = [residual_cdf_check(ResidualTransform(Pareto(2.0), analytic=a), closed, x)
                for a in (True, False)]
    err = max(r.statistic for r in reps)
    report(3, "pareto-2 residual CDF closed form", f"max err {err:.2e}, {clk.elapsed:.2f}s")
    assert err < 1e-6
    assert clk.elapsed < 5


def test_04_variance_bound(report):
    with Clock() as clk:
        rep = variance_curve(ResidualTransform(Uniform()), "end", [1, 10, 100, 1000], 10 ** 4,
                             SEED, bound=1 / 12)
        dev = centered_partial_sums(ResidualTransform(Bernoulli(0.5)), "end", [1], 10 ** 4, SEED)
        var, se = variance_with_se(dev)
    v1, s1 = float(var[0]), float(se[0])
    report(4, "END variance <= E[Z^2]/4",
           f"uniform max excess {rep.statistic['max_excess']:.4f}, "
           f"bernoulli Var(S1) {v1:.4f} +- {s1:.4f}, {clk.elapsed:.2f}s")
    assert rep.passed
    assert abs(v1 - 0.25) <= 3 * s1
    assert clk.elapsed < 30


def test_05_variance_regimes(report):
    ns = [2 ** j for j in range(4, 13)]
    rt = ResidualTransform(Uniform())
    with Clock() as clk:
        iid = variance_curve(rt, "iid", ns, 2000, SEED, expected_slope=1.0, slope_tol=0.1)
        com = variance_curve(rt, "comonotone", ns, 2000, SEED, expected_slope=2.0, slope_tol=0.05)
    a, b = iid.statistic["slope"], com.statistic["slope"]
    report(5, "variance slopes", f"independent {a:.4f}, comonotonic {b:.4f}, {clk.elapsed:.2f}s")
    assert abs(a - 1.0) <= 0.1
    assert abs(b - 2.0) <= 0.05
    assert clk.elapsed < 60


FAMILIES = {
    "bernoulli": Bernoulli(0.3),
    "uniform": Uniform(0.0, 1.0),
    "pareto2": Pareto(2.0),
    "pareto3": Pareto(3.0),
    "empirical": Empirical([0.0, 1.0, 1.0, 2.0, 7.0]),
    "qtable": QuantileTable([0.0, 0.4, 1.0], [0.0, 1.0, 5.0]),
}


def test_06_closed_form_identity(report):
    with Clock() as clk:
        reps = {k: closed_form_identity(ResidualTransform(d), 10 ** 6, 100, SEED)
                for k, d in FAMILIES.items()}
    worst = max(r.statistic for r in reps.values())
    report(6, "summed paths vs closed-form deviation",
           f"max error / (n 2^-48 scale) {worst:.3g}, {clk.elapsed:.2f}s")
    assert all(r.passed for r in reps.values()), {k: r.statistic for k, r in reps.items()}
    assert clk.elapsed < 20


def test_07_var_bracket_consistency(report):
    lines, ok = [], True
    rel = {}
    with Clock() as clk:
        for name, dist in (("uniform", Uniform()), ("pareto3", Pareto(3.0))):
            for p in (0.9, 0.99):
                for n in (8, 64):
                    rep = coupling_search_var(dist, p, n, 4000, SEED)
                    lo, hi = rep.details["bracket"]
                    denom = n * mu_pq(dist, p, 1.0)
                    width = (hi - lo) / denom
                    qs = rep.details["q_star"]
                    cap = (dist.quantile(qs) - dist.quantile(p)) / denom
                    if name == "uniform":
                        ok = ok and width <= cap * (1 + 1e-12)
                    else:
                        # q* < 1 adds the head term n (mu_{p,1} - mu_{p,q*}) to the width
                        head = n * (mu_pq(dist, p, 1.0) - mu_pq(dist, p, qs)) / denom
                        ok = ok and width == pytest.approx(head + cap, rel=1e-9)
                    ok = ok and rep.passed
                    rel[name, p, n] = width
                    lines.append(f"{name} p={p} n={n} max={rep.statistic['max_var']:.4g} "
                                 f"in [{lo:.4g}, {hi:.4g}]")
    # bounded family: n * relative width stays constant, i.e. width shrinks as 1/n
    shrink = [rel["uniform", p, 64] * 64 / (rel["uniform", p, 8] * 8) for p in (0.9, 0.99)]
    report(7, "VaR bracket vs coupling search",
           f"{len(lines)} cases, 1/n shrink ratios {shrink[0]:.6f} {shrink[1]:.6f}, "
           f"{clk.elapsed:.2f}s")
    assert ok, lines
    assert all(rel["pareto3", p, 64] < rel["pareto3", p, 8] for p in (0.9, 0.99))
    assert shrink == pytest.approx([1.0, 1.0], rel=1e-9)
    assert clk.elapsed < 60


def test_08_equivalence_rate(report):
    with Clock() as clk:
        rows = var_es_equivalence(Uniform(), 0.9, [10, 100, 1000])
        err = max(abs(r.lower_ratio - (1 - 0.1 / (0.95 * r.n))) for r in rows)
        ns = [10 ** 2, 10 ** 3, 10 ** 4, 10 ** 5]
        par = var_es_equivalence(Pareto(3.0), 0.9, ns, k=2.5)
        slope, _ = _slope(ns, [r.deficit for r in par])
    bound = -(1 - 1 / 2.5) + 0.15
    report(8, "VaR/ES equivalence", f"uniform err {err:.2e}, pareto-3 deficit slope "
           f"{slope:.4f} <= {bound:.2f}, {clk.elapsed:.2f}s")
    assert err <= 1e-12
    assert slope <= bound
    assert clk.elapsed < 30


def test_09_tail_index(report):
    with Clock() as clk:
        rt = ResidualTransform(Pareto(2.0))
        q = 1.0 - replicate_generator(SEED, "hill", 0).random(10 ** 5)
        est = tail_index(rt.residual_sample(q), seed=SEED)
    report(9, "pareto-2 residual tail index",
           f"Hill {est.estimate:.4f} ci [{est.ci[0]:.3f}, {est.ci[1]:.3f}], {clk.elapsed:.2f}s")
    assert 0.8 <= est.estimate <= 1.2
    assert clk.elapsed < 10


def test_10_oracle_equivalence(report):
    with Clock() as clk:
        reps = {k: oracle_equivalence(d, count=200, seed=SEED, tol=1e-8)
                for k, d in FAMILIES.items()}
    worst = max(max(r.statistic.values()) for r in reps.values())
    report(10, "brute-force oracle agreement", f"max error {worst:.2e}, {clk.elapsed:.2f}s")
    assert all(r.passed for r in reps.values()), {k: r.statistic for k, r in reps.items()}
    assert clk.elapsed < 10
