import json

import numpy as np
import pytest

from endrisk.errors import BudgetError, DomainError
from endrisk.marginal import Bernoulli, Pareto, Uniform
from endrisk.residual import ResidualTransform
from endrisk.verify import (BruteForce, VerificationReport, coupling_search_var, digest,
                            ks_marginal, marginal_preservation, oracle_branch_inverse,
                            oracle_equivalence, run_suite, tail_decay, tail_index, variance_curve)


# at the minimum H has a double root, so inversion only resolves sqrt(eps)
@pytest.mark.parametrize("dist, s, expected, tol", [
    (Uniform(), -0.125, (0.5, 0.5), 1e-7),
    (Pareto(2.0), -0.5, (0.75, 0.75), 1e-7),
    (Uniform(), -3.0 / 32.0, (0.25, 0.75), 1e-12),
    (Bernoulli(0.3), -0.105, (0.35, 0.85), 1e-12),
])
def test_oracle_branch_inverse(dist, s, expected, tol):
    assert oracle_branch_inverse(dist, s) == pytest.approx(expected, abs=tol)


def test_oracle_domain():
    with pytest.raises(DomainError):
        oracle_branch_inverse(Uniform(), 0.1)


def test_brute_force_critical_points():
    bf = BruteForce(Pareto(3.0))
    assert bf.mu == pytest.approx(1.5, rel=1e-12)
    assert bf.nu == pytest.approx(1 - 1.5 ** -3, abs=1e-12)
    assert bf.c == pytest.approx(-2.0 / 9.0, abs=1e-12)


@pytest.mark.parametrize("dist", [Bernoulli(0.3), Uniform(-1.0, 2.0)], ids=repr)
def test_oracle_equivalence_small(dist):
    rep = oracle_equivalence(dist, count=20, seed=3)
    assert rep.passed, rep.statistic


def test_report_roundtrip_and_determinism():
    a = oracle_equivalence(Uniform(), count=5, seed=1)
    b = oracle_equivalence(Uniform(), count=5, seed=1)
    assert a.to_json() == b.to_json()
    back = VerificationReport.from_json(a.to_json(include_runtime=True))
    assert back.passed == a.passed and back.name == a.name
    assert "runtime" not in json.loads(a.to_json())


def test_digest_is_order_independent():
    assert digest({"a": 1, "b": [1, 2]}) == digest({"b": [1, 2], "a": 1})


def test_ks_marginal_uniform_and_bernoulli():
    assert ks_marginal(ResidualTransform(Uniform()), "end", 5, 5000, 1).passed
    rep = ks_marginal(ResidualTransform(Bernoulli(0.3)), "end", 5, 5000, 1)
    assert rep.passed and rep.details["test"] == "frequency"
    assert ks_marginal(ResidualTransform(Pareto(3.0)), "comonotone", 3, 5000, 2).passed


def test_ks_marginal_budget():
    with pytest.raises(BudgetError):
        ks_marginal(ResidualTransform(Uniform()), "end", 10, 10 ** 7, 0, budget=10 ** 6)


def test_marginal_preservation_small():
    assert marginal_preservation(ResidualTransform(Pareto(2.0)), 20_000, 4).passed


def test_variance_curves():
    rt = ResidualTransform(Uniform())
    assert variance_curve(rt, "iid", [16, 64, 256, 1024], 800, 0, expected_slope=1.0).passed
    assert variance_curve(rt, "comonotone", [16, 64, 256], 300, 0, expected_slope=2.0,
                          slope_tol=0.05).passed
    assert variance_curve(rt, "end", [1, 3, 101], 2000, 0, bound=1 / 12).passed


def test_tail_index_cases():
    rng = np.random.default_rng(0)
    x = (1.0 - rng.random(100_000)) ** -0.5
    est = tail_index(x, seed=1)
    assert est.applicable and abs(est.estimate - 2.0) <= 0.3
    assert est.ci[0] < est.estimate < est.ci[1]
    u = ResidualTransform(Uniform()).residual_sample(1.0 - rng.random(20_000))
    assert not tail_index(u, support_upper=1.0).applicable
    with pytest.raises(BudgetError):
        tail_index(x[:100])


def test_tail_decay_pareto2():
    rep = tail_decay(ResidualTransform(Pareto(2.0)), 1000, 20_000, 3, max_slope=-(1.99 - 1) + 0.3)
    assert rep.passed


def test_coupling_search_small():
    rep = coupling_search_var(Uniform(), 0.9, 8, 2000, 0)
    assert rep.passed
    assert rep.statistic["max_var"] >= 8 * 0.95 - 0.1 - 3 * rep.statistic["stderr"] - 1e-9
    como = rep.details["couplings"]["comonotonic"][0]
    assert como <= 8 * 0.95


def test_coupling_search_single_variable():
    rep = coupling_search_var(Pareto(3.0), 0.9, 1, 4000, 0)
    for value, se in rep.details["couplings"].values():
        assert value == pytest.approx(Pareto(3.0).quantile(0.9), abs=4 * se + 0.05)


def test_coupling_search_limits():
    with pytest.raises(DomainError):
        coupling_search_var(Uniform(), 0.9, 65, 1000, 0)


def test_unknown_suite():
    with pytest.raises(DomainError):
        run_suite("everything")
