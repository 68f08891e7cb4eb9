import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from endrisk.errors import DomainError, InvalidMixError
from endrisk.marginal import Bernoulli, Empirical, Pareto, PointMass, QuantileTable, Uniform
from endrisk.residual import ResidualTransform
from endrisk.rng import DEFAULT_SEED, default_seed, replicate_generator, slot_words, to_unit
from endrisk.sampler import (EndBatch, EndStream, Scenario, ScenarioKind, antithetic_mix,
                             centered_partial_sums, compare_scenarios, counting_check,
                             deviation_envelope, end_batch, mulhi, sample_path, sample_paths,
                             send_status, variance_with_se, weight_to_fixed)

TWO64 = 2 ** 64
RT = {
    "bernoulli": ResidualTransform(Bernoulli(0.3)),
    "uniform": ResidualTransform(Uniform(0.0, 1.0)),
    "pareto2": ResidualTransform(Pareto(2.0)),
    "pareto3": ResidualTransform(Pareto(3.0)),
    "empirical": ResidualTransform(Empirical([0.0, 1.0, 1.0, 2.0, 7.0])),
    "table": ResidualTransform(QuantileTable([0.0, 0.4, 1.0], [0.0, 1.0, 5.0])),
}


# -- rng -------------------------------------------------------------------

def test_slot_words_are_counter_addressed():
    full = slot_words(11, "end", 10)
    assert np.array_equal(full[4:], slot_words(11, "end", 6, start=4))
    assert not np.array_equal(full, slot_words(11, "other", 10))
    assert not np.array_equal(full, slot_words(12, "end", 10))


def test_replicate_generators_are_stable():
    a = replicate_generator(3, "x", 5).random(4)
    b = replicate_generator(3, "x", 5).random(4)
    c = replicate_generator(3, "x", 6).random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_to_unit_range():
    u = to_unit(np.array([0, TWO64 - 1], dtype=np.uint64))
    assert u[0] == 0.0 and u[1] < 1.0


def test_default_seed_env(monkeypatch):
    monkeypatch.delenv("ENDRISK_SEED", raising=False)
    assert default_seed() == DEFAULT_SEED
    monkeypatch.setenv("ENDRISK_SEED", "99")
    assert default_seed() == 99


# -- fixed point -------------------------------------------------------------

@settings(max_examples=200)
@given(u=st.floats(2.0 ** -11, 1.0 - 2.0 ** -53))
def test_weight_to_fixed_is_exact(u):
    assert int(weight_to_fixed(u)) == int(u * TWO64)


@settings(max_examples=200)
@given(n=st.integers(0, 2 ** 32 - 1), u=st.integers(0, TWO64 - 1))
def test_mulhi_matches_integer_product(n, u):
    assert int(mulhi(n, np.uint64(u))) == (n * u) >> 64


# -- streams -------------------------------------------------------------------

def stream(rt, U, q):
    return EndStream(rt, int(weight_to_fixed(U)), 1.0 - q)


def test_bernoulli_two_step_example():
    s = stream(RT["bernoulli"], 0.1, 0.5)
    assert s.u == pytest.approx(0.3)
    assert list(s.take(2)) == [0.0, 0.0]
    assert s.deviation_closed_form(2) == pytest.approx(-0.6)


def test_next_and_take_agree():
    a = EndStream.from_seed(RT["uniform"], 5, rep=3)
    b = EndStream.from_seed(RT["uniform"], 5, rep=3)
    assert np.array_equal([a.next() for _ in range(50)], b.take(50))
    assert a.k == b.k == 51


def test_batch_rows_match_streams():
    rt = RT["pareto3"]
    b = end_batch(rt, 6, 42)
    x = b.values(1, 200)
    for r in range(6):
        assert np.array_equal(x[r], EndStream.from_seed(rt, 42, rep=r).take(200))


def test_uniform_running_sums_match_closed_form():
    s = EndStream.from_seed(RT["uniform"], 2024)
    x = s.take(1000)
    for n in range(1, 1001):
        dev = math.fsum(x[:n]) - n * 0.5
        assert abs(dev - EndStream.from_seed(RT["uniform"], 2024).deviation_closed_form(n)) \
            <= n * 2.0 ** -48


def test_deviation_is_zero_when_n_u_is_integer():
    # u = 1/2 exactly for the uniform law, so even n cancel
    s = stream(RT["uniform"], 0.37, 0.4)
    assert s.u == 0.5
    assert s.deviation_closed_form(2) == 0.0
    assert s.deviation_closed_form(1000) == 0.0


def test_n_equals_one_formula():
    s = stream(RT["pareto3"], 0.9, 0.6)
    expected = s.z * ((0.9 >= 1.0 - s.u) - s.u)
    assert s.deviation_closed_form(1) == pytest.approx(expected, rel=1e-12)


def test_degenerate_stream_is_constant():
    rt = ResidualTransform(PointMass(1.5))
    assert np.all(EndStream.from_seed(rt, 1).take(100) == 1.5)


@pytest.mark.parametrize("p", [0.3, 0.5, 0.9, round(1 / math.sqrt(2), 12)])
def test_bernoulli_counts_within_one(p):
    b = end_batch(ResidualTransform(Bernoulli(p)), 8, 3)
    x = b.values(1, 20_000)
    assert set(np.unique(x)) <= {0.0, 1.0}
    dev = np.cumsum(x, axis=1) - np.arange(1, 20_001) * p
    assert np.abs(dev).max() <= 1.0 + 1e-9


@settings(max_examples=60, deadline=None)
@given(U=st.integers(0, TWO64 - 1), q=st.floats(0.01, 1.0), n=st.integers(1, 5000))
def test_count_identity_property(U, q, n):
    s = EndStream(RT["pareto3"], U, 1.0 - q)
    c = s.count(n)
    assert c == sum(s.in_c(k) for k in range(1, n + 1))
    fl = (n * s._u) >> 64
    assert fl <= c <= fl + 1


def test_counting_check_passes_and_reports_deviation():
    ok, worst = counting_check(end_batch(RT["bernoulli"], 16, 9), 50_000)
    assert ok and 0.0 < worst <= 1.0


@pytest.mark.parametrize("name", list(RT))
def test_marginal_pair_invariants(name):
    b = end_batch(RT[name], 500, 17)
    mu = RT[name].mu
    assert np.all(b.w2 <= mu) and np.all(mu <= b.w1)
    fin = np.isfinite(b.w1)
    bal = b.u[fin] * b.w1[fin] + (1 - b.u[fin]) * b.w2[fin]
    assert np.allclose(bal, mu, atol=1e-9 * (1 + abs(mu)))


@pytest.mark.parametrize("name", list(RT))
def test_envelope_and_windows(name):
    rt = RT[name]
    rows = deviation_envelope(rt, [1, 10, 1000, 20_000], 32, 5)
    assert all(r.within for r in rows)
    x = end_batch(rt, 8, 5).values(1, 3000) - rt.mu
    S = np.concatenate([np.zeros((8, 1)), np.cumsum(x, axis=1)], axis=1)
    z = end_batch(rt, 8, 5).z
    for m, n in [(10, 20), (100, 2999), (1234, 2000), (0, 3000)]:
        assert np.all(np.abs(S[:, n] - S[:, m]) <= z + 3000 * 2.0 ** -48 * np.maximum(z, 1))


def test_pareto_envelope_bound():
    rt = RT["pareto2"]
    q = np.linspace(0.001, 0.999, 999)
    assert np.all(rt.residual_sample(q) <= 2.0 / (1.0 - q) + 1e-12)


def test_degenerate_envelope_is_zero():
    rows = deviation_envelope(ResidualTransform(PointMass(3.0)), [1, 100], 4, 0)
    assert all(r.max_abs_dev == 0.0 for r in rows)


# -- scenarios -----------------------------------------------------------------

def test_scenario_aliases():
    assert Scenario.parse("iid").kind is ScenarioKind.INDEPENDENT
    assert Scenario.parse("comonotone").kind is ScenarioKind.COMONOTONIC
    with pytest.raises(DomainError):
        Scenario.parse("cm")
    with pytest.raises(DomainError):
        Scenario.parse("nonsense")


def test_comonotonic_coordinates_equal():
    x = sample_path(RT["uniform"], "comonotonic", 20, seed=1)
    assert np.all(x == x[0])


def test_paths_are_reproducible_and_chunk_invariant():
    rt = RT["pareto3"]
    for scen in ("end", "iid", "comonotone"):
        a = sample_paths(rt, scen, 30, 10, 8)
        b = sample_paths(rt, scen, 30, 10, 8)
        assert np.array_equal(a, b)
        assert np.array_equal(a[3:], sample_paths(rt, scen, 30, 7, 8, start=3))


def test_threaded_partial_sums_match_serial():
    rt = RT["uniform"]
    a = centered_partial_sums(rt, "iid", [5, 50], 9000, 4, workers=1)
    b = centered_partial_sums(rt, "iid", [5, 50], 9000, 4, workers=3)
    assert np.array_equal(a, b)


def test_cm_periodic_uniform_bound():
    rt = RT["uniform"]
    scen = Scenario.parse("cm", mix=antithetic_mix(rt.dist))
    x = sample_paths(rt, scen, 101, 50, 2)
    dev = np.abs(np.cumsum(x - 0.5, axis=1))
    assert dev.max() <= 0.5 + 1e-15


def test_cm_periodic_rejects_invalid_mix():
    rt = RT["pareto3"]
    scen = Scenario.parse("cm", mix=antithetic_mix(rt.dist))
    with pytest.raises(InvalidMixError):
        sample_paths(rt, scen, 10, 5, 0)


def test_independent_variance_scales_with_n():
    dev = centered_partial_sums(RT["uniform"], "iid", [100], 4000, 6)
    var, se = variance_with_se(dev)
    assert abs(var[0] - 100 / 12) < 4 * se[0]


def test_variance_se_against_normal_theory():
    x = np.random.default_rng(0).standard_normal((20_000, 1))
    var, se = variance_with_se(x)
    # for normal data Var(s^2) = 2 sigma^4 / (N - 1)
    assert se[0] == pytest.approx(math.sqrt(2 / 19_999), rel=0.05)


def test_compare_rows():
    rows = compare_scenarios(RT["uniform"], ["end", "iid"], [1, 10], 500, 3)
    assert [(r.n, r.scenario) for r in rows] == [(1, "end"), (10, "end"), (1, "independent"),
                                               (10, "independent")]
    assert rows[0].var_estimate <= 1 / 12 + 3 * rows[0].stderr


@pytest.mark.parametrize("dist, status", [
    (Uniform(0.0, 1.0), "certified"),
    (Bernoulli(0.5), "certified"),
    (Pareto(3.0), "unknown"),
])
def test_send_status(dist, status):
    assert send_status(ResidualTransform(dist)) == status


def test_from_levels_on_atom_returns_mean():
    rt = ResidualTransform(Empirical([0.0, 1.0, 2.0]))
    b = EndBatch.from_levels(rt, [0], [0.9])
    assert b.w1[0] == b.w2[0] == 1.0
