import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from endrisk.errors import DomainError, InfiniteMeanError
from endrisk.marginal import (Affine, Bernoulli, Empirical, Pareto, PointMass, QuantileFunction,
                              QuantileTable, Uniform)

LAWS = [
    Bernoulli(0.3),
    Uniform(0.0, 1.0),
    Uniform(-2.0, 5.0),
    Pareto(2.0),
    Pareto(3.0),
    Empirical([1.0, 2.0, 3.0, 6.0]),
    QuantileTable([0.0, 0.5, 1.0], [0.0, 1.0, 3.0]),
    QuantileTable([0.2, 0.7, 1.0], [-1.0, 0.0, 4.0], step=True),
    Affine(Pareto(3.0), 2.0, -1.0),
]


@pytest.mark.parametrize("dist, t, expected", [
    (Uniform(0.0, 1.0), 0.25, 0.25),
    (Pareto(2.0), 0.75, 2.0),
    (Pareto(2.0), 0.0, 1.0),
    (Bernoulli(0.3), 0.5, 0.0),
    (Bernoulli(0.3), 0.7, 0.0),
    (Bernoulli(0.3), 0.7000001, 1.0),
    (Empirical([3.0, 1.0, 2.0]), 1 / 3, 1.0),
    (QuantileTable([0.0, 0.5, 1.0], [0.0, 1.0, 3.0]), 0.75, 2.0),
])
def test_quantile_examples(dist, t, expected):
    assert dist.quantile(t) == pytest.approx(expected, rel=1e-15)


def test_quantile_domain():
    with pytest.raises(DomainError):
        Uniform().quantile(1.5)
    with pytest.raises(DomainError):
        Pareto(2.0).quantile(-0.1)


@pytest.mark.parametrize("dist, x, cdf, left", [
    (Pareto(2.0), 1.0, 0.0, 0.0),
    (Pareto(2.0), 2.0, 0.75, 0.75),
    (Bernoulli(0.3), 0.0, 0.7, 0.0),
    (Bernoulli(0.3), 1.0, 1.0, 0.7),
    (Uniform(0.0, 1.0), 0.5, 0.5, 0.5),
    (Empirical([1.0, 2.0, 2.0, 5.0]), 2.0, 0.75, 0.25),
])
def test_cdf_examples(dist, x, cdf, left):
    assert dist.cdf(x) == pytest.approx(cdf, abs=1e-15)
    assert dist.cdf_left(x) == pytest.approx(left, abs=1e-15)


@pytest.mark.parametrize("dist, mean", [
    (Pareto(2.0), 2.0),
    (Pareto(3.0), 1.5),
    (Uniform(0.0, 1.0), 0.5),
    (Empirical([1.0, 2.0, 3.0, 6.0]), 3.0),
    (Bernoulli(0.3), 0.3),
    (QuantileTable([0.0, 0.5, 1.0], [0.0, 1.0, 3.0]), 1.25),
    (Affine(Pareto(3.0), 2.0, -1.0), 2.0),
    (PointMass(4.5), 4.5),
])
def test_mean(dist, mean):
    assert dist.mean == pytest.approx(mean, rel=1e-14)


def test_empirical_mean_is_exact_sample_mean():
    x = [0.1, 0.2, 0.3, 1e16, -1e16]
    assert Empirical(x).mean == math.fsum(x) / len(x)


@pytest.mark.parametrize("alpha", [1.0, 0.5])
def test_infinite_mean_rejected(alpha):
    with pytest.raises(InfiniteMeanError):
        Pareto(alpha)


@pytest.mark.parametrize("dist, p, q, expected", [
    (Uniform(0.0, 1.0), 0.0, 1.0, 0.5),
    (Pareto(2.0), 0.3, 1.0, 2.0 * math.sqrt(0.7)),
    (Pareto(2.0), 0.0, 1.0, 2.0),
    # quantile is 1 only on (0.7, 0.8] inside (0.6, 0.8)
    (Bernoulli(0.3), 0.6, 0.8, 0.1),
    # mpmath quadrature of (1-t)^(-1/3) on [0.2, 0.9]
    (Pareto(3.0), 0.2, 0.9, 0.969495610514347710670227073802),
])
def test_partial_quantile_integral(dist, p, q, expected):
    assert dist.partial_quantile_integral(p, q) == pytest.approx(expected, rel=1e-13, abs=1e-15)


def test_partial_integral_needs_ordered_levels():
    with pytest.raises(DomainError):
        Uniform().partial_quantile_integral(0.5, 0.5)


@pytest.mark.parametrize("dist, k, expected", [
    (Uniform(0.0, 1.0), 2.0, 1.0 / 3.0),
    (Pareto(2.0), 2.0, math.inf),
    (Pareto(2.0), 1.5, 4.0),
    (Pareto(3.0), 2.0, 3.0),
    (Bernoulli(0.3), 1.0, 0.3),
    (QuantileTable([0.0, 0.5, 1.0], [0.0, 1.0, 3.0]), 2.0, 7.0 / 3.0),
])
def test_moment(dist, k, expected):
    assert dist.moment(k) == pytest.approx(expected, rel=1e-9)


def test_restrict_uniform_upper_half():
    r = Uniform(0.0, 1.0).conditional_restrict(0.5, 1.0)
    assert r.quantile(0.0) == pytest.approx(0.5)
    assert r.quantile(1.0) == pytest.approx(1.0)
    assert r.mean == pytest.approx(0.75)


def test_restrict_pareto_head():
    r = Pareto(2.0).conditional_restrict(0.0, 0.75)
    assert r.mean == pytest.approx(4.0 / 3.0, rel=1e-13)
    assert r.quantile(0.5) == pytest.approx((1 - 0.75 * 0.5) ** -0.5, rel=1e-14)


def test_restrict_pareto_tail_is_pareto():
    # Q(p + (1-p) t) = (1-p)^(-1/2) (1-t)^(-1/2)
    r = Pareto(2.0).conditional_restrict(0.75, 1.0)
    assert r.mean == pytest.approx(4.0, rel=1e-12)
    assert r.quantile(0.75) == pytest.approx(4.0, rel=1e-14)


def test_restrict_domain():
    with pytest.raises(DomainError):
        Uniform().conditional_restrict(0.6, 0.4)


def test_table_validation():
    with pytest.raises(DomainError):
        QuantileTable([0.0, 0.5], [0.0, 1.0])
    with pytest.raises(DomainError):
        QuantileTable([0.0, 0.5, 1.0], [0.0, 2.0, 1.0])
    with pytest.raises(DomainError):
        QuantileTable([0.3, 1.0], [0.0, 1.0])


def test_linear_table_detects_flat_piece_as_atom():
    d = QuantileTable([0.0, 0.25, 0.75, 1.0], [0.0, 1.0, 1.0, 2.0])
    assert d.cdf(1.0) - d.cdf_left(1.0) == pytest.approx(0.5)


def test_affine_scales_quantile_and_moments():
    d = Affine(Pareto(3.0), 2.0, -1.0)
    assert d.quantile(0.875) == pytest.approx(2.0 * 2.0 - 1.0)
    assert d.cdf(3.0) == pytest.approx(0.875)


def test_quantile_function_matches_pareto():
    custom = QuantileFunction(lambda t: (1.0 - t) ** (-1.0 / 3.0), name="p3")
    ref = Pareto(3.0)
    assert custom.mean == pytest.approx(ref.mean, rel=1e-9)
    assert custom.partial_quantile_integral(0.2, 0.9) == pytest.approx(
        ref.partial_quantile_integral(0.2, 0.9), rel=1e-10)
    assert custom.cdf(2.0) == pytest.approx(ref.cdf(2.0), abs=1e-12)


def test_quantile_function_rejects_infinite_mean():
    with pytest.raises(InfiniteMeanError):
        QuantileFunction(lambda t: 1.0 / (1.0 - t))


@pytest.mark.parametrize("dist", LAWS, ids=repr)
def test_partial_integral_over_unit_interval_is_mean(dist):
    assert dist.partial_quantile_integral(0.0, 1.0) == pytest.approx(dist.mean, rel=1e-9)


@pytest.mark.parametrize("dist", LAWS, ids=repr)
@settings(max_examples=60, deadline=None)
@given(t=st.floats(0.0, 1.0), t2=st.floats(0.0, 1.0))
def test_galois_and_monotone(dist, t, t2):
    x = dist.quantile(t)
    if math.isfinite(x):
        assert dist.cdf(x) >= t
        assert dist.quantile(dist.cdf(x)) <= x
    lo, hi = sorted((t, t2))
    assert dist.quantile(lo) <= dist.quantile(hi)


@pytest.mark.parametrize("dist", LAWS, ids=repr)
@settings(max_examples=40, deadline=None)
@given(x=st.floats(-10.0, 50.0))
def test_cdf_quantile_galois_in_x(dist, x):
    t = dist.cdf(x)
    if t > 0:
        assert dist.quantile(t) <= x
    assert dist.cdf_left(x) <= t


@pytest.mark.parametrize("dist", LAWS, ids=repr)
@settings(max_examples=40, deadline=None)
@given(p=st.floats(0.0, 0.98), gap=st.floats(0.01, 1.0), r=st.floats(0.0, 1.0))
def test_partial_integral_additive(dist, p, gap, r):
    q = min(p + gap, 1.0)
    m = p + r * (q - p)
    if not (p < m < q):
        return
    whole = dist.partial_quantile_integral(p, q)
    split = dist.partial_quantile_integral(p, m) + dist.partial_quantile_integral(m, q)
    assert split == pytest.approx(whole, rel=1e-10, abs=1e-12)
