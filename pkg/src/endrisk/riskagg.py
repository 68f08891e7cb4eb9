"""Bounds for risk aggregation when only the marginal law is known.

For S = X_1 + ... + X_n with every X_i ~ F and unknown dependence:

* sup VaR_p(S) lies in [max_q n mu_{p,q} - (Q(q) - Q(p)),  n mu_{p,1}]
* inf VaR_p(S) lies in [n mu_{0,p},  min_q n mu_{q,p} + (Q(p) - Q(q))]
* inf TVaR_p(S) lies in [n mu, n mu + width], sup TVaR_p(S) = n mu_{p,1}
* for convex g and support [a, b],
  g(n mu) <= inf E g(S) <= (g(n mu + (b - a)) + g(n mu - (b - a))) / 2

where mu_{p,q} is the average of the quantile function over [p, q].
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConvexityError, DomainError, UnsupportedCaseError
from .marginal import MarginalDistribution
from .residual import ResidualTransform

__all__ = [
    "RiskBoundReport",
    "mu_pq",
    "var_risk",
    "tvar_risk",
    "var_envelope",
    "tvar_envelope",
    "convex_sandwich",
    "convex_function",
    "superadditive_ratio",
    "var_es_equivalence",
]


@dataclass
class RiskBoundReport:
    """Brackets for VaR/TVaR of the aggregate at level p and size n.

    Pairs are (lower, upper); fields left as None were not requested.
    ``q_trace`` lists (q, objective) for every grid point that was tried on
    the sup-VaR side.
    """

    p: float
    n: int
    var_sup: Optional[tuple] = None
    var_inf: Optional[tuple] = None
    tvar_inf: Optional[tuple] = None
    tvar_sup: Optional[float] = None
    q_star_sup: Optional[float] = None
    q_star_inf: Optional[float] = None
    q_trace: list = field(default_factory=list, repr=False)
    flags: list = field(default_factory=list)

    def to_dict(self, trace: bool = False) -> dict:
        d = asdict(self)
        if not trace:
            d.pop("q_trace")
        return d


def _check_p(p, open_right=True):
    if not (0.0 < p < 1.0):
        raise DomainError(f"level p must lie in (0, 1), got {p}")


def mu_pq(dist: MarginalDistribution, p: float, q: float) -> float:
    """Average of the quantile over [p, q]; may be +inf when q = 1."""
    if not 0.0 <= p < q <= 1.0:
        raise DomainError(f"need 0 <= p < q <= 1, got p={p}, q={q}")
    return float(dist.partial_quantile_integral(p, q)) / (q - p)


def var_risk(dist: MarginalDistribution, p: float) -> float:
    """VaR_p(X) = Q(p)."""
    _check_p(p)
    return float(dist.quantile(p))


def tvar_risk(dist: MarginalDistribution, p: float) -> float:
    """TVaR_p(X) = mu_{p,1}."""
    _check_p(p)
    return mu_pq(dist, p, 1.0)


# ---------------------------------------------------------------------------
# q grids
# ---------------------------------------------------------------------------

def _geometric(hi, lo, m):
    if m <= 1:
        return np.array([hi])
    return hi * (lo / hi) ** (np.arange(m) / (m - 1))


def _nested_offsets(span, grid):
    """Offsets in (0, span): geometric from span(1 - 1/G) to span/(16G),
    united with the same construction at G/2, G/4, ... so that a larger
    grid always contains a smaller one."""
    pts = []
    g = int(grid)
    while g >= 2:
        pts.append(_geometric(span * (1.0 - 1.0 / g), span / (16.0 * g), g))
        g //= 2
    return np.unique(np.concatenate(pts)) if pts else np.empty(0)


def _dyadic_offsets(span, n):
    # independent of the grid size; reaches well below the span/n scale
    depth = int(math.ceil(math.log2(64.0 * max(n, 1)))) + 8
    return span * np.exp2(-np.arange(1, depth + 1, dtype=float))


def _sup_objective(dist, p, n, w):
    """n mu_{p,1-w} - (Q(1-w) - Q(p)), with the tail integral taken in w."""
    w = np.asarray(w, dtype=float)
    head = float(dist._integral(p, 1.0))
    with np.errstate(invalid="ignore", over="ignore"):
        inner = (head - dist._upper_integral(w)) / ((1.0 - p) - w)
        return n * inner - (dist._q_upper(w) - float(dist._q(np.asarray(p))))


def _inf_objective(dist, p, n, q):
    q = np.asarray(q, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        inner = dist._integral(q, p) / (p - q)
        return n * inner + (float(dist._q(np.asarray(p))) - dist._q(q))


def var_envelope(dist: MarginalDistribution, p: float, n: int, q_grid_size: int = 64,
                 k: Optional[float] = None) -> RiskBoundReport:
    """sup-VaR and inf-VaR brackets for the sum of n copies of F.

    Parameters
    ----------
    q_grid_size : int
        Base number of q points (at least 2).  The grid is nested in this
        argument, so doubling it never lowers the sup-VaR lower bound.
    k : float, optional
        Moment order; adds the points q = F(a n^(1/k)) for a in {1, 2, 4}.
    """
    _check_p(p)
    if n < 1 or q_grid_size < 2:
        raise DomainError("need n >= 1 and grid >= 2")
    lo_s, hi_s = dist.support
    span = 1.0 - p

    # sup side: offsets w = 1 - q in (0, 1 - p]
    w = np.concatenate([_nested_offsets(span, q_grid_size), _dyadic_offsets(span, n)])
    if k is not None:
        if not k > 0:
            raise DomainError("moment order must be positive")
        xs = np.array([1.0, 2.0, 4.0]) * float(n) ** (1.0 / k)
        wr = 1.0 - np.asarray(dist.cdf(xs), dtype=float)
        w = np.concatenate([w, wr[(wr > 0) & (wr < span)]])
    w = np.unique(w[(w > 0) & (w < span)])
    vals = _sup_objective(dist, p, n, w)
    qs = list(1.0 - w)
    vals = list(np.where(np.isfinite(vals), vals, -np.inf))
    if math.isfinite(hi_s):
        qs.append(1.0)
        vals.append(n * mu_pq(dist, p, 1.0) - (hi_s - float(dist.quantile(p))))
    i = int(np.argmax(vals))
    sup_lower, q_star = float(vals[i]), float(qs[i])
    sup_upper = n * mu_pq(dist, p, 1.0)

    # inf side: q in [0, p)
    ql = p - np.concatenate([_nested_offsets(p, q_grid_size), _dyadic_offsets(p, n)])
    ql = np.unique(ql[(ql > 0) & (ql < p)])
    ivals = list(np.where(np.isfinite(v := _inf_objective(dist, p, n, ql)), v, np.inf))
    iq = list(ql)
    if math.isfinite(lo_s):
        iq.append(0.0)
        ivals.append(n * mu_pq(dist, 0.0, p) + (float(dist.quantile(p)) - lo_s))
    j = int(np.argmin(ivals))
    inf_upper, q_star_inf = float(ivals[j]), float(iq[j])
    inf_lower = n * mu_pq(dist, 0.0, p)

    flags = []
    if not math.isfinite(sup_upper):
        flags.append("sup_upper_infinite")
    return RiskBoundReport(
        p=p, n=int(n),
        var_sup=(sup_lower, sup_upper), var_inf=(inf_lower, inf_upper),
        q_star_sup=q_star, q_star_inf=q_star_inf,
        q_trace=sorted(zip(map(float, qs), map(float, vals))), flags=flags,
    )


def tvar_envelope(dist: MarginalDistribution, p: float, n: int,
                  rt: Optional[ResidualTransform] = None) -> RiskBoundReport:
    """inf-TVaR bracket and sup-TVaR value.

    The bracket width is b - a for bounded support and otherwise TVaR_p of
    the residual law, which needs a finite second moment of F.
    """
    _check_p(p)
    if n < 1:
        raise DomainError("n must be positive")
    lo, hi = dist.support
    mu = dist.mean
    flags = []
    if math.isfinite(lo) and math.isfinite(hi):
        width = hi - lo
    elif not math.isfinite(dist.moment(2.0)):
        width = math.inf
        flags.append("infinite_second_moment")
    else:
        rt = rt or ResidualTransform(dist)
        width = rt.residual_tvar(p)
    return RiskBoundReport(p=p, n=int(n), tvar_inf=(n * mu, n * mu + width),
                           tvar_sup=n * tvar_risk(dist, p), flags=flags)


# ---------------------------------------------------------------------------
# convex functionals
# ---------------------------------------------------------------------------

def convex_function(kind: str, value: float) -> Callable:
    """One of the supported convex test functions.

    ``quad`` is (x - value)^2, ``abs`` is |x - value| and ``stoploss`` is
    the stop-loss payoff max(x - value, 0).
    """
    if kind == "quad":
        return lambda x: (np.asarray(x, dtype=float) - value) ** 2
    if kind == "abs":
        return lambda x: np.abs(np.asarray(x, dtype=float) - value)
    if kind == "stoploss":
        return lambda x: np.maximum(np.asarray(x, dtype=float) - value, 0.0)
    raise DomainError(f"unknown convex function {kind!r}")


def _spot_check_convex(g, lo, hi, rng, trials=64):
    x = rng.uniform(lo, hi, size=trials)
    y = rng.uniform(lo, hi, size=trials)
    gm = np.asarray(g(0.5 * (x + y)), dtype=float)
    avg = 0.5 * (np.asarray(g(x), dtype=float) + np.asarray(g(y), dtype=float))
    slack = 1e-12 * np.maximum(1.0, np.abs(avg))
    bad = gm > avg + slack
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ConvexityError(f"midpoint inequality fails at x={x[i]!r}, y={y[i]!r}")


def convex_sandwich(dist: MarginalDistribution, g: Callable, n: int, seed: int = 0):
    """(g(n mu), (g(n mu + d) + g(n mu - d)) / 2) with d = b - a."""
    lo, hi = dist.support
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise UnsupportedCaseError("convex sandwich needs bounded support")
    if n < 1:
        raise DomainError("n must be positive")
    d = hi - lo
    m = n * dist.mean
    _spot_check_convex(g, min(n * lo, m - d), max(n * hi, m + d), np.random.default_rng(seed))
    lower = float(g(m))
    upper = float(0.5 * (g(m + d) + g(m - d)))
    return lower, upper


# ---------------------------------------------------------------------------
# ratios
# ---------------------------------------------------------------------------

def superadditive_ratio(dist: MarginalDistribution, p: float, n: int, q_grid_size: int = 64):
    """sup-VaR of the sum over n VaR_p(X), bracketed, and its large-n limit."""
    v = var_risk(dist, p)
    if not v > 0:
        raise DomainError("superadditive ratio needs VaR_p(X) > 0")
    rep = var_envelope(dist, p, n, q_grid_size)
    lo, hi = rep.var_sup
    limit = tvar_risk(dist, p) / v
    return (lo / (n * v), hi / (n * v)), limit


@dataclass(frozen=True)
class EquivalenceRow:
    n: int
    lower_ratio: float
    upper_ratio: float
    deficit: float
    q_star: float


def var_es_equivalence(dist: MarginalDistribution, p: float, n_list: Sequence[int],
                       k: Optional[float] = None, q_grid_size: int = 64):
    """sup-VaR over sup-TVaR, bracketed, for each n.

    The upper edge is 1 by construction; ``deficit`` is 1 minus the lower
    edge, which should decay like n^(-1 + 1/k) for a law with k moments.
    """
    t = tvar_risk(dist, p)
    if not (math.isfinite(t) and t != 0.0):
        raise DomainError("VaR/ES equivalence needs a finite, non-zero TVaR")
    rows = []
    for n in n_list:
        rep = var_envelope(dist, p, int(n), q_grid_size, k=k)
        lo, hi = rep.var_sup
        denom = int(n) * t
        rows.append(EquivalenceRow(int(n), lo / denom, hi / denom, 1.0 - lo / denom, rep.q_star_sup))
    return rows
