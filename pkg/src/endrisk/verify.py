"""Independent oracles and statistical audits.

The oracles here deliberately avoid the closed forms and the integrated
quantile used in production: H is rebuilt from raw adaptive quadrature of
the quantile function on a dense grid, and roots are found with Brent's
method.  Statistical checks return :class:`VerificationReport` records.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize, stats

from .errors import BudgetError, DomainError
from .marginal import Bernoulli, MarginalDistribution, Pareto, Uniform
from .residual import ResidualTransform
from .riskagg import mu_pq, var_envelope, var_es_equivalence
from .rng import replicate_generator, slot_words, to_unit
from .sampler import (EndBatch, Scenario, ScenarioKind, centered_partial_sums, counting_check,
                      deviation_envelope, end_batch, sample_paths, variance_with_se)

# asymptotic Kolmogorov quantile at the 1% level
KS_C01 = 1.628


def digest(obj) -> str:
    """Short stable digest of a JSON-serialisable description."""
    text = json.dumps(obj, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class VerificationReport:
    """Outcome of one check; ``passed`` is decided by statistic vs threshold."""

    name: str
    inputs_digest: str
    statistic: object
    threshold: object
    passed: bool
    runtime: float = 0.0
    details: dict = field(default_factory=dict)

    def to_json(self, include_runtime: bool = False) -> str:
        d = asdict(self)
        if not include_runtime:
            d.pop("runtime")
        return json.dumps(_plain(d), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "VerificationReport":
        return cls(**json.loads(text))


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        rep = fn(*args, **kwargs)
        rep.runtime = time.perf_counter() - t0
        return rep
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# brute-force oracles
# ---------------------------------------------------------------------------

def _quad(f, a, b, points=None):
    if b <= a:
        return 0.0
    pts = [x for x in (points or ()) if a < x < b] or None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(f, a, b, points=pts, limit=200, epsabs=1e-14, epsrel=1e-13)[0]


class BruteForce:
    """Residual machinery rebuilt from raw quadrature of the quantile.

    Parameters
    ----------
    dist : MarginalDistribution
    cells : int
        Number of grid cells used to tabulate H before root polishing.
    breakpoints : sequence of float
        Levels where the quantile jumps or kinks (handed to quad).
    """

    def __init__(self, dist: MarginalDistribution, cells: int = 256, breakpoints=()):
        self.dist = dist
        # raw hook: skips argument validation, which dominates scalar calls
        self.q = lambda t: float(dist._q(np.asarray(min(max(t, 0.0), 1.0))))
        self.points = sorted(set(float(b) for b in breakpoints))
        self.mu = _quad(self.q, 0.0, 1.0, self.points)
        self.nu = self._level_where(lambda x: x < self.mu)
        self.nu_plus = self._level_where(lambda x: x <= self.mu)
        grid = np.unique(np.concatenate([np.linspace(0.0, 1.0, cells + 1),
                                         [self.nu, self.nu_plus]]))
        incr = [_quad(lambda t: self.q(t) - self.mu, a, b, self.points)
                for a, b in zip(grid[:-1], grid[1:])]
        self.grid = grid
        self.hgrid = np.concatenate([[0.0], np.cumsum(incr)])
        self.c = float(self.hgrid[np.searchsorted(grid, self.nu)])

    def _level_where(self, pred):
        # sup{t : pred(Q(t))} by bisection
        lo, hi = 0.0, 1.0
        if not pred(self.q(1e-300)):
            return 0.0
        if pred(self.q(1.0)):
            return 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if pred(self.q(mid)):
                lo = mid
            else:
                hi = mid
        return lo

    def h(self, s):
        i = min(max(int(np.searchsorted(self.grid, s, side="right")) - 1, 0), self.grid.size - 2)
        return float(self.hgrid[i]) + _quad(lambda t: self.q(t) - self.mu, self.grid[i], s, self.points)

    def _root(self, target, lo, hi):
        f = lambda s: self.h(s) - target
        flo, fhi = f(lo), f(hi)
        if flo == 0.0:
            return lo
        if fhi == 0.0:
            return hi
        if flo * fhi > 0:
            return lo if abs(flo) < abs(fhi) else hi
        return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)

    def branches(self, s):
        """(A(s), B(s)) located on the grid and polished with brentq."""
        if s <= self.c:
            return self.nu_plus, self.nu_plus
        g, hg = self.grid, self.hgrid
        ia = np.nonzero((g <= self.nu) & (hg <= s))[0]
        i = int(ia[0]) if ia.size else 0
        a = self._root(s, g[max(i - 1, 0)], g[i])
        ib = np.nonzero((g >= self.nu_plus) & (hg <= s))[0]
        j = int(ib[-1])
        b = self._root(s, g[j], g[min(j + 1, g.size - 1)])
        return a, b

    def k_quantile(self, q):
        """y with K(y) = q, from the matched pair A + (1 - B) = 1 - q."""
        if q <= self.nu_plus - self.nu:
            return self.c
        w = 1.0 - q
        f = lambda a: self.h(1.0 - (w - a)) - self.h(a)
        lo = max(0.0, w - (1.0 - self.nu_plus))
        hi = min(self.nu, w)
        if hi <= lo:
            return self.h(lo)
        a = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200) \
            if f(lo) * f(hi) < 0 else (lo if abs(f(lo)) < abs(f(hi)) else hi)
        return 0.5 * (self.h(a) + self.h(1.0 - (w - a)))

    def mu_pq(self, p, q):
        return _quad(self.q, p, q, self.points) / (q - p)


def breakpoints_of(dist: MarginalDistribution):
    """Levels where the quantile of a built-in law jumps or kinks."""
    if isinstance(dist, Bernoulli):
        return [1.0 - dist.p]
    ts = getattr(dist, "ts", None)
    return list(ts) if ts is not None else []


def oracle_branch_inverse(dist: MarginalDistribution, s: float, oracle: Optional[BruteForce] = None):
    """(A(s), B(s)) from raw quadrature and Brent's method, no caches."""
    oracle = oracle or BruteForce(dist, breakpoints=breakpoints_of(dist))
    if not oracle.c - 1e-12 <= s <= 0.0:
        raise DomainError("s must lie in [c, 0]")
    return oracle.branches(s)


@_timed
def oracle_equivalence(dist: MarginalDistribution, count: int = 200, seed: int = 0,
                       tol: float = 1e-8, name: str = "") -> VerificationReport:
    """Compare branches, K quantiles and mu_{p,q} with brute force on random inputs."""
    rt = ResidualTransform(dist)
    bf = BruteForce(dist, breakpoints=breakpoints_of(dist))
    rng = replicate_generator(seed, "oracle", 0)
    s = rt.c * rng.random(count)
    A, B = rt.branches(s)
    ob = np.array([bf.branches(x) for x in s])
    err_branch = float(max(np.abs(A - ob[:, 0]).max(), np.abs(B - ob[:, 1]).max()))
    qs = 1.0 - rng.random(count)
    yk = np.asarray(rt.k_quantile(qs))
    oy = np.array([bf.k_quantile(x) for x in qs])
    err_k = float(np.abs(yk - oy).max())
    pq = np.sort(rng.random((count, 2)), axis=1)
    pq[:, 1] = np.where(rng.random(count) < 0.1, 1.0, pq[:, 1])
    prod = np.array([mu_pq(dist, a, b) for a, b in pq])
    orc = np.array([bf.mu_pq(a, b) for a, b in pq])
    err_mu = float((np.abs(prod - orc) / np.maximum(1.0, np.abs(orc))).max())
    stat = {"branch": err_branch, "k_quantile": err_k, "mu_pq": err_mu}
    return VerificationReport(
        name=f"oracle_equivalence[{name or dist.kind}]",
        inputs_digest=digest([dist.params, count, seed]),
        statistic=stat, threshold=tol, passed=max(stat.values()) <= tol,
        details={"nu": bf.nu, "nu_plus": bf.nu_plus, "c": bf.c, "c_production": rt.c},
    )


# ---------------------------------------------------------------------------
# distributional checks
# ---------------------------------------------------------------------------

def _atoms(dist):
    xs = np.unique(dist.quantile(np.linspace(0.0, 1.0, 4097)[1:]))
    mass = np.asarray(dist.cdf(xs)) - np.asarray(dist.cdf_left(xs))
    keep = mass > 0
    return xs[keep], mass[keep]


def marginal_test(dist: MarginalDistribution, sample, seed: int, name: str) -> VerificationReport:
    """Two-sample KS against direct quantile draws, or frequency test for atoms."""
    sample = np.asarray(sample, dtype=float).ravel()
    N = sample.size
    if dist.is_discrete:
        xs, mass = _atoms(dist)
        freq = np.array([(sample == x).mean() for x in xs])
        se = np.sqrt(mass * (1.0 - mass) / N)
        z = np.where(se > 0, np.abs(freq - mass) / np.where(se > 0, se, 1.0), 0.0)
        stat = float(z.max())
        return VerificationReport(name, digest([dist.params, N, seed]), stat, 3.0, stat < 3.0,
                                  details={"test": "frequency", "atoms": xs, "freq": freq, "mass": mass})
    ref = dist.quantile(to_unit(np.concatenate(
        [slot_words(seed, "ks-reference", (N + 3) // 4).ravel()]))[:N])
    ks = stats.ks_2samp(sample, ref)
    thr = KS_C01 / math.sqrt(N * N / (2.0 * N))
    return VerificationReport(name, digest([dist.params, N, seed]), float(ks.statistic), thr,
                              float(ks.statistic) < thr, details={"test": "ks_2samp", "n": N})


@_timed
def ks_marginal(rt: ResidualTransform, scenario, n: int, reps: int, seed: int,
                budget: int = 10**7) -> VerificationReport:
    """Coordinate n of each replicate path, pooled, against direct draws of F."""
    if n * reps > budget:
        raise BudgetError(f"n * reps = {n * reps} exceeds budget {budget}")
    scen = Scenario.parse(scenario)
    if scen.kind is ScenarioKind.END:
        x = end_batch(rt, reps, seed).values(n, 1)[:, 0]
    else:
        x = sample_paths(rt, scen, n, reps, seed)[:, n - 1]
    return marginal_test(rt.dist, x, seed, f"ks_marginal[{rt.dist.kind},{scen.name},k={n}]")


@_timed
def marginal_preservation(rt: ResidualTransform, N: int, seed: int) -> VerificationReport:
    """Q(A(Y)) on {U >= u(Y)} else Q(B(Y)) must again have law F."""
    words = slot_words(seed, "preserve", N)
    b = EndBatch.from_words(rt, words)
    U = to_unit(words[:, 2])
    x = np.where(U >= b.u, b.w2, b.w1)
    return marginal_test(rt.dist, x, seed + 1, f"marginal_preservation[{rt.dist.kind}]")


@_timed
def residual_uniformity(rt: ResidualTransform, N: int, seed: int, cdf=None) -> VerificationReport:
    """One-sample KS of residual samples against a reference CDF."""
    q = 1.0 - to_unit(slot_words(seed, "residual", (N + 3) // 4).ravel()[:N])
    z = rt.residual_sample(q)
    cdf = cdf or (lambda x: np.clip(x, 0.0, 1.0))
    d = float(stats.kstest(z, cdf).statistic)
    thr = 1.63 / math.sqrt(N)
    return VerificationReport(f"residual_ks[{rt.dist.kind}]", digest([rt.dist.params, N, seed]),
                              d, thr, d < thr, details={"n": N})


@_timed
def residual_cdf_check(rt: ResidualTransform, closed_form, x_grid, tol=1e-6, name="") -> VerificationReport:
    err = float(np.abs(rt.residual_cdf(x_grid) - closed_form(x_grid)).max())
    return VerificationReport(f"residual_cdf[{name or rt.dist.kind}]",
                              digest([rt.dist.params, len(x_grid)]), err, tol, err < tol)


# ---------------------------------------------------------------------------
# variance, envelopes, tails
# ---------------------------------------------------------------------------

def _slope(n, y, se=None):
    x = np.log(np.asarray(n, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    dof = max(len(x) - 2, 1)
    sigma2 = float(np.sum((ly - A @ coef) ** 2)) / dof
    cov = sigma2 * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0)))


@_timed
def variance_curve(rt: ResidualTransform, scenario, n_list, reps: int, seed: int,
                   expected_slope: Optional[float] = None, slope_tol: float = 0.1,
                   bound: Optional[float] = None) -> VerificationReport:
    """Var(S_n) with standard errors, and the log-log slope over n.

    Pass criterion: slope within ``slope_tol`` of ``expected_slope`` when
    given; every estimate at most ``bound`` + 3 SE when a bound is given.
    """
    scen = Scenario.parse(scenario)
    dev = centered_partial_sums(rt, scen, n_list, reps, seed)
    var, se = variance_with_se(dev, axis=0)
    ok = True
    slope = slope_se = math.nan
    if np.all(var > 0):
        slope, slope_se = _slope(n_list, var)
    stat = {"slope": slope}
    thr = {}
    if expected_slope is not None:
        ok = ok and abs(slope - expected_slope) <= slope_tol
        thr["slope"] = [expected_slope - slope_tol, expected_slope + slope_tol]
    if bound is not None:
        excess = var - (bound + 3.0 * se)
        stat["max_excess"] = float(excess.max())
        thr["bound"] = bound
        ok = ok and bool(np.all(excess <= 0))
    return VerificationReport(
        f"variance_curve[{rt.dist.kind},{scen.name}]",
        digest([rt.dist.params, scen.name, list(map(int, n_list)), reps, seed]),
        stat, thr, ok,
        details={"n": list(map(int, n_list)), "var": var, "stderr": se, "slope_se": slope_se},
    )


@dataclass(frozen=True)
class TailIndexResult:
    estimate: float
    ci: tuple
    k: int
    applicable: bool


def tail_index(samples, frac: float = 0.05, support_upper: float = math.inf,
               boot: int = 200, seed: int = 0) -> TailIndexResult:
    """Hill estimate of the tail index from the top ``frac`` order statistics.

    Returns a not-applicable result for laws with a finite upper endpoint.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 10_000:
        raise BudgetError("tail index needs at least 1e4 samples")
    if math.isfinite(support_upper):
        return TailIndexResult(math.nan, (math.nan, math.nan), 0, False)
    k = max(int(frac * x.size), 2)

    def hill(v):
        top = np.partition(v, v.size - k - 1)[v.size - k - 1:]
        thr = top.min()
        if not thr > 0:
            return math.nan
        return 1.0 / float(np.mean(np.log(top[top > thr] / thr)) if np.any(top > thr) else math.nan)

    est = hill(x)
    rng = replicate_generator(seed, "hill-bootstrap", 0)
    bs = np.array([hill(x[rng.integers(0, x.size, x.size)]) for _ in range(boot)])
    lo, hi = np.nanpercentile(bs, [2.5, 97.5])
    return TailIndexResult(est, (float(lo), float(hi)), k, True)


@_timed
def tail_decay(rt: ResidualTransform, n: int, reps: int, seed: int, ks=(2, 4, 8, 16),
               max_slope: Optional[float] = None) -> VerificationReport:
    """Empirical P(|S_n - n mu| > k) and its log-log slope in k."""
    b = end_batch(rt, reps, seed)
    dev = np.abs(b.centered_scan([n])[0][:, 0])
    probs = np.array([(dev > k).mean() for k in ks])
    slope = _slope(ks, probs)[0] if np.all(probs > 0) else -math.inf
    ok = True if max_slope is None else slope <= max_slope
    return VerificationReport(f"tail_decay[{rt.dist.kind}]", digest([rt.dist.params, n, reps, seed]),
                              slope, max_slope, ok, details={"k": list(ks), "prob": probs})


@_timed
def envelope_check(rt: ResidualTransform, n_list, reps: int, seed: int) -> VerificationReport:
    rows = deviation_envelope(rt, n_list, reps, seed)
    worst = max(r.max_excess - r.tolerance for r in rows)
    return VerificationReport(f"deviation_envelope[{rt.dist.kind}]",
                              digest([rt.dist.params, list(map(int, n_list)), reps, seed]),
                              worst, 0.0, all(r.within for r in rows),
                              details={"rows": [asdict(r) for r in rows]})


@_timed
def closed_form_identity(rt: ResidualTransform, n: int, reps: int, seed: int) -> VerificationReport:
    """Summed END paths against the closed-form deviation, relative to n 2^-48 scale."""
    b = end_batch(rt, reps, seed)
    ns = np.unique(np.array([1, 2, 3, 10, 1000, n // 3, n]))
    ns = ns[ns >= 1]
    summed = b.centered_scan(ns)[0]
    closed = b.deviation_closed_form(ns)
    scale = np.maximum(np.maximum(np.abs(b.w1), np.abs(b.w2)), 1.0)
    ratio = np.abs(summed - closed) / (ns[None, :] * 2.0 ** -48 * scale[:, None])
    stat = float(ratio.max())
    return VerificationReport(f"closed_form_identity[{rt.dist.kind}]",
                              digest([rt.dist.params, n, reps, seed]), stat, 1.0, stat <= 1.0)


@_timed
def counting_identity(rt: ResidualTransform, n: int, reps: int, seed: int,
                      bound: Optional[float] = None) -> VerificationReport:
    """Exact integer check of floor(n u) <= count <= floor(n u) + 1 on every prefix."""
    b = end_batch(rt, reps, seed)
    ok, worst = counting_check(b, n)
    dev = worst * float(np.max(b.z))
    passed = ok and (bound is None or dev <= bound)
    return VerificationReport(f"counting_identity[{rt.dist.kind}]",
                              digest([rt.dist.params, n, reps, seed]),
                              {"max_abs_count_dev": worst, "max_abs_sum_dev": dev},
                              bound, passed, details={"identity_exact": ok})


# ---------------------------------------------------------------------------
# coupling search
# ---------------------------------------------------------------------------

def _stratified(rng, m, lo, hi):
    return lo + (hi - lo) * (np.arange(m) + rng.random(m)) / m


def _empirical_var(sums, k):
    return float(np.partition(sums, k)[k])


def _boot_se(groups, k, rng, boot=200):
    # stratified bootstrap: resample each group separately
    vals = np.empty(boot)
    for i in range(boot):
        parts = [g[rng.integers(0, g.size, g.size)] for g in groups if g.size]
        vals[i] = _empirical_var(np.concatenate(parts), k)
    return float(vals.std(ddof=1))


@_timed
def coupling_search_var(dist: MarginalDistribution, p: float, n: int, reps: int, seed: int,
                        q_grid_size: int = 64, shuffles: int = 4) -> VerificationReport:
    """Largest empirical VaR_p(S_n) over a few couplings, against the bracket.

    Couplings: comonotonic, independent, random shuffles of a stratified
    quantile sample, and the tail construction: comonotone on [0, p], END on
    F restricted to (p, q*], comonotone above q*.
    """
    if n > 64:
        raise DomainError("coupling search is limited to n <= 64")
    if reps < 100:
        raise BudgetError("coupling search needs at least 100 replicates")
    rep = var_envelope(dist, p, n, q_grid_size)
    lower, upper = rep.var_sup
    qs = rep.q_star_sup
    k = int(math.ceil(p * reps - 1e-9)) - 1          # 0-based order statistic
    rng = replicate_generator(seed, "coupling", 0)
    found = {}

    u0 = _stratified(rng, reps, 0.0, 1.0)
    como = n * np.asarray(dist.quantile(u0))
    found["comonotonic"] = (_empirical_var(como, k), _boot_se([como], k, rng))

    indep = np.asarray(dist.quantile(rng.random((reps, n)))).sum(axis=1)
    found["independent"] = (_empirical_var(indep, k), _boot_se([indep], k, rng))

    base = np.asarray(dist.quantile(_stratified(rng, reps, 0.0, 1.0)))
    for j in range(shuffles):
        cols = np.stack([rng.permutation(base) for _ in range(n)], axis=1).sum(axis=1)
        found[f"shuffle{j}"] = (_empirical_var(cols, k), _boot_se([cols], k, rng))

    m_low = k
    m_tail = reps - m_low
    low = n * np.asarray(dist.quantile(_stratified(rng, m_low, 0.0, p))) if m_low else np.empty(0)
    ut = _stratified(rng, m_tail, p, 1.0)
    mid = ut <= qs
    tail = np.empty(m_tail)
    if np.any(mid):
        rt = ResidualTransform(dist.conditional_restrict(p, qs))
        b = end_batch(rt, int(mid.sum()), seed, start=0)
        tail[mid] = b.values(1, n).sum(axis=1)
    tail[~mid] = n * np.asarray(dist.quantile(ut[~mid]))
    found["end_tail"] = (_empirical_var(np.concatenate([low, tail]), k),
                         _boot_se([low, tail], k, rng))

    best = max(found, key=lambda c: found[c][0])
    val, se = found[best]
    tol = 3.0 * se
    ok = (lower - tol) <= val <= (upper + tol)
    return VerificationReport(
        f"coupling_search_var[{dist.kind},p={p!r},n={n}]",
        digest([dist.params, p, n, reps, seed, q_grid_size]),
        {"max_var": val, "coupling": best, "stderr": se},
        {"lower": lower - tol, "upper": upper + tol}, ok,
        details={"bracket": [lower, upper], "q_star": qs,
                 "couplings": {c: list(v) for c, v in found.items()}},
    )


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

BUDGETS = {"small": 1, "medium": 4, "large": 16}


def _scale(budget) -> int:
    if isinstance(budget, str):
        if budget in BUDGETS:
            return BUDGETS[budget]
        budget = int(budget)
    if budget < 1:
        raise BudgetError("budget must be positive")
    return int(budget)


def suite_residual(budget="small", seed: int = 0):
    f = _scale(budget)
    reps = []
    for d in (Bernoulli(0.3), Uniform(0.0, 1.0), Pareto(2.0), Pareto(3.0)):
        reps.append(oracle_equivalence(d, count=min(200, 25 * f), seed=seed))
    u = ResidualTransform(Uniform(0.0, 1.0))
    p2 = ResidualTransform(Pareto(2.0))
    reps.append(residual_uniformity(u, 20_000 * f, seed))
    x = np.geomspace(0.1, 100.0, 400)
    closed = lambda x: np.sqrt(1.0 + 4.0 / x ** 2) - 2.0 / x
    reps.append(residual_cdf_check(ResidualTransform(Pareto(2.0), analytic=False), closed, x,
                                   name="pareto2,numeric"))
    for d in (Uniform(0.0, 1.0), Pareto(3.0), Bernoulli(0.3)):
        reps.append(marginal_preservation(ResidualTransform(d), 20_000 * f, seed))
    t0 = time.perf_counter()
    z = p2.residual_sample(1.0 - to_unit(slot_words(seed, "hill", 25_000 * f).ravel()))
    ti = tail_index(z, seed=seed)
    reps.append(VerificationReport("tail_index[pareto2 residual]", digest(["hill", f, seed]),
                                   ti.estimate, [0.8, 1.2], 0.8 <= ti.estimate <= 1.2,
                                   runtime=time.perf_counter() - t0, details={"ci": ti.ci, "k": ti.k}))
    m = ResidualTransform(Pareto(2.0), analytic=False).residual_moment(0.75)
    reps.append(VerificationReport("moment_relation[pareto2,k=0.75]", digest(["moment", 0.75]),
                                   m, "finite", math.isfinite(m)))
    return reps


def suite_sampler(budget="small", seed: int = 0):
    f = _scale(budget)
    n_big = 10 ** 5 * f
    reps = []
    for p in (0.3, round(1.0 / math.sqrt(2.0), 12), 0.5):
        reps.append(counting_identity(ResidualTransform(Bernoulli(p)), n_big, 16, seed, bound=1.0))
    for d in (Bernoulli(0.3), Uniform(0.0, 1.0), Pareto(2.0)):
        rt = ResidualTransform(d)
        reps.append(closed_form_identity(rt, n_big, 25, seed))
        reps.append(envelope_check(rt, [1, 10, 100, n_big // 10], 16, seed))
        reps.append(ks_marginal(rt, "end", 7, 10_000 * f, seed))
    u = ResidualTransform(Uniform(0.0, 1.0))
    reps.append(variance_curve(u, "end", [1, 10, 100, 1000], 2_500 * f, seed, bound=1.0 / 12.0))
    ns = [16, 64, 256, 1024, 4096]
    reps.append(variance_curve(u, "iid", ns, 500 * f, seed, expected_slope=1.0, slope_tol=0.1))
    reps.append(variance_curve(u, "comonotone", ns, 500 * f, seed, expected_slope=2.0, slope_tol=0.05))
    reps.append(tail_decay(ResidualTransform(Pareto(2.0)), 1000, 20_000 * f, seed, max_slope=-0.7))
    return reps


def suite_bounds(budget="small", seed: int = 0):
    f = _scale(budget)
    reps = []
    for d in (Uniform(0.0, 1.0), Pareto(3.0)):
        for p in (0.9, 0.99):
            for n in (8, 64):
                reps.append(coupling_search_var(d, p, n, 5_000 * f, seed))
    t0 = time.perf_counter()
    rows = var_es_equivalence(Uniform(0.0, 1.0), 0.9, [10, 100, 1000])
    err = max(abs(r.lower_ratio - (1.0 - 0.1 / (0.95 * r.n))) for r in rows)
    reps.append(VerificationReport("var_es_equivalence[uniform]", digest(["eq-u"]), err, 1e-12,
                                   err <= 1e-12, runtime=time.perf_counter() - t0))
    rows = var_es_equivalence(Pareto(3.0), 0.9, [10 ** 2, 10 ** 3, 10 ** 4, 10 ** 5], k=2.5)
    slope = _slope([r.n for r in rows], [r.deficit for r in rows])[0]
    thr = -(1.0 - 1.0 / 2.5) + 0.15
    reps.append(VerificationReport("var_es_equivalence[pareto3]", digest(["eq-p3"]), slope, thr,
                                   slope <= thr, details={"deficit": [r.deficit for r in rows]}))
    return reps


SUITES = {"residual": suite_residual, "sampler": suite_sampler, "bounds": suite_bounds}


def run_suite(name: str, budget="small", seed: int = 0):
    """Run one suite, or every suite for ``all``."""
    if name == "all":
        return [r for s in ("residual", "sampler", "bounds") for r in SUITES[s](budget, seed)]
    if name not in SUITES:
        raise DomainError(f"unknown suite {name!r}")
    return SUITES[name](budget, seed)
