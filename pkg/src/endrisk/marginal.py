"""Marginal distributions described through their quantile function.

Every law exposes the left-continuous quantile Q(t) = inf{x : F(x) >= t},
the two one-sided CDFs, and the integrated quantile in both directions:

    P(s) = int_0^s Q(t) dt          (lower integral)
    T(v) = int_{1-v}^1 Q(t) dt      (upper integral)

Keeping both forms lets heavy upper tails be handled without cancellation,
which the residual transform relies on near t = 1.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from functools import cached_property

import numpy as np

from .errors import DomainError, InfiniteMeanError
from .quadrature import integrate_levels

__all__ = [
    "MarginalDistribution",
    "Bernoulli",
    "Uniform",
    "Pareto",
    "QuantileTable",
    "Empirical",
    "PointMass",
    "Affine",
    "Restricted",
    "QuantileFunction",
]


def _levels(t, name="t"):
    arr = np.asarray(t, dtype=float)
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise DomainError(f"{name} must lie in [0, 1]")
    return arr


def _ret(arr):
    arr = np.asarray(arr, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def _signed_power_antiderivative(x, k):
    # d/dx of sign(x)|x|^(k+1)/(k+1) is |x|^k
    return np.sign(x) * np.abs(x) ** (k + 1.0) / (k + 1.0)


class MarginalDistribution(ABC):
    """Base class for a univariate law F with finite mean.

    Subclasses implement ``_q``, ``_cdf``, ``_cdf_left``, ``_lower_integral``
    and ``_upper_integral`` on validated numpy arrays.  The public methods
    accept scalars or arrays and return the same shape.
    """

    kind = "abstract"
    #: True when F is purely atomic (frequency tests replace KS)
    is_discrete = False

    # -- subclass hooks -------------------------------------------------
    @abstractmethod
    def _q(self, t): ...

    def _q_upper(self, w):
        return self._q(1.0 - w)

    @abstractmethod
    def _cdf(self, x): ...

    @abstractmethod
    def _cdf_left(self, x): ...

    @abstractmethod
    def _lower_integral(self, s): ...

    @abstractmethod
    def _upper_integral(self, v): ...

    @property
    @abstractmethod
    def params(self) -> dict: ...

    # -- public API -----------------------------------------------------
    def quantile(self, t):
        """Left-continuous generalized inverse; Q(0) is the essential infimum."""
        return _ret(self._q(_levels(t)))

    def upper_quantile(self, w):
        """Q(1 - w), evaluated without forming 1 - w where that loses digits."""
        return _ret(self._q_upper(_levels(w, "w")))

    def cdf(self, x):
        """P(X <= x), nudged by a few ulps so that it is exactly the largest
        double t with quantile(t) <= x."""
        x = np.asarray(x, dtype=float)
        return _ret(self._galois(x, self._cdf(x)))

    def _galois(self, x, t):
        # largest double t in [0, 1] with Q(t) <= x, found by galloping and
        # then bisecting on the bit patterns of the estimate's neighbours
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float),
                                   np.clip(np.asarray(t, dtype=float), 0.0, 1.0))
        shape = t.shape
        x, t = x.ravel(), t.ravel().copy()
        live = np.isfinite(x) & np.isfinite(t)
        if not live.any():
            return t.reshape(shape)
        one = np.float64(1.0).view(np.int64)
        xs = x[live]
        bits = t[live].view(np.int64)

        def fits(b):
            with np.errstate(all="ignore"):
                return self._q(b.view(np.float64)) <= xs

        ok = fits(bits)
        lo = np.where(ok, bits, -1)          # -1 marks "no feasible level"
        hi = np.where(ok, one + 1, bits)     # one + 1 marks "1 is feasible"
        todo = np.where(ok, bits < one, bits > 0)
        step = 1
        while todo.any():
            cand = np.where(ok, np.minimum(lo + step, one), np.maximum(hi - step, 0))
            f = fits(cand)
            lo = np.where(todo & f, cand, lo)
            hi = np.where(todo & ~f, cand, hi)
            todo &= np.where(ok, f & (cand < one), ~f & (cand > 0))
            step *= 2
        gap = (lo >= 0) & (hi <= one) & (hi - lo > 1)
        while gap.any():
            mid = lo + (hi - lo) // 2
            f = fits(mid)
            lo = np.where(gap & f, mid, lo)
            hi = np.where(gap & ~f, mid, hi)
            gap &= hi - lo > 1
        t[live] = np.where(lo >= 0, lo, 0).view(np.float64)
        return t.reshape(shape)

    def cdf_left(self, x):
        """P(X < x), never above ``cdf(x)``."""
        x = np.asarray(x, dtype=float)
        return _ret(np.minimum(self._cdf_left(x), self._galois(x, self._cdf(x))))

    def integrated_quantile(self, s):
        """P(s) = int_0^s Q(t) dt."""
        return _ret(self._lower_integral(_levels(s, "s")))

    def upper_integrated_quantile(self, v):
        """T(v) = int_{1-v}^1 Q(t) dt."""
        return _ret(self._upper_integral(_levels(v, "v")))

    @cached_property
    def mean(self) -> float:
        m = float(self._lower_integral(np.asarray(0.5))
                  + self._upper_integral(np.asarray(0.5)))
        if not math.isfinite(m):
            raise InfiniteMeanError(f"{self!r} has no finite mean")
        return m

    @cached_property
    def support(self) -> tuple[float, float]:
        with np.errstate(all="ignore"):
            return float(self._q(np.asarray(0.0))), float(self._q(np.asarray(1.0)))

    @property
    def is_degenerate(self) -> bool:
        lo, hi = self.support
        return lo == hi

    def _integral(self, p, q):
        # unvalidated int_p^q Q; splits at 1/2 so each side uses the
        # integral anchored at its own end
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        with np.errstate(invalid="ignore"):
            low = self._lower_integral(np.minimum(q, 0.5)) - self._lower_integral(np.minimum(p, 0.5))
            high = (self._upper_integral(1.0 - np.maximum(p, 0.5))
                    - self._upper_integral(1.0 - np.maximum(q, 0.5)))
        low = np.where(p >= 0.5, 0.0, low)
        high = np.where(q <= 0.5, 0.0, high)
        return low + high

    def partial_quantile_integral(self, p, q):
        """Unnormalized int_p^q Q(t) dt for 0 <= p < q <= 1."""
        p = _levels(p, "p")
        q = _levels(q, "q")
        if not np.all(p < q):
            raise DomainError("need p < q")
        return _ret(self._integral(p, q))

    def moment(self, k: float) -> float:
        """E|X|^k, or +inf when the integral diverges."""
        if not k > 0:
            raise DomainError("moment order must be positive")
        lo, hi = self.support
        f = lambda t: np.abs(self._q(np.asarray(t))) ** k
        fu = (lambda w: np.abs(self._q_upper(np.asarray(w))) ** k) if hi == math.inf else None
        fl = f if lo == -math.inf else None
        with np.errstate(over="ignore"):
            return float(integrate_levels(f, 0.0, 1.0, f_upper=fu, f_lower=fl))

    def conditional_restrict(self, p: float, q: float) -> "MarginalDistribution":
        """Law of Q(V) with V uniform on (p, q)."""
        p, q = float(p), float(q)
        if not 0.0 <= p < q <= 1.0:
            raise DomainError(f"need 0 <= p < q <= 1, got {p}, {q}")
        if p == 0.0 and q == 1.0:
            return self
        return Restricted(self, p, q)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self._q(rng.random(size))

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params.items() if k != "kind")
        return f"{type(self).__name__}({inner})"


class PointMass(MarginalDistribution):
    kind = "point"
    is_discrete = True

    def __init__(self, x: float):
        if not math.isfinite(x):
            raise DomainError("point mass location must be finite")
        self.x = float(x)

    @property
    def params(self):
        return {"kind": self.kind, "x": self.x}

    def _q(self, t):
        return np.full(np.shape(t), self.x)

    def _cdf(self, x):
        return (x >= self.x).astype(float)

    def _cdf_left(self, x):
        return (x > self.x).astype(float)

    def _lower_integral(self, s):
        return self.x * s

    def _upper_integral(self, v):
        return self.x * v

    def moment(self, k):
        return abs(self.x) ** k

    def conditional_restrict(self, p, q):
        super().conditional_restrict(p, q)
        return self


class Bernoulli(MarginalDistribution):
    """Two-point law on {0, 1} with P(X = 1) = p."""

    kind = "bernoulli"
    is_discrete = True

    def __init__(self, p: float):
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"bernoulli p must be in [0, 1], got {p}")
        self.p = float(p)

    @property
    def params(self):
        return {"kind": self.kind, "p": self.p}

    def _q(self, t):
        out = (t > 1.0 - self.p).astype(float)
        # Q(0) = inf{x : F(x) > 0}
        return np.where(t == 0.0, 0.0 if self.p < 1.0 else 1.0, out)

    def _q_upper(self, w):
        out = (w < self.p).astype(float)
        return np.where(w == 1.0, 0.0 if self.p < 1.0 else 1.0, out)

    def _cdf(self, x):
        return np.where(x < 0.0, 0.0, np.where(x < 1.0, 1.0 - self.p, 1.0))

    def _cdf_left(self, x):
        return np.where(x <= 0.0, 0.0, np.where(x <= 1.0, 1.0 - self.p, 1.0))

    def _lower_integral(self, s):
        return np.maximum(s - (1.0 - self.p), 0.0)

    def _upper_integral(self, v):
        return np.minimum(v, self.p)

    @cached_property
    def mean(self):
        return self.p

    def moment(self, k):
        if not k > 0:
            raise DomainError("moment order must be positive")
        return self.p


class Uniform(MarginalDistribution):
    kind = "uniform"

    def __init__(self, a: float = 0.0, b: float = 1.0):
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise DomainError(f"uniform needs finite a < b, got a={a}, b={b}")
        self.a, self.b = float(a), float(b)
        self.width = self.b - self.a

    @property
    def params(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}

    def _q(self, t):
        return self.a + self.width * t

    def _q_upper(self, w):
        return self.b - self.width * w

    def _cdf(self, x):
        return np.clip((x - self.a) / self.width, 0.0, 1.0)

    _cdf_left = _cdf

    def _lower_integral(self, s):
        return s * (self.a + 0.5 * self.width * s)

    def _upper_integral(self, v):
        return v * (self.b - 0.5 * self.width * v)

    @cached_property
    def mean(self):
        return 0.5 * (self.a + self.b)

    def moment(self, k):
        if not k > 0:
            raise DomainError("moment order must be positive")
        g = _signed_power_antiderivative
        return float((g(self.b, k) - g(self.a, k)) / self.width)

    def conditional_restrict(self, p, q):
        super().conditional_restrict(p, q)
        return Uniform(self.a + self.width * p, self.a + self.width * q)


class Pareto(MarginalDistribution):
    """F(x) = 1 - x^(-alpha) on x >= 1; only alpha > 1 has a finite mean."""

    kind = "pareto"

    def __init__(self, alpha: float):
        if not alpha > 0:
            raise DomainError(f"pareto alpha must be positive, got {alpha}")
        if alpha <= 1.0:
            raise InfiniteMeanError(f"pareto alpha={alpha} has infinite mean")
        self.alpha = float(alpha)
        self._beta = 1.0 - 1.0 / self.alpha

    @property
    def params(self):
        return {"kind": self.kind, "alpha": self.alpha}

    def _q(self, t):
        with np.errstate(divide="ignore"):
            return np.exp(-np.log1p(-t) / self.alpha)

    def _q_upper(self, w):
        with np.errstate(divide="ignore"):
            return w ** (-1.0 / self.alpha)

    def _cdf(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -np.expm1(-self.alpha * np.log(np.maximum(x, 1.0)))
        return np.where(x < 1.0, 0.0, out)

    _cdf_left = _cdf

    def _lower_integral(self, s):
        with np.errstate(divide="ignore"):
            return -self.mean * np.expm1(self._beta * np.log1p(-s))

    def _upper_integral(self, v):
        return self.mean * v ** self._beta

    @cached_property
    def mean(self):
        return self.alpha / (self.alpha - 1.0)

    @cached_property
    def support(self):
        return 1.0, math.inf

    def moment(self, k):
        if not k > 0:
            raise DomainError("moment order must be positive")
        return self.alpha / (self.alpha - k) if k < self.alpha else math.inf


class QuantileTable(MarginalDistribution):
    """Law given by quantile knots (t_i, x_i).

    With ``step=False`` the quantile is linear between knots, which needs
    t_0 = 0 and t_last = 1.  With ``step=True`` the quantile equals x_i on
    (t_{i-1}, t_i]; a leading knot at t = 0 carries no mass and is dropped.
    """

    kind = "quantile_table"

    def __init__(self, ts, xs, step: bool = False):
        ts = np.asarray(ts, dtype=float)
        xs = np.asarray(xs, dtype=float)
        if ts.ndim != 1 or ts.shape != xs.shape or ts.size < 1:
            raise DomainError("knot vectors must be 1-d and of equal length")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ts))):
            raise DomainError("knots must be finite")
        if np.any(np.diff(ts) <= 0) or ts[0] < 0 or ts[-1] != 1.0:
            raise DomainError("knot levels must increase strictly within [0, 1] and end at 1")
        if np.any(np.diff(xs) < 0):
            raise DomainError("knot values must be non-decreasing")
        self.step = bool(step)
        if self.step:
            if ts[0] == 0.0:
                ts, xs = ts[1:], xs[1:]
            if ts.size == 0:
                raise DomainError("step table needs a knot with positive mass")
            self._edges = np.concatenate([[0.0], ts])
            w = np.diff(self._edges)
            contrib = xs * w
        else:
            if ts[0] != 0.0 or ts.size < 2:
                raise DomainError("linear table needs knots at t=0 and t=1")
            self._edges = ts
            w = np.diff(ts)
            contrib = 0.5 * w * (xs[:-1] + xs[1:])
        self.ts, self.xs = ts, xs
        self._below = np.concatenate([[0.0], np.cumsum(contrib)])
        self._above = np.concatenate([np.cumsum(contrib[::-1])[::-1], [0.0]])
        self._total = math.fsum(contrib)

    @property
    def is_discrete(self):
        return self.step

    @property
    def params(self):
        return {"kind": self.kind, "step": self.step,
                "t": self.ts.tolist(), "x": self.xs.tolist()}

    def _q(self, t):
        if self.step:
            idx = np.searchsorted(self.ts, t, side="left")
            return self.xs[np.minimum(idx, self.xs.size - 1)]
        return np.interp(t, self.ts, self.xs)

    def _cdf(self, x):
        if self.step:
            return self._edges[np.searchsorted(self.xs, x, side="right")]
        return self._linear_cdf(x, side="right")

    def _cdf_left(self, x):
        if self.step:
            return self._edges[np.searchsorted(self.xs, x, side="left")]
        return self._linear_cdf(x, side="left")

    def _linear_cdf(self, x, side):
        ts, xs = self.ts, self.xs
        j = np.searchsorted(xs, x, side=side)
        i = np.clip(j - 1, 0, xs.size - 2)
        dx = xs[i + 1] - xs[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(dx > 0, (x - xs[i]) / dx, 0.0)
        t = ts[i] + np.clip(frac, 0.0, 1.0) * (ts[i + 1] - ts[i])
        return np.where(j == 0, 0.0, np.where(j >= xs.size, 1.0, t))

    def _cell(self, s):
        idx = np.searchsorted(self._edges[1:], s, side="left")
        return np.minimum(idx, self._edges.size - 2)

    def _lower_integral(self, s):
        k = self._cell(s)
        lo = self._edges[k]
        if self.step:
            return self._below[k] + self.xs[k] * (s - lo)
        return self._below[k] + 0.5 * (s - lo) * (self.xs[k] + self._q(s))

    def _upper_integral(self, v):
        s = 1.0 - v
        k = self._cell(s)
        hi = self._edges[k + 1]
        # (hi - 1) + v is exact in the last cell, where v may be tiny
        span = (hi - 1.0) + v
        if self.step:
            return self._above[k + 1] + self.xs[k] * span
        return self._above[k + 1] + 0.5 * span * (self._q(s) + self.xs[k + 1])

    @cached_property
    def mean(self):
        return self._total

    @cached_property
    def support(self):
        return float(self.xs[0]), float(self.xs[-1])

    def moment(self, k):
        if not k > 0:
            raise DomainError("moment order must be positive")
        if self.step:
            return math.fsum(np.abs(self.xs) ** k * np.diff(self._edges))
        g = _signed_power_antiderivative
        x0, x1 = self.xs[:-1], self.xs[1:]
        w = np.diff(self.ts)
        dx = x1 - x0
        with np.errstate(divide="ignore", invalid="ignore"):
            sloped = w * (g(x1, k) - g(x0, k)) / dx
        return math.fsum(np.where(dx > 0, sloped, w * np.abs(x0) ** k))


class Empirical(QuantileTable):
    """Empirical law of a sample; Q is the i-th order statistic on ((i-1)/m, i/m]."""

    kind = "empirical"

    def __init__(self, sample):
        xs = np.sort(np.asarray(sample, dtype=float).ravel())
        if xs.size == 0:
            raise DomainError("empirical sample is empty")
        m = xs.size
        super().__init__(np.arange(1, m + 1) / m, xs, step=True)
        self._sample_mean = math.fsum(xs) / m

    @property
    def params(self):
        return {"kind": self.kind, "x": self.xs.tolist()}

    @cached_property
    def mean(self):
        return self._sample_mean


class Affine(MarginalDistribution):
    """Law of loc + scale * X for scale > 0."""

    kind = "affine"

    def __init__(self, base: MarginalDistribution, scale: float = 1.0, loc: float = 0.0):
        if not (scale > 0 and math.isfinite(scale) and math.isfinite(loc)):
            raise DomainError("affine map needs finite scale > 0 and finite loc")
        self.base, self.scale, self.loc = base, float(scale), float(loc)
        self.is_discrete = base.is_discrete

    @property
    def params(self):
        return {"kind": self.kind, "base": self.base.params,
                "scale": self.scale, "loc": self.loc}

    def _q(self, t):
        return self.loc + self.scale * self.base._q(t)

    def _q_upper(self, w):
        return self.loc + self.scale * self.base._q_upper(w)

    def _cdf(self, x):
        return self.base._cdf((x - self.loc) / self.scale)

    def _cdf_left(self, x):
        return self.base._cdf_left((x - self.loc) / self.scale)

    def _lower_integral(self, s):
        return self.loc * s + self.scale * self.base._lower_integral(s)

    def _upper_integral(self, v):
        return self.loc * v + self.scale * self.base._upper_integral(v)

    @cached_property
    def mean(self):
        return self.loc + self.scale * self.base.mean

    @cached_property
    def support(self):
        lo, hi = self.base.support
        return self.loc + self.scale * lo, self.loc + self.scale * hi

    def moment(self, k):
        if self.loc == 0.0:
            return self.scale ** k * self.base.moment(k)
        return super().moment(k)

    def conditional_restrict(self, p, q):
        return Affine(self.base.conditional_restrict(p, q), self.scale, self.loc)


class Restricted(MarginalDistribution):
    """Law of Q(V) with V uniform on (p0, q0): the conditional law of F on
    [Q(p0), Q(q0)] with any boundary atoms split proportionally."""

    kind = "restricted"

    def __init__(self, base: MarginalDistribution, p0: float, q0: float):
        if not 0.0 <= p0 < q0 <= 1.0:
            raise DomainError(f"need 0 <= p < q <= 1, got {p0}, {q0}")
        self.base, self.p0, self.q0 = base, float(p0), float(q0)
        self.delta = self.q0 - self.p0
        self.is_discrete = base.is_discrete

    @property
    def params(self):
        return {"kind": self.kind, "base": self.base.params, "p": self.p0, "q": self.q0}

    def _level(self, t):
        return np.minimum(self.p0 + t * self.delta, self.q0)

    def _q(self, t):
        lv = np.where(t == 0.0, np.nextafter(self.p0, 1.0), self._level(t))
        return self.base._q(lv)

    def _q_upper(self, w):
        if self.q0 == 1.0:
            return np.where(w == 1.0, self._q(np.zeros_like(w)),
                            self.base._q_upper(w * self.delta))
        return self._q(1.0 - w)

    def _cdf(self, x):
        return np.clip((self.base._cdf(x) - self.p0) / self.delta, 0.0, 1.0)

    def _cdf_left(self, x):
        return np.clip((self.base._cdf_left(x) - self.p0) / self.delta, 0.0, 1.0)

    def _lower_integral(self, s):
        return self.base._integral(self.p0, self._level(s)) / self.delta

    def _upper_integral(self, v):
        if self.q0 == 1.0:
            return self.base._upper_integral(v * self.delta) / self.delta
        lv = np.maximum(self.q0 - v * self.delta, self.p0)
        return self.base._integral(lv, self.q0) / self.delta

    def conditional_restrict(self, p, q):
        super().conditional_restrict(p, q)
        return Restricted(self.base, self.p0 + p * self.delta, self.p0 + q * self.delta)


class QuantileFunction(MarginalDistribution):
    """Law given by a user-supplied vectorised quantile callable.

    Integrals fall back to adaptive quadrature, with dyadic tail sums where
    the support is unbounded.  ``upper`` may supply Q(1 - w) accurately.
    CDFs are obtained by bisection on the quantile.
    """

    kind = "quantile_function"

    def __init__(self, quantile, upper=None, name: str = "custom"):
        self._fn = quantile
        self._fn_upper = upper
        self.name = name
        self.mean  # finite-mean check at construction

    @property
    def params(self):
        return {"kind": self.kind, "name": self.name}

    def _q(self, t):
        return np.asarray(self._fn(t), dtype=float)

    def _q_upper(self, w):
        if self._fn_upper is None:
            return self._q(1.0 - w)
        return np.asarray(self._fn_upper(w), dtype=float)

    def _bisect_cdf(self, x, strict):
        x = np.asarray(x, dtype=float)
        lo = np.zeros_like(x)
        hi = np.ones_like(x)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            qm = self._q(mid)
            ok = qm < x if strict else qm <= x
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        lo_s, hi_s = self.support
        out = np.where(x >= hi_s, 1.0, lo) if not strict else np.where(x > hi_s, 1.0, lo)
        return np.where(x < lo_s, 0.0, out)

    def _cdf(self, x):
        return self._bisect_cdf(x, strict=False)

    def _cdf_left(self, x):
        return self._bisect_cdf(x, strict=True)

    def _integrate(self, p, q):
        lo, hi = self.support
        fu = (lambda w: self._q_upper(np.asarray(w))) if hi == math.inf else None
        fl = (lambda w: self._q(np.asarray(w))) if lo == -math.inf else None
        with np.errstate(over="ignore", invalid="ignore"):
            # without an accurate Q(1 - w) the tail is resolvable only down to
            # w ~ 2^-52, below which it is extrapolated
            return integrate_levels(lambda t: self._q(np.asarray(t)), p, q,
                                    f_upper=fu if q == 1.0 else None,
                                    f_lower=fl if p == 0.0 else None,
                                    w_min=0.0 if self._fn_upper is not None else 2.0 ** -52)

    def _lower_integral(self, s):
        return np.vectorize(lambda x: self._integrate(0.0, x) if x > 0 else 0.0,
                            otypes=[float])(s)

    def _upper_integral(self, v):
        def one(x):
            if not x > 0:
                return 0.0
            if 1.0 - x == 1.0:
                # the interval is below level resolution: x Q(1 - x) to first order
                return x * float(self._q_upper(np.asarray(max(x, 2.0 ** -53))))
            return self._integrate(1.0 - x, 1.0)
        return np.vectorize(one, otypes=[float])(v)

    @cached_property
    def mean(self):
        m = self._integrate(0.0, 1.0)
        if not math.isfinite(m):
            raise InfiniteMeanError(f"quantile function {self.name!r} has no finite mean")
        return m
