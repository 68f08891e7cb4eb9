"""Residual transform of a marginal law.

For a law F with mean mu let H(s) = int_0^s (Q(t) - mu) dt.  H is convex,
vanishes at 0 and 1 and reaches its minimum c on [nu, nu+] where
nu = F(mu-) and nu+ = F(mu).  Its inverses on the two monotone pieces are
the branches A (on [0, nu]) and B (on [nu+, 1]).  The mixing law K = B - A
on [c, 0] has an atom of size nu+ - nu at c, and the residual variable is
Z = Q(B(Y)) - Q(A(Y)) with Y ~ K.

Internally everything is parameterised by w = 1 - K(y) = A(y) + (1 - B(y)),
split as w = a + v with a = A(y) and v = 1 - B(y).  Working with v instead of
B keeps full precision in heavy upper tails.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBranchError, DomainError
from .marginal import Affine, Bernoulli, MarginalDistribution, Pareto, Uniform
from .quadrature import integrate_levels

__all__ = ["ResidualTransform", "BranchPair"]

_ROOT_EPS = 2.0 ** -26


@dataclass(frozen=True)
class BranchPair:
    """Matched branch levels for a given w = 1 - K(y).

    Attributes
    ----------
    a, v : ndarray
        Lower level A(y) and upper complement 1 - B(y).
    y : ndarray
        Common H value.
    w1, w2 : ndarray
        Q(B(y)) and Q(A(y)).
    u : ndarray
        Weight with u*w1 + (1-u)*w2 = mu.
    """

    a: np.ndarray
    v: np.ndarray
    y: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    u: np.ndarray

    @property
    def z(self):
        return self.w1 - self.w2


# closed forms in standard units; a caller rescales y and Z by the affine scale

class _BernoulliForms:
    def __init__(self, p):
        self.p = p
        self.pq = p * (1.0 - p)

    def av(self, w):
        return w * (1.0 - self.p), w * self.p

    def y(self, w):
        return -w * self.pq

    def w_of_y(self, y):
        return -y / self.pq

    def z(self, w):
        return np.ones_like(w)

    def zcdf(self, x):
        return (x >= 1.0).astype(float)

    def zmoment(self, k):
        return 1.0


class _UniformForms:
    def av(self, w):
        return 0.5 * w, 0.5 * w

    def y(self, w):
        return -w * (2.0 - w) / 8.0

    def w_of_y(self, y):
        return -8.0 * y / (1.0 + np.sqrt(np.maximum(1.0 + 8.0 * y, 0.0)))

    def z(self, w):
        return 1.0 - w

    def weight(self, w):
        # symmetric law: both values sit equally far from the mean
        return np.full_like(w, 0.5)

    def zcdf(self, x):
        return np.clip(x, 0.0, 1.0)

    def zmoment(self, k):
        return 1.0 / (k + 1.0)


class _Pareto2Forms:
    def av(self, w):
        return 0.25 * w * (4.0 - w), 0.25 * w * w

    def y(self, w):
        return -0.5 * w * (2.0 - w)

    def w_of_y(self, y):
        return -2.0 * y / (1.0 + np.sqrt(np.maximum(1.0 + 2.0 * y, 0.0)))

    def z(self, w):
        with np.errstate(divide="ignore"):
            return 4.0 * (1.0 - w) / (w * (2.0 - w))

    def zcdf(self, x):
        x = np.maximum(x, 0.0)
        with np.errstate(invalid="ignore"):
            return np.where(np.isinf(x), 1.0, x / (2.0 + np.hypot(x, 2.0)))

    def zmoment(self, k):
        return None if k < 1.0 else math.inf


def _closed_forms(dist):
    """Return (forms, scale) for laws with known residual machinery, else None."""
    scale = 1.0
    while isinstance(dist, Affine):
        scale *= dist.scale
        dist = dist.base
    if isinstance(dist, Bernoulli) and 0.0 < dist.p < 1.0:
        return _BernoulliForms(dist.p), scale
    if isinstance(dist, Uniform):
        return _UniformForms(), scale * dist.width
    if isinstance(dist, Pareto) and dist.alpha == 2.0:
        return _Pareto2Forms(), scale
    return None


def _bisect_levels(g, lo, hi):
    """Root of increasing g on [lo, hi] with 0 <= lo <= hi, to the last ulp.

    Bisects on the IEEE bit patterns, which are ordered like the values for
    non-negative doubles, so the result has full relative precision even
    when the root is many orders of magnitude below hi.
    """
    shape = np.broadcast(lo, hi).shape
    lo = np.ascontiguousarray(np.broadcast_to(np.maximum(lo, 0.0), shape), dtype=float).ravel()
    hi = np.ascontiguousarray(np.broadcast_to(np.maximum(hi, 0.0), shape), dtype=float).ravel()
    hi = np.maximum(hi, lo)
    f = g
    g = lambda x: np.broadcast_to(f(x.reshape(shape)), shape).ravel()
    li = lo.view(np.int64)
    hi_i = hi.view(np.int64)
    for _ in range(64):
        if np.all(hi_i - li <= 1):
            break
        mi = li + (hi_i - li) // 2
        right = g(mi.view(np.float64)) > 0
        hi_i = np.where(right, mi, hi_i)
        li = np.where(right, li, mi)
    lo_f = li.view(np.float64)
    hi_f = hi_i.view(np.float64)
    # pick whichever end has the smaller residual
    best = np.where(np.abs(g(lo_f)) <= np.abs(g(hi_f)), lo_f, hi_f)
    return best.reshape(shape)


class ResidualTransform:
    """Precomputed residual machinery for one marginal law.

    Parameters
    ----------
    dist : MarginalDistribution
        The marginal law F (finite mean).
    analytic : bool, default True
        Use closed forms for Bernoulli, uniform and Pareto(2) (and their
        affine images).  With False the generic bisection path is used,
        which is how the closed forms are cross-checked.

    Notes
    -----
    Branches and K are inverted by bisection on H, which is exact up to the
    accuracy of the integrated quantile; no interpolation tables are built.
    """

    def __init__(self, dist: MarginalDistribution, analytic: bool = True):
        self.dist = dist
        self.mu = dist.mean
        self.degenerate = dist.is_degenerate
        if self.degenerate:
            self.nu, self.nu_plus, self.c = 0.0, 1.0, 0.0
        else:
            self.nu = float(dist.cdf_left(self.mu))
            self.nu_plus = float(dist.cdf(self.mu))
            self.c = min(float(self._h(np.asarray(self.nu))), 0.0)
        self.atom = self.nu_plus - self.nu
        cf = _closed_forms(dist) if analytic and not self.degenerate else None
        self._forms, self._scale = cf if cf else (None, 1.0)
        lo, hi = dist.support
        self._unbounded = not (math.isfinite(lo) and math.isfinite(hi))

    def __repr__(self):
        return f"ResidualTransform({self.dist!r})"

    @property
    def analytic(self) -> bool:
        return self._forms is not None

    def critical_points(self) -> tuple[float, float, float]:
        """(nu, nu+, c)."""
        return self.nu, self.nu_plus, self.c

    # -- H ----------------------------------------------------------------
    def _h_lower(self, a):
        return self.dist._lower_integral(a) - self.mu * a

    def _h_upper(self, v):
        # H(1 - v) = mu v - T(v)
        return self.mu * v - self.dist._upper_integral(v)

    def _h(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= 0.5, self._h_lower(np.minimum(s, 0.5)),
                        self._h_upper(1.0 - np.maximum(s, 0.5)))

    def h_transform(self, s):
        """H(s) = int_0^s (Q(t) - mu) dt for s in [0, 1]."""
        s = np.asarray(s, dtype=float)
        if not np.all((s >= 0) & (s <= 1)):
            raise DomainError("H is defined on [0, 1]")
        out = self._h(s)
        return float(out) if out.ndim == 0 else out

    # -- branches ------------------------------------------------------------
    def _check_s(self, s):
        s = np.asarray(s, dtype=float)
        if not np.all((s >= self.c) & (s <= 0.0)):
            raise DomainError(f"argument must lie in [c, 0] = [{self.c}, 0]")
        return s

    def _branch_av(self, s):
        """(a, v) with H(a) = H(1 - v) = s, each on its monotone piece."""
        if self._forms is not None:
            w = self._forms.w_of_y(s / self._scale)
            return self._forms.av(w)
        if self.degenerate:
            return np.zeros_like(s), np.zeros_like(s)
        a = _bisect_levels(lambda x: s - self._h_lower(x),
                           np.zeros_like(s), np.full_like(s, self.nu))
        v = _bisect_levels(lambda x: s - self._h_upper(x),
                           np.zeros_like(s), np.full_like(s, 1.0 - self.nu_plus))
        # H < 0 strictly inside, so its zeros are the end points
        return np.where(s == 0, 0.0, a), np.where(s == 0, 0.0, v)

    def _split(self, w):
        """Solve w = a + v with H(a) = H(1 - v).

        The smaller of the two parts is found by bisection and the larger
        one is taken as w minus it, so neither suffers cancellation.
        """
        a_lo = np.maximum(0.0, w - (1.0 - self.nu_plus))
        a_hi = np.minimum(self.nu, w)
        g_a = lambda x: self._h_upper(w - x) - self._h_lower(x)
        half = np.clip(0.5 * w, a_lo, a_hi)
        a_small = g_a(half) > 0
        a = _bisect_levels(g_a, a_lo, a_hi)
        g_v = lambda x: self._h_upper(x) - self._h_lower(w - x)
        v = _bisect_levels(lambda x: -g_v(x), w - a_hi, w - a_lo)
        a = np.where(a_small, a, np.clip(w - v, a_lo, a_hi))
        v = np.where(a_small, np.maximum(w - a, 0.0), v)
        return a, v

    def branches(self, s):
        """(A(s), B(s)) with the convention A(c) = B(c) = nu+."""
        s = self._check_s(s)
        a, v = self._branch_av(s)
        at_c = s == self.c
        A = np.where(at_c, self.nu_plus, a)
        B = np.where(at_c, self.nu_plus, 1.0 - v)
        if A.ndim == 0:
            return float(A), float(B)
        return A, B

    def branch_a(self, s):
        return self.branches(s)[0]

    def branch_b(self, s):
        return self.branches(s)[1]

    # -- K -------------------------------------------------------------------
    def k_cdf(self, s):
        """K(s): 0 below c, the atom at c, B - A on (c, 0], 1 above."""
        s = np.asarray(s, dtype=float)
        inside = np.clip(s, self.c, 0.0)
        a, v = self._branch_av(inside)
        mid = 1.0 - (a + v)
        out = np.where(s < self.c, 0.0,
                       np.where(s == self.c, self.atom,
                                np.where(s >= 0.0, 1.0, mid)))
        return float(out) if out.ndim == 0 else out

    def pair(self, w) -> BranchPair:
        """Branch levels for w = 1 - q with q in (atom, 1]."""
        w = np.asarray(w, dtype=float)
        if self._forms is not None:
            a, v = self._forms.av(w)
            y = self._scale * self._forms.y(w)
        elif self.degenerate:
            a = v = y = np.zeros_like(w)
        else:
            a, v = self._split(w)
            y = np.minimum(0.5 * (self._h_lower(a) + self._h_upper(v)), 0.0)
            y = np.maximum(y, self.c)
        w2 = self.dist._q(a)
        w1 = self.dist._q_upper(v)
        if self.degenerate:
            u = np.full_like(w, 0.5)
        elif hasattr(self._forms, "weight"):
            u = self._forms.weight(w)
        else:
            with np.errstate(invalid="ignore", divide="ignore"):
                u = np.where(np.isinf(w1), 0.0, (self.mu - w2) / (w1 - w2))
        return BranchPair(a=a, v=v, y=y, w1=w1, w2=w2, u=u)

    def k_quantile(self, q):
        """Generalised inverse of K; returns c on the atom."""
        q = np.asarray(q, dtype=float)
        if not np.all((q > 0) & (q <= 1)):
            raise DomainError("K quantile needs q in (0, 1]")
        w = np.where(q <= self.atom, 0.0, 1.0 - q)
        y = self.pair(w).y
        out = np.where(q <= self.atom, self.c, y)
        return float(out) if out.ndim == 0 else out

    # -- weight -----------------------------------------------------------
    def u_weight(self, s):
        """u(s) = (mu - Q(A(s))) / (Q(B(s)) - Q(A(s))), with u(c) = 1/2."""
        s = self._check_s(s)
        a, v = self._branch_av(s)
        w2 = self.dist._q(a)
        w1 = self.dist._q_upper(v)
        den = w1 - w2
        # within rounding of c the levels merge at the double root of H - s,
        # which only resolves them to about sqrt(eps)
        merged = (a >= self.nu - _ROOT_EPS) & (1.0 - v <= self.nu_plus + _ROOT_EPS)
        at_c = (s == self.c) | ((den == 0) & merged)
        if np.any((den == 0) & ~at_c):
            raise DegenerateBranchError("branch quantiles coincide away from c")
        if hasattr(self._forms, "weight"):
            u = self._forms.weight(np.asarray(a + v, dtype=float))
        else:
            with np.errstate(invalid="ignore", divide="ignore"):
                u = np.where(np.isinf(w1), 0.0, (self.mu - w2) / np.where(den == 0, 1.0, den))
        out = np.where(at_c, 0.5, u)
        return float(out) if out.ndim == 0 else out

    # -- residual law -------------------------------------------------------
    def residual_sample_upper(self, w):
        """Z as a function of w = 1 - q; zero on the atom of K."""
        w = np.asarray(w, dtype=float)
        on_atom = w >= 1.0 - self.atom
        ww = np.where(on_atom, 0.0, w)
        if self._forms is not None:
            z = self._scale * self._forms.z(ww)
        else:
            z = np.maximum(self.pair(ww).z, 0.0)
        out = np.where(on_atom | self.degenerate, 0.0, z)
        return float(out) if out.ndim == 0 else out

    def residual_sample(self, q):
        """Z = Q(B(Y)) - Q(A(Y)) with Y = K^{-1}(q); non-decreasing in q."""
        q = np.asarray(q, dtype=float)
        if not np.all((q > 0) & (q <= 1)):
            raise DomainError("residual sample needs q in (0, 1]")
        return self.residual_sample_upper(1.0 - q)

    residual_quantile = residual_sample

    def residual_cdf(self, x):
        """P(Z <= x)."""
        x = np.asarray(x, dtype=float)
        if self.degenerate:
            out = (x >= 0).astype(float)
        elif self._forms is not None:
            out = self._forms.zcdf(x / self._scale)
        else:
            # sup{q : Z(q) <= x}; Z is non-increasing in w = 1 - q
            top = 1.0 - self.atom
            xf = np.where(np.isinf(x), 0.0, x)
            w = _bisect_levels(lambda ww: xf - self.residual_sample_upper(ww),
                               np.zeros_like(x), np.full_like(x, top))
            out = 1.0 - w
            zmax = self.residual_sample_upper(np.asarray(0.0))
            out = np.where(x >= zmax, 1.0, out)
        out = np.where(x < 0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def residual_moment(self, k: float) -> float:
        """E[Z^k], or +inf when the integral diverges."""
        if not k > 0:
            raise DomainError("moment order must be positive")
        if self.degenerate:
            return 0.0
        if self._forms is not None:
            m = self._forms.zmoment(k)
            if m is not None:
                return self._scale ** k * m
        return self._z_integral(lambda z: z ** k, self.atom)

    def residual_tvar(self, p: float) -> float:
        """TVaR_p of Z, the average of its quantile over [p, 1]."""
        if not 0.0 <= p < 1.0:
            raise DomainError("p must lie in [0, 1)")
        return self._z_integral(lambda z: z, max(p, self.atom)) / (1.0 - p)

    def _z_integral(self, fn, start):
        # int_start^1 fn(Z(q)) dq with a dyadic tail sum when Z is unbounded
        if start >= 1.0:
            return 0.0
        f = lambda q: fn(self.residual_sample_upper(1.0 - np.asarray(q)))
        fu = (lambda w: fn(self.residual_sample_upper(w))) if self._unbounded else None
        with np.errstate(over="ignore", divide="ignore"):
            return float(integrate_levels(f, start, 1.0, f_upper=fu))
