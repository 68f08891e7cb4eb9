"""Integration over sub-intervals of (0, 1) for quantile-type integrands.

Integrands here are functions of a probability level t.  They are smooth
between known breakpoints but may diverge as t -> 1 (heavy upper tails).
The body of the interval is handled by adaptive Gauss-Kronrod (QUADPACK via
scipy); the upper tail is summed over dyadic pieces in the complementary
variable w = 1 - t, which keeps full relative precision down to w ~ 1e-300.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)

# pieces per vectorised batch in the dyadic tail sum
_BATCH = 32
# smallest w the tail sum descends to before declaring divergence
_W_FLOOR = 1e-300


def _quad(f, a, b, points=()):
    pts = [x for x in points if a < x < b]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(
            lambda t: float(f(t)), a, b,
            points=pts or None, limit=200, epsabs=1e-15, epsrel=1e-12,
        )
    return val


def _extrapolate(total, pieces):
    if len(pieces) < 2 or pieces[-2] == 0.0:
        return total
    r = pieces[-1] / pieces[-2]
    if not 0.0 <= r < 0.999:
        return math.copysign(math.inf, total)
    return total + pieces[-1] * r / (1.0 - r)


def dyadic_tail(f_upper, w0, rtol=1e-10, w_min=0.0):
    """Integral of ``f_upper(w)`` over (0, w0].

    The interval is cut into pieces [w0 2^-(j+1), w0 2^-j], each integrated
    by 20-point Gauss-Legendre.  Summation stops once the newest piece plus a
    geometric estimate of the remainder is below ``rtol`` relative to the
    running total.  Returns +/-inf when the pieces stop decaying.

    ``w_min`` is the smallest w the integrand can resolve; pieces below it
    are replaced by the geometric extrapolation of the last two pieces.
    """
    total = 0.0
    pieces = []
    j0 = 0
    while True:
        j = np.arange(j0, j0 + _BATCH)
        hi = w0 * np.exp2(-j.astype(float))
        keep = hi / 2.0 >= w_min
        if not np.any(keep):
            return _extrapolate(total, pieces)
        hi = hi[keep]
        lo = hi / 2.0
        half = (hi - lo) / 2.0
        mid = (hi + lo) / 2.0
        nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = np.asarray(f_upper(nodes.ravel()), dtype=float).reshape(nodes.shape)
        piece = half * (vals @ _GL_WEIGHTS)
        for s in piece:
            if not math.isfinite(s):
                return math.copysign(math.inf, s) if not math.isnan(s) else math.nan
            total += s
            pieces.append(s)
            if len(pieces) >= 3:
                last, prev = pieces[-1], pieces[-2]
                if last == 0.0 and prev == 0.0:
                    return total
                if prev != 0.0:
                    r = last / prev
                    if 0.0 <= r < 1.0:
                        rest = last * r / (1.0 - r)
                        if abs(last) + abs(rest) <= rtol * abs(total):
                            return total + rest
        if not np.all(keep):
            return _extrapolate(total, pieces)
        j0 += _BATCH
        if len(pieces) >= 64:
            recent = np.abs(pieces[-16:])
            if np.all(recent[1:] >= 0.999 * recent[:-1]) and recent[-1] > 0:
                return math.copysign(math.inf, total)
        if w0 * 2.0 ** (-j0) < _W_FLOOR:
            return math.copysign(math.inf, total)


def integrate_levels(f, p, q, *, f_upper=None, f_lower=None, points=(), rtol=1e-10,
                     w_min=0.0):
    """Integral of ``f(t)`` over [p, q] with 0 <= p < q <= 1.

    ``f_upper(w)`` must equal ``f(1 - w)`` and is used when q == 1 and the
    integrand may be unbounded there; ``f_lower(w)`` must equal ``f(w)`` and
    plays the same role at p == 0.  ``points`` are interior breakpoints
    (knots, atoms) handed to the adaptive rule.  ``w_min`` is passed to the
    upper tail sum.
    """
    if not 0.0 <= p < q <= 1.0:
        raise ValueError(f"need 0 <= p < q <= 1, got p={p}, q={q}")
    lo, hi = p, q
    total = 0.0
    if q == 1.0 and f_upper is not None:
        w0 = min(0.5 * (1.0 - p), 1.0 / 16.0)
        total += dyadic_tail(f_upper, w0, rtol=rtol, w_min=w_min)
        hi = 1.0 - w0
    if p == 0.0 and f_lower is not None:
        w0 = min(0.5 * hi, 1.0 / 16.0)
        total += dyadic_tail(f_lower, w0, rtol=rtol)
        lo = w0
    if hi > lo:
        total += _quad(f, lo, hi, points)
    return total
