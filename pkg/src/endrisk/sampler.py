"""END sequences by fractional rotation, plus comparison scenarios.

One stream is driven by a uniform U and a level Y ~ K.  With weight u = u(Y)
the k-th coordinate is W1 = Q(B(Y)) when frac(U + k u) < u and W2 = Q(A(Y))
otherwise, so the number of W1 draws among the first n is floor(U + n u).

The rotation runs in 64-bit fixed point: U and u are held as integers
U_int, u_int with U = U_int / 2^64, u = u_int / 2^64, and

    frac(U + k u) = (U_int + k u_int) mod 2^64

which is exact in wrapping uint64 arithmetic for every k < 2^64.  Any double
u >= 2^-11 converts without rounding, so the weight used is the computed
u(Y) itself.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, InvalidMixError
from .marginal import MarginalDistribution
from .residual import ResidualTransform
from .rng import replicate_generator, slot_words, to_unit

_MASK = (1 << 64) - 1
_TWO_M64 = 2.0 ** -64
_TWO_M52 = 2.0 ** -52
_MAX_FIXED = 2.0 ** 64 - 2048.0  # largest double below 2^64
_CHUNK = 1 << 16


def weight_to_fixed(u) -> np.ndarray:
    """u in [0, 1] as a uint64 numerator over 2^64 (exact for u >= 2^-11)."""
    x = np.rint(np.ldexp(np.asarray(u, dtype=float), 64))
    return np.minimum(np.maximum(x, 0.0), _MAX_FIXED).astype(np.uint64)


def mulhi(n, u_int) -> np.ndarray:
    """floor(n * u_int / 2^64) exactly, for n < 2^32."""
    n = np.asarray(n, dtype=np.uint64)
    u_int = np.asarray(u_int, dtype=np.uint64)
    m32 = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    t = n * (u_int & m32)
    mid = n * (u_int >> s32) + (t >> s32)
    return mid >> s32


def _open_unit(words):
    # (m + 1/2) 2^-52 lies strictly inside (0, 1) and is exact
    return ((np.asarray(words, dtype=np.uint64) >> np.uint64(12)).astype(float) + 0.5) * _TWO_M52


def default_workers() -> int:
    env = os.environ.get("ENDRISK_THREADS")
    return max(1, int(env)) if env not in (None, "") else 1


# ---------------------------------------------------------------------------
# END streams
# ---------------------------------------------------------------------------

@dataclass
class EndBatch:
    """A batch of independent END streams sharing one marginal law.

    Attributes
    ----------
    U_int, u_int : ndarray of uint64
        Fixed-point driving uniform and weight.
    w1, w2 : ndarray
        Upper and lower values Q(B(Y)), Q(A(Y)).
    u, y : ndarray
        Weight u(Y) and level Y.
    mu : float
    """

    U_int: np.ndarray
    u_int: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    u: np.ndarray
    y: np.ndarray
    mu: float

    @property
    def size(self) -> int:
        return self.U_int.size

    @property
    def z(self) -> np.ndarray:
        return self.w1 - self.w2

    @property
    def U(self) -> np.ndarray:
        return self.U_int.astype(float) * _TWO_M64

    @classmethod
    def from_words(cls, rt: ResidualTransform, words: np.ndarray) -> "EndBatch":
        """Build streams from raw words: word 0 drives U, word 1 drives Y."""
        words = np.atleast_2d(np.asarray(words, dtype=np.uint64))
        w = _open_unit(words[:, 1])
        return cls.from_levels(rt, words[:, 0], w)

    @classmethod
    def from_levels(cls, rt: ResidualTransform, U_int, w) -> "EndBatch":
        """Build streams from U_int and w = 1 - q with Y = K^{-1}(q)."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        on_atom = w >= 1.0 - rt.atom
        pair = rt.pair(np.where(on_atom, 0.0, w))
        mu = rt.mu
        w1 = np.where(on_atom, mu, pair.w1)
        w2 = np.where(on_atom, mu, pair.w2)
        u = np.where(on_atom, 0.5, pair.u)
        y = np.where(on_atom, rt.c, pair.y)
        return cls(np.atleast_1d(np.asarray(U_int, dtype=np.uint64)),
                   weight_to_fixed(u), w1, w2, u, y, mu)

    def indicators(self, k0: int, n: int) -> np.ndarray:
        """C_k for k = k0 .. k0+n-1, shape (size, n)."""
        ks = np.arange(k0, k0 + n, dtype=np.uint64)
        frac = self.U_int[:, None] + ks[None, :] * self.u_int[:, None]
        return frac < self.u_int[:, None]

    def values(self, k0: int, n: int) -> np.ndarray:
        """X_k for k = k0 .. k0+n-1, shape (size, n)."""
        return np.where(self.indicators(k0, n), self.w1[:, None], self.w2[:, None])

    def centered_scan(self, n_list):
        """Centred partial sums S_k - k mu read at each n in n_list.

        Returns (sums, excess) where sums has shape (size, len(n_list)) and
        excess[:, j] is max_{k <= n_j} (|S_k - k mu| - Z) per stream.
        """
        n_arr = np.asarray(n_list, dtype=np.int64)
        order = np.argsort(n_arr)
        d1 = (self.w1 - self.mu)[:, None]
        d2 = (self.w2 - self.mu)[:, None]
        z = self.z[:, None]
        sums = np.empty((self.size, n_arr.size))
        excess = np.empty_like(sums)
        running = np.zeros((self.size, 1))
        worst = np.full(self.size, -np.inf)
        k = 1
        for j in order:
            n = int(n_arr[j])
            while k <= n:
                m = int(min(1 << 14, n - k + 1))
                ks = np.arange(k, k + m, dtype=np.uint64)
                c = np.cumsum(np.where(self.U_int[:, None] + ks[None, :] * self.u_int[:, None]
                                       < self.u_int[:, None], d1, d2), axis=1) + running
                running = c[:, -1:]
                np.maximum(worst, (np.abs(c) - z).max(axis=1), out=worst)
                k += m
            sums[:, j] = running[:, 0]
            excess[:, j] = worst
        return sums, excess

    def counts(self, n) -> np.ndarray:
        """floor(U + n u), the number of W1 draws among the first n."""
        n = np.asarray(n, dtype=np.uint64)
        lo = n[None, ...] * self.u_int.reshape((-1,) + (1,) * n.ndim)
        U = self.U_int.reshape(lo.shape[:1] + (1,) * n.ndim)
        carry = (lo + U) < lo
        return mulhi(n[None, ...], self.u_int.reshape(U.shape)) + carry.astype(np.uint64)

    def deviation_closed_form(self, n) -> np.ndarray:
        """S_n - n mu = (W1 - W2)(1{U >= 1 - frac(n u)} - frac(n u)), shape (size, len(n))."""
        n = np.atleast_1d(np.asarray(n, dtype=np.uint64))
        lo = n[None, :] * self.u_int[:, None]
        carry = ((lo + self.U_int[:, None]) < lo).astype(float)
        frac = lo.astype(float) * _TWO_M64
        return self.z[:, None] * (carry - frac)


class EndStream:
    """Stateful generator of X_1, X_2, ... for a single (U, Y) pair.

    Parameters
    ----------
    rt : ResidualTransform
    U_int : int
        Driving uniform as a 64-bit fixed-point integer.
    w : float
        1 - q, where Y = K^{-1}(q).
    """

    def __init__(self, rt: ResidualTransform, U_int: int, w: float):
        b = EndBatch.from_levels(rt, [U_int], [w])
        self.rt = rt
        self._U = int(b.U_int[0])
        self._u = int(b.u_int[0])
        self.U = float(b.U[0])
        self.Y = float(b.y[0])
        self.u = float(b.u[0])
        self.w1 = float(b.w1[0])
        self.w2 = float(b.w2[0])
        self.k = 1

    @classmethod
    def from_seed(cls, rt: ResidualTransform, seed: int, rep: int = 0) -> "EndStream":
        words = slot_words(seed, "end", 1, start=rep)[0]
        return cls(rt, int(words[0]), float(_open_unit(words[1])))

    @property
    def z(self) -> float:
        return self.w1 - self.w2

    def in_c(self, k: int) -> bool:
        """frac(U + k u) < u; ties go to the lower branch."""
        return ((self._U + k * self._u) & _MASK) < self._u

    def next(self) -> float:
        x = self.w1 if self.in_c(self.k) else self.w2
        self.k += 1
        return x

    __next__ = next

    def __iter__(self):
        return self

    def take(self, n: int) -> np.ndarray:
        """The next n coordinates as an array."""
        ks = np.arange(self.k, self.k + n, dtype=np.uint64)
        frac = np.uint64(self._U) + ks * np.uint64(self._u)
        self.k += n
        return np.where(frac < np.uint64(self._u), self.w1, self.w2)

    def count(self, n: int) -> int:
        """Number of W1 draws among X_1..X_n, i.e. floor(U + n u)."""
        return (self._U + n * self._u) >> 64

    def deviation_closed_form(self, n: int) -> float:
        """Exact S_n - n mu implied by (U, Y), evaluated in integer arithmetic."""
        if n < 1:
            raise DomainError("n must be positive")
        lo = (n * self._u) & _MASK
        carry = 1 if lo + self._U > _MASK else 0
        return self.z * (carry - lo * _TWO_M64)


def end_batch(rt: ResidualTransform, reps: int, seed: int, start: int = 0) -> EndBatch:
    """Streams for replicates start .. start+reps-1 of the given seed."""
    return EndBatch.from_words(rt, slot_words(seed, "end", reps, start=start))


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

class ScenarioKind(enum.Enum):
    END = "end"
    INDEPENDENT = "independent"
    COMONOTONIC = "comonotonic"
    CM_PERIODIC = "cm_periodic"


_ALIASES = {
    "end": ScenarioKind.END,
    "independent": ScenarioKind.INDEPENDENT,
    "iid": ScenarioKind.INDEPENDENT,
    "comonotonic": ScenarioKind.COMONOTONIC,
    "comonotone": ScenarioKind.COMONOTONIC,
    "cm": ScenarioKind.CM_PERIODIC,
    "cm_periodic": ScenarioKind.CM_PERIODIC,
}

MixProvider = Callable[[np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind
    mix: Optional[MixProvider] = None

    @classmethod
    def parse(cls, text, mix: Optional[MixProvider] = None) -> "Scenario":
        if isinstance(text, Scenario):
            return text
        if isinstance(text, ScenarioKind):
            kind = text
        else:
            try:
                kind = _ALIASES[str(text).lower()]
            except KeyError:
                raise DomainError(f"unknown scenario {text!r}") from None
        if kind is ScenarioKind.CM_PERIODIC and mix is None:
            raise DomainError("cm_periodic needs a complete-mix provider")
        return cls(kind, mix)

    @property
    def name(self) -> str:
        return self.kind.value


def antithetic_mix(dist: MarginalDistribution) -> MixProvider:
    """Blocks (Q(V), Q(1-V)); a complete mix only when F is symmetric."""
    def provider(rng):
        v = rng.random()
        return np.array([dist.quantile(v), dist.quantile(1.0 - v)])
    return provider


def _checked_mix(block, mu):
    block = np.asarray(block, dtype=float).ravel()
    m = block.size
    if m == 0:
        raise InvalidMixError("empty mix block")
    target = m * mu
    err = abs(math.fsum(block) - target)
    if not err <= 1e-9 * max(1.0, abs(target)):
        raise InvalidMixError(f"mix block sums to {math.fsum(block)!r}, expected {target!r}")
    return block


def _paths_chunk(rt, scen, n, seed, start, rows):
    dist = rt.dist
    if scen.kind is ScenarioKind.END:
        return end_batch(rt, rows, seed, start).values(1, n)
    if scen.kind is ScenarioKind.COMONOTONIC:
        words = slot_words(seed, "comonotonic", rows, start=start)
        x = dist.quantile(to_unit(words[:, 0]))
        return np.repeat(np.atleast_1d(x)[:, None], n, axis=1)
    out = np.empty((rows, n))
    for i in range(rows):
        rng = replicate_generator(seed, scen.kind.value, start + i)
        if scen.kind is ScenarioKind.INDEPENDENT:
            out[i] = dist.quantile(rng.random(n))
        else:
            block = _checked_mix(scen.mix(rng), rt.mu)
            out[i] = np.resize(block, n)
    return out


def sample_paths(rt: ResidualTransform, scenario, n: int, reps: int, seed: int,
                 start: int = 0) -> np.ndarray:
    """Paths of length n for replicates start .. start+reps-1, shape (reps, n)."""
    if n < 1 or reps < 1:
        raise DomainError("n and reps must be positive")
    return _paths_chunk(rt, Scenario.parse(scenario), int(n), seed, int(start), int(reps))


def sample_path(rt: ResidualTransform, scenario, n: int, seed: int, rep: int = 0) -> np.ndarray:
    """One path of length n; deterministic in (seed, rep)."""
    return sample_paths(rt, scenario, n, 1, seed, start=rep)[0]


def _rep_chunks(reps, n):
    rows = max(1, min(reps, (1 << 22) // max(n, 1), 4096))
    return [(s, min(rows, reps - s)) for s in range(0, reps, rows)]


def centered_partial_sums(rt: ResidualTransform, scenario, n_list: Sequence[int], reps: int,
                          seed: int, workers: Optional[int] = None) -> np.ndarray:
    """S_n - n mu at each n in n_list, shape (reps, len(n_list)).

    Centring before the cumulative sum keeps rounding proportional to the
    deviation rather than to n mu.
    """
    scen = Scenario.parse(scenario)
    n_arr = np.asarray(n_list, dtype=int)
    if n_arr.ndim != 1 or n_arr.size == 0 or np.any(n_arr < 1):
        raise DomainError("n_list must hold positive integers")
    nmax = int(n_arr.max())

    def job(chunk):
        s, rows = chunk
        if scen.kind is ScenarioKind.END:
            return end_batch(rt, rows, seed, s).centered_scan(n_arr)[0]
        x = _paths_chunk(rt, scen, nmax, seed, s, rows) - rt.mu
        return np.cumsum(x, axis=1)[:, n_arr - 1]

    chunks = _rep_chunks(int(reps), nmax)
    workers = workers or default_workers()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]
    return np.vstack(parts)


def variance_with_se(x, axis=0):
    """Unbiased sample variance and its standard error.

    Uses Var(s^2) = m4/N - s^4 (N-3)/(N(N-1)) with plug-in central moments.
    """
    x = np.asarray(x, dtype=float)
    N = x.shape[axis]
    d = x - x.mean(axis=axis, keepdims=True)
    s2 = (d ** 2).sum(axis=axis) / (N - 1)
    m4 = (d ** 4).mean(axis=axis)
    var_s2 = m4 / N - s2 ** 2 * (N - 3) / (N * (N - 1))
    return s2, np.sqrt(np.maximum(var_s2, 0.0))


@dataclass(frozen=True)
class VarianceRow:
    n: int
    scenario: str
    var_estimate: float
    stderr: float


def compare_scenarios(rt: ResidualTransform, scenarios, n_list, reps: int, seed: int):
    """Var(S_n) with standard errors for each scenario and n."""
    rows = []
    for sc in scenarios:
        scen = Scenario.parse(sc)
        dev = centered_partial_sums(rt, scen, n_list, reps, seed)
        var, se = variance_with_se(dev, axis=0)
        rows.extend(VarianceRow(int(n), scen.name, float(v), float(e))
                    for n, v, e in zip(n_list, var, se))
    return rows


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvelopeRow:
    """Deviation summary at one n across replicates.

    ``max_excess`` is the largest |S_k - k mu| - Z over replicates and over
    every prefix k <= n; ``within`` compares it with the round-off allowance.
    """

    n: int
    max_abs_dev: float
    paired_z: float
    max_excess: float
    tolerance: float
    within: bool


def deviation_envelope(rt: ResidualTransform, n_list, replicates: int, seed: int):
    """Check |S_k - k mu| <= Z on every prefix of END paths."""
    n_arr = np.sort(np.asarray(n_list, dtype=int))
    if n_arr.size == 0 or n_arr[0] < 1 or replicates < 1:
        raise DomainError("need positive n values and replicates")
    b = end_batch(rt, int(replicates), seed)
    sums, excess = b.centered_scan(n_arr)
    scale = np.maximum(np.maximum(np.abs(b.w1), np.abs(b.w2)), 1.0)
    rows = []
    for j, n in enumerate(n_arr):
        dev = np.abs(sums[:, j])
        i = int(np.argmax(dev))
        tol = float((n * 2.0 ** -48 * scale).max())
        worst = float(excess[:, j].max())
        rows.append(EnvelopeRow(int(n), float(dev[i]), float(b.z[i]), worst, tol, worst <= tol))
    return rows


def counting_check(batch: EndBatch, n: int):
    """Verify floor(k u) <= sum_{i<=k} 1{C_i} <= floor(k u) + 1 for every k <= n.

    The running count of indicators is compared, in integer arithmetic, with
    floor(k u) + 1{U >= 1 - frac(k u)}; the identity is checked exactly.
    Returns (ok, max_k |count_k - k u|) where the maximum is taken over all
    streams and prefixes.
    """
    if n >= 2 ** 32:
        raise DomainError("counting check supports n < 2^32")
    U = batch.U_int[:, None]
    u = batch.u_int[:, None]
    extra = np.zeros((batch.size, 1), dtype=np.int64)
    ok = True
    worst = np.uint64(0)
    k = 1
    while k <= n:
        m = min(1 << 14, n - k + 1)
        ks = np.arange(k, k + m, dtype=np.uint64)
        lo = ks[None, :] * u                       # frac(k u) * 2^64
        s = lo + U                                 # frac(U + k u) * 2^64
        # C_k minus the increment of floor(k u), accumulated: count_k - floor(k u)
        step = (s < u).view(np.int8) - (lo < u).view(np.int8)
        ex = np.cumsum(step, axis=1, dtype=np.int64) + extra
        carry = s < lo
        ok = ok and bool(np.array_equal(ex, carry))
        # |count - k u| is frac(k u) without a carry and 1 - frac(k u) with one
        worst = max(worst, np.where(carry, np.uint64(0) - lo, lo).max())
        extra = ex[:, -1:]
        k += m
    return ok, float(worst) * _TWO_M64


def send_status(rt: ResidualTransform) -> str:
    """'certified' when Var(X_1) = E[Z^2]/4, else 'unknown' (never 'false')."""
    m2 = rt.dist.moment(2.0)
    ez2 = rt.residual_moment(2.0)
    if not (math.isfinite(m2) and math.isfinite(ez2)):
        return "unknown"
    var = m2 - rt.mu ** 2
    return "certified" if math.isclose(var, 0.25 * ez2, rel_tol=1e-10, abs_tol=1e-14) else "unknown"
