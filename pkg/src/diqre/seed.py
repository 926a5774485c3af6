"""Seed handling: the rounded interval algorithm and seed-length accounting.

Targets are quantized once to 64-bit dyadic fixed point: a distribution is a
tuple of integer CDF points ``0 = c_0 <= ... <= c_k = 2**64``.  The decoder
keeps the seed interval ``[r / 2**j, (r + 1) / 2**j)`` and the current target
interval as exact integers over power-of-two denominators, so decoding is
bit-exact and platform independent.  Integer sizes grow by 64 bits per
decoded symbol, so blocks are meant to be short (tens to hundreds of symbols).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

PRECISION = 64
ONE = 1 << PRECISION


class SeedExhausted(RuntimeError):
    """The bit source ran out before decoding finished."""


@dataclass(frozen=True)
class QuantizedDistribution:
    """Distribution with CDF points on the grid ``2**-64``.

    ``cdf[i]`` is ``2**64`` times the mass of the labels before ``labels[i]``.
    """

    cdf: tuple[int, ...]
    labels: tuple = ()

    def __post_init__(self):
        cdf = tuple(int(c) for c in self.cdf)
        if len(cdf) < 2 or cdf[0] != 0 or cdf[-1] != ONE or any(b < a for a, b in zip(cdf, cdf[1:])):
            raise ValueError("cdf must rise from 0 to 2**64")
        object.__setattr__(self, "cdf", cdf)
        labels = tuple(self.labels) if self.labels else tuple(range(len(cdf) - 1))
        if len(labels) != len(cdf) - 1:
            raise ValueError("one label per symbol")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_probs(cls, probs, labels=()) -> "QuantizedDistribution":
        """Round the exact CDF of ``probs`` (renormalized) down onto the grid."""
        exact = [Fraction(float(p)) for p in probs]
        if any(p < 0 for p in exact) or sum(exact) <= 0:
            raise ValueError("probabilities must be nonnegative with positive total")
        total = sum(exact)
        run, cdf = Fraction(0), [0]
        for p in exact[:-1]:
            run += p
            cdf.append(math.floor(run / total * ONE))
        cdf.append(ONE)
        return cls(tuple(cdf), labels)

    @property
    def size(self) -> int:
        return len(self.cdf) - 1

    def probs(self) -> list[Fraction]:
        return [Fraction(b - a, ONE) for a, b in zip(self.cdf, self.cdf[1:])]

    def support_size(self) -> int:
        return sum(1 for a, b in zip(self.cdf, self.cdf[1:]) if b > a)

    def quantization_error(self, probs) -> float:
        """Statistical distance to the unquantized (renormalized) ``probs``."""
        exact = [Fraction(float(p)) for p in probs]
        total = sum(exact)
        return float(sum(abs(p / total - q) for p, q in zip(exact, self.probs())) / 2)


class RiaOutcome(NamedTuple):
    symbols: tuple
    bits_consumed: int
    truncated: bool


class BitStream:
    """Sequential source of seed bits, most significant bit of each byte first.

    ``cryptographic`` is False for the seeded pseudorandom stream, which is for
    simulation and testing only.
    """

    def __init__(self, data: bytes | None = None, *, generator: np.random.Generator | None = None,
                 chunk: int = 4096, cryptographic: bool = True):
        if (data is None) == (generator is None):
            raise ValueError("give exactly one of data or generator")
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8)) if data is not None else np.zeros(0, np.uint8)
        self._gen = generator
        self._chunk = chunk
        self._pos = 0
        self.consumed = 0
        self.cryptographic = cryptographic and generator is None

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitStream":
        bits = np.asarray(list(bits), dtype=np.uint8)
        if np.any(bits > 1):
            raise ValueError("bits must be 0 or 1")
        s = cls(b"")
        s._bits = bits
        return s

    @classmethod
    def from_file(cls, path) -> "BitStream":
        return cls(Path(path).read_bytes())

    @classmethod
    def pseudorandom(cls, seed, key: int = 0) -> "BitStream":
        """Deterministic non-cryptographic stream keyed by ``(seed, key)``."""
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(key)])))
        return cls(generator=gen, cryptographic=False)

    def _refill(self):
        if self._gen is None:
            raise SeedExhausted(f"bit source exhausted after {self.consumed} bits")
        fresh = np.unpackbits(self._gen.integers(0, 256, self._chunk, dtype=np.uint8))
        self._bits = np.concatenate([self._bits[self._pos:], fresh])
        self._pos = 0

    def next_bit(self) -> int:
        if self._pos >= len(self._bits):
            self._refill()
        b = int(self._bits[self._pos])
        self._pos += 1
        self.consumed += 1
        return b

    def take(self, count: int) -> np.ndarray:
        while len(self._bits) - self._pos < count:
            self._refill()
        out = self._bits[self._pos:self._pos + count].copy()
        self._pos += count
        self.consumed += count
        return out


def _as_sequence(targets, length: int | None) -> list[QuantizedDistribution]:
    if isinstance(targets, QuantizedDistribution):
        if length is None:
            raise ValueError("length is needed when a single distribution is given")
        return [targets] * int(length)
    targets = list(targets)
    if length is not None and length != len(targets):
        raise ValueError("length does not match the distribution sequence")
    return targets


def _locate(cdf: Sequence[int], lo: int, width: int, point: int) -> int:
    """Index ``i`` with ``lo + width c_i <= point < lo + width c_{i+1}``."""
    for i in range(len(cdf) - 1):
        if lo + width * cdf[i] <= point < lo + width * cdf[i + 1]:
            return i
    raise AssertionError("point outside the target interval")


def ria_decode(targets, bits, k_max: int, length: int | None = None) -> RiaOutcome:
    """Decode one block of symbols from seed bits with the rounded interval algorithm.

    Parameters
    ----------
    targets : QuantizedDistribution or sequence of them
        Per-symbol distributions, in decoding order.
    bits : BitStream or iterable of 0/1
    k_max : int
        Bit budget of the block.  When it is reached the left end of the seed
        interval picks every remaining symbol (rounding down).
    length : int, optional
        Number of symbols when a single distribution is given.
    """
    seq = _as_sequence(targets, length)
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    stream = bits if isinstance(bits, BitStream) else BitStream.from_bits(bits)
    # target interval [lo, lo + width) / 2**e, seed interval [r, r + 1) / 2**j
    lo, width, e = 0, 1, 0
    r, j = 0, 0
    out: list = []
    truncated = False
    t = 0
    while t < len(seq):
        dist = seq[t]
        # everything as integers over the common denominator 2**S
        S = max(e + PRECISION, j)
        base = lo << (S - e)
        w = width << (S - e - PRECISION)
        s_lo = r << (S - j)
        s_hi = (r + 1) << (S - j)
        i = _locate(dist.cdf, base, w, s_lo)
        inside = s_hi <= base + w * dist.cdf[i + 1]
        if inside or j >= k_max:
            truncated = truncated or not inside
            lo = (lo << PRECISION) + width * dist.cdf[i]
            width = width * (dist.cdf[i + 1] - dist.cdf[i])
            e += PRECISION
            out.append(dist.labels[i])
            t += 1
            continue
        r = (r << 1) | stream.next_bit()
        j += 1
    return RiaOutcome(tuple(out), j, truncated)


def encode_interval(targets, symbols, length: int | None = None) -> tuple[Fraction, Fraction]:
    """Exact target interval ``[low, high)`` of a decoded symbol sequence."""
    seq = _as_sequence(targets, length if length is not None else len(symbols))
    lo, width = Fraction(0), Fraction(1)
    for dist, s in zip(seq, symbols):
        i = dist.labels.index(s)
        lo += width * Fraction(dist.cdf[i], ONE)
        width *= Fraction(dist.cdf[i + 1] - dist.cdf[i], ONE)
    return lo, lo + width


def ria_exact_distribution(targets, k_max: int, length: int | None = None, max_k: int = 20) -> dict[tuple, Fraction]:
    """Output distribution of ``ria_decode`` over all ``2**k_max`` seeds, exactly."""
    if k_max > max_k:
        raise ValueError(f"k_max={k_max} exceeds the enumeration guard {max_k}")
    seq = _as_sequence(targets, length)
    if sum(d.size for d in seq) > 64:
        raise ValueError("target too large to enumerate")
    counts: dict[tuple, int] = {}
    for seed in range(1 << k_max):
        bits = [(seed >> (k_max - 1 - b)) & 1 for b in range(k_max)]
        sym = ria_decode(seq, bits, k_max).symbols
        counts[sym] = counts.get(sym, 0) + 1
    return {s: Fraction(c, 1 << k_max) for s, c in sorted(counts.items(), key=lambda kv: repr(kv[0]))}


def target_distribution(targets, length: int | None = None) -> dict[tuple, Fraction]:
    """Exact joint target of a product of quantized distributions (support only)."""
    seq = _as_sequence(targets, length)
    joint: dict[tuple, Fraction] = {(): Fraction(1)}
    for dist in seq:
        nxt = {}
        for s, p in joint.items():
            for lab, q in zip(dist.labels, dist.probs()):
                if q > 0:
                    nxt[s + (lab,)] = p * q
        joint = nxt
    return joint


def statistical_distance(p: dict, q: dict) -> Fraction:
    keys = set(p) | set(q)
    return sum((abs(p.get(k, 0) - q.get(k, 0)) for k in keys), Fraction(0)) / 2


@dataclass(frozen=True)
class RoundInputModel:
    """Per-round input distribution of the spot-checking protocol.

    Symbols are ``(t, x, y)``: the generation symbol ``(0, x_gen, y_gen)``
    first, then test symbols ``(1, x, y)`` in row-major order over the
    support of ``mu``.
    """

    gamma: float
    mu: np.ndarray
    x_gen: int
    y_gen: int
    _dist: QuantizedDistribution | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if mu.ndim != 2 or np.any(mu < 0) or abs(mu.sum() - 1) > 1e-12:
            raise ValueError("mu must be a probability table")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "_dist", QuantizedDistribution.from_probs(self.probabilities(), self.symbols()))

    def symbols(self) -> tuple:
        tests = [(1, int(x), int(y)) for x, y in zip(*np.nonzero(self.mu > 0))]
        return ((0, self.x_gen, self.y_gen), *tests)

    def probabilities(self) -> np.ndarray:
        tests = self.gamma * self.mu[self.mu > 0]
        return np.append(1.0 - self.gamma, tests)

    @property
    def distribution(self) -> QuantizedDistribution:
        return self._dist

    def entropy_bits(self) -> float:
        """``H(T_i X_i Y_i) = h(gamma) + gamma H(mu)``."""
        p = self.probabilities()
        p = p[p > 0]
        return float(-(p * np.log2(p)).sum())


class SeedRequirements(NamedTuple):
    kappa: float
    n_max: float
    eps_ria: float
    eps_dist: float


def padded_length(n: int, m_blocks: int) -> int:
    """Smallest multiple of ``m_blocks`` that is at least ``n``."""
    if m_blocks < 1:
        raise ValueError("need at least one block")
    return -(-int(n) // int(m_blocks)) * int(m_blocks)


def seed_requirements(n, m_blocks: int, gamma: float, mu, k_max: int) -> SeedRequirements:
    """Seed budget ``kappa``, cap ``2 kappa`` and the two failure terms of the block-wise RIA.

    ``n`` is padded up to a multiple of ``m_blocks``.  ``eps_dist`` is clipped
    to 1 (it bounds a statistical distance).
    """
    if k_max < 1:
        raise ValueError("k_max must be positive")
    n = padded_length(n, m_blocks)
    mu = np.asarray(mu, dtype=float)
    mu_nz = mu[mu > 0]
    h_mu = float(-(mu_nz * np.log2(mu_nz)).sum())
    h_g = 0.0 if gamma in (0.0, 1.0) else -gamma * math.log2(gamma) - (1 - gamma) * math.log2(1 - gamma)
    kappa = (gamma * h_mu + h_g) * n + 3 * m_blocks
    eps_ria = math.exp(-2 * kappa ** 2 / (m_blocks * k_max ** 2))
    log2_dist = math.log2(m_blocks) + n * math.log2(len(mu_nz) + 1) / m_blocks - (k_max + 1)
    eps_dist = 1.0 if log2_dist >= 0 else 2.0 ** log2_dist
    return SeedRequirements(kappa, 2 * kappa, eps_ria, eps_dist)


def chernoff_tail(mu_mean: float, r: float) -> float:
    """``Pr[|S - mu| >= r] <= 2 exp(-r**2 / (3 mu))`` for sums of independent bits, ``0 <= r <= mu``."""
    if mu_mean <= 0:
        raise ValueError("mean must be positive")
    if not 0 <= r <= mu_mean:
        raise ValueError("need 0 <= r <= mu")
    return min(1.0, 2.0 * math.exp(-r * r / (3.0 * mu_mean)))


def hoeffding_tail(ranges, t: float) -> float:
    """Two-sided Hoeffding bound ``2 exp(-2 t**2 / sum (b_i - a_i)**2)``.

    ``ranges`` holds widths ``b_i - a_i`` or ``(a_i, b_i)`` pairs.
    """
    r = np.asarray(ranges, dtype=float)
    widths = r[:, 1] - r[:, 0] if r.ndim == 2 else r
    if np.any(widths < 0) or t < 0:
        raise ValueError("widths and t must be nonnegative")
    denom = float((widths ** 2).sum())
    if denom == 0:
        return 0.0 if t > 0 else 1.0
    return min(1.0, 2.0 * math.exp(-2.0 * t * t / denom))
