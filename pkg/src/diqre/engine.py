"""Desk-scale simulation of the accumulation phase and the certification pipeline.

Randomness for simulated devices comes from a counter-based generator
(Philox) keyed by ``(seed, stream, chunk index)``.  Rounds are processed in
fixed-size chunks, so serial and threaded runs give identical transcripts.
This randomness is for simulation only and is not cryptographic.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal

from . import digp, eat, mtf
from .behaviour import Behaviour
from .game import Game, as_vector
from .seed import BitStream, RoundInputModel, padded_length, ria_decode

CHUNK = 1 << 16
LOG_CAP = 10 ** 6


def keyed_rng(seed: int, stream: int, counter: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream), int(counter)])))


@dataclass(frozen=True)
class Transcript:
    """Aggregated record of one accumulation run.

    ``score_counts`` has one entry per score followed by the count of
    generation rounds.  ``rounds`` optionally holds the per-round log as an
    int array with columns ``(t, x, y, a, b, c)``, ``c = -1`` for generation
    rounds.
    """

    n: int
    score_counts: np.ndarray
    abort: bool | None = None
    seed_bits_used: int = 0
    rounds: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        counts = np.asarray(self.score_counts, dtype=np.int64)
        if int(counts.sum()) != int(self.n) or np.any(counts < 0):
            raise ValueError("score counts must be nonnegative and sum to n")
        object.__setattr__(self, "score_counts", counts)

    def frequencies(self) -> np.ndarray:
        return self.score_counts / float(self.n)

    def with_abort(self, flag: bool) -> "Transcript":
        return Transcript(self.n, self.score_counts, bool(flag), self.seed_bits_used, self.rounds)

    def to_csv(self, names) -> str:
        names = list(names) + ["perp"]
        lines = ["score,count"] + [f"{s},{int(c)}" for s, c in zip(names, self.score_counts)]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "n": int(self.n), "score_counts": [int(c) for c in self.score_counts],
            "abort": self.abort, "seed_bits_used": int(self.seed_bits_used),
        }


@dataclass(frozen=True)
class HonestDevice:
    """Pair of devices that play every round i.i.d. with a fixed behaviour."""

    behaviour: Behaviour
    stream: int = 0

    def respond(self, x: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Sample outputs ``(a, b)`` for question arrays ``x, y``."""
        t = self.behaviour.table
        A, B = t.shape[:2]
        x, y = np.asarray(x), np.asarray(y)
        u = rng.random(len(x))
        flat = np.empty(len(x), dtype=np.int64)
        for xx, yy in set(zip(x.tolist(), y.tolist())):
            sel = (x == xx) & (y == yy)
            cdf = np.cumsum(t[:, :, xx, yy].ravel())
            flat[sel] = np.minimum(np.searchsorted(cdf, u[sel] * cdf[-1], side="right"), A * B - 1)
        return flat // B, flat % B


def _check_params(params: eat.ProtocolParams):
    if not 0.0 < params.gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")


def _aggregate_chunk(device: HonestDevice, game: Game, gamma: float, size: int, seed: int, counter: int) -> np.ndarray:
    """Score counts of ``size`` rounds, sampled through sufficient statistics."""
    rng = keyed_rng(seed, device.stream, counter)
    counts = np.zeros(game.n_scores + 1, dtype=np.int64)
    tests = int(rng.binomial(size, gamma))
    counts[-1] = size - tests
    mu = game.mu.ravel()
    per_q = rng.multinomial(tests, mu / mu.sum())
    t = device.behaviour.table
    X, Y = game.mu.shape
    for q in np.nonzero(per_q)[0]:
        x, y = divmod(int(q), Y)
        p = t[:, :, x, y].ravel()
        outs = rng.multinomial(per_q[q], p / p.sum())
        scores = game.rule[:, :, x, y].ravel()
        np.add.at(counts, scores, outs)
    return counts


def _chunks(n: int, chunk: int):
    return [(c, min(chunk, n - c * chunk)) for c in range(-(-n // chunk))]


def direct_inputs(model: RoundInputModel, n: int, seed: int, stream: int = 1, chunk: int = CHUNK):
    """Sample ``n`` rounds of ``(t, x, y)`` from the input model with keyed randomness."""
    probs = model.probabilities()
    syms = np.array(model.symbols(), dtype=np.int64)
    out = []
    for c, size in _chunks(n, chunk):
        idx = keyed_rng(seed, stream, c).choice(len(probs), size=size, p=probs / probs.sum())
        out.append(syms[idx])
    return np.concatenate(out) if out else np.zeros((0, 3), np.int64), 0


def ria_inputs(model: RoundInputModel, n: int, bits: BitStream, block_length: int, k_max: int):
    """Decode ``n`` rounds of inputs block by block from seed bits.

    ``n`` is padded up to whole blocks and the surplus rounds dropped.
    """
    total = padded_length(n, block_length)
    start = bits.consumed
    syms = []
    for _ in range(total // block_length):
        syms.extend(ria_decode(model.distribution, bits, k_max, length=block_length).symbols)
    arr = np.array(syms[:n], dtype=np.int64).reshape(-1, 3)
    return arr, bits.consumed - start


def run_accumulation(device: HonestDevice, game: Game, params: eat.ProtocolParams, inputs=None, seed: int = 0,
                     log: bool = False, threads: int = 1, chunk: int = CHUNK) -> Transcript:
    """Play ``params.n`` rounds and count scores; generation rounds count as the abort symbol.

    Parameters
    ----------
    inputs : tuple (array of (t, x, y) rows, seed bits used), optional
        Per-round inputs, for instance from ``ria_inputs``.  Without them the
        round types and questions are drawn directly, chunk by chunk, from
        sufficient statistics; this path cannot produce a per-round log.
    log : bool
        Keep the per-round log (needs ``inputs`` and ``n <= 10**6``).
    threads : int
        Worker threads; the result does not depend on it.
    """
    _check_params(params)
    n = int(params.n)
    if inputs is None:
        if log:
            raise ValueError("per-round logs need explicit inputs")
        jobs = _chunks(n, chunk)

        def work(job):
            return _aggregate_chunk(device, game, params.gamma, job[1], seed, job[0])

        if threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(threads) as ex:
                parts = list(ex.map(work, jobs))
        else:
            parts = [work(j) for j in jobs]
        counts = np.sum(parts, axis=0) if parts else np.zeros(game.n_scores + 1, np.int64)
        return Transcript(n, counts)

    rows, used = inputs
    rows = np.asarray(rows, dtype=np.int64)
    if len(rows) < n:
        raise ValueError(f"input source supplied {len(rows)} rounds, {n} needed")
    rows = rows[:n]
    if log and n > LOG_CAP:
        raise ValueError(f"per-round logs are limited to n <= {LOG_CAP}")
    a = np.empty(n, np.int64)
    b = np.empty(n, np.int64)
    for c, size in _chunks(n, chunk):
        sl = slice(c * chunk, c * chunk + size)
        a[sl], b[sl] = device.respond(rows[sl, 1], rows[sl, 2], keyed_rng(seed, device.stream, c))
    test = rows[:, 0] == 1
    scores = np.full(n, -1, dtype=np.int64)
    scores[test] = game.rule[a[test], b[test], rows[test, 1], rows[test, 2]]
    counts = np.bincount(scores[test], minlength=game.n_scores).astype(np.int64)
    counts = np.append(counts, n - int(test.sum()))
    log_arr = np.column_stack([rows, a, b, scores]) if log else None
    return Transcript(n, counts, seed_bits_used=int(used), rounds=log_arr)


def abort_decision(transcript: Transcript, omega, delta, gamma: float) -> bool:
    """True when some score frequency leaves the open window ``gamma (omega -+ delta)``.

    The comparison is exact in rational arithmetic on the given floats.
    """
    omega, delta = as_vector(omega), np.broadcast_to(np.asarray(delta, float), as_vector(omega).shape)
    counts = transcript.score_counts[:len(omega)]
    g = Fraction(float(gamma))
    n = int(transcript.n)
    for c, w, d in zip(counts, omega, delta):
        f = Fraction(int(c), n)
        lo = g * (Fraction(float(w)) - Fraction(float(d)))
        hi = g * (Fraction(float(w)) + Fraction(float(d)))
        if not lo < f < hi:
            return True
    return False


def certify_pipeline(game: Game, x_gen: int, y_gen: int, level, omega, params: eat.ProtocolParams, v=None,
                     variant: str = "round", s_max: int | None = None, **solver_kw):
    """Certificate at ``v`` (default ``omega``), min-tradeoff function and optimized finite-size report."""
    omega = as_vector(omega)
    v = omega if v is None else as_vector(v)
    cert = digp.dual_certificate(game, x_gen, y_gen, level, v, **solver_kw)
    if variant == "blocked":
        s_max = int(math.ceil(1 / params.gamma)) if s_max is None else int(s_max)
        f = mtf.build_blocked(cert, params.gamma, s_max)
    elif variant == "round":
        f = mtf.build(cert, params.gamma)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    report = eat.certified_rate(params, f, omega)
    comp = eat.completeness_error(params.n, params.gamma, omega, params.delta)
    report.extra["eps_comp"] = comp
    return report, cert


def extract_stub(raw_bits, seed_bits, output_length: int) -> np.ndarray:
    """Toeplitz hash ``T r mod 2`` with ``T[i, j] = s[i - j + len(r) - 1]``.

    Needs ``len(r) + output_length - 1`` seed bits.  Quantum-proof parameter
    choices are left to the caller.
    """
    r = np.asarray(raw_bits, dtype=np.int64).ravel()
    s = np.asarray(seed_bits, dtype=np.int64).ravel()
    if output_length < 0 or output_length > len(r):
        raise ValueError("output length must lie between 0 and the raw length")
    if output_length == 0:
        return np.zeros(0, dtype=np.uint8)
    need = len(r) + output_length - 1
    if len(s) < need:
        raise ValueError(f"insufficient seed: {need} bits needed, {len(s)} given")
    s = s[:need]
    if len(r) * output_length <= 1 << 22:
        full = np.convolve(s, r)
    else:
        full = np.rint(signal.fftconvolve(s.astype(float), r.astype(float)))
    out = full[len(r) - 1:len(r) - 1 + output_length]
    return (np.asarray(out, dtype=np.int64) % 2).astype(np.uint8)
