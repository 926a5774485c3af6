import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from diqre import engine, game, seed
from diqre.seed import ONE, QuantizedDistribution


def oracle(seq, k):
    """Output law of round-down RIA: seed r yields the sequence whose interval holds r / 2**k."""
    out = {}
    for combo in itertools.product(*[range(d.size) for d in seq]):
        lo, w = Fraction(0), Fraction(1)
        for d, i in zip(seq, combo):
            lo += w * Fraction(d.cdf[i], ONE)
            w *= Fraction(d.cdf[i + 1] - d.cdf[i], ONE)
        mass = Fraction(math.ceil((lo + w) * 2 ** k) - math.ceil(lo * 2 ** k), 2 ** k)
        if mass:
            out[tuple(d.labels[i] for d, i in zip(seq, combo))] = mass
    return out


def test_fair_bit():
    d = QuantizedDistribution.from_probs([0.5, 0.5])
    out = seed.ria_decode([d], [0], k_max=1)
    assert out == seed.RiaOutcome((0,), 1, False)


def test_three_quarters():
    d = QuantizedDistribution.from_probs([0.75, 0.25], labels=("a", "b"))
    out = seed.ria_decode([d], [1, 1], k_max=4)
    assert out.symbols == ("b",) and out.bits_consumed == 2 and not out.truncated
    assert seed.ria_decode([d], [0, 0, 0, 0], k_max=4).symbols == ("a",)


def test_thirds_exhaustive():
    d = QuantizedDistribution.from_probs([2 / 3, 1 / 3], labels=("a", "b"))
    got = seed.ria_exact_distribution([d], 3)
    assert got == oracle([d], 3)
    assert got == {("a",): Fraction(3, 4), ("b",): Fraction(1, 4)}


def test_truncation_flag():
    d = QuantizedDistribution.from_probs([2 / 3, 1 / 3])
    out = seed.ria_decode([d], [1, 0], k_max=2)
    assert out.truncated and out.bits_consumed == 2 and out.symbols == (0,)


def test_exhausted_source():
    d = QuantizedDistribution.from_probs([2 / 3, 1 / 3])
    with pytest.raises(seed.SeedExhausted):
        seed.ria_decode([d], seed.BitStream.from_bits([1]), k_max=8)


def test_quantization():
    d = QuantizedDistribution.from_probs([0.1, 0.2, 0.7])
    assert sum(d.probs()) == 1
    assert d.quantization_error([0.1, 0.2, 0.7]) < 3 * 2.0 ** -64
    assert QuantizedDistribution.from_probs([0.0, 1.0]).support_size() == 1
    with pytest.raises(ValueError):
        QuantizedDistribution((0, 5, 3, ONE))
    with pytest.raises(ValueError):
        QuantizedDistribution.from_probs([-0.1, 1.1])


probs_st = st.lists(st.floats(0.01, 1.0), min_size=2, max_size=5)


@given(st.lists(probs_st, min_size=1, max_size=2), st.integers(1, 10))
def test_matches_oracle_and_b4_bound(dists, k):
    seq = [QuantizedDistribution.from_probs(p) for p in dists]
    got = seed.ria_exact_distribution(seq, k)
    assert got == oracle(seq, k)
    assert sum(got.values()) == 1
    alphabet = math.prod(d.size for d in seq)
    assert seed.statistical_distance(got, seed.target_distribution(seq)) <= Fraction(alphabet, 2 ** (k + 1))


def test_b4_bound_random_targets(rng):
    for _ in range(50):
        size = int(rng.integers(2, 7))
        k = int(rng.integers(1, 13))
        d = QuantizedDistribution.from_probs(rng.dirichlet(np.ones(size)))
        dist = seed.statistical_distance(seed.ria_exact_distribution([d], k), seed.target_distribution([d]))
        assert dist <= Fraction(size, 2 ** (k + 1))


def test_dyadic_target_exact():
    d = QuantizedDistribution.from_probs([0.5, 0.125, 0.375])
    assert seed.statistical_distance(seed.ria_exact_distribution([d], 3), seed.target_distribution([d])) == 0


def test_enumeration_guard():
    d = QuantizedDistribution.from_probs([0.5, 0.5])
    with pytest.raises(ValueError):
        seed.ria_exact_distribution([d], 21)


@given(st.lists(probs_st, min_size=1, max_size=4), st.lists(st.integers(0, 1), min_size=40, max_size=40),
       st.integers(1, 40))
def test_decoder_consistency(dists, bits, k):
    seq = [QuantizedDistribution.from_probs(p) for p in dists]
    a = seed.ria_decode(seq, bits, k)
    b = seed.ria_decode(seq, bits, k)
    assert a == b and a.bits_consumed <= k
    lo, hi = seed.encode_interval(seq, a.symbols)
    j = a.bits_consumed
    r = int("".join(map(str, bits[:j])) or "0", 2)
    left = Fraction(r, 2 ** j)
    assert lo <= left < hi
    if not a.truncated:
        assert Fraction(r + 1, 2 ** j) <= hi


def test_bitstream():
    s = seed.BitStream(bytes([0b10100000]))
    assert list(s.take(3)) == [1, 0, 1] and s.consumed == 3
    assert s.cryptographic
    p = seed.BitStream.pseudorandom(7, 1)
    q = seed.BitStream.pseudorandom(7, 1)
    assert not p.cryptographic and np.array_equal(p.take(10000), q.take(10000))
    with pytest.raises(ValueError):
        seed.BitStream.from_bits([0, 2])


def test_round_input_model():
    g = game.make_chsh_extended()
    m = seed.RoundInputModel(0.1, g.mu, 1, 2)
    syms = m.symbols()
    assert syms[0] == (0, 1, 2) and len(syms) == 1 + int((g.mu > 0).sum())
    assert m.probabilities().sum() == pytest.approx(1.0)
    assert m.entropy_bits() == pytest.approx(0.1 * 2 + (-0.1 * math.log2(0.1) - 0.9 * math.log2(0.9)))
    with pytest.raises(ValueError):
        seed.RoundInputModel(1.0, g.mu, 1, 2)


def test_decoded_frequencies():
    g = game.make_chsh_extended()
    m = seed.RoundInputModel(0.1, g.mu, 1, 2)
    n = 10 ** 6
    rows, used = engine.ria_inputs(m, n, seed.BitStream.pseudorandom(3), 100, 400)
    index = {s: i for i, s in enumerate(m.symbols())}
    counts = np.zeros(len(index))
    for row, c in zip(*np.unique(rows, axis=0, return_counts=True)):
        counts[index[tuple(int(v) for v in row)]] = c
    expect = n * m.probabilities()
    for c, mu in zip(counts, expect):
        # five standard widths of the multiplicative Chernoff bound
        assert abs(c - mu) <= 5 * math.sqrt(3 * mu)
    assert used <= 2 * seed.seed_requirements(n, n // 100, 0.1, g.mu, 400).kappa


def test_padded_length():
    assert seed.padded_length(10, 3) == 12 and seed.padded_length(9, 3) == 9
    with pytest.raises(ValueError):
        seed.padded_length(9, 0)


def test_seed_requirements():
    mu = game.make_chsh_extended().mu
    m = 1000
    r = seed.seed_requirements(1e10, m, 5e-3, mu, 10 ** 7)
    assert r.kappa == pytest.approx(5.54e8 + 3 * m, rel=5e-3)
    assert r.n_max == 2 * r.kappa
    assert r.eps_ria == pytest.approx(math.exp(-2 * r.kappa ** 2 / (m * 1e14)))
    assert seed.seed_requirements(4, 1, 0.5, mu, 10 ** 4).eps_dist < 1e-300 or \
        seed.seed_requirements(4, 1, 0.5, mu, 10 ** 4).eps_dist == 0.0
    small = seed.seed_requirements(1e3, 100, 0.1, mu, 500)
    big = seed.seed_requirements(1e3, 100, 0.1, mu, 1000)
    assert 0 < small.eps_ria
    assert small.eps_ria < big.eps_ria
    assert seed.seed_requirements(1e6, 1, 0.1, mu, 10).eps_dist == 1.0


def test_chernoff_tail_monte_carlo(rng):
    n, p, trials = 10 ** 5, 0.5, 10 ** 4
    mu = n * p
    r = 0.01 * mu
    s = rng.binomial(n, p, trials)
    freq = np.mean(np.abs(s - mu) >= r)
    assert freq <= seed.chernoff_tail(mu, r)
    assert seed.chernoff_tail(30.0, 30.0) == pytest.approx(2 * math.exp(-10))
    with pytest.raises(ValueError):
        seed.chernoff_tail(1.0, 2.0)


def test_hoeffding_tail(rng):
    assert seed.hoeffding_tail([1.0] * 10, 0.0) == 1.0
    assert seed.hoeffding_tail([(0, 1)] * 100, 10.0) == pytest.approx(2 * math.exp(-2.0))
    x = rng.uniform(0, 1, (10 ** 4, 100)).sum(axis=1)
    t = 8.0
    assert np.mean(np.abs(x - 50) >= t) <= seed.hoeffding_tail([1.0] * 100, t)
    with pytest.raises(ValueError):
        seed.hoeffding_tail([1.0], -1.0)
