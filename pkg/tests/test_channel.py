import numpy as np
import pytest
from scipy import stats

from nem.channel import NoiseChannel, PROB_FLOOR, flip_noise, floor_log

from oracles import all_label_vectors


class TestChannelProb:
    def test_na_spurious_rate(self):
        # phi0=0.3 on the NA entry: p(z=1 | y=0) = 0.3
        ch = NoiseChannel(np.array([0.3, 0.0]), np.array([0.0, 0.9]))
        assert ch.prob(0, 0, 1) == pytest.approx(0.3)
        assert ch.prob(0, 0, 0) == pytest.approx(0.7)

    def test_keep_rate_under_drop_noise(self):
        # phi1=0.9: p(z=1 | y=1) = 0.1
        ch = NoiseChannel(np.array([0.0, 0.0]), np.array([0.0, 0.9]))
        assert ch.prob(1, 1, 1) == pytest.approx(0.1)
        assert ch.prob(1, 1, 0) == pytest.approx(0.9)

    def test_noiseless_is_identity(self):
        ch = NoiseChannel.noiseless(3)
        for y in (0, 1):
            for z in (0, 1):
                assert ch.prob(1, y, z) == (1.0 if y == z else 0.0)

    def test_rows_normalize(self):
        rng = np.random.default_rng(0)
        ch = NoiseChannel(rng.random(6), rng.random(6))
        for r in range(6):
            for y in (0, 1):
                assert ch.prob(r, y, 0) + ch.prob(r, y, 1) == 1.0

    def test_bad_bits(self):
        ch = NoiseChannel.noiseless(2)
        with pytest.raises(ValueError):
            ch.prob(0, 2, 0)

    def test_bad_probabilities(self):
        with pytest.raises(ValueError):
            NoiseChannel(np.array([1.2]), np.array([0.0]))


class TestBagProb:
    def test_noiseless_match(self):
        ch = NoiseChannel.noiseless(4)
        y = np.array([0, 1, 1, 0], dtype=np.uint8)
        assert ch.bag_prob(y, y) == 1.0

    def test_noiseless_mismatch(self):
        ch = NoiseChannel.noiseless(4)
        y = np.array([0, 1, 1, 0], dtype=np.uint8)
        z = y.copy()
        z[0] = 1
        assert ch.bag_prob(y, z) == 0.0

    def test_product_value(self):
        # uniform phi0=0.3, phi1=0: p([1,0] | [0,0]) = 0.3 * 0.7
        ch = NoiseChannel.uniform(2, 0.3, 0.0)
        got = ch.bag_prob(np.array([0, 0]), np.array([1, 0]))
        assert got == pytest.approx(0.21, abs=1e-15)

    def test_normalizes_over_all_z(self):
        rng = np.random.default_rng(3)
        for n in (1, 3, 6, 10):
            ch = NoiseChannel(rng.random(n), rng.random(n))
            y = rng.integers(0, 2, size=n).astype(np.uint8)
            total = sum(ch.bag_prob(y, z) for z in all_label_vectors(n))
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_length_mismatch(self):
        ch = NoiseChannel.noiseless(3)
        with pytest.raises(ValueError):
            ch.bag_prob(np.array([0, 1]), np.array([0, 1, 0]))


class TestSample:
    def test_noiseless_returns_input(self):
        ch = NoiseChannel.noiseless(5)
        y = np.array([1, 0, 1, 1, 0], dtype=np.uint8)
        assert np.array_equal(ch.sample(y, 0), y)

    def test_always_flip(self):
        ch = NoiseChannel.uniform(5, 1.0, 1.0)
        y = np.array([1, 0, 1, 1, 0], dtype=np.uint8)
        assert np.array_equal(ch.sample(y, 0), 1 - y)

    def test_deterministic_given_seed(self):
        ch = NoiseChannel.uniform(8, 0.4, 0.2)
        y = np.ones(8, dtype=np.uint8)
        assert np.array_equal(ch.sample(y, 123), ch.sample(y, 123))

    def test_empirical_flip_rate(self):
        ch = NoiseChannel.uniform(4, 0.1, 0.1)
        y = np.array([1, 0, 1, 0], dtype=np.uint8)
        rng = np.random.default_rng(7)
        n = 100_000
        flips = np.zeros(4)
        for _ in range(n):
            flips += ch.sample(y, rng) != y
        rates = flips / n
        assert np.all(np.abs(rates - 0.1) < 0.01)


class TestFlipNoise:
    def test_zero_probability(self):
        y = np.array([1, 0, 1], dtype=np.uint8)
        assert np.array_equal(flip_noise(y, 0.0, 0), y)

    def test_one_probability(self):
        y = np.array([1, 0, 1], dtype=np.uint8)
        assert np.array_equal(flip_noise(y, 1.0, 0), 1 - y)

    def test_empirical_rate(self):
        rng = np.random.default_rng(11)
        y = np.zeros(100_000, dtype=np.uint8)
        flipped = flip_noise(y, 0.05, rng)
        rate = flipped.mean()
        assert abs(rate - 0.05) < 0.005

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            flip_noise(np.array([0, 1]), 1.5, 0)

    def test_matches_symmetric_channel_distribution(self):
        # flip_noise(p) and a phi0=phi1=p channel agree on bit marginals
        p = 0.1
        n_draws = 100_000
        y = np.array([1, 0, 1, 0, 0], dtype=np.uint8)
        ch = NoiseChannel.uniform(5, p, p)
        rng_a = np.random.default_rng(21)
        rng_b = np.random.default_rng(22)
        ones_flip = np.zeros(5)
        ones_chan = np.zeros(5)
        for _ in range(n_draws):
            ones_flip += flip_noise(y, p, rng_a)
            ones_chan += ch.sample(y, rng_b)
        expected = np.where(y == 1, 1 - p, p) * n_draws
        for observed in (ones_flip, ones_chan):
            counts = np.stack([observed, n_draws - observed])
            exp = np.stack([expected, n_draws - expected])
            _, pvalue = stats.chisquare(counts, exp)
            assert np.all(pvalue > 0.001)


def test_floor_log_handles_exact_zero():
    assert floor_log(np.array([0.0]))[0] == pytest.approx(np.log(PROB_FLOOR))
    assert floor_log(np.array([1.0]))[0] == 0.0
