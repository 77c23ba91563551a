import math

import numpy as np
import pytest

from vqlink.metrics import (
    ber_ser,
    bleu,
    brevity_penalty,
    clipped_precision,
    compression_report,
    cumulative_bleu,
    error_rate,
    float_bitflip,
    semantic_match,
    sentence_match,
    toy_embed,
)


class TestBleu:
    def test_clipping(self):
        assert bleu("I am a boy", "a a a a").precisions[0] == 0.25

    def test_identity(self):
        rep = bleu("the cat sat on the mat", "the cat sat on the mat")
        assert rep.score == 1.0 and rep.brevity_penalty == 1.0
        assert all(b == 1.0 for b in rep.bleu_n)

    def test_brevity_example(self):
        rep = bleu("the cat sat", "the cat", max_n=2)
        assert rep.precisions == (1.0, 1.0)
        assert abs(rep.brevity_penalty - math.exp(1 - 3 / 2)) < 1e-12
        assert abs(rep.score - math.exp(1 - 3 / 2)) < 1e-12

    def test_disjoint(self):
        assert bleu("a b c d", "e f g h").score == 0.0

    def test_zero_higher_order_kills_score(self):
        rep = bleu("a b c d", "d c b a")
        assert rep.precisions[0] == 1.0 and rep.score == 0.0

    def test_longer_hypothesis(self):
        assert bleu("a b", "a b c").brevity_penalty == 1.0

    def test_empty_hypothesis(self):
        rep = bleu("a b", "")
        assert rep.score == 0.0 and rep.empty_hypothesis

    def test_hand_computed_mixed(self):
        # ref 6 words, hyp 5 words: p1 = 4/5, p2 = 2/4
        rep = bleu("a b c d e f", "a b x d e", max_n=2)
        assert rep.precisions == (0.8, 0.5)
        expected = math.exp(1 - 6 / 5) * math.sqrt(0.8 * 0.5)
        assert abs(rep.score - expected) < 1e-12

    def test_weights_validation(self):
        with pytest.raises(ValueError):
            bleu("a", "a", max_n=2, weights=[0.7, 0.7])
        with pytest.raises(ValueError):
            bleu("a", "a", max_n=0)

    def test_unigram_only_weights(self):
        assert bleu("a b c d", "d c b a", max_n=2, weights=[1.0, 0.0]).score == 1.0

    def test_cumulative(self):
        assert cumulative_bleu("the cat sat", "the cat", 1) == pytest.approx(math.exp(-0.5))

    def test_helpers(self):
        assert clipped_precision(["a"], [], 1) == 0.0
        assert brevity_penalty(3, 0) == 0.0


class TestMatch:
    def test_identical(self):
        assert sentence_match([1.0, 2.0], [1.0, 2.0]) == (pytest.approx(1.0), False)

    def test_orthogonal(self):
        assert sentence_match([1.0, 0.0], [0.0, 3.0])[0] == 0.0

    def test_opposite(self):
        assert sentence_match([1.0, -2.0], [-1.0, 2.0])[0] == pytest.approx(-1.0)

    def test_zero_norm_flagged(self):
        assert sentence_match([0.0, 0.0], [1.0, 0.0]) == (0.0, True)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            sentence_match([1.0], [1.0, 2.0])

    def test_same_sentence(self):
        assert semantic_match("a man rides a horse", "a man rides a horse") == pytest.approx(1.0)

    def test_bag_semantics(self):
        np.testing.assert_array_equal(toy_embed("a b c"), toy_embed("c a b"))

    def test_unit_norm(self):
        assert np.linalg.norm(toy_embed("x y z w")) == pytest.approx(1.0)

    def test_small_dim_rejected(self):
        with pytest.raises(ValueError):
            toy_embed("a", dim=4)

    def test_disjoint_pairs_near_orthogonal(self):
        rng = np.random.default_rng(0)
        values = []
        for i in range(1000):
            n = rng.integers(3, 10)
            a = [f"a{i}_{j}" for j in range(n)]
            b = [f"b{i}_{j}" for j in range(n)]
            values.append(abs(semantic_match(a, b)))
        assert np.mean(values) < 0.1


class TestCompression:
    def test_half_size(self):
        rep = compression_report(768, 2, 1024)
        assert rep.factor == 2.0 and rep.size_ratio == 0.5

    def test_efficiency_equals_match(self):
        assert compression_report(768, 2, 1024, match_score=0.83).efficiency == 0.83

    def test_eighth(self):
        rep = compression_report(768, 8, 1024)
        assert rep.size_ratio == 0.125 and rep.factor == 8.0

    def test_bit_accounting(self):
        rep = compression_report(768, 2, 1024)
        assert rep.size_t_bits == 384 * 10
        assert rep.factor_bits == pytest.approx(32 * 2 / 10)

    def test_undefined_efficiency(self):
        rep = compression_report(16, 1, 64)
        assert rep.factor == 1.0 and rep.efficiency is None and not rep.efficiency_defined

    def test_bad_dz(self):
        with pytest.raises(ValueError):
            compression_report(10, 3, 64)


class TestErrorRates:
    def test_identical(self):
        assert error_rate([0, 1, 1], [0, 1, 1]) == 0.0

    def test_complement(self):
        bits = np.random.default_rng(0).integers(0, 2, 50)
        assert error_rate(bits, 1 - bits) == 1.0

    def test_one_in_thousand(self):
        a = np.zeros(1000)
        b = a.copy()
        b[17] = 1
        assert error_rate(a, b) == 0.001

    def test_mismatch(self):
        with pytest.raises(ValueError):
            ber_ser([0, 1], [0])

    def test_ser(self):
        assert ber_ser([0, 0], [0, 1], [3, 4], [3, 5]) == (0.5, 0.5)


class TestBitflip:
    def test_one_becomes_infinity(self):
        assert float_bitflip(1.0, 1) == math.inf

    def test_sign_of_zero(self):
        out = float_bitflip(0.0, 0)
        assert out == 0.0 and math.copysign(1.0, out) == -1.0

    def test_lsb(self):
        assert float_bitflip(1.0, 31) == np.nextafter(np.float32(1.0), np.float32(2.0))

    def test_involution(self):
        for pos in range(32):
            assert float_bitflip(float_bitflip(0.375, pos), pos) == 0.375

    def test_range(self):
        with pytest.raises(ValueError):
            float_bitflip(1.0, 32)
