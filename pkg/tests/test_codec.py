import math

import numpy as np
import pytest

from oracles import central_difference, rel_error
from vqlink import codec as cd
from vqlink.link import PhyConfig, PhyLink
from vqlink.vq import Codebook


@pytest.fixture(scope="module")
def corpus():
    return cd.toy_corpus(120, seed=0)


@pytest.fixture(scope="module")
def vocab(corpus):
    return cd.ToyVocab.from_corpus(corpus)


def small_instance(seed, V=12, d_e=4, d_r=4, d_z=2, K=6, n=7):
    rng = np.random.default_rng(seed)
    params = cd.ToyCodecParams(
        E=rng.standard_normal((V, d_e)),
        W1=rng.standard_normal((d_e, d_r)) * 0.7,
        b1=rng.standard_normal(d_r) * 0.1,
        W2=rng.standard_normal((d_r, V)),
        b2=rng.standard_normal(V) * 0.1,
    )
    codebook = Codebook(rng.uniform(-1, 1, (K, d_z)))
    ids = rng.integers(0, V, n)
    return params, codebook, ids


def fd_gradients(ids, params, codebook, frozen, beta):
    p = params.copy()
    Z = codebook.vectors.copy()
    out = {}
    for name in cd.BLOCKS:
        arr = getattr(p, name)
        out[name] = central_difference(lambda: cd.straight_through_objective(ids, p, Codebook(Z), frozen, beta), arr)
    out["Z"] = central_difference(lambda: cd.straight_through_objective(ids, p, Codebook(Z), frozen, beta), Z)
    return out


class TestVocab:
    def test_known_words(self, vocab):
        ids = cd.tokenize("a man pushes", vocab)
        assert ids.size == 3 and vocab.unk_id not in ids

    def test_empty(self, vocab):
        assert cd.tokenize("", vocab).size == 0

    def test_unknown(self, vocab):
        ids = cd.tokenize("a zebra pushes", vocab)
        assert ids[1] == vocab.unk_id

    def test_case_and_detokenize(self, vocab):
        ids = cd.tokenize("A  Man   pushes", vocab)
        assert cd.detokenize(ids, vocab) == "a man pushes"

    def test_lookup_inverse(self, vocab):
        assert all(vocab.tokens[i] == t for t, i in vocab.lookup.items())
        assert cd.PAD in vocab.lookup and len(vocab) <= 64

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            cd.ToyVocab((cd.UNK, "a", "a"))

    def test_unk_required(self):
        with pytest.raises(ValueError):
            cd.ToyVocab(("a", "b"))

    def test_max_size(self, corpus):
        assert len(cd.ToyVocab.from_corpus(corpus, max_size=10)) == 10


class TestForward:
    def test_zero_weights(self):
        p = cd.ToyCodecParams.init(10, 4, 6)
        p.W1[:] = 0
        p.b1[:] = 0
        assert not cd.encode([1, 2, 3], p).any()

    def test_shape(self):
        p = cd.ToyCodecParams.init(10, 4, 6)
        assert cd.encode(np.arange(5), p).shape == (5, 6)

    def test_two_token_hand_computation(self):
        p = cd.ToyCodecParams(
            E=np.array([[0.5, -1.0], [2.0, 0.25], [0.0, 1.0]]),
            W1=np.array([[1.0, -0.5], [0.25, 2.0]]),
            b1=np.array([0.1, -0.2]),
            W2=np.zeros((2, 3)),
            b2=np.zeros(3),
        )
        r = cd.encode([0, 1], p)
        expected = [
            [math.tanh(0.5 * 1.0 + -1.0 * 0.25 + 0.1), math.tanh(0.5 * -0.5 + -1.0 * 2.0 - 0.2)],
            [math.tanh(2.0 * 1.0 + 0.25 * 0.25 + 0.1), math.tanh(2.0 * -0.5 + 0.25 * 2.0 - 0.2)],
        ]
        np.testing.assert_allclose(r, expected, rtol=0, atol=1e-12)

    def test_invalid_id(self):
        with pytest.raises(ValueError):
            cd.encode([10], cd.ToyCodecParams.init(10))

    def test_decode_bias_spike(self):
        p = cd.ToyCodecParams.init(16, 4, 4)
        p.W2[:] = 0
        p.b2[:] = 0
        p.b2[7] = 5.0
        logits, pred = cd.decode(np.random.default_rng(0).standard_normal((6, 4)), p)
        assert logits.shape == (6, 16) and np.all(pred == 7)

    def test_decode_tie_lowest(self):
        p = cd.ToyCodecParams.init(5, 2, 2)
        p.W2[:] = 0
        p.b2[:] = 0
        assert np.all(cd.decode(np.ones((3, 2)), p)[1] == 0)


class TestCrossEntropy:
    def test_uniform(self):
        loss, _ = cd.ce_loss(np.zeros((3, 4)), [0, 1, 3])
        assert loss == pytest.approx(math.log(4), abs=1e-15)

    def test_saturated(self):
        logits = np.full((2, 5), -50.0)
        logits[[0, 1], [2, 4]] = 50.0
        assert cd.ce_loss(logits, [2, 4])[0] < 1e-30

    def test_gradient(self):
        logits = np.random.default_rng(1).standard_normal((2, 3))
        targets = [2, 0]
        _, grad = cd.ce_loss(logits, targets)
        num = central_difference(lambda: cd.ce_loss(logits, targets)[0], logits)
        assert rel_error(num, grad) < 1e-6

    def test_empty(self):
        loss, grad = cd.ce_loss(np.zeros((0, 4)), [])
        assert loss == 0.0 and grad.shape == (0, 4)


class TestGradients:
    @pytest.mark.parametrize("seed", range(3))
    def test_all_blocks_vs_finite_differences(self, seed):
        params, codebook, ids = small_instance(seed)
        frozen = cd.forward(ids, params, codebook)
        bd, grads = cd.loss_and_grads(ids, params, codebook, 0.25, frozen=frozen)
        assert bd.total == pytest.approx(cd.straight_through_objective(ids, params, codebook, frozen, 0.25), rel=1e-12)
        num = fd_gradients(ids, params, codebook, frozen, 0.25)
        for name, g in grads.items():
            assert rel_error(num[name], g) < 1e-4, name

    def test_gradients_under_corruption(self):
        params, codebook, ids = small_instance(5)
        rng = np.random.default_rng(0)
        frozen = cd.forward(ids, params, codebook, corrupt=lambda t: cd.IndexFlipChannel(0.5, codebook.K)(t, rng))
        assert np.any(frozen.received != frozen.indices)
        _, grads = cd.loss_and_grads(ids, params, codebook, 0.25, frozen=frozen)
        num = fd_gradients(ids, params, codebook, frozen, 0.25)
        for name, g in grads.items():
            assert rel_error(num[name], g) < 1e-4, name

    def test_codebook_term_gives_encoder_nothing(self):
        params, codebook, ids = small_instance(6)
        frozen = cd.forward(ids, params, codebook)
        moved = Codebook(codebook.vectors + 0.3)
        # beta = 0 leaves only the codebook term in the VQ part
        _, g_a = cd.loss_and_grads(ids, params, codebook, 0.0, frozen=frozen)
        _, g_b = cd.loss_and_grads(ids, params, moved, 0.0, frozen=frozen)
        for name in cd.BLOCKS:
            np.testing.assert_array_equal(g_a[name], g_b[name])
        assert not np.allclose(g_a["Z"], g_b["Z"])

    def test_commitment_term_gives_codebook_nothing(self):
        params, codebook, ids = small_instance(7)
        frozen = cd.forward(ids, params, codebook)
        _, g0 = cd.loss_and_grads(ids, params, codebook, 0.0, frozen=frozen)
        _, g1 = cd.loss_and_grads(ids, params, codebook, 3.0, frozen=frozen)
        np.testing.assert_array_equal(g0["Z"], g1["Z"])
        assert not np.allclose(g0["W1"], g1["W1"])


class TestTraining:
    def test_zero_learning_rate(self, corpus, vocab):
        params = cd.ToyCodecParams.init(len(vocab), seed=1)
        codebook = cd.init_codebook(params, 64, 2)
        batch = [cd.tokenize(s, vocab) for s in corpus[:8]]
        new, new_cb, _ = cd.train_step(batch, params, codebook, cd.TrainConfig(learning_rate=0.0))
        for name in cd.BLOCKS:
            np.testing.assert_array_equal(getattr(new, name), getattr(params, name))
        np.testing.assert_array_equal(new_cb.vectors, codebook.vectors)

    def test_one_epoch_reduces_loss(self, corpus, vocab):
        ratios = []
        for seed in range(3):
            params = cd.ToyCodecParams.init(len(vocab), seed=seed)
            codebook = cd.init_codebook(params, 64, 2, seed=seed)
            before = cd.evaluate_loss(corpus, vocab, params, codebook).total
            res = cd.train(corpus, vocab, cd.TrainConfig(epochs=1, seed=seed), params=params, codebook=codebook)
            ratios.append(cd.evaluate_loss(corpus, vocab, res.params, res.codebook).total / before)
        assert np.median(ratios) <= 1.0

    def test_memorises_corpus(self, corpus, vocab):
        res = cd.train(corpus, vocab, cd.TrainConfig(epochs=30, seed=0))
        assert cd.evaluate_loss(corpus, vocab, res.params, res.codebook).accuracy > 0.99

    def test_deterministic_history(self, corpus, vocab):
        a = cd.train(corpus, vocab, cd.TrainConfig(epochs=3, seed=4))
        b = cd.train(corpus, vocab, cd.TrainConfig(epochs=3, seed=4))
        assert a.history == b.history

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts(self, corpus, vocab):
        with pytest.raises(cd.TrainingDiverged):
            cd.train(corpus, vocab, cd.TrainConfig(epochs=3, learning_rate=1e305))

    @pytest.mark.parametrize("kwargs", [{"learning_rate": -1.0}, {"epochs": 0}, {"d_z": 3}, {"noise_mode": "x"}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            cd.TrainConfig(**kwargs)


class TestNoiseTuning:
    def test_surrogate_flips_everything(self):
        t = np.random.default_rng(0).integers(0, 2, (20, 8))
        out = cd.noise_tune_corrupt(t, cd.IndexFlipChannel(1.0, 2), np.random.default_rng(1))
        np.testing.assert_array_equal(out, 1 - t)

    def test_surrogate_zero_is_identity(self):
        t = np.random.default_rng(2).integers(0, 64, (20, 8))
        out = cd.noise_tune_corrupt(t, cd.IndexFlipChannel(0.0, 64), np.random.default_rng(3))
        np.testing.assert_array_equal(out, t)

    def test_surrogate_rate(self):
        t = np.zeros(50_000, dtype=int)
        out = cd.IndexFlipChannel(0.3, 64)(t, np.random.default_rng(4))
        assert np.mean(out != t) == pytest.approx(0.3, abs=0.01)
        assert out.max() < 64

    def test_phy_noiseless_identity(self):
        stack = cd.PhyIndexChannel(PhyLink(PhyConfig()), np.inf, 64)
        t = np.random.default_rng(5).integers(0, 64, (30, 8))
        np.testing.assert_array_equal(cd.noise_tune_corrupt(t, stack, np.random.default_rng(6)), t)

    @pytest.mark.slow
    def test_surrogate_calibration_matches_phy(self):
        link = PhyLink(PhyConfig())
        p = cd.calibrate_flip_prob(link, 4.0, 64, transmissions=200, seed=0)
        assert p > 0
        rng = np.random.default_rng(7)
        phy = cd.PhyIndexChannel(link, 4.0, 64)
        errs = total = 0
        for _ in range(200):
            t = rng.integers(0, 64, 64)
            errs += np.count_nonzero(phy(t, rng) != t)
            total += t.size
        surrogate = cd.IndexFlipChannel(p, 64)
        t = rng.integers(0, 64, total)
        s_rate = np.mean(surrogate(t, rng) != t)
        assert abs(s_rate - errs / total) <= 0.2 * (errs / total)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path, corpus, vocab):
        res = cd.train(corpus, vocab, cd.TrainConfig(epochs=2, seed=3))
        path = tmp_path / "ckpt.txt"
        cd.save_checkpoint(path, vocab, res.params, res.codebook, {"d_z": 2})
        back = cd.load_checkpoint(path)
        assert back.vocab == vocab and back.meta == {"d_z": "2"}
        for name in cd.BLOCKS:
            np.testing.assert_array_equal(getattr(back.params, name), getattr(res.params, name))
        np.testing.assert_array_equal(back.codebook.vectors, res.codebook.vectors)

    def test_without_codebook(self, tmp_path, vocab):
        path = tmp_path / "ckpt.txt"
        cd.save_checkpoint(path, vocab, cd.ToyCodecParams.init(len(vocab)))
        assert cd.load_checkpoint(path).codebook is None

    def test_rejects_other_files(self, tmp_path):
        (tmp_path / "x.txt").write_text("hello\n")
        with pytest.raises(ValueError):
            cd.load_checkpoint(tmp_path / "x.txt")

    def test_rejects_future_version(self, tmp_path):
        (tmp_path / "x.txt").write_text(f"{cd.CHECKPOINT_MAGIC} 99\n")
        with pytest.raises(ValueError):
            cd.load_checkpoint(tmp_path / "x.txt")


def test_corpus_reader(tmp_path):
    (tmp_path / "c.txt").write_text("one line\n\n  two words  \n")
    assert cd.read_corpus(tmp_path / "c.txt") == ["one line", "two words"]
