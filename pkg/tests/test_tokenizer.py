import numpy as np
import pytest

from biomech.errors import ConfigError, ContractViolation, EmptyInputError
from biomech.motion import ChannelMask, Trajectory
from biomech.tokenizer import (
    Codebook,
    TokenizerConfig,
    TokenSequence,
    Trainer,
    codebook_stats,
    decode,
    ema_update,
    encode,
    fit_from_matrices,
    pad_to_multiple,
    quantize,
    serialize_model,
    ste_surrogate_loss,
    tokenize_trial,
)
from biomech.tokenizer import model as M
from biomech.tokenizer.nn import flatten_grads, flatten_params, set_params_from_flat


def tiny_config(**overrides):
    base = dict(downsample_l=4, codebook_size_k=8, code_dim_d=6, window_frames=16,
                batch_size=4, train_steps=5, seed=0)
    base.update(overrides)
    return TokenizerConfig(**base)


def identity_model(config=None, seed=2):
    """A freshly initialized model with unit normalization stats."""
    config = config or tiny_config()
    return M.new_model(config, np.zeros(34), np.ones(34))


def sin_matrices(n_trials=4, length=200, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    t = np.arange(length) / 30.0
    for k in range(n_trials):
        freq = 0.8 + 0.15 * k
        base = np.sin(2 * np.pi * freq * t)[:, None] * np.linspace(0.05, 0.5, 34)[None, :]
        out.append(base + rng.normal(0, 0.01, (length, 34)))
    return out


class TestEncodeDecodeShapes:
    def test_encode_shape(self):
        model = identity_model()
        latents = encode(model, np.zeros((16, 34)))
        assert latents.shape == (4, 6)

    def test_encode_rejects_indivisible_length(self):
        with pytest.raises(ContractViolation):
            encode(identity_model(), np.zeros((15, 34)))

    def test_encode_rejects_empty(self):
        with pytest.raises(EmptyInputError):
            encode(identity_model(), np.zeros((0, 34)))

    def test_zero_weights_give_zero_latents(self):
        model = identity_model()
        for _, p, _ in model.encoder.parameters():
            p[...] = 0.0
        latents = encode(model, np.random.default_rng(0).normal(size=(16, 34)))
        assert np.all(latents == 0.0)

    def test_decode_shape_and_roundtrip_shape(self):
        model = identity_model()
        out = decode(model, np.zeros((4, 6)))
        assert out.shape == (16, 34)
        window = np.random.default_rng(1).normal(size=(16, 34))
        _, quantized, _ = quantize(model.codebook, encode(model, window))
        assert decode(model, quantized).shape == window.shape

    def test_zero_decoder_outputs_constant_bias(self):
        model = identity_model()
        for name, p, _ in model.decoder.parameters():
            p[...] = 0.0
        out = decode(model, np.random.default_rng(2).normal(size=(4, 6)))
        assert np.allclose(out, out[0])

    def test_paper_scale_shapes(self):
        config = TokenizerConfig(downsample_l=4, codebook_size_k=512, code_dim_d=512,
                                 window_frames=64, batch_size=2, train_steps=1, seed=0)
        model = M.new_model(config, np.zeros(34), np.ones(34))
        latents = encode(model, np.zeros((64, 34)))
        assert latents.shape == (16, 512)


class TestQuantize:
    def test_nearest_neighbor(self):
        cb = Codebook(codes=np.array([[0.0, 0.0], [1.0, 1.0]]),
                      ema_cluster_count=np.ones(2), ema_cluster_sum=np.zeros((2, 2)))
        idx, quantized, _ = quantize(cb, np.array([[0.9, 0.9]]))
        assert idx[0] == 1
        assert np.array_equal(quantized[0], [1.0, 1.0])

    def test_equidistant_tie_breaks_low(self):
        cb = Codebook(codes=np.array([[0.0, 0.0], [1.0, 1.0]]),
                      ema_cluster_count=np.ones(2), ema_cluster_sum=np.zeros((2, 2)))
        idx, _, _ = quantize(cb, np.array([[0.5, 0.5]]))
        assert idx[0] == 0

    def test_commit_loss_hand_value(self):
        cb = Codebook(codes=np.array([[1.0, 1.0], [5.0, 5.0]]),
                      ema_cluster_count=np.ones(2), ema_cluster_sum=np.zeros((2, 2)))
        _, _, commit = quantize(cb, np.array([[0.9, 0.9]]))
        assert commit == pytest.approx(0.01, abs=1e-12)

    def test_empty_latents_rejected(self):
        cb = Codebook(codes=np.zeros((2, 2)), ema_cluster_count=np.ones(2),
                      ema_cluster_sum=np.zeros((2, 2)))
        with pytest.raises(EmptyInputError):
            quantize(cb, np.zeros((0, 2)))

    def test_quantize_idempotent(self):
        rng = np.random.default_rng(3)
        cb = Codebook(codes=rng.normal(size=(8, 4)), ema_cluster_count=np.ones(8),
                      ema_cluster_sum=np.zeros((8, 4)))
        z = rng.normal(size=(20, 4))
        idx, quantized, _ = quantize(cb, z)
        idx2, quantized2, commit2 = quantize(cb, quantized)
        assert np.array_equal(idx, idx2)
        assert np.array_equal(quantized, quantized2)
        assert commit2 == 0.0


class TestEMA:
    def test_single_step_oracle(self):
        # gamma=0.99, prior N=1, m=0, one assigned z=all-ones (D=2)
        cb = Codebook(codes=np.zeros((1, 2)), ema_cluster_count=np.array([1.0]),
                      ema_cluster_sum=np.zeros((1, 2)))
        ema_update(cb, np.ones((1, 2)), np.array([0]), decay=0.99)
        assert cb.ema_cluster_count[0] == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(cb.ema_cluster_sum[0], 0.01, atol=1e-9)
        assert np.allclose(cb.codes[0], 0.01, atol=1e-9)

    def test_three_step_convergence_oracle(self):
        # every latent assigned to code 0; closed-form EMA recursion
        rng = np.random.default_rng(0)
        z = rng.normal(size=(5, 3))
        decay = 0.9
        cb = Codebook(codes=np.zeros((2, 3)), ema_cluster_count=np.ones(2),
                      ema_cluster_sum=np.zeros((2, 3)))
        n_exp, m_exp = 1.0, np.zeros(3)
        for _ in range(3):
            ema_update(cb, z, np.zeros(5, dtype=np.int64), decay)
            n_exp = decay * n_exp + (1 - decay) * 5.0
            m_exp = decay * m_exp + (1 - decay) * z.sum(axis=0)
        assert cb.ema_cluster_count[0] == pytest.approx(n_exp, abs=1e-12)
        assert np.allclose(cb.ema_cluster_sum[0], m_exp, atol=1e-12)
        assert np.allclose(cb.codes[0], m_exp / max(n_exp, 1e-5), atol=1e-12)

    def test_unassigned_codes_keep_their_value(self):
        cb = Codebook(codes=np.array([[2.0, 2.0], [7.0, 7.0]]),
                      ema_cluster_count=np.array([1.0, 1.0]),
                      ema_cluster_sum=np.array([[2.0, 2.0], [7.0, 7.0]]))
        ema_update(cb, np.array([[2.0, 2.0]]), np.array([0]), decay=0.99)
        assert np.allclose(cb.codes[1], 7.0)


class TestTrainStep:
    def test_total_is_recon_plus_beta_commit(self):
        config = tiny_config(beta_commit=0.02)
        mats = sin_matrices()
        model, _ = fit_from_matrices(mats, config)
        rng = np.random.default_rng(0)
        batch = np.stack([mats[0][:16], mats[1][:16]])
        losses, *_ = M._forward_backward(model, batch, compute_grads=False)
        assert losses.total == pytest.approx(losses.recon + 0.02 * losses.commit, rel=1e-12)
        # forced arithmetic from the contract
        assert 1.0 + 0.02 * 0.5 == pytest.approx(1.01)

    def test_overfits_tiny_batch(self):
        config = tiny_config(train_steps=200, batch_size=8, codebook_size_k=16,
                             learning_rate=1e-3)
        rng = np.random.default_rng(4)
        mats = sin_matrices(2, 64, seed=4)
        model, curve = fit_from_matrices(mats, config)
        assert curve[-1].recon < curve[0].recon

    def test_divergence_raises_with_step_index(self):
        from biomech.errors import TrainingDivergenceError

        config = tiny_config()
        model = identity_model(config)
        trainer = Trainer(model, np.random.default_rng(0))
        for _, p, _ in model.encoder.parameters():
            p[...] = np.nan
        with pytest.raises(TrainingDivergenceError) as err:
            trainer.train_step(np.zeros((2, 16, 34)))
        assert err.value.step == 0

    def test_dead_code_reset_replaces_unused_codes(self):
        config = tiny_config(reset_window_steps=3, codebook_size_k=4,
                             train_steps=1, batch_size=4)
        mats = sin_matrices(2, 64, seed=1)
        model, _ = fit_from_matrices(mats, config)
        # plant a code far away from any data so it never gets used
        model.codebook.codes[3] = 1e6
        trainer = Trainer(model, np.random.default_rng(0))
        batch = np.stack([mats[0][i * 16:(i + 1) * 16] for i in range(4)])
        for _ in range(4):
            trainer.train_step(batch)
        assert np.all(np.abs(model.codebook.codes[3]) < 1e3)


class TestGradients:
    def test_analytic_matches_finite_differences(self):
        config = TokenizerConfig(downsample_l=4, codebook_size_k=4, code_dim_d=4,
                                 window_frames=8, batch_size=2, train_steps=1, seed=3)
        rng = np.random.default_rng(7)
        model = M.new_model(config, np.zeros(34), np.ones(34))
        batch = rng.normal(0.0, 0.4, (2, 8, 34))
        _, _, _, frozen = M._forward_backward(model, batch)
        params = model.parameters()
        analytic = flatten_grads(params)
        theta0 = flatten_params(params)
        eps = 1e-5
        for i in range(theta0.size):
            theta = theta0.copy()
            theta[i] += eps
            set_params_from_flat(params, theta)
            lp = ste_surrogate_loss(model, batch, frozen)
            theta[i] -= 2 * eps
            set_params_from_flat(params, theta)
            lm = ste_surrogate_loss(model, batch, frozen)
            fd = (lp - lm) / (2 * eps)
            denom = max(abs(fd), abs(analytic[i]), 1e-8)
            assert abs(fd - analytic[i]) / denom <= 1e-4, f"param {i}"
        set_params_from_flat(params, theta0)


class TestTokenizeTrial:
    def make_trial(self, n_frames):
        rng = np.random.default_rng(0)
        q = np.zeros((n_frames, 41))
        q[:, 3] = 1.0
        q[:, 7:] = rng.normal(0, 0.2, (n_frames, 34))
        return Trajectory("P0", "t0", 30.0, q, rng.normal(size=(n_frames, 40)))

    def test_token_count_exact_multiple(self):
        model = identity_model()
        seq = tokenize_trial(model, self.make_trial(300))
        assert len(seq.tokens) == 75
        assert seq.source_frames == 300

    def test_token_count_with_padding(self):
        model = identity_model()
        seq = tokenize_trial(model, self.make_trial(301))
        assert len(seq.tokens) == 76

    def test_length_law_random(self):
        model = identity_model()
        rng = np.random.default_rng(5)
        for _ in range(10):
            n = int(rng.integers(4, 200))
            seq = tokenize_trial(model, self.make_trial(n))
            assert len(seq.tokens) == int(np.ceil(n / 4))

    def test_deterministic(self):
        model = identity_model()
        trial = self.make_trial(100)
        assert tokenize_trial(model, trial) == tokenize_trial(model, trial)

    def test_padding_is_edge_replication(self):
        mat = np.arange(10, dtype=np.float64)[:, None] * np.ones((1, 34))
        padded = pad_to_multiple(mat, 4)
        assert padded.shape == (12, 34)
        assert np.all(padded[10:] == mat[-1])


class TestCodebookStats:
    def test_uniform_usage(self):
        tokens = TokenSequence("t", tuple(range(512)), 2048)
        counts, entropy, perplexity = codebook_stats([tokens], 512)
        assert counts.sum() == 512
        assert entropy == pytest.approx(9.0, abs=1e-12)
        assert perplexity == pytest.approx(512.0, rel=1e-12)

    def test_single_code(self):
        tokens = TokenSequence("t", (3, 3, 3, 3), 16)
        _, entropy, perplexity = codebook_stats([tokens], 8)
        assert entropy == 0.0
        assert perplexity == 1.0

    def test_two_one_split(self):
        _, entropy, _ = codebook_stats([TokenSequence("t", (0, 0, 1), 12)], 4)
        expected = -(2 / 3) * np.log2(2 / 3) - (1 / 3) * np.log2(1 / 3)
        assert entropy == pytest.approx(expected, abs=1e-9)
        assert entropy == pytest.approx(0.9183, abs=1e-4)

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyInputError):
            codebook_stats([], 8)


class TestConfigAndSerialization:
    def test_window_divisibility_enforced(self):
        with pytest.raises(ConfigError):
            TokenizerConfig(downsample_l=4, window_frames=30)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ConfigError):
            TokenizerConfig(downsample_l=3, window_frames=9)

    def test_fit_deterministic_bytes(self):
        mats = sin_matrices(3, 80, seed=9)
        config = tiny_config(train_steps=30)
        a, _ = fit_from_matrices(mats, config)
        b, _ = fit_from_matrices(mats, config)
        assert serialize_model(a) == serialize_model(b)

    def test_save_load_roundtrip(self, tmp_path):
        mats = sin_matrices(2, 80, seed=10)
        model, _ = fit_from_matrices(mats, tiny_config(train_steps=10))
        path = tmp_path / "tok.bin"
        fingerprint = M.save_model(model, path)
        loaded = M.load_model(path)
        assert serialize_model(loaded) == serialize_model(model)
        assert fingerprint == M.model_fingerprint(loaded)
        window = mats[0][:16]
        assert np.array_equal(encode(loaded, window), encode(model, window))

    def test_mask_round_trips(self, tmp_path):
        mats = sin_matrices(2, 80, seed=11)
        mask = ChannelMask(frozenset({1, 5, 9}))
        model, _ = fit_from_matrices(mats, tiny_config(train_steps=5), mask=mask)
        path = tmp_path / "tok.bin"
        M.save_model(model, path)
        assert M.load_model(path).mask.zeroed_channels == {1, 5, 9}

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyInputError):
            fit_from_matrices([], tiny_config())

    def test_training_side_rmse_bound(self):
        # trained-on-windows RMSE should not exceed held-out RMSE + 5 degrees
        mats = sin_matrices(6, 120, seed=12)
        config = tiny_config(train_steps=150, codebook_size_k=16, window_frames=16)
        model, _ = fit_from_matrices(mats[:4], config)
        def pooled_rmse(mats_):
            errs, total = np.zeros(34), 0
            for m in mats_:
                rec = M.reconstruct_matrix(model, m)
                errs += ((m - rec) ** 2).sum(axis=0)
                total += m.shape[0]
            return float(np.degrees(np.sqrt(errs / total)).mean())

        assert pooled_rmse(mats[:4]) <= pooled_rmse(mats[4:]) + 5.0

    def test_token_corpus_roundtrip(self, tmp_path):
        seqs = [TokenSequence("a", (1, 2, 3), 12), TokenSequence("b", (0,), 4)]
        path = tmp_path / "tokens.ndjson"
        M.write_token_corpus(seqs, path)
        assert M.read_token_corpus(path) == seqs
