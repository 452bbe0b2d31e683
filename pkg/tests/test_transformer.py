import math

import numpy as np
import pytest

from summnet import autograd as ag
from summnet.autograd import grad_check, tensor
from summnet.text_pipeline import EncodedPair
from summnet.transformer import (MultiHeadParams, TransformerConfig,
                                 TransformerModel, causal_mask, multi_head,
                                 positional_encoding, scaled_dot_attention)


class TestScaledDotAttention:
    def test_zero_queries_average_allowed_rows(self):
        V = tensor(np.arange(8.0).reshape(4, 2))
        Q = tensor(np.zeros((2, 3)))
        K = tensor(np.random.default_rng(0).uniform(-1, 1, (4, 3)))
        out = scaled_dot_attention(Q, K, V)
        assert np.allclose(out.data, V.data.mean(axis=0))

    def test_causal_row_zero_sees_only_first_value(self):
        rng = np.random.default_rng(1)
        Q = tensor(rng.uniform(-1, 1, (3, 2)))
        K = tensor(rng.uniform(-1, 1, (3, 2)))
        V = tensor(rng.uniform(-1, 1, (3, 4)))
        out = scaled_dot_attention(Q, K, V, causal_mask(3))
        assert np.allclose(out.data[0], V.data[0])

    def test_scalar_softmax_oracle(self):
        # d_k=1, Q=[[2]], K=[[2],[0]] -> weights softmax([4, 0])
        Q, K, V = tensor([[2.0]]), tensor([[2.0], [0.0]]), tensor([[1.0], [0.0]])
        out = scaled_dot_attention(Q, K, V)
        w = math.exp(4) / (math.exp(4) + 1)
        assert out.data[0, 0] == pytest.approx(w, abs=1e-12)
        assert out.data[0, 0] == pytest.approx(0.982, abs=1e-3)

    def test_fully_masked_row_errors(self):
        Q = tensor(np.zeros((2, 2)))
        K = tensor(np.zeros((2, 2)))
        V = tensor(np.zeros((2, 2)))
        mask = np.array([[True, True], [False, False]])
        with pytest.raises(ag.AutogradError):
            scaled_dot_attention(Q, K, V, mask)

    def test_kv_row_mismatch_errors(self):
        with pytest.raises(ag.AutogradError):
            scaled_dot_attention(tensor(np.zeros((2, 2))), tensor(np.zeros((3, 2))),
                                 tensor(np.zeros((2, 2))))

    def test_output_rows_are_convex_combinations(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            n, m, dk, dv = rng.integers(1, 5, 4) + 1
            Q = tensor(rng.uniform(-2, 2, (n, dk)))
            K = tensor(rng.uniform(-2, 2, (m, dk)))
            V = tensor(rng.uniform(-2, 2, (m, dv)))
            out = scaled_dot_attention(Q, K, V).data
            assert np.all(out <= V.data.max(axis=0) + 1e-12)
            assert np.all(out >= V.data.min(axis=0) - 1e-12)

    def test_gradients(self):
        rng = np.random.default_rng(3)
        Q = tensor(rng.uniform(-1, 1, (3, 2)))
        K = tensor(rng.uniform(-1, 1, (4, 2)))
        V = tensor(rng.uniform(-1, 1, (4, 3)))
        mask = np.ones((3, 4), dtype=bool)
        mask[0, 2:] = False

        def f(*_):
            return ag.tsum(ag.tanh(scaled_dot_attention(Q, K, V, mask)))

        assert grad_check(f, [Q, K, V]) < 1e-4


class TestMultiHead:
    def test_single_head_identity_projection_reduces(self):
        rng = np.random.default_rng(4)
        params = MultiHeadParams(d_model=3, heads=1, rng=rng)
        eye = np.eye(3)
        for W in (params.W_q[0], params.W_k[0], params.W_v[0], params.W_o):
            W.data[...] = eye
        Q = tensor(rng.uniform(-1, 1, (4, 3)))
        K = tensor(rng.uniform(-1, 1, (5, 3)))
        V = tensor(rng.uniform(-1, 1, (5, 3)))
        got = multi_head(Q, K, V, params)
        want = scaled_dot_attention(Q, K, V)
        assert np.allclose(got.data, want.data, atol=1e-14)

    def test_head_permutation_invariance(self):
        rng = np.random.default_rng(5)
        params = MultiHeadParams(d_model=4, heads=2, rng=rng)
        Q = tensor(rng.uniform(-1, 1, (3, 4)))
        base = multi_head(Q, Q, Q, params).data
        # swap the two heads and the matching W_o row blocks
        params.W_q.reverse(), params.W_k.reverse(), params.W_v.reverse()
        d_k = params.d_k
        params.W_o.data = np.vstack([params.W_o.data[d_k:], params.W_o.data[:d_k]])
        assert np.allclose(multi_head(Q, Q, Q, params).data, base, atol=1e-14)

    def test_matches_independent_per_head_evaluation(self):
        rng = np.random.default_rng(6)
        params = MultiHeadParams(d_model=4, heads=2, rng=rng)
        Q = rng.uniform(-1, 1, (3, 4))
        K = rng.uniform(-1, 1, (5, 4))
        V = rng.uniform(-1, 1, (5, 4))
        got = multi_head(tensor(Q), tensor(K), tensor(V), params).data
        heads = []
        for i in range(2):
            q, k, v = Q @ params.W_q[i].data, K @ params.W_k[i].data, V @ params.W_v[i].data
            scores = q @ k.T / math.sqrt(params.d_k)
            e = np.exp(scores - scores.max(axis=1, keepdims=True))
            w = e / e.sum(axis=1, keepdims=True)
            heads.append(w @ v)
        want = np.hstack(heads) @ params.W_o.data
        assert np.allclose(got, want, atol=1e-10)


class TestPositionalEncoding:
    def test_position_zero(self):
        pe = positional_encoding(3, 6)
        assert np.allclose(pe[0, 0::2], 0.0)
        assert np.allclose(pe[0, 1::2], 1.0)

    def test_bounded(self):
        pe = positional_encoding(50, 8)
        assert np.all(pe >= -1.0) and np.all(pe <= 1.0)

    def test_direct_evaluation_d4(self):
        pe = positional_encoding(2, 4)
        want = [math.sin(1), math.cos(1), math.sin(1 / 100), math.cos(1 / 100)]
        assert np.allclose(pe[1], want, atol=1e-15)

    def test_length_overflow(self):
        with pytest.raises(ValueError):
            positional_encoding(10, 4, max_len=8)


class TestConfig:
    def test_divisibility_enforced(self):
        with pytest.raises(ValueError):
            TransformerConfig(d_model=6, heads=4)

    def test_positive_sizes(self):
        with pytest.raises(ValueError):
            TransformerConfig(d_model=0)


def tiny_model(seed=0, layers=1):
    return TransformerModel(vocab_size=12, seed=seed,
                            config=TransformerConfig(d_model=8, heads=2,
                                                     layers=layers, ffn=12,
                                                     max_len=32))


class TestEncoderDecoder:
    def test_encoder_output_shape(self):
        z = tiny_model().encoder_forward([3, 8, 9])
        assert z.shape == (3, 8)

    def test_encoder_deterministic(self):
        a = tiny_model(seed=3).encoder_forward([3, 8, 9]).data
        b = tiny_model(seed=3).encoder_forward([3, 8, 9]).data
        assert np.array_equal(a, b)

    def test_zero_layers_is_embedding_plus_positions(self):
        model = TransformerModel(vocab_size=12, seed=1,
                                 config=TransformerConfig(d_model=8, heads=2,
                                                          layers=0, ffn=4, max_len=16))
        ids = [4, 7]
        z = model.encoder_forward(ids).data
        want = model.enc_embedding.data[ids] + positional_encoding(2, 8)
        assert np.array_equal(z, want)

    def test_empty_input_errors(self):
        with pytest.raises(ValueError):
            tiny_model().encoder_forward([])
        with pytest.raises(ValueError):
            tiny_model().decoder_forward([], tensor(np.zeros((1, 8))))

    def test_logits_shape_and_row_normalization(self):
        model = tiny_model(seed=2)
        z = model.encoder_forward([3, 8])
        logits = model.decoder_forward([2, 5, 6], z)
        assert logits.shape == (3, 12)
        probs = ag.softmax(logits).data
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_causality_perturbation(self):
        model = tiny_model(seed=4)
        z = model.encoder_forward([3, 8, 9])
        ids = [2, 5, 6, 7]
        base = model.decoder_forward(ids, z).data
        for j in range(1, len(ids)):
            mutated = list(ids)
            mutated[j] = 11
            out = model.decoder_forward(mutated, z).data
            assert np.array_equal(out[:j], base[:j])

    def test_pair_loss_gradients(self):
        model = tiny_model(seed=5)
        rng = np.random.default_rng(17)
        for t in model.params().values():
            t.data = rng.uniform(-0.6, 0.6, t.data.shape)
        pair = EncodedPair((3, 8, 9), (3, 8, 9), (), (9, 3), (9, 3))
        params = list(model.params().values())
        assert grad_check(lambda *_: model.pair_loss(pair), params) < 1e-4

    def test_session_steps_match_full_forward(self):
        model = tiny_model(seed=6)
        sess = model.decode_session([3, 8, 9])
        state = sess.initial_state()
        p1, _, state = sess.step(state, 2)
        p2, _, state = sess.step(state, 5)
        z = model.encoder_forward([3, 8, 9])
        logits = model.decoder_forward([2, 5], z)
        assert np.allclose(p1, ag.softmax(logits[0]).data, atol=1e-12)
        assert np.allclose(p2, ag.softmax(logits[1]).data, atol=1e-12)
