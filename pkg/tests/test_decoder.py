import math

import numpy as np
import pytest

from vae_dprior.decoder import (
    DecoderLM,
    build_prefix,
    decode_nll,
    decode_nll_batch,
    init_decoder_params,
    init_prefix_params,
    perplexity,
    sample_sequence,
)
from vae_dprior.numeric import Rng, Tensor, grad_check

VOCAB, D_EMB, D_DEC, D_Z = 7, 5, 6, 3
BOS, EOS = 1, 2


def make_lm(seed=0, vocab=VOCAB, max_len=10):
    rng = Rng(seed)
    params = {k: Tensor(v) for k, v in init_decoder_params(vocab, D_EMB, D_DEC, rng).items()}
    table = Tensor(rng.normal([vocab, D_EMB]))
    return DecoderLM(params, table, bos_id=BOS, eos_id=EOS, max_len=max_len)


def make_prompt(seed=3, n=4):
    return Tensor(Rng(seed).normal([n, D_DEC]))


class UniformLM(DecoderLM):
    def logits(self, h):
        shape = (self.vocab_size,) if len(h.shape) == 1 else (h.shape[0], self.vocab_size)
        return Tensor(np.zeros(shape))


class ScriptedLM(DecoderLM):
    """Puts a huge margin on a scripted token sequence, one per step."""

    def __init__(self, *args, script=(), **kw):
        super().__init__(*args, **kw)
        self.script = list(script)
        self._t = 0

    def logits(self, h):
        row = np.zeros(self.vocab_size)
        if self._t < len(self.script):
            row[self.script[self._t]] = 1e4
        else:
            row[self.eos_id] = 1e4
        self._t += 1
        return Tensor(row)


class TestBuildPrefix:
    def make_params(self, seed=0):
        return init_prefix_params(4, 4, D_Z, D_DEC, hidden=8, rng=Rng(seed))

    def test_shape(self):
        p = {k: Tensor(v) for k, v in self.make_params().items()}
        out = build_prefix(p, Tensor(np.ones(D_Z)), Tensor(np.ones(D_Z)))
        assert out.shape == (4, D_DEC)

    def test_batched_shape(self):
        p = {k: Tensor(v) for k, v in self.make_params().items()}
        out = build_prefix(p, Tensor(np.ones((5, D_Z))), Tensor(np.ones((5, D_Z))))
        assert out.shape == (5, 4, D_DEC)

    def test_zero_mlp_zero_prompt(self):
        p = {k: Tensor(np.zeros_like(v)) for k, v in self.make_params().items()}
        out = build_prefix(p, Tensor(Rng(1).normal([D_Z])), Tensor(Rng(2).normal([D_Z])))
        np.testing.assert_array_equal(out.value, np.zeros((4, D_DEC)))

    def test_dim_mismatch(self):
        p = {k: Tensor(v) for k, v in self.make_params().items()}
        with pytest.raises(ValueError):
            build_prefix(p, Tensor(np.ones(D_Z)), Tensor(np.ones(D_Z + 1)))

    @pytest.mark.parametrize("seed", range(3))
    def test_gradients(self, seed):
        raw = self.make_params(seed)
        raw["z_y"] = Rng(seed + 10).normal([D_Z])
        raw["z_c"] = Rng(seed + 20).normal([D_Z])

        def f(p):
            zy, zc = p["z_y"], p["z_c"]
            rest = {k: v for k, v in p.items() if k.startswith("prefix.")}
            return build_prefix(rest, zy, zc).square().sum()

        assert grad_check(f, raw).passed


class TestDecodeNll:
    def test_uniform_logits(self):
        lm = UniformLM(make_lm().params, make_lm().table, BOS, EOS, 10)
        # 3 tokens, uniform over V=7 -> 3 ln 7
        nll = decode_nll(lm, make_prompt(), [3, 4, EOS])
        assert nll.item() == pytest.approx(3 * math.log(7), abs=1e-10)

    def test_uniform_logits_v4(self):
        lm = UniformLM(make_lm(vocab=4).params, make_lm(vocab=4).table, BOS, EOS, 10)
        nll = decode_nll(lm, make_prompt(), [3, 0, EOS])
        assert nll.item() == pytest.approx(3 * math.log(4), abs=1e-10)

    def test_perfect_margin_nll_near_zero(self):
        base = make_lm()
        lm = ScriptedLM(base.params, base.table, BOS, EOS, 10, script=[3, 4, EOS])
        nll = decode_nll(lm, make_prompt(), [3, 4, EOS])
        assert nll.item() < 1e-8

    def test_appending_never_decreases(self):
        lm = make_lm(5)
        prompt = make_prompt()
        short = decode_nll(lm, prompt, [3, EOS]).item()
        longer = decode_nll(lm, prompt, [3, 4, EOS]).item()
        assert longer >= short

    def test_nonnegative(self):
        lm = make_lm(6)
        assert decode_nll(lm, make_prompt(), [5, 6, 3, EOS]).item() >= 0.0

    def test_requires_eos(self):
        with pytest.raises(ValueError):
            decode_nll(make_lm(), make_prompt(), [3, 4])

    def test_over_length_rejected(self):
        lm = make_lm(max_len=3)
        with pytest.raises(ValueError):
            decode_nll(lm, make_prompt(), [3, 4, 5, 6, EOS])

    def test_invalid_token(self):
        with pytest.raises(ValueError):
            decode_nll(make_lm(), make_prompt(), [3, VOCAB, EOS])

    def test_batch_matches_single(self):
        lm = make_lm(7)
        prompt = make_prompt()
        seqs = [[3, 4, EOS], [5, EOS]]
        L = 3
        ids = np.full((2, L), 0)
        mask = np.zeros((2, L))
        for i, s in enumerate(seqs):
            ids[i, : len(s)] = s
            mask[i, : len(s)] = 1.0
        prompts = Tensor(np.stack([prompt.value, prompt.value]))
        batch = decode_nll_batch(lm, prompts, ids, mask)
        for i, s in enumerate(seqs):
            single = decode_nll(lm, prompt, s).item() / len(s)
            assert batch.value[i] == pytest.approx(single, abs=1e-10)

    @pytest.mark.parametrize("seed", range(3))
    def test_gradients_full_path(self, seed):
        rng = Rng(seed)
        raw = init_decoder_params(VOCAB, D_EMB, D_DEC, rng)
        raw["emb.table"] = rng.normal([VOCAB, D_EMB])
        raw["prompt"] = rng.normal([2, D_DEC])

        def f(p):
            lm = DecoderLM(
                {k: v for k, v in p.items() if k.startswith("dec.")},
                p["emb.table"], BOS, EOS, 10,
            )
            return decode_nll(lm, p["prompt"], [3, 4, EOS])

        assert grad_check(f, raw).passed

    def test_matches_stable_log_softmax_sum(self):
        from vae_dprior.numeric import stable_log_softmax

        lm = make_lm(9)
        prompt = make_prompt()
        x = [3, 5, EOS]
        # independent step-by-step evaluation
        h = lm.consume_prompt(prompt)
        h = lm.step(h, lm.input_vector(BOS))
        total = 0.0
        for t, tok in enumerate(x):
            total -= stable_log_softmax(lm.logits(h).value)[tok]
            if t + 1 < len(x):
                h = lm.step(h, lm.input_vector(tok))
        assert decode_nll(lm, prompt, x).item() == pytest.approx(total, abs=1e-10)

    def test_causality(self):
        # perturbing x_t must not change logits at steps before t
        lm = make_lm(11)
        prompt = make_prompt()

        def stepwise_logits(x):
            h = lm.consume_prompt(prompt)
            h = lm.step(h, lm.input_vector(BOS))
            logits = []
            for tok in x:
                logits.append(lm.logits(h).value.copy())
                h = lm.step(h, lm.input_vector(tok))
            return logits

        a = stepwise_logits([3, 4, 5])
        b = stepwise_logits([3, 4, 6])
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        np.testing.assert_array_equal(a[2], b[2])


class TestSampling:
    def test_immediate_eos_empty_body(self):
        base = make_lm()
        lm = ScriptedLM(base.params, base.table, BOS, EOS, 10, script=[EOS])
        assert sample_sequence(lm, make_prompt(), 10) == []

    def test_greedy_deterministic(self):
        lm = make_lm(13)
        prompt = make_prompt()
        a = sample_sequence(lm, prompt, 8, "greedy")
        b = sample_sequence(lm, prompt, 8, "greedy")
        assert a == b

    def test_temperature_seeded(self):
        lm = make_lm(14)
        prompt = make_prompt()
        a = sample_sequence(lm, prompt, 8, "temperature", rng=Rng(5), temperature=1.5)
        b = sample_sequence(lm, prompt, 8, "temperature", rng=Rng(5), temperature=1.5)
        assert a == b

    def test_top_k_valid(self):
        lm = make_lm(15)
        out = sample_sequence(lm, make_prompt(), 8, "top_k", rng=Rng(1), top_k=3)
        assert all(0 <= t < VOCAB for t in out)
        assert len(out) <= 8

    def test_max_len_respected(self):
        lm = make_lm(16)
        out = sample_sequence(lm, make_prompt(), 3, "greedy")
        assert len(out) <= 3

    def test_bad_args(self):
        lm = make_lm()
        with pytest.raises(ValueError):
            sample_sequence(lm, make_prompt(), 0)
        with pytest.raises(ValueError):
            sample_sequence(lm, make_prompt(), 5, "temperature")
        with pytest.raises(ValueError):
            sample_sequence(lm, make_prompt(), 5, "nucleus", rng=Rng(1))


class TestPerplexity:
    def test_uniform_stub(self):
        base = make_lm(vocab=4)
        lm = UniformLM(base.params, base.table, BOS, EOS, 10)
        assert perplexity(lm, make_prompt(), [3, 0, EOS]) == pytest.approx(4.0, abs=1e-10)

    def test_perfect_stub(self):
        base = make_lm()
        lm = ScriptedLM(base.params, base.table, BOS, EOS, 10, script=[3, EOS])
        assert perplexity(lm, make_prompt(), [3, EOS]) == pytest.approx(1.0, abs=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            perplexity(make_lm(), make_prompt(), [])

    def test_at_least_one(self):
        lm = make_lm(17)
        assert perplexity(lm, make_prompt(), [4, 3, EOS]) >= 1.0
