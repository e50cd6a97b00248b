import numpy as np
import pytest

import vae_dprior.pipelines as pipelines
from vae_dprior.corpus import GrammarSpec, Sentence, generate_corpus
from vae_dprior.numeric import Rng
from vae_dprior.pipelines import (
    LabelEmbedding,
    add_label,
    augment,
    build_label_embedding,
    decode_latents,
    quality_filter,
    style_transfer,
)
from vae_dprior.trainer import TrainConfig, train

SPEC = GrammarSpec(n_styles=3, n_topics=3, filler_vocab_size=20)
CORPUS = generate_corpus(SPEC, per_pair=4, seed=0)
CKPT = train(
    TrainConfig(d_emb=8, d_z=4, d_dec=12, K=4, epochs=2, batch_size=16,
                prefix_pos_dim=4, prefix_hidden=8, n_prefix=2, seed=3),
    CORPUS, SPEC,
)


def phrase_ids(style: int):
    tok2id = SPEC.token_to_id()
    return [tok2id[t] for t in SPEC.style_phrase(style)]


class TestBuildLabelEmbedding:
    def test_zero_shot_is_phrase_encoding(self):
        emb = build_label_embedding(CKPT, "style0", phrase_ids(0))
        np.testing.assert_array_equal(emb.z_y, pipelines._label_mean(CKPT, phrase_ids(0)))
        assert emb.provenance == "zero_shot"

    def test_few_shot_stub_mean(self, monkeypatch):
        fixed = {(7,): np.array([1.0, 0.0]), (8,): np.array([0.0, 1.0]), (9,): np.array([1.0, 1.0])}
        monkeypatch.setattr(pipelines, "_label_mean", lambda ckpt, ids: fixed[tuple(ids)])
        emb = build_label_embedding(CKPT, "x", [7], [Sentence([8], "x", None), Sentence([9], "x", None)])
        np.testing.assert_allclose(emb.z_y, [2 / 3, 2 / 3])
        assert emb.provenance == "few_shot(2)"

    def test_support_permutation_invariant(self):
        support = [CORPUS[0], CORPUS[5], CORPUS[11]]
        a = build_label_embedding(CKPT, "style0", phrase_ids(0), support)
        b = build_label_embedding(CKPT, "style0", phrase_ids(0), support[::-1])
        np.testing.assert_allclose(a.z_y, b.z_y, atol=1e-12)

    def test_empty_phrase(self):
        with pytest.raises(ValueError):
            build_label_embedding(CKPT, "style0", [])


class TestAddLabel:
    def test_registers_name(self):
        ck = train(CKPT.config, CORPUS, SPEC)
        add_label(ck, LabelEmbedding("style_new", np.zeros(4), "zero_shot"))
        assert "style_new" in ck.registry

    def test_no_parameter_changes(self):
        ck = train(CKPT.config, CORPUS, SPEC)
        before = {k: v.tobytes() for k, v in ck.params.items()}
        before["__centroids__"] = ck.cluster.centroids.tobytes()
        add_label(ck, LabelEmbedding("style_new", np.zeros(4), "zero_shot"))
        after = {k: v.tobytes() for k, v in ck.params.items()}
        after["__centroids__"] = ck.cluster.centroids.tobytes()
        assert before == after

    def test_duplicate_rejected(self):
        ck = train(CKPT.config, CORPUS, SPEC)
        with pytest.raises(ValueError, match="already registered"):
            add_label(ck, LabelEmbedding("style0", np.zeros(4), "zero_shot"))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            LabelEmbedding("bad", np.array([np.nan, 0.0]), "zero_shot")


class TestQualityFilter:
    def stub_distances(self, monkeypatch, table):
        monkeypatch.setattr(
            pipelines, "_label_mean",
            lambda ckpt, ids: np.array([float(table[tuple(ids)]), 0.0]),
        )

    def make_emb(self):
        return LabelEmbedding("x", np.zeros(2), "zero_shot")

    def test_top2_by_distance(self, monkeypatch):
        self.stub_distances(monkeypatch, {(1,): 0.1, (2,): 0.5, (3,): 0.2})
        cands = [Sentence([1], "x", None), Sentence([2], "x", None), Sentence([3], "x", None)]
        kept = quality_filter(CKPT, cands, self.make_emb(), 2)
        assert [c.tokens for c in kept] == [[1], [3]]

    def test_full_sorted(self, monkeypatch):
        self.stub_distances(monkeypatch, {(1,): 0.5, (2,): 0.1, (3,): 0.2})
        cands = [Sentence([i], "x", None) for i in (1, 2, 3)]
        kept = quality_filter(CKPT, cands, self.make_emb(), 3)
        assert [c.tokens for c in kept] == [[2], [3], [1]]

    def test_tie_preserves_input_order(self, monkeypatch):
        self.stub_distances(monkeypatch, {(1,): 0.3, (2,): 0.3, (3,): 0.3})
        cands = [Sentence([i], "x", None) for i in (1, 2, 3)]
        kept = quality_filter(CKPT, cands, self.make_emb(), 3)
        assert [c.tokens for c in kept] == [[1], [2], [3]]

    def test_empty_candidate_scored_last(self, monkeypatch):
        self.stub_distances(monkeypatch, {(1,): 9.0})
        cands = [Sentence([], "x", None), Sentence([1], "x", None)]
        kept = quality_filter(CKPT, cands, self.make_emb(), 2)
        assert kept[0].tokens == [1]

    def test_bounds(self):
        with pytest.raises(ValueError):
            quality_filter(CKPT, [], self.make_emb(), 1)
        with pytest.raises(ValueError):
            quality_filter(CKPT, [Sentence([1], "x", None)], self.make_emb(), 2)


class TestAugment:
    def make_emb(self):
        return build_label_embedding(CKPT, "style0", phrase_ids(0))

    def test_means_mode_coverage(self):
        out = augment(CKPT, self.make_emb(), n_candidates=4, content_mode="means", top_k=4)
        assert len(out) == 4
        assert all(s.label == "style0" for s in out)
        assert all(len(s.tokens) <= CKPT.config.max_len for s in out)

    def test_means_mode_caps_at_k(self):
        with pytest.raises(ValueError, match="at most K"):
            augment(CKPT, self.make_emb(), n_candidates=5, content_mode="means")

    def test_top_k_bound(self):
        with pytest.raises(ValueError):
            augment(CKPT, self.make_emb(), n_candidates=2, top_k=3)

    def test_deterministic_sample_mode(self):
        a = augment(CKPT, self.make_emb(), 6, content_mode="sample", top_k=3, rng=Rng(9))
        b = augment(CKPT, self.make_emb(), 6, content_mode="sample", top_k=3, rng=Rng(9))
        assert [s.tokens for s in a] == [s.tokens for s in b]

    def test_sample_mode_needs_rng(self):
        with pytest.raises(ValueError, match="rng"):
            augment(CKPT, self.make_emb(), 2, content_mode="sample")

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            augment(CKPT, self.make_emb(), 2, content_mode="grid")


class TestStyleTransfer:
    def make_target(self):
        return build_label_embedding(CKPT, "style1", phrase_ids(1))

    def test_greedy_deterministic(self):
        x = CORPUS[0]
        a = style_transfer(CKPT, x, self.make_target())
        b = style_transfer(CKPT, x, self.make_target())
        assert a == b

    def test_untrained_checkpoint_no_crash(self):
        cfg = TrainConfig(d_emb=8, d_z=4, d_dec=12, K=4, epochs=0, batch_size=16,
                          prefix_pos_dim=4, prefix_hidden=8, n_prefix=2, seed=7)
        fresh = train(cfg, CORPUS, SPEC)
        out = style_transfer(fresh, CORPUS[3], self.make_target())
        assert len(out) <= fresh.config.max_len

    def test_over_length_rejected(self):
        long = Sentence(list(range(3, 3 + CKPT.config.max_len + 1)), "style0", "topic0")
        with pytest.raises(ValueError, match="max_len"):
            style_transfer(CKPT, long, self.make_target())

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            style_transfer(CKPT, Sentence([], "style0", None), self.make_target())


class TestDecodeLatents:
    def test_token_range_and_length(self):
        out = decode_latents(CKPT, np.zeros(4), np.zeros(4))
        assert len(out) <= CKPT.config.max_len
        assert all(0 <= t < SPEC.vocab_size for t in out)

    def test_temperature_seeded(self):
        a = decode_latents(CKPT, np.zeros(4), np.zeros(4), "temperature", rng=Rng(2), temperature=1.2)
        b = decode_latents(CKPT, np.zeros(4), np.zeros(4), "temperature", rng=Rng(2), temperature=1.2)
        assert a == b
