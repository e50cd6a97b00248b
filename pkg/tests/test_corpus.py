import json

import pytest

from vae_dprior.corpus import (
    GrammarSpec,
    Sentence,
    generate_corpus,
    load_corpus,
    oracle_classify,
    save_corpus,
    split_continual,
    split_style_transfer,
)


def small_spec(**kw):
    defaults = dict(n_styles=2, n_topics=2, filler_vocab_size=20)
    defaults.update(kw)
    return GrammarSpec(**defaults)


class TestGenerate:
    def test_counts_per_pair(self):
        spec = small_spec()
        corpus = generate_corpus(spec, per_pair=3, seed=0)
        assert len(corpus) == 12
        pairs = {}
        for s in corpus:
            pairs[(s.label, s.topic)] = pairs.get((s.label, s.topic), 0) + 1
        assert all(v == 3 for v in pairs.values())

    def test_deterministic(self):
        spec = small_spec()
        a = generate_corpus(spec, 5, seed=42)
        b = generate_corpus(spec, 5, seed=42)
        assert [(s.tokens, s.label, s.topic) for s in a] == [(s.tokens, s.label, s.topic) for s in b]

    def test_per_pair_zero_rejected(self):
        with pytest.raises(ValueError):
            generate_corpus(small_spec(), 0, seed=1)

    def test_oracle_consistency(self):
        spec = GrammarSpec()
        corpus = generate_corpus(spec, per_pair=2, seed=7)
        for s in corpus:
            assert oracle_classify(s.tokens, spec) == (s.label, s.topic)

    def test_template_too_long_rejected(self):
        with pytest.raises(ValueError):
            GrammarSpec(templates=(("STYLE", "TOPIC") * 10,), max_len=16)

    def test_lengths_within_max(self):
        spec = GrammarSpec()
        for s in generate_corpus(spec, 1, seed=3):
            assert 1 <= len(s.tokens) <= spec.max_len


class TestOracle:
    def test_majority_markers(self):
        spec = small_spec()
        t2i = spec.token_to_id()
        toks = [t2i["s0m0"], t2i["s0m1"], t2i["t1m0"], t2i["f3"]]
        assert oracle_classify(toks, spec) == ("style0", "topic1")

    def test_all_filler(self):
        spec = small_spec()
        t2i = spec.token_to_id()
        assert oracle_classify([t2i["f0"], t2i["f1"]], spec) == ("none", "none")

    def test_tie_breaks_low_index(self):
        spec = small_spec()
        t2i = spec.token_to_id()
        toks = [t2i["s1m0"], t2i["s0m0"], t2i["t0m0"]]
        assert oracle_classify(toks, spec)[0] == "style0"

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            oracle_classify([], small_spec())


class TestContinualSplit:
    def make_corpus(self):
        return generate_corpus(GrammarSpec(n_styles=8, n_topics=3, filler_vocab_size=30), per_pair=4, seed=11)

    def test_one_shot_counts(self):
        splits = split_continual(self.make_corpus(), 4, shots=1, n_tasks=4, n_replicates=1, seed=0)
        ts = splits[0]
        assert len(ts.tasks) == 4
        for support, test in ts.tasks:
            assert len(support) == 1
            assert len(test) == 12 - 1

    def test_zero_shot(self):
        ts = split_continual(self.make_corpus(), 4, 0, 4, 1, seed=0)[0]
        for support, test in ts.tasks:
            assert support == []
            assert len(test) == 12

    def test_initial_train_covers_initial_labels(self):
        ts = split_continual(self.make_corpus(), 4, 1, 4, 1, seed=0)[0]
        labels = {s.label for s in ts.initial_train}
        assert labels == {f"style{i}" for i in range(4)}
        assert len(ts.initial_train) == 4 * 12

    def test_task_labels_disjoint(self):
        ts = split_continual(self.make_corpus(), 4, 1, 4, 1, seed=0)[0]
        seen = set()
        for support, test in ts.tasks:
            lbls = {s.label for s in test}
            assert not (lbls & seen)
            seen |= lbls

    def test_support_test_disjoint(self):
        ts = split_continual(self.make_corpus(), 4, 5, 4, 1, seed=0)[0]
        for support, test in ts.tasks:
            sup_ids = {id(s) for s in support}
            assert not any(id(s) in sup_ids for s in test)

    def test_replicates_differ(self):
        splits = split_continual(self.make_corpus(), 4, 5, 4, 5, seed=0)
        assert len(splits) == 5
        supports = [tuple(tuple(s.tokens) for sup, _ in ts.tasks for s in sup) for ts in splits]
        assert len(set(supports)) > 1

    def test_insufficient_examples_named(self):
        corpus = generate_corpus(GrammarSpec(n_styles=8, n_topics=1, filler_vocab_size=30), per_pair=2, seed=1)
        with pytest.raises(ValueError, match="style4"):
            split_continual(corpus, 4, 5, 4, 1, seed=0)

    def test_bad_shots(self):
        with pytest.raises(ValueError):
            split_continual(self.make_corpus(), 4, 2, 4, 1, seed=0)


class TestStyleTransferSplit:
    def make_corpus(self):
        return generate_corpus(GrammarSpec(n_styles=8, n_topics=3, filler_vocab_size=30), per_pair=4, seed=5)

    def test_one_shot_support(self):
        train, support, test = split_style_transfer(self.make_corpus(), 6, 1, seed=0)
        assert len(support) == 2
        assert {s.label for s in train} == {f"style{i}" for i in range(6)}

    def test_zero_shot_support_empty(self):
        _, support, _ = split_style_transfer(self.make_corpus(), 6, 0, seed=0)
        assert support == []

    def test_deterministic(self):
        a = split_style_transfer(self.make_corpus(), 6, 1, seed=9)
        b = split_style_transfer(self.make_corpus(), 6, 1, seed=9)
        assert [s.tokens for s in a[1]] == [s.tokens for s in b[1]]

    def test_test_contains_base_sample(self):
        _, _, test = split_style_transfer(self.make_corpus(), 6, 1, seed=0, n_transfer_sources=10)
        base_in_test = [s for s in test if int(s.label.replace("style", "")) < 6]
        assert len(base_in_test) == 10

    def test_base_count_validated(self):
        with pytest.raises(ValueError):
            split_style_transfer(self.make_corpus(), 8, 1, seed=0)


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        spec = small_spec()
        corpus = generate_corpus(spec, 3, seed=2)
        path = tmp_path / "c.jsonl"
        save_corpus(str(path), corpus, spec)
        loaded = load_corpus(str(path), spec)
        assert [(s.tokens, s.label, s.topic) for s in corpus] == [
            (s.tokens, s.label, s.topic) for s in loaded
        ]

    def test_file_self_describing(self, tmp_path):
        spec = small_spec()
        corpus = generate_corpus(spec, 1, seed=2)
        path = tmp_path / "c.jsonl"
        save_corpus(str(path), corpus, spec)
        row = json.loads(path.read_text().splitlines()[0])
        assert set(row) == {"tokens", "label", "topic"}
        assert all(isinstance(t, str) for t in row["tokens"])
