"""Metrics and protocols: ACC_avg, self-BLEU, relaxed word-mover distance,
duplicity ratio, style accuracy, a nearest-prototype probe classifier, and the
continual few-shot harness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import GrammarSpec, TaskSplit, oracle_classify
from .numeric import Array, Rng
from .pipelines import _label_mean, augment, build_label_embedding
from .trainer import Checkpoint


def acc_avg(accuracies: list) -> float:
    """Arithmetic mean of per-task accuracies."""
    if not accuracies:
        raise ValueError("acc_avg requires at least one accuracy")
    for a in accuracies:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"accuracy {a} outside [0, 1]")
    return float(np.mean(accuracies))


def _ngrams(tokens: list, n: int) -> dict:
    counts = {}
    for i in range(len(tokens) - n + 1):
        g = tuple(tokens[i : i + n])
        counts[g] = counts.get(g, 0) + 1
    return counts


def bleu(candidate: list, reference: list, eps: float = 1e-9) -> float:
    """Geometric mean of clipped n-gram precisions (n=1..4, epsilon-smoothed)
    times the brevity penalty min(1, exp(1 - |ref|/|cand|))."""
    if not candidate or not reference:
        raise ValueError("bleu requires non-empty sequences")
    log_sum, n_used = 0.0, 0
    for n in range(1, 5):
        cand_counts = _ngrams(candidate, n)
        total = sum(cand_counts.values())
        if total == 0:
            continue
        ref_counts = _ngrams(reference, n)
        clipped = sum(min(c, ref_counts.get(g, 0)) for g, c in cand_counts.items())
        p = clipped / total if clipped > 0 else eps
        log_sum += np.log(p)
        n_used += 1
    bp = min(1.0, float(np.exp(1.0 - len(reference) / len(candidate))))
    return float(bp * np.exp(log_sum / n_used))


def _embedding_of(embeddings, token) -> Array:
    try:
        return np.asarray(embeddings[token], dtype=np.float64)
    except (KeyError, IndexError):
        raise ValueError(f"token {token!r} has no embedding") from None


def relaxed_wmd(a: list, b: list, embeddings) -> float:
    """Max of the two one-sided relaxations of uniform-weight word-mover
    distance: R(a->b) = mean over a's tokens of the distance to b's nearest."""
    if not a or not b:
        raise ValueError("relaxed_wmd requires non-empty sequences")
    ea = np.stack([_embedding_of(embeddings, t) for t in a])
    eb = np.stack([_embedding_of(embeddings, t) for t in b])
    d = np.sqrt(((ea[:, None, :] - eb[None, :, :]) ** 2).sum(axis=2))
    return float(max(d.min(axis=1).mean(), d.min(axis=0).mean()))


def self_similarity(generated: list, metric: str = "bleu", embeddings=None) -> float:
    """Mean over labels of the mean ordered-pair similarity within the label;
    labels with fewer than two examples are skipped."""
    if metric not in ("bleu", "wmd"):
        raise ValueError(f"metric must be 'bleu' or 'wmd', got {metric!r}")
    if metric == "wmd" and embeddings is None:
        raise ValueError("wmd metric requires embeddings")
    groups = {}
    for s in generated:
        groups.setdefault(s.label, []).append(s.tokens)
    label_means = []
    for label in sorted(groups):
        seqs = groups[label]
        if len(seqs) < 2:
            continue
        sims = []
        for i in range(len(seqs)):
            for j in range(len(seqs)):
                if i == j:
                    continue
                if metric == "bleu":
                    sims.append(bleu(seqs[i], seqs[j]))
                else:
                    sims.append(float(np.exp(-relaxed_wmd(seqs[i], seqs[j], embeddings))))
        label_means.append(float(np.mean(sims)))
    if not label_means:
        raise ValueError("self_similarity requires a label with at least two examples")
    return float(np.mean(label_means))


def duplicity_ratio(outputs: list) -> float:
    """1 - distinct/total over token sequences (order-sensitive)."""
    if not outputs:
        raise ValueError("duplicity_ratio requires at least one output")
    distinct = len({tuple(o) for o in outputs})
    return 1.0 - distinct / len(outputs)


# ---------------------------------------------------------------------------
# probe classifier and protocols
# ---------------------------------------------------------------------------


@dataclass
class ProbeClassifier:
    prototypes: dict  # label -> (d_z,) vector
    temperature: float = 1.0

    def classify_vector(self, v: Array) -> str:
        labels = sorted(self.prototypes)
        d = [float(np.linalg.norm(v - self.prototypes[lab])) for lab in labels]
        return labels[int(np.argmin(d))]

    def classify(self, ckpt: Checkpoint, tokens: list) -> str:
        return self.classify_vector(_label_mean(ckpt, tokens))


def train_probe(ckpt: Checkpoint, data: list) -> ProbeClassifier:
    """Nearest-prototype classifier: one mean label-encoder vector per label."""
    if not data:
        raise ValueError("train_probe requires at least one labeled example")
    groups = {}
    for s in data:
        groups.setdefault(s.label, []).append(s)
    prototypes = {}
    for label in sorted(groups):
        vecs = [_label_mean(ckpt, s.tokens) for s in groups[label] if len(s.tokens) > 0]
        if not vecs:
            raise ValueError(f"label {label!r} has no usable examples")
        prototypes[label] = np.mean(vecs, axis=0)
    return ProbeClassifier(prototypes=prototypes)


def probe_accuracy(ckpt: Checkpoint, probe: ProbeClassifier, test: list) -> float:
    if not test:
        raise ValueError("probe_accuracy requires a non-empty test set")
    hits = sum(1 for s in test if probe.classify(ckpt, s.tokens) == s.label)
    return hits / len(test)


def _phrase_ids(spec: GrammarSpec, label: str) -> list:
    tok2id = spec.token_to_id()
    for i in range(spec.n_styles):
        if spec.style_name(i) == label:
            return [tok2id[t] for t in spec.style_phrase(i)]
    raise ValueError(f"label {label!r} is not a style of the grammar")


def run_continual(ckpt: Checkpoint, spec: GrammarSpec, split: TaskSplit,
                  augment_cfg: dict = None, seed: int = 0) -> dict:
    """Continual few-shot protocol over one replicate.

    Per task: build embeddings for the new labels from their support (zero-shot
    from the label phrase when the support is empty), optionally augment every
    seen label, retrain the probe on support + memory + augmented data, and
    evaluate on the union of all seen test sets.  Memory keeps the first
    `memory_budget` support examples per task (and per initial label).
    """
    rng = Rng(seed)
    memory = []
    by_init = {}
    for s in split.initial_train:
        by_init.setdefault(s.label, []).append(s)
    for label in sorted(by_init):
        memory.extend(by_init[label][: split.memory_budget])

    embeddings = {
        label: build_label_embedding(ckpt, label, _phrase_ids(spec, label))
        for label in sorted(by_init)
    }
    seen_tests = []
    per_task = []
    for support, test in split.tasks:
        by_label = {}
        for s in support:
            by_label.setdefault(s.label, []).append(s)
        new_labels = sorted({s.label for s in test})
        for label in new_labels:
            embeddings[label] = build_label_embedding(
                ckpt, label, _phrase_ids(spec, label), by_label.get(label, [])
            )
        train_set = list(support) + list(memory)
        if augment_cfg:
            for label in sorted(embeddings):
                train_set.extend(
                    augment(
                        ckpt, embeddings[label],
                        n_candidates=augment_cfg.get("n_candidates", 16),
                        content_mode=augment_cfg.get("content_mode", "means"),
                        top_k=augment_cfg.get("top_k", 8),
                        rng=rng if augment_cfg.get("content_mode") == "sample" else None,
                    )
                )
        probe = train_probe(ckpt, train_set)
        seen_tests.extend(test)
        per_task.append(probe_accuracy(ckpt, probe, seen_tests))
        for label in new_labels:
            memory.extend(by_label.get(label, [])[: split.memory_budget])
    return {"per_task": per_task, "acc_avg": acc_avg(per_task), "replicate": split.replicate_id}


def style_accuracy(pairs: list, mode: str = "oracle", spec: GrammarSpec = None,
                   ckpt: Checkpoint = None, probe: ProbeClassifier = None) -> float:
    """Fraction of (tokens, target_label) pairs judged as the target style."""
    if not pairs:
        raise ValueError("style_accuracy requires at least one output")
    if mode == "oracle":
        if spec is None:
            raise ValueError("oracle mode requires the grammar")
        hits = sum(
            1 for tokens, target in pairs
            if len(tokens) > 0 and oracle_classify(tokens, spec)[0] == target
        )
    elif mode == "probe":
        if ckpt is None or probe is None:
            raise ValueError("probe mode requires a checkpoint and a probe")
        hits = sum(
            1 for tokens, target in pairs
            if len(tokens) > 0 and probe.classify(ckpt, tokens) == target
        )
    else:
        raise ValueError(f"mode must be 'oracle' or 'probe', got {mode!r}")
    return hits / len(pairs)


def topic_preservation(pairs: list, spec: GrammarSpec) -> float:
    """Fraction of (source_tokens, output_tokens) pairs with equal oracle topic."""
    if not pairs:
        raise ValueError("topic_preservation requires at least one pair")
    hits = 0
    for src, out in pairs:
        if len(out) == 0:
            continue
        if oracle_classify(src, spec)[1] == oracle_classify(out, spec)[1]:
            hits += 1
    return hits / len(pairs)
