"""Synthetic styled-text corpus with a rule-based oracle and protocol splits.

Every sentence is produced from a slot template: STYLE slots are filled with
marker tokens of the sentence's style, TOPIC slots with markers of its topic,
FILLER slots with generic vocabulary.  Marker tokens are never shared between
styles and topics, so the (style, topic) composition of any token sequence is
checkable by counting markers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .numeric import Rng

PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"

_DEFAULT_TEMPLATES = [
    ["STYLE", "TOPIC", "FILLER", "FILLER", "STYLE", "TOPIC", "FILLER", "STYLE"],
    ["FILLER", "STYLE", "FILLER", "TOPIC", "STYLE", "FILLER", "TOPIC", "FILLER", "STYLE"],
    ["TOPIC", "STYLE", "STYLE", "FILLER", "TOPIC", "FILLER", "FILLER", "STYLE", "FILLER", "TOPIC"],
    ["STYLE", "FILLER", "TOPIC", "FILLER", "STYLE", "FILLER", "TOPIC", "FILLER", "STYLE", "FILLER", "TOPIC"],
    ["FILLER", "TOPIC", "FILLER", "STYLE", "FILLER", "STYLE", "TOPIC", "FILLER", "STYLE", "FILLER", "FILLER", "TOPIC"],
    ["STYLE", "TOPIC", "STYLE", "FILLER", "TOPIC", "FILLER", "STYLE", "FILLER", "TOPIC", "FILLER", "STYLE", "FILLER", "FILLER", "TOPIC"],
]


@dataclass(frozen=True)
class GrammarSpec:
    n_styles: int = 8
    n_topics: int = 10
    markers_per_style: int = 4
    markers_per_topic: int = 4
    templates: tuple = tuple(tuple(t) for t in _DEFAULT_TEMPLATES)
    filler_vocab_size: int = 120
    max_len: int = 16

    def __post_init__(self):
        for t in self.templates:
            if "STYLE" not in t or "TOPIC" not in t:
                raise ValueError("every template needs at least one STYLE and one TOPIC slot")
            if len(t) > self.max_len:
                raise ValueError(f"template of length {len(t)} exceeds max_len={self.max_len}")

    # -- vocabulary layout: specials, style markers, topic markers, fillers --

    def style_name(self, i: int) -> str:
        return f"style{i}"

    def topic_name(self, i: int) -> str:
        return f"topic{i}"

    def style_markers(self, i: int) -> list[str]:
        return [f"s{i}m{j}" for j in range(self.markers_per_style)]

    def topic_markers(self, i: int) -> list[str]:
        return [f"t{i}m{j}" for j in range(self.markers_per_topic)]

    def vocab(self) -> list[str]:
        toks = [PAD, BOS, EOS]
        for i in range(self.n_styles):
            toks.extend(self.style_markers(i))
        for i in range(self.n_topics):
            toks.extend(self.topic_markers(i))
        toks.extend(f"f{k}" for k in range(self.filler_vocab_size))
        return toks

    def token_to_id(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.vocab())}

    @property
    def vocab_size(self) -> int:
        return 3 + self.n_styles * self.markers_per_style + self.n_topics * self.markers_per_topic + self.filler_vocab_size

    def style_phrase(self, i: int) -> list[str]:
        """Label phrase for a style: its marker tokens."""
        return self.style_markers(i)


@dataclass
class Sentence:
    tokens: list  # token ids
    label: str
    topic: str


@dataclass
class TaskSplit:
    initial_train: list
    tasks: list  # list of (support: list[Sentence], test: list[Sentence])
    memory_budget: int
    replicate_id: int


def generate_corpus(spec: GrammarSpec, per_pair: int, seed: int) -> list[Sentence]:
    """Exactly per_pair sentences for every (style, topic) pair, oracle-consistent."""
    if per_pair < 1:
        raise ValueError(f"per_pair must be >= 1, got {per_pair}")
    rng = Rng(seed)
    tok2id = spec.token_to_id()
    sentences = []
    for si in range(spec.n_styles):
        smarks = spec.style_markers(si)
        for ti in range(spec.n_topics):
            tmarks = spec.topic_markers(ti)
            for _ in range(per_pair):
                template = spec.templates[int(rng.integers(0, len(spec.templates)))]
                toks = []
                for slot in template:
                    if slot == "STYLE":
                        toks.append(smarks[int(rng.integers(0, len(smarks)))])
                    elif slot == "TOPIC":
                        toks.append(tmarks[int(rng.integers(0, len(tmarks)))])
                    else:
                        toks.append(f"f{int(rng.integers(0, spec.filler_vocab_size))}")
                sentences.append(
                    Sentence([tok2id[t] for t in toks], spec.style_name(si), spec.topic_name(ti))
                )
    return sentences


def oracle_classify(tokens: list, spec: GrammarSpec) -> tuple[str, str]:
    """Majority-marker styles/topics; 'none' for an axis with zero hits, ties to lowest index."""
    if not tokens:
        raise ValueError("oracle_classify requires non-empty tokens")
    tok2id = spec.token_to_id()
    counts_style = [0] * spec.n_styles
    counts_topic = [0] * spec.n_topics
    style_ids = [{tok2id[m] for m in spec.style_markers(i)} for i in range(spec.n_styles)]
    topic_ids = [{tok2id[m] for m in spec.topic_markers(i)} for i in range(spec.n_topics)]
    for t in tokens:
        for i, ids in enumerate(style_ids):
            if t in ids:
                counts_style[i] += 1
        for i, ids in enumerate(topic_ids):
            if t in ids:
                counts_topic[i] += 1
    style = spec.style_name(int(max(range(spec.n_styles), key=lambda i: (counts_style[i], -i)))) if max(counts_style) > 0 else "none"
    topic = spec.topic_name(int(max(range(spec.n_topics), key=lambda i: (counts_topic[i], -i)))) if max(counts_topic) > 0 else "none"
    return style, topic


def _by_label(corpus: list[Sentence]) -> dict[str, list[Sentence]]:
    groups: dict[str, list[Sentence]] = {}
    for s in corpus:
        groups.setdefault(s.label, []).append(s)
    return groups


def split_continual(
    corpus: list[Sentence],
    n_initial_labels: int,
    shots: int,
    n_tasks: int,
    n_replicates: int,
    seed: int,
    memory_budget: int = 5,
) -> list[TaskSplit]:
    """One TaskSplit per replicate; task label sets are disjoint, supports have `shots` each."""
    if shots not in (0, 1, 5):
        raise ValueError(f"shots must be one of 0, 1, 5, got {shots}")
    groups = _by_label(corpus)
    labels = sorted(groups, key=lambda name: int(name.replace("style", "")))
    n_task_labels = len(labels) - n_initial_labels
    if n_tasks > 0 and n_task_labels % n_tasks != 0:
        raise ValueError("task labels must divide evenly across tasks")
    per_task = n_task_labels // n_tasks if n_tasks else 0
    if n_initial_labels + n_tasks * per_task > len(labels):
        raise ValueError("not enough labels for the requested protocol")
    initial_labels = labels[:n_initial_labels]
    task_labels = [labels[n_initial_labels + i * per_task : n_initial_labels + (i + 1) * per_task] for i in range(n_tasks)]

    splits = []
    for rep in range(n_replicates):
        rng = Rng(seed).spawn(rep)
        initial_train = [s for lbl in initial_labels for s in groups[lbl]]
        tasks = []
        for lbls in task_labels:
            support, test = [], []
            for lbl in lbls:
                pool = groups[lbl]
                if len(pool) < shots:
                    raise ValueError(f"label '{lbl}' has {len(pool)} examples, fewer than shots={shots}")
                order = rng.permutation(len(pool))
                support.extend(pool[i] for i in order[:shots])
                test.extend(pool[i] for i in order[shots:])
            tasks.append((support, test))
        splits.append(TaskSplit(initial_train, tasks, memory_budget, rep))
    return splits


def split_style_transfer(
    corpus: list[Sentence],
    n_base_styles: int,
    shots: int,
    seed: int,
    n_transfer_sources: int = 50,
) -> tuple[list[Sentence], list[Sentence], list[Sentence]]:
    """(train over base styles, support of held-out styles, test = held-out rest + base sample)."""
    groups = _by_label(corpus)
    labels = sorted(groups, key=lambda name: int(name.replace("style", "")))
    if n_base_styles >= len(labels):
        raise ValueError(f"n_base_styles={n_base_styles} must be < n_styles={len(labels)}")
    rng = Rng(seed)
    base, held = labels[:n_base_styles], labels[n_base_styles:]
    train = [s for lbl in base for s in groups[lbl]]
    support, test = [], []
    for lbl in held:
        pool = groups[lbl]
        if len(pool) < shots:
            raise ValueError(f"label '{lbl}' has {len(pool)} examples, fewer than shots={shots}")
        order = rng.permutation(len(pool))
        support.extend(pool[i] for i in order[:shots])
        test.extend(pool[i] for i in order[shots:])
    base_order = rng.permutation(len(train))
    test.extend(train[i] for i in base_order[:n_transfer_sources])
    return train, support, test


# ---------------------------------------------------------------------------
# Serialization: JSONL with self-describing token strings
# ---------------------------------------------------------------------------


def save_corpus(path: str, corpus: list[Sentence], spec: GrammarSpec, extra: dict | None = None) -> None:
    vocab = spec.vocab()
    with open(path, "w") as fh:
        for s in corpus:
            row = {"tokens": [vocab[t] for t in s.tokens], "label": s.label, "topic": s.topic}
            if extra:
                row.update(extra)
            fh.write(json.dumps(row) + "\n")


def load_corpus(path: str, spec: GrammarSpec) -> list[Sentence]:
    tok2id = spec.token_to_id()
    out = []
    with open(path) as fh:
        for line in fh:
            row = json.loads(line)
            out.append(Sentence([tok2id[t] for t in row["tokens"]], row["label"], row["topic"]))
    return out
