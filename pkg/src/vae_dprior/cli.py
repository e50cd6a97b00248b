"""Command-line entry point wiring all modules into reproducible runs.

Every subcommand reads an optional JSON `--config` plus `--seed`, `--in`,
`--out` overrides, writes its outputs in the documented formats, and records a
RunManifest (written atomically) so the run can be reproduced from it alone.

Exit codes: 0 success, 2 usage error, 1 runtime failure (component named).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import fields

import numpy as np

from . import __version__
from .corpus import (
    GrammarSpec,
    Sentence,
    generate_corpus,
    load_corpus,
    oracle_classify,
    save_corpus,
    split_continual,
    split_style_transfer,
)
from .embedder import embed_tokens_batch, kmeans, save_clusters, sentence_embedding_batch
from .evaluation import (
    acc_avg,
    run_continual,
    self_similarity,
    style_accuracy,
    topic_preservation,
    train_probe,
)
from .latent import ContentPrior, LabelPrior, dump_latents, label_encode, content_encode, prior_overlap_diagnostic
from .losses import mmd
from .numeric import Rng, Tensor
from .pipelines import augment, build_label_embedding, style_transfer, _label_mean, _content_mean, _content_prior_means
from .trainer import Checkpoint, TrainConfig, _enc_mask, init_params, load_checkpoint, save_checkpoint, train
from . import report

COMMANDS = (
    "gen-corpus", "cluster", "train", "augment", "transfer",
    "eval-continual", "eval-style", "dump-latents", "diagnose-priors",
)


class UsageError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}")


def _grammar(config: dict) -> GrammarSpec:
    allowed = {f.name for f in fields(GrammarSpec)}
    raw = config.get("grammar", {})
    unknown = set(raw) - allowed
    if unknown:
        raise UsageError(f"unknown grammar keys: {sorted(unknown)}")
    return GrammarSpec(**{k: tuple(map(tuple, v)) if k == "templates" else v for k, v in raw.items()})


def _train_config(config: dict, seed: int | None) -> TrainConfig:
    raw = dict(config.get("train", {}))
    if seed is not None:
        raw["seed"] = seed
    return TrainConfig.from_dict(raw)


def _write_json_atomic(path: str, payload: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _write_manifest(out_path: str, args, started: float) -> None:
    manifest = {
        "command": args.command,
        "config": args.config,
        "seed": args.seed,
        "in": getattr(args, "in_path", None),
        "out": args.out,
        "tool_version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    _write_json_atomic(out_path, manifest)


def _require(args, attr: str, flag: str):
    value = getattr(args, attr, None)
    if value is None:
        raise UsageError(f"{args.command} requires {flag}")
    return value


def _config_path(config: dict, key: str) -> str:
    if key not in config:
        raise UsageError(f"config is missing required key {key!r}")
    return config[key]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen_corpus(args, config):
    out = _require(args, "out", "--out")
    spec = _grammar(config)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    per_pair = config.get("per_pair", 40)
    corpus = generate_corpus(spec, per_pair=per_pair, seed=seed)
    save_corpus(out, corpus, spec)
    return 0


def cmd_cluster(args, config):
    in_path = _require(args, "in_path", "--in")
    out = _require(args, "out", "--out")
    spec = _grammar(config)
    cfg = _train_config(config, args.seed)
    corpus = load_corpus(in_path, spec)
    rng = Rng(cfg.seed)
    params = {k: Tensor(v) for k, v in init_params(cfg, spec.vocab_size, 1, rng.spawn(0)).items()}
    ids, mask = _enc_mask(corpus)
    points = sentence_embedding_batch(embed_tokens_batch(params, ids), mask).value
    model = kmeans(points, min(cfg.K, len(corpus)), seed=cfg.seed)
    save_clusters(out, model)
    return 0


def cmd_train(args, config):
    in_path = _require(args, "in_path", "--in")
    out = _require(args, "out", "--out")
    spec = _grammar(config)
    cfg = _train_config(config, args.seed)
    corpus = load_corpus(in_path, spec)
    labels = config.get("labels")
    if labels:
        corpus = [s for s in corpus if s.label in set(labels)]
    base = os.path.splitext(out)[0]
    log_path = base + ".train_log.csv"
    ckpt = train(cfg, corpus, spec, log_path=log_path)
    save_checkpoint(ckpt, out)
    if ckpt.history:
        report.loss_curve(log_path, base + ".loss_curve.png")
    return 0


def _support_for(config: dict, spec: GrammarSpec, label: str) -> list:
    path = config.get("support_corpus")
    shots = config.get("shots", 0)
    if shots == 0 or path is None:
        return []
    pool = [s for s in load_corpus(path, spec) if s.label == label]
    if len(pool) < shots:
        raise ValueError(f"support corpus has {len(pool)} examples of {label!r}, fewer than shots={shots}")
    return pool[:shots]


def cmd_augment(args, config):
    in_path = _require(args, "in_path", "--in")
    out = _require(args, "out", "--out")
    spec = _grammar(config)
    ckpt = load_checkpoint(in_path)
    label = _config_path(config, "label")
    tok2id = spec.token_to_id()
    phrase = None
    for i in range(spec.n_styles):
        if spec.style_name(i) == label:
            phrase = [tok2id[t] for t in spec.style_phrase(i)]
    if phrase is None:
        raise UsageError(f"label {label!r} is not a style of the grammar")
    support = _support_for(config, spec, label)
    emb = build_label_embedding(ckpt, label, phrase, support)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    mode = config.get("content_mode", "means")
    sentences = augment(
        ckpt, emb,
        n_candidates=config.get("n_candidates", min(50, ckpt.cluster.K)),
        content_mode=mode,
        top_k=config.get("top_k"),
        rng=Rng(seed) if mode == "sample" else None,
    )
    save_corpus(out, sentences, spec)
    return 0


def cmd_transfer(args, config):
    in_path = _require(args, "in_path", "--in")
    out = _require(args, "out", "--out")
    spec = _grammar(config)
    ckpt = load_checkpoint(in_path)
    sources = load_corpus(_config_path(config, "corpus"), spec)
    if "n_sources" in config:
        sources = sources[: config["n_sources"]]
    label = _config_path(config, "target_label")
    tok2id = spec.token_to_id()
    phrase = None
    for i in range(spec.n_styles):
        if spec.style_name(i) == label:
            phrase = [tok2id[t] for t in spec.style_phrase(i)]
    if phrase is None:
        raise UsageError(f"target label {label!r} is not a style of the grammar")
    emb = build_label_embedding(ckpt, label, phrase, _support_for(config, spec, label))
    vocab = spec.vocab()
    with open(out, "w") as fh:
        for s in sources:
            tokens = style_transfer(ckpt, s, emb)
            fh.write(json.dumps({
                "source": [vocab[t] for t in s.tokens],
                "source_label": s.label,
                "target_label": label,
                "output": [vocab[t] for t in tokens],
            }) + "\n")
    return 0


def cmd_eval_continual(args, config):
    in_path = _require(args, "in_path", "--in")
    out_dir = _require(args, "out", "--out")
    os.makedirs(out_dir, exist_ok=True)
    spec = _grammar(config)
    cfg = _train_config(config, args.seed)
    corpus = load_corpus(in_path, spec)
    n_initial = config.get("n_initial_labels", 4)
    shots = config.get("shots", 1)
    n_tasks = config.get("n_tasks", spec.n_styles - n_initial)
    n_replicates = config.get("n_replicates", 5)
    split_seed = config.get("split_seed", cfg.seed + 1)
    memory_budget = config.get("memory_budget", 5)
    augment_cfg = config.get("augment")  # None disables augmentation

    splits = split_continual(corpus, n_initial, shots, n_tasks, n_replicates,
                             split_seed, memory_budget)
    initial_labels = sorted({s.label for s in splits[0].initial_train})
    _write_json_atomic(os.path.join(out_dir, "splits.json"), {
        "n_initial_labels": n_initial, "shots": shots, "n_tasks": n_tasks,
        "n_replicates": n_replicates, "seed": split_seed,
        "memory_budget": memory_budget, "initial_labels": initial_labels,
        "task_labels": [sorted({s.label for s in test}) for _, test in splits[0].tasks],
    })

    ckpt = train(cfg, splits[0].initial_train, spec,
                 log_path=os.path.join(out_dir, "train_log.csv"))
    save_checkpoint(ckpt, os.path.join(out_dir, "checkpoint.bin"))
    report.loss_curve(os.path.join(out_dir, "train_log.csv"),
                      os.path.join(out_dir, "loss_curve.png"))

    results = [run_continual(ckpt, spec, sp, augment_cfg, seed=cfg.seed + sp.replicate_id)
               for sp in splits]
    per_task_path = os.path.join(out_dir, "per_task.csv")
    with open(per_task_path, "w") as fh:
        fh.write("replicate,task,accuracy\n")
        for r in results:
            for t, a in enumerate(r["per_task"]):
                fh.write(f"{r['replicate']},{t},{a:.6f}\n")
    accs = [r["acc_avg"] for r in results]
    _write_json_atomic(os.path.join(out_dir, "metrics.json"), {
        "per_replicate_acc_avg": accs,
        "acc_avg_mean": float(np.mean(accs)),
        "acc_avg_sd": float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
        "augmented": augment_cfg is not None,
    })
    report.per_task_bars(per_task_path, os.path.join(out_dir, "per_task.png"))
    return 0


def cmd_eval_style(args, config):
    in_path = _require(args, "in_path", "--in")
    out_dir = _require(args, "out", "--out")
    os.makedirs(out_dir, exist_ok=True)
    spec = _grammar(config)
    cfg = _train_config(config, args.seed)
    corpus = load_corpus(in_path, spec)
    n_base = config.get("n_base_styles", 6)
    shots = config.get("shots", 1)
    n_sources = config.get("n_transfer_sources", 50)
    split_seed = config.get("split_seed", cfg.seed + 1)

    train_set, support, test = split_style_transfer(corpus, n_base, shots, split_seed, n_sources)
    ckpt = train(cfg, train_set, spec, log_path=os.path.join(out_dir, "train_log.csv"))
    save_checkpoint(ckpt, os.path.join(out_dir, "checkpoint.bin"))
    report.loss_curve(os.path.join(out_dir, "train_log.csv"),
                      os.path.join(out_dir, "loss_curve.png"))

    by_label = {}
    for s in support:
        by_label.setdefault(s.label, []).append(s)
    tok2id = spec.token_to_id()
    held = sorted(by_label)
    embeddings = {}
    for label in held:
        idx = int(label.replace("style", ""))
        phrase = [tok2id[t] for t in spec.style_phrase(idx)]
        embeddings[label] = build_label_embedding(ckpt, label, phrase, by_label[label])

    vocab = spec.vocab()
    pairs, topic_pairs = [], []
    rng = Rng(cfg.seed)
    with open(os.path.join(out_dir, "transfers.jsonl"), "w") as fh:
        for i, s in enumerate(test):
            target = held[i % len(held)]
            tokens = style_transfer(ckpt, s, embeddings[target])
            pairs.append((tokens, target))
            topic_pairs.append((s.tokens, tokens))
            fh.write(json.dumps({
                "source": [vocab[t] for t in s.tokens],
                "source_label": s.label,
                "target_label": target,
                "output": [vocab[t] for t in tokens],
            }) + "\n")
    _write_json_atomic(os.path.join(out_dir, "metrics.json"), {
        "style_accuracy_oracle": style_accuracy(pairs, "oracle", spec=spec),
        "topic_preservation": topic_preservation(topic_pairs, spec),
        "n_transfers": len(pairs),
        "chance_rate": 1.0 / spec.n_styles,
    })
    return 0


def cmd_dump_latents(args, config):
    in_path = _require(args, "in_path", "--in")
    out = _require(args, "out", "--out")
    spec = _grammar(config)
    ckpt = load_checkpoint(in_path)
    corpus = load_corpus(_config_path(config, "corpus"), spec)
    from .embedder import embed_tokens

    from .trainer import _enc_view

    params = _enc_view({k: Tensor(v) for k, v in ckpt.params.items()})
    rows = []
    for s in corpus:
        V = embed_tokens(params, s.tokens)
        for side, enc in (("label", label_encode), ("content", content_encode)):
            g = enc(params, V)
            rows.append({
                "side": side, "label": s.label, "topic": s.topic,
                "mean": [float(v) for v in g.mean.value],
                "log_std": [float(v) for v in g.log_std.value],
            })
    dump_latents(out, rows)
    report.latent_scatter(out, os.path.splitext(out)[0] + ".png")
    return 0


def _diagnose(ckpt: Checkpoint, corpus: list, config: dict, seed: int) -> dict:
    threshold = config.get("threshold", 1e-3)
    label_means = {lab: np.asarray(entry["mean"]) for lab, entry in ckpt.registry.items()}
    # registry already holds projected means, so the projection is the identity
    label_prior = LabelPrior(w_y=np.eye(ckpt.config.d_z), lambda_y=ckpt.config.lambda_y,
                             registry=label_means)
    content_prior = ContentPrior(
        w_c=None, lambda_c=ckpt.config.lambda_c, cluster=ckpt.cluster,
        free_means=_content_prior_means(ckpt),
    )
    overlap = prior_overlap_diagnostic(label_prior, content_prior, threshold=threshold)
    result = overlap.as_dict()

    if corpus:
        rng = Rng(seed)
        n = min(len(corpus), config.get("batch", 256))
        idx = rng.permutation(len(corpus))[:n]
        Z_y = np.stack([_label_mean(ckpt, corpus[i].tokens) for i in idx])
        Z_c = np.stack([_content_mean(ckpt, corpus[i].tokens) for i in idx])
        half = n // 2
        cross = mmd(Z_c[: 2 * half], Z_y[: 2 * half]).item()
        within = mmd(Z_c[:half], Z_c[half : 2 * half]).item()
        result["mmd_cross"] = cross
        result["mmd_within_content"] = within
        result["mmd_ratio"] = cross / within if within > 0 else float("inf")
    return result


def cmd_diagnose_priors(args, config):
    in_path = _require(args, "in_path", "--in")
    spec = _grammar(config)
    ckpt = load_checkpoint(in_path)
    corpus = load_corpus(config["corpus"], spec) if "corpus" in config else []
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    result = _diagnose(ckpt, corpus, config, seed)
    text = json.dumps(result, indent=2, sort_keys=True)
    print(text)
    if args.out:
        _write_json_atomic(args.out, result)
    if not result["strict"]:
        print(
            "diagnose-priors: prior overlap exceeds threshold "
            f"(max cross coefficient {result['max_label_content']:.3e} >= {result['threshold']:.1e})",
            file=sys.stderr,
        )
        return 1
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_HANDLERS = {
    "gen-corpus": cmd_gen_corpus,
    "cluster": cmd_cluster,
    "train": cmd_train,
    "augment": cmd_augment,
    "transfer": cmd_transfer,
    "eval-continual": cmd_eval_continual,
    "eval-style": cmd_eval_style,
    "dump-latents": cmd_dump_latents,
    "diagnose-priors": cmd_diagnose_priors,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vae-dprior")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--in", dest="in_path", default=None, help="input path")
        p.add_argument("--out", default=None, help="output path")
    return parser


def run(argv: list) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    started = time.time()
    try:
        config = _load_config(args.config)
        code = _HANDLERS[args.command](args, config)
    except UsageError as exc:
        print(f"vae-dprior {args.command}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"vae-dprior {args.command}: missing file: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"vae-dprior {args.command} failed: {exc}", file=sys.stderr)
        return 1
    if args.out:
        target = args.out
        manifest_path = (os.path.join(target, "run_manifest.json")
                         if os.path.isdir(target) else target + ".manifest.json")
        _write_manifest(manifest_path, args, started)
    return code


def main() -> None:
    sys.exit(run(sys.argv[1:]))
