"""End-to-end training loop, optimizer, and checkpoint persistence.

The per-epoch pipeline: embed tokens, encode both posteriors, reparameterize,
assign content components, build the decoder prefix, score the reconstruction
NLL, combine via the total objective, and take an adaptive-moment step.
Content-cluster centroids are computed once from the initial embedder and
frozen; only their projection matrix W_c trains.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .corpus import GrammarSpec
from .decoder import DecoderLM, build_prefix, decode_nll_batch, init_decoder_params, init_prefix_params
from .embedder import ClusterModel, embed_tokens, embed_tokens_batch, init_embedder_params, kmeans, sentence_embedding, sentence_embedding_batch
from .latent import ContentPrior, encode_batch, hard_assign, init_encoder_params, reparameterize, soft_assign
from .losses import reg_label, total_objective
from .numeric import Array, Rng, Tensor, stack, take_rows

PAD_ID, BOS_ID, EOS_ID = 0, 1, 2

_MAGIC = b"DPRIOR1\0"
CHECKPOINT_VERSION = 1

_PRIOR_MODES = ("dprior", "standard_normal", "gmm_uncond")

# Gain on the label/content projection init; larger values spread the prior
# anchor means further apart at a given latent dimension.
PRIOR_PROJECTION_GAIN = 4.0

# Latent coordinate 0 is reserved to keep the two prior families apart: every
# label anchor sits at +ANCHOR_MARGIN and every content anchor at
# -ANCHOR_MARGIN along it (the matching projection rows are zeroed), so the
# closest label/content pair is at least 2*ANCHOR_MARGIN apart on every seed
# instead of depending on where random projections of the two clouds land.
ANCHOR_MARGIN = 2.0
_ASSIGNMENTS = ("hard", "soft")


@dataclass
class TrainConfig:
    d_emb: int = 64
    d_z: int = 32
    d_dec: int = 48
    K: int = 512
    lambda_y: float = 0.1
    lambda_c: float = 0.1
    gamma_d: float = 1.0
    disentangle: str = "none"
    assignment: str = "hard"
    tau: float = 1.0
    prior_mode: str = "dprior"
    label_reg_coeff: str = "half"
    prefix_dropout: float = 0.5
    learning_rate: float = 5e-3
    epochs: int = 60
    batch_size: int = 64
    seed: int = 0
    max_len: int = 16
    n_prefix: int = 4
    prefix_pos_dim: int = 16
    prefix_hidden: int = 64

    def __post_init__(self):
        for name in ("d_emb", "d_z", "d_dec", "K", "batch_size", "max_len",
                     "n_prefix", "prefix_pos_dim", "prefix_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lambda_y", "lambda_c", "tau", "learning_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0 or self.gamma_d < 0:
            raise ValueError("epochs and gamma_d must be non-negative")
        if self.prior_mode not in _PRIOR_MODES:
            raise ValueError(f"prior_mode must be one of {_PRIOR_MODES}, got {self.prior_mode!r}")
        if self.assignment not in _ASSIGNMENTS:
            raise ValueError(f"assignment must be one of {_ASSIGNMENTS}, got {self.assignment!r}")
        if self.disentangle not in ("none", "mmd", "hsic"):
            raise ValueError(f"unknown disentangle mode {self.disentangle!r}")
        if self.label_reg_coeff not in ("half", "one"):
            raise ValueError(f"label_reg_coeff must be 'half' or 'one', got {self.label_reg_coeff!r}")
        if not 0.0 <= self.prefix_dropout < 1.0:
            raise ValueError(f"prefix_dropout must be in [0, 1), got {self.prefix_dropout}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Checkpoint:
    version: int
    params: dict  # name -> float64 ndarray
    cluster: ClusterModel
    registry: dict  # label -> {"phrase": [token ids] | None, "mean": [d_z floats]}
    config: TrainConfig
    history: list = field(default_factory=list, compare=False)  # per-epoch loss rows

    @property
    def labels(self) -> list:
        return list(self.registry)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, names, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.names = sorted(names)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {n: None for n in self.names}
        self.v = {n: None for n in self.names}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for n in self.names:
            g = grads.get(n)
            if g is None:
                continue
            if self.m[n] is None:
                self.m[n] = np.zeros_like(params[n])
                self.v[n] = np.zeros_like(params[n])
            self.m[n] = b1 * self.m[n] + (1 - b1) * g
            self.v[n] = b2 * self.v[n] + (1 - b2) * g * g
            m_hat = self.m[n] / (1 - b1**self.t)
            v_hat = self.v[n] / (1 - b2**self.t)
            params[n] = params[n] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _label_phrase_ids(spec: GrammarSpec, label: str) -> list:
    tok2id = spec.token_to_id()
    for i in range(spec.n_styles):
        if spec.style_name(i) == label:
            return [tok2id[t] for t in spec.style_phrase(i)]
    raise ValueError(f"label {label!r} is not a style of the grammar")


def init_params(config: TrainConfig, vocab_size: int, n_labels: int, rng: Rng) -> dict:
    params = {}
    params.update(init_embedder_params(vocab_size, config.d_emb, rng))
    params.update(init_encoder_params(config.d_emb, config.d_z, rng))
    if config.prior_mode == "dprior":
        # Wide projections keep the anchor means of distinct labels/components
        # far apart relative to sqrt(lambda), which the overlap diagnostic needs.
        scale = PRIOR_PROJECTION_GAIN / np.sqrt(config.d_emb)
        params["prior.w_y"] = rng.normal([config.d_z, config.d_emb]) * scale
        params["prior.w_c"] = rng.normal([config.d_z, config.d_emb]) * scale
        params["prior.w_y"][0, :] = 0.0
        params["prior.w_c"][0, :] = 0.0
        off_y = np.zeros(config.d_z)
        off_y[0] = ANCHOR_MARGIN
        params["frozen.offset_y"] = off_y
        params["frozen.offset_c"] = -off_y
        # Freeze the posterior mean heads in the anchor coordinate frame: the
        # mean of a sentence is the anchor projection of its pooled features.
        # A trainable mean head specializes to whatever separates the training
        # labels and discards every other feature direction, which leaves
        # nothing for a label registered after training to condition on; the
        # fixed projection treats all feature directions alike. Log-std heads
        # stay trainable so the posteriors can still tighten.
        for side, w, off in (("label", "w_y", "offset_y"), ("content", "w_c", "offset_c")):
            del params[f"enc.{side}_mean_w"], params[f"enc.{side}_mean_b"]
            params[f"frozen.{side}_mean_w"] = params[f"prior.{w}"].T.copy()
            params[f"frozen.{side}_mean_b"] = params[f"frozen.{off}"].copy()
    elif config.prior_mode == "gmm_uncond":
        params["prior.free_label_means"] = rng.normal([n_labels, config.d_z])
        params["prior.free_content_means"] = rng.normal([config.K, config.d_z])
    params.update(init_prefix_params(config.n_prefix, config.prefix_pos_dim, config.d_z,
                                     config.d_dec, config.prefix_hidden, rng))
    params.update(init_decoder_params(vocab_size, config.d_emb, config.d_dec, rng))
    # Frozen featurizer for the encoder/prior side. The decoder keeps training
    # the tied table `emb.table`; encoding, label phrases, and the clustered
    # space all read this snapshot, so the frozen centroids and the anchor
    # means stay calibrated with the posterior inputs for the whole run.
    params["frozen.table"] = params["emb.table"].copy()
    params["frozen.mix_w"] = params["emb.mix_w"].copy()
    params["frozen.mix_b"] = params["emb.mix_b"].copy()
    return params


def _enc_view(params_t: dict) -> dict:
    """Parameter view whose embedding pipeline is the frozen encoder featurizer
    and whose posterior mean heads are the frozen anchor projections."""
    view = {**params_t, "emb.table": params_t["frozen.table"],
            "emb.mix_w": params_t["frozen.mix_w"], "emb.mix_b": params_t["frozen.mix_b"]}
    for key in ("label_mean_w", "label_mean_b", "content_mean_w", "content_mean_b"):
        if f"frozen.{key}" in params_t:
            view[f"enc.{key}"] = params_t[f"frozen.{key}"]
    return view


def _token_features(params: dict) -> Array:
    """(V, d_emb) frozen featurizer output for every vocabulary item."""
    t = {k: (v.value if isinstance(v, Tensor) else v) for k, v in params.items()}
    return np.tanh(t["frozen.table"] @ t["frozen.mix_w"] + t["frozen.mix_b"])


def _skip_matrix(params: dict, side: str) -> Array:
    """(V, d_z) map sending a latent to a similarity profile over the vocabulary.

    The latent is carried back to the featurizer space through the
    pseudo-inverse of the frozen anchor projection; each token scores by the
    inner product of its frozen features with that reconstruction. Because
    both maps are fixed, the profile is defined for *any* latent, including
    anchors of labels the decoder never trained on.
    """
    w = params[f"prior.w_{side}"]
    w = w.value if isinstance(w, Tensor) else w
    return _token_features(params) @ np.linalg.pinv(w)


def _pad_batch(sentences: list, eos_id: int) -> tuple:
    """Padded (B, L) target ids with trailing EOS, and the {0,1} step mask."""
    seqs = [list(s.tokens) + [eos_id] for s in sentences]
    L = max(len(q) for q in seqs)
    ids = np.zeros((len(seqs), L), dtype=np.int64)
    mask = np.zeros((len(seqs), L))
    for i, q in enumerate(seqs):
        ids[i, : len(q)] = q
        mask[i, : len(q)] = 1.0
    return ids, mask


def _enc_mask(sentences: list) -> tuple:
    """Padded (B, L) input ids (no EOS) and mask for the encoder side."""
    L = max(len(s.tokens) for s in sentences)
    ids = np.zeros((len(sentences), L), dtype=np.int64)
    mask = np.zeros((len(sentences), L))
    for i, s in enumerate(sentences):
        ids[i, : len(s.tokens)] = s.tokens
        mask[i, : len(s.tokens)] = 1.0
    return ids, mask


def _soft_content_quad(z_c: Tensor, means: Tensor, weights: Array, lambda_c: float, coeff: float) -> Tensor:
    d2 = (z_c.reshape(z_c.shape[0], 1, -1) - means.reshape(1, *means.shape)).square().sum(axis=2)
    return (Tensor(weights) * d2).sum() * (-coeff / lambda_c)


def _batch_losses(params_t, config, batch, label_index, phrase_ids, centroids, eps_y, eps_c,
                  skip_mats=None, prefix_keep=None):
    """Loss components for one batch; returns (LossReport, assignments)."""
    enc_ids, enc_mask = _enc_mask(batch)
    dec_ids, dec_mask = _pad_batch(batch, eos_id=EOS_ID)
    B = len(batch)

    enc_params = _enc_view(params_t)
    V = embed_tokens_batch(enc_params, enc_ids)
    g_y = encode_batch(enc_params, V, enc_mask, "label")
    g_c = encode_batch(enc_params, V, enc_mask, "content")
    z_y = reparameterize(g_y, eps_y)
    z_c = reparameterize(g_c, eps_c)

    label_idx = np.array([label_index[s.label] for s in batch])
    coeff = {"half": 0.5, "one": 1.0}[config.label_reg_coeff]

    if config.prior_mode == "standard_normal":
        l_y = reg_label(z_y, np.zeros((B, config.d_z)), 1.0, g_y.log_std, config.label_reg_coeff)
        l_c = reg_label(z_c, np.zeros((B, config.d_z)), 1.0, g_c.log_std, config.label_reg_coeff)
        assignments = None
    else:
        if config.prior_mode == "dprior":
            phis = []
            for label in sorted(label_index, key=label_index.get):
                rows = embed_tokens(enc_params, phrase_ids[label])
                phis.append(sentence_embedding(rows))
            Phi = stack(phis)  # (n_labels, d_emb)
            # Anchor means: the regularizer pulls posteriors toward the means,
            # never the means toward the posteriors. Without this stop-gradient
            # the quadratic term is cheapest to satisfy by collapsing every
            # mean to a single point, which destroys the conditional structure.
            label_means = Tensor((Phi @ params_t["prior.w_y"].T).value
                                 + params_t["frozen.offset_y"].value)
            content_means = Tensor(centroids @ params_t["prior.w_c"].value.T
                                   + params_t["frozen.offset_c"].value)
        else:  # gmm_uncond
            label_means = params_t["prior.free_label_means"]
            content_means = params_t["prior.free_content_means"]

        mu_y = take_rows(label_means, label_idx)
        l_y = reg_label(z_y, mu_y, config.lambda_y, g_y.log_std, config.label_reg_coeff)

        prior_np = ContentPrior(
            w_c=None, lambda_c=config.lambda_c,
            cluster=ClusterModel(centroids=centroids, counts=np.ones(len(content_means.value), dtype=np.int64)),
            free_means=content_means.value,
        )
        if config.assignment == "hard":
            assignments = hard_assign(z_c.value, prior_np)
            mu_c = take_rows(content_means, assignments)
            quad = (z_c - mu_c).square().sum() * (-coeff / config.lambda_c)
        else:
            assignments = soft_assign(z_c.value, prior_np, config.tau)
            quad = _soft_content_quad(z_c, content_means, assignments, config.lambda_c, coeff)
        l_c = quad + g_c.log_std.sum()

    skip_y = skip_c = None
    if skip_mats is not None:
        # Profiles come from the prior means the example is regularized
        # toward, not from the sampled latents: the label anchor is the pooled
        # label phrase, so its profile names exactly the label's tokens, which
        # is the signal a decode conditioned on a fresh label embedding needs.
        m_y, m_c = skip_mats
        skip_y = Tensor(label_means.value[label_idx] @ m_y.T)
        if config.assignment == "hard":
            skip_c = Tensor(content_means.value[assignments] @ m_c.T)
        else:
            skip_c = Tensor(assignments @ content_means.value @ m_c.T)
    # Latent dropout on the prefix only: with the similarity channels still
    # attached, zeroing the prompt's view of a latent forces the recurrent
    # core to read token identity from the channel instead of memorizing a
    # lookup from the prompt. The lookup only covers training labels; the
    # channel is defined for any latent.
    z_y_p, z_c_p = z_y, z_c
    if prefix_keep is not None:
        keep_y, keep_c = prefix_keep
        z_y_p = z_y * Tensor(keep_y)
        z_c_p = z_c * Tensor(keep_c)
    prompts = build_prefix(params_t, z_y_p, z_c_p)
    lm = DecoderLM(params_t, params_t["emb.table"], bos_id=BOS_ID, eos_id=EOS_ID,
                   max_len=config.max_len + 1, skip_y=skip_y, skip_c=skip_c)
    nll_per = decode_nll_batch(lm, prompts, dec_ids, dec_mask)
    l_r = nll_per.mean()

    report = total_objective(
        l_r, l_y / B, l_c / B,
        disentangle=config.disentangle, gamma_d=config.gamma_d,
        Z_c=z_c, Z_y=z_y, assignments=assignments,
    )
    return report


_COMPONENT_NAMES = (("L_r", "reconstruction"), ("L_y_total", "label regularizer"),
                    ("L_c", "content regularizer"), ("disentangle_term", "disentanglement term"))


def _check_finite(report) -> None:
    for attr, human in _COMPONENT_NAMES:
        if not np.isfinite(getattr(report, attr)):
            raise RuntimeError(f"training diverged: non-finite {human} (epoch loss component {attr})")
    if not np.isfinite(report.total.item()):
        raise RuntimeError("training diverged: non-finite total objective")


def _evaluate(params, config, corpus, label_index, phrase_ids, centroids, skip_mats,
              eps_rng: Rng) -> np.ndarray:
    """Example-weighted loss components over the whole corpus, no gradients."""
    params_t = {k: Tensor(v) for k, v in params.items()}
    sums = np.zeros(5)
    batch_size = max(config.batch_size, 256)
    for start in range(0, len(corpus), batch_size):
        batch = corpus[start : start + batch_size]
        eps_y = eps_rng.normal([len(batch), config.d_z])
        eps_c = eps_rng.normal([len(batch), config.d_z])
        report = _batch_losses(params_t, config, batch, label_index, phrase_ids,
                               centroids, eps_y, eps_c, skip_mats)
        sums += len(batch) * np.array([report.L_r, report.L_y_total, report.L_c,
                                       report.disentangle_term, report.total.item()])
    return sums / len(corpus)


def train(config: TrainConfig, corpus: list, spec: GrammarSpec, log_path: str = None) -> Checkpoint:
    if not corpus:
        raise ValueError("corpus must be non-empty")
    labels = sorted({s.label for s in corpus})
    label_index = {lab: i for i, lab in enumerate(labels)}
    phrase_ids = {lab: _label_phrase_ids(spec, lab) for lab in labels}

    rng = Rng(config.seed)
    params = init_params(config, spec.vocab_size, len(labels), rng.spawn(0))

    # frozen content clusters from the initial embedder
    params_t = {k: Tensor(v) for k, v in params.items()}
    emb_ids, emb_mask = _enc_mask(corpus)
    points = sentence_embedding_batch(embed_tokens_batch(_enc_view(params_t), emb_ids), emb_mask).value
    cluster = kmeans(points, min(config.K, len(corpus)), seed=config.seed)

    trainable = sorted(k for k in params if not k.startswith("frozen."))
    opt = Adam(trainable, config.learning_rate)
    # Fixed by construction: the anchor projections and the featurizer never
    # train, so the latent-similarity logit channels are constant matrices.
    skip_mats = None
    if config.prior_mode == "dprior":
        skip_mats = (_skip_matrix(params, "y"), _skip_matrix(params, "c"))
    data_rng = rng.spawn(1)
    eps_rng = rng.spawn(2)
    drop_rng = rng.spawn(4)
    history = []
    log_file = open(log_path, "w", newline="") if log_path else None
    writer = None
    if log_file:
        writer = csv.writer(log_file)
        writer.writerow(["epoch", "L_r", "L_y_total", "L_c", "D", "total"])

    try:
        for epoch in range(config.epochs):
            order = data_rng.permutation(len(corpus))
            for start in range(0, len(corpus), config.batch_size):
                batch = [corpus[i] for i in order[start : start + config.batch_size]]
                for name in trainable:
                    if not np.all(np.isfinite(params[name])):
                        group = name.split(".")[0]
                        raise RuntimeError(
                            f"training diverged: non-finite values in {group!r} parameters ({name})"
                        )
                params_t = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
                eps_y = eps_rng.normal([len(batch), config.d_z])
                eps_c = eps_rng.normal([len(batch), config.d_z])
                prefix_keep = None
                if config.prefix_dropout > 0 and skip_mats is not None:
                    p = config.prefix_dropout
                    prefix_keep = tuple(
                        (drop_rng.uniform(size=(len(batch), 1)) >= p).astype(np.float64)
                        for _ in range(2))
                with np.errstate(over="ignore", invalid="ignore"):
                    try:
                        report = _batch_losses(params_t, config, batch, label_index, phrase_ids,
                                               cluster.centroids, eps_y, eps_c, skip_mats,
                                               prefix_keep)
                    except ValueError as exc:
                        if "NaN" in str(exc):
                            raise RuntimeError(
                                "training diverged: non-finite reconstruction logits"
                            ) from exc
                        raise
                    _check_finite(report)
                    report.total.backward()
                grads = {k: params_t[k].grad for k in trainable if params_t[k].grad is not None}
                opt.step(params, grads)
            # End-of-epoch evaluation with an eps stream that restarts from the
            # same key every epoch: differences between logged rows then track
            # the parameters, not the batch shuffle or fresh noise draws.
            row = _evaluate(params, config, corpus, label_index, phrase_ids,
                            cluster.centroids, skip_mats, Rng(config.seed).spawn(3))
            history.append({"epoch": epoch, "L_r": row[0], "L_y_total": row[1],
                            "L_c": row[2], "D": row[3], "total": row[4]})
            if writer:
                writer.writerow([epoch] + [f"{v:.6f}" for v in row])
                log_file.flush()
    finally:
        if log_file:
            log_file.close()

    registry = _build_registry(params, config, labels, phrase_ids)
    return Checkpoint(version=CHECKPOINT_VERSION, params=params, cluster=cluster,
                      registry=registry, config=config, history=history)


def _build_registry(params: dict, config: TrainConfig, labels: list, phrase_ids: dict) -> dict:
    registry = {}
    params_t = {k: Tensor(v) for k, v in params.items()}
    for i, lab in enumerate(labels):
        if config.prior_mode == "dprior":
            phi = sentence_embedding(embed_tokens(_enc_view(params_t), phrase_ids[lab])).value
            mean = phi @ params["prior.w_y"].T + params["frozen.offset_y"]
        elif config.prior_mode == "gmm_uncond":
            mean = params["prior.free_label_means"][i]
        else:
            mean = np.zeros(config.d_z)
        registry[lab] = {"phrase": list(map(int, phrase_ids[lab])), "mean": [float(v) for v in mean]}
    return registry


# ---------------------------------------------------------------------------
# checkpoint persistence
# ---------------------------------------------------------------------------


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    names = sorted(ckpt.params) + ["cluster.centroids"]
    arrays = dict(ckpt.params)
    arrays["cluster.centroids"] = ckpt.cluster.centroids
    manifest_arrays = []
    offset = 0
    payloads = []
    for name in names:
        a = np.ascontiguousarray(arrays[name], dtype="<f4")
        manifest_arrays.append({"name": name, "shape": list(a.shape), "offset": offset})
        payloads.append(a.tobytes())
        offset += len(payloads[-1])
    manifest = {
        "version": ckpt.version,
        "config": ckpt.config.to_dict(),
        "registry": ckpt.registry,
        "cluster_counts": [int(c) for c in ckpt.cluster.counts],
        "arrays": manifest_arrays,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for p in payloads:
            f.write(p)


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    if data[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"not a checkpoint file: bad magic in {path}")
    pos = len(_MAGIC)
    if len(data) < pos + 4:
        raise ValueError(f"truncated checkpoint: missing manifest length in {path}")
    (blob_len,) = struct.unpack("<I", data[pos : pos + 4])
    pos += 4
    if len(data) < pos + blob_len:
        raise ValueError(f"truncated checkpoint: manifest cut short in {path}")
    manifest = json.loads(data[pos : pos + blob_len].decode())
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint version mismatch: {manifest.get('version')} != {CHECKPOINT_VERSION}")
    payload = data[pos + blob_len :]
    arrays = {}
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 4
        chunk = payload[entry["offset"] : entry["offset"] + nbytes]
        if len(chunk) != nbytes:
            raise ValueError(
                f"checkpoint shape manifest disagrees with payload for {entry['name']!r}: "
                f"need {nbytes} bytes, have {len(chunk)}"
            )
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float64)
    centroids = arrays.pop("cluster.centroids")
    cluster = ClusterModel(centroids=centroids, counts=np.asarray(manifest["cluster_counts"], dtype=np.int64))
    config = TrainConfig.from_dict(manifest["config"])
    return Checkpoint(version=manifest["version"], params=arrays, cluster=cluster,
                      registry=manifest["registry"], config=config)
