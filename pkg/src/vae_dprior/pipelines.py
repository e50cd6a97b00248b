"""Label-embedding construction, no-retraining label registration, data
augmentation with quality control, and style transfer.

All operations run a trained (or freshly initialized) Checkpoint forward;
none of them modify parameter arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Sentence
from .decoder import DecoderLM, build_prefix, sample_sequence
from .embedder import embed_tokens
from .latent import content_encode, label_encode
from .numeric import Array, Rng, Tensor
from .trainer import BOS_ID, Checkpoint, EOS_ID, _enc_view, _skip_matrix


@dataclass
class LabelEmbedding:
    label: str
    z_y: Array  # (d_z,)
    provenance: str  # "zero_shot" or "few_shot(n)"

    def __post_init__(self):
        self.z_y = np.asarray(self.z_y, dtype=np.float64)
        if not np.all(np.isfinite(self.z_y)):
            raise ValueError(f"label embedding for {self.label!r} contains non-finite values")


def _params_t(ckpt: Checkpoint) -> dict:
    return {k: Tensor(v) for k, v in ckpt.params.items()}


def _label_mean(ckpt: Checkpoint, token_ids) -> Array:
    """Label-encoder posterior mean of a token sequence."""
    params = _enc_view(_params_t(ckpt))
    return label_encode(params, embed_tokens(params, list(token_ids))).mean.value


def _content_mean(ckpt: Checkpoint, token_ids) -> Array:
    params = _enc_view(_params_t(ckpt))
    return content_encode(params, embed_tokens(params, list(token_ids))).mean.value


def _content_prior_means(ckpt: Checkpoint) -> Array:
    """(K, d_z) component means of the content prior."""
    if ckpt.config.prior_mode == "gmm_uncond":
        return ckpt.params["prior.free_content_means"]
    if ckpt.config.prior_mode == "standard_normal":
        return np.zeros((1, ckpt.config.d_z))
    return ckpt.cluster.centroids @ ckpt.params["prior.w_c"].T + ckpt.params["frozen.offset_c"]


def _make_lm(ckpt: Checkpoint, z_y: Array = None, z_c: Array = None) -> DecoderLM:
    params = _params_t(ckpt)
    skip_y = skip_c = None
    if ckpt.config.prior_mode == "dprior":
        if z_y is not None:
            skip_y = Tensor(_skip_matrix(ckpt.params, "y") @ np.asarray(z_y, float))
        if z_c is not None:
            skip_c = Tensor(_skip_matrix(ckpt.params, "c") @ np.asarray(z_c, float))
    return DecoderLM(params, params["emb.table"], bos_id=BOS_ID, eos_id=EOS_ID,
                     max_len=ckpt.config.max_len, skip_y=skip_y, skip_c=skip_c)


def decode_latents(ckpt: Checkpoint, z_y: Array, z_c: Array, strategy: str = "greedy",
                   rng: Rng = None, temperature: float = 1.0, top_k: int = None) -> list:
    """Decode one (z_y, z_c) pair into a token-id list (no BOS/EOS)."""
    params = _params_t(ckpt)
    prompt = build_prefix(params, Tensor(np.asarray(z_y, float)), Tensor(np.asarray(z_c, float)))
    lm = _make_lm(ckpt, z_y, z_c)
    return sample_sequence(lm, prompt, ckpt.config.max_len, strategy, rng=rng,
                           temperature=temperature, top_k=top_k)


def build_label_embedding(ckpt: Checkpoint, label: str, phrase_tokens,
                          support: list = ()) -> LabelEmbedding:
    """Zero-shot: encode the label phrase; few-shot: equal-weight mean over the
    phrase encoding and each support sentence's encoding."""
    if not phrase_tokens:
        raise ValueError("label phrase must be non-empty")
    vectors = [_label_mean(ckpt, phrase_tokens)]
    for s in support:
        tokens = s.tokens if isinstance(s, Sentence) else s
        vectors.append(_label_mean(ckpt, tokens))
    z_y = np.mean(vectors, axis=0)
    provenance = "zero_shot" if not support else f"few_shot({len(support)})"
    return LabelEmbedding(label=label, z_y=z_y, provenance=provenance)


def add_label(ckpt: Checkpoint, emb: LabelEmbedding) -> Checkpoint:
    """Register a new label-prior mean without touching any parameter array."""
    if emb.label in ckpt.registry:
        raise ValueError(f"label {emb.label!r} is already registered")
    ckpt.registry[emb.label] = {"phrase": None, "mean": [float(v) for v in emb.z_y],
                                "provenance": emb.provenance}
    return ckpt


def quality_filter(ckpt: Checkpoint, candidates: list, emb: LabelEmbedding, top_k: int) -> list:
    """Keep the top_k candidates nearest (label-encoder mean vs z_y), ascending
    by Euclidean distance, ties broken by candidate index."""
    if not candidates:
        raise ValueError("quality_filter requires at least one candidate")
    if top_k > len(candidates):
        raise ValueError(f"top_k={top_k} exceeds {len(candidates)} candidates")
    distances = []
    for cand in candidates:
        if len(cand.tokens) == 0:
            distances.append(np.inf)
        else:
            distances.append(float(np.linalg.norm(_label_mean(ckpt, cand.tokens) - emb.z_y)))
    order = np.argsort(np.asarray(distances), kind="stable")
    return [candidates[i] for i in order[:top_k]]


def augment(ckpt: Checkpoint, emb: LabelEmbedding, n_candidates: int,
            content_mode: str = "means", top_k: int = None, rng: Rng = None) -> list:
    """Decode n_candidates (z_c, z_y) pairs for the label and keep the top_k
    that the quality filter scores closest to the label embedding."""
    if content_mode not in ("means", "sample"):
        raise ValueError(f"content_mode must be 'means' or 'sample', got {content_mode!r}")
    if n_candidates < 1:
        raise ValueError("n_candidates must be at least 1")
    top_k = n_candidates if top_k is None else top_k
    if not 1 <= top_k <= n_candidates:
        raise ValueError(f"top_k must be in [1, {n_candidates}], got {top_k}")
    means = _content_prior_means(ckpt)
    K = means.shape[0]
    if content_mode == "means" and n_candidates > K:
        raise ValueError(f"means mode supports at most K={K} candidates, got {n_candidates}")
    if content_mode == "sample" and rng is None:
        raise ValueError("sample mode requires an rng")

    candidates = []
    for i in range(n_candidates):
        if content_mode == "means":
            z_c = means[i]
        else:
            k = int(rng.integers(0, K))
            z_c = means[k] + np.sqrt(ckpt.config.lambda_c) * rng.normal([ckpt.config.d_z])
        tokens = decode_latents(ckpt, emb.z_y, z_c, strategy="greedy")
        candidates.append(Sentence(tokens=tokens, label=emb.label, topic=None))
    return quality_filter(ckpt, candidates, emb, top_k)


def style_transfer(ckpt: Checkpoint, x: Sentence, target: LabelEmbedding,
                   rng: Rng = None, strategy: str = "greedy") -> list:
    """Re-decode x's content (posterior mean, no noise) under the target label."""
    if len(x.tokens) > ckpt.config.max_len:
        raise ValueError(f"input length {len(x.tokens)} exceeds max_len={ckpt.config.max_len}")
    if len(x.tokens) == 0:
        raise ValueError("cannot transfer an empty sentence")
    z_c = _content_mean(ckpt, x.tokens)
    return decode_latents(ckpt, target.z_y, z_c, strategy=strategy, rng=rng)
