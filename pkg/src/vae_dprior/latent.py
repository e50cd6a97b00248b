"""Posterior encoders, conditional priors, EM assignments, and the overlap diagnostic.

Both encoders are mean pooling followed by two linear heads (mean and log-std).
The label prior for y is N(W_y Phi(y), lambda_y I); the content prior is a
K-component mixture with means W_c c_k over frozen k-means centroids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedder import ClusterModel, sentence_embedding, sentence_embedding_batch
from .numeric import Array, Rng, Tensor

_as_value = lambda x: x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


@dataclass
class LatentGaussian:
    """Diagonal Gaussian in a latent subspace; fields may be Tensors inside a graph."""

    mean: Tensor
    log_std: Tensor

    @property
    def std(self):
        return self.log_std.exp() if isinstance(self.log_std, Tensor) else np.exp(self.log_std)


@dataclass
class LabelPrior:
    w_y: Array  # (d_z, d_emb)
    lambda_y: float
    registry: dict = field(default_factory=dict)  # label -> Phi(y), (d_emb,)

    def mean_for(self, label: str) -> Array:
        return self.w_y @ self.registry[label]


@dataclass
class ContentPrior:
    w_c: Array  # (d_z, d_emb)
    lambda_c: float
    cluster: ClusterModel
    weights: Array = None  # pi_k, uniform when None
    free_means: Array = None  # (K, d_z), used instead of W_c c_k when set

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.full(self.K, 1.0 / self.K)

    @property
    def K(self) -> int:
        return self.free_means.shape[0] if self.free_means is not None else self.cluster.K

    def means(self) -> Array:
        """All component means, (K, d_z)."""
        if self.free_means is not None:
            return self.free_means
        return self.cluster.centroids @ self.w_c.T


def init_encoder_params(d_emb: int, d_z: int, rng: Rng) -> dict[str, Array]:
    scale = 1.0 / np.sqrt(d_emb)
    params = {}
    for side in ("label", "content"):
        params[f"enc.{side}_mean_w"] = rng.normal([d_emb, d_z]) * scale
        params[f"enc.{side}_mean_b"] = np.zeros(d_z)
        params[f"enc.{side}_logstd_w"] = rng.normal([d_emb, d_z]) * scale * 0.1
        params[f"enc.{side}_logstd_b"] = np.full(d_z, -1.0)
    return params


def _encode(params: dict[str, Tensor], V: Tensor, side: str) -> LatentGaussian:
    if V.shape[0] == 0:
        raise ValueError("encoder requires a non-empty embedding sequence")
    pooled = sentence_embedding(V)
    mean = pooled @ params[f"enc.{side}_mean_w"] + params[f"enc.{side}_mean_b"]
    log_std = pooled @ params[f"enc.{side}_logstd_w"] + params[f"enc.{side}_logstd_b"]
    return LatentGaussian(mean, log_std)


def label_encode(params: dict[str, Tensor], V: Tensor) -> LatentGaussian:
    return _encode(params, V, "label")


def content_encode(params: dict[str, Tensor], V: Tensor) -> LatentGaussian:
    return _encode(params, V, "content")


def encode_batch(params: dict[str, Tensor], V: Tensor, mask: Array, side: str) -> LatentGaussian:
    pooled = sentence_embedding_batch(V, mask)
    mean = pooled @ params[f"enc.{side}_mean_w"] + params[f"enc.{side}_mean_b"]
    log_std = pooled @ params[f"enc.{side}_logstd_w"] + params[f"enc.{side}_logstd_b"]
    return LatentGaussian(mean, log_std)


def reparameterize(g: LatentGaussian, eps) -> Tensor:
    """z = h + sigma * eps, differentiable in mean and log-std."""
    eps_v = _as_value(eps)
    mean_shape = g.mean.shape if isinstance(g.mean, Tensor) else np.shape(g.mean)
    if eps_v.shape != tuple(mean_shape):
        raise ValueError(f"eps shape {eps_v.shape} does not match latent shape {tuple(mean_shape)}")
    mean = g.mean if isinstance(g.mean, Tensor) else Tensor(g.mean)
    log_std = g.log_std if isinstance(g.log_std, Tensor) else Tensor(g.log_std)
    return mean + log_std.exp() * Tensor(eps_v)


def label_prior_mean(prior: LabelPrior, phi) -> Array | Tensor:
    phi_v = _as_value(phi)
    if phi_v.shape[-1] != prior.w_y.shape[1]:
        raise ValueError(f"phi length {phi_v.shape[-1]} != d_emb {prior.w_y.shape[1]}")
    if isinstance(phi, Tensor):
        return phi @ Tensor(prior.w_y.T)
    return prior.w_y @ phi_v


def content_prior_mean(prior: ContentPrior, k: int) -> Array:
    if not (0 <= k < prior.K):
        raise IndexError(f"component {k} out of range [0, {prior.K})")
    return prior.means()[k]


def hard_assign(z_c, prior: ContentPrior) -> int | Array:
    """Index of the nearest component mean; ties broken by lowest index."""
    z = _as_value(z_c)
    means = prior.means()
    if z.ndim == 1:
        return int(((means - z) ** 2).sum(axis=1).argmin())
    d2 = ((z[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def soft_assign(z_c, prior: ContentPrior, tau: float) -> Array:
    """Softmax of negative squared distances over temperature; rows sum to 1."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    z = _as_value(z_c)
    means = prior.means()
    single = z.ndim == 1
    if single:
        z = z[None, :]
    d2 = ((z[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    logits = -d2 / tau
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return p[0] if single else p


# ---------------------------------------------------------------------------
# Overlap diagnostic
# ---------------------------------------------------------------------------


@dataclass
class OverlapReport:
    max_label_label: float
    max_content_content: float
    max_cross: float
    strict: bool
    threshold: float
    not_evaluated: bool = False

    def as_dict(self) -> dict:
        return {
            "max_label_label": self.max_label_label,
            "max_content_content": self.max_content_content,
            "max_label_content": self.max_cross,
            "strict": self.strict,
            "threshold": self.threshold,
            "not_evaluated": self.not_evaluated,
        }


def bhattacharyya_isotropic(mu_a: Array, mu_b: Array, lam: float) -> float:
    """Overlap coefficient exp(-||dmu||^2 / (8 lambda)) for equal-variance isotropic Gaussians."""
    d2 = float(((mu_a - mu_b) ** 2).sum())
    return float(np.exp(-d2 / (8.0 * lam)))


def prior_overlap_diagnostic(
    label_prior: LabelPrior, content_prior: ContentPrior, threshold: float = 1e-3
) -> OverlapReport:
    """Pairwise Bhattacharyya coefficients within and across the two prior families.

    Defined only for equal variances; a mixed-variance configuration is
    reported as not evaluated for the cross group.
    """
    label_means = [label_prior.mean_for(name) for name in sorted(label_prior.registry)]
    content_means = list(content_prior.means())
    if len(label_means) + len(content_means) < 2:
        raise ValueError("need at least two priors registered")

    def group_max(means, lam):
        best = 0.0
        for i in range(len(means)):
            for j in range(i + 1, len(means)):
                best = max(best, bhattacharyya_isotropic(means[i], means[j], lam))
        return best

    ll = group_max(label_means, label_prior.lambda_y)
    cc = group_max(content_means, content_prior.lambda_c)
    mixed = not np.isclose(label_prior.lambda_y, content_prior.lambda_c)
    if mixed:
        return OverlapReport(ll, cc, float("nan"), strict=False, threshold=threshold, not_evaluated=True)
    lam = label_prior.lambda_y
    cross = 0.0
    for a in label_means:
        for b in content_means:
            cross = max(cross, bhattacharyya_isotropic(a, b, lam))
    return OverlapReport(ll, cc, cross, strict=cross < threshold, threshold=threshold)


# ---------------------------------------------------------------------------
# Latent dump format: one label row and one content row per sentence
# ---------------------------------------------------------------------------


def dump_latents(path: str, rows: list[dict]) -> None:
    import json

    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
