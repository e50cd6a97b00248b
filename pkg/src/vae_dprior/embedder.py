"""Contextual token embeddings, pooled sentence embeddings, and k-means clustering.

The embedder is a token table plus one per-position mixing layer
(tanh of a linear map).  Cluster centroids are frozen after construction;
only their projection into latent space trains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import Array, Rng, Tensor, take_rows


@dataclass
class EmbedderParams:
    """Names of the embedder's parameter arrays inside a parameter dict."""

    table: str = "emb.table"
    mix_w: str = "emb.mix_w"
    mix_b: str = "emb.mix_b"


def init_embedder_params(vocab_size: int, d_emb: int, rng: Rng) -> dict[str, Array]:
    return {
        "emb.table": rng.normal([vocab_size, d_emb]) * 1.0,
        "emb.mix_w": rng.normal([d_emb, d_emb]) / np.sqrt(d_emb),
        "emb.mix_b": np.zeros(d_emb),
    }


def embed_tokens(params: dict[str, Tensor], tokens) -> Tensor:
    """Contextual embeddings, (len(tokens), d_emb). Differentiable in the table and mixer."""
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("embed_tokens expects a non-empty 1-D token id list")
    vocab = params["emb.table"].shape[0]
    if (ids < 0).any() or (ids >= vocab).any():
        raise ValueError(f"token id out of vocabulary (size {vocab})")
    rows = take_rows(params["emb.table"], ids)
    return (rows @ params["emb.mix_w"] + params["emb.mix_b"]).tanh()


def embed_tokens_batch(params: dict[str, Tensor], ids: Array) -> Tensor:
    """Batched variant over a padded (B, L) id matrix."""
    rows = take_rows(params["emb.table"], ids)
    return (rows @ params["emb.mix_w"] + params["emb.mix_b"]).tanh()


def sentence_embedding(V: Tensor) -> Tensor:
    """Arithmetic mean over positions of a (u, d_emb) sequence."""
    if V.shape[0] == 0:
        raise ValueError("sentence_embedding requires a non-empty sequence")
    return V.mean(axis=0)


def sentence_embedding_batch(V: Tensor, mask: Array) -> Tensor:
    """Masked mean over positions; mask is (B, L) of {0,1}."""
    lengths = mask.sum(axis=1, keepdims=True)
    return (V * Tensor(mask[:, :, None])).sum(axis=1) / Tensor(lengths)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


@dataclass
class ClusterModel:
    centroids: Array  # (K, d)
    counts: Array  # assignment counts per cluster at build time

    @property
    def K(self) -> int:
        return self.centroids.shape[0]


def _sse(points: Array, centroids: Array, assign: Array) -> float:
    return float(((points - centroids[assign]) ** 2).sum())


def kmeans(points: Array, K: int, max_iters: int = 100, seed: int = 0) -> ClusterModel:
    """Lloyd's algorithm with k-means++ seeding; empty clusters reseed to the farthest point."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < K:
        raise ValueError(f"need at least K={K} points, got {n}")
    rng = Rng(seed)

    # k-means++ seeding
    centroids = np.empty((K, points.shape[1]))
    first = int(rng.integers(0, n))
    centroids[0] = points[first]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(0, n))
        else:
            r = rng.uniform() * total
            idx = int(np.searchsorted(np.cumsum(d2), r))
            idx = min(idx, n - 1)
        centroids[k] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[k]) ** 2).sum(axis=1))

    assign = np.full(n, -1, dtype=np.int64)
    prev_sse = np.inf
    for _ in range(max_iters):
        dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = dists.argmin(axis=1)
        sse = _sse(points, centroids, new_assign)
        assert sse <= prev_sse + 1e-9, "Lloyd iteration increased SSE"
        prev_sse = sse
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for k in range(K):
            members = points[assign == k]
            if len(members) == 0:
                far = int(dists.min(axis=1).argmax())
                centroids[k] = points[far]
            else:
                centroids[k] = members.mean(axis=0)
    counts = np.bincount(assign, minlength=K)
    return ClusterModel(centroids=centroids, counts=counts)


def add_cluster(model: ClusterModel, new_points: Array) -> ClusterModel:
    """Append one centroid (mean of new_points); existing centroids untouched."""
    new_points = np.asarray(new_points, dtype=np.float64)
    if new_points.size == 0:
        raise ValueError("add_cluster requires non-empty new_points")
    centroid = new_points.mean(axis=0, keepdims=True)
    return ClusterModel(
        centroids=np.concatenate([model.centroids, centroid], axis=0),
        counts=np.concatenate([model.counts, [len(new_points)]]),
    )


def save_clusters(path: str, model: ClusterModel) -> None:
    import json

    with open(path, "w") as fh:
        json.dump(
            {
                "K": int(model.K),
                "d_emb": int(model.centroids.shape[1]),
                "centroids": model.centroids.ravel().tolist(),
                "counts": model.counts.tolist(),
            },
            fh,
        )


def load_clusters(path: str) -> ClusterModel:
    import json

    with open(path) as fh:
        obj = json.load(fh)
    centroids = np.array(obj["centroids"], dtype=np.float64).reshape(obj["K"], obj["d_emb"])
    return ClusterModel(centroids=centroids, counts=np.array(obj["counts"]))
