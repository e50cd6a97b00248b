"""Training objective: reconstruction, label and content regularizers, and the
optional MMD/HSIC disentanglement terms, plus closed-form Gaussian KL oracles.

`reg_label` and `reg_content` are stochastic single-sample estimates that are
MAXIMIZED (so they enter `total_objective` with a minus sign).  All operations
build autodiff graphs when handed Tensors; the `kl_*` oracles are plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .latent import ContentPrior
from .numeric import Array, Tensor, take_rows

_COEFFS = {"half": 0.5, "one": 1.0}


@dataclass
class LossReport:
    """Scalar components of one objective evaluation.

    `total` keeps the autodiff graph; the component fields are plain floats.
    """

    L_r: float
    L_y_total: float
    L_c: float
    disentangle_term: float
    total: Tensor
    assignments: Array = None


def reg_label(z_y, mu_p, lambda_y: float, log_sigma_q, coeff: str = "half") -> Tensor:
    """-c/lambda_y * ||z_y - mu_p||^2 + sum(log sigma_q), c per `coeff`.

    Accepts batched inputs; the result is then the sum over the batch.
    """
    if lambda_y <= 0:
        raise ValueError(f"lambda_y must be positive, got {lambda_y}")
    if coeff not in _COEFFS:
        raise ValueError(f"coeff must be one of {sorted(_COEFFS)}, got {coeff!r}")
    z_y, mu_p, log_sigma_q = map(Tensor._lift, (z_y, mu_p, log_sigma_q))
    if z_y.shape != mu_p.shape:
        raise ValueError(f"shape mismatch: z {z_y.shape} vs prior mean {mu_p.shape}")
    quad = (z_y - mu_p).square().sum() * (-_COEFFS[coeff] / lambda_y)
    return quad + log_sigma_q.sum()


def _prior_means(prior: ContentPrior) -> Tensor:
    """Component means (K, d_z) as a Tensor, differentiable through W_c."""
    if prior.free_means is not None:
        return Tensor._lift(prior.free_means)
    if isinstance(prior.w_c, Tensor):
        return Tensor(prior.cluster.centroids) @ prior.w_c.T
    return Tensor(prior.cluster.centroids @ prior.w_c.T)


def reg_content(z_c, prior: ContentPrior, assignment, log_sigma_c, coeff: str = "half") -> Tensor:
    """Mixture analogue of reg_label under a hard or soft component assignment.

    `assignment` is an int (or int array for a batch) from hard_assign, or a
    length-K weight vector from soft_assign.  Batched z_c requires int-array
    assignments; the result is then the batch sum.
    """
    if prior.lambda_c <= 0:
        raise ValueError(f"lambda_c must be positive, got {prior.lambda_c}")
    z_c, log_sigma_c = Tensor._lift(z_c), Tensor._lift(log_sigma_c)
    means = _prior_means(prior)
    scale = -_COEFFS[coeff] / prior.lambda_c

    if np.isscalar(assignment) or (hasattr(assignment, "ndim") and np.asarray(assignment).dtype.kind in "iu"):
        idx = np.atleast_1d(np.asarray(assignment, dtype=np.int64))
        if np.any(idx < 0) or np.any(idx >= prior.K):
            raise IndexError(f"assignment index out of range for K={prior.K}")
        mu = take_rows(means, idx) if idx.size > 1 or z_c.value.ndim > 1 else means[int(idx[0])]
        quad = (z_c - mu).square().sum() * scale
        return quad + log_sigma_c.sum()

    w = np.asarray(assignment, dtype=np.float64)
    if w.shape != (prior.K,):
        raise ValueError(f"soft assignment must have shape ({prior.K},), got {w.shape}")
    if abs(w.sum() - 1.0) > 1e-8:
        raise ValueError(f"assignment weights must sum to 1, got {w.sum()}")
    diffs = (means - z_c.reshape(1, -1)).square().sum(axis=1)
    quad = (Tensor(w) * diffs).sum() * scale
    return quad + log_sigma_c.sum()


def kl_gaussian_closed_form(mu_q, sigma_q, mu_p, lam: float) -> float:
    """KL( N(mu_q, diag sigma_q^2) || N(mu_p, lam I) ), summed over dimensions."""
    mu_q, mu_p = np.atleast_1d(np.asarray(mu_q, float)), np.atleast_1d(np.asarray(mu_p, float))
    sigma_q = np.broadcast_to(np.asarray(sigma_q, float), mu_q.shape)
    if lam <= 0 or np.any(sigma_q <= 0):
        raise ValueError("scales must be positive")
    sigma_p = np.full_like(mu_q, np.sqrt(lam))
    return _kl_diag(mu_q, sigma_q, mu_p, sigma_p)


def _kl_diag(mu_q: Array, sigma_q: Array, mu_p: Array, sigma_p: Array) -> float:
    return float(
        np.sum(np.log(sigma_p / sigma_q) + (sigma_q**2 + (mu_q - mu_p) ** 2) / (2 * sigma_p**2) - 0.5)
    )


def kl_chain_rule_check(q_c, q_y, p_c, p_y) -> float:
    """Residual of KL(q_c q_y || p_c p_y) = KL(q_c||p_c) + KL(q_y||p_y).

    Each argument is a (mu, sigma) pair of 1-D arrays for a diagonal Gaussian.
    """
    pairs = [tuple(np.atleast_1d(np.asarray(a, float)) for a in g) for g in (q_c, q_y, p_c, p_y)]
    (mqc, sqc), (mqy, sqy), (mpc, spc), (mpy, spy) = pairs
    joint = _kl_diag(
        np.concatenate([mqc, mqy]), np.concatenate([sqc, sqy]),
        np.concatenate([mpc, mpy]), np.concatenate([spc, spy]),
    )
    return abs(joint - _kl_diag(mqc, sqc, mpc, spc) - _kl_diag(mqy, sqy, mpy, spy))


def mmd(Z_c, Z_y) -> Tensor:
    """Linear-kernel MMD^2; equals the squared norm of the batch-mean difference."""
    Z_c, Z_y = Tensor._lift(Z_c), Tensor._lift(Z_y)
    if Z_c.value.ndim != 2 or Z_y.value.ndim != 2 or Z_c.shape[0] != Z_y.shape[0]:
        raise ValueError(f"batches must be 2-D with equal size, got {Z_c.shape} and {Z_y.shape}")
    diff = Z_c.mean(axis=0) - Z_y.mean(axis=0)
    return diff.square().sum()


def hsic(Z_c, Z_y) -> Tensor:
    """Linear-kernel HSIC: (1/m^2) trace(K_c H K_y H) with H = I - (1/m) 1 1^T."""
    Z_c, Z_y = Tensor._lift(Z_c), Tensor._lift(Z_y)
    m = Z_c.shape[0]
    if Z_y.shape[0] != m:
        raise ValueError(f"batch sizes differ: {m} vs {Z_y.shape[0]}")
    if m < 2:
        raise ValueError(f"hsic requires batch size >= 2, got {m}")
    H = np.eye(m) - np.full((m, m), 1.0 / m)
    A = (Z_c @ Z_c.T) @ H
    B = (Z_y @ Z_y.T) @ H
    return (A * B.T).sum() / (m * m)


def total_objective(
    l_r_nll,
    l_y_total,
    l_c,
    *,
    disentangle: str = "none",
    gamma_d: float = 1.0,
    Z_c=None,
    Z_y=None,
    assignments: Array = None,
) -> LossReport:
    """total (minimized) = L_r_nll - L_y_total - L_c + gamma_d * D."""
    if disentangle not in ("none", "mmd", "hsic"):
        raise ValueError(f"unknown disentangle mode {disentangle!r}")
    if gamma_d < 0:
        raise ValueError(f"gamma_d must be non-negative, got {gamma_d}")
    l_r_nll, l_y_total, l_c = map(Tensor._lift, (l_r_nll, l_y_total, l_c))
    if disentangle == "none":
        D = Tensor(0.0)
    else:
        if Z_c is None or Z_y is None:
            raise ValueError(f"disentangle={disentangle} requires Z_c and Z_y batches")
        D = mmd(Z_c, Z_y) if disentangle == "mmd" else hsic(Z_c, Z_y)
    total = l_r_nll - l_y_total - l_c + D * gamma_d
    return LossReport(
        L_r=l_r_nll.item(),
        L_y_total=l_y_total.item(),
        L_c=l_c.item(),
        disentangle_term=D.item(),
        total=total,
        assignments=assignments,
    )
