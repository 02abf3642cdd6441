"""Composite training objective: reconstruction + fairness + cross-user orthogonality."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DegenerateFeature, ShapeMismatch

ZERO_NORM = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_fair: float = 0.01
    lambda_orth: float = 0.01

    def __post_init__(self):
        for v in (self.lambda_fair, self.lambda_orth):
            if not math.isfinite(v) or v < 0:
                raise ConfigError("loss weights must be finite and nonnegative")


@dataclass(frozen=True)
class LossBreakdown:
    recon: float
    fair: float
    orth: float
    total: float

    def as_dict(self):
        return asdict(self)


def per_user_mse(originals, reconstructions) -> np.ndarray:
    s = np.asarray(originals, dtype=float)
    r = np.asarray(reconstructions, dtype=float)
    if s.shape != r.shape:
        raise ShapeMismatch(f"originals {s.shape} vs reconstructions {r.shape}")
    if s.ndim < 2:
        raise ShapeMismatch("expected one image (or image batch) per user along axis 0")
    return ((s - r) ** 2).reshape(s.shape[0], -1).mean(axis=1)


def recon_loss(originals, reconstructions) -> float:
    """Mean over users of per-user pixel MSE."""
    return float(per_user_mse(originals, reconstructions).mean())


def fairness_loss(mses) -> float:
    """Mean absolute deviation of per-user MSEs from their mean."""
    m = np.asarray(mses, dtype=float)
    return float(np.abs(m - m.mean()).mean())


def fairness_grad(mses) -> np.ndarray:
    m = np.asarray(mses, dtype=float)
    n = m.size
    sgn = np.sign(m - m.mean())
    return (sgn - sgn.mean()) / n


def _pair_cosines(z: np.ndarray):
    norms = np.linalg.norm(z, axis=-1)
    if np.any(norms < ZERO_NORM):
        raise DegenerateFeature("zero feature vector in orthogonality loss")
    pairs = list(itertools.combinations(range(z.shape[0]), 2))
    cos = np.stack([np.sum(z[i] * z[j], axis=-1) / (norms[i] * norms[j]) for i, j in pairs])
    return pairs, cos, norms


def orth_loss(features) -> float:
    """Mean over user pairs (then over batch items) of squared cosine similarity.

    ``features`` is (N, D) or (N, B, D): one real transmit vector per user.
    """
    z = np.asarray(features, dtype=float)
    if z.shape[0] < 2:
        raise ValueError("orthogonality loss needs at least two users")
    _, cos, _ = _pair_cosines(z)
    return float(np.mean(cos ** 2))


def orth_loss_grad(features) -> np.ndarray:
    z = np.asarray(features, dtype=float)
    pairs, cos, norms = _pair_cosines(z)
    count = cos.size  # pairs x batch items
    grad = np.zeros_like(z)
    for (i, j), c in zip(pairs, cos):
        c_ = c[..., None]
        ni, nj = norms[i][..., None], norms[j][..., None]
        grad[i] += 2 * c_ * (z[j] / (ni * nj) - c_ * z[i] / ni ** 2) / count
        grad[j] += 2 * c_ * (z[i] / (ni * nj) - c_ * z[j] / nj ** 2) / count
    return grad


def combine(recon: float, fair: float, orth: float, weights: LossWeights) -> LossBreakdown:
    total = recon + weights.lambda_fair * fair + weights.lambda_orth * orth
    return LossBreakdown(float(recon), float(fair), float(orth), float(total))


def total_loss(originals, reconstructions, features, weights: LossWeights) -> LossBreakdown:
    mses = per_user_mse(originals, reconstructions)
    z = np.asarray(features, dtype=float)
    orth = orth_loss(z) if z.shape[0] >= 2 else 0.0
    return combine(mses.mean(), fairness_loss(mses), orth, weights)


def grad_check(fn, point, step: float = 1e-4, probes=None, rng=None, floor: float = 1e-6) -> float:
    """Worst componentwise relative error between ``fn``'s analytic gradient
    and central differences.

    ``fn(p)`` returns ``(loss, grad)``. ``probes`` limits the check to that
    many randomly chosen components. Relative error is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    p = np.array(point, dtype=float)
    _, analytic = fn(p)
    analytic = np.asarray(analytic, dtype=float).ravel()
    idx = np.arange(p.size)
    if probes is not None and probes < p.size:
        rng = np.random.default_rng(rng)
        idx = np.sort(rng.choice(p.size, probes, replace=False))
    worst = 0.0
    for i in idx:
        up, dn = p.copy(), p.copy()
        up.flat[i] += step
        dn.flat[i] -= step
        num = (fn(up)[0] - fn(dn)[0]) / (2 * step)
        a = analytic[i]
        worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
    return worst
