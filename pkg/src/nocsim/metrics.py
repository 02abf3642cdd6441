"""Feature-space geometry and signal-quality metrics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateFeature, LengthMismatch, RankDeficient, ShapeMismatch

PSNR_CAP_DB = 120.0
MSE_FLOOR = 1e-12


@dataclass(frozen=True)
class MetricsConfig:
    subspace_rank: int = 4
    projection_threshold: float = 0.2
    psnr_max_value: float = 1.0

    def __post_init__(self):
        if self.subspace_rank < 1 or not self.projection_threshold > 0 or not self.psnr_max_value > 0:
            raise ConfigError("need subspace_rank >= 1, projection_threshold > 0, psnr_max_value > 0")


@dataclass(frozen=True)
class SubspaceEstimate:
    user_index: int
    basis: np.ndarray  # (r, D), orthonormal rows

    @property
    def rank(self) -> int:
        return self.basis.shape[0]


def _unit_rows(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise DegenerateFeature("zero feature vector")
    return x / n


def cosine_matrix(samples) -> np.ndarray:
    """Mean pairwise cosine similarity between users.

    ``samples`` is (N, S, D): S paired samples per user. Entry (i, j) is the
    mean over s of cos(samples[i, s], samples[j, s]).
    """
    z = np.asarray(samples, dtype=float)
    if z.ndim == 2:
        z = z[:, None, :]
    if z.shape[1] < 1:
        raise ValueError("need at least one sample per user")
    u = _unit_rows(z)
    N = z.shape[0]
    out = np.eye(N)
    for i, j in itertools.combinations(range(N), 2):
        out[i, j] = out[j, i] = float(np.mean(np.sum(u[i] * u[j], axis=-1)))
    return out


def estimate_subspace(samples, rank: int, user_index: int = 1, tol: float = 1e-10) -> SubspaceEstimate:
    """Top-``rank`` right singular vectors of the (S, D) sample matrix, each
    signed so its largest-magnitude entry is positive."""
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or X.shape[0] < rank:
        raise RankDeficient(f"need at least {rank} samples, got {X.shape[0] if X.ndim == 2 else X.shape}")
    _, sv, vt = np.linalg.svd(X, full_matrices=False)
    if sv.size < rank or sv[rank - 1] <= tol * max(sv[0], 1e-300):
        raise RankDeficient(f"sample matrix rank below {rank}")
    basis = vt[:rank].copy()
    for r in range(rank):
        if basis[r, np.argmax(np.abs(basis[r]))] < 0:
            basis[r] = -basis[r]
    return SubspaceEstimate(user_index, basis)


def projection_power(z, sub: SubspaceEstimate) -> np.ndarray | float:
    """Squared norm of the orthogonal projection of ``z`` (or each row of it) onto the basis span."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != sub.basis.shape[1]:
        raise ShapeMismatch(f"feature dim {z.shape[-1]} != subspace dim {sub.basis.shape[1]}")
    coef = z @ sub.basis.T
    p = np.sum(coef * coef, axis=-1)
    return float(p) if np.ndim(p) == 0 else p


def cross_projection_matrix(samples, rank: int = 4) -> np.ndarray:
    """Entry (i, j): mean projection power of user i's unit-normalized samples
    onto user j's rank-``rank`` subspace."""
    z = np.asarray(samples, dtype=float)
    subs = [estimate_subspace(z[j], rank, j + 1) for j in range(z.shape[0])]
    units = [_unit_rows(z[i]) for i in range(z.shape[0])]
    return np.array([[float(np.mean(projection_power(units[i], subs[j]))) for j in range(len(subs))]
                     for i in range(len(units))])


def mse(original, reconstruction) -> float:
    a, b = np.asarray(original, dtype=float), np.asarray(reconstruction, dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(original, reconstruction, max_value: float = 1.0) -> float:
    m = mse(original, reconstruction)
    if m < MSE_FLOOR:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(max_value ** 2 / m))


def psnr_from_mse(m: float, max_value: float = 1.0) -> float:
    if m < MSE_FLOOR:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(max_value ** 2 / m))


def ber(sent, received) -> float:
    a, b = np.asarray(sent), np.asarray(received)
    if a.shape != b.shape:
        raise LengthMismatch(f"bit streams differ in length: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise LengthMismatch("empty bit stream")
    return float(np.count_nonzero(a != b) / a.size)
