"""Two-layer encoder/decoder over flattened 8x8 grayscale images, plus the
synthetic image generator it trains on.

One parameter set serves every user.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateFeature
from .nn import check_finite, init_dense, mlp_backward, mlp_forward

IMAGE_SIDE = 8
IMAGE_DIM = IMAGE_SIDE * IMAGE_SIDE


@dataclass(frozen=True)
class CodecDims:
    image_dim: int = IMAGE_DIM
    hidden: int = 128
    feature_dim: int = 64  # real channel uses; M_t = feature_dim // 2 complex symbols

    def __post_init__(self):
        if self.feature_dim % 2:
            raise ConfigError("feature_dim must be even")
        if min(self.image_dim, self.hidden, self.feature_dim) < 1:
            raise ConfigError("codec dimensions must be positive")


def init_codec(dims: CodecDims, seed) -> dict:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = {}
    init_dense(rng, p, "enc.l1", dims.image_dim, dims.hidden)
    init_dense(rng, p, "enc.l2", dims.hidden, dims.feature_dim)
    init_dense(rng, p, "dec.l1", dims.feature_dim, dims.hidden)
    init_dense(rng, p, "dec.l2", dims.hidden, dims.image_dim)
    return p


def encode(image, params: dict, return_cache: bool = False):
    x, cache = mlp_forward(params, "enc.l", np.asarray(image, dtype=float), 2)
    check_finite("encoder output", x)
    return (x, cache) if return_cache else x


def decode(feature, params: dict, return_cache: bool = False):
    """Unclamped reconstruction; clip to [0, 1] only when reporting metrics."""
    s, cache = mlp_forward(params, "dec.l", np.asarray(feature, dtype=float), 2)
    check_finite("decoder output", s)
    return (s, cache) if return_cache else s


def encode_backward(params, cache, dout, grads):
    mlp_backward(params, "enc.l", cache, dout, grads, 2, need_input_grad=False)


def decode_backward(params, cache, dout, grads):
    return mlp_backward(params, "dec.l", cache, dout, grads, 2)


def power_normalize(x, return_scale: bool = False):
    """Scale each vector (last axis, I/Q pairs) to unit average power per complex symbol."""
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise DegenerateFeature("cannot power-normalize an all-zero feature")
    scale = np.sqrt(x.shape[-1] / 2.0) / norm
    return (x * scale, scale) if return_scale else x * scale


def power_normalize_backward(x, scale, dout):
    # d/dx [x * sqrt(m)/|x|] = sqrt(m)/|x| (I - x x^T / |x|^2)
    x = np.asarray(x, dtype=float)
    sq = np.sum(x * x, axis=-1, keepdims=True)
    return scale * (dout - x * np.sum(x * dout, axis=-1, keepdims=True) / sq)


def _blob(rng):
    yy, xx = np.mgrid[0:IMAGE_SIDE, 0:IMAGE_SIDE]
    cy, cx = rng.uniform(1.5, 5.5, size=2)
    sigma = rng.uniform(0.8, 2.0)
    bg, amp = rng.uniform(0.0, 0.3), rng.uniform(0.6, 1.0)
    return bg + amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))


def _bar(rng):
    img = np.full((IMAGE_SIDE, IMAGE_SIDE), rng.uniform(0.0, 0.3))
    width = int(rng.integers(1, 4))
    pos = int(rng.integers(0, IMAGE_SIDE - width + 1))
    level = rng.uniform(0.6, 1.0)
    if rng.random() < 0.5:
        img[pos:pos + width, :] = level
    else:
        img[:, pos:pos + width] = level
    return img


def _checkerboard(rng):
    cell = int(rng.choice([1, 2, 4]))
    phase = int(rng.integers(0, 2))
    lo, hi = rng.uniform(0.0, 0.3), rng.uniform(0.7, 1.0)
    yy, xx = np.mgrid[0:IMAGE_SIDE, 0:IMAGE_SIDE]
    mask = ((yy // cell + xx // cell + phase) % 2).astype(bool)
    return np.where(mask, hi, lo)


_GENERATORS = (_blob, _bar, _checkerboard)


def synth_dataset(num_samples: int, seed) -> np.ndarray:
    """(num_samples, 64) array of Gaussian blobs, bars and checkerboards in [0, 1]."""
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty((num_samples, IMAGE_DIM))
    for n in range(num_samples):
        gen = _GENERATORS[int(rng.integers(0, len(_GENERATORS)))]
        out[n] = np.clip(gen(rng), 0.0, 1.0).ravel()
    return out
