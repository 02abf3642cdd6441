"""N-user interference channel with flat complex gains and AWGN.

Receiver ``i`` observes ``y_i = sum_j sqrt(P) h_ji z_j + n_i``. Each gain is a
scalar, so ``H_ji = h_ji * I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, LengthMismatch, OddLength

KINDS = ("awgn", "rayleigh", "rician")


@dataclass(frozen=True)
class ChannelKind:
    name: str = "awgn"
    k_factor: float = 0.0

    def __post_init__(self):
        if self.name not in KINDS:
            raise ConfigError(f"unknown channel kind {self.name!r}; expected one of {KINDS}")
        if not math.isfinite(self.k_factor) or self.k_factor < 0:
            raise ConfigError("Rician k_factor must be finite and nonnegative")

    @classmethod
    def parse(cls, spec) -> "ChannelKind":
        """Accept a ChannelKind, ``"awgn"``, ``"rayleigh"``, ``"rician:10"`` or a dict."""
        if isinstance(spec, ChannelKind):
            return spec
        if isinstance(spec, dict):
            return cls(spec.get("name", "awgn"), float(spec.get("k_factor", 0.0)))
        name, _, k = str(spec).lower().partition(":")
        return cls(name, float(k) if k else 0.0)

    def __str__(self):
        return f"rician:{self.k_factor:g}" if self.name == "rician" else self.name


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray  # gains[j, i] = h_ji, TX j -> RX i
    kind: ChannelKind

    @property
    def num_users(self) -> int:
        return self.gains.shape[0]


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    power: float = 1.0

    @property
    def sigma2(self) -> float:
        return snr_to_sigma2(self.snr_db, self.power)


def snr_to_sigma2(snr_db: float, power: float = 1.0) -> float:
    if power <= 0:
        raise ValueError("transmit power must be positive")
    return power * 10.0 ** (-snr_db / 10.0)


def complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly symmetric CN(0, variance) samples."""
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_gains(kind, shape, rng: np.random.Generator) -> np.ndarray:
    kind = ChannelKind.parse(kind)
    if kind.name == "awgn":
        return np.ones(shape, dtype=complex)
    if kind.name == "rayleigh":
        return complex_gaussian(rng, shape)
    K = kind.k_factor
    los = math.sqrt(K / (K + 1.0))
    return los + math.sqrt(1.0 / (K + 1.0)) * complex_gaussian(rng, shape)


def draw_channel(kind, num_users: int, rng_seed=None) -> ChannelRealization:
    """i.i.d. gains for every TX->RX pair, unit second moment for fading kinds."""
    if num_users < 1:
        raise ValueError("num_users must be >= 1")
    kind = ChannelKind.parse(kind)
    rng = np.random.default_rng(rng_seed)
    return ChannelRealization(draw_gains(kind, (num_users, num_users), rng), kind)


def transmit(features, ch: ChannelRealization, noise: NoiseSpec, rng_seed=None) -> np.ndarray:
    """Superpose every user's complex features at every receiver and add noise.

    ``features`` has shape (N, ..., M_t); the result has the same shape, with
    row ``i`` holding what receiver ``i`` sees.
    """
    if isinstance(features, (list, tuple)):
        lengths = {np.shape(z)[-1] for z in features}
        if len(lengths) > 1:
            raise LengthMismatch(f"user feature lengths differ: {sorted(lengths)}")
        features = np.stack([np.asarray(z, dtype=complex) for z in features])
    z = np.asarray(features, dtype=complex)
    if z.shape[0] != ch.num_users:
        raise LengthMismatch(f"{z.shape[0]} user signals for a {ch.num_users}-user channel")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    y = math.sqrt(noise.power) * np.einsum("ji,j...->i...", ch.gains, z)
    sigma2 = noise.sigma2
    if sigma2 > 0:
        y = y + complex_gaussian(rng, y.shape, sigma2)
    return y


def transmit_backward(grad_y: np.ndarray, ch: ChannelRealization, power: float = 1.0) -> np.ndarray:
    """Adjoint of the noiseless superposition.

    With complex gradients encoded as dL/dRe + i dL/dIm, the gradient reaching
    user ``j`` is sum_i sqrt(P) conj(h_ji) grad_y_i.
    """
    return math.sqrt(power) * np.einsum("ji,i...->j...", np.conj(ch.gains), grad_y)


def pack_complex(x) -> np.ndarray:
    """Pair consecutive reals along the last axis as I/Q: [a, b, c, d] -> [a+bi, c+di]."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2:
        raise OddLength(f"cannot pack odd length {x.shape[-1]} into complex symbols")
    return x[..., 0::2] + 1j * x[..., 1::2]


def unpack_complex(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out
