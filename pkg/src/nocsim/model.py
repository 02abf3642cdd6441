"""End-to-end multi-user pipeline and its analytic gradient.

encode -> TX gate -> power normalize -> pack to complex -> interference
channel -> unpack -> RX gate -> decode, with one codec, one TX block and one
RX block shared by all users.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import channel as chan
from .errors import ConfigError, FormatError, ShapeMismatch
from .losses import LossWeights, combine, fairness_grad, fairness_loss, orth_loss, orth_loss_grad, per_user_mse
from .nsm import NsmDims, init_nsm, nsm_backward, nsm_forward
from .semcodec import (CodecDims, decode, decode_backward, encode, encode_backward, init_codec,
                       power_normalize, power_normalize_backward)

CHECKPOINT_FORMAT = "nocsim-checkpoint"
CHECKPOINT_VERSION = 1
GROUPS = ("codec", "tx", "rx")


@dataclass(frozen=True)
class ModelDims:
    image_dim: int = 64
    hidden: int = 128
    feature_dim: int = 64
    tokens: int = 4
    latent: int = 32
    code_length: int = 128
    depth: int = 10

    def __post_init__(self):
        if self.feature_dim % self.tokens:
            raise ConfigError(f"feature_dim {self.feature_dim} not divisible by tokens {self.tokens}")
        # validates evenness etc.
        self.codec
        self.nsm

    @property
    def channels(self) -> int:
        return self.feature_dim // self.tokens

    @property
    def complex_symbols(self) -> int:
        return self.feature_dim // 2

    @property
    def codec(self) -> CodecDims:
        return CodecDims(self.image_dim, self.hidden, self.feature_dim)

    @property
    def nsm(self) -> NsmDims:
        return NsmDims(self.channels, self.latent, self.code_length, self.depth, self.tokens)


@dataclass
class ModelParameters:
    """Codec (shared encoder/decoder), TX gate block and RX gate block."""

    dims: ModelDims
    codec: dict
    tx: dict
    rx: dict

    def groups(self):
        return {"codec": self.codec, "tx": self.tx, "rx": self.rx}

    def flat_keys(self):
        return [(g, k) for g in GROUPS for k in sorted(getattr(self, g))]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(getattr(self, g)[k]) for g, k in self.flat_keys()])

    def from_vector(self, v: np.ndarray) -> "ModelParameters":
        out = {g: {} for g in GROUPS}
        pos = 0
        for g, k in self.flat_keys():
            ref = getattr(self, g)[k]
            out[g][k] = np.asarray(v[pos:pos + ref.size]).reshape(ref.shape).copy()
            pos += ref.size
        return ModelParameters(self.dims, **out)

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.dims, *({k: v.copy() for k, v in getattr(self, g).items()} for g in GROUPS))

    @property
    def size(self) -> int:
        return sum(a.size for g in GROUPS for a in getattr(self, g).values())


def init_model(dims: ModelDims, seed) -> ModelParameters:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_codec, s_tx, s_rx = ss.spawn(3)
    return ModelParameters(
        dims,
        codec=init_codec(dims.codec, np.random.default_rng(s_codec)),
        tx=init_nsm(dims.nsm, np.random.default_rng(s_tx)),
        rx=init_nsm(dims.nsm, np.random.default_rng(s_rx)),
    )


@dataclass
class UserPipeline:
    """View of the shared parameter blocks as seen by one user."""

    user_index: int
    codeword: np.ndarray
    codec: dict
    tx: dict
    rx: dict


def user_pipelines(model: ModelParameters, codewords) -> list:
    return [UserPipeline(i + 1, np.asarray(c), model.codec, model.tx, model.rx) for i, c in enumerate(codewords)]


@dataclass
class BatchResult:
    images: np.ndarray           # (N, B, 64)
    recon: np.ndarray            # (N, B, 64)
    features: np.ndarray         # (N, B, D) post-TX-gate, pre-normalization
    transmitted: np.ndarray      # (N, B, M_t) complex, unit average power
    received: np.ndarray         # (N, B, M_t) complex
    mses: np.ndarray
    loss: object
    cache: dict = field(default_factory=dict, repr=False)


def forward_batch(model: ModelParameters, images, tx_codewords, snr_db: float,
                  ch: chan.ChannelRealization, noise, weights: LossWeights | None = None,
                  rx_codewords=None, power: float = 1.0, keep_cache: bool = True) -> BatchResult:
    """Run every user's batch through the shared pipeline.

    ``noise`` is the (N, B, M_t) complex noise already drawn for this step
    (or None for a noiseless channel). ``rx_codewords`` defaults to the TX
    codewords; passing others decodes with mismatched identities.
    """
    dims = model.dims
    weights = weights or LossWeights()
    s = np.asarray(images, dtype=float)
    if s.ndim != 3 or s.shape[-1] != dims.image_dim:
        raise ShapeMismatch(f"images must be (N, B, {dims.image_dim}), got {s.shape}")
    N, B, _ = s.shape
    tx_codes = np.asarray(tx_codewords, dtype=float)
    rx_codes = tx_codes if rx_codewords is None else np.asarray(rx_codewords, dtype=float)
    if tx_codes.shape[0] != N or rx_codes.shape[0] != N:
        raise ShapeMismatch(f"{N} users need {N} codewords at TX and RX")
    if ch.num_users != N:
        raise ShapeMismatch(f"channel has {ch.num_users} users, batch has {N}")
    tok, C = dims.tokens, dims.channels

    x, enc_cache = encode(s, model.codec, return_cache=True)
    zg, tx_acts = nsm_forward(x.reshape(N, B, tok, C), tx_codes, snr_db, model.tx)
    feats = zg.reshape(N, B, -1)
    normed, scales = power_normalize(feats, return_scale=True)
    zc = chan.pack_complex(normed)
    y = math.sqrt(power) * np.einsum("ji,j...->i...", ch.gains, zc)
    if noise is not None:
        y = y + noise
    y_real = chan.unpack_complex(y)
    xh, rx_acts = nsm_forward(y_real.reshape(N, B, tok, C), rx_codes, snr_db, model.rx)
    recon, dec_cache = decode(xh.reshape(N, B, -1), model.codec, return_cache=True)

    mses = per_user_mse(s, recon)
    orth = orth_loss(feats) if N >= 2 else 0.0
    loss = combine(mses.mean(), fairness_loss(mses), orth, weights)
    cache = {}
    if keep_cache:
        cache = dict(enc=enc_cache, tx=tx_acts, rx=rx_acts, dec=dec_cache, scales=scales,
                     y_real=y_real, tx_codes=tx_codes, rx_codes=rx_codes, snr_db=snr_db,
                     ch=ch, power=power, weights=weights)
    return BatchResult(s, recon, feats, zc, y, mses, loss, cache)


def backward_batch(model: ModelParameters, res: BatchResult) -> ModelParameters:
    """Gradient of ``res.loss.total`` w.r.t. every parameter (noise and gains held fixed)."""
    c = res.cache
    dims = model.dims
    w = c["weights"]
    N, B, P = res.images.shape
    tok, C = dims.tokens, dims.channels
    grads = {g: {} for g in GROUPS}

    dmse = 1.0 / N + w.lambda_fair * fairness_grad(res.mses)
    dsh = dmse[:, None, None] * 2.0 * (res.recon - res.images) / (B * P)
    dxh = decode_backward(model.codec, c["dec"], dsh, grads["codec"])
    rx_g, dy = nsm_backward(c["rx"].inputs, c["rx_codes"], c["snr_db"], model.rx,
                            dxh.reshape(N, B, tok, C), acts=c["rx"])
    grads["rx"] = rx_g
    gz = chan.transmit_backward(chan.pack_complex(dy.reshape(N, B, -1)), c["ch"], c["power"])
    dz = power_normalize_backward(res.features, c["scales"], chan.unpack_complex(gz))
    if N >= 2:
        dz = dz + w.lambda_orth * orth_loss_grad(res.features)
    tx_g, dx = nsm_backward(c["tx"].inputs, c["tx_codes"], c["snr_db"], model.tx,
                            dz.reshape(N, B, tok, C), acts=c["tx"])
    grads["tx"] = tx_g
    encode_backward(model.codec, c["enc"], dx.reshape(N, B, -1), grads["codec"])
    for g in GROUPS:
        ref = getattr(model, g)
        for k in ref:
            grads[g].setdefault(k, np.zeros_like(ref[k]))
    return ModelParameters(dims, **grads)


def save_checkpoint(model: ModelParameters, path, extra: dict | None = None) -> None:
    """JSON container of named float64 arrays; floats are written with repr so
    a reload is bit-exact."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": asdict(model.dims),
        "extra": extra or {},
        "arrays": {
            g: {k: {"shape": list(v.shape), "data": [float(x) for x in np.ravel(v)]}
                for k, v in sorted(getattr(model, g).items())}
            for g in GROUPS
        },
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")))


def load_checkpoint(path) -> tuple[ModelParameters, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a checkpoint ({exc})") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: unknown checkpoint format {doc.get('format')!r}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    try:
        dims = ModelDims(**doc["dims"])
        groups = {
            g: {k: np.array(a["data"], dtype=np.float64).reshape(a["shape"]) for k, a in doc["arrays"][g].items()}
            for g in GROUPS
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed checkpoint ({exc})") from exc
    return ModelParameters(dims, **groups), doc.get("extra", {})
