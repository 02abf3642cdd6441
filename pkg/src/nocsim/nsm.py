"""Codeword-and-SNR gated modulation block.

The block gates its input channel-wise::

    k_0 = FU_0(input)
    a_j = FA_MA_j(c),  b_j = FA_S_j(snr_db)          j = 1..depth
    g_j = k_{j-1} * a_j * b_j,  k_j = FU_j(g_j)
    output = input * sigmoid(k_depth)

The codeword and SNR are the same for every token, so ``a_j`` and ``b_j`` are
computed once as length-M vectors and broadcast over tokens. The last FU maps
M -> C so the gate matches the input width.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigError, ShapeMismatch
from .nn import check_finite, init_dense

FA_LAYERS = 3


@dataclass(frozen=True)
class NsmDims:
    channels: int    # C
    latent: int      # M
    code_length: int  # L
    depth: int       # N_t
    tokens: int      # K

    def __post_init__(self):
        for name in ("channels", "latent", "code_length", "depth", "tokens"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"NSM {name} must be positive")
        if self.channels % 2:
            raise ConfigError("NSM channel width must be even so outputs pack into complex symbols")


def init_nsm(dims: NsmDims, seed) -> dict:
    """Weights ~ N(0, 1/fan_in), biases zero, except the output layer of every
    FA branch, which starts at W = 0, b = 1 so each a_j, b_j begins as an
    all-ones gate. A product of ``depth`` random gates driven by raw SNR in dB
    otherwise scales like snr**depth and saturates the sigmoid.

    FA weights of all ``depth`` layers are stacked along a leading axis
    (``fa_ma.l1.W`` has shape (depth, L, M)); the branches do not depend on
    the feature path, so every layer's a_j / b_j comes out of one batched
    matmul.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    M, C, L, D = dims.latent, dims.channels, dims.code_length, dims.depth
    p = {}
    init_dense(rng, p, "fu0", C, M)
    for j in range(1, D + 1):
        init_dense(rng, p, f"fu{j}", M, C if j == D else M)
    for branch, fan_in in (("fa_ma", L), ("fa_s", 1)):
        for n, (fi, fo) in enumerate([(fan_in, M), (M, M), (M, M)], start=1):
            p[f"{branch}.l{n}.W"] = rng.standard_normal((D, fi, fo)) / np.sqrt(fi)
            p[f"{branch}.l{n}.b"] = np.zeros((D, fo))
        p[f"{branch}.l{FA_LAYERS}.W"][:] = 0.0
        p[f"{branch}.l{FA_LAYERS}.b"][:] = 1.0
    return p


def nsm_depth(params: dict) -> int:
    return params["fa_ma.l1.W"].shape[0]


@dataclass
class NsmActivations:
    """Per-layer intermediates. ``a`` is (depth, M) or (depth, U, M) for a
    stack of U codewords; ``b`` is (depth, M). Both are shared by all tokens."""

    inputs: np.ndarray
    k: list = field(default_factory=list)      # k_0 .. k_depth
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    g: list = field(default_factory=list)
    a_cache: list = field(default_factory=list)
    b_cache: list = field(default_factory=list)
    gate: np.ndarray | None = None


def _check_shapes(x: np.ndarray, codeword: np.ndarray, params: dict):
    C, M = params["fu0.W"].shape
    L = params["fa_ma.l1.W"].shape[1]
    if x.shape[-1] != C:
        raise ShapeMismatch(f"input width {x.shape[-1]} != block width {C}")
    if codeword.ndim == 1 and codeword.shape != (L,):
        raise ShapeMismatch(f"codeword shape {codeword.shape} != ({L},)")
    if codeword.ndim == 2 and (codeword.shape[1] != L or x.ndim < 2 or x.shape[0] != codeword.shape[0]):
        raise ShapeMismatch(f"codeword stack {codeword.shape} does not match input {x.shape}")
    if codeword.ndim not in (1, 2):
        raise ShapeMismatch("codeword must be (L,) or a per-user stack (U, L)")


def _user_broadcast(a: np.ndarray, ndim: int) -> np.ndarray:
    if a.ndim == 1:
        return a
    return a.reshape((a.shape[0],) + (1,) * (ndim - 2) + (a.shape[1],))


def _fa_forward(params, branch, inp):
    """All depth layers of one FA branch at once. ``inp`` is (R, fan_in);
    returns (depth, R, M) and the pre-activation cache."""
    h = inp[None]
    cache = [h]
    for n in range(1, FA_LAYERS + 1):
        pre = h @ params[f"{branch}.l{n}.W"] + params[f"{branch}.l{n}.b"][:, None, :]
        h = np.maximum(pre, 0.0) if n < FA_LAYERS else pre
        cache.append(pre)
    return h, cache


def _fa_backward(params, branch, cache, dout, grads):
    d = dout
    for n in range(FA_LAYERS, 0, -1):
        if n < FA_LAYERS:
            d = d * (cache[n] > 0)
        inp = cache[0] if n == 1 else np.maximum(cache[n - 1], 0.0)
        grads[f"{branch}.l{n}.W"] = np.swapaxes(inp, -1, -2) @ d
        grads[f"{branch}.l{n}.b"] = d.sum(axis=1)
        if n > 1:
            d = d @ np.swapaxes(params[f"{branch}.l{n}.W"], -1, -2)


def nsm_forward(x, codeword, snr_db: float, params: dict):
    """Gate ``x`` by codeword and SNR; returns (output, acts).

    ``x`` is (..., K, C) with one codeword of shape (L,), or (U, ..., K, C)
    with a per-user codeword stack (U, L).
    """
    x = np.asarray(x, dtype=float)
    c = np.asarray(codeword, dtype=float)
    _check_shapes(x, c, params)
    depth = nsm_depth(params)
    acts = NsmActivations(inputs=x)
    a, acts.a_cache = _fa_forward(params, "fa_ma", np.atleast_2d(c))
    b, acts.b_cache = _fa_forward(params, "fa_s", np.array([[float(snr_db)]]))
    acts.a = a[:, 0] if c.ndim == 1 else a
    acts.b = b[:, 0]
    k = x @ params["fu0.W"] + params["fu0.b"]
    acts.k.append(k)
    for j in range(1, depth + 1):
        g = k * (_user_broadcast(acts.a[j - 1], k.ndim) * acts.b[j - 1])
        k = g @ params[f"fu{j}.W"] + params[f"fu{j}.b"]
        acts.g.append(g)
        acts.k.append(k)
    check_finite("NSM gate logits", k)
    gate = expit(k)
    acts.gate = gate
    out = x * gate
    check_finite("NSM output", out)
    return out, acts


def nsm_backward(x, codeword, snr_db, params, upstream, acts: NsmActivations | None = None):
    """Gradients of a scalar loss given dL/d(output); returns (param_grads, dL/dx)."""
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    if acts is None:
        _, acts = nsm_forward(x, codeword, snr_db, params)
    if upstream.shape != x.shape:
        raise ShapeMismatch(f"upstream gradient shape {upstream.shape} != input shape {x.shape}")
    depth = len(acts.g)
    gate = acts.gate
    grads = {}
    dx = upstream * gate
    dk = upstream * x * gate * (1.0 - gate)
    da = np.empty_like(acts.a)
    db = np.empty_like(acts.b)
    for j in range(depth, 0, -1):
        g = acts.g[j - 1]
        g2, dk2 = g.reshape(-1, g.shape[-1]), dk.reshape(-1, dk.shape[-1])
        grads[f"fu{j}.W"] = g2.T @ dk2
        grads[f"fu{j}.b"] = dk2.sum(axis=0)
        dg = dk @ params[f"fu{j}.W"].T
        a, b = acts.a[j - 1], acts.b[j - 1]
        prod = dg * acts.k[j - 1]
        if a.ndim == 1:
            dab = prod.reshape(-1, prod.shape[-1]).sum(axis=0)
        else:
            dab = prod.reshape(prod.shape[0], -1, prod.shape[-1]).sum(axis=1)
        da[j - 1] = dab * b
        db[j - 1] = (dab * a).reshape(-1, a.shape[-1]).sum(axis=0)
        dk = dg * (_user_broadcast(a, dg.ndim) * b)
    _fa_backward(params, "fa_ma", acts.a_cache, da if da.ndim == 3 else da[:, None, :], grads)
    _fa_backward(params, "fa_s", acts.b_cache, db[:, None, :], grads)
    x2, dk2 = x.reshape(-1, x.shape[-1]), dk.reshape(-1, dk.shape[-1])
    grads["fu0.W"] = x2.T @ dk2
    grads["fu0.b"] = dk2.sum(axis=0)
    dx = dx + dk @ params["fu0.W"].T
    return grads, dx
