"""Dense-layer plumbing shared by the codec and the NSM block.

Parameters live in flat ``dict[str, ndarray]`` containers keyed by dotted
names; weights are stored (fan_in, fan_out) so a layer is ``x @ W + b``.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteActivation

Params = dict


def init_dense(rng: np.random.Generator, params: Params, name: str, fan_in: int, fan_out: int) -> None:
    params[f"{name}.W"] = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
    params[f"{name}.b"] = np.zeros(fan_out)


def relu(x):
    return np.maximum(x, 0.0)


def mlp_forward(params: Params, prefix: str, x: np.ndarray, n_layers: int):
    """Chain of affine maps with ReLU between them and a linear last layer."""
    cache = [x]
    h = x
    for n in range(1, n_layers + 1):
        pre = h @ params[f"{prefix}{n}.W"] + params[f"{prefix}{n}.b"]
        h = relu(pre) if n < n_layers else pre
        cache.append(pre)
    return h, cache


def mlp_backward(params: Params, prefix: str, cache, dout: np.ndarray, grads: Params, n_layers: int,
                 need_input_grad: bool = True):
    d = dout
    for n in range(n_layers, 0, -1):
        pre = cache[n]
        if n < n_layers:
            d = d * (pre > 0)
        inp = cache[n - 1] if n == 1 else relu(cache[n - 1])
        inp2 = inp.reshape(-1, inp.shape[-1])
        d2 = d.reshape(-1, d.shape[-1])
        _accumulate(grads, f"{prefix}{n}.W", inp2.T @ d2)
        _accumulate(grads, f"{prefix}{n}.b", d2.sum(axis=0))
        if n > 1 or need_input_grad:
            d = d @ params[f"{prefix}{n}.W"].T
    return d if need_input_grad else None


def _accumulate(grads: Params, key: str, value: np.ndarray) -> None:
    if key in grads:
        grads[key] = grads[key] + value
    else:
        grads[key] = value


def check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteActivation(f"non-finite values in {name}")


def flatten_params(params: Params, keys=None) -> np.ndarray:
    keys = sorted(params) if keys is None else keys
    return np.concatenate([np.ravel(params[k]) for k in keys]) if keys else np.zeros(0)


def unflatten_params(vector: np.ndarray, like: Params, keys=None) -> Params:
    keys = sorted(like) if keys is None else keys
    out, pos = {}, 0
    for k in keys:
        n = like[k].size
        out[k] = vector[pos:pos + n].reshape(like[k].shape).copy()
        pos += n
    return out
