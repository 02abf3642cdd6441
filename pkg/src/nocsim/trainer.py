"""Joint end-to-end training over the simulated interference channel, plus
evaluation and codeword-mismatch probes."""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import channel as chan
from .codebook import Codebook
from .errors import ConfigError, DivergenceDetected
from .losses import LossBreakdown, LossWeights, combine
from .metrics import cosine_matrix, psnr
from .model import ModelDims, ModelParameters, backward_batch, forward_batch, init_model
from .semcodec import synth_dataset

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")
SCHEDULES = ("constant", "cosine")


@dataclass
class TrainConfig:
    codebook: Codebook
    num_users: int = 2
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 32
    steps_per_epoch: int = 20
    snr_range_db: tuple = (0.0, 15.0)
    channel: object = "awgn"
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    dims: ModelDims | None = None
    optimizer: str = "adam"
    dataset_size: int = 2048
    power: float = 1.0
    noiseless: bool = False
    lr_schedule: str = "constant"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.steps_per_epoch < 1 or self.dataset_size < 1:
            raise ConfigError("epochs, batch_size, steps_per_epoch and dataset_size must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.lr_schedule not in SCHEDULES:
            raise ConfigError(f"lr_schedule must be one of {SCHEDULES}")
        if not 1 <= self.num_users <= self.codebook.num_users:
            raise ConfigError(f"num_users={self.num_users} must satisfy 1 <= N <= codebook K={self.codebook.num_users}")
        lo, hi = self.snr_range_db
        if lo > hi:
            raise ConfigError("snr_range_db must be [lo, hi] with lo <= hi")
        self.channel = chan.ChannelKind.parse(self.channel)
        if self.dims is None:
            self.dims = ModelDims(code_length=self.codebook.length)
        if self.dims.code_length != self.codebook.length:
            raise ConfigError(f"model code_length {self.dims.code_length} != codebook length {self.codebook.length}")


@dataclass
class TrainReport:
    trace: list
    angles: list
    cosines: list
    eval_mse: list
    seeds: dict
    wall_clock: float
    steps: int

    def as_dict(self, timing: bool = False):
        d = {
            "trace": [t.as_dict() for t in self.trace],
            "feature_angles_deg": self.angles,
            "feature_cosines": self.cosines,
            "eval_mse": self.eval_mse,
            "seeds": self.seeds,
            "steps": self.steps,
        }
        if timing:
            d["wall_clock_s"] = self.wall_clock
        return d


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grad):
        return params - self.lr * grad


def make_optimizer(name: str, lr: float):
    return Adam(lr) if name == "adam" else SGD(lr)


def learning_rate_at(cfg: TrainConfig, step: int, total: int) -> float:
    """Constant, or cosine decay from the base rate towards zero over ``total`` steps."""
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    return 0.5 * cfg.learning_rate * (1.0 + math.cos(math.pi * step / total))


def _streams(seed: int):
    names = ("init", "data", "sample", "snr", "channel", "noise")
    return dict(zip(names, np.random.SeedSequence(seed).spawn(len(names))))


def draw_step(rng_channel, rng_noise, kind, num_users, batch, symbols, snr_db, power, noiseless=False):
    ch = chan.draw_channel(kind, num_users, rng_channel)
    sigma2 = 0.0 if noiseless else chan.snr_to_sigma2(snr_db, power)
    noise = chan.complex_gaussian(rng_noise, (num_users, batch, symbols), sigma2) if sigma2 > 0 else None
    return ch, noise


def train(cfg: TrainConfig, model: ModelParameters | None = None, callback=None):
    """Returns (trained parameters, TrainReport). Deterministic given ``cfg.seed``."""
    t0 = time.perf_counter()
    streams = _streams(cfg.seed)
    rngs = {k: np.random.default_rng(v) for k, v in streams.items()}
    dims = cfg.dims
    model = model.copy() if model is not None else init_model(dims, streams["init"])
    data = synth_dataset(cfg.dataset_size, streams["data"])
    codes = cfg.codebook.codewords[: cfg.num_users]
    N, B = cfg.num_users, cfg.batch_size
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    vec = model.to_vector()
    trace = []
    step = 0
    total_steps = cfg.epochs * cfg.steps_per_epoch
    for epoch in range(cfg.epochs):
        acc = np.zeros(4)
        for _ in range(cfg.steps_per_epoch):
            imgs = data[rngs["sample"].integers(0, len(data), size=(N, B))]
            snr = float(rngs["snr"].uniform(*cfg.snr_range_db))
            ch, noise = draw_step(rngs["channel"], rngs["noise"], cfg.channel, N, B, dims.complex_symbols,
                                  snr, cfg.power, cfg.noiseless)
            try:
                res = forward_batch(model, imgs, codes, snr, ch, noise, cfg.weights, power=cfg.power)
                finite = math.isfinite(res.loss.total)
            except FloatingPointError:
                finite = False
            if not finite:
                report = TrainReport(trace, [], [], [], _seed_record(cfg), time.perf_counter() - t0, step)
                raise DivergenceDetected(f"non-finite loss at epoch {epoch + 1}, step {step + 1}", report)
            g = backward_batch(model, res).to_vector()
            opt.lr = learning_rate_at(cfg, step, total_steps)
            vec = opt.step(vec, g)
            model = model.from_vector(vec)
            l = res.loss
            acc += (l.recon, l.fair, l.orth, l.total)
            step += 1
        mean = acc / cfg.steps_per_epoch
        trace.append(LossBreakdown(*map(float, mean)))
        log.info("epoch %d/%d total=%.5f recon=%.5f orth=%.4f", epoch + 1, cfg.epochs, mean[3], mean[0], mean[2])
        if callback is not None:
            callback(epoch, trace[-1], model)

    probe = evaluate(model, cfg.codebook, [float(np.mean(cfg.snr_range_db))], cfg.channel,
                     num_batches=4, seed=cfg.seed + 1, num_users=N, batch_size=B, power=cfg.power)
    point = probe["per_snr"][0]
    report = TrainReport(trace, probe["angles_deg"], probe["cosines"], point["mse"], _seed_record(cfg),
                         time.perf_counter() - t0, step)
    return model, report


def _seed_record(cfg: TrainConfig) -> dict:
    return {"train": cfg.seed, "eval": cfg.seed + 1}


def collect(model: ModelParameters, codebook: Codebook, snr_db: float, channel, num_batches: int, seed,
            num_users: int | None = None, batch_size: int = 32, rx_codewords=None, power: float = 1.0,
            dataset_size: int = 1024):
    """Run ``num_batches`` evaluation batches; returns the list of BatchResults."""
    N = num_users or codebook.num_users
    streams = _streams(seed)
    rngs = {k: np.random.default_rng(v) for k, v in streams.items()}
    data = synth_dataset(dataset_size, streams["data"])
    codes = codebook.codewords[:N]
    out = []
    for _ in range(num_batches):
        imgs = data[rngs["sample"].integers(0, len(data), size=(N, batch_size))]
        ch, noise = draw_step(rngs["channel"], rngs["noise"], channel, N, batch_size,
                              model.dims.complex_symbols, snr_db, power)
        out.append(forward_batch(model, imgs, codes, snr_db, ch, noise, rx_codewords=rx_codewords,
                                 power=power, keep_cache=False))
    return out


def evaluate(model: ModelParameters, codebook: Codebook, snr_grid, channel="awgn", num_batches: int = 8,
             seed: int = 0, num_users: int | None = None, batch_size: int = 32, power: float = 1.0) -> dict:
    """Per-SNR per-user MSE/PSNR plus feature geometry; never mutates ``model``."""
    N = num_users or codebook.num_users
    per_snr = []
    feats = []
    for snr in snr_grid:
        results = collect(model, codebook, float(snr), channel, num_batches, seed, N, batch_size, power=power)
        s = np.concatenate([r.images for r in results], axis=1)
        rec = np.clip(np.concatenate([r.recon for r in results], axis=1), 0.0, 1.0)
        mse = [float(np.mean((s[i] - rec[i]) ** 2)) for i in range(N)]
        per_snr.append({
            "snr_db": float(snr),
            "mse": mse,
            "psnr_db": [psnr(s[i], rec[i]) for i in range(N)],
            "orth_loss": float(np.mean([r.loss.orth for r in results])),
        })
        feats.append(np.concatenate([r.features for r in results], axis=1))
    feats = np.concatenate(feats, axis=1)
    cos = cosine_matrix(feats) if N >= 2 else np.ones((1, 1))
    ang = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    np.fill_diagonal(ang, 0.0)
    return {
        "num_users": N,
        "channel": str(chan.ChannelKind.parse(channel)),
        "seed": seed,
        "per_snr": per_snr,
        "cosines": cos.tolist(),
        "angles_deg": ang.tolist(),
        "mean_abs_cosine": _mean_offdiag_abs(cos),
    }


def _mean_offdiag_abs(m: np.ndarray) -> float:
    n = m.shape[0]
    if n < 2:
        return 0.0
    return float(np.mean([abs(m[i, j]) for i, j in itertools.combinations(range(n), 2)]))


def mismatch_eval(model: ModelParameters, codebook: Codebook, i: int, j: int, snr_db: float, seed: int = 0,
                  num_users: int | None = None, num_batches: int = 8, batch_size: int = 32, channel="awgn",
                  power: float = 1.0) -> dict:
    """All users transmit with their own codewords; receiver ``i`` (1-based)
    decodes with codeword ``j``. Reports user i's MSE/PSNR."""
    N = num_users or codebook.num_users
    if not (1 <= i <= N and 1 <= j <= N):
        raise ValueError(f"user indices must lie in 1..{N}")
    rx = codebook.codewords[:N].copy()
    rx[i - 1] = codebook.codewords[j - 1]
    results = collect(model, codebook, snr_db, channel, num_batches, seed, N, batch_size, rx_codewords=rx,
                      power=power)
    s = np.concatenate([r.images[i - 1] for r in results])
    rec = np.clip(np.concatenate([r.recon[i - 1] for r in results]), 0.0, 1.0)
    return {"tx_user": i, "rx_codeword": j, "snr_db": float(snr_db),
            "mse": float(np.mean((s - rec) ** 2)), "psnr_db": psnr(s, rec)}


def mismatch_grid(model, codebook, snr_db, seed=0, num_users=None, **kw) -> np.ndarray:
    N = num_users or codebook.num_users
    grid = np.zeros((N, N))
    for i in range(1, N + 1):
        for j in range(1, N + 1):
            grid[i - 1, j - 1] = mismatch_eval(model, codebook, i, j, snr_db, seed, N, **kw)["psnr_db"]
    return grid


def config_dict(cfg: TrainConfig) -> dict:
    d = {k: v for k, v in asdict(cfg).items() if k not in ("codebook", "dims", "weights", "channel")}
    d["channel"] = str(cfg.channel)
    d["weights"] = asdict(cfg.weights)
    d["dims"] = asdict(cfg.dims)
    d["snr_range_db"] = list(cfg.snr_range_db)
    return d
