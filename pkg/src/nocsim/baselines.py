"""Classical multiple-access references over the same AWGN channel:
Walsh-code CDMA and two-user power-domain NOMA with SIC. Both assume perfect
CSI and coherent equalization, so only the real (in-phase) branch matters.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from . import channel as chan
from .errors import ConfigError, LengthMismatch, TooManyUsers
from .metrics import ber

CSV_COLUMNS = ("scheme", "users", "user", "snr_db", "bits", "errors", "ber", "symbols_per_bit")


def bpsk_map(bits) -> np.ndarray:
    """0 -> +1, 1 -> -1"""
    return 1.0 - 2.0 * np.asarray(bits, dtype=float)


def bpsk_decide(stat) -> np.ndarray:
    # ties (stat == 0) resolve to +1, i.e. bit 0
    return (np.asarray(stat) < 0).astype(np.int8)


def bpsk_awgn_ber_theory(snr_db: float) -> float:
    """Q(sqrt(2 gamma)) = erfc(sqrt(gamma)) / 2 for BPSK at Eb/N0 = gamma."""
    if snr_db == -math.inf:
        return 0.5
    return float(0.5 * erfc(math.sqrt(10.0 ** (snr_db / 10.0))))


def _awgn(rng, x: np.ndarray, sigma2: float) -> np.ndarray:
    """Pass a real baseband signal through a one-user AWGN link of the channel module."""
    ch = chan.ChannelRealization(np.ones((1, 1), dtype=complex), chan.ChannelKind("awgn"))
    if sigma2 == 0:
        return x.astype(complex)
    snr_db = -10.0 * math.log10(sigma2)
    return chan.transmit(x[None].astype(complex), ch, chan.NoiseSpec(snr_db, 1.0), rng)[0]


@dataclass
class RoundTrip:
    decoded: np.ndarray
    ber: list
    errors: list
    symbols_per_bit: float
    transmitted_symbols: int


def cdma_roundtrip(bitstreams, walsh, snr_db: float, seed=None, rows=None) -> RoundTrip:
    """BPSK + Walsh spreading for K users sharing one AWGN receiver.

    ``snr_db`` is Eb/N0 per user: each chip has unit energy, so a bit carries
    energy N (the spreading length) and the complex noise variance per chip is
    N0 = N / 10^(snr/10).
    """
    bits = np.atleast_2d(np.asarray(bitstreams, dtype=np.int8))
    W = np.asarray(walsh, dtype=float)
    K, nbits = bits.shape
    N = W.shape[0]
    if nbits == 0:
        raise LengthMismatch("empty bit streams")
    if K > N:
        raise TooManyUsers(f"{K} users but only {N} Walsh codes")
    rows = list(range(K)) if rows is None else list(rows)
    codes = W[rows]
    chips = np.einsum("kb,kn->bn", bpsk_map(bits), codes).ravel()
    n0 = 0.0 if snr_db == math.inf else N * 10.0 ** (-snr_db / 10.0)
    rx = _awgn(np.random.default_rng(seed), chips, n0).real.reshape(nbits, N)
    stat = codes @ rx.T  # (K, nbits); noiseless value is +/-N
    decoded = bpsk_decide(stat)
    errs = [int(np.count_nonzero(decoded[k] != bits[k])) for k in range(K)]
    return RoundTrip(decoded, [ber(bits[k], decoded[k]) for k in range(K)], errs, float(N), chips.size)


def cdma_despread(bitstreams, walsh, rows=None) -> np.ndarray:
    """Noiseless despread statistics, (K, nbits)."""
    bits = np.atleast_2d(np.asarray(bitstreams, dtype=np.int8))
    W = np.asarray(walsh, dtype=float)
    codes = W[list(range(bits.shape[0])) if rows is None else list(rows)]
    chips = np.einsum("kb,kn->bn", bpsk_map(bits), codes)
    return codes @ chips.T


@dataclass(frozen=True)
class NomaConfig:
    alpha: float = 0.8                 # power share of user 1 (far user)
    snr_db: tuple = (20.0, 20.0)       # per-user receiver SNR
    seed: int = 0
    order: str = "power"               # "power": strongest first; "reversed": weakest first

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("NOMA power split alpha must lie in (0, 1)")
        if self.order not in ("power", "reversed"):
            raise ConfigError("order must be 'power' or 'reversed'")
        snr = self.snr_db
        if np.isscalar(snr):
            object.__setattr__(self, "snr_db", (float(snr), float(snr)))


def _sic(y: np.ndarray, amps: np.ndarray, order, upto: int) -> np.ndarray:
    """Decode users in ``order`` with hard-decision cancellation; stop after ``upto``."""
    resid = y.copy()
    for u in order:
        dec = bpsk_decide(resid)
        if u == upto:
            return dec
        resid = resid - amps[u] * bpsk_map(dec)
    raise ValueError("user not in decode order")


def noma_sic_roundtrip(bits1, bits2, cfg: NomaConfig) -> RoundTrip:
    """Superpose sqrt(a) s1 + sqrt(1 - a) s2; each user's receiver runs SIC down to its own signal."""
    b = np.stack([np.asarray(bits1, dtype=np.int8), np.asarray(bits2, dtype=np.int8)])
    if b.shape[1] == 0:
        raise LengthMismatch("empty bit streams")
    amps = np.sqrt([cfg.alpha, 1.0 - cfg.alpha])
    x = amps[0] * bpsk_map(b[0]) + amps[1] * bpsk_map(b[1])
    order = [int(u) for u in np.argsort(-amps, kind="stable")]
    if cfg.order == "reversed":
        order = order[::-1]
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    decoded = np.empty_like(b)
    for u in range(2):
        snr = cfg.snr_db[u]
        sigma2 = 0.0 if snr == math.inf else 10.0 ** (-snr / 10.0)
        y = _awgn(np.random.default_rng(seeds[u]), x, sigma2).real
        decoded[u] = _sic(y, amps, order, u)
    errs = [int(np.count_nonzero(decoded[u] != b[u])) for u in range(2)]
    return RoundTrip(decoded, [ber(b[u], decoded[u]) for u in range(2)], errs, 1.0, x.size)


def noma_first_stage_ber(bits1, bits2, cfg: NomaConfig) -> float:
    """BER of whichever user the decode order handles first (on that user's own receiver)."""
    rt = noma_sic_roundtrip(bits1, bits2, cfg)
    amps = np.sqrt([cfg.alpha, 1.0 - cfg.alpha])
    first = int(np.argmax(amps)) if cfg.order == "power" else int(np.argmin(amps))
    return rt.ber[first]


def ber_rows(scheme: str, snr_db: float, rt: RoundTrip, nbits: int) -> list:
    users = len(rt.ber)
    return [{"scheme": scheme, "users": users, "user": u + 1, "snr_db": float(snr_db), "bits": int(nbits),
             "errors": rt.errors[u], "ber": rt.ber[u], "symbols_per_bit": rt.symbols_per_bit}
            for u in range(users)]


def write_ber_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
