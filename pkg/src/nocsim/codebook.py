"""Walsh matrices and fixed-angle non-orthogonal codewords.

Codewords start as rows of a Walsh matrix and are perturbed one sign at a
time until every pairwise inner product sits at ``L * cos(theta)`` (rounded to
the nearest value a +/-1 sequence of length ``L`` can realize).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, NonPowerOfTwo, TargetUnreachable


def is_power_of_two(n) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def walsh_matrix(order: int) -> np.ndarray:
    """Sylvester/Hadamard recursion W_2n = [[W, W], [W, -W]], starting at W_1 = [1]."""
    if not is_power_of_two(order):
        raise NonPowerOfTwo(f"Walsh order must be a power of two, got {order!r}")
    w = np.ones((1, 1), dtype=np.int64)
    while w.shape[0] < order:
        w = np.block([[w, w], [w, -w]])
    return w


def round_to_parity(x: float, length: int) -> int:
    """Nearest integer to ``x`` sharing the parity of ``length``.

    Inner products of two +/-1 vectors of length L are always L mod 2.
    """
    p = length % 2
    return int(p + 2 * math.floor((x - p) / 2 + 0.5))


@dataclass(frozen=True)
class NocGenConfig:
    length: int
    num_users: int
    theta_target: float
    iters: int = 100
    tolerance: float = 2.0
    seed: int = 0
    rows: tuple[int, ...] | None = None
    max_restarts: int = 200

    def __post_init__(self):
        if not is_power_of_two(self.length):
            raise NonPowerOfTwo(f"codeword length must be a power of two, got {self.length!r}")
        if not 2 <= self.num_users <= self.length:
            raise ConfigError(f"need 2 <= num_users <= length, got K={self.num_users}, L={self.length}")
        if not 0.0 < self.theta_target <= 90.0:
            raise ConfigError(f"theta_target must lie in (0, 90] degrees, got {self.theta_target}")
        if self.iters < 1 or self.tolerance < 0 or self.max_restarts < 0:
            raise ConfigError("iters >= 1, tolerance >= 0 and max_restarts >= 0 required")
        if self.rows is not None:
            rows = tuple(int(r) for r in self.rows)
            if len(rows) != self.num_users or len(set(rows)) != len(rows):
                raise ConfigError("rows must name num_users distinct Walsh rows")
            if min(rows) < 0 or max(rows) >= self.length:
                raise ConfigError("row index outside the Walsh matrix")
            object.__setattr__(self, "rows", rows)

    @property
    def target_dot(self) -> int:
        return round_to_parity(self.length * math.cos(math.radians(self.theta_target)), self.length)


@dataclass
class Codebook:
    """K signed binary codewords (rows) of length L, built for one target angle."""

    codewords: np.ndarray
    theta_target: float
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.codewords = np.asarray(self.codewords, dtype=np.int64)
        if self.codewords.ndim != 2:
            raise FormatError("codewords must be a K x L array")
        if not np.all(np.abs(self.codewords) == 1):
            raise FormatError("codeword entries must be -1 or +1")

    @property
    def length(self) -> int:
        return self.codewords.shape[1]

    @property
    def num_users(self) -> int:
        return self.codewords.shape[0]

    def codeword(self, user_index: int) -> np.ndarray:
        """Codeword of user ``user_index`` (1-based)."""
        if not 1 <= user_index <= self.num_users:
            raise IndexError(f"user index {user_index} outside 1..{self.num_users}")
        return self.codewords[user_index - 1].copy()

    def gram(self) -> np.ndarray:
        return self.codewords @ self.codewords.T

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return np.array_equal(self.codewords, other.codewords) and self.theta_target == other.theta_target


def codeword_objective(gram: np.ndarray, target: float) -> float:
    """sum_{i != j} (c_i . c_j - target)^2"""
    off = ~np.eye(gram.shape[0], dtype=bool)
    return float(((gram[off] - target) ** 2).sum())


def _climb(C: np.ndarray, target: int, iters: int):
    """Pairwise sweeps over c_i[k], k = 0..L-1, accepting a flip only when
    the total objective strictly drops. Works in place; returns sweeps used."""
    K, L = C.shape
    G = C @ C.T
    sweeps = 0
    for sweeps in range(1, iters + 1):
        flipped = False
        for i, j in itertools.combinations(range(K), 2):
            if G[i, j] == target:
                continue
            for k in range(L):
                col = C[:, k]
                err = G[i] - target
                delta = -2 * col[i] * col
                delta[i] = 0
                # both (i, m) and (m, i) entries move by delta[m]
                change = 2 * float(np.dot(2 * err + delta, delta))
                if change < 0:
                    C[i, k] = -C[i, k]
                    G[i] += delta
                    G[:, i] += delta
                    flipped = True
        if not flipped:
            break
    return sweeps


def generate_noc(cfg: NocGenConfig) -> Codebook:
    """Fixed-angle codebook by sign-flip hill climbing from Walsh rows.

    The first attempt starts from rows ``cfg.rows`` (default 1..K, skipping
    the all-ones row). When a climb stalls outside tolerance, later attempts
    restart from Walsh rows drawn with ``cfg.seed``. Raises
    :class:`TargetUnreachable` carrying the best book if no attempt lands.
    """
    W = walsh_matrix(cfg.length)
    target = cfg.target_dot
    rng = np.random.default_rng(cfg.seed)
    rows = cfg.rows if cfg.rows is not None else tuple(range(1, cfg.num_users + 1))
    best = None
    total_sweeps = 0
    for attempt in range(cfg.max_restarts + 1):
        if attempt > 0:
            rows = tuple(sorted(int(r) for r in rng.choice(np.arange(1, cfg.length), cfg.num_users, replace=False)))
        C = W[list(rows)].copy()
        total_sweeps += _climb(C, target, cfg.iters)
        G = C @ C.T
        off = G[~np.eye(cfg.num_users, dtype=bool)]
        max_err = float(np.max(np.abs(off - target)))
        obj = codeword_objective(G, target)
        if best is None or (max_err, obj) < (best[0], best[1]):
            best = (max_err, obj, C, rows, attempt)
        if max_err <= cfg.tolerance:
            break
    max_err, obj, C, rows, attempt = best
    book = Codebook(C, cfg.theta_target, info={
        "target_dot": target, "objective": obj, "max_dot_error": max_err,
        "start_rows": list(rows), "restarts": attempt, "sweeps": total_sweeps,
    })
    if max_err > cfg.tolerance:
        raise TargetUnreachable(
            f"best pairwise dot error {max_err:g} exceeds tolerance {cfg.tolerance:g} "
            f"after {cfg.max_restarts + 1} attempts", best=book, max_error=max_err)
    return book


def pairwise_angles(book) -> np.ndarray:
    """K x K matrix of pairwise codeword angles in degrees (diagonal 0)."""
    C = book.codewords if isinstance(book, Codebook) else np.asarray(book)
    if C.size == 0:
        raise ValueError("empty codebook")
    L = C.shape[1]
    cos = np.clip((C @ C.T) / L, -1.0, 1.0)
    ang = np.degrees(np.arccos(cos))
    np.fill_diagonal(ang, 0.0)
    return ang


def save_codebook(book: Codebook, path) -> None:
    lines = [f"{book.length} {book.num_users} {book.theta_target!r}"]
    lines += [" ".join(str(int(v)) for v in row) for row in book.codewords]
    Path(path).write_text("\n".join(lines) + "\n")


def load_codebook(path) -> Codebook:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty codebook file")
    head = lines[0].split()
    try:
        L, K, theta = int(head[0]), int(head[1]), float(head[2])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: bad header {lines[0]!r}") from exc
    if len(head) != 3 or L < 1 or K < 1:
        raise FormatError(f"{path}: bad header {lines[0]!r}")
    if len(lines) != K + 1:
        raise FormatError(f"{path}: expected {K} codeword rows, found {len(lines) - 1}")
    rows = []
    for n, ln in enumerate(lines[1:], start=2):
        try:
            vals = [int(tok) for tok in ln.split()]
        except ValueError as exc:
            raise FormatError(f"{path}:{n}: non-integer entry") from exc
        if len(vals) != L:
            raise FormatError(f"{path}:{n}: expected {L} entries, found {len(vals)}")
        if any(v not in (-1, 1) for v in vals):
            raise FormatError(f"{path}:{n}: entries must be -1 or +1")
        rows.append(vals)
    return Codebook(np.array(rows, dtype=np.int64), theta)
