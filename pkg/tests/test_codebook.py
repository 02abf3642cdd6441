import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nocsim.codebook import (Codebook, NocGenConfig, _climb, codeword_objective, generate_noc, is_power_of_two,
                             load_codebook, pairwise_angles, round_to_parity, save_codebook, walsh_matrix)
from nocsim.errors import ConfigError, FormatError, NonPowerOfTwo, TargetUnreachable


def greedy_flip_oracle(C, target):
    """Independent reference: steepest single-bit-flip descent over every entry
    of every codeword, recomputing the objective from scratch."""
    C = C.copy()
    cur = codeword_objective(C @ C.T, target)
    while True:
        best, arg = cur, None
        for i in range(C.shape[0]):
            for k in range(C.shape[1]):
                C[i, k] *= -1
                v = codeword_objective(C @ C.T, target)
                C[i, k] *= -1
                if v < best:
                    best, arg = v, (i, k)
        if arg is None:
            return C, cur
        C[arg] *= -1
        cur = best


# -- Walsh -------------------------------------------------------------------

def test_walsh_base_cases():
    assert walsh_matrix(1).tolist() == [[1]]
    assert walsh_matrix(2).tolist() == [[1, 1], [1, -1]]


@pytest.mark.parametrize("order", [2 ** k for k in range(0, 9)])
def test_walsh_rows_orthogonal(order):
    W = walsh_matrix(order)
    assert set(np.unique(W)) <= {-1, 1}
    assert np.array_equal(W @ W.T, order * np.eye(order, dtype=np.int64))
    assert np.all(W[0] == 1)


def test_walsh_order4_six_products_zero():
    W = walsh_matrix(4)
    assert [int(W[i] @ W[j]) for i, j in itertools.combinations(range(4), 2)] == [0] * 6


@pytest.mark.parametrize("bad", [0, 3, 6, 100, -4, 2.0])
def test_walsh_rejects_non_power_of_two(bad):
    with pytest.raises(NonPowerOfTwo):
        walsh_matrix(bad)


def test_is_power_of_two():
    assert [n for n in range(1, 70) if is_power_of_two(n)] == [1, 2, 4, 8, 16, 32, 64]


# -- parity rounding -----------------------------------------------------------

def test_round_to_parity_examples():
    assert round_to_parity(128 * math.cos(math.radians(50)), 128) == 82
    assert round_to_parity(128 * math.cos(math.radians(70)), 128) == 44
    assert round_to_parity(4.0, 8) == 4
    assert round_to_parity(3.2, 7) == 3
    assert round_to_parity(2.2, 7) == 3


@given(st.floats(-500, 500), st.integers(1, 256))
def test_round_to_parity_is_nearest_feasible(x, L):
    r = round_to_parity(x, L)
    assert r % 2 == L % 2
    assert abs(r - x) <= 1.0 + 1e-9


# -- generation ----------------------------------------------------------------

def test_l8_k2_sixty_degrees_exact():
    book = generate_noc(NocGenConfig(8, 2, 60.0))
    assert int(book.gram()[0, 1]) == 4


def test_ninety_degrees_returns_walsh_rows_unchanged():
    book = generate_noc(NocGenConfig(128, 3, 90.0))
    W = walsh_matrix(128)
    assert np.array_equal(book.codewords, W[1:4])
    assert book.info["objective"] == 0
    assert np.all(book.gram()[~np.eye(3, dtype=bool)] == 0)


def test_k3_fifty_degrees_matches_descent_oracle():
    cfg = NocGenConfig(128, 3, 50.0, seed=0)
    book = generate_noc(cfg)
    off = book.gram()[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off - 82) <= 2)
    # parity: the three pairwise distances (L - d)/2 must sum to an even number,
    # so three dots of 82 (distances 23) are impossible; best objective is 2 * 2^2
    assert book.info["objective"] == 8
    start = walsh_matrix(128)[list(book.info["start_rows"])]
    _, oracle_obj = greedy_flip_oracle(start, 82)
    assert oracle_obj >= book.info["objective"]
    assert oracle_obj <= 8 + 16  # the oracle also lands within tolerance (one pair at most 2 off)


def test_parity_obstruction_for_any_triple():
    rng = np.random.default_rng(0)
    for _ in range(200):
        C = rng.choice([-1, 1], size=(3, 128))
        d = [(128 - int(C[i] @ C[j])) // 2 for i, j in itertools.combinations(range(3), 2)]
        assert sum(d) % 2 == 0


@pytest.mark.parametrize("K", range(2, 7))
@pytest.mark.parametrize("theta", [50.0, 70.0])
def test_generated_books_within_tolerance(K, theta):
    cfg = NocGenConfig(128, K, theta, seed=3)
    book = generate_noc(cfg)
    assert book.codewords.shape == (K, 128)
    assert np.all(np.abs(book.codewords) == 1)
    G = book.gram()
    assert np.all(np.diag(G) == 128)
    assert np.all(np.abs(G[~np.eye(K, dtype=bool)] - cfg.target_dot) <= 2)


def test_determinism_per_seed():
    a = generate_noc(NocGenConfig(128, 5, 50.0, seed=11))
    b = generate_noc(NocGenConfig(128, 5, 50.0, seed=11))
    assert a == b and a.info == b.info


def test_climb_objective_never_increases():
    W = walsh_matrix(64)
    C = W[[1, 2, 3, 4]].copy()
    target = round_to_parity(64 * math.cos(math.radians(50)), 64)
    history = []
    # replay the climb one sweep at a time and record the objective
    for _ in range(20):
        history.append(codeword_objective(C @ C.T, target))
        _climb(C, target, 1)
    history.append(codeword_objective(C @ C.T, target))
    assert all(b <= a for a, b in zip(history, history[1:]))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.sampled_from([16, 32, 64]), st.floats(30, 90), st.integers(0, 10 ** 6))
def test_climb_monotone_property(K, L, theta, seed):
    rng = np.random.default_rng(seed)
    C = rng.choice([-1, 1], size=(K, L)).astype(np.int64)
    target = round_to_parity(L * math.cos(math.radians(theta)), L)
    before = codeword_objective(C @ C.T, target)
    _climb(C, target, 3)
    assert codeword_objective(C @ C.T, target) <= before
    assert np.all(np.abs(C) == 1)


def test_unreachable_target_reports_best():
    # L=8, K=6 at 10 degrees: dots of 8 would require identical rows, impossible from
    # distinct starts within a tiny restart budget
    cfg = NocGenConfig(8, 6, 10.0, iters=1, tolerance=0.0, max_restarts=0)
    with pytest.raises(TargetUnreachable) as ei:
        generate_noc(cfg)
    assert isinstance(ei.value.best, Codebook)
    assert ei.value.max_error > 0


@pytest.mark.parametrize("kw", [dict(length=100, num_users=2, theta_target=50),
                                dict(length=8, num_users=1, theta_target=50),
                                dict(length=8, num_users=9, theta_target=50),
                                dict(length=8, num_users=2, theta_target=0),
                                dict(length=8, num_users=2, theta_target=91)])
def test_config_validation(kw):
    with pytest.raises((ConfigError, NonPowerOfTwo)):
        NocGenConfig(**kw)


# -- angles and file format ------------------------------------------------------

def test_pairwise_angles_examples():
    W = walsh_matrix(8)
    same = np.stack([W[1], W[1]])
    assert np.allclose(pairwise_angles(same), 0.0)
    ang = pairwise_angles(W[1:4])
    assert np.allclose(ang[~np.eye(3, dtype=bool)], 90.0)
    assert np.all(np.diag(ang) == 0)
    C = np.ones((2, 128), dtype=int)
    C[1, :32] = -1  # dot = 64
    assert pairwise_angles(C)[0, 1] == pytest.approx(60.0, abs=1e-12)


def test_save_load_round_trip(tmp_path):
    book = generate_noc(NocGenConfig(64, 4, 70.0, seed=2))
    p = tmp_path / "book.txt"
    save_codebook(book, p)
    back = load_codebook(p)
    assert back == book
    assert np.array_equal(back.codewords, book.codewords)
    assert p.read_text().splitlines()[0] == "64 4 70.0"


def test_load_truncated_file(tmp_path):
    book = generate_noc(NocGenConfig(16, 3, 60.0))
    p = tmp_path / "b.txt"
    save_codebook(book, p)
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(FormatError):
        load_codebook(p)
    p.write_text("\n".join(lines[:-1] + [lines[-1][:-4]]) + "\n")
    with pytest.raises(FormatError):
        load_codebook(p)


def test_load_rejects_zero_entry(tmp_path):
    p = tmp_path / "b.txt"
    p.write_text("4 2 60.0\n1 1 1 1\n1 0 -1 1\n")
    with pytest.raises(FormatError):
        load_codebook(p)


def test_load_rejects_bad_header(tmp_path):
    p = tmp_path / "b.txt"
    p.write_text("four 2 60\n1 1 1 1\n1 -1 -1 1\n")
    with pytest.raises(FormatError):
        load_codebook(p)


def test_codeword_accessor_is_one_based():
    book = generate_noc(NocGenConfig(16, 3, 60.0))
    assert np.array_equal(book.codeword(1), book.codewords[0])
    assert int(book.codeword(2) @ book.codeword(2)) == 16
    with pytest.raises(IndexError):
        book.codeword(0)
