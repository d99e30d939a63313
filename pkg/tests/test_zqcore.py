import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lossyrand import zqcore

primes = st.sampled_from([2, 3, 5, 17, 251, 65537, 67108859])


@pytest.mark.parametrize("v,q,expected", [(0, 5, 0), (4, 5, -1), (2, 5, 2), (3, 5, -2), (1, 2, 1)])
def test_centered_examples(v, q, expected):
    assert zqcore.centered(v, q) == expected


@given(q=primes, v=st.integers(min_value=-10**9, max_value=10**9))
def test_centered_is_congruent_and_small(q, v):
    c = zqcore.centered(v, q)
    assert (c - v) % q == 0
    assert abs(c) <= (q - 1) // 2 or (q == 2 and c in (0, 1))


def test_norm_examples():
    assert zqcore.norm([0, 0, 0], 5) == 0
    assert zqcore.norm([4, 0, 0], 5) == 1
    assert zqcore.norm([3, 3], 5) == pytest.approx(math.sqrt(8))


@given(q=primes, v=st.lists(st.integers(min_value=0, max_value=10**8), min_size=1, max_size=20))
def test_norm_sq_is_exact_integer(q, v):
    v = [x % q for x in v]
    expected = sum(zqcore.centered(x, q) ** 2 for x in v)
    assert zqcore.norm_sq(v, q) == expected
    assert zqcore.within_bound(v, q, bound_sq=expected)
    assert not zqcore.within_bound(v, q, bound_sq=expected - 1)


def test_binary_rep_examples():
    assert "".join(map(str, zqcore.binary_rep(0, 5))) == "000"
    assert "".join(map(str, zqcore.binary_rep(3, 5))) == "011"
    assert "".join(map(str, zqcore.binary_rep(np.array([1, 2]), 5))) == "001010"


@pytest.mark.parametrize("q", [2, 5, 17, 251])
def test_binary_rep_injective_and_invertible(q):
    reps = {tuple(zqcore.binary_rep(v, q)) for v in range(q)}
    assert len(reps) == q
    vals = np.arange(q)
    assert np.array_equal(zqcore.from_binary_rep(zqcore.binary_rep(vals, q), q), vals)


def test_gf2_dot_examples():
    assert zqcore.gf2_dot([0, 0, 0], [1, 1, 1]) == 0
    assert zqcore.gf2_dot([1, 1, 0], [1, 0, 1]) == 1
    assert zqcore.gf2_dot([1, 1], [1, 1]) == 0
    with pytest.raises(ValueError):
        zqcore.gf2_dot([1, 0], [1, 0, 1])


@given(st.data())
def test_gf2_dot_is_linear(data):
    w = data.draw(st.integers(min_value=1, max_value=64))
    bits = st.lists(st.integers(0, 1), min_size=w, max_size=w)
    d, a, b = (np.array(data.draw(bits), dtype=np.uint8) for _ in range(3))
    assert zqcore.gf2_dot(d, a ^ b) == zqcore.gf2_dot(d, a) ^ zqcore.gf2_dot(d, b)


def test_matvec_examples():
    x = np.array([3, 1, 4])
    assert np.array_equal(zqcore.matvec(np.eye(3, dtype=np.int64), x, 5), x)
    assert np.array_equal(zqcore.matvec(np.zeros((2, 3), dtype=np.int64), x, 5), [0, 0])
    assert np.array_equal(zqcore.matvec(np.array([[2, 3]]), np.array([4, 4]), 5), [0])


@pytest.mark.parametrize("q", [2, 5, 17])
def test_matvec_matches_double_loop(q, rng):
    for _ in range(50):
        A = rng.integers(0, q, size=(4, 4))
        x = rng.integers(0, q, size=4)
        naive = [sum(int(A[i, j]) * int(x[j]) for j in range(4)) % q for i in range(4)]
        assert list(zqcore.matvec(A, x, q)) == naive


def test_matmul_large_modulus_is_exact(rng):
    q = 67108859
    A = rng.integers(0, q, size=(5, 300))
    B = rng.integers(0, q, size=(300, 3))
    naive = [[sum(int(A[i, k]) * int(B[k, j]) for k in range(300)) % q for j in range(3)] for i in range(5)]
    assert zqcore.matmul(A, B, q).tolist() == naive


def test_matvec_dimension_mismatch():
    with pytest.raises(ValueError):
        zqcore.matvec(np.zeros((2, 3), dtype=np.int64), np.zeros(2, dtype=np.int64), 5)


@pytest.mark.parametrize("q", [5, 17, 251])
def test_solve_and_inverse(q, rng):
    for _ in range(20):
        M = rng.integers(0, q, size=(3, 3))
        inv = zqcore.inverse_mod(M, q)
        if zqcore.rank_mod(M, q) < 3:
            assert inv is None
            continue
        assert np.array_equal(zqcore.matmul(M, inv, q), np.eye(3, dtype=np.int64))


def test_is_prime():
    assert [p for p in range(30) if zqcore.is_prime(p)] == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert zqcore.is_prime(65537) and zqcore.is_prime(67108859)
    assert not zqcore.is_prime(2**26)
