import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lossyrand import samplers, zqcore
from lossyrand.samplers import ParameterSet, TrapdoorDecodeError, session_rng


def test_dgauss_density_shape():
    q, B = 17, 3
    dens = [samplers.dgauss_density(x, B, q) for x in range(q)]
    assert int(np.argmax(dens)) == 0
    assert sum(dens) == pytest.approx(1.0, abs=1e-12)
    for x in range(1, q):
        assert dens[x] == pytest.approx(dens[q - x], abs=1e-15)
    assert all(dens[x] == 0 for x in range(q) if abs(zqcore.centered(x, q)) > B)


def test_dgauss_support_b1_q5():
    support, probs = samplers.dgauss_table(1, 5)
    assert support.tolist() == [-1, 0, 1]
    assert probs.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("B,q", [(3, 17), (6, 61), (1, 5)])
def test_dgauss_sampler_fits_density(B, q):
    rng = np.random.default_rng(B * 1000 + q)
    N = 100_000
    draws = samplers.sample_dgauss_vector(N, B, q, rng)
    support, probs = samplers.dgauss_table(B, q)
    observed = np.array([np.sum(draws == s % q) for s in support])
    assert observed.sum() == N
    assert stats.chisquare(observed, probs * N).pvalue > 0.01
    assert 0.5 * np.abs(observed / N - probs).sum() < 0.01


@given(m=st.integers(1, 40), B=st.integers(1, 30), seed=st.integers(0, 2**32))
def test_dgauss_vectors_stay_in_ball(m, B, seed):
    q = 251
    v = samplers.sample_dgauss_vector(m, B, q, np.random.default_rng(seed))
    assert zqcore.within_bound(v, q, bound_sq=B * B * m)
    assert np.max(np.abs(zqcore.centered(v, q))) <= B


def test_uniform_matrix_chi_square():
    q = 17
    M = samplers.sample_uniform_matrix(1000, 100, q, np.random.default_rng(3))
    assert M.shape == (1000, 100)
    counts = np.bincount(M.ravel(), minlength=q)
    assert stats.chisquare(counts).pvalue > 0.01


def test_samplers_are_deterministic_per_seed():
    p = ParameterSet(n=2, m=24, q=251, ell=1, B_L=3, B_V=4, B_P=5)
    a = samplers.gen_trap(p, session_rng(9, 3, 0))[0]
    b = samplers.gen_trap(p, session_rng(9, 3, 0))[0]
    c = samplers.gen_trap(p, session_rng(9, 4, 0))[0]
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    la, wa = samplers.sample_lossy(p, session_rng(1))
    lb, wb = samplers.sample_lossy(p, session_rng(1))
    assert np.array_equal(la, lb) and np.array_equal(wa.F, wb.F)


def test_session_streams_are_independent_by_role():
    a = session_rng(5, 0, 0).integers(0, 2**32, 8)
    b = session_rng(5, 0, 1).integers(0, 2**32, 8)
    assert not np.array_equal(a, b)


def test_gadget_matrix():
    G = samplers.gadget_matrix(2, 17)
    assert G.shape == (10, 2)
    assert G[:5, 0].tolist() == [1, 2, 4, 8, 16] and G[5:, 1].tolist() == [1, 2, 4, 8, 16]
    assert not G[:5, 1].any()


@pytest.mark.parametrize("seed", range(5))
def test_trapdoor_identity(seed):
    p = ParameterSet(n=4, m=80, q=65537, ell=1, B_L=8, B_V=200, B_P=2000)
    A, t = samplers.gen_trap(p, np.random.default_rng(seed))
    assert np.array_equal(zqcore.matmul(t.T(), A, p.q), samplers.gadget_matrix(p.n, p.q))
    assert set(np.unique(t.R)) <= {-1, 0, 1}


def test_gen_trap_needs_room():
    with pytest.raises(ValueError, match="m >= w \\+ n"):
        samplers.gen_trap(ParameterSet(n=5, m=18, q=5, ell=1, B_L=5, B_V=20, B_P=200), np.random.default_rng())


def test_invert_exhaustive_small():
    """Every s in Z_17^2 (so in particular every binary s) with e = 0."""
    p = ParameterSet(n=2, m=16, q=17, ell=1, B_L=3, B_V=4, B_P=5)
    A, t = samplers.gen_trap(p, np.random.default_rng(0))
    for s0 in range(17):
        for s1 in range(17):
            s = np.array([s0, s1])
            got, e = samplers.invert(A, t, zqcore.matvec(A, s, 17), bound=0)
            assert np.array_equal(got, s) and not e.any()


def test_invert_recovers_within_decode_radius():
    p = ParameterSet(n=4, m=80, q=65537, ell=1, B_L=8, B_V=200, B_P=2000)
    rng = np.random.default_rng(11)
    A, t = samplers.gen_trap(p, rng)
    assert t.decode_radius() > p.noise_bound
    assert t.realized_C_T() > 0
    for _ in range(200):
        s = rng.integers(0, p.q, size=p.n)
        e = samplers.sample_dgauss_vector(p.m, p.B_V, p.q, rng)
        got_s, got_e = samplers.invert(A, t, np.mod(zqcore.matvec(A, s, p.q) + e, p.q), bound_sq=p.gen_bound_sq)
        assert np.array_equal(got_s, s) and np.array_equal(got_e, e)


@settings(max_examples=60, deadline=None)
@given(scale=st.floats(0.5, 40.0), seed=st.integers(0, 2**32))
def test_invert_never_returns_unverified_answer(scale, seed):
    """Noise beyond the decode radius yields a failure or a verified pair,
    never a pair that violates the bound."""
    p = ParameterSet(n=4, m=80, q=65537, ell=1, B_L=8, B_V=200, B_P=2000)
    rng = np.random.default_rng(seed)
    A, t = samplers.gen_trap(p, np.random.default_rng(1))
    s = rng.integers(0, 2, size=p.n)
    direction = rng.normal(size=p.m)
    e = np.rint(direction / np.linalg.norm(direction) * scale * t.decode_radius()).astype(np.int64)
    u = np.mod(zqcore.matvec(A, s, p.q) + e, p.q)
    bound = t.decode_radius()
    try:
        got_s, got_e = samplers.invert(A, t, u, bound=bound)
    except TrapdoorDecodeError:
        assert zqcore.norm(e, p.q) > bound * 0.99
        return
    assert zqcore.within_bound(got_e, p.q, bound)
    assert np.array_equal(np.mod(zqcore.matvec(A, got_s, p.q) + got_e, p.q), u)
    if zqcore.norm(e, p.q) <= bound:
        assert np.array_equal(got_s, s)


def test_invert_just_above_margin_flags_failure():
    p = ParameterSet(n=4, m=80, q=65537, ell=1, B_L=8, B_V=200, B_P=2000)
    A, t = samplers.gen_trap(p, np.random.default_rng(2))
    s = np.array([1, 0, 1, 1])
    e = np.zeros(p.m, dtype=np.int64)
    e[0] = math.isqrt(p.gen_bound_sq) + 1
    with pytest.raises(TrapdoorDecodeError):
        samplers.invert(A, t, np.mod(zqcore.matvec(A, s, p.q) + e, p.q), bound_sq=p.gen_bound_sq)


@pytest.mark.parametrize("seed", range(5))
def test_lossy_witness_identity(seed):
    p = ParameterSet(n=8, m=24, q=5, ell=2, B_L=6, B_V=12, B_P=24)
    A, wit = samplers.sample_lossy(p, np.random.default_rng(seed))
    assert np.array_equal(A, np.mod(zqcore.matmul(wit.B, wit.C, p.q) + wit.F, p.q))
    assert np.max(np.abs(zqcore.centered(wit.F, p.q))) <= p.B_L
    assert zqcore.rank_mod(np.mod(A - wit.F, p.q), p.q) <= p.ell


def test_lossy_kernel_vectors_see_only_noise():
    p = ParameterSet(n=8, m=24, q=5, ell=1, B_L=6, B_V=12, B_P=24)
    rng = np.random.default_rng(4)
    A, wit = samplers.sample_lossy(p, rng)
    cube = np.indices((2,) * p.n).reshape(p.n, -1).T
    kernel = [s for s in cube if not zqcore.matvec(wit.C, s, p.q).any()]
    assert kernel
    for s in kernel:
        assert np.array_equal(zqcore.matvec(A, s, p.q), zqcore.matvec(wit.F, s, p.q))


def test_parameter_set_defaults():
    p = ParameterSet(n=2, m=24, q=251, ell=1, B_L=3, B_V=4, B_P=5)
    assert p.k == 8 and p.w == 16
    assert p.gen_bound_sq == 25 * 24
    with pytest.raises(ValueError):
        ParameterSet(n=2, m=24, q=251, ell=1, B_L=3, B_V=4, B_P=5, mode="lenient")
