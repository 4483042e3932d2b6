from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tracephase import charvar as cv
from tracephase import phase as ph
from tracephase.errors import DimensionError

OFFDIAG = np.array([[0, 1], [1, 0]])


def rotation(t):
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


# ---------------------------------------------------------------- decompose

def test_decompose_identity():
    b = ph.decompose_linear(np.eye(4))
    assert np.array_equal(b.H, np.eye(2)) and np.array_equal(b.K, np.zeros((2, 2)))


@pytest.mark.parametrize("t", [0.3, np.pi / 3, 2.0, -1.1])
def test_decompose_rotation(t):
    b = ph.decompose_linear(rotation(t))
    assert np.allclose(b.H, [[np.exp(1j * t)]], atol=1e-15)
    assert np.allclose(b.K, 0, atol=1e-15)


@pytest.mark.parametrize("lam", [2.0, 0.5, -3.0])
def test_decompose_hyperbolic(lam):
    b = ph.decompose_linear(np.diag([lam, 1 / lam]))
    assert np.allclose(b.H, (lam + 1 / lam) / 2)
    assert np.allclose(b.K, (lam - 1 / lam) / 2)


def test_decompose_odd_dimension():
    with pytest.raises(DimensionError):
        ph.decompose_linear(np.eye(3))
    with pytest.raises(DimensionError):
        ph.decompose_linear(np.ones((2, 4)))


@settings(max_examples=100)
@given(st.integers(1, 3), st.integers(0, 10_000))
def test_decompose_reconstructs(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(2 * n, 2 * n))
    b = ph.decompose_linear(A)
    xi = rng.normal(size=n) + 1j * rng.normal(size=n)
    x = np.concatenate([xi.real, xi.imag])
    y = A @ x
    assert np.max(np.abs(b.H @ xi + b.K @ xi.conj() - (y[:n] + 1j * y[n:]))) <= 1e-12
    assert np.max(np.abs(ph.reconstruct_real(b) - A)) <= 1e-12


def test_symplectic_constraints(rng):
    for n in (1, 2, 3):
        for _ in range(20):
            A = ph.random_symplectic(n, rng)
            assert ph.is_symplectic_matrix(A, 1e-9)
            assert ph.decompose_linear(A).is_symplectic(1e-9)
    # a non-symplectic map fails them
    assert not ph.decompose_linear(np.diag([2.0, 2.0])).is_symplectic()


# ---------------------------------------------------------------- hessian

def test_hessian_identity_is_zero():
    h = ph.hessian_P(ph.LinearBlocks(np.eye(2), np.zeros((2, 2))))
    assert np.max(np.abs(h.matrix)) == 0
    assert h.radical_dim == 4
    assert ph.radical(h).shape == (4, 4)


@pytest.mark.parametrize("t", [np.pi / 3, 1.0, 2.5, -0.7])
def test_hessian_rotation_closed_form(t):
    h = ph.hessian_P(ph.LinearBlocks([[np.exp(1j * t)]], [[0]]))
    assert np.allclose(h.matrix, 0.5 * (np.exp(-1j * t) - 1) * OFFDIAG, atol=1e-15)
    assert h.radical_dim == 0
    assert ph.radical(h).shape == (2, 0)


def test_hessian_rotation_degenerates_at_zero_angle():
    h = ph.hessian_P(ph.LinearBlocks([[1.0]], [[0]]))
    assert h.radical_dim == 2


def test_hessian_symmetry(rng):
    for _ in range(50):
        n = int(rng.integers(1, 4))
        H = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        K = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        M = ph.hessian_P(ph.LinearBlocks(H, K)).matrix
        assert np.max(np.abs(M - M.T)) <= 1e-14 * max(1.0, np.max(np.abs(M)))


def test_factorisation(rng):
    for _ in range(50):
        n = int(rng.integers(1, 4))
        b = ph.LinearBlocks(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)),
                            rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
        direct = ph.graph_jacobian(b).T @ ph.chi_hessian(n) @ ph.graph_jacobian(b)
        assert np.array_equal(ph.hessian_P(b).matrix,
                              ph.chain_rule_hessian(ph.chi_hessian(n), ph.graph_jacobian(b)))
        assert np.allclose(ph.hessian_P(b).matrix, direct, atol=1e-14)


def test_chain_rule_examples(rng):
    Hq = rng.normal(size=(3, 3))
    Hq = Hq + Hq.T
    assert np.array_equal(ph.chain_rule_hessian(Hq, np.eye(3)), Hq)
    assert np.array_equal(ph.chain_rule_hessian([[1]], [[2]]), [[4]])
    with pytest.raises(DimensionError):
        ph.chain_rule_hessian(np.eye(3), np.eye(2))
    with pytest.raises(ValueError):
        ph.chain_rule_hessian([[0, 1], [0, 0]], np.eye(2))


def test_chi_hessian_matches_closed_form():
    C = ph.chi_hessian(1)
    ref = np.array([[0, 0, -1, 2], [0, 0, 0, -1], [-1, 0, 0, 0], [2, -1, 0, 0]]) / 4
    assert np.array_equal(C, ref)


# ---------------------------------------------------------------- radical

def test_radical_matches_kernel_random(rng):
    worst = 0.0
    for _ in range(300):
        n = int(rng.integers(1, 4))
        A = ph.random_symplectic(n, rng)
        ok, ang = ph.radical_matches_kernel(A)
        assert ok, ang
        worst = max(worst, ang)
    assert worst <= 1e-8


@pytest.mark.parametrize("dims", [(0,), (1,), (2,), (0, 1), (1, 1), (2, 1, 0), (2, 2, 2)])
def test_radical_dimension_equals_real_kernel_dimension(rng, dims):
    A = ph.random_symplectic(len(dims), rng, dims)
    h = ph.hessian_P(ph.decompose_linear(A))
    # complex radical dimension equals the real dimension of Ker(A - I)
    assert h.radical_dim == sum(dims)
    assert ph.complexified_kernel(A).shape[1] == sum(dims)


def test_radical_at_fixed_points_of_the_mapping_class():
    for word, kd in (("B^-1 A", 0), ("(B^-1 A)^2", 1)):
        for p in ((-1, 0.5, 0.5), (0.5, -1, -1)):
            M = cv.reduced_map(word, p)
            assert abs(np.linalg.det(M) - 1) < 1e-12
            h = ph.hessian_P(ph.decompose_linear(M))
            assert h.radical_dim == kd == cv.kernel_dim(M)
            ok, ang = ph.radical_matches_kernel(M)
            assert ok


def test_complex_coords_of_real_vectors():
    T = ph.to_complex_coords(1)
    assert np.array_equal(T @ [1, 0], [1, 1])
    assert np.array_equal(T @ [0, 1], [1j, -1j])


# ---------------------------------------------------------------- negativity

@pytest.mark.parametrize("t", [0.4, np.pi / 2, 3.0])
def test_negativity_rotation_closed_form(t):
    b = ph.LinearBlocks([[np.exp(1j * t)]], [[0]])
    h = ph.hessian_P(b)
    eta = np.array([1, 0])  # d/dz
    val = h.form(eta, ph.conjugate_vector(eta))
    assert np.isclose(val.real, 0.5 * (np.cos(t) - 1), atol=1e-15)


def test_negativity_identity_form_vanishes(rng):
    b = ph.LinearBlocks(np.eye(2), np.zeros((2, 2)))
    h = ph.hessian_P(b)
    for _ in range(5):
        eta = rng.normal(size=4) + 1j * rng.normal(size=4)
        assert h.form(eta, ph.conjugate_vector(eta)).real == 0
    rep = ph.negativity_check(h, b, 10, rng)
    assert rep.outside_radical == 0 and rep.max_radical_defect == 0


def test_negativity_random_symplectic(rng):
    for _ in range(200):
        n = int(rng.integers(1, 4))
        b = ph.decompose_linear(ph.random_symplectic(n, rng))
        rep = ph.negativity_check(ph.hessian_P(b), b, 10, rng)
        assert rep.ok, rep
        assert rep.max_radical_defect <= 1e-12
        if rep.outside_radical:
            assert rep.max_re_psi < 0


def test_random_symplectic_kernel_prescription(rng):
    for dims in ((0, 0), (1, 0), (2, 1), (1, 1, 1)):
        A = ph.random_symplectic(len(dims), rng, dims)
        s = np.linalg.svd(A - np.eye(A.shape[0]), compute_uv=False)
        assert np.sum(s < 1e-9 * max(1, s[0])) == sum(dims)
