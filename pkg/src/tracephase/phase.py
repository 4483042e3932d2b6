"""Linear algebra of the phase function at a fixed point.

Convention: R^{2n} is identified with C^n by xi_j = x_j + i x_{n+j}, and
the symplectic form is sum_j dx_j ^ dx_{n+j}. A real-linear map A then
splits uniquely as A(xi) = H xi + K conj(xi).

The Hessian of the phase is written in the basis (d/dz, d/dzbar). A real
tangent vector u = (u', u'') has components (u' + i u'', u' - i u'') there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, subspace_angles

from .errors import DimensionError

ALGORITHM_VERSION = "phase-1"

RANK_TOL = 1e-8


@dataclass
class LinearBlocks:
    H: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=complex))
        self.K = np.atleast_2d(np.asarray(self.K, dtype=complex))
        if self.H.shape != self.K.shape or self.H.shape[0] != self.H.shape[1]:
            raise DimensionError(f"blocks of shape {self.H.shape} and {self.K.shape}")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def to_real(self) -> np.ndarray:
        return reconstruct_real(self)

    def symplectic_residuals(self) -> tuple[float, float]:
        """Norms of H^t Hbar - Kbar^t K - I and H^t Kbar - Kbar^t H."""
        H, K = self.H, self.K
        r1 = H.T @ H.conj() - K.conj().T @ K - np.eye(self.n)
        r2 = H.T @ K.conj() - K.conj().T @ H
        return float(np.linalg.norm(r1)), float(np.linalg.norm(r2))

    def is_symplectic(self, tol: float = 1e-10) -> bool:
        return max(self.symplectic_residuals()) <= tol


@dataclass
class PhaseHessian:
    """Complex symmetric form; ``scale`` is the magnitude rank tests compare to.

    A relative cut alone would read roundoff in an exactly vanishing form as
    full rank, so singular values are measured against max(sigma_max, scale)
    where scale comes from the factors the form was built from.
    """

    matrix: np.ndarray
    radical_dim: int
    scale: float = 0.0

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // 2

    def form(self, a, b) -> complex:
        """Psi(a, b) = a^t M b."""
        return complex(np.asarray(a) @ self.matrix @ np.asarray(b))


def decompose_linear(A) -> LinearBlocks:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2:
        raise DimensionError(f"need an even square matrix, got shape {A.shape}")
    n = A.shape[0] // 2
    A11, A12, A21, A22 = A[:n, :n], A[:n, n:], A[n:, :n], A[n:, n:]
    H = 0.5 * ((A11 + A22) + 1j * (A21 - A12))
    K = 0.5 * ((A11 - A22) + 1j * (A21 + A12))
    return LinearBlocks(H, K)


def reconstruct_real(b: LinearBlocks) -> np.ndarray:
    P, M = b.H + b.K, b.H - b.K
    return np.block([[P.real, -M.imag], [P.imag, M.real]])


def chi_hessian(n: int) -> np.ndarray:
    """Hessian of chi at a diagonal point, in (dz1, dz2, dz1bar, dz2bar) blocks."""
    I = np.eye(n)
    Z = np.zeros((n, n))
    C = np.block([[Z, Z, -I, 2 * I],
                  [Z, Z, Z, -I],
                  [-I, Z, Z, Z],
                  [2 * I, -I, Z, Z]])
    return C / 4


def graph_jacobian(b: LinearBlocks) -> np.ndarray:
    """Differential of z -> (z, phi(z)) in complex coordinates, shape (4n, 2n)."""
    n = b.n
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[I, Z], [b.H, b.K], [Z, I], [b.K.conj(), b.H.conj()]])


def _rank(M, tol=RANK_TOL, scale=0.0) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    ref = max(float(s[0]) if s.size else 0.0, scale)
    if ref == 0:
        return 0
    return int(np.sum(s > tol * ref))


def chain_rule_hessian(hess_q, dR) -> np.ndarray:
    """Hess(Q o R) = dR^t Hess(Q) dR at a critical point of Q."""
    hess_q = np.atleast_2d(np.asarray(hess_q))
    dR = np.atleast_2d(np.asarray(dR))
    if hess_q.shape[0] != hess_q.shape[1] or dR.shape[0] != hess_q.shape[0]:
        raise DimensionError(f"Hess {hess_q.shape} incompatible with dR {dR.shape}")
    scale = max(1.0, float(np.max(np.abs(hess_q))))
    if np.max(np.abs(hess_q - hess_q.T)) > 1e-12 * scale:
        raise ValueError("Hessian is not symmetric")
    return dR.T @ hess_q @ dR


def make_hessian(M, tol=RANK_TOL, scale=0.0) -> PhaseHessian:
    M = np.asarray(M, dtype=complex)
    return PhaseHessian(M, M.shape[0] - _rank(M, tol, scale), scale)


def hessian_P(b: LinearBlocks) -> PhaseHessian:
    dR = graph_jacobian(b)
    C = chi_hessian(b.n)
    scale = float(np.linalg.norm(dR, 2) ** 2 * np.linalg.norm(C, 2))
    return make_hessian(chain_rule_hessian(C, dR), scale=scale)


def radical(h: PhaseHessian, tol=RANK_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of {xi : Psi(xi, .) = 0}."""
    M = h.matrix
    U, s, Vh = np.linalg.svd(M)
    ref = max(float(s[0]), h.scale)
    if ref == 0:
        return np.eye(M.shape[0], dtype=complex)
    return Vh[s <= tol * ref].conj().T


def to_complex_coords(n: int) -> np.ndarray:
    """Matrix sending real vectors (u', u'') to (d/dz, d/dzbar) components."""
    I = np.eye(n)
    return np.block([[I, 1j * I], [I, -1j * I]])


def complexified_kernel(A, tol=RANK_TOL) -> np.ndarray:
    """Ker(A - I) pushed into (d/dz, d/dzbar) coordinates, orthonormal columns."""
    A = np.asarray(A, dtype=float)
    _, sv, Vt = np.linalg.svd(A - np.eye(A.shape[0]))
    # measured against |A| so that A = I has a full kernel despite roundoff
    N = Vt[sv <= tol * max(float(sv[0]), float(np.linalg.norm(A, 2)))].T
    if N.shape[1] == 0:
        return np.zeros((A.shape[0], 0), dtype=complex)
    V = to_complex_coords(A.shape[0] // 2) @ N
    q, _ = np.linalg.qr(V)
    return q


def max_principal_angle(U, V) -> float:
    if U.shape[1] != V.shape[1]:
        return float("inf")
    if U.shape[1] == 0:
        return 0.0
    return float(np.max(subspace_angles(U, V)))


def conjugate_vector(eta) -> np.ndarray:
    """The vector conj(eta) in (d/dz, d/dzbar) components: swap halves and conjugate."""
    eta = np.asarray(eta)
    n = eta.shape[-1] // 2
    return np.concatenate([eta[..., n:].conj(), eta[..., :n].conj()], axis=-1)


@dataclass
class NegativityReport:
    samples: int
    max_rel_error: float
    max_re_psi: float
    all_negative: bool
    outside_radical: int
    max_radical_defect: float = 0.0

    @property
    def ok(self) -> bool:
        return self.all_negative and self.max_rel_error <= 1e-10


def _identity_terms(h, dR, eta, n):
    lhs = -4 * h.form(eta, conjugate_vector(eta)).real
    v = dR @ eta
    vp, wp, vpp, wpp = v[:n], v[n:2 * n], v[2 * n:3 * n], v[3 * n:]
    rhs = float(np.sum(np.abs(vp - wp) ** 2) + np.sum(np.abs(vpp - wpp) ** 2))
    return lhs, rhs


def negativity_check(h: PhaseHessian, b: LinearBlocks, samples: int = 10, rng=None) -> NegativityReport:
    """Check -4 Re Psi(eta, conj eta) = |v' - w'|^2 + |v'' - w''|^2 on random eta.

    (v', w', v'', w'') = dR eta. Samples are drawn from the orthogonal
    complement of the radical, where the left side must be strictly
    positive; one extra sample inside the radical checks that both sides
    vanish there (``max_radical_defect`` is relative to |dR|^2).
    """
    rng = np.random.default_rng() if rng is None else rng
    n = b.n
    dR = graph_jacobian(b)
    dscale = float(np.linalg.norm(dR, 2) ** 2)
    rad = radical(h)
    worst, most, defect = 0.0, -np.inf, 0.0
    neg = True
    outside = 0
    full = rad.shape[1] == 2 * n
    for _ in range(samples if not full else 0):
        eta = rng.normal(size=2 * n) + 1j * rng.normal(size=2 * n)
        if rad.shape[1]:
            eta = eta - rad @ (rad.conj().T @ eta)
        eta /= np.linalg.norm(eta)
        lhs, rhs = _identity_terms(h, dR, eta, n)
        worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-300))
        outside += 1
        most = max(most, -lhs / 4)
        if not lhs > 0:
            neg = False
    if rad.shape[1]:
        eta = rad @ (rng.normal(size=rad.shape[1]) + 1j * rng.normal(size=rad.shape[1]))
        eta /= np.linalg.norm(eta)
        lhs, rhs = _identity_terms(h, dR, eta, n)
        defect = max(abs(lhs), abs(rhs)) / dscale
    return NegativityReport(samples, worst, float(most), neg, outside, defect)


def hamiltonian_exp(S) -> np.ndarray:
    """exp(J0 S) for symmetric S; exactly symplectic up to roundoff."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0] // 2
    J0 = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    return expm(J0 @ (S + S.T) / 2)


def random_symplectic(n: int, rng, kernel_dims=None, scale: float = 0.5) -> np.ndarray:
    """Random real symplectic map of R^{2n} with a prescribed fixed space.

    Each coordinate plane (x_j, x_{n+j}) gets a 2x2 block with fixed space of
    dimension 2 (identity), 1 (a shear) or 0 (a random exponential). The
    direct sum is conjugated by exp(J0 S) for a random symmetric S, so the
    kernel dimension of A - I is the sum of the chosen per-plane values.
    """
    if kernel_dims is None:
        kernel_dims = rng.integers(0, 3, size=n)
    D = np.zeros((2 * n, 2 * n))
    for j, d in enumerate(kernel_dims):
        if d == 2:
            blk = np.eye(2)
        elif d == 1:
            s = rng.uniform(0.5, 2.0) * rng.choice([-1, 1])
            blk = np.array([[1.0, s], [0.0, 1.0]])
        else:
            while True:
                blk = hamiltonian_exp(rng.normal(size=(2, 2)))
                if abs(np.trace(blk) - 2) > 0.2:
                    break
        D[np.ix_([j, n + j], [j, n + j])] = blk
    Q = hamiltonian_exp(scale * rng.normal(size=(2 * n, 2 * n)))
    return Q @ D @ np.linalg.inv(Q)


def is_symplectic_matrix(A, tol=1e-10) -> bool:
    A = np.asarray(A, dtype=float)
    n = A.shape[0] // 2
    J0 = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    return float(np.max(np.abs(A.T @ J0 @ A - J0))) <= tol


def radical_matches_kernel(A, tol_angle=1e-8) -> tuple[bool, float]:
    """Compare radical(hessian_P(decompose_linear(A))) with Ker(A - I)."""
    h = hessian_P(decompose_linear(A))
    R = radical(h)
    K = complexified_kernel(A)
    ang = max_principal_angle(R, K)
    return ang <= tol_angle, ang
