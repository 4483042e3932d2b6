"""SU(2) character variety of the once-punctured torus in trace coordinates.

A point is the triple (x, y, z) = (tr a, tr b, tr ab) of holonomy traces.
The Casimir L = x^2 + y^2 + z^2 - 2 - xyz cuts out the relative moduli
spaces M_l = {L = l}, and the Dehn twists about a and b act by

    t_a(x, y, z) = (x, z, xz - y)
    t_b(x, y, z) = (xy - z, y, x)

Words are read as compositions: the word "B^-1 A" is t_b^-1 o t_a, so the
rightmost letter acts first.

The letter maps use only ring operations, so they accept floats, numpy
arrays, ``fractions.Fraction``, complex numbers and sympy symbols alike.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    IdentityWordError,
    LevelError,
    NotAFixedPointError,
    SingularPointError,
    WordSyntaxError,
)

ALGORITHM_VERSION = "charvar-1"

LETTERS = ("A", "A^-1", "B", "B^-1")
_INVERSE = {"A": "A^-1", "A^-1": "A", "B": "B^-1", "B^-1": "B"}

# solver defaults
GRID_STEP = 0.05
LEVEL_WINDOW = 0.2
CONVERGENCE_TOL = 1e-12
MERGE_RADIUS = 1e-6
RANK_TOL = 1e-8
CLUSTER_LIMIT = 64
MAX_ITER = 100


class Condition(str, Enum):
    TRANSVERSE_SMOOTH = "TRANSVERSE_SMOOTH"
    KERNEL_DIM_LE_1 = "KERNEL_DIM_LE_1"
    ISOLATED_HOLOMORPHIC = "ISOLATED_HOLOMORPHIC"
    UNCLASSIFIED = "UNCLASSIFIED"


# ---------------------------------------------------------------- points


@dataclass(frozen=True)
class CharVarPoint:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = getattr(self, name)
            if not math.isfinite(float(v)):
                raise ValueError(f"non-finite coordinate {name}={v!r}")

    @classmethod
    def of(cls, p) -> "CharVarPoint":
        if isinstance(p, CharVarPoint):
            return p
        x, y, z = (float(c) for c in p)
        return cls(x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def __iter__(self):
        return iter((self.x, self.y, self.z))


@dataclass(frozen=True)
class Level:
    l: float

    def __post_init__(self):
        check_level(self.l)

    def __float__(self):
        return float(self.l)


def check_level(l) -> float:
    l = float(l)
    if not (-2.0 <= l <= 2.0):
        raise LevelError(f"level {l} outside [-2, 2]")
    return l


# ---------------------------------------------------------------- words

_TOKEN = re.compile(r"\s*(?:(?P<gen>[AB])|(?P<open>\()|(?P<close>\)))")
_EXP = re.compile(r"\^(?P<e>[+-]?\d+)")


def _reduce(letters: Sequence[str]) -> tuple[str, ...]:
    out: list[str] = []
    for a in letters:
        if out and out[-1] == _INVERSE[a]:
            out.pop()
        else:
            out.append(a)
    return tuple(out)


def _power(letters: tuple[str, ...], e: int) -> tuple[str, ...]:
    if e < 0:
        letters = tuple(_INVERSE[a] for a in reversed(letters))
        e = -e
    return letters * e


@dataclass(frozen=True)
class MappingClassWord:
    """Freely reduced word over {A, A^-1, B, B^-1}; empty means identity."""

    letters: tuple[str, ...] = ()

    def __post_init__(self):
        bad = [a for a in self.letters if a not in _INVERSE]
        if bad:
            raise WordSyntaxError(f"unknown letters {bad}")
        object.__setattr__(self, "letters", _reduce(tuple(self.letters)))

    @classmethod
    def parse(cls, text: str) -> "MappingClassWord":
        return parse_word(text)

    def __len__(self):
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __mul__(self, other: "MappingClassWord") -> "MappingClassWord":
        # (u * v)(p) = u(v(p))
        return MappingClassWord(self.letters + other.letters)

    def __pow__(self, e: int) -> "MappingClassWord":
        return MappingClassWord(_power(self.letters, int(e)))

    def inverse(self) -> "MappingClassWord":
        return self ** -1

    @property
    def is_identity(self) -> bool:
        return not self.letters

    def __str__(self):
        return " ".join(self.letters)


def parse_word(text: str) -> MappingClassWord:
    """Parse a generator string such as ``"B^-1 A"`` or ``"(A B)^3"``.

    Tokens are the generators A and B, each optionally followed by ``^n``
    with n a signed integer; parenthesised groups take exponents too.
    Whitespace between tokens is optional.
    """
    if text is None:
        raise WordSyntaxError("no word given")
    letters, pos = _parse_seq(text, 0, depth=0)
    if pos != len(text):
        raise WordSyntaxError(f"unexpected ')' at position {pos}")
    return MappingClassWord(letters)


def _parse_seq(text: str, pos: int, depth: int) -> tuple[tuple[str, ...], int]:
    out: list[str] = []
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            if depth:
                raise WordSyntaxError("unbalanced '('")
            return tuple(out), pos
        m = _TOKEN.match(text, pos)
        if m is None:
            raise WordSyntaxError(f"unknown token {text[pos:pos + 8]!r} at position {pos}")
        if m.group("close"):
            if not depth:
                return tuple(out), pos
            return tuple(out), m.end()
        if m.group("gen"):
            unit: tuple[str, ...] = (m.group("gen"),)
            pos = m.end()
        else:
            unit, pos = _parse_seq(text, m.end(), depth + 1)
            if text[pos - 1:pos] != ")":
                raise WordSyntaxError("unbalanced '('")
        if pos < n and text[pos] == "^":
            e = _EXP.match(text, pos)
            if e is None:
                raise WordSyntaxError(f"malformed exponent at position {pos}")
            unit = _power(unit, int(e.group("e")))
            pos = e.end()
        out.extend(unit)


def load_words(path) -> list[MappingClassWord]:
    """Read a word file: one word per line, blank lines and '#' comments skipped."""
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.append(parse_word(line))
    return words


def as_word(w) -> MappingClassWord:
    if isinstance(w, MappingClassWord):
        return w
    if isinstance(w, str):
        return parse_word(w)
    return MappingClassWord(tuple(w))


# ---------------------------------------------------------------- letter maps


def _letter(a: str, x, y, z):
    if a == "A":
        return x, z, x * z - y
    if a == "A^-1":
        return x, x * y - z, y
    if a == "B":
        return x * y - z, y, x
    return z, y, z * y - x


def _letter_jacobian(a: str, x, y, z) -> np.ndarray:
    o = np.zeros_like(np.asarray(x, dtype=float))
    i = o + 1.0
    if a == "A":
        rows = [[i, o, o], [o, o, i], [z + o, -i, x + o]]
    elif a == "A^-1":
        rows = [[i, o, o], [y + o, x + o, -i], [o, i, o]]
    elif a == "B":
        rows = [[y + o, x + o, -i], [o, i, o], [i, o, o]]
    else:
        rows = [[o, o, i], [o, i, o], [-i, z + o, y + o]]
    # (..., 3, 3)
    return np.moveaxis(np.array(rows, dtype=float), (0, 1), (-2, -1))


def _split(p):
    """Return (x, y, z, rebuild) where rebuild packs components like the input."""
    if isinstance(p, CharVarPoint):
        return p.x, p.y, p.z, lambda x, y, z: CharVarPoint(float(x), float(y), float(z))
    if isinstance(p, np.ndarray):
        return p[..., 0], p[..., 1], p[..., 2], lambda x, y, z: np.stack(
            np.broadcast_arrays(x, y, z), axis=-1)
    x, y, z = p
    kind = type(p) if isinstance(p, (tuple, list)) else tuple
    return x, y, z, lambda x, y, z: kind((x, y, z))


def apply_word(w, p):
    """Apply the word to a point (or a stack of points along the last axis)."""
    w = as_word(w)
    x, y, z, pack = _split(p)
    for a in reversed(w.letters):
        x, y, z = _letter(a, x, y, z)
    return pack(x, y, z)


def word_jacobian(w, p) -> np.ndarray:
    """Exact Jacobian of the word map by the chain rule; shape (..., 3, 3)."""
    w = as_word(w)
    arr = np.asarray(p.as_array() if isinstance(p, CharVarPoint) else p, dtype=float)
    x, y, z = arr[..., 0], arr[..., 1], arr[..., 2]
    J = np.broadcast_to(np.eye(3), arr.shape[:-1] + (3, 3)).copy()
    for a in reversed(w.letters):
        J = _letter_jacobian(a, x, y, z) @ J
        x, y, z = _letter(a, x, y, z)
    return J


def casimir(p):
    x, y, z, _ = _split(p)
    return x * x + y * y + z * z - 2 - x * y * z


def casimir_gradient(p) -> np.ndarray:
    x, y, z, _ = _split(p)
    return np.stack(np.broadcast_arrays(2 * x - y * z, 2 * y - x * z, 2 * z - x * y), axis=-1)


@dataclass
class PolyMap3:
    """A word compiled to explicit polynomials, with the symbolic Jacobian."""

    word: MappingClassWord
    components: tuple
    jacobian_entries: tuple
    _f: object = field(repr=False, default=None)
    _jac: object = field(repr=False, default=None)

    def __call__(self, p) -> np.ndarray:
        x, y, z = np.asarray(p, dtype=float)
        return np.array(self._f(x, y, z), dtype=float)

    def jacobian(self, p) -> np.ndarray:
        x, y, z = np.asarray(p, dtype=float)
        return np.array(self._jac(x, y, z), dtype=float)


def compile_word(w) -> PolyMap3:
    """Expand the word into polynomials and differentiate them symbolically.

    Degrees grow geometrically with word length, so this is for short words.
    """
    import sympy as sp

    w = as_word(w)
    x, y, z = sp.symbols("x y z")
    comps = [x, y, z]
    for a in reversed(w.letters):
        comps = [sp.expand(c) for c in _letter(a, *comps)]
    jac = [[sp.diff(c, v) for v in (x, y, z)] for c in comps]
    f = sp.lambdify((x, y, z), comps, "numpy")
    j = sp.lambdify((x, y, z), jac, "numpy")
    return PolyMap3(w, tuple(comps), tuple(tuple(r) for r in jac), f, j)


def acts_trivially(w, n_probe: int = 8, tol: float = 1e-9) -> bool:
    """Numerical test that the word acts as the identity, e.g. (A B)^6."""
    w = as_word(w)
    if w.is_identity:
        return True
    rng = np.random.default_rng(0)
    p = rng.uniform(-1.5, 1.5, size=(n_probe, 3))
    return bool(np.max(np.abs(apply_word(w, p) - p)) <= tol * (1 + np.max(np.abs(p))))


# ---------------------------------------------------------------- tangent data


def tangent_space(p, l=None, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ker dL_p as the two rows of a 2x3 array.

    Built by projecting the coordinate axes least aligned with dL onto the
    plane, so simple gradients give simple bases: dL parallel to (0, 1, 1)
    yields d/dx and (d/dy - d/dz)/sqrt(2).
    """
    if l is not None:
        check_level(l)
    g = casimir_gradient(np.asarray(CharVarPoint.of(p).as_array()))
    gn = float(np.linalg.norm(g))
    if gn < tol:
        raise SingularPointError(f"dL vanishes at {tuple(CharVarPoint.of(p))}")
    n = g / gn
    order = np.argsort(np.abs(n), kind="stable")
    basis = []
    for i in order[:2]:
        v = np.eye(3)[i] - n[i] * n
        for b in basis:
            v = v - (b @ v) * b
        basis.append(v / np.linalg.norm(v))
    return np.array(basis)


def reduced_map(w, p, basis=None) -> np.ndarray:
    """Matrix of dw_p on the tangent plane with respect to the given basis rows.

    The basis need not be orthonormal; coordinates are recovered by least
    squares, which is exact whenever dw_p maps the plane into itself.
    """
    U = tangent_space(p) if basis is None else np.asarray(basis, dtype=float)
    J = word_jacobian(w, CharVarPoint.of(p).as_array())
    B = U.T  # columns
    return np.linalg.lstsq(B, J @ B, rcond=None)[0]


def kernel_dim(M, tol: float = RANK_TOL) -> int:
    M = np.asarray(M, dtype=float)
    s = np.linalg.svd(M - np.eye(M.shape[0]), compute_uv=False)
    return int(np.sum(s <= tol * max(1.0, float(np.max(np.abs(M))))))


# ---------------------------------------------------------------- records


@dataclass
class FixedPointRecord:
    point: CharVarPoint
    level: float
    tangent_basis: np.ndarray
    kernel_dim: int
    condition: Condition
    reduced_map: np.ndarray
    residual: float = 0.0
    word: str = ""
    local_dim: int | None = None
    jacobian: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "xyz": [self.point.x, self.point.y, self.point.z],
            "kernel_dim": int(self.kernel_dim),
            "condition": self.condition.value,
            "reduced_map": np.asarray(self.reduced_map, dtype=float).tolist(),
            "residual": float(self.residual),
        }


@dataclass
class FixedPointCensus:
    word: str
    level: float
    records: list = field(default_factory=list)
    non_isolated: bool = False
    n_seeds: int = 0
    converged_seeds: int = 0
    failed_seeds: int = 0
    n_clusters: int = 0

    def __iter__(self) -> Iterator[FixedPointRecord]:
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def points(self) -> np.ndarray:
        return np.array([r.point.as_array() for r in self.records]).reshape(-1, 3)


# ---------------------------------------------------------------- solver


def _system(w, P, l):
    """Residual (N, 4) and Jacobian (N, 4, 3) of {w(p) - p = 0, L(p) - l = 0}."""
    r = np.empty(P.shape[:-1] + (4,))
    r[..., :3] = apply_word(w, P) - P
    r[..., 3] = casimir(P) - l
    J = np.empty(P.shape[:-1] + (4, 3))
    J[..., :3, :] = word_jacobian(w, P) - np.eye(3)
    J[..., 3, :] = casimir_gradient(P)
    return r, J


def _residual_norm(w, P, l) -> np.ndarray:
    r, _ = _system(w, P, l)
    return np.max(np.abs(r), axis=-1)


def newton_solve(w, seeds, l, tol=CONVERGENCE_TOL, max_iter=MAX_ITER, box=10.0,
                 merge_every=8, merge_grid=1e-7):
    """Batched Gauss-Newton on the overdetermined 4x3 system.

    Returns (points, converged mask). Points that leave the box or turn
    non-finite are marked as failed and frozen. Every ``merge_every``
    iterations, active seeds that have landed in the same ``merge_grid``
    cell are merged and follow a single leader from then on.
    """
    P = np.array(seeds, dtype=float, copy=True).reshape(-1, 3)
    n = len(P)
    ok = np.zeros(n, dtype=bool)
    alive = np.ones(n, dtype=bool)
    leader = np.arange(n)
    for it in range(max_iter):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        if merge_every and it and it % merge_every == 0:
            key = np.round(P[idx] / merge_grid)
            _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
            inv = inv.ravel()
            leads = idx[first[inv]]
            follow = leads != idx
            leader[idx[follow]] = leads[follow]
            alive[idx[follow]] = False
            idx = idx[~follow]
        Q = P[idx]
        r, J = _system(w, Q, l)
        res = np.max(np.abs(r), axis=1)
        done = res <= tol
        ok[idx[done]] = True
        alive[idx[done]] = False
        act = ~done
        if not act.any():
            break
        J, r, q = J[act], r[act], idx[act]
        JtJ = np.einsum("nij,nik->njk", J, J)
        # tiny Tikhonov term only to keep rank-deficient systems solvable
        mu = 1e-15 * np.trace(JtJ, axis1=1, axis2=2) + 1e-300
        JtJ += mu[:, None, None] * np.eye(3)
        step = np.linalg.solve(JtJ, np.einsum("nij,ni->nj", J, r)[..., None])[..., 0]
        Pn = P[q] - step
        bad = ~np.all(np.isfinite(Pn), axis=1) | (np.max(np.abs(Pn), axis=1) > box)
        P[q[~bad]] = Pn[~bad]
        alive[q[bad]] = False
    for _ in range(64):
        nxt = leader[leader]
        if np.array_equal(nxt, leader):
            break
        leader = nxt
    return P[leader], ok[leader]


def _letter_jacobian_rows(a: str, x, y, z):
    if a == "A":
        return [[1, 0, 0], [0, 0, 1], [z, -1, x]]
    if a == "A^-1":
        return [[1, 0, 0], [y, x, -1], [0, 1, 0]]
    if a == "B":
        return [[y, x, -1], [0, 1, 0], [1, 0, 0]]
    return [[0, 0, 1], [0, 1, 0], [-1, z, y]]


def _exact_system(w, p, l):
    """Residual and 4x3 Jacobian as nested lists over any number type."""
    x, y, z = p
    J = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    for a in reversed(w.letters):
        D = _letter_jacobian_rows(a, x, y, z)
        J = [[sum(D[i][k] * J[k][j] for k in range(3)) for j in range(3)] for i in range(3)]
        x, y, z = _letter(a, x, y, z)
    X, Y, Z = p
    r = [x - X, y - Y, z - Z, X * X + Y * Y + Z * Z - 2 - X * Y * Z - l]
    F = [[J[i][j] - (1 if i == j else 0) for j in range(3)] for i in range(3)]
    F.append([2 * X - Y * Z, 2 * Y - X * Z, 2 * Z - X * Y])
    return r, F


def _gn_step(r, F):
    """Solve the 3x3 normal equations by Cramer's rule; None if singular."""
    N = [[sum(F[k][i] * F[k][j] for k in range(4)) for j in range(3)] for i in range(3)]
    b = [sum(F[k][i] * r[k] for k in range(4)) for i in range(3)]

    def det(M):
        return (M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
                - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
                + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]))

    d = det(N)
    if d == 0:
        return None
    out = []
    for c in range(3):
        M = [row[:] for row in N]
        for i in range(3):
            M[i][c] = b[i]
        out.append(det(M) / d)
    return out


def polish(w, p, l, dps=80, max_iter=200):
    """Refine a root with Gauss-Newton in extended precision.

    At degenerate roots the residual grows like a high power of the
    distance, so double precision pins the point down only to about
    eps**(1/3). Working with 80 digits (the normal equations square the
    condition number) the location is good to ~1e-20. Once the
    step ratio settles at (m-1)/m the step is scaled by m, which restores
    fast convergence at a root of multiplicity m.
    """
    import mpmath as mp

    w = as_word(w)
    with mp.workdps(dps):
        q = [mp.mpf(float(c)) for c in p]
        lm = mp.mpf(float(l))
        floor = mp.mpf(10) ** (-(dps - 8))
        prev = None
        for _ in range(max_iter):
            r, F = _exact_system(w, q, lm)
            s = _gn_step(r, F)
            if s is None:
                break
            size = max(abs(c) for c in s)
            if size < floor:
                break
            scale = 1
            if prev is not None and prev > 0:
                rho = size / prev
                if 0.3 < rho < 0.97:
                    m = int(mp.nint(1 / (1 - rho)))
                    if m >= 2:
                        trial = [q[i] - m * s[i] for i in range(3)]
                        rt, _ = _exact_system(w, trial, lm)
                        if max(abs(c) for c in rt) < max(abs(c) for c in r):
                            scale = m
            q = [q[i] - scale * s[i] for i in range(3)]
            prev = size if scale == 1 else None
        return np.array([float(c) for c in q])


def _cluster(P: np.ndarray, radius: float, limit: int | None):
    """Greedy clustering after a canonical lexicographic sort.

    Returns (centers, counts, overflow). The sort makes the outcome
    independent of the order in which seeds were evaluated.
    """
    if len(P) == 0:
        return np.zeros((0, 3)), [], False
    # converged seeds repeat to rounding error; collapse them before the greedy pass
    P, mult = np.unique(np.round(P, 12), axis=0, return_counts=True)
    centers: list[np.ndarray] = []
    counts: list[int] = []
    for p, c in zip(P, mult):
        if centers:
            d = np.max(np.abs(np.asarray(centers) - p), axis=1)
            j = int(np.argmin(d))
            if d[j] <= radius:
                counts[j] += int(c)
                continue
        centers.append(p)
        counts.append(int(c))
        if limit is not None and len(centers) > limit:
            return np.asarray(centers), counts, True
    return np.asarray(centers), counts, False


def seed_grid(l, step=GRID_STEP, window=LEVEL_WINDOW) -> np.ndarray:
    g = np.arange(-2.0, 2.0 + step / 2, step)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    P = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    return P[np.abs(casimir(P) - l) < window]


def fixed_points(w, l, *, grid_step=GRID_STEP, level_window=LEVEL_WINDOW,
                 tol=CONVERGENCE_TOL, merge_radius=MERGE_RADIUS,
                 cluster_limit=CLUSTER_LIMIT, max_iter=MAX_ITER,
                 classify=True) -> FixedPointCensus:
    """All isolated solutions of {w(p) = p, L(p) = l} in [-2, 2]^3."""
    w = as_word(w)
    l = check_level(l)
    if w.is_identity:
        raise IdentityWordError("the identity fixes all of M_l")
    seeds = seed_grid(l, grid_step, level_window)
    P, ok = newton_solve(w, seeds, l, tol=tol, max_iter=max_iter)
    found = P[ok]
    found = found[np.max(np.abs(found), axis=1) <= 2.0 + 1e-9]
    census = FixedPointCensus(str(w), l, n_seeds=len(seeds),
                              converged_seeds=int(ok.sum()),
                              failed_seeds=int((~ok).sum()))

    # coarse merge first, so near-degenerate roots that stalled a little
    # apart do not masquerade as a curve
    coarse, _, overflow = _cluster(found, 1e-4, cluster_limit)
    if overflow:
        census.non_isolated = True
        census.n_clusters = len(coarse)
        return census
    pts = _refine(w, coarse, l, tol)
    centers, _, overflow = _cluster(pts, merge_radius, cluster_limit)
    census.n_clusters = len(centers)
    if overflow:
        census.non_isolated = True
        return census
    for c in centers:
        if classify:
            census.records.append(classify_fixed_point(w, c, l))
        else:
            census.records.append(_bare_record(w, c, l))
    return census


def _refine(w, P, l, tol):
    out = np.array([polish(w, p, l) for p in P]).reshape(-1, 3)
    # keep the float answer if extended precision somehow drifted
    keep = _residual_norm(w, out, l) > np.maximum(_residual_norm(w, P, l), tol)
    out[keep] = P[keep]
    return out


def _bare_record(w, p, l) -> FixedPointRecord:
    p = CharVarPoint.of(p)
    U = tangent_space(p)
    M = reduced_map(w, p, U)
    return FixedPointRecord(p, l, U, kernel_dim(M), Condition.UNCLASSIFIED, M,
                            float(_residual_norm(w, p.as_array(), l)), str(w))


def local_fixed_dim(w, p, l, radius=1e-2, n_dirs=26) -> int:
    """Dimension of the fixed set near p, probed by re-solving from a small ball.

    Seeds on a sphere around p are pulled back onto the solution set; the
    rank of the cloud of landing offsets estimates the local dimension.
    Landings near a degenerate isolated root stall at a distance set by the
    solver tolerance (~1e-5), far below the 0.1 * radius rank cut.
    """
    p = np.asarray(CharVarPoint.of(p).as_array())
    dirs = np.array([(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)
                     if (i, j, k) != (0, 0, 0)], dtype=float)[:n_dirs]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    Q, ok = newton_solve(w, p + radius * dirs, l, tol=1e-14, max_iter=200, merge_every=0)
    off = Q[ok] - p
    if len(off) < 3:
        return 0
    s = np.linalg.svd(off / np.sqrt(len(off)), compute_uv=False)
    return int(np.sum(s > 0.1 * radius))


def classify_fixed_point(w, p, l, *, check_tol=1e-8) -> FixedPointRecord:
    w = as_word(w)
    l = check_level(l)
    p = CharVarPoint.of(p)
    res = float(_residual_norm(w, p.as_array(), l))
    if res > check_tol:
        raise NotAFixedPointError(f"residual {res:.3g} at {tuple(p)}")
    U = tangent_space(p, l)
    M = reduced_map(w, p, U)
    kd = kernel_dim(M)
    ld = local_fixed_dim(w, p, l)
    if ld == kd:
        cond = Condition.TRANSVERSE_SMOOTH
    elif kd <= 1:
        cond = Condition.KERNEL_DIM_LE_1
    else:
        cond = Condition.UNCLASSIFIED
    return FixedPointRecord(p, l, U, kd, cond, M, res, str(w), ld,
                            word_jacobian(w, p.as_array()))


def random_characters(rng, n: int) -> np.ndarray:
    """Trace coordinates (tr a, tr b, tr ab) of n Haar-random SU(2) pairs.

    Unit quaternions q represent SU(2) with tr = 2 * q0, so every sample is
    a genuine character and stays in [-2, 2]^3 under the twist action.
    """
    q = rng.normal(size=(n, 2, 4))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    a, b = q[:, 0], q[:, 1]
    z = 2 * (a[:, 0] * b[:, 0] - np.sum(a[:, 1:] * b[:, 1:], axis=1))
    return np.stack([2 * a[:, 0], 2 * b[:, 0], z], axis=1)


def random_word(rng, length: int) -> MappingClassWord:
    """Random word of the given letter count before free reduction."""
    return MappingClassWord(tuple(rng.choice(LETTERS, size=length)))
