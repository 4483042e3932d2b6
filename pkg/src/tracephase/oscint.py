"""Numerical evaluation and asymptotic fitting of I(k) = int e^{k f(x)} phi(x) dx.

Phases and amplitudes are plain callables of the coordinates, ``f(x)`` in
one dimension and ``f(x, y)`` in two. Amplitudes additionally carry their
support box (see :class:`TensorAmplitude`).

Two quadrature paths are used.

* Laplace type (Re f not identically zero): the domain is cut down to
  {Re k(f - f(p)) >= -trunc}, which drops at most e^{-trunc} relative mass,
  and the rest is done by adaptive Gauss-Kronrod (nested in 2D).
* Purely oscillatory 1D phases: on each monotone branch away from the
  stationary point the substitution u = Im(f - f(p)) turns the tail into
  a Fourier integral, handled by QUADPACK's QAWO. The first few
  oscillations next to the stationary point go to plain adaptive quadrature.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import (
    CriticalSetError,
    DegenerateHessianError,
    DimensionError,
    IllConditionedFitError,
    InvalidPhaseError,
    QuadratureError,
    StationarityError,
    StructureViolation,
)

ALGORITHM_VERSION = "oscint-1"

QUAD_TOL = 1e-11
TRUNCATION = 40.0
PRUNE = 1e-3


# ---------------------------------------------------------------- amplitudes


def _smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    if isinstance(t, float):
        if t <= 0:
            return 0.0
        if t >= 1:
            return 1.0
        a = math.exp(-1.0 / t)
        return a / (a + math.exp(-1.0 / (1.0 - t)))
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class Bump:
    """exp(1 - 1/(1 - ((t - c)/rho)^2)), equal to 1 at the center c."""

    rho: float = 1.0
    center: float = 0.0

    @property
    def support(self):
        return (self.center - self.rho, self.center + self.rho)

    def __call__(self, t):
        if isinstance(t, float):
            s = (t - self.center) / self.rho
            return math.exp(1.0 - 1.0 / (1.0 - s * s)) if abs(s) < 1 else 0.0
        s = (np.asarray(t, dtype=float) - self.center) / self.rho
        inside = np.abs(s) < 1
        q = np.where(inside, 1.0 - s * s, 1.0)
        return np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)


@dataclass(frozen=True)
class Plateau:
    """Even bump equal to 1 on |t - c| <= a, smoothly stepping to 0 at |t - c| = b."""

    a: float = 1.0
    b: float = 2.0
    center: float = 0.0

    @property
    def support(self):
        return (self.center - self.b, self.center + self.b)

    def __call__(self, t):
        if isinstance(t, float):
            return 1.0 - _smooth_step((abs(t - self.center) - self.a) / (self.b - self.a))
        r = np.abs(np.asarray(t, dtype=float) - self.center)
        return 1.0 - _smooth_step((r - self.a) / (self.b - self.a))


@dataclass(frozen=True)
class Indicator:
    lo: float = -1.0
    hi: float = 1.0

    @property
    def support(self):
        return (self.lo, self.hi)

    def __call__(self, t):
        if isinstance(t, float):
            return 1.0 if self.lo <= t <= self.hi else 0.0
        t = np.asarray(t, dtype=float)
        return np.where((t >= self.lo) & (t <= self.hi), 1.0, 0.0)


@dataclass(frozen=True)
class TensorAmplitude:
    """Product of one-dimensional profiles, one per coordinate."""

    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def dim(self) -> int:
        return len(self.factors)

    @property
    def support(self) -> list[tuple[float, float]]:
        return [f.support for f in self.factors]

    def __call__(self, *coords):
        if len(coords) != self.dim:
            raise DimensionError(f"amplitude of dim {self.dim} called with {len(coords)} coords")
        out = 1.0
        for f, c in zip(self.factors, coords):
            out = out * f(c)
        return out


def amplitude(*factors) -> TensorAmplitude:
    return TensorAmplitude(tuple(factors))


# ---------------------------------------------------------------- results


@dataclass
class QuadResult:
    value: complex
    error: float
    method: str = ""
    converged: bool = True
    interval: tuple = ()

    def __complex__(self):
        return complex(self.value)

    def __iter__(self):
        return iter((self.value, self.error))


def _quad_complex(g, a, b, tol, limit, points=None, epsabs=0.0):
    pts = None
    if points:
        pts = sorted(p for p in points if a < p < b) or None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            v, e = integrate.quad(g, a, b, complex_func=True, epsabs=epsabs, epsrel=tol,
                                  limit=limit, points=pts)
            ok = True
        except integrate.IntegrationWarning:
            ok = False
    if not ok:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            v, e = integrate.quad(g, a, b, complex_func=True, epsabs=epsabs, epsrel=tol,
                                  limit=limit, points=pts)
    return complex(v), abs(complex(e)), ok


def _quad_real(g, a, b, tol, limit, epsabs=0.0, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            v, e = integrate.quad(g, a, b, epsabs=epsabs, epsrel=tol, limit=limit, **kw)
            return v, e, True
        except integrate.IntegrationWarning:
            pass
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        v, e = integrate.quad(g, a, b, epsabs=epsabs, epsrel=tol, limit=limit, **kw)
    return v, e, False


# ---------------------------------------------------------------- helpers


def _support(amp, dim):
    sup = getattr(amp, "support", None)
    if sup is None:
        raise ValueError("amplitude needs a support box")
    if dim == 1 and len(sup) == 2 and np.isscalar(sup[0]):
        sup = [tuple(sup)]
    if len(sup) != dim:
        raise DimensionError(f"support {sup} does not match dimension {dim}")
    return [tuple(map(float, s)) for s in sup]


def _dim_of(amp, dim):
    if dim is not None:
        return int(dim)
    return int(getattr(amp, "dim", 1))


def locate_maximum(f, box, n=401):
    """Grid argmax of Re f over a box (1D or 2D)."""
    if len(box) == 1:
        x = np.linspace(*box[0], n)
        return (float(x[np.argmax(np.real(f(x)))]),)
    g = [np.linspace(lo, hi, 201) for lo, hi in box]
    X, Y = np.meshgrid(*g, indexing="ij")
    i = np.unravel_index(np.argmax(np.real(f(X, Y))), X.shape)
    return (float(X[i]), float(Y[i]))


def check_phase(f, amp, dim=None, n=401, tol=1e-12):
    """Raise InvalidPhaseError if Re f > 0 somewhere on the support samples."""
    dim = _dim_of(amp, dim)
    box = _support(amp, dim)
    if dim == 1:
        x = np.linspace(*box[0], n)
        vals = np.real(f(x))
        mask = np.asarray(amp(x)) != 0
    else:
        g = [np.linspace(lo, hi, 151) for lo, hi in box]
        X, Y = np.meshgrid(*g, indexing="ij")
        vals = np.real(f(X, Y))
        mask = np.asarray(amp(X, Y)) != 0
    vals = np.broadcast_to(vals, mask.shape)
    if np.any(vals[mask] > tol):
        raise InvalidPhaseError(f"Re f reaches {float(np.max(vals[mask])):.3g} > 0 on the support")


def _truncate_1d(re_kf, lo, hi, p, trunc, n=4001):
    """Hull of {re_kf >= -trunc} on [lo, hi], widened by one grid cell."""
    x = np.linspace(lo, hi, n)
    x = np.union1d(x, [p])
    keep = np.real(re_kf(x)) >= -trunc
    if not keep.any():
        return p, p
    i = np.flatnonzero(keep)
    a = x[max(i[0] - 1, 0)]
    b = x[min(i[-1] + 1, len(x) - 1)]
    return float(a), float(b)


def _is_oscillatory(f, box, n=401):
    x = np.linspace(*box[0], n)
    v = np.asarray(f(x))
    d = v - v[n // 2]
    scale = 1.0 + float(np.max(np.abs(d)))
    return float(np.max(np.abs(np.real(d)))) <= 1e-13 * scale and float(np.max(np.abs(np.imag(d)))) > 0


def stationary_point_1d(f, box, n=2001):
    """Stationary point of Im f on [lo, hi], from a sign change of the derivative."""
    x = np.linspace(box[0], box[1], n)
    g = np.imag(np.asarray(f(x)))
    d = np.gradient(g, x)
    j = int(np.argmin(np.abs(d)))
    if d[j] == 0:
        return float(x[j])

    def dg(t):
        h = 1e-4 * max(1.0, abs(t))
        return float(_deriv(lambda s: np.imag(np.asarray(f(s))), t, h))

    for a, b in ((x[max(j - 1, 0)], x[j]), (x[j], x[min(j + 1, n - 1)])):
        if a < b and dg(a) * dg(b) <= 0:
            return float(optimize.brentq(dg, a, b, xtol=1e-15))
    return float(x[j])


def _deriv(g, x, h):
    """Five-point central difference."""
    return (-g(x + 2 * h) + 8 * g(x + h) - 8 * g(x - h) + g(x - 2 * h)) / (12 * h)


# ---------------------------------------------------------------- eval_integral


def eval_integral(f, amp, k, dim=None, *, p=None, fp=None, tol=QUAD_TOL, trunc=TRUNCATION,
                  limit=2000, df=None, strict=False, validate=True) -> QuadResult:
    """I(k) = int e^{k f} amp over the support of amp.

    ``p`` is the maximum of Re f (located on a grid when omitted) and
    ``fp = f(p)`` is peeled off during quadrature. ``df`` optionally gives
    f' for the oscillatory path. With ``strict`` a QuadratureError carrying
    the best estimate is raised when a tolerance is not met; otherwise the
    result is flagged ``converged=False``.
    """
    dim = _dim_of(amp, dim)
    if dim not in (1, 2):
        raise DimensionError("only dimensions 1 and 2 are supported")
    box = _support(amp, dim)
    if validate:
        check_phase(f, amp, dim)
    oscillatory = dim == 1 and _is_oscillatory(f, box)
    if p is None:
        p = stationary_point_1d(f, box[0]) if oscillatory else locate_maximum(f, box)
    p = tuple(np.atleast_1d(np.asarray(p, dtype=float)))
    if fp is None:
        fp = complex(f(*p))
    k = float(k)
    if dim == 1:
        if oscillatory:
            res = _oscillatory_1d(f, amp, k, box[0], p[0], fp, tol, limit, df)
        else:
            res = _laplace_1d(f, amp, k, box[0], p[0], fp, tol, trunc, limit)
    else:
        res = _laplace_2d(f, amp, k, box, p, fp, tol, trunc, limit)
    shift = np.exp(k * fp)
    res.value = complex(res.value * shift)
    res.error = float(res.error * abs(shift))
    if strict and not res.converged:
        raise QuadratureError("quadrature tolerance not met", res.value, res.error)
    return res


def _laplace_1d(f, amp, k, box, p, fp, tol, trunc, limit):
    a, b = _truncate_1d(lambda x: k * (np.asarray(f(x)) - fp), box[0], box[1], p, trunc)
    if b <= a:
        return QuadResult(0j, 0.0, "laplace-1d", True, (a, b))

    def g(x):
        return complex(np.exp(k * (f(x) - fp)) * amp(x))

    mag, _, _ = _quad_real(lambda x: abs(g(x)), a, b, 1e-6, limit, points=[p] if a < p < b else None)
    v, e, ok = _quad_complex(g, a, b, tol, limit, points=[p], epsabs=tol * mag * 1e-3)
    return QuadResult(v, e, "laplace-1d", ok and e <= max(tol * abs(v), tol * mag * 1e-2), (a, b))


def _oscillatory_1d(f, amp, k, box, p, fp, tol, limit, df):
    """Purely imaginary phase: split at p and map each side to a Fourier integral."""

    def gfun(x):
        return np.imag(np.asarray(f(x)) - fp)

    def dg(x):
        if df is not None:
            return float(np.imag(df(x)))
        h = 1e-4 * max(1.0, abs(x))
        return float(_deriv(gfun, x, h))

    total, err, ok = 0j, 0.0, True
    for end in (box[1], box[0]):
        if end == p:
            continue
        xs = np.linspace(p, end, 2001)
        gs = gfun(xs)
        sign = 1.0 if gs[-1] >= 0 else -1.0
        u = sign * gs
        if np.any(np.diff(u[1:]) <= 0):
            # not monotone on this side: plain adaptive quadrature
            lo, hi = sorted((p, end))
            v, e, o = _quad_complex(lambda x: complex(np.exp(k * (f(x) - fp)) * amp(x)),
                                    lo, hi, tol, 20 * limit, points=[p])
            total += v
            err += e
            ok &= o
            continue
        U = float(u[-1])
        u0 = min(U, 12.0 / k)
        # x0 with |g(x0)| = u0, located on the sampled branch then refined
        j = int(np.searchsorted(u, u0))
        j = min(max(j, 1), len(xs) - 1)
        if u0 >= U:
            x0 = end
        else:
            x0 = optimize.brentq(lambda x: sign * gfun(x) - u0, xs[j - 1], xs[j], xtol=1e-15, rtol=1e-15)
        lo, hi = sorted((p, x0))
        orient = 1.0 if end > p else -1.0
        v, e, o = _quad_complex(lambda x: complex(np.exp(k * (f(x) - fp)) * amp(x)), lo, hi, tol, limit)
        total += v
        err += e
        ok &= o
        if u0 >= U:
            continue

        def x_of(uu):
            jj = int(np.searchsorted(u, uu))
            jj = min(max(jj, 1), len(xs) - 1)
            return optimize.brentq(lambda x: sign * gfun(x) - uu, xs[jj - 1], xs[jj],
                                   xtol=1e-15, rtol=1e-15)

        def h(uu, part):
            x = x_of(uu)
            a = complex(amp(x)) / abs(dg(x))
            return a.real if part == 0 else a.imag

        # int e^{i k sign u} A(u) du with A complex: split into cos and sin parts
        parts = {}
        for part in (0, 1):
            for wt in ("cos", "sin"):
                val, er, o = _quad_real(lambda uu: h(uu, part), u0, U, tol, limit, epsabs=1e-15,
                                        weight=wt, wvar=k)
                parts[(part, wt)] = val
                err += er
                ok &= o
        cr, sr = parts[(0, "cos")], parts[(0, "sin")]
        ci, si = parts[(1, "cos")], parts[(1, "sin")]
        # (A_r + i A_i)(cos + i sign sin)
        tail = complex(cr - sign * si, ci + sign * sr)
        total += tail
    return QuadResult(total, err, "oscillatory-1d", ok, tuple(box))


def _laplace_2d(f, amp, k, box, p, fp, tol, trunc, limit):
    (x_lo, x_hi), (y_lo, y_hi) = box
    gx = np.linspace(x_lo, x_hi, 201)
    gy = np.linspace(y_lo, y_hi, 201)
    X, Y = np.meshgrid(np.union1d(gx, [p[0]]), np.union1d(gy, [p[1]]), indexing="ij")
    keep = np.real(k * (np.asarray(f(X, Y)) - fp)) >= -trunc
    xs = X[:, 0]
    rows = np.flatnonzero(keep.any(axis=1))
    a = float(xs[max(rows[0] - 1, 0)])
    b = float(xs[min(rows[-1] + 1, len(xs) - 1)])
    state = {"ok": True, "err": 0.0}

    def inner(x):
        ya, yb = _truncate_1d(lambda y: k * (np.asarray(f(x, y)) - fp), y_lo, y_hi, p[1], trunc, n=801)
        if yb <= ya:
            return 0j

        def g(y):
            return complex(np.exp(k * (f(x, y) - fp)) * amp(x, y))

        v, e, o = _quad_complex(g, ya, yb, tol, limit, points=[p[1]], epsabs=state.get("abs", 0.0))
        state["ok"] &= o
        state["err"] = max(state["err"], e)
        return v

    ref = inner(p[0])
    state["abs"] = tol * abs(ref) * 1e-3
    v, e, o = _quad_complex(inner, a, b, tol, limit, points=[p[0]], epsabs=tol * abs(ref) * (b - a) * 1e-3)
    err = e + state["err"] * (b - a)
    return QuadResult(v, err, "laplace-2d", o and state["ok"], (a, b))


# ---------------------------------------------------------------- leading term


def numerical_gradient(f, p, h=1e-5):
    p = np.asarray(p, dtype=float)
    g = np.zeros(len(p), dtype=complex)
    for i in range(len(p)):
        e = np.zeros(len(p))
        e[i] = h
        g[i] = (complex(f(*(p + e))) - complex(f(*(p - e)))) / (2 * h)
    return g


def numerical_hessian(f, p, h=1e-4):
    p = np.asarray(p, dtype=float)
    n = len(p)
    Hs = np.zeros((n, n), dtype=complex)
    f0 = complex(f(*p))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        Hs[i, i] = (complex(f(*(p + ei))) - 2 * f0 + complex(f(*(p - ei)))) / h ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            v = (complex(f(*(p + ei + ej))) - complex(f(*(p + ei - ej)))
                 - complex(f(*(p - ei + ej))) + complex(f(*(p - ei - ej)))) / (4 * h * h)
            Hs[i, j] = Hs[j, i] = v
    return Hs


def gaussian_factor(hess, k):
    """prod_j sqrt(2 pi / (-k lambda_j)) over the eigenvalues of the Hessian.

    Principal square roots, which is the continuous branch on
    {Re(-lambda) >= 0} and equals (2 pi / k)^{n/2} det(-Hess)^{-1/2}.
    """
    lam = np.linalg.eigvals(np.atleast_2d(np.asarray(hess, dtype=complex)))
    return complex(np.prod(np.sqrt(2 * np.pi / (-k * lam))))


def leading_term(f, p, k, amp_p=1.0, *, hess=None, grad_tol=1e-10, h=1e-5):
    """Stationary phase leading term e^{k f(p)} prod sqrt(2 pi/(-k lambda_j)) phi(p)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    g = numerical_gradient(f, p, h)
    if float(np.max(np.abs(g))) > grad_tol:
        raise StationarityError(f"|df(p)| = {float(np.max(np.abs(g))):.3g}")
    Hs = numerical_hessian(f, p) if hess is None else np.atleast_2d(np.asarray(hess, dtype=complex))
    lam = np.linalg.eigvals(Hs)
    # finite-difference Hessians carry O(h^2) ~ 1e-8 error, so judge singularity above that
    if np.min(np.abs(lam)) <= 1e-6 * max(1.0, float(np.max(np.abs(lam)))):
        raise DegenerateHessianError("Hessian is singular at p; fit the series instead")
    return complex(np.exp(k * complex(f(*p))) * gaussian_factor(Hs, k) * amp_p)


# ---------------------------------------------------------------- reduction


@dataclass
class ReducedProblem:
    """Phase g(v) = F(0, v) and the order-0 reduced amplitude."""

    F: Callable
    amp: Callable
    g: Callable
    f_uu: Callable
    v_support: tuple
    u_dim: int = 1
    v_dim: int = 1

    def amplitude(self, k):
        """v -> amp(0, v) sqrt(2 pi / (-k F_uu(0, v)))."""
        fac = np.sqrt(2 * np.pi / k)

        def a(v):
            return self.amp(0.0, v) * fac / np.sqrt(-self.f_uu(v) + 0j)

        return a

    def evaluate(self, k, **kw) -> QuadResult:
        a = self.amplitude(k)
        a.support = self.v_support  # type: ignore[attr-defined]
        box = [self.v_support]

        class _Amp:
            support = box
            dim = 1

            def __call__(self, v):
                return a(v)

        return eval_integral(self.g, _Amp(), k, 1, validate=False, **kw)


def reduce_parameters(F, amp, u_dim=1, v_dim=1, *, v_support=None, n_check=41, tol=1e-8,
                      h=1e-4) -> ReducedProblem:
    """Split off the nondegenerate u-directions of F(u, v) along {u = 0}.

    Only u_dim = v_dim = 1 is implemented, which covers the 2D models.
    """
    if (u_dim, v_dim) != (1, 1):
        raise DimensionError("reduction is implemented for one u and one v variable")
    if v_support is None:
        v_support = _support(amp, 2)[1]
    vs = np.linspace(v_support[0], v_support[1], n_check)
    du = (np.asarray(F(h, vs)) - np.asarray(F(-h, vs))) / (2 * h)
    # central difference error would be O(h^2) F_uuu: judge against that scale
    d3 = np.abs(np.asarray(F(2 * h, vs)) - 2 * np.asarray(F(h, vs)) + 2 * np.asarray(F(-h, vs))
                - np.asarray(F(-2 * h, vs))) / (2 * h ** 3)
    if np.any(np.abs(du) > tol + h * h * (d3 + 1.0)):
        raise CriticalSetError("dF/du does not vanish on u = 0")

    def f_uu(v):
        return (np.asarray(F(h, v)) - 2 * np.asarray(F(0.0, v)) + np.asarray(F(-h, v))) / h ** 2

    fu = f_uu(vs)
    if np.any(np.abs(fu) <= tol) or np.any(np.real(fu) >= 0):
        raise CriticalSetError("d2F/du2 degenerates or is not negative along u = 0")

    def g(v):
        return F(0.0, v)

    return ReducedProblem(F, amp, g, f_uu, tuple(v_support), u_dim, v_dim)


# ---------------------------------------------------------------- sweeps


def k_grid(k_min, k_max, ppd=16) -> np.ndarray:
    if not k_min < k_max:
        raise ValueError("need k_min < k_max")
    n = max(int(round(ppd * math.log10(k_max / k_min))), 1)
    return np.geomspace(k_min, k_max, n + 1)


@dataclass
class KSweep:
    k_grid: np.ndarray
    values: np.ndarray
    error_estimates: np.ndarray
    phase_value_at_max: complex = 0j
    low_confidence: np.ndarray | None = None

    def __post_init__(self):
        self.k_grid = np.asarray(self.k_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        self.error_estimates = np.asarray(self.error_estimates, dtype=float)
        if len(self.k_grid) < 8:
            raise ValueError("a sweep needs at least 8 points")
        if np.any(np.diff(self.k_grid) <= 0):
            raise ValueError("k grid must be strictly increasing")
        if self.low_confidence is None:
            self.low_confidence = self.error_estimates > 1e-10 * np.abs(self.values)

    @property
    def peeled(self) -> np.ndarray:
        return self.values / np.exp(self.k_grid * self.phase_value_at_max)

    def rows(self):
        for k, v, e in zip(self.k_grid, self.values, self.error_estimates):
            yield float(k), complex(v), float(e)


def run_sweep(integral: Callable, ks, fp=0j) -> KSweep:
    """Evaluate ``integral(k) -> QuadResult`` on each k."""
    vals, errs, flags = [], [], []
    for k in ks:
        r = integral(float(k))
        vals.append(r.value)
        errs.append(r.error)
        flags.append((not r.converged) or r.error > 1e-10 * abs(r.value))
    return KSweep(np.asarray(ks, dtype=float), np.array(vals), np.array(errs), fp, np.array(flags))


# ---------------------------------------------------------------- series


@dataclass
class Term:
    alpha: float
    beta: int
    c: complex
    stderr: float = 0.0
    theta: float = 0.0

    @property
    def alpha_fraction(self) -> Fraction:
        return Fraction(self.alpha).limit_denominator(1000)


@dataclass
class AsymptoticSeries:
    terms: list
    exponent_lattice: list
    log_bound: int
    residual: float = 0.0
    thetas: tuple = (0.0,)

    def __post_init__(self):
        self.terms.sort(key=lambda t: (-t.alpha, -t.beta, t.theta))
        for t in self.terms:
            if t.beta > self.log_bound:
                raise ValueError("log power exceeds the declared bound")

    def leading(self, theta=None) -> Term:
        ts = [t for t in self.terms if theta is None or t.theta == theta]
        return ts[0]

    def log_terms(self) -> list:
        return [t for t in self.terms if t.beta > 0]

    def term(self, alpha, beta=0, theta=0.0):
        for t in self.terms:
            if abs(t.alpha - float(alpha)) < 1e-12 and t.beta == beta and t.theta == theta:
                return t
        return None

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape, dtype=complex)
        for t in self.terms:
            out = out + t.c * np.exp(1j * k * t.theta) * k ** t.alpha * np.log(k) ** t.beta
        return out

    def to_dict(self) -> dict:
        return {
            "terms": [{"alpha": t.alpha, "beta": t.beta, "re": t.c.real, "im": t.c.imag,
                       "stderr": t.stderr} for t in self.terms],
            "residual": self.residual,
        }


def _design(k, basis):
    cols = []
    for th, a, b in basis:
        cols.append(np.exp(1j * k * th) * k ** a * np.log(k) ** b)
    return np.stack(cols, axis=1)


def fit_series(s: KSweep, lattice: Sequence, max_log: int = 0, *, thetas=(0.0,), prune=PRUNE,
               cond_limit=1e12, weights="relative") -> AsymptoticSeries:
    """Least squares fit of the peeled sweep on {e^{ik theta} k^alpha log(k)^beta}.

    Rows are weighted by 1/|value| (relative residuals) and columns scaled
    to unit norm before solving; a condition number above ``cond_limit``
    is reported as IllConditionedFitError. Terms contributing less than
    ``prune`` (relative, at the largest k) are dropped one at a time, as
    long as the residual stays within a factor 10 of the unpruned fit (or
    below 1e-9, the quadrature noise level).
    """
    k = s.k_grid
    y = s.peeled
    decades = math.log10(k[-1] / k[0])
    if decades < 2 - 1e-9:
        raise ValueError("sweep must span at least two decades")
    alphas = sorted({float(a) for a in lattice}, reverse=True)
    basis = [(float(th), a, b) for th in thetas for a in alphas for b in range(max_log + 1)]
    if weights == "relative":
        w = 1.0 / np.maximum(np.abs(y), 1e-300 + 1e-12 * np.max(np.abs(y)))
    else:
        w = np.ones_like(k)
    kmax = k[-1]
    ymax = abs(y[-1]) if abs(y[-1]) > 0 else float(np.max(np.abs(y)))

    full_resid = None
    previous = None
    while True:
        B = _design(k, basis)
        A = B * w[:, None]
        norms = np.linalg.norm(A, axis=0)
        An = A / norms
        sv = np.linalg.svd(An, compute_uv=False)
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
        if cond > cond_limit:
            raise IllConditionedFitError(
                f"condition number {cond:.3g} for {len(basis)} terms over k in [{k[0]:.3g}, {k[-1]:.3g}]")
        r = y * w
        cn, *_ = np.linalg.lstsq(An, r, rcond=None)
        res = r - An @ cn
        c = cn / norms
        dof = max(len(k) - len(basis), 1)
        sigma2 = float(np.vdot(res, res).real) / dof
        cov = sigma2 * np.linalg.inv((An.conj().T @ An))
        se = np.sqrt(np.abs(np.diag(cov))) / norms
        resid = float(np.linalg.norm(res) / max(np.linalg.norm(r), 1e-300))
        if full_resid is None:
            full_resid = resid
        elif resid > max(10 * full_resid, 1e-9):
            # the dropped term was carrying the fit at smaller k: put it back
            basis, c, se, resid = previous
            break
        contrib = np.abs(c * _design(np.array([kmax]), basis)[0]) / ymax
        if prune and len(basis) > 1:
            j = int(np.argmin(contrib))
            if contrib[j] < prune:
                previous = (list(basis), c, se, resid)
                basis.pop(j)
                continue
        break
    terms = [Term(a, b, complex(ci), float(si), th) for (th, a, b), ci, si in zip(basis, c, se)]
    return AsymptoticSeries(terms, alphas, max_log, resid, tuple(float(t) for t in thetas))


# ---------------------------------------------------------------- exponent


@dataclass
class ExponentEstimate:
    alpha: float
    log_flag: bool
    beta: float = 0.0
    slopes: np.ndarray = field(default_factory=lambda: np.zeros(0))
    oscillatory: bool = False

    def __iter__(self):
        return iter((self.alpha, self.log_flag))


def _upper_hull(x, y) -> np.ndarray:
    """Indices of the upper convex hull of points sorted by x."""
    hull: list[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            if (y[b] - y[a]) * (x[i] - x[a]) <= (y[i] - y[a]) * (x[b] - x[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull)


def detect_exponent(s: KSweep, log_threshold=0.5) -> ExponentEstimate:
    """Model-free leading exponent and log detection from |I(k)|.

    Local slopes d log|I| / d log k are reported. The estimate regresses
    log|I| on {1, L, log L, 1/L} with L = log k, so a k^alpha log(k)^beta
    law gives the coefficient of L as alpha and that of log L as beta;
    ``log_flag`` is set when beta >= log_threshold. Oscillating moduli
    are replaced by their upper convex envelope in (log k, log|I|).
    """
    k = s.k_grid
    m = np.abs(s.peeled)
    if np.any(m == 0):
        raise ValueError("sweep has zero values")
    L = np.log(k)
    y = np.log(m)
    osc = bool(np.any(np.diff(np.sign(np.diff(y))) != 0))
    if osc:
        warnings.warn("non-monotone |I(k)|: using the upper envelope", RuntimeWarning)
        idx = _upper_hull(L, y)
        # the hull always contains both ends; keep them only if they are peaks
        n = len(y)
        idx = [i for i in idx if not ((i == 0 and y[0] < y[1]) or (i == n - 1 and y[-1] < y[-2]))]
        k, m, L, y = k[idx], m[idx], L[idx], y[idx]
    slopes = np.diff(y) / np.diff(L)
    X = np.stack([np.ones_like(L), L, np.log(L), 1 / L], axis=1)
    if len(L) >= 8:
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        alpha, beta = float(coef[1]), float(coef[2])
    else:
        alpha, beta = math.nan, 0.0
    flag = beta >= log_threshold
    if not flag:
        coef2, *_ = np.linalg.lstsq(X[:, :2], y, rcond=None)
        alpha = float(coef2[1])
    return ExponentEstimate(alpha, bool(flag), beta, slopes, osc)


# ---------------------------------------------------------------- structure


@dataclass
class StructureReport:
    ok: bool
    condition: str
    expected_leading: float | None
    observed_leading: float
    log_terms: int
    violations: list = field(default_factory=list)

    def to_dict(self):
        return {"ok": self.ok, "condition": self.condition,
                "expected_leading": self.expected_leading,
                "observed_leading": self.observed_leading,
                "log_terms": self.log_terms, "violations": list(self.violations)}


_GOOD = ("TRANSVERSE_SMOOTH", "KERNEL_DIM_LE_1")


def _tag(record) -> str:
    c = getattr(record, "condition")
    return getattr(c, "value", c)


def verify_structure(series: AsymptoticSeries, record, *, n_real: int, prefactor_exp: float = 0.0,
                     m: int | None = None, tol: float = 1e-6, log_tol: float = PRUNE,
                     k_ref: float | None = None, raise_on_violation=False) -> StructureReport:
    """Check the structural constraints that the fixed-point condition implies.

    ``record`` needs ``condition`` and ``kernel_dim`` attributes. For the
    two good conditions no log(k) terms may carry more than ``log_tol`` of
    the leading magnitude at ``k_ref``, and the leading exponent must be

        prefactor_exp - (n_real - d) / 2            (transverse, fixed set of dim d)
        prefactor_exp - (n_real - 1) / 2 - 1 / m    (one degenerate direction of order m)
    """
    cond = _tag(record)
    d = int(getattr(record, "kernel_dim"))
    lead = series.leading()
    violations = []
    expected = None
    if cond in _GOOD:
        kr = k_ref if k_ref is not None else 1e4
        lead_mag = abs(lead.c) * kr ** lead.alpha * math.log(kr) ** lead.beta
        for t in series.log_terms():
            mag = abs(t.c) * kr ** t.alpha * math.log(kr) ** t.beta
            if mag > log_tol * lead_mag:
                violations.append(f"log term k^{t.alpha:g} log^{t.beta} present")
        if cond == "TRANSVERSE_SMOOTH" or d == 0:
            expected = prefactor_exp - (n_real - d) / 2
        elif m is not None:
            expected = prefactor_exp - (n_real - 1) / 2 - 1.0 / m
        if expected is not None and abs(lead.alpha - expected) > tol:
            violations.append(f"leading exponent {lead.alpha:g} != {expected:g}")
    n_log = len([t for t in series.log_terms()])
    rep = StructureReport(not violations, cond, expected, lead.alpha, n_log, violations)
    if violations and raise_on_violation:
        raise StructureViolation("; ".join(violations))
    return rep
