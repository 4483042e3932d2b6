"""Model phases with exact answers.

* The rotation z -> e^{it} z of CP^1 with the Fubini-Study potential
  log(1 + |z|^2): its phase function, the trace integral over two charts
  and the classical character it should reproduce.
* A registry of golden degenerate phases for the asymptotics engine.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, special

from . import oscint as oi
from . import phase as ph
from .charvar import Condition
from .errors import BranchCutError, InvalidPhaseError, QuadratureError

ALGORITHM_VERSION = "models-1"

TWO_PI = 2 * math.pi


# ---------------------------------------------------------------- CP^1


def fs_chi(z, w):
    """chi(z, w) = log(1 + z conj(w)) - (log(1 + |z|^2) + log(1 + |w|^2)) / 2."""
    z = complex(z)
    w = complex(w)
    a = 1 + z * w.conjugate()
    if a.imag == 0 and a.real <= 0:
        raise BranchCutError(f"1 + z conj(w) = {a.real:g} lies on the branch cut")
    # |z|^2 written as the same product as z conj(w), so chi(z, z) is exactly 0
    sz = (z * z.conjugate()).real
    sw = (w * w.conjugate()).real
    re = math.log(abs(a)) - 0.5 * (math.log(1 + sz) + math.log(1 + sw))
    return complex(re, cmath.phase(a))


def _check_angle(t):
    r = math.remainder(float(t), TWO_PI)
    if abs(r) < 1e-12:
        raise ValueError("rotation angle must not be 0 mod 2 pi")
    return float(t)


@dataclass(frozen=True)
class CP1Model:
    t: float
    theta0: float = 0.0

    def __post_init__(self):
        _check_angle(self.t)

    @property
    def rotation(self) -> complex:
        return cmath.exp(1j * self.t)

    def phase(self):
        return rotation_phase(self)

    def linear_blocks(self) -> ph.LinearBlocks:
        """d phi at either fixed point as a 1x1 complex-linear map."""
        return ph.LinearBlocks([[self.rotation]], [[0]])

    def fixed_point_records(self):
        """Both fixed points carry the same data: z = 0 in this chart, w = 0 in the other."""
        h = ph.hessian_P(self.linear_blocks())
        cond = Condition.TRANSVERSE_SMOOTH if h.radical_dim == 0 else Condition.UNCLASSIFIED
        return [ModelRecord("z=0", cond, h.radical_dim, 0.0),
                ModelRecord("z=inf", cond, h.radical_dim, -self.t)]


class ModelRecord(NamedTuple):
    label: str
    condition: Condition
    kernel_dim: int
    theta: float = 0.0


def rotation_phase(m: CP1Model) -> Callable:
    """P(z) = i theta0 + chi(z, e^{it} z) in the affine chart."""
    rot = m.rotation

    def P(z):
        return 1j * m.theta0 + fs_chi(z, rot * complex(z))

    return P


def phase_gradient(P, z, h=1e-6):
    """(dP/dx, dP/dy) at z = x + iy by central differences."""
    z = complex(z)
    return np.array([(P(z + h) - P(z - h)) / (2 * h),
                     (P(z + 1j * h) - P(z - 1j * h)) / (2 * h)])


def phase_hessian_u(P, z=0j, h=1e-4):
    """Hessian of P at z in complex coordinates, scaled to the u = sqrt(2) z chart.

    The real Hessian in (x, y) is taken by central differences and pulled
    back to Wirtinger coordinates (z, conj z). It is then halved, which is
    the rescaling u = sqrt(2) z that matches the normalisation of
    ``phase.hessian_P``: at z = 0 the result is (e^{-it} - 1)/2 times the
    off-diagonal matrix.
    """
    z = complex(z)
    e = (1.0, 1j)
    H = np.zeros((2, 2), dtype=complex)
    p0 = P(z)
    for i in range(2):
        H[i, i] = (P(z + h * e[i]) - 2 * p0 + P(z - h * e[i])) / h ** 2
        for j in range(i + 1, 2):
            H[i, j] = H[j, i] = (P(z + h * (e[i] + e[j])) - P(z + h * (e[i] - e[j]))
                                 - P(z - h * (e[i] - e[j])) + P(z - h * (e[i] + e[j]))) / (4 * h * h)
    # x = (z + conj z)/2, y = (z - conj z)/(2i)
    J = np.array([[0.5, 0.5], [-0.5j, 0.5j]])
    return J.T @ H @ J / 2


def exact_character(k: int, t: float) -> complex:
    """sum_{j=0}^{k} e^{ijt}, the character of the rotation on degree-k polynomials."""
    t = _check_angle(t)
    k = int(k)
    if k < 0:
        raise ValueError("k must be nonnegative")
    return (cmath.exp(1j * (k + 1) * t) - 1) / (cmath.exp(1j * t) - 1)


def partition(r):
    """1 on |z| <= 1, 0 on |z| >= 2, smooth in between."""
    return 1.0 - oi._smooth_step(float(r) - 1.0)


def _chart_integral(k, a, weight, s_max, tol, trunc):
    """k int_0^s_max ((1 + a s)/(1 + s))^k weight(s) ds / (1 + s)^2.

    The power form is used instead of exp(k P): for integer k it is
    single-valued, so no log branch is crossed when t is near pi.
    """

    def re_kp(s):
        s = np.asarray(s, dtype=float)
        return k * (np.log(np.abs(1 + a * s)) - np.log1p(s))

    lo, hi = oi._truncate_1d(re_kp, 0.0, s_max, 0.0, trunc)

    def g(s):
        return complex(((1 + a * s) / (1 + s)) ** k * weight(s) / (1 + s) ** 2)

    v, e, ok = oi._quad_complex(g, lo, hi, tol, 2000, epsabs=tol * 1e-3 / k)
    return k * v, k * e, ok


def trace_quadrature(m: CP1Model, k: int, *, tol=oi.QUAD_TOL, trunc=oi.TRUNCATION, strict=False) -> oi.QuadResult:
    """k * int e^{kP} Omega over CP^1, split over the charts z and w = 1/z.

    Omega = dA / (pi (1 + |z|^2)^2) has total mass 1. The integrand is
    rotation invariant, so each chart reduces to a radial integral in
    s = |z|^2 (dA = pi ds). In the w chart the phase is -ikt plus the
    z-chart phase with t -> -t.
    """
    k = int(k)
    if k < 1:
        raise ValueError("k must be positive")
    a = cmath.exp(-1j * m.t)
    v0, e0, ok0 = _chart_integral(k, a, lambda s: partition(math.sqrt(s)), 4.0, tol, trunc)
    # w chart: |z| = 1/|w|, weight 1 - rho(1/|w|) vanishes for |w| >= 1
    w_weight = lambda s: 1.0 - partition(1.0 / math.sqrt(s)) if s > 0 else 1.0
    v1, e1, ok1 = _chart_integral(k, a.conjugate(), w_weight, 1.0, tol, trunc)
    ph_inf = cmath.exp(-1j * k * m.t) * cmath.exp(1j * k * m.theta0)
    ph_0 = cmath.exp(1j * k * m.theta0)
    val = ph_0 * v0 + ph_inf * v1
    res = oi.QuadResult(val, e0 + e1, "cp1-radial", ok0 and ok1)
    if strict and not res.converged:
        raise QuadratureError("trace quadrature did not converge", res.value, res.error)
    return res


def character_oracle(m: CP1Model, k: int) -> complex:
    """Quadrature convention: the chart integrals reproduce the character at -t."""
    return exact_character(k, -m.t)


def two_term_constants(t: float) -> tuple[complex, complex]:
    """c0, c_inf with exact_character(k, -t) = c0 + c_inf e^{-ikt}."""
    a = cmath.exp(-1j * t)
    return 1 / (1 - a), -a / (1 - a)


@dataclass
class TraceComparison:
    ks: np.ndarray
    trace: np.ndarray
    character: np.ndarray
    gamma: complex
    ratio: np.ndarray
    deviation: np.ndarray
    skipped: list = field(default_factory=list)

    @property
    def scaled_deviation(self) -> np.ndarray:
        """k |ratio - 1|; stays near a constant when the deviation is O(1/k)."""
        return self.ks * self.deviation


def calibrate(ks, raw_ratio, order=2) -> complex:
    """Constant term of a fit raw_ratio(k) ~ gamma (1 + a1/k + ... + a_order/k^order)."""
    ks = np.asarray(ks, dtype=float)
    B = np.stack([ks ** -j for j in range(order + 1)], axis=1)
    c, *_ = np.linalg.lstsq(B, np.asarray(raw_ratio, dtype=complex), rcond=None)
    return complex(c[0])


def compare_trace(m: CP1Model, ks, *, tol=oi.QUAD_TOL, zero_tol=1e-8, order=2) -> TraceComparison:
    """Quadrature trace against the character over integer k, with a calibrated constant.

    k where the character vanishes (|chi| < zero_tol) carry no ratio and are skipped.
    """
    keep, tr, ch, skipped = [], [], [], []
    for k in ks:
        c = character_oracle(m, int(k))
        if abs(c) < zero_tol:
            skipped.append(int(k))
            continue
        keep.append(int(k))
        tr.append(trace_quadrature(m, int(k), tol=tol).value)
        ch.append(c)
    keep = np.array(keep, dtype=float)
    tr = np.array(tr)
    ch = np.array(ch)
    raw = tr / ch
    g = calibrate(keep, raw, order)
    ratio = raw / g
    return TraceComparison(keep, tr, ch, g, ratio, np.abs(ratio - 1), skipped)


def fit_two_term(m: CP1Model, ks, lattice=(0, -1, -2), tol=oi.QUAD_TOL):
    """Fit k -> trace_quadrature on {1, e^{-ikt}} x {k^alpha}."""
    ks = np.asarray(ks, dtype=float)
    vals, errs = [], []
    for k in ks:
        r = trace_quadrature(m, int(k), tol=tol)
        vals.append(r.value)
        errs.append(r.error)
    s = oi.KSweep(ks, np.array(vals), np.array(errs), 0j)
    return s, oi.fit_series(s, lattice, 0, thetas=(0.0, -m.t), prune=1e-9, weights="uniform")


# ---------------------------------------------------------------- golden phases


@dataclass
class GoldenPhase:
    id: str
    dim: int
    f: Callable
    p: tuple
    amplitude: oi.TensorAmplitude
    lattice: list
    max_log: int
    m: int | None = None
    leading: tuple | None = None  # (alpha, beta, c)
    exact: Callable | None = None
    max_set_dim: int = 0
    on_max_set: Callable | None = None
    boundary_exempt: bool = False
    df: Callable | None = None
    description: str = ""
    k_range: tuple = (1e2, 1e6)
    validate: bool = True

    def __post_init__(self):
        self.p = tuple(float(x) for x in self.p)
        self.lattice = sorted((Fraction(a) for a in self.lattice), reverse=True)
        if self.validate:
            validate_golden(self)

    @property
    def fp(self) -> complex:
        return complex(self.f(*self.p))

    @property
    def log_bound_q(self) -> int | None:
        """n - m - 1, the bound on log powers for this model (recorded, not enforced)."""
        return None if self.m is None else self.dim - self.m - 1

    def integral(self, k, **kw) -> oi.QuadResult:
        return oi.eval_integral(self.f, self.amplitude, k, self.dim, p=self.p, fp=self.fp,
                                df=self.df, validate=False, **kw)

    def radical_dim(self, tol=1e-6) -> int:
        Hs = oi.numerical_hessian(self.f, self.p)
        lam = np.abs(np.linalg.eigvals(Hs))
        return int(np.sum(lam <= tol * max(1.0, float(np.max(lam)))))

    def condition(self) -> Condition:
        d = self.radical_dim()
        if d == self.max_set_dim:
            return Condition.TRANSVERSE_SMOOTH
        if d <= 1 and self.max_set_dim == 0:
            return Condition.KERNEL_DIM_LE_1
        return Condition.UNCLASSIFIED

    def record(self) -> ModelRecord:
        return ModelRecord(self.id, self.condition(), self.radical_dim())

    def lattice_floats(self) -> list[float]:
        return [float(a) for a in self.lattice]


def _grid(g: GoldenPhase, n):
    box = g.amplitude.support
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    return np.meshgrid(*axes, indexing="ij") if g.dim == 2 else [axes[0]]


def validate_golden(g: GoldenPhase, n=None, tol=1e-13):
    """Re f <= 0 on the support, zero only on the maximum set, and not on the support boundary."""
    n = n or (2001 if g.dim == 1 else 201)
    pts = _grid(g, n)
    re = np.broadcast_to(np.real(g.f(*pts)), pts[0].shape)
    if np.any(re > tol):
        raise InvalidPhaseError(f"{g.id}: Re f > 0 on the support")
    if abs(g.fp.real) > tol:
        raise InvalidPhaseError(f"{g.id}: Re f(p) != 0")
    zero = re >= -tol
    if g.on_max_set is not None:
        allowed = g.on_max_set(*pts)
    else:
        step = max((hi - lo) / (n - 1) for lo, hi in g.amplitude.support)
        dist = np.sqrt(sum((c - pc) ** 2 for c, pc in zip(pts, g.p)))
        allowed = dist <= 1.5 * step
    if np.any(zero & ~allowed):
        raise InvalidPhaseError(f"{g.id}: Re f vanishes away from the declared maximum set")
    if not g.boundary_exempt:
        edge = np.zeros(pts[0].shape, dtype=bool)
        if g.dim == 1:
            edge[[0, -1]] = True
        else:
            edge[[0, -1], :] = True
            edge[:, [0, -1]] = True
        if np.any(zero & edge):
            raise InvalidPhaseError(f"{g.id}: maximum set touches the support boundary")


def _erf_over_s(x):
    """int_0^x erf(s)/s ds."""
    v, _ = integrate.quad(lambda s: special.erf(s) / s if s > 0 else 2 / math.sqrt(math.pi),
                          0, x, epsabs=0, epsrel=1e-13, limit=500)
    return v


def xy_squared_exact(k):
    """int_{[-1,1]^2} e^{-k x^2 y^2}: the y integral is sqrt(pi) erf(sqrt(k)|x|)/(sqrt(k)|x|)."""
    k = float(k)
    return 2 * math.sqrt(math.pi) / math.sqrt(k) * _erf_over_s(math.sqrt(k))


def xy_squared_constant():
    """C0 with int_0^X erf(s)/s ds = log X + C0 + o(1)."""
    a = _erf_over_s(1.0)
    b, _ = integrate.quad(lambda s: (special.erf(s) - 1) / s, 1, np.inf, epsabs=1e-15, limit=500)
    return a + b


def cubic_complex_coefficient(n):
    """Coefficient of k^{-(n+1)/3} for int e^{k(i y^3 - y^4)} dy."""
    return ((-1) ** n / math.factorial(n) * 2 * math.gamma((4 * n + 1) / 3)
            * math.cos(math.pi * (4 * n + 1) / 6) / 3)


def golden_registry() -> list[GoldenPhase]:
    g14 = math.gamma(0.25)
    sqpi = math.sqrt(math.pi)
    plate = oi.Plateau(1.0, 2.0)
    reg = [
        GoldenPhase(
            "gaussian-1d", 1, lambda x: -x ** 2, (0.0,), oi.amplitude(plate),
            [Fraction(-1, 2), Fraction(-3, 2), Fraction(-5, 2)], 0, m=2,
            leading=(-0.5, 0, sqpi), exact=lambda k: sqpi / math.sqrt(k),
            description="nondegenerate maximum"),
        GoldenPhase(
            "quartic-1d", 1, lambda y: -y ** 4, (0.0,), oi.amplitude(plate),
            [Fraction(-1 - j, 4) for j in range(6)], 0, m=4,
            leading=(-0.25, 0, g14 / 2), exact=lambda k: g14 / 2 * k ** -0.25,
            description="degenerate maximum of order 4"),
        GoldenPhase(
            "mixed-2d", 2, lambda x, y: -(x ** 2 + y ** 4), (0.0, 0.0), oi.amplitude(plate, plate),
            [Fraction(-3 - j, 4) for j in range(6)], 0, m=4,
            leading=(-0.75, 0, sqpi * g14 / 2), exact=lambda k: sqpi * g14 / 2 * k ** -0.75,
            k_range=(1e2, 1e4), description="one degenerate direction of order 4"),
        GoldenPhase(
            "xy-squared-2d", 2, lambda x, y: -(x * y) ** 2, (0.0, 0.0),
            oi.amplitude(oi.Indicator(), oi.Indicator()),
            [Fraction(-1, 2), Fraction(-1)], 1, m=2,
            leading=(-0.5, 1, sqpi), exact=xy_squared_exact,
            max_set_dim=1, on_max_set=lambda x, y: (np.abs(x) < 1e-12) | (np.abs(y) < 1e-12),
            boundary_exempt=True, k_range=(1e2, 1e4),
            description="maximum on the coordinate cross"),
        GoldenPhase(
            "cubic-complex-1d", 1, lambda y: 1j * y ** 3 - y ** 4, (0.0,), oi.amplitude(plate),
            [Fraction(-1 - j, 3) for j in range(6)], 0, m=3,
            leading=(-1 / 3, 0, math.gamma(1 / 3) / math.sqrt(3)),
            df=lambda y: 3j * y ** 2 - 4 * y ** 3,
            description="complex phase, vanishing order 3"),
    ]
    return reg


def golden(model_id: str) -> GoldenPhase:
    for g in golden_registry():
        if g.id == model_id:
            return g
    raise KeyError(model_id)


GOLDEN_IDS = ("gaussian-1d", "quartic-1d", "mixed-2d", "xy-squared-2d", "cubic-complex-1d")
