from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tracephase import oscint as oi
from tracephase.charvar import Condition
from tracephase.errors import (
    CriticalSetError,
    DegenerateHessianError,
    DimensionError,
    IllConditionedFitError,
    InvalidPhaseError,
    QuadratureError,
    StationarityError,
    StructureViolation,
)
from tracephase.models import ModelRecord

SQPI = math.sqrt(math.pi)
PLATE = oi.amplitude(oi.Plateau(2.0, 7.0))


def gauss(x):
    return -x ** 2


def fresnel(x):
    return 1j * x ** 2


# ---------------------------------------------------------------- amplitudes

def test_profiles():
    b = oi.Bump(2.0, 1.0)
    assert b(1.0) == 1.0 and b(3.0) == 0.0 and b(-1.5) == 0.0
    assert np.allclose(b(np.array([1.0, 3.0, 2.0])), [1.0, 0.0, math.exp(1 - 1 / 0.75)])
    p = oi.Plateau(1.0, 2.0)
    assert p(0.5) == 1.0 and p(-1.0) == 1.0 and p(2.5) == 0.0
    assert p(1.5) == pytest.approx(0.5)
    x = np.linspace(-3, 3, 101)
    assert np.allclose(p(x), [p(float(t)) for t in x])
    assert np.allclose(b(x), [b(float(t)) for t in x])
    ind = oi.Indicator(-1, 1)
    assert ind(1.0) == 1.0 and ind(1.01) == 0.0
    amp = oi.amplitude(p, ind)
    assert amp.dim == 2 and amp.support == [(-2.0, 2.0), (-1, 1)]
    with pytest.raises(DimensionError):
        amp(0.0)


# ---------------------------------------------------------------- eval_integral

@pytest.mark.parametrize("k", [10.0, 1e2, 1e3, 1e4, 1e5, 1e6])
def test_gaussian_and_fresnel_oracles(k):
    g = oi.eval_integral(gauss, PLATE, k)
    assert abs(g.value / math.sqrt(math.pi / k) - 1) <= 1e-8
    f = oi.eval_integral(fresnel, PLATE, k, df=lambda x: 2j * x)
    assert f.method == "oscillatory-1d"
    assert abs(f.value / (math.sqrt(math.pi / k) * np.exp(1j * math.pi / 4)) - 1) <= 1e-8


def test_fresnel_without_derivative():
    k = 1e3
    f = oi.eval_integral(fresnel, PLATE, k)
    assert abs(f.value / (math.sqrt(math.pi / k) * np.exp(1j * math.pi / 4)) - 1) <= 1e-8


def test_shifted_fresnel_locates_stationary_point():
    k = 500.0
    amp = oi.amplitude(oi.Plateau(2.0, 5.0, 0.3))
    f = oi.eval_integral(lambda x: -1j * (x - 0.3) ** 2, amp, k)
    assert abs(f.value / (math.sqrt(math.pi / k) * np.exp(-1j * math.pi / 4)) - 1) <= 1e-8


def test_constant_phase_gives_amplitude_mass():
    amp = oi.amplitude(oi.Bump(1.0))
    ref = oi.eval_integral(lambda x: 0 * x, amp, 1.0).value
    for k in (1.0, 10.0, 1e4):
        v = oi.eval_integral(lambda x: 0 * x, amp, k).value
        assert abs(v - ref) <= 1e-12
    # mass of the bump by a plain trapezoid oracle
    x = np.linspace(-1, 1, 200001)
    assert abs(ref - np.trapezoid(amp(x), x)) <= 1e-9


def test_quartic_oracle():
    k = 1e4
    v = oi.eval_integral(lambda y: -y ** 4, oi.amplitude(oi.Bump(1.0)), k).value
    assert abs(v / (math.gamma(0.25) / 2 * k ** -0.25) - 1) <= 1e-2
    v = oi.eval_integral(lambda y: -y ** 4, oi.amplitude(oi.Plateau(1, 2)), k).value
    assert abs(v / (math.gamma(0.25) / 2 * k ** -0.25) - 1) <= 1e-12


def test_two_dimensional_product():
    k = 300.0
    amp = oi.amplitude(oi.Plateau(1, 2), oi.Plateau(1, 2))
    v = oi.eval_integral(lambda x, y: -(x ** 2 + 2 * y ** 2), amp, k).value
    assert abs(v / (math.pi / (k * math.sqrt(2))) - 1) <= 1e-9


def test_invalid_phase():
    with pytest.raises(InvalidPhaseError):
        oi.eval_integral(lambda x: x ** 2, PLATE, 10.0)
    with pytest.raises(InvalidPhaseError):
        oi.eval_integral(lambda x, y: 0.1 + 0 * x * y, oi.amplitude(oi.Bump(), oi.Bump()), 10.0)
    with pytest.raises(DimensionError):
        oi.eval_integral(gauss, PLATE, 10.0, dim=3)


def test_strict_mode_raises_with_estimate():
    # a wildly oscillating non-monotone phase with a tiny subdivision limit
    amp = oi.amplitude(oi.Plateau(2.0, 3.0))
    res = oi.eval_integral(lambda x: 1j * np.cos(40 * x), amp, 200.0, limit=5)
    assert not res.converged
    with pytest.raises(QuadratureError) as exc:
        oi.eval_integral(lambda x: 1j * np.cos(40 * x), amp, 200.0, limit=5, strict=True)
    assert exc.value.value is not None and exc.value.error is not None


@settings(max_examples=25, deadline=None)
@given(st.floats(10.0, 1e6), st.sampled_from(["gauss", "quartic", "mixed"]))
def test_truncation_soundness(k, which):
    if which == "gauss":
        f, amp = gauss, PLATE
    elif which == "quartic":
        f, amp = (lambda y: -y ** 4), oi.amplitude(oi.Bump(1.0))
    else:
        f, amp = (lambda y: 1j * y ** 3 - y ** 4), oi.amplitude(oi.Plateau(1, 2))
    a = oi.eval_integral(f, amp, k, p=(0.0,), fp=0j, trunc=40.0).value
    b = oi.eval_integral(f, amp, k, p=(0.0,), fp=0j, trunc=80.0).value
    assert abs(a - b) <= 1e-10 * abs(b)


# ---------------------------------------------------------------- leading term

@pytest.mark.parametrize("k", [1.0, 10.0, 1e3])
def test_leading_term_oracles(k):
    assert oi.leading_term(gauss, 0.0, k) == pytest.approx(math.sqrt(math.pi / k), rel=1e-12)
    assert oi.leading_term(fresnel, 0.0, k) == pytest.approx(
        math.sqrt(math.pi / k) * np.exp(1j * math.pi / 4), rel=1e-12)
    assert oi.leading_term(lambda x, y: -(x ** 2 + y ** 2), (0, 0), k) == pytest.approx(math.pi / k, rel=1e-12)


def test_leading_term_matches_quadrature():
    f = lambda x: -x ** 2 + 1j * x ** 2
    k = 1e4
    q = oi.eval_integral(f, PLATE, k).value
    assert abs(q / oi.leading_term(f, 0.0, k) - 1) <= 1e-8


def test_leading_term_branch_is_continuous():
    # arg of the result moves continuously as the Hessian rotates from -2 to 2i
    vals = [oi.leading_term(lambda x, s=s: -np.exp(1j * s) * x ** 2, 0.0, 1.0)
            for s in np.linspace(0, -math.pi / 2, 50)]
    args = np.unwrap(np.angle(vals))
    assert np.max(np.abs(np.diff(args))) < 0.05


def test_leading_term_preconditions():
    with pytest.raises(StationarityError):
        oi.leading_term(lambda x: -(x - 1e-3) ** 2, 0.0, 10.0)
    with pytest.raises(DegenerateHessianError):
        oi.leading_term(lambda y: -y ** 4, 0.0, 10.0)
    with pytest.raises(DegenerateHessianError):
        oi.leading_term(lambda x, y: -x ** 2 - y ** 4, (0, 0), 10.0)


def test_leading_term_includes_phase_value():
    k = 7.0
    v = oi.leading_term(lambda x: 0.5j - x ** 2, 0.0, k, amp_p=2.0)
    assert v == pytest.approx(2 * np.exp(0.5j * k) * math.sqrt(math.pi / k), rel=1e-12)


# ---------------------------------------------------------------- reduction

def _reduction_error(F, amp, k):
    red = oi.reduce_parameters(F, amp)
    full = oi.eval_integral(F, amp, k, p=(0.0, 0.0), fp=0j).value
    it = red.evaluate(k, p=(0.0,), fp=0j).value
    return abs(it - full), full


def test_reduction_quartic_family():
    F = lambda u, v: -u ** 2 * (1 + v ** 2) - v ** 4
    amp = oi.amplitude(oi.Bump(1.0), oi.Bump(1.0))
    e3, f3 = _reduction_error(F, amp, 1e3)
    e4, f4 = _reduction_error(F, amp, 1e4)
    assert e3 / abs(f3) <= 1e-3
    assert (e3 / abs(f3)) / (e4 / abs(f4)) >= 9.5


def test_reduction_separable_gaussian():
    G = lambda u, v: -u ** 2 - v ** 2
    red = oi.reduce_parameters(G, oi.amplitude(oi.Plateau(1, 2), oi.Plateau(1, 2)))
    k = 1e3
    it = red.evaluate(k, p=(0.0,), fp=0j).value
    assert it == pytest.approx(oi.leading_term(G, (0, 0), k), rel=1e-10)
    assert red.g(0.3) == pytest.approx(-0.09)


def test_reduction_without_stationary_v():
    F = lambda u, v: -u ** 2 + 1j * v
    amp = oi.amplitude(oi.Plateau(1, 2), oi.Plateau(1, 2))
    red = oi.reduce_parameters(F, amp)
    k = 50.0
    full = oi.eval_integral(F, amp, k, p=(0.0, 0.0), fp=0j).value
    it = red.evaluate(k, p=(0.0,), fp=0j).value
    lead = math.sqrt(math.pi / k)
    assert abs(full) <= 1e-3 * lead and abs(it - full) <= 1e-9 * lead


def test_reduction_rejects_wrong_critical_set():
    amp = oi.amplitude(oi.Bump(1.0), oi.Bump(1.0))
    with pytest.raises(CriticalSetError):
        oi.reduce_parameters(lambda u, v: u * v - u ** 2, amp)
    with pytest.raises(CriticalSetError):
        oi.reduce_parameters(lambda u, v: -u ** 2 * v ** 2 - v ** 4, amp)
    with pytest.raises(DimensionError):
        oi.reduce_parameters(lambda u, v: -u ** 2, amp, u_dim=2)


# ---------------------------------------------------------------- sweeps

def test_k_grid():
    g = oi.k_grid(1e2, 1e6)
    assert len(g) == 65 and g[0] == 1e2 and g[-1] == 1e6
    assert np.allclose(np.diff(np.log10(g)), 1 / 16)
    with pytest.raises(ValueError):
        oi.k_grid(10, 10)


def test_ksweep_invariants():
    k = oi.k_grid(1e2, 1e4)
    s = oi.KSweep(k, k ** -0.5, 1e-15 * np.ones_like(k))
    assert not s.low_confidence.any()
    s = oi.KSweep(k, k ** -0.5, np.ones_like(k))
    assert s.low_confidence.all()
    with pytest.raises(ValueError):
        oi.KSweep(k[:5], k[:5], k[:5])
    with pytest.raises(ValueError):
        oi.KSweep(k[::-1], k, k)


def _synthetic(series_terms, k, thetas=(0.0,)):
    ser = oi.AsymptoticSeries([oi.Term(a, b, c, 0.0, th) for a, b, c, th in series_terms],
                              [], max(t[1] for t in series_terms))
    return oi.KSweep(k, ser(k), np.zeros_like(k))


def test_fit_gaussian_sweep():
    k = oi.k_grid(1e2, 1e6)
    s = oi.run_sweep(lambda kk: oi.eval_integral(gauss, PLATE, kk), k)
    ser = oi.fit_series(s, [-0.5, -1.5, -2.5], 0)
    assert len(ser.terms) == 1
    t = ser.leading()
    assert (t.alpha, t.beta) == (-0.5, 0)
    assert abs(t.c - SQPI) <= 1e-6
    assert ser.residual <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=3, max_size=3),
       st.integers(0, 1))
def test_fit_idempotence(coefs, with_log):
    k = oi.k_grid(1e2, 1e4)
    lattice = [-0.25, -0.5, -0.75]
    terms = []
    for a, (re, im) in zip(lattice, coefs):
        c = complex(re, im)
        if abs(c) < 0.1:
            c = c + 0.5
        terms.append((a, 0, c, 0.0))
    if with_log:
        terms.append((-0.5, 1, 0.7 - 0.2j, 0.0))
    s = _synthetic(terms, k)
    ser = oi.fit_series(s, lattice, with_log, prune=0)
    for a, b, c, _ in terms:
        assert abs(ser.term(a, b).c - c) <= 1e-9 * max(1, abs(c))


def test_fit_multi_phase():
    k = np.r_[np.arange(20, 2000, 13), 2000].astype(float)
    t = 1.0
    terms = [(0.0, 0, 0.3 + 0.1j, 0.0), (0.0, 0, -0.2 + 0.5j, -t), (-1.0, 0, 0.4, 0.0), (-1.0, 0, 0.1j, -t)]
    s = _synthetic(terms, k)
    ser = oi.fit_series(s, [0, -1], 0, thetas=(0.0, -t), prune=0, weights="uniform")
    for a, b, c, th in terms:
        assert abs(ser.term(a, b, th).c - c) <= 1e-9


def test_fit_pruning_and_stderr():
    k = oi.k_grid(1e2, 1e6)
    s = _synthetic([(-0.5, 0, 2.0, 0.0), (-1.5, 0, 1e-9, 0.0)], k)
    ser = oi.fit_series(s, [-0.5, -1.5, -2.5], 1)
    assert [(t.alpha, t.beta) for t in ser.terms] == [(-0.5, 0)]
    assert ser.terms[0].stderr >= 0
    # noisy data: standard errors track the noise level
    rng = np.random.default_rng(1)
    noisy = oi.KSweep(k, (2.0 * k ** -0.5) * (1 + 1e-6 * rng.normal(size=len(k))), np.zeros_like(k))
    ser = oi.fit_series(noisy, [-0.5], 0)
    assert 1e-8 < ser.terms[0].stderr < 1e-5


def test_fit_keeps_terms_that_carry_small_k():
    # the -1 term is below the prune level at k = 1e6 but dominates the small-k error
    k = oi.k_grid(1e2, 1e6)
    s = _synthetic([(-1 / 3, 0, 1.5, 0.0), (-1.0, 0, 0.8, 0.0)], k)
    ser = oi.fit_series(s, [-1 / 3, -2 / 3, -1.0], 0)
    assert ser.term(-1.0) is not None and abs(ser.term(-1.0).c - 0.8) < 1e-8


def test_fit_errors():
    k = oi.k_grid(1e2, 1e3)
    s = oi.KSweep(k, k ** -0.5, np.zeros_like(k))
    with pytest.raises(ValueError):
        oi.fit_series(s, [-0.5], 0)
    k = oi.k_grid(1e2, 1e4)
    s = oi.KSweep(k, k ** -0.5, np.zeros_like(k))
    with pytest.raises(IllConditionedFitError):
        oi.fit_series(s, [-0.5, -0.5 - 1e-13], 0)


def test_series_serialisation():
    ser = oi.AsymptoticSeries([oi.Term(-1.5, 0, 1j), oi.Term(-0.5, 1, 2.0, 0.1)], [-0.5, -1.5], 1, 0.25)
    d = ser.to_dict()
    assert list(d) == ["terms", "residual"]
    assert d["terms"][0] == {"alpha": -0.5, "beta": 1, "re": 2.0, "im": 0.0, "stderr": 0.1}
    assert ser.leading().alpha == -0.5
    with pytest.raises(ValueError):
        oi.AsymptoticSeries([oi.Term(-0.5, 2, 1.0)], [-0.5], 1)


# ---------------------------------------------------------------- exponent

def test_detect_exponent_gaussian_and_quartic():
    k = oi.k_grid(1e2, 1e6)
    a, flag = oi.detect_exponent(oi.KSweep(k, SQPI * k ** -0.5, 0 * k))
    assert abs(a + 0.5) <= 0.01 and not flag
    a, flag = oi.detect_exponent(oi.KSweep(k, 1.8 * k ** -0.25 + 0.3 * k ** -1.25, 0 * k))
    assert abs(a + 0.25) <= 0.01 and not flag


def test_detect_exponent_log():
    k = oi.k_grid(1e2, 1e4)
    est = oi.detect_exponent(oi.KSweep(k, SQPI * k ** -0.5 * np.log(k) + 3.48 * k ** -0.5, 0 * k))
    assert est.log_flag
    assert abs(est.alpha + 0.5) <= 0.05
    # slopes increase toward the leading exponent
    assert np.all(np.diff(est.slopes) < 0)


def test_detect_exponent_oscillatory_warns():
    k = oi.k_grid(1e2, 1e4, 64)
    v = k ** -0.5 * (2 + np.cos(k))
    with pytest.warns(RuntimeWarning):
        est = oi.detect_exponent(oi.KSweep(k, v, 0 * k))
    assert est.oscillatory and abs(est.alpha + 0.5) < 0.1
    with pytest.raises(ValueError):
        oi.detect_exponent(oi.KSweep(k, 0 * k, 0 * k))


# ---------------------------------------------------------------- structure

def test_verify_structure():
    ts = ModelRecord("p", Condition.TRANSVERSE_SMOOTH, 0)
    kd = ModelRecord("p", Condition.KERNEL_DIM_LE_1, 1)
    un = ModelRecord("p", Condition.UNCLASSIFIED, 2)
    good = oi.AsymptoticSeries([oi.Term(-0.5, 0, 1.0)], [-0.5], 0)
    assert oi.verify_structure(good, ts, n_real=1).ok
    assert not oi.verify_structure(good, ts, n_real=2).ok
    q = oi.AsymptoticSeries([oi.Term(-0.75, 0, 1.0)], [-0.75], 0)
    assert oi.verify_structure(q, kd, n_real=2, m=4).ok
    assert not oi.verify_structure(q, kd, n_real=2, m=2).ok
    logged = oi.AsymptoticSeries([oi.Term(-0.5, 1, 1.0), oi.Term(-0.5, 0, 1.0)], [-0.5], 1)
    rep = oi.verify_structure(logged, ts, n_real=1)
    assert not rep.ok and "log" in rep.violations[0]
    assert oi.verify_structure(logged, un, n_real=2).ok
    with pytest.raises(StructureViolation):
        oi.verify_structure(logged, kd, n_real=1, raise_on_violation=True)
    # CP1-type prefactor convention: k * k^{-1} gives exponent 0
    assert oi.verify_structure(oi.AsymptoticSeries([oi.Term(0.0, 0, 1.0)], [0.0], 0), ts,
                               n_real=2, prefactor_exp=1.0).ok
