import math

import numpy as np
import pytest

from bellfam.family import preset_333, preset_appendix_ch
from bellfam.inequality import InputError
from bellfam.optimize import (
    NoViolationError,
    OptimizationResult,
    SymmetricEvaluator,
    critical_efficiency_numeric,
    entanglement_entropy,
    extrapolate_start,
    fit_symmetric_family,
    optimize_angles,
    seesaw,
    seesaw_best,
)
from bellfam.quantum import SymmetricState, analytic_bell_value, apply_local


def test_evaluator_matches_analytic():
    ineq = preset_333()
    ev = SymmetricEvaluator(ineq)
    for eta in (1.0, 0.8):
        a, phis = 0.4, np.array([0.3, -0.7, 1.3])
        assert abs(ev.value(a, phis, eta) - analytic_bell_value(ineq, a, phis, eta)) < 1e-12


def test_optimize_angles_at_unit_efficiency():
    ineq = preset_333()
    r = optimize_angles(ineq, 1.0, restarts=10, seed=0)
    assert r.violates
    assert r.value > 0.52
    assert abs(analytic_bell_value(ineq, r.alpha, r.phis) - r.value) < 1e-12


def test_optimize_is_deterministic():
    ineq = preset_333()
    a = optimize_angles(ineq, 0.9, restarts=5, seed=3)
    b = optimize_angles(ineq, 0.9, restarts=5, seed=3)
    assert a.value == b.value and np.array_equal(a.phis, b.phis)


def test_no_violation_below_threshold():
    r = optimize_angles(preset_333(), 0.45, restarts=10, seed=0)
    assert not r.violates


def test_bisection_with_custom_predicate():
    th = critical_efficiency_numeric(preset_333(), tol=1e-4, violates=lambda e, lo: (e > 0.3141, None))
    assert th.lower <= 0.3141 < th.upper and th.upper - th.lower <= 1e-4
    with pytest.raises(NoViolationError):
        critical_efficiency_numeric(preset_333(), violates=lambda e, lo: (False, None))


def test_extrapolation_follows_power_law():
    hist = []
    for eta in (0.6, 0.55):
        d = eta - 0.5
        hist.append((eta, OptimizationResult(d, np.array([d ** 2, -d, d ** 0.5]), 0.0, eta, True, 0)))
    (alpha, phis), _ = extrapolate_start(hist, 0.52, 0.5)
    assert math.isclose(alpha, 0.02, rel_tol=1e-9)
    assert np.allclose(phis, [0.02 ** 2, -0.02, 0.02 ** 0.5], rtol=1e-9)
    assert extrapolate_start([], 0.5, 0.4) == []


def test_seesaw_reaches_tsirelson_for_ch():
    # c = 1: P11 + P12 + P21 - P22 - PA - PB <= 0, quantum max (sqrt2 - 1)/2
    ch = preset_appendix_ch(1.0)
    r = seesaw_best(ch, 1.0, seeds=range(5))
    assert abs(r.value - (math.sqrt(2) - 1) / 2) < 1e-8
    assert r.converged
    assert all(b >= a - 1e-10 for a, b in zip(r.history, r.history[1:]))


def test_seesaw_dominates_symmetric_ansatz():
    ineq = preset_333()
    s = seesaw_best(ineq, 1.0, seeds=range(5))
    o = optimize_angles(ineq, 1.0, restarts=10)
    assert s.value >= o.value - 1e-6
    for ops in s.measurements.reshape(-1, 2, 2):
        assert np.allclose(ops @ ops, ops, atol=1e-10)


def test_seesaw_input_checks():
    with pytest.raises(InputError):
        seesaw(preset_333(), 1.5)
    with pytest.raises(InputError):
        seesaw(preset_333(), 1.0, n=4)


def _rot(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def test_family_fit_recovers_rotated_state():
    psi = SymmetricState(0.3, 3).amplitudes()
    rotated = apply_local(psi, [_rot(0.2), _rot(-0.4), _rot(1.0)])
    overlap, alpha = fit_symmetric_family(rotated)
    assert overlap > 1 - 1e-9
    assert abs(abs(alpha) - 0.3) < 1e-5


def test_entanglement_entropy():
    bell = np.array([1, 0, 0, 1]) / math.sqrt(2)
    assert abs(entanglement_entropy(bell) - 1.0) < 1e-12
    assert abs(entanglement_entropy(np.array([1.0, 0, 0, 0]))) < 1e-12
