"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines
inline; they are also collected in the terminal summary.
"""

import math
import time
from fractions import Fraction

import numpy as np

from bellfam.classical import classical_maximum, family_support_split, negative_part, permanent, beta_matrix, strategy_value
from bellfam.family import APPENDIX_C, family, preset_333, preset_appendix_ch
from bellfam.inequality import DeterministicStrategy
from bellfam.optimize import (
    critical_efficiency_numeric,
    default_scaling_grid,
    entanglement_entropy,
    fit_symmetric_family,
    scaling_exponents,
    seesaw_best,
    seesaw_path,
)
from bellfam.quantum import (
    SymmetricState,
    analytic_conditional_probability,
    conditional_probability_bruteforce,
    eta_crit_closed_form,
    massar_pironio_lower_bound,
    measurement_matrices,
)

from conftest import record


def test_criterion_1_closed_form_thresholds():
    t0 = time.perf_counter()
    cases = {(2, 2): Fraction(2, 3), (3, 2): Fraction(3, 5), (3, 3): Fraction(1, 2), (4, 3): Fraction(6, 13)}
    cases.update({(n, 2): Fraction(n, 2 * n - 1) for n in range(2, 11)})
    cases.update({(m, m): Fraction(2, m + 1) for m in range(2, 9)})
    bad = [(k, eta_crit_closed_form(*k), v) for k, v in cases.items() if eta_crit_closed_form(*k) != v]
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 1
    record(1, ok, f"{len(cases)} exact cases, mismatches={bad}, {elapsed:.3f}s")
    assert ok


def test_criterion_2_zero_classical_bound():
    t0 = time.perf_counter()
    cases = {"preset_333": (preset_333(), 512), "family(2,2)": (family(2, 2), 16),
             "family(3,2)": (family(3, 2), 64), "family(3,3)": (family(3, 3), 512),
             "family(4,3)": (family(4, 3), 4096), "family(4,4)": (family(4, 4), 65536)}
    details, ok = [], True
    for name, (ineq, count) in cases.items():
        assert 2 ** (ineq.n * ineq.m) == count
        res = classical_maximum(ineq)
        good = res.maximum == 0 and isinstance(res.maximum, Fraction) and res.n_argmax >= 1
        ok &= good
        details.append(f"{name}: max={res.maximum} argmax={res.n_argmax}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 10
    record(2, ok, "; ".join(details) + f"; {elapsed:.2f}s")
    assert ok


def test_criterion_3_permanent_identity():
    t0 = time.perf_counter()
    checked, ok = 0, True
    for n, m in [(3, 3), (4, 3)]:
        ineq = family(n, m)
        family_support_split(ineq)
        c = 2 * math.factorial(n - m + 1)
        for bits in range(2 ** (n * m)):
            s = DeterministicStrategy.from_bits(bits, n, m)
            lhs = permanent(beta_matrix(s, n, m)) - negative_part(ineq, s)
            ok &= lhs == c * strategy_value(ineq, s)
            checked += 1
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30
    record(3, ok, f"{checked} strategies exact, {elapsed:.2f}s")
    assert ok


def test_criterion_4_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n, m = int(rng.choice([3, 4, 5])), int(rng.choice([2, 3]))
        alpha = rng.uniform(-math.pi, math.pi)
        phis = rng.uniform(-math.pi, math.pi, m)
        t = tuple(int(x) for x in rng.integers(0, m + 1, n))
        psi = SymmetricState(alpha, n).amplitudes()
        brute = conditional_probability_bruteforce(psi, measurement_matrices(phis), t)
        worst = max(worst, abs(brute - analytic_conditional_probability(alpha, phis, t)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 10
    record(4, ok, f"max |analytic - brute| = {worst:.2e} over 1000 draws, {elapsed:.2f}s")
    assert ok


def test_criterion_5_numeric_thresholds():
    t0 = time.perf_counter()
    cases = [("preset_333", preset_333(), 0.500, 1e-3), ("family(4,3)", family(4, 3), 0.4615, 2e-3),
             ("family(2,2)", family(2, 2), 0.667, 2e-3), ("family(3,2)", family(3, 2), 0.600, 2e-3)]
    details, ok = [], True
    for name, ineq, target, tol in cases:
        th = critical_efficiency_numeric(ineq, tol=1e-3, restarts=20, seed=0)
        good = abs(th.eta_crit - target) <= tol
        ok &= good
        details.append(f"{name}: {th.eta_crit:.5f} (target {target} +/- {tol})")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    record(5, ok, "; ".join(details) + f"; {elapsed:.1f}s")
    assert ok


def test_criterion_6_scaling_exponents():
    t0 = time.perf_counter()
    fit = scaling_exponents(preset_333(), default_scaling_grid(0.5), eta_crit=0.5, restarts=20, seed=0)
    targets = {"phi_1": (2, 0.3), "phi_2": (1, 0.15), "phi_3": (0.5, 0.1), "violation": (6, 0.5)}
    ok = not fit.partial
    for key, (target, tol) in targets.items():
        ok &= abs(fit.slopes[key] - target) <= tol
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    shown = ", ".join(f"{k}={fit.slopes[k]:.3f}" for k in targets)
    record(6, ok, f"{shown}; {elapsed:.1f}s")
    assert ok


def test_criterion_7_appendix():
    t0 = time.perf_counter()
    c = APPENDIX_C
    th = critical_efficiency_numeric(preset_appendix_ch(), tol=1e-3, seed=0)
    bound_at_c = (2 - 2 * c) / c ** 2
    entropy = entanglement_entropy(seesaw_best(preset_appendix_ch(), c + 0.01, seeds=range(10)).state)
    elapsed = time.perf_counter() - t0
    ok = (abs(th.eta_crit - 0.9136) <= 1e-3 and abs(bound_at_c - (math.sqrt(2) - 1) / 2) <= 1e-9
          and entropy > 0.95 and elapsed < 120)
    record(7, ok, f"threshold={th.eta_crit:.5f}, bound at c={bound_at_c:.12f}, "
                  f"entropy={entropy:.4f}, {elapsed:.1f}s")
    assert ok


def test_criterion_8_bound_ordering():
    pairs = [(n, m) for n in range(2, 13) for m in range(2, n + 1)]
    bad = [(n, m) for n, m in pairs if not massar_pironio_lower_bound(n, m) <= eta_crit_closed_form(n, m)]
    ok = not bad
    record(8, ok, f"{len(pairs)} (n,m) pairs exact, violations={bad}")
    assert ok


def test_criterion_9_near_threshold_state():
    t0 = time.perf_counter()
    grid = [0.52, 0.54, 0.56, 0.58, 0.60]
    path = seesaw_path(preset_333(), grid)
    fits = [fit_symmetric_family(r.state, r.measurements) for r in path]
    overlap_052 = fits[0][0]
    alphas = [abs(a) for _, a in fits]
    monotone = all(a < b for a, b in zip(alphas, alphas[1:]))
    ok = overlap_052 > 0.999 and monotone
    elapsed = time.perf_counter() - t0
    record(9, ok, f"overlap at 0.52={overlap_052:.7f}, |alpha| over {grid}="
                  f"{[round(a, 4) for a in alphas]}, {elapsed:.1f}s")
    assert ok
