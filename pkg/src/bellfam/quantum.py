"""Quantum conditional probabilities on real n-qubit states.

Two routes are provided: a direct state-vector contraction, and closed
forms valid for ``cos(a)|0...0> - sin(a)|W>`` with one set of real
measurement angles shared by all parties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .inequality import (
    BellInequality,
    GeneralInequality,
    InputError,
    party_count_of_term,
    permutation_count,
)

CLAMP_TOL = 1e-12
VIOLATION_TOL = 1e-9


class SingularAngleError(ZeroDivisionError):
    """A zero measurement angle makes a ratio s/c^- undefined."""


class NoThresholdError(ValueError):
    """Contribution signs admit no finite critical efficiency."""


@dataclass(frozen=True)
class MeasurementOperator:
    """Real rank-1 projector in the X-Z plane, ``phi = 0`` projects onto |1>."""

    phi: float

    @property
    def c_minus(self) -> float:
        return math.sin(self.phi / 2) ** 2

    @property
    def c_plus(self) -> float:
        return math.cos(self.phi / 2) ** 2

    @property
    def s(self) -> float:
        return -math.sin(self.phi) / 2

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.c_minus, self.s], [self.s, self.c_plus]])


def measurement_matrices(phis: Sequence[float]) -> np.ndarray:
    """Stack of m projectors, shape (m, 2, 2)."""
    phis = np.asarray(phis, dtype=float)
    cm = np.sin(phis / 2) ** 2
    cp = np.cos(phis / 2) ** 2
    s = -np.sin(phis) / 2
    return np.stack([np.stack([cm, s], -1), np.stack([s, cp], -1)], -2)


@dataclass(frozen=True)
class SymmetricState:
    """``cos(alpha)|0...0> - sin(alpha)|W>`` on n qubits."""

    alpha: float
    n: int

    def amplitudes(self) -> np.ndarray:
        psi = np.zeros(2 ** self.n)
        psi[0] = math.cos(self.alpha)
        w = -math.sin(self.alpha) / math.sqrt(self.n)
        for k in range(self.n):
            psi[1 << (self.n - 1 - k)] = w
        return psi


def w_state(n: int) -> np.ndarray:
    return -SymmetricState(math.pi / 2, n).amplitudes()


# -- brute-force route ------------------------------------------------------

def _as_vector(state) -> np.ndarray:
    if isinstance(state, SymmetricState):
        return state.amplitudes()
    return np.asarray(state, dtype=float)


def _qubits(psi: np.ndarray) -> int:
    n = int(round(math.log2(len(psi))))
    if 2 ** n != len(psi):
        raise InputError(f"state length {len(psi)} is not a power of two")
    return n


def party_settings(settings, n: int, m: int | None = None) -> np.ndarray:
    """Normalize measurements to an array of shape (n, m, 2, 2)."""
    ops = np.asarray(settings, dtype=float)
    if ops.ndim == 1:
        ops = measurement_matrices(ops)
    if ops.ndim == 3:
        ops = np.broadcast_to(ops, (n,) + ops.shape)
    if ops.ndim != 4 or ops.shape[0] != n or ops.shape[2:] != (2, 2):
        raise InputError(f"measurements of shape {ops.shape} do not fit {n} parties")
    if m is not None and ops.shape[1] < m:
        raise InputError(f"need {m} settings per party, got {ops.shape[1]}")
    return ops


def apply_local(psi: np.ndarray, ops: Sequence[np.ndarray | None]) -> np.ndarray:
    """Apply one 2x2 operator per qubit (``None`` = identity), qubit 0 most significant."""
    n = len(ops)
    out = psi.reshape((2,) * n)
    for k, op in enumerate(ops):
        if op is None:
            continue
        out = np.moveaxis(np.tensordot(op, out, axes=([1], [k])), 0, k)
    return out.reshape(-1)


def conditional_probability_bruteforce(state, settings, t: Sequence[int]) -> float:
    """<psi| (x)_i A_{i, t_i} |psi> with index 0 meaning identity."""
    psi = _as_vector(state)
    n = _qubits(psi)
    if len(t) != n:
        raise InputError(f"tuple {tuple(t)} does not match {n} qubits")
    ops = party_settings(settings, n, max(t) if len(t) else 0)
    applied = apply_local(psi, [None if j == 0 else ops[i, j - 1] for i, j in enumerate(t)])
    p = float(psi @ applied)
    if p < -CLAMP_TOL or p > 1 + CLAMP_TOL:
        raise ValueError(f"probability {p} outside [0, 1]; state not normalized?")
    return min(max(p, 0.0), 1.0)


# -- analytic route ---------------------------------------------------------

@dataclass(frozen=True)
class AnalyticElements:
    """Matrix elements of the (n-1)-party reference operator."""

    n: int
    s00: float
    xi: float
    phis: tuple

    def f00(self, t: Sequence[int]) -> float:
        return math.prod(MeasurementOperator(self.phis[j - 1]).c_minus for j in t if j)

    def chi(self, t: Sequence[int]) -> float:
        inv = _inverse_ratio([self.phis[j - 1] for j in t if j], self.n)
        if inv == 0:
            return math.inf
        return 1 / inv


def _inverse_ratio(phis: Sequence[float], n: int) -> float:
    """(1/sqrt n) * sum s/c^- = -(1/sqrt n) * sum cot(phi/2)."""
    total = 0.0
    for phi in phis:
        if phi == 0:
            raise SingularAngleError("zero measurement angle in s/c^- ratio")
        total -= 1 / math.tan(phi / 2)
    return total / math.sqrt(n)


def _setting_of_party(i: int, m: int) -> int:
    # parties 2..n of the reference term use settings 2, 3, ..., m, m, ...
    return min(i, m)


def analytic_elements(phis: Sequence[float], n: int) -> AnalyticElements:
    m = len(phis)
    if m < 2 or n < m:
        raise InputError("need 2 <= m <= n")
    ref = [phis[_setting_of_party(i, m) - 1] for i in range(2, n + 1)]
    s00 = math.prod(MeasurementOperator(p).c_minus for p in ref)
    inv = _inverse_ratio(ref, n)
    xi = math.inf if inv == 0 else 1 / inv
    return AnalyticElements(n, s00, xi, tuple(float(p) for p in phis))


def _probability_closed_form(alpha: float, phis: Sequence[float], t: Sequence[int], n: int) -> float:
    angles = [phis[j - 1] for j in t if j]
    zeros = len(t) - len(angles)
    ca, sa = math.cos(alpha), math.sin(alpha)
    if all(p != 0 for p in angles):
        f00 = math.prod(math.sin(p / 2) ** 2 for p in angles)
        inv_chi = _inverse_ratio(angles, n)
        return f00 * ((ca - sa * inv_chi) ** 2 + zeros * sa * sa / n)
    # a zero angle kills F00; keep the finite products term by term
    cm = [math.sin(p / 2) ** 2 for p in angles]
    cp = [math.cos(p / 2) ** 2 for p in angles]
    s = [-math.sin(p) / 2 for p in angles]
    k = len(angles)

    def prod_except(*skip):
        return math.prod(cm[i] for i in range(k) if i not in skip)

    f00 = prod_except()
    fw0 = sum(s[a] * prod_except(a) for a in range(k)) / math.sqrt(n)
    fww = sum(s[a] * s[b] * prod_except(a, b) for a in range(k) for b in range(k) if a != b)
    fww += sum(cp[a] * prod_except(a) for a in range(k)) + zeros * f00
    fww /= n
    return ca * ca * f00 - 2 * ca * sa * fw0 + sa * sa * fww


def analytic_conditional_probability(alpha: float, phis: Sequence[float], t: Sequence[int]) -> float:
    """Closed-form P_Q(t) for the symmetric state with shared settings ``phis``.

    Valid for any tuple; at nonzero angles this is
    ``F00 [(cos a - sin a / chi)^2 + z sin^2 a / n]`` with z identity slots.
    """
    n = len(t)
    if any(j < 0 or j > len(phis) for j in t):
        raise InputError(f"tuple {tuple(t)} out of range for {len(phis)} settings")
    return _probability_closed_form(alpha, phis, t, n)


def mixing_angle_for_threshold(phis: Sequence[float], n: int) -> float:
    """alpha with tan(alpha) = xi, cancelling the leading reference-term piece."""
    return math.atan(analytic_elements(phis, n).xi)


# -- Bell values ------------------------------------------------------------

def _check_eta(eta: float):
    if not 0 <= eta <= 1:
        raise InputError(f"efficiency {eta} outside [0, 1]")


def quantum_bell_value(ineq: BellInequality | GeneralInequality, state, settings,
                       eta: float = 1.0) -> float:
    """Efficiency-weighted Bell value minus the classical bound.

    Positive values certify a violation detectable with efficiency ``eta``.
    """
    _check_eta(eta)
    psi = _as_vector(state)
    n = _qubits(psi)
    if n != ineq.n:
        raise InputError(f"state has {n} qubits, inequality has {ineq.n} parties")
    ops = party_settings(settings, n, ineq.m)
    bound = ineq.classical_bound or 0
    shared = isinstance(ineq, BellInequality) and np.allclose(ops, ops[:1])
    if shared:
        items = [(t, permutation_count(t) * float(b)) for t, b in ineq.coeffs.items()]
    else:
        items = [(t, float(b)) for t, b in ineq.terms().coeffs.items()]
    total = 0.0
    for t, w in items:
        p = conditional_probability_bruteforce(psi, ops, t)
        total += w * eta ** party_count_of_term(t) * p
    return total - float(bound)


def analytic_bell_value(ineq: BellInequality, alpha: float, phis: Sequence[float],
                        eta: float = 1.0) -> float:
    """Same as :func:`quantum_bell_value` for the symmetric state, via closed forms."""
    _check_eta(eta)
    total = 0.0
    for t, b in ineq.coeffs.items():
        p = analytic_conditional_probability(alpha, phis, t)
        total += permutation_count(t) * float(b) * eta ** party_count_of_term(t) * p
    return total - float(ineq.classical_bound or 0)


def contributions(ineq: BellInequality, alpha: float, phis: Sequence[float]) -> dict[int, float]:
    """eta-stripped sums grouped by the number of measuring parties."""
    out: dict[int, float] = {}
    for t, b in ineq.coeffs.items():
        l = party_count_of_term(t)
        p = analytic_conditional_probability(alpha, phis, t)
        out[l] = out.get(l, 0.0) + permutation_count(t) * float(b) * p
    return out


def threshold_from_contributions(sub: float, full: float) -> float:
    """Efficiency at which eta^(n-1) sub + eta^n full vanishes."""
    if not (sub < 0 and full > 0):
        raise NoThresholdError(f"need sub < 0 < full, got sub={sub}, full={full}")
    return -sub / full


def eta_crit_closed_form(n: int, m: int) -> Fraction:
    if m < 2 or m > n:
        raise InputError(f"need 2 <= m <= n (got n={n}, m={m})")
    return 2 / (2 + m - Fraction(2, n - m + 2))


def massar_pironio_lower_bound(n: int, m: int) -> Fraction:
    if n < 2 or m < 2:
        raise InputError("need n, m >= 2")
    return Fraction(n, (n - 1) * m + 1)


def robustness(eta_crit):
    if not 0 <= eta_crit <= 1:
        raise InputError("critical efficiency must lie in [0, 1]")
    return 1 - eta_crit
