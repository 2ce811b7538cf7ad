"""Violation maximization, see-saw, threshold bisection and scaling fits."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.sparse.linalg import LinearOperator, eigsh
from scipy.stats import linregress

from .inequality import BellInequality, InputError, party_count_of_term, permutation_count
from .quantum import (
    VIOLATION_TOL,
    analytic_conditional_probability,
    apply_local,
    party_settings,
    w_state,
)

_LOG_MIN = -150.0
_LOG_MAX = math.log(2 * math.pi)


class SymmetricEvaluator:
    """Vectorized closed-form Bell value for the symmetric state and shared angles."""

    def __init__(self, ineq: BellInequality):
        if not isinstance(ineq, BellInequality):
            raise InputError("closed-form evaluation needs a permutation-symmetric inequality")
        self.ineq = ineq
        self.n, self.m = ineq.n, ineq.m
        keys = list(ineq.coeffs)
        self.counts = np.array([[t.count(j) for j in range(1, self.m + 1)] for t in keys], float)
        self.zeros = np.array([t.count(0) for t in keys], float)
        self.weights = np.array([permutation_count(t) * float(b) for t, b in ineq.coeffs.items()])
        self.parties = np.array([party_count_of_term(t) for t in keys])
        self.bound = float(ineq.classical_bound or 0)
        ref = [min(i, self.m) for i in range(2, self.n + 1)]
        self.ref_counts = np.array([ref.count(j) for j in range(1, self.m + 1)], float)

    def _cot(self, phis):
        h = np.asarray(phis, float) / 2
        with np.errstate(divide="ignore"):
            return np.cos(h) / np.sin(h), np.sin(h) ** 2

    def xi(self, phis) -> float:
        cot, _ = self._cot(phis)
        inv = -(self.ref_counts @ cot) / math.sqrt(self.n)
        return math.inf if inv == 0 else 1 / inv

    def terms(self, alpha: float, phis, eta: float) -> np.ndarray:
        """Per-tuple contributions pi * B * eta^l * P."""
        phis = np.asarray(phis, float)
        ca, sa = math.cos(alpha), math.sin(alpha)
        if np.all(phis != 0):
            cot, cm = self._cot(phis)
            f00 = np.prod(cm ** self.counts, axis=1)
            inv = -(self.counts @ cot) / math.sqrt(self.n)
            probs = f00 * ((ca - sa * inv) ** 2 + self.zeros * sa * sa / self.n)
        else:
            probs = np.array([analytic_conditional_probability(alpha, phis, t) for t in self.ineq.coeffs])
        return self.weights * eta ** self.parties * probs

    def value(self, alpha: float, phis, eta: float) -> float:
        return float(self.terms(alpha, phis, eta).sum()) - self.bound

    def normalized(self, alpha: float, phis, eta: float) -> float:
        """Value divided by the sum of absolute term sizes; same sign as the value."""
        terms = self.terms(alpha, phis, eta)
        scale = np.abs(terms).sum() + abs(self.bound)
        return 0.0 if scale == 0 else (float(terms.sum()) - self.bound) / scale


@dataclass
class OptimizationResult:
    alpha: float
    phis: np.ndarray
    value: float
    eta: float
    converged: bool
    restarts_used: int
    normalized: float = 0.0

    @property
    def violates(self) -> bool:
        return self.normalized > VIOLATION_TOL


_NM = {"xatol": 1e-10, "fatol": 1e-15, "maxiter": 6000, "maxfev": 6000, "adaptive": True}
_RAW_NM = {"xatol": 1e-7, "fatol": 1e-12, "maxiter": 3000, "maxfev": 3000, "adaptive": True}


def _polish_log(ev: SymmetricEvaluator, eta: float, signs, u0, d0, constrain_alpha: bool):
    """Local search over log|phi| (signs fixed) and a relative offset of alpha from atan(xi)."""

    def unpack(x):
        u = np.clip(x[: ev.m], _LOG_MIN, _LOG_MAX)
        phis = signs * np.exp(u)
        a0 = math.atan(ev.xi(phis))
        d = 0.0 if constrain_alpha else x[ev.m]
        return a0 * (1 + d), phis

    x0 = np.append(u0, 0.0 if constrain_alpha else d0) if not constrain_alpha else np.asarray(u0, float)
    a, p = unpack(x0)
    scale = float(np.abs(ev.terms(a, p, eta)).sum()) or 1.0

    def f(x):
        a, p = unpack(x)
        v = ev.value(a, p, eta)
        return -v / scale if math.isfinite(v) else math.inf

    best = None
    x = x0
    for _ in range(3):
        r = minimize(f, x, method="Nelder-Mead", options=_NM)
        if best is not None and r.fun >= best.fun - 1e-15 * abs(best.fun):
            best = r if r.fun < best.fun else best
            break
        best, x = r, r.x
    a, p = unpack(best.x)
    return a, p, ev.value(a, p, eta), bool(best.success)


def _raw_search(ev: SymmetricEvaluator, eta: float, x0, constrain_alpha: bool):
    def unpack(x):
        phis = np.asarray(x[-ev.m:], float)
        if constrain_alpha:
            xi = ev.xi(phis)
            return math.atan(xi) if math.isfinite(xi) else math.pi / 2, phis
        return float(x[0]), phis

    x0 = np.asarray(x0[1:] if constrain_alpha else x0, float)
    scale = float(np.abs(ev.terms(*unpack(x0), eta)).sum()) or 1.0

    def f(x):
        v = ev.value(*unpack(x), eta)
        return -v / scale if math.isfinite(v) else math.inf

    r = minimize(f, x0, method="Nelder-Mead", options=_RAW_NM)
    a, p = unpack(r.x)
    return a, p, ev.value(a, p, eta), bool(r.success)


def _to_log(phis):
    phis = np.asarray(phis, float)
    signs = np.where(phis < 0, -1.0, 1.0)
    u = np.log(np.maximum(np.abs(phis), math.exp(_LOG_MIN)))
    return signs, u


def optimize_angles(ineq: BellInequality, eta: float, restarts: int = 20, seed: int = 0,
                    constrain_alpha: bool = False, warm_starts: Sequence = (),
                    polish_top: int = 2) -> OptimizationResult:
    """Maximize the efficiency-weighted value over (alpha, phi_1..phi_m).

    Random starts draw angles uniformly from [-0.5, 0.5]. Every local
    optimum is polished in log-angle coordinates for each sign pattern of
    the angles, which resolves the widely separated angle scales near the
    threshold. ``warm_starts`` are extra (alpha, phis) guesses.
    """
    if not 0 < eta <= 1:
        raise InputError(f"efficiency {eta} outside (0, 1]")
    ev = SymmetricEvaluator(ineq)
    m = ev.m
    rng = np.random.default_rng(seed)
    candidates = []
    for alpha, phis in warm_starts:
        candidates.append((float(alpha), np.asarray(phis, float)))
    raw = []
    for _ in range(restarts):
        x0 = rng.uniform(-0.5, 0.5, m + 1)
        a, p, v, _ = _raw_search(ev, eta, x0, constrain_alpha)
        raw.append((v, a, p))
    raw.sort(key=lambda r: -r[0] if math.isfinite(r[0]) else math.inf)
    candidates += [(a, p) for _, a, p in raw[:polish_top]]

    best = max(((a, p, v, True) for v, a, p in raw), key=lambda r: r[2], default=None)
    seen = set()
    for a, p in candidates:
        signs0, u = _to_log(p)
        if signs0[0] < 0:
            signs0 = -signs0
            a = -a
        xi = ev.xi(signs0 * np.exp(u))
        a0 = math.atan(xi) if math.isfinite(xi) and xi != 0 else 0.0
        d0 = a / a0 - 1 if a0 != 0 else 0.0
        patterns = [signs0] + [np.array((1.0,) + s) for s in itertools.product((1.0, -1.0), repeat=m - 1)]
        for signs in patterns:
            key = (tuple(signs), tuple(np.round(u, 2)))
            if key in seen:
                continue
            seen.add(key)
            same = np.array_equal(signs, signs0)
            res = _polish_log(ev, eta, signs, u, d0 if same else 0.0, constrain_alpha)
            if best is None or res[2] > best[2]:
                best = res
    alpha, phis, value, ok = best
    return OptimizationResult(float(alpha), np.asarray(phis, float), float(value), float(eta), ok,
                              restarts, ev.normalized(alpha, phis, eta))


def extrapolate_start(history: Sequence[tuple[float, OptimizationResult]], eta: float, eta_crit: float):
    """Power-law extrapolation of the last two solutions in log(eta - eta_crit)."""
    if not history:
        return []
    if len(history) == 1:
        r = history[-1][1]
        return [(r.alpha, r.phis)]
    (e1, r1), (e2, r2) = history[-2], history[-1]
    x1, x2, x = (math.log(max(e - eta_crit, 1e-300)) for e in (e1, e2, eta))
    if x1 == x2:
        return [(r2.alpha, r2.phis)]
    t = (x - x2) / (x2 - x1)
    s2, u2 = _to_log(r2.phis)
    _, u1 = _to_log(r1.phis)
    phis = s2 * np.exp(np.clip(u2 + t * (u2 - u1), _LOG_MIN, _LOG_MAX))
    la1, la2 = math.log(abs(r1.alpha) or 1e-300), math.log(abs(r2.alpha) or 1e-300)
    alpha = math.copysign(math.exp(la2 + t * (la2 - la1)), r2.alpha)
    return [(alpha, phis), (r2.alpha, r2.phis)]


class NoViolationError(RuntimeError):
    """The inequality shows no violation even with perfect detectors."""


@dataclass
class ThresholdResult:
    eta_crit: float
    lower: float
    upper: float
    witness: OptimizationResult | None
    steps: list = field(default_factory=list)

    def __float__(self):
        return self.eta_crit


def seesaw_predicate(ineq, seeds: Sequence[int] = range(10)):
    """Violation test by best-of-seeds see-saw, for inequalities outside the symmetric ansatz."""

    def check(eta, _lower):
        r = seesaw_best(ineq, eta, seeds=seeds)
        return r.value > VIOLATION_TOL, r

    return check


def critical_efficiency_numeric(ineq, tol: float = 1e-3, restarts: int = 20, seed: int = 0,
                                lower: float = 0.0, violates=None) -> ThresholdResult:
    """Bisect on eta for the predicate "a violation is found"; returns the upper end.

    Symmetric inequalities use :func:`optimize_angles` and compare the
    normalized value with ``VIOLATION_TOL``; general inequalities fall back
    to a two-qubit-per-party see-saw. ``violates(eta, lower)`` overrides
    both and must return ``(bool, witness)``.
    """
    history: list[tuple[float, OptimizationResult]] = []

    def default(eta, lo):
        warm = extrapolate_start(history, eta, lo)
        r = optimize_angles(ineq, eta, restarts=restarts, seed=seed, warm_starts=warm)
        return r.violates, r

    if violates is None and not isinstance(ineq, BellInequality):
        violates = seesaw_predicate(ineq, seeds=range(seed, seed + 10))
    check = violates or default
    ok, witness = check(1.0, lower)
    if not ok:
        raise NoViolationError("no violation found at eta = 1")
    if isinstance(witness, OptimizationResult):
        history.append((1.0, witness))
    lo, hi = lower, 1.0
    steps = [(1.0, True)]
    while hi - lo > tol:
        mid = (lo + hi) / 2
        ok, res = check(mid, lo)
        steps.append((mid, bool(ok)))
        if ok:
            hi, witness = mid, res
            if isinstance(res, OptimizationResult):
                history.append((mid, res))
        else:
            lo = mid
    return ThresholdResult(hi, lo, hi, witness, steps)


@dataclass
class ScalingFit:
    slopes: dict
    stderr: dict
    points: list
    partial: bool = False

    def to_dict(self) -> dict:
        return {
            "slopes": self.slopes,
            "stderr": self.stderr,
            "partial": self.partial,
            "points": [
                {"eta": r.eta, "alpha": r.alpha, "phis": [float(p) for p in r.phis], "violation": r.value}
                for r in self.points
            ],
        }


def default_scaling_grid(eta_crit: float = 0.5, num: int = 10, lo: float = 1e-4, hi: float = 0.05):
    return list(eta_crit + np.geomspace(lo, hi, num))


def scaling_exponents(ineq: BellInequality, eta_grid: Sequence[float] | None = None,
                      eta_crit: float = 0.5, restarts: int = 20, seed: int = 0) -> ScalingFit:
    """Fit log|phi_j| and log(violation) against log(eta - eta_crit).

    The grid is walked from the largest efficiency down, each point warm
    started from a power-law extrapolation of the previous two.
    """
    grid = sorted(eta_grid if eta_grid is not None else default_scaling_grid(eta_crit), reverse=True)
    if len(grid) < 2 or any(e <= eta_crit for e in grid):
        raise InputError("grid needs at least two efficiencies above eta_crit")
    history: list[tuple[float, OptimizationResult]] = []
    points, partial = [], False
    for eta in grid:
        warm = extrapolate_start(history, eta, eta_crit)
        r = optimize_angles(ineq, eta, restarts=restarts, seed=seed, warm_starts=warm)
        if r.value <= 0:
            partial = True
            continue
        history.append((eta, r))
        points.append(r)
    x = np.log([r.eta - eta_crit for r in points])
    series = {f"phi_{j + 1}": [abs(r.phis[j]) for r in points] for j in range(ineq.m)}
    series["violation"] = [r.value for r in points]
    slopes, errs = {}, {}
    for name, ys in series.items():
        if len(points) < 2:
            slopes[name] = errs[name] = math.nan
            continue
        fit = linregress(x, np.log(ys))
        slopes[name], errs[name] = float(fit.slope), float(fit.stderr)
    return ScalingFit(slopes, errs, points[::-1], partial)


# -- see-saw ------------------------------------------------------------------

@dataclass
class SeesawResult:
    state: np.ndarray
    measurements: np.ndarray  # (n, m, 2, 2)
    value: float
    converged: bool
    rounds: int
    history: list = field(default_factory=list)


def _weighted_terms(ineq, eta):
    terms = ineq.terms()
    return [(t, float(b) * eta ** party_count_of_term(t)) for t, b in terms.coeffs.items()]


def _operators(ops, t, skip=None):
    return [None if (j == 0 or i == skip) else ops[i, j - 1] for i, j in enumerate(t)]


def bell_operator_apply(terms, ops, psi):
    out = np.zeros_like(psi)
    for t, c in terms:
        out += c * apply_local(psi, _operators(ops, t))
    return out


def leading_eigenvector(terms, ops, n):
    dim = 2 ** n
    if dim <= 256:
        mat = np.column_stack([bell_operator_apply(terms, ops, e) for e in np.eye(dim)])
        vals, vecs = np.linalg.eigh((mat + mat.T) / 2)
        return vecs[:, -1], vals[-1]
    op = LinearOperator((dim, dim), matvec=lambda v: bell_operator_apply(terms, ops, v), dtype=float)
    vals, vecs = eigsh(op, k=1, which="LA", tol=1e-12)
    return vecs[:, 0], vals[0]


def _local_operator(terms, ops, psi, party, setting, n):
    k = np.zeros((2, 2))
    left = np.moveaxis(psi.reshape((2,) * n), party, 0).reshape(2, -1)
    for t, c in terms:
        if t[party] != setting:
            continue
        phi = apply_local(psi, _operators(ops, t, skip=party))
        right = np.moveaxis(phi.reshape((2,) * n), party, 0).reshape(2, -1)
        k += c * (left @ right.T)
    return (k + k.T) / 2


def _expectation(terms, ops, psi, bound):
    return float(psi @ bell_operator_apply(terms, ops, psi)) - bound


def random_real_projectors(rng, m):
    angles = rng.uniform(-math.pi, math.pi, m)
    v = np.stack([np.cos(angles / 2), np.sin(angles / 2)], -1)
    return np.einsum("ka,kb->kab", v, v)


def seesaw(ineq, eta: float, n: int | None = None, seed: int = 0, max_rounds: int = 500,
           tol: float = 1e-11, initial=None) -> SeesawResult:
    """Alternate exact maximization over the state and over each projector.

    The state step takes the top eigenvector of the efficiency-weighted
    Bell operator; each measurement step takes the projector onto the
    positive eigenspace of that setting's effective 2x2 operator.
    """
    if not 0 < eta <= 1:
        raise InputError(f"efficiency {eta} outside (0, 1]")
    n = ineq.n if n is None else n
    if n != ineq.n:
        raise InputError("qubit count must equal the number of parties")
    if n > 12:
        raise InputError("see-saw limited to n <= 12")
    m = ineq.m
    rng = np.random.default_rng(seed)
    terms = _weighted_terms(ineq, eta)
    bound = float(ineq.classical_bound or 0)
    if initial is None:
        ops = np.broadcast_to(random_real_projectors(rng, m), (n, m, 2, 2)).copy()
    else:
        ops = np.array(party_settings(initial, n, m), dtype=float)
    psi, _ = leading_eigenvector(terms, ops, n)
    value = _expectation(terms, ops, psi, bound)
    history = [value]
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        previous = value
        for i in range(n):
            for j in range(m):
                k = _local_operator(terms, ops, psi, i, j + 1, n)
                vals, vecs = np.linalg.eigh(k)
                if np.any(np.abs(vals) <= 1e-12):
                    continue
                pos = vecs[:, vals > 0]
                ops[i, j] = pos @ pos.T
        psi, _ = leading_eigenvector(terms, ops, n)
        value = _expectation(terms, ops, psi, bound)
        history.append(value)
        if value < previous - 1e-10 * max(1.0, abs(previous)):
            raise AssertionError(f"see-saw decreased the value: {previous} -> {value}")
        if abs(value - previous) < tol:
            converged = True
            break
    return SeesawResult(psi, ops, value, converged, rounds, history)


def seesaw_best(ineq, eta: float, seeds: Sequence[int] = range(10), **kwargs) -> SeesawResult:
    best = None
    for s in seeds:
        r = seesaw(ineq, eta, seed=s, **kwargs)
        if best is None or r.value > best.value:
            best = r
    return best


def seesaw_path(ineq, etas: Sequence[float], seeds: Sequence[int] = range(10),
                max_rounds: int = 2000) -> list[SeesawResult]:
    """See-saw along a descending efficiency grid, each point started from the last.

    Random starts rarely land in the small-angle basin close to the
    threshold; following the solution down from a larger efficiency does.
    """
    results = []
    previous = None
    for eta in sorted(etas, reverse=True):
        if previous is None:
            r = seesaw_best(ineq, eta, seeds=seeds, max_rounds=max_rounds)
        else:
            r = seesaw(ineq, eta, initial=previous.measurements, max_rounds=max_rounds)
        results.append(r)
        previous = r
    return results[::-1]


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _family_components(psi, thetas, n):
    v = apply_local(psi, [_rotation(t).T for t in thetas])
    return v[0], float(v @ w_state(n))


def fit_symmetric_family(state, measurements=None, starts: int = 16, seed: int = 0) -> tuple[float, float]:
    """Best overlap of ``state`` with cos(a)|0..0> - sin(a)|W>, up to local real rotations.

    Returns ``(overlap, alpha)``. Local frames start aligned so that each
    party's first projector points at |1>.
    """
    psi = np.asarray(state, float)
    n = int(round(math.log2(len(psi))))
    guesses = [np.zeros(n)]
    if measurements is not None:
        th = []
        for i in range(n):
            vals, vecs = np.linalg.eigh(measurements[i][0])
            v = vecs[:, -1]
            th.append(math.atan2(-v[0], v[1]))
        guesses.insert(0, np.array(th))
    guesses += [g + k * math.pi / 2 for g in list(guesses) for k in (1, 2, 3)]
    guesses += list(np.random.default_rng(seed).uniform(-math.pi, math.pi, (starts, n)))

    def loss(th):
        a, b = _family_components(psi, th, n)
        return -(a * a + b * b)

    coarse = min((minimize(loss, g, method="Nelder-Mead", options={"xatol": 1e-4, "fatol": 1e-8})
                  for g in guesses), key=lambda r: r.fun)
    best = minimize(loss, coarse.x, method="Nelder-Mead",
                    options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 5000})
    a, b = _family_components(psi, best.x, n)
    if a < 0:
        a, b = -a, -b
    return math.sqrt(-best.fun), math.atan2(-b, a)


def entanglement_entropy(state, cut: int = 1) -> float:
    """Von Neumann entropy (bits) of the first ``cut`` qubits."""
    psi = np.asarray(state, float)
    n = int(round(math.log2(len(psi))))
    sv = np.linalg.svd(psi.reshape(2 ** cut, 2 ** (n - cut)), compute_uv=False)
    p = sv ** 2
    p = p[p > 1e-300]
    return float(-(p * np.log2(p)).sum())
