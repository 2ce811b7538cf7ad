"""The (n, m) inequality family and the two fixed presets."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement
from collections import Counter
from typing import Sequence

import numpy as np

from .classical import DEFAULT_ENUMERATION_CAP, _integer_terms, batch_values
from .inequality import (
    BellInequality,
    DeterministicStrategy,
    GeneralInequality,
    InputError,
    ResourceError,
    distinct_orderings,
    permutation_count,
)


class ConstructionError(RuntimeError):
    """No negligible slot is available to repair a violating strategy."""


class TermClass(enum.Enum):
    SIGNIFICANT = "significant"
    NEGLIGIBLE = "negligible"
    DOMINANT = "dominant"


@dataclass(frozen=True)
class HierarchyExponents:
    """Angle hierarchy |phi_j| ~ eps**e[j-1], strictly decreasing in j."""

    e: tuple

    def __post_init__(self):
        e = tuple(self.e)
        if not e or any(x <= 0 for x in e) or any(a <= b for a, b in zip(e, e[1:])):
            raise InputError(f"exponents must be positive and strictly decreasing: {e}")
        object.__setattr__(self, "e", e)

    @classmethod
    def geometric(cls, m: int, base: int = 2) -> "HierarchyExponents":
        return cls(tuple(base ** (m - j) for j in range(1, m + 1)))

    @property
    def m(self) -> int:
        return len(self.e)

    def __getitem__(self, setting: int):
        return Fraction(self.e[setting - 1])


def _check_nm(n: int, m: int):
    if m < 2:
        raise InputError("m >= 2 required")
    if m > n:
        raise InputError(f"m <= n required (got n={n}, m={m})")


def reference_indices(n: int, m: int) -> tuple[int, ...]:
    """Nonzero part of the (n-1)-party coefficient: 2, 3, ..., m, then m repeated."""
    return tuple(range(2, m + 1)) + (m,) * (n - m)


def significant_coefficients(n: int, m: int) -> BellInequality:
    """The fixed (n-1)-party and positive n-party coefficients; bound left unset."""
    _check_nm(n, m)
    ref = reference_indices(n, m)
    coeffs = {(0,) + ref: Fraction(-1)}
    for l in range(1, m + 1):
        t = tuple(sorted(ref + (l,)))
        coeffs[t] = Fraction(n - m + 1 if l == m else 1)
    return BellInequality(n, m, coeffs, classical_bound=None)


def term_class(t: Sequence[int], n: int, m: int, h: HierarchyExponents | None = None) -> TermClass:
    """Leading-order size of an n-party term relative to the significant ones."""
    t = tuple(sorted(t))
    if len(t) != n or any(j < 1 or j > m for j in t):
        raise InputError(f"term_class needs an n-party tuple with entries in [1, {m}]: {t}")
    h = h or HierarchyExponents.geometric(m)
    if h.m != m:
        raise InputError("hierarchy length must equal m")
    ref = reference_indices(n, m)
    diff = Counter(t)
    diff.subtract(Counter(ref))
    support = [j for j, c in diff.items() if c != 0]
    # t has one more entry than ref, so the difference is never empty
    e_w = max(h[j] for j in support)
    order = 2 * (sum(h[j] for j in t) - sum(h[j] for j in ref) - e_w)
    if order > 0:
        return TermClass.NEGLIGIBLE
    if order < 0:
        return TermClass.DOMINANT
    return TermClass.SIGNIFICANT


def positive_weight(ineq: BellInequality) -> Fraction:
    """Sum of permutation-weighted positive coefficients; bounds any strategy's gain."""
    return sum((permutation_count(t) * b for t, b in ineq.coeffs.items() if b > 0), Fraction(0))


@dataclass
class FamilyResult:
    inequality: BellInequality
    magnitude: Fraction
    free_slots: list = field(default_factory=list)
    exponents: HierarchyExponents | None = None

    def metadata(self) -> dict:
        return {
            "n": self.inequality.n,
            "m": self.inequality.m,
            "M": f"{self.magnitude.numerator}/{self.magnitude.denominator}",
            "free_slots": [list(t) for t in self.free_slots],
            "hierarchy_exponents": [float(x) for x in self.exponents.e],
        }


def _repair_candidates(s: DeterministicStrategy, n: int, m: int, classes: dict, coeffs: dict):
    for t in combinations_with_replacement(range(1, m + 1), n):
        if classes[t] is not TermClass.NEGLIGIBLE or coeffs.get(t, 0) != 0:
            continue
        if any(all(s.a[i][j - 1] for i, j in enumerate(o)) for o in distinct_orderings(t)):
            yield t


def assign_free_coefficients(partial: BellInequality, h: HierarchyExponents | None = None,
                             cap: int | None = None, return_details: bool = False):
    """Greedily add negative negligible coefficients until every strategy scores <= 0.

    Strategies are scanned once in bitmask order. Adding a negative
    coefficient can only lower values, so strategies already passed stay
    non-positive.
    """
    n, m = partial.n, partial.m
    cap = DEFAULT_ENUMERATION_CAP if cap is None else cap
    if n * m > cap:
        raise ResourceError(f"n*m = {n * m} exceeds the enumeration cap {cap}")
    h = h or HierarchyExponents.geometric(m)
    magnitude = positive_weight(partial)
    classes = {t: term_class(t, n, m, h)
               for t in combinations_with_replacement(range(1, m + 1), n)}
    coeffs = dict(partial.coeffs)
    free_slots = []
    total = 1 << (n * m)
    chunk = 1 << 14
    start = 0
    while start < total:
        ineq = BellInequality(n, m, coeffs, None)
        terms = _integer_terms(ineq)
        bits = np.arange(start, min(start + chunk, total), dtype=np.uint64)
        vals = batch_values(ineq, bits, terms)
        bad = np.flatnonzero(vals > 0)
        if len(bad) == 0:
            start += chunk
            continue
        first = int(bits[bad[0]])
        s = DeterministicStrategy.from_bits(first, n, m)
        slot = next(_repair_candidates(s, n, m, classes, coeffs), None)
        if slot is None:
            raise ConstructionError(
                f"strategy {first:#x} violates the zero bound and has no free negligible slot")
        coeffs[slot] = -magnitude
        free_slots.append(slot)
        start = first
    result = BellInequality(n, m, coeffs, Fraction(0))
    if return_details:
        return FamilyResult(result, magnitude, free_slots, h)
    return result


def generate_family(n: int, m: int, h: HierarchyExponents | None = None,
                    cap: int | None = None) -> FamilyResult:
    return assign_free_coefficients(significant_coefficients(n, m), h, cap, return_details=True)


def family(n: int, m: int, **kwargs) -> BellInequality:
    return generate_family(n, m, **kwargs).inequality


def preset_333() -> BellInequality:
    """Three parties, three settings, zero classical bound, threshold 1/2."""
    return BellInequality(3, 3, {
        (0, 2, 3): -1,
        (1, 1, 2): -1,
        (1, 1, 3): -1,
        (1, 2, 2): -2,
        (1, 2, 3): 1,
        (2, 2, 3): 1,
        (2, 3, 3): 1,
    }, Fraction(0))


APPENDIX_C = 2 * (2 ** 0.25 - 1) / (math.sqrt(2) - 1)


def preset_appendix_ch(c: float = APPENDIX_C) -> GeneralInequality:
    """Two-party CH-type inequality with marginal weight c; bound 2 - 2c."""
    return GeneralInequality(2, 2, {
        (1, 1): 1.0,
        (1, 2): 1.0,
        (2, 1): 1.0,
        (2, 2): -1.0,
        (1, 0): -c,
        (0, 1): -c,
    }, 2 - 2 * c)
