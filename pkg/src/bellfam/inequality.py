"""Permutationally symmetric Bell inequalities in probability form.

Index tuples use 1-based setting labels; index 0 is the always-one
"zeroth measurement" that stands in for a party absent from a term.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations
from numbers import Rational, Real
from typing import Iterable, Iterator, Mapping

import numpy as np


class InputError(ValueError):
    """Arguments violate an operation's preconditions."""


class ResourceError(RuntimeError):
    """Requested enumeration exceeds the configured cap."""


IndexTuple = tuple  # canonical: sorted ascending, entries in [0, m]


def canonical(t: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(int(j) for j in t))


def permutation_count(t: Iterable[int]) -> int:
    """Number of distinct orderings of the multiset ``t``."""
    t = tuple(t)
    count = math.factorial(len(t))
    for mult in Counter(t).values():
        count //= math.factorial(mult)
    return count


def party_count_of_term(t: Iterable[int]) -> int:
    """Number of parties actually measuring (nonzero indices)."""
    return sum(1 for j in t if j != 0)


def distinct_orderings(t: Iterable[int]) -> list[tuple[int, ...]]:
    return sorted(set(permutations(tuple(t))))


def to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, Rational):
        return Fraction(value)
    raise InputError(f"coefficient {value!r} is not an exact rational")


def format_fraction(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class BellInequality:
    """Sparse permutation-symmetric Bell expression ``sum B_t P(t) <= L``.

    ``coeffs`` maps canonical (sorted) index tuples to exact rationals.
    Every ordering of a stored tuple carries the same coefficient.
    """

    n: int
    m: int
    coeffs: Mapping[tuple[int, ...], Fraction]
    classical_bound: Fraction | None = Fraction(0)

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise InputError("n and m must be positive")
        clean = {}
        for key, value in self.coeffs.items():
            t = self._check_tuple(key)
            q = to_fraction(value)
            if q != 0:
                clean[t] = q
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))
        if self.classical_bound is not None:
            object.__setattr__(self, "classical_bound", to_fraction(self.classical_bound))

    def _check_tuple(self, t: Iterable[int]) -> tuple[int, ...]:
        t = tuple(t)
        if len(t) != self.n:
            raise InputError(f"index tuple {t} has length {len(t)}, expected n={self.n}")
        if any(not 0 <= j <= self.m for j in t):
            raise InputError(f"index tuple {t} has entries outside [0, {self.m}]")
        return canonical(t)

    def coefficient(self, t: Iterable[int]) -> Fraction:
        return self.coeffs.get(self._check_tuple(t), Fraction(0))

    def with_coefficients(self, updates: Mapping[tuple[int, ...], Fraction], classical_bound=...):
        coeffs = dict(self.coeffs)
        coeffs.update({canonical(k): to_fraction(v) for k, v in updates.items()})
        bound = self.classical_bound if classical_bound is ... else classical_bound
        return BellInequality(self.n, self.m, coeffs, bound)

    def items(self) -> Iterator[tuple[tuple[int, ...], Fraction]]:
        return iter(self.coeffs.items())

    def terms(self) -> "GeneralInequality":
        """Expand into ordered tuples (one entry per distinct ordering)."""
        ordered = {}
        for t, b in self.coeffs.items():
            for o in distinct_orderings(t):
                ordered[o] = b
        bound = self.classical_bound if self.classical_bound is not None else Fraction(0)
        return GeneralInequality(self.n, self.m, ordered, bound)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        if self.classical_bound is None:
            raise InputError("cannot serialize an inequality without a classical bound")
        return {
            "n": self.n,
            "m": self.m,
            "classical_bound": format_fraction(self.classical_bound),
            "coefficients": [
                {"indices": list(t), "value": format_fraction(b)} for t, b in self.coeffs.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BellInequality":
        allowed = {"n", "m", "classical_bound", "coefficients"}
        unknown = set(data) - allowed
        if unknown:
            raise InputError(f"unknown fields in inequality file: {sorted(unknown)}")
        missing = allowed - set(data)
        if missing:
            raise InputError(f"missing fields in inequality file: {sorted(missing)}")
        coeffs = {}
        for entry in data["coefficients"]:
            if set(entry) != {"indices", "value"}:
                raise InputError(f"coefficient entry must have exactly 'indices' and 'value': {entry}")
            idx = tuple(entry["indices"])
            if list(idx) != sorted(idx):
                raise InputError(f"indices {list(idx)} are not sorted")
            if not isinstance(entry["value"], str):
                raise InputError("coefficient values must be 'p/q' strings")
            coeffs[idx] = Fraction(entry["value"])
        return cls(int(data["n"]), int(data["m"]), coeffs, Fraction(data["classical_bound"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "BellInequality":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GeneralInequality:
    """Bell expression keyed by ordered index tuples, one entry per term.

    Coefficients may be any real numbers (the Clauser-Horne-type preset
    carries an irrational marginal weight).
    """

    n: int
    m: int
    coeffs: Mapping[tuple[int, ...], Real]
    classical_bound: Real = 0

    def __post_init__(self):
        for t in self.coeffs:
            if len(t) != self.n or any(not 0 <= j <= self.m for j in t):
                raise InputError(f"bad ordered index tuple {t}")

    def terms(self) -> "GeneralInequality":
        return self


@dataclass(frozen=True)
class DeterministicStrategy:
    """Predetermined outcomes ``a[i][j-1]`` for party i and setting j."""

    a: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(int(x) for x in row) for row in self.a)
        if not rows or len({len(r) for r in rows}) != 1:
            raise InputError("strategy must be a non-empty rectangular matrix")
        if any(x not in (0, 1) for r in rows for x in r):
            raise InputError("strategy entries must be 0 or 1")
        object.__setattr__(self, "a", rows)

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def m(self) -> int:
        return len(self.a[0])

    def outcome(self, party: int, setting: int) -> int:
        return 1 if setting == 0 else self.a[party][setting - 1]

    def with_zeroth(self) -> np.ndarray:
        """n x (m+1) integer array with the implicit all-ones column 0."""
        arr = np.ones((self.n, self.m + 1), dtype=np.int64)
        arr[:, 1:] = self.a
        return arr

    def to_bits(self) -> int:
        bits = 0
        for i, row in enumerate(self.a):
            for j, x in enumerate(row):
                if x:
                    bits |= 1 << (i * self.m + j)
        return bits

    @classmethod
    def from_bits(cls, bits: int, n: int, m: int) -> "DeterministicStrategy":
        return cls(tuple(tuple((bits >> (i * m + j)) & 1 for j in range(m)) for i in range(n)))


def load_inequality(path) -> BellInequality:
    with open(path, encoding="utf-8") as fh:
        return BellInequality.from_dict(json.load(fh))
