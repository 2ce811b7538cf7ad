"""Local deterministic bounds: exhaustive enumeration and the permanent form."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from functools import reduce
from itertools import permutations
from typing import NamedTuple, Sequence

import numpy as np

from .inequality import (
    BellInequality,
    DeterministicStrategy,
    GeneralInequality,
    InputError,
    ResourceError,
    distinct_orderings,
)

DEFAULT_ENUMERATION_CAP = 26
_CHUNK = 1 << 14


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("BELLFAM_THREADS", "1")))
    except ValueError:
        return 1


def strategy_value(ineq: BellInequality | GeneralInequality, s: DeterministicStrategy):
    """Bell expression evaluated on a deterministic strategy (exact for rationals)."""
    if (s.n, s.m) != (ineq.n, ineq.m):
        raise InputError(f"strategy is {s.n}x{s.m}, inequality needs {ineq.n}x{ineq.m}")
    total = Fraction(0) if isinstance(ineq, BellInequality) else 0.0
    for t, b in ineq.terms().coeffs.items():
        if all(s.outcome(i, j) for i, j in enumerate(t)):
            total += b
    return total


class ClassicalMaximum(NamedTuple):
    maximum: Fraction | float
    argmax: list[DeterministicStrategy]
    n_argmax: int


def _integer_terms(ineq):
    """Ordered terms as (index array, integer coefficient array, scale)."""
    terms = ineq.terms()
    keys = list(terms.coeffs)
    values = list(terms.coeffs.values())
    cols = np.array(keys, dtype=np.intp).reshape(len(keys), ineq.n)
    if isinstance(ineq, BellInequality):
        fracs = [Fraction(v) for v in values]
        scale = reduce(math.lcm, (q.denominator for q in fracs), 1)
        ints = [int(q * scale) for q in fracs]
        if sum(abs(x) for x in ints) < 2**62:
            return cols, np.array(ints, dtype=np.int64), scale
        return cols, np.array(ints, dtype=object), scale
    return cols, np.array(values, dtype=float), None


def _strategy_array(bits: np.ndarray, n: int, m: int) -> np.ndarray:
    shifts = np.arange(n * m, dtype=np.uint64)
    flat = ((bits[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.int8)
    arr = np.ones((len(bits), n, m + 1), dtype=np.int8)
    arr[:, :, 1:] = flat.reshape(len(bits), n, m)
    return arr


def batch_values(ineq, bits: np.ndarray, _terms=None) -> np.ndarray:
    """Scaled strategy values for an array of strategy bitmasks.

    For exact inequalities the result is integer and must be divided by the
    returned scale; see :func:`classical_maximum`.
    """
    cols, coeffs, _ = _terms if _terms is not None else _integer_terms(ineq)
    a = _strategy_array(np.asarray(bits, dtype=np.uint64), ineq.n, ineq.m)
    rows = np.arange(ineq.n)
    if len(cols) == 0:
        return np.zeros(len(bits), dtype=coeffs.dtype)
    factors = a[:, rows[None, :], cols].prod(axis=2, dtype=np.int64)
    if coeffs.dtype == object:
        return factors.astype(object) @ coeffs
    return factors @ coeffs


def _check_cap(ineq, cap):
    cap = DEFAULT_ENUMERATION_CAP if cap is None else cap
    if ineq.n * ineq.m > cap:
        raise ResourceError(f"n*m = {ineq.n * ineq.m} exceeds the enumeration cap {cap}")


def classical_maximum(ineq, cap: int | None = None, max_argmax: int = 16,
                      threads: int | None = None) -> ClassicalMaximum:
    """Maximum over all 2^(nm) deterministic strategies, in bitmask order."""
    _check_cap(ineq, cap)
    terms = _integer_terms(ineq)
    total = 1 << (ineq.n * ineq.m)
    starts = range(0, total, _CHUNK)

    def work(start):
        bits = np.arange(start, min(start + _CHUNK, total), dtype=np.uint64)
        vals = batch_values(ineq, bits, terms)
        best = vals.max()
        hits = bits[vals == best]
        return best, hits[:max_argmax].tolist(), len(hits)

    threads = threads or default_threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]

    best = max(p[0] for p in parts)
    argmax, count = [], 0
    for value, hits, k in parts:
        if value == best:
            count += k
            argmax.extend(hits)
    strategies = [DeterministicStrategy.from_bits(int(b), ineq.n, ineq.m)
                  for b in argmax[:max_argmax]]
    scale = terms[2]
    maximum = Fraction(int(best), scale) if scale is not None else float(best)
    return ClassicalMaximum(maximum, strategies, count)


# -- permanents ---------------------------------------------------------------

def permanent(matrix: Sequence[Sequence]) -> Fraction:
    """Exact permanent by Ryser's formula with Gray-code subset updates."""
    rows = [list(r) for r in matrix]
    k = len(rows)
    if any(len(r) != k for r in rows):
        raise InputError("permanent needs a square matrix")
    if k == 0:
        return Fraction(1)
    if k > 30:
        raise InputError("permanent limited to dimension <= 30")
    # scale each row to integers so the inner loop is pure int arithmetic
    scale = Fraction(1)
    int_rows = []
    for r in rows:
        fr = [Fraction(x) for x in r]
        d = reduce(math.lcm, (q.denominator for q in fr), 1)
        int_rows.append([int(q * d) for q in fr])
        scale /= d
    cols = list(zip(*int_rows))
    row_sums = [0] * k
    total = 0
    gray_prev = 0
    for step in range(1, 1 << k):
        gray = step ^ (step >> 1)
        j = (gray ^ gray_prev).bit_length() - 1
        sign = 1 if gray & (1 << j) else -1
        col = cols[j]
        for i in range(k):
            row_sums[i] += sign * col[i]
        gray_prev = gray
        prod = 1
        for x in row_sums:
            prod *= x
            if prod == 0:
                break
        if bin(gray).count("1") % 2:
            total -= prod
        else:
            total += prod
    if k % 2:
        total = -total
    return total * scale


def permanent_naive(matrix: Sequence[Sequence]) -> Fraction:
    k = len(matrix)
    total = Fraction(0)
    for perm in permutations(range(k)):
        prod = Fraction(1)
        for i, j in enumerate(perm):
            prod *= Fraction(matrix[i][j])
        total += prod
    return total


def beta_matrix(s: DeterministicStrategy, n: int, m: int) -> list[list[Fraction]]:
    """Column-merged matrix whose permanent is the scaled family value."""
    if (s.n, s.m) != (n, m):
        raise InputError("strategy dimensions do not match (n, m)")
    if n < m or m < 2:
        raise InputError("need 2 <= m <= n")
    last_weight = Fraction(2 * (n - m + 1), n - m + 2)
    beta = []
    for i in range(n):
        a = lambda j: s.a[i][j - 1]  # noqa: E731
        row = [Fraction(a(j + 1)) for j in range(1, m)]
        row += [Fraction(a(m))] * (n - m)
        row.append(2 * a(1) + sum(a(k) for k in range(2, m)) + last_weight * a(m) - 2)
        beta.append(row)
    return beta


def family_support_split(ineq: BellInequality):
    """Split a family-shaped inequality into (significant, free) coefficient maps.

    Raises InputError when the inequality has coefficients outside the
    family support or wrong significant values.
    """
    from .family import significant_coefficients

    n, m = ineq.n, ineq.m
    try:
        sig = significant_coefficients(n, m).coeffs
    except InputError as exc:
        raise InputError(f"inequality is not of family shape: {exc}") from None
    free = {}
    for t, b in ineq.coeffs.items():
        if t in sig:
            if b != sig[t]:
                raise InputError(f"coefficient {t} = {b} differs from family value {sig[t]}")
        elif 0 in t or b > 0:
            raise InputError(f"coefficient {t} = {b} is outside the family support")
        else:
            free[t] = b
    if any(t not in ineq.coeffs for t in sig):
        raise InputError("inequality is missing significant coefficients")
    return sig, free


def _ordering_sum(t, s: DeterministicStrategy) -> int:
    return sum(all(s.outcome(i, j) for i, j in enumerate(o)) for o in distinct_orderings(t))


def negative_part(ineq: BellInequality, s: DeterministicStrategy) -> Fraction:
    """Q(s): the free-coefficient contribution, scaled to the permanent form (>= 0)."""
    _, free = family_support_split(ineq)
    n, m = ineq.n, ineq.m
    factor = 2 * math.factorial(n - m + 1)
    return -factor * sum((b * _ordering_sum(t, s) for t, b in free.items()), Fraction(0))


def permanent_form_value(ineq: BellInequality, s: DeterministicStrategy) -> Fraction:
    """perm(beta(s)) - Q(s), equal to 2 (n-m+1)! times the strategy value."""
    q = negative_part(ineq, s)
    return permanent(beta_matrix(s, ineq.n, ineq.m)) - q
