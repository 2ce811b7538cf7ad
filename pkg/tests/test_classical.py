import itertools
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from bellfam.classical import (
    batch_values,
    beta_matrix,
    classical_maximum,
    family_support_split,
    negative_part,
    permanent,
    permanent_form_value,
    permanent_naive,
    strategy_value,
)
from bellfam.family import family, preset_333, preset_appendix_ch, APPENDIX_C
from bellfam.inequality import BellInequality, DeterministicStrategy, InputError, ResourceError


def oracle_value(ineq, a):
    """Straight sum over ordered tuples, outcome 1 for setting 0."""
    total = Fraction(0)
    for t, b in ineq.coeffs.items():
        for o in set(itertools.permutations(t)):
            if all(j == 0 or a[i][j - 1] for i, j in enumerate(o)):
                total += b
    return total


def all_strategies(n, m):
    for flat in itertools.product((0, 1), repeat=n * m):
        yield tuple(tuple(flat[i * m:(i + 1) * m]) for i in range(n))


@pytest.mark.parametrize("make", [preset_333, lambda: family(3, 2)])
def test_strategy_value_matches_oracle(make):
    ineq = make()
    for a in all_strategies(ineq.n, ineq.m):
        assert strategy_value(ineq, DeterministicStrategy(a)) == oracle_value(ineq, a)


def test_batch_values_match_exact():
    ineq = family(4, 3)
    import numpy as np
    bits = np.arange(0, 4096, 37, dtype=np.uint64)
    vals = batch_values(ineq, bits)
    for b, v in zip(bits, vals):
        exact = strategy_value(ineq, DeterministicStrategy.from_bits(int(b), 4, 3))
        assert math.isclose(float(exact), float(v) / float(_scale(ineq)), abs_tol=1e-12) or exact == v


def _scale(ineq):
    d = 1
    for b in ineq.coeffs.values():
        d = d * b.denominator // math.gcd(d, b.denominator)
    return d


def test_classical_maximum_oracle_and_argmax():
    ineq = preset_333()
    vals = [oracle_value(ineq, a) for a in all_strategies(3, 3)]
    res = classical_maximum(ineq, max_argmax=1000)
    assert res.maximum == max(vals) == 0
    assert res.n_argmax == vals.count(0)
    for s in res.argmax:
        assert strategy_value(ineq, s) == 0


def test_classical_maximum_threads_agree():
    ineq = family(4, 4)
    assert classical_maximum(ineq, threads=1) == classical_maximum(ineq, threads=3)


def test_positive_bound_inequality():
    # a shifted bound must be respected exactly, not just sign
    ineq = BellInequality(2, 2, {(1, 1): 1, (2, 2): 1, (1, 2): -1}, 2)
    vals = [oracle_value(ineq, a) for a in all_strategies(2, 2)]
    assert classical_maximum(ineq).maximum == max(vals)


def test_ch_classical_bound():
    res = classical_maximum(preset_appendix_ch())
    assert abs(res.maximum - (2 - 2 * APPENDIX_C)) < 1e-12


def test_cap_and_dimension_errors():
    with pytest.raises(ResourceError):
        classical_maximum(family(4, 4), cap=10)
    with pytest.raises(InputError):
        strategy_value(preset_333(), DeterministicStrategy(((0, 1), (1, 1))))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 32))
def test_ryser_matches_naive(k, seed):
    rng = random.Random(seed)
    mat = [[Fraction(rng.randint(-5, 5), rng.randint(1, 4)) for _ in range(k)] for _ in range(k)]
    assert permanent(mat) == permanent_naive(mat)


def test_permanent_known_values():
    assert permanent([[1] * 4] * 4) == math.factorial(4)
    with pytest.raises(InputError):
        permanent([[1, 2]])


def test_beta_matrix_shape():
    s = DeterministicStrategy.from_bits(0b101101011, 3, 3)
    beta = beta_matrix(s, 3, 3)
    assert len(beta) == 3 and all(len(r) == 3 for r in beta)


@pytest.mark.parametrize("n,m", [(3, 3), (3, 2)])
def test_permanent_identity(n, m):
    ineq = family(n, m)
    sig, free = family_support_split(ineq)
    c = 2 * math.factorial(n - m + 1)
    for bits in range(2 ** (n * m)):
        s = DeterministicStrategy.from_bits(bits, n, m)
        beta = beta_matrix(s, n, m)
        assert permanent(beta) - negative_part(ineq, s) == c * strategy_value(ineq, s)
        assert permanent_form_value(ineq, s) == c * strategy_value(ineq, s)
