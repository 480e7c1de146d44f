import json

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import BIREGULAR, HOUSE, TWO_BY_TWO, balanced_specs, spec
from sregular.quotient import (
    QuotientError,
    QuotientSpec,
    balance_solution,
    constructibility_problems,
    load_spec,
    minimal_cell_sizes,
    quotient_eigen,
    save_spec,
    symmetrized,
    validate_quotient,
)


def test_two_by_two_is_valid_with_equal_cells():
    rep = validate_quotient(spec(TWO_BY_TWO))
    assert rep.ok
    assert balance_solution(spec(TWO_BY_TWO)) == (1, 1)


def test_reducible_flagged():
    rep = validate_quotient(spec([[0, 1], [0, 0]]))
    assert not rep.ok
    assert "REDUCIBLE" in rep.codes


def test_biregular_balance():
    assert balance_solution(spec(BIREGULAR)) == (3, 2)
    assert minimal_cell_sizes(spec(BIREGULAR)) == (3, 2)


@pytest.mark.parametrize("S, expected", [
    (TWO_BY_TWO, (15, 15)),
    ([[2]], (3,)),
    ([[3]], (4,)),
    (HOUSE, (1, 1, 1, 1, 1)),
])
def test_minimal_cell_sizes(S, expected):
    assert minimal_cell_sizes(spec(S)) == expected


def test_validation_codes():
    assert "NEGATIVE_ENTRY" in validate_quotient(QuotientSpec(np.array([[-1.0]]))).codes
    assert "NON_INTEGER" in validate_quotient(QuotientSpec(np.array([[1.5]]))).codes
    asym = spec([[1, 1], [1, 1]], F=np.array([[1.0, 2.0], [3.0, 1.0]]))
    assert "F_NOT_SYMMETRIC" in validate_quotient(asym).codes
    zero = spec([[1, 1], [1, 1]], F=np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert "F_ZERO_ON_EDGE" in validate_quotient(zero).codes
    assert "N_UNBALANCED" in validate_quotient(spec(BIREGULAR, n=(2, 2))).codes
    assert "NO_BALANCE" in validate_quotient(spec([[1, 1, 1], [2, 0, 1], [1, 1, 1]])).codes


def test_non_square_rejected():
    with pytest.raises(QuotientError):
        QuotientSpec(np.array([[1, 2, 3]]))


def test_eigenvalues_of_examples():
    q = quotient_eigen(spec(TWO_BY_TWO))
    assert np.allclose(q.eigenvalues, [8 + 2 * np.sqrt(10), 8 - 2 * np.sqrt(10)], atol=1e-12)
    q = quotient_eigen(spec(BIREGULAR))
    assert np.allclose(q.eigenvalues, [np.sqrt(6), -np.sqrt(6)], atol=1e-12)
    q = quotient_eigen(spec([[5]]))
    assert q.lambda_S == pytest.approx(5)
    assert np.allclose(q.eigenvectors, [[1.0]])


def test_perron_vector_positive():
    q = quotient_eigen(spec(HOUSE))
    top = q.eigenvectors[:, 0]
    assert np.all(top > 0)


def test_json_round_trip(tmp_path):
    s = spec(TWO_BY_TWO, b=np.array([1.0, -2.0]), n=(3, 3))
    save_spec(s, tmp_path / "s.json")
    t = load_spec(tmp_path / "s.json")
    assert np.array_equal(t.S, s.S) and np.array_equal(t.b, s.b) and tuple(t.n) == (3, 3)
    (tmp_path / "bad.json").write_text(json.dumps({"S": [[1]], "junk": 1}))
    with pytest.raises(QuotientError):
        load_spec(tmp_path / "bad.json")


def test_constructibility():
    assert constructibility_problems(np.array([[2]]), (2,))
    assert not constructibility_problems(np.array([[2]]), (3,))
    assert constructibility_problems(np.array([[3]]), (5,))     # odd half-edge count


@settings(max_examples=60, deadline=None)
@given(balanced_specs())
def test_balance_properties(s):
    n = balance_solution(s)
    assert n is not None
    N = np.array(n)
    assert np.array_equal(N[:, None] * s.S, (N[:, None] * s.S).T)
    for factor in (2, 5):
        M = factor * N
        assert np.array_equal(M[:, None] * s.S, (M[:, None] * s.S).T)
    m = minimal_cell_sizes(s)
    assert not constructibility_problems(s.S, m)
    ratio = np.array(m) / N
    assert np.allclose(ratio, ratio[0]) and float(ratio[0]).is_integer()


@settings(max_examples=60, deadline=None)
@given(balanced_specs())
def test_symmetrization_and_residuals(s):
    n = balance_solution(s)
    Z = symmetrized(s, n)
    assert np.allclose(Z, Z.T, atol=1e-12)
    q = quotient_eigen(s, n)
    M = s.weighted
    resid = np.abs(M @ q.eigenvectors - q.eigenvectors * q.eigenvalues).max()
    assert resid <= 1e-10 * max(1.0, np.abs(M).max())
    assert np.linalg.matrix_rank(q.eigenvectors) == s.k
    assert np.all(np.diff(q.eigenvalues) <= 1e-12)
