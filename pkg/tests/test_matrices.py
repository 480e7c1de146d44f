import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import HOUSE, TWO_BY_TWO, balanced_specs, spec
from sregular.graphs import PartitionedGraph, construct_deterministic, sample_configuration_model
from sregular.matrices import (
    assemble,
    cell_sum_squares,
    classify,
    j_matrix_check,
    spectral_density_histogram,
    weighted_walk_count,
)
from sregular.quotient import QuotientError, minimal_cell_sizes

K33 = PartitionedGraph.from_edges(6, [(i, j) for i in range(3) for j in range(3, 6)], [0, 0, 0, 1, 1, 1])


def triangle():
    return PartitionedGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


def c4(tau=None):
    return PartitionedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)], tau)


def k4():
    return PartitionedGraph.from_edges(4, list(itertools.combinations(range(4), 2)))


def test_presets_on_small_graphs():
    A = assemble(triangle(), spec([[2]]), "adjacency").dense()
    assert np.all(A.sum(axis=1) == 2)
    L = assemble(triangle(), spec([[2]]), "laplacian").dense()
    assert np.allclose(np.linalg.eigvalsh(L), [0, 3, 3])
    N = assemble(K33, spec([[0, 3], [3, 0]]), "normalized-laplacian").dense()
    ev = np.linalg.eigvalsh(N)
    assert ev.min() == pytest.approx(0, abs=1e-12) and ev.max() == pytest.approx(2)


def test_presets_match_textbook_definitions():
    g = sample_configuration_model(spec(TWO_BY_TWO), (20, 20), seed=2)
    A = g.adjacency.toarray().astype(float)
    d = A.sum(axis=1)
    L = assemble(g, spec(TWO_BY_TWO), "laplacian").dense()
    assert np.array_equal(L, np.diag(d) - A)
    N = assemble(g, spec(TWO_BY_TWO), "normalized-laplacian").dense()
    Dm = np.diag(1 / np.sqrt(d))
    assert np.allclose(N, np.eye(len(d)) - Dm @ A @ Dm, atol=1e-15)


def test_assemble_rejects_mismatch():
    with pytest.raises(QuotientError):
        assemble(k4(), spec([[2]]))


def test_classify_examples():
    cs = classify(assemble(c4(), spec([[2]])))
    assert np.allclose(cs.s_eigenvalues, [2])
    assert np.allclose(np.sort(cs.bulk_eigenvalues), [-2, 0, 0], atol=1e-12)
    assert cs.lambda_B == pytest.approx(2)
    cs = classify(assemble(c4([0, 1, 0, 1]), spec([[0, 2], [2, 0]])))
    assert np.allclose(np.sort(cs.s_eigenvalues), [-2, 2])
    assert np.allclose(cs.bulk_eigenvalues, 0, atol=1e-12) and cs.lambda_B == pytest.approx(0, abs=1e-12)
    cs = classify(assemble(k4(), spec([[3]])))
    assert np.allclose(cs.s_eigenvalues, [3]) and cs.lambda_B == pytest.approx(1)


def test_lambda_b_tie_breaks_positive():
    cs = classify(assemble(c4(), spec([[2]])))
    assert cs.lambda_B_signed == pytest.approx(-2)       # only -2 has magnitude 2
    g = PartitionedGraph.from_edges(6, [(i, (i + 1) % 6) for i in range(6)], [0, 1, 0, 1, 0, 1])
    cs = classify(assemble(g, spec([[0, 2], [2, 0]])))
    # bulk {1, 1, -1, -1}: tie between +1 and -1
    assert cs.lambda_B_signed == pytest.approx(1)


def test_degenerate_zero_eigenspace_split_by_projection():
    # star K_{1,3} with cells {centre}, {leaves}: eigenvalue 0 has multiplicity
    # 2 and both copies are bulk; the S-eigenvalues are +-sqrt(3)
    star = PartitionedGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)], [0, 1, 1, 1])
    cs = classify(assemble(star, spec([[0, 3], [1, 0]])))
    assert np.allclose(np.sort(cs.s_eigenvalues), [-np.sqrt(3), np.sqrt(3)])
    assert np.allclose(cs.bulk_eigenvalues, 0, atol=1e-12) and len(cs.bulk_indices) == 2


def test_s_eigenvalue_inside_bulk_eigenspace():
    # C6 with cells {0,3}, {1,4}, {2,5}: quotient eigenvalues 2, -1, -1 and
    # C6 eigenvalues 2, 1, 1, -1, -1, -2; the -1 eigenspace is shared
    g = PartitionedGraph.from_edges(6, [(i, (i + 1) % 6) for i in range(6)], [0, 1, 2, 0, 1, 2])
    cs = classify(assemble(g, spec([[0, 1, 1], [1, 0, 1], [1, 1, 0]])))
    assert np.allclose(np.sort(cs.s_eigenvalues), [-1, -1, 2])
    assert np.allclose(np.sort(cs.bulk_eigenvalues), [-2, 1, 1])
    assert cs.bulk_cell_sums().max() <= 1e-12


@settings(max_examples=25, deadline=None)
@given(balanced_specs(), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_classification_invariants(s, factor, seed):
    n = tuple(factor * x for x in minimal_cell_sizes(s))
    g = sample_configuration_model(s, n, seed=seed, max_retries=5000)
    cs = classify(assemble(g, s))
    assert len(cs.s_indices) == s.k
    q = np.sort(cs.quotient_eigenvalues)
    assert np.allclose(np.sort(cs.s_eigenvalues), q, atol=1e-8)
    if g.is_connected():
        assert cs.eigenvalues[-1] == pytest.approx(cs.lambda_S, abs=1e-9)
    assert cs.bulk_cell_sums().max(initial=0) <= 1e-8 * np.sqrt(g.n_total)
    V = cs.eigenvectors
    assert np.allclose(V.T @ V, np.eye(g.n_total), atol=1e-10)


def test_histogram_examples():
    h = spectral_density_histogram([2, -1, -1], bins=6, range=(-3, 3))
    assert h.mass.sum() == pytest.approx(1)
    assert h.mass[np.searchsorted(h.edges, 2, side="right") - 1] == pytest.approx(1 / 3)
    assert h.mass[np.searchsorted(h.edges, -1, side="right") - 1] == pytest.approx(2 / 3)
    ev = np.linalg.eigvalsh(K33.adjacency.toarray().astype(float))
    h = spectral_density_histogram(ev, bins=3, range=(-4.5, 4.5))
    assert np.allclose(h.mass, [1 / 6, 4 / 6, 1 / 6])
    h = spectral_density_histogram([0.0, 10.0], bins=2, range=(-1, 1))
    assert h.above == 0.5 and h.mass.sum() == 0.5
    with pytest.raises(ValueError):
        spectral_density_histogram([0.0], bins=2, range=(1, 1))


def test_cell_sums_of_squares():
    cs = classify(assemble(c4([0, 1, 0, 1]), spec([[0, 2], [2, 0]])))
    st_ = cell_sum_squares(cs.eigenvalues, cs.eigenvectors, cs.tau, 2)
    assert np.allclose(st_.raw.sum(axis=1), 1, atol=1e-12)
    top = np.argmax(cs.eigenvalues)
    assert np.allclose(st_.raw[top], [0.5, 0.5])


def test_house_symmetric_cells_have_equal_sums():
    g = construct_deterministic(spec(HOUSE))
    cs = classify(assemble(g, spec(HOUSE)))
    st_ = cell_sum_squares(cs.eigenvalues, cs.eigenvectors, cs.tau, 5)
    assert np.allclose(st_.raw[:, 1], st_.raw[:, 2], atol=1e-12)
    assert np.allclose(st_.raw[:, 3], st_.raw[:, 4], atol=1e-12)


def test_walk_counts():
    A = assemble(triangle(), spec([[2]]))
    assert weighted_walk_count(A, 0, 0) == 1
    assert weighted_walk_count(A, 0, 2) == 2
    assert weighted_walk_count(A, 0, 3) == 2


def brute_force_closed_walks(adj, v, ell):
    count = 0
    n = len(adj)
    for seq in itertools.product(range(n), repeat=ell - 1):
        path = (v, *seq, v)
        if all(adj[a][b] for a, b in zip(path, path[1:])):
            count += 1
    return count


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_walk_counts_match_enumeration(seed, ell):
    g = sample_configuration_model(spec([[3]]), (8,), seed=seed)
    adj = g.adjacency.toarray()
    assert weighted_walk_count(assemble(g, spec([[3]])), 0, ell) == brute_force_closed_walks(adj, 0, ell)


@pytest.mark.parametrize("S, n", [(TWO_BY_TWO, (15, 15)), ([[3]], (10,)), (HOUSE, (1, 1, 1, 1, 1)),
                                  ([[0, 2], [3, 0]], (3, 2))])
def test_j_matrix(S, n):
    for m in range(5):
        assert j_matrix_check(spec(S), n, m) <= 1e-10


def test_unsquared_normalization_fails_for_one_cell():
    assert j_matrix_check(spec([[3]]), (10,), 1, norm_power=1) > 1e-3
