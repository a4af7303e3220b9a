import numpy as np
import pytest
import scipy.sparse as sp

from offsetopt import chordal, completion, ctc, generators, netmodel as nm, sdp
from conftest import random_psd_on_pattern


def sections_problem(P, X):
    """Clique problem on pattern P with blocks taken from the dense matrix X (permuted order)."""
    td = chordal.tree_decomposition(P, order="natural")
    problem = ctc.split_objective(sp.csr_matrix(P, dtype=complex), td)
    return td, problem, problem.sections(X)


def test_identity_completion():
    P = chordal.pattern_from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    td, problem, blocks = sections_problem(P, np.eye(5, dtype=complex))
    fc = completion.complete(td, problem, blocks)
    np.testing.assert_allclose(fc.F.toarray(), np.eye(5), atol=1e-14)
    np.testing.assert_allclose(fc.D, 1.0)
    np.testing.assert_allclose(fc.dense(), np.eye(5), atol=1e-14)


def test_reconstruct_identity_factors():
    fc = completion.FactoredCompletion(
        perm=np.arange(4), colptr=np.zeros(5, dtype=np.int64), rows=np.zeros(0, dtype=np.int64),
        vals=np.zeros(0, dtype=complex), D=np.ones(4),
    )
    np.testing.assert_allclose(completion.reconstruct_block(fc, [1, 3]), np.eye(2))


def test_rank_one_blocks():
    rng = np.random.default_rng(0)
    v = np.exp(2j * np.pi * rng.uniform(size=6))
    X = np.outer(v, v.conj())
    P = chordal.pattern_from_edges(6, [(0, 1), (1, 2), (2, 3), (0, 3), (3, 4), (4, 5)])
    td, problem, blocks = sections_problem(P, X)
    fc = completion.complete(td, problem, blocks)
    assert completion.section_error(fc, problem, blocks) <= 1e-8
    # a rank-one completion has a single positive pivot
    assert np.sum(fc.D > 1e-8) == 1
    np.testing.assert_allclose(fc.dense(), X, atol=1e-7)


def test_path_max_determinant():
    X = np.array([[1.0, 0.6, 0], [0.6, 1.0, -0.3j], [0, 0.3j, 1.0]], dtype=complex)
    P = chordal.pattern_from_edges(3, [(0, 1), (1, 2)])
    td, problem, blocks = sections_problem(P, X)
    full = completion.complete(td, problem, blocks).dense()
    expect = X.copy()
    expect[0, 2] = X[0, 1] * X[1, 2] / X[1, 1]
    expect[2, 0] = np.conj(expect[0, 2])
    np.testing.assert_allclose(full, expect, atol=1e-9)


def test_e1_completion(e1_objective):
    _, _, W = e1_objective
    td = chordal.tree_decomposition(W.pattern())
    sol, problem = sdp.solve_clique_tree(W.matrix, td)
    fc = completion.complete(td, problem, sol)
    X = fc.dense_natural()
    np.testing.assert_allclose(np.diag(X).real, 1.0, atol=1e-6)
    assert np.all(fc.D >= 0)
    assert completion.section_error(fc, problem, sol) <= 1e-6
    F = fc.F.toarray()
    np.testing.assert_array_equal(np.diag(F), 1.0)


@pytest.mark.parametrize("seed", range(3))
def test_random_chordal_sections(seed):
    rng = np.random.default_rng(seed)
    A = sp.random(10, 10, density=0.25, random_state=rng)
    P = chordal.symmetric_pattern(A)
    W = random_psd_on_pattern(rng, P)
    td = chordal.tree_decomposition(P)
    sol, problem = sdp.solve_clique_tree(W, td)
    fc = completion.complete(td, problem, sol)
    assert fc.raw_min_d >= completion.D_FLOOR
    assert completion.section_error(fc, problem, sol) <= 1e-6
    # column j of F stays inside I_j
    F = fc.F.tocsc()
    for j in range(td.n):
        nz = F.indices[F.indptr[j] : F.indptr[j + 1]]
        assert set(nz.tolist()) <= set(td.index_set(j).tolist())


def test_order_independence():
    _, _, W = nm.build_objective(generators.generate("random-city", n=30, seed=5))
    td = chordal.tree_decomposition(W.pattern())
    sol, problem = sdp.solve_clique_tree(W.matrix, td)
    a = completion.complete(td, problem, sol)
    b = completion.complete(td, problem, sol, order=np.arange(td.n)[::-1])
    np.testing.assert_array_equal(a.vals, b.vals)
    np.testing.assert_array_equal(a.D, b.D)


def test_indefinite_data_rejected():
    X = np.array([[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]], dtype=complex)
    P = chordal.pattern_from_edges(3, [(0, 1), (1, 2), (0, 2)])
    td, problem, blocks = sections_problem(P, X)
    with pytest.raises(completion.CompletionError):
        completion.complete(td, problem, blocks)
