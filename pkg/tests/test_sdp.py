import numpy as np
import pytest
import scipy.sparse as sp

from offsetopt import chordal, ctc, generators, kernels, netmodel as nm, sdp
from conftest import random_psd_on_pattern


def check_feasible(problem, sol, tol=1e-6):
    for X in sol.blocks:
        assert np.linalg.eigvalsh(X).min() >= -1e-8
        np.testing.assert_allclose(np.diag(X).real, 1.0, atol=tol)
    for c, ov in enumerate(problem.overlap_pairs):
        if ov is None:
            continue
        p = problem.tree.parent[c]
        mine, theirs = ov
        np.testing.assert_allclose(sol.blocks[c][np.ix_(mine, mine)], sol.blocks[p][np.ix_(theirs, theirs)], atol=tol)


def test_diagonal_sdp():
    d = np.array([1.0, 2.5, 0.3, 4.0])
    W = sp.diags(d).tocsr().astype(complex)
    td = chordal.tree_decomposition(chordal.symmetric_pattern(W))
    sol, problem = sdp.solve_clique_tree(W, td)
    assert all(b.shape == (1, 1) for b in sol.blocks)
    assert sol.optimal
    assert sol.objective == pytest.approx(d.sum(), rel=1e-8)
    np.testing.assert_allclose([b[0, 0].real for b in sol.blocks], 1.0, atol=1e-8)


@pytest.mark.parametrize("cliques", ["column", "maximal"])
def test_e1_value_and_rank(e1_objective, cliques):
    _, _, W = e1_objective
    td = chordal.tree_decomposition(W.pattern())
    sol, problem = sdp.solve_clique_tree(W.matrix, td, cliques=cliques)
    assert sol.optimal
    assert sol.objective == pytest.approx(8.0, rel=1e-6)
    check_feasible(problem, sol)
    for X in sol.blocks:
        lam = np.linalg.eigvalsh(X)
        assert lam[:-1].max(initial=0.0) <= 1e-6 * lam[-1]


def test_two_by_two_dense():
    W = np.array([[1, -1j], [1j, 1]])
    value, X, sol = sdp.solve_dense(W)
    assert value == pytest.approx(4.0, rel=1e-7)
    # the optimum aligns X_21 with the phase of W_12^*: X_21 = i
    np.testing.assert_allclose(X, [[1, -1j], [1j, 1]], atol=1e-6)


def test_identity_dense():
    value, X, _ = sdp.solve_dense(np.eye(5))
    assert value == pytest.approx(5.0, rel=1e-8)
    np.testing.assert_allclose(np.diag(X).real, 1.0, atol=1e-7)


def test_dense_size_limit():
    with pytest.raises(ValueError):
        sdp.solve_dense(sp.identity(10), max_n=5)


def test_triangle_sdp_above_grid_search():
    rng = np.random.default_rng(7)
    P = chordal.pattern_from_edges(3, [(0, 1), (1, 2), (0, 2)])
    W = random_psd_on_pattern(rng, P)
    value, _, _ = sdp.solve_dense(W)
    grid, _ = kernels.grid_search(np.ascontiguousarray(W.toarray()), 720)
    assert value >= grid - 1e-9 * abs(grid)
    td = chordal.tree_decomposition(P)
    sol, _ = sdp.solve_clique_tree(W, td)
    assert sol.objective == pytest.approx(value, rel=1e-7)


@pytest.mark.parametrize("seed", range(3))
def test_random_chordal_dual_bound(seed):
    _, _, W = nm.build_objective(generators.generate("random-city", n=40, seed=seed))
    td = chordal.tree_decomposition(W.pattern())
    sol, problem = sdp.solve_clique_tree(W.matrix, td)
    assert sol.optimal
    check_feasible(problem, sol)
    assert sol.dual_bound == pytest.approx(sol.objective, rel=1e-7)
    assert max(sol.residuals.values()) <= 1e-8
    # dual slack blocks are PSD and complementary
    for X, Z in zip(sol.blocks, sol.dual_blocks):
        assert np.linalg.eigvalsh(Z).min() >= -1e-7 * max(1.0, np.abs(Z).max())


def test_redundant_rows_same_value():
    _, _, W = nm.build_objective(generators.generate("grid", rows=3, cols=3, seed=1))
    td = chordal.tree_decomposition(W.pattern())
    a, _ = sdp.solve_clique_tree(W.matrix, td)
    b, _ = sdp.solve_clique_tree(W.matrix, td, redundant=True)
    assert a.objective == pytest.approx(b.objective, rel=1e-7)


def test_schur_fill_follows_clique_tree():
    _, _, W = nm.build_objective(generators.generate("random-city", n=60, seed=2))
    td = chordal.tree_decomposition(W.pattern())
    sol, problem = sdp.solve_clique_tree(W.matrix, td)
    parent = problem.tree.parent
    for a, b in sol.diagnostics["schur_block_pairs"]:
        assert a == b or parent[a] == b or parent[b] == a


def test_max_iterations_status():
    _, _, W = nm.build_objective(generators.generate("grid", rows=3, cols=3))
    td = chordal.tree_decomposition(W.pattern())
    sol, _ = sdp.solve_clique_tree(W.matrix, td, max_iters=2)
    assert sol.status == sdp.MAX_ITERATIONS and not sol.optimal
    assert sol.iterations <= 2
    assert len(sol.history) == 3


def test_primal_form_matches_dualized():
    _, _, W = nm.build_objective(generators.generate("ring", n=6, seed=3))
    td = chordal.tree_decomposition(W.pattern())
    problem = ctc.split_objective(W.matrix, td)
    primal = ctc.build_canonical(problem)
    a = sdp.solve(primal)
    b = sdp.solve(ctc.dualize(primal))
    assert a.form == "primal" and b.form == "dualized"
    assert a.objective == pytest.approx(b.objective, rel=1e-7)
    assert a.form_objective == pytest.approx(-a.objective)
    assert b.form_objective == pytest.approx(b.objective)
