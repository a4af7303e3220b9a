"""Compiled kernels against their numpy fallbacks, and the OFFSETOPT_DISABLE_JIT switch."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from offsetopt import _jit, chordal, generators, hermitian, kernels, netmodel as nm, oracle

needs_jit = pytest.mark.skipif(not _jit.JIT_ENABLED, reason="numba kernels disabled")


def random_factor(rng, n, density=0.3):
    colptr = [0]
    rows = []
    for j in range(n):
        below = np.flatnonzero(rng.uniform(size=n - j - 1) < density) + j + 1
        rows.extend(below.tolist())
        colptr.append(len(rows))
    m = len(rows)
    vals = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return np.array(colptr, dtype=np.int64), np.array(rows, dtype=np.int64), vals


@needs_jit
@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 30), seed=st.integers(0, 2**31))
def test_backsolve_agrees(n, seed):
    rng = np.random.default_rng(seed)
    colptr, rows, vals = random_factor(rng, n)
    y = rng.standard_normal((4, n)) + 1j * rng.standard_normal((4, n))
    a = kernels.backsolve_kernel(colptr, rows, vals, y)
    b = kernels.backsolve_numpy(colptr, rows, vals, y)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(b).max())
    # and it really solves F^H s = y
    F = np.eye(n, dtype=complex)
    for j in range(n):
        F[rows[colptr[j] : colptr[j + 1]], j] = vals[colptr[j] : colptr[j + 1]]
    np.testing.assert_allclose(F.conj().T @ a[0], y[0], atol=1e-9 * max(1.0, np.abs(a).max()))


@needs_jit
@pytest.mark.parametrize("d", [1, 2, 5])
def test_congruence_agrees(d):
    rng = np.random.default_rng(d)
    R = rng.standard_normal((3, d, d)) + 1j * rng.standard_normal((3, d, d))
    T = kernels.congruence_kernel(R)
    np.testing.assert_allclose(T, kernels.congruence_numpy(R), atol=1e-12)
    X = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    X = X + X.conj().T
    np.testing.assert_allclose(T[0] @ hermitian.vec(X), hermitian.vec(R[0] @ X @ R[0].conj().T), atol=1e-12)


def test_congruence_entries_match_matrix():
    rng = np.random.default_rng(3)
    S = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    S = S + S.conj().T
    M = hermitian.congruence_matrix(S)
    rows, cols = np.array([0, 5, 11]), np.array([2, 3, 15])
    np.testing.assert_allclose(hermitian.congruence_entries(S, rows, cols), M[np.ix_(rows, cols)], atol=1e-12)


@needs_jit
def test_simulate_agrees():
    net = generators.generate("random-city", n=15, seed=2)
    captured = {}
    orig = kernels.simulate

    def grab(*args):
        captured["args"] = args
        return orig(*args)

    oracle.kernels.simulate = grab
    try:
        oracle.simulate_queues(net, np.linspace(0, 0.9, net.num_signals), steps=500)
    finally:
        oracle.kernels.simulate = orig
    args = captured["args"]
    np.testing.assert_allclose(kernels.simulate_kernel(*args), kernels.simulate_numpy(*args), rtol=1e-10, atol=1e-10)


@needs_jit
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_grid_search_agrees(n):
    rng = np.random.default_rng(n)
    H = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    W = np.ascontiguousarray(H @ H.conj().T)
    va, ia = kernels.grid_search_kernel(W, 36)
    vb, ib = kernels.grid_search_numpy(W, 36)
    assert va == pytest.approx(vb, rel=1e-12)
    np.testing.assert_array_equal(ia, ib)


def test_grid_search_is_exhaustive():
    rng = np.random.default_rng(0)
    H = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    W = H @ H.conj().T
    m = 24
    zg = np.exp(2j * np.pi * np.arange(m) / m)
    brute = max(
        np.real(np.conj(z) @ W @ z) for a in zg for b in zg for z in [np.array([a, b, 1.0])]
    )
    v, _ = kernels.grid_search(np.ascontiguousarray(W), m)
    assert v == pytest.approx(brute, rel=1e-12)


@needs_jit
def test_amd_and_symbolic_agree():
    _, _, W = nm.build_objective(generators.generate("random-city", n=120, seed=6))
    P = W.pattern()
    a = kernels.amd_kernel(*chordal.amd_inputs(P))
    b = kernels.amd_fallback(*chordal.amd_inputs(P))
    np.testing.assert_array_equal(a, b)
    Pp = P[a][:, a].tocsr()
    Pp.sort_indices()
    args = (Pp.shape[0], Pp.indptr.astype(np.int64), Pp.indices.astype(np.int64))
    for x, y in zip(kernels.symbolic_kernel(*args), _jit.py_func(kernels.symbolic_kernel)(*args)):
        np.testing.assert_array_equal(x, y)


def test_disable_flag_selects_fallbacks():
    code = (
        "from offsetopt import _jit, kernels;"
        "print(_jit.JIT_ENABLED, kernels.backsolve is kernels.backsolve_numpy, kernels.grid_search is kernels.grid_search_numpy)"
    )
    env = dict(os.environ, OFFSETOPT_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    assert out.split() == ["False", "True", "True"]


def test_fallback_pipeline_matches():
    code = (
        "import json;from offsetopt import generate, solve_network, PipelineOptions;"
        "r=solve_network(generate('grid', rows=3, cols=3, seed=1), PipelineOptions(trials=16));"
        "print(json.dumps([r.sdp_solution.objective, r.solution.rounded_value, r.omega]))"
    )
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, OFFSETOPT_DISABLE_JIT=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        outs.append(np.array(json.loads(res.stdout.strip().splitlines()[-1])))
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-8)
