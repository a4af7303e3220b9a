"""Compare the numba kernels against their pure numpy/Python fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--pipeline]

Each kernel is timed on inputs taken from a generated city (best of
``--repeat`` runs, after one warm-up call so compile time is excluded).
``--pipeline`` also times the full solve in two subprocesses, one with
OFFSETOPT_DISABLE_JIT=1.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from offsetopt import _jit, chordal, completion, generators, kernels, netmodel, oracle, sdp


def best_time(f, repeat):
    f()
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        f()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def cases(n):
    net = generators.generate("random-city", seed=1, n=n)
    net, ph, W = netmodel.build_objective(net)
    pattern = W.pattern()
    n1 = W.n

    perm = chordal.amd_order(pattern)
    td = chordal.symbolic_factor(pattern, perm)
    P = pattern[perm][:, perm].tocsc()
    sol, problem = sdp.solve_clique_tree(W.matrix, td, tol=1e-6)
    fc = completion.complete(td, problem, sol)
    rng = np.random.default_rng(0)
    y = rng.standard_normal((32, fc.n)) + 1j * rng.standard_normal((32, fc.n))

    small = generators.generate("grid", rows=1, cols=3, seed=0)
    Ws = np.ascontiguousarray(netmodel.build_objective(small)[2].dense())

    d = int(max(problem.block_dims))
    R = rng.standard_normal((8, d, d)) + 1j * rng.standard_normal((8, d, d))

    tiny = generators.generate("grid", rows=2, cols=2, seed=0)
    theta = rng.uniform(size=tiny.num_signals)

    def sim_args():
        # reuse the oracle's argument marshalling through a recording shim
        captured = {}
        orig = kernels.simulate

        def grab(*a):
            captured["a"] = a
            return np.zeros(1)

        oracle.kernels.simulate = grab
        try:
            oracle.simulate_queues(tiny, theta, steps=2000)
        finally:
            oracle.kernels.simulate = orig
        return captured["a"]

    sargs = sim_args()
    return {
        "amd": (
            lambda: kernels.amd_kernel(*chordal.amd_inputs(pattern)),
            lambda: kernels.amd_fallback(*chordal.amd_inputs(pattern)),
        ),
        "symbolic": (
            lambda: kernels.symbolic_kernel(n1, P.indptr.astype(np.int64), P.indices.astype(np.int64)),
            lambda: _jit.py_func(kernels.symbolic_kernel)(n1, P.indptr.astype(np.int64), P.indices.astype(np.int64)),
        ),
        "backsolve": (
            lambda: kernels.backsolve_kernel(fc.colptr, fc.rows, fc.vals, y),
            lambda: kernels.backsolve_numpy(fc.colptr, fc.rows, fc.vals, y),
        ),
        "congruence": (lambda: kernels.congruence_kernel(R), lambda: kernels.congruence_numpy(R)),
        "simulate": (lambda: kernels.simulate_kernel(*sargs), lambda: kernels.simulate_numpy(*sargs)),
        "grid_search": (lambda: kernels.grid_search_kernel(Ws, 180), lambda: kernels.grid_search_numpy(Ws, 180)),
    }


def pipeline_times(n):
    code = (
        "import time;from offsetopt import generate, solve_network, PipelineOptions;"
        f"net=generate('random-city', seed=1, n={n});t=time.perf_counter();"
        "solve_network(net, PipelineOptions(trials=64));print(time.perf_counter()-t)"
    )
    out = {}
    for label, flag in (("jit", "0"), ("fallback", "1")):
        env = dict(os.environ, OFFSETOPT_DISABLE_JIT=flag)
        # warm the numba cache first so compile time is not counted
        subprocess.run([sys.executable, "-c", code], env=env, check=True, capture_output=True)
        r = subprocess.run([sys.executable, "-c", code], env=env, check=True, capture_output=True, text=True)
        out[label] = float(r.stdout.strip().splitlines()[-1])
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400, help="random-city size for the kernel inputs")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--pipeline", action="store_true")
    args = ap.parse_args()
    if not _jit.JIT_ENABLED:
        sys.exit("unset OFFSETOPT_DISABLE_JIT: this benchmark needs the compiled kernels")

    print(f"{'kernel':<12} {'jit [ms]':>10} {'fallback [ms]':>14} {'speedup':>8}")
    for name, (fast, slow) in cases(args.n).items():
        a = best_time(fast, args.repeat)
        b = best_time(slow, max(1, args.repeat // 2))
        print(f"{name:<12} {1e3 * a:10.3f} {1e3 * b:14.3f} {b / a:8.1f}")
    if args.pipeline:
        t = pipeline_times(args.n)
        print(f"\npipeline n={args.n}: jit {t['jit']:.2f}s, fallback {t['fallback']:.2f}s")


if __name__ == "__main__":
    main()
