"""Command line entry point: ``offsetopt {generate,solve,bench,oracle}``.

Exit codes: 0 success, 2 input error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import generators, netmodel, oracle, pipeline, sdp
from .completion import CompletionError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3

THREADS_ENV = "OFFSETOPT_THREADS"
STAGES = ("model", "order", "symbolic", "ctc", "solve", "completion", "rounding")
BENCH_FIELDS = ("n", "links", "omega", "lower", "upper", "ratio", "sec") + tuple(f"t_{s}" for s in STAGES)

log = logging.getLogger("offsetopt")


class InputError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _thread_limit(args):
    """Thread cap for BLAS/LAPACK: 1 in deterministic mode, else OFFSETOPT_THREADS if set."""
    if getattr(args, "deterministic", False):
        return threadpool_limits(limits=1)
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise InputError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
        if n < 1:
            raise InputError(f"{THREADS_ENV} must be positive")
        return threadpool_limits(limits=n)
    return contextlib.nullcontext()


def _options(args) -> pipeline.PipelineOptions:
    if args.tol <= 0:
        raise InputError("--tol must be positive")
    if args.trials < 1:
        raise InputError("--trials must be at least 1")
    if args.max_iters < 1:
        raise InputError("--max-iters must be at least 1")
    return pipeline.PipelineOptions(
        tol=args.tol,
        max_iters=args.max_iters,
        trials=args.trials,
        seed=args.seed,
        order=args.order,
        cliques=args.cliques,
    )


def _load(path: str) -> netmodel.TrafficNetwork:
    try:
        return netmodel.load_network(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except netmodel.NetworkError as exc:
        raise InputError(str(exc)) from exc


# -- generate ------------------------------------------------------------------


def _generator_params(args) -> dict:
    kind = args.kind
    if kind == "grid":
        rows = args.rows if args.rows is not None else 3
        cols = args.cols if args.cols is not None else rows
        return {"rows": rows, "cols": cols}
    n = args.n if args.n is not None else {"ring": 6, "tree": 10, "random-city": 100}[kind]
    return {"n": n}


def cmd_generate(args) -> int:
    try:
        net = generators.generate(args.kind, seed=args.seed, **_generator_params(args))
    except netmodel.NetworkError as exc:
        raise InputError(str(exc)) from exc
    _emit(json.dumps(netmodel.network_to_dict(net), indent=1) + "\n", args.out)
    return EXIT_OK


# -- solve ---------------------------------------------------------------------


def cmd_solve(args) -> int:
    opts = _options(args)
    net = _load(args.network)
    with _thread_limit(args):
        try:
            res = pipeline.solve_network(net, opts)
        except (CompletionError, np.linalg.LinAlgError, sdp.SolverError) as exc:
            print(f"solver failure: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        except netmodel.NetworkError as exc:
            raise InputError(str(exc)) from exc
    out = res.to_dict(include_timings=not args.deterministic)
    _emit(_dump(out), args.out)
    sol = res.sdp_solution
    if not sol.optimal:
        detail = sol.diagnostics.get("error", "")
        print(
            f"solver failure: status {sol.status} after {sol.iterations} iterations "
            f"(residuals {json.dumps(sol.residuals, sort_keys=True)}) {detail}".rstrip(),
            file=sys.stderr,
        )
        return EXIT_SOLVER
    return EXIT_OK


# -- bench ---------------------------------------------------------------------


def _parse_sizes(text: str) -> list[int]:
    if text.strip() == "":
        return []
    try:
        sizes = [int(s) for s in text.replace(" ", "").split(",") if s]
    except ValueError as exc:
        raise InputError(f"--sizes must be comma separated integers, got {text!r}") from exc
    if any(s < 1 for s in sizes):
        raise InputError("sizes must be positive")
    if sizes != sorted(sizes):
        raise InputError("sizes must be ascending")
    return sizes


def bench_network(kind: str, n: int, seed: int) -> netmodel.TrafficNetwork:
    """Network with about n signals: a near-square grid or a random city of exactly n."""
    if kind == "grid":
        rows = max(1, math.isqrt(n))
        cols = max(1, math.ceil(n / rows))
        return generators.generate("grid", seed=seed, rows=rows, cols=cols)
    return generators.generate(kind, seed=seed, n=n)


def bench_row(res: pipeline.PipelineResult) -> dict:
    d = res.to_dict(include_timings=True)
    row = {k: d[k] for k in ("n", "links", "omega", "lower", "upper", "ratio", "sec")}
    for s in STAGES:
        row[f"t_{s}"] = round(res.timings.get(s, 0.0), 6)
    return row


def cmd_bench(args) -> int:
    sizes = _parse_sizes(args.sizes)
    opts = _options(args)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_FIELDS, lineterminator="\n")
    writer.writeheader()
    status = EXIT_OK
    with _thread_limit(args):
        for n in sizes:
            net = bench_network(args.kind, n, args.seed)
            try:
                res = pipeline.solve_network(net, opts)
            except (CompletionError, np.linalg.LinAlgError, sdp.SolverError) as exc:
                print(f"solver failure at n={n}: {exc}", file=sys.stderr)
                status = EXIT_SOLVER
                continue
            if not res.sdp_solution.optimal:
                status = EXIT_SOLVER
            writer.writerow(bench_row(res))
            log.info("n=%d done in %.2fs", n, sum(res.timings.values()))
    _emit(buf.getvalue(), args.out)
    return status


# -- oracle --------------------------------------------------------------------


def _parse_offsets(text: str, expected: int) -> np.ndarray:
    try:
        theta = np.array([float(s) for s in text.split(",") if s.strip()], dtype=float)
    except ValueError as exc:
        raise InputError(f"--offsets must be comma separated numbers, got {text!r}") from exc
    if theta.size != expected:
        raise InputError(f"expected {expected} offsets, got {theta.size}")
    return theta


def cmd_oracle(args) -> int:
    net = _load(args.network)
    out: dict = {"check": args.check}
    try:
        if args.check == "grid":
            r = oracle.grid_search(net, resolution=args.resolution)
            W = netmodel.build_objective(net)[2]
            out.update(
                offsets=[float(t) for t in r.offsets],
                value=r.value,
                queue_total=r.queue_total,
                resolution=r.resolution,
                slack=oracle.grid_slack(W, 1.0 / r.resolution),
            )
        elif args.check == "simulate":
            if args.offsets is None:
                raise InputError("--offsets is required for the simulate check")
            theta = _parse_offsets(args.offsets, net.num_signals)
            _, ph, _ = netmodel.build_objective(net)
            sim = oracle.simulate_queues(net, theta, steps=args.steps)
            Q, total = netmodel.queue_lengths(ph, netmodel.offsets_to_z(theta, net.num_signals))
            out.update(
                offsets=[float(t) for t in theta],
                simulated=[float(q) for q in sim],
                formula=[float(q) for q in Q],
                max_abs_error=float(np.abs(sim - Q).max(initial=0.0)),
                queue_total=float(total),
            )
        else:
            rep = oracle.dense_cross_check(net, cliques=args.cliques)
            out.update(
                value_dense=rep.value_dense,
                value_ctc=rep.value_ctc,
                relative_gap=rep.relative_gap,
                section_deviation=rep.section_deviation,
                ok=rep.ok,
                witness=rep.witness,
            )
    except oracle.OracleSizeError as exc:
        raise InputError(str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, netmodel.NetworkError):
            raise InputError(str(exc)) from exc
        raise
    _emit(_dump(out), args.out)
    if args.check == "cross" and not out["ok"]:
        return EXIT_SOLVER
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=1e-8, help="interior-point stopping tolerance")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--trials", type=int, default=200, help="number of randomized roundings")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--order", choices=("amd", "natural", "reverse"), default="amd")
    p.add_argument("--cliques", choices=("column", "maximal"), default="column")
    p.add_argument("--deterministic", action="store_true",
                   help="single BLAS thread and no timings, so output is byte-reproducible")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="offsetopt", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic network as JSON")
    g.add_argument("kind", choices=generators.KINDS)
    g.add_argument("--rows", type=int)
    g.add_argument("--cols", type=int)
    g.add_argument("--n", type=int, help="number of signals (ring, tree, random-city)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", "-o")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="optimize the offsets of a network file")
    s.add_argument("network")
    _add_solver_flags(s)
    s.add_argument("--out", "-o")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="solve generated networks of increasing size, CSV output")
    b.add_argument("--sizes", default="25,100,400", help="comma separated signal counts, ascending")
    b.add_argument("--kind", choices=("grid", "random-city"), default="grid")
    _add_solver_flags(b)
    b.add_argument("--out", "-o")
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("oracle", help="run an independent check on a small network")
    o.add_argument("network")
    o.add_argument("--check", choices=("grid", "simulate", "cross"), default="grid")
    o.add_argument("--resolution", type=float, default=720, help="grid points per cycle")
    o.add_argument("--offsets", help="comma separated offsets for --check simulate")
    o.add_argument("--steps", type=int, default=10_000)
    o.add_argument("--cliques", choices=("column", "maximal"), default="column")
    o.add_argument("--out", "-o")
    o.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
