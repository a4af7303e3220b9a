"""End-to-end offset optimization: order, factor, convert, solve, complete, round."""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import chordal, completion, ctc, netmodel, rounding, sdp


@dataclass(frozen=True)
class PipelineOptions:
    tol: float = 1e-8
    max_iters: int = 100
    trials: int = 200
    seed: int = 0
    order: str = "amd"
    cliques: str = "column"
    redundant_overlaps: bool = False
    regularization: float = 1e-9


@dataclass
class PipelineResult:
    network: netmodel.TrafficNetwork
    phasors: netmodel.LinkPhasors
    objective: netmodel.HermitianObjective
    decomposition: chordal.TreeDecomposition
    problem: ctc.CliqueSdpProblem
    sdp_solution: sdp.BlockSolution
    completion: completion.FactoredCompletion
    solution: rounding.OffsetSolution
    timings: dict = field(default_factory=dict)

    @property
    def omega(self) -> int:
        return self.decomposition.omega

    def to_dict(self, include_timings: bool = True) -> dict:
        out = self.solution.to_dict()
        out.update(
            n=int(self.network.num_signals),
            links=int(self.network.num_links),
            omega=int(self.omega),
            solver_status=self.sdp_solution.status,
            solver_iterations=int(self.sdp_solution.iterations),
            min_completion_pivot=float(self.completion.raw_min_d),
        )
        if include_timings:
            out["timings"] = {k: round(v, 6) for k, v in self.timings.items()}
            out["sec"] = round(sum(self.timings.values()), 6)
        return out


@contextmanager
def _timed(timings: dict, name: str):
    t0 = time.perf_counter()
    try:
        yield
    finally:
        timings[name] = time.perf_counter() - t0


def solve_network(net: netmodel.TrafficNetwork, options: PipelineOptions | None = None) -> PipelineResult:
    opts = options or PipelineOptions()
    t: dict[str, float] = {}
    with _timed(t, "model"):
        net, phasors, W = netmodel.build_objective(net)
    with _timed(t, "order"):
        pattern = W.pattern()
        if opts.order == "amd":
            perm = chordal.amd_order(pattern)
        elif opts.order == "natural":
            perm = np.arange(W.n)
        elif opts.order == "reverse":
            perm = np.arange(W.n)[::-1].copy()
        else:
            raise ValueError(f"unknown ordering {opts.order!r}")
    with _timed(t, "symbolic"):
        td = chordal.symbolic_factor(pattern, perm)
    with _timed(t, "ctc"):
        problem = ctc.split_objective(W.matrix, td, cliques=opts.cliques)
        canon = ctc.dualize(ctc.build_canonical(problem, redundant=opts.redundant_overlaps))
    with _timed(t, "solve"):
        sol = sdp.solve(canon, tol=opts.tol, max_iters=opts.max_iters, regularization=opts.regularization)
    with _timed(t, "completion"):
        fc = completion.complete(td, problem, sol)
    with _timed(t, "rounding"):
        best = rounding.best_of_k(fc, W, k=opts.trials, seed=opts.seed, sdp_bound=sol.objective, certified_bound=sol.dual_bound)
    _, qtotal = netmodel.queue_lengths(phasors, best.z)
    best.queue_total = qtotal
    best.queue_lower_bound = min(best.queue_lower_bound, qtotal)
    return PipelineResult(
        network=net,
        phasors=phasors,
        objective=W,
        decomposition=td,
        problem=problem,
        sdp_solution=sol,
        completion=fc,
        solution=best,
        timings=t,
    )
