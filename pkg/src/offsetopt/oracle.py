"""Independent checks: exhaustive offset grid search, time-domain queue simulation,
and dense-versus-clique-tree cross solves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import chordal, kernels, netmodel, sdp

TWO_PI = 2.0 * math.pi
MAX_FREE_NODES = 4


class OracleSizeError(ValueError):
    pass


@dataclass(frozen=True)
class GridSearchResult:
    offsets: np.ndarray
    value: float  # z^H W z
    queue_total: float
    resolution: int  # grid points per cycle

    @property
    def z(self) -> np.ndarray:
        return np.exp(1j * TWO_PI * np.append(self.offsets, 0.0))


def _objective_of(network_or_w) -> netmodel.HermitianObjective:
    if isinstance(network_or_w, netmodel.TrafficNetwork):
        return netmodel.build_objective(network_or_w)[2]
    if isinstance(network_or_w, netmodel.HermitianObjective):
        return network_or_w
    M = sp.csr_matrix(network_or_w)
    return netmodel.HermitianObjective(n=M.shape[0], matrix=M, constant=0.0)


def _steps_per_cycle(resolution) -> int:
    if resolution >= 1:
        m = int(round(resolution))
    else:
        m = int(round(1.0 / resolution))
        if abs(m * resolution - 1.0) > 1e-9:
            raise ValueError("resolution must divide one cycle")
    if m < 1:
        raise ValueError("resolution must be positive")
    return m


def grid_search(network_or_w, resolution=1 / 720, max_free: int = MAX_FREE_NODES) -> GridSearchResult:
    """Best offsets on a uniform grid with the dummy (last node) fixed at phase 0.

    ``resolution`` is the grid spacing in cycles (1/720) or the number of
    points per cycle (720).
    """
    W = _objective_of(network_or_w)
    nfree = W.n - 1
    if nfree > max_free:
        raise OracleSizeError(f"grid search is limited to {max_free} free nodes (got {nfree})")
    m = _steps_per_cycle(resolution)
    value, idx = kernels.grid_search(np.ascontiguousarray(W.dense()), m)
    theta = np.asarray(idx, dtype=float) / m
    return GridSearchResult(
        offsets=theta,
        value=float(value),
        queue_total=float(W.constant - value / TWO_PI**2),
        resolution=m,
    )


def grid_slack(W, resolution=1 / 720) -> float:
    """Bound on how much the best grid point can fall short of the continuous optimum.

    Rounding each optimal phase to the nearest grid point moves every pair's
    relative phase by at most one step h = 2 pi / m. The objective is
    stationary at the optimum and each pair term ``2|W_jk| cos(.)`` has
    curvature at most ``2|W_jk|``, so the loss is at most ``sum |W_jk| h^2``.
    """
    Wm = _objective_of(W).matrix
    h = TWO_PI / _steps_per_cycle(resolution)
    off = sp.triu(Wm, 1).tocoo()
    return float(np.abs(off.data).sum() * h * h)


def simulate_queues(network: netmodel.TrafficNetwork, theta, steps: int = 10_000) -> np.ndarray:
    """Half peak-to-peak queue amplitude per link over one cycle.

    Arrivals and departures are the sinusoidal rate profiles evaluated in the
    time domain: departures of link k follow its head's green,
    ``f_k (1 + cos 2pi (t - theta_head - gamma_k))``, arrivals on a non-entry
    link are the upstream departures split by the turn ratios and delayed by
    the travel time, and entry arrivals are ``f + alpha cos 2pi (t - phi)``.
    The queue is integrated with an end-corrected trapezoid rule.
    """
    if steps < 10:
        raise ValueError("steps must be at least 10")
    net = netmodel.propagate_flows(network)
    theta = np.append(np.asarray(theta, dtype=float), 0.0)
    if theta.shape != (net.n,):
        raise ValueError(f"expected {net.num_signals} offsets")
    links = net.links
    flow = net.flows
    gamma = np.array([lk.green_split for lk in links])
    lam = np.array([lk.travel_time for lk in links])
    head_offset = theta[net.heads]
    is_entry = net.is_entry
    alpha = np.array([(lk.flow if lk.entry_amplitude is None else lk.entry_amplitude) for lk in links])
    phi = np.array([lk.entry_peak_offset for lk in links])
    BT = net.turn_matrix().T.tocsr()
    BT.sort_indices()
    bptr = BT.indptr.astype(np.int64)
    bsrc = BT.indices.astype(np.int64)
    bval = BT.data.astype(float)
    src_shift = theta[net.heads[bsrc]] + gamma[bsrc] if bsrc.size else np.zeros(0)
    return kernels.simulate(int(steps), flow, gamma, lam, head_offset, is_entry, alpha, phi, bptr, bsrc, bval, src_shift)


@dataclass
class CrossCheckReport:
    value_dense: float
    value_ctc: float
    relative_gap: float
    section_deviation: float
    ok: bool
    witness: tuple | None = None


def dense_cross_check(network_or_w, value_tol: float = 1e-6, section_tol: float = 1e-3, cliques: str = "column") -> CrossCheckReport:
    """Solve the relaxation densely and by clique-tree conversion; compare values and sections.

    Optimal values agree to the solver tolerance, but on the usual rank-one
    optimum the iterates only pin X down to about sqrt(tol), so sections are
    compared at ``section_tol`` = 1e-3 (ten times sqrt(1e-8)).
    """
    W = _objective_of(network_or_w)
    if W.n > 200:
        raise OracleSizeError("dense cross check is limited to n <= 200")
    vd, Xd, _ = sdp.solve_dense(W.matrix)
    td = chordal.tree_decomposition(W.pattern())
    sol, problem = sdp.solve_clique_tree(W.matrix, td, cliques=cliques)
    gap = abs(vd - sol.objective) / (1.0 + abs(vd))
    Xp = Xd[np.ix_(td.perm, td.perm)]
    worst, witness = 0.0, None
    for c, (cl, Xc) in enumerate(zip(problem.tree.cliques, sol.blocks)):
        dev = float(np.abs(Xp[np.ix_(cl, cl)] - Xc).max(initial=0.0))
        if dev > worst:
            worst, witness = dev, (c, tuple(int(td.perm[v]) for v in cl))
    ok = gap <= value_tol and worst <= section_tol
    return CrossCheckReport(vd, sol.objective, gap, worst, ok, None if ok else witness)
