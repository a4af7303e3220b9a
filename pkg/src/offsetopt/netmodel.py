"""Sinusoidal traffic network model: flows, phasors, the Hermitian objective W.

Intersections are indexed from 0 internally. The dummy source is always the
last node, index ``num_signals``. The JSON format uses 1-based signal indices
and the string ``"eps"`` for the dummy source.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

TWO_PI = 2.0 * math.pi
EPS_LABEL = "eps"


class NetworkError(ValueError):
    """Raised for structurally invalid networks or network files."""


class IllPosedNetworkError(NetworkError):
    """Flow balance has no unique solution (closed turn-ratio cycles)."""


@dataclass(frozen=True)
class Link:
    tail: int
    head: int
    travel_time: float = 0.0
    green_split: float = 0.0
    flow: float = 0.0
    entry_amplitude: float | None = None
    entry_peak_offset: float = 0.0


@dataclass(frozen=True)
class TrafficNetwork:
    num_signals: int
    links: tuple[Link, ...]
    # (from_link, to_link, beta), 0-based link indices
    turn_ratios: tuple[tuple[int, int, float], ...] = ()

    @property
    def n(self) -> int:
        return self.num_signals + 1

    @property
    def dummy(self) -> int:
        return self.num_signals

    @property
    def num_links(self) -> int:
        return len(self.links)

    @cached_property
    def tails(self) -> np.ndarray:
        return np.array([lk.tail for lk in self.links], dtype=np.int64)

    @cached_property
    def heads(self) -> np.ndarray:
        return np.array([lk.head for lk in self.links], dtype=np.int64)

    @cached_property
    def is_entry(self) -> np.ndarray:
        return self.tails == self.dummy

    @cached_property
    def flows(self) -> np.ndarray:
        return np.array([lk.flow for lk in self.links], dtype=float)

    def turn_matrix(self) -> sp.csr_matrix:
        """Sparse B with ``B[l, k] = beta_lk``."""
        m = self.num_links
        if not self.turn_ratios:
            return sp.csr_matrix((m, m))
        rows, cols, vals = zip(*self.turn_ratios)
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, m))

    def skeleton_edges(self) -> set[tuple[int, int]]:
        """Undirected node pairs joined by at least one link."""
        return {(min(a, b), max(a, b)) for a, b in zip(self.tails.tolist(), self.heads.tolist()) if a != b}


@dataclass(frozen=True)
class LinkPhasors:
    arrival: np.ndarray  # A_l
    departure: np.ndarray  # D_l
    tails: np.ndarray
    heads: np.ndarray
    n: int

    @property
    def A(self) -> np.ndarray:
        return self.arrival

    @property
    def D(self) -> np.ndarray:
        return self.departure


@dataclass(frozen=True)
class HermitianObjective:
    n: int
    matrix: sp.csr_matrix
    constant: float
    meta: dict = field(default_factory=dict, compare=False)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def pattern(self) -> sp.csr_matrix:
        """Boolean sparsity pattern of W with the full diagonal included."""
        p = (self.matrix != 0).astype(np.int8) + sp.identity(self.n, dtype=np.int8, format="csr")
        p = (p != 0).astype(np.int8)
        return sp.csr_matrix(p)


def validate_network(net: TrafficNetwork) -> None:
    """Check the structural invariants; raise NetworkError on the first violation."""
    if net.num_signals < 1:
        raise NetworkError("network needs at least one signalized intersection")
    n_sig = net.num_signals
    for idx, lk in enumerate(net.links):
        if not (0 <= lk.head < n_sig):
            raise NetworkError(f"link {idx}: head must be a signalized intersection")
        if not (0 <= lk.tail <= n_sig):
            raise NetworkError(f"link {idx}: tail out of range")
        if lk.tail == lk.head:
            raise NetworkError(f"link {idx}: self loop")
        if not 0.0 <= lk.green_split < 1.0:
            raise NetworkError(f"link {idx}: green split outside [0, 1)")
        if lk.flow < 0:
            raise NetworkError(f"link {idx}: negative flow")
        if lk.tail == n_sig:
            amp = lk.flow if lk.entry_amplitude is None else lk.entry_amplitude
            if amp < 0 or amp > lk.flow * (1 + 1e-12):
                raise NetworkError(f"entry link {idx}: amplitude must lie in [0, flow]")
            if not 0.0 <= lk.entry_peak_offset < 1.0:
                raise NetworkError(f"entry link {idx}: peak offset outside [0, 1)")
        elif not 0.0 <= lk.travel_time < 1.0:
            raise NetworkError(f"link {idx}: travel time outside [0, 1)")
    row_sums = np.zeros(net.num_links)
    for l, k, beta in net.turn_ratios:
        if not (0 <= l < net.num_links and 0 <= k < net.num_links):
            raise NetworkError(f"turn ratio ({l}, {k}) refers to a missing link")
        if not 0.0 <= beta <= 1.0:
            raise NetworkError(f"turn ratio ({l}, {k}) outside [0, 1]")
        if beta > 0 and net.links[l].head != net.links[k].tail:
            raise NetworkError(f"turn ratio ({l}, {k}) joins links that do not meet")
        row_sums[l] += beta
    if np.any(row_sums > 1.0 + 1e-12):
        bad = int(np.argmax(row_sums))
        raise NetworkError(f"turn ratios out of link {bad} sum to {row_sums[bad]:.6g} > 1")


def propagate_flows(net: TrafficNetwork) -> TrafficNetwork:
    """Return a copy whose non-entry flows satisfy ``f_l = sum_k beta_kl f_k``."""
    validate_network(net)
    m = net.num_links
    entry = net.is_entry
    rhs = np.where(entry, net.flows, 0.0)
    system = (sp.identity(m, format="csc") - net.turn_matrix().T.tocsc()).tocsc()
    try:
        with np.errstate(all="raise"):
            flows = spla.splu(system).solve(rhs)
    except (RuntimeError, FloatingPointError) as exc:
        raise IllPosedNetworkError("flow balance is singular; some turn-ratio cycle has no exit") from exc
    resid = np.linalg.norm(system @ flows - rhs)
    if not np.all(np.isfinite(flows)) or resid > 1e-10 * max(1.0, np.linalg.norm(flows)):
        raise IllPosedNetworkError(f"flow balance residual {resid:.3g} too large")
    flows = np.maximum(flows, 0.0)
    links = tuple(lk if entry[i] else replace(lk, flow=float(flows[i])) for i, lk in enumerate(net.links))
    return replace(net, links=links)


def compute_phasors(net: TrafficNetwork) -> LinkPhasors:
    f = net.flows
    gamma = np.array([lk.green_split for lk in net.links])
    lam = np.array([lk.travel_time for lk in net.links])
    D = f * np.exp(-1j * TWO_PI * gamma)
    upstream = net.turn_matrix().T @ D
    A = np.exp(-1j * TWO_PI * lam) * upstream
    for i in np.flatnonzero(net.is_entry):
        lk = net.links[i]
        alpha = lk.flow if lk.entry_amplitude is None else lk.entry_amplitude
        A[i] = alpha * np.exp(-1j * TWO_PI * lk.entry_peak_offset)
    return LinkPhasors(arrival=A, departure=D, tails=net.tails.copy(), heads=net.heads.copy(), n=net.n)


def build_w(net: TrafficNetwork, phasors: LinkPhasors) -> HermitianObjective:
    A, D = phasors.arrival, phasors.departure
    tau, sig = phasors.tails, phasors.heads
    weight = np.abs(A) * np.abs(D)
    keep = weight > 0
    n = net.n
    diag = np.bincount(tau[keep], weights=weight[keep], minlength=n)
    diag += np.bincount(sig[keep], weights=weight[keep], minlength=n)
    off = np.conj(D[keep]) * A[keep]  # lands at (tau, sigma)
    rows = np.concatenate([np.arange(n), tau[keep], sig[keep]])
    cols = np.concatenate([np.arange(n), sig[keep], tau[keep]])
    vals = np.concatenate([diag.astype(complex), off, np.conj(off)])
    W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    W.sum_duplicates()
    constant = float(np.sum((np.abs(A) + np.abs(D)) ** 2) / TWO_PI**2)
    return HermitianObjective(n=n, matrix=W, constant=constant)


def _as_matrix(W):
    return W.matrix if isinstance(W, HermitianObjective) else W


def qcqp_objective(W, z: np.ndarray) -> float:
    """Real quadratic form ``z^H W z``."""
    M = _as_matrix(W)
    z = np.asarray(z, dtype=complex)
    val = np.vdot(z, M @ z)
    scale = max(1.0, abs(val.real))
    if abs(val.imag) > 1e-10 * scale:
        raise ValueError(f"quadratic form has imaginary part {val.imag:.3g}; W is not Hermitian")
    return float(val.real)


def check_unit_modulus(z: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    err = np.max(np.abs(np.abs(z) - 1.0)) if z.size else 0.0
    if err > tol:
        raise ValueError(f"z is not unit modulus (max deviation {err:.3g})")
    return z


def queue_lengths(phasors: LinkPhasors, z: np.ndarray) -> tuple[np.ndarray, float]:
    """Average queue length per link and the total of their squares."""
    z = check_unit_modulus(z)
    if z.shape != (phasors.n,):
        raise ValueError(f"z must have length {phasors.n}")
    c = phasors.arrival * np.conj(z[phasors.tails]) - phasors.departure * np.conj(z[phasors.heads])
    Q = np.abs(c) / TWO_PI
    return Q, float(np.sum(Q**2))


def offsets_to_z(theta: np.ndarray, num_signals: int) -> np.ndarray:
    """Unit-modulus vector for signal offsets (cycle units); the dummy gets phase 0."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (num_signals,):
        raise ValueError(f"expected {num_signals} offsets")
    return np.exp(1j * TWO_PI * np.append(theta, 0.0))


# -- JSON ---------------------------------------------------------------------


def _node_from_json(value, num_signals: int) -> int:
    if isinstance(value, str):
        if value.strip().lower() in (EPS_LABEL, "ε", "epsilon"):
            return num_signals
        raise NetworkError(f"unknown node label {value!r}")
    if isinstance(value, bool) or not isinstance(value, int):
        raise NetworkError(f"node index must be an integer or 'eps', got {value!r}")
    if not 1 <= value <= num_signals:
        raise NetworkError(f"node index {value} outside 1..{num_signals}")
    return value - 1


def network_from_dict(data: dict) -> TrafficNetwork:
    try:
        num_signals = int(data["num_signals"])
        raw_links = data["links"]
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkError(f"missing or invalid top-level field: {exc}") from exc
    links = []
    for i, rec in enumerate(raw_links):
        try:
            tail = _node_from_json(rec["tail"], num_signals)
            head = _node_from_json(rec["head"], num_signals)
            amp = rec.get("entry_amplitude")
            links.append(
                Link(
                    tail=tail,
                    head=head,
                    travel_time=float(rec.get("travel_time", 0.0)),
                    green_split=float(rec.get("green_split", 0.0)),
                    flow=float(rec.get("flow", 0.0) or 0.0),
                    entry_amplitude=None if amp is None else float(amp),
                    entry_peak_offset=float(rec.get("entry_peak_offset", 0.0) or 0.0),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, NetworkError):
                raise
            raise NetworkError(f"link {i}: {exc}") from exc
    ratios = []
    for rec in data.get("turn_ratios", []):
        try:
            l, k, beta = rec
            ratios.append((int(l) - 1, int(k) - 1, float(beta)))
        except (TypeError, ValueError) as exc:
            raise NetworkError(f"bad turn ratio record {rec!r}") from exc
    net = TrafficNetwork(num_signals=num_signals, links=tuple(links), turn_ratios=tuple(ratios))
    validate_network(net)
    return net


def network_to_dict(net: TrafficNetwork) -> dict:
    def label(i):
        return EPS_LABEL if i == net.dummy else i + 1

    links = []
    for lk in net.links:
        rec = {
            "tail": label(lk.tail),
            "head": label(lk.head),
            "travel_time": lk.travel_time,
            "green_split": lk.green_split,
            "flow": lk.flow,
        }
        if lk.tail == net.dummy:
            rec["entry_amplitude"] = lk.flow if lk.entry_amplitude is None else lk.entry_amplitude
            rec["entry_peak_offset"] = lk.entry_peak_offset
        links.append(rec)
    return {
        "num_signals": net.num_signals,
        "links": links,
        "turn_ratios": [[l + 1, k + 1, beta] for l, k, beta in net.turn_ratios],
    }


def load_network(path: str | Path) -> TrafficNetwork:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise NetworkError(f"{path}: top level must be an object")
    return network_from_dict(data)


def save_network(net: TrafficNetwork, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1) + "\n")


def build_objective(net: TrafficNetwork) -> tuple[TrafficNetwork, LinkPhasors, HermitianObjective]:
    """Flows, phasors and W in one call."""
    net = propagate_flows(net)
    ph = compute_phasors(net)
    return net, ph, build_w(net, ph)
