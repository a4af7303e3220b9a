"""Synthetic street networks.

Every generator builds an undirected street layout with planar coordinates
and converts it to a TrafficNetwork with the same conventions:

* each street carries one link per direction;
* travel time is proportional to street length (plus a small jitter),
  reduced mod 1 cycle;
* the green split of a link is its undirected orientation measured from
  north, in half-turns, so north-south and east-west links are half a
  cycle apart;
* at an intersection, traffic going straight is twice the traffic making
  each turn, U-turns are not allowed, and a fixed share leaves the network;
* entry links from the dummy source have amplitude equal to their flow and
  peak offset 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netmodel import Link, NetworkError, TrafficNetwork, propagate_flows

KINDS = ("grid", "ring", "tree", "random-city")


@dataclass(frozen=True)
class GeneratorConfig:
    time_per_unit: float = 0.22  # cycles per unit of street length
    jitter: float = 0.15
    exit_share: float = 0.1
    straight_weight: float = 2.0
    turn_weight: float = 1.0
    entry_flow: tuple[float, float] = (400.0, 800.0)


@dataclass
class StreetLayout:
    xy: np.ndarray  # (n, 2)
    streets: list[tuple[int, int]]
    entries: list[int]  # signals fed by the dummy source (repeats allowed)


def _orientation_split(dx: float, dy: float) -> float:
    ang = math.atan2(dx, dy) % math.pi  # from north, undirected
    g = ang / math.pi
    return 0.0 if g >= 1.0 else g


def _turn_weight(cfg: GeneratorConfig, din: np.ndarray, dout: np.ndarray) -> float:
    c = float(np.dot(din, dout) / (np.linalg.norm(din) * np.linalg.norm(dout)))
    return cfg.straight_weight if c > math.cos(math.radians(30.0)) else cfg.turn_weight


def layout_to_network(layout: StreetLayout, rng: np.random.Generator, cfg: GeneratorConfig | None = None) -> TrafficNetwork:
    cfg = cfg or GeneratorConfig()
    xy = layout.xy
    n = xy.shape[0]
    eps = n
    links: list[Link] = []
    vec: list[np.ndarray] = []
    for a, b in layout.streets:
        for u, v in ((a, b), (b, a)):
            d = xy[v] - xy[u]
            length = float(np.hypot(*d))
            tt = (cfg.time_per_unit * length * (1.0 + cfg.jitter * rng.uniform(-1.0, 1.0))) % 1.0
            links.append(Link(tail=u, head=v, travel_time=tt, green_split=_orientation_split(*d)))
            vec.append(d)
    centre = xy.mean(axis=0)
    for s in layout.entries:
        d = xy[s] - centre
        if not np.any(d):
            d = np.array([0.0, 1.0])
        f = float(rng.uniform(*cfg.entry_flow))
        links.append(
            Link(tail=eps, head=s, travel_time=0.0, green_split=_orientation_split(*d), flow=f,
                 entry_amplitude=f, entry_peak_offset=0.0)
        )
        vec.append(-d)  # arriving from outside, heading inwards
    out_of: dict[int, list[int]] = {}
    for k, lk in enumerate(links):
        if lk.tail != eps:
            out_of.setdefault(lk.tail, []).append(k)
    ratios = []
    for l, lk in enumerate(links):
        cand = [k for k in out_of.get(lk.head, []) if links[k].head != lk.tail]
        if not cand:
            continue
        w = np.array([_turn_weight(cfg, vec[l], vec[k]) for k in cand])
        share = (1.0 - cfg.exit_share) * w / w.sum()
        ratios.extend((l, k, float(b)) for k, b in zip(cand, share))
    net = TrafficNetwork(num_signals=n, links=tuple(links), turn_ratios=tuple(ratios))
    return propagate_flows(net)


# -- layouts -------------------------------------------------------------------


def grid_layout(rows: int, cols: int) -> StreetLayout:
    if rows < 1 or cols < 1:
        raise NetworkError("grid needs rows, cols >= 1")
    idx = np.arange(rows * cols).reshape(rows, cols)
    xy = np.array([(c, -r) for r in range(rows) for c in range(cols)], dtype=float)
    streets = [(int(idx[r, c]), int(idx[r, c + 1])) for r in range(rows) for c in range(cols - 1)]
    streets += [(int(idx[r, c]), int(idx[r + 1, c])) for r in range(rows - 1) for c in range(cols)]
    boundary = [int(idx[r, c]) for r in range(rows) for c in range(cols) if r in (0, rows - 1) or c in (0, cols - 1)]
    return StreetLayout(xy=xy, streets=streets, entries=boundary)


def ring_layout(n: int) -> StreetLayout:
    if n < 1:
        raise NetworkError("ring needs n >= 1")
    ang = 2 * math.pi * np.arange(n) / n
    radius = max(1.0, n / (2 * math.pi))
    xy = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    if n == 2:
        streets = [(0, 1)]
    else:
        streets = [(i, (i + 1) % n) for i in range(n)] if n > 2 else []
    return StreetLayout(xy=xy, streets=streets, entries=list(range(n)))


def tree_layout(n: int, rng: np.random.Generator) -> StreetLayout:
    """Random tree; a single entry at the root keeps the graph with the dummy a tree."""
    if n < 1:
        raise NetworkError("tree needs n >= 1")
    xy = np.zeros((n, 2))
    streets = []
    for v in range(1, n):
        u = int(rng.integers(0, v))
        step = rng.choice([(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)])
        xy[v] = xy[u] + np.asarray(step) * rng.uniform(0.6, 1.4)
        streets.append((u, v))
    return StreetLayout(xy=xy, streets=streets, entries=[0])


def random_city_layout(n: int, rng: np.random.Generator, district: tuple[int, int] = (4, 7), drop: float = 0.1) -> StreetLayout:
    """Grid districts joined by arterials along a random spanning tree of districts.

    District side lengths are drawn from ``district``; the last district is
    a partial grid so the city has exactly n intersections. Each district
    keeps its own boundary entries with probability 1/2 per node.
    """
    if n < 1:
        raise NetworkError("random-city needs n >= 1")
    xy_parts, streets, entries = [], [], []
    boundaries: list[list[int]] = []
    base = 0
    placed = 0
    while placed < n:
        side = int(rng.integers(district[0], district[1] + 1))
        size = min(side * side, n - placed)
        rows = math.ceil(size / side)
        # district origin on a coarse lattice
        k = len(boundaries)
        ox, oy = (k % 8) * (district[1] + 2), -(k // 8) * (district[1] + 2)
        local = {}
        for t in range(size):
            r, c = divmod(t, side)
            local[(r, c)] = base + t
            xy_parts.append((ox + c, oy - r))
        inner = []
        for (r, c), v in local.items():
            for dr, dc in ((0, 1), (1, 0)):
                w = local.get((r + dr, c + dc))
                if w is not None:
                    inner.append((v, w))
        # drop some streets but keep the district connected (spanning tree stays)
        keep = _spanning_tree(inner, list(local.values()))
        for e in inner:
            if e in keep or rng.uniform() >= drop:
                streets.append(e)
        bnd = [v for (r, c), v in local.items() if r in (0, rows - 1) or c in (0, side - 1)]
        boundaries.append(bnd)
        entries.extend(v for v in bnd if rng.uniform() < 0.5)
        if not any(e in bnd for e in entries[-len(bnd):]):
            entries.append(bnd[0])
        base += size
        placed += size
    xy = np.array(xy_parts, dtype=float)
    for k in range(1, len(boundaries)):
        j = int(rng.integers(0, k))
        a = boundaries[k][int(rng.integers(0, len(boundaries[k])))]
        b = boundaries[j][int(rng.integers(0, len(boundaries[j])))]
        streets.append((min(a, b), max(a, b)))
    return StreetLayout(xy=xy, streets=streets, entries=entries)


def _spanning_tree(edges, nodes) -> set:
    parent = {v: v for v in nodes}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    keep = set()
    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            keep.add((a, b))
    return keep


def generate(kind: str, seed: int = 0, config: GeneratorConfig | None = None, **params) -> TrafficNetwork:
    """Build a network of the given kind. Parameters:

    grid: rows, cols; ring: n; tree: n; random-city: n (district=(lo, hi), drop).
    """
    rng = np.random.default_rng(seed)
    if kind == "grid":
        layout = grid_layout(int(params.get("rows", 3)), int(params.get("cols", params.get("rows", 3))))
    elif kind == "ring":
        layout = ring_layout(int(params.get("n", 6)))
    elif kind == "tree":
        layout = tree_layout(int(params.get("n", 10)), rng)
    elif kind == "random-city":
        kw = {k: params[k] for k in ("district", "drop") if k in params}
        layout = random_city_layout(int(params.get("n", 100)), rng, **kw)
    else:
        raise NetworkError(f"unknown generator kind {kind!r}; choose from {', '.join(KINDS)}")
    return layout_to_network(layout, rng, config)
