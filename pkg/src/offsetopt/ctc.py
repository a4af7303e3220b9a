"""Clique-tree conversion of the unit-diagonal SDP relaxation.

The dense relaxation ``max tr(WX) s.t. X >= 0, diag(X) = 1`` is replaced by
one small PSD block per clique of a tree decomposition, coupled by equality
of overlapping entries between each clique and its parent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import hermitian
from .chordal import TreeDecomposition


@dataclass(frozen=True)
class CliqueTree:
    """Cliques (sorted permuted indices), ordered so that children precede parents."""

    cliques: tuple[np.ndarray, ...]
    parent: np.ndarray  # parent[c] == c for roots
    owner: np.ndarray  # owner[s]: clique holding column s's index set
    n: int

    @property
    def num_cliques(self) -> int:
        return len(self.cliques)

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.array([c.size for c in self.cliques], dtype=np.int64)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in self.cliques]
        for c, p in enumerate(self.parent.tolist()):
            if p != c:
                kids[p].append(c)
        return tuple(tuple(k) for k in kids)


def column_cliques(td: TreeDecomposition) -> CliqueTree:
    """One clique per Cholesky column, parents from the factor."""
    return CliqueTree(
        cliques=tuple(np.asarray(s, dtype=np.int64) for s in td.index_sets),
        parent=td.parents.astype(np.int64).copy(),
        owner=np.arange(td.n, dtype=np.int64),
        n=td.n,
    )


def maximal_cliques(td: TreeDecomposition) -> CliqueTree:
    """Drop column cliques contained in a child's clique.

    I_j is non-maximal exactly when some child c has |I_c| = |I_j| + 1, in
    which case I_c = {c} ∪ I_j. Such j is represented by that child's clique.
    """
    n = td.n
    sizes = td.sizes
    parents = td.parents
    rep = np.arange(n, dtype=np.int64)
    absorbed = np.zeros(n, dtype=bool)
    for c in range(n):
        p = parents[c]
        if p != c and not absorbed[p] and sizes[c] == sizes[p] + 1:
            absorbed[p] = True
            rep[p] = rep[c]
    # chain tops: maximal cliques are indexed by the highest column they represent
    tops = [j for j in range(n) if parents[j] == j or rep[parents[j]] != rep[j]]
    top_of_rep = {int(rep[j]): j for j in tops}
    order = sorted(top_of_rep.values())
    index = {int(rep[t]): i for i, t in enumerate(order)}
    cliques = tuple(np.asarray(td.index_set(int(rep[t])), dtype=np.int64) for t in order)
    parent = np.empty(len(order), dtype=np.int64)
    for i, t in enumerate(order):
        p = parents[t]
        parent[i] = i if p == t else index[int(rep[p])]
    owner = np.array([index[int(r)] for r in rep], dtype=np.int64)
    return CliqueTree(cliques=cliques, parent=parent, owner=owner, n=n)


def clique_tree(td: TreeDecomposition, cliques: str = "column") -> CliqueTree:
    if cliques == "column":
        return column_cliques(td)
    if cliques == "maximal":
        return maximal_cliques(td)
    raise ValueError(f"unknown clique mode {cliques!r}")


@dataclass(frozen=True)
class CliqueSdpProblem:
    """Per-clique objective blocks and the overlap maps between clique and parent."""

    tree: CliqueTree
    perm: np.ndarray
    blocks: tuple[np.ndarray, ...]
    # overlap_pairs[c] = (positions in clique c, positions in parent) or None for roots
    overlap_pairs: tuple[tuple[np.ndarray, np.ndarray] | None, ...]

    @property
    def n(self) -> int:
        return self.tree.n

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def block_dims(self) -> np.ndarray:
        return self.tree.sizes

    def diag_constraints(self, c: int) -> np.ndarray:
        """Local positions k with the constraint (X_c)_kk = 1."""
        return np.arange(self.tree.sizes[c])

    def sections(self, X: np.ndarray) -> list[np.ndarray]:
        """Principal submatrices of a dense matrix in permuted numbering."""
        return [X[np.ix_(c, c)] for c in self.tree.cliques]

    def objective(self, blocks) -> float:
        return float(sum(np.real(np.vdot(Wc, Xc)) for Wc, Xc in zip(self.blocks, blocks)))


def split_objective(W, td: TreeDecomposition, cliques: str = "column") -> CliqueSdpProblem:
    """Assign each term of W to the clique owning its lower-numbered endpoint."""
    tree = clique_tree(td, cliques)
    perm = td.perm
    Wp = sp.csr_matrix(W)[perm][:, perm]
    Wu = sp.triu(Wp).tocoo()
    position = []
    for cl in tree.cliques:
        position.append({int(v): i for i, v in enumerate(cl.tolist())})
    blocks = [np.zeros((c.size, c.size), dtype=complex) for c in tree.cliques]
    for s, k, w in zip(Wu.row.tolist(), Wu.col.tolist(), Wu.data.tolist()):
        if w == 0:
            continue
        b = int(tree.owner[s])
        pos = position[b]
        if s not in pos or k not in pos:
            raise AssertionError(f"entry ({s}, {k}) is not covered by clique {b}")
        a, c = pos[s], pos[k]
        blocks[b][a, c] += w
        if a != c:
            blocks[b][c, a] += np.conj(w)
    overlaps: list[tuple[np.ndarray, np.ndarray] | None] = []
    for c, cl in enumerate(tree.cliques):
        p = int(tree.parent[c])
        if p == c:
            overlaps.append(None)
            continue
        shared = np.intersect1d(cl, tree.cliques[p])
        mine = np.array([position[c][int(v)] for v in shared], dtype=np.int64)
        theirs = np.array([position[p][int(v)] for v in shared], dtype=np.int64)
        overlaps.append((mine, theirs))
    return CliqueSdpProblem(tree=tree, perm=perm, blocks=tuple(blocks), overlap_pairs=tuple(overlaps))


@dataclass(frozen=True)
class CanonicalConicProblem:
    """A vectorized conic program over a product of Hermitian PSD cones.

    Primal form: minimize ``cost @ x`` s.t. ``equality_operator @ x = rhs``,
    x in the PSD cones. Dualized form: maximize ``cost @ y`` s.t.
    ``equality_operator @ y + s = rhs`` with s in ``{0}^q`` times the PSD cones;
    its cost is the negated primal cost and its operator stacks the primal
    equality operator over ``-I``.
    """

    form: str
    cost: np.ndarray
    equality_operator: sp.csr_matrix
    rhs: np.ndarray
    cone_layout: tuple[tuple[str, int], ...]
    num_overlap_rows: int
    block_parent: np.ndarray
    problem: CliqueSdpProblem = field(repr=False, compare=False)

    @property
    def block_dims(self) -> np.ndarray:
        return np.array([d for kind, d in self.cone_layout if kind == "psd"], dtype=np.int64)

    @property
    def block_offsets(self) -> np.ndarray:
        d2 = self.block_dims**2
        return np.concatenate([[0], np.cumsum(d2)]).astype(np.int64)

    @property
    def num_equalities(self) -> int:
        for kind, d in self.cone_layout:
            if kind == "zero":
                return d
        return self.equality_operator.shape[0]

    def primal_data(self) -> tuple[np.ndarray, sp.csr_matrix, np.ndarray]:
        """(c, A, b) of the primal form ``min c@x, A x = b``, recovered from either form."""
        if self.form == "primal":
            return self.cost, self.equality_operator, self.rhs
        q = self.num_equalities
        G = self.equality_operator
        slack = G[q:]
        nv = G.shape[1]
        if slack.shape != (nv, nv) or abs(slack + sp.identity(nv)).sum() != 0:
            raise ValueError("dualized operator does not end with -I")
        return -self.cost, sp.csr_matrix(G[:q]), self.rhs[:q]


def _overlap_rows(problem: CliqueSdpProblem, redundant: bool):
    rows, cols, vals = [], [], []
    offsets = np.concatenate([[0], np.cumsum(problem.block_dims**2)])
    r = 0
    for c, ov in enumerate(problem.overlap_pairs):
        if ov is None:
            continue
        p = int(problem.tree.parent[c])
        mine, theirs = ov
        dc, dp = problem.block_dims[c], problem.block_dims[p]
        for a in range(mine.size):
            for b in range(a, mine.size):
                if a == b and not redundant:
                    continue
                i1, k1 = mine[a], mine[b]
                i2, k2 = theirs[a], theirs[b]
                # overlap positions are increasing in both cliques
                re1, im1 = hermitian.coord_of(dc, i1, k1)
                re2, im2 = hermitian.coord_of(dp, i2, k2)
                pairs = [(int(re1), int(re2))]
                if a != b:
                    pairs.append((int(im1), int(im2)))
                for x1, x2 in pairs:
                    rows += [r, r]
                    cols += [offsets[c] + x1, offsets[p] + x2]
                    vals += [1.0, -1.0]
                    r += 1
    return r, rows, cols, vals


def build_canonical(problem: CliqueSdpProblem, redundant: bool = False) -> CanonicalConicProblem:
    """Primal canonical form with overlap rows N stacked above diagonal rows M.

    With ``redundant=False`` overlap rows for diagonal entries are omitted;
    those entries are already pinned to 1 by M on both sides.
    """
    dims = problem.block_dims
    offsets = np.concatenate([[0], np.cumsum(dims**2)]).astype(np.int64)
    cost = np.concatenate([-hermitian.vec(Wc) for Wc in problem.blocks]) if problem.blocks else np.zeros(0)
    nov, rows, cols, vals = _overlap_rows(problem, redundant)
    r = nov
    for c, d in enumerate(dims.tolist()):
        for k in range(d):
            rows.append(r)
            cols.append(offsets[c] + k)
            vals.append(1.0)
            r += 1
    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, int(offsets[-1])))
    b = np.concatenate([np.zeros(nov), np.ones(r - nov)])
    return CanonicalConicProblem(
        form="primal",
        cost=cost,
        equality_operator=A,
        rhs=b,
        cone_layout=tuple(("psd", int(d)) for d in dims),
        num_overlap_rows=nov,
        block_parent=problem.tree.parent.copy(),
        problem=problem,
    )


def dualize(primal: CanonicalConicProblem) -> CanonicalConicProblem:
    """Restate ``min c@x, Ax = b, x in K`` in dual canonical form.

    The result maximizes ``(-c) @ y`` subject to ``[A; -I] y + s = [b; 0]``
    with s in ``{0}^q`` times the PSD cones, so ``y`` is the block vector and
    the PSD slacks equal it. The optimal value is the negated primal value.
    """
    if primal.form != "primal":
        raise ValueError("dualize expects a primal-form problem")
    A = primal.equality_operator
    q, nv = A.shape
    G = sp.vstack([A, -sp.identity(nv, format="csr")], format="csr")
    h = np.concatenate([primal.rhs, np.zeros(nv)])
    return CanonicalConicProblem(
        form="dualized",
        cost=-primal.cost,
        equality_operator=G,
        rhs=h,
        cone_layout=(("zero", q),) + primal.cone_layout,
        num_overlap_rows=primal.num_overlap_rows,
        block_parent=primal.block_parent,
        problem=primal.problem,
    )
