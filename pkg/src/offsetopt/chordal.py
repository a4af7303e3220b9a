"""Tree decompositions from a fill-reducing order and symbolic Cholesky."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import kernels


@dataclass(frozen=True)
class TreeDecomposition:
    """Column index sets of the Cholesky factor of ``P W P^T``.

    Indices are 0-based and refer to permuted positions: ``perm[j]`` is the
    original node eliminated j-th, and ``index_sets[j]`` lists the rows of
    column j (sorted, starting with j).
    """

    perm: np.ndarray
    colptr: np.ndarray
    rows: np.ndarray

    @property
    def n(self) -> int:
        return int(self.perm.shape[0])

    def index_set(self, j: int) -> np.ndarray:
        return self.rows[self.colptr[j] : self.colptr[j + 1]]

    @cached_property
    def index_sets(self) -> tuple[np.ndarray, ...]:
        return tuple(self.index_set(j) for j in range(self.n))

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.diff(self.colptr)

    @cached_property
    def parents(self) -> np.ndarray:
        """p(j): the smallest index above j in I_j, or j itself for singletons."""
        par = np.arange(self.n)
        has = self.sizes > 1
        par[has] = self.rows[self.colptr[:-1][has] + 1]
        return par

    @property
    def width_plus_one(self) -> int:
        return int(self.sizes.max()) if self.n else 0

    @property
    def omega(self) -> int:
        return self.width_plus_one

    @cached_property
    def inverse_perm(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.n)
        return inv

    def to_dict(self) -> dict:
        return {
            "perm": self.perm.tolist(),
            "index_sets": [s.tolist() for s in self.index_sets],
            "parents": self.parents.tolist(),
            "width": self.width_plus_one - 1,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_index_sets(cls, perm, index_sets) -> "TreeDecomposition":
        sets = [np.unique(np.asarray(s, dtype=np.int64)) for s in index_sets]
        colptr = np.concatenate([[0], np.cumsum([len(s) for s in sets])]).astype(np.int64)
        rows = np.concatenate(sets).astype(np.int64) if sets else np.zeros(0, dtype=np.int64)
        return cls(perm=np.asarray(perm, dtype=np.int64), colptr=colptr, rows=rows)


def symmetric_pattern(matrix) -> sp.csr_matrix:
    """0/1 pattern of ``M + M^T`` with a full diagonal."""
    A = sp.csr_matrix(matrix)
    n = A.shape[0]
    P = (abs(A) + abs(A).T + sp.identity(n, format="csr")) != 0
    return sp.csr_matrix(P.astype(np.int8))


def pattern_from_edges(n: int, edges) -> sp.csr_matrix:
    edges = list(edges)
    if not edges:
        return sp.identity(n, dtype=np.int8, format="csr")
    a, b = np.array(edges, dtype=np.int64).T
    A = sp.csr_matrix((np.ones(a.size, dtype=np.int8), (a, b)), shape=(n, n))
    return symmetric_pattern(A)


def amd_inputs(pattern):
    """Kernel arguments (n, Cp, Ci, cnz, dense) for the AMD ordering of a pattern."""
    P = symmetric_pattern(pattern).tocsc()
    n = P.shape[0]
    P.setdiag(0)
    P.eliminate_zeros()
    P.sort_indices()
    Cp = P.indptr.astype(np.int64).copy()
    cnz = int(Cp[-1])
    elbow = cnz + cnz // 5 + 2 * n
    Ci = np.zeros(max(elbow, 1), dtype=np.int64)
    Ci[:cnz] = P.indices
    dense = min(n - 2, max(16, 10 * int(math.sqrt(n))))
    return n, Cp, Ci, cnz, dense


def amd_order(pattern) -> np.ndarray:
    """Approximate minimum degree ordering of a symmetric pattern."""
    if symmetric_pattern(pattern).shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    perm = kernels.amd(*amd_inputs(pattern))
    return np.asarray(perm, dtype=np.int64)


def symbolic_factor(pattern, perm=None) -> TreeDecomposition:
    """Column index sets and parents of the symbolic Cholesky factor of the permuted pattern."""
    P = symmetric_pattern(pattern)
    n = P.shape[0]
    perm = np.arange(n, dtype=np.int64) if perm is None else np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError("perm is not a permutation")
    Pp = P[perm][:, perm].tocsr()
    Pp.sort_indices()
    colptr, rows, _ = kernels.symbolic(n, Pp.indptr.astype(np.int64), Pp.indices.astype(np.int64))
    return TreeDecomposition(perm=perm, colptr=np.asarray(colptr), rows=np.asarray(rows))


def tree_decomposition(pattern, order: str = "amd") -> TreeDecomposition:
    if order == "amd":
        perm = amd_order(pattern)
    elif order == "natural":
        perm = np.arange(pattern.shape[0])
    elif order == "reverse":
        perm = np.arange(pattern.shape[0])[::-1].copy()
    else:
        raise ValueError(f"unknown ordering {order!r}")
    return symbolic_factor(pattern, perm)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violation: str | None = None
    witness: tuple | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate_tree_decomposition(pattern, td: TreeDecomposition) -> ValidationReport:
    """Check node cover, edge cover and running intersection on the tree given by the parents.

    ``pattern`` is in original node numbering; the decomposition is mapped
    back through ``td.perm`` before checking.
    """
    P = sp.coo_matrix(symmetric_pattern(pattern))
    n = P.shape[0]
    perm = td.perm
    bags = [set(perm[s].tolist()) for s in td.index_sets]
    parents = td.parents

    covered = set().union(*bags) if bags else set()
    for s in range(n):
        if s not in covered:
            return ValidationReport(False, "node cover", (s,))

    where: dict[int, list[int]] = {s: [] for s in range(n)}
    for j, bag in enumerate(bags):
        for s in bag:
            where[s].append(j)
    for a, b in zip(P.row.tolist(), P.col.tolist()):
        if a >= b:
            continue
        if not set(where[a]).intersection(where[b]):
            return ValidationReport(False, "edge cover", (a, b))

    for j in range(len(bags)):
        if parents[j] != j and parents[j] <= j:
            return ValidationReport(False, "tree structure", (j, int(parents[j])))

    # bags containing s must form a connected subtree: exactly one of them may
    # have a parent outside the set (or be a root)
    for s, js in where.items():
        members = set(js)
        tops = [j for j in js if parents[j] == j or parents[j] not in members]
        if len(tops) != 1:
            return ValidationReport(False, "running intersection", (s, tuple(sorted(tops))))
    return ValidationReport(True)


def check_clique_nesting(td: TreeDecomposition) -> bool:
    """I_j minus {j} is contained in I_{p(j)} for every non-root j."""
    for j in range(td.n):
        p = td.parents[j]
        if p == j:
            continue
        if not set(td.index_set(j)[1:].tolist()) <= set(td.index_set(p).tolist()):
            return False
    return True
