"""Positive semidefinite completion of clique solutions in factored form.

The completed matrix is never formed: it is represented as
``X = F^{-H} D F^{-1}`` with F unit lower triangular on the Cholesky pattern
and D diagonal, both in the permuted (elimination) order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chordal import TreeDecomposition

D_FLOOR = -1e-8


class CompletionError(ValueError):
    pass


@dataclass(frozen=True)
class FactoredCompletion:
    """F (strictly-lower part, CSC-style arrays), D, and the elimination permutation."""

    perm: np.ndarray
    colptr: np.ndarray
    rows: np.ndarray
    vals: np.ndarray
    D: np.ndarray
    raw_min_d: float = field(default=0.0, compare=False)

    @property
    def n(self) -> int:
        return int(self.D.shape[0])

    @property
    def F(self) -> sp.csc_matrix:
        n = self.n
        strict = sp.csc_matrix((self.vals, self.rows, self.colptr), shape=(n, n))
        return (strict + sp.identity(n, dtype=complex, format="csc")).tocsc()

    def dense(self) -> np.ndarray:
        """Full completed matrix in permuted order (small n only)."""
        return reconstruct_block(self, np.arange(self.n))

    def dense_natural(self) -> np.ndarray:
        Xp = self.dense()
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.n)
        return Xp[np.ix_(inv, inv)]


def _column_sections(td: TreeDecomposition, cliques, blocks):
    """Yield (j, X_j) with X_j the solved section on I_j (pivot first)."""
    position = [{int(v): i for i, v in enumerate(c.tolist())} for c in cliques.cliques]
    for j in range(td.n):
        c = int(cliques.owner[j])
        Ij = td.index_set(j)
        loc = np.array([position[c][int(v)] for v in Ij], dtype=np.int64)
        yield j, Ij, blocks[c][np.ix_(loc, loc)]


def complete(td: TreeDecomposition, problem, blocks, order=None, reg: float = 1e-10) -> FactoredCompletion:
    """Column-by-column completion: solve ``X_j [1; f] = [D_jj; 0]`` for each j.

    The trailing system ``C f = -b`` is solved in the minimum-norm sense,
    dropping eigenvalues of C below ``reg * tr(X_j)``. Columns are independent, so
    ``order`` only changes the processing sequence.
    """
    blocks = getattr(blocks, "blocks", blocks)
    n = td.n
    colptr = np.asarray(td.colptr, dtype=np.int64)
    strict_ptr = colptr - np.arange(n + 1)
    vals = np.zeros(int(strict_ptr[-1]), dtype=complex)
    rows = np.empty(int(strict_ptr[-1]), dtype=np.int64)
    D = np.zeros(n)
    sections = {j: (Ij, Xj) for j, Ij, Xj in _column_sections(td, problem.tree, blocks)}
    seq = range(n) if order is None else order
    for j in seq:
        Ij, Xj = sections[int(j)]
        a = float(Xj[0, 0].real)
        lo, hi = strict_ptr[j], strict_ptr[j + 1]
        rows[lo:hi] = Ij[1:]
        if Ij.size == 1:
            D[j] = a
            continue
        b = Xj[1:, 0]
        C = Xj[1:, 1:]
        eps = reg * max(float(np.trace(Xj).real), 1e-300)
        lam, V = np.linalg.eigh(0.5 * (C + C.conj().T))
        # directions below the floor are treated as null; the rest are
        # inverted exactly, since shifting them biases f near rank one
        keep = lam > eps
        inv = np.zeros_like(lam)
        inv[keep] = 1.0 / lam[keep]
        f = -(V @ ((V.conj().T @ b) * inv))
        vals[lo:hi] = f
        D[j] = a + float(np.real(np.vdot(b, f)))
    raw_min = float(D.min()) if n else 0.0
    if raw_min < D_FLOOR:
        raise CompletionError(f"completion pivot D = {raw_min:.3e} is below {D_FLOOR:g}")
    return FactoredCompletion(
        perm=np.asarray(td.perm, dtype=np.int64).copy(),
        colptr=strict_ptr,
        rows=rows,
        vals=vals,
        D=np.maximum(D, 0.0),
        raw_min_d=raw_min,
    )


def reconstruct_block(fc: FactoredCompletion, index_set) -> np.ndarray:
    """Dense principal submatrix ``(F^{-H} D F^{-1})[I, I]`` (permuted numbering)."""
    idx = np.asarray(index_set, dtype=np.int64)
    n = fc.n
    E = np.zeros((n, idx.size), dtype=complex)
    E[idx, np.arange(idx.size)] = 1.0
    Y = spla.spsolve_triangular(fc.F.tocsr(), E, lower=True, unit_diagonal=True)
    Y = np.asarray(Y).reshape(n, idx.size)
    M = Y.conj().T @ (fc.D[:, None] * Y)
    return 0.5 * (M + M.conj().T)


def section_error(fc: FactoredCompletion, problem, blocks) -> float:
    """Largest elementwise gap between reconstructed clique sections and the clique solutions."""
    blocks = getattr(blocks, "blocks", blocks)
    worst = 0.0
    for cl, Xc in zip(problem.tree.cliques, blocks):
        worst = max(worst, float(np.abs(reconstruct_block(fc, cl) - Xc).max(initial=0.0)))
    return worst
