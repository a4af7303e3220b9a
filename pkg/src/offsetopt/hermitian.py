"""Real orthonormal coordinates for d x d Hermitian matrices.

Coordinates are ordered ``[diag (d), sqrt2*Re X_ik (i<k), sqrt2*Im X_ik (i<k)]``
with pairs in row-major upper-triangle order, so that
``tr(X Y) == vec(X) @ vec(Y)`` for Hermitian X, Y.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

SQRT2 = np.sqrt(2.0)


@lru_cache(maxsize=None)
def pairs(d: int) -> tuple[np.ndarray, np.ndarray]:
    iu, ku = np.triu_indices(d, 1)
    return iu.astype(np.int64), ku.astype(np.int64)


def coord_of(d: int, i, k):
    """Coordinates of entry (i, k), i <= k. Returns (real_coord, imag_coord or -1)."""
    i = np.asarray(i, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    npairs = d * (d - 1) // 2
    pidx = i * d - i * (i + 1) // 2 + (k - i - 1)
    re = np.where(i == k, i, d + pidx)
    im = np.where(i == k, -1, d + npairs + pidx)
    return re, im


@lru_cache(maxsize=None)
def basis(d: int):
    """Two-term description of the basis in row-major complex vec space.

    Returns (idx1, idx2, c1, c2): basis element a has value c1[a] at flat
    position idx1[a] and c2[a] at idx2[a].
    """
    iu, ku = pairs(d)
    diag = np.arange(d)
    idx1 = np.concatenate([diag * d + diag, iu * d + ku, iu * d + ku])
    idx2 = np.concatenate([diag * d + diag, ku * d + iu, ku * d + iu])
    r = 1.0 / SQRT2
    npairs = iu.size
    c1 = np.concatenate([np.ones(d), np.full(npairs, r), np.full(npairs, 1j * r)]).astype(complex)
    c2 = np.concatenate([np.zeros(d), np.full(npairs, r), np.full(npairs, -1j * r)]).astype(complex)
    return idx1, idx2, c1, c2


@lru_cache(maxsize=None)
def transform(d: int) -> np.ndarray:
    """Dense matrix T with ``vec_rowmajor(X) = T @ coords``."""
    idx1, idx2, c1, c2 = basis(d)
    T = np.zeros((d * d, d * d), dtype=complex)
    a = np.arange(d * d)
    T[idx1, a] += c1
    T[idx2, a] += c2
    return T


def vec(X: np.ndarray) -> np.ndarray:
    """Coordinates of a Hermitian matrix or a stack of them (..., d, d)."""
    X = np.asarray(X)
    d = X.shape[-1]
    iu, ku = pairs(d)
    diag = np.real(np.diagonal(X, axis1=-2, axis2=-1))
    off = X[..., iu, ku]
    return np.concatenate([diag, SQRT2 * off.real, SQRT2 * off.imag], axis=-1)


def mat(x: np.ndarray, d: int) -> np.ndarray:
    """Hermitian matrix (or stack) from coordinates."""
    x = np.asarray(x, dtype=float)
    iu, ku = pairs(d)
    npairs = iu.size
    out = np.zeros(x.shape[:-1] + (d, d), dtype=complex)
    idx = np.arange(d)
    out[..., idx, idx] = x[..., :d]
    off = (x[..., d : d + npairs] + 1j * x[..., d + npairs :]) / SQRT2
    out[..., iu, ku] = off
    out[..., ku, iu] = np.conj(off)
    return out


def congruence_matrix(S: np.ndarray) -> np.ndarray:
    """Real matrix of the map X -> S X S (S Hermitian) in these coordinates."""
    d = S.shape[0]
    idx1, idx2, c1, c2 = basis(d)
    K = np.einsum("pr,qs->pqrs", S, np.conj(S)).reshape(d * d, d * d)
    KT = K[:, idx1] * c1 + K[:, idx2] * c2
    P = np.conj(c1)[:, None] * KT[idx1, :] + np.conj(c2)[:, None] * KT[idx2, :]
    P = P.real
    return 0.5 * (P + P.T)


def congruence_entries(S: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Selected entries ``M[rows][:, cols]`` of ``congruence_matrix(S)``."""
    d = S.shape[0]
    idx1, idx2, c1, c2 = basis(d)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    out = np.zeros((rows.size, cols.size), dtype=complex)
    Sc = np.conj(S)
    for ia, ca in ((idx1[rows], c1[rows]), (idx2[rows], c2[rows])):
        pa, qa = np.divmod(ia, d)
        for ib, cb in ((idx1[cols], c1[cols]), (idx2[cols], c2[cols])):
            pb, qb = np.divmod(ib, d)
            out += (np.conj(ca)[:, None] * cb[None, :]) * S[pa[:, None], pb[None, :]] * Sc[qa[:, None], qb[None, :]]
    return out.real


def congruence_matrices(S: np.ndarray, hermitian_input: bool = True, chunk_entries: int = 4_000_000) -> np.ndarray:
    """Batched real matrices of ``X -> S X S^H`` over a stack (k, d, d).

    With ``hermitian_input`` the result is symmetrized, which is exact when
    every S is Hermitian.
    """
    k, d, _ = S.shape
    m = d * d
    idx1, idx2, c1, c2 = basis(d)
    out = np.empty((k, m, m))
    step = max(1, chunk_entries // max(m * m, 1))
    for lo in range(0, k, step):
        Sb = S[lo : lo + step]
        K = np.einsum("bpr,bqs->bpqrs", Sb, np.conj(Sb)).reshape(-1, m, m)
        KT = K[:, :, idx1] * c1 + K[:, :, idx2] * c2
        P = (np.conj(c1)[:, None] * KT[:, idx1, :] + np.conj(c2)[:, None] * KT[:, idx2, :]).real
        out[lo : lo + step] = 0.5 * (P + P.transpose(0, 2, 1)) if hermitian_input else P
    return out
