"""Primal-dual interior-point solver for block Hermitian SDPs.

Works on the pair

    min c@x  s.t.  A x = b,  x in K        max b@u  s.t.  c - A^T u = z,  z in K

with K a product of Hermitian PSD cones in real orthonormal coordinates.
Newton systems are the regularized augmented system

    [ P   A^T ] [ dx ]   [ P G - r_d ]
    [ A  -dI  ] [ -du] = [   r_p     ]

with P the Nesterov-Todd Hessian ``X -> W^-1 X W^-1``. For the dualized form
this is eliminated clique by clique along the clique tree; for the primal
form it is reduced to dense normal equations ``A P^-1 A^T``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import dpotrs
import scipy.sparse as sp

from . import hermitian, kernels
from .chordal import symbolic_factor
from .ctc import CanonicalConicProblem, build_canonical, dualize, split_objective

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITERATIONS = "max-iterations"
NUMERICAL_FAILURE = "numerical-failure"


class SolverError(RuntimeError):
    """Raised when the solver cannot produce any usable iterate."""


@dataclass
class BlockSolution:
    blocks: list[np.ndarray]
    objective: float
    residuals: dict
    iterations: int
    status: str
    form: str
    dual_bound: float
    dual_blocks: list[np.ndarray] = field(repr=False, default_factory=list)
    multipliers: np.ndarray = field(repr=False, default=None)
    history: list[dict] = field(repr=False, default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def form_objective(self) -> float:
        """Objective in the sign convention of the solved form (primal form minimizes)."""
        return -self.objective if self.form == "primal" else self.objective

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _BlockSpace:
    """Coordinate bookkeeping for a product of Hermitian blocks, grouped by size."""

    def __init__(self, dims: np.ndarray):
        self.dims = np.asarray(dims, dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.dims**2)]).astype(np.int64)
        self.size = int(self.offsets[-1])
        self.theta = int(self.dims.sum())
        self.groups: list[tuple[int, np.ndarray, np.ndarray]] = []
        for d in np.unique(self.dims).tolist():
            ids = np.flatnonzero(self.dims == d)
            gather = self.offsets[ids][:, None] + np.arange(d * d)[None, :]
            self.groups.append((d, ids, gather))
        # where block b sits: (group index, position in group)
        self.where = np.empty((self.dims.size, 2), dtype=np.int64)
        for g, (_, ids, _) in enumerate(self.groups):
            self.where[ids, 0] = g
            self.where[ids, 1] = np.arange(ids.size)

    def mats(self, x: np.ndarray) -> list[np.ndarray]:
        return [hermitian.mat(x[gather], d) for d, _, gather in self.groups]

    def vec(self, stacks: list[np.ndarray]) -> np.ndarray:
        out = np.empty(self.size)
        for (d, _, gather), S in zip(self.groups, stacks):
            out[gather] = hermitian.vec(S)
        return out

    def identity(self) -> np.ndarray:
        return self.vec([np.broadcast_to(np.eye(d), (ids.size, d, d)) for d, ids, _ in self.groups])

    def block(self, stacks: list[np.ndarray], b: int) -> np.ndarray:
        g, i = self.where[b]
        return stacks[g][i]

    def block_list(self, x: np.ndarray) -> list[np.ndarray]:
        stacks = self.mats(x)
        return [self.block(stacks, b) for b in range(self.dims.size)]


def _herm(M):
    return 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))


def _ct(M):
    return np.conj(np.swapaxes(M, -1, -2))


@dataclass
class _Scaling:
    R: list[np.ndarray]
    Rinv: list[np.ndarray]
    lam: list[np.ndarray]
    Winv: list[np.ndarray]
    Wmat: list[np.ndarray]


def _nt_scaling(Xs, Zs) -> _Scaling:
    R, Rinv, lam, Winv, Wm = [], [], [], [], []
    for X, Z in zip(Xs, Zs):
        Lx = np.linalg.cholesky(X)
        Lz = np.linalg.cholesky(Z)
        U, s, Vh = np.linalg.svd(_ct(Lz) @ Lx)
        rs = 1.0 / np.sqrt(s)
        Rg = Lx @ _ct(Vh) * rs[:, None, :]
        # R^-H = Lz U diag(s^-1/2)
        RinvH = Lz @ U * rs[:, None, :]
        R.append(Rg)
        Rinv.append(_ct(RinvH))
        lam.append(s)
        Winv.append(_herm(RinvH @ _ct(RinvH)))
        Wm.append(_herm(Rg @ _ct(Rg)))
    return _Scaling(R, Rinv, lam, Winv, Wm)


def _max_step(lam_stacks, dtilde_stacks) -> float:
    """Largest alpha with diag(lam) + alpha * D >= 0 for every block."""
    amax = math.inf
    for lam, D in zip(lam_stacks, dtilde_stacks):
        s = 1.0 / np.sqrt(lam)
        M = D * s[:, :, None] * s[:, None, :]
        ev = np.linalg.eigvalsh(_herm(M))[:, 0]
        worst = float(ev.min()) if ev.size else 0.0
        if worst < 0:
            amax = min(amax, -1.0 / worst)
    return amax


def _chol(H: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, retrying with a growing diagonal shift on breakdown.

    The shift perturbs the Newton system; iterative refinement against the
    unshifted operator removes most of the perturbation.
    """
    try:
        return sla.cholesky(H, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    scale = float(np.abs(np.diag(H)).max(initial=1.0))
    for rel in (1e-14, 1e-12, 1e-10, 1e-8):
        try:
            return sla.cholesky(H + (rel * scale) * np.eye(H.shape[0]), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("matrix is not positive definite after diagonal shifts")


def _cho(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    x, info = dpotrs(L, b, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError(f"potrs failed with info={info}")
    return x


def _row_owners(A: sp.csr_matrix, offsets: np.ndarray, parent: np.ndarray) -> list[np.ndarray]:
    """Assign each row to the block it touches, or to the child when it couples child and parent."""
    nb = offsets.size - 1
    col_block = np.searchsorted(offsets, np.arange(offsets[-1]), side="right") - 1
    owner_rows: list[list[int]] = [[] for _ in range(nb)]
    for r in range(A.shape[0]):
        blocks = np.unique(col_block[A.indices[A.indptr[r] : A.indptr[r + 1]]])
        if blocks.size == 1:
            owner_rows[int(blocks[0])].append(r)
        elif blocks.size == 2:
            a, b = int(blocks[0]), int(blocks[1])
            if parent[a] == b:
                owner_rows[a].append(r)
            elif parent[b] == a:
                owner_rows[b].append(r)
            else:
                raise ValueError(f"row {r} couples blocks {a} and {b} which are not parent and child")
        else:
            raise ValueError(f"row {r} touches {blocks.size} blocks")
    return [np.asarray(r, dtype=np.int64) for r in owner_rows]


class _TreeKKT:
    """Clique-tree elimination of the scaled augmented system (dualized form).

    Every equality row touches one block (its owner) and at most the owner's
    parent in the clique tree; this is checked on construction and is what
    confines fill to the clique-tree adjacency. In NT-scaled coordinates each
    block Hessian is the identity, so eliminating a clique only needs the
    updates passed up from its children.
    """

    def __init__(self, space: _BlockSpace, A: sp.csr_matrix, parent: np.ndarray, reg: float):
        self.space = space
        self.reg = reg
        self.parent = parent
        offs = space.offsets
        Acsr = sp.csr_matrix(A)
        Acsr.sort_indices()
        self.rows = _row_owners(Acsr, offs, parent)
        self.Aown: list[np.ndarray] = []
        self.Bpar: list[tuple[np.ndarray, np.ndarray] | None] = []
        for c in range(space.dims.size):
            sub = Acsr[self.rows[c]]
            self.Aown.append(sp.csr_matrix(sub[:, offs[c] : offs[c + 1]]))
            p = int(parent[c])
            if p == c:
                self.Bpar.append(None)
                continue
            ps = sub[:, offs[p] : offs[p + 1]].tocsc()
            nzc = np.flatnonzero(np.diff(ps.indptr))
            self.Bpar.append((nzc, ps[:, nzc].toarray()))
        self.order = np.arange(space.dims.size)  # cliques are stored children-first
        self.fill_pairs: set[tuple[int, int]] = set()

    def factor(self, scaling: _Scaling):
        space = self.space
        nb = space.dims.size
        Tst = [kernels.congruence(R) for R in scaling.R]
        self.T = [space.block(Tst, b) for b in range(nb)]
        # child contributions (nzc, L_G^{-1} B) waiting at each parent
        pending: list[list[tuple[np.ndarray, np.ndarray]]] = [[] for _ in range(nb)]
        self.L, self.LG, self.At = [None] * nb, [None] * nb, [None] * nb
        for c in self.order:
            T = self.T[c]
            H = np.eye(T.shape[0])
            for nzc, M in pending[c]:
                # the update B^T G^-1 B seen through T is formed as a Gram
                # matrix K^T K; sandwiching an unscaled B^T G^-1 B between two
                # large congruence factors loses most of its accuracy
                K = M @ T[nzc]
                H += K.T @ K
            pending[c] = []
            L = _chol(H)
            At = np.asarray(self.Aown[c] @ T)
            Y = sla.solve_triangular(L, At.T, lower=True, check_finite=False)
            G = Y.T @ Y
            G[np.diag_indices_from(G)] += self.reg
            self.L[c], self.LG[c], self.At[c] = L, _chol(G), At
            bp = self.Bpar[c]
            if bp is not None:
                nzc, Bs = bp
                p = int(self.parent[c])
                self.fill_pairs.add((c, p))
                M = sla.solve_triangular(self.LG[c], Bs, lower=True, check_finite=False)
                pending[p].append((nzc, M))

    def solve(self, g: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve ``[I At^T; At -dI] [x; w] = [g; h]`` in scaled coordinates."""
        offs = self.space.offsets
        nb = self.space.dims.size
        acc: list[np.ndarray | None] = [None] * nb
        gt: list[np.ndarray] = [None] * nb
        w0: list[np.ndarray] = [None] * nb
        for c in self.order:
            gt[c] = g[offs[c] : offs[c + 1]].copy()
            if acc[c] is not None:
                gt[c] += self.T[c].T @ acc[c]
            t = _cho(self.L[c], gt[c])
            w = _cho(self.LG[c], self.At[c] @ t - h[self.rows[c]])
            w0[c] = w
            bp = self.Bpar[c]
            if bp is not None:
                nzc, Bs = bp
                p = int(self.parent[c])
                if acc[p] is None:
                    acc[p] = np.zeros(self.space.dims[p] ** 2)
                acc[p][nzc] -= Bs.T @ w
        xt = np.empty_like(g)
        xu: list[np.ndarray] = [None] * nb  # unscaled block directions, needed by children
        wall = np.empty(h.size)
        for c in self.order[::-1]:
            w = w0[c]
            bp = self.Bpar[c]
            if bp is not None:
                nzc, Bs = bp
                xp = xu[int(self.parent[c])]
                w = w + _cho(self.LG[c], Bs @ xp[nzc])
            xc = _cho(self.L[c], gt[c] - self.At[c].T @ w)
            xt[offs[c] : offs[c + 1]] = xc
            xu[c] = self.T[c] @ xc
            wall[self.rows[c]] = w
        return xt, wall


class _NormalKKT:
    """Dense normal equations ``(A W(.)W A^T + dI) w = At g - h`` (primal form)."""

    def __init__(self, space: _BlockSpace, A: sp.csr_matrix, reg: float, scaled_ops):
        self.space = space
        self.A = sp.csr_matrix(A)
        self.reg = reg
        self.ops = scaled_ops
        Acsc = self.A.tocsc()
        self.parts = []
        for c in range(space.dims.size):
            sub = Acsc[:, space.offsets[c] : space.offsets[c + 1]]
            rows = np.unique(sub.indices)
            sub = sub.tocsr()[rows]
            cols = np.flatnonzero(np.diff(sub.tocsc().indptr))
            self.parts.append((rows, cols, sub[:, cols].toarray()))

    def factor(self, scaling: _Scaling):
        q = self.A.shape[0]
        S = np.zeros((q, q))
        for c, (rows, cols, Ac) in enumerate(self.parts):
            if rows.size == 0:
                continue
            Wc = self.space.block(scaling.Wmat, c)
            Pi = hermitian.congruence_entries(Wc, cols, cols)
            S[np.ix_(rows, rows)] += Ac @ Pi @ Ac.T
        S[np.diag_indices_from(S)] += self.reg
        self.LS = _chol(S)

    def solve(self, g: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = sla.cho_solve((self.LS, True), self.ops.At(g) - h, check_finite=False)
        return g - self.ops.AtT(w), w


class _ScaledOps:
    """Operators of the scaled system: At x~ = A vec(R X~ R^H), At^T w = R^H mat(A^T w) R."""

    def __init__(self, space: _BlockSpace, A: sp.csr_matrix):
        self.space = space
        self.A = A
        self.AT = A.T.tocsr()
        self.sc: _Scaling | None = None

    def unscale_x(self, xt):
        return self.space.vec([R @ X @ _ct(R) for R, X in zip(self.sc.R, self.space.mats(xt))])

    def scale_dual(self, v):
        return self.space.vec([_ct(R) @ V @ R for R, V in zip(self.sc.R, self.space.mats(v))])

    def At(self, xt):
        return self.A @ self.unscale_x(xt)

    def AtT(self, w):
        return self.scale_dual(self.AT @ w)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iters: int = 100
    regularization: float = 1e-9
    step_fraction: float = 0.99
    refinement_steps: int = 3


def solve(
    problem: CanonicalConicProblem,
    tol: float = 1e-8,
    max_iters: int = 100,
    regularization: float = 1e-9,
    options: SolverOptions | None = None,
) -> BlockSolution:
    """Solve a canonical problem; the dualized form uses clique-tree elimination."""
    opts = options or SolverOptions(tol=tol, max_iters=max_iters, regularization=regularization)
    c, A, b = problem.primal_data()
    A = sp.csr_matrix(A)
    space = _BlockSpace(problem.block_dims)
    ops = _ScaledOps(space, A)
    if problem.form == "dualized":
        kkt = _TreeKKT(space, A, problem.block_parent, opts.regularization)
    else:
        kkt = _NormalKKT(space, A, opts.regularization, ops)
    sol = _ipm(problem, space, kkt, ops, c, A, b, opts)
    if isinstance(kkt, _TreeKKT):
        sol.diagnostics["schur_block_pairs"] = sorted(kkt.fill_pairs)
    return sol


def _ipm(problem, space, kkt, ops, c, A, b, opts: SolverOptions) -> BlockSolution:
    AT = ops.AT
    cscale = max(1.0, float(np.abs(c).max()) if c.size else 1.0)
    cs = c / cscale
    nb_norm = float(np.linalg.norm(b))
    nc_norm = float(np.linalg.norm(cs))
    x = space.identity()
    z = space.identity()
    u = np.zeros(A.shape[0])
    theta = max(space.theta, 1)

    history: list[dict] = []
    best = None
    status = MAX_ITERATIONS
    diagnostics: dict = {}
    for it in range(opts.max_iters + 1):
        rp = b - A @ x
        rd = cs - AT @ u - z
        mu = float(x @ z) / theta
        pobj = float(cs @ x)
        dobj = float(b @ u)
        pres = float(np.linalg.norm(rp)) / (1.0 + nb_norm)
        dres = float(np.linalg.norm(rd)) / (1.0 + nc_norm)
        gap = abs(float(x @ z)) / (1.0 + abs(pobj))
        merit = max(pres, dres, gap)
        rec = {"iter": it, "mu": mu * cscale, "pobj": -pobj * cscale, "dobj": -dobj * cscale,
               "pres": pres, "dres": dres, "gap": gap}
        history.append(rec)
        if best is None or merit < best[0]:
            best = (merit, x.copy(), z.copy(), u.copy(), it)
        if merit <= opts.tol:
            status = OPTIMAL
            break
        if it == opts.max_iters:
            break
        try:
            sc = _nt_scaling(space.mats(x), space.mats(z))
            ops.sc = sc
            kkt.factor(sc)
        except np.linalg.LinAlgError as exc:
            status = NUMERICAL_FAILURE
            diagnostics["error"] = f"factorization breakdown at iteration {it}: {exc}"
            break
        rdt = ops.scale_dual(rd)

        def newton(U_stacks):
            Ut = space.vec(U_stacks)
            g = Ut - rdt
            dxt, w = kkt.solve(g, rp)
            scale = 1.0 + float(np.abs(g).max(initial=0.0)) + float(np.abs(rp).max(initial=0.0))
            e1 = g - dxt - ops.AtT(w)
            e2 = rp - ops.At(dxt)
            err = max(np.abs(e1).max(initial=0.0), np.abs(e2).max(initial=0.0))
            for _ in range(opts.refinement_steps):
                if err <= 1e-14 * scale:
                    break
                ddx, dw = kkt.solve(e1, e2)
                cand_x, cand_w = dxt + ddx, w + dw
                f1 = g - cand_x - ops.AtT(cand_w)
                f2 = rp - ops.At(cand_x)
                cand_err = max(np.abs(f1).max(initial=0.0), np.abs(f2).max(initial=0.0))
                if cand_err >= err:
                    break  # refinement is diverging on an ill-conditioned factorization
                dxt, w, e1, e2, err = cand_x, cand_w, f1, f2, cand_err
            du = -w
            # dz from the dual equation keeps dual feasibility exact; rebuilding it
            # from U - dX~ would amplify solve errors by the scaling
            dz = rd - AT @ du
            return space.mats(dxt), space.mats(ops.scale_dual(dz)), du, dz

        def target(rhs_stacks):
            return [2.0 * r / (lam[:, :, None] + lam[:, None, :]) for r, lam in zip(rhs_stacks, sc.lam)]

        def diag_stack(vals):
            return [v[:, :, None] * np.eye(v.shape[1]) for v in vals]

        # predictor
        dXa, dZa, _, _ = newton(diag_stack([-lam for lam in sc.lam]))
        aa = min(1.0, _max_step(sc.lam, dXa), _max_step(sc.lam, dZa))
        # scaled complementarity: tr((L + a dX~)(L + a dZ~)) = tr(XZ) after the step
        mu_aff = sum(
            float(np.real(np.einsum("kij,kji->", (Lm + aa * X1), (Lm + aa * Z1))))
            for Lm, X1, Z1 in zip(diag_stack(sc.lam), dXa, dZa)
        ) / theta
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0

        # corrector
        rhs = [
            (sigma * mu - lam**2)[:, :, None] * np.eye(lam.shape[1]) - _herm(X1 @ Z1)
            for lam, X1, Z1 in zip(sc.lam, dXa, dZa)
        ]
        dXt, dZt, du, dz = newton(target(rhs))
        ax = _max_step(sc.lam, dXt)
        az = _max_step(sc.lam, dZt)
        alpha = min(1.0, opts.step_fraction * min(ax, az))
        rec.update(sigma=sigma, alpha=alpha)
        if alpha < 1e-12:
            status = NUMERICAL_FAILURE
            diagnostics["error"] = f"step length collapsed at iteration {it}"
            break
        x = x + alpha * ops.unscale_x(space.vec(dXt))
        z = z + alpha * dz
        u = u + alpha * du

    merit, xb, zb, ub, ib = best
    if status != OPTIMAL:
        x, z, u = xb, zb, ub
        log.warning("solver stopped with status %s (best merit %.3e at iteration %d)", status, merit, ib)
    rp = b - A @ x
    rd = cs - AT @ u - z
    pobj = float(cs @ x)
    residuals = {
        "primal": float(np.linalg.norm(rp)) / (1.0 + nb_norm),
        "dual": float(np.linalg.norm(rd)) / (1.0 + nc_norm),
        "gap": abs(float(x @ z)) / (1.0 + abs(pobj)),
    }
    return BlockSolution(
        blocks=[_herm(B) for B in space.block_list(x)],
        objective=-float(c @ x),
        residuals=residuals,
        iterations=len(history) - 1,
        status=status,
        form=problem.form,
        dual_bound=-float(b @ u) * cscale,
        dual_blocks=[_herm(B) * cscale for B in space.block_list(z)],
        multipliers=u * cscale,
        history=history,
        diagnostics=diagnostics,
    )


def solve_dense(W, tol: float = 1e-8, max_iters: int = 100, max_n: int = 300) -> tuple[float, np.ndarray, BlockSolution]:
    """Solve ``max tr(WX), X >= 0, diag X = 1`` as a single dense block."""
    W = sp.csr_matrix(W)
    n = W.shape[0]
    if n > max_n:
        raise ValueError(f"solve_dense is limited to n <= {max_n} (got {n})")
    full = sp.csr_matrix(np.ones((n, n), dtype=np.int8))
    td = symbolic_factor(full, np.arange(n))
    problem = split_objective(W, td, cliques="maximal")
    assert problem.num_blocks == 1
    sol = solve(build_canonical(problem), tol=tol, max_iters=max_iters)
    return sol.objective, sol.blocks[0], sol


def solve_clique_tree(W, td, cliques: str = "column", redundant: bool = False, **kwargs):
    """Split, vectorize, dualize and solve; returns the solution and the clique problem."""
    problem = split_objective(W, td, cliques=cliques)
    canon = dualize(build_canonical(problem, redundant=redundant))
    return solve(canon, **kwargs), problem
