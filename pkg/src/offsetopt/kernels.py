"""Loop-heavy kernels.

Every public kernel exists twice: a numba-compiled version and a fallback that
runs without numba (either the same loop code interpreted, or a vectorized
numpy variant where one exists). ``OFFSETOPT_DISABLE_JIT=1`` selects the
fallbacks globally; both variants are importable for testing and benchmarks.
"""

import math

import numpy as np

from ._jit import njit, pick, py_func

# ---------------------------------------------------------------------------
# Approximate minimum degree (quotient-graph AMD with aggressive absorption,
# mass elimination and supervariable detection).
# ---------------------------------------------------------------------------


@njit(cache=True)
def _wclear(mark, lemax, w, n):
    if mark < 2 or mark + lemax < 0:
        for k in range(n):
            if w[k] != 0:
                w[k] = 1
        mark = 2
    return mark


@njit(cache=True)
def _tdfs(j, k, head, next_, post, stack):
    top = 0
    stack[0] = j
    while top >= 0:
        p = stack[top]
        i = head[p]
        if i == -1:
            top -= 1
            post[k] = p
            k += 1
        else:
            head[p] = next_[i]
            top += 1
            stack[top] = i
    return k


@njit(cache=True)
def amd_kernel(n, Cp, Ci, cnz, dense):
    """Minimum degree order of a symmetric pattern without diagonal.

    ``Cp`` has length n+1 and ``Ci`` carries elbow room beyond ``cnz``.
    Both are overwritten. Returns the permutation (length n).
    """
    nzmax = Ci.shape[0]
    P = np.empty(n + 1, dtype=np.int64)
    length = np.empty(n + 1, dtype=np.int64)
    nv = np.empty(n + 1, dtype=np.int64)
    nxt = np.empty(n + 1, dtype=np.int64)
    head = np.empty(n + 1, dtype=np.int64)
    elen = np.empty(n + 1, dtype=np.int64)
    degree = np.empty(n + 1, dtype=np.int64)
    w = np.empty(n + 1, dtype=np.int64)
    hhead = np.empty(n + 1, dtype=np.int64)
    last = P
    for k in range(n):
        length[k] = Cp[k + 1] - Cp[k]
    length[n] = 0
    for i in range(n + 1):
        head[i] = -1
        last[i] = -1
        nxt[i] = -1
        hhead[i] = -1
        nv[i] = 1
        w[i] = 1
        elen[i] = 0
        degree[i] = length[i]
    mark = _wclear(0, 0, w, n)
    elen[n] = -2
    Cp[n] = -1
    w[n] = 0
    nel = 0
    mindeg = 0
    lemax = 0
    # seeded in reverse so that ties resolve to the smallest index first
    for i in range(n - 1, -1, -1):
        d = degree[i]
        if d == 0:
            elen[i] = -2
            nel += 1
            Cp[i] = -1
            w[i] = 0
        elif d > dense:
            nv[i] = 0
            elen[i] = -1
            nel += 1
            Cp[i] = -(n) - 2
            nv[n] += 1
        else:
            if head[d] != -1:
                last[head[d]] = i
            nxt[i] = head[d]
            head[d] = i
    while nel < n:
        k = -1
        while mindeg < n:
            k = head[mindeg]
            if k != -1:
                break
            mindeg += 1
        if nxt[k] != -1:
            last[nxt[k]] = -1
        head[mindeg] = nxt[k]
        elenk = elen[k]
        nvk = nv[k]
        nel += nvk
        # garbage collection
        if elenk > 0 and cnz + mindeg >= nzmax:
            for j in range(n):
                p = Cp[j]
                if p >= 0:
                    Cp[j] = Ci[p]
                    Ci[p] = -(j) - 2
            q = 0
            p = 0
            while p < cnz:
                j = -Ci[p] - 2
                p += 1
                if j >= 0:
                    Ci[q] = Cp[j]
                    Cp[j] = q
                    q += 1
                    for _ in range(length[j] - 1):
                        Ci[q] = Ci[p]
                        q += 1
                        p += 1
            cnz = q
        # construct new element
        dk = 0
        nv[k] = -nvk
        p = Cp[k]
        pk1 = p if elenk == 0 else cnz
        pk2 = pk1
        for k1 in range(1, elenk + 2):
            if k1 > elenk:
                e = k
                pj = p
                ln = length[k] - elenk
            else:
                e = Ci[p]
                p += 1
                pj = Cp[e]
                ln = length[e]
            for _ in range(ln):
                i = Ci[pj]
                pj += 1
                nvi = nv[i]
                if nvi <= 0:
                    continue
                dk += nvi
                nv[i] = -nvi
                Ci[pk2] = i
                pk2 += 1
                if nxt[i] != -1:
                    last[nxt[i]] = last[i]
                if last[i] != -1:
                    nxt[last[i]] = nxt[i]
                else:
                    head[degree[i]] = nxt[i]
            if e != k:
                Cp[e] = -(k) - 2
                w[e] = 0
        if elenk != 0:
            cnz = pk2
        degree[k] = dk
        Cp[k] = pk1
        length[k] = pk2 - pk1
        elen[k] = -2
        # set differences |Le \ Lk|
        mark = _wclear(mark, lemax, w, n)
        for pk in range(pk1, pk2):
            i = Ci[pk]
            eln = elen[i]
            if eln <= 0:
                continue
            nvi = -nv[i]
            wnvi = mark - nvi
            for p in range(Cp[i], Cp[i] + eln):
                e = Ci[p]
                if w[e] >= mark:
                    w[e] -= nvi
                elif w[e] != 0:
                    w[e] = degree[e] + wnvi
        # degree update
        for pk in range(pk1, pk2):
            i = Ci[pk]
            p1 = Cp[i]
            p2 = p1 + elen[i] - 1
            pn = p1
            h = 0
            d = 0
            for p in range(p1, p2 + 1):
                e = Ci[p]
                if w[e] != 0:
                    dext = w[e] - mark
                    if dext > 0:
                        d += dext
                        Ci[pn] = e
                        pn += 1
                        h += e
                    else:
                        Cp[e] = -(k) - 2
                        w[e] = 0
            elen[i] = pn - p1 + 1
            p3 = pn
            p4 = p1 + length[i]
            for p in range(p2 + 1, p4):
                j = Ci[p]
                nvj = nv[j]
                if nvj <= 0:
                    continue
                d += nvj
                Ci[pn] = j
                pn += 1
                h += j
            if d == 0:
                Cp[i] = -(k) - 2
                nvi = -nv[i]
                dk -= nvi
                nvk += nvi
                nel += nvi
                nv[i] = 0
                elen[i] = -1
            else:
                degree[i] = min(degree[i], d)
                Ci[pn] = Ci[p3]
                Ci[p3] = Ci[p1]
                Ci[p1] = k
                length[i] = pn - p1 + 1
                h = abs(h) % n
                nxt[i] = hhead[h]
                hhead[h] = i
                last[i] = h
        degree[k] = dk
        lemax = max(lemax, dk)
        mark = _wclear(mark + lemax, lemax, w, n)
        # supervariable detection
        for pk in range(pk1, pk2):
            i = Ci[pk]
            if nv[i] >= 0:
                continue
            h = last[i]
            i = hhead[h]
            hhead[h] = -1
            while i != -1 and nxt[i] != -1:
                ln = length[i]
                eln = elen[i]
                for p in range(Cp[i] + 1, Cp[i] + ln):
                    w[Ci[p]] = mark
                jlast = i
                j = nxt[i]
                while j != -1:
                    ok = length[j] == ln and elen[j] == eln
                    p = Cp[j] + 1
                    while ok and p <= Cp[j] + ln - 1:
                        if w[Ci[p]] != mark:
                            ok = False
                        p += 1
                    if ok:
                        Cp[j] = -(i) - 2
                        nv[i] += nv[j]
                        nv[j] = 0
                        elen[j] = -1
                        j = nxt[j]
                        nxt[jlast] = j
                    else:
                        jlast = j
                        j = nxt[j]
                i = nxt[i]
                mark += 1
        # finalize new element
        p = pk1
        for pk in range(pk1, pk2):
            i = Ci[pk]
            nvi = -nv[i]
            if nvi <= 0:
                continue
            nv[i] = nvi
            d = degree[i] + dk - nvi
            d = min(d, n - nel - nvi)
            if head[d] != -1:
                last[head[d]] = i
            nxt[i] = head[d]
            last[i] = -1
            head[d] = i
            mindeg = min(mindeg, d)
            degree[i] = d
            Ci[p] = i
            p += 1
        nv[k] = nvk
        length[k] = p - pk1
        if length[k] == 0:
            Cp[k] = -1
            w[k] = 0
        if elenk != 0:
            cnz = p
    # postorder the assembly tree
    for i in range(n):
        Cp[i] = -Cp[i] - 2
    for j in range(n + 1):
        head[j] = -1
    for j in range(n, -1, -1):
        if nv[j] > 0:
            continue
        nxt[j] = head[Cp[j]]
        head[Cp[j]] = j
    for e in range(n, -1, -1):
        if nv[e] <= 0:
            continue
        if Cp[e] != -1:
            nxt[e] = head[Cp[e]]
            head[Cp[e]] = e
    k = 0
    for i in range(n + 1):
        if Cp[i] == -1:
            k = _tdfs(i, k, head, nxt, P, w)
    return P[:n].copy()


amd_fallback = py_func(amd_kernel)


amd = pick(amd_kernel, amd_fallback)

# ---------------------------------------------------------------------------
# Symbolic Cholesky: elimination tree and column patterns of L
# ---------------------------------------------------------------------------


@njit(cache=True)
def symbolic_kernel(n, indptr, indices):
    """Column structure of the Cholesky factor of a symmetric pattern.

    ``indptr``/``indices`` hold the full symmetric pattern (any order).
    Returns (colptr, rows, parent): column j's rows are
    ``rows[colptr[j]:colptr[j+1]]``, sorted, starting with j itself.
    """
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for p in range(indptr[k], indptr[k + 1]):
            i = indices[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    counts = np.ones(n, dtype=np.int64)
    flag = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        flag[k] = k
        for p in range(indptr[k], indptr[k + 1]):
            i = indices[p]
            while i < k and flag[i] != k:
                counts[i] += 1
                flag[i] = k
                i = parent[i]
    colptr = np.zeros(n + 1, dtype=np.int64)
    for j in range(n):
        colptr[j + 1] = colptr[j] + counts[j]
    rows = np.empty(colptr[n], dtype=np.int64)
    fill = colptr[:n].copy()
    for j in range(n):
        rows[fill[j]] = j
        fill[j] += 1
    flag[:] = -1
    for k in range(n):
        flag[k] = k
        for p in range(indptr[k], indptr[k + 1]):
            i = indices[p]
            while i < k and flag[i] != k:
                rows[fill[i]] = k
                fill[i] += 1
                flag[i] = k
                i = parent[i]
    return colptr, rows, parent


symbolic = pick(symbolic_kernel, py_func(symbolic_kernel))

# ---------------------------------------------------------------------------
# Randomized rounding: batched backward substitution with F^H
# ---------------------------------------------------------------------------


@njit(cache=True)
def backsolve_kernel(colptr, rows, vals, y):
    """Solve ``F^H s = y`` for each row of ``y`` (trials x n).

    F is unit lower triangular; column j stores its strictly-lower entries.
    """
    k, n = y.shape
    s = y.copy()
    for t in range(k):
        for j in range(n - 1, -1, -1):
            acc = s[t, j]
            for p in range(colptr[j], colptr[j + 1]):
                acc -= np.conj(vals[p]) * s[t, rows[p]]
            s[t, j] = acc
    return s


def backsolve_numpy(colptr, rows, vals, y):
    s = np.array(y, dtype=complex, copy=True)
    n = s.shape[1]
    cv = np.conj(vals)
    for j in range(n - 1, -1, -1):
        a, b = colptr[j], colptr[j + 1]
        if b > a:
            s[:, j] -= s[:, rows[a:b]] @ cv[a:b]
    return s


backsolve = pick(backsolve_kernel, backsolve_numpy)

# ---------------------------------------------------------------------------
# Fluid queue simulation over one cycle
# ---------------------------------------------------------------------------


@njit(cache=True)
def simulate_kernel(steps, flow, gamma, lam, head_offset, is_entry, alpha, phi, bptr, bsrc, bval, src_shift):
    """Half peak-to-peak queue amplitude per link over one cycle.

    Departures d_k(t) = f_k (1 + cos 2pi(t - theta_head(k) - gamma_k)).
    Non-entry arrivals sum beta_kl d_k(t - lambda_l); entry arrivals are
    f_l + alpha_l cos 2pi(t - phi_l). ``src_shift[p]`` is
    theta_head(k) + gamma_k for the p-th upstream entry.

    The queue is the running trapezoid integral of arrivals minus departures
    with the Euler-Maclaurin end correction, and the extremes are refined by
    a parabola through the neighbouring samples (the rates are periodic).
    """
    m = flow.shape[0]
    out = np.empty(m)
    h = 1.0 / steps
    tp = 2.0 * math.pi
    g = np.empty(steps)
    q = np.empty(steps)
    for l in range(m):
        for s in range(steps):
            t = s * h
            dep = flow[l] * (1.0 + math.cos(tp * (t - head_offset[l] - gamma[l])))
            if is_entry[l]:
                arr = flow[l] + alpha[l] * math.cos(tp * (t - phi[l]))
            else:
                arr = 0.0
                for p in range(bptr[l], bptr[l + 1]):
                    k = bsrc[p]
                    arr += bval[p] * flow[k] * (1.0 + math.cos(tp * (t - lam[l] - src_shift[p])))
            g[s] = arr - dep
        d0 = (g[1 % steps] - g[steps - 1]) / (2.0 * h)
        acc = 0.0
        q[0] = 0.0
        for s in range(1, steps):
            acc += 0.5 * (g[s - 1] + g[s]) * h
            ds = (g[(s + 1) % steps] - g[s - 1]) / (2.0 * h)
            q[s] = acc - h * h / 12.0 * (ds - d0)
        imax = 0
        imin = 0
        for s in range(steps):
            if q[s] > q[imax]:
                imax = s
            if q[s] < q[imin]:
                imin = s
        out[l] = 0.5 * (_parabola_peak(q, imax, steps) - _parabola_peak(q, imin, steps))
    return out


@njit(cache=True)
def _parabola_peak(q, i, steps):
    a = q[(i - 1) % steps]
    b = q[i]
    c = q[(i + 1) % steps]
    curv = a - 2.0 * b + c
    if curv == 0.0:
        return b
    return b - (c - a) * (c - a) / (8.0 * curv)


def simulate_numpy(steps, flow, gamma, lam, head_offset, is_entry, alpha, phi, bptr, bsrc, bval, src_shift):
    tp = 2.0 * np.pi
    h = 1.0 / steps
    t = np.arange(steps) * h
    dep = flow[:, None] * (1.0 + np.cos(tp * (t[None, :] - head_offset[:, None] - gamma[:, None])))
    arr = np.zeros_like(dep)
    ent = np.flatnonzero(is_entry)
    arr[ent] = flow[ent, None] + alpha[ent, None] * np.cos(tp * (t[None, :] - phi[ent, None]))
    owner = np.repeat(np.arange(flow.shape[0]), np.diff(bptr))
    if owner.size:
        terms = bval[:, None] * flow[bsrc, None] * (
            1.0 + np.cos(tp * (t[None, :] - lam[owner, None] - src_shift[:, None]))
        )
        np.add.at(arr, owner, terms)
    g = arr - dep
    dg = (np.roll(g, -1, axis=1) - np.roll(g, 1, axis=1)) / (2 * h)
    trap = np.concatenate([np.zeros((g.shape[0], 1)), np.cumsum(0.5 * (g[:, 1:] + g[:, :-1]) * h, axis=1)], axis=1)
    q = trap - h * h / 12.0 * (dg - dg[:, :1])
    rows = np.arange(q.shape[0])

    def peak(i):
        a, b, c = q[rows, (i - 1) % steps], q[rows, i], q[rows, (i + 1) % steps]
        curv = a - 2 * b + c
        safe = np.where(curv == 0, 1.0, curv)
        return np.where(curv == 0, b, b - (c - a) ** 2 / (8 * safe))

    return 0.5 * (peak(q.argmax(axis=1)) - peak(q.argmin(axis=1)))


simulate = pick(simulate_kernel, simulate_numpy)

# ---------------------------------------------------------------------------
# Exhaustive offset grid search on tiny networks
# ---------------------------------------------------------------------------


@njit(cache=True)
def _nearest_on_grid(g, m):
    ang = math.atan2(g.imag, g.real)
    if ang < 0:
        ang += 2.0 * math.pi
    idx = int(math.floor(ang / (2.0 * math.pi) * m + 0.5)) % m
    return idx


@njit(cache=True)
def grid_search_kernel(W, m):
    """Best ``z^H W z`` over z_j = exp(2 pi i k_j / m), last node fixed at 1.

    The last free node is optimized exactly on the grid for each setting of
    the others, the innermost enumerated node in O(1). Returns (value, idx).
    """
    n = W.shape[0]
    nfree = n - 1
    best_idx = np.zeros(nfree, dtype=np.int64)
    zg = np.empty(m, dtype=np.complex128)
    for k in range(m):
        zg[k] = complex(math.cos(2.0 * math.pi * k / m), math.sin(2.0 * math.pi * k / m))
    z = np.ones(n, dtype=np.complex128)
    if nfree == 0:
        return W[0, 0].real, best_idx
    a = nfree - 1  # analytic node
    if nfree == 1:
        g = W[a, n - 1] * z[n - 1]
        k = _nearest_on_grid(g, m)
        best_idx[0] = k
        val = W[a, a].real + W[n - 1, n - 1].real + 2.0 * (np.conj(zg[k]) * g).real
        return val, best_idx
    t = nfree - 2  # innermost enumerated node
    nouter = t  # nodes 0..t-1 enumerated by odometer
    digits = np.zeros(max(nouter, 1), dtype=np.int64)
    best = -np.inf
    total_outer = 1
    for _ in range(nouter):
        total_outer *= m
    for _ in range(total_outer):
        for j in range(nouter):
            z[j] = zg[digits[j]]
        # contributions not involving t or a
        base = 0.0
        for i in range(n):
            if i == t or i == a:
                continue
            for j in range(n):
                if j == t or j == a:
                    continue
                base += (np.conj(z[i]) * W[i, j] * z[j]).real
        h = 0.0j
        g0 = 0.0j
        for j in range(n):
            if j != t and j != a:
                h += W[t, j] * z[j]
                g0 += W[a, j] * z[j]
        wtt = W[t, t].real
        waa = W[a, a].real
        wat = W[a, t]
        for kt in range(m):
            zt = zg[kt]
            val = base + wtt + 2.0 * (np.conj(zt) * h).real
            g = g0 + wat * zt
            ka = _nearest_on_grid(g, m)
            val += waa + 2.0 * (np.conj(zg[ka]) * g).real
            if best == -np.inf or val > best + 1e-12 * abs(best):
                best = val
                for j in range(nouter):
                    best_idx[j] = digits[j]
                best_idx[t] = kt
                best_idx[a] = ka
        for j in range(nouter - 1, -1, -1):
            digits[j] += 1
            if digits[j] < m:
                break
            digits[j] = 0
    return best, best_idx


def grid_search_numpy(W, m):
    W = np.asarray(W, dtype=complex)
    n = W.shape[0]
    nfree = n - 1
    zg = np.exp(2j * np.pi * np.arange(m) / m)
    if nfree == 0:
        return float(W[0, 0].real), np.zeros(0, dtype=np.int64)

    def nearest(g):
        ang = np.mod(np.angle(g), 2 * np.pi)
        return np.floor(ang / (2 * np.pi) * m + 0.5).astype(np.int64) % m

    a = nfree - 1
    if nfree == 1:
        g = W[a, n - 1]
        k = int(nearest(np.array([g]))[0])
        val = W[a, a].real + W[n - 1, n - 1].real + 2 * (np.conj(zg[k]) * g).real
        return float(val), np.array([k], dtype=np.int64)
    t = nfree - 2
    best, best_idx = -np.inf, None
    others = [j for j in range(n) if j not in (t, a)]
    for combo in np.ndindex(*([m] * t)):
        z = np.ones(n, dtype=complex)
        for j, d in enumerate(combo):
            z[j] = zg[d]
        zo = z[others]
        base = np.real(np.conj(zo) @ W[np.ix_(others, others)] @ zo)
        h = W[t, others] @ zo
        g = W[a, others] @ zo + W[a, t] * zg
        ka = nearest(g)
        vals = base + W[t, t].real + 2 * np.real(np.conj(zg) * h) + W[a, a].real + 2 * np.real(np.conj(zg[ka]) * g)
        kt = int(np.argmax(vals))
        if best == -np.inf or vals[kt] > best + 1e-12 * abs(best):
            best = float(vals[kt])
            best_idx = np.array(list(combo) + [kt, int(ka[kt])], dtype=np.int64)
    return best, best_idx


grid_search = pick(grid_search_kernel, grid_search_numpy)


# ---------------------------------------------------------------------------
# Real matrix of X -> R X R^H in orthonormal Hermitian coordinates
# ---------------------------------------------------------------------------


@njit(cache=True)
def congruence_kernel(R):
    """R: stack (k, d, d) complex. Returns T (k, d*d, d*d) with vec(R X R^H) = T vec(X)."""
    k, d, _ = R.shape
    m = d * d
    npairs = d * (d - 1) // 2
    s2 = math.sqrt(2.0)
    pi = np.empty(npairs, dtype=np.int64)
    pk = np.empty(npairs, dtype=np.int64)
    t = 0
    for i in range(d):
        for j in range(i + 1, d):
            pi[t] = i
            pk[t] = j
            t += 1
    out = np.empty((k, m, m))
    for b in range(k):
        Rb = R[b]
        Rc = np.conj(Rb)
        # columns: image of each basis element, evaluated at each output coordinate
        for col in range(m):
            if col < d:
                i = col
                for p in range(d):
                    out[b, p, col] = (Rb[p, i] * Rc[p, i]).real
                for t2 in range(npairs):
                    p = pi[t2]
                    q = pk[t2]
                    v = Rb[p, i] * Rc[q, i]
                    out[b, d + t2, col] = s2 * v.real
                    out[b, d + npairs + t2, col] = s2 * v.imag
            else:
                imag = col >= d + npairs
                t1 = col - d - npairs if imag else col - d
                i = pi[t1]
                j = pk[t1]
                for p in range(d):
                    a1 = Rb[p, i] * Rc[p, j]
                    if imag:
                        # i (r_i r_j^H - r_j r_i^H) / sqrt2 on the diagonal: -sqrt2 Im(a1)
                        out[b, p, col] = -s2 * a1.imag
                    else:
                        out[b, p, col] = s2 * a1.real
                for t2 in range(npairs):
                    p = pi[t2]
                    q = pk[t2]
                    a1 = Rb[p, i] * Rc[q, j]
                    a2 = Rb[p, j] * Rc[q, i]
                    if imag:
                        v = 1j * (a1 - a2)
                    else:
                        v = a1 + a2
                    out[b, d + t2, col] = v.real
                    out[b, d + npairs + t2, col] = v.imag
    return out


def congruence_numpy(R):
    from .hermitian import congruence_matrices

    return congruence_matrices(np.asarray(R), hermitian_input=False)


congruence = pick(congruence_kernel, congruence_numpy)
