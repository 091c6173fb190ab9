"""Hot loops, each in a numba flavour (``*_nb``) and a numpy flavour (``*_np``).

Public dispatchers at the bottom pick one according to
:func:`permom._accel.backend`.
"""
from __future__ import annotations

import itertools

import numpy as np

from ._accel import HAS_NUMBA, njit, prange, use_numba

# ---------------------------------------------------------------------------
# power-sum root finding: sum_i q_i lam_i^(2m) = M_m, m = 1..n
# ---------------------------------------------------------------------------


@njit
def _residual_nb(lam, q, r, M, n, F):
    for m in range(n):
        acc = 0.0
        for i in range(r):
            acc += q[i] * lam[i] ** (2 * (m + 1))
        F[m] = acc / M[m] - 1.0
    c = 0.0
    for m in range(n):
        c += F[m] * F[m]
    return c


@njit
def _small_solve_nb(A, b, r):
    # Gaussian elimination with partial pivoting on an r x r system (in place)
    for col in range(r):
        piv = col
        best = abs(A[col, col])
        for row in range(col + 1, r):
            if abs(A[row, col]) > best:
                best = abs(A[row, col])
                piv = row
        if best == 0.0:
            return False
        if piv != col:
            for j in range(r):
                tmp = A[col, j]
                A[col, j] = A[piv, j]
                A[piv, j] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for row in range(col + 1, r):
            f = A[row, col] / A[col, col]
            for j in range(col, r):
                A[row, j] -= f * A[col, j]
            b[row] -= f * b[col]
    for row in range(r - 1, -1, -1):
        acc = b[row]
        for j in range(row + 1, r):
            acc -= A[row, j] * b[j]
        b[row] = acc / A[row, row]
    return True


@njit
def _lm_nb(lam, q, r, M, n, max_iter):
    """Levenberg-Marquardt on the relative power-sum residuals; returns max |F|."""
    F = np.empty(n)
    Fn = np.empty(n)
    J = np.empty((n, r))
    A = np.empty((r, r))
    g = np.empty(r)
    trial = np.empty(r)
    cost = _residual_nb(lam, q, r, M, n, F)
    mu = 1e-3
    slow = 0
    for _ in range(max_iter):
        if cost < 1e-30 or slow >= 20:
            break
        for m in range(n):
            p = 2 * (m + 1)
            for i in range(r):
                J[m, i] = q[i] * p * lam[i] ** (p - 1) / M[m]
        for i in range(r):
            acc = 0.0
            for m in range(n):
                acc += J[m, i] * F[m]
            g[i] = -acc
            for j in range(r):
                acc = 0.0
                for m in range(n):
                    acc += J[m, i] * J[m, j]
                A[i, j] = acc
        improved = False
        for _t in range(12):
            Aw = A.copy()
            for i in range(r):
                Aw[i, i] += mu * (A[i, i] + 1e-12)
            step = g.copy()
            if not _small_solve_nb(Aw, step, r):
                mu *= 10.0
                continue
            for i in range(r):
                trial[i] = lam[i] + step[i]
            c_new = _residual_nb(trial, q, r, M, n, Fn)
            if c_new < cost:
                # stalled on a non-zero local minimum rather than converging to a root
                slow = slow + 1 if (c_new > 0.99 * cost and c_new > 1e-24) else 0
                for i in range(r):
                    lam[i] = trial[i]
                for m in range(n):
                    F[m] = Fn[m]
                cost = c_new
                mu = max(mu * 0.3, 1e-15)
                improved = True
                break
            mu *= 10.0
        if not improved:
            break
    worst = 0.0
    for m in range(n):
        if abs(F[m]) > worst:
            worst = abs(F[m])
    return worst


@njit(parallel=True)
def solve_tuples_nb(qs, rs, M, W, max_iter, tol, tol_over):
    """Best (smallest ``sum q|lam|``) accepted root for every degeneracy tuple.

    Parameters
    ----------
    qs : (T, n) float array, zero padded degeneracies.
    rs : (T,) number of distinct values in each tuple.
    M : (n,) target moments.
    W : (S, n) positive start weights; start ``s`` puts a share
        ``W[s, i] / sum W[s, :r]`` of ``M[0]`` on value ``i``.
    """
    T = qs.shape[0]
    n = M.shape[0]
    S = W.shape[0]
    vals = np.full(T, np.inf)
    lams = np.zeros((T, n))
    res = np.full(T, np.inf)
    for t in prange(T):  # tuples are independent; each writes only its own slot
        lam = np.empty(n)
        r = rs[t]
        q = qs[t]
        for s in range(S):
            tot = 0.0
            for i in range(r):
                tot += W[s, i]
            for i in range(r):
                lam[i] = np.sqrt(W[s, i] / tot * M[0] / q[i])
            # insertion sort, descending: start on the branch whose value order matches the tuple order
            for i in range(1, r):
                v = lam[i]
                j = i - 1
                while j >= 0 and lam[j] < v:
                    lam[j + 1] = lam[j]
                    j -= 1
                lam[j + 1] = v
            worst = _lm_nb(lam, q, r, M, n, max_iter)
            if worst < res[t]:
                res[t] = worst
            lim = tol if r == n else tol_over
            if worst <= lim:
                v = 0.0
                for i in range(r):
                    v += q[i] * abs(lam[i])
                if v < vals[t]:
                    vals[t] = v
                    for i in range(r):
                        lams[t, i] = abs(lam[i])
    return vals, lams, res


def _lm_batch_np(lam, q, M, max_iter):
    # lam: (S, r) starts for one tuple; vectorised LM over starts
    n = M.shape[0]
    S, r = lam.shape
    powers = 2 * np.arange(1, n + 1)

    def resid(x):
        return np.einsum("i,sim->sm", q, np.abs(x)[:, :, None] ** powers[None, None, :]) / M - 1.0

    F = resid(lam)
    cost = np.sum(F**2, axis=1)
    mu = np.full(S, 1e-3)
    eye = np.eye(r)
    active = np.ones(S, dtype=bool)
    for _ in range(max_iter):
        active &= cost >= 1e-30
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        x = lam[idx]
        J = (q[None, None, :] * powers[None, :, None] * np.sign(x)[:, None, :]
             * np.abs(x)[:, None, :] ** (powers[None, :, None] - 1)) / M[None, :, None]
        A = np.einsum("smi,smj->sij", J, J)
        g = -np.einsum("smi,sm->si", J, F[idx])
        moved = np.zeros(idx.size, dtype=bool)
        mu_loc = mu[idx]
        for _t in range(12):
            todo = ~moved
            if not todo.any():
                break
            diag = np.einsum("sii->si", A[todo])
            Aw = A[todo] + (mu_loc[todo][:, None] * (diag + 1e-12))[:, :, None] * eye[None]
            try:
                step = np.linalg.solve(Aw, g[todo][:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                step = np.stack([np.linalg.lstsq(a, b, rcond=None)[0] for a, b in zip(Aw, g[todo])])
            trial = x[todo] + step
            Fn = resid(trial)
            cn = np.sum(Fn**2, axis=1)
            sub = np.nonzero(todo)[0]
            ok = cn < cost[idx[sub]]
            good = sub[ok]
            lam[idx[good]] = trial[ok]
            F[idx[good]] = Fn[ok]
            cost[idx[good]] = cn[ok]
            mu_loc[good] = np.maximum(mu_loc[good] * 0.3, 1e-15)
            mu_loc[sub[~ok]] *= 10.0
            moved[good] = True
        mu[idx] = mu_loc
        active[idx[~moved]] = False
    return np.max(np.abs(F), axis=1)


def solve_tuples_np(qs, rs, M, W, max_iter, tol, tol_over):
    T, n = qs.shape
    vals = np.full(T, np.inf)
    lams = np.zeros((T, n))
    res = np.full(T, np.inf)
    for t in range(T):
        r = int(rs[t])
        q = qs[t, :r]
        w = W[:, :r] / W[:, :r].sum(axis=1, keepdims=True)
        lam = -np.sort(-np.sqrt(w * M[0] / q[None, :]), axis=1)
        worst = _lm_batch_np(lam, q, M, max_iter)
        res[t] = worst.min()
        ok = worst <= (tol if r == n else tol_over)
        if ok.any():
            v = np.abs(lam[ok]) @ q
            j = int(np.argmin(v))
            vals[t] = v[j]
            lams[t, :r] = np.abs(lam[ok][j])
    return vals, lams, res


def solve_tuples(qs, rs, M, W, max_iter=200, tol=1e-9, tol_over=1e-12):
    qs = np.ascontiguousarray(qs, dtype=float)
    rs = np.ascontiguousarray(rs, dtype=np.int64)
    M = np.ascontiguousarray(M, dtype=float)
    W = np.ascontiguousarray(W, dtype=float)
    if use_numba():
        return solve_tuples_nb(qs, rs, M, W, int(max_iter), float(tol), float(tol_over))
    return solve_tuples_np(qs, rs, M, W, int(max_iter), float(tol), float(tol_over))


# ---------------------------------------------------------------------------
# randomized-measurement weight matrices
# ---------------------------------------------------------------------------


@njit
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@njit
def rm_weights_nb(sx, sy, local, param):
    """``W[x, y] = X(sx[x], sy[y])``; ``param`` is the dimension (global) or bit count (local)."""
    nx, ny = sx.shape[0], sy.shape[0]
    W = np.empty((nx, ny))
    if local:
        top = 2.0**param
        for x in range(nx):
            for y in range(ny):
                W[x, y] = top * (-0.5) ** _popcount(sx[x] ^ sy[y])
    else:
        for x in range(nx):
            for y in range(ny):
                W[x, y] = float(param) if sx[x] == sy[y] else -1.0
    return W


def rm_weights_np(sx, sy, local, param):
    sx = np.asarray(sx, dtype=np.int64)[:, None]
    sy = np.asarray(sy, dtype=np.int64)[None, :]
    if local:
        diff = np.bitwise_xor(sx, sy)
        ham = np.zeros(diff.shape, dtype=np.int64)
        for b in range(int(param)):
            ham += (diff >> b) & 1
        return 2.0 ** int(param) * (-0.5) ** ham
    return np.where(sx == sy, float(param), -1.0)


def rm_weights(sx, sy, local: bool, param: int) -> np.ndarray:
    sx = np.ascontiguousarray(sx, dtype=np.int64)
    sy = np.ascontiguousarray(sy, dtype=np.int64)
    if use_numba():
        return rm_weights_nb(sx, sy, bool(local), int(param))
    return rm_weights_np(sx, sy, bool(local), int(param))


# ---------------------------------------------------------------------------
# ring sums over pairwise-distinct indices:
#   sum_{i_0..i_{P-1} distinct} prod_p C_p[i_p, i_{p+1 mod P}]
# ---------------------------------------------------------------------------


@njit
def _ring2_nb(C0, C1):
    M = C0.shape[0]
    acc = 0.0 + 0.0j
    for i in range(M):
        for j in range(M):
            if j != i:
                acc += C0[i, j] * C1[j, i]
    return acc


@njit
def _ring4_nb(C0, C1, C2, C3):
    M = C0.shape[0]
    acc = 0.0 + 0.0j
    for i in range(M):
        for j in range(M):
            if j == i:
                continue
            a = C0[i, j]
            for k in range(M):
                if k == i or k == j:
                    continue
                b = a * C1[j, k]
                for l in range(M):
                    if l == i or l == j or l == k:
                        continue
                    acc += b * C2[k, l] * C3[l, i]
    return acc


def set_partitions(n: int):
    """All set partitions of ``range(n)`` as lists of blocks."""
    if n == 0:
        yield []
        return
    for part in set_partitions(n - 1):
        for b in range(len(part)):
            yield part[:b] + [part[b] + [n - 1]] + part[b + 1 :]
        yield part + [[n - 1]]


def mobius_weight(part) -> int:
    w = 1
    for b in part:
        k = len(b)
        w *= (-1) ** (k - 1) * int(np.prod(np.arange(1, k)))  # (-1)^(k-1) (k-1)!
    return w


def _ring_np(mats):
    # Moebius inversion over the partition lattice: a sum over distinct tuples is
    # a signed combination of unrestricted sums with blocks of indices tied together
    P = len(mats)
    letters = "abcdefghijklmnopqrstuvwxyz"
    total = 0.0 + 0.0j
    for part in set_partitions(P):
        lab = [None] * P
        for bi, block in enumerate(part):
            for p in block:
                lab[p] = letters[bi]
        spec = ",".join(lab[p] + lab[(p + 1) % P] for p in range(P)) + "->"
        total += mobius_weight(part) * np.einsum(spec, *mats, optimize="greedy")
    return total


def distinct_ring(mats) -> complex:
    """Ring sum over pairwise-distinct indices (a U-statistic numerator).

    Length-2 rings use the numba double loop; longer rings use the Moebius
    route, whose einsums scale as ``M^3`` instead of ``M^P``.
    """
    mats = [np.ascontiguousarray(m, dtype=complex) for m in mats]
    if use_numba() and len(mats) == 2:
        return complex(_ring2_nb(*mats))
    return complex(_ring_np(mats))


def distinct_ring_bruteforce(mats) -> complex:
    """Literal loop over distinct index tuples; reference for :func:`distinct_ring`."""
    mats = [np.ascontiguousarray(m, dtype=complex) for m in mats]
    if HAS_NUMBA and len(mats) == 2:
        return complex(_ring2_nb(*mats))
    if HAS_NUMBA and len(mats) == 4:
        return complex(_ring4_nb(*mats))
    P, M = len(mats), mats[0].shape[0]
    acc = 0.0 + 0.0j
    for idx in itertools.permutations(range(M), P):
        term = 1.0 + 0.0j
        for p in range(P):
            term *= mats[p][idx[p], idx[(p + 1) % P]]
        acc += term
    return complex(acc)
