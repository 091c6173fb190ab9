"""Monte-Carlo simulation of moment-estimation protocols.

Four protocols estimate ``M_2n`` of the realigned state:

* global / local classical shadows, post-processed with U-statistics;
* global / local randomized measurements with cyclically paired settings
  and diagonal weight functions ``X_g`` / ``X_l``.

The hybrid protocol combines randomized measurements on two parties with
local shadows on a third. Every random draw comes from a stream keyed by
``(seed, purpose, round, setting, ...)``, so results do not depend on the
order in which rounds are evaluated.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import InsufficientDataError, UnsupportedError, ValidationError
from .moments import moment_direct
from .states import haar_unitary, make_state
from .tensor_core import DensityMatrix, IndexPermutation, group_parties, permute_indices

PROTOCOLS = ("global_shadow", "local_shadow", "global_rm", "local_rm", "hybrid")
MAX_SAMPLING_DIM = 1024

# stream purposes
_UNITARY, _SHOTS, _SHADOW, _HYBRID_C = 0, 1, 2, 3


# --- randomness ---------------------------------------------------------------


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def derive_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)).generate_state(1)[0])


@lru_cache(maxsize=1)
def single_qubit_cliffords() -> np.ndarray:
    """The 24 single-qubit Clifford unitaries (one representative per global phase)."""
    H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    S = np.diag([1, 1j])

    def known(U):
        # equal up to phase iff |tr(V^dag U)| = 2
        return any(abs(np.trace(V.conj().T @ U)) > 2 - 1e-9 for V in group)

    group = [np.eye(2, dtype=complex)]
    frontier = list(group)
    while frontier:
        nxt = []
        for U in frontier:
            for g in (H, S):
                V = g @ U
                if not known(V):
                    group.append(V)
                    nxt.append(V)
        frontier = nxt
    out = np.array(group)
    out.setflags(write=False)
    return out


def born_sample(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Outcome indices drawn by inverting the cumulative distribution."""
    p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    cdf = np.cumsum(p)
    u = rng.random(shots) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), p.size - 1)


def _born_probs(U: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("sj,jk,sk->s", U, rho, U.conj(), optimize=True))


def _kron_all(mats) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def _qubit_count(d: int) -> int:
    nq = int(round(math.log2(d))) if d > 0 else -1
    if nq < 1 or 2**nq != d:
        raise UnsupportedError(f"local protocols need qubit parties (dimension a power of 2), got {d}")
    return nq


# --- weight functions ------------------------------------------------------------


def weight_global(s, s2, dim: int):
    """``X_g``: ``dim`` when the outcomes agree, ``-1`` otherwise."""
    return np.where(np.asarray(s) == np.asarray(s2), float(dim), -1.0)


def weight_local(s, s2, nbits: int):
    """``X_l = 2^n (-2)^(-Hamming(s, s2))`` on ``n``-bit outcomes."""
    diff = np.bitwise_xor(np.asarray(s, dtype=np.int64), np.asarray(s2, dtype=np.int64))
    ham = sum((diff >> b) & 1 for b in range(nbits))
    return 2.0**nbits * (-0.5) ** ham


# --- classical shadows -----------------------------------------------------------------


@dataclass(frozen=True)
class ShadowSet:
    """Snapshots ``rho_hat`` from single-shot randomized measurements.

    Global snapshots are ``(D+1)|phi><phi| - I`` and store ``phi``.
    Local snapshots are ``kron_q (3|psi_q><psi_q| - I)`` and store the
    per-qubit vectors ``psi`` (shape ``(M, N, 2)``) plus the Clifford
    indices and bits that produced them.
    """

    protocol: str
    dims: tuple
    seed: int
    vectors: np.ndarray
    cliffords: np.ndarray | None = None
    bits: np.ndarray | None = None

    @property
    def M(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def D(self) -> int:
        return int(np.prod(self.dims))

    def snapshot(self, i: int) -> np.ndarray:
        if self.protocol == "global":
            phi = self.vectors[i]
            return (self.D + 1) * np.outer(phi, phi.conj()) - np.eye(self.D)
        return _kron_all([3 * np.outer(v, v.conj()) - np.eye(2) for v in self.vectors[i]])

    def snapshots(self) -> np.ndarray:
        """All snapshots as an ``(M, D, D)`` stack."""
        if self.protocol == "global":
            P = np.einsum("mi,mj->mij", self.vectors, self.vectors.conj())
            return (self.D + 1) * P - np.eye(self.D)[None]
        return np.stack([self.snapshot(i) for i in range(self.M)])

    def party_factors(self, party: int) -> np.ndarray:
        """Local snapshots restricted to one party, ``(M, d, d)``."""
        if self.protocol != "local":
            raise UnsupportedError("only local snapshots factorise over parties")
        nq = [_qubit_count(d) for d in self.dims]
        start = sum(nq[:party])
        return np.stack(
            [_kron_all([3 * np.outer(v, v.conj()) - np.eye(2) for v in self.vectors[i, start : start + nq[party]]])
             for i in range(self.M)]
        )


def sample_global_shadow(rho: DensityMatrix, M: int, seed: int) -> ShadowSet:
    """``M`` snapshots with Haar-random global unitaries (a 2-design stand-in for Cliffords)."""
    if M < 1:
        raise ValidationError("M must be >= 1")
    if rho.D > MAX_SAMPLING_DIM:
        raise UnsupportedError(f"Born sampling limited to D <= {MAX_SAMPLING_DIM}")
    phis = np.empty((M, rho.D), dtype=complex)
    for m in range(M):
        rng = rng_stream(seed, _SHADOW, m)
        U = haar_unitary(rho.D, rng)
        s = born_sample(_born_probs(U, rho.data), 1, rng)[0]
        phis[m] = U[s].conj()  # U^dag |s>
    return ShadowSet("global", tuple(rho.dims), int(seed), phis)


def sample_local_shadow(rho: DensityMatrix, M: int, seed: int) -> ShadowSet:
    """``M`` snapshots with independent single-qubit Cliffords on every qubit."""
    if M < 1:
        raise ValidationError("M must be >= 1")
    if rho.D > MAX_SAMPLING_DIM:
        raise UnsupportedError(f"Born sampling limited to D <= {MAX_SAMPLING_DIM}")
    N = sum(_qubit_count(d) for d in rho.dims)
    C = single_qubit_cliffords()
    idx = np.empty((M, N), dtype=np.int64)
    bits = np.empty((M, N), dtype=np.int64)
    psi = np.empty((M, N, 2), dtype=complex)
    for m in range(M):
        rng = rng_stream(seed, _SHADOW, m)
        idx[m] = rng.integers(0, 24, size=N)
        U = _kron_all(C[idx[m]])
        s = born_sample(_born_probs(U, rho.data), 1, rng)[0]
        bits[m] = [(s >> (N - 1 - q)) & 1 for q in range(N)]
        for q in range(N):
            psi[m, q] = C[idx[m, q]][bits[m, q]].conj()
    return ShadowSet("local", tuple(rho.dims), int(seed), psi, idx, bits)


def _rearrange_stack(stack: np.ndarray, dims, perm: IndexPermutation) -> np.ndarray:
    # batched version of tensor_core.rearrange (leading axis = snapshot)
    k = len(dims)
    M = stack.shape[0]
    T = stack.reshape((M,) + tuple(dims) + tuple(dims))
    T = T.transpose([0] + [1 + ax for r in range(k) for ax in (r, k + r)])
    T = T.transpose([0] + [1 + a for a in perm.source_of()])
    T = T.transpose([0] + [1 + a for a in range(0, 2 * k, 2)] + [1 + a for a in range(1, 2 * k, 2)])
    rows = int(np.prod(T.shape[1 : k + 1]))
    return T.reshape(M, rows, -1)


def _tied_trace(stacks, part) -> complex:
    # unrestricted sum of tr(prod_p T_p[i_{block(p)}]) with indices tied per block
    P = len(stacks)
    M = stacks[0].shape[0]
    blk = [0] * P
    for b, block in enumerate(part):
        for p in block:
            blk[p] = b
    if len(part) == 1:
        prod = stacks[0]
        for p in range(1, P):
            prod = prod @ stacks[p]
        return complex(np.trace(prod, axis1=1, axis2=2).sum())
    r = next(p for p in range(P) if blk[p - 1] != blk[p])
    runs: list[list] = []
    for p in list(range(r, P)) + list(range(r)):
        if runs and runs[-1][0] == blk[p]:
            runs[-1][1] = runs[-1][1] @ stacks[p]  # adjacent positions share the index
        else:
            runs.append([blk[p], stacks[p]])
    count = Counter(b for b, _ in runs)
    factors = [(None, st.sum(axis=0)) if count[b] == 1 else (b, st) for b, st in runs]
    looped = sorted({b for b, _ in factors if b is not None})
    if not looped:
        cur = factors[0][1]
        for _, m in factors[1:]:
            cur = cur @ m
        return complex(np.trace(cur))
    last, outer = looped[-1], looped[:-1]
    total = 0.0 + 0.0j
    for idx in itertools.product(range(M), repeat=len(outer)):
        pick = dict(zip(outer, idx))
        cur = None
        for b, st in factors:
            m = st if (b is None or b == last) else st[pick[b]]
            cur = m if cur is None else cur @ m
        total += np.trace(cur, axis1=-2, axis2=-1).sum()
    return complex(total)


def distinct_trace_sum(stacks: Sequence[np.ndarray]) -> complex:
    """``sum over pairwise-distinct (i_0..i_{P-1}) of tr(T_0[i_0] ... T_{P-1}[i_{P-1}])``."""
    P = len(stacks)
    return sum(
        _kernels.mobius_weight(part) * _tied_trace(stacks, part) for part in _kernels.set_partitions(P)
    )


def _falling(M: int, k: int) -> int:
    out = 1
    for i in range(k):
        out *= M - i
    return out


def _is_bipartite_realignment(perm: IndexPermutation) -> bool:
    return perm.k == 2 and tuple(perm.images) == (1, 3, 2, 4)


def _local_gram(shadows: ShadowSet, party: int) -> np.ndarray:
    # tr(X_i X_j) for local factors: prod over qubits of 9|<psi|phi>|^2 - 4
    nq = [_qubit_count(d) for d in shadows.dims]
    start = sum(nq[:party])
    G = np.ones((shadows.M, shadows.M))
    for q in range(start, start + nq[party]):
        v = shadows.vectors[:, q, :]
        G *= 9 * np.abs(v.conj() @ v.T) ** 2 - 4
    return G


def shadow_moment_estimator(shadows: ShadowSet, perm: IndexPermutation, n: int, method: str = "auto") -> float:
    """U-statistic estimate of ``M_2n = tr[(R R^dag)^n]`` from shadow snapshots.

    Averages ``tr[R_i1 R_i2^dag R_i3 ... R_i2n^dag]`` over ordered tuples of
    distinct snapshots, which makes it unbiased.

    Parameters
    ----------
    method : {"auto", "gram", "matrix"}
        ``gram`` (local snapshots, bipartite realignment only) uses the
        rank-one structure ``R_i = vec(X_A) vec(X_B)^T`` and works on
        ``M x M`` Gram matrices; ``matrix`` rearranges every snapshot.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    M = shadows.M
    if M < 2 * n:
        raise InsufficientDataError(f"need at least {2 * n} snapshots for M_{2 * n}, got {M}")
    if perm.k != len(shadows.dims):
        raise ValidationError(f"permutation acts on {perm.k} parties, snapshots have {len(shadows.dims)}")
    gram_ok = shadows.protocol == "local" and _is_bipartite_realignment(perm)
    if method == "auto":
        method = "gram" if gram_ok else "matrix"
    if method == "gram":
        if not gram_ok:
            raise UnsupportedError("the Gram route needs local snapshots and the bipartite realignment")
        A = _local_gram(shadows, 0)
        B = _local_gram(shadows, 1)
        total = _kernels.distinct_ring([B, A] * n)
    elif method == "matrix":
        R = _rearrange_stack(shadows.snapshots(), shadows.dims, perm)
        Rd = R.conj().transpose(0, 2, 1)
        total = distinct_trace_sum([R, Rd] * n)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return float(total.real) / _falling(M, 2 * n)


# --- randomized measurements ------------------------------------------------------------


def setting_pattern(n: int) -> list[tuple[int, int]]:
    """``(A index, B index)`` of the 2n settings: A1B1, A1B2, A2B2, ..., AnBn, AnB1."""
    out = []
    for i in range(n):
        out.append((i, i))
        out.append((i, (i + 1) % n))
    return out


@dataclass(frozen=True)
class MeasurementRecordSet:
    """Outcomes of the cyclically paired randomized-measurement protocol.

    ``outcomes[r, c, m]`` is the composite basis index of shot ``m`` in
    setting ``c`` of round ``r``; ``unitaries_A[r][i]`` / ``unitaries_B[r][i]``
    describe ``U_A^i`` and ``U_B^i`` (Clifford indices per qubit for local
    mode, the matrix for global mode).
    """

    mode: str
    n: int
    N_U: int
    N_M: int
    dims: tuple
    seed: int
    pattern: tuple
    outcomes: np.ndarray
    unitaries_A: list = field(repr=False, default_factory=list)
    unitaries_B: list = field(repr=False, default_factory=list)

    def split(self):
        """Outcome indices of A and B, each ``(N_U, 2n, N_M)``."""
        dB = self.dims[1]
        return self.outcomes // dB, self.outcomes % dB


def _draw_party_unitary(d: int, mode: str, rng):
    if mode == "global":
        U = haar_unitary(d, rng)
        return U, U
    nq = _qubit_count(d)
    idx = rng.integers(0, 24, size=nq)
    return idx, _kron_all(single_qubit_cliffords()[idx])


def randomized_measurement_run(
    rho: DensityMatrix,
    n: int,
    N_U: int,
    N_M: int,
    mode: str = "global",
    seed: int = 0,
    force_identity: bool = False,
) -> MeasurementRecordSet:
    """Simulate ``N_U`` rounds of ``2n`` settings with ``N_M`` shots each.

    ``force_identity`` replaces every unitary by the identity (test hook).
    """
    if rho.structure.k != 2:
        raise ValidationError("randomized measurements need a bipartite state")
    if mode not in ("global", "local"):
        raise ValidationError(f"mode must be 'global' or 'local', got {mode!r}")
    if n < 1 or N_U < 1 or N_M < 1:
        raise ValidationError("n, N_U and N_M must be positive")
    if rho.D > MAX_SAMPLING_DIM:
        raise UnsupportedError(f"Born sampling limited to D <= {MAX_SAMPLING_DIM}")
    dA, dB = rho.dims
    if mode == "local":
        _qubit_count(dA), _qubit_count(dB)
    pattern = setting_pattern(n)
    out = np.empty((N_U, 2 * n, N_M), dtype=np.int64)
    UA_desc, UB_desc = [], []
    for r in range(N_U):
        rng = rng_stream(seed, _UNITARY, r)
        if force_identity:
            A = [(None, np.eye(dA)) for _ in range(n)]
            B = [(None, np.eye(dB)) for _ in range(n)]
        else:
            A = [_draw_party_unitary(dA, mode, rng) for _ in range(n)]
            B = [_draw_party_unitary(dB, mode, rng) for _ in range(n)]
        UA_desc.append([a[0] for a in A])
        UB_desc.append([b[0] for b in B])
        for c, (ia, ib) in enumerate(pattern):
            U = np.kron(A[ia][1], B[ib][1])
            out[r, c] = born_sample(_born_probs(U, rho.data), N_M, rng_stream(seed, _SHOTS, r, c))
    return MeasurementRecordSet(mode, n, N_U, N_M, (dA, dB), int(seed), tuple(pattern), out, UA_desc, UB_desc)


def _weights(records: MeasurementRecordSet, party: int, sx, sy) -> np.ndarray:
    d = records.dims[party]
    if records.mode == "local":
        return _kernels.rm_weights(sx, sy, True, _qubit_count(d))
    return _kernels.rm_weights(sx, sy, False, d)


def _check_pattern(records: MeasurementRecordSet):
    if tuple(records.pattern) != tuple(setting_pattern(records.n)):
        raise ValidationError("settings do not follow the cyclic A^i B^i, A^i B^(i+1) pairing")
    if records.outcomes.shape != (records.N_U, 2 * records.n, records.N_M):
        raise ValidationError(f"outcome array has shape {records.outcomes.shape}")


def _round_chain(records: MeasurementRecordSet, r: int, sA, sB):
    # W_A^(2i-1,2i), W_B^(2i,2i+1) for i = 1..n, in ring order
    m = 2 * records.n
    mats = []
    for c in range(m):
        nxt = (c + 1) % m
        if c % 2 == 0:
            mats.append(_weights(records, 0, sA[r, c], sA[r, nxt]))
        else:
            mats.append(_weights(records, 1, sB[r, c], sB[r, nxt]))
    return mats


def rm_round_estimates(records: MeasurementRecordSet) -> np.ndarray:
    """Per-round unbiased estimates of ``M_2n``."""
    _check_pattern(records)
    sA, sB = records.split()
    est = np.empty(records.N_U)
    for r in range(records.N_U):
        prod = np.linalg.multi_dot(_round_chain(records, r, sA, sB)) if records.n > 1 else (
            _round_chain(records, r, sA, sB)[0] @ _round_chain(records, r, sA, sB)[1]
        )
        est[r] = np.trace(prod) / records.N_M ** (2 * records.n)
    return est


def rm_moment_estimator(records: MeasurementRecordSet) -> float:
    """Round-averaged estimate of ``M_2n`` of the realigned state.

    Each round evaluates the weighted sum over all ``N_M^(2n)`` shot
    tuples as the trace of a ring of ``N_M x N_M`` weight matrices.
    """
    return float(np.mean(rm_round_estimates(records)))


def rm_moment_naive(records: MeasurementRecordSet) -> float:
    """Literal shot-tuple loop (reference implementation for small ``N_M``)."""
    _check_pattern(records)
    sA, sB = records.split()
    m = 2 * records.n
    dA, dB = records.dims
    wA = (lambda x, y: weight_local(x, y, _qubit_count(dA))) if records.mode == "local" else (
        lambda x, y: weight_global(x, y, dA))
    wB = (lambda x, y: weight_local(x, y, _qubit_count(dB))) if records.mode == "local" else (
        lambda x, y: weight_global(x, y, dB))
    vals = []
    for r in range(records.N_U):
        acc = 0.0
        for t in itertools.product(range(records.N_M), repeat=m):
            w = 1.0
            for c in range(m):
                nxt = (c + 1) % m
                if c % 2 == 0:
                    w *= wA(sA[r, c, t[c]], sA[r, nxt, t[nxt]])
                else:
                    w *= wB(sB[r, c, t[c]], sB[r, nxt, t[nxt]])
            acc += w
        vals.append(acc / records.N_M**m)
    return float(np.mean(vals))


def rm_centered_estimators(records: MeasurementRecordSet) -> tuple[float, float]:
    """Unbiased estimates of the cross terms ``(M_4,1, M_4,2)`` from ``n = 2`` data.

    ``M_4,1`` pairs the A outcome of one shot of the fourth setting with the
    B outcome of a *different* shot of that setting, so it needs ``N_M >= 2``.
    """
    if records.n != 2:
        raise ValidationError("cross-term estimators need n = 2 records")
    if records.N_M < 2:
        raise InsufficientDataError("cross-term estimators need N_M >= 2")
    _check_pattern(records)
    sA, sB = records.split()
    N = records.N_M
    m41, m42 = [], []
    for r in range(records.N_U):
        W12, V23, W34, V41 = _round_chain(records, r, sA, sB)
        # sum over i,j,k,l,l' with l' != l: all pairs minus the diagonal l' = l
        rows34 = W34.sum(axis=1)
        cols41 = V41.sum(axis=0)
        full = cols41 @ W12 @ V23 @ rows34
        diag = np.trace(W12 @ V23 @ W34 @ V41)
        m41.append((full - diag) / (N**4 * (N - 1)))
        m42.append(cols41 @ W12 @ V23.sum(axis=1) / N**4)
    return float(np.mean(m41)), float(np.mean(m42))


# --- hybrid protocol -------------------------------------------------------------------------


def hybrid_estimator(
    rho: DensityMatrix, N_U: int, N_M: int, seed: int = 0, mode: str = "global"
) -> float:
    """``M_4`` for the permutation realigning parties 1, 2 and keeping party 3.

    Parties A and B are measured with the cyclically paired randomized
    settings; party C gets a fresh local Clifford per shot and enters
    through its shadow snapshot. Per round the estimate is the trace of a
    ring of ``(N_M d_C) x (N_M d_C)`` matrices ``W[x, y] * C_x``.
    """
    if rho.structure.k != 3:
        raise ValidationError("the hybrid protocol needs a tripartite state")
    if N_U < 1 or N_M < 1:
        raise ValidationError("N_U and N_M must be positive")
    if rho.D > MAX_SAMPLING_DIM:
        raise UnsupportedError(f"Born sampling limited to D <= {MAX_SAMPLING_DIM}")
    dA, dB, dC = rho.dims
    nC = _qubit_count(dC)
    if mode == "local":
        _qubit_count(dA), _qubit_count(dB)
    C1 = single_qubit_cliffords()
    pattern = setting_pattern(2)
    eyeC = np.eye(2)
    est = []
    for r in range(N_U):
        rng = rng_stream(seed, _UNITARY, r)
        A = [_draw_party_unitary(dA, mode, rng)[1] for _ in range(2)]
        B = [_draw_party_unitary(dB, mode, rng)[1] for _ in range(2)]
        sa = np.empty((4, N_M), dtype=np.int64)
        sb = np.empty((4, N_M), dtype=np.int64)
        snaps = np.empty((4, N_M, dC, dC), dtype=complex)
        for c, (ia, ib) in enumerate(pattern):
            UAB = np.kron(A[ia], B[ib])
            for x in range(N_M):
                g = rng_stream(seed, _HYBRID_C, r, c, x)
                cidx = g.integers(0, 24, size=nC)
                UC = _kron_all(C1[cidx])
                s = born_sample(_born_probs(np.kron(UAB, UC), rho.data), 1, g)[0]
                sab, sc = divmod(int(s), dC)
                sa[c, x], sb[c, x] = divmod(sab, dB)
                facs = []
                for q in range(nC):
                    bit = (sc >> (nC - 1 - q)) & 1
                    v = C1[cidx[q]][bit].conj()
                    facs.append(3 * np.outer(v, v.conj()) - eyeC)
                snaps[c, x] = _kron_all(facs)
        big = []
        for c in range(4):
            nxt = (c + 1) % 4
            if c % 2 == 0:
                W = _kernels.rm_weights(sa[c], sa[nxt], mode == "local", _qubit_count(dA) if mode == "local" else dA)
            else:
                W = _kernels.rm_weights(sb[c], sb[nxt], mode == "local", _qubit_count(dB) if mode == "local" else dB)
            G = np.einsum("xy,xab->xayb", W, snaps[c]).reshape(N_M * dC, N_M * dC)
            big.append(G)
        est.append(np.trace(np.linalg.multi_dot(big)).real / N_M**4)
    return float(np.mean(est))


# --- twirling check ------------------------------------------------------------------


def twirl_check(t: int = 2, samples: int = 10_000, dim: int = 2, seed: int = 0, ensemble: str = "haar") -> float:
    """Frobenius distance between the sampled twirl of ``X_g`` and SWAP.

    ``ensemble="clifford"`` (``dim == 2``) averages exactly over the 24
    single-qubit Cliffords and ignores ``samples``.
    """
    if t != 2:
        raise UnsupportedError("only the second-order twirl is implemented")
    if not 2 <= dim <= 16:
        raise ValidationError("dim must lie in 2..16")
    if ensemble == "clifford":
        if dim != 2:
            raise ValidationError("the Clifford ensemble is single-qubit only")
        Us = single_qubit_cliffords()
    elif ensemble == "haar":
        if samples < 1:
            raise ValidationError("samples must be >= 1")
        rng = np.random.default_rng(seed)
        Us = None
    else:
        raise ValidationError(f"unknown ensemble {ensemble!r}")
    # X_g = (d+1) P_diag - I, and (U x U) P_diag (U x U)^dag = K K^dag with
    # columns K[:, s] = u_s x u_s (u_s the columns of U)
    acc = np.zeros((dim * dim, dim * dim), dtype=complex)
    chunk = max(1, 4096 // dim)
    done = 0
    total = len(Us) if Us is not None else samples
    while done < total:
        take = min(chunk, total - done)
        batch = Us[done : done + take] if Us is not None else np.stack([haar_unitary(dim, rng) for _ in range(take)])
        K = np.einsum("nas,nbs->nabs", batch, batch).reshape(take, dim * dim, dim)
        K = K.transpose(1, 0, 2).reshape(dim * dim, take * dim)
        acc += K @ K.conj().T
        done += take
    twirl = (dim + 1) * acc / total - np.eye(dim * dim)
    swap = np.eye(dim * dim).reshape(dim, dim, dim, dim).transpose(0, 1, 3, 2).reshape(dim * dim, dim * dim)
    return float(np.linalg.norm(twirl - swap))


# --- variance benchmark ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarianceReport:
    protocol: str
    state: str
    N: int
    N_U: int
    N_M: int
    M: int
    mean: float
    variance: float
    reps: int
    true_value: float

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.reps)

    def sane(self, k: float = 5.0) -> bool:
        return abs(self.mean - self.true_value) <= k * self.stderr + 1e-15


CSV_COLUMNS = ("protocol", "N", "N_U", "N_M", "mean", "variance", "true_value", "reps")


def w_split(N: int) -> tuple[list[int], list[int]]:
    """Halves of an ``N``-qubit register; for odd ``N`` the second part is larger."""
    a = N // 2
    return list(range(a)), list(range(a, N))


def bipartite_w(N: int) -> DensityMatrix:
    rho = make_state(f"w:{N}")
    A, B = w_split(N)
    return group_parties(rho, [A, B])


def estimate_once(protocol: str, rho: DensityMatrix, n: int, N_U: int, N_M: int, M: int, seed: int) -> float:
    """One estimate of ``M_2n`` (bipartite realignment) with the named protocol."""
    perm = IndexPermutation.realignment(2)
    if protocol == "global_shadow":
        return shadow_moment_estimator(sample_global_shadow(rho, M, seed), perm, n)
    if protocol == "local_shadow":
        return shadow_moment_estimator(sample_local_shadow(rho, M, seed), perm, n)
    if protocol == "global_rm":
        return rm_moment_estimator(randomized_measurement_run(rho, n, N_U, N_M, "global", seed))
    if protocol == "local_rm":
        return rm_moment_estimator(randomized_measurement_run(rho, n, N_U, N_M, "local", seed))
    raise ValidationError(f"unknown protocol {protocol!r}; choose from {', '.join(PROTOCOLS[:4])}")


def variance_benchmark(config: dict) -> list[VarianceReport]:
    """Empirical mean and variance of ``M_4`` estimates on split W states.

    Config keys: ``qubits`` (list of N), ``protocols``, ``n`` (default 2),
    ``N_U``, ``N_M``, ``M`` (default ``2n N_U N_M``, the matched budget),
    ``repetitions``, ``seed``.
    """
    cfg = {"n": 2, "N_U": 4, "N_M": 5, "repetitions": 200, "seed": 0, "qubits": [4],
           "protocols": list(PROTOCOLS[:4])}
    cfg.update(config)
    n, N_U, N_M = int(cfg["n"]), int(cfg["N_U"]), int(cfg["N_M"])
    M = int(cfg.get("M") or 2 * n * N_U * N_M)
    reps = int(cfg["repetitions"])
    if reps < 2:
        raise ValidationError("need at least 2 repetitions for a variance")
    out = []
    for N in cfg["qubits"]:
        rho = bipartite_w(int(N))
        true = moment_direct(permute_indices(rho, IndexPermutation.realignment(2)), n)
        for pi, proto in enumerate(cfg["protocols"]):
            vals = np.array([
                estimate_once(proto, rho, n, N_U, N_M, M, derive_seed(cfg["seed"], int(N), pi, rep))
                for rep in range(reps)
            ])
            out.append(VarianceReport(proto, f"w:{N}", int(N), N_U, N_M, M, float(vals.mean()),
                                      float(vals.var(ddof=1)), reps, float(true)))
    return out


def reports_to_csv(reports: Sequence[VarianceReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        d = asdict(r)
        w.writerow([d["protocol"], d["N"], d["N_U"], d["N_M"], repr(d["mean"]), repr(d["variance"]),
                    repr(d["true_value"]), d["reps"]])
    return buf.getvalue()
