"""Lower bounds on the trace norm ``sum_i lam_i`` from its even moments.

Given ``M_2m = sum_i lam_i^(2m)`` for ``m = 1..n`` and at most ``L``
singular values, the smallest compatible ``sum_i lam_i`` is attained by a
spectrum with at most ``n`` distinct non-zero values. ``E_4`` has a closed
form; higher orders are found by enumerating integer degeneracies and
solving the resulting power-sum systems.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .errors import DomainError, InfeasibleError, ResourceError, ValidationError
from .moments import MomentVector, singular_values
from .tensor_core import DensityMatrix, IndexPermutation, PermutedMatrix, group_parties, permute_indices

Q_CAP = 64
N_STARTS = 32
ORDERED_LIMIT = 60_000  # above this, enumerate multisets only
START_BUDGET = 16384  # LM runs per call; small searches get more starts per tuple
ACCEPT_TOL = 1e-9
OVERDETERMINED_TOL = 1e-12  # fewer values than equations: demand an exact fit
FEAS_TOL = 1e-12
_START_SEED = 20240917


@dataclass(frozen=True)
class NormBound:
    """Optimal spectrum of the moment-constrained trace-norm minimisation."""

    value: float
    lambdas: tuple[float, ...]
    degeneracies: tuple[int, ...]
    residual: float = 0.0

    def moments(self, n: int) -> list[float]:
        lam = np.asarray(self.lambdas)
        q = np.asarray(self.degeneracies)
        return [float(q @ lam ** (2 * m)) for m in range(1, n + 1)]

    @property
    def rank(self) -> int:
        return int(sum(self.degeneracies))


def _check_pair(M2: float, M4: float, L: int):
    if not (M2 > 0 and M4 > 0):
        raise DomainError(f"moments must be positive, got M2={M2!r}, M4={M4!r}")
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    ratio = M2 * M2 / M4
    if ratio < 1 - 1e-10:
        raise DomainError(f"M4 <= M2^2 violated (M2^2/M4 = {ratio:.12g} < 1)")
    if ratio > L * (1 + 1e-10):
        raise DomainError(f"M2^2 <= L*M4 violated (M2^2/M4 = {ratio:.12g} > L = {L})")
    return min(max(ratio, 1.0), float(L))


def _e4_for_q(M2: float, M4: float, q: int, on_integer: bool = False):
    # on_integer: M2^2/M4 == q up to rounding, so U == M2 exactly; the generic
    # formula would turn 1e-16 moment noise into 1e-8 noise through sqrt(M2 - U)
    U = M2 if on_integer else np.sqrt(max(q * (q + 1) * M4 - q * M2 * M2, 0.0))
    rest = max(M2 - U, 0.0)
    lam1 = np.sqrt(q * (q * M2 + U)) / (q * np.sqrt(q + 1))
    lam2 = np.sqrt(rest) / np.sqrt(q + 1)
    value = np.sqrt(q * (q * M2 + U) / (q + 1)) + np.sqrt(rest / (q + 1))
    return float(value), float(lam1), float(lam2)


def e4_analytic(M2: float, M4: float, L: int) -> NormBound:
    """Closed-form ``E_4``: ``q`` copies of ``lam_1`` plus one ``lam_2``.

    Parameters
    ----------
    M2, M4 : float
        Second and fourth moments.
    L : int
        Maximum number of singular values.

    Returns
    -------
    NormBound

    Raises
    ------
    DomainError
        If ``M2^2/L <= M4 <= M2^2`` fails.

    Examples
    --------
    >>> e4_analytic(1.0, 0.25, 4).value
    2.0
    """
    ratio = _check_pair(M2, M4, L)
    q = int(np.floor(ratio))
    cands = [q]
    near = round(ratio)
    snapped = abs(ratio - near) <= 1e-12 * max(near, 1)
    if snapped:
        cands = sorted({int(near), int(near) - 1} - {0})
    best = None
    for qq in cands:
        if qq < 1 or qq > L:
            continue
        val, l1, l2 = _e4_for_q(M2, M4, qq, on_integer=snapped and qq == near)
        if best is None or val < best[0]:
            best = (val, qq, l1, l2)
    val, qq, l1, l2 = best
    if l2 > 1e-15 * max(l1, 1.0) and qq + 1 <= L:
        lams, degs = _merge_equal((l1, l2), (qq, 1))
    else:
        lams, degs = (l1,), (qq,)
    nb = NormBound(val, lams, degs, 0.0)
    res = max(abs(a - b) for a, b in zip(nb.moments(2), (M2, M4)))
    return NormBound(val, lams, degs, res)


@lru_cache(maxsize=64)
def degeneracy_tuples(n: int, cap: int, min_sum: int = 1, ordered: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Positive tuples with at most ``n`` parts and ``min_sum <= sum <= cap``.

    Tuple position ``i`` is paired with the ``i``-th largest value: the
    solver starts every tuple from a descending spectrum, so each ordering
    targets a different branch of roots. ``ordered=False`` keeps only
    non-increasing tuples (one per multiset), for searches too large to
    enumerate every ordering.
    """
    rows = []
    gen = _compositions_upto if ordered else _partitions_upto
    for r in range(1, n + 1):
        rows.extend(t for t in gen(cap, r) if sum(t) >= min_sum)
    qs = np.zeros((len(rows), n))
    rs = np.zeros(len(rows), dtype=np.int64)
    for t, tup in enumerate(rows):
        qs[t, : len(tup)] = tup
        rs[t] = len(tup)
    qs.setflags(write=False)
    rs.setflags(write=False)
    return qs, rs


def _compositions_upto(total: int, parts: int):
    # tuples of exactly `parts` positive ints with sum <= total
    if parts == 0:
        yield ()
        return
    for first in range(1, total - (parts - 1) + 1):
        for rest in _compositions_upto(total - first, parts - 1):
            yield (first,) + rest


def _partitions_upto(total: int, parts: int, largest: int | None = None):
    # non-increasing positive tuples of exactly `parts` entries with sum <= total
    largest = total if largest is None else largest
    if parts == 0:
        yield ()
        return
    for first in range(min(largest, total - (parts - 1)), 0, -1):
        for rest in _partitions_upto(total - first, parts - 1, first):
            yield (first,) + rest


def _n_compositions(cap: int, n: int) -> int:
    from math import comb

    return sum(comb(cap, r) for r in range(1, n + 1))  # compositions with r parts and sum <= cap


def _start_weights(n: int, starts: int) -> np.ndarray:
    rng = np.random.default_rng(_START_SEED + n)
    return rng.exponential(size=(starts, n))  # normalised per tuple -> Dirichlet(1)


def _equal_q_candidates(q: int, M: np.ndarray):
    """All ``n`` values share degeneracy ``q``: Newton's identities give a polynomial."""
    n = M.size
    p = M / q  # power sums of x_i = lam_i^2
    e = [1.0]
    for k in range(1, n + 1):
        acc = 0.0
        for i in range(1, k + 1):
            acc += (-1) ** (i - 1) * e[k - i] * p[i - 1]
        e.append(acc / k)
    coeffs = [(-1) ** k * e[k] for k in range(n + 1)]  # x^n - e1 x^(n-1) + ...
    roots = np.roots(coeffs)
    if np.any(np.abs(roots.imag) > 1e-9 * max(1.0, np.max(np.abs(roots)))):
        return None
    x = roots.real
    if np.any(x < -1e-14):
        return None
    return np.sqrt(np.clip(x, 0.0, None))


def _merge_equal(lams, degs, rel=1e-7):
    # collapse coincident values so the witness lists distinct lambdas;
    # near-degenerate roots are only resolved to ~sqrt(eps)
    out_l, out_q = [], []
    for lam, q in zip(lams, degs):
        if out_l and abs(out_l[-1] - lam) <= rel * max(abs(lam), 1e-300):
            out_l[-1] = (out_l[-1] * out_q[-1] + lam * q) / (out_q[-1] + q)
            out_q[-1] += q
        else:
            out_l.append(float(lam))
            out_q.append(int(q))
    return tuple(map(float, out_l)), tuple(map(int, out_q))


def _finalise(lams, degs, moments) -> NormBound:
    lams = np.asarray(lams, dtype=float)
    degs = np.asarray(degs, dtype=int)
    keep = degs > 0
    lams, degs = lams[keep], degs[keep]
    order = np.argsort(-lams, kind="stable")
    lams, degs = _merge_equal(lams[order], degs[order])
    nb = NormBound(float(np.dot(degs, lams)), lams, degs, 0.0)
    res = max(abs(a - b) for a, b in zip(nb.moments(len(moments)), moments))
    return NormBound(nb.value, nb.lambdas, nb.degeneracies, float(res))


def e2n_bound(
    moments,
    L: int,
    method: str = "auto",
    q_cap: int = Q_CAP,
    starts: int | None = None,
    tol: float = ACCEPT_TOL,
) -> NormBound:
    """Smallest ``sum_i lam_i`` compatible with ``(M_2, ..., M_2n)`` and rank ``<= L``.

    Parameters
    ----------
    moments : sequence of float or MomentVector
    L : int
        Maximum number of singular values (``min(rows, cols)`` of ``R_pi``).
    method : {"auto", "numeric"}
        ``auto`` uses closed forms for ``n <= 2``; ``numeric`` always runs
        the degeneracy search.
    q_cap : int
        Cap on ``sum q_i`` in the enumeration.
    starts : int, optional
        Multi-start count per degeneracy tuple. Default: at least
        ``N_STARTS``, raised to ``START_BUDGET / #tuples`` (max 1024)
        when there are few tuples.
    tol : float
        Acceptance threshold on the relative moment residual.

    Raises
    ------
    InfeasibleError
        When no tuple admits a root within ``tol``.
    """
    M = np.asarray(moments.moments if isinstance(moments, MomentVector) else moments, dtype=float)
    if M.ndim != 1 or M.size < 1:
        raise ValidationError("need at least one moment")
    if np.any(M <= 0):
        raise DomainError(f"moments must be positive, got {M.tolist()}")
    if np.any(np.diff(M) > 1e-12 * M[:-1]) and M[0] <= 1.0:
        raise DomainError(f"moments must be non-increasing, got {M.tolist()}")
    n = M.size
    L = int(L)
    if n == 1:
        lam = float(np.sqrt(M[0]))
        return NormBound(lam, (lam,), (1,), 0.0)
    if n >= 2:
        _check_pair(M[0], M[1], L)
    if method == "auto" and n == 2:
        return e4_analytic(M[0], M[1], L)
    if method not in ("auto", "numeric"):
        raise ValidationError(f"unknown method {method!r}")
    cap = min(L, int(q_cap))
    # Cauchy-Schwarz: any spectrum with Q values has M2^2 <= Q M4
    min_sum = max(1, int(np.ceil(M[0] * M[0] / M[1] * (1 - 1e-12))))
    if min_sum > cap:
        raise InfeasibleError(f"moments need at least {min_sum} values but the cap is {cap}")
    qs, rs = degeneracy_tuples(n, cap, min_sum, _n_compositions(cap, n) <= ORDERED_LIMIT)
    if qs.shape[0] > 200_000:
        raise ResourceError(f"{qs.shape[0]} degeneracy tuples exceed the search budget")
    if starts is None:
        starts = int(min(1024, max(N_STARTS, START_BUDGET // max(len(rs), 1))))
    W = _start_weights(n, starts)
    vals, lams, res = _kernels.solve_tuples(qs, rs, M, W, 200, tol, OVERDETERMINED_TOL)
    best_t = int(np.argmin(vals))
    best_val = vals[best_t]
    cand = None
    if np.isfinite(best_val):
        r = int(rs[best_t])
        cand = (lams[best_t, :r], qs[best_t, :r])
    # equal-degeneracy tuples via Newton's identities
    for q in range(1, cap // n + 1):
        x = _equal_q_candidates(q, M)
        if x is None:
            continue
        v = q * float(np.sum(x))
        got = np.array([q * np.sum(x ** (2 * m)) for m in range(1, n + 1)])
        if np.max(np.abs(got / M - 1)) <= tol and v < best_val:
            best_val = v
            cand = (x, np.full(n, q))
    if cand is None:
        raise InfeasibleError(
            f"no degeneracy tuple with sum <= {cap} reproduces the moments "
            f"(best relative residual {float(np.min(res)):.3e})",
            float(np.min(res)),
        )
    return _finalise(cand[0], cand[1].astype(int), M)


def e2n_for_state(rho: DensityMatrix, perm: IndexPermutation, n: int, **kw) -> NormBound:
    """``E_2n`` of ``R_pi(rho)``, with ``L`` taken from the rearranged shape."""
    from .moments import moment_direct

    R = permute_indices(rho, perm)
    M = [moment_direct(R, m) for m in range(1, n + 1)]
    return e2n_bound(M, R.L, **kw)


# --- Ky-Fan norms and entanglement structure -------------------------------------


def kyfan_norm(R, m: int) -> float:
    """Sum of the ``m`` largest singular values."""
    spec = singular_values(R)
    if not 1 <= m <= spec.L:
        raise ValidationError(f"Ky-Fan order must lie in 1..{spec.L}, got {m}")
    return float(np.sum(spec.values[:m]))


@dataclass(frozen=True)
class StructureReport:
    G_R: float
    G_T: float
    thresholds: dict = field(default_factory=dict)
    certified_intactness_below: int | None = None
    certified_by: dict = field(default_factory=dict)


def structure_thresholds(k: int, d: int) -> dict[int, float]:
    return {t: float((2**k - 2**t) * d + (2**t - 2)) for t in range(2, k + 1)}


def intactness_indicator(rho: DensityMatrix, d: int, max_parties: int = 8) -> StructureReport:
    """Ky-Fan ``d^2`` sums over all ordered bipartitions ``g | g-bar``.

    ``certified_intactness_below = t`` means the state's intactness is
    certified to be smaller than ``t`` (the smallest ``t`` whose threshold
    either indicator exceeds).
    """
    k = rho.structure.k
    if k > max_parties:
        raise ResourceError(f"{k} parties need {2**k - 2} bipartitions; limit is {max_parties} parties")
    if k < 2:
        raise ValidationError("need at least two parties")
    if d < 1 or d > min(rho.dims):
        raise ValidationError(f"d must lie in 1..{min(rho.dims)}")
    realign = IndexPermutation.realignment(2)
    ptrans = IndexPermutation.partial_transpose(2, 0)
    GR = GT = 0.0
    parties = list(range(k))
    for size in range(1, k):
        for g in itertools.combinations(parties, size):
            gbar = [p for p in parties if p not in g]
            bip = group_parties(rho, [list(g), gbar])
            GR += kyfan_norm(permute_indices(bip, realign), d * d)
            GT += kyfan_norm(permute_indices(bip, ptrans), d * d)
    th = structure_thresholds(k, d)
    by = {}
    for name, G in (("G_R", GR), ("G_T", GT)):
        hit = [t for t, v in sorted(th.items()) if G > v + 1e-9]
        by[name] = hit[0] if hit else None
    found = [t for t in by.values() if t is not None]
    return StructureReport(GR, GT, th, min(found) if found else None, by)


def _two_value_roots(q1, q2, A, B):
    """Non-negative ``(x1, x2)`` with ``q1 x1 + q2 x2 = A``, ``q1 x1^2 + q2 x2^2 = B``."""
    out = []
    a = q2 * (q1 + q2) / q1
    b = -2 * A * q2 / q1
    c = A * A / q1 - B
    disc = b * b - 4 * a * c
    if disc < -1e-14 * max(1.0, b * b):
        return out
    sq = np.sqrt(max(disc, 0.0))
    for x2 in {(-b + sq) / (2 * a), (-b - sq) / (2 * a)}:
        x1 = (A - q2 * x2) / q1
        if x1 >= -1e-15 and x2 >= -1e-15:
            out.append((max(x1, 0.0), max(x2, 0.0)))
    return out


def _top_l(values, degs, l):
    order = np.argsort(-np.asarray(values))
    tot, left = 0.0, l
    for i in order:
        take = min(degs[i], left)
        tot += take * values[i]
        left -= take
        if left == 0:
            break
    return tot


def structure_bound(M2: float, M4: float, l: int, L: int, grid: int = 64) -> float:
    """Smallest sum of the ``l`` largest values over spectra matching ``(M2, M4)``.

    Two-valued candidates ``(q1, q2)`` are solved exactly; three-valued
    candidates in which one block straddles position ``l`` trace out a
    one-parameter curve that is minimised numerically along ``lam_3``.
    """
    _check_pair(M2, M4, L)
    if not 1 <= l <= L:
        raise ValidationError(f"need 1 <= l <= L, got l={l}, L={L}")
    best = np.inf
    tol = 1e-10
    # one or two distinct values (cases with lam_l != lam_(l+1), or l inside the first block)
    for q1 in range(1, L + 1):
        if abs(q1 * M4 - M2 * M2) <= tol * M2 * M2:
            best = min(best, _top_l([np.sqrt(M2 / q1)], [q1], l))
        for q2 in range(1, L - q1 + 1):
            for x1, x2 in _two_value_roots(q1, q2, M2, M4):
                best = min(best, _top_l([np.sqrt(x1), np.sqrt(x2)], [q1, q2], l))
    # three values with a straddling block
    for q1 in range(1, L + 1):
        for q2 in range(1, L - q1 + 1):
            for q3 in range(1, L - q1 - q2 + 1):
                s1, s2, s3 = q1, q1 + q2, q1 + q2 + q3
                case3 = s2 < l < s3
                case4 = s1 < l < s2 and s2 < L
                if not (case3 or case4):
                    continue
                best = min(best, _three_value_min(M2, M4, (q1, q2, q3), l, grid))
    if not np.isfinite(best):
        raise DomainError("no spectrum reproduces the moment pair")
    return float(best)


def _three_value_min(M2, M4, q, l, grid):
    q1, q2, q3 = q
    tmax = np.sqrt(M2 / q3)

    def f(t):
        A = M2 - q3 * t * t
        B = M4 - q3 * t**4
        if A < 0 or B < 0:
            return np.inf
        vals = [
            _top_l([np.sqrt(x1), np.sqrt(x2), t], [q1, q2, q3], l)
            for x1, x2 in _two_value_roots(q1, q2, A, B)
        ]
        return min(vals) if vals else np.inf

    ts = np.linspace(0.0, tmax, grid + 1)[1:]
    fs = np.array([f(t) for t in ts])
    if not np.isfinite(fs).any():
        return np.inf
    best = float(np.min(fs))
    i = int(np.argmin(fs))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, len(ts) - 1)]
    if hi > lo:
        cap = best + 1.0  # finite stand-in for infeasible points keeps the parabolic steps well defined
        r = minimize_scalar(lambda t: min(f(t), cap), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        if np.isfinite(r.fun):
            best = min(best, float(r.fun))
    return best
