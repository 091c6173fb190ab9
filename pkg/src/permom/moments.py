"""Permutation moments ``M_2n = tr[(R R^dag)^n]`` by two independent routes.

The *direct* route works on the rearranged matrix (Gram powers or its
singular spectrum). The *observable* route never forms ``R``: it contracts
2n copies of the state, wiring each party's legs across copies with a
cyclic shift or a set of pairwise swaps chosen from the party's type.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import NumericalError, ResourceError, UnsupportedError, ValidationError
from .tensor_core import (
    DensityMatrix,
    IndexPermutation,
    PartyStructure,
    PermutedMatrix,
    partial_trace_array,
    permute_indices,
    rearrange,
)

DENSE_ENUM_LIMIT = 4096**2  # max number of basis strings for the enumeration route
DENSE_AUTO_LIMIT = 2**16  # auto mode enumerates below this, contracts above
CONTRACT_LIMIT = 2**28  # largest einsum intermediate (elements)


class PartyType(str, Enum):
    T1 = "T1"
    T2 = "T2"
    R1 = "R1"
    R2 = "R2"


def classify_parties(perm: IndexPermutation, structure: PartyStructure | None = None):
    """Tag every party T1, T2, R1 or R2.

    A party whose row index lands in the rows of ``R`` and column index in
    the columns is T1; the reverse orientation is T2. A party with both
    legs among the rows is R2 (its legs pair up in ``R^dag R``), both among
    the columns is R1.

    Examples
    --------
    >>> classify_parties(IndexPermutation.from_cycles(2, (2, 3)))
    (<PartyType.R2: 'R2'>, <PartyType.R1: 'R1'>)
    """
    if structure is not None and structure.k != perm.k:
        raise ValidationError(f"permutation is for {perm.k} parties, structure has {structure.k}")
    out = []
    for r in range(perm.k):
        row_in_rows = perm.images[2 * r] % 2 == 1
        col_in_rows = perm.images[2 * r + 1] % 2 == 1
        if row_in_rows and not col_in_rows:
            out.append(PartyType.T1)
        elif col_in_rows and not row_in_rows:
            out.append(PartyType.T2)
        elif row_in_rows:
            out.append(PartyType.R2)
        else:
            out.append(PartyType.R1)
    return tuple(out)


def adjoint_permutation(perm: IndexPermutation) -> IndexPermutation:
    """Permutation ``pi'`` with ``R_pi'(rho) = R_pi(rho)^dag`` for Hermitian ``rho``.

    Conjugation swaps every party's input row/column slot, the dagger swaps
    output rows with output columns.
    """
    flip = lambda s: s + 1 if s % 2 == 1 else s - 1  # noqa: E731
    imgs = perm.images
    new = [0] * len(imgs)
    for j in range(1, len(imgs) + 1):
        new[j - 1] = flip(imgs[flip(j) - 1])
    return IndexPermutation(tuple(new))


# --- copy wirings ---------------------------------------------------------

_DESCRIPTOR = {
    PartyType.T1: "forward-cycle",
    PartyType.T2: "backward-cycle",
    PartyType.R1: "swap-pairs-offset-1",
    PartyType.R2: "swap-pairs-offset-0",
}


def copy_map(descriptor: str, m: int) -> np.ndarray:
    """Wiring of one party across ``m`` copies.

    Entry ``c`` names the copy whose column index feeds the row index of
    copy ``c``; ``tr[W (X_1 x ... x X_m)] = sum prod_c X_c[col_{tau(c)}, col_c]``.
    """
    c = np.arange(m)
    if descriptor == "forward-cycle":
        return (c + 1) % m
    if descriptor == "backward-cycle":
        return (c - 1) % m
    if descriptor == "identity":
        return c.copy()
    if m % 2:
        raise UnsupportedError("swap wirings need an even number of copies")
    if descriptor == "swap-pairs-offset-0":  # (1,2)(3,4)...
        return np.where(c % 2 == 0, c + 1, c - 1)
    if descriptor == "swap-pairs-offset-1":  # (2,3)(4,5)...(2n,1)
        return np.where(c % 2 == 0, (c - 1) % m, (c + 1) % m)
    raise ValidationError(f"unknown wiring {descriptor!r}")


def swaps_map(m: int, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Wiring from explicit 1-based swap pairs; unlisted copies are traced alone."""
    tau = np.arange(m)
    for a, b in pairs:
        tau[a - 1], tau[b - 1] = b - 1, a - 1
    return tau


@dataclass(frozen=True)
class ObservableSpec:
    """Per-party wiring of the moment observable on ``2n`` copies."""

    n: int
    types: tuple[PartyType, ...]
    descriptors: tuple[str, ...]

    @property
    def copies(self) -> int:
        return 2 * self.n

    def maps(self) -> list[np.ndarray]:
        return [copy_map(d, self.copies) for d in self.descriptors]


def build_observable(perm: IndexPermutation, n: int, structure: PartyStructure | None = None):
    if n < 1:
        raise ValidationError("n must be >= 1")
    types = classify_parties(perm, structure)
    return ObservableSpec(n, types, tuple(_DESCRIPTOR[t] for t in types))


def _group_by_wiring(ops, dims, maps):
    """Merge parties that share a wiring so the einsum stays small."""
    keys = [tuple(t.tolist()) for t in maps]
    order, groups = [], {}
    for p, key in enumerate(keys):
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(p)
    perm = [p for key in order for p in groups[key]]
    k = len(dims)
    new_dims = [int(np.prod([dims[p] for p in groups[key]])) for key in order]
    new_ops = []
    for X in ops:
        T = np.asarray(X).reshape(tuple(dims) + tuple(dims))
        T = T.transpose(perm + [k + p for p in perm])
        new_ops.append(T.reshape(tuple(new_dims) * 2))
    return new_ops, new_dims, [np.asarray(key) for key in order]


def contract_copies(ops: Sequence[np.ndarray], dims: Sequence[int], maps: Sequence[np.ndarray]):
    """``tr[(W_1 x ... x W_k)(X_1 x ... x X_m)]`` without forming the Kronecker product.

    Parameters
    ----------
    ops : sequence of (D, D) arrays
        One operator per copy.
    dims : local party dimensions.
    maps : per-party wiring arrays from :func:`copy_map` / :func:`swaps_map`.

    Returns
    -------
    complex
    """
    m = len(ops)
    if len(maps) != len(dims):
        raise ValidationError("need one wiring per party")
    tensors, gdims, gmaps = _group_by_wiring(ops, list(dims), list(maps))
    g = len(gdims)
    if g * m > 52:
        raise ResourceError(f"{g * m} contraction labels exceed einsum's limit of 52")
    label = lambda p, c: p * m + c  # noqa: E731
    args = []
    for c, T in enumerate(tensors):
        rows = [label(p, int(gmaps[p][c])) for p in range(g)]
        cols = [label(p, c) for p in range(g)]
        args += [T, rows + cols]
    path, info = np.einsum_path(*args, [], optimize="greedy")
    biggest = _largest_intermediate(info)
    if biggest > CONTRACT_LIMIT:
        raise ResourceError(
            f"contraction needs an intermediate of {biggest} elements, above the limit {CONTRACT_LIMIT}"
        )
    return complex(np.einsum(*args, [], optimize=path))


def _largest_intermediate(info: str) -> int:
    for line in info.splitlines():
        if "Largest intermediate" in line:
            return int(float(line.split(":")[1].split()[0]))
    return 0


def enumerate_copies(ops, dims, maps, limit: int = DENSE_ENUM_LIMIT) -> complex:
    """Same contraction by explicit enumeration of all basis strings.

    Cost is ``D**m``; used as an independent cross-check on small systems.
    """
    m = len(ops)
    dims = list(dims)
    D = int(np.prod(dims))
    total_strings = D**m
    if total_strings > limit:
        raise ResourceError(f"enumeration over {total_strings} basis strings exceeds the limit {limit}")
    k = len(dims)
    strides = np.array([int(np.prod(dims[p + 1:])) for p in range(k)], dtype=np.int64)
    maps = [np.asarray(t) for t in maps]
    acc = 0j
    chunk = 1 << 18
    for start in range(0, total_strings, chunk):
        x = np.arange(start, min(start + chunk, total_strings), dtype=np.int64)
        # copy-c column index = base-D digit c of x (copy 0 most significant)
        cols = np.empty((m, x.size), dtype=np.int64)
        rem = x.copy()
        for c in range(m - 1, -1, -1):
            cols[c] = rem % D
            rem //= D
        digits = (cols[:, None, :] // strides[None, :, None]) % np.asarray(dims)[None, :, None]
        prod = np.ones(x.size, dtype=complex)
        for c in range(m):
            row = np.zeros(x.size, dtype=np.int64)
            for p in range(k):
                row += digits[maps[p][c], p] * strides[p]
            prod *= np.asarray(ops[c])[row, cols[c]]
        acc += prod.sum()
    return complex(acc)


# --- direct route ---------------------------------------------------------


@dataclass(frozen=True)
class SingularSpectrum:
    values: np.ndarray
    L: int

    @property
    def trace_norm(self) -> float:
        return float(np.sum(self.values))


@dataclass(frozen=True)
class MomentVector:
    """``(M_2, M_4, ..., M_2n)`` for one (state, permutation) pair."""

    moments: tuple[float, ...]
    pi: IndexPermutation | None = None

    @property
    def n(self) -> int:
        return len(self.moments)

    def __getitem__(self, i):
        return self.moments[i]

    def __len__(self):
        return len(self.moments)


def singular_values(R) -> SingularSpectrum:
    A = R.entries if isinstance(R, PermutedMatrix) else np.asarray(R)
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix has non-finite entries")
    try:
        s = scipy.linalg.svd(A, compute_uv=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        try:
            s = scipy.linalg.svd(A, compute_uv=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            fro = float(np.linalg.norm(A))
            raise NumericalError(
                f"SVD did not converge for a {A.shape} matrix (Frobenius norm {fro:.3e})"
            ) from exc
    return SingularSpectrum(np.sort(s)[::-1], min(A.shape))


def moment_direct(R, n: int) -> float:
    """``tr[(R R^dag)^n]`` by repeated multiplication of the smaller Gram matrix."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    A = R.entries if isinstance(R, PermutedMatrix) else np.asarray(R)
    G = A @ A.conj().T if A.shape[0] <= A.shape[1] else A.conj().T @ A
    if n == 1:
        return float(np.real(np.trace(G)))
    half, odd = divmod(n, 2)
    P = np.linalg.matrix_power(G, half)
    if odd:
        return float(np.real(np.vdot(P.conj().T, P @ G)))
    return float(np.real(np.vdot(P.conj().T, P)))


def moment_spectrum(R, n: int) -> float:
    s = singular_values(R).values
    return float(np.sum(s ** (2 * n)))


def moments_direct(rho: DensityMatrix, perm: IndexPermutation, n_max: int) -> MomentVector:
    R = permute_indices(rho, perm)
    return MomentVector(tuple(moment_direct(R, n) for n in range(1, n_max + 1)), perm)


def moment_via_observable(
    rho: DensityMatrix, perm: IndexPermutation, n: int, method: str = "auto"
) -> float:
    """``M_2n`` as the expectation of the Hermitised permutation observable.

    Parameters
    ----------
    method : {"auto", "contract", "enumerate"}
        ``enumerate`` walks all ``D**(2n)`` basis strings (refused above
        4096**2); ``contract`` runs a grouped einsum.
    """
    spec = build_observable(perm, n, rho.structure)
    ops = [rho.data] * spec.copies
    maps = spec.maps()
    strings = rho.D ** spec.copies
    if method == "auto":
        method = "enumerate" if strings <= DENSE_AUTO_LIMIT else "contract"
    if method == "enumerate":
        val = enumerate_copies(ops, rho.dims, maps)
    elif method == "contract":
        val = contract_copies(ops, rho.dims, maps)
    else:
        raise ValidationError(f"unknown method {method!r}")
    # (O + O^dag)/2 has expectation Re tr[O rho^m]
    return float(val.real)


def power_trace(rho: DensityMatrix, perm: IndexPermutation, m: int, route: str = "direct") -> float:
    """``tr[R_pi^m]`` for square ``R_pi`` (odd orders of e.g. the partial transpose)."""
    if m < 1:
        raise ValidationError("order must be >= 1")
    R = permute_indices(rho, perm)
    if R.shape[0] != R.shape[1]:
        raise ValidationError(f"power traces need a square rearrangement, got {R.shape}")
    types = classify_parties(perm)
    if route == "direct":
        val = np.trace(np.linalg.matrix_power(R.entries, m))
    elif route == "observable":
        if any(t in (PartyType.R1, PartyType.R2) for t in types):
            raise UnsupportedError("cycle observables exist only when every party is T1 or T2")
        maps = [copy_map(_DESCRIPTOR[t], m) for t in types]
        ops = [rho.data] * m
        if rho.D**m <= DENSE_AUTO_LIMIT:
            val = enumerate_copies(ops, rho.dims, maps)
        else:
            val = contract_copies(ops, rho.dims, maps)
    else:
        raise ValidationError(f"unknown route {route!r}")
    return float(np.real(val))


# --- centred realignment ----------------------------------------------------

def _bipartite_check(rho: DensityMatrix):
    if rho.structure.k != 2:
        raise ValidationError(f"expected a bipartite state, got {rho.structure.k} parties")


def centered_operator(rho: DensityMatrix) -> np.ndarray:
    """``rho_AB - rho_A x rho_B`` (Hermitian, trace zero)."""
    _bipartite_check(rho)
    rA = partial_trace_array(rho.data, rho.dims, [0])
    rB = partial_trace_array(rho.data, rho.dims, [1])
    return rho.data - np.kron(rA, rB)


def centered_realigned_moments(rho: DensityMatrix, n_max: int) -> MomentVector:
    """Moments of ``R_(2,3)(rho_AB - rho_A x rho_B)``."""
    X = centered_operator(rho)
    perm = IndexPermutation.realignment(2)
    R = rearrange(X, rho.dims, perm)
    return MomentVector(tuple(moment_direct(R, n) for n in range(1, n_max + 1)), perm)


def centered_cross_terms(rho: DensityMatrix) -> tuple[float, float]:
    """Exact ``(M_4,1, M_4,2)`` cross terms of the centred fourth moment.

    ``M_4,1 = tr[(O_A x O_B)(rho^3 x rho_A x rho_B)]`` and
    ``M_4,2 = tr[(S_A^(1,2) S_B^(2,3) S_B^(4,1)) rho^2 x rho_B^2]``, both
    evaluated by copy contraction.
    """
    _bipartite_check(rho)
    rA = partial_trace_array(rho.data, rho.dims, [0])
    rB = partial_trace_array(rho.data, rho.dims, [1])
    tauA = copy_map("swap-pairs-offset-0", 4)
    tauB = copy_map("swap-pairs-offset-1", 4)
    m41 = contract_copies([rho.data] * 3 + [np.kron(rA, rB)], rho.dims, [tauA, tauB])
    tauA2 = swaps_map(4, [(1, 2)])
    m42 = contract_copies([rho.data] * 4, rho.dims, [tauA2, tauB])
    return float(m41.real), float(m42.real)
