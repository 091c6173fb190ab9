"""Dense multipartite density matrices and index-slot rearrangement.

A k-party operator is viewed as a tensor with 2k index slots. Slot
``2r-1`` is the row index of party ``r`` and slot ``2r`` its column
index (1-based, as in the permutation strings the CLI accepts).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ResourceError, StructuralError, ValidationError

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = -1e-9
MAX_DIM = 4096


@dataclass(frozen=True)
class PartyStructure:
    """Local dimensions of each party, in composite-index order."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 1:
            raise ValidationError("at least one party is required")
        if any(d < 2 for d in dims):
            raise ValidationError(f"every local dimension must be >= 2, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def k(self) -> int:
        return len(self.dims)

    @property
    def D(self) -> int:
        return int(np.prod(self.dims))

    def sub(self, parties: Iterable[int]) -> "PartyStructure":
        return PartyStructure(tuple(self.dims[p] for p in parties))

    def is_qubits(self) -> bool:
        return all(d == 2 for d in self.dims)


def _as_structure(dims) -> PartyStructure:
    return dims if isinstance(dims, PartyStructure) else PartyStructure(tuple(dims))


class DensityMatrix:
    """Validated density matrix with an attached party structure.

    Parameters
    ----------
    data : array_like
        ``D x D`` complex matrix in row-major composite-basis order.
    dims : sequence of int or PartyStructure
        Local dimensions; their product must equal ``D``.

    Raises
    ------
    ValidationError
        If the matrix is not Hermitian, not unit trace, or has an
        eigenvalue below ``-1e-9``. Inputs are rejected, never repaired.
    """

    __slots__ = ("_data", "structure")

    def __init__(self, data, dims):
        structure = _as_structure(dims)
        arr = np.array(data, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"density matrix must be square, got shape {arr.shape}")
        if arr.shape[0] != structure.D:
            raise ValidationError(
                f"matrix dimension {arr.shape[0]} does not match product of dims {structure.dims}"
            )
        if structure.D > MAX_DIM:
            raise ResourceError(f"dimension {structure.D} exceeds the dense limit {MAX_DIM}")
        herm = float(np.max(np.abs(arr - arr.conj().T))) if arr.size else 0.0
        if herm > HERMITIAN_TOL:
            raise ValidationError(f"not Hermitian: max|A - A^dag| = {herm:.3e}")
        tr = np.trace(arr)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"trace must be 1, got {tr.real:.12g}{tr.imag:+.3g}j")
        lam_min = float(np.linalg.eigvalsh(arr)[0])
        if lam_min < PSD_TOL:
            raise ValidationError(f"not positive semidefinite: min eigenvalue {lam_min:.3e}")
        arr.setflags(write=False)
        self._data = arr
        self.structure = structure

    @classmethod
    def _trusted(cls, data: np.ndarray, structure: PartyStructure) -> "DensityMatrix":
        # results of structure-preserving maps on valid inputs
        obj = cls.__new__(cls)
        arr = np.ascontiguousarray(data, dtype=complex)
        arr.setflags(write=False)
        obj._data = arr
        obj.structure = structure
        return obj

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dims(self) -> tuple[int, ...]:
        return self.structure.dims

    @property
    def D(self) -> int:
        return self.structure.D

    def purity(self) -> float:
        return float(np.real(np.vdot(self._data, self._data)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._data, dtype=dtype)

    def __repr__(self) -> str:
        return f"DensityMatrix(dims={self.dims})"

    # serialisation -----------------------------------------------------
    def to_json(self) -> str:
        flat = self._data.reshape(-1)
        entries = [[float(z.real), float(z.imag)] for z in flat]
        return json.dumps({"dims": list(self.dims), "entries": entries})

    @classmethod
    def from_json(cls, text: str) -> "DensityMatrix":
        obj = json.loads(text)
        try:
            dims = obj["dims"]
            entries = np.asarray(obj["entries"], dtype=float)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"state JSON needs 'dims' and 'entries': {exc}") from None
        D = int(np.prod(dims))
        if entries.shape != (D * D, 2):
            raise ValidationError(f"expected {D * D} [re, im] pairs, got shape {entries.shape}")
        data = (entries[:, 0] + 1j * entries[:, 1]).reshape(D, D)
        return cls(data, dims)


def load_state(path: str) -> DensityMatrix:
    with open(path) as fh:
        return DensityMatrix.from_json(fh.read())


def save_state(rho: DensityMatrix, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(rho.to_json())


@dataclass(frozen=True)
class IndexPermutation:
    """Bijection on the 2k index slots, stored as 1-based images.

    ``images[j-1]`` is the output slot that receives input slot ``j``.
    """

    images: tuple[int, ...]

    def __post_init__(self):
        imgs = tuple(int(x) for x in self.images)
        n = len(imgs)
        if n == 0 or n % 2:
            raise ValidationError(f"permutation must act on an even number of slots, got {n}")
        if sorted(imgs) != list(range(1, n + 1)):
            raise ValidationError(f"not a bijection on 1..{n}: {imgs}")
        object.__setattr__(self, "images", imgs)

    @property
    def k(self) -> int:
        return len(self.images) // 2

    @classmethod
    def identity(cls, k: int) -> "IndexPermutation":
        return cls(tuple(range(1, 2 * k + 1)))

    @classmethod
    def from_cycles(cls, k: int, *cycles: Sequence[int]) -> "IndexPermutation":
        """Build from cycle notation, e.g. ``from_cycles(2, (2, 3))``."""
        img = list(range(1, 2 * k + 1))
        for cyc in cycles:
            cyc = [int(c) for c in cyc]
            if any(c < 1 or c > 2 * k for c in cyc):
                raise ValidationError(f"cycle {cyc} leaves slot range 1..{2 * k}")
            for a, b in zip(cyc, cyc[1:] + cyc[:1]):
                img[a - 1] = b
        return cls(tuple(img))

    @classmethod
    def parse(cls, text: str) -> "IndexPermutation":
        """Parse ``"1,3,2,4,5,6"`` (images of slots 1..2k)."""
        try:
            imgs = [int(t) for t in text.replace(" ", "").split(",") if t]
        except ValueError:
            raise ValidationError(f"malformed permutation string {text!r}") from None
        return cls(tuple(imgs))

    @classmethod
    def partial_transpose(cls, k: int, party: int = 0) -> "IndexPermutation":
        return cls.from_cycles(k, (2 * party + 1, 2 * party + 2))

    @classmethod
    def realignment(cls, k: int = 2, a: int = 0, b: int = 1) -> "IndexPermutation":
        """Swap the column slot of party ``a`` with the row slot of party ``b``."""
        return cls.from_cycles(k, (2 * a + 2, 2 * b + 1))

    def inverse(self) -> "IndexPermutation":
        inv = [0] * len(self.images)
        for j, m in enumerate(self.images, start=1):
            inv[m - 1] = j
        return IndexPermutation(tuple(inv))

    def source_of(self) -> np.ndarray:
        """0-based input slot feeding each output slot."""
        return np.argsort(np.asarray(self.images) - 1)

    def __str__(self) -> str:
        return ",".join(map(str, self.images))


@dataclass(frozen=True)
class PermutedMatrix:
    """Rearranged operator ``R_pi``; may be rectangular."""

    entries: np.ndarray
    row_dims: tuple[int, ...]
    col_dims: tuple[int, ...]
    perm: IndexPermutation
    source: PartyStructure

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def L(self) -> int:
        return min(self.entries.shape)


def _slot_tensor(matrix: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    k = len(dims)
    T = np.asarray(matrix).reshape(tuple(dims) + tuple(dims))
    return T.transpose([ax for r in range(k) for ax in (r, k + r)])


def _from_slot_tensor(S: np.ndarray, k: int) -> np.ndarray:
    T = S.transpose(list(range(0, 2 * k, 2)) + list(range(1, 2 * k, 2)))
    rows = int(np.prod(T.shape[:k]))
    return T.reshape(rows, -1)


def rearrange(matrix, dims, perm: IndexPermutation) -> PermutedMatrix:
    """Index-permute an arbitrary operator (state or not).

    Parameters
    ----------
    matrix : array_like
        ``D x D`` operator.
    dims : sequence of int or PartyStructure
    perm : IndexPermutation

    Returns
    -------
    PermutedMatrix
        Rows are indexed by the odd output slots, columns by the even
        ones, each in ascending slot order.
    """
    structure = _as_structure(dims)
    if perm.k != structure.k:
        raise StructuralError(
            f"permutation acts on {perm.k} parties but the operator has {structure.k}"
        )
    A = np.asarray(matrix)
    if A.shape != (structure.D, structure.D):
        raise StructuralError(f"operator shape {A.shape} does not match dims {structure.dims}")
    S = _slot_tensor(A, structure.dims)
    O = S.transpose(perm.source_of())
    k = structure.k
    row_dims = tuple(O.shape[0::2])
    col_dims = tuple(O.shape[1::2])
    return PermutedMatrix(_from_slot_tensor(O, k), row_dims, col_dims, perm, structure)


def permute_indices(rho, perm: IndexPermutation) -> PermutedMatrix:
    """``R_pi(rho)``: element ``(s1 s2, ...)`` equals ``rho`` at ``(s_pi(1) s_pi(2), ...)``."""
    if not isinstance(rho, DensityMatrix):
        raise ValidationError("permute_indices expects a DensityMatrix; use rearrange for operators")
    return rearrange(rho.data, rho.structure, perm)


def restore(R: PermutedMatrix) -> np.ndarray:
    """Undo a rearrangement, returning the original ``D x D`` operator."""
    k = R.source.k
    slot_shape = [None] * (2 * k)
    slot_shape[0::2] = R.row_dims
    slot_shape[1::2] = R.col_dims
    T = R.entries.reshape(tuple(R.row_dims) + tuple(R.col_dims))
    O = T.transpose([ax for r in range(k) for ax in (r, k + r)])
    S = O.transpose(np.asarray(R.perm.images) - 1)
    return _from_slot_tensor(S, k)


def partial_trace_array(matrix: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Partial trace of a raw operator, keeping parties ``keep`` (0-based, in order)."""
    dims = tuple(dims)
    k = len(dims)
    keep = sorted(set(int(p) for p in keep))
    if not keep:
        raise ValidationError("keep set must be non-empty")
    if keep[0] < 0 or keep[-1] >= k:
        raise ValidationError(f"party index out of range 0..{k - 1}: {keep}")
    T = np.asarray(matrix).reshape(dims + dims)
    rows = list(range(k))
    cols = [k + p if p in keep else p for p in range(k)]
    out = [p for p in keep] + [k + p for p in keep]
    res = np.einsum(T, rows + cols, out)
    dk = int(np.prod([dims[p] for p in keep]))
    return res.reshape(dk, dk)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on the parties in ``keep`` (0-based indices).

    Examples
    --------
    >>> from permom.states import make_state
    >>> partial_trace(make_state("bell"), [0]).data.real.round(3)
    array([[0.5, 0. ],
           [0. , 0.5]])
    """
    keep = sorted(set(int(p) for p in keep))
    red = partial_trace_array(rho.data, rho.dims, keep)
    return DensityMatrix._trusted(red, rho.structure.sub(keep))


def tensor_product(*rhos: DensityMatrix) -> DensityMatrix:
    if not rhos:
        raise ValidationError("tensor_product needs at least one state")
    data = rhos[0].data
    dims = list(rhos[0].dims)
    for r in rhos[1:]:
        data = np.kron(data, r.data)
        dims += list(r.dims)
    if int(np.prod(dims)) > MAX_DIM:
        raise ResourceError(f"product dimension exceeds the dense limit {MAX_DIM}")
    return DensityMatrix._trusted(data, PartyStructure(tuple(dims)))


def group_parties(rho: DensityMatrix, groups: Sequence[Sequence[int]]) -> DensityMatrix:
    """Merge parties into coarser ones, e.g. ``[[0], [1, 2]]`` for a 1|23 split.

    Every party must appear exactly once; parties are reordered into the
    group order before merging.
    """
    flat = [int(p) for g in groups for p in g]
    if sorted(flat) != list(range(rho.structure.k)):
        raise ValidationError(f"groups {groups} must partition parties 0..{rho.structure.k - 1}")
    k = rho.structure.k
    T = rho.data.reshape(rho.dims + rho.dims)
    T = T.transpose(flat + [k + p for p in flat])
    new_dims = tuple(int(np.prod([rho.dims[p] for p in g])) for g in groups)
    D = rho.D
    return DensityMatrix._trusted(T.reshape(D, D), PartyStructure(new_dims))
