"""Benchmark states and seeded random-state generators."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import ValidationError
from .tensor_core import DensityMatrix, PartyStructure

KINDS = (
    "ghz",
    "w",
    "bell",
    "noisy_w",
    "upb_3x3",
    "upb_3qubit",
    "product",
    "max_mixed",
    "haar_pure",
    "random_mixed",
    "random_separable",
)
_ALIASES = {"upb3x3": "upb_3x3", "upb3q": "upb_3qubit", "upb_3q": "upb_3qubit", "upb3qubit": "upb_3qubit"}


@dataclass(frozen=True)
class StateSpec:
    """Kind plus parameters; resolves deterministically given ``seed``."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValidationError(f"unknown state kind {self.kind!r}; choose from {', '.join(KINDS)}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", dict(self.params))

    @classmethod
    def parse(cls, text: str) -> "StateSpec":
        """Parse CLI shorthand such as ``ghz:4`` or ``noisy_w:4:0.6:seed=7``."""
        parts = [p for p in text.strip().split(":") if p != ""]
        if not parts:
            raise ValidationError("empty state spec")
        kind = _ALIASES.get(parts[0], parts[0])
        positional, params = [], {}
        for tok in parts[1:]:
            if "=" in tok:
                key, val = tok.split("=", 1)
                params[key] = _num(val)
            else:
                positional.append(_num(tok))
        names = _POSITIONAL.get(kind, ())
        if len(positional) > len(names):
            raise ValidationError(f"too many positional parameters for {kind}: {positional}")
        params.update(dict(zip(names, positional)))
        return cls(kind, params)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(sorted(self.params.items()))}

    def __str__(self) -> str:
        if not self.params:
            return self.kind
        return self.kind + ":" + ":".join(f"{k}={v}" for k, v in sorted(self.params.items()))


_POSITIONAL = {
    "ghz": ("N",),
    "w": ("N",),
    "noisy_w": ("N", "p"),
    "product": ("N",),
    "max_mixed": ("N",),
    "haar_pure": ("N",),
    "random_mixed": ("N", "rank"),
    "random_separable": ("k", "d", "terms"),
}


def _num(tok: str):
    for cast in (int, float):
        try:
            return cast(tok)
        except ValueError:
            pass
    return tok


# --- basic vectors ----------------------------------------------------------


def ket(bits: str) -> np.ndarray:
    """Computational basis ket for a qubit bit string, e.g. ``ket("010")``."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1.0
    return v


def kron_all(vecs) -> np.ndarray:
    return reduce(np.kron, vecs)


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def ghz_vector(N: int) -> np.ndarray:
    v = np.zeros(2**N, dtype=complex)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return v


def w_vector(N: int) -> np.ndarray:
    v = np.zeros(2**N, dtype=complex)
    for q in range(N):
        v[1 << (N - 1 - q)] = 1.0
    return v / np.sqrt(N)


def upb_3x3_vectors() -> list[np.ndarray]:
    """The five product vectors of the 3x3 "Tiles" unextendible product basis."""
    e = np.eye(3)
    s2 = np.sqrt(2)
    f = (e[0] + e[1] + e[2]) / np.sqrt(3)
    return [
        np.kron(e[0], (e[0] - e[1]) / s2),
        np.kron(e[2], (e[1] - e[2]) / s2),
        np.kron((e[0] - e[1]) / s2, e[2]),
        np.kron((e[1] - e[2]) / s2, e[0]),
        np.kron(f, f),
    ]


def upb_3qubit_vectors() -> list[np.ndarray]:
    """``|0,1,+>, |1,+,0>, |+,0,1>, |-,-,->``."""
    k0, k1 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    kp, km = (k0 + k1) / np.sqrt(2), (k0 - k1) / np.sqrt(2)
    return [kron_all(v) for v in ((k0, k1, kp), (k1, kp, k0), (kp, k0, k1), (km, km, km))]


# --- random objects -----------------------------------------------------------


def haar_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure state from a normalised complex Gaussian vector."""
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary: QR of a Ginibre matrix with the phases of R fixed."""
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    ph = np.diagonal(R) / np.abs(np.diagonal(R))
    return Q * ph[None, :]


def _finish(rho: np.ndarray, dims) -> DensityMatrix:
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho / np.trace(rho).real, dims)


def random_separable(k: int, dims, terms: int, seed) -> DensityMatrix:
    """Convex mixture of ``terms`` Haar-random product pure states.

    Parameters
    ----------
    k : party count.
    dims : int or sequence of local dimensions.
    terms : mixture size (>= 1).
    seed : anything accepted by ``numpy.random.default_rng``.
    """
    if terms < 1:
        raise ValidationError("terms must be >= 1")
    dims = [int(dims)] * k if np.isscalar(dims) else [int(d) for d in dims]
    if len(dims) != k:
        raise ValidationError(f"need {k} local dims, got {dims}")
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(terms))
    D = int(np.prod(dims))
    rho = np.zeros((D, D), dtype=complex)
    for w in weights:
        psi = kron_all([haar_vector(d, rng) for d in dims])
        rho += w * projector(psi)
    return _finish(rho, dims)


def random_mixed(dims, rank: int | None, seed) -> DensityMatrix:
    """Induced-measure mixed state ``G G^dag / tr`` with ``G`` of shape ``D x rank``."""
    dims = [int(d) for d in dims]
    D = int(np.prod(dims))
    rank = D if rank is None else int(rank)
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((D, rank)) + 1j * rng.standard_normal((D, rank))
    return _finish(G @ G.conj().T, dims)


# --- factory -----------------------------------------------------------------


def make_state(spec) -> DensityMatrix:
    """Build a benchmark state from a :class:`StateSpec` or shorthand string.

    Examples
    --------
    >>> make_state("ghz:3").dims
    (2, 2, 2)
    >>> round(make_state("bell").purity(), 12)
    1.0
    """
    if isinstance(spec, str):
        spec = StateSpec.parse(spec)
    p = spec.params
    kind = spec.kind
    try:
        if kind == "bell":
            return _finish(projector(ghz_vector(2)), [2, 2])
        if kind == "ghz":
            N = _nq(p, 3)
            return _finish(projector(ghz_vector(N)), [2] * N)
        if kind == "w":
            N = _nq(p, 3)
            return _finish(projector(w_vector(N)), [2] * N)
        if kind == "noisy_w":
            N = _nq(p, 4)
            prob = float(p.get("p", 1.0))
            if not 0.0 <= prob <= 1.0:
                raise ValidationError(f"noise parameter p must lie in [0, 1], got {prob}")
            D = 2**N
            rho = prob * projector(w_vector(N)) + (1 - prob) * np.eye(D) / D
            return _finish(rho, [2] * N)
        if kind == "upb_3x3":
            rho = (np.eye(9) - sum(projector(u) for u in upb_3x3_vectors())) / 4
            return _finish(rho, [3, 3])
        if kind == "upb_3qubit":
            rho = (np.eye(8) - sum(projector(u) for u in upb_3qubit_vectors())) / 4
            return _finish(rho, [2, 2, 2])
        if kind == "product":
            N = _nq(p, 2)
            d = int(p.get("d", 2))
            if "seed" in p:
                rng = np.random.default_rng(p["seed"])
                psi = kron_all([haar_vector(d, rng) for _ in range(N)])
            else:
                psi = np.zeros(d**N, dtype=complex)
                psi[0] = 1.0
            return _finish(projector(psi), [d] * N)
        if kind == "max_mixed":
            N = _nq(p, 2)
            d = int(p.get("d", 2))
            return _finish(np.eye(d**N, dtype=complex), [d] * N)
        if kind == "haar_pure":
            N = _nq(p, 2)
            d = int(p.get("d", 2))
            rng = np.random.default_rng(p.get("seed", 0))
            return _finish(projector(haar_vector(d**N, rng)), [d] * N)
        if kind == "random_mixed":
            N = _nq(p, 2)
            d = int(p.get("d", 2))
            return random_mixed([d] * N, p.get("rank"), p.get("seed", 0))
        if kind == "random_separable":
            k = int(p.get("k", 2))
            return random_separable(k, int(p.get("d", 2)), int(p.get("terms", 4)), p.get("seed", 0))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad parameters for {kind}: {exc}") from None
    raise ValidationError(f"unhandled state kind {kind}")  # pragma: no cover


def _nq(p: dict, default: int) -> int:
    N = int(p.get("N", default))
    if N < 1 or N > 12:
        raise ValidationError(f"qubit count must be in 1..12, got {N}")
    return N


def structure_of(spec) -> PartyStructure:
    return make_state(spec).structure
