"""Moment-based entanglement criteria with a common ``indicator > 0`` verdict.

Stable identifiers (also used by the command line): ``e4_ccnr``,
``e4_star``, ``p2``, ``p3``, ``e2n_multi``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bound_solver import e2n_bound, e4_analytic
from .errors import ValidationError
from .moments import (
    centered_realigned_moments,
    moments_direct,
    power_trace,
    singular_values,
)
from .tensor_core import DensityMatrix, IndexPermutation, partial_trace_array, permute_indices

CRITERIA = ("e4_ccnr", "e4_star", "p2", "p3", "e2n_multi")
PURE_EDGE = 1e-14
_FLOOR_SNAP = 1e-12


@dataclass(frozen=True)
class CriterionResult:
    """Verdict of one criterion.

    ``indicator > 0`` (strictly) means entanglement is detected. ``raw``
    holds every intermediate needed to recompute ``indicator``.
    """

    name: str
    indicator: float
    detected: bool = field(init=False)
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "indicator", float(self.indicator))
        object.__setattr__(self, "detected", bool(self.indicator > 0.0))

    def to_dict(self) -> dict:
        return {"name": self.name, "indicator": self.indicator, "detected": self.detected, "raw": self.raw}


def _bipartite(rho: DensityMatrix):
    if not isinstance(rho, DensityMatrix):
        raise ValidationError("criteria need a DensityMatrix")
    if rho.structure.k != 2:
        raise ValidationError(f"criterion needs a bipartite state, got {rho.structure.k} parties")


def _marginal_purities(rho: DensityMatrix) -> tuple[float, float]:
    rA = partial_trace_array(rho.data, rho.dims, [0])
    rB = partial_trace_array(rho.data, rho.dims, [1])
    return float(np.real(np.vdot(rA, rA))), float(np.real(np.vdot(rB, rB)))


def _realign_L(dims) -> int:
    dA, dB = dims
    return min(dA * dA, dB * dB)


def criterion_e4_ccnr(rho: DensityMatrix) -> CriterionResult:
    """``1 - 1/E_4`` of the realigned state.

    Examples
    --------
    >>> from permom.states import make_state
    >>> round(criterion_e4_ccnr(make_state("bell")).indicator, 12)
    0.5
    """
    _bipartite(rho)
    perm = IndexPermutation.realignment(2)
    M = moments_direct(rho, perm, 2).moments
    L = _realign_L(rho.dims)
    E4 = e4_analytic(M[0], M[1], L).value
    return CriterionResult("e4_ccnr", 1.0 - 1.0 / E4, {"M2": M[0], "M4": M[1], "L": L, "E4": E4})


def ccnr_trace_norm(rho: DensityMatrix) -> float:
    """Full trace norm of the realigned state (the original CCNR quantity, > 1 detects)."""
    _bipartite(rho)
    return singular_values(permute_indices(rho, IndexPermutation.realignment(2))).trace_norm


def criterion_e4_star(rho: DensityMatrix) -> CriterionResult:
    """Centred realignment bound against the marginal-purity threshold.

    ``E4* = E_4(R(rho - rho_A x rho_B))`` is compared with
    ``sqrt((1 - tr rho_A^2)(1 - tr rho_B^2))``. Pure marginals make the
    ratio 0/0 or x/0; those edges give 0 (nothing to certify) or +1.
    """
    _bipartite(rho)
    pA, pB = _marginal_purities(rho)
    rhs = float(np.sqrt(max((1 - pA) * (1 - pB), 0.0)))
    M = centered_realigned_moments(rho, 2).moments
    L = _realign_L(rho.dims)
    E4s = 0.0 if M[0] < PURE_EDGE else e4_analytic(M[0], M[1], L).value
    raw = {"M2": M[0], "M4": M[1], "L": L, "E4_star": E4s, "purity_A": pA, "purity_B": pB, "rhs": rhs}
    if E4s < PURE_EDGE:
        ind = 0.0
    elif rhs * rhs < PURE_EDGE:
        ind = 1.0
    else:
        ind = 1.0 - rhs / E4s
    return CriterionResult("e4_star", ind, raw)


def criterion_p2(rho: DensityMatrix) -> CriterionResult:
    """Purity (entropy) criterion ``1 - max(tr rho_A^2, tr rho_B^2) / tr rho^2``."""
    _bipartite(rho)
    pA, pB = _marginal_purities(rho)
    p = rho.purity()
    return CriterionResult("p2", 1.0 - max(pA, pB) / p, {"purity": p, "purity_A": pA, "purity_B": pB})


def p3_threshold(p2: float) -> tuple[float, int, float]:
    """Largest separable ``tr[(rho^T_A)^3]`` given ``tr[(rho^T_A)^2] = p2``.

    Returns ``(P3, beta, x)`` with ``beta = floor(1/p2)``.
    """
    inv = 1.0 / p2
    beta = int(np.floor(inv))
    if abs(inv - round(inv)) <= _FLOOR_SNAP * inv:
        beta = int(round(inv))
    inner = max(beta * (p2 * (beta + 1) - 1), 0.0)
    x = (beta + np.sqrt(inner)) / (beta * (beta + 1))
    return float(beta * x**3 + (1 - beta * x) ** 3), beta, float(x)


def criterion_p3(rho: DensityMatrix) -> CriterionResult:
    """Third partial-transpose moment against its separable maximum.

    Examples
    --------
    >>> from permom.states import make_state
    >>> round(criterion_p3(make_state("bell")).indicator, 12)
    0.75
    """
    _bipartite(rho)
    pt = IndexPermutation.partial_transpose(2, 0)
    p2 = power_trace(rho, pt, 2)
    p3 = power_trace(rho, pt, 3)
    P3, beta, x = p3_threshold(p2)
    return CriterionResult("p3", 1.0 - p3 / P3, {"pt_p2": p2, "pt_p3": p3, "P3": P3, "beta": beta, "x": x})


def criterion_multipartite_e2n(rho: DensityMatrix, perm: IndexPermutation, n_max: int, **solver) -> CriterionResult:
    """``E_2n(R_pi(rho)) - 1``; positive values rule out full separability.

    ``L`` always comes from the shape of ``R_pi``.
    """
    if rho.structure.k < 2:
        raise ValidationError("need at least two parties")
    if perm.k != rho.structure.k:
        raise ValidationError(f"permutation acts on {perm.k} parties, state has {rho.structure.k}")
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    R = permute_indices(rho, perm)
    M = moments_direct(rho, perm, n_max).moments
    nb = e2n_bound(M, R.L, **solver)
    raw = {
        "pi": str(perm),
        "moments": list(M),
        "L": R.L,
        "E": nb.value,
        "lambdas": list(nb.lambdas),
        "degeneracies": list(nb.degeneracies),
        "residual": nb.residual,
    }
    return CriterionResult("e2n_multi", nb.value - 1.0, raw)


_BIPARTITE = {
    "e4_ccnr": criterion_e4_ccnr,
    "e4_star": criterion_e4_star,
    "p2": criterion_p2,
    "p3": criterion_p3,
}


def evaluate(name: str, rho: DensityMatrix, perm: IndexPermutation | None = None, n_max: int = 2, **solver):
    """Dispatch by stable identifier."""
    if name in _BIPARTITE:
        return _BIPARTITE[name](rho)
    if name == "e2n_multi":
        if perm is None:
            raise ValidationError("e2n_multi needs a permutation")
        return criterion_multipartite_e2n(rho, perm, n_max, **solver)
    raise ValidationError(f"unknown criterion {name!r}; choose from {', '.join(CRITERIA)}")


def bipartite_suite(rho: DensityMatrix) -> dict[str, CriterionResult]:
    """The four bipartite indicators used for dynamics scans."""
    return {name: fn(rho) for name, fn in _BIPARTITE.items()}
