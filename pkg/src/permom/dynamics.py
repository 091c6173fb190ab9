"""Exact-diagonalization harness for spin chains.

Three Hamiltonians are available: the long-range XY hopping model, a
disordered long-range Ising chain and the periodic Ising chain with mixed
fields. Qubit indices start at 0 and qubit 0 is the most significant bit
of the computational-basis index. Evolution uses ``hbar = 1``, so with
couplings in s^-1 the times are in seconds.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .bound_solver import e4_analytic
from .criteria import bipartite_suite
from .errors import NumericalError, ResourceError, ValidationError
from .estimation import derive_seed
from .states import ghz_vector, haar_vector
from .tensor_core import DensityMatrix

MAX_QUBITS = 12
KINDS = ("xy", "ising_mbl", "qimf")
SCAN_CRITERIA = ("e4_ccnr", "e4_star", "p2", "p3")

_DEFAULTS = {
    "xy": {"J0": 420.0, "alpha": 1.24, "Bz": 400.0},
    "ising_mbl": {"J0": 1.0, "alpha": 1.13, "Bz": None, "W": 0.0, "disorder_seed": 0},
    "qimf": {"g": 0.9045, "h": 0.8090, "J": 1.0},
}
_DEFAULT_BOUNDARY = {"xy": "open", "ising_mbl": "open", "qimf": "periodic"}


@dataclass(frozen=True)
class HamiltonianSpec:
    """Which chain to build.

    ``params`` overrides the defaults of ``kind``; for ``ising_mbl`` an
    unset ``Bz`` means ``4 J0``.
    """

    kind: str
    N: int
    params: dict = field(default_factory=dict)
    boundary: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown Hamiltonian {self.kind!r}; choose from {', '.join(KINDS)}")
        if not 1 <= int(self.N):
            raise ValidationError("N must be positive")
        if int(self.N) > MAX_QUBITS:
            raise ResourceError(f"N = {self.N} exceeds the dense limit of {MAX_QUBITS} qubits")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise ValidationError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        b = self.boundary or _DEFAULT_BOUNDARY[self.kind]
        if b not in ("open", "periodic"):
            raise ValidationError(f"boundary must be 'open' or 'periodic', got {b!r}")
        object.__setattr__(self, "boundary", b)
        object.__setattr__(self, "N", int(self.N))

    @property
    def resolved(self) -> dict:
        p = dict(_DEFAULTS[self.kind])
        p.update(self.params)
        if self.kind == "ising_mbl" and p["Bz"] is None:
            p["Bz"] = 4.0 * p["J0"]
        return p

    @classmethod
    def from_dict(cls, d: dict) -> "HamiltonianSpec":
        d = dict(d)
        try:
            kind, N = d.pop("kind"), d.pop("N")
        except KeyError as exc:
            raise ValidationError(f"Hamiltonian spec missing {exc.args[0]!r}") from None
        boundary = d.pop("boundary", None)
        params = d.pop("params", {})
        params.update(d)
        return cls(kind, N, params, boundary)


def disorder(W: float, N: int, seed: int) -> np.ndarray:
    """On-site fields ``D_i ~ Uniform[-W, W]``."""
    return np.random.default_rng(int(seed)).uniform(-W, W, size=N)


def _bits(N: int) -> np.ndarray:
    s = np.arange(2**N)
    return np.array([(s >> (N - 1 - i)) & 1 for i in range(N)])


def _pairs(N: int, boundary: str, long_range: bool):
    if long_range:
        for i in range(N):
            for j in range(i + 1, N):
                dist = j - i
                if boundary == "periodic":
                    dist = min(dist, N - dist)
                yield i, j, dist
    else:
        for i in range(N - 1):
            yield i, i + 1, 1
        if boundary == "periodic" and N > 2:
            yield N - 1, 0, 1


def build_hamiltonian(spec: HamiltonianSpec) -> np.ndarray:
    """Dense Hermitian ``2^N x 2^N`` matrix.

    xy: ``sum_{i<j} J_ij (s+_i s-_j + s-_i s+_j) + Bz sum_i Z_i``;
    ising_mbl: ``sum_{i<j} J_ij X_i X_j + Bz/2 sum_i Z_i + sum_i D_i Z_i``;
    qimf: ``sum_i (g Y_i + h X_i + J X_i X_{i+1})``; with ``J_ij = J0 / |i-j|^alpha``.
    """
    N, p = spec.N, spec.resolved
    D = 2**N
    bits = _bits(N)
    z = 1 - 2 * bits  # Z eigenvalue per qubit and basis state
    s = np.arange(D)
    H = np.zeros((D, D), dtype=complex)
    mask = [1 << (N - 1 - i) for i in range(N)]

    if spec.kind == "xy":
        for i, j, dist in _pairs(N, spec.boundary, True):
            J = p["J0"] / dist ** p["alpha"]
            hop = bits[i] != bits[j]  # flip-flop only connects |..0..1..> and |..1..0..>
            src = s[hop]
            H[src ^ mask[i] ^ mask[j], src] += J
        H[s, s] += p["Bz"] * z.sum(axis=0)
    elif spec.kind == "ising_mbl":
        for i, j, dist in _pairs(N, spec.boundary, True):
            H[s ^ mask[i] ^ mask[j], s] += p["J0"] / dist ** p["alpha"]
        Di = disorder(p["W"], N, p["disorder_seed"])
        H[s, s] += (p["Bz"] / 2 + Di) @ z
    else:
        for i in range(N):
            # Y|0> = i|1>, Y|1> = -i|0>
            H[s ^ mask[i], s] += p["g"] * 1j * z[i] + p["h"]
        for i, j, _ in _pairs(N, spec.boundary, False):
            H[s ^ mask[i] ^ mask[j], s] += p["J"]
    return H


@dataclass(frozen=True)
class Eigensystem:
    energies: np.ndarray
    vectors: np.ndarray

    @classmethod
    def of(cls, H: np.ndarray) -> "Eigensystem":
        try:
            E, V = scipy.linalg.eigh(H)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"eigendecomposition failed: {exc}") from exc
        return cls(E, V)

    def middle_index(self) -> int:
        """Eigenstate whose energy is closest to ``(E_min + E_max)/2``; ties go to the lower index."""
        mid = 0.5 * (self.energies[0] + self.energies[-1])
        return int(np.argmin(np.abs(self.energies - mid)))


def evolve(state, H, times) -> np.ndarray:
    """``exp(-iHt)`` applied to a state vector, or by conjugation to a density matrix.

    Parameters
    ----------
    state : ndarray or DensityMatrix
        1-D vector (returns ``(T, D)``) or ``D x D`` matrix (returns ``(T, D, D)``).
    H : ndarray or Eigensystem
        Diagonalised once and reused for every time.
    """
    eig = H if isinstance(H, Eigensystem) else Eigensystem.of(np.asarray(H))
    E, V = eig.energies, eig.vectors
    t = np.atleast_1d(np.asarray(times, dtype=float))
    x = state.data if isinstance(state, DensityMatrix) else np.asarray(state, dtype=complex)
    if x.shape[0] != V.shape[0]:
        raise ValidationError(f"state dimension {x.shape[0]} does not match H ({V.shape[0]})")
    phase = np.exp(-1j * np.outer(t, E))  # (T, D)
    if x.ndim == 1:
        c = V.conj().T @ x
        return (phase * c) @ V.T
    rot = V.conj().T @ x @ V
    return np.einsum("ai,ti,ij,tj,bj->tab", V, phase, rot, phase.conj(), V.conj(), optimize=True)


def reduced_state(psi: np.ndarray, N: int, A, B) -> DensityMatrix:
    """``rho_AB`` of a pure ``N``-qubit state, with A's qubits first."""
    keep = list(A) + list(B)
    rest = [q for q in range(N) if q not in keep]
    T = np.asarray(psi).reshape((2,) * N).transpose(keep + rest).reshape(2 ** len(keep), -1)
    rho = T @ T.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho / np.trace(rho).real, (2 ** len(A), 2 ** len(B)))


def _check_partition(N: int, A, B, C=None):
    A, B = [int(q) for q in A], [int(q) for q in B]
    if not A or not B:
        raise ValidationError("A and B must be non-empty")
    C = [q for q in range(N) if q not in A + B] if C is None else [int(q) for q in C]
    allq = A + B + C
    if len(set(allq)) != len(allq):
        raise ValidationError("partitions overlap")
    if set(allq) != set(range(N)):
        raise ValidationError(f"partition must cover qubits 0..{N - 1} exactly")
    return A, B, C


def initial_ghz(N: int, A, B) -> np.ndarray:
    """GHZ on A and B, ``|0>`` on every other qubit."""
    AB = sorted(list(A) + list(B))
    ghz = ghz_vector(len(AB)).reshape((2,) * len(AB))
    psi = np.zeros((2,) * N, dtype=complex)
    idx0 = [0] * N
    for val in (0, 1):
        idx = list(idx0)
        for q in AB:
            idx[q] = val
        psi[tuple(idx)] = ghz[(val,) * len(AB)]
    return psi.ravel()


def time_grid(spec) -> np.ndarray:
    if isinstance(spec, dict):
        return np.linspace(float(spec.get("t_min", 0.0)), float(spec.get("t_max", 0.01)), int(spec.get("points", 200)))
    return np.asarray(spec, dtype=float)


@dataclass
class Trajectory:
    """Indicator series over time for one (A, B) pair.

    ``rescaled[c] = raw[c] * factors[c]`` with ``factors[c] = 1/raw[c][0]``
    so that every series starts at 1; a series whose initial value is not
    positive keeps factor ``None`` and is copied unscaled.
    """

    times: np.ndarray
    states: list
    raw: dict
    rescaled: dict
    factors: dict
    partition: dict

    def windows(self, only: str = "e4_star") -> list[tuple[float, float]]:
        """Maximal time intervals where ``only`` detects and every other series does not."""
        others = [c for c in self.raw if c != only]
        mask = np.asarray(self.raw[only]) > 0
        for c in others:
            mask &= np.asarray(self.raw[c]) <= 0
        out, start = [], None
        for i, m in enumerate(mask):
            if m and start is None:
                start = i
            if not m and start is not None:
                out.append((float(self.times[start]), float(self.times[i - 1])))
                start = None
        if start is not None:
            out.append((float(self.times[start]), float(self.times[-1])))
        return out

    def rows(self):
        for i, t in enumerate(self.times):
            for c in self.raw:
                yield float(t), c, float(self.raw[c][i]), float(self.rescaled[c][i])


def dynamics_scan(config: dict) -> Trajectory:
    """Evolve the GHZ-plus-bath state and evaluate the four bipartite indicators.

    Config keys: ``hamiltonian`` (dict for :class:`HamiltonianSpec`),
    ``partition`` (``{"A": [...], "B": [...], "C": [...]}``, C optional),
    ``times`` (list, or ``{"t_max", "points"}``), ``criteria`` (subset of
    e4_ccnr, e4_star, p2, p3).
    """
    spec = HamiltonianSpec.from_dict(config["hamiltonian"])
    part = config.get("partition") or {}
    A, B, C = _check_partition(spec.N, part.get("A", []), part.get("B", []), part.get("C"))
    crit = list(config.get("criteria") or SCAN_CRITERIA)
    bad = [c for c in crit if c not in SCAN_CRITERIA]
    if bad:
        raise ValidationError(f"unsupported scan criteria {bad}; choose from {', '.join(SCAN_CRITERIA)}")
    times = time_grid(config.get("times", {"t_max": 0.01, "points": 200}))
    eig = Eigensystem.of(build_hamiltonian(spec))
    psis = evolve(initial_ghz(spec.N, A, B), eig, times)
    states, raw = [], {c: [] for c in crit}
    for psi in psis:
        rho = reduced_state(psi, spec.N, A, B)
        states.append(rho)
        suite = bipartite_suite(rho)
        for c in crit:
            raw[c].append(suite[c].indicator)
    factors, rescaled = {}, {}
    for c in crit:
        v0 = raw[c][0]
        factors[c] = 1.0 / v0 if v0 > 0 else None
        rescaled[c] = [x * factors[c] for x in raw[c]] if factors[c] else list(raw[c])
    return Trajectory(times, states, raw, rescaled, factors, {"A": A, "B": B, "C": C})


# --- eigenstate scans -------------------------------------------------------------------


def e4_realigned(rho: DensityMatrix) -> float:
    """``E_4`` lower bound on the realignment trace norm of ``rho``."""
    from .moments import moments_direct
    from .tensor_core import IndexPermutation

    M = moments_direct(rho, IndexPermutation.realignment(2), 2).moments
    dA, dB = rho.dims
    return e4_analytic(M[0], M[1], min(dA * dA, dB * dB)).value


def e4_pure_bipartite(psi: np.ndarray, dA: int) -> float:
    """``E_4`` of a pure state cut after the first ``dA`` basis factors.

    The realigned singular values are the products ``s_i s_j`` of Schmidt
    coefficients, so ``M_2n = (sum s^2n)^2``.
    """
    s = np.linalg.svd(np.asarray(psi).reshape(dA, -1), compute_uv=False)
    dB = psi.size // dA
    p2, p4 = np.sum(s**2), np.sum(s**4)
    return e4_analytic(p2 * p2, p4 * p4, min(dA * dA, dB * dB)).value


def _mbl_realization(N, W, params, seed, sizes):
    spec = HamiltonianSpec("ising_mbl", N, {**params, "W": W, "disorder_seed": seed})
    eig = Eigensystem.of(build_hamiltonian(spec))
    psi = eig.vectors[:, eig.middle_index()]
    return [e4_pure_bipartite(psi, 2**a) for a in sizes]


def eigenstate_scan(config: dict) -> list[dict]:
    """Eigenstate entanglement tables.

    ``kind="mbl_scaling"``: for each disorder strength in ``W`` (units of
    ``J0``), the mean ``E_4`` of the middle eigenstate over
    ``realizations`` disorder draws, cut between qubits ``|A|`` and the
    rest, for ``|A|`` in ``A_sizes``; plus a Haar-random pure-state
    baseline (``series="random"``).

    ``kind="eth_rainbow"``: ``E_4(rho_AB)`` and ``E/N`` for every eigenstate
    of the mixed-field chain, for parties ``A`` and ``B``.
    """
    kind = config.get("kind")
    seed = int(config.get("seed", 0))
    threads = int(config.get("threads", 1))
    if kind == "mbl_scaling":
        N = int(config.get("N", 10))
        if N > MAX_QUBITS:
            raise ResourceError(f"N = {N} exceeds {MAX_QUBITS}")
        Ws = [float(w) for w in config.get("W", [0.5, 8.0])]
        R = int(config.get("realizations", 50))
        sizes = [int(a) for a in config.get("A_sizes", range(1, N // 2 + 1))]
        if any(not 1 <= a < N for a in sizes):
            raise ValidationError("A sizes must lie in 1..N-1")
        params = dict(config.get("params", {}))
        rows = []
        for wi, W in enumerate(Ws):
            seeds = [derive_seed(seed, wi, r) for r in range(R)]
            with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
                vals = np.array(list(pool.map(lambda sd: _mbl_realization(N, W * params.get("J0", 1.0), params, sd, sizes), seeds)))
            for k, a in enumerate(sizes):
                rows.append(_agg_row(f"W={W:g}", W, a, vals[:, k]))
        rng = np.random.default_rng(derive_seed(seed, len(Ws), 0))
        base = np.array([[e4_pure_bipartite(psi, 2**a) for a in sizes]
                         for psi in (haar_vector(2**N, rng) for _ in range(R))])
        for k, a in enumerate(sizes):
            rows.append(_agg_row("random", math.nan, a, base[:, k]))
        return rows
    if kind == "eth_rainbow":
        N = int(config.get("N", 10))
        A = config.get("A", [0, 1])
        B = config.get("B", [2, 3])
        A, B, _ = _check_partition(N, A, B)
        spec = HamiltonianSpec("qimf", N, dict(config.get("params", {})), config.get("boundary"))
        eig = Eigensystem.of(build_hamiltonian(spec))
        rows = []
        for i, E in enumerate(eig.energies):
            rho = reduced_state(eig.vectors[:, i], N, A, B)
            rows.append({"index": i, "E_over_N": float(E / N), "E4": e4_realigned(rho)})
        return rows
    raise ValidationError(f"unknown eigenscan kind {kind!r}; choose mbl_scaling or eth_rainbow")


def _agg_row(series, W, a, vals):
    return {"series": series, "W": W, "A_size": a, "E4_mean": float(np.mean(vals)),
            "E4_sem": float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0,
            "realizations": len(vals)}


def rainbow_contrast(rows: list[dict], fraction: float = 0.10) -> tuple[float, float]:
    """Mean ``E_4`` over the central and the outer ``fraction`` of eigenstates (by energy rank).

    The outer set takes ``fraction/2`` from each end of the spectrum.
    """
    E4 = np.array([r["E4"] for r in sorted(rows, key=lambda r: r["E_over_N"])])
    n = len(E4)
    k = max(1, int(round(fraction * n)))
    lo = (n - k) // 2
    centre = E4[lo : lo + k].mean()
    h = max(1, k // 2)
    outer = np.concatenate([E4[:h], E4[-h:]]).mean()
    return float(centre), float(outer)


def slope(xs, ys) -> float:
    return float(np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)[0])
