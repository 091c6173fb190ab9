from functools import reduce

import numpy as np
import pytest
import scipy.linalg

from permom.dynamics import (
    Eigensystem,
    HamiltonianSpec,
    Trajectory,
    build_hamiltonian,
    disorder,
    dynamics_scan,
    e4_pure_bipartite,
    e4_realigned,
    eigenstate_scan,
    evolve,
    initial_ghz,
    rainbow_contrast,
    reduced_state,
    slope,
)
from permom.errors import ResourceError, ValidationError
from permom.states import haar_vector

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
SP = np.array([[0, 1], [0, 0]], dtype=complex)


def op(N, which):
    """Kronecker product with ``which[q]`` on qubit ``q`` (qubit 0 leftmost)."""
    return reduce(np.kron, [which.get(q, I2) for q in range(N)])


def kron_hamiltonian(kind, N, p, boundary):
    H = np.zeros((2**N, 2**N), dtype=complex)
    if kind == "xy":
        for i in range(N):
            for j in range(i + 1, N):
                J = p["J0"] / (j - i) ** p["alpha"]
                H += J * (op(N, {i: SP, j: SP.T}) + op(N, {i: SP.T, j: SP}))
            H += p["Bz"] * op(N, {i: Z})
    elif kind == "ising_mbl":
        D = np.random.default_rng(p["disorder_seed"]).uniform(-p["W"], p["W"], N)
        for i in range(N):
            for j in range(i + 1, N):
                H += p["J0"] / (j - i) ** p["alpha"] * op(N, {i: X, j: X})
            H += (p["Bz"] / 2 + D[i]) * op(N, {i: Z})
    else:
        for i in range(N):
            H += p["g"] * op(N, {i: Y}) + p["h"] * op(N, {i: X})
            if i < N - 1 or boundary == "periodic":
                H += p["J"] * op(N, {i: X, (i + 1) % N: X})
    return H


class TestHamiltonians:
    def test_xy_two_qubits(self):
        H = build_hamiltonian(HamiltonianSpec("xy", 2)).real
        expect = np.array([[800, 0, 0, 0], [0, 0, 420, 0], [0, 420, 0, 0], [0, 0, 0, -800]])
        assert np.allclose(H, expect)

    @pytest.mark.parametrize(
        "kind,params,boundary",
        [("xy", {}, "open"), ("ising_mbl", {"W": 3.0, "disorder_seed": 4}, "open"), ("qimf", {}, "periodic"),
         ("qimf", {}, "open")],
    )
    def test_kron_oracle(self, kind, params, boundary):
        spec = HamiltonianSpec(kind, 4, params, boundary)
        H = build_hamiltonian(spec)
        assert np.allclose(H, kron_hamiltonian(kind, 4, spec.resolved, boundary))
        assert np.allclose(H, H.conj().T)

    def test_xy_conserves_magnetisation(self):
        N = 5
        H = build_hamiltonian(HamiltonianSpec("xy", N))
        Ztot = sum(op(N, {i: Z}) for i in range(N))
        assert np.max(np.abs(H @ Ztot - Ztot @ H)) < 1e-9

    def test_mbl_defaults(self):
        spec = HamiltonianSpec("ising_mbl", 3, {"J0": 2.0})
        assert spec.resolved["Bz"] == 8.0
        assert np.array_equal(disorder(1.5, 6, 3), np.random.default_rng(3).uniform(-1.5, 1.5, 6))

    def test_validation(self):
        with pytest.raises(ValidationError):
            HamiltonianSpec("heisenberg", 3)
        with pytest.raises(ValidationError):
            HamiltonianSpec("xy", 3, {"bogus": 1})
        with pytest.raises(ValidationError):
            HamiltonianSpec("xy", 3, boundary="twisted")
        with pytest.raises(ResourceError):
            HamiltonianSpec("xy", 13)
        with pytest.raises(ValidationError):
            HamiltonianSpec.from_dict({"kind": "xy"})


class TestEvolution:
    def test_matches_expm(self, rng):
        H = build_hamiltonian(HamiltonianSpec("qimf", 4))
        psi = haar_vector(16, rng)
        out = evolve(psi, H, [0.0, 0.3, 1.1])
        assert np.allclose(out[0], psi)
        assert np.allclose(out[2], scipy.linalg.expm(-1j * 1.1 * H) @ psi, atol=1e-10)
        assert np.allclose(np.linalg.norm(out, axis=1), 1)

    def test_density_route(self, rng):
        H = build_hamiltonian(HamiltonianSpec("ising_mbl", 3, {"W": 1.0}))
        psi = haar_vector(8, rng)
        vecs = evolve(psi, H, [0.2, 0.7])
        mats = evolve(np.outer(psi, psi.conj()), H, [0.2, 0.7])
        for v, m in zip(vecs, mats):
            assert np.allclose(m, np.outer(v, v.conj()), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            evolve(np.ones(4), np.eye(8), [0.1])

    def test_middle_index(self):
        eig = Eigensystem(np.array([-2.0, -1.0, 1.0, 2.0]), np.eye(4))
        assert eig.middle_index() == 1
        eig = Eigensystem(np.array([-3.0, -0.5, 0.1, 3.0]), np.eye(4))
        assert eig.middle_index() == 2


class TestStates:
    def test_initial_ghz(self):
        psi = initial_ghz(4, [0], [2])
        expect = np.zeros(16)
        expect[0] = expect[0b1010] = 1 / np.sqrt(2)
        assert np.allclose(psi, expect)

    def test_reduced_state_order(self):
        psi = initial_ghz(4, [2], [0])
        rho = reduced_state(psi, 4, [2], [0])
        assert rho.dims == (2, 2)
        assert np.allclose(rho.data, 0.5 * np.outer([1, 0, 0, 1], [1, 0, 0, 1]))

    @pytest.mark.parametrize("A,B", [([], [1]), ([0], [0]), ([0], [5])])
    def test_bad_partition(self, A, B):
        with pytest.raises(ValidationError):
            dynamics_scan({"hamiltonian": {"kind": "xy", "N": 4}, "partition": {"A": A, "B": B}})

    def test_pure_e4_dual_route(self, rng):
        psi = haar_vector(8, rng)
        rho = reduced_state(psi, 3, [0], [1, 2])
        assert e4_pure_bipartite(psi, 2) == pytest.approx(e4_realigned(rho), abs=1e-9)


class TestScan:
    CFG = {"hamiltonian": {"kind": "xy", "N": 5}, "partition": {"A": [0], "B": [2]},
           "times": {"t_max": 0.01, "points": 21}}

    def test_normalised_start(self):
        tr = dynamics_scan(self.CFG)
        for c, series in tr.rescaled.items():
            assert series[0] == pytest.approx(1.0), c
            assert tr.factors[c] == pytest.approx(1 / tr.raw[c][0])
        assert len(list(tr.rows())) == 21 * 4

    def test_unknown_criterion(self):
        with pytest.raises(ValidationError):
            dynamics_scan({**self.CFG, "criteria": ["e4_star", "ppt"]})

    def test_deterministic(self):
        a, b = dynamics_scan(self.CFG), dynamics_scan(self.CFG)
        assert a.raw == b.raw

    def test_window_logic(self):
        t = np.arange(6.0)
        raw = {"e4_star": [1, 1, 1, -1, 1, 1], "p2": [1, -1, -1, -1, -1, 0]}
        tr = Trajectory(t, [], raw, raw, {}, {})
        assert tr.windows() == [(1.0, 2.0), (4.0, 5.0)]


class TestEigenscan:
    def test_mbl_rows(self):
        cfg = {"kind": "mbl_scaling", "N": 6, "W": [0.5, 8.0], "realizations": 4, "A_sizes": [1, 2, 3], "seed": 2}
        rows = eigenstate_scan(cfg)
        assert len(rows) == 9
        assert {r["series"] for r in rows} == {"W=0.5", "W=8", "random"}
        assert all(r["realizations"] == 4 for r in rows)
        threaded = eigenstate_scan({**cfg, "threads": 3})
        assert threaded == rows

    def test_mbl_bad_size(self):
        with pytest.raises(ValidationError):
            eigenstate_scan({"kind": "mbl_scaling", "N": 4, "A_sizes": [4], "realizations": 2})

    def test_eth_rows(self):
        rows = eigenstate_scan({"kind": "eth_rainbow", "N": 6})
        assert len(rows) == 64
        assert all(r["E4"] >= 0 for r in rows)

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            eigenstate_scan({"kind": "nope"})

    def test_contrast(self):
        # 20 states: central 10% = ranks 9, 10; outer 5% + 5% = ranks 0, 19
        E4 = np.full(20, 0.5)
        E4[[9, 10]] = 0.0
        E4[[0, 19]] = 1.0
        rows = [{"E_over_N": float(i), "E4": float(v)} for i, v in enumerate(E4)][::-1]
        assert rainbow_contrast(rows) == (0.0, 1.0)

    def test_slope(self):
        assert slope([1, 2, 3], [2, 4, 6]) == pytest.approx(2)
