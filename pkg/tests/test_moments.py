import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_perm, random_rho
from permom.errors import UnsupportedError, ValidationError
from permom.moments import (
    PartyType,
    adjoint_permutation,
    build_observable,
    centered_cross_terms,
    centered_operator,
    centered_realigned_moments,
    classify_parties,
    contract_copies,
    copy_map,
    enumerate_copies,
    moment_direct,
    moment_spectrum,
    moment_via_observable,
    moments_direct,
    power_trace,
    singular_values,
)
from permom.states import make_state
from permom.tensor_core import DensityMatrix, IndexPermutation, partial_trace_array, permute_indices, rearrange

UPB_MOMENTS = (0.25, 0.01928711, 0.00175476, 0.00016548)
T1, T2, R1, R2 = PartyType.T1, PartyType.T2, PartyType.R1, PartyType.R2
REALIGN = IndexPermutation.realignment(2, 0, 1)
PT_A = IndexPermutation.partial_transpose(2, 0)


def _dag(X):
    return X.conj().T


class TestClassification:
    def test_partial_transpose(self):
        assert classify_parties(PT_A) == (T2, T1)

    def test_realignment(self):
        assert classify_parties(REALIGN) == (R2, R1)

    def test_identity(self):
        assert classify_parties(IndexPermutation.identity(4)) == (T1,) * 4

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), k=st.integers(1, 4))
    def test_adjoint_exchanges_r_types(self, seed, k):
        rng = np.random.default_rng(seed)
        pi = random_perm(rng, k)
        swap = {R1: R2, R2: R1, T1: T1, T2: T2}
        adj = adjoint_permutation(pi)
        assert classify_parties(adj) == tuple(swap[t] for t in classify_parties(pi))
        rho = random_rho(rng, [2] * k)
        A = permute_indices(rho, pi).entries
        B = permute_indices(rho, adj).entries
        assert np.allclose(B, _dag(A), atol=1e-14)


class TestObservable:
    def test_ccnr_wiring(self):
        spec = build_observable(REALIGN, 2)
        tauA, tauB = spec.maps()
        # swaps (1,2),(3,4) on A and (2,3),(4,1) on B, 0-based
        assert list(tauA) == [1, 0, 3, 2]
        assert list(tauB) == [3, 2, 1, 0]

    def test_pt_cycles(self):
        spec = build_observable(PT_A, 3)
        assert spec.descriptors == ("backward-cycle", "forward-cycle")
        assert list(copy_map("forward-cycle", 3)) == [1, 2, 0]
        assert list(copy_map("backward-cycle", 3)) == [2, 0, 1]

    def test_four_party_mixed(self):
        # party types T1, T2, R2, R1 in one permutation
        pi = IndexPermutation.from_cycles(4, (3, 4), (6, 7))
        assert classify_parties(pi) == (T1, T2, R2, R1)
        spec = build_observable(pi, 2)
        assert spec.descriptors == ("forward-cycle", "backward-cycle", "swap-pairs-offset-0", "swap-pairs-offset-1")
        rho = random_rho(np.random.default_rng(5), (2, 2, 2, 2))
        assert moment_via_observable(rho, pi, 2) == pytest.approx(
            moment_direct(permute_indices(rho, pi), 2), abs=1e-10
        )

    def test_odd_swap_refused(self):
        with pytest.raises(UnsupportedError):
            copy_map("swap-pairs-offset-0", 3)

    def test_bell_pt_third_power(self):
        bell = make_state("bell")
        assert power_trace(bell, PT_A, 3) == pytest.approx(0.25, abs=1e-12)
        assert power_trace(bell, PT_A, 3, route="observable") == pytest.approx(0.25, abs=1e-12)

    def test_power_trace_rectangular_refused(self, rng):
        rho = random_rho(rng, (2, 3))
        with pytest.raises(ValidationError):
            power_trace(rho, REALIGN, 3)

    def test_product_all_r(self, rng):
        from permom.states import haar_vector

        psi = np.kron(haar_vector(2, rng), haar_vector(3, rng))
        rho = DensityMatrix(np.outer(psi, psi.conj()), (2, 3))
        for n in (1, 2, 3):
            assert moment_via_observable(rho, REALIGN, n) == pytest.approx(1.0, abs=1e-10)

    def test_enumerate_matches_contract(self, rng):
        rho = random_rho(rng, (2, 2))
        maps = build_observable(REALIGN, 2).maps()
        a = enumerate_copies([rho.data] * 4, rho.dims, maps)
        b = contract_copies([rho.data] * 4, rho.dims, maps)
        assert abs(a - b) < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), dims=st.lists(st.integers(2, 3), min_size=2, max_size=3), n=st.integers(1, 2))
    def test_observable_matches_direct(self, seed, dims, n):
        rng = np.random.default_rng(seed)
        rho = random_rho(rng, dims)
        pi = random_perm(rng, len(dims))
        direct = moment_direct(permute_indices(rho, pi), n)
        assert abs(moment_via_observable(rho, pi, n) - direct) <= 1e-8


class TestSpectrum:
    def test_bell(self):
        s = singular_values(permute_indices(make_state("bell"), REALIGN))
        assert np.allclose(s.values, 0.5)
        assert s.trace_norm == pytest.approx(2.0)

    def test_product_rank_one(self):
        s = singular_values(permute_indices(make_state("product:2"), REALIGN))
        assert s.values[0] == pytest.approx(1.0)
        assert np.allclose(s.values[1:], 0, atol=1e-12)

    def test_upb_ccnr_trace_norm(self):
        s = singular_values(permute_indices(make_state("upb3x3"), REALIGN))
        assert s.trace_norm > 1
        assert s.L == 9

    def test_sorted_nonneg(self, rng):
        s = singular_values(permute_indices(random_rho(rng, (2, 3)), REALIGN))
        assert np.all(s.values >= 0) and np.all(np.diff(s.values) <= 0)
        assert s.L == 4

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), dims=st.lists(st.integers(2, 3), min_size=1, max_size=3), n=st.integers(1, 4))
    def test_gram_vs_spectrum(self, seed, dims, n):
        rng = np.random.default_rng(seed)
        rho = random_rho(rng, dims)
        R = permute_indices(rho, random_perm(rng, len(dims)))
        assert abs(moment_direct(R, n) - moment_spectrum(R, n)) <= 1e-10

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), dims=st.lists(st.integers(2, 3), min_size=1, max_size=3))
    def test_m2_is_purity_and_monotone(self, seed, dims):
        rng = np.random.default_rng(seed)
        rho = random_rho(rng, dims, rank=int(rng.integers(1, 4)))
        M = moments_direct(rho, random_perm(rng, len(dims)), 4).moments
        assert abs(M[0] - rho.purity()) <= 1e-10
        assert M[0] <= 1 + 1e-12
        assert all(b <= a + 1e-14 for a, b in zip(M, M[1:]))


class TestValues:
    def test_bell_m4(self):
        assert moment_direct(permute_indices(make_state("bell"), REALIGN), 2) == pytest.approx(0.25)

    def test_upb_3qubit_table(self):
        rho = make_state("upb3q")
        M = moments_direct(rho, IndexPermutation.parse("1,3,2,4,5,6"), 4).moments
        assert np.allclose(M, UPB_MOMENTS, atol=1e-6, rtol=0)


class TestCentred:
    def test_product_zero(self, rng):
        a, b = random_rho(rng, (2,)), random_rho(rng, (3,))
        rho = DensityMatrix(np.kron(a.data, b.data), (2, 3))
        assert np.allclose(centered_realigned_moments(rho, 3).moments, 0, atol=1e-14)

    def test_bell_svd_oracle(self):
        bell = make_state("bell")
        X = centered_operator(bell)
        s = np.linalg.svd(rearrange(X, (2, 2), REALIGN).entries, compute_uv=False)
        M = centered_realigned_moments(bell, 2).moments
        assert M[0] == pytest.approx(np.sum(s**2), abs=1e-12)
        assert M[1] == pytest.approx(np.sum(s**4), abs=1e-12)
        # tr[(rho - rA x rB)^2] = 1 - 2/4 + 1/4
        assert M[0] == pytest.approx(0.75)

    def test_cross_terms_matrix_identity(self, rng):
        rho = random_rho(rng, (2, 3))
        rA = partial_trace_array(rho.data, rho.dims, [0])
        rB = partial_trace_array(rho.data, rho.dims, [1])
        R = rearrange(rho.data, rho.dims, REALIGN).entries
        S = rearrange(np.kron(rA, rB), rho.dims, REALIGN).entries
        m41, m42 = centered_cross_terms(rho)
        assert m41 == pytest.approx(np.trace(R @ _dag(R) @ R @ _dag(S)).real, abs=1e-12)
        pA = np.vdot(rA, rA).real
        assert m42 * pA == pytest.approx(np.trace(_dag(R) @ R @ _dag(S) @ S).real, abs=1e-12)

    def test_centred_expansion(self, rng):
        rho = random_rho(rng, (2, 2))
        rA = partial_trace_array(rho.data, rho.dims, [0])
        rB = partial_trace_array(rho.data, rho.dims, [1])
        R = rearrange(rho.data, rho.dims, REALIGN).entries
        S = rearrange(np.kron(rA, rB), rho.dims, REALIGN).entries
        t = lambda X: np.trace(X).real  # noqa: E731
        expanded = (
            t(np.linalg.matrix_power(R @ _dag(R), 2))
            - 4 * t(R @ _dag(R) @ R @ _dag(S))
            + 2 * t(R @ _dag(R) @ S @ _dag(S))
            + 2 * t(_dag(R) @ R @ _dag(S) @ S)
            + 2 * t(R @ _dag(S) @ R @ _dag(S))
            - 4 * t(R @ _dag(S) @ S @ _dag(S))
            + t(np.linalg.matrix_power(S @ _dag(S), 2))
        )
        assert centered_realigned_moments(rho, 2).moments[1] == pytest.approx(expanded, abs=1e-12)

    def test_needs_bipartite(self):
        with pytest.raises(ValidationError):
            centered_operator(make_state("ghz:3"))
