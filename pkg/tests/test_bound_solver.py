import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from permom.bound_solver import (
    e2n_bound,
    e2n_for_state,
    e4_analytic,
    intactness_indicator,
    kyfan_norm,
    structure_bound,
    structure_thresholds,
)
from permom.errors import DomainError, ValidationError
from permom.states import make_state
from permom.tensor_core import IndexPermutation, permute_indices

UPB_PI = IndexPermutation.parse("1,3,2,4,5,6")
UPB_MOMENTS = (0.25, 0.019287109375, 0.0017547607421875, 0.000165477395057678)
PRINTED_E8_WITNESS = ((0.30870218, 0.15042053, 0.08412272, 0.08412269), (2, 2, 1, 1))
# smaller-sum spectrum with the same four moments (checked at 40 digits)
OUR_E8_WITNESS = ((0.308696379, 0.161432942, 0.121095734, 0.063436134), (2, 1, 2, 1))


def power_sums(lams, degs, n):
    lams, degs = np.asarray(lams), np.asarray(degs)
    return np.array([np.sum(degs * lams ** (2 * m)) for m in range(1, n + 1)])


def e4_two_value_oracle(M2, M4, L):
    """Minimum of a*x + b*y over a x^2 + b y^2 = M2, a x^4 + b y^4 = M4."""
    best = np.inf
    for a in range(1, L + 1):
        if abs(a * (M2 / a) ** 2 - M4) <= 1e-14 * M4:
            best = min(best, np.sqrt(a * M2))
        for b in range(1, L - a + 1):
            # u = x^2, v = (M2 - a u)/b; a u^2 + (M2 - a u)^2 / b = M4
            A = a + a * a / b
            B = -2 * a * M2 / b
            C = M2 * M2 / b - M4
            disc = B * B - 4 * A * C
            if disc < -1e-14:
                continue
            for u in ((-B + np.sqrt(max(disc, 0))) / (2 * A), (-B - np.sqrt(max(disc, 0))) / (2 * A)):
                v = (M2 - a * u) / b
                if u >= -1e-15 and v >= -1e-15:
                    best = min(best, a * np.sqrt(max(u, 0)) + b * np.sqrt(max(v, 0)))
    return best


def random_spectrum(rng, L):
    r = int(rng.integers(1, L + 1))
    lam = rng.random(r) ** rng.uniform(0.5, 3)
    return np.sort(lam / np.sqrt(np.sum(lam**2)) * rng.uniform(0.2, 1))[::-1]


class TestE4Analytic:
    def test_single_value(self):
        nb = e4_analytic(1, 1, 4)
        assert nb.value == pytest.approx(1)
        assert nb.lambdas == (1.0,) and nb.degeneracies == (1,)

    def test_bell(self):
        nb = e4_analytic(1, 0.25, 4)
        assert nb.value == pytest.approx(2)
        assert nb.lambdas == pytest.approx((0.5,)) and nb.degeneracies == (4,)
        assert nb.value == pytest.approx(e4_two_value_oracle(1, 0.25, 4), abs=1e-9)

    def test_upb_row(self):
        nb = e4_analytic(0.25, 0.01928711, 8)
        assert nb.value == pytest.approx(0.94882494, abs=1e-6)
        assert nb.degeneracies == (3, 1)
        assert nb.lambdas == pytest.approx((0.282788, 0.10045973), abs=1e-6)

    @pytest.mark.parametrize("M2,M4,L,word", [(1, 2, 4, "M4 <= M2"), (1, 0.1, 4, "L")])
    def test_infeasible(self, M2, M4, L, word):
        with pytest.raises(DomainError, match=word):
            e4_analytic(M2, M4, L)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**31), L=st.integers(1, 9))
    def test_matches_two_value_oracle(self, seed, L):
        rng = np.random.default_rng(seed)
        lam = random_spectrum(rng, L)
        M2, M4 = np.sum(lam**2), np.sum(lam**4)
        nb = e4_analytic(M2, M4, L)
        assert nb.value == pytest.approx(e4_two_value_oracle(M2, M4, L), abs=1e-8)
        assert nb.residual <= 1e-8


class TestE2n:
    def test_n1(self):
        nb = e2n_bound([0.36], 5)
        assert nb.value == pytest.approx(0.6) and nb.degeneracies == (1,)

    def test_n2_bell(self):
        assert e2n_bound([1, 0.25], 4).value == pytest.approx(2, abs=1e-8)

    def test_upb_table(self):
        rho = make_state("upb3q")
        vals = [e2n_for_state(rho, UPB_PI, n).value for n in (1, 2, 3)]
        assert vals == pytest.approx([0.5, 0.94882494, 0.97296386], abs=1e-6)

    def test_upb_e8_global_minimum(self):
        nb = e2n_bound(UPB_MOMENTS, 8)
        assert nb.residual <= 1e-8
        assert sum(nb.degeneracies) <= 8
        ours = float(np.dot(OUR_E8_WITNESS[1], OUR_E8_WITNESS[0]))
        assert np.allclose(power_sums(*OUR_E8_WITNESS, 4), UPB_MOMENTS, rtol=1e-7)
        assert nb.value == pytest.approx(ours, abs=1e-7)
        assert nb.value > 1

    def test_upb_printed_witness_is_feasible_but_larger(self):
        lams, degs = PRINTED_E8_WITNESS
        assert np.allclose(power_sums(lams, degs, 4), UPB_MOMENTS, rtol=1e-6)
        assert np.dot(degs, lams) > e2n_bound(UPB_MOMENTS, 8).value + 1e-3

    def test_witness_invariants(self, rng):
        lam = random_spectrum(rng, 8)
        M = power_sums(lam, np.ones_like(lam), 3)
        nb = e2n_bound(M, 8)
        assert nb.residual <= 1e-8
        assert sum(nb.degeneracies) <= 8
        assert list(nb.lambdas) == sorted(nb.lambdas, reverse=True)
        assert len(set(nb.lambdas)) == len(nb.lambdas)
        assert nb.value == pytest.approx(np.dot(nb.degeneracies, nb.lambdas))

    @settings(max_examples=150, deadline=None)
    @given(seed=st.integers(0, 2**31), L=st.integers(1, 16))
    def test_closed_form_agreement(self, seed, L):
        rng = np.random.default_rng(seed)
        lam = random_spectrum(rng, L)
        M = (np.sum(lam**2), np.sum(lam**4))
        assert abs(e2n_bound(M, L, method="numeric").value - e4_analytic(*M, L).value) <= 1e-8


def _lower_bound_sweep(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        L = int(rng.integers(1, 17))
        lam = random_spectrum(rng, L)
        M = power_sums(lam, np.ones_like(lam), 4)
        prev = -np.inf
        for n in (1, 2, 3, 4):
            v = e2n_bound(M[:n], L).value
            assert v <= lam.sum() + 1e-8, (lam, n)
            assert v >= prev - 1e-8, (lam, n)
            prev = v


def test_lower_bound_and_monotone():
    _lower_bound_sweep(60, 2024)


@pytest.mark.slow
def test_lower_bound_and_monotone_full():
    _lower_bound_sweep(1000, 99)


class TestKyFan:
    def test_full_is_trace_norm(self, rng):
        R = permute_indices(make_state("random_mixed:2:d=3:seed=4"), IndexPermutation.realignment(2))
        s = np.linalg.svd(R.entries, compute_uv=False)
        assert kyfan_norm(R, R.L) == pytest.approx(s.sum())

    def test_ghz_split(self):
        R = permute_indices(make_state("ghz:3"), IndexPermutation.realignment(3, 0, 1))
        assert kyfan_norm(R, 4) == pytest.approx(2.0)

    def test_rank_one(self):
        R = permute_indices(make_state("product:2"), IndexPermutation.realignment(2))
        for m in (1, 2, 4):
            assert kyfan_norm(R, m) == pytest.approx(1.0)

    @pytest.mark.parametrize("m", [0, 5])
    def test_range(self, m):
        R = permute_indices(make_state("bell"), IndexPermutation.realignment(2))
        with pytest.raises(ValidationError):
            kyfan_norm(R, m)


class TestStructure:
    def test_thresholds(self):
        assert structure_thresholds(3, 2) == {2: 10.0, 3: 6.0}
        th = structure_thresholds(5, 3)
        vals = [th[t] for t in sorted(th)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_product(self):
        rep = intactness_indicator(make_state("product:3"), 2)
        assert rep.G_R == pytest.approx(6)
        assert rep.certified_intactness_below is None

    def test_ghz(self):
        rep = intactness_indicator(make_state("ghz:3"), 2)
        assert rep.G_R == pytest.approx(12)
        assert rep.certified_intactness_below == 2

    def test_full_rank_matches_e4(self, rng):
        lam = random_spectrum(rng, 6)
        M2, M4 = np.sum(lam**2), np.sum(lam**4)
        assert structure_bound(M2, M4, 6, 6) == pytest.approx(e4_analytic(M2, M4, 6).value, abs=1e-8)

    def test_forced_single(self):
        assert structure_bound(1, 1, 1, 4) == pytest.approx(1)

    def test_bell_moments(self):
        assert structure_bound(1, 0.25, 2, 4) == pytest.approx(1.0, abs=1e-8)

    def test_grid_oracle(self):
        lam = np.array([0.6, 0.45, 0.3, 0.1])
        M2, M4 = np.sum(lam**2), np.sum(lam**4)
        got = structure_bound(M2, M4, 2, 4)
        # choose lambda_3, lambda_4 on a grid, solve for the remaining pair
        g = np.arange(0, np.sqrt(M2), 1e-3)
        x, y = np.meshgrid(g, g, indexing="ij")
        a = M2 - x**2 - y**2
        b = M4 - x**4 - y**4
        p = (a * a - b) / 2
        disc = a * a - 4 * p
        ok = (a >= 0) & (p >= 0) & (disc >= 0)
        r = np.sqrt(np.where(ok, disc, 0))
        u, v = (a + r) / 2, (a - r) / 2
        quad = np.stack([np.sqrt(np.clip(u, 0, None)), np.sqrt(np.clip(v, 0, None)), x, y])
        top2 = -np.sum(np.sort(-quad, axis=0)[:2], axis=0)
        oracle = np.min(np.where(ok, top2, np.inf))
        assert got <= oracle + 1e-9
        assert got == pytest.approx(oracle, abs=5e-3)
