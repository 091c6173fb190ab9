import itertools

import numpy as np
import pytest

from permom.errors import InsufficientDataError, UnsupportedError, ValidationError
from permom.estimation import (
    CSV_COLUMNS,
    MeasurementRecordSet,
    bipartite_w,
    distinct_trace_sum,
    hybrid_estimator,
    randomized_measurement_run,
    reports_to_csv,
    rm_centered_estimators,
    rm_moment_estimator,
    rm_moment_naive,
    sample_global_shadow,
    sample_local_shadow,
    setting_pattern,
    shadow_moment_estimator,
    single_qubit_cliffords,
    twirl_check,
    variance_benchmark,
    weight_global,
    weight_local,
)
from permom.moments import centered_cross_terms, moment_direct
from permom.states import make_state
from permom.tensor_core import DensityMatrix, IndexPermutation, permute_indices

REALIGN = IndexPermutation.realignment(2)


def exact_m4(rho, perm=REALIGN):
    return moment_direct(permute_indices(rho, perm), 2)


def within_3se(values, truth):
    v = np.asarray(values, dtype=float)
    se = v.std(ddof=1) / np.sqrt(v.size)
    return abs(v.mean() - truth) <= 3 * se, (v.mean(), se, truth)


def zero_state():
    return DensityMatrix(np.diag([1.0, 0.0]), (2,))


class TestWeights:
    def test_global_table(self):
        s = np.array(list(itertools.product(range(4), repeat=2)))
        w = weight_global(s[:, 0], s[:, 1], 4)
        assert np.array_equal(w, np.where(s[:, 0] == s[:, 1], 4.0, -1.0))

    def test_local_table(self):
        s = np.array(list(itertools.product(range(4), repeat=2)))
        w = weight_local(s[:, 0], s[:, 1], 2)
        ham = np.array([bin(a ^ b).count("1") for a, b in s])
        assert np.array_equal(w, 4.0 * (-2.0) ** (-ham))
        assert set(w) == {4.0, -2.0, 1.0}


class TestShadows:
    def test_global_trace_and_mean(self):
        sh = sample_global_shadow(zero_state(), 10_000, seed=3)
        snaps = sh.snapshots()
        assert np.allclose(np.trace(snaps, axis1=1, axis2=2), 1, atol=1e-12)
        mean = snaps.mean(0)
        se = snaps.std(0, ddof=1) / np.sqrt(sh.M)
        assert np.all(np.abs(mean - np.diag([1, 0])) <= 3 * se + 1e-15)

    def test_local_trace_and_mean(self):
        sh = sample_local_shadow(zero_state(), 10_000, seed=4)
        snaps = sh.snapshots()
        assert np.allclose(np.trace(snaps, axis1=1, axis2=2), 1, atol=1e-12)
        mean = snaps.mean(0)
        se = snaps.std(0, ddof=1) / np.sqrt(sh.M)
        assert np.all(np.abs(mean - np.diag([1, 0])) <= 3 * se + 1e-15)

    def test_local_factored_expands(self):
        sh = sample_local_shadow(bipartite_w(3), 5, seed=1)
        fa, fb = sh.party_factors(0), sh.party_factors(1)
        for i in range(5):
            full = np.kron(fa[i], fb[i])
            assert np.allclose(full, sh.snapshot(i))
            assert np.trace(full).real == pytest.approx(1)

    def test_local_needs_qubits(self):
        with pytest.raises(UnsupportedError):
            sample_local_shadow(make_state("upb3x3"), 10, seed=0)

    def test_global_purity(self):
        ident = IndexPermutation.identity(1)
        vals = [shadow_moment_estimator(sample_global_shadow(zero_state(), 50, s), ident, 1) for s in range(200)]
        ok, info = within_3se(vals, 1.0)
        assert ok, info

    def test_local_product_purity(self):
        rho = make_state("product:2:seed=9")
        vals = [shadow_moment_estimator(sample_local_shadow(rho, 40, s), REALIGN, 1) for s in range(200)]
        ok, info = within_3se(vals, 1.0)
        assert ok, info

    def test_bell_m4(self):
        bell = make_state("bell")
        vals = [shadow_moment_estimator(sample_global_shadow(bell, 200, s), REALIGN, 2) for s in range(200)]
        ok, info = within_3se(vals, 0.25)
        assert ok, info

    def test_minimal_sample(self):
        bell = make_state("bell")
        vals = [shadow_moment_estimator(sample_local_shadow(bell, 4, s), REALIGN, 2) for s in range(3000)]
        ok, info = within_3se(vals, 0.25)
        assert ok, info

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            shadow_moment_estimator(sample_global_shadow(make_state("bell"), 3, 0), REALIGN, 2)

    def test_gram_matrix_paths_agree(self):
        sh = sample_local_shadow(bipartite_w(3), 9, seed=5)
        a = shadow_moment_estimator(sh, REALIGN, 2, method="matrix")
        b = shadow_moment_estimator(sh, REALIGN, 2, method="gram")
        assert a == pytest.approx(b, rel=1e-10, abs=1e-12)

    def test_distinct_sum_bruteforce(self, rng):
        M = 6
        stacks = [rng.normal(size=(M, 3, 3)) for _ in range(3)]
        brute = 0.0
        for i, j, k in itertools.permutations(range(M), 3):
            brute += np.trace(stacks[0][i] @ stacks[1][j] @ stacks[2][k])
        assert distinct_trace_sum(stacks) == pytest.approx(brute, rel=1e-10)

    def test_mean_state_rate(self):
        rho = make_state("w:2")
        sizes = np.array([100, 400, 1600, 6400])
        errs = []
        for M in sizes:
            e = [np.linalg.norm(sample_local_shadow(rho, int(M), s).snapshots().mean(0) - rho.data) for s in range(8)]
            errs.append(np.mean(e))
        slope = np.polyfit(np.log(sizes), np.log(errs), 1)[0]
        assert abs(slope + 0.5) <= 0.1, slope


class TestRandomizedMeasurements:
    def test_pattern(self):
        assert setting_pattern(2) == [(0, 0), (0, 1), (1, 1), (1, 0)]
        assert setting_pattern(3)[-1] == (2, 0)

    def test_record_counts(self):
        rec = randomized_measurement_run(make_state("bell"), 2, 7, 5, "global", seed=1)
        assert rec.outcomes.shape == (7, 4, 5)

    def test_diagonal_frequencies(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        rho = DensityMatrix(np.diag(p), (2, 2))
        rec = randomized_measurement_run(rho, 1, 50, 200, "global", seed=2, force_identity=True)
        counts = np.bincount(rec.outcomes.ravel(), minlength=4)
        n = counts.sum()
        se = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) <= 3 * se)

    def test_determinism(self):
        w = bipartite_w(3)
        a = randomized_measurement_run(w, 2, 4, 5, "local", seed=11)
        b = randomized_measurement_run(w, 2, 4, 5, "local", seed=11)
        assert np.array_equal(a.outcomes, b.outcomes)
        assert rm_moment_estimator(a) == rm_moment_estimator(b)

    @pytest.mark.parametrize("mode", ["global", "local"])
    def test_factorised_equals_naive(self, mode):
        rec = randomized_measurement_run(bipartite_w(3), 2, 3, 6, mode, seed=4)
        assert rm_moment_estimator(rec) == pytest.approx(rm_moment_naive(rec), rel=1e-10, abs=1e-12)

    def test_malformed_pattern(self):
        rec = randomized_measurement_run(make_state("bell"), 2, 2, 3, "global", seed=0)
        bad = MeasurementRecordSet(**{**rec.__dict__, "pattern": ((0, 0), (0, 1), (1, 1), (1, 1))})
        with pytest.raises(ValidationError):
            rm_moment_estimator(bad)

    def test_local_needs_power_of_two(self):
        with pytest.raises(UnsupportedError):
            randomized_measurement_run(make_state("upb3x3"), 2, 2, 3, "local", seed=0)

    @pytest.mark.parametrize("mode", ["global", "local"])
    def test_w_unbiased(self, mode):
        w = bipartite_w(3)
        vals = [rm_moment_estimator(randomized_measurement_run(w, 2, 100, 20, mode, s)) for s in range(100)]
        ok, info = within_3se(vals, exact_m4(w))
        assert ok, info


class TestCentred:
    @pytest.mark.parametrize("spec", ["product:2:seed=4", "bell"])
    def test_unbiased(self, spec):
        rho = make_state(spec)
        vals = np.array([rm_centered_estimators(randomized_measurement_run(rho, 2, 30, 8, "global", s))
                         for s in range(150)])
        exact = centered_cross_terms(rho)
        for j in range(2):
            ok, info = within_3se(vals[:, j], exact[j])
            assert ok, (j, info)

    def test_needs_two_shots(self):
        rec = randomized_measurement_run(make_state("bell"), 2, 2, 1, "global", seed=0)
        with pytest.raises(InsufficientDataError):
            rm_centered_estimators(rec)

    def test_determinism(self):
        rec = randomized_measurement_run(make_state("bell"), 2, 3, 4, "global", seed=6)
        assert rm_centered_estimators(rec) == rm_centered_estimators(rec)


class TestHybrid:
    PI = IndexPermutation.parse("1,3,2,4,5,6")

    @pytest.mark.parametrize("spec", ["upb3q", "product:3:seed=2"])
    def test_unbiased(self, spec):
        rho = make_state(spec)
        vals = [hybrid_estimator(rho, 20, 5, s) for s in range(150)]
        ok, info = within_3se(vals, exact_m4(rho, self.PI))
        assert ok, info

    def test_determinism(self):
        rho = make_state("upb3q")
        assert hybrid_estimator(rho, 3, 4, 5) == hybrid_estimator(rho, 3, 4, 5)

    def test_needs_three_parties(self):
        with pytest.raises(ValidationError):
            hybrid_estimator(make_state("bell"), 3, 4, 0)


class TestTwirl:
    def test_haar_converges(self):
        assert twirl_check(2, 100_000, 2, seed=1) < 0.05

    def test_sqrt_scaling(self):
        a = np.mean([twirl_check(2, 5_000, 2, seed=s) for s in range(10)])
        b = np.mean([twirl_check(2, 20_000, 2, seed=100 + s) for s in range(10)])
        assert 0.35 <= b / a <= 0.7

    def test_clifford_exact(self):
        assert len(single_qubit_cliffords()) == 24
        assert twirl_check(2, 0, 2, seed=0, ensemble="clifford") < 1e-12


class TestBenchmark:
    def test_small_run(self):
        reports = variance_benchmark({"qubits": [2, 3], "protocols": ["global_rm", "local_shadow"], "repetitions": 20, "seed": 3})
        assert len(reports) == 4
        csv = reports_to_csv(reports)
        assert csv.splitlines()[0] == ",".join(CSV_COLUMNS)
        assert all(r.sane() for r in reports)

    def test_deterministic(self):
        cfg = {"qubits": [3], "protocols": ["local_rm"], "repetitions": 10, "seed": 8}
        assert reports_to_csv(variance_benchmark(cfg)) == reports_to_csv(variance_benchmark(cfg))
