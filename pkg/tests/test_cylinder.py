import numpy as np
import pytest

from cylfbm import cylinder, fbm


class TestSequences:
    def test_default_preset_accepted(self):
        hs, ws = cylinder.make_sequences("default")
        assert hs.sup_value == pytest.approx(0.08)
        assert hs.total_sum == pytest.approx(0.16)
        assert hs.sup_value < 1 / 12 and hs.total_sum < 1 / 6

    def test_geometric_examples(self):
        hs = cylinder.HurstSequence.geometric(0.08, 0.5, 8)
        assert hs.value(1) == pytest.approx(0.08)
        assert hs.value(3) == pytest.approx(0.02)
        assert hs.value(12) == pytest.approx(0.08 * 2.0 ** -11)  # tail rule
        ws = cylinder.WeightSequence.geometric(0.5, 0.5, 8)
        total = cylinder.validate_sequence_pair(hs, ws)
        # lambda_k/sqrt(H_k) sums to a finite geometric series
        exact = sum(0.5 ** k / np.sqrt(0.08 * 0.5 ** (k - 1)) for k in range(1, 200))
        assert total == pytest.approx(exact, rel=1e-10)

    def test_constant_hursts_rejected(self):
        with pytest.raises(cylinder.SequenceConstraintError) as err:
            cylinder.HurstSequence(heads=(0.1, 0.1, 0.1), tail_ratio=0.9)
        assert "decreasing" in str(err.value)
        with pytest.raises(cylinder.SequenceConstraintError) as err:
            cylinder.HurstSequence.geometric(0.1, 0.999999, 3)
        assert "1/6" in str(err.value) or "1/12" in str(err.value)

    def test_sup_violation_named(self):
        with pytest.raises(cylinder.SequenceConstraintError) as err:
            cylinder.HurstSequence.geometric(0.09, 0.2, 4)
        assert "1/12" in str(err.value)

    def test_mixed_tail_divergence_named(self):
        hs = cylinder.HurstSequence.geometric(0.08, 0.25, 4)
        ws = cylinder.WeightSequence.geometric(0.5, 0.6, 4)  # 0.6 > sqrt(0.25)
        with pytest.raises(cylinder.SequenceConstraintError) as err:
            cylinder.validate_sequence_pair(hs, ws)
        assert "diverges" in str(err.value)

    def test_out_of_range_hurst(self):
        with pytest.raises(cylinder.SequenceConstraintError):
            cylinder.HurstSequence(heads=(0.6,), tail_ratio=0.5)


class TestEnsembles:
    def test_determinism(self, sequences, grid64):
        hs, ws = sequences
        a = cylinder.sample_cyl_fbm(hs, ws, 3, grid64, 40, seed=5)
        b = cylinder.sample_cyl_fbm(hs, ws, 3, grid64, 40, seed=5)
        assert np.array_equal(a.values, b.values)

    def test_truncation_consistency(self, sequences, grid64):
        hs, ws = sequences
        big = cylinder.sample_cyl_fbm(hs, ws, 4, grid64, 25, seed=9)
        small = cylinder.sample_cyl_fbm(hs, ws, 2, grid64, 25, seed=9)
        assert np.array_equal(big.values[:2], small.values)

    def test_component_variance(self, sequences, grid64):
        hs, ws = sequences
        n = 30_000
        ens = cylinder.sample_cyl_fbm(hs, ws, 3, grid64, n, seed=17)
        for k in range(3):
            lam2 = ws.value(k + 1) ** 2
            v = np.var(ens.values[k, -1, :])
            se = lam2 * np.sqrt(2.0 / n)
            assert abs(v - lam2) < 3 * se

    def test_cross_covariance_vanishes(self, sequences, grid64):
        hs, ws = sequences
        n = 30_000
        ens = cylinder.sample_cyl_fbm(hs, ws, 3, grid64, n, seed=23)
        for j in range(3):
            for k in range(j + 1, 3):
                a, b = ens.values[j, -1, :], ens.values[k, -1, :]
                cov = np.mean(a * b)
                se = np.std(a) * np.std(b) / np.sqrt(n)
                assert abs(cov) < 3 * se

    def test_norm_second_moment(self, sequences, grid64):
        hs, ws = sequences
        n, d = 30_000, 4
        ens = cylinder.sample_cyl_fbm(hs, ws, d, grid64, n, seed=29)
        t = grid64.nodes[-1]
        sq = np.sum(ens.values[:, -1, :] ** 2, axis=0)
        target = sum(ws.value(k) ** 2 * t ** (2 * hs.value(k)) for k in range(1, d + 1))
        se = np.std(sq, ddof=1) / np.sqrt(n)
        assert abs(np.mean(sq) - target) < 3 * se

    def test_per_component_law(self, sequences, grid64):
        # each component passes the scalar covariance check
        hs, ws = sequences
        n = 30_000
        ens = cylinder.sample_cyl_fbm(hs, ws, 2, grid64, n, seed=31)
        for k in range(2):
            H, lam = hs.value(k + 1), ws.value(k + 1)
            i, j = 20, 50
            emp = np.mean(ens.values[k, i, :] * ens.values[k, j, :])
            target = lam ** 2 * fbm.covariance(H, grid64.nodes[i], grid64.nodes[j])
            se = np.std(ens.values[k, i, :] * ens.values[k, j, :], ddof=1) / np.sqrt(n)
            assert abs(emp - target) < 3 * se


class TestDiagonalOperators:
    def test_q_roundtrip_identity(self, sequences):
        hs, ws = sequences
        x = np.arange(1.0, 5.0)
        out = cylinder.apply_diag_operator(
            cylinder.apply_diag_operator(x, "Q_sqrt", weights=ws),
            "Q_sqrt_inv", weights=ws)
        assert np.max(np.abs(out - x)) < 1e-12

    def test_unit_lnd_is_identity(self, sequences):
        x = np.arange(1.0, 4.0)
        out = cylinder.apply_diag_operator(x, "K_sqrt", lnd=[1.0, 1.0, 1.0])
        assert np.array_equal(out, x)

    def test_composite_scaling_product(self, sequences, grid64):
        hs, ws = sequences
        lnd = [fbm.estimate_lnd_constant(hs.value(k), grid64, 0.1) for k in (1, 2, 3)]
        combo = cylinder.composite_scaling(ws, lnd, 3)
        direct = np.array([ws.value(k) * np.sqrt(lnd[k - 1].estimate) for k in (1, 2, 3)])
        assert np.max(np.abs(combo - direct)) < 1e-15

    def test_zero_diagonal_not_invertible(self):
        with pytest.raises(fbm.DomainError):
            cylinder.apply_diag_operator(np.ones(2), "K_sqrt_inv", lnd=[0.4, 0.0])


class TestSupNormDiagnostic:
    def test_zero_weight_gives_zero(self, grid64):
        hs = cylinder.HurstSequence.geometric(0.08, 0.5, 2)
        ws = cylinder.WeightSequence(heads=(0.0, 0.0), tail_ratio=0.0)
        ens = cylinder.sample_cyl_fbm(hs, ws, 1, grid64, 200, seed=3)
        assert cylinder.sup_norm_diagnostic(ens) == 0.0

    def test_monotone_in_truncation_and_ratio_stable(self, grid64):
        hs, ws = cylinder.make_sequences({"hurst_first": 0.08, "hurst_ratio": 0.5,
                                          "weight_first": 0.5, "weight_ratio": 0.5,
                                          "d_max": 16})
        vals, ratios = [], []
        for d in (4, 8, 16):
            ens = cylinder.sample_cyl_fbm(hs, ws, d, grid64, 4000, seed=41)
            est = cylinder.sup_norm_diagnostic(ens)
            vals.append(est)
            ratios.append(est / cylinder.weighted_inverse_sqrt_hurst_sum(hs, ws, d))
        assert vals[0] <= vals[1] <= vals[2]
        assert np.isfinite(vals[-1])
        assert max(ratios) <= 2.0 * min(ratios)


class TestSerialization:
    def test_binary_roundtrip(self, sequences, grid64, tmp_path):
        hs, ws = sequences
        ens = cylinder.sample_cyl_fbm(hs, ws, 2, grid64, 10, seed=1)
        path = tmp_path / "ens.bin"
        cylinder.save_ensemble_binary(ens, path)
        back = cylinder.load_ensemble_binary(path, hs, ws)
        assert back.d == ens.d and back.seed == ens.seed
        assert np.array_equal(back.values, ens.values)
        assert back.grid.t_end == ens.grid.t_end

    def test_csv_output(self, sequences, tmp_path):
        hs, ws = sequences
        grid = fbm.TimeGrid(1.0, 16)
        ens = cylinder.sample_cyl_fbm(hs, ws, 2, grid, 3, seed=1)
        path = tmp_path / "ens.csv"
        cylinder.save_ensemble_csv(ens, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "component,node,time,path,value"
        assert len(lines) == 1 + 2 * 17 * 3


class TestBasisMaps:
    def test_change_of_basis_is_coordinate_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        assert np.array_equal(cylinder.change_of_basis(x), x)
        assert np.array_equal(
            cylinder.change_of_basis_inverse(cylinder.change_of_basis(x)), x)

    def test_truncation_operator(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        out = cylinder.truncate_vector(x, 2)
        assert np.array_equal(out, [1.0, 2.0, 0.0, 0.0])
