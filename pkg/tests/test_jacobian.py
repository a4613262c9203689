import numpy as np
import pytest

from conftest import fd_jacobian
from prelog_lab.channel import ChannelConfig, CorrelationMatrix, build_ybar, dft_correlation
from prelog_lab.jacobian import (
    a_vector,
    build_J,
    build_J2,
    build_factors,
    extract_J4,
    homogeneity_check,
    homogeneity_degree,
    is_detJ4_nonzero,
    laplace_split_check,
    logabsdet_J2_batch,
    logabsdet_J4_batch,
)
from prelog_lab.pilots import build_projection, plan_pilots
from prelog_lab.rng import complex_normal, master_stream, substream


class TestAVector:
    def test_zero_fading(self):
        qm = dft_correlation(5, 3)
        assert np.all(a_vector(qm, np.zeros(6), 3) == 0)

    def test_support_and_values(self):
        qm = dft_correlation(5, 3)
        s = complex_normal(master_stream(1), 6)
        a3 = a_vector(qm, s, 3)
        nz = np.flatnonzero(a3)
        assert list(nz) == [2, 7]
        assert a3[2] == qm.row(3) @ s[:3]
        assert a3[7] == qm.row(3) @ s[3:]

    def test_reconstructs_ybar(self):
        cfg = ChannelConfig(5, 3, 2)
        qm = dft_correlation(5, 3)
        rng = master_stream(2)
        x = complex_normal(rng, 5)
        s = complex_normal(rng, 6)
        total = sum(x[i - 1] * a_vector(qm, s, i) for i in range(1, 6))
        assert np.allclose(total, build_ybar(cfg, qm, x, s))

    def test_index_range(self):
        with pytest.raises(ValueError):
            a_vector(dft_correlation(5, 3), np.zeros(6), 6)


class TestFactors:
    def test_all_ones_input_gives_identity_J1_J3(self):
        plan = plan_pilots(ChannelConfig(5, 3, 2))
        qm = dft_correlation(5, 3)
        s = complex_normal(master_stream(3), 6)
        J1, _, J3 = build_factors(plan, qm, np.ones(5), s)
        assert np.array_equal(J1, np.eye(10))
        assert np.array_equal(J3, np.eye(10))

    def test_J2_first_columns(self):
        plan = plan_pilots(ChannelConfig(5, 3, 2))
        qm = dft_correlation(5, 3)
        s = complex_normal(master_stream(4), 6)
        _, J2, _ = build_factors(plan, qm, np.ones(5), s)
        P = build_projection(plan).matrix()
        assert J2.shape == (10, 10)
        assert np.allclose(J2[:, :6], P @ np.kron(np.eye(2), qm.entries))

    def test_zero_symbol_rejected(self):
        plan = plan_pilots(ChannelConfig(5, 3, 2))
        qm = dft_correlation(5, 3)
        x = np.ones(5, dtype=complex)
        x[3] = 0
        with pytest.raises(ValueError):
            build_factors(plan, qm, x, np.ones(6))


class TestFactorizationIdentity:
    def test_product_identity_100_draws(self, preset):
        _, cfg, plan, qm = preset
        rng = master_stream(5)
        for _ in range(100):
            x = complex_normal(rng, cfg.L)
            s = complex_normal(rng, cfg.Q * cfg.R)
            b = build_J(plan, qm, x, s)
            scale = np.abs(b.J).max()
            assert np.abs(b.J - b.product).max() <= 1e-10 * scale

    def test_det_multiplicativity(self, preset):
        _, cfg, plan, qm = preset
        rng = master_stream(6)
        x = complex_normal(rng, cfg.L)
        s = complex_normal(rng, cfg.Q * cfg.R)
        b = build_J(plan, qm, x, s)
        lhs = np.linalg.det(b.J)
        rhs = np.linalg.det(b.J1) * np.linalg.det(b.J2) * np.linalg.det(b.J3)
        assert abs(lhs - rhs) <= 1e-9 * abs(lhs)

    def test_matches_finite_differences(self, preset):
        _, cfg, plan, qm = preset
        rng = master_stream(7)
        P = build_projection(plan)
        n_s = cfg.Q * cfg.R
        for _ in range(10):
            x = complex_normal(rng, cfg.L)
            s = complex_normal(rng, n_s)
            x_data = x[plan.alpha :]

            def mapped(z):
                xx = np.concatenate([x[: plan.alpha], z[n_s:]])
                return P.apply(build_ybar(cfg, qm, xx, z[:n_s]))

            z0 = np.concatenate([s, x_data])
            J_fd = fd_jacobian(mapped, z0)
            J = build_J(plan, qm, x, s).J
            assert np.abs(J - J_fd).max() <= 1e-5 * np.abs(J).max()

    def test_zero_fading_kills_data_columns(self):
        plan = plan_pilots(ChannelConfig(5, 3, 2))
        qm = dft_correlation(5, 3)
        b = build_J(plan, qm, np.ones(5), np.zeros(6))
        assert np.all(b.J[:, 6:] == 0)


class TestJ4:
    def test_preset_A_J4_equals_J2(self):
        plan = plan_pilots(ChannelConfig(5, 3, 2))
        qm = dft_correlation(5, 3)
        s = complex_normal(master_stream(8), 6)
        assert np.allclose(extract_J4(plan, qm, s), build_J2(plan, qm, s))

    def test_preset_D_sizes(self):
        plan = plan_pilots(ChannelConfig(6, 3, 2))
        qm = dft_correlation(6, 3)
        s = complex_normal(master_stream(9), 6)
        assert extract_J4(plan, qm, s).shape == (10, 10)
        assert build_J2(plan, qm, s).shape == (11, 11)

    def test_zero_fading_singular(self):
        plan = plan_pilots(ChannelConfig(5, 3, 2))
        qm = dft_correlation(5, 3)
        J4 = extract_J4(plan, qm, np.zeros(6))
        assert np.all(J4[:, 6:] == 0)
        assert np.linalg.det(J4) == 0

    def test_siso_rejected(self):
        plan = plan_pilots(ChannelConfig(5, 3, 1))
        with pytest.raises(ValueError):
            extract_J4(plan, dft_correlation(5, 3), np.zeros(3))

    def test_batch_matches_single(self, preset):
        _, cfg, plan, qm = preset
        s = complex_normal(master_stream(10), (16, cfg.Q * cfg.R))
        batch = logabsdet_J4_batch(plan, qm, s)
        for i in range(16):
            single = np.log2(abs(np.linalg.det(extract_J4(plan, qm, s[i]))))
            assert abs(batch[i] - single) < 1e-9

    def test_batch_J2_matches_single(self, preset):
        _, cfg, plan, qm = preset
        s = complex_normal(master_stream(11), (8, cfg.Q * cfg.R))
        batch = logabsdet_J2_batch(plan, qm, s)
        for i in range(8):
            single = np.log2(abs(np.linalg.det(build_J2(plan, qm, s[i]))))
            assert abs(batch[i] - single) < 1e-9


class TestHomogeneity:
    @pytest.mark.parametrize(
        "dims,degree",
        [((5, 3, 2), 4), ((6, 4, 3), 5), ((4, 3, 2), 2), ((6, 3, 2), 4)],
    )
    def test_degree(self, dims, degree):
        assert homogeneity_degree(plan_pilots(ChannelConfig(*dims))) == degree

    def test_scaling_100_random_pairs(self, preset):
        _, cfg, plan, qm = preset
        rng = master_stream(12)
        for _ in range(100):
            s = complex_normal(rng, cfg.Q * cfg.R)
            lam = complex(*rng.standard_normal(2))
            assert homogeneity_check(plan, qm, s, lam)

    def test_doubling_scales_det_16x_for_preset_A(self):
        plan = plan_pilots(ChannelConfig(5, 3, 2))
        qm = dft_correlation(5, 3)
        s = complex_normal(master_stream(13), 6)
        d0 = np.linalg.det(extract_J4(plan, qm, s))
        d2 = np.linalg.det(extract_J4(plan, qm, 2.0 * s))
        assert abs(d2 - 16 * d0) <= 1e-9 * abs(d2)

    def test_unit_modulus_preserves_magnitude(self, preset):
        _, cfg, plan, qm = preset
        s = complex_normal(master_stream(14), cfg.Q * cfg.R)
        d0 = abs(np.linalg.det(extract_J4(plan, qm, s)))
        d1 = abs(np.linalg.det(extract_J4(plan, qm, 1j * s)))
        assert abs(d1 - d0) <= 1e-9 * d0


class TestLaplaceSplit:
    def test_preset_A_trivial_equality(self):
        plan = plan_pilots(ChannelConfig(5, 3, 2))
        qm = dft_correlation(5, 3)
        s = complex_normal(master_stream(15), 6)
        lhs, rhs, ok = laplace_split_check(plan, qm, s)
        assert ok and lhs == rhs

    def test_preset_D_nonempty_product(self):
        plan = plan_pilots(ChannelConfig(6, 3, 2))
        qm = dft_correlation(6, 3)
        rng = master_stream(16)
        for _ in range(100):
            s = complex_normal(rng, 6)
            lhs, rhs, ok = laplace_split_check(plan, qm, s)
            assert ok
        # the peeled factor is exactly |q_6^T s_2|
        j4 = abs(np.linalg.det(extract_J4(plan, qm, s)))
        assert abs(rhs - j4 * abs(qm.row(6) @ s[3:])) <= 1e-12 * rhs

    def test_preset_B_empty_product(self):
        plan = plan_pilots(ChannelConfig(6, 4, 3))
        qm = dft_correlation(6, 4)
        s = complex_normal(master_stream(17), 12)
        lhs, rhs, ok = laplace_split_check(plan, qm, s)
        assert ok
        assert abs(rhs - abs(np.linalg.det(extract_J4(plan, qm, s)))) <= 1e-12 * rhs


class TestNonzeroTest:
    def test_dft_preset_A_nonzero(self):
        plan = plan_pilots(ChannelConfig(5, 3, 2))
        verdict = is_detJ4_nonzero(plan, dft_correlation(5, 3), substream(0, 0))
        assert verdict.nonzero and verdict.caveat is None

    def test_rank_deficient_suspected_zero(self):
        m = dft_correlation(5, 3).entries.copy()
        m[:, 2] = 0  # kills a fading direction, I_R (x) Q loses rank
        qm = CorrelationMatrix(m, validate=False)
        plan = plan_pilots(ChannelConfig(5, 3, 2))
        verdict = is_detJ4_nonzero(plan, qm, substream(0, 1))
        assert not verdict.nonzero
        assert verdict.caveat is not None

    def test_rank_condition_failure_can_still_be_nonzero(self):
        # the identity test is independent of the subset rank condition:
        # rows 1,2,3 are dependent here yet det J4 is generically nonzero
        m = dft_correlation(5, 3).entries.copy()
        m[2] = m[0] + m[1]
        qm = CorrelationMatrix(m, validate=False)
        plan = plan_pilots(ChannelConfig(5, 3, 2))
        from prelog_lab.property_a import verify_property_A

        assert not verify_property_A(qm, range(1, 6)).holds
        assert is_detJ4_nonzero(plan, qm, substream(0, 2)).nonzero

    def test_duplicated_rows_force_zero_here(self):
        # equal rows make the per-antenna row differences proportional, so
        # for this plan the determinant vanishes identically
        m = dft_correlation(5, 3).entries.copy()
        m[1] = m[0]
        qm = CorrelationMatrix(m, validate=False)
        plan = plan_pilots(ChannelConfig(5, 3, 2))
        assert not is_detJ4_nonzero(plan, qm, substream(0, 2)).nonzero
