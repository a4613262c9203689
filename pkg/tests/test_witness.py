import numpy as np
import pytest

from prelog_lab.channel import ChannelConfig, dft_correlation
from prelog_lab.jacobian import extract_J4
from prelog_lab.pilots import plan_pilots
from prelog_lab.property_a import find_K
from prelog_lab.rng import master_stream
from prelog_lab.witness import (
    choose_witness_sets,
    iterative_laplace_reduce,
    solve_witness_vectors,
    verify_witness,
    witness_certificate,
)


def setup(L, Q, R):
    cfg = ChannelConfig(L, Q, R)
    plan = plan_pilots(cfg)
    qm = dft_correlation(L, Q)
    K = find_K(qm, cfg)
    return cfg, plan, qm, K


class TestChooseSets:
    def test_preset_B_partition(self):
        cfg, plan, _, _ = setup(6, 4, 3)
        wp = choose_witness_sets(cfg, plan)
        assert wp.nonzero_counts == (1, 2, 2)  # k+1 and k+2 pattern, k=0
        assert sum(wp.nonzero_counts) == 5  # Q + k + 1
        assert not wp.extrapolated
        # complements of the zero sets partition the column range [2:6]
        assert sorted(wp.column_owner) == [2, 3, 4, 5, 6]
        for m, Km in enumerate(wp.K_sets, start=1):
            assert len(Km) == 3  # Q - 1
            owned = {j for j, o in wp.column_owner.items() if o == m}
            assert owned.isdisjoint(Km)

    def test_preset_A_partition(self):
        cfg, plan, _, _ = setup(5, 3, 2)
        wp = choose_witness_sets(cfg, plan)
        assert wp.nonzero_counts == (2, 2)
        assert sorted(wp.column_owner) == [2, 3, 4, 5]
        assert wp.extrapolated  # l = 0 regime is outside the proven case

    def test_degenerate_R_equals_Q(self):
        # R = Q forces k = 0, l = 0: singleton complements partition [2:Q+1]
        cfg, plan, _, _ = setup(5, 3, 3)
        wp = choose_witness_sets(cfg, plan)
        assert wp.nonzero_counts == (1, 1, 1)
        assert sorted(wp.column_owner) == [2, 3, 4]

    def test_case_a_plan(self):
        cfg, plan, _, _ = setup(4, 3, 2)
        wp = choose_witness_sets(cfg, plan)
        assert wp.extrapolated
        assert sorted(wp.column_owner) == [3, 4]

    def test_siso_rejected(self):
        cfg = ChannelConfig(5, 3, 1)
        with pytest.raises(ValueError):
            choose_witness_sets(cfg, plan_pilots(cfg))


class TestSolveVectors:
    def test_nullspace_conditions_preset_B(self):
        cfg, plan, qm, K = setup(6, 4, 3)
        wp = choose_witness_sets(cfg, plan)
        wv = solve_witness_vectors(qm, wp, K)
        for Km, s_m in zip(wp.K_sets, wv.s_list):
            assert abs(np.linalg.norm(s_m) - 1.0) < 1e-12
            for j in Km:
                assert abs(qm.row(j) @ s_m) <= 1e-10
            for j in set(K) - set(Km):
                assert abs(qm.row(j) @ s_m) >= 1e-8

    def test_svd_nullspace_oracle(self):
        # independent oracle: the stacked zero rows annihilate s_1
        cfg, plan, qm, K = setup(6, 4, 3)
        wp = choose_witness_sets(cfg, plan)
        wv = solve_witness_vectors(qm, wp, K)
        sub = qm.entries[[j - 1 for j in wp.K_sets[0]]]
        assert np.abs(sub @ wv.s_list[0]).max() < 1e-10

    def test_leading_entry_real_positive(self):
        cfg, plan, qm, K = setup(5, 3, 2)
        wp = choose_witness_sets(cfg, plan)
        for s_m in solve_witness_vectors(qm, wp, K).s_list:
            lead = s_m[np.flatnonzero(np.abs(s_m) > 1e-14)[0]]
            assert abs(lead.imag) < 1e-12 and lead.real > 0


class TestReduce:
    def test_diagonal(self):
        d = np.diag([2.0, -3.0, 0.5j])
        scalar, residual, trace, rows, cols = iterative_laplace_reduce(d)
        assert residual.size == 0
        assert abs(scalar - 3.0) < 1e-12
        assert len(trace) == 3

    def test_identity_with_dense_column(self):
        m = np.eye(4, dtype=complex)
        m[:, 2] = [1, 2, 3, 4]
        scalar, residual, trace, _, _ = iterative_laplace_reduce(m)
        # the dense column only becomes eliminable after the others are gone
        assert [t[1] for t in trace] == [0, 1, 3, 2]
        assert residual.size == 0
        assert abs(scalar - 3.0) < 1e-12

    def test_invariant_on_planted_matrices(self):
        # |det M| == scalar * |det residual| for matrices with planted
        # single-nonzero columns
        rng = master_stream(99)
        for _ in range(100):
            n = int(rng.integers(3, 8))
            m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            k = int(rng.integers(1, n))
            cols = rng.permutation(n)[:k]
            for c in cols:
                keep = int(rng.integers(0, n))
                col = np.zeros(n, dtype=complex)
                col[keep] = m[keep, c]
                m[:, c] = col
            scalar, residual, _, _, _ = iterative_laplace_reduce(m)
            det = abs(np.linalg.det(m))
            det_res = abs(np.linalg.det(residual)) if residual.size else 1.0
            assert abs(det - scalar * det_res) <= 1e-10 * max(det, 1.0)

    def test_stall_returns_remaining_matrix(self):
        m = np.ones((3, 3), dtype=complex)
        scalar, residual, trace, _, _ = iterative_laplace_reduce(m)
        assert scalar == 1.0 and residual.shape == (3, 3) and not trace


class TestVerifyWitness:
    @pytest.mark.parametrize("dims", [(5, 3, 2), (6, 4, 3)])
    def test_certificate(self, dims):
        cfg, plan, qm, K = setup(*dims)
        wplan, wvecs, report = witness_certificate(cfg, plan, qm, K)
        assert report.det_abs > 1e-8
        assert report.rel_error <= 1e-8
        assert report.residual_matches_blocks
        # LU determinant oracle against the product formula
        J4 = extract_J4(plan, qm, wvecs.stacked())
        assert abs(abs(np.linalg.det(J4)) - report.product_value) <= 1e-8 * report.product_value

    def test_case_a_extrapolated(self):
        cfg, plan, qm, K = setup(4, 3, 2)
        _, _, report = witness_certificate(cfg, plan, qm, K)
        assert report.extrapolated
        assert report.det_abs > 0 and report.rel_error <= 1e-8

    def test_zero_fading_stalls(self):
        cfg, plan, qm, K = setup(5, 3, 2)
        wplan = choose_witness_sets(cfg, plan)
        wvecs = solve_witness_vectors(qm, wplan, K)
        from prelog_lab.witness import WitnessVectors

        zeros = WitnessVectors(tuple(np.zeros_like(s) for s in wvecs.s_list))
        with pytest.raises(ValueError, match="stalled"):
            verify_witness(plan, qm, wplan, zeros)

    def test_phase_invariance(self):
        # rotating any antenna's vector by a unit phase leaves |det J4| fixed
        cfg, plan, qm, K = setup(6, 4, 3)
        wplan, wvecs, report = witness_certificate(cfg, plan, qm, K)
        rng = master_stream(5)
        phases = np.exp(2j * np.pi * rng.random(len(wvecs.s_list)))
        rotated = np.concatenate([p * s for p, s in zip(phases, wvecs.s_list)])
        d = abs(np.linalg.det(extract_J4(plan, qm, rotated)))
        assert abs(d - report.det_abs) <= 1e-9 * report.det_abs
