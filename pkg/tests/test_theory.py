"""Certifier behavior: membership sets, outward-drift checks, stress tests."""

import math

import numpy as np
import pytest

import guidance_lab as gl
from guidance_lab.mixture import GaussianMixture, score_conditional, surface_certificate
from guidance_lab.schedule import default_schedule, make_grid
from guidance_lab.theory import (
    estimate_c1,
    mt_membership,
    norm_amplification_check,
    norm_sweep,
    prop1_stress,
    scatter_experiment,
)

PAIR_1D = GaussianMixture(dim=1, means=[[-1.0], [1.0]], weights=[0.5, 0.5])
SQUARE = GaussianMixture(
    dim=2, means=[[1, 1], [1, -1], [-1, 1], [-1, -1]], weights=[0.25] * 4
)
CERT_1D = surface_certificate(PAIR_1D, 1)
CERT_SQ = surface_certificate(SQUARE, 0)
SCHED = default_schedule()


class TestMembership:
    def test_unguided_dot_is_squared_score_norm(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.standard_normal(1) * 3
            member, dot = mt_membership(PAIR_1D, CERT_1D, x, 0.5, 1.0)
            expected = float(np.sum(score_conditional(PAIR_1D, x, 0.5, 1) ** 2))
            assert dot == pytest.approx(expected, abs=1e-12)
            assert dot >= 0
            assert member == (dot <= 0)

    def test_boundary_point_is_member(self):
        x = math.sqrt(0.5) * PAIR_1D.means[1]
        member, dot = mt_membership(PAIR_1D, CERT_1D, x, 0.5, 3.0)
        assert member and dot == pytest.approx(0.0, abs=1e-15)

    def test_small_outward_displacement_is_anomalous(self):
        x = math.sqrt(0.5) * PAIR_1D.means[1] + 0.05 * CERT_1D.normal
        member, dot = mt_membership(PAIR_1D, CERT_1D, x, 0.5, 3.0)
        assert member and dot < 0


class TestC1Estimation:
    def test_frozen_values_match_fixed_point_oracle(self):
        # scalar fixed point k = (omega-1) sqrt(ab) * margin * resp(k),
        # solved independently in extended precision
        expected = {2.0: 0.28049884543, 3.0: 0.457066657793, 5.0: 0.689361606094}
        for omega, reference in expected.items():
            value = estimate_c1(PAIR_1D, CERT_1D, 0.5, omega)
            assert value == pytest.approx(reference, abs=1e-7)

    def test_monotone_in_omega(self):
        values = [estimate_c1(PAIR_1D, CERT_1D, 0.5, w) for w in (1.5, 2.0, 3.0, 5.0, 8.0)]
        assert all(v > 0 for v in values)
        assert all(b > a + 1e-8 for a, b in zip(values, values[1:]))

    def test_collapses_toward_omega_one(self):
        assert estimate_c1(PAIR_1D, CERT_1D, 0.5, 1.0 + 1e-9) < 1e-5

    def test_point_beyond_boundary_exits(self):
        c1 = estimate_c1(PAIR_1D, CERT_1D, 0.5, 3.0)
        x = math.sqrt(0.5) * PAIR_1D.means[1] + 1.01 * c1 * CERT_1D.normal
        member, _ = mt_membership(PAIR_1D, CERT_1D, x, 0.5, 3.0)
        assert not member

    def test_point_just_inside_is_member(self):
        c1 = estimate_c1(PAIR_1D, CERT_1D, 0.5, 3.0)
        x = math.sqrt(0.5) * PAIR_1D.means[1] + 0.99 * c1 * CERT_1D.normal
        member, _ = mt_membership(PAIR_1D, CERT_1D, x, 0.5, 3.0)
        assert member

    def test_requires_omega_above_one(self):
        with pytest.raises(ValueError, match="omega"):
            estimate_c1(PAIR_1D, CERT_1D, 0.5, 1.0)

    def test_saturates_at_k_max(self):
        value = estimate_c1(PAIR_1D, CERT_1D, 0.5, 3.0, k_max=0.1)
        assert value == 0.1


class TestNormAmplification:
    def test_strict_ordering_and_monotone_mean(self):
        grid = make_grid(SCHED, 150)
        r3 = norm_amplification_check(SQUARE, CERT_SQ, SCHED, grid, 3.0, range(12))
        r5 = norm_amplification_check(SQUARE, CERT_SQ, SCHED, grid, 5.0, range(12))
        assert r3.verdict == "pass" and r5.verdict == "pass"
        assert r3.measured["min_margin"] > 1e-9
        assert r5.measured["mean_margin"] > r3.measured["mean_margin"]

    def test_omega_one_is_not_applicable(self):
        grid = make_grid(SCHED, 50)
        report = norm_amplification_check(SQUARE, CERT_SQ, SCHED, grid, 1.0, range(4))
        assert report.verdict == "n/a"
        assert report.passed

    def test_margins_stable_under_grid_refinement(self):
        coarse = norm_amplification_check(
            SQUARE, CERT_SQ, SCHED, make_grid(SCHED, 150), 5.0, range(8)
        )
        fine = norm_amplification_check(
            SQUARE, CERT_SQ, SCHED, make_grid(SCHED, 300), 5.0, range(8)
        )
        for a, b in zip(coarse.details, fine.details):
            assert abs(b["margin"] - a["margin"]) / abs(a["margin"]) < 0.05

    def test_report_is_reproducible(self):
        grid = make_grid(SCHED, 60)
        a = norm_amplification_check(SQUARE, CERT_SQ, SCHED, grid, 4.0, range(6))
        b = norm_amplification_check(SQUARE, CERT_SQ, SCHED, grid, 4.0, range(6))
        assert a.to_dict() == b.to_dict()


class TestProp1Stress:
    def test_bound_holds_on_modest_batch(self):
        report = prop1_stress(trials=30_000, dims=(2, 8, 64), seed=0)
        assert report.verdict == "pass"
        assert report.measured["max_ratio"] <= math.sqrt(2) * (1 + 1e-12)
        assert report.measured["max_identity_residual"] <= 1e-9

    def test_parallel_pair_ratio_is_one(self):
        v = np.array([1.0, 2.0])
        out = gl.rotate_raw(v, 3.0 * v, 5.0)
        assert np.linalg.norm(out) / np.linalg.norm(v) == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal_quarter_turn_attains_bound(self):
        # gamma = pi/2 and omega = 1.5 gives the tight case cos+sin = sqrt(2)
        cond = np.array([0.0, 3.0])
        uncond = np.array([1.0, 0.0])
        out = gl.rotate_raw(cond, uncond, 1.5)
        ratio = np.linalg.norm(out) / np.linalg.norm(cond)
        assert abs(ratio - math.sqrt(2)) < 1e-12

    def test_deterministic(self):
        a = prop1_stress(trials=5000, seed=3)
        b = prop1_stress(trials=5000, seed=3)
        assert a.to_dict() == b.to_dict()


class TestSweepAndScatter:
    def test_sweep_unguided_rows_agree_across_strategies(self):
        grid = make_grid(SCHED, 80)
        rows = norm_sweep(SQUARE, SCHED, grid, ["cfg", "adg", "adg_simplified"], [1.0],
                          range(8), 0)
        means = {r.strategy: r.mean_norm for r in rows}
        assert len(set(round(v, 12) for v in means.values())) == 1

    def test_cfg_norm_grows_adg_stays_bounded(self):
        grid = make_grid(SCHED, 100)
        rows = norm_sweep(SQUARE, SCHED, grid, ["cfg", "adg"], [1.0, 3.0, 6.0], range(24), 0)
        cfg_rows = [r for r in rows if r.strategy == "cfg"]
        adg_rows = [r for r in rows if r.strategy == "adg"]
        assert cfg_rows[0].mean_norm < cfg_rows[1].mean_norm < cfg_rows[2].mean_norm
        base = adg_rows[0].mean_norm
        assert all(base / 1.5 <= r.mean_norm <= base * 1.5 for r in adg_rows)

    def test_scatter_unguided_centroids_near_means(self):
        grid = make_grid(SCHED, 100)
        sets = scatter_experiment(SQUARE, SCHED, grid, [1.0], 48)
        s = sets[0]
        for c in range(4):
            samples = s.samples[s.components == c]
            se = np.sqrt(samples.var(axis=0, ddof=1).sum() / len(samples))
            assert np.linalg.norm(samples.mean(axis=0) - SQUARE.means[c]) < 3 * se

    def test_surface_drift_grows_interior_drift_does_not(self):
        center = GaussianMixture(
            dim=2, means=[[1, 1], [1, -1], [-1, 1], [-1, -1], [0, 0]], weights=[0.2] * 5
        )
        grid = make_grid(SCHED, 100)
        sets = scatter_experiment(center, SCHED, grid, [1.0, 3.0, 5.0], 48)
        drifts = [s.centroid_drift(center) for s in sets]
        # surface components drift outward monotonically
        for c in range(4):
            assert drifts[0][c] < drifts[1][c] < drifts[2][c]
        # interior component: no significant drift change vs the unguided run
        base_samples = sets[0].samples[sets[0].components == 4]
        for s, drift in zip(sets[1:], drifts[1:]):
            samples = s.samples[s.components == 4]
            se = math.sqrt(
                (samples.var(axis=0, ddof=1).sum() + base_samples.var(axis=0, ddof=1).sum())
                / len(samples)
            )
            assert abs(drift[4] - drifts[0][4]) < 3 * se
