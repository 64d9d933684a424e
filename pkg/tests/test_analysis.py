import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tests.conftest import forest_block_ring, phi_oracle, pinning_model
from vegdyn import analysis as an
from vegdyn import gke
from vegdyn.model import PHI_DEFAULT, build_model, gf_single_patch

PHI1 = phi_oracle(1.0)


def rhs_oracle(G, jbar):
    return (1 - G) * (phi_oracle(G) - jbar * G)


class TestEquilibria:
    """Fixed points of the single-patch grass/forest equation."""

    def test_low_jbar_only_grass(self):
        eq = an.equilibria_2state(0.3)
        assert [(p.grass, p.stability, p.kind) for p in eq] == [(1.0, "stable", "trivial")]

    def test_bistable(self):
        eq = an.equilibria_2state(0.7)
        assert [p.stability for p in eq] == ["stable", "unstable", "stable"]
        assert eq[-1].grass == 1.0 and eq[0].grass < eq[1].grass < 1

    def test_transcritical_value(self):
        assert PHI1 == pytest.approx(0.899995, abs=1e-6)
        below = an.equilibria_2state(PHI1 - 1e-4)[-1]
        above = an.equilibria_2state(PHI1 + 1e-4)[-1]
        assert (below.stability, above.stability) == ("stable", "unstable")

    @given(st.floats(0.05, 1.5))
    def test_residuals_and_stability(self, jbar):
        eq = an.equilibria_2state(jbar)
        assert eq[-1].kind == "trivial" and eq[-1].grass == 1.0
        for p in eq:
            assert abs(rhs_oracle(p.grass, jbar)) < 1e-10
            assert 0 <= p.grass <= 1
        grass = [p.grass for p in eq]
        assert grass == sorted(grass)
        # between neighbouring fixed points the flow points toward the stable one
        for a, b in zip(eq[:-1], eq[1:]):
            if a.stability != b.stability:
                mid = rhs_oracle(0.5 * (a.grass + b.grass), jbar)
                assert (mid > 0) == (b.stability == "stable") or abs(mid) < 1e-12

    def test_site_density(self):
        # at density q the roots solve phi(qG) = jbar q G
        for p in an.equilibria_2state(0.8, density=1.3):
            if p.kind == "nontrivial":
                assert abs(phi_oracle(1.3 * p.grass) - 0.8 * 1.3 * p.grass) < 1e-10

    def test_rejects_nonpositive_jbar(self):
        with pytest.raises(ValueError):
            an.equilibria_2state(0.0)


class TestBifurcationSweep:
    """Branch tables and detected bifurcations."""

    @pytest.fixture(scope="class")
    @staticmethod
    def sweep():
        return an.bifurcation_sweep(np.linspace(0.05, 2.0, 391))

    def test_first_saddle_node(self, sweep):
        assert abs(sweep.saddle_nodes[0] - 0.55) <= 0.02

    def test_transcritical(self, sweep):
        assert sweep.transcritical == pytest.approx(PHI1, abs=1e-12)

    def test_second_saddle_node_beyond_transcritical(self, sweep):
        assert len(sweep.saddle_nodes) == 2
        second = sweep.saddle_nodes[1]
        assert second > sweep.transcritical
        beyond = an.equilibria_2state(second + 1e-3)
        assert [(p.stability, p.kind) for p in beyond] == [("stable", "nontrivial"), ("unstable", "trivial")]

    def test_labels_flip_only_at_bifurcations(self, sweep):
        marks = sorted(sweep.saddle_nodes + [sweep.transcritical])
        grid = sorted({p.jbar for p in sweep.points})

        def signature(jb):
            return [(p.stability, p.kind) for p in sweep.points if p.jbar == jb]

        for a, b in zip(grid[:-1], grid[1:]):
            if not any(a <= m <= b for m in marks):
                assert signature(a) == signature(b)

    def test_branch_filter_and_csv(self, sweep, tmp_path):
        stable_forest = sweep.branch("stable", "nontrivial")
        assert stable_forest and all(p.grass < 1 for p in stable_forest)
        sweep.to_csv(tmp_path / "b.csv")
        rows = list(csv.reader(open(tmp_path / "b.csv")))
        assert rows[0] == ["jbar", "grass", "stability", "kind"]
        assert len(rows) == 1 + len(sweep.points)

    def test_rejects_unsorted_grid(self):
        with pytest.raises(ValueError):
            an.bifurcation_sweep([0.5, 0.4])


class TestZeroDispersal:
    """Distance to the pointwise stable branches."""

    def test_zero_on_branch(self):
        roots = an.stable_roots(1.1, density=0.8)
        d = an.zero_dispersal_distance(roots, np.zeros(len(roots)), np.full(len(roots), 0.8), 1.1)
        np.testing.assert_allclose(d, 0, atol=1e-12)

    def test_callable_density(self):
        d = an.zero_dispersal_distance([0.5], [0.25], lambda x: 0.4 + 1.2 * np.asarray(x), 1.1)
        roots = an.stable_roots(1.1, density=0.7)
        assert d[0] == pytest.approx(np.min(np.abs(roots - 0.5)))


class TestConvergence:
    """Finite-size distance to the deterministic limit."""

    def test_exact_power_law_slope(self):
        N = np.array([100, 400, 1600, 6400])
        slope, (lo, hi) = an.loglog_slope(N, 3.0 * N**-0.5)
        assert slope == pytest.approx(-0.5, abs=1e-12)
        assert lo <= slope <= hi

    def test_absorbing_initial_law_has_no_error(self):
        model = build_model({"domain": {"type": "patches", "M": 1}, "kernels": {"jbar": 1.1},
                             "initial": {"law": {"G": 1.0, "F": 0.0}}})
        res = an.convergence_study(model, [10, 40], replicas=3, t_end=5, seed=1, h=0.01)
        assert np.all(res.errors == 0)
        assert np.isnan(res.slope)

    def test_error_shrinks_with_n(self, tmp_path):
        model = gf_single_patch(1.1, grass0=0.5)
        res = an.convergence_study(model, [100, 1600], replicas=8, t_end=5, seed=3, h=0.01)
        assert res.mean_error[1] < res.mean_error[0]
        assert -1.0 < res.slope < 0.0
        res.to_csv(tmp_path / "c.csv")
        rows = list(csv.reader(open(tmp_path / "c.csv")))
        assert rows[0] == ["N", "replica", "error"] and len(rows) == 1 + 16


class TestCorrelation:
    """Pairwise indicator correlations across replicas."""

    def test_null_calibration(self):
        replicas, N = 1000, 50
        states = np.random.default_rng(8).integers(0, 2, size=(replicas, N))
        res = an.pairwise_correlation(gf_single_patch(1.1), N, 5, 1.0, replicas, seed=2, states_at=states)
        assert res.max_abs < 3 / np.sqrt(replicas)

    def test_constant_states_skipped(self):
        states = np.zeros((20, 10), dtype=np.int64)
        res = an.pairwise_correlation(gf_single_patch(1.1), 10, 3, 1.0, 20, seed=0, states_at=states)
        assert np.isnan(res.max_abs)
        assert len(res.skipped) == 3 * 2

    def test_two_sites_reported(self):
        res = an.pairwise_correlation(gf_single_patch(1.1), 2, 1, 2.0, 200, seed=4)
        assert res.pairs.shape == (1, 2) and set(res.pairs[0]) == {0, 1}
        assert np.isnan(res.max_abs) or 0 <= res.max_abs <= 1

    def test_needs_two_sites(self):
        with pytest.raises(ValueError):
            an.pairwise_correlation(gf_single_patch(1.1), 1, 1, 1.0, 10, seed=0)

    def test_indicator_correlation(self):
        assert an.indicator_correlation(np.array([1, 1, 1]), np.array([0, 1, 0])) is None
        assert an.indicator_correlation(np.array([0, 1, 0, 1]), np.array([0, 1, 0, 1])) == pytest.approx(1)


class TestFronts:
    """Front location and speed."""

    def test_step_profile(self):
        x = np.linspace(0, 1, 1001)
        assert an.front_position((x > 0.6).astype(float), x) == pytest.approx(0.6, abs=1e-3)
        y = (x > 0.6).astype(float)
        y[600] = 0.5  # a node exactly at the threshold is returned as is
        assert an.front_position(y, x) == pytest.approx(0.6)

    def test_homogeneous_is_none(self):
        assert an.front_position(np.full(20, 0.3), np.linspace(0, 1, 20)) is None

    def test_nan_bins_skipped(self):
        y = np.array([0.0, np.nan, np.nan, 1.0])
        assert an.front_position(y, np.arange(4.0)) == pytest.approx(1.5)

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            an.front_position([0, 1], [0, 1], threshold=1.0)

    def test_speed_sign_convention(self):
        t = np.arange(5.0)
        assert an.wave_speed(t, 2 - 0.1 * t, "right") == pytest.approx(0.1)
        assert an.wave_speed(t, 2 - 0.1 * t, "left") == pytest.approx(-0.1)
        assert an.wave_speed(t, [None, None, 1.0, None, None]) is None
        with pytest.raises(ValueError):
            an.wave_speed(t, t, "up")

    # the J=0.5 block is gone by t=16, so its front is tracked early
    @pytest.mark.parametrize("jbar, sign, window", [(0.5, -1, (2, 14)), (1.25, 1, (10, 60))])
    def test_ring_invasion_direction(self, jbar, sign, window):
        model = forest_block_ring(jbar)
        g = gke.make_grid(model.measure, 200)
        s = gke.integrate(model, g, None, 0.05, window[1], snapshot_times=np.arange(window[0], window[1] + 0.1, 2))
        fronts = [an.front_position(P[:, 1], g.nodes) for P in s.values]
        speed = an.wave_speed(s.times, fronts, forest_side="right")
        assert speed is not None and np.sign(speed) == sign

    def test_pinned_front(self):
        model = pinning_model()
        g = gke.make_grid(model.measure, 200)
        times = np.arange(300, 500.1, 10)
        s = gke.integrate(model, g, None, 0.05, 500.0, snapshot_times=times)
        # forest starts on the left; track where P_F falls through 1/2
        fronts = [an.front_position(1 - P[:, 1], g.nodes) for P in s.values]
        assert abs(an.wave_speed(s.times, fronts, forest_side="left")) < 1e-4
        assert abs(fronts[-1] - fronts[-11]) < 0.01


class TestPeriod:
    """Period estimation from mean crossings."""

    def test_sine(self):
        t = np.arange(0, 100, 0.01)
        est = an.estimate_period(np.sin(2 * np.pi * t / 7.3), t)
        assert abs(est.period - 7.3) / 7.3 < 0.01
        assert est.relative_spread < 0.01

    def test_constant_is_none(self):
        t = np.arange(0, 10, 0.1)
        assert an.estimate_period(np.ones_like(t), t) is None

    def test_too_few_cycles(self):
        t = np.arange(0, 10, 0.01)
        assert an.estimate_period(np.sin(2 * np.pi * t / 6.0), t) is None

    def test_window(self):
        t = np.arange(0, 100, 0.01)
        y = np.where(t < 50, np.sin(2 * np.pi * t / 3.0), np.sin(2 * np.pi * t / 5.0))
        assert an.estimate_period(y, t, (55, 100)).period == pytest.approx(5.0, rel=0.01)

    def test_hysteresis_suppresses_jitter(self):
        t = np.arange(0, 200, 0.1)
        y = np.sin(2 * np.pi * t / 20) + 0.05 * np.random.default_rng(1).standard_normal(t.size)
        assert an.estimate_period(y, t, hysteresis=0.3).period == pytest.approx(20, rel=0.02)
        assert an.estimate_period(y, t).period < 15


class TestBasins:
    """End-state survey of the single-patch chain."""

    def test_split_point_synthetic(self):
        stable = np.array([0.15, 1.0])
        fractions = np.linspace(0.1, 0.9, 9)
        end = np.where(fractions[:, None] > 0.33, 1.0, 0.15) + np.zeros((9, 4))
        survey = an.BasinSurvey(0.7, fractions, end, stable, np.array([0.31]))
        assert 0.3 <= survey.split_point() <= 0.4
        np.testing.assert_array_equal(survey.cluster_distance(), 0)

    def test_small_survey(self, tmp_path):
        survey = an.basin_survey(0.7, 300, 30.0, [0.1, 0.9], 3, seed=5)
        assert survey.end_grass.shape == (2, 3)
        np.testing.assert_array_equal(survey.outcome(), [[0, 0, 0], [1, 1, 1]])
        survey.to_csv(tmp_path / "e.csv")
        rows = list(csv.reader(open(tmp_path / "e.csv")))
        assert rows[0] == ["jbar", "initial_grass", "seed", "final_grass"] and len(rows) == 7
