import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from needle_mpc.errors import InvalidConfigError, InvalidInputError, OutOfRangeError
from needle_mpc.references import (
    FixedTarget,
    Helix,
    Replay,
    SharpTurn,
    Sinusoidal,
    WaypointPath,
    check_path_speed,
    horizon_samples,
    sample,
)
from oracles import helix_point

times_st = st.floats(min_value=0.0, max_value=1e4, allow_nan=False)


class TestFixedTarget:
    def test_constant_at_any_time(self):
        spec = FixedTarget(target=(5.0, -15.0, 150.0))
        for t in (0.0, 0.37, 12.0, 1e6):
            assert np.array_equal(sample(spec, t), [5.0, -15.0, 150.0])

    def test_rejects_bad_target(self):
        with pytest.raises(InvalidConfigError):
            FixedTarget(target=(1.0, 2.0))
        with pytest.raises(InvalidConfigError):
            FixedTarget(target=(1.0, np.nan, 3.0))


class TestHelix:
    def test_degenerate_radius_is_a_line(self):
        # radius 0 collapses to the axis line advancing at pitch*rate/(2 pi)
        spec = Helix(radius=0.0, pitch=40.0, rate=1.2, center=(1.0, 2.0, 3.0))
        speed = 40.0 * 1.2 / (2.0 * math.pi)
        for t in (0.0, 1.0, 5.5):
            np.testing.assert_allclose(
                sample(spec, t), [1.0, 2.0, 3.0 + speed * t], atol=1e-12
            )

    def test_starts_on_circle_at_phase(self):
        spec = Helix(radius=10.0, pitch=40.0, rate=1.2, phase=0.5)
        p0 = sample(spec, 0.0)
        np.testing.assert_allclose(
            p0, [10.0 * math.cos(0.5), 10.0 * math.sin(0.5), 0.0], atol=1e-12
        )

    @pytest.mark.parametrize("axis", ["x", "y", "z"])
    def test_matches_closed_form_all_axes(self, axis):
        spec = Helix(
            radius=7.5, pitch=25.0, rate=0.8, center=(-3.0, 4.0, 1.0),
            phase=0.2, axis=axis,
        )
        for t in np.linspace(0.0, 20.0, 17):
            expected = helix_point(t, 7.5, 25.0, 0.8, (-3.0, 4.0, 1.0), 0.2, axis)
            np.testing.assert_allclose(sample(spec, t), expected, atol=1e-12)

    def test_radial_distance_constant(self):
        spec = Helix(radius=10.0, pitch=40.0, rate=1.2, center=(-10.0, 0.0, 0.0))
        for t in np.linspace(0.0, 10.0, 11):
            p = sample(spec, t)
            assert math.hypot(p[0] + 10.0, p[1]) == pytest.approx(10.0, abs=1e-12)

    def test_validation(self):
        with pytest.raises(InvalidConfigError):
            Helix(radius=-1.0, pitch=40.0, rate=1.2)
        with pytest.raises(InvalidConfigError):
            Helix(radius=10.0, pitch=math.inf, rate=1.2)
        with pytest.raises(InvalidConfigError):
            Helix(radius=10.0, pitch=40.0, rate=1.2, axis="w")


class TestSharpTurn:
    def test_two_waypoint_interpolation(self):
        spec = SharpTurn(waypoints=[(0.0, 0.0, 0.0), (0.0, 0.0, 100.0)], speed=10.0)
        np.testing.assert_allclose(sample(spec, 5.0), [0.0, 0.0, 50.0], atol=1e-12)

    def test_constant_speed_between_corners(self):
        spec = SharpTurn(
            waypoints=[(0.0, 0.0, 0.0), (0.0, 0.0, 60.0), (60.0, 0.0, 60.0)],
            speed=12.0,
        )
        # both legs are 60 mm, so the corner sits at t = 5 s and the end at 10 s
        np.testing.assert_allclose(spec.corner_times(), [5.0])
        np.testing.assert_allclose(sample(spec, 2.5), [0.0, 0.0, 30.0], atol=1e-12)
        np.testing.assert_allclose(sample(spec, 7.5), [30.0, 0.0, 60.0], atol=1e-12)

    def test_holds_last_point(self):
        spec = SharpTurn(waypoints=[(0.0, 0.0, 0.0), (0.0, 0.0, 60.0)], speed=12.0)
        np.testing.assert_array_equal(sample(spec, 99.0), [0.0, 0.0, 60.0])

    def test_validation(self):
        with pytest.raises(InvalidConfigError):
            SharpTurn(waypoints=[(0.0, 0.0, 0.0)], speed=10.0)
        with pytest.raises(InvalidConfigError):
            SharpTurn(waypoints=[(0.0, 0.0, 0.0), (0.0, 0.0, 0.0)], speed=10.0)
        with pytest.raises(InvalidConfigError):
            SharpTurn(waypoints=[(0.0, 0.0, 0.0), (0.0, 0.0, 1.0)], speed=0.0)


class TestSinusoidal:
    def test_closed_form(self):
        spec = Sinusoidal(
            axial_speed=18.0, amplitude=(10.0, 6.0), frequency=(0.15, 0.1),
            phase=(0.3, -0.2),
        )
        for t in np.linspace(0.0, 12.0, 9):
            expected = [
                10.0 * math.sin(2.0 * math.pi * 0.15 * t + 0.3),
                6.0 * math.sin(2.0 * math.pi * 0.1 * t - 0.2),
                18.0 * t,
            ]
            np.testing.assert_allclose(sample(spec, t), expected, atol=1e-12)

    def test_zero_amplitude_is_straight_insertion(self):
        spec = Sinusoidal(axial_speed=24.0)
        np.testing.assert_allclose(sample(spec, 3.0), [0.0, 0.0, 72.0], atol=1e-12)


class TestWaypointPath:
    def test_linear_interpolation(self):
        spec = WaypointPath(points=[(0.0, 0.0, 0.0), (0.0, 0.0, 100.0)], times=[0.0, 10.0])
        np.testing.assert_allclose(sample(spec, 5.0), [0.0, 0.0, 50.0], atol=1e-12)

    def test_holds_at_both_ends(self):
        spec = WaypointPath(
            points=[(1.0, 2.0, 3.0), (4.0, 5.0, 6.0)], times=[1.0, 2.0]
        )
        np.testing.assert_array_equal(sample(spec, 0.0), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(sample(spec, 10.0), [4.0, 5.0, 6.0])

    def test_validation(self):
        with pytest.raises(InvalidConfigError):
            WaypointPath(points=[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)], times=[0.0])
        with pytest.raises(InvalidConfigError):
            WaypointPath(points=[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)], times=[1.0, 1.0])
        with pytest.raises(InvalidConfigError):
            WaypointPath(points=[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)], times=[2.0, 1.0])


class TestReplay:
    def _write_csv(self, path, rows, header="t_s,x_mm,y_mm,z_mm"):
        lines = [header] + [",".join(str(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n")

    def test_round_trip_from_csv(self, tmp_path):
        rows = [(0.0, 0.0, 0.0, 0.0), (1.0, 1.0, -2.0, 20.0), (2.0, 2.5, -3.0, 40.0)]
        f = tmp_path / "tip.csv"
        self._write_csv(f, rows)
        spec = Replay.from_csv(f)
        np.testing.assert_allclose(sample(spec, 0.5), [0.5, -1.0, 10.0], atol=1e-12)
        np.testing.assert_allclose(sample(spec, 2.0), [2.5, -3.0, 40.0], atol=1e-12)
        np.testing.assert_array_equal(sample(spec, 5.0), sample(spec, 2.0))

    def test_query_before_first_sample_is_out_of_range(self, tmp_path):
        f = tmp_path / "tip.csv"
        self._write_csv(f, [(1.0, 0.0, 0.0, 0.0), (2.0, 0.0, 0.0, 10.0)])
        spec = Replay.from_csv(f)
        with pytest.raises(OutOfRangeError):
            sample(spec, 0.5)
        # exactly at the first timestamp is fine
        np.testing.assert_array_equal(sample(spec, 1.0), [0.0, 0.0, 0.0])

    def test_rejects_wrong_header(self, tmp_path):
        f = tmp_path / "tip.csv"
        self._write_csv(f, [(0.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 1.0)], header="t,x,y,z")
        with pytest.raises(InvalidInputError):
            Replay.from_csv(f)

    def test_rejects_non_numeric_rows(self, tmp_path):
        f = tmp_path / "tip.csv"
        f.write_text("t_s,x_mm,y_mm,z_mm\n0.0,0.0,oops,0.0\n1.0,0.0,0.0,1.0\n")
        with pytest.raises(InvalidInputError):
            Replay.from_csv(f)

    def test_rejects_single_sample(self, tmp_path):
        f = tmp_path / "tip.csv"
        self._write_csv(f, [(0.0, 0.0, 0.0, 0.0)])
        with pytest.raises(InvalidInputError):
            Replay.from_csv(f)


class TestSampleGuards:
    def test_negative_time_rejected(self):
        spec = FixedTarget(target=(0.0, 0.0, 1.0))
        with pytest.raises(InvalidInputError):
            sample(spec, -0.1)
        with pytest.raises(InvalidInputError):
            sample(spec, math.nan)


ALL_SPECS = [
    FixedTarget(target=(5.0, -15.0, 150.0)),
    Helix(radius=10.0, pitch=40.0, rate=1.2, center=(-10.0, 0.0, 0.0)),
    SharpTurn(
        waypoints=[(0.0, 0.0, 0.0), (0.0, 0.0, 60.0), (60.0, 0.0, 60.0)], speed=12.0
    ),
    Sinusoidal(axial_speed=18.0, amplitude=(10.0, 6.0), frequency=(0.15, 0.1)),
    WaypointPath(points=[(0.0, 0.0, 0.0), (3.0, 0.0, 30.0)], times=[0.0, 2.0]),
]


class TestContinuity:
    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: type(s).__name__)
    def test_small_time_step_small_motion(self, spec):
        # every generator is C0: adjacent samples on a fine grid stay close
        grid = np.linspace(0.0, 15.0, 3001)
        pts = np.stack([sample(spec, t) for t in grid])
        jumps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        # fastest configured reference moves ~24 mm/s; dt = 5 ms
        assert jumps.max() < 24.0 * 0.005 * 1.5

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: type(s).__name__)
    @given(t=times_st)
    @settings(max_examples=30, deadline=None)
    def test_deterministic(self, spec, t):
        np.testing.assert_array_equal(sample(spec, t), sample(spec, t))


class TestHorizonSamples:
    def test_fixed_target_repeats(self):
        spec = FixedTarget(target=(5.0, -15.0, 150.0))
        refs = horizon_samples(spec, 2.0, 5, 0.05)
        assert refs.shape == (6, 3)
        assert np.all(refs == refs[0])

    def test_linear_path_equally_spaced(self):
        spec = WaypointPath(points=[(0.0, 0.0, 0.0), (0.0, 0.0, 100.0)], times=[0.0, 10.0])
        refs = horizon_samples(spec, 0.0, 2, 1.0)
        np.testing.assert_allclose(
            refs, [[0.0, 0.0, 0.0], [0.0, 0.0, 10.0], [0.0, 0.0, 20.0]], atol=1e-12
        )
        steps = np.diff(refs, axis=0)
        np.testing.assert_allclose(steps[0], steps[1], atol=1e-12)

    def test_helix_matches_direct_evaluation(self):
        spec = Helix(radius=10.0, pitch=40.0, rate=1.2, center=(-10.0, 0.0, 0.0))
        t0, n, ts = 1.7, 5, 0.05
        refs = horizon_samples(spec, t0, n, ts)
        for i in range(n + 1):
            expected = helix_point(
                t0 + i * ts, 10.0, 40.0, 1.2, (-10.0, 0.0, 0.0), 0.0, "z"
            )
            np.testing.assert_allclose(refs[i], expected, atol=1e-12)

    @given(t=times_st)
    @settings(max_examples=50, deadline=None)
    def test_first_row_equals_direct_sample(self, t):
        spec = Sinusoidal(axial_speed=18.0, amplitude=(10.0, 6.0), frequency=(0.15, 0.1))
        refs = horizon_samples(spec, t, 3, 0.05)
        np.testing.assert_array_equal(refs[0], sample(spec, t))

    def test_validation(self):
        spec = FixedTarget(target=(0.0, 0.0, 1.0))
        with pytest.raises(InvalidInputError):
            horizon_samples(spec, 0.0, 0, 0.05)
        with pytest.raises(InvalidInputError):
            horizon_samples(spec, 0.0, 5, 0.0)


class TestPathSpeedCheck:
    def test_feasible_path_is_quiet(self, recwarn):
        spec = WaypointPath(points=[(0.0, 0.0, 0.0), (0.0, 0.0, 100.0)], times=[0.0, 10.0])
        top = check_path_speed(spec, duration=10.0, u_s_max=24.0)
        assert top == pytest.approx(10.0, rel=1e-6)
        assert len(recwarn) == 0

    def test_too_fast_path_warns(self):
        spec = WaypointPath(points=[(0.0, 0.0, 0.0), (0.0, 0.0, 300.0)], times=[0.0, 10.0])
        with pytest.warns(UserWarning, match="cannot be tracked"):
            check_path_speed(spec, duration=10.0, u_s_max=24.0)

    def test_within_margin_does_not_warn(self, recwarn):
        # 4% over the bound is inside the 5% margin
        spec = WaypointPath(points=[(0.0, 0.0, 0.0), (0.0, 0.0, 249.6)], times=[0.0, 10.0])
        check_path_speed(spec, duration=10.0, u_s_max=24.0)
        assert len(recwarn) == 0
