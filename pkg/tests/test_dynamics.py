"""Time-axis tests: trajectory, keyframes, tracking, interpolation, streaming.

The Doppler oracle value 176.05 Hz is (100/3.6 m/s) * 1.9 GHz / c.  Keyframe
pinning is structural: snapshots that land on a keyframe step reuse the exact
keyframe path set, so delays match bitwise and magnitudes to fp noise.
"""

import math

import numpy as np
import pytest

from railchan.dynamics import (
    Trajectory,
    compute_keyframes,
    interpolate_path,
    match_paths,
    sample_trajectory,
    stream_snapshots,
)
from railchan.em import C0, CarrierConfig
from railchan.scene import Building, CylinderScatterer, Scene
from railchan.specular import TraceLimits

F19 = CarrierConfig(frequency_hz=1.9e9)
V100 = 100.0 / 3.6
DOPPLER_MAX = V100 * 1.9e9 / C0  # 176.0477... Hz
LOS_ONLY = TraceLimits(max_reflections=0, max_vertical_diffractions=0, rooftop=False)
FULL = TraceLimits(max_reflections=2, max_vertical_diffractions=1, rooftop=True)


def straight_traj(p0, p1, speed, duration=None):
    return Trajectory(waypoints=np.array([p0, p1], dtype=float), speed=speed, duration=duration)


class TestTrajectory:
    def test_endpoints_and_distance(self):
        traj = straight_traj([0, 0, 4.5], [1666.7, 0, 4.5], V100, duration=60.0)
        np.testing.assert_allclose(sample_trajectory(traj, 0.0), [0, 0, 4.5])
        p = sample_trajectory(traj, 60.0)
        assert p[0] == pytest.approx(V100 * 60.0, abs=1e-9)  # 1666.67 m
        p = sample_trajectory(traj, 0.01)
        assert p[0] == pytest.approx(0.27778, abs=1e-4)  # 27.8 cm per 10 ms

    def test_domain_errors(self):
        traj = straight_traj([0, 0, 0], [100, 0, 0], 10.0, duration=5.0)
        with pytest.raises(ValueError):
            sample_trajectory(traj, -0.01)
        with pytest.raises(ValueError):
            sample_trajectory(traj, 5.01)

    def test_duration_longer_than_polyline_rejected(self):
        with pytest.raises(ValueError):
            straight_traj([0, 0, 0], [10, 0, 0], 10.0, duration=2.0)

    def test_default_duration_covers_polyline(self):
        traj = straight_traj([0, 0, 0], [100, 0, 0], 20.0)
        assert traj.duration == pytest.approx(5.0)

    def test_corner_and_velocity(self):
        traj = Trajectory(
            waypoints=np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [10.0, 10.0, 0.0]]),
            speed=5.0,
        )
        np.testing.assert_allclose(sample_trajectory(traj, 3.0), [10, 5, 0], atol=1e-12)
        np.testing.assert_allclose(traj.velocity(1.0), [5, 0, 0], atol=1e-12)
        np.testing.assert_allclose(traj.velocity(3.0), [0, 5, 0], atol=1e-12)
        # right-continuous at the corner
        np.testing.assert_allclose(traj.velocity(2.0), [0, 5, 0], atol=1e-12)

    def test_piecewise_speeds(self):
        traj = Trajectory(
            waypoints=np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [30.0, 0.0, 0.0]]),
            speed=[10.0, 20.0],
        )
        assert traj.duration == pytest.approx(2.0)
        np.testing.assert_allclose(sample_trajectory(traj, 1.5), [20, 0, 0], atol=1e-12)


class TestKeyframes:
    def test_count_601(self):
        scene = Scene(buildings=[])
        traj = straight_traj([10, 0, 4.5], [2000, 0, 4.5], V100, duration=60.0)
        kfs = compute_keyframes(scene, traj, np.array([0.0, 20.0, 20.5]), F19, 0.1, LOS_ONLY)
        assert len(kfs) == 601
        assert kfs[0].timestamp == 0.0
        assert kfs[-1].timestamp == 60.0
        assert kfs[7].timestamp == 7 * 0.1

    def test_final_partial_interval_included(self):
        scene = Scene(buildings=[])
        traj = straight_traj([10, 0, 4.5], [100, 0, 4.5], 10.0, duration=1.05)
        kfs = compute_keyframes(scene, traj, np.array([0.0, 20.0, 20.5]), F19, 0.5, LOS_ONLY)
        assert [k.timestamp for k in kfs] == [0.0, 0.5, 1.0, 1.05]

    def test_rx_positions_and_paths(self):
        scene = Scene(buildings=[])
        traj = straight_traj([10, 0, 4.5], [100, 0, 4.5], 10.0, duration=2.0)
        tx = np.array([0.0, 20.0, 20.5])
        kfs = compute_keyframes(scene, traj, tx, F19, 1.0, LOS_ONLY)
        for k in kfs:
            np.testing.assert_array_equal(k.rx_position, sample_trajectory(traj, k.timestamp))
            assert len(k.paths) == 1
            assert k.paths[0].signature == "LOS"


class TestMatch:
    def test_matched_and_death(self):
        wall = Building(id=1, footprint=np.array([[-2.0, 10.0], [2.0, 10.0], [2.0, 20.0], [-2.0, 20.0]]), height=30.0)
        scene = Scene(buildings=[wall])
        tx = np.array([0.0, 30.0, 10.0])
        traj = straight_traj([-30, 0, 2], [30, 0, 2], 20.0, duration=3.0)
        kfs = compute_keyframes(scene, traj, tx, F19, 1.5, LOS_ONLY)
        # t=0: rx at, x=-30 -> LoS clear; t=1.5: rx at x=0 -> blocked
        matched, births, deaths = match_paths(kfs[0], kfs[1])
        assert matched == []
        assert births == []
        assert len(deaths) == 1
        assert deaths[0].signature == "LOS"
        matched2, births2, deaths2 = match_paths(kfs[1], kfs[2])
        assert [p.signature for p in births2] == ["LOS"]

    def test_all_matched_identical(self):
        scene = Scene(buildings=[])
        tx = np.array([0.0, 20.0, 20.0])
        traj = straight_traj([10, 0, 2], [30, 0, 2], 10.0, duration=2.0)
        kfs = compute_keyframes(scene, traj, tx, F19, 1.0, LOS_ONLY)
        matched, births, deaths = match_paths(kfs[0], kfs[1])
        assert len(matched) == 1 and births == [] and deaths == []


class TestInterpolateLoS:
    def make(self):
        scene = Scene(buildings=[])
        tx = np.array([0.0, 30.0, 10.0])
        traj = straight_traj([-20, 0, 2], [20, 0, 2], 20.0, duration=2.0)
        kfs = compute_keyframes(scene, traj, tx, F19, 1.0, LOS_ONLY)
        matched, _, _ = match_paths(kfs[0], kfs[1])
        from railchan.dynamics import TrackedPath

        tp = TrackedPath(
            signature="LOS",
            kind="matched",
            t_a=kfs[0].timestamp,
            t_b=kfs[1].timestamp,
            path_a=matched[0][0],
            path_b=matched[0][1],
        )
        return scene, tx, traj, tp

    def test_left_keyframe_identity(self):
        scene, tx, traj, tp = self.make()
        p = interpolate_path(tp, tp.t_a, sample_trajectory(traj, tp.t_a), traj.velocity(tp.t_a), F19)
        np.testing.assert_array_equal(p.vertices, tp.path_a.vertices)
        assert p.delay_s == tp.path_a.delay_s
        np.testing.assert_allclose(p.transfer, tp.path_a.transfer, rtol=1e-12)

    def test_colinear_los_exact_at_all_times(self):
        scene, tx, traj, tp = self.make()
        for t in np.linspace(0.0, 1.0, 11):
            rx = sample_trajectory(traj, t)
            p = interpolate_path(tp, t, rx, traj.velocity(t), F19)
            exact_delay = float(np.linalg.norm(rx - tx)) / C0
            assert p.delay_s == pytest.approx(exact_delay, abs=1e-15)

    def test_phase_law(self):
        scene, tx, traj, tp = self.make()
        t = 0.37
        rx = sample_trajectory(traj, t)
        p = interpolate_path(tp, t, rx, traj.velocity(t), F19)
        dtau = p.delay_s - tp.path_a.delay_s
        for idx in [(0, 0), (1, 1)]:
            want = np.angle(tp.path_a.transfer[idx]) - 2.0 * math.pi * 1.9e9 * dtau
            got = np.angle(p.transfer[idx])
            assert math.cos(got - want) == pytest.approx(1.0, abs=1e-10)

    def test_magnitude_linear(self):
        scene, tx, traj, tp = self.make()
        t = 0.25
        p = interpolate_path(tp, t, sample_trajectory(traj, t), traj.velocity(t), F19)
        a = np.abs(tp.path_a.transfer)
        b = np.abs(tp.path_b.transfer)
        np.testing.assert_allclose(np.abs(p.transfer), 0.75 * a + 0.25 * b, rtol=1e-12)

    def test_outside_interval_rejected(self):
        scene, tx, traj, tp = self.make()
        with pytest.raises(ValueError):
            interpolate_path(tp, 1.5, sample_trajectory(traj, 1.5), traj.velocity(1.5), F19)


class TestDoppler:
    def test_head_on_176hz(self):
        scene = Scene(buildings=[])
        tx = np.array([0.0, 0.0, 1.5])
        traj = straight_traj([200, 0, 1.5], [100, 0, 1.5], V100, duration=3.0)
        res = stream_snapshots(scene, traj, tx, F19, update_step=0.01, kf_interval=0.01, limits=LOS_ONLY)
        for snap in res.snapshots[::50]:
            assert snap.paths[0].doppler_hz == pytest.approx(DOPPLER_MAX, abs=0.05)

    def test_broadside_zero(self):
        scene = Scene(buildings=[])
        tx = np.array([0.0, 50.0, 1.5])
        traj = straight_traj([-10, 0, 1.5], [10, 0, 1.5], V100, duration=0.72)
        res = stream_snapshots(scene, traj, tx, F19, update_step=0.01, kf_interval=0.01, limits=LOS_ONLY)
        i_mid = int(round((10.0 / V100) / 0.01))
        assert abs(res.snapshots[i_mid].paths[0].doppler_hz) < 0.5

    def test_interpolated_phase_consistency(self):
        scene = Scene(buildings=[])
        tx = np.array([0.0, 30.0, 10.0])
        traj = straight_traj([-40, 0, 2], [40, 0, 2], V100, duration=2.5)
        res = stream_snapshots(scene, traj, tx, F19, update_step=0.01, kf_interval=0.1, limits=LOS_ONLY)
        snaps = res.snapshots
        checked = 0
        for i in range(1, len(snaps) - 1):
            trio = [snaps[i - 1], snaps[i], snaps[i + 1]]
            # stay strictly inside one bracket
            if any(s.at_keyframe for s in trio):
                continue
            taus = [s.paths[0].delay_s for s in trio]
            numeric = -1.9e9 * (taus[2] - taus[0]) / 0.02
            assert snaps[i].paths[0].doppler_hz == pytest.approx(numeric, abs=1.0)
            checked += 1
        assert checked > 50


class TestStream:
    def wall_scene(self):
        wall = Building(id=1, footprint=np.array([[-2.0, 10.0], [2.0, 10.0], [2.0, 20.0], [-2.0, 20.0]]), height=30.0)
        side = Building(id=2, footprint=np.array([[-40.0, -12.0], [40.0, -12.0], [40.0, -10.0], [-40.0, -10.0]]), height=25.0)
        return Scene(buildings=[wall, side])

    def test_snapshot_count_and_timestamps(self):
        scene = Scene(buildings=[])
        traj = straight_traj([10, 0, 2], [60, 0, 2], 20.0, duration=1.0)
        res = stream_snapshots(scene, traj, np.array([0.0, 20.0, 20.0]), F19, update_step=0.01, kf_interval=0.1, limits=LOS_ONLY)
        assert len(res.snapshots) == 101
        assert res.snapshots[0].timestamp == 0.0
        assert res.snapshots[-1].timestamp == 100 * 0.01
        assert res.rt_invocations == 11

    def test_rt_invocations_independent_of_update_step(self):
        scene = Scene(buildings=[])
        traj = straight_traj([10, 0, 2], [60, 0, 2], 20.0, duration=1.0)
        tx = np.array([0.0, 20.0, 20.0])
        a = stream_snapshots(scene, traj, tx, F19, update_step=0.01, kf_interval=0.05, limits=LOS_ONLY)
        b = stream_snapshots(scene, traj, tx, F19, update_step=0.025, kf_interval=0.05, limits=LOS_ONLY)
        assert a.rt_invocations == b.rt_invocations == 21

    def test_rt_invocations_non_divisor_interval(self):
        scene = Scene(buildings=[])
        traj = straight_traj([10, 0, 2], [60, 0, 2], 20.0, duration=1.0)
        res = stream_snapshots(scene, traj, np.array([0.0, 20.0, 20.0]), F19, update_step=0.01, kf_interval=0.03, limits=LOS_ONLY)
        assert res.rt_invocations == math.ceil(1.0 / 0.03) + 1  # 35, final step appended

    def test_degenerate_interval_equals_exact(self):
        scene = self.wall_scene()
        traj = straight_traj([-30, 0, 2], [30, 0, 2], 20.0, duration=1.0)
        tx = np.array([0.0, 30.0, 10.0])
        a = stream_snapshots(scene, traj, tx, F19, update_step=0.02, kf_interval=0.02, limits=FULL, seed=7)
        b = stream_snapshots(scene, traj, tx, F19, update_step=0.02, kf_interval=0.02, limits=FULL, seed=99)
        for sa, sb in zip(a.snapshots, b.snapshots):
            assert [p.signature for p in sa.paths] == [p.signature for p in sb.paths]
            for pa, pb in zip(sa.paths, sb.paths):
                np.testing.assert_array_equal(pa.transfer, pb.transfer)
                assert pa.delay_s == pb.delay_s

    def test_keyframe_pinning_against_exact(self):
        scene = self.wall_scene()
        traj = straight_traj([-30, 0, 2], [30, 0, 2], 20.0, duration=1.0)
        tx = np.array([0.0, 30.0, 10.0])
        exact = stream_snapshots(scene, traj, tx, F19, update_step=0.02, kf_interval=0.02, limits=FULL)
        interp = stream_snapshots(scene, traj, tx, F19, update_step=0.02, kf_interval=0.1, limits=FULL)
        stride = 5
        for i in range(0, len(exact.snapshots), stride):
            se, si = exact.snapshots[i], interp.snapshots[i]
            assert si.at_keyframe
            assert [p.signature for p in se.paths] == [p.signature for p in si.paths]
            for pe, pi in zip(se.paths, si.paths):
                assert pe.delay_s == pi.delay_s
                np.testing.assert_array_equal(pe.vertices, pi.vertices)
                np.testing.assert_allclose(np.abs(pi.transfer), np.abs(pe.transfer), rtol=1e-10)

    def test_continuity_kinematic_bound(self):
        scene = self.wall_scene()
        traj = straight_traj([-30, 0, 2], [30, 0, 2], 20.0, duration=1.0)
        tx = np.array([0.0, 30.0, 10.0])
        res = stream_snapshots(scene, traj, tx, F19, update_step=0.01, kf_interval=0.1, limits=FULL, seed=3)
        bound = 2.0 * 20.0 * 0.01 / C0
        snaps = res.snapshots
        for s0, s1 in zip(snaps[:-1], snaps[1:]):
            d0 = {p.signature: p for p in s0.paths}
            for p in s1.paths:
                q = d0.get(p.signature)
                if q is None:
                    continue
                assert abs(p.delay_s - q.delay_s) <= bound

    def test_birth_death_ramp_and_determinism(self):
        scene = self.wall_scene()
        traj = straight_traj([-30, 0, 2], [30, 0, 2], 20.0, duration=3.0)
        tx = np.array([0.0, 30.0, 10.0])
        r1 = stream_snapshots(scene, traj, tx, F19, update_step=0.01, kf_interval=0.1, limits=LOS_ONLY, seed=5)
        r2 = stream_snapshots(scene, traj, tx, F19, update_step=0.01, kf_interval=0.1, limits=LOS_ONLY, seed=5)
        mags1 = [sum(np.abs(p.transfer[0, 0]) for p in s.paths if p.signature == "LOS") for s in r1.snapshots]
        mags2 = [sum(np.abs(p.transfer[0, 0]) for p in s.paths if p.signature == "LOS") for s in r2.snapshots]
        assert mags1 == mags2  # determinism
        # LoS present at start, vanishes in the middle, returns near the end
        assert mags1[0] > 0
        assert min(mags1[140:160]) == 0.0
        assert mags1[-1] > 0
        # ramps: magnitude transitions pass through strictly intermediate values
        full = mags1[0]
        assert any(0.0 < m < 0.9 * full for m in mags1)

    def test_birth_death_seed_changes_schedule(self):
        scene = self.wall_scene()
        traj = straight_traj([-30, 0, 2], [30, 0, 2], 20.0, duration=3.0)
        tx = np.array([0.0, 30.0, 10.0])
        r1 = stream_snapshots(scene, traj, tx, F19, update_step=0.01, kf_interval=0.1, limits=LOS_ONLY, seed=5)
        r3 = stream_snapshots(scene, traj, tx, F19, update_step=0.01, kf_interval=0.1, limits=LOS_ONLY, seed=6)
        mags1 = [sum(np.abs(p.transfer[0, 0]) for p in s.paths if p.signature == "LOS") for s in r1.snapshots]
        mags3 = [sum(np.abs(p.transfer[0, 0]) for p in s.paths if p.signature == "LOS") for s in r3.snapshots]
        assert mags1 != mags3


class TestScatterModes:
    def pylon_scene(self):
        return Scene(
            buildings=[],
            scatterers=[CylinderScatterer(id=9, base_center=np.array([0.0, 10.0, 0.0]), radius=0.375, height=8.2)],
        )

    def test_exact_scatter_every_snapshot(self):
        scene = self.pylon_scene()
        tx = np.array([0.0, 30.0, 10.0])
        traj = straight_traj([-20, 0, 2], [20, 0, 2], 20.0, duration=2.0)
        res = stream_snapshots(scene, traj, tx, F19, update_step=0.05, kf_interval=0.25, limits=LOS_ONLY, scatter_mode="exact")
        for s in res.snapshots:
            tags = [p.tag for p in s.paths]
            assert tags.count("scatter") == 1
            assert tags == sorted(tags, key=lambda x: x == "scatter")  # scatter after specular
        # Doppler sign flips as the receiver passes the pylon
        first = res.snapshots[0].paths[-1].doppler_hz
        last = res.snapshots[-1].paths[-1].doppler_hz
        assert first > 0 > last

    def test_scatter_off_specular_bitwise_identical(self):
        scene = self.pylon_scene()
        tx = np.array([0.0, 30.0, 10.0])
        traj = straight_traj([-20, 0, 2], [20, 0, 2], 20.0, duration=2.0)
        on = stream_snapshots(scene, traj, tx, F19, update_step=0.05, kf_interval=0.25, limits=LOS_ONLY, scatter_mode="exact", seed=11)
        off = stream_snapshots(scene, traj, tx, F19, update_step=0.05, kf_interval=0.25, limits=LOS_ONLY, scatter_mode="off", seed=11)
        for s_on, s_off in zip(on.snapshots, off.snapshots):
            spec_on = [p for p in s_on.paths if p.tag == "specular"]
            assert len(spec_on) == len(s_off.paths)
            for pa, pb in zip(spec_on, s_off.paths):
                assert pa.signature == pb.signature
                np.testing.assert_array_equal(pa.transfer, pb.transfer)
                assert pa.delay_s == pb.delay_s
                assert pa.doppler_hz == pb.doppler_hz

    def test_interpolated_scatter_tracked(self):
        scene = self.pylon_scene()
        tx = np.array([0.0, 30.0, 10.0])
        traj = straight_traj([-20, 0, 2], [20, 0, 2], 20.0, duration=1.0)
        res = stream_snapshots(scene, traj, tx, F19, update_step=0.05, kf_interval=0.25, limits=LOS_ONLY, scatter_mode="interpolated")
        assert all(any(p.tag == "scatter" for p in s.paths) for s in res.snapshots)

    def test_timings_recorded(self):
        scene = self.pylon_scene()
        tx = np.array([0.0, 30.0, 10.0])
        traj = straight_traj([-20, 0, 2], [20, 0, 2], 20.0, duration=0.5)
        res = stream_snapshots(scene, traj, tx, F19, update_step=0.05, kf_interval=0.25, limits=LOS_ONLY, scatter_mode="exact")
        assert res.keyframe_seconds > 0.0
        assert res.scatter_seconds > 0.0
        assert res.interpolation_seconds >= 0.0
