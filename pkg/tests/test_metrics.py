"""Metric oracles: every numeric target below is hand-computed.

Narrowband power: 100 m free space at 1.9 GHz is a 78.0 dB loss, so a 43 dBm
transmitter is received at -35.0 dBm.  Delay stats for 3:1 powers at 0/100 ns
give mean 25 ns and spread sqrt(0.75*25^2 + 0.25*75^2) = 43.30 ns.  The
raised-cosine pulse has unit peak and energy T*(1 - beta/4).  NRMSE for a
constant 2.29 dB error against a reference whose Q90-Q10 gap is 22.9 dB is
exactly 0.10.
"""

import math

import numpy as np
import pytest

from railchan.dynamics import ChannelSnapshot
from railchan.em import C0, CarrierConfig
from railchan.metrics import (
    angle_stats,
    compare_streams,
    delay_stats,
    doppler_stats,
    narrowband_power,
    power_decomposition,
    raised_cosine_pulse,
    snapshot_metrics,
    synthesize_tv_cir,
)
from railchan.rays import TAG_SCATTER, TAG_SPECULAR, RayPath
from railchan.scene import Scene
from railchan.specular import TraceLimits, trace_specular

F19 = CarrierConfig(frequency_hz=1.9e9)
_DUMMY_VERTS = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])


def make_path(delay=1e-6, t00=1.0, transfer=None, aoa=(0.0, 0.0), doppler=0.0, tag=TAG_SPECULAR):
    if transfer is None:
        transfer = np.array([[t00, 0.0], [0.0, 0.0]], dtype=complex)
    return RayPath(
        interactions=(),
        vertices=_DUMMY_VERTS,
        delay_s=delay,
        length_m=delay * C0,
        aod=(0.0, 0.0),
        aoa=aoa,
        transfer=np.asarray(transfer, dtype=complex),
        tag=tag,
        doppler_hz=doppler,
    )


def snap(paths, t=0.0):
    return ChannelSnapshot(index=0, timestamp=t, rx_position=np.zeros(3), paths=paths, at_keyframe=True)


class TestNarrowbandPower:
    def test_free_space_100m_43dbm(self):
        scene = Scene(buildings=[])
        paths = trace_specular(
            scene,
            np.array([0.0, 0.0, 10.0]),
            np.array([100.0, 0.0, 10.0]),
            limits=TraceLimits(0, 0, rooftop=False),
            carrier=F19,
        )
        p = narrowband_power(paths, "vv", tx_power_dbm=43.0)
        assert p == pytest.approx(-35.0, abs=0.1)

    def test_out_of_phase_cancellation(self):
        a = make_path(t00=1.0)
        b = make_path(t00=-1.0)
        assert narrowband_power([a, b], "vv") == -math.inf

    def test_in_phase_doubling(self):
        one = narrowband_power([make_path(t00=0.5)], "vv")
        two = narrowband_power([make_path(t00=0.5), make_path(t00=0.5)], "vv")
        assert two - one == pytest.approx(20.0 * math.log10(2.0), abs=1e-9)

    def test_empty_sentinel(self):
        assert narrowband_power([], "vv") == -math.inf

    def test_pol_pair_selects_entry(self):
        t = np.array([[1.0, 0.5], [0.25, 2.0]], dtype=complex)
        p = [make_path(transfer=t)]
        assert narrowband_power(p, "vv") == pytest.approx(0.0)
        assert narrowband_power(p, "vh") == pytest.approx(20 * math.log10(0.5))
        assert narrowband_power(p, "hv") == pytest.approx(20 * math.log10(0.25))
        assert narrowband_power(p, "hh") == pytest.approx(20 * math.log10(2.0))


class TestDelayStats:
    def test_single_path(self):
        mean, spread = delay_stats([make_path(delay=1e-6)])
        assert mean == pytest.approx(1e-6)
        assert spread == 0.0

    def test_equal_powers(self):
        mean, spread = delay_stats([make_path(delay=0.0), make_path(delay=100e-9)])
        assert mean == pytest.approx(50e-9)
        assert spread == pytest.approx(50e-9)

    def test_three_to_one_powers(self):
        paths = [
            make_path(delay=0.0, t00=math.sqrt(3.0)),
            make_path(delay=100e-9, t00=1.0),
        ]
        mean, spread = delay_stats(paths)
        assert mean == pytest.approx(25e-9, rel=1e-12)
        assert spread == pytest.approx(math.sqrt(0.75 * 625 + 0.25 * 5625) * 1e-9, rel=1e-12)

    def test_empty_sentinel(self):
        mean, spread = delay_stats([])
        assert math.isnan(mean) and math.isnan(spread)

    def test_scale_invariance(self):
        paths = [make_path(delay=0.0, t00=2.0), make_path(delay=80e-9, t00=0.7)]
        scaled = [make_path(delay=p.delay_s, t00=10.0 * p.transfer[0, 0].real) for p in paths]
        assert delay_stats(paths)[1] == pytest.approx(delay_stats(scaled)[1], rel=1e-12)


class TestAngleStats:
    def test_single_path(self):
        mh, sh, mv, sv = angle_stats([make_path(aoa=(math.radians(30), 0.1))])
        assert mh == pytest.approx(math.radians(30))
        assert sh == pytest.approx(0.0, abs=1e-9)
        assert mv == pytest.approx(0.1)
        assert sv == pytest.approx(0.0, abs=1e-12)

    def test_wraparound_mean(self):
        paths = [make_path(aoa=(math.radians(170), 0.0)), make_path(aoa=(math.radians(-170), 0.0))]
        mh, sh, _, _ = angle_stats(paths)
        assert math.cos(mh - math.pi) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_mean_45deg(self):
        paths = [make_path(aoa=(0.0, 0.0)), make_path(aoa=(math.pi / 2, 0.0))]
        mh, _, _, _ = angle_stats(paths)
        assert mh == pytest.approx(math.pi / 4, rel=1e-12)

    def test_small_cluster_spread_matches_rms(self):
        d = math.radians(2.0)
        paths = [make_path(aoa=(d, 0.0)), make_path(aoa=(-d, 0.0))]
        _, sh, _, _ = angle_stats(paths)
        assert sh == pytest.approx(d, rel=1e-3)

    def test_rotation_invariance(self):
        paths = [
            make_path(aoa=(0.3, 0.0), t00=1.0),
            make_path(aoa=(1.1, 0.0), t00=0.5),
            make_path(aoa=(-0.4, 0.0), t00=0.25),
        ]
        alpha = 2.5
        rotated = [make_path(aoa=(p.aoa[0] + alpha, 0.0), t00=abs(p.transfer[0, 0])) for p in paths]
        mh0, sh0, _, _ = angle_stats(paths)
        mh1, sh1, _, _ = angle_stats(rotated)
        assert math.cos(mh1 - mh0 - alpha) == pytest.approx(1.0, abs=1e-12)
        assert sh1 == pytest.approx(sh0, rel=1e-9)

    def test_vertical_linear_stats(self):
        paths = [make_path(aoa=(0.0, 0.0)), make_path(aoa=(0.0, 0.2))]
        _, _, mv, sv = angle_stats(paths)
        assert mv == pytest.approx(0.1)
        assert sv == pytest.approx(0.1)


class TestDopplerStats:
    def test_head_on_values(self):
        mean, spread = doppler_stats([make_path(doppler=176.05)])
        assert mean == pytest.approx(176.05)
        assert spread == 0.0

    def test_symmetric_pair(self):
        mean, spread = doppler_stats([make_path(doppler=176.0), make_path(doppler=-176.0)])
        assert mean == pytest.approx(0.0, abs=1e-9)
        assert spread == pytest.approx(176.0, rel=1e-12)

    def test_empty_sentinel(self):
        mean, spread = doppler_stats([])
        assert math.isnan(mean) and math.isnan(spread)


class TestSnapshotMetrics:
    def test_fields_populated(self):
        s = snap([make_path(delay=1e-6, aoa=(0.5, 0.1), doppler=10.0)])
        m = snapshot_metrics(s, tx_power_dbm=43.0)
        assert m.power_vv == pytest.approx(43.0)
        assert m.power_hh == -math.inf
        assert m.mean_delay == pytest.approx(1e-6)
        assert m.delay_spread == 0.0
        assert m.mean_haoa == pytest.approx(0.5)
        assert m.mean_vaoa == pytest.approx(0.1)
        assert m.mean_doppler == pytest.approx(10.0)
        assert m.timestamp == 0.0


class TestRaisedCosine:
    B = 100e6
    BETA = 0.95

    def test_unit_peak(self):
        assert raised_cosine_pulse(0.0, self.B, self.BETA) == 1.0

    def test_singular_point_finite(self):
        t_sing = 1.0 / (2.0 * self.BETA * self.B)
        want = (math.pi / 4.0) * np.sinc(1.0 / (2.0 * self.BETA))
        got = raised_cosine_pulse(t_sing, self.B, self.BETA)
        assert got == pytest.approx(want, rel=1e-12)
        # approaching the singularity from both sides agrees with the limit
        eps = 1e-14
        assert raised_cosine_pulse(t_sing + eps, self.B, self.BETA) == pytest.approx(want, rel=1e-4)

    def test_zero_crossings_at_symbol_times(self):
        T = 1.0 / self.B
        for k in (1, 2, 3):
            assert abs(raised_cosine_pulse(k * T, self.B, self.BETA)) < 1e-12


class TestTVCir:
    B = 100e6
    BETA = 0.95

    def test_single_path_peak_on_nearest_bin(self):
        s = snap([make_path(delay=200e-9, t00=2.0)])
        cir = synthesize_tv_cir([s], self.B, self.BETA, "vv")
        k = int(np.argmax(np.abs(cir.amplitude[:, 0])))
        assert abs(cir.delays[k] - 200e-9) <= 0.5 / (2.0 * self.B) + 1e-15
        assert np.abs(cir.amplitude[k, 0]) == pytest.approx(2.0, rel=1e-6)

    def test_coarse_grid_rejected(self):
        s = snap([make_path(delay=100e-9)])
        grid = np.arange(0.0, 400e-9, 20e-9)  # 20 ns > 1/(2B) = 5 ns
        with pytest.raises(ValueError):
            synthesize_tv_cir([s], self.B, self.BETA, "vv", delay_grid=grid)

    def test_energy_conservation_when_resolvable(self):
        # separation 100 ns > 2/B = 20 ns
        s = snap([make_path(delay=200e-9, t00=1.0), make_path(delay=300e-9, t00=0.5)])
        cir = synthesize_tv_cir([s], self.B, self.BETA, "vv")
        d_tau = cir.delays[1] - cir.delays[0]
        energy = float(np.sum(np.abs(cir.amplitude[:, 0]) ** 2) * d_tau)
        T = 1.0 / self.B
        e_pulse = T * (1.0 - self.BETA / 4.0)
        want = (1.0**2 + 0.5**2) * e_pulse
        assert energy == pytest.approx(want, rel=0.01)

    def test_time_axis_matches_snapshots(self):
        snaps = [snap([make_path(delay=50e-9)], t=0.0), snap([make_path(delay=60e-9)], t=0.01)]
        cir = synthesize_tv_cir(snaps, self.B, self.BETA, "vv")
        np.testing.assert_allclose(cir.times, [0.0, 0.01])
        assert cir.amplitude.shape == (len(cir.delays), 2)

    def test_empty_snapshot_column_is_zero(self):
        snaps = [snap([make_path(delay=50e-9)], t=0.0), snap([], t=0.01)]
        cir = synthesize_tv_cir(snaps, self.B, self.BETA, "vv")
        assert np.all(cir.amplitude[:, 1] == 0.0)


def power_series_snapshots(values_db, t0=0.0, dt=0.01, aoa=None, doppler=0.0):
    """One single-path snapshot per value, with power_vv equal to the value."""
    out = []
    for i, v in enumerate(values_db):
        amp = 10.0 ** (v / 20.0)
        a = aoa[i] if aoa is not None else (0.0, 0.0)
        out.append(snap([make_path(t00=amp, aoa=a, doppler=doppler)], t=t0 + i * dt))
    return out


class TestCompareStreams:
    def test_self_compare_all_zero(self):
        ref = power_series_snapshots(np.linspace(-60, -30, 25))
        rep = compare_streams(ref, ref)
        for name, m in rep.metrics.items():
            if m.n_samples == 0:  # e.g. power_hh of a VV-only synthetic stream
                continue
            assert m.rmse == 0.0, name
            if not m.degenerate:
                assert m.nrmse == 0.0, name

    def test_constant_error_nrmse_point_one(self):
        base = np.linspace(0.0, 28.625, 101)  # Q90 - Q10 = 0.8 * 28.625 = 22.9 dB
        ref = power_series_snapshots(base)
        test = power_series_snapshots(base + 2.29)
        rep = compare_streams(ref, test)
        m = rep.metrics["power_vv"]
        assert m.q90 - m.q10 == pytest.approx(22.9, rel=1e-9)
        assert m.rmse == pytest.approx(2.29, rel=1e-9)
        assert m.nrmse == pytest.approx(0.10, rel=1e-9)

    def test_timestamp_mismatch_rejected(self):
        ref = power_series_snapshots([-40, -41, -42], t0=0.0)
        test = power_series_snapshots([-40, -41, -42], t0=0.005)
        with pytest.raises(ValueError):
            compare_streams(ref, test)

    def test_shift_invariance(self):
        base = np.linspace(-60, -30, 50)
        noise = np.sin(np.arange(50))
        r1 = compare_streams(power_series_snapshots(base), power_series_snapshots(base + noise))
        r2 = compare_streams(power_series_snapshots(base + 7.0), power_series_snapshots(base + noise + 7.0))
        m1, m2 = r1.metrics["power_vv"], r2.metrics["power_vv"]
        assert m1.rmse == pytest.approx(m2.rmse, rel=1e-9)
        assert m1.nrmse == pytest.approx(m2.nrmse, rel=1e-9)

    def test_rmse_symmetric_under_swap(self):
        base = np.linspace(-60, -30, 50)
        noise = np.cos(np.arange(50))
        a = power_series_snapshots(base)
        b = power_series_snapshots(base + noise)
        assert compare_streams(a, b).metrics["power_vv"].rmse == pytest.approx(
            compare_streams(b, a).metrics["power_vv"].rmse, rel=1e-12
        )

    def test_circular_error_wraps(self):
        n = 20
        aoa_ref = [(math.radians(179.0), 0.0)] * n
        aoa_test = [(math.radians(-179.0), 0.0)] * n
        ref = power_series_snapshots(np.linspace(-50, -40, n), aoa=aoa_ref)
        test = power_series_snapshots(np.linspace(-50, -40, n), aoa=aoa_test)
        m = compare_streams(ref, test).metrics["mean_haoa"]
        assert m.rmse == pytest.approx(math.radians(2.0), rel=1e-6)

    def test_degenerate_normalization_flagged(self):
        # vaoa spread is identically zero -> Q90-Q10 = 0 -> flagged, excluded
        base = np.linspace(-60, -30, 30)
        ref = power_series_snapshots(base)
        test = power_series_snapshots(base + 0.5)
        rep = compare_streams(ref, test)
        assert rep.metrics["vaoa_spread"].degenerate
        assert "vaoa_spread" not in rep.summary()

    def test_error_cdf_quantiles(self):
        base = np.linspace(-60, -30, 100)
        err = np.linspace(0.0, 1.0, 100)
        rep = compare_streams(power_series_snapshots(base), power_series_snapshots(base + err))
        m = rep.metrics["power_vv"]
        assert m.quantiles[50] == pytest.approx(0.5, abs=0.02)
        assert m.quantiles[99] == pytest.approx(0.99, abs=0.02)
        assert len(m.abs_errors) == 100
        assert np.all(np.diff(m.abs_errors) >= 0)


class TestPowerDecomposition:
    def test_no_scatter(self):
        snaps = [snap([make_path(t00=1.0)], t=0.0)]
        dec = power_decomposition(snaps)
        assert dec.scattered_dbm[0] == -math.inf
        assert dec.total_dbm[0] == dec.specular_dbm[0]

    def test_scatter_only(self):
        snaps = [snap([make_path(t00=0.5, tag=TAG_SCATTER)], t=0.0)]
        dec = power_decomposition(snaps)
        assert dec.specular_dbm[0] == -math.inf
        assert dec.total_dbm[0] == dec.scattered_dbm[0]

    def test_orthogonal_phasors_fractions(self):
        spec = make_path(t00=1.0, tag=TAG_SPECULAR)
        scat = make_path(transfer=np.array([[1j, 0], [0, 0]]), tag=TAG_SCATTER)
        dec = power_decomposition([snap([spec, scat])])
        assert dec.total_dbm[0] == pytest.approx(10 * math.log10(2.0))
        assert dec.specular_fraction == pytest.approx(0.5, rel=1e-12)
        assert dec.scattered_fraction == pytest.approx(0.5, rel=1e-12)

    def test_tx_power_offset(self):
        snaps = [snap([make_path(t00=1.0)], t=0.0)]
        dec = power_decomposition(snaps, tx_power_dbm=43.0)
        assert dec.specular_dbm[0] == pytest.approx(43.0)
