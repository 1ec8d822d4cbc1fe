import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rssimotion.errors import InvalidConfig, NonPositiveDistance, TruncatedTraceWarning
from rssimotion.estimator import Coefficients, build_system, solve_exact
from rssimotion.radio import PathLossParams, received_power
from rssimotion.synth import (
    PRESETS,
    PathLossConfig,
    SynthConfig,
    WaveComponent,
    displacement,
    generate,
    generate_motion,
    generate_rssi_linear,
    generate_rssi_pathloss,
    linear_ground_truth,
    normalization_params,
    preset,
)
from rssimotion.trace import align, normalize


def accel_of(motion):
    return np.array([s.accel for s in motion])


class TestMotion:
    def test_no_components_no_noise(self):
        m = generate_motion(SynthConfig(duration=5))
        assert len(m) == 50 and not accel_of(m).any()

    def test_single_component_closed_form(self):
        cfg = SynthConfig(duration=4, waves=(WaveComponent((1.0, 1.0, 1.0), 0.5, 0.0),))
        a = accel_of(generate_motion(cfg))
        k = np.arange(40)
        # only the rounding of the sine argument (|arg| < 4 pi) separates the two
        assert np.max(np.abs(a[:, 0] - np.sin(np.pi * k / 10))) <= 4 * np.spacing(4 * np.pi)
        assert [s.timestamp for s in generate_motion(cfg)][:3] == [0, 100, 200]

    def test_spectral_peaks(self):
        cfg = SynthConfig(
            duration=100,
            waves=(WaveComponent((1.0, 0, 0), 0.5), WaveComponent((0.6, 0, 0), 2.0)),
        )
        x = accel_of(generate_motion(cfg))[:, 0]
        spec = np.abs(np.fft.rfft(x))
        freqs = np.fft.rfftfreq(len(x), d=0.1)
        top = sorted(freqs[np.argsort(spec)[-2:]])
        assert top == pytest.approx([0.5, 2.0])

    def test_invalid_config(self):
        for bad in (dict(duration=0), dict(imu_rate=-1), dict(rssi_noise_sigma=-0.1), dict(mode="other")):
            with pytest.raises(InvalidConfig):
                generate_motion(SynthConfig(**bad))


class TestLinear:
    def test_persistence_is_constant(self):
        cfg = preset("southbeach", duration=10, rssi_noise_sigma=0.0, true_coefficients=Coefficients(1.0, (0, 0, 0)))
        rs = generate_rssi_linear(cfg, generate_motion(cfg))
        assert {s.rssi for s in rs} == {-65.0}
        assert [s.seq for s in rs[:3]] == [0, 1, 2]

    def test_zero_noise_recovery(self):
        cfg = preset("crandon", duration=120, rssi_noise_sigma=0.0)
        c = solve_exact(build_system(linear_ground_truth(cfg, generate_motion(cfg))))
        assert np.max(np.abs(c.as_vector() - cfg.true_coefficients.as_vector())) <= 1e-6

    def test_noisy_recovery(self):
        for seed in range(5):
            cfg = preset("crandon", duration=1000, seed=seed)
            c = solve_exact(build_system(linear_ground_truth(cfg, generate_motion(cfg))))
            assert np.max(np.abs(c.as_vector() - cfg.true_coefficients.as_vector())) <= 0.05

    def test_csv_route_matches_ground_truth(self):
        cfg = preset("southbeach", duration=30, seed=3)
        motion, rs = generate(cfg)
        series, _ = normalize(align(rs, motion), normalization_params(cfg))
        truth = linear_ground_truth(cfg, motion)
        assert np.allclose(series.r, truth.r, atol=1e-12)
        assert np.allclose(series.accel, truth.accel, atol=1e-12)

    def test_out_of_range_rejected(self):
        cfg = preset("crandon", duration=60, true_coefficients=Coefficients(1.0, (5.0, 5.0, 5.0)))
        with pytest.raises(InvalidConfig):
            generate(cfg)

    def test_lower_rssi_rate_uses_latest_imu(self):
        cfg = preset("southbeach", duration=20, rssi_rate=2.0)
        motion = generate_motion(cfg)
        truth = linear_ground_truth(cfg, motion)
        assert len(truth) == 40
        assert truth.t_ms[1] == 500


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_same_seed_same_trace(seed):
    cfg = preset("crandon", duration=5, seed=seed)
    assert generate(cfg) == generate(cfg)
    other = generate(preset("crandon", duration=5, seed=seed + 1))
    assert other[1] != generate(cfg)[1]


def pathloss_cfg(**kw):
    pl = dict(params=PathLossParams(-30.0), p_tx=0.0, base_distance=50.0)
    pl.update(kw.pop("pl", {}))
    return SynthConfig(mode="pathloss", pathloss=PathLossConfig(**pl), rssi_noise_sigma=0.0, **kw)


class TestPathloss:
    def test_static(self):
        cfg = pathloss_cfg(duration=5)
        rs = generate_rssi_pathloss(cfg, generate_motion(cfg))
        assert {s.rssi for s in rs} == {received_power(PathLossParams(-30.0), 0.0, 50.0)}
        assert rs[0].tx_power == 0.0

    def test_drift_closed_form(self):
        cfg = pathloss_cfg(duration=10, pl=dict(drift_velocity=2.0))
        rs = generate_rssi_pathloss(cfg, generate_motion(cfg))
        t = np.array([s.timestamp for s in rs]) / 1000.0
        expected = -30.0 - 20.0 * np.log10(50.0 + 2.0 * t)
        assert np.allclose([s.rssi for s in rs], expected, rtol=0, atol=1e-12)

    def test_constant_acceleration_displacement(self):
        a, dt = 0.3, 0.1
        t = np.arange(101) * dt
        x = displacement(np.full(101, a), dt)
        assert np.max(np.abs(x - 0.5 * a * t**2)) <= dt**2

    def test_truncates_when_distance_collapses(self):
        cfg = pathloss_cfg(duration=10, pl=dict(base_distance=5.0, drift_velocity=-1.0))
        with pytest.warns(TruncatedTraceWarning):
            rs = generate_rssi_pathloss(cfg, generate_motion(cfg))
        assert len(rs) == 50

    def test_non_positive_at_start(self):
        cfg = pathloss_cfg(duration=10, pl=dict(base_distance=0.0))
        with pytest.raises(NonPositiveDistance):
            generate_rssi_pathloss(cfg, generate_motion(cfg))

    def test_needs_section(self):
        with pytest.raises(InvalidConfig):
            SynthConfig(mode="pathloss").validate()


class TestConfig:
    def test_round_trip(self):
        cfg = pathloss_cfg(duration=7, waves=PRESETS["southbeach"]["waves"], seed=11)
        assert SynthConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
        lin = preset("crandon")
        assert SynthConfig.from_dict(json.loads(json.dumps(lin.to_dict()))) == lin

    def test_preset_with_overrides(self):
        cfg = SynthConfig.from_dict({"preset": "southbeach", "duration": 12, "seed": 4})
        assert cfg.duration == 12 and cfg.seed == 4 and cfg.waves == PRESETS["southbeach"]["waves"]

    def test_unknown(self):
        with pytest.raises(InvalidConfig):
            preset("miami")
        with pytest.raises(InvalidConfig):
            SynthConfig.from_dict({"durations": 3})
