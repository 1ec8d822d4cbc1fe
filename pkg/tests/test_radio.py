import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rssimotion.errors import InputError, NonPositiveDistance, ThresholdBelowSensitivity
from rssimotion.radio import (
    CC1200,
    CC2538,
    PathLossParams,
    RadioProfile,
    calibrate_k,
    load_profile,
    packet_received,
    received_power,
    received_power_linear,
    select_tx_power,
)


class TestCalibration:
    def test_worked_example(self):
        p = calibrate_k(0.0, 10.0, -50.0, 2.0)
        assert p.k_db == -30.0
        assert p.k_linear == pytest.approx(1e-3, rel=1e-15)

    def test_unit_distance(self):
        assert calibrate_k(4.0, 1.0, -20.0, 3.3).k_db == -24.0

    def test_non_positive_distance(self):
        with pytest.raises(NonPositiveDistance):
            calibrate_k(0.0, 0.0, -50.0)
        with pytest.raises(NonPositiveDistance):
            received_power(PathLossParams(-30.0), 0.0, -1.0)

    def test_bad_exponent(self):
        with pytest.raises(InputError):
            PathLossParams(-30.0, 0.0)


class TestReceivedPower:
    def test_anchor(self):
        assert received_power(PathLossParams(-30.0), 0.0, 10.0) == -50.0

    def test_doubling_distance(self):
        p = PathLossParams(-30.0)
        drop = received_power(p, 0.0, 10.0) - received_power(p, 0.0, 20.0)
        assert drop == pytest.approx(20 * math.log10(2), abs=1e-12)

    def test_linear_cross_check(self):
        p = PathLossParams(-30.0)
        # linear scale: K = 1e-3, P_tx = 10^(7/10) mW, d^2 = 1e4
        mw = 1e-3 * 10 ** 0.7 / 1e4
        assert 10 * math.log10(mw) == pytest.approx(-63.0, abs=1e-12)
        assert received_power(p, 7.0, 100.0) == pytest.approx(-63.0, abs=1e-12)
        assert received_power_linear(p, 7.0, 100.0) == pytest.approx(-63.0, abs=1e-12)


@given(
    st.floats(-40, 30),
    st.floats(0.01, 1e4),
    st.floats(-140, 0),
    st.floats(1.5, 5.0),
)
@settings(max_examples=300, deadline=None)
def test_calibration_round_trip(p_tx, d, p_rx, n):
    params = calibrate_k(p_tx, d, p_rx, n)
    assert received_power(params, p_tx, d) == pytest.approx(p_rx, abs=1e-12)
    assert received_power_linear(params, p_tx, d) == pytest.approx(received_power(params, p_tx, d), abs=1e-9)


class TestSelectTx:
    def test_already_at_target(self):
        assert select_tx_power(-87.0, 0.0, -90.0, CC2538, margin=3.0) .tx == 0.0

    def test_ten_db_short(self):
        d = select_tx_power(-97.0, -10.0, -90.0, CC2538, margin=3.0)
        assert d.tx == 0.0 and d.feasible

    def test_clamped_infeasible(self):
        d = select_tx_power(-127.0, 0.0, -90.0, CC2538, margin=3.0)
        assert d.tx == 7.0 and not d.feasible

    def test_clamped_to_min(self):
        d = select_tx_power(-20.0, 0.0, -90.0, CC2538, margin=3.0)
        assert d.tx == CC2538.tx_min and d.feasible

    def test_rounds_up_to_step(self):
        d = select_tx_power(-87.3, 0.0, -90.0, CC2538, margin=3.0)
        assert d.tx == 0.5

    def test_threshold_below_sensitivity(self):
        with pytest.raises(ThresholdBelowSensitivity):
            select_tx_power(-80.0, 0.0, -100.0, CC2538)


@given(st.floats(-150, 0), st.floats(-24, 7), st.floats(-97, -40), st.floats(0, 10))
@settings(max_examples=300, deadline=None)
def test_selected_tx_meets_target_when_feasible(pred, cur, thr, margin):
    d = select_tx_power(pred, cur, thr, CC2538, margin)
    assert CC2538.tx_min <= d.tx <= CC2538.tx_max
    assert (d.tx * 2) == pytest.approx(round(d.tx * 2)) or d.tx in (CC2538.tx_min, CC2538.tx_max)
    if d.feasible:
        assert pred + (d.tx - cur) >= thr + margin - 1e-9
    else:
        assert d.tx == CC2538.tx_max


class TestPacketReceived:
    def test_boundary_inclusive(self):
        assert packet_received(-123.0, CC1200)

    def test_below_sensitivity(self):
        assert not packet_received(-97.1, CC2538)

    def test_soft_threshold(self):
        assert not packet_received(-95.0, CC2538, soft_threshold=-90.0)
        assert packet_received(-90.0, CC2538, soft_threshold=-90.0)


class TestProfiles:
    def test_builtins(self):
        assert load_profile("CC1200") is CC1200
        assert (CC2538.sensitivity, CC2538.tx_max) == (-97.0, 7.0)

    def test_from_file(self, tmp_path):
        path = tmp_path / "p.json"
        path.write_text(json.dumps(CC1200.to_dict()))
        assert load_profile(path) == CC1200

    def test_unknown(self):
        with pytest.raises(InputError):
            load_profile("nrf52")

    def test_invalid(self):
        with pytest.raises(InputError):
            RadioProfile("x", -50.0, 0.0, -1.0, "2.4 GHz", 1.0)
        with pytest.raises(InputError):
            RadioProfile.from_dict({"name": "x"})
