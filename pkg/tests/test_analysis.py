from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nvramsey.analysis import (allan_deviation, calibrate, camera_field_slope, fringe_envelope,
                               improvement_ratio, measured_sensitivity,
                               photons_for_sensitivity, ridr, ridr_from_deciles,
                               sensitivity_report, shot_noise_sensitivity, volume_normalized)
from nvramsey.camera_model import CameraConfig, expected_combined, exposure_quarters
from nvramsey.exceptions import InvalidArgumentError
from nvramsey.protocols import builtin_protocol, sequence_signals
from nvramsey.pulse_engine import DephasingModel
from nvramsey.sample_model import GridConfig, PixelEnvironment, generate_grid

DQ4 = builtin_protocol("dq_4ramsey")
SQ2 = builtin_protocol("sq_2ramsey")


def test_ridr_fixtures():
    assert ridr_from_deciles(0.907, 0.710, 1.03) == pytest.approx(0.3528, abs=1e-4)
    assert ridr_from_deciles(0.621, 0.605, 0.643) == pytest.approx(0.0612, abs=1e-4)
    with pytest.raises(InvalidArgumentError):
        ridr_from_deciles(0.0, 1.0, 2.0)


def test_ridr_type7_deciles():
    st_ = ridr(np.arange(11.0))
    assert (st_.d10, st_.median, st_.d90) == (1.0, 5.0, 9.0)
    assert st_.ridr == pytest.approx(1.6)
    with_nan = ridr(np.r_[np.arange(11.0), np.nan, np.inf])
    assert with_nan == st_
    with pytest.raises(InvalidArgumentError):
        ridr(np.arange(9.0))


@given(arrays(float, 50, elements=st.floats(1.0, 1e3)), st.floats(1e-6, 1e6))
def test_ridr_scale_invariant(v, k):
    a, b = ridr(v), ridr(k * v)
    assert b.ridr == pytest.approx(a.ridr, rel=1e-9, abs=1e-12)
    assert a.d10 <= a.median <= a.d90


def test_shot_noise_formula():
    eta = shot_noise_sensitivity(2, 0.03, 1e6, 0.62e-6, 0.6e-6, 4e-6)
    ref = 1 / (2 * np.pi * 28.03e9 * 2) / (0.03 * np.exp(-0.6 / 0.62) * 1e3) \
        * np.sqrt(4.6e-6) / 0.6e-6
    assert eta == pytest.approx(ref)
    assert shot_noise_sensitivity(1, 0.03, 1e6, 0.62e-6, 0.6e-6, 4e-6) == pytest.approx(2 * eta)
    n = photons_for_sensitivity(eta, 2, 0.03, 0.62e-6, 0.6e-6, 4e-6)
    assert n == pytest.approx(1e6)
    with pytest.raises(ZeroDivisionError):
        shot_noise_sensitivity(2, 0.03, 1e6, 0.62e-6, 0.0, 4e-6)
    with pytest.raises(InvalidArgumentError):
        shot_noise_sensitivity(3, 0.03, 1e6, 0.62e-6, 0.6e-6, 4e-6)


def test_volume_normalization():
    v = volume_normalized(22e-9, 2.5e-6 * 2.4e-6 * 1e-6)
    assert v == pytest.approx(53.9e-9 * 1e-9, rel=1e-3)


def test_measured_sensitivity():
    rng = np.random.default_rng(0)
    series = rng.normal(0, 2.0, (4000, 3, 3))
    slope = np.full((3, 3), 1e3)
    slope[0, 0] = 0
    m = measured_sensitivity(series, slope, 1500.0)
    assert m.flagged[0, 0] and np.isinf(m.eta[0, 0])
    good = m.eta[~m.flagged]
    assert np.allclose(good, 2.0 / 1e3 / np.sqrt(1500), rtol=0.05)
    with pytest.raises(InvalidArgumentError):
        measured_sensitivity(series[:50], slope, 1500.0)


def test_report_and_ratio():
    eta = np.linspace(10e-9, 30e-9, 100)
    rep = sensitivity_report(eta, "SQ")
    assert rep.d10 <= rep.median <= rep.d90
    assert rep.to_dict()["basis"] == "SQ"
    r = improvement_ratio(eta, eta / 2)
    assert np.allclose(r, 2)


def test_allan_white_noise():
    rng = np.random.default_rng(1)
    curve = allan_deviation(rng.normal(size=(2 ** 14, 5)), 1000.0)
    assert abs(curve.slope() + 0.5) < 0.05
    assert np.allclose(curve.deviation[0], 1.0, rtol=0.05)
    assert curve.tau[0] == 1e-3 and curve.terms[0] == 2 ** 14 - 1


def test_allan_constant_and_short():
    c = allan_deviation(np.full(100, 3.0), 10.0)
    assert np.all(c.deviation == 0)
    with pytest.raises(InvalidArgumentError):
        allan_deviation(np.zeros(7), 10.0)


def test_envelope_revivals_spaced_by_hyperfine():
    env = PixelEnvironment()
    taus = np.arange(1e-7, 2e-6, 2e-9)
    sq = calibrate(env, SQ2, DephasingModel())
    dq = calibrate(env, DQ4, DephasingModel())
    assert np.allclose(np.diff(sq.candidates), 1 / 2.2e6, atol=6e-9)
    assert np.allclose(np.diff(dq.candidates), 1 / 4.4e6, atol=6e-9)
    e = fringe_envelope(DQ4, env, DephasingModel(), taus)
    assert e.max() <= 1.0 + 1e-9


def test_calibrate_picks_revival_near_t2():
    g = generate_grid(GridConfig(width=8, height=8))
    cal = calibrate(g, DQ4, DephasingModel())
    t2 = np.median(g.t2_star_effective("DQ"))
    assert np.min(np.abs(cal.candidates - t2)) == abs(cal.tau - t2)
    assert cal.slope.shape == (8, 8) and np.all(np.abs(cal.slope) > 0)
    fixed = calibrate(g, DQ4, DephasingModel(), tau=6.5e-7)
    assert fixed.tau == 6.5e-7


def test_camera_slope_matches_field_step():
    env = PixelEnvironment()
    cal = calibrate(env, DQ4, DephasingModel())
    cam = CameraConfig(shot_noise=False)
    s = camera_field_slope(DQ4, env, DephasingModel(), cal.tau, cal.detuning, cam)
    out = []
    for b in (-1e-8, 1e-8):
        e = replace(env, b_offset=b)
        sig = sequence_signals(DQ4, e, DephasingModel(), cal.tau, cal.detuning)[:, :, 0]
        out.append(expected_combined(exposure_quarters(DQ4, sig.reshape(4, 1, 1)), cam)[0, 0])
    assert s[0] == pytest.approx((out[1] - out[0]) / 2e-8, rel=1e-3)
