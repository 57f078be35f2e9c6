import numpy as np
import pytest

from nvramsey.camera_model import (CameraConfig, accumulate, acquire_average, acquire_frame,
                                   acquire_series, expected_combined, exposure_quarters,
                                   timing_budget)
from nvramsey.exceptions import InvalidArgumentError, TimingViolationError
from nvramsey.protocols import builtin_protocol
from nvramsey.pulse_engine import DephasingModel
from nvramsey.sample_model import GridConfig, generate_grid

DQ4 = builtin_protocol("dq_4ramsey")
SQ2 = builtin_protocol("sq_2ramsey")
QUIET = CameraConfig(shot_noise=False)


def test_config_checks():
    with pytest.raises(InvalidArgumentError):
        CameraConfig(bit_depth=12)
    with pytest.raises(InvalidArgumentError):
        CameraConfig(f_demod=300e3)
    assert CameraConfig().digital_range == (-512, 511)
    assert np.isclose(CameraConfig().photons_per_unit, 67000 / 512)


def test_identical_quarters_cancel():
    fr = acquire_frame(np.full((4, 3, 3), 2e4), QUIET)
    assert np.all(fr.i == 0) and np.all(fr.q == 0) and np.all(fr.combined == 0)


def test_injected_fringe_doubles():
    a = 5.0
    q = np.array([a, -a, -a, a]) + 1e3
    cfg = CameraConfig(shot_noise=False, full_scale=512.0)
    fr = acquire_frame(q[:, None, None] * np.ones((4, 2, 2)), cfg)
    assert np.all(fr.combined == 2 * cfg.n_demod * 2 * a)


def test_combined_is_exact_difference():
    rng = np.random.default_rng(1)
    q = rng.uniform(1e4, 2e4, (2, 4, 5, 5))
    fr = acquire_frame(q, CameraConfig(), rng)
    assert np.array_equal(fr.combined, fr.i.astype(int) - fr.q.astype(int))


def test_saturation_flagged():
    q = np.array([1e5, 0, 0, 0.0])[:, None, None] * np.ones((4, 2, 2))
    fr = acquire_frame(q, QUIET)
    assert np.all(fr.saturated) and np.all(fr.i == 511)


def test_pattern_count_must_divide():
    with pytest.raises(InvalidArgumentError):
        accumulate(np.ones((5, 4)), QUIET)
    with pytest.raises(InvalidArgumentError):
        accumulate(-np.ones((1, 4)), QUIET)


def test_shot_noise_variance():
    rng = np.random.default_rng(2)
    cfg = CameraConfig(full_scale=512.0)
    q = np.full((4, 64, 64), 100.0)
    i = np.stack([accumulate(q, cfg, rng)[0] for _ in range(20)])
    assert np.isclose(i.var(), 2 * 24 * 100, rtol=0.05)


def test_average_matches_mean():
    rng = np.random.default_rng(3)
    q = np.array([1.1e4, 1e4, 1e4, 1.1e4])[None, :, None, None] * np.ones((2, 4, 8, 8))
    avg = acquire_average(q, CameraConfig(), rng, 50)
    assert np.isclose(avg.combined.mean(), expected_combined(q, CameraConfig()).mean(), atol=0.2)


def test_timing_budget_values():
    t = timing_budget(CameraConfig(), SQ2, 8.4e-7, 5e-8)
    assert np.isclose(t.t_demod, 4 * (4e-6 + 8.4e-7) + 1e-6 + 8e-6)
    assert np.isclose(t.frame_rate, 1 / (24 * t.t_demod))
    with pytest.raises(TimingViolationError) as e:
        timing_budget(CameraConfig(f_demod=35e3), SQ2, 9.1e-7)
    assert e.value.deficit > 0
    long = timing_budget(CameraConfig(mw_budget=0), DQ4, 7e-8, 7e-8)
    assert long.cycle_content == pytest.approx(4 * (4e-6 + 7e-8) + 8 * 7e-8 + 8e-6)


def test_frame_rate_clamped():
    t = timing_budget(CameraConfig(n_demod=2, t_init_read=1e-6, delay_budget=0), SQ2, 1e-7)
    assert t.frame_rate_limited and t.frame_rate == 3.8e3


def test_quarter_assignment():
    s = np.arange(4.0)[:, None, None] * np.ones((4, 1, 1))
    q = exposure_quarters(DQ4, s)
    assert q.shape == (2, 4, 1, 1)
    assert np.allclose(q[0, :, 0, 0], [0, 1, 1, 0]) and np.allclose(q[1, :, 0, 0], [2, 3, 3, 2])


def test_series_metadata_and_determinism():
    g = generate_grid(GridConfig(width=4, height=3))
    kw = dict(frames=12, tau=5.9e-7, seed=7)
    a = acquire_series(g, DQ4, DephasingModel(), CameraConfig(buffer_frames=5), **kw)
    b = acquire_series(g, DQ4, DephasingModel(), CameraConfig(buffer_frames=5), **kw)
    assert np.array_equal(a.combined, b.combined)
    assert a.combined.shape == (12, 3, 4)
    assert a.buffer_markers == [5, 10]
    assert np.isclose(a.metadata["duration"], 12 / a.frame_rate)
    assert np.allclose(np.diff(a.timestamps), 1 / a.frame_rate)
    assert a[3].index == 3
