import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import TAU, random_params, shot_noise_fringes
from nvramsey.exceptions import InvalidArgumentError
from nvramsey.fit_engine import (PARAM_NAMES, FringeParams, canonicalize, fit_fringe, fit_grid,
                                 fringe_model, jacobian, levenberg_marquardt, wrap_phase)

TRUE = FringeParams(0.9e-6, (70, 75, 80), (0.8e6, 3.0e6, 5.2e6), (0.3, -1.0, 2.0))


def test_model_shape_and_value():
    y = fringe_model(TRUE, TAU)
    assert y.shape == (150,)
    t = 4e-7
    ref = np.exp(-t / 0.9e-6) * sum(a * np.sin(2 * np.pi * f * t + d) for a, f, d in
                                    zip(TRUE.amplitudes, TRUE.frequencies, TRUE.phases))
    assert np.isclose(fringe_model(TRUE, [t])[0], ref)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(0)
    theta = random_params(rng, 100)
    tau = np.linspace(0, 3e-6, 60)
    j = jacobian(theta, tau)
    for k in range(10):
        h = 1e-6 * np.maximum(np.abs(theta[:, k]), 1e-3)
        tp, tm = theta.copy(), theta.copy()
        tp[:, k] += h
        tm[:, k] -= h
        fd = (fringe_model(tp, tau) - fringe_model(tm, tau)) / (2 * h[:, None])
        scale = np.abs(j[:, :, k]).max(axis=1, keepdims=True)
        assert np.max(np.abs(fd - j[:, :, k]) / scale) < 1e-6


angles = st.floats(-20, 20)
freqs = st.floats(-8e6, 8e6)
amps = st.floats(-100, 100).filter(lambda a: abs(a) > 1e-3)


@given(st.lists(st.tuples(amps, freqs, angles), min_size=3, max_size=3))
def test_canonicalization_preserves_model(comps):
    theta = np.array([[1e-6] + [x for c in comps for x in c]])
    canon = canonicalize(theta)
    assert np.allclose(fringe_model(theta, TAU), fringe_model(canon, TAU), atol=1e-6)
    assert np.all(canon[0, 1::3] >= 0)
    assert np.all(np.diff(canon[0, 2::3]) >= 0)
    assert np.all((canon[0, 3::3] > -np.pi) & (canon[0, 3::3] <= np.pi))
    assert np.allclose(canonicalize(canon), canon)


def test_wrap_phase():
    assert wrap_phase(-np.pi) == np.pi
    assert np.isclose(wrap_phase(3 * np.pi / 2), -np.pi / 2)


def test_noiseless_recovery():
    res = fit_fringe(TAU, fringe_model(TRUE, TAU))
    assert res.converged
    assert np.allclose(res.params.to_vector(), TRUE.canonical().to_vector(), rtol=1e-6)
    assert res.ci("t2_star") < 1e-12


def test_noisy_fit_within_ci():
    rng = np.random.default_rng(4)
    theta = random_params(rng, 200)
    res = fit_grid(TAU, shot_noise_fringes(rng, theta))
    err = np.abs(res.params - canonicalize(theta))
    inside = (err <= res.confidence_interval).mean(axis=0)
    # 95% intervals should cover roughly 95% of pixels
    assert np.all(inside > 0.88)
    assert res.convergence_fraction > 0.98


def test_converged_status_condition():
    rng = np.random.default_rng(5)
    theta = random_params(rng, 100)
    res = fit_grid(TAU, shot_noise_fringes(rng, theta))
    grad = res.converged & (res.status == "gradient")
    assert np.all(res.gradient_norm[grad] < 1e-8)
    assert set(res.status[res.converged]) <= {"gradient", "ftol"}


def test_explicit_init_and_dead_pixel():
    res = fit_grid(TAU, np.stack([fringe_model(TRUE, TAU), np.zeros(150)]), init=TRUE)
    assert res.converged[0] and not res.converged[1]
    assert res.status[1] == "zero-signal"
    assert np.isnan(res.map("t2_star")[1])


def test_thread_count_independent(monkeypatch):
    rng = np.random.default_rng(6)
    y = shot_noise_fringes(rng, random_params(rng, 40))
    a = fit_grid(TAU, y, chunk=16, n_threads=1)
    monkeypatch.setenv("NVRAMSEY_THREADS", "3")
    b = fit_grid(TAU, y, chunk=16)
    assert np.array_equal(a.params, b.params)
    monkeypatch.setenv("NVRAMSEY_THREADS", "many")
    with pytest.raises(InvalidArgumentError):
        fit_grid(TAU, y, chunk=16)


def test_grid_shape_kept():
    y = np.broadcast_to(fringe_model(TRUE, TAU), (2, 3, 150))
    res = fit_grid(TAU, y)
    assert res.shape == (2, 3) and res.map("f_0").shape == (2, 3)
    assert res[4].params.frequencies == pytest.approx(TRUE.frequencies, rel=1e-6)


def test_input_checks():
    with pytest.raises(InvalidArgumentError):
        fit_fringe(TAU[:10], np.zeros(10))
    with pytest.raises(InvalidArgumentError):
        fit_fringe(TAU, np.zeros(149))
    with pytest.raises(InvalidArgumentError):
        fit_fringe(np.zeros(150), np.zeros(150))
    with pytest.raises(InvalidArgumentError):
        fit_fringe(TAU, np.zeros(150), init="magic")
    with pytest.raises(InvalidArgumentError):
        FringeParams(-1.0, (1, 1, 1), (1, 1, 1), (0, 0, 0))


def test_lm_reduces_residual():
    t = TAU / TAU.max()
    y = fringe_model(TRUE, TAU)[None] / 200
    theta = TRUE.to_vector()[None].copy()
    theta[:, 0] /= TAU.max()
    theta[:, 2::3] *= TAU.max()
    theta[:, 1::3] /= 200
    start = theta * (1 + 0.01 * np.arange(10))
    st_ = levenberg_marquardt(t, y, start)
    assert st_.converged[0] and st_.rss[0] < 1e-20


def test_param_names():
    assert PARAM_NAMES[0] == "t2_star" and len(PARAM_NAMES) == 10
