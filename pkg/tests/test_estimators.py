import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from helpers import TAU, random_params, shot_noise_fringes
from nvramsey.estimators import FringeMapTransformer, RamseyFringeRegressor
from nvramsey.fit_engine import PARAM_NAMES, fringe_model


def test_regressor_fit_predict():
    rng = np.random.default_rng(0)
    theta = random_params(rng, 1)[0]
    y = fringe_model(theta, TAU)
    reg = RamseyFringeRegressor().fit(TAU[:, None], y)
    assert reg.converged_
    assert np.allclose(reg.predict(TAU[:, None]), y, atol=1e-6)
    assert reg.score(TAU[:, None], y) > 0.999999
    assert reg.confidence_interval_.shape == (10,)


def test_regressor_params_and_clone():
    reg = RamseyFringeRegressor(hyperfine_spacing=4.4e6, max_iter=50)
    c = clone(reg)
    assert c.get_params()["hyperfine_spacing"] == 4.4e6
    with pytest.raises(NotFittedError):
        c.predict(TAU)


def test_transformer():
    rng = np.random.default_rng(1)
    theta = random_params(rng, 20)
    X = shot_noise_fringes(rng, theta)
    tr = FringeMapTransformer(tau=TAU)
    out = tr.fit_transform(X)
    assert out.shape == (20, 10)
    assert tr.result_.convergence_fraction == 1.0
    assert list(tr.get_feature_names_out()) == list(PARAM_NAMES)
    with pytest.raises(ValueError):
        FringeMapTransformer().fit(X)
