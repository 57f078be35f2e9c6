"""Synthetic fringe fixtures shared by the tests."""
import numpy as np

from nvramsey.fit_engine import fringe_model

TAU = np.linspace(20e-9, 3e-6, 150)


def random_params(rng, n, spacing=2.2e6, f0=(2.9e6, 3.2e6)):
    """Ground-truth parameter vectors with three lines ``spacing`` apart."""
    theta = np.zeros((n, 10))
    theta[:, 0] = rng.uniform(0.7e-6, 1.1e-6, n)
    centre = rng.uniform(*f0, n)
    for i, m in enumerate((-1, 0, 1)):
        theta[:, 1 + 3 * i] = rng.uniform(60, 85, n)
        theta[:, 2 + 3 * i] = centre + m * spacing
        theta[:, 3 + 3 * i] = rng.uniform(-3, 3, n)
    return theta


def shot_noise_fringes(rng, theta, tau=TAU, units_per_sigma=1.0, count_scale=512):
    """Fringes read out as the difference of two Poisson channels.

    Each channel carries a background of ``count_scale**2 / 2`` photons and
    one digital unit is ``count_scale`` photons, so the noise is close to
    ``units_per_sigma`` digital units per sample.
    """
    y = fringe_model(theta, tau) / units_per_sigma
    bg = count_scale ** 2 / 2
    a = rng.poisson(bg + count_scale * y / 2)
    b = rng.poisson(bg - count_scale * y / 2)
    return (a - b) / count_scale * units_per_sigma
