"""Per-pixel environments and synthetic diamond samples.

A :class:`PixelGrid` stores one 2-D array per quantity (row-major, shape
``(height, width)``); a :class:`PixelEnvironment` is the scalar view of a
single pixel.  Simulation code accepts either through ``to_grid``.
"""
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from ._validation import check_finite, check_in_range, check_int, check_nonnegative, check_positive
from .exceptions import InvalidArgumentError, ShapeMismatchError
from .spin_core import NVConstants, effective_rabi, transition_shifts as _shifts

UNIFORM_HYPERFINE = (1 / 3, 1 / 3, 1 / 3)

#: per-pixel map quantities carried by a grid
MAP_FIELDS = ("b_offset", "m_z", "m_x", "m_y", "rabi", "amplitude", "contrast",
              "t2_star_sq", "stress_broadening")


def _check_populations(pops):
    pops = tuple(float(p) for p in pops)
    if len(pops) != 3 or min(pops) < 0 or abs(sum(pops) - 1) > 1e-9:
        raise InvalidArgumentError(
            f"hyperfine_populations must be three non-negative numbers summing to 1, got {pops}")
    return pops


@dataclass(frozen=True)
class PixelEnvironment:
    """Local conditions of one camera pixel.

    Parameters
    ----------
    b_offset : float
        Magnetic field along the NV axis relative to the bias field, T.
    m_z, m_x, m_y : float
        Spin-stress couplings, Hz.
    rabi : float
        Local on-resonance Rabi frequency, Hz.
    rabi_nominal : float
        Rabi frequency the pulses were calibrated for, Hz.
    amplitude, contrast : float
        Photons per exposure and fluorescence contrast.
    t2_star_sq : float
        Bath-limited SQ dephasing time, s.
    stress_broadening : float
        Lorentzian half width of axial stress within the pixel volume, Hz.
        It dephases SQ but not DQ coherences.
    hyperfine_populations : tuple
        Weights of the m_I = -1, 0, +1 lines.
    bias_field : float
        Nominal bias field, T.
    """

    b_offset: float = 0.0
    m_z: float = 0.0
    m_x: float = 0.0
    m_y: float = 0.0
    rabi: float = 5e6
    rabi_nominal: float = 5e6
    amplitude: float = 2e4
    contrast: float = 0.03
    t2_star_sq: float = 1.24e-6
    stress_broadening: float = 0.0
    hyperfine_populations: tuple = UNIFORM_HYPERFINE
    bias_field: float = 5e-3
    constants: NVConstants = field(default_factory=NVConstants)

    def __post_init__(self):
        for name in ("b_offset", "m_z", "m_x", "m_y", "bias_field"):
            check_finite(getattr(self, name), name)
        check_nonnegative(self.rabi, "rabi")
        check_positive(self.rabi_nominal, "rabi_nominal")
        check_nonnegative(self.amplitude, "amplitude")
        check_in_range(self.contrast, "contrast", 0.0, 1.0)
        check_positive(self.t2_star_sq, "t2_star_sq")
        check_nonnegative(self.stress_broadening, "stress_broadening")
        object.__setattr__(self, "hyperfine_populations",
                           _check_populations(self.hyperfine_populations))

    def nominal(self):
        """Twin with no field offset or stress, nominal drive and one hyperfine line."""
        return replace(self, b_offset=0.0, m_z=0.0, m_x=0.0, m_y=0.0, rabi=self.rabi_nominal,
                       stress_broadening=0.0, hyperfine_populations=(0.0, 1.0, 0.0),
                       constants=replace(self.constants, delta_d=0.0))

    def to_grid(self):
        maps = {name: np.full((1, 1), float(getattr(self, name))) for name in MAP_FIELDS}
        return PixelGrid(**maps, rabi_nominal=self.rabi_nominal,
                         hyperfine_populations=self.hyperfine_populations,
                         bias_field=self.bias_field, constants=self.constants)

    def transition_shifts(self):
        sp, sm = self.to_grid().transition_shifts()
        return float(sp[0]), float(sm[0])


@dataclass
class PixelGrid:
    """Maps of pixel environments, each of shape ``(height, width)``."""

    b_offset: np.ndarray
    m_z: np.ndarray
    m_x: np.ndarray
    m_y: np.ndarray
    rabi: np.ndarray
    amplitude: np.ndarray
    contrast: np.ndarray
    t2_star_sq: np.ndarray
    stress_broadening: np.ndarray
    rabi_nominal: float = 5e6
    hyperfine_populations: tuple = UNIFORM_HYPERFINE
    bias_field: float = 5e-3
    constants: NVConstants = field(default_factory=NVConstants)
    pixel_pitch: tuple = (2.5e-6, 2.4e-6)

    def __post_init__(self):
        shape = None
        for name in MAP_FIELDS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 2:
                raise InvalidArgumentError(f"{name} must be a 2-D map")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise ShapeMismatchError(name, shape, arr.shape)
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"{name} contains non-finite values")
            setattr(self, name, arr)
        if np.any(self.contrast < 0) or np.any(self.contrast > 1):
            raise InvalidArgumentError("contrast must lie in [0, 1]")
        if np.any(self.t2_star_sq <= 0):
            raise InvalidArgumentError("t2_star_sq must be positive")
        if np.any(self.rabi < 0) or np.any(self.stress_broadening < 0):
            raise InvalidArgumentError("rabi and stress_broadening must be non-negative")
        check_positive(self.rabi_nominal, "rabi_nominal")
        self.hyperfine_populations = _check_populations(self.hyperfine_populations)

    @property
    def shape(self):
        return self.b_offset.shape

    @property
    def size(self):
        return self.b_offset.size

    def to_grid(self):
        return self

    def flat_arrays(self):
        return {name: getattr(self, name).reshape(-1) for name in MAP_FIELDS}

    def __getitem__(self, ij):
        i, j = ij
        vals = {name: float(getattr(self, name)[i, j]) for name in MAP_FIELDS}
        return PixelEnvironment(**vals, rabi_nominal=self.rabi_nominal,
                                hyperfine_populations=self.hyperfine_populations,
                                bias_field=self.bias_field, constants=self.constants)

    def pixel(self, flat_index):
        return self[np.unravel_index(int(flat_index), self.shape)]

    def take(self, flat_indices):
        """Sub-grid of shape ``(1, k)`` holding the listed pixels."""
        idx = np.asarray(flat_indices, dtype=int).reshape(-1)
        maps = {name: getattr(self, name).reshape(-1)[idx][None, :] for name in MAP_FIELDS}
        return replace(self, **maps)

    def nominal(self):
        """Single nominal pixel (see :meth:`PixelEnvironment.nominal`)."""
        return PixelEnvironment(
            rabi=self.rabi_nominal, rabi_nominal=self.rabi_nominal,
            amplitude=float(np.median(self.amplitude)), contrast=float(np.median(self.contrast)),
            t2_star_sq=float(np.median(self.t2_star_sq)), bias_field=self.bias_field,
            constants=replace(self.constants, delta_d=0.0), hyperfine_populations=(0.0, 1.0, 0.0))

    def transition_shifts(self):
        """Flat SQ transition shifts ``(shift_plus, shift_minus)`` in Hz."""
        m_perp = np.hypot(self.m_x, self.m_y).reshape(-1)
        b = self.bias_field + self.b_offset.reshape(-1)
        return _shifts(self.constants, self.m_z.reshape(-1), m_perp, b, self.bias_field)

    def effective_rabi_map(self):
        """Generalized Rabi frequency seen by an SQ tone at the nominal line."""
        sp, _ = self.transition_shifts()
        return effective_rabi(self.rabi, sp.reshape(self.shape))

    def t2_star_effective(self, basis="SQ"):
        """Analytic dephasing time of SQ or DQ coherences per pixel."""
        if basis == "SQ":
            return 1.0 / (1.0 / self.t2_star_sq + 2 * np.pi * self.stress_broadening)
        if basis == "DQ":
            return self.t2_star_sq / 2.0
        raise InvalidArgumentError("basis must be 'SQ' or 'DQ'")


@dataclass(frozen=True)
class GridConfig:
    """Parameters of a synthetic sample.

    ``stress_amplitude`` is the standard deviation of the axial stress map and
    ``stress_correlation`` its Gaussian correlation length.  The within-pixel
    stress width is ``gradient_coupling * |grad M_z| * pitch``.  A zero
    ``beam_waist`` gives uniform illumination.  ``constants`` defaults to
    the standard values with ``delta_d`` applied.
    """

    width: int = 128
    height: int = 128
    pixel_pitch: tuple = (2.5e-6, 2.4e-6)
    thickness: float = 1e-6
    bias_field: float = 5e-3
    bias_gradient: float = 1.4e-6
    rabi_nominal: float = 5e6
    rabi_gradient: float = 0.04
    stress_amplitude: float = 1e5
    transverse_amplitude: float = 1e5
    stress_correlation: float = 10e-6
    gradient_coupling: float = 1.5
    amplitude: float = 2e4
    beam_waist: float = 600e-6
    contrast: float = 0.03
    t2_star_sq: float = 1.24e-6
    hyperfine_populations: tuple = UNIFORM_HYPERFINE
    delta_d: float = 0.0
    seed: int = 0
    constants: NVConstants = None

    def __post_init__(self):
        check_int(self.width, "width", minimum=1)
        check_int(self.height, "height", minimum=1)
        if len(self.pixel_pitch) != 2 or min(self.pixel_pitch) <= 0:
            raise InvalidArgumentError("pixel_pitch must be two positive lengths")
        check_positive(self.thickness, "thickness")
        check_in_range(self.rabi_gradient, "rabi_gradient", 0.0, 0.5)
        for name in ("stress_amplitude", "transverse_amplitude", "gradient_coupling",
                     "amplitude", "beam_waist", "bias_gradient"):
            check_nonnegative(getattr(self, name), name)
        check_positive(self.stress_correlation, "stress_correlation")
        check_positive(self.rabi_nominal, "rabi_nominal")
        check_positive(self.t2_star_sq, "t2_star_sq")
        check_in_range(self.contrast, "contrast", 0.0, 1.0)
        object.__setattr__(self, "pixel_pitch", tuple(float(p) for p in self.pixel_pitch))
        object.__setattr__(self, "hyperfine_populations",
                           _check_populations(self.hyperfine_populations))


@dataclass(frozen=True)
class StressMaps:
    m_z: np.ndarray
    m_x: np.ndarray
    m_y: np.ndarray


def correlated_field(rng, shape, correlation, pitch, std):
    """Gaussian-filtered white noise rescaled to the requested standard deviation."""
    noise = rng.standard_normal(shape)
    if std == 0:
        return np.zeros(shape)
    sigma = (correlation / pitch[1], correlation / pitch[0])
    smooth = gaussian_filter(noise, sigma=sigma, mode="reflect")
    sd = smooth.std()
    return np.zeros(shape) if sd == 0 else std * (smooth - smooth.mean()) / sd


def _centred(n, step):
    return (np.arange(n) - (n - 1) / 2.0) * step


def generate_grid(cfg=GridConfig(), stress=None):
    """Build a synthetic :class:`PixelGrid`.

    The same configuration and seed always produce the same grid.  Supplied
    ``stress`` maps replace the synthetic ones and must match the grid shape.
    """
    shape = (cfg.height, cfg.width)
    rng = np.random.default_rng(cfg.seed)
    pitch = cfg.pixel_pitch
    x = _centred(cfg.width, pitch[0])[None, :]
    y = _centred(cfg.height, pitch[1])[:, None]
    if stress is None:
        m_z = correlated_field(rng, shape, cfg.stress_correlation, pitch, cfg.stress_amplitude)
        m_x = correlated_field(rng, shape, cfg.stress_correlation, pitch, cfg.transverse_amplitude)
        m_y = correlated_field(rng, shape, cfg.stress_correlation, pitch, cfg.transverse_amplitude)
    else:
        maps = []
        for name in ("m_z", "m_x", "m_y"):
            arr = np.asarray(getattr(stress, name), dtype=float)
            if arr.shape != shape:
                raise ShapeMismatchError(f"stress map {name}", shape, arr.shape)
            maps.append(arr)
        m_z, m_x, m_y = maps
    constants = NVConstants() if cfg.constants is None else cfg.constants
    constants = replace(constants, delta_d=cfg.delta_d)
    gy, gx = np.gradient(m_z)
    broadening = cfg.gradient_coupling * np.hypot(gx, gy)

    half_x = max(abs(x).max(), 1e-300)
    rabi = cfg.rabi_nominal * (1.0 + cfg.rabi_gradient * x / half_x) * np.ones(shape)

    extent = np.hypot(x.max() - x.min(), y.max() - y.min())
    diag = (x + y) / np.sqrt(2)
    b_offset = np.zeros(shape) if extent == 0 else cfg.bias_gradient * diag / extent * np.ones(shape)

    if cfg.beam_waist > 0:
        amplitude = cfg.amplitude * np.exp(-2 * (x ** 2 + y ** 2) / cfg.beam_waist ** 2)
    else:
        amplitude = np.full(shape, cfg.amplitude)

    return PixelGrid(
        b_offset=b_offset, m_z=m_z, m_x=m_x, m_y=m_y, rabi=rabi,
        amplitude=amplitude * np.ones(shape), contrast=np.full(shape, cfg.contrast),
        t2_star_sq=np.full(shape, cfg.t2_star_sq), stress_broadening=broadening,
        rabi_nominal=cfg.rabi_nominal, hyperfine_populations=cfg.hyperfine_populations,
        bias_field=cfg.bias_field, constants=constants,
        pixel_pitch=pitch)


def load_stress_maps(path):
    """Read stress maps from disk.

    ``path`` is either a single map file (taken as M_z) or a directory
    holding ``m_z.nvmap`` and optionally ``m_x.nvmap`` and ``m_y.nvmap``.
    Missing transverse maps are zero.
    """
    from .fileio import read_map

    if os.path.isdir(path):
        files = {name: os.path.join(path, f"{name}.nvmap") for name in ("m_z", "m_x", "m_y")}
        if not os.path.exists(files["m_z"]):
            raise InvalidArgumentError(f"{path} has no m_z.nvmap")
    else:
        files = {"m_z": path}
    m_z, _ = read_map(files["m_z"])
    out = {"m_z": m_z}
    for name in ("m_x", "m_y"):
        p = files.get(name)
        if p is not None and os.path.exists(p):
            arr, _ = read_map(p)
            if arr.shape != m_z.shape:
                raise ShapeMismatchError(f"stress map {name}", m_z.shape, arr.shape)
            out[name] = arr
        else:
            out[name] = np.zeros_like(m_z)
    return StressMaps(**out)
