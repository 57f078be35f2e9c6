"""Sensitivity, homogeneity statistics, calibration and Allan deviation."""
from dataclasses import dataclass, replace

import numpy as np

from ._validation import check_positive
from .exceptions import CalibrationError, InvalidArgumentError
from .pulse_engine import DephasingModel
from .spin_core import NVConstants


@dataclass(frozen=True)
class DecileStats:
    median: float
    d10: float
    d90: float
    ridr: float


def ridr_from_deciles(median, d10, d90):
    """Relative inter-decile range ``(D90 - D10) / median``."""
    if median == 0:
        raise InvalidArgumentError("median is zero; the relative range is undefined")
    return (d90 - d10) / median


def ridr(values):
    """Median, deciles and relative inter-decile range of the finite values.

    Deciles use linear interpolation of the empirical quantile function
    (numpy's default, Hyndman-Fan type 7).  Non-finite entries (failed fits,
    flagged pixels) are ignored.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    v = v[np.isfinite(v)]
    if v.size < 10:
        raise InvalidArgumentError(f"need at least 10 finite values, got {v.size}")
    d10, med, d90 = np.quantile(v, [0.1, 0.5, 0.9])
    return DecileStats(float(med), float(d10), float(d90), float(ridr_from_deciles(med, d10, d90)))


def shot_noise_sensitivity(delta_m, contrast, n_photons, t2_star, tau, t_ri, p=1.0,
                           constants=NVConstants()):
    """Photon-shot-noise-limited Ramsey sensitivity, T/sqrt(Hz).

    ``eta = 1/(gamma dm) * 1/(C exp(-(tau/T2*)^p) sqrt(N)) * sqrt(tau + t_ri) / tau``
    with ``gamma = 2 pi * 28.03 GHz/T`` in rad/s/T.
    """
    if delta_m not in (1, 2):
        raise InvalidArgumentError("delta_m must be 1 (SQ) or 2 (DQ)")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau == 0):
        raise ZeroDivisionError("tau = 0 gives no phase accumulation")
    for name, val in (("contrast", contrast), ("n_photons", n_photons), ("t2_star", t2_star),
                      ("tau", tau), ("t_ri", t_ri)):
        check_positive(val, name)
    decay = np.exp(-(tau / t2_star) ** p)
    return (1.0 / (constants.gamma_angular * delta_m)
            / (contrast * decay * np.sqrt(n_photons)) * np.sqrt(tau + t_ri) / tau)


def photons_for_sensitivity(eta, delta_m, contrast, t2_star, tau, t_ri, p=1.0,
                            constants=NVConstants()):
    """Photon number per measurement that gives sensitivity ``eta``."""
    unit = shot_noise_sensitivity(delta_m, contrast, 1.0, t2_star, tau, t_ri, p, constants)
    return (unit / eta) ** 2


def volume_normalized(eta, volume):
    """Sensitivity times ``sqrt(volume)`` (T Hz^-1/2 m^3/2 for SI inputs)."""
    check_positive(volume, "volume")
    return np.asarray(eta, dtype=float) * np.sqrt(volume)


@dataclass(frozen=True)
class SensitivityMap:
    eta: np.ndarray
    sigma_b: np.ndarray
    flagged: np.ndarray


def measured_sensitivity(series, slope, frame_rate):
    """Per-pixel sensitivity from a frame series.

    ``sigma_B = std(series) / |dS/dB|`` and ``eta = sigma_B * sqrt(T_m)`` with
    ``T_m = 1 / F_s``, equal to ``sigma_B / sqrt(2 df)`` for the bandwidth
    ``df = F_s / 2``.  Pixels with zero slope get ``eta = inf`` and a flag.
    """
    series = np.asarray(series, dtype=float)
    if series.shape[0] < 100:
        raise InvalidArgumentError(f"need at least 100 frames, got {series.shape[0]}")
    check_positive(frame_rate, "frame_rate")
    slope = np.broadcast_to(np.abs(np.asarray(slope, dtype=float)), series.shape[1:])
    sd = series.std(axis=0, ddof=1)
    flagged = ~(slope > 0) | ~np.isfinite(slope)
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = np.where(flagged, np.inf, sd / np.where(flagged, 1.0, slope))
    eta = sigma_b * np.sqrt(1.0 / frame_rate)
    return SensitivityMap(eta, sigma_b, flagged)


@dataclass(frozen=True)
class SensitivityReport:
    eta: np.ndarray
    median: float
    d10: float
    d90: float
    ridr: float
    eta_volume: float
    basis: str

    def to_dict(self):
        return {"basis": self.basis, "median": self.median, "d10": self.d10,
                "d90": self.d90, "ridr": self.ridr, "eta_volume_median": self.eta_volume}


def sensitivity_report(eta, basis, voxel=(2.5e-6, 2.4e-6, 1e-6)):
    """Summarize a sensitivity map; ``eta_volume`` uses the median."""
    st = ridr(np.asarray(eta)[np.isfinite(eta)])
    vol = float(np.prod(voxel))
    return SensitivityReport(np.asarray(eta), st.median, st.d10, st.d90, st.ridr,
                             float(volume_normalized(st.median, vol)), basis)


def improvement_ratio(eta_sq, eta_dq):
    """Pixel-wise ``eta_SQ / eta_DQ``; values above one favour DQ."""
    eta_sq, eta_dq = np.asarray(eta_sq, float), np.asarray(eta_dq, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return eta_sq / eta_dq


# -- calibration -------------------------------------------------------------

@dataclass
class CalibrationResult:
    """Operating point of a protocol.

    ``slope`` is ``dS/dB`` of the combined protocol signal at the chosen
    detuning (signal units per tesla, a per-pixel map for grids);
    ``curve`` holds ``(differential detuning, signal, slope)`` arrays for
    the reference pixel.
    """

    tau: float
    detuning: tuple
    slope: np.ndarray
    curve: tuple
    candidates: np.ndarray
    envelope: tuple
    basis: str
    index: int = 0

    def to_dict(self):
        return {"tau": self.tau, "detuning": list(self.detuning), "basis": self.basis,
                "slope_median": float(np.median(np.abs(self.slope))),
                "candidates": list(map(float, self.candidates))}


def _quadrature_signal(protocol, grid, model, taus, pulse, pixels):
    from .protocols import PhaseTable, ProtocolSpec, sequence_signals

    out = []
    for chi in (0.0, np.pi / 2):
        ph = protocol.table.array().copy()
        ph[:, 1, 0] += chi
        shifted = ProtocolSpec(protocol.name, protocol.basis, PhaseTable(ph), protocol.weights,
                               protocol.normalization)
        s = sequence_signals(shifted, grid, model, taus[0], (0.0, 0.0), pulse,
                             taus=taus, pixels=list(pixels))
        out.append(np.asarray([protocol.combine(s[:, k, 0]) for k in range(s.shape[1])]))
    return out[0] + 1j * out[1]


def fringe_envelope(protocol, env, model, taus, pulse=None, pixels=(0,)):
    """Rephasing envelope of the protocol fringe versus ``tau`` at zero detuning.

    The signal and its quadrature (final +1 tone phase advanced by a quarter
    turn) form a complex fringe.  It is projected on the fringe of the
    ``m_I = 0`` line alone, which removes the carrier and leaves the signed
    hyperfine beat ``sum_m w_m cos(phase_m)``.  Its maxima are the revivals
    where all lines rephase; the modulus would also peak half-way between.
    """
    grid = env.to_grid()
    pulse = protocol.calibrate(grid.nominal()) if pulse is None else pulse
    taus = np.asarray(taus, dtype=float)
    z = _quadrature_signal(protocol, grid, model, taus, pulse, pixels)
    single = replace(grid, hyperfine_populations=(0.0, 1.0, 0.0))
    z0 = _quadrature_signal(protocol, single, model, taus, pulse, pixels)
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = np.real(z * np.conj(z0) / np.abs(z0))
    return np.nan_to_num(proj).mean(axis=0)


def _local_maxima(y):
    i = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1
    return i


def field_slope_factor(constants):
    """``d(delta_diff)/dB``: a field ``b`` acts like a differential tone offset ``-gamma b``."""
    return -constants.gyromagnetic_ratio


def calibrate(env, protocol, model=DephasingModel(), tau_range=(100e-9, 2e-6), tau_step=2e-9,
              points=129, max_pixels=512, seed=0, tau=None):
    """Choose ``tau`` and the tone detuning(s) of a protocol.

    ``tau`` is the local maximum of the fringe-amplitude envelope (hyperfine
    beating revival) nearest the expected dephasing time of the basis.  The
    detuning is then the maximum-slope point of a differential sweep over
    one fringe period; for a grid the point maximizing the median slope over
    (up to ``max_pixels``) pixels is used.  A given ``tau`` skips the
    envelope search.
    """
    from .protocols import sequence_signals, sweep_offsets, tone_detunings

    grid = env.to_grid()
    pulse = protocol.calibrate(grid.nominal())
    ref = grid.nominal()
    ref = replace(ref, hyperfine_populations=grid.hyperfine_populations,
                  t2_star_sq=float(np.median(grid.t2_star_sq)))
    t2_basis = float(np.median(grid.t2_star_effective(protocol.basis)))
    taus = np.arange(tau_range[0], tau_range[1] + tau_step / 2, tau_step)
    envelope = fringe_envelope(protocol, ref, model, taus, pulse)
    peaks = _local_maxima(envelope)
    peaks = peaks[envelope[peaks] > 0]
    candidates = taus[peaks]
    if tau is None:
        if peaks.size == 0:
            raise CalibrationError(
                f"no fringe-envelope maximum between {tau_range[0]:.3g} and {tau_range[1]:.3g} s")
        tau = float(candidates[np.argmin(np.abs(candidates - t2_basis))])
    else:
        check_positive(tau, "tau")
        tau = float(tau)

    period = 1.0 / (protocol.fringe_multiplier * tau)
    x = np.linspace(-period / 2, period / 2, points)
    off = sweep_offsets(protocol, "differential", x)
    if grid.size > 1:
        rng = np.random.default_rng(seed)
        pix = np.sort(rng.choice(grid.size, size=min(max_pixels, grid.size), replace=False))
        s = sequence_signals(protocol, grid, model, tau, (0.0, 0.0), pulse, off, pixels=pix)
        y = np.stack([protocol.combine(s[:, k, :]) for k in range(s.shape[1])])
        g = np.gradient(y, x, axis=1)
        score = np.median(g, axis=0)
        y_ref = np.median(y, axis=0)
    else:
        s = sequence_signals(protocol, grid, model, tau, (0.0, 0.0), pulse, off)
        y_ref = protocol.combine(s[:, 0, :])
        score = np.gradient(y_ref, x)
    i = int(np.argmax(score))
    detuning = tone_detunings(protocol, 0.0, float(x[i]))
    slope = pixel_field_slope(protocol, grid, model, tau, detuning, pulse)
    if np.all(slope == 0):
        raise CalibrationError("zero slope at the chosen operating point")
    return CalibrationResult(tau, detuning, slope.reshape(grid.shape) if grid.size > 1 else slope[0],
                             (x, y_ref, score), candidates, (taus, envelope), protocol.basis, i)


def pixel_field_slope(protocol, env, model, tau, detuning, pulse=None, step=2e3):
    """Per-pixel ``dS/dB`` of the combined signal by central differences."""
    from .protocols import sequence_signals, sweep_offsets

    grid = env.to_grid()
    off = sweep_offsets(protocol, "differential", np.array([-step, step]))
    s = sequence_signals(protocol, grid, model, tau, detuning, pulse, off)
    y = protocol.combine(s)
    dsd = (y[:, 1] - y[:, 0]) / (2 * step)
    return dsd * field_slope_factor(grid.constants)


# -- Allan deviation ---------------------------------------------------------

@dataclass(frozen=True)
class AllanCurve:
    tau: np.ndarray
    deviation: np.ndarray
    terms: np.ndarray

    def slope(self, max_decades=2.0):
        """Log-log slope over the first ``max_decades`` of averaging time."""
        sel = self.tau <= self.tau[0] * 10 ** max_decades
        dev = self.deviation[sel]
        if dev.ndim > 1:
            dev = dev.reshape(dev.shape[0], -1).mean(axis=1)
        return float(np.polyfit(np.log10(self.tau[sel]), np.log10(dev), 1)[0])


def allan_deviation(series, frame_rate, octaves=None):
    """Overlapping Allan deviation at octave-spaced averaging times.

    Parameters
    ----------
    series : array_like, shape (N, ...)
        Samples along the first axis; trailing axes (pixels) are independent.
    frame_rate : float
        Sample rate, Hz.

    Returns
    -------
    AllanCurve
        ``tau = m / frame_rate`` for ``m = 1, 2, 4, ...`` up to ``(N - 1) // 2``.
    """
    y = np.asarray(series, dtype=float)
    check_positive(frame_rate, "frame_rate")
    n = y.shape[0]
    if n < 8:
        raise InvalidArgumentError(f"need at least 8 samples, got {n}")
    if octaves is None:
        octaves = []
        m = 1
        while m <= (n - 1) // 2:
            octaves.append(m)
            m *= 2
    x = np.concatenate([np.zeros((1,) + y.shape[1:]), np.cumsum(y, axis=0)])
    devs, terms = [], []
    for m in octaves:
        d = x[2 * m:] - 2 * x[m:-m] + x[:-2 * m]
        k = d.shape[0]
        devs.append(np.sqrt((d ** 2).sum(axis=0) / (2.0 * m * m * k)))
        terms.append(k)
    return AllanCurve(np.asarray(octaves) / frame_rate, np.asarray(devs), np.asarray(terms))


def camera_field_slope(protocol, env, model, tau, detuning, cfg, pulse=None, step=2e3):
    """Per-pixel ``d(I - Q)/dB`` of lock-in frames, digital units per tesla."""
    from .camera_model import exposure_quarters, expected_combined
    from .protocols import sequence_signals, sweep_offsets

    grid = env.to_grid()
    off = sweep_offsets(protocol, "differential", np.array([-step, step]))
    s = sequence_signals(protocol, grid, model, tau, detuning, pulse, off)
    shape = (protocol.n_sequences,) + grid.shape
    y = [expected_combined(exposure_quarters(protocol, s[:, :, k].reshape(shape)), cfg)
         for k in range(2)]
    out = (y[1] - y[0]) / (2 * step) * field_slope_factor(grid.constants)
    return out if grid.size > 1 else out.reshape(-1)
