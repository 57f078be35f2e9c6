"""Lock-in camera: exposure pairing, I/Q accumulation, shot noise, quantization.

Each demodulation cycle has four exposures (quarters).  The I channel
accumulates ``q1 - q3`` and the Q channel ``q2 - q4`` over ``n_demod``
cycles before a single digitization.  Sequences are assigned to quarters so
that Q carries the negated magnetic signal, hence ``I - Q`` doubles it.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_int, check_nonnegative, check_positive
from .exceptions import InvalidArgumentError, TimingViolationError

MAX_EXPOSURE_RATE = 1e6


@dataclass(frozen=True)
class CameraConfig:
    """Lock-in camera settings.

    Parameters
    ----------
    f_demod : float or None
        Demodulation frequency, Hz.  ``None`` runs as fast as the pulse
        sequence allows, i.e. ``1 / t_demod``.
    n_demod : int
        Demodulation cycles accumulated per frame.
    t_init_read : float
        Optical initialization/readout pulse per exposure, s.
    delay_budget : float
        Inter-pulse delays per cycle, s.
    mw_budget : float
        Time reserved per cycle for the microwave pulses, s.  The actual
        pulse total is used when it is longer.
    full_scale : float
        Photons mapped to the positive end of the signed digital range.
    read_noise : float
        Gaussian read noise per exposure, photons (standard deviation).
    """

    f_demod: float = None
    n_demod: int = 24
    bit_depth: int = 10
    t_init_read: float = 4e-6
    delay_budget: float = 8e-6
    mw_budget: float = 1e-6
    buffer_frames: int = 500
    full_scale: float = 67000.0
    read_noise: float = 0.0
    shot_noise: bool = True
    max_frame_rate: float = 3.8e3
    max_f_demod: float = 250e3

    def __post_init__(self):
        if self.bit_depth != 10:
            raise InvalidArgumentError("the lock-in camera has a fixed 10-bit depth")
        check_int(self.n_demod, "n_demod", minimum=1)
        check_int(self.buffer_frames, "buffer_frames", minimum=1)
        if self.f_demod is not None:
            check_positive(self.f_demod, "f_demod")
            if self.f_demod > self.max_f_demod:
                raise InvalidArgumentError(
                    f"f_demod {self.f_demod:g} Hz exceeds the {self.max_f_demod:g} Hz limit")
            if 4 * self.f_demod > MAX_EXPOSURE_RATE:
                raise InvalidArgumentError("exposure rate 4*f_demod exceeds 1 MHz")
        for name in ("t_init_read", "delay_budget", "mw_budget", "read_noise"):
            check_nonnegative(getattr(self, name), name)
        check_positive(self.full_scale, "full_scale")
        check_positive(self.max_frame_rate, "max_frame_rate")

    @property
    def digital_range(self):
        half = 2 ** (self.bit_depth - 1)
        return -half, half - 1

    @property
    def photons_per_unit(self):
        return self.full_scale / 2 ** (self.bit_depth - 1)


@dataclass(frozen=True)
class TimingBudget:
    t_demod: float
    f_demod: float
    frame_rate: float
    cycle_content: float
    frame_rate_limited: bool


def timing_budget(cfg, protocol, tau, pulse_duration=0.0):
    """Demodulation period and frame rate for a protocol at free-precession ``tau``.

    ``t_demod = 4 * (t_init_read + tau) + mw + delays`` where ``mw`` is the
    larger of the configured budget and the eight pulses of one cycle.
    The frame rate ``1 / (n_demod * t_demod)`` is capped at the camera's
    maximum with a flag.
    """
    check_nonnegative(tau, "tau")
    patterns = protocol.n_sequences // 2
    if cfg.n_demod % patterns:
        raise InvalidArgumentError(
            f"n_demod={cfg.n_demod} is not a multiple of the {patterns} exposure patterns "
            f"of {protocol.name}")
    mw = max(cfg.mw_budget, 8 * pulse_duration)
    content = 4 * (cfg.t_init_read + tau) + mw + cfg.delay_budget
    if cfg.f_demod is None:
        t_demod = max(content, 1.0 / cfg.max_f_demod, 4.0 / MAX_EXPOSURE_RATE)
    else:
        t_demod = 1.0 / cfg.f_demod
        if content > t_demod * (1 + 1e-12):
            deficit = content - t_demod
            raise TimingViolationError(
                f"cycle content {content * 1e6:.3f} us exceeds 1/f_demod = "
                f"{t_demod * 1e6:.3f} us by {deficit * 1e9:.1f} ns", deficit)
    rate = 1.0 / (cfg.n_demod * t_demod)
    limited = rate > cfg.max_frame_rate
    return TimingBudget(t_demod, 1.0 / t_demod, min(rate, cfg.max_frame_rate), content, limited)


def exposure_quarters(protocol, signals):
    """Arrange per-sequence exposure signals into quarters.

    ``signals`` has the sequence axis first.  Returns ``(K, 4, ...)`` with one
    pattern per (+, -) pair: ``q1 = q4 = S_plus`` and ``q2 = q3 = S_minus``,
    so I sees ``S_plus - S_minus`` and Q the negated difference.
    """
    signals = np.asarray(signals, dtype=float)
    out = []
    for p, m in protocol.pairs():
        out.append(np.stack([signals[p], signals[m], signals[m], signals[p]]))
    return np.stack(out)


@dataclass(frozen=True)
class FrameResult:
    i: np.ndarray
    q: np.ndarray
    combined: np.ndarray
    saturated: np.ndarray
    index: int = 0
    timestamp: float = 0.0


def _quantize(photons, cfg):
    lo, hi = cfg.digital_range
    raw = np.rint(photons / cfg.photons_per_unit)
    sat = (raw < lo) | (raw > hi)
    return np.clip(raw, lo, hi).astype(np.int16), sat


def accumulate(quarters, cfg, rng=None):
    """Analog I and Q sums in photons for one frame (before digitization)."""
    quarters = np.asarray(quarters, dtype=float)
    # (4,) and (4, H, W) hold a single pattern; (K, 4) and (K, 4, H, W) hold K
    if quarters.ndim in (1, 3):
        quarters = quarters[None]
    if quarters.ndim not in (2, 4) or quarters.shape[1] != 4:
        raise InvalidArgumentError(f"expected quarters of shape (K, 4, ...), got {quarters.shape}")
    k = quarters.shape[0]
    if cfg.n_demod % k:
        raise InvalidArgumentError(f"n_demod={cfg.n_demod} is not a multiple of {k} patterns")
    n = cfg.n_demod // k
    if np.any(quarters < 0):
        raise InvalidArgumentError("exposure photon counts must be non-negative")
    mean = n * quarters
    if rng is not None and cfg.shot_noise:
        counts = rng.poisson(mean).astype(float)
    else:
        counts = mean
    if rng is not None and cfg.read_noise > 0:
        counts = counts + rng.normal(0.0, cfg.read_noise * np.sqrt(n), counts.shape)
    i = (counts[:, 0] - counts[:, 2]).sum(axis=0)
    q = (counts[:, 1] - counts[:, 3]).sum(axis=0)
    return i, q


def expected_combined(quarters, cfg):
    """Noiseless, undigitized ``I - Q`` in digital units."""
    i, q = accumulate(quarters, cfg, None)
    return (i - q) / cfg.photons_per_unit


def acquire_average(quarters, cfg, rng, frames):
    """Mean of ``frames`` lock-in frames, rounded to digital units.

    Shot noise of the summed frames is drawn in one step, which is exact for
    Poisson counts.  Individual frames are not digitized, so quantization
    and saturation apply to the average.
    """
    check_int(frames, "frames", minimum=1)
    big = replace(cfg, n_demod=cfg.n_demod * frames)
    i, q = accumulate(quarters, big, rng)
    i, si = _quantize(i / frames, cfg)
    q, sq = _quantize(q / frames, cfg)
    return FrameResult(i, q, i - q, si | sq)


def acquire_frame(quarters, cfg, rng=None, index=0, timestamp=0.0):
    """Digitize one lock-in frame.

    Parameters
    ----------
    quarters : ndarray
        Expected photons per exposure, shape ``(4, H, W)`` or ``(K, 4, H, W)``
        for K exposure patterns that share the ``n_demod`` cycles equally.
    rng : numpy.random.Generator, optional
        Source of shot and read noise; ``None`` gives the noiseless frame.
    """
    i_ph, q_ph = accumulate(quarters, cfg, rng)
    i, si = _quantize(i_ph, cfg)
    q, sq = _quantize(q_ph, cfg)
    combined = i.astype(np.int16) - q.astype(np.int16)
    return FrameResult(i, q, combined, si | sq, int(index), float(timestamp))


@dataclass
class FrameSeries:
    combined: np.ndarray
    i: np.ndarray
    q: np.ndarray
    saturated: np.ndarray
    frame_rate: float
    timing: TimingBudget
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return self.combined.shape[0]

    def __getitem__(self, k):
        return FrameResult(self.i[k], self.q[k], self.combined[k], self.saturated[k], k,
                           k / self.frame_rate)

    @property
    def timestamps(self):
        return np.arange(len(self)) / self.frame_rate

    @property
    def buffer_markers(self):
        return self.metadata["buffer_markers"]


def acquire_series(env, protocol, model, cfg, frames, tau, detuning=None, pulse=None,
                   seed=0, signals=None):
    """Simulate ``frames`` consecutive lock-in frames of a protocol on a grid.

    The exposure signals are computed once (static field) and every frame
    draws fresh shot noise from a generator seeded with ``seed``.  Buffer
    boundaries every ``cfg.buffer_frames`` frames are listed in the metadata;
    transfer dead time is recorded there too but no data are dropped.

    Parameters
    ----------
    detuning : (float, float), optional
        Tone detunings; the operating point of the nominal pixel when omitted.
    signals : ndarray, optional
        Precomputed per-sequence exposure signals ``(n_seq, H, W)``.
    """
    from .protocols import find_operating_point, sequence_signals

    check_int(frames, "frames", minimum=1)
    grid = env.to_grid()
    if pulse is None:
        pulse = protocol.calibrate(grid.nominal())
    if signals is None:
        if detuning is None:
            nom = grid.nominal()
            detuning = find_operating_point(protocol, nom, model, tau, pulse)
        s = sequence_signals(protocol, grid, model, tau, detuning, pulse)[:, :, 0]
        signals = s.reshape((protocol.n_sequences,) + grid.shape)
    timing = timing_budget(cfg, protocol, tau, pulse.duration)
    quarters = exposure_quarters(protocol, signals)
    rng = np.random.default_rng(seed)
    shape = (frames,) + grid.shape
    comb = np.empty(shape, np.int16)
    ii = np.empty(shape, np.int16)
    qq = np.empty(shape, np.int16)
    sat = np.empty(shape, bool)
    for k in range(frames):
        fr = acquire_frame(quarters, cfg, rng, k, k / timing.frame_rate)
        comb[k], ii[k], qq[k], sat[k] = fr.combined, fr.i, fr.q, fr.saturated
    meta = {
        "seed": int(seed), "frames": int(frames), "frame_rate": timing.frame_rate,
        "duration": frames / timing.frame_rate, "t_demod": timing.t_demod,
        "f_demod": timing.f_demod, "frame_rate_limited": timing.frame_rate_limited,
        "buffer_frames": cfg.buffer_frames,
        "buffer_markers": list(range(cfg.buffer_frames, frames + 1, cfg.buffer_frames)),
        "protocol": protocol.name, "tau": float(tau),
        "detuning": None if detuning is None else [float(d) for d in detuning],
        "saturated_pixels": int(sat.any(axis=0).sum()),
    }
    return FrameSeries(comb, ii, qq, sat, timing.frame_rate, timing, meta)
