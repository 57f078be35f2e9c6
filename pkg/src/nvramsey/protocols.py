"""Ramsey measurement protocols defined by phase tables and signed weights.

A protocol is a list of sequences that differ only in the phases of the two
tones in their init and final pulses.  The weighted sum of the sequence
signals is what a lock-in camera records.  Only the difference
``c = init_phase - final_phase`` of each tone matters for the signal, which
gives simple structural rules for whether a table cancels SQ (common-mode)
leakage while keeping the DQ (magnetic) signal.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._validation import check_int, check_positive
from .exceptions import InvalidArgumentError
from .pulse_engine import DephasingModel, RamseySequence, calibrate_pulse, grid_p0, readout_signal

BASES = ("SQ", "DQ")
NORMALIZATIONS = ("difference-over-sum", "raw-difference")


@dataclass(frozen=True)
class PhaseTable:
    """Tone phases of each sequence.

    ``phases[k] = ((init_plus, init_minus), (final_plus, final_minus))`` in
    radians.  Phases of a tone that is not applied are ignored.
    """

    phases: tuple

    def __post_init__(self):
        arr = np.asarray(self.phases, dtype=float)
        if arr.ndim != 3 or arr.shape[1:] != (2, 2):
            raise InvalidArgumentError(
                f"phase table must have shape (N, 2, 2), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("phase table contains non-finite values")
        object.__setattr__(self, "phases", tuple(tuple(tuple(p) for p in s) for s in arr))

    def __len__(self):
        return len(self.phases)

    def array(self):
        return np.asarray(self.phases, dtype=float)

    def phase_differences(self):
        """``init - final`` per sequence and tone, shape (N, 2)."""
        a = self.array()
        return a[:, 0, :] - a[:, 1, :]


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    basis: str
    table: PhaseTable
    weights: tuple
    normalization: str = "difference-over-sum"

    def __post_init__(self):
        if self.basis not in BASES:
            raise InvalidArgumentError(f"basis must be one of {BASES}")
        if self.normalization not in NORMALIZATIONS:
            raise InvalidArgumentError(f"normalization must be one of {NORMALIZATIONS}")
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if len(self.table) < 2:
            raise InvalidArgumentError("a protocol needs at least two sequences")
        if len(w) != len(self.table):
            raise InvalidArgumentError(
                f"{len(w)} weights for {len(self.table)} sequences")
        if any(x not in (-1.0, 1.0) for x in w):
            raise InvalidArgumentError("weights must be +1 or -1")
        if sum(w) != 0:
            raise InvalidArgumentError("weights must contain as many +1 as -1")

    @property
    def n_sequences(self):
        return len(self.table)

    @property
    def fringe_multiplier(self):
        """Phase accumulation rate relative to an SQ fringe (1 or 2)."""
        return 2 if self.basis == "DQ" else 1

    @property
    def pulse_kind(self):
        return "dq_pi2" if self.basis == "DQ" else "sq_pi2"

    def calibrate(self, env):
        return calibrate_pulse(env, self.pulse_kind)

    def sequences(self, pulse, tau, detuning=(0.0, 0.0)):
        """Concrete sequences built from a calibrated base pulse."""
        base = pulse.with_detunings(*detuning)
        out = []
        for (ip, im), (fp, fm) in self.table.phases:
            out.append(RamseySequence(base.with_phases(ip, im), float(tau),
                                      base.with_phases(fp, fm)))
        return out

    def pairs(self):
        """Index pairs ``(positive, negative)`` in order of appearance."""
        w = np.asarray(self.weights)
        pos, neg = list(np.flatnonzero(w > 0)), list(np.flatnonzero(w < 0))
        return list(zip(pos, neg))

    def combine(self, signals, axis=0):
        """Weighted combination of per-sequence signals along ``axis``."""
        signals = np.moveaxis(np.asarray(signals, dtype=float), axis, 0)
        w = np.asarray(self.weights).reshape((-1,) + (1,) * (signals.ndim - 1))
        diff = (w * signals).sum(axis=0)
        if self.normalization == "raw-difference":
            return diff
        total = signals.sum(axis=0)
        return np.divide(diff, total, out=np.zeros_like(diff), where=total != 0)

    def to_dict(self):
        return {"name": self.name, "basis": self.basis,
                "phases": [[list(s[0]), list(s[1])] for s in self.table.phases],
                "weights": list(self.weights), "normalization": self.normalization}

    @classmethod
    def from_dict(cls, d):
        missing = {"name", "basis", "phases", "weights"} - set(d)
        if missing:
            raise InvalidArgumentError(f"protocol definition missing {sorted(missing)}")
        return cls(d["name"], d["basis"], PhaseTable(d["phases"]), tuple(d["weights"]),
                   d.get("normalization", "difference-over-sum"))


_P = np.pi
_TABLES = {
    "dq_4ramsey": ("DQ", [((0, 0), (0, 0)), ((0, 0), (0, _P)),
                          ((0, 0), (_P, _P)), ((0, 0), (_P, 0))], (1, -1, 1, -1)),
    "dq_2ramsey": ("DQ", [((0, 0), (0, 0)), ((0, 0), (0, _P))], (1, -1)),
    "sq_2ramsey": ("SQ", [((0, 0), (0, 0)), ((0, 0), (_P, 0))], (1, -1)),
}
BUILTIN_NAMES = tuple(_TABLES)


def builtin_protocol(name, normalization="difference-over-sum"):
    if name not in _TABLES:
        raise InvalidArgumentError(f"unknown protocol {name!r}; choose from {BUILTIN_NAMES}")
    basis, phases, weights = _TABLES[name]
    return ProtocolSpec(name, basis, PhaseTable(phases), weights, normalization)


def tone_detunings(protocol, common=0.0, differential=0.0):
    """Tone detunings ``(+1, -1)`` from common and differential parts.

    SQ protocols use a single tone, so both parts act on it.
    """
    if protocol.basis == "SQ":
        return (common + differential, 0.0)
    return (common + differential, common - differential)


def sweep_offsets(protocol, mode, delta):
    """Tone offsets that move the measured resonance by ``delta``.

    In common mode both tones move together, mimicking a shift of D; in
    differential mode they move apart, mimicking a magnetic field.
    """
    delta = np.asarray(delta, dtype=float)
    if mode not in ("common", "differential"):
        raise InvalidArgumentError("mode must be 'common' or 'differential'")
    if protocol.basis == "SQ":
        return delta, np.zeros_like(delta)
    return delta, delta if mode == "common" else -delta


def sequence_signals(protocol, env, model, tau, detuning=(0.0, 0.0), pulse=None,
                     offsets=(0.0, 0.0), taus=None, pixels=None):
    """Photon signals of every sequence, shape ``(n_seq, n_pix, K[, n_tau])``."""
    grid = env.to_grid()
    pulse = protocol.calibrate(grid.nominal()) if pulse is None else pulse
    seqs = protocol.sequences(pulse, tau, detuning)
    p0 = grid_p0(seqs, grid, model, taus=taus, tone_offsets=offsets, pixels=pixels)
    flat = grid.flat_arrays()
    idx = slice(None) if pixels is None else np.asarray(pixels, dtype=int)
    amp = flat["amplitude"][idx][:, None]
    con = flat["contrast"][idx][:, None]
    if taus is not None:
        amp, con = amp[..., None], con[..., None]
    return readout_signal(p0, amp, con)


def execute_protocol(protocol, env, model=DephasingModel(), tau=None, detuning=(0.0, 0.0),
                     pulse=None):
    """Combined protocol signal for a pixel (float) or grid (array of its shape)."""
    check_positive(tau, "tau")
    grid = env.to_grid()
    s = sequence_signals(protocol, grid, model, tau, detuning, pulse)[:, :, 0]
    out = protocol.combine(s).reshape(grid.shape)
    return float(out[0, 0]) if grid.size == 1 and not hasattr(env, "flat_arrays") else out


@dataclass(frozen=True)
class SweepResult:
    detuning: np.ndarray
    signal: np.ndarray
    slope: float
    window: float
    mode: str
    operating_point: tuple


def fit_slope(x, y, window):
    """Least-squares slope of ``y`` against ``x`` over ``|x| <= window``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sel = np.abs(x) <= window * (1 + 1e-12)
    if sel.sum() < 3 or np.ptp(x[sel]) == 0:
        raise InvalidArgumentError(
            f"slope window {window} Hz holds fewer than 3 distinct sweep points")
    return float(np.polyfit(x[sel], y[sel], 1)[0])


def find_operating_point(protocol, env, model=DephasingModel(), tau=None, pulse=None,
                         points=257):
    """Differential detuning of maximum rising slope within one fringe period.

    Returns ``(tone_plus, tone_minus)`` detunings.
    """
    check_positive(tau, "tau")
    grid = env.to_grid()
    pulse = protocol.calibrate(grid.nominal()) if pulse is None else pulse
    period = 1.0 / (protocol.fringe_multiplier * tau)
    x = np.linspace(-period / 2, period / 2, points)
    off = sweep_offsets(protocol, "differential", x)
    s = sequence_signals(protocol, grid, model, tau, (0.0, 0.0), pulse, off, pixels=[0])
    y = protocol.combine(s[:, 0, :])
    g = np.gradient(y, x)
    i = int(np.argmax(g))
    if 0 < i < len(x) - 1:
        # parabolic refinement of the slope maximum
        a, b, c = g[i - 1], g[i], g[i + 1]
        denom = a - 2 * b + c
        shift = 0.0 if denom == 0 else 0.5 * (a - c) / denom
        xi = x[i] + np.clip(shift, -1, 1) * (x[1] - x[0])
    else:
        xi = x[i]
    return tone_detunings(protocol, 0.0, float(xi))


def detuning_sweep(protocol, env, model=DephasingModel(), tau=None, mode="differential",
                   span=1e6, points=201, window=100e3, operating_point=None, pulse=None):
    """Signal versus resonance detuning around an operating point.

    Parameters
    ----------
    span : float
        Half range of the sweep, Hz.
    window : float
        Half width of the region used for the linear slope fit, Hz.
    operating_point : (float, float), optional
        Tone detunings; found with :func:`find_operating_point` when omitted.
    """
    check_positive(tau, "tau")
    check_positive(span, "span")
    check_int(points, "points", minimum=3)
    check_positive(window, "window")
    grid = env.to_grid()
    pulse = protocol.calibrate(grid.nominal()) if pulse is None else pulse
    if operating_point is None:
        operating_point = find_operating_point(protocol, grid, model, tau, pulse)
    x = np.linspace(-span, span, points)
    off = sweep_offsets(protocol, mode, x)
    s = sequence_signals(protocol, grid, model, tau, operating_point, pulse, off, pixels=[0])
    y = protocol.combine(s[:, 0, :])
    return SweepResult(x, y, fit_slope(x, y, window), float(window), mode,
                       tuple(float(v) for v in operating_point))


class Suppression(NamedTuple):
    factor: float
    below_floor: bool


def suppression_factor(sweep_sq, sweep_dq, floor=1e-12):
    """Ratio of common-mode slopes ``|SQ| / |DQ|``.

    A DQ slope below ``floor`` (relative to the SQ slope) is reported as
    infinite suppression with ``below_floor`` set.
    """
    sq, dq = abs(sweep_sq.slope), abs(sweep_dq.slope)
    if sq == 0:
        raise InvalidArgumentError("reference SQ slope is zero")
    if dq <= floor * sq:
        return Suppression(float("inf"), True)
    return Suppression(sq / dq, False)


def structural_metrics(protocol):
    """Normalized phasor sums that govern leakage and DQ signal strength.

    ``sq_plus`` and ``sq_minus`` are ``|sum w exp(i c)| / N`` for each tone
    (zero means its common-mode leakage cancels); ``dq`` is the same sum for
    ``c_plus - c_minus`` (one means the DQ signals add fully).
    """
    c = protocol.table.phase_differences()
    w = np.asarray(protocol.weights)
    n = len(w)
    sq_p = abs(np.sum(w * np.exp(1j * c[:, 0]))) / n
    if protocol.basis == "SQ":
        return {"sq_plus": sq_p, "sq_minus": 0.0, "dq": 0.0}
    sq_m = abs(np.sum(w * np.exp(1j * c[:, 1]))) / n
    dq = abs(np.sum(w * np.exp(1j * (c[:, 0] - c[:, 1])))) / n
    return {"sq_plus": sq_p, "sq_minus": sq_m, "dq": dq}


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_phase_table`.

    ``residual_sq_bound`` is the largest common-mode slope over all injected
    Rabi errors, relative to the SQ 2-Ramsey slope.
    """

    valid: bool
    residual_sq_bound: float
    report: dict = field(default_factory=dict)


def validate_phase_table(table, weights=(1, -1, 1, -1), env=None, model=DephasingModel(),
                         tau=None, rabi_errors=(-0.04, -0.02, 0.02, 0.04), max_leakage=1e-3,
                         min_dq_fraction=0.9, window=100e3, points=21, tol=1e-9):
    """Check a DQ phase table both structurally and by simulation.

    Parameters
    ----------
    table : PhaseTable or ProtocolSpec
        A bare table is paired with ``weights``.
    env : PixelEnvironment, optional
        Test pixel; defaults to a nominal pixel with three hyperfine lines.
    tau : float, optional
        Free precession; the calibrated revival of the built-in 4-Ramsey
        table on ``env`` when omitted.

    For each relative Rabi error the table is simulated on a pixel whose
    drive is off by that fraction (pulses calibrated on the nominal pixel).
    The table passes if its common-mode slope stays below ``max_leakage``
    times the SQ 2-Ramsey slope and its differential slope keeps at least
    ``min_dq_fraction`` of the built-in 4-Ramsey value.  Structural rules on
    the phase differences are checked as well; the absolute phase of each
    sequence is free.
    """
    from dataclasses import replace

    from .sample_model import PixelEnvironment

    if isinstance(table, ProtocolSpec):
        protocol = table
    else:
        if not isinstance(table, PhaseTable):
            table = PhaseTable(table)
        if len(table) < 2:
            raise InvalidArgumentError("a phase table needs at least two sequences")
        protocol = ProtocolSpec("candidate", "DQ", table, tuple(weights))
    if protocol.basis != "DQ":
        raise InvalidArgumentError("only DQ tables can be validated")
    env = PixelEnvironment() if env is None else env
    metrics = structural_metrics(protocol)
    report = {"structural": metrics, "common_mode_ratio": {}, "dq_slope_ratio": {},
              "messages": []}
    valid = True
    if metrics["sq_plus"] > tol or metrics["sq_minus"] > tol:
        valid = False
        report["messages"].append("SQ phase sums do not cancel")
    if metrics["dq"] < 1 - tol:
        valid = False
        report["messages"].append("DQ contributions do not add constructively")
    ref4 = builtin_protocol("dq_4ramsey", protocol.normalization)
    sq2 = builtin_protocol("sq_2ramsey", protocol.normalization)
    dq_pulse = protocol.calibrate(env.nominal())
    sq_pulse = sq2.calibrate(env.nominal())
    if tau is None:
        from .analysis import calibrate

        tau = calibrate(env, ref4, model).tau
    kw = dict(model=model, tau=tau, span=window, points=points, window=window)
    worst = 0.0
    for eps in rabi_errors:
        e = replace(env, rabi=env.rabi_nominal * (1 + eps))
        op = find_operating_point(protocol, e, model, tau, dq_pulse)
        cm = detuning_sweep(protocol, e, mode="common", operating_point=op, pulse=dq_pulse, **kw)
        sq_op = find_operating_point(sq2, e, model, tau, sq_pulse)
        sq = detuning_sweep(sq2, e, mode="common", operating_point=sq_op, pulse=sq_pulse, **kw)
        diff = detuning_sweep(protocol, e, mode="differential", operating_point=op,
                              pulse=dq_pulse, **kw)
        op4 = find_operating_point(ref4, e, model, tau, dq_pulse)
        ref = detuning_sweep(ref4, e, mode="differential", operating_point=op4,
                             pulse=dq_pulse, **kw)
        ratio = abs(cm.slope) / abs(sq.slope)
        keep = abs(diff.slope) / abs(ref.slope)
        worst = max(worst, ratio)
        report["common_mode_ratio"][eps] = ratio
        report["dq_slope_ratio"][eps] = keep
        if ratio > max_leakage:
            valid = False
            report["messages"].append(
                f"common-mode leakage {ratio:.2e} at rabi error {eps:+.0%}")
        if keep < min_dq_fraction:
            valid = False
            report["messages"].append(f"DQ slope fraction {keep:.3f} at rabi error {eps:+.0%}")
    report["tau"] = tau
    return ValidationReport(valid, worst, report)


def four_to_two(protocol, signals):
    """Recover 2-Ramsey signals from the sequences of a 4-Ramsey acquisition.

    The first two sequences of the built-in 4-Ramsey table form the 2-Ramsey
    table, so the 2-Ramsey combination is that pair taken alone.
    """
    if protocol.n_sequences != 4:
        raise InvalidArgumentError("expected a four-sequence protocol")
    two = builtin_protocol("dq_2ramsey", protocol.normalization)
    return two.combine(np.asarray(signals)[:2])
