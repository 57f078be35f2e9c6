"""Rotating-frame simulation of two-tone microwave Ramsey sequences.

The three-level system is written in the frame rotating at the applied tone
frequencies, so a level's detuning is ``shift - tone_detuning`` where
``shift`` is the pixel's resonance shift relative to the nominal transition.
Each tone couples |0> to its target level with ``(rabi / 2) * exp(i phase)``.
Propagators are ``exp(-2 pi i H t)`` for a piecewise-constant ``H`` in Hz.

All heavy lifting happens in vectorized helpers that broadcast over an
arbitrary batch of (pixel, hyperfine line, bath sample, sweep point); the
dataclass-level functions are thin wrappers around them.
"""
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from ._validation import check_finite, check_int, check_nonnegative, check_positive
from .exceptions import CalibrationError, InvalidArgumentError, NumericError
from .spin_core import MINUS, PLUS, ZERO

TARGETS = ("+1", "-1")
_LEVEL = {"+1": PLUS, "-1": MINUS}
HYPERFINE_M = np.array([-1.0, 0.0, 1.0])


@dataclass(frozen=True)
class TonePulse:
    """One microwave tone driving ``|0> -> |target>``.

    ``rabi`` is the on-resonance Rabi frequency the tone produces on a
    nominal pixel; pixels scale it by their own ``rabi / rabi_nominal``.
    ``detuning`` is the tone frequency minus the nominal transition frequency.
    """

    target: str
    rabi: float
    detuning: float = 0.0
    phase: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        if self.target not in TARGETS:
            raise InvalidArgumentError(f"target must be one of {TARGETS}, got {self.target!r}")
        check_nonnegative(self.rabi, "rabi")
        check_nonnegative(self.duration, "duration")
        check_finite(self.detuning, "detuning")
        check_finite(self.phase, "phase")


@dataclass(frozen=True)
class MWPulse:
    """Simultaneously applied tones, at most one per transition."""

    tones: tuple

    def __post_init__(self):
        tones = tuple(self.tones)
        object.__setattr__(self, "tones", tones)
        if not 1 <= len(tones) <= 2:
            raise InvalidArgumentError("an MWPulse holds one or two tones")
        targets = [t.target for t in tones]
        if len(set(targets)) != len(targets):
            raise InvalidArgumentError("at most one tone per transition")
        if len({t.duration for t in tones}) != 1:
            raise InvalidArgumentError("simultaneous tones must share a duration")

    @property
    def duration(self):
        return self.tones[0].duration

    def tone(self, target):
        for t in self.tones:
            if t.target == target:
                return t
        return None

    def with_phases(self, plus=None, minus=None):
        new = []
        for t in self.tones:
            phase = plus if t.target == "+1" else minus
            new.append(t if phase is None else replace(t, phase=float(phase)))
        return MWPulse(tuple(new))

    def with_detunings(self, plus=None, minus=None):
        new = []
        for t in self.tones:
            det = plus if t.target == "+1" else minus
            new.append(t if det is None else replace(t, detuning=float(det)))
        return MWPulse(tuple(new))

    def _arrays(self):
        """(rabi, detuning, phase) for the +1 and -1 tones; absent tones are zero."""
        out = []
        for target in TARGETS:
            t = self.tone(target)
            out.append((0.0, 0.0, 0.0) if t is None else (t.rabi, t.detuning, t.phase))
        return out


@dataclass(frozen=True)
class RamseySequence:
    init_pulse: MWPulse
    tau: float
    final_pulse: MWPulse

    def __post_init__(self):
        check_nonnegative(self.tau, "tau")
        # one rotating frame per transition requires matched tone frequencies
        for target in TARGETS:
            a, b = self.init_pulse.tone(target), self.final_pulse.tone(target)
            if a is not None and b is not None and a.detuning != b.detuning:
                raise InvalidArgumentError(
                    f"tone {target} changes frequency between init and final pulse")


@dataclass
class QuantumState:
    """Density matrix in the ``(|+1>, |0>, |-1>)`` basis."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (3, 3):
            raise InvalidArgumentError(f"density matrix must be 3x3, got {rho.shape}")
        if abs(np.trace(rho) - 1) > 1e-9:
            raise InvalidArgumentError(f"trace must be 1, got {np.trace(rho)}")
        if np.abs(rho - rho.conj().T).max() > 1e-12:
            raise InvalidArgumentError("density matrix is not Hermitian")
        self.rho = rho

    @classmethod
    def ground(cls):
        rho = np.zeros((3, 3), dtype=complex)
        rho[ZERO, ZERO] = 1
        return cls(rho)

    @classmethod
    def from_vector(cls, psi):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @property
    def populations(self):
        return np.real(np.diag(self.rho)).copy()

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.rho).min())


_MODE_ALIASES = {"analytic-envelope": "analytic-envelope", "analytic": "analytic-envelope",
                 "monte-carlo-bath": "monte-carlo-bath", "monte-carlo": "monte-carlo-bath"}


@dataclass(frozen=True)
class DephasingModel:
    """How inhomogeneous dephasing is applied during free precession.

    ``analytic-envelope`` multiplies coherences by exponential envelopes.
    ``monte-carlo-bath`` averages over Lorentzian-distributed static detunings
    (a magnetic bath acting differentially plus within-pixel axial stress
    acting in common mode) that are present during pulses as well.

    ``t2_star_sq`` is only used for environments that do not carry their own
    bath-limited T2*.
    """

    mode: str = "analytic-envelope"
    t2_star_sq: float = 1.24e-6
    p: float = 1.0
    bath_samples: int = 10000
    seed: int = 0

    def __post_init__(self):
        mode = _MODE_ALIASES.get(self.mode)
        if mode is None:
            raise InvalidArgumentError(f"unknown dephasing mode {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        check_positive(self.t2_star_sq, "t2_star_sq")
        if self.p != 1.0:
            raise InvalidArgumentError("decay shape p is fixed to 1")
        check_int(self.bath_samples, "bath_samples", minimum=1)

    @property
    def analytic(self):
        return self.mode == "analytic-envelope"


def lorentzian_hwhm(t2_star):
    """Half width of a Lorentzian whose Fourier transform decays as exp(-t/T2*)."""
    return 1.0 / (2 * np.pi * np.asarray(t2_star, dtype=float))


# -- vectorized core ---------------------------------------------------------

def _generator(delta_p, delta_m, rabi_p, rabi_m, phase_p, phase_m):
    delta_p, delta_m, rabi_p, rabi_m = np.broadcast_arrays(
        np.asarray(delta_p, float), np.asarray(delta_m, float),
        np.asarray(rabi_p, float), np.asarray(rabi_m, float))
    h = np.zeros(delta_p.shape + (3, 3), dtype=complex)
    h[..., PLUS, PLUS] = delta_p
    h[..., MINUS, MINUS] = delta_m
    cp = 0.5 * rabi_p * np.exp(1j * phase_p)
    cm = 0.5 * rabi_m * np.exp(1j * phase_m)
    h[..., PLUS, ZERO] = cp
    h[..., ZERO, PLUS] = np.conj(cp)
    h[..., MINUS, ZERO] = cm
    h[..., ZERO, MINUS] = np.conj(cm)
    return h


def _expm_hermitian(h, t):
    """``exp(-2 pi i h t)`` for a batch of Hermitian matrices."""
    if t == 0:
        return np.broadcast_to(np.eye(3, dtype=complex), h.shape).copy()
    w, v = np.linalg.eigh(h)
    phase = np.exp(-2j * np.pi * w * t)
    return (v * phase[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def batch_propagator(pulse, shift_p, shift_m, rabi_scale=1.0):
    """Propagators of ``pulse`` for arrays of level shifts (broadcast batch)."""
    (rp, dp, pp), (rm, dm, pm) = pulse._arrays()
    scale = np.asarray(rabi_scale, dtype=float)
    h = _generator(np.asarray(shift_p) - dp, np.asarray(shift_m) - dm,
                   rp * scale, rm * scale, pp, pm)
    return _expm_hermitian(h, pulse.duration)


def pulse_propagator(pulse, env_detunings=(0.0, 0.0), rabi_scale=1.0, atol=1e-9):
    """Unitary of one two-tone pulse.

    Parameters
    ----------
    pulse : MWPulse
    env_detunings : (float, float)
        Resonance shifts of the ``|0>->|+1>`` and ``|0>->|-1>`` transitions
        of the environment, Hz.  The level detuning seen by the rotating
        frame is this shift minus the tone detuning.
    rabi_scale : float
        Local drive strength relative to nominal.
    """
    u = batch_propagator(pulse, env_detunings[0], env_detunings[1], rabi_scale)
    err = np.abs(u.conj().T @ u - np.eye(3)).max()
    if err > atol:
        raise NumericError(f"propagator not unitary (max deviation {err:.2e})")
    return u


def _frame_detunings(seq, shift_p, shift_m):
    dets = []
    for target, shift in (("+1", shift_p), ("-1", shift_m)):
        tone = seq.init_pulse.tone(target) or seq.final_pulse.tone(target)
        dets.append(np.asarray(shift, float) - (tone.detuning if tone else 0.0))
    return dets


def ramsey_p0(sequences, shift_p, shift_m, rabi_scale, taus=None,
              sq_rate=0.0, dq_rate=0.0):
    """Final |0> population for a list of sequences over a batch.

    Parameters
    ----------
    sequences : list of RamseySequence
    shift_p, shift_m, rabi_scale : array_like
        Broadcast to a common batch shape ``B``.
    taus : array_like, optional
        Free-precession times replacing each sequence's own ``tau``.
    sq_rate, dq_rate : array_like
        Exponential decay rates (1/s) applied to SQ and DQ coherences during
        free precession; broadcast with ``B``.

    Returns
    -------
    ndarray
        Shape ``(n_seq,) + B`` or ``(n_seq,) + B + (n_tau,)`` when ``taus``
        is given.
    """
    shift_p, shift_m, rabi_scale, sq_rate, dq_rate = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (shift_p, shift_m, rabi_scale, sq_rate, dq_rate)))
    out = []
    for seq in sequences:
        u1 = batch_propagator(seq.init_pulse, shift_p, shift_m, rabi_scale)
        u2 = batch_propagator(seq.final_pulse, shift_p, shift_m, rabi_scale)
        psi = u1[..., :, ZERO]
        rho = psi[..., :, None] * psi[..., None, :].conj()
        row = u2[..., ZERO, :]
        # P0 = sum_jk M_jk * L_jk(tau) with L the free-evolution factor
        m = row[..., :, None] * row[..., None, :].conj() * rho
        dp, dm = _frame_detunings(seq, shift_p, shift_m)
        t = np.atleast_1d(np.asarray(seq.tau if taus is None else taus, dtype=float))
        d = np.stack([dp, np.zeros_like(dp), dm], axis=-1)
        diff = d[..., :, None] - d[..., None, :]
        rate = np.zeros(d.shape + (3,))
        for a, b in ((PLUS, ZERO), (MINUS, ZERO)):
            rate[..., a, b] = rate[..., b, a] = sq_rate
        rate[..., PLUS, MINUS] = rate[..., MINUS, PLUS] = dq_rate
        tt = t.reshape((1,) * diff.ndim + (-1,))
        lam = np.exp((-2j * np.pi * diff[..., None] - rate[..., None]) * tt)
        p0 = np.real(np.einsum("...jk,...jkt->...t", m, lam))
        out.append(p0 if taus is not None else p0[..., 0])
    return np.stack(out)


def _stratified_cauchy(rng, hwhm, n):
    """Lorentzian samples on stratified quantiles (one per stratum, jittered)."""
    u = (np.arange(n) + rng.random(n)) / n
    return np.asarray(hwhm, float)[..., None] * np.tan(np.pi * (u - 0.5))


def _bath_samples(model, pixel_index, bath_hwhm, stress_hwhm):
    rng = np.random.default_rng([model.seed, int(pixel_index)])
    n = model.bath_samples
    b = _stratified_cauchy(rng, bath_hwhm, n)
    s = _stratified_cauchy(rng, stress_hwhm, n)
    return b, s[..., rng.permutation(n)]


def _as_grid(env):
    return env.to_grid() if hasattr(env, "to_grid") else env


def grid_p0(sequences, env, model, taus=None, tone_offsets=(0.0, 0.0),
            pixels=None, chunk=2048):
    """Hyperfine- and bath-averaged |0> population over a pixel grid.

    Parameters
    ----------
    sequences : list of RamseySequence
    env : PixelEnvironment or PixelGrid
    model : DephasingModel
    taus : array_like, optional
    tone_offsets : (array_like, array_like)
        Extra tone detunings for the +1 and -1 tones, broadcast over a
        trailing sweep axis of length K (scalars give K = 1).
    pixels : array_like of int, optional
        Flat pixel indices to simulate; default all.

    Returns
    -------
    ndarray
        ``(n_seq, n_pix, K)`` or ``(n_seq, n_pix, K, n_tau)``.
    """
    grid = _as_grid(env)
    flat = grid.flat_arrays()
    idx = np.arange(grid.size) if pixels is None else np.asarray(pixels, dtype=int)
    off_p, off_m = (np.atleast_1d(np.asarray(o, dtype=float)) for o in tone_offsets)
    off_p, off_m = np.broadcast_arrays(off_p, off_m)
    base_p, base_m = grid.transition_shifts()
    # a tone shifted by +x is equivalent to the level shifted by -x
    sp = base_p[idx, None] - off_p[None, :]
    sm = base_m[idx, None] - off_m[None, :]
    scale = flat["rabi"][idx, None] / grid.rabi_nominal
    t2 = flat["t2_star_sq"][idx, None]
    stress_hwhm = flat["stress_broadening"][idx, None]
    a = grid.constants.hyperfine_splitting
    weights = np.asarray(grid.hyperfine_populations, dtype=float)
    n_tau = None if taus is None else len(np.atleast_1d(taus))
    shape = (len(sequences), len(idx), len(off_p)) + (() if n_tau is None else (n_tau,))
    total = np.zeros(shape)
    for m_i, w in zip(HYPERFINE_M, weights):
        if w == 0:
            continue
        hp, hm = sp + a * m_i, sm - a * m_i
        if model.analytic:
            sq_rate = 1.0 / t2 + 2 * np.pi * stress_hwhm
            dq_rate = 2.0 / t2
            for lo in range(0, len(idx), chunk):
                sl = slice(lo, lo + chunk)
                total[:, sl] += w * ramsey_p0(
                    sequences, hp[sl], hm[sl], scale[sl], taus,
                    np.broadcast_to(sq_rate[sl], hp[sl].shape),
                    np.broadcast_to(dq_rate[sl], hp[sl].shape))
        else:
            for k, pix in enumerate(idx):
                b, s = _bath_samples(model, pix, lorentzian_hwhm(t2[k, 0]), stress_hwhm[k, 0])
                acc = 0.0
                step = max(1, chunk // max(1, len(off_p)))
                for lo in range(0, b.size, step):
                    bb, ss = b[lo:lo + step], s[lo:lo + step]
                    p = ramsey_p0(sequences,
                                  hp[k][:, None] + bb + ss, hm[k][:, None] - bb + ss,
                                  scale[k][:, None], taus)
                    acc = acc + p.sum(axis=2)
                total[:, k] += w * acc / b.size
    return total


def readout_signal(p0, amplitude, contrast):
    """Photon count per exposure, ``R0 * (1 - C * (1 - P0))``."""
    return amplitude * (1.0 - contrast * (1.0 - p0))


# -- dataclass-level operations --------------------------------------------

def free_evolution(state, tau, env, model, m_i=0):
    """Evolve a density matrix for ``tau`` seconds without driving.

    Coherences rotate at their transition detunings.  In analytic mode SQ
    coherences decay with the pixel's SQ rate and the DQ coherence with twice
    the bath rate; in monte-carlo mode the phase factors are averaged over
    the pixel's Lorentzian bath samples instead.
    """
    check_nonnegative(tau, "tau")
    if tau == 0:
        return QuantumState(state.rho.copy())
    grid = _as_grid(env)
    sp, sm = grid.transition_shifts()
    a = grid.constants.hyperfine_splitting
    d = np.array([sp[0] + a * m_i, 0.0, sm[0] - a * m_i])
    t2 = grid.flat_arrays()["t2_star_sq"][0]
    gs = grid.flat_arrays()["stress_broadening"][0]
    if model.analytic:
        lam = np.exp(-2j * np.pi * (d[:, None] - d[None, :]) * tau)
        sq = np.exp(-tau * (1.0 / t2 + 2 * np.pi * gs))
        dq = np.exp(-2 * tau / t2)
        env_m = np.ones((3, 3))
        env_m[PLUS, ZERO] = env_m[ZERO, PLUS] = env_m[MINUS, ZERO] = env_m[ZERO, MINUS] = sq
        env_m[PLUS, MINUS] = env_m[MINUS, PLUS] = dq
        lam = lam * env_m
    else:
        b, s = _bath_samples(model, 0, lorentzian_hwhm(t2), gs)
        ds = np.stack([d[0] + b + s, np.zeros_like(b), d[2] - b + s], axis=-1)
        lam = np.exp(-2j * np.pi * (ds[:, :, None] - ds[:, None, :]) * tau).mean(axis=0)
    rho = state.rho * lam
    return QuantumState(0.5 * (rho + rho.conj().T))


def run_sequence(seq, env, model):
    """Photon signal of one Ramsey sequence on one pixel (hyperfine averaged)."""
    grid = _as_grid(env)
    p0 = grid_p0([seq], grid, model)[0, 0, 0]
    flat = grid.flat_arrays()
    return float(readout_signal(p0, flat["amplitude"][0], flat["contrast"][0]))


def final_state(seq, env, model=None):
    """Pure-state result of a sequence on a single hyperfine line, no dephasing."""
    grid = _as_grid(env)
    sp, sm = grid.transition_shifts()
    scale = grid.flat_arrays()["rabi"][0] / grid.rabi_nominal
    u1 = batch_propagator(seq.init_pulse, sp[0], sm[0], scale)
    u2 = batch_propagator(seq.final_pulse, sp[0], sm[0], scale)
    dp, dm = _frame_detunings(seq, sp[0], sm[0])
    f = np.diag(np.exp(-2j * np.pi * np.array([dp, 0.0, dm]) * seq.tau))
    return u2 @ f @ u1[:, ZERO]


PULSE_KINDS = ("sq_pi2", "sq_pi", "dq_pi2")

_DQ_PLUS = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)


def transfer_fidelity(pulse, kind, shift=(0.0, 0.0), rabi_scale=1.0):
    """How well ``pulse`` performs the transfer named by ``kind`` from |0>."""
    psi = batch_propagator(pulse, shift[0], shift[1], rabi_scale)[..., :, ZERO]
    if kind == "sq_pi":
        return np.abs(psi[..., PLUS]) ** 2
    if kind == "sq_pi2":
        # best overlap with (|0> + e^{i chi}|+1>)/sqrt(2) over chi
        return 0.5 * (np.abs(psi[..., ZERO]) + np.abs(psi[..., PLUS])) ** 2
    if kind == "dq_pi2":
        return np.abs(psi @ _DQ_PLUS.conj()) ** 2
    raise InvalidArgumentError(f"unknown pulse kind {kind!r}")


def _pulse_for(kind, rabi, duration):
    if kind == "dq_pi2":
        return MWPulse((TonePulse("+1", rabi, duration=duration),
                        TonePulse("-1", rabi, duration=duration)))
    return MWPulse((TonePulse("+1", rabi, duration=duration),))


def calibrate_pulse(env, kind, nominal=True, min_fidelity=0.999):
    """Find the pulse duration that best performs ``kind`` on ``env``.

    By default the search runs on the environment's nominal twin (nominal
    Rabi frequency, no shifts, single hyperfine line); reusing that pulse on
    off-nominal pixels is what produces realistic pulse errors.

    The two-tone DQ pulse drives the bright superposition at sqrt(2) times the
    per-tone Rabi frequency, so its duration lands near ``1 / (2 sqrt(2) rabi)``.
    """
    if kind not in PULSE_KINDS:
        raise InvalidArgumentError(f"kind must be one of {PULSE_KINDS}")
    target = env.nominal() if nominal else env
    grid = _as_grid(target)
    rabi = grid.rabi_nominal
    if rabi <= 0:
        raise CalibrationError("cannot calibrate a pulse with zero Rabi frequency")
    scale = grid.flat_arrays()["rabi"][0] / rabi
    sp, sm = grid.transition_shifts()
    shift = (sp[0], sm[0])
    guess = {"sq_pi": 1 / (2 * rabi), "sq_pi2": 1 / (4 * rabi),
             "dq_pi2": 1 / (2 * np.sqrt(2) * rabi)}[kind]

    def loss(t):
        return -float(transfer_fidelity(_pulse_for(kind, rabi, t), kind, shift, scale))

    res = minimize_scalar(loss, bounds=(0.5 * guess, 1.5 * guess), method="bounded",
                          options={"xatol": guess * 1e-10})
    fid = -res.fun
    if not res.success or fid < min_fidelity:
        raise CalibrationError(
            f"{kind} calibration reached fidelity {fid:.6f} at t={res.x:.3e} s "
            f"(required {min_fidelity})")
    return _pulse_for(kind, rabi, float(res.x))
