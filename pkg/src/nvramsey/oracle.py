"""Independent time-domain integration of the driven three-level system.

Used to cross-check the closed-form propagators.  The Schrodinger equation is
integrated with an adaptive Runge-Kutta solver instead of matrix
exponentials, and can optionally include the off-resonant cross-talk of each
tone on the other transition (which the rotating-wave propagators drop).
"""
import numpy as np
from scipy.integrate import solve_ivp

from .spin_core import MINUS, PLUS, ZERO


def _coupling(pulse):
    out = {}
    for target in ("+1", "-1"):
        t = pulse.tone(target)
        out[target] = (0.0, 0.0, 0.0) if t is None else (t.rabi, t.detuning, t.phase)
    return out


def integrate_pulse(pulse, psi0, shift=(0.0, 0.0), rabi_scale=1.0, cross_talk=False,
                    tone_separation=2 * 28.03e9 * 5e-3, rtol=1e-11, atol=1e-12):
    """Evolve ``psi0`` through ``pulse`` by direct ODE integration.

    Parameters
    ----------
    pulse : MWPulse
    psi0 : array_like
        Initial state vector in ``(|+1>, |0>, |-1>)`` order.
    shift : (float, float)
        Transition shifts of the environment, Hz.
    cross_talk : bool
        Also let each tone drive the other transition, rotating at the
        frequency difference between the two frames.
    tone_separation : float
        Frequency of the +1 frame minus that of the -1 frame, Hz.
    """
    c = _coupling(pulse)
    (rp, dp, pp), (rm, dm, pm) = c["+1"], c["-1"]
    rp, rm = rp * rabi_scale, rm * rabi_scale
    d_p, d_m = shift[0] - dp, shift[1] - dm
    sep = tone_separation + (dp - dm)

    def hamiltonian(t):
        h = np.zeros((3, 3), dtype=complex)
        h[PLUS, PLUS] = d_p
        h[MINUS, MINUS] = d_m
        cp = 0.5 * rp * np.exp(1j * pp)
        cm = 0.5 * rm * np.exp(1j * pm)
        if cross_talk:
            cp = cp + 0.5 * rm * np.exp(1j * pm) * np.exp(2j * np.pi * sep * t)
            cm = cm + 0.5 * rp * np.exp(1j * pp) * np.exp(-2j * np.pi * sep * t)
        h[PLUS, ZERO], h[ZERO, PLUS] = cp, np.conj(cp)
        h[MINUS, ZERO], h[ZERO, MINUS] = cm, np.conj(cm)
        return h

    def rhs(t, y):
        psi = y[:3] + 1j * y[3:]
        dpsi = -2j * np.pi * (hamiltonian(t) @ psi)
        return np.concatenate([dpsi.real, dpsi.imag])

    psi0 = np.asarray(psi0, dtype=complex)
    y0 = np.concatenate([psi0.real, psi0.imag])
    max_step = np.inf if not cross_talk else 1.0 / (20 * abs(sep))
    sol = solve_ivp(rhs, (0.0, pulse.duration), y0, method="DOP853",
                    rtol=rtol, atol=atol, max_step=max_step)
    y = sol.y[:, -1]
    return y[:3] + 1j * y[3:]


def integrate_propagator(pulse, shift=(0.0, 0.0), rabi_scale=1.0, **kwargs):
    """Columns of the pulse unitary obtained one basis state at a time."""
    return np.stack([integrate_pulse(pulse, e, shift, rabi_scale, **kwargs)
                     for e in np.eye(3)], axis=1)


def ramsey_p0(seq, shift=(0.0, 0.0), rabi_scale=1.0, **kwargs):
    """|0> population after a full sequence without dephasing."""
    psi = integrate_pulse(seq.init_pulse, np.eye(3)[ZERO], shift, rabi_scale, **kwargs)
    dets = []
    for target, s in (("+1", shift[0]), ("-1", shift[1])):
        tone = seq.init_pulse.tone(target) or seq.final_pulse.tone(target)
        dets.append(s - (tone.detuning if tone else 0.0))
    psi = psi * np.exp(-2j * np.pi * np.array([dets[0], 0.0, dets[1]]) * seq.tau)
    psi = integrate_pulse(seq.final_pulse, psi, shift, rabi_scale, **kwargs)
    return float(abs(psi[ZERO]) ** 2)
