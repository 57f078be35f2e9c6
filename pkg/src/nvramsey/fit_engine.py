"""Batched least-squares fitting of hyperfine-beating Ramsey fringes.

The model is ``exp(-tau/T2*) * sum_i A_i sin(2 pi f_i tau + delta_i)`` with
three components (14N hyperfine lines).  All pixels of a grid are fitted at
once by a vectorized Levenberg-Marquardt loop; each pixel keeps its own
damping and convergence state so results do not depend on batch
composition.

Internally time is scaled by the largest ``tau`` and signals by their
largest magnitude so the ten parameters are all of order one.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._validation import as_float_array, check_int, check_positive
from .exceptions import InvalidArgumentError

N_PARAMS = 10
PARAM_NAMES = ("t2_star", "a_m1", "f_m1", "delta_m1", "a_0", "f_0", "delta_0",
               "a_p1", "f_p1", "delta_p1")
MIN_SAMPLES = 12
_T2_GRID = np.geomspace(0.03, 30.0, 32)


@dataclass(frozen=True)
class FringeParams:
    """Parameters of the three-component fringe model (SI units, radians)."""

    t2_star: float
    amplitudes: tuple
    frequencies: tuple
    phases: tuple

    def __post_init__(self):
        check_positive(self.t2_star, "t2_star")
        for name in ("amplitudes", "frequencies", "phases"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 3:
                raise InvalidArgumentError(f"{name} needs three entries")
            object.__setattr__(self, name, v)

    def to_vector(self):
        v = [self.t2_star]
        for a, f, d in zip(self.amplitudes, self.frequencies, self.phases):
            v += [a, f, d]
        return np.array(v)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[0], tuple(v[1::3]), tuple(v[2::3]), tuple(v[3::3]))

    def canonical(self):
        return FringeParams.from_vector(canonicalize(self.to_vector()[None])[0])


@dataclass(frozen=True)
class FitResult:
    params: FringeParams
    covariance_diagonal: np.ndarray
    confidence_interval: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    status: str = ""
    gradient_norm: float = np.nan

    def ci(self, name):
        return float(self.confidence_interval[PARAM_NAMES.index(name)])


def fringe_model(params, tau):
    """Evaluate the fringe model.

    Parameters
    ----------
    params : FringeParams or array_like
        A :class:`FringeParams` or parameter vector(s) of shape ``(..., 10)``.
    tau : array_like
        Free-precession times, s.
    """
    if isinstance(params, FringeParams):
        params = params.to_vector()
    theta = np.asarray(params, dtype=float)
    tau = np.asarray(tau, dtype=float)
    out = _model(theta.reshape(-1, N_PARAMS), tau.reshape(-1))
    return out.reshape(theta.shape[:-1] + tau.shape)


def _model(theta, t):
    env = np.exp(-t[None, :] / theta[:, :1])
    phase = 2 * np.pi * theta[:, 2::3, None] * t[None, None, :] + theta[:, 3::3, None]
    return env * np.einsum("pi,pit->pt", theta[:, 1::3], np.sin(phase))


def jacobian(params, tau):
    """Analytic derivatives of the model, shape ``(..., len(tau), 10)``."""
    if isinstance(params, FringeParams):
        params = params.to_vector()
    theta = np.asarray(params, dtype=float)
    tau = np.asarray(tau, dtype=float).reshape(-1)
    j = _jacobian(theta.reshape(-1, N_PARAMS), tau)
    return j.reshape(theta.shape[:-1] + (tau.size, N_PARAMS))


def _jacobian(theta, t):
    p = theta.shape[0]
    t2 = theta[:, :1]
    env = np.exp(-t[None, :] / t2)
    amp = theta[:, 1::3, None]
    phase = 2 * np.pi * theta[:, 2::3, None] * t[None, None, :] + theta[:, 3::3, None]
    s, c = np.sin(phase), np.cos(phase)
    y = env * (amp * s).sum(axis=1)
    j = np.empty((p, t.size, N_PARAMS))
    j[:, :, 0] = y * t[None, :] / t2 ** 2
    ec = env[:, None, :] * amp * c
    j[:, :, 1::3] = np.moveaxis(env[:, None, :] * s, 1, 2)
    j[:, :, 2::3] = np.moveaxis(ec * (2 * np.pi * t[None, None, :]), 1, 2)
    j[:, :, 3::3] = np.moveaxis(ec, 1, 2)
    return j


def wrap_phase(x):
    """Map angles to ``(-pi, pi]``."""
    w = np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def canonicalize(theta, extra=None):
    """Unique representative of each parameter vector.

    Negative frequencies are folded (``f -> -f``, ``delta -> pi - delta``),
    negative amplitudes flipped (``A -> -A``, ``delta -> delta + pi``),
    phases wrapped and components sorted by frequency.  ``extra`` arrays of
    the same shape (e.g. standard errors) are permuted alongside.
    """
    theta = np.array(theta, dtype=float)
    amp, freq, ph = theta[:, 1::3], theta[:, 2::3], theta[:, 3::3]
    neg_f = freq < 0
    freq = np.abs(freq)
    ph = np.where(neg_f, np.pi - ph, ph)
    neg_a = amp < 0
    amp = np.abs(amp)
    ph = wrap_phase(np.where(neg_a, ph + np.pi, ph))
    order = np.argsort(freq, axis=1, kind="stable")
    take = lambda a: np.take_along_axis(a, order, axis=1)
    theta[:, 1::3], theta[:, 2::3], theta[:, 3::3] = take(amp), take(freq), take(ph)
    if extra is None:
        return theta
    out = []
    for e in extra:
        e = np.array(e, dtype=float)
        for k in (1, 2, 3):
            e[:, k::3] = take(e[:, k::3])
        out.append(e)
    return theta, out


# -- initialization ---------------------------------------------------------

def _periodogram(y, t, freqs):
    basis = np.exp(-2j * np.pi * np.outer(t, freqs))
    return np.abs(y @ basis) ** 2


def initial_guess(t, y, spacing):
    """Starting vectors for scaled data ``y`` (P, n) on scaled times ``t``.

    The centre frequency maximizes the summed periodogram power at
    ``f - s``, ``f`` and ``f + s`` (``s`` the hyperfine spacing), which stays
    robust when the three lines are not resolved.  T2* then comes from a scan
    in which amplitudes and phases are solved linearly for each candidate
    decay time, keeping the best residual.
    """
    p, n = y.shape
    dt = np.min(np.diff(np.sort(t)))
    span = t.max() - t.min()
    nyq = 0.5 / dt
    step = 1.0 / (8 * max(span, dt))
    grid = np.arange(0.0, nyq + step, step)
    score = (_periodogram(y, t, grid) + _periodogram(y, t, np.abs(grid - spacing))
             + _periodogram(y, t, grid + spacing))
    k = np.argmax(score, axis=1)
    kk = np.clip(k, 1, grid.size - 2)
    a, b, c = (score[np.arange(p), kk + d] for d in (-1, 0, 1))
    denom = a - 2 * b + c
    with np.errstate(divide="ignore", invalid="ignore"):
        off = np.where(denom < 0, 0.5 * (a - c) / denom, 0.0)
    f0 = grid[kk] + np.clip(off, -1, 1) * step
    f0 = np.where((k == 0) | (k == grid.size - 1), grid[k], f0)
    # the triple score can lock one spacing off when lines overlap, so the
    # neighbouring centres compete on the linear-fit residual as well
    best_rss = np.full(p, np.inf)
    theta = np.empty((p, N_PARAMS))
    for shift in (0.0, -spacing, spacing):
        centre = np.abs(f0 + shift)
        cand, rss = _variable_projection(t, y, centre, spacing)
        better = rss < best_rss
        theta[better] = cand[better]
        best_rss = np.where(better, rss, best_rss)
    return theta


def _variable_projection(t, y, centre, spacing):
    """Best T2* on a grid with amplitudes and phases solved linearly."""
    p, n = y.shape
    freqs = centre[:, None] + np.array([-spacing, 0.0, spacing])[None, :]
    phase = 2 * np.pi * freqs[:, :, None] * t[None, None, :]
    base = np.concatenate([np.sin(phase), np.cos(phase)], axis=1)  # (p, 6, n)
    best_rss = np.full(p, np.inf)
    best = np.zeros((p, 6))
    best_t2 = np.full(p, _T2_GRID[0])
    ridge = 1e-10 * n
    for t2 in _T2_GRID:
        b_ = base * np.exp(-t / t2)[None, None, :]
        g = np.einsum("pin,pjn->pij", b_, b_) + ridge * np.eye(6)
        rhs = np.einsum("pin,pn->pi", b_, y)
        coef = np.linalg.solve(g, rhs[..., None])[..., 0]
        res = y - np.einsum("pi,pin->pn", coef, b_)
        rss = (res ** 2).sum(axis=1)
        better = rss < best_rss
        best_rss = np.where(better, rss, best_rss)
        best[better] = coef[better]
        best_t2 = np.where(better, t2, best_t2)
    sa, ca = best[:, :3], best[:, 3:]
    theta = np.empty((p, N_PARAMS))
    theta[:, 0] = best_t2
    theta[:, 1::3] = np.hypot(sa, ca)
    theta[:, 2::3] = freqs
    theta[:, 3::3] = np.arctan2(ca, sa)
    return theta, best_rss


# -- batched Levenberg-Marquardt --------------------------------------------

@dataclass
class _LMState:
    theta: np.ndarray
    rss: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    status: np.ndarray
    hessian: np.ndarray
    gradient: np.ndarray
    gnorm: np.ndarray


def _normal_terms(theta, t, y):
    r = y - _model(theta, t)
    j = _jacobian(theta, t)
    h = np.einsum("pni,pnj->pij", j, j)
    g = np.einsum("pni,pn->pi", j, r)   # equals -grad of rss / 2
    return (r ** 2).sum(axis=1), h, g


def _scaled_gradient(h, g, rss):
    d = np.sqrt(np.maximum(np.einsum("pii->pi", h), 1e-300))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rss[:, None] > 0, np.abs(g) / (d * np.sqrt(rss)[:, None]), 0.0).max(axis=1)


def levenberg_marquardt(t, y, theta0, max_iter=200, ftol=1e-10, gtol=1e-8, lam0=1e-3):
    """Minimize the fringe residual for every row of ``y`` simultaneously.

    Damping follows Nielsen's schedule: after an accepted step ``lambda`` is
    scaled by ``max(1/3, 1 - (2 rho - 1)^3)``; after a rejected one it is
    multiplied by ``nu`` and ``nu`` doubles (starting at 2).  Marquardt's
    diagonal scaling uses the running maximum of ``diag(J^T J)``.

    A row stops when an accepted step lowers the squared residual by less
    than ``ftol`` relatively, or when the largest scaled gradient component
    ``|J_k^T r| / (|J_k| |r|)`` falls below ``gtol``.  A residual at
    rounding level (``rss <= 1e-24 * sum(y^2)``) also stops the row as an
    exact fit.
    """
    p = y.shape[0]
    theta = theta0.copy()
    rss, h, g = _normal_terms(theta, t, y)
    lam = np.full(p, lam0)
    nu = np.full(p, 2.0)
    diag = np.maximum(np.einsum("pii->pi", h), 1e-12)
    iters = np.zeros(p, int)
    done = np.zeros(p, bool)
    conv = np.zeros(p, bool)
    status = np.full(p, "max-iterations", dtype=object)
    floor = 1e-24 * (y ** 2).sum(axis=1)
    gnorm = _scaled_gradient(h, g, rss)
    small = gnorm < gtol
    conv[small] = done[small] = True
    status[small] = "gradient"
    exact = rss <= floor
    conv[exact] = done[exact] = True
    status[exact] = "exact"
    for _ in range(max_iter):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        iters[idx] += 1
        a = h[idx] + lam[idx, None, None] * (np.eye(N_PARAMS) * diag[idx, None, :])
        try:
            step = np.linalg.solve(a, g[idx][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(ai, gi, rcond=None)[0] for ai, gi in zip(a, g[idx])])
        trial = theta[idx] + step
        bad = ~np.all(np.isfinite(trial), axis=1) | (trial[:, 0] <= 0)
        trial[bad] = theta[idx][bad]
        new_rss = ((y[idx] - _model(trial, t)) ** 2).sum(axis=1)
        new_rss[bad] = np.inf
        pred = np.einsum("pi,pi->p", step, lam[idx, None] * diag[idx] * step + g[idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = (rss[idx] - new_rss) / pred
        acc = (new_rss < rss[idx]) & np.isfinite(new_rss)
        ia, ir = idx[acc], idx[~acc]
        if ia.size:
            rel = (rss[ia] - new_rss[acc]) / np.maximum(rss[ia], 1e-300)
            theta[ia] = trial[acc]
            rss[ia], h[ia], g[ia] = _normal_terms(theta[ia], t, y[ia])
            diag[ia] = np.maximum(diag[ia], np.einsum("pii->pi", h[ia]))
            factor = 1 - (2 * np.clip(rho[acc], 0, 1) - 1) ** 3
            lam[ia] *= np.maximum(1 / 3, factor)
            nu[ia] = 2.0
            gnorm[ia] = _scaled_gradient(h[ia], g[ia], rss[ia])
            by_g = gnorm[ia] < gtol
            by_f = rel < ftol
            stop = by_g | by_f
            conv[ia[stop]] = done[ia[stop]] = True
            status[ia[by_f]] = "ftol"
            status[ia[by_g]] = "gradient"
            by_x = rss[ia] <= floor[ia]
            conv[ia[by_x]] = done[ia[by_x]] = True
            status[ia[by_x]] = "exact"
        if ir.size:
            lam[ir] *= nu[ir]
            nu[ir] *= 2
            stuck = lam[ir] > 1e16
            done[ir[stuck]] = True
            status[ir[stuck]] = "damping-limit"
    return _LMState(theta, rss, iters, conv, status, h, g, gnorm)


def _t_quantile(dof, level=0.95):
    return stats.t.ppf(0.5 + level / 2, dof)


def _thread_count():
    env = os.environ.get("NVRAMSEY_THREADS")
    n = os.cpu_count() or 1
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise InvalidArgumentError(f"NVRAMSEY_THREADS must be an integer, got {env!r}") from None
    return n


@dataclass
class GridFitResult:
    """Per-pixel fit results as arrays over the flattened pixel axis."""

    params: np.ndarray
    covariance_diagonal: np.ndarray
    confidence_interval: np.ndarray
    residual_norm: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    status: np.ndarray
    gradient_norm: np.ndarray
    shape: tuple = None

    def __len__(self):
        return self.params.shape[0]

    def __getitem__(self, k):
        return FitResult(FringeParams.from_vector(self.params[k]), self.covariance_diagonal[k],
                         self.confidence_interval[k], float(self.residual_norm[k]),
                         int(self.iterations[k]), bool(self.converged[k]), str(self.status[k]),
                         float(self.gradient_norm[k]))

    @property
    def convergence_fraction(self):
        return float(np.mean(self.converged))

    def map(self, name):
        """2-D map of one parameter (NaN where the fit failed)."""
        v = self.params[:, PARAM_NAMES.index(name)].astype(float).copy()
        v[~self.converged] = np.nan
        return v.reshape(self.shape) if self.shape else v

    def summary(self):
        return {"pixels": len(self), "converged": int(self.converged.sum()),
                "convergence_fraction": self.convergence_fraction}


def _fit_block(tau, y, spacing, init, max_iter, ftol, gtol, level):
    p, n = y.shape
    tmax = np.max(np.abs(tau))
    t = tau / tmax
    yscale = np.max(np.abs(y), axis=1)
    dead = ~(yscale > 0)
    ys = y / np.where(dead, 1.0, yscale)[:, None]
    if init is None:
        theta0 = initial_guess(t, ys, spacing * tmax)
    else:
        theta0 = np.array(init, dtype=float).reshape(-1, N_PARAMS).copy()
        theta0 = np.broadcast_to(theta0, (p, N_PARAMS)).copy()
        theta0[:, 0] /= tmax
        theta0[:, 2::3] *= tmax
        theta0[:, 1::3] /= np.where(dead, 1.0, yscale)[:, None]
    st = levenberg_marquardt(t, ys, theta0, max_iter, ftol, gtol)

    dof = n - N_PARAMS
    s2 = st.rss / dof
    cov = np.full((p, N_PARAMS), np.nan)
    rank_ok = np.ones(p, bool)
    dn = np.sqrt(np.maximum(np.einsum("pii->pi", st.hessian), 1e-300))
    corr = st.hessian / (dn[:, :, None] * dn[:, None, :])
    w = np.linalg.eigvalsh(corr)
    rank_ok = w[:, 0] > 1e-13 * w[:, -1]
    good = np.flatnonzero(rank_ok)
    if good.size:
        inv = np.linalg.inv(corr[good]) / (dn[good, :, None] * dn[good, None, :])
        cov[good] = s2[good, None] * np.einsum("pii->pi", inv)
    status = st.status.copy()
    converged = st.converged & rank_ok & ~dead
    status[~rank_ok] = "rank-deficient"
    status[dead] = "zero-signal"

    # back to physical units
    theta = st.theta.copy()
    unit = np.ones((p, N_PARAMS))
    unit[:, 0] = tmax
    unit[:, 2::3] = 1.0 / tmax
    unit[:, 1::3] = yscale[:, None]
    theta *= unit
    cov *= unit ** 2
    theta, (cov,) = canonicalize(theta, [cov])
    ci = _t_quantile(dof, level) * np.sqrt(cov)
    resid = np.sqrt(st.rss) * yscale
    return GridFitResult(theta, cov, ci, resid, st.iterations, converged, status, st.gnorm)


def _prepare(tau, values):
    tau = as_float_array(tau, "tau", ndim=1)
    values = as_float_array(values, "values")
    if values.shape[-1] != tau.size:
        raise InvalidArgumentError(
            f"{tau.size} tau values but fringe stacks of length {values.shape[-1]}")
    if tau.size < MIN_SAMPLES:
        raise InvalidArgumentError(f"need at least {MIN_SAMPLES} samples, got {tau.size}")
    if np.unique(tau).size != tau.size:
        raise InvalidArgumentError("tau values must be distinct")
    if np.any(tau < 0) or np.max(tau) <= 0:
        raise InvalidArgumentError("tau values must be non-negative and not all zero")
    return tau, values


def fit_fringe(tau, values, init="auto", hyperfine_spacing=2.2e6, max_iter=200,
               ftol=1e-10, gtol=1e-8, confidence=0.95):
    """Fit one fringe.

    Parameters
    ----------
    tau, values : array_like
        Sample times (s) and signal values.
    init : "auto" or FringeParams
    hyperfine_spacing : float
        Frequency spacing of the three components used by the auto-init,
        Hz.  That is A for SQ fringes and 2A for DQ fringes.
    """
    tau, values = _prepare(tau, values)
    if values.ndim != 1:
        raise InvalidArgumentError("fit_fringe takes a single fringe; use fit_grid for stacks")
    theta0 = None if isinstance(init, str) and init == "auto" else _init_vector(init)
    res = _fit_block(tau, values[None], hyperfine_spacing, theta0, max_iter, ftol, gtol,
                     confidence)
    return res[0]


def _init_vector(init):
    if isinstance(init, FringeParams):
        return init.to_vector()
    if isinstance(init, str):
        raise InvalidArgumentError(f"unknown init policy {init!r}")
    return np.asarray(init, dtype=float)


def fit_grid(tau, stacks, init="auto", hyperfine_spacing=2.2e6, max_iter=200, ftol=1e-10,
             gtol=1e-8, confidence=0.95, chunk=1024, n_threads=None):
    """Fit every pixel of a fringe stack.

    Parameters
    ----------
    tau : array_like, shape (n,)
    stacks : array_like, shape (..., n)
        One fringe per pixel, e.g. ``(height, width, n)``.
    init : "auto", FringeParams or array of shape (..., 10)
    n_threads : int, optional
        Worker threads; defaults to the CPU count capped by
        ``NVRAMSEY_THREADS``.

    Pixels are split into fixed chunks fitted independently, so results do
    not depend on the thread count.
    """
    tau, stacks = _prepare(tau, stacks)
    shape = stacks.shape[:-1]
    y = stacks.reshape(-1, tau.size)
    p = y.shape[0]
    check_int(chunk, "chunk", minimum=1)
    if isinstance(init, str) and init == "auto":
        theta0 = None
    else:
        theta0 = np.broadcast_to(_init_vector(init), shape + (N_PARAMS,)).reshape(-1, N_PARAMS)
    blocks = [slice(lo, min(lo + chunk, p)) for lo in range(0, p, chunk)]

    def work(sl):
        return _fit_block(tau, y[sl], hyperfine_spacing, None if theta0 is None else theta0[sl],
                          max_iter, ftol, gtol, confidence)

    threads = _thread_count() if n_threads is None else max(1, int(n_threads))
    if threads == 1 or len(blocks) == 1:
        parts = [work(sl) for sl in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, blocks))
    cat = lambda name: np.concatenate([getattr(r, name) for r in parts])
    return GridFitResult(cat("params"), cat("covariance_diagonal"), cat("confidence_interval"),
                         cat("residual_norm"), cat("iterations"), cat("converged"), cat("status"),
                         cat("gradient_norm"), tuple(shape))
