"""Command-line front end.

``nvramsey simulate|sweep|fit|analyze|validate <config> [--out DIR] [--seed N]
[--plot] [--mode common|differential]``

Exit codes are 0 on success, 2 for user errors (bad config or input files)
and 1 for internal errors.  ``fit`` and ``analyze`` also accept a frame
series file directly in place of the config; the remaining inputs are then
taken from its sidecar.
"""
import argparse
import csv
import json
import os
import sys
import traceback

import numpy as np

from . import __version__
from .analysis import (allan_deviation, calibrate, camera_field_slope, improvement_ratio,
                       measured_sensitivity, ridr, sensitivity_report)
from .camera_model import acquire_average, acquire_series, exposure_quarters, timing_budget
from .config import ExperimentConfig, load_config
from .exceptions import NumericError, NVRamseyError
from .fileio import (is_series_file, read_map, read_series, read_sidecar, read_tau_axis,
                     write_map, write_series, write_tau_axis)
from .fit_engine import PARAM_NAMES, fit_grid
from .protocols import (builtin_protocol, detuning_sweep, sequence_signals, suppression_factor,
                        tone_detunings, validate_phase_table)
from .sample_model import PixelEnvironment, generate_grid, load_stress_maps


class UserError(Exception):
    """Problem with the user's inputs; reported without a traceback."""


def _json_dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_plain)
        fh.write("\n")


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _write_csv(path, header, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])


def _resolve(path, base):
    if path is None:
        return None
    return path if os.path.isabs(path) else os.path.join(base, path)


def _load(args):
    """Config and the directory that relative paths refer to."""
    if is_series_file(args.config) or args.config.endswith(".nvser"):
        return ExperimentConfig(), os.path.dirname(os.path.abspath(args.config)), args.config
    cfg = load_config(args.config)
    return cfg, os.path.dirname(os.path.abspath(args.config)), None


def _out_dir(args, cfg, base):
    out = args.out if args.out is not None else _resolve(cfg.run.output, base)
    os.makedirs(out, exist_ok=True)
    return out


def _seed(args, cfg):
    return cfg.run.seed if args.seed is None else args.seed


def _report_text(rep):
    lines = [f"valid: {rep.valid}", f"tau: {rep.report['tau'] * 1e9:.0f} ns",
             f"worst common-mode ratio: {rep.residual_sq_bound:.3e}"]
    st = rep.report["structural"]
    lines.append("structural: " + ", ".join(f"{k}={v:.3e}" for k, v in st.items()))
    for eps, r in rep.report["common_mode_ratio"].items():
        lines.append(f"rabi error {eps:+.0%}: common-mode ratio {r:.3e}, "
                     f"DQ slope fraction {rep.report['dq_slope_ratio'][eps]:.4f}")
    lines.extend(rep.report["messages"])
    return "\n".join(lines)


def _check_protocol(cfg, model):
    protocol = cfg.protocol.build()
    if cfg.protocol.is_builtin or protocol.basis != "DQ":
        return protocol
    rep = validate_phase_table(protocol, model=model)
    if not rep.valid:
        print(_report_text(rep))
        raise UserError(f"protocol table {protocol.name!r} failed validation")
    return protocol


def _build_grid(cfg, base, seed):
    stress = None
    if cfg.sample.stress_map:
        stress = load_stress_maps(_resolve(cfg.sample.stress_map, base))
    return generate_grid(cfg.grid_config(seed=seed), stress)


# -- commands -----------------------------------------------------------------

def cmd_simulate(args):
    cfg, base, _ = _load(args)
    out = _out_dir(args, cfg, base)
    seed = _seed(args, cfg)
    model = cfg.dephasing_model()
    protocol = _check_protocol(cfg, model)
    cam = cfg.camera_config()
    grid = _build_grid(cfg, base, seed)
    pulse = protocol.calibrate(grid.nominal())
    truth = os.path.join(out, "truth")
    os.makedirs(truth, exist_ok=True)
    for name in ("b_offset", "m_z", "m_x", "m_y", "rabi", "amplitude", "stress_broadening"):
        write_map(os.path.join(truth, f"{name}.nvmap"), getattr(grid, name), name)
    write_map(os.path.join(truth, "t2_star.nvmap"), grid.t2_star_effective(protocol.basis),
              "t2_star", "s")

    if cfg.run.acquisition == "fringe":
        taus = cfg.run.tau_axis.values()
        detuning = tone_detunings(protocol, 0.0, cfg.run.fringe_detuning)
        timing = timing_budget(cam, protocol, float(taus.max()), pulse.duration)
        sig = sequence_signals(protocol, grid, model, taus[0], detuning, pulse, taus=taus)
        sig = sig[:, :, 0, :].reshape((protocol.n_sequences,) + grid.shape + (taus.size,))
        rng = np.random.default_rng(seed)
        frames = np.empty((taus.size,) + grid.shape, np.int16)
        sat = 0
        for k in range(taus.size):
            fr = acquire_average(exposure_quarters(protocol, sig[..., k]), cam, rng,
                                 cfg.run.frames_per_point)
            frames[k] = fr.combined
            sat += int(fr.saturated.sum())
        rate = timing.frame_rate / cfg.run.frames_per_point
        path = os.path.join(out, "fringe.nvser")
        write_tau_axis(os.path.join(out, "tau_axis.csv"), taus)
        meta = {"kind": "fringe", "protocol": protocol.name, "basis": protocol.basis,
                "seed": seed, "tau_axis": "tau_axis.csv", "detuning": list(detuning),
                "frames_per_point": cfg.run.frames_per_point, "saturated_samples": sat,
                "hyperfine_splitting": grid.constants.hyperfine_splitting}
        write_series(path, frames, rate, meta)
        print(f"wrote {path}: {taus.size} tau points, {grid.shape[1]}x{grid.shape[0]} pixels")
        return 0

    cal = calibrate(grid, protocol, model, seed=seed, tau=cfg.run.tau)
    timing = timing_budget(cam, protocol, cal.tau, pulse.duration)
    series = acquire_series(grid, protocol, model, cam, cfg.run.frames, cal.tau, cal.detuning,
                            pulse, seed=seed)
    slope = camera_field_slope(protocol, grid, model, cal.tau, cal.detuning, cam, pulse)
    path = os.path.join(out, "series.nvser")
    meta = dict(series.metadata, kind="time-series", basis=protocol.basis,
                calibration="calibration.json")
    write_series(path, series.combined, series.frame_rate, meta)
    write_map(os.path.join(out, "slope.nvmap"), slope, "slope", "DU/T")
    calib = dict(cal.to_dict(), protocol=protocol.name, slope_map="slope.nvmap",
                 t_demod=timing.t_demod, frame_rate=timing.frame_rate,
                 voxel=list(grid.pixel_pitch) + [cfg.sample.thickness])
    _json_dump(os.path.join(out, "calibration.json"), calib)
    if args.plot:
        from .plotting import save_curves, save_map

        taus, env = cal.envelope
        save_curves(os.path.join(out, "envelope.svg"), taus * 1e9, {"envelope": env},
                    "tau (ns)", "rephasing envelope")
        save_map(os.path.join(out, "slope.svg"), slope, "field slope", "DU/T")
    print(f"wrote {path}: {len(series)} frames at {series.frame_rate:.1f} Hz, "
          f"tau = {cal.tau * 1e9:.0f} ns")
    return 0


def cmd_sweep(args):
    cfg, base, _ = _load(args)
    out = _out_dir(args, cfg, base)
    model = cfg.dephasing_model()
    sw = cfg.sweep
    env = PixelEnvironment(rabi=cfg.sample.rabi_nominal * (1 + sw.rabi_error),
                           rabi_nominal=cfg.sample.rabi_nominal,
                           amplitude=cfg.sample.amplitude, contrast=cfg.sample.contrast,
                           t2_star_sq=cfg.sample.t2_star_sq,
                           hyperfine_populations=cfg.sample.hyperfine_populations,
                           bias_field=cfg.sample.bias_field, constants=cfg.nv_constants())
    names = ("sq_2ramsey", "dq_2ramsey", "dq_4ramsey")
    protos = [builtin_protocol(n, cfg.protocol.normalization) for n in names]
    mode = args.mode or sw.mode
    modes = [mode] if mode else ["common", "differential"]
    # each protocol runs at its own revival unless tau is fixed
    taus = [sw.tau or calibrate(env, p, model).tau for p in protos]
    report = {"tau": dict(zip(names, taus)), "rabi_error": sw.rabi_error, "window": sw.window}
    for m in modes:
        res = [detuning_sweep(p, env, model, t, m, sw.range, sw.points, sw.window)
               for p, t in zip(protos, taus)]
        _write_csv(os.path.join(out, f"sweep_{m}.csv"), ("detuning_hz",) + names,
                   [res[0].detuning] + [r.signal for r in res])
        rep = {"slopes": {n: r.slope for n, r in zip(names, res)}}
        if m == "common":
            for n, r in zip(names[1:], res[1:]):
                s = suppression_factor(res[0], r)
                rep[f"suppression_{n}"] = None if s.below_floor else s.factor
        report[m] = rep
        print(f"{m}: " + ", ".join(f"{n} slope {r.slope:.3e} /Hz" for n, r in zip(names, res)))
        if args.plot:
            from .plotting import save_curves

            save_curves(os.path.join(out, f"sweep_{m}.svg"), res[0].detuning / 1e3,
                        {n: r.signal for n, r in zip(names, res)}, "detuning (kHz)",
                        "signal", f"{m}-mode sweep")
    _json_dump(os.path.join(out, "sweep_report.json"), report)
    return 0


def _series_input(cfg, base, direct, key):
    path = direct if direct is not None else _resolve(getattr(cfg, key).series, base)
    if path is None:
        raise UserError(f"no input series: give a series file or set {key}.series")
    if not os.path.exists(path):
        raise UserError(f"series file {path} not found")
    return path


def _summary(values):
    v = np.asarray(values, float)
    v = v[np.isfinite(v)]
    if v.size < 10:
        return {"count": int(v.size)}
    st = ridr(v)
    return {"count": int(v.size), "median": st.median, "d10": st.d10, "d90": st.d90,
            "ridr": st.ridr}


def cmd_fit(args):
    cfg, base, direct = _load(args)
    path = _series_input(cfg, base, direct, "fit")
    frames, _, meta = read_series(path)
    if frames.shape[0] == 0 or frames.size == 0:
        raise UserError(f"{path} holds no samples")
    sbase = os.path.dirname(os.path.abspath(path))
    tau_file = _resolve(cfg.fit.tau_axis, base) if cfg.fit.tau_axis else \
        _resolve(meta.get("tau_axis"), sbase)
    if tau_file is None:
        raise UserError("no tau axis: set fit.tau_axis or add tau_axis to the series sidecar")
    taus = read_tau_axis(tau_file)
    if taus.size != frames.shape[0]:
        raise UserError(f"tau axis has {taus.size} points but the series has "
                        f"{frames.shape[0]} frames")
    basis = cfg.fit.basis or meta.get("basis", "SQ")
    a = meta.get("hyperfine_splitting", cfg.constants.hyperfine_splitting)
    spacing = cfg.fit.hyperfine_spacing or a * (2 if basis == "DQ" else 1)
    h, w = frames.shape[1:]
    stacks = frames.reshape(frames.shape[0], -1).T.astype(float)
    res = fit_grid(taus, stacks, hyperfine_spacing=spacing)
    res.shape = (h, w)
    out = _out_dir(args, cfg, base if direct is None else sbase)
    units = {"t": "s", "f": "Hz", "a": "DU", "d": "rad"}
    summary = {"basis": basis, "hyperfine_spacing": spacing, "pixels": int(h * w),
               "converged": int(res.converged.sum()),
               "statuses": {s: int(n) for s, n in zip(*np.unique(res.status, return_counts=True))},
               "parameters": {}}
    for name in PARAM_NAMES:
        m = res.map(name)
        write_map(os.path.join(out, f"{name}.nvmap"), m, name, units[name[0]])
        summary["parameters"][name] = _summary(m)
    write_map(os.path.join(out, "converged.nvmap"), res.converged.reshape(h, w).astype(float),
              "converged")
    _json_dump(os.path.join(out, "fit_summary.json"), summary)
    if args.plot:
        from .plotting import save_map

        save_map(os.path.join(out, "t2_star.svg"), res.map("t2_star") * 1e6, "T2*", "us")
    t2 = summary["parameters"]["t2_star"]
    print(f"fitted {h * w} pixels, {summary['converged']} converged; "
          f"T2* median {t2.get('median', float('nan')) * 1e6:.3f} us, "
          f"RIDR {100 * t2.get('ridr', float('nan')):.1f}%")
    return 0


def _sensitivity(path, cal_path):
    frames, rate, meta = read_series(path)
    if cal_path is None:
        raise UserError(f"no calibration for {path}")
    if not os.path.exists(cal_path):
        raise UserError(f"calibration file {cal_path} not found")
    with open(cal_path) as fh:
        cal = json.load(fh)
    slope, _ = read_map(_resolve(cal["slope_map"], os.path.dirname(os.path.abspath(cal_path))))
    if slope.shape != frames.shape[1:]:
        raise UserError(f"slope map shape {slope.shape} does not match frames {frames.shape[1:]}")
    sens = measured_sensitivity(frames, slope, rate)
    return frames, rate, slope, sens, cal, meta


def _histogram(values, bins=50):
    v = np.asarray(values, float)
    v = v[np.isfinite(v)]
    counts, edges = np.histogram(v, bins=bins)
    return edges, counts


def cmd_analyze(args):
    cfg, base, direct = _load(args)
    path = _series_input(cfg, base, direct, "analyze")
    sbase = os.path.dirname(os.path.abspath(path))
    meta = read_sidecar(path)
    cal_path = _resolve(cfg.analyze.calibration, base) if cfg.analyze.calibration else \
        _resolve(meta.get("calibration"), sbase)
    frames, rate, slope, sens, cal, meta = _sensitivity(path, cal_path)
    out = _out_dir(args, cfg, base if direct is None else sbase)
    basis = cal.get("basis", meta.get("basis", "DQ"))
    voxel = tuple(cal.get("voxel", (2.5e-6, 2.4e-6, 1e-6)))
    rep = sensitivity_report(sens.eta, basis, voxel)
    tag = basis.lower()
    write_map(os.path.join(out, f"eta_{tag}.nvmap"), sens.eta, f"eta_{tag}", "T/sqrt(Hz)")
    edges, counts = _histogram(sens.eta)
    _write_csv(os.path.join(out, f"eta_{tag}_hist.csv"), ("bin_low", "bin_high", "count"),
               [edges[:-1], edges[1:], counts])
    report = {basis: rep.to_dict(), "flagged_pixels": int(sens.flagged.sum())}

    # Allan deviation of the field estimate, median over a pixel subset
    flat = frames.reshape(frames.shape[0], -1).astype(float)
    sl = slope.reshape(-1)
    ok = np.flatnonzero(np.abs(sl) > 0)
    k = min(cfg.analyze.allan_pixels, ok.size)
    pick = ok[np.linspace(0, ok.size - 1, k).astype(int)] if k else ok
    if frames.shape[0] >= 8 and pick.size:
        field = flat[:, pick] / sl[pick]
        curve = allan_deviation(field - field.mean(axis=0), rate)
        dev = np.median(curve.deviation, axis=1)
        _write_csv(os.path.join(out, f"allan_{tag}.csv"), ("tau_s", "adev_t", "terms"),
                   [curve.tau, dev, curve.terms])
        report["allan_slope"] = curve.slope() if curve.tau.size >= 2 else None

    sq_path = _resolve(cfg.analyze.series_sq, base)
    if sq_path is not None:
        sq_cal = _resolve(cfg.analyze.calibration_sq, base) or \
            _resolve(read_sidecar(sq_path).get("calibration"), os.path.dirname(sq_path))
        _, _, _, sens_sq, cal_sq, _ = _sensitivity(sq_path, sq_cal)
        rep_sq = sensitivity_report(sens_sq.eta, "SQ", voxel)
        ratio = improvement_ratio(sens_sq.eta, sens.eta)
        write_map(os.path.join(out, "eta_sq.nvmap"), sens_sq.eta, "eta_sq", "T/sqrt(Hz)")
        write_map(os.path.join(out, "improvement.nvmap"), ratio, "eta_sq/eta_dq")
        report["SQ"] = rep_sq.to_dict()
        finite = ratio[np.isfinite(ratio)]
        report["improvement"] = {"median": float(np.median(finite)), "min": float(finite.min()),
                                 "fraction_above_one": float(np.mean(finite >= 1))}
        if args.plot:
            from .plotting import save_map

            save_map(os.path.join(out, "improvement.svg"), ratio, "eta_SQ / eta_DQ")
    _json_dump(os.path.join(out, "sensitivity_report.json"), report)
    if args.plot:
        from .plotting import save_map

        save_map(os.path.join(out, f"eta_{tag}.svg"), sens.eta * 1e9, f"eta {basis}",
                 "nT/sqrt(Hz)")
    print(f"{basis} sensitivity median {rep.median * 1e9:.2f} nT/sqrt(Hz), "
          f"RIDR {100 * rep.ridr:.1f}%")
    return 0


def cmd_validate(args):
    cfg, _, _ = _load(args)
    protocol = cfg.protocol.build()
    if protocol.basis != "DQ":
        raise UserError("only DQ phase tables can be validated")
    rep = validate_phase_table(protocol, model=cfg.dephasing_model(), tau=cfg.sweep.tau)
    print(_report_text(rep))
    return 0 if rep.valid else 2


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "fit": cmd_fit,
            "analyze": cmd_analyze, "validate": cmd_validate}


def build_parser():
    p = argparse.ArgumentParser(prog="nvramsey", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", help="config file (YAML or JSON); fit/analyze also take a series file")
    p.add_argument("--out", default=None, help="output directory (overrides run.output)")
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides run.seed)")
    p.add_argument("--plot", action="store_true", help="also write SVG figures")
    p.add_argument("--mode", choices=("common", "differential"), default=None,
                   help="sweep mode (default: both)")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except NumericError:
        traceback.print_exc()
        return 1
    except (UserError, NVRamseyError, OSError) as exc:
        print(f"nvramsey {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # pragma: no cover - reported as an internal error
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
