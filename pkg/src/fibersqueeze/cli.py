"""Command-line entry point.

Subcommands: propagate, spectrum, squeeze, correlate, scenario, convert.
Progress goes to stderr, data to files; exit codes are 0 (success),
1 (validation error), 2 (numerical failure).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .config import parse_config, serialize_config
from .errors import ConfigError, FiberSimError, InvalidParameterError, NumericalBlowupError
from .heatmap import emit_heatmap, emit_intensity_map
from . import measure as ms
from . import nlse
from .scenarios import SCENARIOS, PhysicalParams, normalize, run_scenario, runconfig_inputs

__all__ = ["cli_main", "main"]


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_config(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([(path, f"cannot read config: {exc}")])
    return parse_config(text)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _propagate_from_config(cfg):
    grid, f0, profile = runconfig_inputs(cfg)
    return grid, nlse.propagate_classical(f0, profile, cfg.n_steps)


def _write_metrics(out: Path, metrics: dict) -> None:
    with open(out / "metrics.txt", "w", encoding="utf-8") as fh:
        for key in sorted(metrics):
            v = metrics[key]
            fh.write(f"{key} = {v:.12g}\n" if isinstance(v, float) else f"{key} = {v}\n")


def _theta_for(cfg, traj):
    if cfg.theta is not None:
        return cfg.theta, ms.squeezing_ratio(traj, cfg.theta), False
    opt = ms.optimize_theta(traj)
    return opt.theta, opt.r_min, opt.flat


def _cmd_propagate(args) -> int:
    cfg = _load_config(args.config)
    out = _out_dir(args)
    _log(f"propagating {cfg.model} model, {cfg.resolved_n_steps} steps ...")
    grid, traj = _propagate_from_config(cfg)
    energies = traj.energies()
    nlse.save_field_csv(traj.final_field, out / "output_field.csv")
    zeta, rows = traj.intensity_map()
    emit_intensity_map(rows, out / "intensity_map.ppm",
                       meta={"zeta_max": float(zeta[-1])})
    if args.save_trajectory:
        nlse.save_trajectory(traj, out / "trajectory.traj")
    _write_metrics(out, {
        "energy_in": float(energies[0]),
        "energy_out": float(energies[-1]),
        "energy_drift_rel": float(np.max(np.abs(energies / energies[0] - 1.0))),
        "n_steps": traj.n_steps,
    })
    _log(f"wrote {out}")
    return 0


def _cmd_spectrum(args) -> int:
    cfg = _load_config(args.config)
    out = _out_dir(args)
    grid, traj = _propagate_from_config(cfg)
    spec = nlse.output_spectrum(traj)
    i1, i2 = nlse.split_spectra(traj, args.split_at)
    np.savetxt(out / "spectrum.csv",
               np.column_stack([grid.omega_monotone, spec, i1, i2]),
               delimiter=",", header="omega,i_sum,i_first,i_second",
               comments="", fmt="%.12e")
    from scipy.signal import find_peaks

    peaks, _ = find_peaks(spec, prominence=0.01 * float(spec.max()))
    _write_metrics(out, {"n_spectral_maxima": int(len(peaks))})
    _log(f"wrote {out} ({len(peaks)} spectral maxima)")
    return 0


def _cmd_squeeze(args) -> int:
    cfg = _load_config(args.config)
    out = _out_dir(args)
    grid, traj = _propagate_from_config(cfg)
    theta, r, flat = _theta_for(cfg, traj)
    metrics = {"theta_opt": theta, "r_min": r, "theta_flat": flat}
    if "squeeze_curve" in cfg.outputs:
        curve = ms.squeezing_distance_curve(traj)
        np.savetxt(out / "squeeze_curve.csv", curve, delimiter=",",
                   header="zeta,theta_opt,r_min", comments="", fmt="%.12e")
    _write_metrics(out, metrics)
    _log(f"theta_opt = {theta:.6f}, r_min = {r:.6e}")
    return 0


def _cmd_correlate(args) -> int:
    cfg = _load_config(args.config)
    out = _out_dir(args)
    grid, traj = _propagate_from_config(cfg)
    theta, r, _ = _theta_for(cfg, traj)
    slots = ms.SlotSpec.contiguous(cfg.slot_domain, cfg.slot_start,
                                   cfg.slot_count, cfg.slot_width)
    kind = args.kind or cfg.kind
    fn = ms.correlation_matrix if cfg.slot_domain == "time" else ms.spectral_correlation_matrix
    _log(f"backpropagating {cfg.slot_count} slots (kind={kind}) ...")
    m = fn(traj, theta, slots, kind, workers=args.workers)
    ms.save_matrix_text(m, out / f"corr_{kind}.cmat")
    ms.save_matrix_binary(m, out / f"corr_{kind}.cmatb")
    emit_heatmap(m, out / f"corr_{kind}.ppm", which="coefficients")
    vmin, vmax = m.extrema("coefficients")
    _write_metrics(out, {"theta_opt": theta, "r_min": r,
                         "corr_min": vmin, "corr_max": vmax})
    _log(f"extrema: {vmin:+.4f} / {vmax:+.4f}")
    return 0


def _cmd_scenario(args) -> int:
    overrides = {}
    for item in args.override or ():
        key, _, val = item.partition("=")
        if not val:
            raise InvalidParameterError(f"override {item!r} is not key=value")
        overrides[key.strip()] = val.strip()
    result = run_scenario(args.name, args.out, overrides or None, workers=args.workers)
    _log(f"scenario {args.name}: wrote {result.out_dir}")
    for key in ("theta_opt", "r_min", "n_spectral_maxima"):
        if key in result.metrics:
            _log(f"  {key} = {result.metrics[key]}")
    return 0


def _cmd_convert(args) -> int:
    import configparser

    cp = configparser.ConfigParser(interpolation=None)
    cp.read(args.params)
    if not cp.has_section("physical"):
        raise ConfigError([("physical", "missing [physical] section")])
    g = lambda k, d=None: cp.getfloat("physical", k, fallback=d)
    p = PhysicalParams(
        t0=g("t0_s"),
        beta2_avg=g("beta2_avg_s2_per_m"),
        beta2=g("beta2_s2_per_m", g("beta2_avg_s2_per_m")),
        dbeta1=g("dbeta1_s_per_m", 0.0),
        delta_beta=g("delta_beta_per_m", 0.0),
        gamma=g("gamma_per_w_m"),
        a_eff=g("a_eff_m2"),
        length=g("length_m"),
    )
    profile, report = normalize(p)
    out = _out_dir(args)
    with open(out / "normalized.txt", "w", encoding="utf-8") as fh:
        fh.write(f"length_zeta = {report.length_zeta!r}\n")
        fh.write(f"zeta_per_meter = {report.zeta_per_meter!r}\n")
        fh.write(f"meters_per_zeta = {report.meters_per_zeta!r}\n")
        fh.write(f"power_scale_w = {report.power_scale_w!r}\n")
        fh.write(f"t0_s = {report.t0_s!r}\n")
        fh.write(f"d_at_0 = {profile.dispersion(0.0)!r}\n")
        fh.write(f"b_at_0 = {profile.birefringence(0.0)!r}\n")
        fh.write(f"b1_at_0 = {profile.group_delay(0.0)!r}\n")
    _log(f"normalized profile written to {out / 'normalized.txt'}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fibersqueeze",
        description="Quantum-correlated pulse-pair simulator for modulated birefringent fiber",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="run config file")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("propagate", help="classical propagation only")
    add_common(p)
    p.add_argument("--save-trajectory", action="store_true")
    p.set_defaults(fn=_cmd_propagate)

    p = sub.add_parser("spectrum", help="output spectrum and split spectra")
    add_common(p)
    p.add_argument("--split-at", type=float, default=0.0)
    p.set_defaults(fn=_cmd_spectrum)

    p = sub.add_parser("squeeze", help="squeezing-ratio optimization")
    add_common(p)
    p.set_defaults(fn=_cmd_squeeze)

    p = sub.add_parser("correlate", help="correlation matrix over slots")
    add_common(p)
    p.add_argument("--kind", choices=("xx", "yy", "xy", "complete"))
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(fn=_cmd_correlate)

    p = sub.add_parser("scenario", help="run a preset figure regime")
    p.add_argument("name", choices=sorted(SCENARIOS))
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="grid/step/slot overrides (repeatable)")
    p.set_defaults(fn=_cmd_scenario)

    p = sub.add_parser("convert", help="physical units -> normalized profile")
    p.add_argument("--params", required=True, help="INI file with a [physical] section")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_convert)

    return parser


def cli_main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        for ctx, msg in exc.errors:
            _log(f"config error [{ctx}]: {msg}")
        return 1
    except NumericalBlowupError as exc:
        _log(f"numerical failure: {exc}")
        return 2
    except InvalidParameterError as exc:
        _log(f"invalid parameter: {exc}")
        return 1
    except FiberSimError as exc:
        _log(f"error: {exc}")
        return 1


def main() -> None:
    sys.exit(cli_main())
