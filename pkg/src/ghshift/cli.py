"""Command-line front end: ``ghshift sweep | oracle1d | oracle2d | presets``."""

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import oracle
from .config import (
    FORMATS,
    NAMED_STATES,
    PRESET_NOTES,
    THETA_LIMIT,
    ConfigError,
    UnknownPreset,
    figure_preset,
    preset_names,
    validate_config,
)
from .shifts import sweep, worker_count

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

CSV_COLUMNS = (
    "theta_deg",
    "prob_R1", "prob_R2", "prob_R3",
    "prob_T1", "prob_T2", "prob_T3",
    "D_r1", "D_r2", "D_t1", "D_t2",
    "D_t1_excess", "D_t2_excess",
    "flux_total",
)


def _fmt(value):
    value = float(value)
    return "" if math.isnan(value) else format(value, ".17g")


def _json_value(value):
    if isinstance(value, (np.ndarray, list, tuple)):
        return [_json_value(v) for v in value]
    if isinstance(value, dict):
        return {k: _json_value(v) for k, v in value.items()}
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return None if math.isnan(value) else float(value)
    return value


def sweep_rows(config, workers=None):
    thetas = config.thetas_deg
    return sweep(config.slab, config.k0, np.radians(thetas), config.amplitudes, workers=workers)


def csv_text(config, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for deg, row in zip(config.thetas_deg, rows):
        writer.writerow(
            [_fmt(deg)]
            + [_fmt(v) for v in row.prob_R]
            + [_fmt(v) for v in row.prob_T]
            + [_fmt(row.D_r[0]), _fmt(row.D_r[1]), _fmt(row.D_t[0]), _fmt(row.D_t[1])]
            + [_fmt(row.D_t_excess[0]), _fmt(row.D_t_excess[1]), _fmt(row.total_flux)]
        )
    return buf.getvalue()


def jsonl_text(config, rows):
    lines = []
    for deg, row in zip(config.thetas_deg, rows):
        record = {
            "theta_deg": float(deg),
            "prob_R": row.prob_R,
            "prob_T": row.prob_T,
            "D_r": row.D_r,
            "D_t": row.D_t,
            "D_t_excess": row.D_t_excess,
            "flux_total": row.total_flux,
        }
        lines.append(json.dumps(_json_value(record), sort_keys=True))
    return "".join(line + "\n" for line in lines)


def run_sweep(config, workers=None):
    """Write the sweep file for ``config``; returns the exit status."""
    rows = sweep_rows(config, workers=workers)
    text = csv_text(config, rows) if config.fmt == "csv" else jsonl_text(config, rows)
    try:
        with open(config.out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as err:
        raise OSError(f"cannot write {config.out_path}: {err.strerror or err}") from err
    return EXIT_OK


# --------------------------------------------------------------------------
# argument handling


def _load_config(args):
    if args.config and args.preset:
        raise ConfigError(["give either --config or --preset, not both"])
    notices = []
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as err:
            raise ConfigError([f"cannot read {args.config}: {err.strerror or err}"]) from None
        config, notices = validate_config(text)
    else:
        try:
            config = figure_preset(args.preset or "fig2")
        except UnknownPreset as err:
            raise ConfigError([str(err.args[0])]) from None
    overrides, errors = {}, []
    if getattr(args, "steps", None) is not None:
        if args.steps < 2:
            errors.append(f"--steps: expected an integer >= 2, got {args.steps}")
        overrides["steps"] = args.steps
    for name in ("theta_min", "theta_max"):
        value = getattr(args, name, None)
        if value is not None:
            if not 0 <= value <= THETA_LIMIT:
                errors.append(f"--{name.replace('_', '-')}: {value} outside [0, {THETA_LIMIT}] degrees")
            overrides[name] = value
    if getattr(args, "state", None) is not None:
        if args.state not in NAMED_STATES:
            errors.append(f"--state: unknown name {args.state!r}; use one of {', '.join(sorted(NAMED_STATES))}")
        overrides["incident_state"] = args.state
    if getattr(args, "out", None):
        overrides["out_path"] = args.out
    if getattr(args, "format", None):
        overrides["fmt"] = args.format
    config = replace(config, **overrides)
    if config.theta_min >= config.theta_max:
        errors.append(f"theta_min ({config.theta_min}) must be below theta_max ({config.theta_max})")
    if errors:
        raise ConfigError(errors)
    return config, notices


def _add_config_args(p):
    src = p.add_argument_group("configuration")
    src.add_argument("--config", metavar="PATH", help="JSON run configuration")
    src.add_argument("--preset", metavar="NAME", help=f"figure preset ({', '.join(preset_names())})")
    src.add_argument("--state", metavar="NAME", help="incident state: " + ", ".join(sorted(NAMED_STATES)))


def build_parser():
    parser = argparse.ArgumentParser(prog="ghshift", description="Lateral shifts of matter waves at a Raman slab.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="angle sweep of probabilities and shifts")
    _add_config_args(p)
    p.add_argument("--steps", type=int, help="number of angles")
    p.add_argument("--theta-min", type=float, metavar="DEG")
    p.add_argument("--theta-max", type=float, metavar="DEG")
    p.add_argument("--out", metavar="PATH", help="output file")
    p.add_argument("--format", choices=FORMATS)

    for name, doc in (("oracle1d", "1D wavepacket probabilities"), ("oracle2d", "2D wavepacket shifts")):
        p = sub.add_parser(name, help=doc)
        _add_config_args(p)
        p.add_argument("--theta", type=float, required=True, metavar="DEG", help="incidence angle")
        p.add_argument("--packet-width", type=float, default=200.0 if name == "oracle1d" else 30.0, metavar="W")
        p.add_argument("--grid-nx", type=int)
        if name == "oracle2d":
            p.add_argument("--grid-ny", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--steps", type=int, help="number of time steps")
        p.add_argument("--absorber-width", type=float)
        p.add_argument("--out", metavar="PATH", help="JSONL report (default: stdout)")
        if name == "oracle2d":
            p.add_argument("--snapshots", metavar="PATH", help="binary density snapshots")
            p.add_argument("--snapshot-every", type=int, default=100, metavar="N")

    sub.add_parser("presets", help="list figure presets")
    return parser


def _packet(config, args):
    W = args.packet_width
    if not W > 0:
        raise ConfigError([f"--packet-width must be positive, got {W}"])
    if not 0 <= args.theta <= THETA_LIMIT:
        raise ConfigError([f"--theta: {args.theta} outside [0, {THETA_LIMIT}] degrees"])
    launch = oracle.SEPARATION_WIDTHS * W
    return oracle.PacketSpec(W, (-launch, 0.0), (config.k0, np.radians(args.theta)), config.amplitudes)


def _grid_overrides(grid, args, one_d):
    changes = {}
    if args.grid_nx is not None:
        changes["nx"] = args.grid_nx
    if not one_d and args.grid_ny is not None:
        changes["ny"] = args.grid_ny
        changes["dy"] = grid.dy * grid.ny / args.grid_ny
    if args.steps is not None:
        changes["n_steps"] = args.steps
    return replace(grid, **changes) if changes else grid


def _run_oracle(args, config, one_d):
    spec = _packet(config, args)
    params = config.slab
    start = time.perf_counter()
    if one_d:
        kw = {} if args.absorber_width is None else {"absorber_width": args.absorber_width}
        if args.dt is not None:
            kw["dt"] = args.dt
        grid = oracle.default_grid_1d(params, [spec], **kw)
        grid = _grid_overrides(grid, args, True)
        res = oracle.propagate_1d(params, spec, grid=grid)
        record = {
            "kind": "oracle1d",
            "R": res.R,
            "T": res.T,
            "interior": res.interior,
            "absorbed_left": res.absorbed_left,
            "absorbed_right": res.absorbed_right,
            "decay_loss": res.decay_loss,
            "inward_leak": res.inward_leak,
            "metadata": res.metadata,
        }
    else:
        kw = {} if args.absorber_width is None else {"absorber_width": args.absorber_width}
        if args.dt is not None:
            kw["dt"] = args.dt
        grid = oracle.default_grid_2d(params, spec, **kw)
        grid = _grid_overrides(grid, args, False)
        rep = oracle.propagate_2d(
            params,
            spec,
            grid,
            snapshot_path=args.snapshots,
            snapshot_every=args.snapshot_every if args.snapshots else 0,
        )
        record = {
            "kind": "oracle2d",
            "norms": rep.norms,
            "centroids": rep.centroids,
            "momenta": rep.momenta,
            "intercepts_r": rep.intercepts_r,
            "intercepts_t": rep.intercepts_t,
            "D_r": rep.D_r,
            "D_t": rep.D_t,
            "D_t_excess": rep.D_t_excess,
            "absorbed": rep.absorbed,
            "decay_loss": rep.decay_loss,
            "split": rep.split,
            "lobes": rep.lobes,
            "metadata": rep.metadata,
        }
    record["config"] = {
        "preset_or_file": args.config or args.preset or "fig2",
        "k0": config.k0,
        "theta_deg": args.theta,
        "incident_state": config.amplitudes.tolist(),
        "slab": vars(params),
        "packet_center": list(spec.center),
        "grid": vars(grid),
        "seconds": round(time.perf_counter() - start, 3),
    }
    record["config"]["incident_state"] = [[a.real, a.imag] for a in config.amplitudes]
    line = json.dumps(_json_value(record), sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(line)
    else:
        sys.stdout.write(line)
    return EXIT_OK


def _presets():
    for name in preset_names():
        cfg = figure_preset(name)
        s = cfg.slab
        print(
            f"{name}: L={s.slab_length:g} gamma={s.gamma:g} omega1={s.omega1:g} omega2={s.omega2:g} "
            f"delta0={s.delta0:g} k0={cfg.k0:g} kL1={s.kL1:g} kL2={s.kL2:g} "
            f"state={cfg.incident_state}  ({PRESET_NOTES[name]})"
        )
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        workers = worker_count()
        os.environ.setdefault("OMP_NUM_THREADS", str(workers))
        if args.command == "presets":
            return _presets()
        config, notices = _load_config(args)
        for note in notices:
            print(f"note: {note}", file=sys.stderr)
        if args.command == "sweep":
            return run_sweep(config, workers=workers)
        return _run_oracle(args, config, one_d=args.command == "oracle1d")
    except (ConfigError, ValueError) as err:
        problems = getattr(err, "errors", None) or getattr(err, "problems", None) or [str(err)]
        kind = "grid error" if isinstance(err, oracle.GridError) else "config error"
        status = EXIT_CONFIG
        if isinstance(err, (oracle.PacketClipped, oracle.EmptyRegion)):
            kind, status = "numeric failure", EXIT_NUMERIC
        for problem in problems:
            print(f"ghshift: {kind}: {problem}", file=sys.stderr)
        return status
    except (oracle.AbsorberLeak, oracle.PacketSplit, ArithmeticError) as err:
        print(f"ghshift: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as err:
        print(f"ghshift: {err}", file=sys.stderr)
        return EXIT_CONFIG
