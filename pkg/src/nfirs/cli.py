"""Command-line entry point: simulate, estimate, crlb and sweep subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, load_config
from .crlb import CrlbReport, crlb_report
from .errors import NfirsError
from .estimator import Codebooks, estimate
from .harness import SUMMARY_COLUMNS, SweepSpec, draw_scenario, noise_seed, run_sweep
from .io import PATH_COLUMNS, ensure_dir, load_measurement, path_rows, save_measurement, \
    write_paths_csv, write_tensor_csv
from .measurement import add_noise, synthesize_noiseless


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", message, code=2)


def _fail(kind: str, message: str, code: int = 1):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    raise SystemExit(code)


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}")


def _range(text: str) -> tuple[float, float]:
    vals = _float_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("expected two numbers, e.g. 1,6")
    return vals[0], vals[1]


def _config(args) -> ScenarioConfig:
    over = {}
    if getattr(args, "distance_range", None) is not None:
        over["dist_range"] = args.distance_range
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if args.config:
        return load_config(args.config, **over)
    return ScenarioConfig(**over)


def cmd_simulate(args) -> None:
    cfg = _config(args)
    cb = Codebooks.from_config(cfg) if args.on_grid else None
    paths, ops = draw_scenario(cfg, cfg.seed, 0, cb)
    X = synthesize_noiseless(paths, ops, cfg)
    snr = args.snr if args.snr is not None else math.inf
    meas = add_noise(X, snr, noise_seed(cfg.seed, 0, 0), operators=ops)
    out = ensure_dir(args.out or ".")
    save_measurement(out / "measurement.npz", meas, cfg, paths)
    write_tensor_csv(out / "tensor.csv", meas.data)
    write_paths_csv(out / "truth.csv", paths)
    print(json.dumps({"out": str(out), "sigma2": meas.sigma2, "snr_db": snr, "n_paths": len(paths)}))


def cmd_estimate(args) -> None:
    meas, cfg, _ = load_measurement(args.input)
    res = estimate(meas, cfg)
    rows = path_rows(res.paths)
    lines = [",".join(PATH_COLUMNS)] + [",".join(r) for r in rows]
    lines.append("# singular_values: " + " ".join(f"{s:.6g}" for s in res.singular_values[:cfg.n_paths + 1]))
    lines.append("# z_moduli: " + " ".join(f"{z:.12g}" for z in res.z_moduli))
    lines.append(f"# evd_cond: {res.evd_cond:.6g}")
    lines.append("# irs_peaks: " + " ".join(f"{p:.6g}" for p in res.irs_peaks))
    lines.append("# ue_peaks: " + " ".join(f"{p:.6g}" for p in res.ue_peaks))
    lines.append(f"# gain_leakage: {res.leakage:.6g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)


def cmd_crlb(args) -> None:
    cfg = _config(args)
    paths, ops = draw_scenario(cfg, cfg.seed, 0)
    signal = synthesize_noiseless(paths, ops, cfg)
    energy = float(np.vdot(signal, signal).real)
    unit = crlb_report(paths, ops, cfg, 1.0)
    rows = []
    for snr in args.snr_list:
        sigma2 = energy / (10 ** (snr / 10) * signal.size)
        rows.append(unit.scaled(sigma2).to_csv_row(snr))
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CrlbReport.CSV_HEADER)
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()


def cmd_sweep(args) -> None:
    cfg = _config(args)
    spec = SweepSpec(snr_db=args.snr_list, trials=args.trials, master_seed=cfg.seed,
                     out=args.out, on_grid=args.on_grid, workers=args.workers)
    res = run_sweep(spec, cfg)
    if not args.out:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in res.rows:
            w.writerow([row[c] for c in SUMMARY_COLUMNS])


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nfirs", description="Near-field IRS channel estimation toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, snr_list=False):
        sp.add_argument("--config", help="TOML scenario file")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--distance-range", type=_range, help="path distance range in meters, e.g. 1,6")
        sp.add_argument("--out", help="output location")
        if snr_list:
            sp.add_argument("--snr-list", type=_float_list, default=[0.0, 10.0, 20.0, 30.0],
                            help="SNR points in dB, e.g. 0,10,20,30")

    s = sub.add_parser("simulate", help="draw a scenario and write the measurement tensor and truth")
    common(s)
    s.add_argument("--snr", type=float, help="SNR in dB (default: noiseless)")
    s.add_argument("--on-grid", action="store_true", help="draw angles from the codebook grids")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="run the estimator on a saved measurement")
    e.add_argument("input", help="measurement.npz written by 'simulate'")
    e.add_argument("--out", help="also write the table to this file")
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("crlb", help="bounds for one drawn scenario at each SNR")
    common(c, snr_list=True)
    c.set_defaults(func=cmd_crlb)

    w = sub.add_parser("sweep", help="Monte Carlo NMSE-vs-SNR sweep")
    common(w, snr_list=True)
    w.add_argument("--trials", type=int, default=100)
    w.add_argument("--on-grid", action="store_true")
    w.add_argument("--workers", type=int, default=1)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except NfirsError as exc:
        _fail(type(exc).__name__, str(exc))
    except (OSError, ValueError, KeyError) as exc:
        _fail(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
