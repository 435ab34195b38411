"""Command-line front end: ``gen-traces``, ``train``, ``simulate``, ``report``.

Exit codes: 0 success, 2 usage, 3 numeric fault, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import fading, neural, simkernel
from .config import SHARING_MODES, RunConfig, load_config
from .errors import InvalidParameterError, NumericFaultError, SingularChannelError

log = logging.getLogger("dtzfp")

OUTPUT_ENV = "DTZFP_OUTPUT_DIR"

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(cfg, command, seed, inputs=(), **extra):
    """Run manifest and its hash; identical manifests reproduce identical outputs."""
    body = {"command": command, "config": cfg.to_dict(), "seed": seed,
            "inputs": {str(p): file_sha256(p) for p in inputs}, **extra}
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"))
    body["manifest_hash"] = hashlib.sha256(canon.encode()).hexdigest()[:16]
    return body


def write_manifest(body, path):
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_path(path):
    p = Path(path)
    if not p.is_absolute() and os.environ.get(OUTPUT_ENV):
        p = Path(os.environ[OUTPUT_ENV]) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _ms(value):
    return None if value is None else value * 1e-3


def _load(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides("system", rng_seed=args.seed)
    return cfg


# -- commands -----------------------------------------------------------------

def cmd_gen_traces(args):
    cfg = _load(args)
    sysc, tcfg = cfg.system, cfg.training
    horizon = _ms(args.horizon_ms) or sysc.delay
    M, K = sysc.num_aps, sysc.num_ues
    per_module = {"shared": M * K, "per-user": M, "per-link": 1}[tcfg.sharing]
    length = args.length or tcfg.window + max(1, -(-tcfg.training_length // per_module))
    rng = np.random.default_rng([sysc.rng_seed, 1])
    traces = fading.gen_traces(sysc.doppler, horizon, length, (M, K), rng)
    out = _out_path(args.out)
    fading.write_traces(traces, out)
    write_manifest(manifest(cfg, "gen-traces", sysc.rng_seed, horizon=horizon, length=length),
                   str(out) + ".manifest.json")
    print(f"wrote {out} ({M}x{K}x{length}, spacing {horizon:g} s, f_d {sysc.doppler:g} Hz)")


def cmd_train(args):
    cfg = _load(args)
    cfg = cfg.with_overrides("training", epochs=args.epochs, cell=args.cell,
                             pilot_snr_db=args.snr_db, sharing=args.sharing)
    sysc, tcfg = cfg.system, cfg.training
    horizon = _ms(args.horizon_ms) or sysc.delay
    traces, inputs = None, []
    if args.traces:
        ts = fading.read_traces(args.traces)
        if not np.isclose(ts.sample_spacing, horizon):
            raise UsageError(f"trace spacing {ts.sample_spacing:g} s does not match horizon "
                             f"{horizon:g} s")
        traces, inputs = ts.samples, [args.traces]
    rng = np.random.default_rng([sysc.rng_seed, 2])
    modules, runs = neural.train_modules(tcfg, sysc.doppler, horizon, rng, traces,
                                         num_users=sysc.num_ues, num_aps=sysc.num_aps)
    out = _out_path(args.out)
    neural.save_modules(modules, out, horizon)
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    neural.write_training_csv(runs[0], csv_path)
    write_manifest(manifest(cfg, "train", sysc.rng_seed, inputs, horizon=horizon),
                   str(out) + ".manifest.json")
    final = runs[0].loss_history[-1] if runs[0].loss_history else float("nan")
    print(f"wrote {out} ({len(modules)} module(s), final mse {final:.5g})")


def _mode_from_args(args, cfg):
    delay = _ms(args.delay_ms if args.delay_ms is not None else args.horizon_ms)
    delay = cfg.system.delay if delay is None else delay
    return simkernel.CsiMode(args.mode, delay, args.snr_db)


def cmd_simulate(args):
    cfg = _load(args)
    cfg = cfg.with_overrides("simulation", drops=args.drops, jobs=args.jobs)
    mode = _mode_from_args(args, cfg)
    modules, inputs = None, []
    if mode.needs_predictor:
        if not args.weights:
            raise UsageError(f"--mode {mode.kind} requires --weights")
        modules, horizon = neural.load_modules(args.weights)
        if horizon and not np.isclose(horizon, mode.delay):
            raise UsageError(f"weights were trained for a {horizon * 1e3:g} ms horizon, "
                             f"mode asks for {mode.delay * 1e3:g} ms")
        inputs = [args.weights]
    man = manifest(cfg, "simulate", cfg.system.rng_seed, inputs, mode=mode.to_dict())
    report = simkernel.simulate(cfg, mode, modules,
                                extra_meta={"manifest_hash": man["manifest_hash"]})
    out = _out_path(args.out)
    csv_path = out.with_suffix(".csv")
    json_path = out.with_suffix(".json")
    simkernel.write_report(report, csv_path, json_path)
    print(f"{mode.label()}: 5%-likely {report.q05:.3f} bps/Hz, median {report.median:.3f} bps/Hz "
          f"-> {csv_path}")


def cdf_table(reports, step=0.05):
    """Shared SE grid and one empirical-CDF column per report."""
    lo = min(float(r.samples.min()) for r in reports)
    hi = max(float(r.samples.max()) for r in reports)
    lo = np.floor(lo / step) * step
    n = int(np.ceil((hi - lo) / step)) + 1
    grid = lo + step * np.arange(n)
    return grid, [simkernel.empirical_cdf(r.samples, grid) for r in reports]


def cmd_report(args):
    reports, labels, systems = [], [], set()
    for path in args.reports:
        p = Path(path)
        csv_path = p.with_suffix(".csv")
        json_path = p.with_suffix(".json")
        rep = simkernel.read_report(csv_path, json_path if json_path.exists() else None)
        reports.append(rep)
        labels.append(rep.metadata.get("label", p.stem))
        systems.add(rep.metadata.get("system_hash"))
    if len(systems) > 1:
        msg = "reports come from different system configurations"
        if args.strict:
            raise UsageError(msg)
        print(f"warning: {msg}", file=sys.stderr)
    grid, cols = cdf_table(reports, args.step)
    out = _out_path(args.out)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["se"] + [f"cdf_{lab}" for lab in labels])
        for i, se in enumerate(grid):
            w.writerow([f"{se:.6g}"] + [f"{c[i]:.6g}" for c in cols])
    for lab, rep in zip(labels, reports):
        print(f"{lab}: 5%-likely {rep.q05:.3f}, median {rep.median:.3f}")
    print(f"wrote {out}")


# -- entry point --------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="dtzfp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (defaults reproduce the reference setup)")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("gen-traces", help="write fading traces (CFTRACE1)")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon-ms", type=float, help="sample spacing")
    p.add_argument("--length", type=int)
    p.set_defaults(func=cmd_gen_traces)

    p = sub.add_parser("train", help="train the predictor (CFPRED1 weights + epoch,mse CSV)")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--traces")
    p.add_argument("--csv")
    p.add_argument("--horizon-ms", type=float)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--cell", choices=("lstm", "gru"))
    p.add_argument("--sharing", choices=SHARING_MODES,
                   help="one module for all links (default), one per user, or one per link")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="Monte Carlo spectral efficiency for one CSI mode")
    common(p)
    p.add_argument("--out", required=True, help="output prefix; writes .csv and .json")
    p.add_argument("--mode", required=True, choices=simkernel.CSI_KINDS)
    p.add_argument("--delay-ms", type=float)
    p.add_argument("--horizon-ms", type=float)
    p.add_argument("--snr-db", type=float, help="pilot SNR override")
    p.add_argument("--weights")
    p.add_argument("--drops", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="merge reports into a plot-ready CDF table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, InvalidParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericFaultError, SingularChannelError) as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
