"""Command-line driver: ``bifire offline|predict|uq|report``.

Exit codes: 0 success, 1 usage, 2 validation/configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .errors import BifireError, ConfigError
from .sampling import read_samples_csv

log = logging.getLogger("bifire")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3
METHODS = ("mf", "cf", "lf")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


# --------------------------------------------------------------------------
# offline
# --------------------------------------------------------------------------

def cmd_offline(args):
    from .bifidelity import offline_train
    from .config import load_config

    cfg = load_config(args.config)
    out = Path(args.output_dir) if args.output_dir else cfg.output_dir
    t0 = time.perf_counter()
    model = offline_train(cfg, out, workers=args.workers)
    log.info("offline stage finished in %.1f s", time.perf_counter() - t0)
    for tag, sel in model.selection.items():
        log.info("%s nodes %s, Gram condition number %.3g",
                 tag.upper(), list(model.gamma if tag == "mf" else model.gamma_cf), sel["cond"])
    print(out)
    return EXIT_OK


# --------------------------------------------------------------------------
# predict
# --------------------------------------------------------------------------

def parse_z(text, names):
    """``"u_w=7,S_e0=0.1"`` or positional ``"7,0.1"`` -> dict in box order."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) != len(names):
        raise ConfigError(f"expected {len(names)} values ({', '.join(names)}), got {len(parts)} in {text!r}")
    z = {}
    for name, part in zip(names, parts):
        key, _, val = part.rpartition("=")
        key = key.strip() or name
        if key not in names:
            raise ConfigError(f"unknown parameter {key!r}; expected one of {names}")
        try:
            z[key] = float(val)
        except ValueError:
            raise ConfigError(f"non-numeric value {val!r} for {key}") from None
    if set(z) != set(names):
        raise ConfigError(f"missing parameters in {text!r}")
    return {n: z[n] for n in names}


def _query_points(args, names):
    points = [parse_z(t, names) for t in (args.z or [])]
    if args.z_csv:
        s = read_samples_csv(args.z_csv)
        if tuple(s.names) != tuple(names):
            raise ConfigError(f"{args.z_csv}: header {list(s.names)} does not match box {list(names)}")
        points += s.rows()
    if not points:
        raise ConfigError("no query points: give --z or --z-csv")
    return points


def _hf_reference(args, model, i, z, n_points):
    from .bifidelity import hf_simulate

    if args.run_hf:
        return hf_simulate(model, z)
    if not args.hf_reference:
        return None
    path = Path(args.hf_reference)
    if path.is_dir():
        path = path / f"ref_{i:03d}.pyro"
    elif n_points > 1:
        raise ConfigError("--hf-reference file given for several query points; pass a directory")
    return io.read_snapshot(path)


def cmd_predict(args):
    from .bifidelity import conventional_from_lf, load_model, mapped_from_lf, run_lf
    from .mapping import resample
    from .uq import relative_error

    model = load_model(args.model)
    names = model.samples.names
    points = _query_points(args, names)
    methods = args.method or ["mf"]
    out = Path(args.out or Path(args.model) / "predict")
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, z in enumerate(points):
        v_lf = run_lf(model, z)
        preds = {}
        for method in methods:
            if method == "mf":
                preds[method] = mapped_from_lf(model, v_lf)
            elif method == "cf":
                preds[method] = conventional_from_lf(model, v_lf)
            else:
                preds[method] = resample(v_lf, model.ref.grid)
        ref = _hf_reference(args, model, i, z, len(points))
        if ref is not None:
            io.write_snapshot(ref, out / f"hf_{i:03d}.pyro", {"query_index": i})
        for method, v in preds.items():
            io.write_snapshot(v, out / f"{method}_{i:03d}.pyro", {"query_index": i, "method": method})
            io.export_csv(v, out / f"{method}_{i:03d}.csv")
            if ref is not None:
                if ref.grid != v.grid:
                    v = resample(v, ref.grid)
                for var, a, b in zip(io.FIELD_NAMES, ref.fields, v.fields):
                    rows.append((i, method, var, relative_error(a, b)))
    if rows:
        with open(out / "errors.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "method", "variable", "relative_error"])
            for i, method, var, e in rows:
                w.writerow([i, method, var, f"{e:.17g}"])
        for i, method, var, e in rows:
            print(f"{i}\t{method}\t{var}\t{e:.6g}")
    print(out)
    return EXIT_OK


# --------------------------------------------------------------------------
# uq
# --------------------------------------------------------------------------

def cmd_uq(args):
    from .bifidelity import load_model
    from .uq import propagate, write_density_csvs, write_qoi_csv

    model = load_model(args.model)
    seed = model.config.seeds["uq"] if args.seed is None else args.seed
    out = Path(args.out or Path(args.model) / "uq")
    stamp = {"N": args.N, "seed": seed, "with_hf": bool(args.with_hf)}
    done = out / "done.json"
    if done.exists() and json.loads(done.read_text()) == stamp and (out / "qoi.csv").exists():
        log.info("uq outputs in %s are up to date", out)
        print(out)
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    res = propagate(model, model.config.box, args.N, seed, with_hf=args.with_hf)
    n_ok = sum(1 for r in res.rows if r[2] is not None)
    if n_ok == 0:
        log.error("every tier evaluation failed")
        return EXIT_NUMERICAL
    write_qoi_csv(res, out / "qoi.csv")
    write_density_csvs(res, out / "densities")
    (out / "timings.json").write_text(json.dumps(res.timings, indent=1, sort_keys=True))
    done.write_text(json.dumps(stamp, sort_keys=True))
    print(out)
    return EXIT_OK


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

def cost_summary(offline, online=None):
    """Per-tier totals, unit costs, speedup and break-even query count.

    ``offline`` maps ``"lf"``/``"hf"`` to ``{run: seconds}``; ``online`` maps
    tier names to lists of per-query seconds.
    """
    lf = list(offline.get("lf", {}).values())
    hf = list(offline.get("hf", {}).values())
    if not lf or not hf:
        raise ConfigError("timings need both LF and HF offline runs")
    lf_unit, hf_unit = float(np.mean(lf)), float(np.mean(hf))
    offline_cost = float(np.sum(lf) + np.sum(hf))
    out = {"n_lf": len(lf), "n_hf": len(hf), "lf_total": float(np.sum(lf)),
           "hf_total": float(np.sum(hf)), "offline_total": offline_cost,
           "lf_unit": lf_unit, "hf_unit": hf_unit}
    out["break_even_queries"] = offline_cost / (hf_unit - lf_unit) if hf_unit > lf_unit else float("inf")
    for tier, times in (online or {}).items():
        if times:
            unit = float(np.mean(times))
            out[f"{tier.lower()}_online_unit"] = unit
            out[f"hf_over_{tier.lower()}"] = hf_unit / unit
    return out


def cmd_report(args):
    root = Path(args.output_dir)
    tpath = root / "timings.json"
    if not tpath.exists():
        raise ConfigError(f"{root}: no timings.json (run 'offline' first)")
    offline = json.loads(tpath.read_text())
    online_path = root / "uq" / "timings.json"
    online = json.loads(online_path.read_text()) if online_path.exists() else None
    s = cost_summary(offline, online)
    lines = [
        f"offline LF runs      {s['n_lf']:6d}   total {s['lf_total']:12.3f} s   unit {s['lf_unit']:.4g} s",
        f"offline HF runs      {s['n_hf']:6d}   total {s['hf_total']:12.3f} s   unit {s['hf_unit']:.4g} s",
        f"offline total                 {s['offline_total']:12.3f} s",
        f"break-even queries   {s['break_even_queries']:.4g}",
    ]
    for tier in ("MF", "CF"):
        key = f"{tier.lower()}_online_unit"
        if key in s:
            lines.append(f"{tier} online unit      {s[key]:.4g} s   HF/{tier} speedup {s[f'hf_over_{tier.lower()}']:.4g}x")
    text = "\n".join(lines) + "\n"
    (root / "report.txt").write_text(text)
    with open(root / "cost.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "value"])
        for k, v in s.items():
            w.writerow([k, f"{v:.17g}" if isinstance(v, float) else v])
    sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="bifire", description="Mapped bi-fidelity wildfire surrogate")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    o = sub.add_parser("offline", help="train a model from a JSON config")
    o.add_argument("config")
    o.add_argument("--output-dir")
    o.add_argument("--workers", type=int)
    o.set_defaults(func=cmd_offline)

    q = sub.add_parser("predict", help="evaluate a trained model at new parameters")
    q.add_argument("model")
    q.add_argument("--z", action="append", help="'name=value,...' or positional values; repeatable")
    q.add_argument("--z-csv", help="CSV with a header of parameter names")
    q.add_argument("--method", action="append", choices=METHODS)
    ref = q.add_mutually_exclusive_group()
    ref.add_argument("--hf-reference", help="HF snapshot file, or directory of ref_XXX.pyro")
    ref.add_argument("--run-hf", action="store_true", help="compute HF references (slow)")
    q.add_argument("--out")
    q.set_defaults(func=cmd_predict)

    u = sub.add_parser("uq", help="Monte Carlo propagation over an LHS test set")
    u.add_argument("model")
    u.add_argument("--N", type=int, default=50)
    u.add_argument("--seed", type=int)
    u.add_argument("--with-hf", action="store_true")
    u.add_argument("--out")
    u.set_defaults(func=cmd_uq)

    r = sub.add_parser("report", help="cost summary of a model directory")
    r.add_argument("output_dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"bifire: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BifireError, np.linalg.LinAlgError) as exc:
        print(f"bifire: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"bifire: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
