"""Command line runner: ``qfatou --kind corona-dichotomy --scene cantor --depth 5 10``.

Flags mirror the config fields; ``--config FILE`` loads a JSON config whose
fields override the flags.  Exit status: 0 all verdicts pass, 1 some
acceptance verdict fails, 2 invalid config, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
import traceback

from .errors import ParameterError
from .experiments import KINDS, ExperimentConfig, Report, run

log = logging.getLogger("qfatou")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def emit(report: Report, out_dir):
    """Write summary.json plus ``<table>.csv`` and ``<table>_long.csv`` per table.

    Output depends only on the report, so equal reports give equal bytes.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    p = os.path.join(out_dir, "summary.json")
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    paths.append(p)
    for name in sorted(report.tables):
        t = report.tables[name]
        p = os.path.join(out_dir, f"{name}.csv")
        with open(p, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(t.columns)
            for r in t.rows:
                w.writerow([_cell(r.get(c, "")) for c in t.columns])
        paths.append(p)
        p = os.path.join(out_dir, f"{name}_long.csv")
        with open(p, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "x", "y", "group"])
            metrics = [c for c in t.columns if c not in (t.x, t.group)]
            for r in t.rows:
                for m in metrics:
                    w.writerow([m, _cell(r.get(t.x, "")) if t.x else "", _cell(r.get(m, "")),
                                _cell(r.get(t.group, "")) if t.group else ""])
        paths.append(p)
    return paths


def _number_list(s):
    return [float(x) for x in s]


def build_parser():
    ap = argparse.ArgumentParser(prog="qfatou", description=__doc__.splitlines()[0])
    ap.add_argument("--kind", choices=KINDS, default="validation-battery")
    ap.add_argument("--scene", default="hyperplane", help="short scene name or a JSON scene object")
    ap.add_argument("--depth", type=int, nargs="+", default=[6])
    ap.add_argument("--eta", type=float, default=None)
    ap.add_argument("--kk", type=float, default=None, help="the region constant K")
    ap.add_argument("--tau", type=float, default=None)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--walks", type=int, default=4096)
    ap.add_argument("--strategy", default="interior-first")
    ap.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                    help="kind-specific parameter (JSON value)")
    ap.add_argument("--config", help="JSON config file; its fields override the flags")
    ap.add_argument("--out", default="qfatou-report")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(args):
    base = ExperimentConfig()
    fields = {"kind": args.kind, "depth": args.depth if len(args.depth) > 1 else args.depth[0],
              "eps": args.eps if len(args.eps) > 1 else args.eps[0], "seed": args.seed, "walks": args.walks,
              "strategy": args.strategy}
    scene = args.scene
    if scene.strip().startswith("{"):
        scene = json.loads(scene)
    fields["scene"] = scene
    for name, val in (("eta", args.eta), ("K", args.kk), ("tau", args.tau)):
        fields[name] = getattr(base, name) if val is None else val
    params = {}
    for item in args.param:
        if "=" not in item:
            raise ParameterError(f"param: expected KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            params[k] = json.loads(v)
        except json.JSONDecodeError:
            params[k] = v
    fields["params"] = params
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if "kk" in file_cfg:
            file_cfg["K"] = file_cfg.pop("kk")
        unknown = set(file_cfg) - set(fields) - {"schema"}
        if unknown:
            raise ParameterError(f"config: unknown fields {sorted(unknown)}")
        fields.update(file_cfg)
    return ExperimentConfig(**fields)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args).validate()
    except (ParameterError, ValueError, TypeError, OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        report = run(cfg)
        emit(report, args.out)
    except Exception as e:  # report and map to the runtime exit status
        print(f"runtime error: {e}", file=sys.stderr)
        log.info(traceback.format_exc())
        return EXIT_RUNTIME
    log.info("wall time %.1f s", time.perf_counter() - t0)
    for k, v in sorted(report.verdicts.items()):
        print(f"{k}: {'PASS' if v else 'FAIL'}")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
