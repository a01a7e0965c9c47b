"""Command-line driver: ``pp``, ``boundary``, ``shine``, ``simulate``, ``concordance``.

Exit codes: 0 success, 2 invalid arguments or configuration, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import platform
import sys
import time
from collections import defaultdict
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from .core import DomainError, approx_pp, approx_pp_bayes, futility_onset, invert_pp, invert_pp_bayes
from .shine import shine_table
from .simulate import (
    DEFAULT_THRESHOLDS,
    InterimRecord,
    concordance_curve,
    default_parallelism,
    run_batch,
    summarize,
)
from .specs import ConfigError, RunConfig

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

RESULT_COLUMNS = tuple(f.name for f in dataclasses.fields(InterimRecord))
STOP_COLUMNS = ("scenario", "method", "interim", "p_success", "p_futility")
TOTAL_COLUMNS = ("scenario", "method", "p_stop", "p_stop_success", "p_stop_futility",
                 "p_final_success", "mean_sample_size", "n_sims")
AGREEMENT_COLUMNS = ("scenario", "method", "reference", "interim", "n_pairs", "decision_agreement",
                     "mean_abs_diff_n", "mean_abs_diff_max", "mean_diff_n", "mean_diff_max")
CONCORDANCE_COLUMNS = ("scenario", "method", "reference", "interim", "target", "threshold", "agreement")
BOUNDARY_THRESHOLDS = (0.20, 0.10, 0.05)


class ValidationError(Exception):
    pass


def _fmt(value, full: bool = False) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value)) if full else f"{float(value):.6g}"
    return str(value)


def write_csv(path: Path, rows, columns, full: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c], full) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- pp / boundary / shine ---------------------------------------------------


def _fraction_args(args) -> float:
    if args.r is not None:
        if args.info_n is not None or args.info_N is not None:
            raise ValidationError("give either --r or --info-n/--info-N, not both")
        return args.r
    if args.info_n is None or args.info_N is None:
        raise ValidationError("need --r or both --info-n and --info-N")
    if not (args.info_n > 0 and args.info_N > args.info_n):
        raise ValidationError(f"info_n must satisfy 0 < info_n < info_N, got {args.info_n}, {args.info_N}")
    return args.info_n / args.info_N


def cmd_pp(args) -> int:
    r = _fraction_args(args)
    if (args.p is None) == (args.posterior is None):
        raise ValidationError("give exactly one of --p and --posterior")
    if args.p is not None:
        if args.eta is not None:
            raise ValidationError("--eta goes with --posterior; use --alpha with --p")
        alpha = 0.025 if args.alpha is None else args.alpha
        pp = approx_pp(args.p, r, alpha)
        boundary = invert_pp(args.threshold, r, alpha)
        print(f"{pp:.6f}")
        print(f"r={r:.6g} alpha={alpha:.6g}; p-value giving PP={args.threshold:g}: {boundary:.6g}")
    else:
        if args.alpha is not None:
            raise ValidationError("--alpha goes with --p; use --eta with --posterior")
        eta = 0.975 if args.eta is None else args.eta
        pp = approx_pp_bayes(args.posterior, r, eta)
        boundary = invert_pp_bayes(args.threshold, r, eta)
        print(f"{pp:.6f}")
        print(f"r={r:.6g} eta={eta:.6g}; posterior giving PP={args.threshold:g}: {boundary:.6g}")
    return EXIT_OK


def boundary_rows(threshold: float, alpha: float, n_grid: int) -> list[dict]:
    if n_grid < 1:
        raise ValidationError("grid must have at least one point")
    futility_onset(threshold, alpha)
    r = np.arange(1, n_grid + 1) / (n_grid + 1)
    p = invert_pp(threshold, r, alpha)
    return [{"r": float(a), "p_value": float(b)} for a, b in zip(r, np.atleast_1d(p))]


def cmd_boundary(args) -> int:
    rows = boundary_rows(args.threshold, args.alpha, args.grid)
    onsets = [(t, futility_onset(t, args.alpha)) for t in args.onsets]
    out = sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("r", "p_value"))
    for row in rows:
        w.writerow((_fmt(row["r"]), _fmt(row["p_value"])))
    for t, r in onsets:
        print(f"# futility onset: threshold={t:g} alpha={args.alpha:g} r*={r:.6f}")
    return EXIT_OK


def cmd_shine(args) -> int:
    rows = shine_table()
    cols = ("interim", "N", "n", "treatment_rate", "control_rate", "p_n", "r", "direct_app",
            "published_app", "published_ipp", "direct_decision", "published_decision", "near_futility")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in cols])
    print("# success (PP_N > 0.99) is not reached at any interim")
    return EXIT_OK


# -- simulate ----------------------------------------------------------------


def _versions() -> dict:
    out = {"python": platform.python_version(), "predprob": __version__}
    for pkg in ("numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _write_manifest(path: Path, manifest: dict) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def _load_config(args) -> RunConfig:
    try:
        cfg = RunConfig.load(args.config)
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from None
    ex = cfg.execution
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.n_sims is not None:
        changes["n_sims"] = args.n_sims
    if args.parallelism is not None:
        changes["parallelism"] = args.parallelism
    if changes:
        ex = dataclasses.replace(ex, **changes)
    out = cfg.output
    if args.out is not None or args.full_precision:
        out = dataclasses.replace(out, directory=args.out or out.directory,
                                  full_precision=out.full_precision or args.full_precision)
    return dataclasses.replace(cfg, execution=ex, output=out)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    workers = cfg.execution.parallelism or default_parallelism()
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    manifest = {
        "complete": False,
        "config_hash": cfg.hash,
        "config": cfg.semantic_dict(),
        "master_seed": cfg.execution.master_seed,
        "n_sims": cfg.execution.n_sims,
        "parallelism": workers,
        "versions": _versions(),
        "files": [],
    }
    _write_manifest(manifest_path, manifest)
    t_start = time.perf_counter()
    try:
        results = []
        for scenario in cfg.scenarios:
            results.extend(run_batch(cfg.design, scenario, cfg.execution.n_sims,
                                     cfg.execution.master_seed, workers))
        wall = defaultdict(float)
        for res in results:
            for m, t in res.timings.items():
                wall[m] += t
        rows = [dataclasses.asdict(r) for res in results for r in res.records]
        summary = summarize(results, cfg.design)
        files = {"results.csv": (rows, RESULT_COLUMNS), "stops.csv": (summary.stops, STOP_COLUMNS),
                 "totals.csv": (summary.totals, TOTAL_COLUMNS),
                 "agreement.csv": (summary.agreement, AGREEMENT_COLUMNS),
                 "concordance.csv": (summary.concordance, CONCORDANCE_COLUMNS)}
        for name, (data, cols) in files.items():
            write_csv(out / name, data, cols)
        if cfg.output.full_precision:
            write_csv(out / "results_raw.csv", rows, RESULT_COLUMNS, full=True)
            files["results_raw.csv"] = None
        manifest["files"] = sorted(files)
        manifest["wall_clock_seconds"] = {m: wall[m] for m in cfg.design.methods}
        base = wall.get("epp", wall.get("npp", 0.0))
        if "ipp" in wall and base > 0:
            manifest["ipp_to_approximate_time_ratio"] = wall["ipp"] / base
        manifest["total_seconds"] = time.perf_counter() - t_start
        manifest["complete"] = True
    except Exception as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        _write_manifest(manifest_path, manifest)
        raise
    _write_manifest(manifest_path, manifest)
    print(f"wrote {len(manifest['files'])} files to {out} (config {cfg.hash[:12]})")
    return EXIT_OK


# -- concordance -------------------------------------------------------------


def concordance_from_rows(rows, reference: str = "ipp", thresholds=DEFAULT_THRESHOLDS):
    """Per-interim decision agreement and threshold-sweep concordance from result rows.

    Rows are paired on (scenario, sim_id, interim_index).  Returns
    ``(agreement_rows, concordance_rows)``.
    """
    methods = sorted({r["method"] for r in rows})
    if len(methods) < 2:
        raise ValidationError(f"concordance needs at least two methods, found {methods}")
    if reference not in methods:
        raise ValidationError(f"reference method {reference!r} not present (methods: {methods})")
    cells = defaultdict(dict)
    for r in rows:
        key = (r["scenario"], int(r["sim_id"]), int(r["interim_index"]))
        cells[key][r["method"]] = r
    agreement, concordance = [], []
    for m in methods:
        if m == reference:
            continue
        groups = defaultdict(list)
        for (scen, _, idx), by in cells.items():
            if m in by and reference in by:
                groups[(scen, idx)].append((by[m], by[reference]))
        for (scen, idx) in sorted(groups):
            pairs = groups[(scen, idx)]
            agreement.append({"scenario": scen, "method": m, "reference": reference, "interim": idx,
                              "n_pairs": len(pairs),
                              "decision_agreement": float(np.mean([a["decision"] == b["decision"]
                                                                   for a, b in pairs]))})
            for target, col in (("N", "pp_n"), ("max", "pp_max")):
                a = [float(p[col]) for p, _ in pairs]
                b = [float(q[col]) for _, q in pairs]
                for t, v in zip(thresholds, concordance_curve(a, b, thresholds)):
                    concordance.append({"scenario": scen, "method": m, "reference": reference,
                                        "interim": idx, "target": target, "threshold": float(t),
                                        "agreement": float(v)})
    return agreement, concordance


def _thresholds(text: str | None):
    if not text:
        return DEFAULT_THRESHOLDS
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ValidationError(f"thresholds must be comma-separated numbers, got {text!r}") from None
    if any(not 0.0 < v < 1.0 for v in vals):
        raise ValidationError("thresholds must lie strictly inside (0, 1)")
    return vals


def cmd_concordance(args) -> int:
    thresholds = _thresholds(args.thresholds)
    rows = []
    for path in args.results:
        try:
            data = read_csv(path)
        except OSError as exc:
            raise ValidationError(f"cannot read {path}: {exc}") from None
        if data and "method" not in data[0]:
            raise ValidationError(f"{path} has no 'method' column")
        rows.extend(data)
    agreement, concordance = concordance_from_rows(rows, args.reference, thresholds)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "concordance.csv", concordance, CONCORDANCE_COLUMNS)
    write_csv(out / "agreement.csv", agreement, AGREEMENT_COLUMNS[:6])
    for row in agreement:
        print(f"{row['scenario']} {row['method']} vs {row['reference']} interim {row['interim']}: "
              f"agreement {row['decision_agreement']:.4f} ({row['n_pairs']} pairs)")
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="predprob", description="Approximate and imputed predictive probabilities.")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("pp", help="closed-form predictive probability")
    pp.add_argument("--p", type=float, help="one-sided interim p-value")
    pp.add_argument("--posterior", type=float, help="posterior probability of superiority")
    pp.add_argument("--r", type=float, help="information fraction")
    pp.add_argument("--info-n", dest="info_n", type=float)
    pp.add_argument("--info-N", dest="info_N", type=float)
    pp.add_argument("--alpha", type=float)
    pp.add_argument("--eta", type=float)
    pp.add_argument("--threshold", type=float, default=0.05, help="PP for the reported boundary")
    pp.set_defaults(func=cmd_pp)

    b = sub.add_parser("boundary", help="p-value boundary curve and futility onsets")
    b.add_argument("--threshold", type=float, default=0.05)
    b.add_argument("--alpha", type=float, default=0.025)
    b.add_argument("--grid", type=int, default=99, help="number of interior r points")
    b.add_argument("--onsets", type=float, nargs="+", default=list(BOUNDARY_THRESHOLDS))
    b.set_defaults(func=cmd_boundary)

    s = sub.add_parser("shine", help="shadow SHINE interim table")
    s.set_defaults(func=cmd_shine)

    sim = sub.add_parser("simulate", help="run a simulation config")
    sim.add_argument("config")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--n-sims", dest="n_sims", type=int)
    sim.add_argument("--parallelism", type=int)
    sim.add_argument("--out")
    sim.add_argument("--full-precision", dest="full_precision", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    c = sub.add_parser("concordance", help="agreement between methods in result files")
    c.add_argument("results", nargs="+")
    c.add_argument("--thresholds", help="comma-separated, default 0.01..0.99")
    c.add_argument("--reference", default="ipp")
    c.add_argument("--out")
    c.set_defaults(func=cmd_concordance)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        return args.func(args)
    except (ValidationError, ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
