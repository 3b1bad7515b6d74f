"""Command-line front end.

Subcommands
-----------
verify-gains
    Print the gain-condition report for every group.
simulate
    Run an experiment file and write the trajectory and summary CSVs.
reproduce
    Run a bundled preset and evaluate its pass/fail checks.

Exit codes: 0 success, 1 requested regime not met, 2 invalid config or
failed gain check, 3 numerical blow-up, 4 failed checks.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .analysis import SUMMARY_FIELDS, summary_metrics
from .checks import evaluate
from .config import build_experiment, load_config, load_preset
from .dynamics import ContractViolation
from .simulator import SimulationBlowUp, Simulator
from .topology import analyze, sufficient_conditions, sync_basis

log = logging.getLogger("lagsync")

EXIT_OK, EXIT_REGIME, EXIT_CONFIG, EXIT_BLOWUP, EXIT_CHECKS = 0, 1, 2, 3, 4
REGIMES = ("any", "tracking", "sync", "indifferent")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ helpers

def _load(args) -> dict:
    if getattr(args, "preset", None) and getattr(args, "config", None):
        raise CliError("use either --config or --preset", EXIT_CONFIG)
    try:
        if getattr(args, "preset", None):
            return load_preset(args.preset)
        if getattr(args, "config", None):
            return load_config(args.config)
    except ContractViolation as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    raise CliError("one of --config or --preset is required", EXIT_CONFIG)


def _overrides(args) -> dict:
    ov = {"seed": args.seed, "dt": args.dt, "t_final": args.t_final,
          "decimation": getattr(args, "decimation", None)}
    if getattr(args, "disturbance", None):
        ov["disturbance"] = args.disturbance
    return ov


def _experiment(cfg, overrides):
    try:
        return build_experiment(cfg, **overrides)
    except (ContractViolation, ValueError) as exc:
        raise CliError(f"invalid experiment: {exc}", EXIT_CONFIG) from None


def gain_reports(exp) -> list[dict]:
    """One entry per group and active graph."""
    out = []
    for g in exp.groups:
        gains = g.controller.gains
        for k, graph in enumerate(g.schedule.graphs):
            lap, _, rep = analyze(graph, gains, g.n)
            out.append({
                "group": g.name, "graph": k, "kind": graph.kind, "p": graph.p, "n": g.n,
                "law": g.controller.law, "report": rep,
                "sufficient": sufficient_conditions(graph, gains),
                "joint_spectra": joint_spectra(lap),
            })
    return out


def joint_spectra(lap) -> list | None:
    """Per-joint ``(D1, D2...)`` spectra when ``L`` does not couple joints."""
    Ls = lap.symmetrized()
    n, p = lap.n, lap.p
    mask = np.kron(np.ones((p, p)), np.eye(n)).astype(bool)
    if np.any(Ls[~mask] != 0):
        return None
    out = []
    for j in range(n):
        b = sync_basis(Ls[j::n, j::n], p, 1)
        out.append([float(b.D1[0, 0])] + [float(x) for x in np.diag(b.D2)])
    return out


def regime_met(reports, regime: str) -> bool:
    reps = [r["report"] for r in reports]
    if regime == "tracking":
        return all(r.tracking_ok and r.sync_ok for r in reps)
    if regime == "indifferent":
        return all(r.indifferent for r in reps)
    return all(r.sync_ok for r in reps)


def _fmt(xs):
    return "(" + ", ".join(f"{x:.6g}" for x in xs) + ")"


def _print_reports(reports, out=None):
    out = sys.stdout if out is None else out
    for r in reports:
        rep = r["report"]
        status = "indifferent" if rep.indifferent else ("tracking" if rep.tracking_ok else "no-tracking")
        head = f"group {r['group']}" + (f" graph {r['graph']}" if r["graph"] else "")
        print(f"{head}: {r['kind']} p={r['p']} n={r['n']} law={r['law']}", file=out)
        print(f"  tracking_ok={rep.tracking_ok} sync_ok={rep.sync_ok} indifferent={rep.indifferent}"
              f" regime={status}{' (symmetrized)' if rep.symmetrized else ''}", file=out)
        print(f"  D1 eigenvalues {_fmt(rep.D1_eigs)}  D2 eigenvalues {_fmt(rep.D2_eigs)}", file=out)
        if r["joint_spectra"] is not None:
            for j, sp in enumerate(r["joint_spectra"]):
                print(f"  joint {j + 1} spectrum {_fmt(sp)}", file=out)
        else:
            print(f"  spectrum {_fmt(rep.spectrum)}", file=out)
        suf = r["sufficient"]
        print(f"  sufficient: {suf['condition']} margin {_fmt(suf['margin'])} holds={suf['holds']}", file=out)


def _plan(exp, out_dir, sweep):
    sim = exp.sim
    seeds = [sim.seed + k for k in range(sweep)] if sweep > 1 else [sim.seed]
    return {
        "name": exp.name,
        "backend": kernels.BACKEND,
        "groups": [{"name": g.name, "p": g.p, "n": g.n, "law": g.controller.law,
                    "model": g.models[0].tag, "graphs": [gr.kind for gr in g.schedule.graphs]}
                   for g in exp.groups],
        "relays": [[e.src_group, e.src, e.dst_group, e.dst] for e in exp.scenario.relays],
        "sim": {"dt": sim.dt, "t_final": sim.t_final, "steps": sim.n_steps, "decimation": sim.decimation,
                "seeds": seeds, "disturbance": None if sim.disturbance is None
                else {"kind": sim.disturbance.kind, "amplitude": sim.disturbance.amplitude}},
        "outputs": _outputs(out_dir, exp, seeds),
    }


def _run_dir(out_dir, seed, sweep):
    return Path(out_dir) / f"seed{seed}" if sweep else Path(out_dir)


def _outputs(out_dir, exp, seeds):
    if out_dir is None:
        return []
    sweep = len(seeds) > 1
    files = [str(_run_dir(out_dir, s, sweep) / "log.csv") for s in seeds]
    return files + [str(Path(out_dir) / "summary.csv")]


def _run_one(cfg, overrides, seed, out_dir, sweep):
    """Worker for one seed. Returns ``(row, error)``; module level so it pickles."""
    exp = build_experiment(cfg, **dict(overrides, seed=seed))
    try:
        tlog = Simulator(exp.scenario, exp.sim).run()
    except SimulationBlowUp as exc:
        return None, (str(exc), exc.t_last_good)
    row = summary_metrics(tlog, f"{exp.name}-seed{seed}", residual=exp.sim.disturbance is None)
    if out_dir is not None:
        d = _run_dir(out_dir, seed, sweep)
        d.mkdir(parents=True, exist_ok=True)
        tlog.to_csv(d / "log.csv")
    return row, None


def write_summary(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


# ----------------------------------------------------------------- commands

def cmd_verify_gains(args) -> int:
    exp = _experiment(_load(args), {})
    reports = gain_reports(exp)
    if args.json:
        doc = [{**{k: v for k, v in r.items() if k != "report"}, "report": r["report"].as_dict()}
               for r in reports]
        print(json.dumps(doc, indent=2, default=_jsonable))
    else:
        _print_reports(reports)
    ok = regime_met(reports, args.regime)
    print(f"regime {args.regime}: {'satisfied' if ok else 'NOT satisfied'}")
    return EXIT_OK if ok else EXIT_REGIME


def cmd_simulate(args) -> int:
    cfg = _load(args)
    overrides = _overrides(args)
    exp = _experiment(cfg, overrides)
    sweep = max(1, int(args.sweep or 1))
    reports = gain_reports(exp)
    gains_ok = regime_met(reports, "any")
    if args.dry_run:
        plan = _plan(exp, args.out, sweep)
        plan["gains_ok"] = gains_ok
        print(json.dumps(plan, indent=2))
        return EXIT_OK
    if not gains_ok and not args.force:
        _print_reports(reports, sys.stderr)
        raise CliError("gain conditions fail (sync_ok is false); rerun with --force to simulate anyway",
                       EXIT_CONFIG)
    out_dir = Path(args.out) if args.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [exp.sim.seed + k for k in range(sweep)]
    if sweep > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_one, [cfg] * sweep, [overrides] * sweep, seeds,
                                    [out_dir] * sweep, [True] * sweep))
    else:
        results = [_run_one(cfg, overrides, seeds[0], out_dir, False)]
    rows = [r for r, err in results if r is not None]
    if out_dir is not None and rows:
        write_summary(out_dir / "summary.csv", rows)
    for row in rows:
        print("  ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    errors = [(s, err) for s, (_, err) in zip(seeds, results) if err is not None]
    for seed, (msg, t_good) in errors:
        print(f"blow-up (seed {seed}): {msg}; last good t = {t_good:.6g} s", file=sys.stderr)
    return EXIT_BLOWUP if errors else EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = load_preset(args.preset)
    overrides = _overrides(args)
    exp = _experiment(cfg, overrides)
    if args.dry_run:
        plan = _plan(exp, args.out, 1)
        plan["checks"] = cfg.get("acceptance", [])
        print(json.dumps(plan, indent=2))
        return EXIT_OK
    _print_reports(gain_reports(exp))
    try:
        tlog = Simulator(exp.scenario, exp.sim).run()
    except SimulationBlowUp as exc:
        print(f"blow-up: {exc}; last good t = {exc.t_last_good:.6g} s", file=sys.stderr)
        return EXIT_BLOWUP
    row = summary_metrics(tlog, f"{exp.name}-seed{exp.sim.seed}", residual=exp.sim.disturbance is None)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        tlog.to_csv(out_dir / "log.csv")
        write_summary(out_dir / "summary.csv", [row])
    results = evaluate(tlog, cfg.get("acceptance", []))
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if failed:
        print("metrics: " + json.dumps({k: _jsonable(v) for k, v in row.items()}), file=sys.stderr)
        return EXIT_CHECKS
    print(f"{exp.name}: all {len(results)} checks passed")
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lagsync", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def source(p, preset_only=False):
        if preset_only:
            p.add_argument("--preset", required=True, choices=("fig4", "fig5", "fig6a", "fig6b"))
        else:
            p.add_argument("--config", help="experiment YAML file")
            p.add_argument("--preset", help="bundled preset name")

    def run_flags(p):
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--t-final", type=float, dest="t_final")
        p.add_argument("--decimation", type=int)
        p.add_argument("--disturbance", help="bounded torque disturbance, e.g. sinusoid:0.1")
        p.add_argument("--dry-run", action="store_true", help="print the run plan and exit")

    p = sub.add_parser("verify-gains", help="report gain conditions")
    source(p)
    p.add_argument("--regime", choices=REGIMES, default="any",
                   help="any: synchronization; tracking: sync and tracking; indifferent: D1 = 0")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify_gains)

    p = sub.add_parser("simulate", help="run an experiment")
    source(p)
    run_flags(p)
    p.add_argument("--force", action="store_true", help="simulate even if gain conditions fail")
    p.add_argument("--sweep", type=int, default=1, metavar="N", help="run N consecutive seeds in parallel")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", help="run a preset and check it")
    source(p, preset_only=True)
    run_flags(p)
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.info("kernel backend: %s", kernels.BACKEND)
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
