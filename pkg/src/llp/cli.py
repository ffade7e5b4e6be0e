"""``llp`` command line: condition checks, simulations and experiment outputs.

Exit codes: 0 success, 1 error (bad config, unreadable input), 2 the
checked conditions are refuted, 3 the environment table overflowed.
Every subcommand stages its files and writes a JSON manifest carrying the
effective configuration, its sha256 and the master seed.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from llp import experiments, io, renewal
from llp.conditions import green_stability_vector, lemma_lb_check, lemma_sa_check, model1_check
from llp.config import RunConfig, config_hash, load_config, to_dict
from llp.errors import EnvironmentOverflowError, InsufficientDataError, LLPError
from llp.models import Action, LoadBalancing, ServerAllocation, Vec2, region_drifts
from llp.process import derive_seed, run_trajectory

EXIT_OK, EXIT_ERROR, EXIT_REFUTED, EXIT_OVERFLOW = 0, 1, 2, 3
COMMANDS = ("check", "simulate", "ensemble", "curve", "renewal", "probe")


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _stem(cfg: RunConfig) -> str:
    return f"{cfg.name}-{cfg.experiment.master_seed}"


def _manifest(command: str, cfg: RunConfig, files: list[str], **extra) -> dict:
    return {
        "command": command,
        "experiment": cfg.name,
        "master_seed": cfg.experiment.master_seed,
        "config_hash": config_hash(cfg),
        "config": to_dict(cfg),
        "files": files,
        "version": _version(),
        **extra,
    }


def _finish(stage: Path, command: str, cfg: RunConfig, files: list[str], **extra) -> None:
    name = f"{_stem(cfg)}.{command}.manifest.json"
    io.write_json(stage / name, _manifest(command, cfg, files, **extra))


# -- check ------------------------------------------------------------------


def _fmt_num(x) -> str:
    return f"{x:.6g}" if isinstance(x, float) else str(x)


def _render_check(report: dict) -> str:
    lines = ["Model conditions"]
    for key, vec in report["model1"]["drifts"].items():
        lines.append(f"  {key:<11} = ({vec[0]:.6f}, {vec[1]:.6f})")
    m = report["model1"]
    lines.append(f"  green stability vector: {m['green_vector']}")
    lines.append(f"  common direction: {m['direction']}")
    lines.append(f"  quadrant interval: {m['quadrant']}")
    for key in ("cond_parameter2", "cond_parameter4", "cond_parameter5"):
        lines.append(f"  {key}: {'holds' if m[key] else 'FAILS'}")
    for ineq in m["inequalities"]:
        lines.append(f"    {ineq['label']}: {_fmt_num(ineq['lhs'])} vs {_fmt_num(ineq['rhs'])} -> {'ok' if ineq['holds'] else 'fails'}")
    q = m["q_window"]
    lines.append(f"  q_window: {'none' if q is None else '(%.6f, %.6f)' % (q['q0'], q['q1'])}")
    lemma = report.get("lemma")
    if lemma is not None:
        lines.append("Sufficient parameter inequalities")
        for ineq in lemma["inequalities"]:
            lines.append(f"    {ineq['label']}: {_fmt_num(ineq['lhs'])} vs {_fmt_num(ineq['rhs'])} -> {'ok' if ineq['holds'] else 'fails'}")
        lines.append(f"  lemma verdict: {'pass' if lemma['all_pass'] else 'fail'}")
    lines.append(f"  direct verdict: {'pass' if m['all_hold'] else 'fail'}")
    lines.append(f"verdict: {'conditions hold' if m['all_hold'] else 'REFUTED'}")
    return "\n".join(lines)


def cmd_check(cfg: RunConfig, stage: Path, args) -> int:
    model = cfg.experiment.world.model
    rep = model1_check(model, cfg.strategy, cfg.direction)
    report = {"model1": rep.to_dict(), "lemma": None}
    if isinstance(model, LoadBalancing):
        report["lemma"] = lemma_lb_check(model).to_dict()
    elif isinstance(model, ServerAllocation):
        report["lemma"] = lemma_sa_check(model).to_dict()
    out = f"{_stem(cfg)}-check.json"
    io.write_json(stage / out, report)
    _finish(stage, "check", cfg, [out], verdict="hold" if rep.all_hold else "refuted")
    print(json.dumps(report, indent=2) if args.json else _render_check(report))
    return EXIT_OK if rep.all_hold else EXIT_REFUTED


# -- simulate / ensemble / curve --------------------------------------------


def cmd_simulate(cfg: RunConfig, stage: Path, args) -> int:
    e = cfg.experiment
    seed = derive_seed(e.master_seed, 0)
    traj = run_trajectory(e.world, e.agent, e.x0, e.horizon, seed, e.env_cap)
    out = f"{_stem(cfg)}.csv"
    io.write_trajectory_csv(traj, stage / out)
    _finish(stage, "simulate", cfg, [out], trajectory_seed=seed)
    print(f"wrote {e.horizon + 1} rows to {out}")
    return EXIT_OK


def cmd_ensemble(cfg: RunConfig, stage: Path, args) -> int:
    e = cfg.experiment
    result = experiments.run_ensemble(e)
    out = f"{_stem(cfg)}.csv"
    io.write_rows(stage / out, ("n", "mean_l1", "se_l1"), ((n, m, s) for n, (m, s) in enumerate(zip(result.mean, result.se))))
    files = [out]
    if e.metrics:
        per = f"{_stem(cfg)}-trajectories.csv"
        io.write_rows(
            stage / per,
            ("index", "seed", "final_x1", "final_x2", "alpha", "escaped", "success_time"),
            ((s.index, s.seed, *s.final_state, s.alpha, s.escaped, s.success_time) for s in result.summaries),
        )
        files.append(per)
    _finish(stage, "ensemble", cfg, files, trajectory_seeds=[s.seed for s in result.summaries])
    print(f"ensemble of {e.n_trajectories}: final mean |X| = {result.mean[-1]:.4f} (se {result.se[-1]:.4f})")
    return EXIT_OK


def cmd_curve(cfg: RunConfig, stage: Path, args) -> int:
    curve = experiments.cost_curve(cfg.experiment, cfg.gamma_grid, cfg.curve_cost)
    out = f"{_stem(cfg)}.csv"
    io.write_rows(
        stage / out,
        ("gamma", "mean", "se", "ref_mean", "ref_se", "truncation_bound"),
        zip(curve.gamma_grid, curve.mean, curve.se, curve.ref_mean, curve.ref_se, curve.truncation_bound),
    )
    _finish(stage, "curve", cfg, [out])
    for g, m, r in zip(curve.gamma_grid, curve.mean, curve.ref_mean):
        print(f"gamma={g}: J={m:.4f}  J_green={r:.4f}")
    return EXIT_OK


# -- renewal / probe --------------------------------------------------------


def cmd_renewal(cfg: RunConfig, stage: Path, args) -> int:
    e = cfg.experiment
    source = args.trajectory or cfg.renewal_trajectory
    extra = {}
    if source:
        traj = io.read_trajectory_csv(source)
        extra["trajectory_file"] = str(source)
    else:
        seed = derive_seed(e.master_seed, 0)
        traj = run_trajectory(e.world, e.agent, e.x0, e.horizon, seed, e.env_cap)
        extra["trajectory_seed"] = seed
    l = Vec2(*cfg.renewal_l)
    records = renewal.record_times(renewal.project(traj, l), cfg.renewal_margin)
    report = {
        "l": list(l),
        "margin": cfg.renewal_margin,
        "horizon": traj.horizon,
        "n_records": len(records),
        "censor_bound": records.censor_bound,
        "drift": renewal.estimate_drift(traj, records).to_dict(),
        "cycles": None,
        "lag1_autocorrelation": None,
    }
    stem = _stem(cfg)
    files = [f"{stem}-renewal.json", f"{stem}-records.csv"]
    rows = [(k, int(t)) for k, t in enumerate(records.certified)]
    if len(records) >= 2:
        stats = renewal.cycle_stats(traj, records)
        report["cycles"] = {
            "count": len(stats.gaps),
            "mean_gap": float(stats.gaps.mean()),
            "mean_scope": float(stats.scopes.mean()),
            "tail_fit": None if stats.tail_fit is None else vars(stats.tail_fit),
        }
        try:
            report["lag1_autocorrelation"] = [renewal.lag1_autocorrelation(stats.displacements[:, i]) for i in (0, 1)]
        except InsufficientDataError:
            pass
    io.write_json(stage / files[0], report)
    io.write_rows(stage / files[1], ("k", "record_time"), rows)
    _finish(stage, "renewal", cfg, files, **extra)
    print(f"{len(records)} certified record times along {tuple(l)}")
    return EXIT_OK


def cmd_probe(cfg: RunConfig, stage: Path, args) -> int:
    e = cfg.experiment
    metrics = tuple(sorted(set(e.metrics) | {"escaped"}))
    result = experiments.run_ensemble(replace(e, metrics=metrics))
    flags = [s.escaped for s in result.summaries]
    report = {"radius": e.probe_radius, "burn_in": e.probe_burn_in, "n_trajectories": e.n_trajectories}
    if all(f is not None for f in flags):
        p = float(np.mean(flags))
        report["escape_fraction"] = p
        report["escape_se"] = float(np.sqrt(p * (1 - p) / len(flags)))
    else:
        report["escape_fraction"] = None
        report["escape_se"] = None
    finals = np.array([sum(s.final_state) for s in result.summaries])
    report["fraction_below_quarter_horizon"] = float(np.mean(finals < 0.25 * e.horizon)) if e.horizon else None
    v = cfg.lyapunov_v
    if v is None:
        v = green_stability_vector(*region_drifts(e.world.model, Action.GREEN))
    report["lyapunov"] = None if v is None else experiments.lyapunov_probe(e.world.model, v, cfg.lyapunov_grid_max).to_dict()
    report["lyapunov_v"] = None if v is None else [float(v[0]), float(v[1])]
    out = f"{_stem(cfg)}-probe.json"
    io.write_json(stage / out, report)
    _finish(stage, "probe", cfg, [out], trajectory_seeds=[s.seed for s in result.summaries])
    print(f"escape fraction: {report['escape_fraction']}")
    return EXIT_OK


HANDLERS = {
    "check": cmd_check,
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "curve": cmd_curve,
    "renewal": cmd_renewal,
    "probe": cmd_probe,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        p.add_argument("--out", default="llp-out", help="output directory (default: llp-out)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="dotted override, value parsed as JSON when possible")
        if name == "check":
            p.add_argument("--json", action="store_true", help="print the report as JSON")
        if name == "renewal":
            p.add_argument("--trajectory", default=None, help="trajectory CSV written by `llp simulate`")
    return parser


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
        with io.staged_output(args.out) as stage:
            return HANDLERS[args.command](cfg, stage, args)
    except EnvironmentOverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except (LLPError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> int:
    return run_cli()


if __name__ == "__main__":
    sys.exit(main())
