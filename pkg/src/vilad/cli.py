"""Single command-line entry point: annotate, distill, plan, sim run,
metrics report, serve, and the end-to-end pipeline demo."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

ENV_PREFIX = "VILAD_"


class DomainError(RuntimeError):
    pass


def _load_config(path):
    if not path:
        return {}
    with open(path) as f:
        return json.load(f)


def _env_overrides():
    out = {}
    for key, val in os.environ.items():
        if key.startswith(ENV_PREFIX) and key != "VLM_API_KEY":
            out[key[len(ENV_PREFIX):].lower()] = val
    return out


def _file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_provenance(out_dir, args, inputs):
    """run.json: the fully resolved config plus content hashes of the inputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = {
        "argv": [a for a in sys.argv[1:]],
        "resolved": {k: v for k, v in sorted(vars(args).items())
                     if not k.startswith("_") and k != "func" and _jsonable(v)},
        "inputs": {str(p): _file_hash(p) for p in inputs if Path(p).is_file()},
    }
    with open(out / "run.json", "w") as f:
        json.dump(record, f, indent=2, sort_keys=True)


def _jsonable(v):
    return isinstance(v, (str, int, float, bool, type(None), list, dict))


def _resolve_scenario(source):
    from . import sim

    path = Path(source)
    if path.is_file():
        return sim.load_scenario(path), [path]
    try:
        return sim.bundled_scenario(str(source)), []
    except FileNotFoundError:
        raise DomainError(f"scenario {source!r} is neither a file nor a bundled name")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_annotate(args):
    from . import annotate

    src = Path(args.source)
    if src.is_dir():
        if args.oracle != "remote":
            raise DomainError("directory sources require --oracle remote")
        oracle = _remote_oracle(args)
        annotate.build_dataset_from_dir(src, oracle, args.n, args.count, args.out,
                                        grid_width=args.grid_width,
                                        grid_height=args.grid_height)
        write_provenance(args.out, args, [])
        return 0
    scenario, inputs = _resolve_scenario(args.source)
    if args.oracle == "mock":
        import numpy as np

        noise = 0.1 if scenario.lighting != 1.0 else 0.0
        oracle = annotate.MockOracle(noise_sigma=noise,
                                     rng=np.random.default_rng(args.seed))
    elif args.oracle == "remote":
        oracle = _remote_oracle(args)
    else:
        raise DomainError(f"unknown oracle {args.oracle!r}")
    annotate.build_dataset(scenario, oracle, args.n, args.count, args.out,
                           grid_width=args.grid_width, grid_height=args.grid_height)
    write_provenance(args.out, args, inputs)
    return 0


def _remote_oracle(args):
    from .annotate import RemoteOracle

    api_key = os.environ.get("VLM_API_KEY", "")
    if not args.endpoint or not api_key:
        raise DomainError("remote oracle needs --endpoint and the VLM_API_KEY env var")
    return RemoteOracle(args.endpoint, args.model, api_key)


def cmd_distill(args):
    from . import distill

    config = distill.ModelConfig(grid_height=args.grid_height,
                                 grid_width=args.grid_width,
                                 n_history=args.n, rank=args.rank, seed=args.seed)
    model = distill.AttentionModel(config)
    records = distill.load_dataset_records(args.dataset, config)
    cfg = distill.DistillConfig(lambda_vlm=args.lam, learning_rate=args.lr,
                                rank=args.rank, steps=args.steps, seed=args.seed)
    model, history = distill.train(model, records, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    distill.save_model(model, out)
    with open(out.with_suffix(".loss.json"), "w") as f:
        json.dump({"loss": history}, f)
    write_provenance(out.parent, args, [Path(args.dataset) / "index.json"])
    print(f"trained {args.steps} steps; final loss {history[-1]:.6f}; wrote {out}")
    return 0


def cmd_plan(args):
    import csv as csv_mod

    from . import costmap, planner, sim

    amap = costmap.load_grid(args.map) if args.map else None
    occupancy = None
    if args.occupancy:
        scenario, _ = _resolve_scenario(args.occupancy)
        occupancy = sim.OccupancyGrid.from_scenario(scenario)
    gx, gy = (float(t) for t in args.goal.split(","))
    cfg = planner.PlannerConfig(**_load_config(args.config).get("planner", {}))
    cam = sim.default_camera()
    cmd, diag = planner.plan(planner.VelocityCommand(0.0, 0.0), (gx, gy),
                             occupancy, amap, cam, cfg)
    writer = csv_mod.writer(sys.stdout)
    writer.writerow(["v", "omega", "goal_cost", "social_cost", "J"])
    for c in diag.candidates:
        writer.writerow([f"{c.cmd.v:.4f}", f"{c.cmd.omega:.4f}",
                         f"{c.goal_cost:.6f}", f"{c.social_cost:.6f}",
                         f"{c.objective:.6f}"])
    print(f"chosen: v={cmd.v:.4f} omega={cmd.omega:.4f}", file=sys.stderr)
    return 0


def cmd_sim_run(args):
    from . import sim

    scenario, inputs = _resolve_scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(args.trials):
        seed = args.seed + k
        result = sim.run_episode(scenario, args.policy, seed=seed)
        stem = f"{scenario.name}_{args.policy.replace(':', '-').replace('/', '-')}_{seed}"
        with open(out / f"{stem}.json", "w") as f:
            json.dump(result.to_dict(), f, indent=2, sort_keys=True)
        result.write_trajectory_csv(out / f"{stem}.csv")
        print(f"trial seed={seed}: {result.status.value}"
              + (f" in {result.time_to_goal:.1f}s" if result.time_to_goal else ""))
    write_provenance(out, args, inputs)
    return 0


def cmd_metrics_report(args):
    from . import metrics

    sets = metrics.load_trial_sets(args.runs)
    if not sets:
        raise DomainError(f"no episode results under {args.runs}")
    references = {}
    refs_dir = Path(args.refs)
    for ts in sets:
        for cand in sorted(refs_dir.glob(f"{ts.scenario_id}*.csv")):
            references[ts.scenario_id] = metrics.ReferenceTrajectory.from_csv(cand)
            break
    rows = metrics.compute_report(sets, references)
    metrics.write_report_csv(rows, args.out)
    print(metrics.format_report_table(rows))
    write_provenance(Path(args.out).parent, args, [])
    return 0


def cmd_serve(args):
    from . import server

    scenario, _ = _resolve_scenario(args.scenario)
    server.serve(scenario, args.policy, args.port, refs_dir=args.refs)
    return 0


def cmd_pipeline_demo(args):
    """annotate (mock) -> distill -> sim run -> metrics report, end to end."""
    from . import annotate, distill, metrics, sim

    import numpy as np

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenario = sim.bundled_scenario("scen1")

    print("[1/4] annotating with the mock oracle")
    dataset_dir = out / "dataset"
    oracle = annotate.MockOracle()
    annotate.build_dataset(scenario, oracle, n_history=2, count=args.count,
                           out_dir=dataset_dir)

    print("[2/4] distilling")
    config = distill.ModelConfig(n_history=2, seed=args.seed)
    model = distill.AttentionModel(config)
    records = distill.load_dataset_records(dataset_dir, config)
    cfg = distill.DistillConfig(steps=args.steps, seed=args.seed)
    model, history = distill.train(model, records, cfg)
    model_path = out / "model.vlad"
    distill.save_model(model, model_path)
    print(f"    final loss {history[-1]:.6f}")

    print("[3/4] running episodes")
    runs = out / "runs"
    runs.mkdir(exist_ok=True)
    import dataclasses

    for policy in (f"vilad:{model_path}", "synth:ground_truth_social", "goal_only"):
        for k in range(args.trials):
            seed = args.seed + k
            result = sim.run_episode(scenario, policy, seed=seed)
            if policy.startswith("vilad:"):
                # label with the file name, not the absolute path, so two runs
                # in different directories produce identical artifacts
                result = dataclasses.replace(result, policy=f"vilad:{model_path.name}")
            stem = f"{scenario.name}_{result.policy.replace(':', '-').replace('/', '-')}_{seed}"
            with open(runs / f"{stem}.json", "w") as f:
                json.dump(result.to_dict(), f, indent=2, sort_keys=True)
            result.write_trajectory_csv(runs / f"{stem}.csv")

    print("[4/4] reporting")
    sets = metrics.load_trial_sets(runs)
    ref = metrics.ReferenceTrajectory.from_csv(sim.bundled_reference("scen1"))
    rows = metrics.compute_report(sets, {"scen1": ref})
    metrics.write_report_csv(rows, out / "table.csv")
    print(metrics.format_report_table(rows))
    write_provenance(out, args, [])
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="vilad", description=__doc__)
    parser.add_argument("--config", help="JSON config file merged under the flags")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="build a frontier-likelihood supervision dataset")
    p.add_argument("--source", required=True, help="scenario JSON / bundled name / image dir")
    p.add_argument("--oracle", choices=["mock", "remote"], default="mock")
    p.add_argument("--n", type=int, default=2, help="history length per record")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--grid-width", type=int, default=32)
    p.add_argument("--grid-height", type=int, default=24)
    p.add_argument("--endpoint", default="")
    p.add_argument("--model", default="gpt-4o")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("distill", help="train the LoRA attention predictor")
    p.add_argument("--dataset", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--grid-width", type=int, default=32)
    p.add_argument("--grid-height", type=int, default=24)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("plan", help="single-shot planner debug")
    p.add_argument("--map", help=".agrid attention map")
    p.add_argument("--occupancy", help="scenario JSON supplying the occupancy grid")
    p.add_argument("--goal", required=True, help="x,y in the robot frame")
    p.add_argument("--config")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("sim", help="simulator commands")
    sim_sub = p.add_subparsers(dest="sim_command", required=True)
    pr = sim_sub.add_parser("run", help="run scenario trials")
    pr.add_argument("--scenario", required=True)
    pr.add_argument("--policy", required=True)
    pr.add_argument("--trials", type=int, default=1)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_sim_run)

    p = sub.add_parser("metrics", help="metric reports")
    met_sub = p.add_subparsers(dest="metrics_command", required=True)
    pr = met_sub.add_parser("report", help="tabulate runs against references")
    pr.add_argument("--runs", required=True)
    pr.add_argument("--refs", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_metrics_report)

    p = sub.add_parser("serve", help="teleop/visualization bridge")
    p.add_argument("--scenario", required=True)
    p.add_argument("--policy", default="teleop")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--refs", default="references")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("pipeline", help="end-to-end flows")
    pipe_sub = p.add_subparsers(dest="pipeline_command", required=True)
    pr = pipe_sub.add_parser("demo", help="annotate -> distill -> run -> report")
    pr.add_argument("--out", required=True)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--count", type=int, default=12)
    pr.add_argument("--steps", type=int, default=200)
    pr.add_argument("--trials", type=int, default=3)
    pr.set_defaults(func=cmd_pipeline_demo)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    for key, val in _env_overrides().items():
        if hasattr(args, key) and isinstance(getattr(args, key), (int, float, str)):
            cast = type(getattr(args, key))
            setattr(args, key, cast(val))
    try:
        return args.func(args)
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
