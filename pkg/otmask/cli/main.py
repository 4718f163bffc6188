"""
Command-line entry point of otmask.

Usage:
    otmask generate SCENE [SCENE ...] --out DIR [pipeline flags] [--jobs N]
    otmask evaluate --pred MASK --gt MASK --out REPORT
    otmask compare SCENE [SCENE ...] --out DIR [pipeline flags] [--jobs N]
    otmask synth --spec FILE --seed N --out DIR [--count K]
    otmask losses SCENE --out REPORT [--mask MASK] [--check-coords N] [--seed N]
    otmask sweep SCENE [SCENE ...] --param NAME --values V1,V2,... --out REPORT

Common options:
    --debug-on       Enable verbose debug logging
    --config FILE    ``key = value`` defaults; explicit flags win

Exit status: 0 success, 1 bad input, 2 internal invariant broken,
130 interrupted.
"""

import argparse
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from otmask import config
from otmask.cli import exitcodes
from otmask.cli.commands import (
    SceneTask,
    compare_scene,
    compare_summary,
    generate_scene,
    merge_timings,
    run_tasks,
    sweep_scene,
    sweep_tasks,
)
from otmask.cli.report import RunManifest, write_manifest, write_report
from otmask.core.errors import InvariantError, ValidationError
from otmask.graph.grid_graph import BOUNDARY_COMBINE_MODES
from otmask.maps.codecs import read_mask
from otmask.maps.scenes import load_scene, write_scene
from otmask.maps.synth import load_scene_spec, synth_scene
from otmask.services.losses import (
    LossConfig,
    build_mst,
    combine_semantic_terms,
    finite_difference_check,
    loss_evaluators,
    rgb_tree_loss,
    sample_coords,
)
from otmask.services.metrics import mask_miou, panoptic_quality
from otmask.services.pseudomask import SOLVERS, PipelineConfig
from otmask.services.supply import SCHEMES

# Largest pixel count for which ``losses`` also runs the pairwise tree filter.
NAIVE_TREE_MAX_PIXELS = 400

SUMMARY_FILE = "summary.json"


# ==============================================================================
# VALUE PARSING
# ==============================================================================


def _bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("true", "1", "yes", "on"):
        return True
    if value in ("false", "0", "no", "off"):
        return False
    raise ValidationError(f"expected a boolean, got {raw!r}")


# PipelineConfig field -> (config file key / sweep name, converter)
PIPELINE_KEYS: Dict[str, tuple] = {
    "beta": ("beta", float),
    "lam": ("lambda", float),
    "sinkhorn_iterations": ("sinkhorn_iters", int),
    "supply_scheme": ("scheme", str),
    "centroid_iterations": ("centroid_iters", int),
    "boundary_combine": ("boundary_combine", str),
    "cost_from_centroids": ("cost_from_centroids", _bool),
    "log_domain": ("log_domain", _bool),
    "normalize_cost": ("normalize_cost", _bool),
    "edge_floor": ("edge_floor", float),
    "solver": ("solver", str),
}

LOSS_KEYS: Dict[str, tuple] = {name: (name, float) for name in ("alpha1", "alpha2", "tau", "theta1", "theta2")}

# Parameters ``sweep`` may vary, by their flag spelling.
SWEEP_PARAMS: Dict[str, str] = {
    "beta": "beta",
    "lambda": "lam",
    "sinkhorn-iters": "sinkhorn_iterations",
    "centroid-iters": "centroid_iterations",
    "scheme": "supply_scheme",
    "boundary-combine": "boundary_combine",
}


def _convert(key: str, raw: str, convert: Callable[[str], Any]) -> Any:
    try:
        return convert(raw)
    except ValueError as exc:
        raise ValidationError(f"bad value for {key}: {raw!r}") from exc


def _resolve(args: argparse.Namespace, file_values: Dict[str, str], keys: Dict[str, tuple]) -> Dict[str, Any]:
    """Explicit flags over config-file values; unset fields keep their defaults."""
    resolved: Dict[str, Any] = {}
    for field_name, (key, convert) in keys.items():
        flag = getattr(args, field_name, None)
        if flag is not None:
            resolved[field_name] = flag
        elif key in file_values:
            resolved[field_name] = _convert(key, file_values[key], convert)
    return resolved


def _jobs(args: argparse.Namespace, file_values: Dict[str, str]) -> int:
    if args.jobs is not None:
        jobs = args.jobs
    elif "jobs" in file_values:
        jobs = _convert("jobs", file_values["jobs"], int)
    elif os.environ.get(config.JOBS_ENV):
        jobs = _convert(config.JOBS_ENV, os.environ[config.JOBS_ENV], int)
    else:
        jobs = 1
    if jobs < 1:
        raise ValidationError(f"--jobs must be >= 1, got {jobs}")
    return jobs


# ==============================================================================
# PARSER
# ==============================================================================


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit status 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"ERROR: {message}", file=sys.stderr)
        raise SystemExit(exitcodes.VALIDATION)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--debug-on", action="store_true", help="Enable verbose debug logging")
    common.add_argument("--config", type=Path, help="key = value file of defaults (flags win)")

    pipeline = argparse.ArgumentParser(add_help=False)
    group = pipeline.add_argument_group("pipeline")
    group.add_argument("--beta", type=float, help=f"boundary weight (default {config.BETA})")
    group.add_argument("--lambda", dest="lam", type=float, help=f"entropic regularisation (default {config.LAMBDA})")
    group.add_argument("--sinkhorn-iters", dest="sinkhorn_iterations", type=int,
                       help=f"Sinkhorn rounds (default {config.SINKHORN_ITERATIONS})")
    group.add_argument("--scheme", dest="supply_scheme", choices=SCHEMES,
                       help=f"supply scheme (default {config.SUPPLY_SCHEME})")
    group.add_argument("--centroid-iters", dest="centroid_iterations", type=int,
                       help=f"centroid refinement rounds (default {config.CENTROID_ITERATIONS})")
    group.add_argument("--boundary-combine", dest="boundary_combine", choices=BOUNDARY_COMBINE_MODES,
                       help=f"boundary merge mode (default {config.BOUNDARY_COMBINE})")
    group.add_argument("--cost-from-centroids", action="store_const", const=True,
                       help="transport costs from the refined centroids")
    group.add_argument("--log-domain", action="store_const", const=True, help="log-domain Sinkhorn")
    group.add_argument("--no-normalize-cost", dest="normalize_cost", action="store_const", const=False,
                       help="keep raw geodesic costs")
    group.add_argument("--edge-floor", type=float, help=f"constant added to each edge (default {config.EDGE_FLOOR})")
    group.add_argument("--solver", choices=SOLVERS, help="transport solver (default sinkhorn)")
    group.add_argument("--boundary-low", type=Path, help="low-level boundary map used for every scene")
    group.add_argument("--jobs", type=int, help=f"parallel scenes (default ${config.JOBS_ENV} or 1)")

    losses = argparse.ArgumentParser(add_help=False)
    group = losses.add_argument_group("losses")
    for name in LOSS_KEYS:
        group.add_argument(f"--{name}", type=float, help=f"default {getattr(config, name.upper())}")

    parser = _Parser(prog="otmask", description="Point-supervised pseudo-masks by optimal transport.")
    parser.add_argument("--version", action="version", version=f"otmask {config.VERSION}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common, pipeline], help="pseudo-masks for scene directories")
    p.add_argument("scenes", nargs="+", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("evaluate", parents=[common], help="panoptic quality of a mask")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("compare", parents=[common, pipeline], help="transport vs minimum-cost masks")
    p.add_argument("scenes", nargs="+", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("synth", parents=[common], help="synthetic scene fixtures")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1, help="number of scenes (seeds seed..seed+count-1)")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("losses", parents=[common, losses], help="loss values and gradient check")
    p.add_argument("scene", type=Path)
    p.add_argument("--mask", type=Path, help="pseudo-mask for the boundary loss (default: scene gt mask)")
    p.add_argument("--check-coords", type=int, default=config.GRADIENT_CHECK_COORDS)
    p.add_argument("--step", type=float, default=config.GRADIENT_CHECK_STEP)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("sweep", parents=[common, pipeline], help="quality over one parameter grid")
    p.add_argument("scenes", nargs="+", type=Path)
    p.add_argument("--param", choices=sorted(SWEEP_PARAMS), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", type=Path, required=True)
    return parser


# ==============================================================================
# COMMANDS
# ==============================================================================


def _pipeline_config(args: argparse.Namespace, file_values: Dict[str, str]) -> PipelineConfig:
    return PipelineConfig(**_resolve(args, file_values, PIPELINE_KEYS)).validate()


def _scene_tasks(
    args: argparse.Namespace,
    cfg: PipelineConfig,
    out_dir: Optional[Path],
    manifest: Optional[RunManifest],
) -> List[SceneTask]:
    names = [s.resolve().name for s in args.scenes]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates and out_dir is not None:
        raise ValidationError(f"scene directories share names: {', '.join(duplicates)}")
    boundary_low = str(args.boundary_low) if args.boundary_low else None
    return [
        SceneTask(
            scene_dir=str(scene),
            out_dir=None if out_dir is None else str(out_dir / name),
            config=cfg,
            boundary_low=boundary_low,
            manifest=manifest,
        )
        for scene, name in zip(args.scenes, names)
    ]


def _batch_manifest(command: str, args: argparse.Namespace, cfg: PipelineConfig, **extra: Any) -> RunManifest:
    settings = {"pipeline": cfg.as_dict(), "boundary_low": str(args.boundary_low) if args.boundary_low else None}
    settings.update(extra)
    return RunManifest(command, settings, [str(s) for s in args.scenes])


def cmd_generate(args: argparse.Namespace, file_values: Dict[str, str]) -> int:
    cfg = _pipeline_config(args, file_values)
    jobs = _jobs(args, file_values)
    manifest = _batch_manifest("generate", args, cfg)
    results = run_tasks(generate_scene, _scene_tasks(args, cfg, args.out, manifest), jobs)
    manifest.timings = merge_timings(results)
    write_manifest(manifest, args.out)
    for r in results:
        quality = f"  miou={r['miou']:.4f}  pq={r['pq']:.4f}" if "miou" in r else ""
        print(f"{r['scene']}: written{quality}")
    return exitcodes.OK


def cmd_evaluate(args: argparse.Namespace, file_values: Dict[str, str]) -> int:
    pred = read_mask(args.pred)
    gt = read_mask(args.gt)
    score = panoptic_quality(pred, gt)
    results = dict(score.to_dict(), miou=mask_miou(pred, gt))
    write_report(results, args.out, RunManifest("evaluate", inputs=[str(args.pred), str(args.gt)]))
    print(f"PQ={score.pq:.4f}  SQ={score.sq:.4f}  RQ={score.rq:.4f}")
    return exitcodes.OK


def cmd_compare(args: argparse.Namespace, file_values: Dict[str, str]) -> int:
    cfg = _pipeline_config(args, file_values)
    jobs = _jobs(args, file_values)
    manifest = _batch_manifest("compare", args, cfg)
    results = run_tasks(compare_scene, _scene_tasks(args, cfg, args.out, manifest), jobs)
    manifest.timings = merge_timings(results)
    summary = compare_summary(results)
    scenes = [{k: v for k, v in r.items() if k != "timings"} for r in results]
    write_report({"summary": summary, "scenes": scenes}, args.out / SUMMARY_FILE, manifest)
    write_manifest(manifest, args.out)
    if summary["scored_scenes"]:
        print(
            f"mean mIoU  OT={summary['mean_miou_ot']:.4f}  MC={summary['mean_miou_mc']:.4f}  "
            f"(OT wins {summary['ot_wins']}, ties {summary['ties']} of {summary['scored_scenes']})"
        )
    else:
        print(f"{summary['scenes']} scenes compared (no ground truth, no scores)")
    return exitcodes.OK


def cmd_synth(args: argparse.Namespace, file_values: Dict[str, str]) -> int:
    if args.count < 1:
        raise ValidationError(f"--count must be >= 1, got {args.count}")
    spec = load_scene_spec(args.spec)
    for k in range(args.count):
        out_dir = args.out if args.count == 1 else args.out / f"scene_{k:03d}"
        write_scene(synth_scene(spec, args.seed + k), out_dir)
    manifest = RunManifest(
        "synth",
        settings={"scene": spec.to_text(), "count": args.count},
        inputs=[str(args.spec)],
        seed=args.seed,
    )
    write_manifest(manifest, args.out)
    print(f"{args.count} scene(s) written to {args.out}")
    return exitcodes.OK


def cmd_losses(args: argparse.Namespace, file_values: Dict[str, str]) -> int:
    loss_cfg = LossConfig(**_resolve(args, file_values, LOSS_KEYS)).validate()
    if args.check_coords < 0:
        raise ValidationError(f"--check-coords must be >= 0, got {args.check_coords}")
    scene = load_scene(args.scene)
    if args.mask is not None:
        mask = read_mask(args.mask)
    elif scene.gt_mask is not None:
        mask = scene.gt_mask
    else:
        raise ValidationError(f"{args.scene}: no gt mask in the scene; pass --mask")

    tree = build_mst(scene.image) if scene.image is not None else None
    evaluators = loss_evaluators(
        scene.semantic, scene.points, scene.boundary_high, mask,
        image=scene.image, tree=tree, config=loss_cfg,
    )
    report: Dict[str, Any] = {"losses": {}}
    for name, (evaluator, values) in sorted(evaluators.items()):
        value, _ = evaluator(values)
        coords = sample_coords(values.size, args.check_coords, args.seed)
        report["losses"][name] = {
            "value": value,
            "checked_coords": len(coords),
            "max_relative_error": finite_difference_check(evaluator, values, args.step, coords),
        }
    if tree is not None:
        terms = report["losses"]
        report["semantic_total"] = combine_semantic_terms(
            terms["partial"]["value"], terms["lab"]["value"], terms["rgb"]["value"], loss_cfg,
        )
        if tree.n <= NAIVE_TREE_MAX_PIXELS:
            fast, fast_grad = rgb_tree_loss(scene.semantic, tree, loss_cfg)
            naive, naive_grad = rgb_tree_loss(scene.semantic, tree, loss_cfg, naive=True)
            report["rgb_naive_gap"] = {
                "value": abs(fast - naive),
                "gradient": float(np.max(np.abs(fast_grad - naive_grad))),
            }

    manifest = RunManifest(
        "losses",
        settings={"losses": asdict(loss_cfg), "check_coords": args.check_coords, "step": args.step,
                  "mask": str(args.mask) if args.mask else None},
        inputs=[str(args.scene)],
        seed=args.seed,
    )
    write_report(report, args.out, manifest)
    for name, entry in report["losses"].items():
        print(f"{name:<9} {entry['value']:.6g}  (grad check {entry['max_relative_error']:.2e})")
    return exitcodes.OK


def _sweep_values(param: str, raw: str) -> List[Any]:
    field_name = SWEEP_PARAMS[param]
    convert = PIPELINE_KEYS[field_name][1]
    values = [v.strip() for v in raw.split(",") if v.strip()]
    if not values:
        raise ValidationError("--values is empty")
    return [_convert(param, v, convert) for v in values]


def cmd_sweep(args: argparse.Namespace, file_values: Dict[str, str]) -> int:
    cfg = _pipeline_config(args, file_values)
    jobs = _jobs(args, file_values)
    field_name = SWEEP_PARAMS[args.param]
    values = _sweep_values(args.param, args.values)
    manifest = _batch_manifest("sweep", args, cfg, param=args.param, values=values)
    base = _scene_tasks(args, cfg, None, None)

    rows: List[Dict[str, Any]] = []
    timings: Dict[str, float] = {}
    for value in values:
        results = run_tasks(sweep_scene, sweep_tasks(base, field_name, value), jobs)
        for stage, seconds in merge_timings(results).items():
            timings[stage] = timings.get(stage, 0.0) + seconds
        rows.append({
            "value": value,
            "mean_miou": float(np.mean([r["miou"] for r in results])),
            "mean_pq": float(np.mean([r["pq"] for r in results])),
            "scenes": [{"scene": r["scene"], "miou": r["miou"], "pq": r["pq"]} for r in results],
        })
        print(f"{args.param}={value}: mIoU={rows[-1]['mean_miou']:.4f}  PQ={rows[-1]['mean_pq']:.4f}")
    config.debug_print(f"sweep timings: {config.pp(timings)}")
    write_report({"param": args.param, "rows": rows}, args.out, manifest)
    return exitcodes.OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, Dict[str, str]], int]] = {
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "synth": cmd_synth,
    "losses": cmd_losses,
    "sweep": cmd_sweep,
}


# ==============================================================================
# ENTRY POINT
# ==============================================================================


def run(argv: Sequence[str]) -> int:
    """Parse *argv*, run the subcommand and return the exit status."""
    try:
        args = build_parser().parse_args(list(argv))
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else exitcodes.VALIDATION

    if args.debug_on:
        config.DEBUG = True
    config.set_log_file_for_run(args.command)
    config.debug_print(f"otmask {config.VERSION} {args.command}: {vars(args)}")

    try:
        file_values = config.load_config_file(args.config) if args.config else {}
        return COMMANDS[args.command](args, file_values)
    except ValidationError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return exitcodes.VALIDATION
    except InvariantError as exc:
        print(f"INTERNAL ERROR: {exc}", file=sys.stderr)
        return exitcodes.INTERNAL
    except OSError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return exitcodes.VALIDATION
    except KeyboardInterrupt:
        print("Interrupted", file=sys.stderr)
        return exitcodes.INTERRUPTED


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
