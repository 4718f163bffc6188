"""
Per-scene work units of the batch subcommands.

Each unit is a top-level function taking one picklable task, so the
same code runs inline or inside a process pool.  Units write only into
their own output directory, and results come back in submission order,
so the worker count never changes any output byte.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from otmask.cli.report import RunManifest, write_report
from otmask.config import debug_print
from otmask.core.errors import ValidationError
from otmask.core.models import PseudoMask
from otmask.maps.codecs import write_mask
from otmask.maps.scenes import load_scene
from otmask.services.metrics import mask_miou, panoptic_quality
from otmask.services.pseudomask import PipelineConfig, PseudoMaskGenerator, minimum_cost_baseline

PSEUDO_MASK_FILE = "pseudo_mask.pgm"
DIAGNOSTICS_FILE = "diagnostics.json"
OT_MASK_FILE = "ot_mask.pgm"
MC_MASK_FILE = "mc_mask.pgm"
COMPARE_FILE = "compare.json"


@dataclass(frozen=True)
class SceneTask:
    """One scene of a batch run.

    Attributes:
        scene_dir:     Input scene directory.
        out_dir:       Per-scene output directory (None: write nothing).
        config:        Pipeline settings.
        boundary_low:  Low-level boundary file overriding the scene's own.
        manifest:      Run manifest embedded into per-scene reports.
    """

    scene_dir: str
    out_dir: Optional[str]
    config: PipelineConfig
    boundary_low: Optional[str] = None
    manifest: Optional[RunManifest] = None


def _scores(pred: PseudoMask, gt: Optional[PseudoMask]) -> Dict[str, Any]:
    scores: Dict[str, Any] = {"pixels": {str(k): v for k, v in pred.pixel_counts().items()}}
    if gt is not None:
        scores["miou"] = mask_miou(pred, gt)
        scores["pq"] = panoptic_quality(pred, gt).pq
    return scores


def _output_dir(path: str) -> Path:
    """Create a per-scene output directory."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create {out}: {exc}") from exc
    return out


def generate_scene(task: SceneTask) -> Dict[str, Any]:
    """Pseudo-mask and diagnostics of one scene."""
    scene = load_scene(task.scene_dir, task.boundary_low)
    result = PseudoMaskGenerator(task.config).generate(
        scene.semantic, scene.boundary_high, scene.boundary_low, scene.points,
    )
    if task.out_dir is not None:
        out = _output_dir(task.out_dir)
        write_mask(result.mask, out / PSEUDO_MASK_FILE)
        write_report({"scene": scene.name, **result.diagnostics}, out / DIAGNOSTICS_FILE, task.manifest)
    summary = {"scene": scene.name, "timings": result.timings}
    if scene.gt_mask is not None:
        summary.update(_scores(result.mask, scene.gt_mask))
    return summary


def compare_scene(task: SceneTask) -> Dict[str, Any]:
    """Transport and minimum-cost masks of one scene, side by side."""
    scene = load_scene(task.scene_dir, task.boundary_low)
    generator = PseudoMaskGenerator(task.config)
    result = generator.generate(scene.semantic, scene.boundary_high, scene.boundary_low, scene.points)
    started = time.perf_counter()
    cost = result.cost
    if task.config.cost_from_centroids:
        cost = generator.cost_matrix(scene.semantic, scene.boundary_high, scene.boundary_low, scene.points)
    mc_mask = minimum_cost_baseline(cost, scene.points, *scene.semantic.shape)
    timings = dict(result.timings, baseline=time.perf_counter() - started)

    report: Dict[str, Any] = {
        "scene": scene.name,
        "ot": _scores(result.mask, scene.gt_mask),
        "mc": _scores(mc_mask, scene.gt_mask),
    }
    if scene.gt_mask is not None:
        report["gt"] = {"pixels": {str(k): v for k, v in scene.gt_mask.pixel_counts().items()}}
        report["miou_delta"] = report["ot"]["miou"] - report["mc"]["miou"]
    if task.out_dir is not None:
        out = _output_dir(task.out_dir)
        write_mask(result.mask, out / OT_MASK_FILE)
        write_mask(mc_mask, out / MC_MASK_FILE)
        write_report(report, out / COMPARE_FILE, task.manifest)
    return dict(report, timings=timings)


def sweep_scene(task: SceneTask) -> Dict[str, Any]:
    """Quality of one scene under one setting (gt mask required)."""
    scene = load_scene(task.scene_dir, task.boundary_low, require_gt=True)
    result = PseudoMaskGenerator(task.config).generate(
        scene.semantic, scene.boundary_high, scene.boundary_low, scene.points,
    )
    return {"scene": scene.name, "timings": result.timings, **_scores(result.mask, scene.gt_mask)}


def run_tasks(work: Callable[[SceneTask], Dict[str, Any]], tasks: Sequence[SceneTask], jobs: int) -> List[Dict[str, Any]]:
    """Run *work* over *tasks*, results in task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [work(t) for t in tasks]
    debug_print(f"running {len(tasks)} scenes on {jobs} workers")
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(work, tasks))


def merge_timings(results: Sequence[Dict[str, Any]]) -> Dict[str, float]:
    """Stage timings summed over scenes."""
    total: Dict[str, float] = {}
    for r in results:
        for stage, seconds in r.get("timings", {}).items():
            total[stage] = total.get(stage, 0.0) + seconds
    return total


def compare_summary(results: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    """Suite-level OT vs MC figures over the scenes that carry a gt mask."""
    scored = [r for r in results if "miou_delta" in r]
    summary: Dict[str, Any] = {"scenes": len(results), "scored_scenes": len(scored)}
    if scored:
        ot = np.array([r["ot"]["miou"] for r in scored])
        mc = np.array([r["mc"]["miou"] for r in scored])
        summary.update({
            "mean_miou_ot": float(ot.mean()),
            "mean_miou_mc": float(mc.mean()),
            "mean_pq_ot": float(np.mean([r["ot"]["pq"] for r in scored])),
            "mean_pq_mc": float(np.mean([r["mc"]["pq"] for r in scored])),
            "ot_wins": int(np.sum(ot > mc)),
            "ties": int(np.sum(ot == mc)),
            "ot_win_rate": float(np.mean(ot > mc)),
        })
    return summary


def sweep_tasks(base: Sequence[SceneTask], param: str, value: Any) -> List[SceneTask]:
    """*base* with one pipeline field replaced."""
    return [replace(t, config=replace(t.config, **{param: value}).validate()) for t in base]
