"""
Run manifests and JSON reports.

Reports are written with sorted keys and floats rounded to 9 significant
digits so two runs with the same manifest produce byte-identical files.
Each report embeds the manifest block of the run that produced it
(everything except wall-clock timings) plus the block's sha256 digest;
the full manifest, timings included, goes to ``manifest.json``.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from otmask.config import ARTIFACT_VERSION, VERSION, debug_print
from otmask.core.errors import ValidationError

MANIFEST_FILE = "manifest.json"

SIGNIFICANT_DIGITS = 9


@dataclass
class RunManifest:
    """What produced a set of outputs.

    Attributes:
        command:  Subcommand name.
        settings: Resolved settings (pipeline and/or loss config, sweep
                  parameter, check options).
        inputs:   Input paths as given on the command line.
        seed:     Seed of the run, if any.
        timings:  Seconds per stage (kept out of the reports).
    """

    command: str
    settings: Dict[str, Any] = field(default_factory=dict)
    inputs: List[str] = field(default_factory=list)
    seed: Optional[int] = None
    timings: Dict[str, float] = field(default_factory=dict)

    def block(self) -> Dict[str, Any]:
        """Manifest without timings, as embedded in every report."""
        return normalize({
            "artifact_version": ARTIFACT_VERSION,
            "version": VERSION,
            "command": self.command,
            "settings": self.settings,
            "inputs": list(self.inputs),
            "seed": self.seed,
        })

    def digest(self) -> str:
        return hashlib.sha256(_dumps(self.block()).encode("utf-8")).hexdigest()

    def reference(self) -> Dict[str, Any]:
        """Embedded block plus its digest."""
        ref = self.block()
        ref["digest"] = self.digest()
        return ref

    def to_dict(self) -> Dict[str, Any]:
        full = self.reference()
        full["timings"] = normalize(self.timings)
        return full


def normalize(value: Any) -> Any:
    """JSON-ready copy: numpy scalars unwrapped, floats rounded, NaN/inf -> None."""
    if isinstance(value, dict):
        return {str(k): normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [normalize(v) for v in value]
    if isinstance(value, np.ndarray):
        return normalize(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{SIGNIFICANT_DIGITS}g}")
    if value is None or isinstance(value, str):
        return value
    if isinstance(value, Path):
        return str(value)
    raise ValidationError(f"cannot serialise {type(value).__name__} into a report")


def _dumps(value: Any) -> str:
    return json.dumps(value, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from exc


def write_report(
    results: Dict[str, Any],
    path: Union[str, Path],
    manifest: Optional[RunManifest] = None,
) -> None:
    """Write *results* as stable JSON.

    With a *manifest*, the file is ``{"manifest": ..., "results": ...}``;
    without one it holds the normalised results alone.

    Raises:
        ValidationError: Unserialisable value or unwritable path.
    """
    path = Path(path)
    payload = normalize(results)
    if manifest is not None:
        payload = {"manifest": manifest.reference(), "results": payload}
    _write(path, _dumps(payload))
    debug_print(f"report written to {path}")


def write_manifest(manifest: RunManifest, out_dir: Union[str, Path]) -> Path:
    """Write the full manifest (timings included) into *out_dir*."""
    path = Path(out_dir) / MANIFEST_FILE
    _write(path, _dumps(manifest.to_dict()))
    return path
