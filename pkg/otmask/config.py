"""
Application configuration for otmask.

Contains the global runtime settings and the pipeline defaults.
Per-run settings live in ``PipelineConfig`` (otmask.services.pseudomask),
``SinkhornConfig`` (otmask.transport.sinkhorn) and ``LossConfig``
(otmask.services.losses); their defaults are read from the constants below.

The ``DEBUG`` flag defaults to False and can be activated at startup
with the ``--debug-on`` command-line option.

Debug output is written to both stdout and a rotating log file at
``~/.otmask/logs/otmask.log``.
"""

import json
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict


# ==============================================================================
# VERSION
# ==============================================================================


VERSION: str = "1.0.0"

# Schema version of the JSON reports (diagnostics, scores, comparisons).
# Bump when a key is renamed or removed; see docs/REPORT_SCHEMAS.md.
ARTIFACT_VERSION: int = 1


# ==============================================================================
# PIPELINE DEFAULTS
# ==============================================================================

# Balance weight of the boundary term in the edge length d^s + beta * d^b.
BETA: float = 0.1

# Entropic regularisation coefficient of the Sinkhorn solver.  Applied to
# costs that are max-normalised to [0, 1] unless normalisation is switched off.
LAMBDA: float = 0.1

# Number of Sinkhorn iterations.
SINKHORN_ITERATIONS: int = 80

# Supply scheme: equal_division | nearest_gt | nearest_centroid.
SUPPLY_SCHEME: str = "nearest_centroid"

# Centroid refinement rounds of the nearest_centroid scheme.
CENTROID_ITERATIONS: int = 1

# How the high- and low-level boundary maps are merged:
# max | high_only | low_only.
BOUNDARY_COMBINE: str = "max"

# Floor added to every edge weight so geodesic costs grow with hop count.
EDGE_FLOOR: float = 1e-6

# Below this lambda the plain Sinkhorn path underflows; callers should
# switch to the log-domain path.
LOG_DOMAIN_HINT_LAMBDA: float = 0.01

# Largest m * n accepted by the exact transport oracle.
EXACT_MAX_CELLS: int = 10_000


# ==============================================================================
# MAP VALIDATION
# ==============================================================================

# Per-pixel tolerance on the probability sum of a semantic map.
PROB_SUM_TOLERANCE: float = 1e-6


# ==============================================================================
# LOSS DEFAULTS
# ==============================================================================

# Lower clamp for every log argument inside the losses.
PROB_FLOOR: float = 1e-12

ALPHA1: float = 3.0
ALPHA2: float = 3.0

# LAB similarity threshold and kernel scale of the local affinity loss.
TAU: float = 0.3
THETA1: float = 2.0

# Scale of the spanning-tree RGB similarity.
THETA2: float = 0.02


# ==============================================================================
# CLI / BATCH
# ==============================================================================

# Environment variable read when ``--jobs`` is not given.
JOBS_ENV: str = "OTMASK_JOBS"

# Number of coordinates sampled by the ``losses`` gradient check.
GRADIENT_CHECK_COORDS: int = 64

# Central-difference step of the gradient check.
GRADIENT_CHECK_STEP: float = 1e-6

# Keys accepted in a ``key = value`` config file (flags win over the file).
CONFIG_FILE_KEYS = frozenset({
    "beta",
    "lambda",
    "sinkhorn_iters",
    "scheme",
    "centroid_iters",
    "boundary_combine",
    "cost_from_centroids",
    "log_domain",
    "normalize_cost",
    "edge_floor",
    "solver",
    "jobs",
    "alpha1",
    "alpha2",
    "tau",
    "theta1",
    "theta2",
})


# ==============================================================================
# DIRECTORY STRUCTURE
# ==============================================================================

# Base data directory.  Only logs live here; all run outputs go where the
# caller points ``--out``.
DATA_DIR: Path = Path.home() / ".otmask"

# Log directory for debug log files.
LOG_DIR: Path = DATA_DIR / "logs"

# Log file path (rotating: max 5 MB per file, 3 backups = 20 MB total).
LOG_FILE: Path = LOG_DIR / "otmask.log"


def set_log_file_for_run(run_name: str) -> None:
    """Set the log file name based on the CLI command being run.

    Transforms ``generate`` into ``~/.otmask/logs/generate_otmask.log``.

    Must be called **before** the first ``debug_print()`` call so the
    lazy logger initialisation picks up the correct path.
    """
    global LOG_FILE
    safe_name = run_name.replace("/", "_").replace(" ", "_")
    LOG_FILE = LOG_DIR / f"{safe_name}_otmask.log"

# Maximum size per log file in bytes (5 MB).
LOG_MAX_BYTES: int = 5 * 1024 * 1024

# Number of rotated backup files to keep.
LOG_BACKUP_COUNT: int = 3


# ==============================================================================
# DEBUG
# ==============================================================================

DEBUG: bool = False

# Internal file logger, initialised lazily on first debug_print() call.
_file_logger: logging.Logger | None = None


def _init_file_logger() -> logging.Logger:
    """Create and configure the rotating file logger (called once)."""
    LOG_DIR.mkdir(parents=True, exist_ok=True)

    logger = logging.getLogger("otmask.debug")
    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    handler = RotatingFileHandler(
        LOG_FILE,
        maxBytes=LOG_MAX_BYTES,
        backupCount=LOG_BACKUP_COUNT,
        encoding="utf-8",
    )
    handler.setFormatter(
        logging.Formatter("%(asctime)s  %(message)s", datefmt="%Y-%m-%d %H:%M:%S")
    )
    logger.addHandler(handler)
    return logger


def _caller_module() -> str:
    """Return a short module label for the calling code.

    Walks two frames up (debug_print -> caller) and extracts the
    module ``__name__``.  The common ``otmask.`` prefix is stripped,
    e.g. ``transport.sinkhorn`` instead of ``otmask.transport.sinkhorn``.
    """
    frame = sys._getframe(2)  # 0=_caller_module, 1=debug_print, 2=actual caller
    module = frame.f_globals.get("__name__", "<unknown>")
    if module.startswith("otmask."):
        module = module[len("otmask."):]
    return module


def debug_print(msg: str) -> None:
    """Print a debug message when ``DEBUG`` is enabled.

    Output goes to both stdout and the rotating log file.
    The calling module name is automatically included, e.g.::

        DEBUG [transport.sinkhorn]: T=80 lambda=0.1 marginal_error=3.2e-07
    """
    global _file_logger

    if not DEBUG:
        return

    module = _caller_module()
    formatted = f"DEBUG [{module}]: {msg}"

    print(formatted)

    if _file_logger is None:
        _file_logger = _init_file_logger()
    _file_logger.debug(formatted)


def pp(obj: Any, indent: int = 2) -> str:
    """Pretty-format a dict, list, or other object for debug output.

    Use inside f-strings::

        debug_print(f"supply={pp(supply.as_dict())}")

    Dicts/lists get indented JSON; everything else falls back to repr().
    """
    if isinstance(obj, (dict, list)):
        try:
            return json.dumps(obj, indent=indent, default=str, ensure_ascii=False)
        except (TypeError, ValueError):
            return repr(obj)
    return repr(obj)


def debug_data(label: str, obj: Any) -> None:
    """Print a labelled data structure with pretty indentation.

    Combines a header line with pretty-printed data below it::

        debug_data("diagnostics", diagnostics.to_dict())
    """
    if not DEBUG:
        return
    formatted = pp(obj)
    if '\n' not in formatted:
        debug_print(f"{label}: {formatted}")
    else:
        indented = '\n'.join(f"  {line}" for line in formatted.splitlines())
        debug_print(f"{label} ↓\n{indented}")


# ==============================================================================
# CONFIG FILE
# ==============================================================================


def load_config_file(path: Path) -> Dict[str, str]:
    """Parse a plain-text ``key = value`` config file.

    Blank lines and ``#`` comments are ignored.  Keys may be written with
    dashes or underscores (``sinkhorn-iters`` == ``sinkhorn_iters``).

    Args:
        path: Config file location.

    Returns:
        ``{key: raw_value}`` with normalised keys.

    Raises:
        ValidationError: Unreadable file, malformed line or unknown key.
    """
    from otmask.core.errors import ValidationError

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc

    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_FILE_KEYS:
            raise ValidationError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value

    debug_print(f"Config file {path}: {pp(values)}")
    return values
