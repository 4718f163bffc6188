"""
Synthetic scene generator.

Builds oracle-backed fixtures from a small text description::

    size 32 48
    classes 3
    background 0
    noise 0.1
    blur 0
    placement corner
    instance_edge 0
    rect thing 1 4 8 16 20       # kind class x0 y0 x1 y1 (half-open box)
    disc thing 2 30 16 6         # kind class cx cy r

Shapes are painted in declaration order, later ones over earlier ones.
Target ids are assigned from 1: the background first (when declared),
then the shapes.  Every pixel must end up covered.

Outputs (all deterministic for a given description and seed):

- ``image``: clean palette colours, one colour per class.
- ``semantic``: one-hot ground truth, optionally Gaussian-blurred, plus
  uniform noise in ``[0, noise)``, renormalised per pixel.
- ``boundary_high``: 1.0 on outlines between different classes,
  ``instance_edge`` on outlines between same-class targets.
- ``boundary_low``: the luminance-gradient proxy of ``image``.
- ``points``: one per target, placed per ``placement``.
- ``gt_mask``: the painted target grid.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import ndimage

from otmask.config import debug_print
from otmask.core.errors import ValidationError
from otmask.core.models import (
    KINDS,
    STUFF,
    THING,
    BoundaryMap,
    PointAnnotation,
    PseudoMask,
    SemanticMap,
    nearest_member,
)
from otmask.maps.boundary import low_level_boundary

PLACEMENTS = ("uniform", "corner", "center")
SHAPES = ("rect", "disc")


# ---------------------------------------------------------------------------
# Description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeSpec:
    """One painted target.

    Attributes:
        shape:    ``'rect'`` (params x0 y0 x1 y1) or ``'disc'`` (cx cy r).
        kind:     ``'thing'`` or ``'stuff'``.
        class_id: Semantic class.
        params:   Integer geometry parameters.
    """

    shape: str
    kind: str
    class_id: int
    params: Tuple[int, ...]


@dataclass
class SceneSpec:
    """Parsed scene description."""

    height: int
    width: int
    classes: int
    background: Optional[int] = None
    noise: float = 0.0
    blur: float = 0.0
    placement: str = "uniform"
    instance_edge: float = 1.0
    shapes: List[ShapeSpec] = field(default_factory=list)

    def to_text(self) -> str:
        """Render back to the description format."""
        lines = [
            f"size {self.height} {self.width}",
            f"classes {self.classes}",
        ]
        if self.background is not None:
            lines.append(f"background {self.background}")
        lines += [
            f"noise {self.noise!r}",
            f"blur {self.blur!r}",
            f"placement {self.placement}",
            f"instance_edge {self.instance_edge!r}",
        ]
        for s in self.shapes:
            lines.append(" ".join([s.shape, s.kind, str(s.class_id)] + [str(p) for p in s.params]))
        return "\n".join(lines) + "\n"


def parse_scene_spec(text: str, source: str = "<scene>") -> SceneSpec:
    """Parse a scene description.

    Raises:
        ValidationError: Malformed line, unknown keyword/token, missing
                         ``size``/``classes`` or a shape off the canvas.
    """
    values = {}
    shapes: List[ShapeSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        where = f"{source}:{lineno}"
        try:
            if key == "size" and len(args) == 2:
                values["height"], values["width"] = int(args[0]), int(args[1])
            elif key in ("classes", "background") and len(args) == 1:
                values[key] = int(args[0])
            elif key in ("noise", "blur", "instance_edge") and len(args) == 1:
                values[key] = float(args[0])
            elif key == "placement" and len(args) == 1:
                if args[0] not in PLACEMENTS:
                    raise ValidationError(f"{where}: unknown placement {args[0]!r}")
                values["placement"] = args[0]
            elif key in SHAPES:
                expected = 7 if key == "rect" else 6
                if len(args) != expected - 1:
                    raise ValidationError(f"{where}: {key} takes {expected - 1} fields, got {len(args)}")
                if args[0] not in KINDS:
                    raise ValidationError(f"{where}: unknown kind {args[0]!r}")
                shapes.append(ShapeSpec(key, args[0], int(args[1]), tuple(int(a) for a in args[2:])))
            else:
                raise ValidationError(f"{where}: cannot parse {raw.strip()!r}")
        except ValueError:
            raise ValidationError(f"{where}: malformed number in {raw.strip()!r}") from None

    for required in ("height", "classes"):
        if required not in values:
            raise ValidationError(f"{source}: missing '{'size' if required == 'height' else required}' line")
    spec = SceneSpec(shapes=shapes, **values)
    validate_scene_spec(spec)
    return spec


def load_scene_spec(path: Union[str, Path]) -> SceneSpec:
    """Read and parse a scene description file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read scene description {path}: {exc}") from exc
    return parse_scene_spec(text, str(path))


def validate_scene_spec(spec: SceneSpec) -> SceneSpec:
    """Range-check a description; shapes must lie on the canvas."""
    if spec.height < 1 or spec.width < 1:
        raise ValidationError(f"canvas {spec.height}x{spec.width} is empty")
    if spec.classes < 1:
        raise ValidationError(f"classes must be >= 1, got {spec.classes}")
    if spec.background is not None and not 0 <= spec.background < spec.classes:
        raise ValidationError(f"background class {spec.background} out of range")
    if spec.noise < 0 or spec.blur < 0:
        raise ValidationError("noise and blur must be >= 0")
    if not 0.0 <= spec.instance_edge <= 1.0:
        raise ValidationError(f"instance_edge must lie in [0, 1], got {spec.instance_edge}")
    if spec.placement not in PLACEMENTS:
        raise ValidationError(f"unknown placement {spec.placement!r}")
    for k, s in enumerate(spec.shapes):
        if not 0 <= s.class_id < spec.classes:
            raise ValidationError(f"shape {k}: class {s.class_id} out of range")
        if s.shape == "rect":
            x0, y0, x1, y1 = s.params
            if not (0 <= x0 < x1 <= spec.width and 0 <= y0 < y1 <= spec.height):
                raise ValidationError(f"shape {k}: rect {s.params} outside {spec.width}x{spec.height} canvas")
        else:
            cx, cy, r = s.params
            if r < 0 or cx - r < 0 or cy - r < 0 or cx + r >= spec.width or cy + r >= spec.height:
                raise ValidationError(f"shape {k}: disc {s.params} outside {spec.width}x{spec.height} canvas")
    return spec


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

@dataclass
class SyntheticScene:
    """Everything a fixture directory holds."""

    image: np.ndarray
    semantic: SemanticMap
    boundary_high: BoundaryMap
    boundary_low: BoundaryMap
    points: List[PointAnnotation]
    gt_mask: PseudoMask


def class_colour(class_id: int, classes: int) -> np.ndarray:
    """Palette colour of *class_id*; luminance strictly increases with the id."""
    level = (class_id + 1) / (classes + 1)
    return np.array([level, 0.8 * level + 0.1, 1.0 - level])


def _paint(spec: SceneSpec):
    targets = np.zeros((spec.height, spec.width), dtype=np.int64)
    lookup = {}
    next_id = 1
    if spec.background is not None:
        targets[:] = next_id
        lookup[next_id] = (spec.background, STUFF)
        next_id += 1
    yy, xx = np.mgrid[0:spec.height, 0:spec.width]
    for s in spec.shapes:
        if s.shape == "rect":
            x0, y0, x1, y1 = s.params
            region = (xx >= x0) & (xx < x1) & (yy >= y0) & (yy < y1)
        else:
            cx, cy, r = s.params
            region = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        targets[region] = next_id
        lookup[next_id] = (s.class_id, s.kind)
        next_id += 1

    uncovered = targets.reshape(-1) == 0
    if uncovered.any():
        raise ValidationError(f"pixel {int(np.argmax(uncovered))} is covered by no target")
    present = set(np.unique(targets).tolist())
    hidden = sorted(set(lookup) - present)
    if hidden:
        raise ValidationError(f"targets {hidden} are completely painted over")
    return targets, lookup


def target_outlines(targets: np.ndarray) -> np.ndarray:
    """Pixels whose left/right or up/down neighbours (edge-replicated) differ."""
    padded = np.pad(targets, 1, mode="edge")
    left, right = padded[1:-1, :-2], padded[1:-1, 2:]
    up, down = padded[:-2, 1:-1], padded[2:, 1:-1]
    return (left != right) | (up != down)


def _high_boundary(targets: np.ndarray, classes: np.ndarray, instance_edge: float) -> np.ndarray:
    padded_t = np.pad(targets, 1, mode="edge")
    padded_c = np.pad(classes, 1, mode="edge")
    pairs = (
        ((slice(1, -1), slice(None, -2)), (slice(1, -1), slice(2, None))),
        ((slice(None, -2), slice(1, -1)), (slice(2, None), slice(1, -1))),
    )
    outline = np.zeros(targets.shape, dtype=bool)
    strong = np.zeros(targets.shape, dtype=bool)
    for a, b in pairs:
        differ = padded_t[a] != padded_t[b]
        outline |= differ
        strong |= differ & (padded_c[a] != padded_c[b])
    return np.where(strong, 1.0, np.where(outline, instance_edge, 0.0))


def _semantic(spec: SceneSpec, classes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    probs = np.zeros((spec.height, spec.width, spec.classes))
    np.put_along_axis(probs, classes[..., None], 1.0, axis=2)
    if spec.blur > 0:
        probs = ndimage.gaussian_filter(probs, sigma=(spec.blur, spec.blur, 0), mode="nearest")
    if spec.noise > 0:
        probs = probs + rng.uniform(0.0, spec.noise, size=probs.shape)
    probs = probs / probs.sum(axis=2, keepdims=True)
    return probs.astype(np.float32)


def _place_points(spec: SceneSpec, targets, lookup, rng: np.random.Generator) -> List[PointAnnotation]:
    # One corner for the whole scene: (top, left) flags.
    corner = int(rng.integers(4))
    top, left = corner < 2, corner % 2 == 0
    width = spec.width
    points = []
    for tid in sorted(lookup):
        cls, kind = lookup[tid]
        member = targets == tid
        if spec.placement == "center":
            ys, xs = np.nonzero(member)
            j = nearest_member(member, ys.mean(), xs.mean())
        elif spec.placement == "corner" and kind == THING:
            ys, xs = np.nonzero(member)
            y = ys.min() + 1 if top else ys.max() - 1
            x = xs.min() + 1 if left else xs.max() - 1
            j = nearest_member(member, y, x)
        else:
            flat = np.flatnonzero(member)
            j = int(flat[rng.integers(flat.size)])
        y, x = divmod(j, width)
        points.append(PointAnnotation(tid, cls, kind, x, y))
    return points


def synth_scene(spec: SceneSpec, seed: int) -> SyntheticScene:
    """Render *spec* under *seed*.

    Raises:
        ValidationError: Shape off the canvas, uncovered pixel or a
                         target painted over completely.
    """
    validate_scene_spec(spec)
    rng = np.random.default_rng(seed)
    targets, lookup = _paint(spec)

    class_of = np.zeros(max(lookup) + 1, dtype=np.int64)
    for tid, (cls, _) in lookup.items():
        class_of[tid] = cls
    classes = class_of[targets]

    palette = np.stack([class_colour(c, spec.classes) for c in range(spec.classes)])
    image = palette[classes].astype(np.float32)
    semantic = SemanticMap(_semantic(spec, classes, rng))
    high = BoundaryMap(_high_boundary(targets, classes, spec.instance_edge).astype(np.float32))
    low = BoundaryMap(low_level_boundary(image).values.astype(np.float32))
    points = _place_points(spec, targets, lookup, rng)

    debug_print(
        f"synth {spec.height}x{spec.width} seed={seed}: "
        f"{len(lookup)} targets, noise={spec.noise} placement={spec.placement}"
    )
    return SyntheticScene(
        image=image,
        semantic=semantic,
        boundary_high=high,
        boundary_low=low,
        points=points,
        gt_mask=PseudoMask(targets, lookup),
    )
