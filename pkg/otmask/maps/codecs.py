"""
File codecs for maps, images, masks and point annotations.

Float maps (PFM)
~~~~~~~~~~~~~~~~
Header ``Pf`` (one sample per pixel) or ``PF`` (RGB), then
``<width> <height>`` and a scale line.  A negative scale means
little-endian samples.  Scanlines are stored **top to bottom** and every
sample is a 32-bit float.

- Boundary map: one ``Pf`` file of ``H`` rows.
- Semantic map: one ``Pf`` file of ``N_c * H`` rows (the ``N_c`` class
  planes stacked) plus a sidecar ``<path>.channels`` containing
  ``channels=N_c``.  The sidecar is what tells the two apart.
- RGB image: one ``PF`` file.

Masks (PGM)
~~~~~~~~~~~
Binary ``P5``, maxval 65535, big-endian 16-bit samples holding the
target id.  Sidecar ``<path>.labels`` has one ``target_id class_id kind``
line per target.

Points
~~~~~~
Plain text, ``target_id class_id kind x y`` per line, ``#`` comments.

Every reader validates what it returns; no partial value is ever
handed back on error.
"""

from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

from otmask.config import debug_print
from otmask.core.errors import CodecError, ShapeError, ValidationError
from otmask.core.models import (
    KINDS,
    UNASSIGNED,
    BoundaryMap,
    PointAnnotation,
    PseudoMask,
    SemanticMap,
    validate_points,
)

PathLike = Union[str, Path]

CHANNELS_SUFFIX = ".channels"
LABELS_SUFFIX = ".labels"

PGM_MAXVAL = 65535


# ---------------------------------------------------------------------------
# Netpbm-style header parsing (shared by PFM and PGM)
# ---------------------------------------------------------------------------

_WHITESPACE = b" \t\r\n"


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise CodecError(f"cannot read {path}: {exc}") from exc


def _write_bytes(path: Path, payload: bytes) -> None:
    try:
        path.write_bytes(payload)
    except OSError as exc:
        raise CodecError(f"cannot write {path}: {exc}") from exc


def _parse_header(data: bytes, count: int, path: Path) -> Tuple[List[str], int]:
    """Read *count* whitespace-separated header tokens.

    ``#`` starts a comment that runs to the end of the line.  Exactly one
    whitespace byte separates the last token from the raster.

    Returns:
        ``(tokens, raster_offset)``.
    """
    tokens: List[str] = []
    pos = 0
    size = len(data)
    while len(tokens) < count:
        while pos < size and data[pos] in _WHITESPACE:
            pos += 1
        if pos < size and data[pos:pos + 1] == b"#":
            while pos < size and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < size and data[pos] not in _WHITESPACE:
            pos += 1
        if start == pos:
            raise CodecError(f"{path}: truncated header ({len(tokens)} of {count} fields)")
        tokens.append(data[start:pos].decode("ascii", errors="replace"))
    if pos >= size:
        raise CodecError(f"{path}: header not followed by a raster")
    return tokens, pos + 1


def _parse_dims(tokens: List[str], path: Path) -> Tuple[int, int]:
    try:
        width, height = int(tokens[1]), int(tokens[2])
    except ValueError:
        raise CodecError(f"{path}: malformed size {tokens[1]!r} {tokens[2]!r}") from None
    if width < 1 or height < 1:
        raise CodecError(f"{path}: empty image {width}x{height}")
    return width, height


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def _read_pfm(path: Path) -> np.ndarray:
    """Raw float32 raster, ``(H, W)`` for ``Pf`` or ``(H, W, 3)`` for ``PF``."""
    data = _read_bytes(path)
    tokens, offset = _parse_header(data, 4, path)
    magic = tokens[0]
    if magic not in ("Pf", "PF"):
        raise CodecError(f"{path}: not a PFM file (magic {magic!r})")
    width, height = _parse_dims(tokens, path)
    try:
        scale = float(tokens[3])
    except ValueError:
        raise CodecError(f"{path}: malformed scale {tokens[3]!r}") from None
    if scale == 0.0:
        raise CodecError(f"{path}: scale must be non-zero")

    channels = 3 if magic == "PF" else 1
    expected = width * height * channels * 4
    raster = data[offset:]
    if len(raster) != expected:
        raise CodecError(
            f"{path}: raster holds {len(raster)} bytes, expected {expected} "
            f"for {width}x{height}x{channels}"
        )
    dtype = "<f4" if scale < 0 else ">f4"
    values = np.frombuffer(raster, dtype=dtype).astype(np.float32)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return values.reshape(shape)


def _write_pfm(path: Path, array: np.ndarray) -> None:
    """Write *array* (``(H, W)`` or ``(H, W, 3)``) as little-endian PFM."""
    magic = "Pf" if array.ndim == 2 else "PF"
    height, width = array.shape[:2]
    header = f"{magic}\n{width} {height}\n-1.0\n".encode("ascii")
    payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    _write_bytes(path, header + payload)


def _require_finite(values: np.ndarray, what: str, path: Path) -> None:
    flat = values.reshape(values.shape[0] * values.shape[1], -1)
    bad = ~np.isfinite(flat).all(axis=1)
    if bad.any():
        raise CodecError(f"{path}: {what} has a non-finite value at pixel {int(np.argmax(bad))}")


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


def read_map(path: PathLike) -> Union[SemanticMap, BoundaryMap]:
    """Read a semantic map (sidecar present) or a boundary map.

    Raises:
        CodecError:      Malformed header, wrong raster length, bad sidecar.
        ValidationError: Map invariants violated (first bad pixel named).
    """
    path = Path(path)
    raster = _read_pfm(path)
    if raster.ndim != 2:
        raise CodecError(f"{path}: expected a one-sample 'Pf' map, found an RGB 'PF' file")

    sidecar = _sidecar(path, CHANNELS_SUFFIX)
    if not sidecar.exists():
        _require_finite(raster, "boundary map", path)
        result = BoundaryMap(raster).validate()
        debug_print(f"read boundary map {path} {result.shape}")
        return result

    channels = _read_channels(sidecar)
    rows, width = raster.shape
    if rows % channels:
        raise CodecError(f"{path}: {rows} rows do not split into {channels} channel planes")
    height = rows // channels
    probs = np.ascontiguousarray(raster.reshape(channels, height, width).transpose(1, 2, 0))
    _require_finite(probs, "semantic map", path)
    result = SemanticMap(probs).validate()
    debug_print(f"read semantic map {path} {result.shape} x {channels} channels")
    return result


def _read_channels(sidecar: Path) -> int:
    text = _read_bytes(sidecar).decode("utf-8", errors="replace").strip()
    key, _, value = text.partition("=")
    if key.strip() != "channels":
        raise CodecError(f"{sidecar}: expected 'channels=N', got {text!r}")
    try:
        channels = int(value)
    except ValueError:
        raise CodecError(f"{sidecar}: malformed channel count {value!r}") from None
    if channels < 1:
        raise CodecError(f"{sidecar}: channel count must be >= 1, got {channels}")
    return channels


def write_map(value: Union[SemanticMap, BoundaryMap], path: PathLike) -> None:
    """Write a semantic or boundary map as PFM (float32).

    A boundary map removes a stale ``.channels`` sidecar so the file reads
    back as a boundary map.
    """
    path = Path(path)
    sidecar = _sidecar(path, CHANNELS_SUFFIX)
    if isinstance(value, SemanticMap):
        h, w, c = value.probs.shape
        planes = np.transpose(value.probs, (2, 0, 1)).reshape(c * h, w)
        _write_pfm(path, planes)
        _write_bytes(sidecar, f"channels={c}\n".encode("ascii"))
        debug_print(f"wrote semantic map {path} {h}x{w}x{c}")
    elif isinstance(value, BoundaryMap):
        _write_pfm(path, value.values)
        if sidecar.exists():
            sidecar.unlink()
        debug_print(f"wrote boundary map {path} {value.shape}")
    else:
        raise ValidationError(f"cannot write {type(value).__name__} as a map")


def read_image(path: PathLike) -> np.ndarray:
    """Read an RGB ``PF`` image as a float32 ``(H, W, 3)`` array."""
    path = Path(path)
    raster = _read_pfm(path)
    if raster.ndim != 3:
        raise CodecError(f"{path}: expected an RGB 'PF' image, found a one-sample 'Pf' map")
    _require_finite(raster, "image", path)
    debug_print(f"read image {path} {raster.shape}")
    return raster


def write_image(image: np.ndarray, path: PathLike) -> None:
    """Write an ``(H, W, 3)`` RGB array as colour PFM."""
    if image.ndim != 3 or image.shape[2] != 3 or min(image.shape) < 1:
        raise ShapeError(f"image must be (H, W, 3), got {image.shape}")
    _write_pfm(Path(path), image)
    debug_print(f"wrote image {path} {image.shape}")


# ---------------------------------------------------------------------------
# Masks
# ---------------------------------------------------------------------------

def write_mask(mask: PseudoMask, path: PathLike) -> None:
    """Write *mask* as 16-bit PGM plus its ``.labels`` sidecar.

    Raises:
        InvariantError:  A pixel is unassigned.
        ValidationError: A target id does not fit in 16 bits.
    """
    path = Path(path)
    mask.validate()
    header = f"P5\n{mask.width} {mask.height}\n{PGM_MAXVAL}\n".encode("ascii")
    payload = np.ascontiguousarray(mask.targets, dtype=">u2").tobytes()
    _write_bytes(path, header + payload)

    lines = [f"{tid} {cls} {kind}\n" for tid, (cls, kind) in sorted(mask.lookup.items())]
    _write_bytes(_sidecar(path, LABELS_SUFFIX), "".join(lines).encode("utf-8"))
    debug_print(f"wrote mask {path} {mask.shape} targets={len(mask.lookup)}")


def read_mask(path: PathLike) -> PseudoMask:
    """Read a PGM mask and its ``.labels`` sidecar.

    Raises:
        CodecError:      Malformed header/raster or sidecar, pixel with id 0.
        ValidationError: Mask id missing from the sidecar.
    """
    path = Path(path)
    data = _read_bytes(path)
    tokens, offset = _parse_header(data, 4, path)
    if tokens[0] != "P5":
        raise CodecError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height = _parse_dims(tokens, path)
    if tokens[3] != str(PGM_MAXVAL):
        raise CodecError(f"{path}: maxval must be {PGM_MAXVAL}, got {tokens[3]!r}")
    raster = data[offset:]
    expected = width * height * 2
    if len(raster) != expected:
        raise CodecError(f"{path}: raster holds {len(raster)} bytes, expected {expected}")
    targets = np.frombuffer(raster, dtype=">u2").astype(np.int64).reshape(height, width)

    zero = targets.reshape(-1) == UNASSIGNED
    if zero.any():
        raise CodecError(f"{path}: pixel {int(np.argmax(zero))} carries the reserved id 0")

    lookup = _read_labels(_sidecar(path, LABELS_SUFFIX))
    mask = PseudoMask(targets, lookup).validate()
    debug_print(f"read mask {path} {mask.shape} targets={len(lookup)}")
    return mask


def _read_labels(sidecar: Path):
    lookup = {}
    text = _read_bytes(sidecar).decode("utf-8", errors="replace")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise CodecError(f"{sidecar}:{lineno}: expected 'target_id class_id kind', got {raw!r}")
        try:
            tid, cls = int(fields[0]), int(fields[1])
        except ValueError:
            raise CodecError(f"{sidecar}:{lineno}: malformed integer in {raw!r}") from None
        if fields[2] not in KINDS:
            raise CodecError(f"{sidecar}:{lineno}: unknown kind {fields[2]!r}")
        if tid in lookup:
            raise CodecError(f"{sidecar}:{lineno}: duplicate target_id {tid}")
        lookup[tid] = (cls, fields[2])
    return lookup


# ---------------------------------------------------------------------------
# Points
# ---------------------------------------------------------------------------

def read_points(
    path: PathLike,
    height: Optional[int] = None,
    width: Optional[int] = None,
) -> List[PointAnnotation]:
    """Read a points file.

    Args:
        path:   Points file.
        height: Declared image height; coordinates are range-checked
                when both *height* and *width* are given.
        width:  Declared image width.

    Raises:
        CodecError:      Malformed line, unknown kind token.
        ValidationError: Duplicate target_id, empty set, coordinate
                         outside the declared size.
    """
    path = Path(path)
    text = _read_bytes(path).decode("utf-8", errors="replace")
    points: List[PointAnnotation] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise CodecError(f"{path}:{lineno}: expected 'target_id class_id kind x y', got {raw!r}")
        if fields[2] not in KINDS:
            raise CodecError(f"{path}:{lineno}: unknown kind {fields[2]!r}")
        try:
            tid, cls, x, y = (int(fields[k]) for k in (0, 1, 3, 4))
        except ValueError:
            raise CodecError(f"{path}:{lineno}: malformed integer in {raw!r}") from None
        points.append(PointAnnotation(tid, cls, fields[2], x, y))

    points = validate_points(points, height, width)
    debug_print(f"read {len(points)} points from {path}")
    return points


def write_points(points: Iterable[PointAnnotation], path: PathLike) -> None:
    """Write annotations in the points text format."""
    path = Path(path)
    points = validate_points(points)
    lines = ["# target_id class_id kind x y\n"]
    lines += [f"{p.target_id} {p.class_id} {p.kind} {p.x} {p.y}\n" for p in points]
    _write_bytes(path, "".join(lines).encode("utf-8"))
    debug_print(f"wrote {len(points)} points to {path}")
