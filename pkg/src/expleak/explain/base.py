"""Attribution maps, their binary/CSV serialization, and the segmentation grid."""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

Array = np.ndarray

ATTR_MAGIC = b"XATT"
ATTR_FORMAT_VERSION = 1


@dataclass
class AttributionMap:
    """Per-coordinate importance scores for one explained prediction.

    ``values`` is shaped like the explained input (methods working on
    segments or prototypes broadcast/shape their scores accordingly).
    """

    values: Array
    method: str
    params: dict[str, Any] = field(default_factory=dict)
    class_index: int | None = None
    wall_time_seconds: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError(f"{self.method} attribution contains non-finite values")

    @property
    def flat(self) -> Array:
        return self.values.reshape(-1)


def _canonical_param(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, (tuple, list)):
        return [_canonical_param(v) for v in value]
    return value


def save_attribution(att: AttributionMap, path: str | Path) -> None:
    """Binary "XATT" dump: shape, method tag, params JSON blob, f64 values."""
    header = {
        "method_params": {k: _canonical_param(v) for k, v in att.params.items()},
        "class_index": att.class_index,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    method = att.method.encode("ascii")
    buf = io.BytesIO()
    buf.write(ATTR_MAGIC)
    buf.write(struct.pack("<HB", ATTR_FORMAT_VERSION, att.values.ndim))
    for d in att.values.shape:
        buf.write(struct.pack("<I", d))
    buf.write(struct.pack("<H", len(method)))
    buf.write(method)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(np.ascontiguousarray(att.values, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_attribution(path: str | Path) -> AttributionMap:
    buf = io.BytesIO(Path(path).read_bytes())
    if buf.read(4) != ATTR_MAGIC:
        raise ValueError(f"{path} is not an attribution file (bad magic)")
    version, ndim = struct.unpack("<HB", buf.read(3))
    if version != ATTR_FORMAT_VERSION:
        raise ValueError(f"unsupported attribution format version {version}")
    shape = struct.unpack(f"<{ndim}I", buf.read(4 * ndim)) if ndim else ()
    (mlen,) = struct.unpack("<H", buf.read(2))
    method = buf.read(mlen).decode("ascii")
    (blen,) = struct.unpack("<I", buf.read(4))
    header = json.loads(buf.read(blen).decode("utf-8"))
    count = int(np.prod(shape)) if shape else 1
    values = np.frombuffer(buf.read(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
    return AttributionMap(
        values,
        method,
        params=header.get("method_params", {}),
        class_index=header.get("class_index"),
    )


def attribution_to_csv(att: AttributionMap, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coordinate", "value"])
        for i, v in enumerate(att.flat):
            writer.writerow([i, repr(float(v))])


@dataclass
class Segmentation:
    """Segment id per input coordinate (spatial coordinates for images).

    ``ids`` has the full input shape; for rank-3 inputs all channels of a
    pixel share one id.  Ids are contiguous 0..n_segments-1 and every
    coordinate is assigned.
    """

    ids: Array
    n_segments: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        present = np.unique(self.ids)
        if present.min() < 0 or present.max() >= self.n_segments:
            raise ValueError("segment ids outside [0, n_segments)")

    def mask_for(self, segment: int) -> Array:
        return self.ids == segment

    def broadcast(self, per_segment: Array) -> Array:
        """Copy one value per segment onto every coordinate of that segment."""
        return np.asarray(per_segment, dtype=np.float64)[self.ids]


def _split_points(size: int, parts: int) -> list[slice]:
    edges = np.linspace(0, size, parts + 1).astype(int)
    return [slice(edges[i], edges[i + 1]) for i in range(parts)]


def segment_grid(input_shape: tuple[int, ...], n_segments: int, compactness: float = 20.0) -> Segmentation:
    """Axis-aligned grid segmentation.

    Flat inputs get ``n_segments`` contiguous equal-ish blocks.  For image
    inputs (C, H, W) the spatial plane is cut into a gr x gc grid with
    gr * gc == n_segments; among the feasible factorizations the one
    minimizing ``compactness * |log cell_aspect| + |log(grid_aspect /
    image_aspect)|`` wins, so high compactness prefers square cells and low
    compactness lets the grid track the image's own aspect ratio.
    """
    input_shape = tuple(input_shape)
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    if len(input_shape) == 1:
        (d,) = input_shape
        if n_segments > d:
            raise ValueError(f"n_segments {n_segments} exceeds {d} coordinates")
        ids = np.empty(d, dtype=np.int64)
        for s, sl in enumerate(_split_points(d, n_segments)):
            ids[sl] = s
        return Segmentation(ids, n_segments)
    if len(input_shape) == 3:
        _, h, w = input_shape
        if n_segments > h * w:
            raise ValueError(f"n_segments {n_segments} exceeds {h * w} spatial coordinates")
        candidates = []
        for gr in range(1, n_segments + 1):
            if n_segments % gr:
                continue
            gc = n_segments // gr
            if gr > h or gc > w:
                continue
            cell_aspect = (h / gr) / (w / gc)
            grid_aspect = gr / gc
            score = compactness * abs(np.log(cell_aspect)) + abs(np.log(grid_aspect / (h / w)))
            candidates.append((score, gr, gc))
        if not candidates:
            raise ValueError(f"no {n_segments}-cell grid fits a {h}x{w} plane")
        candidates.sort(key=lambda t: (t[0], t[1]))
        _, gr, gc = candidates[0]
        plane = np.empty((h, w), dtype=np.int64)
        for r, rs in enumerate(_split_points(h, gr)):
            for c, cs in enumerate(_split_points(w, gc)):
                plane[rs, cs] = r * gc + c
        ids = np.broadcast_to(plane, input_shape).copy()
        return Segmentation(ids, n_segments)
    raise ValueError(f"segmentation supports rank-1 and rank-3 inputs, got {input_shape}")


def masked_input(x: Array, segmentation: Segmentation, keep: Array, baseline_value: float) -> Array:
    """Copy of ``x`` with segments whose ``keep`` flag is False set to baseline."""
    out = x.copy()
    drop = ~np.asarray(keep, dtype=bool)[segmentation.ids]
    out[drop] = baseline_value
    return out
