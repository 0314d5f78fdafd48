"""File formats: PNG rasters, fixation CSVs, manifests, sidecars and reports."""

from __future__ import annotations

import csv
import enum
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

from .core import (
    FixationInput,
    FixationPoints,
    FormatError,
    InputError,
    InstanceMap,
    IntegrityError,
    NestedStack,
    ObserverMaskSet,
    RankedGroundTruth,
    RawDensity,
    SalRankError,
    SaliencyMap,
    check_nesting,
)

SIG_DIGITS = 9
CURVE_HEADER = ("threshold", "precision", "recall", "tpr", "fpr")

_SINGLE_CHANNEL = {"1", "L", "P", "I;16", "I;16B", "I;16L", "I"}


class SalRankIOError(SalRankError, OSError):
    pass


# ---------------------------------------------------------------- rasters


def read_png(path) -> np.ndarray:
    """Read a single-channel PNG as an integer array."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise FormatError(f"{path}: expected PNG, found {im.format}")
            if im.mode not in _SINGLE_CHANNEL:
                raise FormatError(
                    f"{path}: expected a single-channel PNG, found mode {im.mode} "
                    f"({len(im.getbands())} channels)"
                )
            arr = np.array(im)
    except FormatError:
        raise
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: unreadable image ({exc})") from exc
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    return arr


def write_png(arr: np.ndarray, path, bits: int = 8) -> Path:
    path = Path(path)
    arr = np.asarray(arr)
    dtype = np.uint8 if bits == 8 else np.uint16
    if arr.size and (arr.min() < 0 or arr.max() > np.iinfo(dtype).max):
        raise InputError(f"{path}: values out of range for {bits}-bit PNG")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        # no timestamps or text chunks: bytes depend on pixels only
        Image.fromarray(arr.astype(dtype)).save(path, format="PNG", optimize=False)
    except OSError as exc:
        raise SalRankIOError(f"{path}: cannot write ({exc})") from exc
    return path


def read_instance_map(path) -> InstanceMap:
    return InstanceMap(read_png(path))


def write_instance_map(instances: InstanceMap, path) -> Path:
    bits = 8 if instances.grid.max() <= 255 else 16
    return write_png(instances.grid, path, bits=bits)


def read_saliency(path) -> SaliencyMap:
    """8-bit maps are scaled by 1/255, 16-bit maps by 1/65535."""
    arr = read_png(path)
    scale = 255.0 if arr.dtype == np.uint8 else 65535.0
    return SaliencyMap(arr.astype(np.float64) / scale)


def write_saliency(sal: SaliencyMap, path) -> Path:
    return write_png(np.floor(sal.grid * 255 + 0.5), path)


def read_fixations(path) -> FixationInput:
    """``.csv`` with an ``x,y`` header gives points; a PNG gives a raw density.

    8-bit density PNGs are scaled by 1/255; deeper PNGs are taken literally.
    Non-integer CSV coordinates are rounded half-up to the nearest pixel.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return FixationPoints(tuple(_read_points_csv(path)))
    arr = read_png(path)
    vals = arr.astype(np.float64)
    if arr.dtype == np.uint8:
        vals /= 255.0
    return RawDensity(vals)


def _read_points_csv(path: Path) -> list[tuple[int, int]]:
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip().lower() for c in rows[0]] != ["x", "y"]:
        raise FormatError(f"{path}: line 1: expected header 'x,y'")
    pts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise FormatError(f"{path}: line {lineno}: expected 2 fields, got {len(row)}")
        try:
            x, y = (float(c) for c in row)
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: cannot parse {','.join(row)!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise FormatError(f"{path}: line {lineno}: non-finite coordinate")
        pts.append((math.floor(x + 0.5), math.floor(y + 0.5)))
    return pts


def write_fixations_csv(points: Iterable[tuple[int, int]], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write("x,y\n")
        for x, y in points:
            fh.write(f"{int(x)},{int(y)}\n")
    return path


# ---------------------------------------------------------------- ranked gt


def sidecar_path(png_path) -> Path:
    p = Path(png_path)
    return p.with_name(p.stem + ".rank.json")


def write_ranked_gt(gt: RankedGroundTruth, path) -> tuple[Path, Path]:
    path = Path(path)
    write_png(gt.map, path)
    meta = {
        "setting": gt.setting.value,
        "order": list(gt.order),
        "gray_values": {str(k): gt.gray_values[k] for k in gt.order},
        "scores": {str(k): gt.scores[k] for k in gt.order if k in gt.scores},
        "sizes": {str(k): gt.sizes[k] for k in gt.order if k in gt.sizes},
    }
    side = sidecar_path(path)
    # scores keep full precision (repr) so the round trip is exact
    side.write_text(json.dumps(meta, indent=2) + "\n")
    return path, side


def read_ranked_gt(path) -> RankedGroundTruth:
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise InputError(
            f"{path}: sidecar {side.name} missing; regenerate the ground truth with `salrank generate`"
        )
    try:
        meta = json.loads(side.read_text())
        return RankedGroundTruth(
            setting=meta["setting"],
            order=tuple(meta["order"]),
            gray_values={int(k): v for k, v in meta["gray_values"].items()},
            map=read_png(path),
            scores={int(k): v for k, v in meta.get("scores", {}).items()},
            sizes={int(k): v for k, v in meta.get("sizes", {}).items()},
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{side}: malformed sidecar ({exc})") from exc


# ---------------------------------------------------------------- stacks


def stack_paths(stem, n: int) -> list[Path]:
    stem = Path(stem)
    return [stem.with_name(f"{stem.name}.slice{k}.png") for k in range(1, n + 1)]


def write_stack(stack: NestedStack, stem) -> list[Path]:
    paths = stack_paths(stem, stack.n_slices)
    for s, p in zip(stack.slices, paths):
        write_png(s.astype(np.uint8) * 255, p)
    return paths


def find_stack_slices(stem) -> list[Path]:
    stem = Path(stem)
    pat = re.compile(re.escape(stem.name) + r"\.slice(\d+)\.png$")
    found = {}
    if stem.parent.is_dir():
        for p in stem.parent.iterdir():
            m = pat.match(p.name)
            if m:
                found[int(m.group(1))] = p
    if not found:
        raise InputError(f"{stem}: no slice files found")
    n = max(found)
    missing = [k for k in range(1, n + 1) if k not in found]
    if missing:
        raise IntegrityError(f"{stem}: missing slice file(s) {missing}")
    return [found[k] for k in range(1, n + 1)]


def read_stack(stem) -> NestedStack:
    slices = []
    for p in find_stack_slices(stem):
        arr = read_png(p)
        bad = ~np.isin(arr, (0, 255))
        if bad.any():
            y, x = np.argwhere(bad)[0]
            raise FormatError(f"{p}: non-binary value {int(arr[y, x])} at ({x}, {y})")
        slices.append(arr == 255)
    for s in slices[1:]:
        if s.shape != slices[0].shape:
            raise FormatError(f"{stem}: slices differ in size")
    check_nesting(slices)
    return NestedStack(tuple(slices))


def read_observers(path, levels: Optional[int] = None):
    """Load observer annotations for one image.

    A directory of binary PNG masks yields an :class:`ObserverMaskSet`; a
    single PNG is an agreement-count map (returned as ``(counts, n)``, with
    ``n`` defaulting to the map's maximum).
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.png"))
        if not files:
            raise InputError(f"{path}: no observer mask PNGs")
        return ObserverMaskSet(tuple(read_png(f) != 0 for f in files))
    counts = read_png(path).astype(np.int64)
    n = int(levels) if levels else int(counts.max())
    if n < 1:
        raise InputError(f"{path}: agreement map is empty and no level count was given")
    if counts.max() > n:
        raise InputError(f"{path}: agreement count {int(counts.max())} exceeds {n} observers")
    return counts, n


# ---------------------------------------------------------------- manifest


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    instance_map: str
    fixations: str = ""
    reference_rank: Optional[str] = None
    observer_masks: Optional[tuple[str, ...]] = None
    split: str = "test"


def read_manifest(path) -> list[ManifestEntry]:
    """JSON manifest: ``{"entries": [{"id", "instance_map", "fixations", ...}]}``.

    A bare list of entry objects is accepted too.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such manifest")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    rows = doc.get("entries", []) if isinstance(doc, dict) else doc
    if not isinstance(rows, list):
        raise FormatError(f"{path}: 'entries' must be a list")
    entries, seen = [], set()
    for i, r in enumerate(rows):
        if not isinstance(r, dict):
            raise FormatError(f"{path}: entry {i} is not an object")
        try:
            eid = str(r["id"])
            inst = r["instance_map"]
        except KeyError as exc:
            raise FormatError(f"{path}: entry {i} lacks required field {exc}") from None
        if not eid or not inst:
            raise FormatError(f"{path}: entry {i} has an empty required field")
        if eid in seen:
            raise FormatError(f"{path}: duplicate id {eid!r}")
        seen.add(eid)
        split = r.get("split", "test")
        if split not in ("train", "test"):
            raise FormatError(f"{path}: entry {eid!r} has split {split!r} (train|test)")
        obs = r.get("observer_masks")
        if isinstance(obs, str):
            obs = [obs]
        entries.append(ManifestEntry(
            id=eid,
            instance_map=inst,
            fixations=r.get("fixations", ""),
            reference_rank=r.get("reference_rank"),
            observer_masks=tuple(obs) if obs else None,
            split=split,
        ))
    return entries


def write_manifest(entries: Sequence[ManifestEntry], path) -> Path:
    rows = []
    for e in entries:
        row = {"id": e.id, "instance_map": e.instance_map, "fixations": e.fixations, "split": e.split}
        if e.reference_rank:
            row["reference_rank"] = e.reference_rank
        if e.observer_masks:
            row["observer_masks"] = list(e.observer_masks)
        rows.append(row)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"entries": rows}, indent=2) + "\n")
    return path


# ---------------------------------------------------------------- reports


def fmt_float(x: float) -> str:
    return f"{x:.{SIG_DIGITS}g}"


def _round_floats(obj):
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(fmt_float(x))
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def dumps_report(report) -> str:
    return json.dumps(_round_floats(report), indent=2, sort_keys=True) + "\n"


def write_report(report, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_report(report))
    except OSError as exc:
        raise SalRankIOError(f"{path}: cannot write ({exc})") from exc
    return path


def write_table(rows: Sequence[Sequence], header: Sequence[str], path) -> Path:
    """CSV with floats at 9 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_curve(points, path) -> Path:
    rows = [(p.threshold, p.precision, p.recall, p.tpr, p.fpr) for p in points]
    return write_table(rows, CURVE_HEADER, path)


def read_table(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
