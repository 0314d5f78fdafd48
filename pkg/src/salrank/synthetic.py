"""Deterministic synthetic corpora for testing and demos.

Each image holds a few non-overlapping rectangular instances with a hidden
salience value. Fixation counts per instance follow
``value * size ** size_power``, so the hidden order is recoverable by a
size-normalized score; observers mark an instance with probability equal to
its value; predictions are noisy versions of the value map.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as sio
from .core import InstanceMap, ObserverMaskSet, RankedGroundTruth, SaliencyMap, Setting
from .rankgen import _gray


@dataclass
class SyntheticImage:
    id: str
    instances: InstanceMap
    points: list
    values: dict
    observers: ObserverMaskSet
    saliency: SaliencyMap

    @property
    def reference(self) -> tuple[int, ...]:
        return tuple(sorted(self.values, key=lambda k: (-self.values[k], k)))


def _place_boxes(rng, shape, n, min_side, max_side, tries=200):
    h, w = shape
    grid = np.zeros(shape, dtype=np.int64)
    lab = 0
    for _ in range(tries):
        if lab == n:
            break
        bh, bw = rng.integers(min_side, max_side + 1, size=2)
        y0 = int(rng.integers(0, h - bh + 1))
        x0 = int(rng.integers(0, w - bw + 1))
        win = grid[max(y0 - 2, 0):y0 + bh + 2, max(x0 - 2, 0):x0 + bw + 2]
        if win.any():
            continue
        lab += 1
        grid[y0:y0 + bh, x0:x0 + bw] = lab
    return grid


def synth_image(rng: np.random.Generator, image_id: str = "img", shape=(128, 128),
                n_instances: int | None = None, n_observers: int = 12,
                min_side: int = 8, max_side: int = 48, fixations_per_unit: float = 6.0,
                size_power: float = 0.3, noise: float = 0.08) -> SyntheticImage:
    if n_instances is None:
        n_instances = int(rng.integers(1, 6))
    grid = _place_boxes(rng, shape, n_instances, min_side, max_side)
    if not grid.any():
        grid[shape[0] // 4: shape[0] // 2, shape[1] // 4: shape[1] // 2] = 1
    instances = InstanceMap(grid)
    labels = sorted(instances.labels)
    raw = rng.uniform(0.15, 1.0, size=len(labels))
    values = {lab: float(v) for lab, v in zip(labels, raw)}
    points = []
    for lab in labels:
        ys, xs = np.nonzero(grid == lab)
        k = max(1, int(round(fixations_per_unit * values[lab] * len(ys) ** size_power)))
        pick = rng.integers(0, len(ys), size=k)
        points.extend(zip(xs[pick].tolist(), ys[pick].tolist()))
    obs = []
    for _ in range(n_observers):
        m = np.zeros(shape, dtype=bool)
        u = rng.uniform(size=len(labels))
        for lab, uj in zip(labels, u):
            if uj < values[lab]:
                m |= grid == lab
        obs.append(m)
    vmap = np.zeros(shape)
    for lab in labels:
        vmap[grid == lab] = values[lab]
    sal = np.clip(vmap + rng.normal(0.0, noise, size=shape), 0.0, 1.0)
    sal = np.floor(sal * 255 + 0.5) / 255.0
    return SyntheticImage(image_id, instances, points, values, ObserverMaskSet(tuple(obs)),
                          SaliencyMap(sal))


def synth_corpus(n_images: int, seed: int = 0, **kw) -> list[SyntheticImage]:
    rng = np.random.default_rng(seed)
    return [synth_image(rng, f"img{i:04d}", **kw) for i in range(n_images)]


def reference_gt(img: SyntheticImage) -> RankedGroundTruth:
    order = img.reference[:5]
    tau = len(order)
    gray = {lab: _gray(tau - r, tau) for r, lab in enumerate(order)}
    lut = np.zeros(int(img.instances.grid.max()) + 1, dtype=np.int64)
    for lab, g in gray.items():
        lut[lab] = g
    return RankedGroundTruth(Setting.RELATIVE, order, gray, lut[img.instances.grid],
                             scores={k: img.values[k] for k in order},
                             sizes={k: img.instances.size(k) for k in order})


def write_corpus(root, n_images: int = 16, seed: int = 0, **kw) -> Path:
    """Write a corpus under ``root`` and return the manifest path.

    Layout: ``instances/``, ``fixations/``, ``pred/``, ``observers/<id>/``,
    ``reference/`` and ``manifest.json`` with root-relative paths.
    """
    root = Path(root)
    entries = []
    for i, img in enumerate(synth_corpus(n_images, seed, **kw)):
        sio.write_instance_map(img.instances, root / "instances" / f"{img.id}.png")
        sio.write_fixations_csv(img.points, root / "fixations" / f"{img.id}.csv")
        sio.write_saliency(img.saliency, root / "pred" / f"{img.id}.png")
        obs_paths = []
        for j, m in enumerate(img.observers.observers, start=1):
            p = Path("observers") / img.id / f"obs{j:02d}.png"
            sio.write_png(m.astype(np.uint8) * 255, root / p)
            obs_paths.append(p.as_posix())
        sio.write_ranked_gt(reference_gt(img), root / "reference" / f"{img.id}.png")
        entries.append(sio.ManifestEntry(
            id=img.id,
            instance_map=f"instances/{img.id}.png",
            fixations=f"fixations/{img.id}.csv",
            reference_rank=f"reference/{img.id}.png",
            observer_masks=tuple(obs_paths),
            split="train" if i % 2 else "test",
        ))
    return sio.write_manifest(entries, root / "manifest.json")
