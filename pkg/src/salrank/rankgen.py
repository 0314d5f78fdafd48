"""Ranked ground-truth synthesis from fixations and instance masks.

The per-image pipeline is blur -> score -> prune -> accept -> assign gray
values -> nested stack.  :func:`generate_dataset` runs it over a manifest.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    MAX_RANKED_INSTANCES,
    STACK_DEPTH,
    ContractError,
    FixationDensity,
    FixationInput,
    GenConfig,
    InputError,
    InstanceMap,
    NestedStack,
    ObserverMaskSet,
    RankedGroundTruth,
    RankScores,
    SalRankError,
    Setting,
    _check_same_shape,
)
from .fixation import blur_fixations, gaussian_kernel

log = logging.getLogger(__name__)


class RejectionKind(str, enum.Enum):
    TOO_MANY_INSTANCES = "TooManyInstances"
    LOW_FIXATION_COVERAGE = "LowFixationCoverage"
    SALIENT_AREA_TOO_LARGE = "SalientAreaTooLarge"
    NO_INSTANCES_LEFT = "NoInstancesLeft"


@dataclass(frozen=True)
class RejectionReason:
    kind: RejectionKind
    measured: float
    threshold: float


@dataclass(frozen=True)
class Acceptance:
    """Outcome of the image-level filters; ``reason`` is None when accepted."""

    reason: Optional[RejectionReason]
    n_instances: int
    coverage: float
    area_fraction: float

    @property
    def accepted(self) -> bool:
        return self.reason is None


def _gray(k: int, n: int) -> int:
    # round half up; Python's round() is banker's rounding
    return int(math.floor(255 * k / n + 0.5))


def masked_density(density: FixationDensity, instances: InstanceMap, label: int) -> float:
    _check_same_shape(density.grid, instances.grid, "masked_density")
    return float(density.grid[instances.mask(label)].sum())


def rank_scores(density: FixationDensity, instances: InstanceMap, alpha: float) -> RankScores:
    """Score each instance as its fixation mass over ``size ** alpha``."""
    _check_same_shape(density.grid, instances.grid, "rank_scores")
    instances.require_nonempty("rank_scores")
    if not 0 < alpha <= 1:
        raise ContractError(f"alpha must lie in (0, 1], got {alpha}")
    labels = np.array(sorted(instances.labels))
    flat = instances.grid.ravel()
    # bincount over label values gives all masked sums in one pass
    sums = np.bincount(flat, weights=density.grid.ravel(), minlength=int(labels.max()) + 1)
    scores, mass = {}, {}
    for lab in labels.tolist():
        m = float(sums[lab])
        mass[lab] = m
        scores[lab] = m / float(instances.size(lab)) ** alpha
    return RankScores(scores, mass)


def prune(instances: InstanceMap, scores: RankScores, alpha1: float, alpha2: float) -> InstanceMap:
    """Drop over-large instances and instances with a low normalized score."""
    missing = instances.labels - set(scores.scores)
    if missing:
        raise ContractError(f"prune: scores missing for labels {sorted(missing)}")
    total = instances.n_pixels
    keep = [
        lab
        for lab in sorted(instances.labels)
        if not (instances.size(lab) / total > alpha1 or scores.normalized[lab] < alpha2)
    ]
    return instances.keep(keep)


def accept_image(
    pruned: InstanceMap, density: FixationDensity, xi: int, ell: float, gamma: float
) -> Acceptance:
    _check_same_shape(density.grid, pruned.grid, "accept_image")
    rho = len(pruned.labels)
    fg = pruned.foreground()
    total = density.total()
    coverage = float(density.grid[fg].sum()) / total if total > 0 else 0.0
    area = float(fg.sum()) / pruned.n_pixels
    reason = None
    if rho > xi:
        reason = RejectionReason(RejectionKind.TOO_MANY_INSTANCES, float(rho), float(xi))
    elif coverage < ell:
        reason = RejectionReason(RejectionKind.LOW_FIXATION_COVERAGE, coverage, float(ell))
    elif area > gamma:
        reason = RejectionReason(RejectionKind.SALIENT_AREA_TOO_LARGE, area, float(gamma))
    elif rho == 0:
        reason = RejectionReason(RejectionKind.NO_INSTANCES_LEFT, 0.0, 1.0)
    return Acceptance(reason, rho, coverage, area)


def _paint(pruned: InstanceMap, gray: dict[int, int]) -> np.ndarray:
    lut = np.zeros(int(pruned.grid.max()) + 1, dtype=np.int64)
    for lab, g in gray.items():
        lut[lab] = g
    return lut[pruned.grid]


def _check_assignable(scores: RankScores, pruned: InstanceMap) -> list[int]:
    pruned.require_nonempty("rank assignment")
    if len(pruned.labels) > MAX_RANKED_INSTANCES:
        raise ContractError(
            f"{len(pruned.labels)} instances exceed the cap of {MAX_RANKED_INSTANCES}; "
            "accept_image should have rejected this image"
        )
    return scores.restrict(pruned.labels).strict_order()


def assign_relative(scores: RankScores, pruned: InstanceMap) -> RankedGroundTruth:
    """Spread gray values evenly over the instance count: rank r gets 255*(tau-r+1)/tau."""
    order = _check_assignable(scores, pruned)
    tau = len(order)
    gray = {lab: _gray(tau - r, tau) for r, lab in enumerate(order)}
    return RankedGroundTruth(
        Setting.RELATIVE, tuple(order), gray, _paint(pruned, gray),
        scores={k: scores.scores[k] for k in order}, sizes={k: pruned.size(k) for k in order},
    )


def absolute_bins(order: Sequence[int], scores: RankScores) -> dict[int, int]:
    """Percentile bin 1..5 of each instance by its share of total score.

    An instance's bin is ``ceil(5 * c)`` where ``c`` is the share held by it
    and every instance ranked below it, so the top instance always lands in
    bin 5. Computed in exact rational arithmetic so equal shares sit exactly
    on the 20% edges.
    """
    vals = [Fraction(scores.scores[k]) for k in order]
    total = sum(vals, Fraction(0))
    if total <= 0:
        raise ContractError("absolute assignment needs a positive total score")
    bins, below = {}, Fraction(0)
    for lab, v in zip(reversed(order), reversed(vals)):
        below += v
        bins[lab] = min(max(math.ceil(5 * below / total), 1), 5)
    return bins


def assign_absolute(scores: RankScores, pruned: InstanceMap) -> RankedGroundTruth:
    order = _check_assignable(scores, pruned)
    bins = absolute_bins(order, scores)
    gray = {lab: _gray(bins[lab], 5) for lab in order}
    return RankedGroundTruth(
        Setting.ABSOLUTE, tuple(order), gray, _paint(pruned, gray),
        scores={k: scores.scores[k] for k in order}, sizes={k: pruned.size(k) for k in order},
    )


def assign(scores: RankScores, pruned: InstanceMap, setting: Setting) -> RankedGroundTruth:
    if Setting(setting) is Setting.RELATIVE:
        return assign_relative(scores, pruned)
    return assign_absolute(scores, pruned)


def build_nested_stack(gt: RankedGroundTruth) -> NestedStack:
    """Five accumulating slices; trailing slices repeat the last distinct one."""
    gmap = gt.map
    slices = []
    if gt.setting is Setting.RELATIVE:
        grays = [gt.gray_values[k] for k in gt.order]
        for j in range(1, STACK_DEPTH + 1):
            cut = grays[min(j, len(grays)) - 1]
            slices.append(gmap >= cut)
    else:
        for j in range(1, STACK_DEPTH + 1):
            slices.append(gmap >= _gray(STACK_DEPTH + 1 - j, STACK_DEPTH))
        first = next((i for i, s in enumerate(slices) if s.any()), None)
        if first:
            slices[:first] = [slices[first]] * first
    return NestedStack(tuple(slices))


def agreement_to_stack(counts: np.ndarray, n: int) -> NestedStack:
    """Stack from a per-pixel agreement count map with ``n`` observers.

    Slice 1 holds pixels marked by all ``n`` observers; slice ``n`` those
    marked by at least one.
    """
    counts = np.asarray(counts)
    if n < 1:
        raise InputError(f"observer count must be >= 1, got {n}")
    if counts.size and counts.max() > n:
        raise InputError(f"agreement count {int(counts.max())} exceeds observer count {n}")
    return NestedStack(tuple(counts >= level for level in range(n, 0, -1)))


def observers_to_stack(masks: ObserverMaskSet) -> NestedStack:
    return agreement_to_stack(masks.agreement(), masks.count)


@dataclass
class GenerationResult:
    acceptance: Acceptance
    density: FixationDensity
    scores: RankScores
    pruned: InstanceMap
    gt: Optional[RankedGroundTruth] = None
    stack: Optional[NestedStack] = None


def generate_one(instances: InstanceMap, fix: FixationInput, config: GenConfig) -> GenerationResult:
    instances.require_nonempty("generation")
    kernel = gaussian_kernel(config.sigma, config.mu)
    density = blur_fixations(fix, kernel, instances.shape)
    scores = rank_scores(density, instances, config.alpha)
    pruned = prune(instances, scores, config.alpha1, config.alpha2)
    verdict = accept_image(pruned, density, config.xi, config.ell, config.gamma)
    res = GenerationResult(verdict, density, scores, pruned)
    if verdict.accepted:
        res.gt = assign(scores, pruned, config.setting)
        res.stack = build_nested_stack(res.gt)
    return res


def _entry_row(entry, config: GenConfig, root: Path, out_dir: Path) -> dict:
    from . import io as sio

    row: dict = {"id": entry.id, "split": entry.split}
    try:
        instances = sio.read_instance_map(root / entry.instance_map)
        fix = sio.read_fixations(root / entry.fixations)
        res = generate_one(instances, fix, config)
    except SalRankError as exc:
        log.warning("entry %s: %s", entry.id, exc)
        row.update(status="error", error=str(exc))
        return row
    acc = res.acceptance
    row["measurements"] = {
        "n_instances": len(instances.labels),
        "n_pruned": acc.n_instances,
        "coverage": acc.coverage,
        "area_fraction": acc.area_fraction,
    }
    row["scores"] = {str(k): v for k, v in sorted(res.scores.scores.items())}
    if not acc.accepted:
        row.update(status="rejected", reason={
            "kind": acc.reason.kind.value,
            "measured": acc.reason.measured,
            "threshold": acc.reason.threshold,
        })
        return row
    stem = out_dir / entry.id
    sio.write_ranked_gt(res.gt, stem.with_name(stem.name + ".png"))
    files = sio.write_stack(res.stack, stem)
    row.update(
        status="accepted",
        order=list(res.gt.order),
        gray_values={str(k): res.gt.gray_values[k] for k in res.gt.order},
        outputs=[p.name for p in [stem.with_name(stem.name + ".png"),
                                  stem.with_name(stem.name + ".rank.json"), *files]],
    )
    return row


def generate_dataset(entries, config: GenConfig, out_dir, root=".", threads: int | None = None) -> dict:
    """Run the pipeline over manifest entries and write accepted outputs.

    Returns the report; rows follow manifest order whatever the thread count.
    """
    out_dir, root = Path(out_dir), Path(root)
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise InputError("manifest ids must be unique")
    out_dir.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(lambda e: _entry_row(e, config, root, out_dir), entries))
    counts = {s: sum(r["status"] == s for r in rows) for s in ("accepted", "rejected", "error")}
    return {
        "config": {
            "sigma": config.sigma, "mu": config.mu, "xi": config.xi, "ell": config.ell,
            "gamma": config.gamma, "alpha1": config.alpha1, "alpha2": config.alpha2,
            "alpha": config.alpha, "setting": config.setting.value,
        },
        "summary": counts,
        "entries": rows,
    }
