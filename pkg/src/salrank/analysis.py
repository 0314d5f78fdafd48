"""Dataset-analysis experiments: parameter sweeps, annotator ablation, size/rank statistics."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    MAX_RANKED_INSTANCES,
    FixationInput,
    GenConfig,
    InputError,
    InstanceMap,
    ObserverMaskSet,
    RankedGroundTruth,
    RankScores,
)
from .fixation import blur_fixations, gaussian_kernel
from .rankgen import rank_scores
from .rankmetrics import sor


class Axis(str, enum.Enum):
    ALPHA = "alpha"
    SIGMA = "sigma"


@dataclass(frozen=True)
class CorpusItem:
    id: str
    instances: InstanceMap
    fixations: Optional[FixationInput] = None
    reference: Optional[tuple[int, ...]] = None
    observers: Optional[ObserverMaskSet] = None


@dataclass(frozen=True)
class SweepRow:
    parameter: str
    value: float
    mu: int
    sor: Optional[float]
    defined: int
    undefined: int


def mu_for_sigma(sigma: float) -> int:
    """Window side for the sigma sweep: 7 * sigma, rounded half up."""
    return max(1, int(math.floor(7.0 * sigma + 0.5)))


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return (math.fsum(vals) / len(vals) if vals else None), len(vals)


def _require_reference(corpus: Sequence[CorpusItem]) -> None:
    for item in corpus:
        if item.reference is None or item.fixations is None:
            raise InputError(f"corpus item {item.id!r} lacks fixations or a reference ranking")


def _masses(item: CorpusItem, sigma: float, mu: int) -> RankScores:
    kernel = gaussian_kernel(sigma, mu)
    density = blur_fixations(item.fixations, kernel, item.instances.shape)
    return rank_scores(density, item.instances, 1.0)


def _score_with_alpha(item: CorpusItem, base: RankScores, alpha: float) -> Optional[float]:
    scores = {k: base.mass[k] / float(item.instances.size(k)) ** alpha for k in base.mass}
    order = RankScores(scores, base.mass).strict_order()
    return sor(item.reference, {k: -i for i, k in enumerate(order)})


def param_sweep(corpus: Sequence[CorpusItem], base: GenConfig, axis, values,
                threads: Optional[int] = None) -> list[SweepRow]:
    """Mean SOR against reference rankings for each swept value.

    Scoring only: no pruning or image acceptance, so every reference
    instance is compared. The sigma axis ties the window to ``7 * sigma``.
    """
    axis = Axis(axis)
    corpus = list(corpus)
    _require_reference(corpus)
    values = [float(v) for v in values]
    rows = []
    with ThreadPoolExecutor(max_workers=threads) as pool:
        if axis is Axis.ALPHA:
            for v in values:
                if not 0 < v <= 1:
                    raise InputError(f"alpha values must lie in (0, 1], got {v}")
            bases = list(pool.map(lambda it: _masses(it, base.sigma, base.mu), corpus))
            for v in values:
                m, n = _mean([_score_with_alpha(it, b, v) for it, b in zip(corpus, bases)])
                rows.append(SweepRow("alpha", v, base.mu, m, n, len(corpus) - n))
        else:
            for v in values:
                if not v > 0:
                    raise InputError(f"sigma values must be > 0, got {v}")
                mu = mu_for_sigma(v)
                bases = list(pool.map(lambda it: _masses(it, v, mu), corpus))
                m, n = _mean([_score_with_alpha(it, b, base.alpha) for it, b in zip(corpus, bases)])
                rows.append(SweepRow("sigma", v, mu, m, n, len(corpus) - n))
    return rows


# ---------------------------------------------------------------- ablation


def sample_without_replacement(bitgen, n: int, k: int) -> list[int]:
    """``k`` distinct indices from ``range(n)`` by partial Fisher-Yates.

    Draws raw 64-bit words with rejection so the result depends only on the
    generator's bit stream, not on library sampling routines.
    """
    idx = list(range(n))
    for i in range(k):
        span = n - i
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            r = int(bitgen.random_raw())
            if r < limit:
                break
        j = i + r % span
        idx[i], idx[j] = idx[j], idx[i]
    return sorted(idx[:k])


def agreement_order(instances: InstanceMap, counts: np.ndarray) -> tuple[int, ...]:
    """Instances ordered by summed agreement count, ties by ascending label."""
    flat = instances.grid.ravel()
    sums = np.bincount(flat, weights=counts.ravel().astype(np.float64),
                       minlength=int(flat.max()) + 1)
    mass = {k: float(sums[k]) for k in instances.labels}
    return tuple(RankScores(mass, mass).strict_order())


def _trial_sor(corpus, full_orders, removed) -> Optional[float]:
    vals = []
    for item, ref in zip(corpus, full_orders):
        reduced = item.observers.without(removed)
        order = agreement_order(item.instances, reduced.agreement())
        vals.append(sor(ref, {k: -i for i, k in enumerate(order)}))
    return _mean(vals)[0]


def annotator_ablation(corpus: Sequence[CorpusItem], remove: int, trials: int = 5,
                       seed: int = 0, threads: Optional[int] = None) -> Optional[float]:
    """Mean SOR of rankings rebuilt after dropping ``remove`` annotators.

    One subset of annotators is drawn per trial (PCG64 seeded with ``seed``)
    and dropped from every image; rankings from the reduced agreement are
    scored against the full-agreement rankings.
    """
    corpus = list(corpus)
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    if not corpus:
        return None
    for item in corpus:
        if item.observers is None:
            raise InputError(f"corpus item {item.id!r} has no observer masks")
    counts = {item.observers.count for item in corpus}
    if len(counts) != 1:
        raise InputError(f"observer counts differ across the corpus: {sorted(counts)}")
    n = counts.pop()
    if not 0 <= remove < n:
        raise InputError(f"remove count must satisfy 0 <= Y < N={n}, got {remove}")
    full = [agreement_order(it.instances, it.observers.agreement()) for it in corpus]
    bitgen = np.random.PCG64(seed)
    subsets = [sample_without_replacement(bitgen, n, remove) for _ in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        per_trial = list(pool.map(lambda s: _trial_sor(corpus, full, s), subsets))
    return _mean(per_trial)[0]


# ---------------------------------------------------------------- statistics


@dataclass
class SizeRankStats:
    sizes_by_rank: dict = field(default_factory=lambda: {r: [] for r in range(1, MAX_RANKED_INSTANCES + 1)})
    images_by_count: dict = field(default_factory=lambda: {r: 0 for r in range(1, MAX_RANKED_INSTANCES + 1)})

    @property
    def n_images(self) -> int:
        return sum(self.images_by_count.values())

    def rows(self) -> list[tuple]:
        out = []
        for r in range(1, MAX_RANKED_INSTANCES + 1):
            s = self.sizes_by_rank[r]
            out.append((
                r,
                len(s),
                float(np.mean(s)) if s else float("nan"),
                float(np.median(s)) if s else float("nan"),
                self.images_by_count[r],
            ))
        return out


STATS_HEADER = ("rank", "n_instances", "mean_size_fraction", "median_size_fraction",
                "images_with_rank_count")


def _instance_size(gt: RankedGroundTruth, label: int) -> int:
    if label in gt.sizes:
        return gt.sizes[label]
    g = gt.gray_values[label]
    if sum(v == g for v in gt.gray_values.values()) > 1:
        raise InputError("instance sizes are ambiguous without a sizes record (shared gray value)")
    return int(np.count_nonzero(gt.map == g))


def size_rank_stats(gts: Sequence[RankedGroundTruth]) -> SizeRankStats:
    """Per-rank instance-size fractions and counts of images by ranked-instance count."""
    stats = SizeRankStats()
    for gt in gts:
        total = gt.map.size
        for r, lab in enumerate(gt.order, start=1):
            stats.sizes_by_rank[r].append(_instance_size(gt, lab) / total)
        if gt.order:
            stats.images_by_count[len(gt.order)] += 1
    return stats
