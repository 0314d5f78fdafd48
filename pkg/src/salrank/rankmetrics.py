"""Instance rankings read off saliency maps, and the SOR family of scores."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    ContractError,
    InputError,
    InstanceMap,
    RankedGroundTruth,
    RankScores,
    SaliencyMap,
    _check_same_shape,
)


class Mode(str, enum.Enum):
    AVG = "avg"
    POW = "pow"
    MAX = "max"


def instance_rank_from_saliency(
    saliency: SaliencyMap, instances: InstanceMap, mode: Mode = Mode.AVG, alpha: float = 0.3
) -> RankScores:
    """Per-instance score: mean (avg), sum / size**alpha (pow) or peak (max)."""
    _check_same_shape(saliency.grid, instances.grid, "instance_rank_from_saliency")
    instances.require_nonempty("instance_rank_from_saliency")
    mode = Mode(mode)
    if mode is Mode.POW and not 0 < alpha <= 1:
        raise ContractError(f"pow mode needs alpha in (0, 1], got {alpha}")
    flat_lab = instances.grid.ravel()
    flat_sal = saliency.grid.ravel()
    n = int(flat_lab.max()) + 1
    sums = np.bincount(flat_lab, weights=flat_sal, minlength=n)
    scores, mass = {}, {}
    if mode is Mode.MAX:
        peaks = np.full(n, -np.inf)
        np.maximum.at(peaks, flat_lab, flat_sal)
    for lab in sorted(instances.labels):
        size = instances.size(lab)
        mass[lab] = float(sums[lab])
        if mode is Mode.AVG:
            scores[lab] = float(sums[lab]) / size
        elif mode is Mode.POW:
            scores[lab] = float(sums[lab]) / float(size) ** alpha
        else:
            scores[lab] = float(peaks[lab])
    return RankScores(scores, mass)


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks in ascending order of ``values``; ties share their mean rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v), dtype=np.float64)
    sv = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(a: Sequence[float], b: Sequence[float]) -> Optional[float]:
    """Spearman correlation with average-rank ties; None when undefined.

    Pearson correlation of the two rank vectors. A constant rank vector
    (zero variance) has no correlation and yields None.
    """
    if len(a) != len(b):
        raise InputError(f"spearman_rho: length mismatch ({len(a)} vs {len(b)})")
    if len(a) < 2:
        return None
    ra, rb = average_ranks(a), average_ranks(b)
    da, db = ra - ra.mean(), rb - rb.mean()
    sxx, syy = float(da @ da), float(db @ db)
    if sxx == 0 or syy == 0:
        return None
    rho = float(da @ db) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, rho))


def _shared_rho(gt_order: Sequence[int], pred_scores: Mapping[int, float]):
    common = [lab for lab in gt_order if lab in pred_scores]
    if len(common) < 2:
        return None, len(common)
    gt_rank = list(range(1, len(common) + 1))
    # negate so the largest score gets rank 1, matching gt ordinals
    pred = [-float(pred_scores[lab]) for lab in common]
    return spearman_rho(gt_rank, pred), len(common)


def sor(gt_order: Sequence[int], pred_scores: Mapping[int, float]) -> Optional[float]:
    """Normalized rank agreement ``(rho + 1) / 2`` over the shared instances.

    ``gt_order`` lists labels most-salient first; higher predicted scores
    mean more salient. Returns None with fewer than two shared instances or
    when the correlation is undefined.
    """
    rho, _ = _shared_rho(gt_order, pred_scores)
    return None if rho is None else (rho + 1.0) / 2.0


@dataclass(frozen=True)
class ImageRanking:
    image_id: str
    rho: Optional[float]
    sor: Optional[float]
    matched: int


@dataclass(frozen=True)
class RankingResult:
    per_image: tuple[ImageRanking, ...]
    dataset_sor: Optional[float]
    defined_count: int
    undefined_count: int

    def as_dict(self) -> dict:
        return {
            "dataset_sor": self.dataset_sor,
            "defined_count": self.defined_count,
            "undefined_count": self.undefined_count,
            "per_image": [
                {"id": r.image_id, "rho": r.rho, "sor": r.sor, "matched": r.matched}
                for r in self.per_image
            ],
        }


def _gt_order(gt) -> tuple[int, ...]:
    if isinstance(gt, RankedGroundTruth):
        return gt.order
    return tuple(int(k) for k in gt)


def score_image(image_id, gt, saliency: SaliencyMap, instances: InstanceMap,
                mode: Mode = Mode.AVG, alpha: float = 0.3) -> ImageRanking:
    order = _gt_order(gt)
    if not instances:
        return ImageRanking(str(image_id), None, None, 0)
    pred = instance_rank_from_saliency(saliency, instances, mode, alpha).scores
    rho, matched = _shared_rho(order, pred)
    s = None if rho is None else (rho + 1.0) / 2.0
    return ImageRanking(str(image_id), rho, s, matched)


def summarize(rows: Sequence[ImageRanking]) -> RankingResult:
    defined = [r.sor for r in rows if r.sor is not None]
    mean = math.fsum(defined) / len(defined) if defined else None
    return RankingResult(tuple(rows), mean, len(defined), len(rows) - len(defined))


def dataset_sor(pairs, mode: Mode = Mode.AVG, alpha: float = 0.3,
                threads: Optional[int] = None) -> RankingResult:
    """Mean SOR over images with a defined score.

    ``pairs`` yields ``(image_id, gt, saliency, instances)`` where ``gt`` is a
    :class:`RankedGroundTruth` or a most-salient-first label sequence.
    Undefined images are counted, never averaged in as zero.
    """
    pairs = list(pairs)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(lambda p: score_image(*p, mode=mode, alpha=alpha), pairs))
    return summarize(rows)
