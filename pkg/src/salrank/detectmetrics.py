"""Salient-object detection metrics under multi-observer binarization.

Each binary ground truth is obtained by requiring agreement of at least
``k`` observers; reported scores take the best level per metric (max for
AUC, F-measure and S-measure, min for MAE).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    InputError,
    MetricUndefinedError,
    NestedStack,
    ObserverMaskSet,
    SaliencyMap,
    _check_same_shape,
)

DEFAULT_BETA_SQ = 0.3
DEFAULT_THRESHOLDS = np.arange(1, 256) / 255.0
# absorbs representation noise so v/255 and 1 - (255-v)/255 hit the same threshold
_THRESH_EPS = 1e-12
_EPS = np.spacing(1)

Agreement = Union[NestedStack, ObserverMaskSet, tuple]


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    tpr: float
    fpr: float
    precision: float
    recall: float


@dataclass
class DetectReport:
    auc: Optional[float]
    max_f: Optional[float]
    avg_f: Optional[float]
    mae: float
    s_measure: float
    best_level: dict = field(default_factory=dict)
    curve: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "auc": self.auc,
            "max_f": self.max_f,
            "avg_f": self.avg_f,
            "mae": self.mae,
            "s_measure": self.s_measure,
            "best_level": dict(self.best_level),
        }


def n_levels(agreement: Agreement) -> int:
    if isinstance(agreement, NestedStack):
        return agreement.n_slices
    if isinstance(agreement, ObserverMaskSet):
        return agreement.count
    return int(agreement[1])


def binarize_gt(agreement: Agreement, k: int) -> np.ndarray:
    """Pixels judged salient by at least ``k`` observers.

    ``agreement`` is an observer set, a canonical stack (slice 1 = all
    observers agree) or a ``(counts, n)`` pair.
    """
    n = n_levels(agreement)
    if not 1 <= k <= n:
        raise InputError(f"binarization level {k} outside 1..{n}")
    if isinstance(agreement, NestedStack):
        return agreement.slices[n - k]
    if isinstance(agreement, ObserverMaskSet):
        return agreement.agreement() >= k
    return np.asarray(agreement[0]) >= k


def _counts_at_or_above(values: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    s = np.sort(values)
    return len(s) - np.searchsorted(s, thresholds - _THRESH_EPS, side="left")


def roc_points(saliency: SaliencyMap, gt: np.ndarray, thresholds=None,
               require_negatives: bool = True) -> list[CurvePoint]:
    """Confusion-derived curve points, one per threshold (``saliency >= t``).

    Precision is 1 where nothing is predicted positive. With
    ``require_negatives=False`` an all-positive ground truth is allowed and
    FPR is reported as 0 (PR-only use).
    """
    gt = np.asarray(gt, dtype=bool)
    _check_same_shape(saliency.grid, gt, "roc_points")
    th = DEFAULT_THRESHOLDS if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    pos_vals = saliency.grid[gt]
    neg_vals = saliency.grid[~gt]
    n_pos, n_neg = len(pos_vals), len(neg_vals)
    if n_pos == 0:
        raise MetricUndefinedError("ground truth has no positive pixels")
    if n_neg == 0 and require_negatives:
        raise MetricUndefinedError("ground truth has no negative pixels; ROC undefined")
    tp = _counts_at_or_above(pos_vals, th)
    fp = _counts_at_or_above(neg_vals, th)
    pts = []
    for t, a, b in zip(th.tolist(), tp.tolist(), fp.tolist()):
        rec = a / n_pos
        prec = a / (a + b) if a + b else 1.0
        fpr = b / n_neg if n_neg else 0.0
        pts.append(CurvePoint(threshold=t, tpr=rec, fpr=fpr, precision=prec, recall=rec))
    return pts


def auc(points: Sequence[CurvePoint]) -> float:
    """Trapezoidal area under the ROC curve, closed with (0,0) and (1,1)."""
    if not points:
        raise InputError("auc needs at least one curve point")
    xy = sorted({(p.fpr, p.tpr) for p in points} | {(0.0, 0.0), (1.0, 1.0)})
    x = np.array([a for a, _ in xy])
    y = np.array([b for _, b in xy])
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def f_score(precision: float, recall: float, beta_sq: float = DEFAULT_BETA_SQ) -> float:
    if precision + recall == 0:
        return 0.0
    return (1 + beta_sq) * precision * recall / (beta_sq * precision + recall)


def f_measures(points: Sequence[CurvePoint], beta_sq: float = DEFAULT_BETA_SQ) -> tuple[float, float]:
    """``(max_f, avg_f)`` over the thresholds of ``points``."""
    if not points:
        raise InputError("f_measures needs at least one curve point")
    if not beta_sq > 0:
        raise InputError(f"beta_sq must be > 0, got {beta_sq}")
    fs = [f_score(p.precision, p.recall, beta_sq) for p in points]
    return max(fs), math.fsum(fs) / len(fs)


def mae(saliency: SaliencyMap, gt: np.ndarray) -> float:
    gt = np.asarray(gt, dtype=np.float64)
    _check_same_shape(saliency.grid, gt, "mae")
    return float(np.mean(np.abs(saliency.grid - gt)))


# ---------------------------------------------------------------- S-measure
# Structure measure: alpha * object-aware + (1 - alpha) * region-aware
# similarity, with regions split into quadrants at the gt centroid.


def _s_object(pred: np.ndarray, region: np.ndarray) -> float:
    vals = pred[region]
    if vals.size == 0:
        return 0.0
    x = vals.mean()
    sigma = vals.std(ddof=1) if vals.size > 1 else 0.0
    return float(2.0 * x / (x * x + 1.0 + sigma + _EPS))


def _object_score(pred: np.ndarray, gt: np.ndarray) -> float:
    u = gt.mean()
    fg = _s_object(pred * gt, gt)
    bg = _s_object((1.0 - pred) * ~gt, ~gt)
    return float(u * fg + (1.0 - u) * bg)


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    if n == 0:
        return 0.0
    x, y = pred.mean(), gt.mean()
    if n > 1:
        sx = np.sum((pred - x) ** 2) / (n - 1)
        sy = np.sum((gt - y) ** 2) / (n - 1)
        sxy = np.sum((pred - x) * (gt - y)) / (n - 1)
    else:
        sx = sy = sxy = 0.0
    a = 4.0 * x * y * sxy
    b = (x * x + y * y) * (sx + sy)
    if a != 0:
        return float(a / (b + _EPS))
    if b == 0:
        return 1.0
    return 0.0


def _centroid(gt: np.ndarray) -> tuple[int, int]:
    h, w = gt.shape
    if not gt.any():
        return int(round(w / 2)), int(round(h / 2))
    ys, xs = np.nonzero(gt)
    # +1 matches the 1-based centroid of the reference formulation
    return int(np.round(xs.mean())) + 1, int(np.round(ys.mean())) + 1


def _region_score(pred: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    x, y = _centroid(gt)
    gtf = gt.astype(np.float64)
    area = h * w
    w1 = x * y / area
    w2 = y * (w - x) / area
    w3 = (h - y) * x / area
    w4 = 1.0 - w1 - w2 - w3
    parts = [
        (slice(0, y), slice(0, x)),
        (slice(0, y), slice(x, w)),
        (slice(y, h), slice(0, x)),
        (slice(y, h), slice(x, w)),
    ]
    total = 0.0
    for wt, (rs, cs) in zip((w1, w2, w3, w4), parts):
        if wt > 0:
            total += wt * _ssim(pred[rs, cs], gtf[rs, cs])
    return total


def s_measure(saliency: SaliencyMap, gt: np.ndarray, mix_alpha: float = 0.5) -> float:
    gt = np.asarray(gt, dtype=bool)
    _check_same_shape(saliency.grid, gt, "s_measure")
    pred = saliency.grid
    y = gt.mean()
    if y == 0:
        return float(1.0 - pred.mean())
    if y == 1:
        return float(pred.mean())
    sm = mix_alpha * _object_score(pred, gt) + (1.0 - mix_alpha) * _region_score(pred, gt)
    return float(min(1.0, max(0.0, sm)))


# ---------------------------------------------------------------- protocol


def evaluate_binary(saliency: SaliencyMap, gt: np.ndarray, beta_sq: float = DEFAULT_BETA_SQ,
                    thresholds=None) -> dict:
    """All metrics against one binary ground truth; undefined entries are None."""
    gt = np.asarray(gt, dtype=bool)
    out = {"auc": None, "max_f": None, "avg_f": None, "curve": None,
           "mae": mae(saliency, gt), "s_measure": s_measure(saliency, gt)}
    if gt.any():
        degenerate = gt.all()
        pts = roc_points(saliency, gt, thresholds, require_negatives=not degenerate)
        out["max_f"], out["avg_f"] = f_measures(pts, beta_sq)
        if not degenerate:
            out["auc"] = auc(pts)
            out["curve"] = pts
    return out


def best_over_observers(saliency: SaliencyMap, agreement: Agreement,
                        beta_sq: float = DEFAULT_BETA_SQ, thresholds=None) -> DetectReport:
    """Evaluate at every agreement level and keep the best level per metric.

    Ties between levels go to the lowest level. The attached curve is the one
    at the best-AUC level.
    """
    n = n_levels(agreement)
    if n < 1:
        raise InputError("agreement needs at least one level")
    per_level = {k: evaluate_binary(saliency, binarize_gt(agreement, k), beta_sq, thresholds)
                 for k in range(1, n + 1)}

    def pick(metric, better):
        best_k, best_v = None, None
        for k, res in per_level.items():
            v = res[metric]
            if v is not None and (best_v is None or better(v, best_v)):
                best_k, best_v = k, v
        return best_k, best_v

    hi = lambda a, b: a > b  # noqa: E731
    lo = lambda a, b: a < b  # noqa: E731
    k_auc, v_auc = pick("auc", hi)
    if k_auc is None:
        raise MetricUndefinedError(f"all {n} binarization levels are degenerate (all-0 or all-1)")
    k_maxf, v_maxf = pick("max_f", hi)
    k_avgf, v_avgf = pick("avg_f", hi)
    k_mae, v_mae = pick("mae", lo)
    k_s, v_s = pick("s_measure", hi)
    return DetectReport(
        auc=v_auc, max_f=v_maxf, avg_f=v_avgf, mae=v_mae, s_measure=v_s,
        best_level={"auc": k_auc, "max_f": k_maxf, "avg_f": k_avgf, "mae": k_mae, "s_measure": k_s},
        curve=per_level[k_auc]["curve"],
    )
