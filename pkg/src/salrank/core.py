"""Domain types shared across the toolkit.

All 2-D maps are stored as read-only numpy arrays of shape ``(height, width)``
in row-major order. Every type validates its invariants on construction and
raises :class:`InvariantError` naming the violated clause.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence, Union

import numpy as np

MAX_RANKED_INSTANCES = 5
STACK_DEPTH = 5


class SalRankError(Exception):
    """Base class for all toolkit errors."""


class InputError(SalRankError, ValueError):
    """Bad user input: malformed files, out-of-range arguments, mismatched maps."""


class ParameterError(InputError):
    pass


class InvariantError(InputError):
    pass


class FormatError(InputError):
    pass


class IntegrityError(InputError):
    pass


class MetricUndefinedError(InputError):
    pass


class ContractError(SalRankError):
    """A caller broke a documented precondition (programming error)."""


class Setting(str, enum.Enum):
    RELATIVE = "relative"
    ABSOLUTE = "absolute"


def as_grid(values, name: str = "grid", dtype=None) -> np.ndarray:
    """Validate and freeze a 2-D map."""
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.ndim != 2:
        raise InvariantError(f"{name}: expected a 2-D map, got {arr.ndim} dimension(s)")
    h, w = arr.shape
    if w < 1 or h < 1:
        raise InvariantError(f"{name}: width >= 1 and height >= 1 violated ({w}x{h})")
    arr.setflags(write=False)
    return arr


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise InputError(
            f"{what}: dimension mismatch {a.shape[1]}x{a.shape[0]} vs {b.shape[1]}x{b.shape[0]}"
        )


class InstanceMap:
    """Per-pixel integer instance labels, 0 is background."""

    __slots__ = ("grid", "labels", "_sizes")

    def __init__(self, grid):
        raw = np.asarray(grid)
        if raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or np.any(raw != np.floor(raw)):
                raise InvariantError("InstanceMap: every value must be an integer")
        elif raw.dtype.kind not in "iub":
            raise InvariantError(f"InstanceMap: unsupported dtype {raw.dtype}")
        if raw.size and raw.min() < 0:
            raise InvariantError("InstanceMap: every value must be >= 0")
        self.grid = as_grid(raw, "InstanceMap", dtype=np.int64)
        uniq, counts = np.unique(self.grid, return_counts=True)
        keep = uniq != 0
        self._sizes = {int(k): int(c) for k, c in zip(uniq[keep], counts[keep])}
        self.labels = frozenset(self._sizes)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def n_pixels(self) -> int:
        return int(self.grid.size)

    def __len__(self) -> int:
        return len(self.labels)

    def __bool__(self) -> bool:
        return bool(self.labels)

    def size(self, label: int) -> int:
        if label not in self._sizes:
            raise InputError(f"InstanceMap: label {label} not present")
        return self._sizes[label]

    @property
    def sizes(self) -> dict[int, int]:
        return dict(self._sizes)

    def mask(self, label: int) -> np.ndarray:
        if label not in self._sizes:
            raise InputError(f"InstanceMap: label {label} not present")
        return self.grid == label

    def foreground(self) -> np.ndarray:
        return self.grid != 0

    def keep(self, labels) -> "InstanceMap":
        """Return a copy with every label outside ``labels`` zeroed."""
        labels = sorted(set(labels))
        out = np.where(np.isin(self.grid, labels), self.grid, 0)
        return InstanceMap(out)

    def require_nonempty(self, what: str) -> None:
        if not self.labels:
            raise InvariantError(f"{what}: at least one nonzero label is required")

    def __eq__(self, other):
        return isinstance(other, InstanceMap) and np.array_equal(self.grid, other.grid)

    def __repr__(self):
        h, w = self.shape
        return f"InstanceMap({w}x{h}, labels={sorted(self.labels)})"


@dataclass(frozen=True)
class FixationPoints:
    """Fixation locations as integer pixel coordinates ``(x, y)``."""

    points: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pts = tuple((int(x), int(y)) for x, y in self.points)
        object.__setattr__(self, "points", pts)

    def check_bounds(self, shape: tuple[int, int]) -> None:
        h, w = shape
        for x, y in self.points:
            if not (0 <= x < w and 0 <= y < h):
                raise InputError(f"fixation point ({x}, {y}) outside {w}x{h} grid")


@dataclass(frozen=True, eq=False)
class RawDensity:
    """A precomputed, unblurred fixation density."""

    grid: np.ndarray

    def __post_init__(self):
        g = as_grid(self.grid, "RawDensity", dtype=np.float64)
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise InvariantError("RawDensity: all values must be finite and >= 0")
        object.__setattr__(self, "grid", g)


FixationInput = Union[FixationPoints, RawDensity]


@dataclass(frozen=True, eq=False)
class FixationDensity:
    """Blurred fixation map used for instance scoring."""

    grid: np.ndarray

    def __post_init__(self):
        g = as_grid(self.grid, "FixationDensity", dtype=np.float64)
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise InvariantError("FixationDensity: all values must be finite and >= 0")
        object.__setattr__(self, "grid", g)

    @property
    def shape(self):
        return self.grid.shape

    def total(self) -> float:
        return float(self.grid.sum())

    def scaled(self, c: float) -> "FixationDensity":
        return FixationDensity(self.grid * c)


@dataclass(frozen=True)
class RankScores:
    """Per-instance ranking scores.

    ``mass`` keeps the raw masked density behind each score; it is the
    secondary key when scores tie.
    """

    scores: Mapping[int, float]
    mass: Mapping[int, float] = field(default_factory=dict)
    normalized: Mapping[int, float] = field(init=False)

    def __post_init__(self):
        scores = {int(k): float(v) for k, v in self.scores.items()}
        for k, v in scores.items():
            if not np.isfinite(v) or v < 0:
                raise InvariantError(f"RankScores: score for {k} must be a finite real >= 0")
        mass = {int(k): float(v) for k, v in self.mass.items()}
        top = max(scores.values(), default=0.0)
        norm = {k: (v / top if top > 0 else 0.0) for k, v in scores.items()}
        if top > 0:
            # pin the maximum to exactly 1 regardless of rounding
            for k, v in scores.items():
                if v == top:
                    norm[k] = 1.0
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "normalized", norm)

    def labels(self) -> list[int]:
        return sorted(self.scores)

    def strict_order(self) -> list[int]:
        """Labels most-salient first: score desc, mass desc, label asc."""
        return sorted(
            self.scores,
            key=lambda k: (-self.scores[k], -self.mass.get(k, 0.0), k),
        )

    def restrict(self, labels) -> "RankScores":
        labels = set(labels)
        return RankScores(
            {k: v for k, v in self.scores.items() if k in labels},
            {k: v for k, v in self.mass.items() if k in labels},
        )


@dataclass(frozen=True, eq=False)
class RankedGroundTruth:
    """Strictly ordered ranking of instances plus its quantized gray map.

    ``scores`` and ``sizes`` (pixel counts) ride along so the sidecar file can
    carry them; they do not take part in equality of orderings.
    """

    setting: Setting
    order: tuple[int, ...]
    gray_values: Mapping[int, int]
    map: np.ndarray
    scores: Mapping[int, float] = field(default_factory=dict)
    sizes: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        setting = Setting(self.setting)
        order = tuple(int(k) for k in self.order)
        gray = {int(k): int(v) for k, v in self.gray_values.items()}
        gmap = as_grid(self.map, "RankedGroundTruth.map", dtype=np.int64)
        if len(set(order)) != len(order):
            raise InvariantError("RankedGroundTruth: no two instances may share an ordinal position")
        if len(order) > MAX_RANKED_INSTANCES:
            raise InvariantError(
                f"RankedGroundTruth: |order| <= {MAX_RANKED_INSTANCES} violated ({len(order)})"
            )
        if set(gray) != set(order):
            raise InvariantError("RankedGroundTruth: gray_values must cover exactly the ordered labels")
        seq = [gray[k] for k in order]
        if any(not 1 <= g <= 255 for g in seq):
            raise InvariantError("RankedGroundTruth: gray values must lie in [1, 255]")
        for a, b in zip(seq, seq[1:]):
            if b > a:
                raise InvariantError("RankedGroundTruth: gray values must be non-increasing along order")
            if setting is Setting.RELATIVE and b == a:
                raise InvariantError(
                    "RankedGroundTruth: gray values must be strictly decreasing under Relative"
                )
        present = set(np.unique(gmap).tolist()) - {0}
        if not present <= set(seq):
            raise InvariantError("RankedGroundTruth: map contains values outside gray_values")
        object.__setattr__(self, "setting", setting)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "gray_values", gray)
        object.__setattr__(self, "map", gmap)
        object.__setattr__(self, "scores", {int(k): float(v) for k, v in self.scores.items()})
        object.__setattr__(self, "sizes", {int(k): int(v) for k, v in self.sizes.items()})

    def __eq__(self, other):
        if not isinstance(other, RankedGroundTruth):
            return NotImplemented
        return (
            self.setting is other.setting
            and self.order == other.order
            and self.gray_values == other.gray_values
            and np.array_equal(self.map, other.map)
            and self.scores == other.scores
            and self.sizes == other.sizes
        )

    def __len__(self):
        return len(self.order)


def check_nesting(slices: Sequence[np.ndarray]) -> None:
    """Raise :class:`IntegrityError` unless slice k is a subset of slice k+1."""
    for i in range(len(slices) - 1):
        lost = slices[i] & ~slices[i + 1]
        if lost.any():
            y, x = np.argwhere(lost)[0]
            raise IntegrityError(
                f"nesting violated between slice {i + 1} and slice {i + 2}: "
                f"pixel ({x}, {y}) is in slice {i + 1} but not in slice {i + 2}"
            )


@dataclass(frozen=True, eq=False)
class NestedStack:
    """Binary slices in accumulating order: slice 1 is the most exclusive."""

    slices: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.slices) < 1:
            raise InvariantError("NestedStack: at least one slice is required")
        sl = tuple(as_grid(np.asarray(s) != 0, f"NestedStack.slice{i + 1}", dtype=bool)
                   for i, s in enumerate(self.slices))
        for s in sl[1:]:
            _check_same_shape(sl[0], s, "NestedStack")
        check_nesting(sl)
        object.__setattr__(self, "slices", sl)

    @property
    def n_slices(self) -> int:
        return len(self.slices)

    @property
    def shape(self):
        return self.slices[0].shape

    def __eq__(self, other):
        if not isinstance(other, NestedStack):
            return NotImplemented
        return self.n_slices == other.n_slices and all(
            np.array_equal(a, b) for a, b in zip(self.slices, other.slices)
        )


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    grid: np.ndarray

    def __post_init__(self):
        g = as_grid(self.grid, "SaliencyMap", dtype=np.float64)
        if not np.all(np.isfinite(g)) or g.min() < 0 or g.max() > 1:
            raise InvariantError("SaliencyMap: every value must lie in [0, 1]")
        object.__setattr__(self, "grid", g)

    @property
    def shape(self):
        return self.grid.shape

    @classmethod
    def from_uint8(cls, arr) -> "SaliencyMap":
        return cls(np.asarray(arr, dtype=np.float64) / 255.0)


@dataclass(frozen=True, eq=False)
class ObserverMaskSet:
    """One binary mask per annotator."""

    observers: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.observers) < 1:
            raise InvariantError("ObserverMaskSet: N >= 1 violated")
        obs = tuple(as_grid(np.asarray(m) != 0, f"observer {i + 1}", dtype=bool)
                    for i, m in enumerate(self.observers))
        for m in obs[1:]:
            _check_same_shape(obs[0], m, "ObserverMaskSet")
        object.__setattr__(self, "observers", obs)

    @property
    def count(self) -> int:
        return len(self.observers)

    @property
    def shape(self):
        return self.observers[0].shape

    def agreement(self) -> np.ndarray:
        return np.sum(np.stack(self.observers), axis=0, dtype=np.int64)

    def without(self, indices) -> "ObserverMaskSet":
        drop = set(int(i) for i in indices)
        return ObserverMaskSet(tuple(m for i, m in enumerate(self.observers) if i not in drop))


@dataclass(frozen=True)
class GenConfig:
    """Ground-truth generation parameters.

    ``alpha`` is the size-normalization exponent; ``alpha1``/``alpha2`` are
    the pruning thresholds (size fraction, normalized score).
    """

    sigma: float = 10.5
    mu: int = 80
    xi: int = 5
    ell: float = 0.4
    gamma: float = 0.65
    alpha1: float = 0.4
    alpha2: float = 0.7
    alpha: float = 0.3
    setting: Setting = Setting.RELATIVE

    def __post_init__(self):
        object.__setattr__(self, "setting", Setting(self.setting))
        if not self.sigma > 0:
            raise ParameterError(f"GenConfig: sigma > 0 violated ({self.sigma})")
        if int(self.mu) != self.mu or self.mu < 1:
            raise ParameterError(f"GenConfig: mu >= 1 (integer) violated ({self.mu})")
        object.__setattr__(self, "mu", int(self.mu))
        if int(self.xi) != self.xi or self.xi < 1:
            raise ParameterError(f"GenConfig: xi >= 1 violated ({self.xi})")
        object.__setattr__(self, "xi", int(self.xi))
        for name in ("ell", "gamma", "alpha1", "alpha2"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ParameterError(f"GenConfig: {name} in [0, 1] violated ({v})")
        if not 0 < self.alpha <= 1:
            raise ParameterError(f"GenConfig: alpha in (0, 1] violated ({self.alpha})")

    def with_(self, **changes) -> "GenConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


# The two rows of the published generation-parameter table.
PRESETS: dict[str, GenConfig] = {
    "v1": GenConfig(sigma=10.5, mu=80, xi=5, ell=0.4, gamma=0.65, alpha1=0.4, alpha2=0.7),
    "v2": GenConfig(sigma=10.5, mu=80, xi=5, ell=0.7, gamma=0.65, alpha1=0.4, alpha2=0.9),
}
