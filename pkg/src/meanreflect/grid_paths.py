"""Time grids, cadlag step paths and path functionals (total variation, eta-oscillations)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .errors import InvalidArgument

# Grid-point lookups are shifted by this amount so that k/n computed by
# different float expressions still lands on its own grid point.
EVAL_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class TimeGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise InvalidArgument("a time grid needs at least 2 points")
        if pts[0] != 0.0:
            raise InvalidArgument(f"a time grid must start at 0, got {pts[0]!r}")
        if not np.all(np.diff(pts) > 0):
            raise InvalidArgument("grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, n: int, q: float) -> "TimeGrid":
        """The grid {k/n : k/n <= q}."""
        if n < 1:
            raise InvalidArgument(f"steps per unit time must be >= 1, got {n}")
        if not q > 0:
            raise InvalidArgument(f"horizon must be positive, got {q}")
        last = int(np.floor(n * q + 1e-9))
        if last < 1:
            raise InvalidArgument(f"horizon {q} shorter than one step 1/{n}")
        return cls(np.arange(last + 1) / n)

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.all(self.points == other.points))

    __hash__ = None

    def index(self, t) -> np.ndarray | int:
        """Index of the largest grid point <= t."""
        idx = np.searchsorted(self.points, np.asarray(t, dtype=float) + EVAL_EPS, side="right") - 1
        if np.any(idx < 0):
            raise InvalidArgument("evaluation time before grid start")
        return int(idx) if np.ndim(idx) == 0 else idx

    def last_index(self, q: float) -> int:
        """Index of the last grid point <= q; q beyond the horizon is an error."""
        if q > self.horizon + EVAL_EPS:
            raise InvalidArgument(f"time {q} beyond grid horizon {self.horizon}")
        if q < 0:
            raise InvalidArgument(f"negative time {q}")
        return self.index(q)

    def union(self, other: "TimeGrid") -> "TimeGrid":
        return TimeGrid(np.union1d(self.points, other.points))


@dataclass(frozen=True, eq=False)
class GridPath:
    """Right-continuous step function: value at the largest grid point <= t."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (len(self.grid),):
            raise InvalidArgument(
                f"path has {vals.shape} values for a grid of {len(self.grid)} points"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: TimeGrid, c: float) -> "GridPath":
        return cls(grid, np.full(len(grid), float(c)))

    @property
    def times(self) -> np.ndarray:
        return self.grid.points

    def __call__(self, t):
        return self.values[self.grid.index(t)]

    def __len__(self):
        return self.values.size

    def refine(self, grid: TimeGrid) -> "GridPath":
        """Resample onto a finer (or any) grid by step evaluation."""
        return GridPath(grid, self(grid.points))

    def upto(self, q: float) -> np.ndarray:
        return self.values[: self.grid.last_index(q) + 1]

    def _other(self, other):
        if isinstance(other, GridPath):
            if other.grid != self.grid:
                raise InvalidArgument("paths live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridPath(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridPath(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridPath(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return GridPath(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridPath(self.grid, -self.values)


@dataclass(frozen=True)
class BarrierPair:
    """Lower and upper barriers; ``None`` on a side means that side is unbounded."""

    lower: GridPath | None
    upper: GridPath | None

    def __post_init__(self):
        if self.lower is not None and self.upper is not None:
            if self.lower.grid != self.upper.grid:
                raise InvalidArgument("barriers live on different grids")
            bad = np.nonzero(self.lower.values > self.upper.values)[0]
            if bad.size:
                j = int(bad[0])
                raise InvalidArgument(
                    f"lower barrier above upper barrier at t={self.lower.times[j]!r}"
                )

    @property
    def grid(self) -> TimeGrid | None:
        if self.lower is not None:
            return self.lower.grid
        return self.upper.grid if self.upper is not None else None

    def lower_values(self, size: int | None = None) -> np.ndarray:
        """Lower values with -inf standing in for an absent barrier (for formulas only)."""
        if self.lower is not None:
            return self.lower.values
        return np.full(size if size is not None else len(self.grid), -np.inf)

    def upper_values(self, size: int | None = None) -> np.ndarray:
        if self.upper is not None:
            return self.upper.values
        return np.full(size if size is not None else len(self.grid), np.inf)

    def min_width(self, q: float | None = None) -> float:
        if self.lower is None or self.upper is None:
            return np.inf
        width = self.upper.values - self.lower.values
        if q is not None:
            width = width[: self.lower.grid.last_index(q) + 1]
        return float(width.min())


def barrier_distance(b1: BarrierPair, b2: BarrierPair, q: float) -> float:
    """sup_{t<=q} max(|l1-l2|, |u1-u2|); an absent side on both problems contributes 0."""
    dist = 0.0
    for p1, p2 in ((b1.lower, b2.lower), (b1.upper, b2.upper)):
        if p1 is None and p2 is None:
            continue
        if p1 is None or p2 is None:
            return np.inf
        dist = max(dist, float(np.max(np.abs(p1.upto(q) - p2.upto(q)))))
    return dist


# ---------------------------------------------------------------------------
# Piecewise specifications (the serializable ingestion format)


@dataclass(frozen=True)
class PiecewisePath:
    """Cadlag piecewise-linear function built from pieces (start, level, slope).

    On ``[start_i, start_{i+1})`` the value is ``level_i + slope_i * (t - start_i)``.
    """

    starts: tuple[float, ...]
    levels: tuple[float, ...]
    slopes: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not self.slopes:
            object.__setattr__(self, "slopes", (0.0,) * len(self.starts))
        if not (len(self.starts) == len(self.levels) == len(self.slopes)) or not self.starts:
            raise InvalidArgument("piecewise path needs matching non-empty starts/levels/slopes")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise InvalidArgument("piece start times must be strictly increasing")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        starts = np.asarray(self.starts)
        idx = np.clip(np.searchsorted(starts, t + EVAL_EPS, side="right") - 1, 0, None)
        lev = np.asarray(self.levels)[idx]
        slo = np.asarray(self.slopes)[idx]
        return lev + slo * np.maximum(t - starts[idx], 0.0)

    @classmethod
    def from_spec(cls, spec: Mapping) -> "PiecewisePath":
        """Build from ``{segments: [{from, to, value | slope}], jumps: [{at, to_value}]}``.

        A segment with ``value`` (and optional ``slope``) starts at that level; a segment
        with only ``slope`` continues from the left limit of the path at ``from``. A jump
        resets the level at ``at`` and keeps the slope of the segment it falls in.
        Segments must be contiguous; the last one is extended to the right.
        """
        unknown = set(spec) - {"segments", "jumps"}
        if unknown:
            raise InvalidArgument(f"unknown piecewise key(s): {sorted(unknown)}")
        segments = sorted(spec.get("segments", []), key=lambda s: float(s["from"]))
        jumps = sorted(spec.get("jumps", []), key=lambda j: float(j["at"]))
        if not segments:
            raise InvalidArgument("piecewise spec needs at least one segment")
        for seg in segments:
            bad = set(seg) - {"from", "to", "value", "slope"}
            if bad:
                raise InvalidArgument(f"unknown segment key(s): {sorted(bad)}")
            if "value" not in seg and "slope" not in seg:
                raise InvalidArgument("segment needs 'value' or 'slope'")
        for a, b in zip(segments, segments[1:]):
            if abs(float(a["to"]) - float(b["from"])) > EVAL_EPS:
                raise InvalidArgument(f"segments not contiguous at {a['to']} / {b['from']}")
        for j in jumps:
            bad = set(j) - {"at", "to_value"}
            if bad:
                raise InvalidArgument(f"unknown jump key(s): {sorted(bad)}")

        events = [(float(s["from"]), 0, s) for s in segments] + [
            (float(j["at"]), 1, j) for j in jumps
        ]
        events.sort(key=lambda e: (e[0], e[1]))
        starts, levels, slopes = [], [], []
        slope = 0.0
        for time, kind, ev in events:
            if starts:
                left = levels[-1] + slopes[-1] * (time - starts[-1])
            elif "value" in ev or kind == 1:
                left = None
            else:
                raise InvalidArgument("first segment must carry a 'value'")
            if kind == 0:
                slope = float(ev.get("slope", 0.0))
                level = float(ev["value"]) if "value" in ev else left
            else:
                level = float(ev["to_value"])
            if starts and time - starts[-1] <= EVAL_EPS:
                starts[-1], levels[-1], slopes[-1] = time, level, slope
            else:
                starts.append(time)
                levels.append(level)
                slopes.append(slope)
        if starts[0] > 0:
            starts.insert(0, 0.0)
            levels.insert(0, levels[0])
            slopes.insert(0, 0.0)
        return cls(tuple(starts), tuple(levels), tuple(slopes))


PathSource = Union[GridPath, PiecewisePath, Callable[[np.ndarray], np.ndarray], float, int]


def sample(source: PathSource, grid: TimeGrid) -> GridPath:
    """Evaluate any path source at the points of ``grid``."""
    if isinstance(source, (int, float)):
        return GridPath.constant(grid, float(source))
    vals = np.broadcast_to(np.asarray(source(grid.points), dtype=float), (len(grid),))
    return GridPath(grid, vals)


def discretize(source: PathSource, n: int, q: float) -> GridPath:
    """The step path t -> source(floor(n t)/n) on the uniform grid {k/n <= q}."""
    return sample(source, TimeGrid.uniform(n, q))


# ---------------------------------------------------------------------------
# Functionals


def total_variation(path: GridPath, q: float | None = None) -> float:
    """Sum of |increments| over grid points up to q."""
    vals = path.values if q is None else path.upto(q)
    return float(np.sum(np.abs(np.diff(vals))))


def count_oscillations(path: GridPath, eta: float, q: float | None = None) -> int:
    """Number of eta-oscillations of a step path on [0, q].

    Greedy sweep: keep the running min/max since the last cut; once the range exceeds
    eta an oscillation ends at the current point, which becomes the new start.
    Taking the earliest possible end is optimal because consecutive pairs may share
    an endpoint.
    """
    if not eta > 0:
        raise InvalidArgument(f"eta must be positive, got {eta}")
    vals = path.values if q is None else path.upto(q)
    return _greedy_oscillations(vals.tolist(), float(eta))


def _greedy_oscillations(vals: Sequence[float], eta: float) -> int:
    if not vals:
        return 0
    count = 0
    lo = hi = vals[0]
    for v in vals[1:]:
        if v < lo:
            lo = v
        elif v > hi:
            hi = v
        if hi - lo > eta:
            count += 1
            lo = hi = v
    return count


def sup_abs(path: GridPath | None, q: float | None = None) -> float:
    if path is None:
        return 0.0
    vals = path.values if q is None else path.upto(q)
    return float(np.max(np.abs(vals)))
