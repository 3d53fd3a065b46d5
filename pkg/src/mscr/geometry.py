"""Survey landscape: trap arrays, the survey window, and quadrature meshes.

Units are kilometres for space and days for time throughout. All objects
are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TrapArray:
    """K camera-trap locations with unique ids.

    Trap visibility zones are assumed non-overlapping, so an animal can be
    recorded by at most one camera at any instant.
    """

    ids: tuple[str, ...]
    xy: np.ndarray  # (K, 2) km

    def __post_init__(self):
        xy = _readonly(np.atleast_2d(self.xy))
        object.__setattr__(self, "xy", xy)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise ConfigurationError("trap coordinates must be (K, 2)")
        if len(self.ids) != xy.shape[0]:
            raise ConfigurationError("trap ids and coordinates disagree in length")
        if xy.shape[0] < 1:
            raise ConfigurationError("at least one trap is required")
        if len(set(self.ids)) != len(self.ids):
            raise ConfigurationError("trap ids must be unique")
        if not np.all(np.isfinite(xy)):
            raise ConfigurationError("trap coordinates must be finite")
        # duplicate coordinates break the non-overlapping visibility assumption
        rounded = {tuple(p) for p in xy}
        if len(rounded) != xy.shape[0]:
            raise ConfigurationError("two traps share identical coordinates")

    @property
    def size(self) -> int:
        return self.xy.shape[0]

    def index_of(self, trap_id: str) -> int:
        try:
            return self.ids.index(trap_id)
        except ValueError:
            raise KeyError(trap_id) from None

    def distances_to(self, point) -> np.ndarray:
        """Euclidean distance from `point` to every trap, trap order preserved."""
        p = np.asarray(point, dtype=float)
        return np.hypot(self.xy[:, 0] - p[0], self.xy[:, 1] - p[1])

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the trap locations."""
        return (
            float(self.xy[:, 0].min()),
            float(self.xy[:, 0].max()),
            float(self.xy[:, 1].min()),
            float(self.xy[:, 1].max()),
        )


@dataclass(frozen=True)
class SurveyWindow:
    """Study period [0, T] in days; cameras are active throughout."""

    t_end: float

    def __post_init__(self):
        if not (np.isfinite(self.t_end) and self.t_end > 0):
            raise ConfigurationError("survey length T must be positive and finite")

    @property
    def duration(self) -> float:
        return float(self.t_end)


@dataclass(frozen=True)
class SpatialMesh:
    """Uniform rectangular quadrature grid over the buffered study region.

    Points are cell centers on a regular lattice; every point carries the
    same weight `cell_area`, and `total_area` = count * cell_area.
    """

    points: np.ndarray  # (M, 2) km
    cell_area: float    # km^2 per point
    buffer: float       # km, as requested at build time
    spacing: float      # km, lattice pitch
    shape: tuple[int, int] | None = None  # (ny, nx) when built as a lattice

    def __post_init__(self):
        pts = _readonly(np.atleast_2d(self.points))
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ConfigurationError("mesh points must be a non-empty (M, 2) array")
        if not (self.cell_area > 0 and np.isfinite(self.cell_area)):
            raise ConfigurationError("cell_area must be positive")
        if self.shape is not None and self.shape[0] * self.shape[1] != pts.shape[0]:
            raise ConfigurationError("mesh shape does not match the point count")

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def total_area(self) -> float:
        return self.size * self.cell_area

    def bounding_region(self) -> tuple[float, float, float, float]:
        """Extent of the union of mesh cells: lattice span plus half a cell."""
        half = self.spacing / 2.0
        return (
            float(self.points[:, 0].min()) - half,
            float(self.points[:, 0].max()) + half,
            float(self.points[:, 1].min()) - half,
            float(self.points[:, 1].max()) + half,
        )

    def contains(self, point) -> bool:
        xmin, xmax, ymin, ymax = self.bounding_region()
        return bool(xmin <= point[0] <= xmax and ymin <= point[1] <= ymax)

    def coarsened(self, factor: int = 2) -> "SpatialMesh":
        """Every `factor`-th lattice point in each axis; used as a cheap
        warm-start grid. Returns self when the lattice shape is unknown or
        already tiny."""
        if self.shape is None:
            return self
        ny, nx = self.shape
        if ny < 2 * factor or nx < 2 * factor:
            return self
        grid = self.points.reshape(ny, nx, 2)[::factor, ::factor]
        sub_ny, sub_nx = grid.shape[0], grid.shape[1]
        return SpatialMesh(points=grid.reshape(-1, 2),
                           cell_area=self.cell_area * factor * factor,
                           buffer=self.buffer, spacing=self.spacing * factor,
                           shape=(sub_ny, sub_nx))


def build_mesh(traps: TrapArray, buffer: float, spacing: float) -> SpatialMesh:
    """Build the quadrature mesh over the buffered trap bounding box.

    The region is the axis-aligned bounding box of the traps expanded by
    `buffer` on every side. Lattice points run from each low edge to at
    least the high edge at pitch `spacing` (both edges included), so the
    reported area matches the box area to within one cell ring.

    Parameters
    ----------
    traps : TrapArray
    buffer : float
        Expansion of the trap bounding box on every side, km. Must be >= 0.
    spacing : float
        Lattice pitch, km. Must be > 0. The achieved point count and area
        are reported on the returned mesh; choose the spacing to hit a
        target point count.
    """
    if traps.size < 1:
        raise ConfigurationError("cannot build a mesh for an empty trap array")
    if buffer < 0:
        raise ConfigurationError("buffer must be >= 0")
    if spacing <= 0:
        raise ConfigurationError("spacing must be > 0")
    xmin, xmax, ymin, ymax = traps.bounding_box()
    xmin -= buffer
    xmax += buffer
    ymin -= buffer
    ymax += buffer
    xs = _axis_points(xmin, xmax, spacing)
    ys = _axis_points(ymin, ymax, spacing)
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel()])
    return SpatialMesh(points=points, cell_area=spacing * spacing,
                       buffer=float(buffer), spacing=float(spacing),
                       shape=(ys.size, xs.size))


def _axis_points(lo: float, hi: float, spacing: float) -> np.ndarray:
    # inclusive lattice: last point >= hi up to a relative rounding guard
    n = int(np.ceil((hi - lo) / spacing - 1e-9)) + 1
    return lo + spacing * np.arange(max(n, 1))


def region_from_traps(traps: TrapArray, buffer: float) -> tuple[float, float, float, float]:
    """Rectangular study region: trap bounding box expanded by `buffer`."""
    xmin, xmax, ymin, ymax = traps.bounding_box()
    return (xmin - buffer, xmax + buffer, ymin - buffer, ymax + buffer)


def default_trap_grid(nx: int = 5, ny: int = 6, span: float = 6.0) -> TrapArray:
    """Regular nx-by-ny trap grid spanning a `span` x `span` km square.

    The 30-trap default, buffered by 2 km, encloses a square study region
    of about 100 km^2 -- the scale used throughout the simulation studies.
    """
    xs = np.linspace(0.0, span, nx)
    ys = np.linspace(0.0, span, ny)
    xy = np.array([(x, y) for y in ys for x in xs])
    ids = tuple(f"T{i + 1:02d}" for i in range(nx * ny))
    return TrapArray(ids=ids, xy=xy)
