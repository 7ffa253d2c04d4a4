"""Discrete geometry of the thin porous medium and its periodicity cell.

The unit cell is Y = Y' x (0,1) with Y' = [-1/2,1/2]^2; the solid part is a
vertical cylinder of radius r centered in Y'.  The thin medium (after the
vertical rescaling to unit height) is omega x (0,1) minus the periodic array
of cylinders of period a_eps.  All grids are uniform staggered (MAC) grids:
pressures at cell centers, velocity components on faces; solids are handled
by a boolean cell mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CRITICAL = "critical"
SUBCRITICAL = "subcritical"
SUPERCRITICAL = "supercritical"
REGIMES = (CRITICAL, SUBCRITICAL, SUPERCRITICAL)


class GeometryError(ValueError):
    """Invalid medium description or grid resolution."""


@dataclass(frozen=True)
class MediumSpec:
    """Geometric and physical description of one thin porous medium.

    lam is the pore-to-height ratio parameter: a finite positive value in
    the critical regime, 0.0 in the subcritical regime and math.inf in the
    supercritical one.  The scaled yield stress is derived, never stored:
    g * a_eps for critical/subcritical, g * epsilon for supercritical.
    """

    omega_extent: tuple[float, float]
    epsilon: float
    a_eps: float
    lam: float
    regime: str
    obstacle_radius: float = 0.25
    mu: float = 1.0
    g: float = 0.0

    def __post_init__(self):
        L1, L2 = self.omega_extent
        if L1 <= 0 or L2 <= 0:
            raise GeometryError(f"omega extents must be positive, got {self.omega_extent}")
        if not 0 < self.epsilon < 1:
            raise GeometryError(f"epsilon must lie in (0,1), got {self.epsilon}")
        if not 0 < self.a_eps < 1:
            raise GeometryError(f"a_eps must lie in (0,1), got {self.a_eps}")
        if not 0 <= self.obstacle_radius < 0.5:
            raise GeometryError(
                f"obstacle radius must lie in [0, 1/2), got {self.obstacle_radius}")
        if self.mu <= 0:
            raise GeometryError(f"viscosity must be positive, got {self.mu}")
        if self.g < 0:
            raise GeometryError(f"yield coefficient must be nonnegative, got {self.g}")
        if self.regime not in REGIMES:
            raise GeometryError(f"unknown regime {self.regime!r}")
        if self.regime == CRITICAL and not (0 < self.lam < math.inf):
            raise GeometryError("critical regime requires finite positive lam")
        if self.regime == SUBCRITICAL and self.lam != 0.0:
            raise GeometryError("subcritical regime requires lam = 0")
        if self.regime == SUPERCRITICAL and not math.isinf(self.lam):
            raise GeometryError("supercritical regime requires lam = inf")

    @property
    def yield_eps(self) -> float:
        """Effective yield stress g(eps) for this regime."""
        if self.regime == SUPERCRITICAL:
            return self.g * self.epsilon
        return self.g * self.a_eps


def kappa(x_prime, a_eps: float):
    """Index of the periodicity cell of size a_eps containing x'.

    Total function; on the measure-zero seam (a coordinate of x'/a_eps at a
    half-integer) the half-up rounding picks the cell to the right/top.
    Accepts a pair of scalars or arrays and returns integer indices.
    """
    if a_eps <= 0:
        raise GeometryError(f"a_eps must be positive, got {a_eps}")
    x1, x2 = x_prime
    k1 = np.floor(np.asarray(x1) / a_eps + 0.5).astype(int)
    k2 = np.floor(np.asarray(x2) / a_eps + 0.5).astype(int)
    if k1.ndim == 0:
        return int(k1), int(k2)
    return k1, k2


def _disk_mask(n: int, radius: float) -> np.ndarray:
    """Boolean (n, n) mask of cell centers inside the centered disk."""
    c = (np.arange(n) + 0.5) / n - 0.5
    x, y = np.meshgrid(c, c, indexing="ij")
    return x * x + y * y <= radius * radius


@dataclass(frozen=True)
class CellGrid:
    """Staggered grid on the unit cell Y, periodic laterally, walls at y3=0,1."""

    n: int
    obstacle_radius: float
    solid_mask: np.ndarray = field(repr=False, compare=False)
    dim: int = 3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def spacing(self) -> tuple[float, float, float]:
        h = 1.0 / self.n
        return (h, h, h)

    @property
    def periodic(self) -> tuple[bool, bool]:
        return (True, True)

    @property
    def fluid_area_fraction(self) -> float:
        """Discrete |Y'_f| from mask counting."""
        return 1.0 - self.solid_mask[:, :, 0].sum() / self.n**2

    @property
    def fluid_fraction(self) -> float:
        return 1.0 - self.solid_mask.sum() / self.solid_mask.size


@dataclass(frozen=True)
class PlanarCellGrid:
    """Staggered grid on Y' alone (the 2-D problems of the subcritical limit)."""

    n: int
    obstacle_radius: float
    solid_mask: np.ndarray = field(repr=False, compare=False)
    dim: int = 2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def spacing(self) -> tuple[float, float]:
        h = 1.0 / self.n
        return (h, h)

    @property
    def periodic(self) -> tuple[bool, bool]:
        return (True, True)

    @property
    def fluid_area_fraction(self) -> float:
        return 1.0 - self.solid_mask.sum() / self.n**2


@dataclass(frozen=True)
class ThinGrid:
    """Staggered grid on omega_eps x (0,1): replicated cells, Dirichlet walls."""

    macro_cells: tuple[int, int]
    n: int
    a_eps: float
    obstacle_radius: float
    solid_mask: np.ndarray = field(repr=False, compare=False)
    dim: int = 3

    @property
    def shape(self) -> tuple[int, int, int]:
        M1, M2 = self.macro_cells
        return (M1 * self.n, M2 * self.n, self.n)

    @property
    def spacing(self) -> tuple[float, float, float]:
        h = self.a_eps / self.n
        return (h, h, 1.0 / self.n)

    @property
    def periodic(self) -> tuple[bool, bool]:
        return (False, False)

    @property
    def fluid_fraction(self) -> float:
        return 1.0 - self.solid_mask.sum() / self.solid_mask.size

    def cell_slices(self, k1: int, k2: int) -> tuple[slice, slice]:
        """Lateral index range of macro cell (k1, k2), counted from the corner."""
        n = self.n
        return slice(k1 * n, (k1 + 1) * n), slice(k2 * n, (k2 + 1) * n)


def _check_resolution(n: int, radius: float):
    if n < 8:
        raise GeometryError(f"resolution n={n} too small, need n >= 8")
    if radius > 0 and 2 * radius * n < 4:
        raise GeometryError(
            f"resolution n={n} cannot resolve obstacle radius {radius}: "
            "fewer than 4 cells across the diameter")


def build_cell(spec: MediumSpec, n: int) -> CellGrid:
    """Discretize the unit cell Y for a given medium description."""
    _check_resolution(n, spec.obstacle_radius)
    disk = _disk_mask(n, spec.obstacle_radius)
    mask = np.broadcast_to(disk[:, :, None], (n, n, n)).copy()
    return CellGrid(n=n, obstacle_radius=spec.obstacle_radius, solid_mask=mask)


def build_cell_2d(spec: MediumSpec, n: int) -> PlanarCellGrid:
    """Discretize Y' alone."""
    _check_resolution(n, spec.obstacle_radius)
    return PlanarCellGrid(n=n, obstacle_radius=spec.obstacle_radius,
                          solid_mask=_disk_mask(n, spec.obstacle_radius))


def build_thin_medium(spec: MediumSpec, n: int) -> ThinGrid:
    """Discretize omega_eps x (0,1) by replicating the unit-cell mask."""
    _check_resolution(n, spec.obstacle_radius)
    macro = []
    for L in spec.omega_extent:
        m = L / spec.a_eps
        if abs(m - round(m)) > 1e-9 * max(1.0, m):
            raise GeometryError(
                f"omega extent {L} is not an integer multiple of a_eps="
                f"{spec.a_eps}: solids would intersect the boundary")
        macro.append(int(round(m)))
    M1, M2 = macro
    disk = _disk_mask(n, spec.obstacle_radius)
    tile = np.tile(disk, (M1, M2))
    mask = np.broadcast_to(tile[:, :, None], (M1 * n, M2 * n, n)).copy()
    return ThinGrid(macro_cells=(M1, M2), n=n, a_eps=spec.a_eps,
                    obstacle_radius=spec.obstacle_radius, solid_mask=mask)


def dump_mask(grid, path):
    """Write the lateral solid mask as a plain-text 0/1 raster."""
    mask = grid.solid_mask
    if mask.ndim == 3:
        mask = mask[:, :, 0]
    with open(path, "w") as fh:
        for row in mask.astype(int):
            fh.write("".join(str(v) for v in row) + "\n")
