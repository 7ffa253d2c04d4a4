"""Field containers and coordinate maps for the rescaled thin domain.

Velocity fields are staggered (components on faces); pressures live at cell
centers.  Everything here works natively in the rescaled frame: the thin
domain has unit height and all vertical derivatives carry a 1/eps factor.
The physical frame exists only through `dilate`, which is a pure relabeling
on matching grids.

The tensor operators in this module are diagnostics, evaluated cellwise by
compact or central differences; the solver assembles its own grouped
operator (see operators module) with no-slip ghosts built in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import operators as ops

RESCALED = "rescaled"
PHYSICAL = "physical"


class FrameError(ValueError):
    """Operation applied to a field in the wrong coordinate frame."""


@dataclass
class StaggeredField:
    """Face-based velocity field on a CellGrid, PlanarCellGrid or ThinGrid."""

    grid: object
    components: list[np.ndarray]
    frame: str = RESCALED

    def __post_init__(self):
        lay = ops.velocity_layout(self.grid)
        for c, a in enumerate(self.components):
            if a.shape != lay.shapes[c]:
                raise ValueError(
                    f"component {c} has shape {a.shape}, expected {lay.shapes[c]}")

    @classmethod
    def zeros(cls, grid, frame: str = RESCALED) -> "StaggeredField":
        lay = ops.velocity_layout(grid)
        return cls(grid, [np.zeros(s) for s in lay.shapes], frame)

    @classmethod
    def from_vector(cls, grid, vec: np.ndarray,
                    frame: str = RESCALED) -> "StaggeredField":
        """Build from a free-DOF vector; constrained faces are exactly zero."""
        return cls(grid, ops.velocity_layout(grid).scatter(vec), frame)

    def to_vector(self) -> np.ndarray:
        return ops.velocity_layout(self.grid).gather(self.components)

    def cell_values(self) -> np.ndarray:
        """Average the face components to cell centers; shape (dim, *grid.shape)."""
        out = np.empty((self.grid.dim,) + tuple(self.grid.shape))
        for c, a in enumerate(self.components):
            out[c] = _face_to_center_avg(self.grid, a, c)
        return out

    def copy(self) -> "StaggeredField":
        return StaggeredField(self.grid, [a.copy() for a in self.components],
                              self.frame)


@dataclass
class ScalarField:
    """Cell-centered scalar (pressure) field."""

    grid: object
    values: np.ndarray
    frame: str = RESCALED
    mean_zero: bool = False

    def __post_init__(self):
        if self.values.shape != tuple(self.grid.shape):
            raise ValueError(
                f"scalar shape {self.values.shape} != grid {self.grid.shape}")
        if self.mean_zero:
            fluid = ~self.grid.solid_mask
            m = self.values[fluid].mean() if fluid.any() else 0.0
            if abs(m) > 1e-12 * max(1.0, np.abs(self.values).max()):
                self.values = self.values - m * fluid

    def fluid_mean(self) -> float:
        fluid = ~self.grid.solid_mask
        return float(self.values[fluid].mean())


@dataclass
class TensorField:
    """Cell-centered symmetric tensor field, shape (dim, dim, *grid.shape)."""

    grid: object
    data: np.ndarray

    def frobenius(self) -> np.ndarray:
        """Pointwise Frobenius norm |T|, shape grid.shape."""
        return np.sqrt(np.einsum("ij...,ij...->...", self.data, self.data))


@dataclass
class UnfoldedField:
    """Unfolded velocity: per macro cell k', the field in cell coordinates y.

    data has shape (dim, M1, M2, n, n, nz); within each macro cell the values
    are the cell-centered samples of the source field, so the unfolding is an
    exact reindexing and an exact L2 isometry.
    """

    data: np.ndarray
    a_eps: float

    @property
    def macro_cells(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    def l2_norm(self) -> float:
        """L2 norm over omega x Y (each macro cell carries measure a_eps^2)."""
        _, M1, M2, n1, n2, nz = self.data.shape
        cell_vol = 1.0 / (n1 * n2 * nz)
        return float(np.sqrt(self.a_eps**2 * cell_vol *
                             np.sum(self.data * self.data)))


@dataclass(frozen=True)
class NormRecord:
    """The quantities bounded by the a-priori estimates."""

    l2: float
    sym_grad_l2: float
    grad_l2: float
    sym_grad_l1: float


# ---------------------------------------------------------------------------
# differencing helpers (diagnostic operators, evaluated at cell centers)

def _face_to_center_avg(grid, a: np.ndarray, axis: int) -> np.ndarray:
    if ops._axis_periodic(grid, axis):
        return 0.5 * (a + np.roll(a, -1, axis=axis))
    lo = [slice(None)] * a.ndim
    lo[axis] = slice(0, -1)
    hi = [slice(None)] * a.ndim
    hi[axis] = slice(1, None)
    return 0.5 * (a[tuple(lo)] + a[tuple(hi)])


def _face_to_center_diff(grid, a: np.ndarray, axis: int) -> np.ndarray:
    h = grid.spacing[axis]
    if ops._axis_periodic(grid, axis):
        return (np.roll(a, -1, axis=axis) - a) / h
    lo = [slice(None)] * a.ndim
    lo[axis] = slice(0, -1)
    hi = [slice(None)] * a.ndim
    hi[axis] = slice(1, None)
    return (a[tuple(hi)] - a[tuple(lo)]) / h


def _center_diff(grid, a: np.ndarray, axis: int) -> np.ndarray:
    """Central difference of cell-centered values, one-sided at boundaries."""
    h = grid.spacing[axis]
    if ops._axis_periodic(grid, axis):
        return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2 * h)
    out = np.gradient(a, h, axis=axis)
    return out


def gradient_eps(v: StaggeredField, epsilon: float) -> TensorField:
    """Scaled full gradient (D_eps v)_{ij} at cell centers."""
    if v.frame != RESCALED:
        raise FrameError("scaled operators act on rescaled-frame fields")
    grid = v.grid
    dim = grid.dim
    cells = v.cell_values()
    out = np.empty((dim, dim) + tuple(grid.shape))
    for i in range(dim):
        for j in range(dim):
            if i == j:
                d = _face_to_center_diff(grid, v.components[i], i)
            else:
                d = _center_diff(grid, cells[i], j)
            if dim == 3 and j == 2:
                d = d / epsilon
            out[i, j] = d
    return TensorField(grid, out)


def sym_gradient_eps(v: StaggeredField, epsilon: float) -> TensorField:
    """Scaled symmetric gradient D_eps[v] at cell centers."""
    g = gradient_eps(v, epsilon).data
    return TensorField(v.grid, 0.5 * (g + np.swapaxes(g, 0, 1)))


def divergence_eps(v: StaggeredField, epsilon: float) -> ScalarField:
    """Scaled divergence div_eps v at cell centers (compact, exact)."""
    if v.frame != RESCALED:
        raise FrameError("scaled operators act on rescaled-frame fields")
    grid = v.grid
    out = np.zeros(tuple(grid.shape))
    for c in range(grid.dim):
        d = _face_to_center_diff(grid, v.components[c], c)
        if grid.dim == 3 and c == 2:
            d = d / epsilon
        out += d
    return ScalarField(grid, out, frame=v.frame)


def dilate(u: StaggeredField, epsilon: float) -> StaggeredField:
    """Physical frame -> rescaled frame; pure relabeling on matching grids."""
    if u.frame != PHYSICAL:
        raise FrameError("dilate expects a physical-frame field")
    return StaggeredField(u.grid, [a.copy() for a in u.components], RESCALED)


def undilate(u: StaggeredField, epsilon: float) -> StaggeredField:
    """Rescaled frame -> physical frame; inverse relabeling."""
    if u.frame != RESCALED:
        raise FrameError("undilate expects a rescaled-frame field")
    return StaggeredField(u.grid, [a.copy() for a in u.components], PHYSICAL)


def unfold(v: StaggeredField, a_eps: float) -> UnfoldedField:
    """Unfold a thin-medium field to macro-cell-indexed cell coordinates."""
    grid = v.grid
    if not hasattr(grid, "macro_cells"):
        raise ValueError("unfold requires a field on a ThinGrid")
    if abs(grid.a_eps - a_eps) > 1e-12:
        raise ValueError(f"grid period {grid.a_eps} != requested a_eps {a_eps}")
    M1, M2 = grid.macro_cells
    n = grid.n
    cells = v.cell_values()                       # (3, M1 n, M2 n, n)
    data = cells.reshape(3, M1, n, M2, n, n).transpose(0, 1, 3, 2, 4, 5)
    return UnfoldedField(data=np.ascontiguousarray(data), a_eps=a_eps)


def l2_norm(v: StaggeredField) -> float:
    """Midpoint-quadrature L2 norm of the velocity over the fluid cells."""
    cells = v.cell_values()
    vol = float(np.prod(v.grid.spacing))
    fluid = ~v.grid.solid_mask
    return float(np.sqrt(vol * np.sum((cells * cells)[:, fluid])))


def norms(v: StaggeredField, epsilon: float) -> NormRecord:
    """The norms appearing in the a-priori estimates, midpoint quadrature."""
    grid = v.grid
    vol = float(np.prod(grid.spacing))
    fluid = ~grid.solid_mask
    cells = v.cell_values()
    g = gradient_eps(v, epsilon).data
    s = 0.5 * (g + np.swapaxes(g, 0, 1))
    sym_sq = np.einsum("ij...,ij...->...", s, s)
    grad_sq = np.einsum("ij...,ij...->...", g, g)
    return NormRecord(
        l2=float(np.sqrt(vol * np.sum((cells * cells)[:, fluid]))),
        sym_grad_l2=float(np.sqrt(vol * np.sum(sym_sq[fluid]))),
        grad_l2=float(np.sqrt(vol * np.sum(grad_sq[fluid]))),
        sym_grad_l1=float(vol * np.sum(np.sqrt(sym_sq[fluid]))),
    )


def dump_scalar(array: np.ndarray, path) -> None:
    """Plain-text structured-grid dump: `dims nx ny nz`, x-fastest order."""
    a = np.asarray(array)
    if a.ndim == 2:
        a = a[:, :, None]
    nx, ny, nz = a.shape
    with open(path, "w") as fh:
        fh.write(f"dims {nx} {ny} {nz}\n")
        for k in range(nz):
            for j in range(ny):
                for i in range(nx):
                    fh.write(f"{a[i, j, k]:.17g}\n")


def load_scalar(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        nx, ny, nz = int(header[1]), int(header[2]), int(header[3])
        flat = np.array([float(line) for line in fh])
    return flat.reshape(nz, ny, nx).transpose(2, 1, 0)
