"""Sparse staggered-grid operators for the scaled Bingham problems.

All grids are uniform MAC grids.  Velocity components live on faces, the
pressure on cell centers.  The symmetric-gradient operator used by the
solver stores its rows grouped by location type:

* the three (two in 2-D) diagonal entries at cell centers,
* each off-diagonal entry, scaled by sqrt(2), on the edge lattice where the
  compact difference stencils of both contributing derivatives meet.

With the sqrt(2) scaling the Euclidean norm over a group's components is
the Frobenius contribution of that group, and the augmented-Lagrangian
shrinkage acts location by location in closed form.  Every derivative along
the vertical axis is multiplied by `vertical_scale` (1/eps for the thin
problem, lambda for the critical cell problem).

Solid cells and outside-the-domain ghosts constrain every adjacent face
DOF to zero; constrained columns are dropped.  Tangential derivatives at
Dirichlet walls use mirror ghosts, which places the no-slip shear at the
wall itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# 1-D building blocks

def d_face_to_center(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    """Compact difference of face values to the n cell centers."""
    if periodic:
        m = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n)).tolil()
        m[n - 1, 0] = 1.0
    else:
        m = sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1))
    return sp.csr_matrix(m / h)


def d_center_to_face(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    """Compact difference of center values to faces.

    Non-periodic axes get mirror ghosts (tangential no-slip at walls), so
    there are n+1 face rows with one-sided 2/h entries at the walls.
    """
    if periodic:
        m = sp.diags([np.ones(n), -np.ones(n - 1)], [0, -1], shape=(n, n)).tolil()
        m[0, n - 1] = -1.0
        return sp.csr_matrix(m / h)
    m = sp.lil_matrix((n + 1, n))
    m[0, 0] = 2.0
    for i in range(1, n):
        m[i, i - 1] = -1.0
        m[i, i] = 1.0
    m[n, n - 1] = -2.0
    return sp.csr_matrix(m / h)


def _face_weights(n: int, h: float, periodic: bool) -> np.ndarray:
    if periodic:
        return np.full(n, h)
    w = np.full(n + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _kron(mats) -> sp.csr_matrix:
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


# ---------------------------------------------------------------------------
# layouts

def _axis_periodic(grid, axis: int) -> bool:
    if grid.dim == 3 and axis == 2:
        return False
    return grid.periodic[axis]


def _faces_along(grid, axis: int) -> int:
    n = grid.shape[axis]
    return n if _axis_periodic(grid, axis) else n + 1


@dataclass
class VelocityLayout:
    """Free-DOF bookkeeping for the staggered velocity components."""

    shapes: list[tuple[int, ...]]
    free: list[np.ndarray]          # boolean, per component, full face array
    offsets: list[int]
    n_free: int

    def scatter(self, vec: np.ndarray) -> list[np.ndarray]:
        """Expand a free-DOF vector to full face arrays (zeros elsewhere)."""
        out = []
        for c, shape in enumerate(self.shapes):
            arr = np.zeros(shape)
            arr[self.free[c]] = vec[self.offsets[c]:self.offsets[c + 1]]
            out.append(arr)
        return out

    def gather(self, arrays) -> np.ndarray:
        return np.concatenate(
            [np.asarray(a)[self.free[c]] for c, a in enumerate(arrays)])


def velocity_layout(grid) -> VelocityLayout:
    fluid = ~grid.solid_mask
    shapes, free, offsets = [], [], [0]
    for c in range(grid.dim):
        shape = tuple(_faces_along(grid, a) if a == c else grid.shape[a]
                      for a in range(grid.dim))
        if _axis_periodic(grid, c):
            ok = fluid & np.roll(fluid, 1, axis=c)
        else:
            n = grid.shape[c]
            pad_shape = list(fluid.shape)
            pad_shape[c] = n + 1
            ok = np.zeros(pad_shape, dtype=bool)
            sl_lo = [slice(None)] * grid.dim
            sl_lo[c] = slice(1, n)
            lo = [slice(None)] * grid.dim
            lo[c] = slice(0, n - 1)
            hi = [slice(None)] * grid.dim
            hi[c] = slice(1, n)
            ok[tuple(sl_lo)] = fluid[tuple(lo)] & fluid[tuple(hi)]
        shapes.append(shape)
        free.append(ok)
        offsets.append(offsets[-1] + int(ok.sum()))
    return VelocityLayout(shapes=shapes, free=free, offsets=offsets,
                          n_free=offsets[-1])


@dataclass
class TensorGroup:
    name: str
    ncomp: int
    loc_shape: tuple[int, ...]
    weights: np.ndarray             # quadrature weight per location, flat

    @property
    def nloc(self) -> int:
        return int(np.prod(self.loc_shape))


@dataclass
class StrainOperator:
    """Grouped symmetric-gradient operator and its quadrature."""

    groups: list[TensorGroup]
    blocks: list[sp.csr_matrix]     # one (ncomp*nloc, n_free) block per group
    matrix: sp.csr_matrix           # all blocks stacked
    row_weights: np.ndarray         # weight per stacked row

    def apply_grouped(self, vec: np.ndarray) -> list[np.ndarray]:
        """D @ vec, split into per-group (ncomp, nloc) arrays."""
        out = []
        for g, block in zip(self.groups, self.blocks):
            out.append(np.ascontiguousarray(
                (block @ vec).reshape(g.ncomp, g.nloc)))
        return out

    def concat(self, grouped) -> np.ndarray:
        return np.concatenate([a.ravel() for a in grouped])


def _component_scale(grid, axis: int, vertical_scale: float) -> float:
    return vertical_scale if (grid.dim == 3 and axis == 2) else 1.0


def _deriv_matrix(grid, comp: int, axis: int, vertical_scale: float):
    """Sparse d(u_comp)/d(axis) on full face arrays, plus its location grid.

    For axis == comp this is the compact face-to-center difference; for
    axis != comp the center-to-face difference (mirror ghosts at walls).
    """
    h = grid.spacing[axis]
    mats = []
    loc_shape = []
    for a in range(grid.dim):
        n = grid.shape[a]
        per = _axis_periodic(grid, a)
        if a == axis:
            if comp == axis:
                mats.append(d_face_to_center(n, h, per))
                loc_shape.append(n)
            else:
                mats.append(d_center_to_face(n, h, per))
                loc_shape.append(n if per else n + 1)
        elif a == comp:
            nf = _faces_along(grid, a)
            mats.append(sp.identity(nf, format="csr"))
            loc_shape.append(nf)
        else:
            mats.append(sp.identity(n, format="csr"))
            loc_shape.append(n)
    m = _kron(mats) * _component_scale(grid, axis, vertical_scale)
    return m, tuple(loc_shape)


def _loc_weights(grid, loc_shape: tuple[int, ...]) -> np.ndarray:
    axes_w = []
    for a, nloc in enumerate(loc_shape):
        n = grid.shape[a]
        h = grid.spacing[a]
        if nloc == n:
            axes_w.append(np.full(n, h))
        else:
            axes_w.append(_face_weights(n, h, False))
    w = axes_w[0]
    for aw in axes_w[1:]:
        w = np.multiply.outer(w, aw)
    return w.ravel()


def strain_operator(grid, vertical_scale: float = 1.0) -> StrainOperator:
    vlay = velocity_layout(grid)
    groups, blocks = [], []

    # diagonal entries, at cell centers
    diag_rows = []
    for c in range(grid.dim):
        m, loc_shape = _deriv_matrix(grid, c, c, vertical_scale)
        diag_rows.append(_restrict_cols(m, vlay, c))
    diag_block = sp.vstack(diag_rows, format="csr")
    groups.append(TensorGroup("diag", grid.dim, grid.shape,
                              _loc_weights(grid, grid.shape)))
    blocks.append(diag_block)

    # off-diagonal entries, sqrt(2)-scaled, on edges
    for c in range(grid.dim):
        for d in range(c + 1, grid.dim):
            mc, loc_shape = _deriv_matrix(grid, c, d, vertical_scale)
            md, loc_shape2 = _deriv_matrix(grid, d, c, vertical_scale)
            assert loc_shape == loc_shape2
            # sqrt(2) D_cd = (d_d u_c + d_c u_d) / sqrt(2)
            block = sp.csr_matrix(
                (_restrict_cols(mc, vlay, c) + _restrict_cols(md, vlay, d))
                / SQRT2)
            groups.append(TensorGroup(f"offdiag{c}{d}", 1, loc_shape,
                                      _loc_weights(grid, loc_shape)))
            blocks.append(block)

    matrix = sp.vstack(blocks, format="csr")
    row_weights = np.concatenate(
        [np.tile(g.weights, g.ncomp) for g in groups])
    return StrainOperator(groups=groups, blocks=blocks, matrix=matrix,
                          row_weights=row_weights)


def _restrict_cols(m: sp.csr_matrix, vlay: VelocityLayout, comp: int):
    """Restrict a single-component operator to free columns and embed it in
    the concatenated free-DOF numbering."""
    cols = vlay.free[comp].ravel().nonzero()[0]
    sub = m[:, cols]
    nfree = vlay.n_free
    lo = vlay.offsets[comp]
    pads = []
    if lo > 0:
        pads.append(sp.csr_matrix((m.shape[0], lo)))
    pads.append(sub)
    hi = nfree - vlay.offsets[comp + 1]
    if hi > 0:
        pads.append(sp.csr_matrix((m.shape[0], hi)))
    return sp.hstack(pads, format="csr")


def divergence_operator(grid, vertical_scale: float = 1.0):
    """Scaled divergence to fluid cell centers; returns (B, fluid_index)."""
    vlay = velocity_layout(grid)
    parts = []
    for c in range(grid.dim):
        m, _ = _deriv_matrix(grid, c, c, vertical_scale)
        parts.append(_restrict_cols(m, vlay, c))
    B = parts[0]
    for p in parts[1:]:
        B = B + p
    fluid_idx = (~grid.solid_mask).ravel().nonzero()[0]
    return sp.csr_matrix(B[fluid_idx, :]), fluid_idx


def comp_coords(grid, comp: int, origin=None):
    """Meshgrid coordinate arrays of component `comp`'s face positions."""
    if origin is None:
        origin = (-0.5, -0.5, 0.0)[:grid.dim] if grid.periodic[0] else \
                 (0.0,) * grid.dim
    axes = []
    for a in range(grid.dim):
        n = grid.shape[a]
        h = grid.spacing[a]
        if a == comp:
            nf = _faces_along(grid, a)
            axes.append(origin[a] + np.arange(nf) * h)
        else:
            axes.append(origin[a] + (np.arange(n) + 0.5) * h)
    return np.meshgrid(*axes, indexing="ij")
