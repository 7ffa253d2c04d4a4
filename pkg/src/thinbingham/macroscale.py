"""Homogenized nonlinear Darcy problem on the base domain omega.

The filtration velocity obeys U' = K(f' - grad P), div U' = 0 in omega and
U'.n = 0 on the boundary, with K the tabulated cell-problem permeability.
Pressures live at cell centers of a uniform 2-D grid, fluxes on faces.

The solver is a damped Picard iteration.  Each step evaluates U from the
current pressure gradient, measures the divergence residual, and corrects
the pressure through a discrete div-grad operator assembled with the same
no-flux boundary handling, scaled by a secant slope of the tabulated map.
Below the yield threshold the velocity vanishes identically and only
|f' - grad P| <= xi* constrains the pressure; the least-squares pressure
(the one balancing as much of f' as possible) is returned and the region
is flagged as indeterminate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cell_problems import PermeabilityTable


@dataclass
class DarcyConfig:
    theta: float = 0.5          # Picard damping
    tol: float = 1e-10          # divergence residual target, L-inf
    max_iter: int = 500
    eta: float | None = None    # threshold blending width; default 2% of max |xi|

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be nonnegative")


@dataclass
class DarcyProblem:
    extent: tuple[float, float]
    shape: tuple[int, int]
    forcing: object             # callable f'(x1, x2) -> (f1, f2), vectorized
    table: PermeabilityTable
    config: DarcyConfig = field(default_factory=DarcyConfig)

    @property
    def spacing(self) -> tuple[float, float]:
        return (self.extent[0] / self.shape[0], self.extent[1] / self.shape[1])


@dataclass
class DarcySolution:
    P_hat: np.ndarray           # (n1, n2) mean-zero pressure
    U: tuple[np.ndarray, np.ndarray]  # x-face and y-face normal fluxes
    U3: float                   # identically zero, recorded explicitly
    residual_history: np.ndarray
    converged: bool
    iterations: int
    indeterminate: np.ndarray   # (n1, n2) bool, pressure only threshold-bound
    clamped: bool               # table extrapolation was clamped somewhere

    def div(self, spacing) -> np.ndarray:
        Ux, Uy = self.U
        hx, hy = spacing
        return np.diff(Ux, axis=0) / hx + np.diff(Uy, axis=1) / hy


# ---------------------------------------------------------------------------
# permeability interpolation

def eval_permeability_ex(table: PermeabilityTable, xi, eta: float = 0.0):
    """Interpolated K(xi) plus a clamped-extrapolation flag.

    Nearest tabulated direction, piecewise linear in magnitude (with the
    implicit zero sample at the origin), linear blend to zero within eta
    above the direction's threshold, clamped beyond the largest magnitude.
    """
    xi = np.asarray(xi, dtype=float)
    t = float(np.hypot(xi[0], xi[1]))
    if t == 0.0:
        return np.zeros(2), False
    d = xi / t
    i = int(np.argmax(table.directions @ d))
    mags = table.magnitudes
    clamped = t > mags[-1]
    tc = min(t, mags[-1])
    K = np.array([np.interp(tc, np.concatenate([[0.0], mags]),
                            np.concatenate([[0.0], table.K[i, :, c]]))
                  for c in range(2)])
    # carry the nearest direction's sample over to xi's own direction, so
    # the interpolant is continuous in angle and exact at the knots
    di = table.directions[i]
    c_ang = float(di @ d)
    s_ang = float(di[0] * d[1] - di[1] * d[0])
    K = np.array([c_ang * K[0] - s_ang * K[1],
                  s_ang * K[0] + c_ang * K[1]])
    thr = table.thresholds[i]
    if thr > 0.0:
        if t <= thr:
            return np.zeros(2), False
        if eta > 0.0 and t < thr + eta:
            K = K * ((t - thr) / eta)
    return K, clamped


def eval_permeability(table: PermeabilityTable, xi, eta: float = 0.0):
    return eval_permeability_ex(table, xi, eta)[0]


def table_secant_slope(table: PermeabilityTable) -> float:
    """Representative d|K|/d|xi| used to scale pressure corrections."""
    best = 0.0
    for i in range(len(table.directions)):
        kmag = np.hypot(table.K[i, :, 0], table.K[i, :, 1])
        prev_t, prev_k = 0.0, 0.0
        for t, k in zip(table.magnitudes, kmag):
            if t > prev_t:
                best = max(best, (k - prev_k) / (t - prev_t))
            prev_t, prev_k = t, k
    return best if best > 0 else 1.0


# ---------------------------------------------------------------------------
# discrete operators on the omega grid

def _poisson_neumann(shape, spacing) -> sp.csc_matrix:
    """div grad with no-flux faces, one cell grounded (SPD after grounding)."""
    n1, n2 = shape
    hx, hy = spacing

    def lap1d(n, h):
        m = sp.lil_matrix((n, n))
        for i in range(n):
            if i > 0:
                m[i, i - 1] = 1.0 / h**2
                m[i, i] -= 1.0 / h**2
            if i < n - 1:
                m[i, i + 1] = 1.0 / h**2
                m[i, i] -= 1.0 / h**2
        return m.tocsr()

    L = sp.kron(lap1d(n1, hx), sp.identity(n2)) + \
        sp.kron(sp.identity(n1), lap1d(n2, hy))
    L = sp.lil_matrix(-L)
    L[0, 0] += 1.0            # ground one cell; rhs is mean-free
    return sp.csc_matrix(L)


def _grad_faces(P, spacing):
    """Pressure gradient at interior faces; boundary faces excluded."""
    hx, hy = spacing
    gx = np.diff(P, axis=0) / hx          # (n1-1, n2)
    gy = np.diff(P, axis=1) / hy          # (n1, n2-1)
    return gx, gy


def _forcing_at_faces(problem: DarcyProblem):
    """Both forcing components evaluated at interior x- and y-faces."""
    n1, n2 = problem.shape
    hx, hy = problem.spacing
    xf = (np.arange(1, n1) * hx)[:, None] * np.ones((1, n2))
    yf = ((np.arange(n2) + 0.5) * hy)[None, :] * np.ones((n1 - 1, 1))
    fx = problem.forcing(xf, yf)          # tuple of (n1-1, n2)
    xg = ((np.arange(n1) + 0.5) * hx)[:, None] * np.ones((1, n2 - 1))
    yg = (np.arange(1, n2) * hy)[None, :] * np.ones((n1, 1))
    fy = problem.forcing(xg, yg)          # tuple of (n1, n2-1)
    return (np.asarray(fx[0], dtype=float) * np.ones((n1 - 1, n2)),
            np.asarray(fx[1], dtype=float) * np.ones((n1 - 1, n2))), \
           (np.asarray(fy[0], dtype=float) * np.ones((n1, n2 - 1)),
            np.asarray(fy[1], dtype=float) * np.ones((n1, n2 - 1)))


def least_squares_pressure(problem: DarcyProblem) -> np.ndarray:
    """The mean-zero P minimizing ||f' - grad P||^2 with no-flux boundaries."""
    n1, n2 = problem.shape
    hx, hy = problem.spacing
    (fx1, _), (_, fy2) = _forcing_at_faces(problem)
    rhs = np.zeros((n1, n2))
    rhs += np.diff(np.pad(fx1, ((1, 1), (0, 0))), axis=0) / hx
    rhs += np.diff(np.pad(fy2, ((0, 0), (1, 1))), axis=1) / hy
    L = _poisson_neumann(problem.shape, problem.spacing)
    # L is minus the Laplacian, so the normal equations read L P = -div f
    flat = -rhs.ravel()
    flat = flat - flat.mean()
    P = spla.spsolve(L, flat).reshape(n1, n2)
    return P - P.mean()


def _var_poisson(shape, spacing, kx, ky) -> sp.csc_matrix:
    """-div(k grad) with per-face coefficients, no-flux outside, grounded.

    kx has shape (n1-1, n2) on interior x-faces, ky (n1, n2-1) on interior
    y-faces.
    """
    n1, n2 = shape
    hx, hy = spacing
    idx = np.arange(n1 * n2).reshape(n1, n2)
    rows, cols, vals = [], [], []

    def couple(left, right, w):
        rows.extend([left, left, right, right])
        cols.extend([left, right, right, left])
        vals.extend([w, -w, w, -w])

    wx = np.asarray(kx) / hx**2
    for i in range(n1 - 1):
        for j in range(n2):
            couple(idx[i, j], idx[i + 1, j], wx[i, j])
    wy = np.asarray(ky) / hy**2
    for i in range(n1):
        for j in range(n2 - 1):
            couple(idx[i, j], idx[i, j + 1], wy[i, j])
    L = sp.coo_matrix((vals, (rows, cols)),
                      shape=(n1 * n2, n1 * n2)).tocsc()
    L[0, 0] += max(wx.max(), wy.max())      # ground one cell
    return L


def _local_slope(table, xi, K, eta):
    """Chord sensitivity |K(xi)|/|xi|, the scalar Picard coefficient."""
    t = float(np.hypot(*xi))
    if t == 0.0:
        return 0.0
    return float(np.hypot(*K)) / t


def _fluxes(problem: DarcyProblem, P, eta):
    """U at interior faces from the current pressure; returns flags too."""
    n1, n2 = problem.shape
    (fx1, fx2), (fy1, fy2) = _forcing_at_faces(problem)
    gx, gy = _grad_faces(P, problem.spacing)
    # full xi vector at each face family; tangential parts via cell centers
    if n2 > 1:
        gy_pad = np.pad(gy, ((0, 0), (1, 1)), mode="edge")
        gy_cells = 0.5 * (gy_pad[:, :-1] + gy_pad[:, 1:])   # (n1, n2)
    else:
        gy_cells = np.zeros((n1, n2))
    gy_at_x = 0.5 * (gy_cells[:-1, :] + gy_cells[1:, :])    # (n1-1, n2)
    if n1 > 1:
        gx_pad = np.pad(gx, ((1, 1), (0, 0)), mode="edge")
        gx_cells = 0.5 * (gx_pad[:-1, :] + gx_pad[1:, :])   # (n1, n2)
    else:
        gx_cells = np.zeros((n1, n2))
    gx_at_y = 0.5 * (gx_cells[:, :-1] + gx_cells[:, 1:])    # (n1, n2-1)
    Ux = np.zeros((n1 + 1, n2))
    Uy = np.zeros((n1, n2 + 1))
    chord_x = np.zeros((n1 - 1, n2))
    chord_y = np.zeros((n1, n2 - 1))
    clamped = False
    below = np.ones((n1 - 1, n2), dtype=bool)
    for i in range(n1 - 1):
        for j in range(n2):
            xi = (fx1[i, j] - gx[i, j], fx2[i, j] - gy_at_x[i, j])
            K, cl = eval_permeability_ex(problem.table, xi, eta)
            Ux[i + 1, j] = K[0]
            clamped |= cl
            below[i, j] = K[0] == 0.0 and K[1] == 0.0
            chord_x[i, j] = _local_slope(problem.table, xi, K, eta)
    below_y = np.ones((n1, n2 - 1), dtype=bool)
    for i in range(n1):
        for j in range(n2 - 1):
            xi = (fy1[i, j] - gx_at_y[i, j], fy2[i, j] - gy[i, j])
            K, cl = eval_permeability_ex(problem.table, xi, eta)
            Uy[i, j + 1] = K[1]
            clamped |= cl
            below_y[i, j] = K[0] == 0.0 and K[1] == 0.0
            chord_y[i, j] = _local_slope(problem.table, xi, K, eta)
    return Ux, Uy, clamped, below, below_y, chord_x, chord_y


def solve_darcy(problem: DarcyProblem) -> DarcySolution:
    cfg = problem.config
    n1, n2 = problem.shape
    hx, hy = problem.spacing
    eta = cfg.eta
    if eta is None:
        eta = 0.02 * float(problem.table.magnitudes[-1])
    alpha = table_secant_slope(problem.table)
    theta = cfg.theta

    P = least_squares_pressure(problem)
    history = []
    converged = False
    clamped_any = False
    it = 0
    Ux = np.zeros((n1 + 1, n2))
    Uy = np.zeros((n1, n2 + 1))
    for it in range(1, cfg.max_iter + 1):
        Ux, Uy, clamped, below_x, below_y, chord_x, chord_y = \
            _fluxes(problem, P, eta)
        clamped_any |= clamped
        r = np.diff(Ux, axis=0) / hx + np.diff(Uy, axis=1) / hy
        res = float(np.abs(r).max())
        history.append(res)
        if res <= cfg.tol:
            converged = True
            break
        # linearized correction: U = K(f' - grad P) responds to a pressure
        # step psi as roughly -k grad psi with k the per-face chord slope
        # |K(xi)|/|xi|, so -div(k grad) psi = -r contracts div U.  Plugged
        # faces get a small floor so the operator stays invertible there.
        floor = 1e-3 * alpha
        Lk = _var_poisson(problem.shape, problem.spacing,
                          np.maximum(chord_x, floor),
                          np.maximum(chord_y, floor))
        rhs = -(r.ravel() - r.mean())
        psi = spla.spsolve(Lk, rhs)
        P = P + theta * psi.reshape(n1, n2)
        P = P - P.mean()
        # adapt the damping: grow while contracting, back off on overshoot
        if len(history) >= 2:
            if history[-1] < history[-2]:
                theta = min(0.95, theta * 1.05)
            else:
                theta = max(0.05, theta * 0.5)

    # indeterminate region: every adjacent face evaluation was below threshold
    indeterminate = np.zeros((n1, n2), dtype=bool)
    if problem.table.thresholds.max() > 0:
        bx = np.pad(below_x, ((1, 1), (0, 0)), constant_values=True)
        by = np.pad(below_y, ((0, 0), (1, 1)), constant_values=True)
        indeterminate = (bx[:-1, :] & bx[1:, :] & by[:, :-1] & by[:, 1:])
    return DarcySolution(
        P_hat=P - P.mean(), U=(Ux, Uy), U3=0.0,
        residual_history=np.array(history), converged=converged,
        iterations=it, indeterminate=indeterminate, clamped=clamped_any)


def filtration_velocity(data):
    """The y-average of a limit field, or the fluxes of a Darcy solution.

    Accepts an UnfoldedField (averages over the cell coordinate y per macro
    cell) or a DarcySolution (returns its stored fluxes); the vertical
    component is returned explicitly and must vanish.
    """
    if isinstance(data, DarcySolution):
        return data.U, 0.0
    arr = data.data                   # (dim, M1, M2, n, n, nz)
    mean = arr.mean(axis=(3, 4, 5))
    U_prime = mean[:2]
    U3 = float(np.abs(mean[2]).max()) if arr.shape[0] > 2 else 0.0
    return U_prime, U3
