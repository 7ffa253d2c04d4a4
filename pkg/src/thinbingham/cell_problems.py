"""Regime-specific local problems on the unit cell and the permeability map.

For a frozen macroscopic force xi in R^2 the local velocity chi solves, per
regime,

* critical (finite lambda): the 3-D Bingham problem on Y with the
  lambda-weighted vertical derivatives and constraint div_lambda chi = 0;
* subcritical (lambda = 0): the 2-D Bingham problem on Y' alone;
* supercritical (lambda = inf): a scalar channel profile along xi in every
  fluid column, with no lateral coupling.

The permeability is the cell average K(xi) = int_Y chi'(y) dy, tabulated
over directions and magnitudes for the macroscale Darcy solver.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from . import vi_solver as vi
from .profile1d import bingham_profile_1d, solve_column_1d


@dataclass
class CellProblem:
    regime: str
    lam: float
    grid: object                # CellGrid (critical), PlanarCellGrid (subcritical)
    mu: float
    g: float                    # unscaled cell yield coefficient
    xi: tuple[float, float]

    def __post_init__(self):
        if self.regime not in geometry.REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.regime == geometry.CRITICAL and not (0 < self.lam < math.inf):
            raise ValueError("critical cell problem requires finite positive lam")
        if not np.all(np.isfinite(self.xi)):
            raise ValueError("xi must be finite")
        want_dim = 2 if self.regime == geometry.SUBCRITICAL else 3
        if getattr(self.grid, "dim", want_dim) != want_dim:
            raise ValueError(f"{self.regime} cell problem needs a "
                             f"{want_dim}-D grid")


@dataclass
class CellSolution:
    chi_cells: np.ndarray       # cell-centered velocity, (dim, *grid.shape)
    K: np.ndarray               # permeability vector, shape (2,)
    chi3_integral: float        # int_Y chi_3 dy (identically 0 in 2-D/column)
    div_residual: float
    converged: bool
    iterations: int
    chi_field: object = None    # StaggeredField when a PDE solve produced it


def _cell_average(grid, cells: np.ndarray) -> np.ndarray:
    """int over the unit cell of the first two components (solid part is 0)."""
    return cells[:2].mean(axis=tuple(range(1, cells.ndim)))


def solve_cell_critical(problem: CellProblem,
                        config: vi.VISolverConfig | None = None) -> CellSolution:
    """Finite-lambda local problem: the 3-D VI with vertical scale lambda."""
    if problem.regime != geometry.CRITICAL:
        raise ValueError("solve_cell_critical requires the critical regime")
    grid = problem.grid
    if np.hypot(*problem.xi) == 0.0:
        cells = np.zeros((3,) + tuple(grid.shape))
        return CellSolution(chi_cells=cells, K=np.zeros(2), chi3_integral=0.0,
                            div_residual=0.0, converged=True, iterations=0)
    forcing = vi.constant_forcing(grid, problem.xi)
    # D_lambda = D_{y'} + lambda d_{y3} has the D_eps structure with
    # epsilon = 1/lambda
    prob = vi.BinghamProblem(grid, problem.mu, problem.g,
                             1.0 / problem.lam, forcing)
    sol = vi.solve_bingham(prob, config)
    cells = sol.velocity.cell_values()
    vol = float(np.prod(grid.spacing))
    return CellSolution(
        chi_cells=cells, K=_cell_average(grid, cells),
        chi3_integral=float(cells[2].sum() * vol),
        div_residual=float(sol.residual_history[-1, 0]),
        converged=sol.converged, iterations=sol.iterations,
        chi_field=sol.velocity)


def solve_cell_subcritical(problem: CellProblem,
                           config: vi.VISolverConfig | None = None) -> CellSolution:
    """lambda = 0: the 2-D Bingham problem on Y' (one slice serves all y3)."""
    if problem.regime != geometry.SUBCRITICAL:
        raise ValueError("solve_cell_subcritical requires the subcritical regime")
    grid = problem.grid
    if grid.dim != 2:
        raise ValueError("subcritical cell problem runs on a PlanarCellGrid")
    if np.hypot(*problem.xi) == 0.0:
        cells = np.zeros((2,) + tuple(grid.shape))
        return CellSolution(chi_cells=cells, K=np.zeros(2), chi3_integral=0.0,
                            div_residual=0.0, converged=True, iterations=0)
    forcing = vi.constant_forcing(grid, problem.xi)
    prob = vi.BinghamProblem(grid, problem.mu, problem.g, 1.0, forcing)
    sol = vi.solve_bingham(prob, config)
    cells = sol.velocity.cell_values()
    return CellSolution(
        chi_cells=cells, K=_cell_average(grid, cells),
        chi3_integral=0.0,
        div_residual=float(sol.residual_history[-1, 0]),
        converged=sol.converged, iterations=sol.iterations,
        chi_field=sol.velocity)


def solve_cell_supercritical(problem: CellProblem, n_profile: int | None = None,
                             use_closed_form: bool = False) -> CellSolution:
    """lambda = inf: per-column channel flow along xi, no lateral coupling.

    Every fluid column sees the same constant force, so one scalar profile
    w(y3) serves all of Y'_f and K = |Y'_f| * mean(w) * xi/|xi|.
    """
    if problem.regime != geometry.SUPERCRITICAL:
        raise ValueError("solve_cell_supercritical requires the supercritical regime")
    grid = problem.grid
    if grid.dim != 3:
        raise ValueError("supercritical cell problem runs on a CellGrid")
    nz = grid.shape[2]
    if n_profile is None:
        n_profile = nz
    phi = float(np.hypot(*problem.xi))
    if phi == 0.0:
        cells = np.zeros((3,) + tuple(grid.shape))
        return CellSolution(chi_cells=cells, K=np.zeros(2), chi3_integral=0.0,
                            div_residual=0.0, converged=True, iterations=0)
    direction = np.asarray(problem.xi) / phi
    if use_closed_form:
        prof = bingham_profile_1d(phi, problem.mu, problem.g, n=n_profile)
        iterations, converged = 0, True
        flux = prof.flux
        w = prof.w
    else:
        sol = solve_column_1d(phi, problem.mu, problem.g, n=n_profile)
        iterations, converged = sol.iterations, sol.converged
        flux = sol.flux
        w = sol.w
    # sample the nodal profile at the cell-center levels of the grid
    yc = (np.arange(nz) + 0.5) / nz
    w_c = np.interp(yc, np.linspace(0.0, 1.0, len(w)), w)
    fluid_col = ~grid.solid_mask[:, :, 0]
    cells = np.zeros((3,) + tuple(grid.shape))
    for c in range(2):
        cells[c][fluid_col, :] = direction[c] * w_c
    area = float(fluid_col.mean())
    return CellSolution(
        chi_cells=cells, K=area * flux * direction,
        chi3_integral=0.0, div_residual=0.0,
        converged=converged, iterations=iterations)


def solve_cell(problem: CellProblem,
               config: vi.VISolverConfig | None = None) -> CellSolution:
    if problem.regime == geometry.CRITICAL:
        return solve_cell_critical(problem, config)
    if problem.regime == geometry.SUBCRITICAL:
        return solve_cell_subcritical(problem, config)
    return solve_cell_supercritical(problem)


# ---------------------------------------------------------------------------
# permeability table

@dataclass
class PermeabilityTable:
    """Sampled nonlinear map xi -> K(xi).

    Entries are keyed by (direction index, magnitude); directions are unit
    vectors.  `thresholds` holds the per-direction yield magnitude xi*
    (0 when g = 0), located by bisection on |K|.
    """

    directions: np.ndarray      # (nd, 2) unit vectors
    magnitudes: np.ndarray      # sorted ascending
    K: np.ndarray               # (nd, nm, 2)
    converged: np.ndarray       # (nd, nm) bool
    thresholds: np.ndarray      # (nd,)

    def rows(self):
        for i, d in enumerate(self.directions):
            for j, t in enumerate(self.magnitudes):
                xi = t * d
                yield xi, self.K[i, j], bool(self.converged[i, j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["xi_1", "xi_2", "K_1", "K_2", "converged"])
        for xi, K, conv in self.rows():
            w.writerow([f"{xi[0]:.17g}", f"{xi[1]:.17g}",
                        f"{K[0]:.17g}", f"{K[1]:.17g}", int(conv)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PermeabilityTable":
        rows = list(csv.reader(io.StringIO(text)))
        body = rows[1:]
        xis = np.array([[float(r[0]), float(r[1])] for r in body])
        Ks = np.array([[float(r[2]), float(r[3])] for r in body])
        conv = np.array([bool(int(r[4])) for r in body])
        mags = np.hypot(xis[:, 0], xis[:, 1])
        dirs = []
        for xi, t in zip(xis, mags):
            d = xi / t if t > 0 else np.array([1.0, 0.0])
            if not any(np.allclose(d, e, atol=1e-12) for e in dirs):
                dirs.append(d)
        directions = np.array(dirs)
        magnitudes = np.unique(np.round(mags, 14))
        nd, nm = len(directions), len(magnitudes)
        K = np.zeros((nd, nm, 2))
        cv = np.zeros((nd, nm), dtype=bool)
        for xi, Kv, c in zip(xis, Ks, conv):
            t = np.hypot(*xi)
            d = xi / t if t > 0 else np.array([1.0, 0.0])
            i = int(np.argmin([np.hypot(*(d - e)) for e in directions]))
            j = int(np.argmin(np.abs(magnitudes - t)))
            K[i, j] = Kv
            cv[i, j] = c
        return cls(directions=directions, magnitudes=magnitudes, K=K,
                   converged=cv, thresholds=np.zeros(nd))


def default_directions(count: int = 16) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(count) / count
    return np.column_stack([np.cos(ang), np.sin(ang)])


def _solve_K(regime, lam, grid, mu, g, xi, config):
    prob = CellProblem(regime=regime, lam=lam, grid=grid, mu=mu, g=g,
                       xi=tuple(xi))
    sol = solve_cell(prob, config) if regime != geometry.SUPERCRITICAL \
        else solve_cell_supercritical(prob)
    return sol.K, sol.converged


def _locate_threshold(regime, lam, grid, mu, g, direction, hi, config,
                      zero_tol=1e-9, iters=20):
    """Bisect the yield magnitude xi* along one direction; solver as oracle."""
    if g == 0.0:
        return 0.0
    if regime == geometry.SUPERCRITICAL:
        return 2.0 * g
    lo = 0.0
    K_hi, _ = _solve_K(regime, lam, grid, mu, g, hi * direction, config)
    if np.hypot(*K_hi) <= zero_tol:
        return float(hi)        # no flow up to the largest magnitude
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        K, _ = _solve_K(regime, lam, grid, mu, g, mid * direction, config)
        if np.hypot(*K) <= zero_tol:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_permeability_table(regime, lam, grid, mu, g, directions=None,
                             magnitudes=(0.5, 1.0, 2.0, 4.0, 8.0),
                             config=None, threads: int = 1,
                             locate_thresholds: bool = True,
                             threshold_iters: int = 20) -> PermeabilityTable:
    """Tabulate K over (direction, magnitude); deterministic merge by key."""
    if directions is None:
        directions = default_directions()
    directions = np.asarray(directions, dtype=float)
    norms = np.hypot(directions[:, 0], directions[:, 1])
    directions = directions / norms[:, None]
    magnitudes = np.asarray(sorted(magnitudes), dtype=float)
    nd, nm = len(directions), len(magnitudes)
    keys = [(i, j) for i in range(nd) for j in range(nm)]

    def work(key):
        i, j = key
        return _solve_K(regime, lam, grid, mu, g,
                        magnitudes[j] * directions[i], config)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(zip(keys, pool.map(work, keys)))
    else:
        results = {k: work(k) for k in keys}

    K = np.zeros((nd, nm, 2))
    conv = np.zeros((nd, nm), dtype=bool)
    for (i, j), (Kv, c) in sorted(results.items()):
        K[i, j] = Kv
        conv[i, j] = c
    thresholds = np.zeros(nd)
    if g > 0 and locate_thresholds:
        for i, d in enumerate(directions):
            thresholds[i] = _locate_threshold(
                regime, lam, grid, mu, g, d, magnitudes[-1], config,
                iters=threshold_iters)
    return PermeabilityTable(directions=directions, magnitudes=magnitudes,
                             K=K, converged=conv, thresholds=thresholds)
