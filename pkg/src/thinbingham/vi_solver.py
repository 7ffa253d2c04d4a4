"""Augmented-Lagrangian solver for the discrete Bingham variational inequality.

The discrete problem minimizes

    J(v) = mu * sum w |Dv|^2 + sqrt(2) * yield * sum_loc w |Dv|_loc - (f, v)

over face-based velocity fields that vanish on solids and Dirichlet walls
and are discretely divergence free.  D is the grouped scaled symmetric
gradient from the operators module and w its quadrature weights.

The splitting introduces q ~ Dv and a multiplier m, and alternates

    u-step:  rho D^T W D u + B^T p = F - D^T W (m - rho q),  B u = 0
    q-step:  q = shrink(m + rho Du, sqrt(2)*yield, 2 mu + rho)
    m-step:  m <- m + rho (Du - q)

The u-step matrix is constant, so its factorization or preconditioner is
built once.  A convex segment search between successive iterates keeps the
recorded energies nonincreasing even when the raw splitting overshoots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fields as flds
from . import operators as ops
from .kernels import shrink
from .linsolve import SaddleSolver

SQRT2 = np.sqrt(2.0)


@dataclass
class BinghamProblem:
    """One discrete Bingham (or Stokes) flow problem.

    `yield_value` is the effective, already scaled yield stress.  `epsilon`
    sets the vertical scaling 1/epsilon of all y3 derivatives; cell problems
    in cell coordinates pass epsilon = 1 (or 1/lambda for the finite-lambda
    local problem).  The forcing must have zero third component.
    """

    grid: object
    mu: float
    yield_value: float
    epsilon: float
    forcing: flds.StaggeredField

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"viscosity must be positive, got {self.mu}")
        if self.yield_value < 0:
            raise ValueError(f"yield must be nonnegative, got {self.yield_value}")
        if self.grid.dim == 3 and np.any(self.forcing.components[2]):
            raise ValueError("forcing third component must be zero")

    @property
    def vertical_scale(self) -> float:
        return 1.0 / self.epsilon if self.grid.dim == 3 else 1.0


@dataclass
class VISolverConfig:
    rho: float | None = None        # default 2*mu, resolved per problem
    tol_rel: float = 1e-8
    tol_div: float = 1e-10
    max_outer: int = 5000
    delta: float = 0.0              # diagnostic smoothing only, never solver
    linear_method: str = "auto"
    relaxation: float = 1.0         # multiplier over-relaxation, in (0, 1.618)

    def __post_init__(self):
        if self.rho is not None and self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.tol_rel <= 0:
            raise ValueError("tol_rel must be positive")


@dataclass
class VISolution:
    velocity: flds.StaggeredField
    pressure: flds.ScalarField
    multiplier: flds.TensorField
    multiplier_grouped: list
    strain_grouped: list
    energy_history: np.ndarray
    residual_history: np.ndarray    # columns: div residual, split residual
    converged: bool
    iterations: int

    def diagnostics_csv(self) -> str:
        lines = ["iteration,energy,div_residual,shrink_residual"]
        for k, e in enumerate(self.energy_history):
            dr, sr = self.residual_history[k]
            lines.append(f"{k},{e:.17g},{dr:.17g},{sr:.17g}")
        return "\n".join(lines) + "\n"


class _Discretization:
    """Assembled operators for one problem, reusable across solves."""

    def __init__(self, problem: BinghamProblem, config: VISolverConfig):
        grid = problem.grid
        vs = problem.vertical_scale
        self.layout = ops.velocity_layout(grid)
        self.strain = ops.strain_operator(grid, vertical_scale=vs)
        self.B, self.fluid_idx = ops.divergence_operator(grid, vertical_scale=vs)
        self.W = sp.diags(self.strain.row_weights)
        self.DtW = sp.csr_matrix(self.strain.matrix.T @ self.W)
        self.dof_volume = float(np.prod(grid.spacing))
        self.rho = config.rho if config.rho is not None else 2.0 * problem.mu
        self.A = sp.csr_matrix(self.rho * (self.DtW @ self.strain.matrix))
        method = config.linear_method
        if method == "auto":
            # sparse LU fill-in is benign in 2-D but grows fast in 3-D
            unknowns = self.A.shape[0] + self.B.shape[0]
            limit = 300_000 if grid.dim == 2 else 7_000
            method = "direct" if unknowns <= limit else "minres"
        self.solver = SaddleSolver(self.A, self.B, method=method,
                                   div_tol=config.tol_div)
        self.f_vec = self.layout.gather(problem.forcing.components)
        self.F = self.dof_volume * self.f_vec

    def split(self, flat: np.ndarray) -> list:
        out = []
        pos = 0
        for g in self.strain.groups:
            size = g.ncomp * g.nloc
            out.append(np.ascontiguousarray(
                flat[pos:pos + size].reshape(g.ncomp, g.nloc)))
            pos += size
        return out


def _energy_terms(disc: _Discretization, problem: BinghamProblem,
                  du_groups: list, u: np.ndarray):
    """(viscous, plastic, forcing) pieces of J from a precomputed Du."""
    visc = 0.0
    plast = 0.0
    for g, du in zip(disc.strain.groups, du_groups):
        visc += float(g.weights @ np.einsum("ij,ij->j", du, du))
        if problem.yield_value > 0:
            mag = np.sqrt(np.einsum("ij,ij->j", du, du))
            plast += float(g.weights @ mag)
    return (problem.mu * visc,
            SQRT2 * problem.yield_value * plast,
            float(disc.F @ u))


def energy(problem: BinghamProblem, v: flds.StaggeredField,
           config: VISolverConfig | None = None,
           _disc: _Discretization | None = None) -> float:
    """The minimized functional J(v); deterministic quadrature."""
    disc = _disc or _Discretization(problem, config or VISolverConfig())
    u = disc.layout.gather(v.components)
    du = disc.strain.apply_grouped(u)
    visc, plast, force = _energy_terms(disc, problem, du, u)
    return visc + plast - force


def _segment_minimize(disc, problem, u0, du0, u1, du1, j0, j1):
    """Minimize the convex J over the segment u0 + t (u1 - u0), t in [0,1]."""
    from scipy.optimize import minimize_scalar

    def J(t):
        du = [a + t * (b - a) for a, b in zip(du0, du1)]
        u = u0 + t * (u1 - u0)
        visc, plast, force = _energy_terms(disc, problem, du, u)
        return visc + plast - force

    res = minimize_scalar(J, bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-6})
    t = float(res.x)
    jt = float(res.fun)
    if jt < min(j0, j1):
        return t, jt
    return (1.0, j1) if j1 <= j0 else (0.0, j0)


def _assemble_solution(problem, disc, u, p_raw, mult_groups,
                       du_groups, energies, residuals, converged, its):
    grid = problem.grid
    velocity = flds.StaggeredField.from_vector(grid, u)
    # solver pressure is the Lagrange multiplier of B u = 0; the physical
    # mean-zero pressure of the variational inequality is -p / cell volume
    pvals = np.zeros(tuple(grid.shape))
    pvals.ravel()[disc.fluid_idx] = -p_raw / disc.dof_volume
    pressure = flds.ScalarField(grid, pvals, mean_zero=True)
    multiplier = _groups_to_tensor(grid, disc, mult_groups)
    return VISolution(
        velocity=velocity, pressure=pressure, multiplier=multiplier,
        multiplier_grouped=mult_groups, strain_grouped=du_groups,
        energy_history=np.array(energies),
        residual_history=np.array(residuals).reshape(-1, 2),
        converged=converged, iterations=its)


def _groups_to_tensor(grid, disc, groups) -> flds.TensorField:
    """Average the grouped rows to a cell-centered symmetric tensor."""
    dim = grid.dim
    data = np.zeros((dim, dim) + tuple(grid.shape))
    gi = 0
    g = disc.strain.groups[gi]
    diag = groups[0].reshape((dim,) + g.loc_shape)
    for c in range(dim):
        data[c, c] = diag[c]
    gi = 1
    for c in range(dim):
        for d in range(c + 1, dim):
            g = disc.strain.groups[gi]
            vals = groups[gi].reshape(g.loc_shape)
            for axis in (c, d):
                vals = flds._face_to_center_avg(grid, vals, axis)
            entry = vals / SQRT2
            data[c, d] = entry
            data[d, c] = entry
            gi += 1
    return flds.TensorField(grid, data)


def solve_bingham(problem: BinghamProblem,
                  config: VISolverConfig | None = None,
                  _disc: _Discretization | None = None) -> VISolution:
    """Solve the discrete variational inequality; Stokes when yield is zero.

    ``_disc`` may pass a discretization assembled for the same grid and
    config to amortize operator assembly and preconditioner setup across
    solves that differ only in their forcing; the forcing is always taken
    from ``problem``.
    """
    config = config or VISolverConfig()
    if _disc is not None:
        disc = _disc
        disc.f_vec = disc.layout.gather(problem.forcing.components)
        disc.F = disc.dof_volume * disc.f_vec
        # the previous problem's solution is no warm start for an
        # unrelated forcing and skews the iterative stopping test
        disc.solver._last = None
    else:
        disc = _Discretization(problem, config)
    yld = problem.yield_value
    threshold = SQRT2 * yld
    rho = disc.rho
    mu = problem.mu

    if not np.any(disc.F):
        # f = 0: the unique minimizer of a nonnegative functional
        grid = problem.grid
        nrows = disc.strain.matrix.shape[0]
        zero_groups = disc.split(np.zeros(nrows))
        return _assemble_solution(
            problem, disc, np.zeros(disc.layout.n_free),
            np.zeros(disc.B.shape[0]), zero_groups, zero_groups,
            [0.0], [(0.0, 0.0)], True, 0)

    if yld == 0.0:
        # Stokes: one saddle solve with A = rho D^T W D and rho = 2 mu scaling
        u, p = disc.solver.solve((rho / (2.0 * mu)) * disc.F,
                                 rtol=max(1e-10, 1e-3 * config.tol_rel))
        p = (2.0 * mu / rho) * p
        du = disc.strain.apply_grouped(u)
        visc, _, force = _energy_terms(disc, problem, du, u)
        div_res = float(np.abs(disc.B @ u).max())
        zero_mult = [np.zeros_like(a) for a in du]
        return _assemble_solution(problem, disc, u, p, zero_mult, du,
                                  [visc - force], [(div_res, 0.0)],
                                  div_res <= 10 * config.tol_div, 1)

    nrows = disc.strain.matrix.shape[0]
    q = disc.split(np.zeros(nrows))
    m = disc.split(np.zeros(nrows))
    mult = disc.split(np.zeros(nrows))
    u = np.zeros(disc.layout.n_free)
    du = disc.split(np.zeros(nrows))
    j_prev = 0.0
    energies = []
    residuals = []
    converged = False
    it = 0
    for it in range(1, config.max_outer + 1):
        rhs = disc.F - disc.DtW @ disc.strain.concat(
            [mm - rho * qq for mm, qq in zip(m, q)])
        # the inner iterative solve only needs to outrun the outer loop's
        # energy tolerance; the divergence projection is unaffected
        u_new, p = disc.solver.solve(
            rhs, rtol=max(1e-10, 1e-2 * config.tol_rel))
        if not np.all(np.isfinite(u_new)):
            raise FloatingPointError("linear saddle solve returned NaN")
        du_new = disc.strain.apply_grouped(u_new)
        visc, plast, force = _energy_terms(disc, problem, du_new, u_new)
        j_new = visc + plast - force
        if energies and j_new > j_prev:
            t, j_new = _segment_minimize(disc, problem, u, du, u_new, du_new,
                                         j_prev, j_new)
            u_new = u + t * (u_new - u)
            du_new = [a + t * (b - a) for a, b in zip(du, du_new)]
        u, du = u_new, du_new

        split_res = 0.0
        for gi, g in enumerate(disc.strain.groups):
            s = m[gi] + rho * du[gi]
            q[gi] = shrink(s, threshold, 2.0 * mu + rho)
            # exact subgradient of the plastic term at q: |.| <= sqrt(2) g,
            # with equality wherever the shrinkage left q nonzero
            mult[gi] = s - (2.0 * mu + rho) * q[gi]
            r = du[gi] - q[gi]
            m[gi] = m[gi] + config.relaxation * rho * r
            split_res = max(split_res, float(np.abs(r).max()) if r.size else 0.0)

        div_res = float(np.abs(disc.B @ u).max())
        energies.append(j_new)
        residuals.append((div_res, split_res))
        rel = abs(j_new - j_prev) / max(abs(j_new), 1e-300)
        if it > 1 and rel < config.tol_rel and div_res <= config.tol_div:
            converged = True
            break
        j_prev = j_new

    return _assemble_solution(problem, disc, u, p, mult, du,
                              energies, residuals, converged, it)


def solve_stokes(problem: BinghamProblem,
                 config: VISolverConfig | None = None) -> VISolution:
    """The yield-free special case; a single linear saddle solve."""
    if problem.yield_value != 0.0:
        problem = BinghamProblem(problem.grid, problem.mu, 0.0,
                                 problem.epsilon, problem.forcing)
    return solve_bingham(problem, config)


# ---------------------------------------------------------------------------
# forcing helpers

def constant_forcing(grid, f_prime) -> flds.StaggeredField:
    """f = (f', 0) with constant horizontal components."""
    lay = ops.velocity_layout(grid)
    comps = [np.full(lay.shapes[0], float(f_prime[0])),
             np.full(lay.shapes[1], float(f_prime[1]))]
    if grid.dim == 3:
        comps.append(np.zeros(lay.shapes[2]))
    return flds.StaggeredField(grid, comps)


def forcing_from_function(grid, func, origin=(0.0, 0.0, 0.0)) -> flds.StaggeredField:
    """f = (f', 0) with f'(x') evaluated at each face's lateral position."""
    lay = ops.velocity_layout(grid)
    comps = []
    for c in range(2):
        coords = ops.comp_coords(grid, c, origin=origin)
        comps.append(np.asarray(func(coords[0], coords[1])[c], dtype=float)
                     * np.ones(lay.shapes[c]))
    if grid.dim == 3:
        comps.append(np.zeros(lay.shapes[2]))
    return flds.StaggeredField(grid, comps)


def inequality_residual(problem: BinghamProblem, solution: VISolution,
                        v: flds.StaggeredField,
                        config: VISolverConfig | None = None,
                        _disc: _Discretization | None = None) -> float:
    """Residual of the discrete variational inequality against one test field.

    At the exact discrete optimum

        a(u, v-u) + j(v) - j(u) - (F, v-u) + p^T B (v-u) >= 0

    for every admissible v (the saddle multiplier p releases the
    divergence-free constraint).  Converged iterates satisfy this up to a
    margin proportional to the solver tolerance.
    """
    disc = _disc or _Discretization(problem, config or VISolverConfig())
    u = disc.layout.gather(solution.velocity.components)
    vv = disc.layout.gather(v.components)
    du = disc.strain.apply_grouped(u)
    dv = disc.strain.apply_grouped(vv)
    a_term = 0.0
    for g, a, b in zip(disc.strain.groups, du, dv):
        a_term += 2.0 * problem.mu * float(
            g.weights @ np.einsum("ij,ij->j", a, b - a))
    _, j_v, _ = _energy_terms(disc, problem, dv, vv)
    _, j_u, _ = _energy_terms(disc, problem, du, u)
    f_term = float(disc.F @ (vv - u))
    p_raw = -solution.pressure.values.ravel()[disc.fluid_idx] * disc.dof_volume
    p_term = float(p_raw @ (disc.B @ (vv - u)))
    return a_term + j_v - j_u - f_term + p_term


def certificate(problem: BinghamProblem, solution: VISolution,
                n_fields: int = 50, seed: int = 0,
                config: VISolverConfig | None = None) -> float:
    """Minimum inequality residual over random admissible test fields.

    Test fields are random on the free velocity DOFs, scaled to the solution
    magnitude (plus one pass at a larger scale), so they probe both the
    subgradient cone near u and the far field of the convex functional.
    """
    disc = _Discretization(problem, config or VISolverConfig())
    rng = np.random.default_rng(seed)
    u = disc.layout.gather(solution.velocity.components)
    scale = max(float(np.abs(u).max()), 1e-12)
    worst = np.inf
    amps = (1.0, 0.01, 10.0, 1e-4, 1.0)
    for k in range(n_fields):
        amp = scale * amps[k % len(amps)]
        vv = u + amp * rng.standard_normal(u.shape)
        v = flds.StaggeredField.from_vector(problem.grid, vv)
        worst = min(worst, inequality_residual(problem, solution, v,
                                               _disc=disc))
    return worst


# ---------------------------------------------------------------------------
# a-priori verification

@dataclass
class AprioriRow:
    epsilon: float
    a_eps: float
    scale: float
    velocity_ratio: float
    sym_grad_ratio: float
    grad_ratio: float
    converged: bool
    failed: bool = False


def verify_apriori(specs, n: int, config: VISolverConfig | None = None,
                   f_prime=(1.0, 0.0)) -> list[AprioriRow]:
    """Solve the thin-medium problem along a spec family and report the
    rescaled norms bounded by the a-priori estimates.

    f_prime is either a constant pair or a callable f'(x1, x2).  A constant
    forcing on the closed domain is a pure gradient, so it is absorbed by
    the pressure and yields u = 0; a rotational f_prime gives nonzero flow.
    """
    from . import geometry

    rows = []
    for spec in specs:
        s = spec.epsilon if spec.regime == geometry.SUPERCRITICAL else spec.a_eps
        try:
            grid = geometry.build_thin_medium(spec, n)
            if callable(f_prime):
                forcing = forcing_from_function(grid, f_prime)
            else:
                forcing = constant_forcing(grid, f_prime)
            prob = BinghamProblem(grid, spec.mu, spec.yield_eps,
                                  spec.epsilon, forcing)
            sol = solve_bingham(prob, config)
            nr = flds.norms(sol.velocity, spec.epsilon)
            rows.append(AprioriRow(
                epsilon=spec.epsilon, a_eps=spec.a_eps, scale=s,
                velocity_ratio=nr.l2 / s**2,
                sym_grad_ratio=nr.sym_grad_l2 / s,
                grad_ratio=nr.grad_l2 / s,
                converged=sol.converged))
        except Exception:
            rows.append(AprioriRow(epsilon=spec.epsilon, a_eps=spec.a_eps,
                                   scale=s, velocity_ratio=np.nan,
                                   sym_grad_ratio=np.nan, grad_ratio=np.nan,
                                   converged=False, failed=True))
    return rows
