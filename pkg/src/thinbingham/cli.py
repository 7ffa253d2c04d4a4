"""Configuration-driven experiment runner.

Subcommands: single, cell, sweep, darcy, epsilon-study, verify-apriori.
Experiments are described by an INI config file; every emitted record
carries the sha256 hash of the canonicalized config so results are
traceable.  Outputs are deterministic: fixed %.17g formatting, ordering by
parameter key, no timestamps.

Exit codes: 0 success, 2 config validation failure, 3 solver
non-convergence in a mandatory stage.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import math
import os
import re
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__, geometry
from . import cell_problems as cp
from . import fields as flds
from . import macroscale as ms
from . import vi_solver as vi


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


COMMANDS = ("single", "cell", "sweep", "darcy", "epsilon-study",
            "verify-apriori")

_DEFAULTS = {
    "experiment": {"command": "single", "seed": "0"},
    "medium": {"omega_extent": "0.25 0.25", "epsilon": "0.25",
               "a_eps": "0.25", "lam": "1.0", "regime": "critical",
               "obstacle_radius": "0.25", "mu": "1.0", "g": "0.0"},
    "grid": {"n": "16", "darcy_shape": "16 16"},
    "solver": {"rho": "", "tol_rel": "1e-8", "tol_div": "1e-10",
               "max_outer": "5000", "linear_method": "auto"},
    "forcing": {"f1": "1.0", "f2": "0.0"},
    "sweep": {"directions": "8", "magnitudes": "0.5 1.0 2.0 4.0",
              "locate_thresholds": "true", "threshold_iters": "12"},
    "darcy": {"theta": "0.5", "tol": "1e-10", "max_iter": "500", "eta": ""},
    "study": {"epsilons": "0.25 0.125 0.0625", "a_eps_list": "",
              "table_directions": "8", "table_magnitudes": "0.5 1.0 2.0 4.0"},
    "output": {"dump_fields": "false"},
}


# ---------------------------------------------------------------------------
# config handling

@dataclass
class ExperimentConfig:
    parser: configparser.ConfigParser
    path: str | None = None

    def get(self, section: str, key: str) -> str:
        try:
            return self.parser.get(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError):
            try:
                return _DEFAULTS[section][key]
            except KeyError:
                raise ConfigError(f"unknown config field {section}.{key}")

    def get_float(self, section, key):
        raw = self.get(section, key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key} must be a number, got {raw!r}")

    def get_int(self, section, key):
        raw = self.get(section, key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key} must be an integer, got {raw!r}")

    def get_bool(self, section, key):
        raw = self.get(section, key).strip().lower()
        if raw in ("true", "1", "yes"):
            return True
        if raw in ("false", "0", "no"):
            return False
        raise ConfigError(f"{section}.{key} must be a boolean, got {raw!r}")

    def get_floats(self, section, key):
        raw = self.get(section, key).split()
        try:
            return [float(v) for v in raw]
        except ValueError:
            raise ConfigError(f"{section}.{key} must be numbers, got {raw!r}")

    def canonical_text(self) -> str:
        """Config serialized with defaults filled in, sections/keys sorted."""
        lines = []
        for section in sorted(set(_DEFAULTS) |
                              set(self.parser.sections())):
            lines.append(f"[{section}]")
            keys = set(_DEFAULTS.get(section, {}))
            if self.parser.has_section(section):
                keys |= set(self.parser.options(section))
            for key in sorted(keys):
                lines.append(f"{key} = {self.get(section, key)}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def _validate_keys(parser: configparser.ConfigParser) -> None:
    for section in parser.sections():
        if section not in _DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser.options(section):
            if key not in _DEFAULTS[section]:
                raise ConfigError(f"unknown config field {section}.{key}")


def parse_config(path: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser.read(path)
    _validate_keys(parser)
    return ExperimentConfig(parser=parser, path=path)


def emit_config(config: ExperimentConfig) -> str:
    return config.canonical_text()


def config_from_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    _validate_keys(parser)
    return ExperimentConfig(parser=parser)


_FORCING_TOKEN = re.compile(r"^[\d\s x12+\-*/().eE]*$")


def parse_forcing(f1: str, f2: str):
    """Vectorized f'(x1, x2) from restricted polynomial expressions."""
    for expr in (f1, f2):
        if not _FORCING_TOKEN.match(expr):
            raise ConfigError(
                f"forcing expression {expr!r} may use only x1, x2, numbers "
                "and + - * / ( )")

    def func(x1, x2):
        env = {"__builtins__": {}}
        vals = {"x1": x1, "x2": x2}
        a = eval(f1, env, vals)
        b = eval(f2, env, vals)
        return (np.asarray(a, dtype=float) * np.ones_like(x1),
                np.asarray(b, dtype=float) * np.ones_like(x1))

    return func


def _medium_spec(config: ExperimentConfig, epsilon=None, a_eps=None):
    regime = config.get("medium", "regime")
    if regime not in geometry.REGIMES:
        raise ConfigError(f"medium.regime must be one of {geometry.REGIMES}, "
                          f"got {regime!r}")
    ext = config.get_floats("medium", "omega_extent")
    if len(ext) != 2:
        raise ConfigError("medium.omega_extent must be two lengths")
    lam = config.get_float("medium", "lam") if regime == geometry.CRITICAL \
        else (0.0 if regime == geometry.SUBCRITICAL else math.inf)
    try:
        return geometry.MediumSpec(
            omega_extent=(ext[0], ext[1]),
            epsilon=epsilon if epsilon is not None
            else config.get_float("medium", "epsilon"),
            a_eps=a_eps if a_eps is not None
            else config.get_float("medium", "a_eps"),
            lam=lam, regime=regime,
            obstacle_radius=config.get_float("medium", "obstacle_radius"),
            mu=config.get_float("medium", "mu"),
            g=config.get_float("medium", "g"))
    except geometry.GeometryError as exc:
        raise ConfigError(f"medium: {exc}")


def _solver_config(config: ExperimentConfig) -> vi.VISolverConfig:
    rho_raw = config.get("solver", "rho").strip()
    return vi.VISolverConfig(
        rho=float(rho_raw) if rho_raw else None,
        tol_rel=config.get_float("solver", "tol_rel"),
        tol_div=config.get_float("solver", "tol_div"),
        max_outer=config.get_int("solver", "max_outer"),
        linear_method=config.get("solver", "linear_method"))


# ---------------------------------------------------------------------------
# reports

@dataclass
class StudyReport:
    columns: list[str]
    records: list[dict] = field(default_factory=list)
    summary_lines: list[str] = field(default_factory=list)
    failed: bool = False        # a mandatory stage did not converge

    def add(self, **record):
        self.records.append(record)

    def csv_text(self) -> str:
        out = io.StringIO()
        out.write(",".join(self.columns) + "\n")
        for rec in self.records:
            cells = []
            for col in self.columns:
                v = rec.get(col, "")
                if isinstance(v, float):
                    cells.append(f"{v:.17g}")
                elif isinstance(v, bool):
                    cells.append(str(int(v)))
                else:
                    cells.append(str(v))
            out.write(",".join(cells) + "\n")
        return out.getvalue()

    def summary_text(self) -> str:
        return "\n".join(self.summary_lines) + "\n"


def write_report(report: StudyReport, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.csv"), "w") as fh:
        fh.write(report.csv_text())
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(report.summary_text())


# ---------------------------------------------------------------------------
# commands

def run_single(config: ExperimentConfig, out_dir: str,
               threads: int = 1) -> StudyReport:
    spec = _medium_spec(config)
    n = config.get_int("grid", "n")
    grid = geometry.build_thin_medium(spec, n)
    func = parse_forcing(config.get("forcing", "f1"),
                         config.get("forcing", "f2"))
    forcing = vi.forcing_from_function(grid, func)
    prob = vi.BinghamProblem(grid, spec.mu, spec.yield_eps, spec.epsilon,
                             forcing)
    sol = vi.solve_bingham(prob, _solver_config(config))
    nr = flds.norms(sol.velocity, spec.epsilon)
    h = config.hash()
    report = StudyReport(columns=[
        "config_hash", "version", "epsilon", "a_eps", "n", "converged",
        "iterations", "energy", "div_residual", "l2", "sym_grad_l2",
        "grad_l2", "sym_grad_l1"])
    report.add(config_hash=h, version=__version__, epsilon=spec.epsilon,
               a_eps=spec.a_eps, n=n, converged=sol.converged,
               iterations=sol.iterations,
               energy=float(sol.energy_history[-1]),
               div_residual=float(sol.residual_history[-1, 0]),
               l2=nr.l2, sym_grad_l2=nr.sym_grad_l2, grad_l2=nr.grad_l2,
               sym_grad_l1=nr.sym_grad_l1)
    report.summary_lines = [
        f"single solve  config {h}",
        f"  epsilon={spec.epsilon:g} a_eps={spec.a_eps:g} n={n} "
        f"regime={spec.regime}",
        f"  converged={sol.converged} iterations={sol.iterations}",
        f"  energy={sol.energy_history[-1]:.12g}",
        f"  |u|_L2={nr.l2:.12g}  |D_eps u|_L2={nr.sym_grad_l2:.12g}",
    ]
    if not sol.converged:
        report.failed = True
    if config.get_bool("output", "dump_fields"):
        cells = sol.velocity.cell_values()
        for c in range(cells.shape[0]):
            flds.dump_scalar(cells[c],
                             os.path.join(out_dir, f"velocity_{c + 1}.txt"))
        flds.dump_scalar(sol.pressure.values,
                         os.path.join(out_dir, "pressure.txt"))
    with open(os.path.join(out_dir, "diagnostics.csv"), "w") as fh:
        fh.write(sol.diagnostics_csv())
    return report


def _cell_grid_for(config, spec, n):
    if spec.regime == geometry.SUBCRITICAL:
        return geometry.build_cell_2d(spec, n)
    return geometry.build_cell(spec, n)


def run_cell(config: ExperimentConfig, out_dir: str,
             threads: int = 1) -> StudyReport:
    spec = _medium_spec(config)
    n = config.get_int("grid", "n")
    grid = _cell_grid_for(config, spec, n)
    xi = (config.get_float("forcing", "f1"),
          config.get_float("forcing", "f2"))
    prob = cp.CellProblem(regime=spec.regime, lam=spec.lam, grid=grid,
                          mu=spec.mu, g=spec.g, xi=xi)
    sol = cp.solve_cell(prob, _solver_config(config))
    h = config.hash()
    report = StudyReport(columns=[
        "config_hash", "version", "regime", "lam", "xi_1", "xi_2", "n",
        "K_1", "K_2", "chi3_integral", "div_residual", "converged",
        "iterations"])
    report.add(config_hash=h, version=__version__, regime=spec.regime,
               lam=spec.lam, xi_1=xi[0], xi_2=xi[1], n=n,
               K_1=float(sol.K[0]), K_2=float(sol.K[1]),
               chi3_integral=sol.chi3_integral,
               div_residual=sol.div_residual, converged=sol.converged,
               iterations=sol.iterations)
    report.summary_lines = [
        f"cell problem  config {h}",
        f"  regime={spec.regime} lam={spec.lam:g} xi=({xi[0]:g},{xi[1]:g}) n={n}",
        f"  K=({sol.K[0]:.12g},{sol.K[1]:.12g}) converged={sol.converged}",
    ]
    if not sol.converged:
        report.failed = True
    return report


def _build_table(config: ExperimentConfig, spec, n, threads,
                 directions=None, magnitudes=None) -> cp.PermeabilityTable:
    grid = _cell_grid_for(config, spec, n)
    if directions is None:
        directions = cp.default_directions(
            config.get_int("sweep", "directions"))
    if magnitudes is None:
        magnitudes = config.get_floats("sweep", "magnitudes")
    return cp.build_permeability_table(
        spec.regime, spec.lam, grid, spec.mu, spec.g,
        directions=directions, magnitudes=magnitudes,
        config=_solver_config(config), threads=threads,
        locate_thresholds=config.get_bool("sweep", "locate_thresholds"),
        threshold_iters=config.get_int("sweep", "threshold_iters"))


def run_sweep(config: ExperimentConfig, out_dir: str,
              threads: int = 1) -> StudyReport:
    spec = _medium_spec(config)
    n = config.get_int("grid", "n")
    mags = config.get_floats("sweep", "magnitudes")
    h = config.hash()
    report = StudyReport(columns=[
        "config_hash", "version", "xi_1", "xi_2", "K_1", "K_2", "converged"])
    if not mags:
        report.summary_lines = [f"sweep  config {h}", "  empty magnitude list"]
        return report
    table = _build_table(config, spec, n, threads)
    for xi, K, conv in table.rows():
        report.add(config_hash=h, version=__version__,
                   xi_1=float(xi[0]), xi_2=float(xi[1]),
                   K_1=float(K[0]), K_2=float(K[1]), converged=conv)
    report.summary_lines = [f"sweep  config {h}",
                            f"  regime={spec.regime} n={n} "
                            f"{len(table.directions)} directions x "
                            f"{len(table.magnitudes)} magnitudes"]
    for i, d in enumerate(table.directions):
        report.summary_lines.append(
            f"  direction ({d[0]:+.6f},{d[1]:+.6f})  threshold "
            f"{table.thresholds[i]:.12g}")
    if not table.converged.all():
        report.failed = True
        report.summary_lines.append("  WARNING: some table entries did not "
                                    "converge (flagged in report.csv)")
    with open(os.path.join(out_dir, "permeability.csv"), "w") as fh:
        fh.write(table.to_csv())
    return report


def _darcy_config(config: ExperimentConfig) -> ms.DarcyConfig:
    eta_raw = config.get("darcy", "eta").strip()
    return ms.DarcyConfig(
        theta=config.get_float("darcy", "theta"),
        tol=config.get_float("darcy", "tol"),
        max_iter=config.get_int("darcy", "max_iter"),
        eta=float(eta_raw) if eta_raw else None)


def run_darcy(config: ExperimentConfig, out_dir: str,
              threads: int = 1) -> StudyReport:
    spec = _medium_spec(config)
    n = config.get_int("grid", "n")
    table = _build_table(config, spec, n, threads)
    shape = config.get_floats("grid", "darcy_shape")
    shape = (int(shape[0]), int(shape[1]))
    func = parse_forcing(config.get("forcing", "f1"),
                         config.get("forcing", "f2"))
    prob = ms.DarcyProblem(extent=tuple(config.get_floats(
        "medium", "omega_extent")), shape=shape, forcing=func, table=table,
        config=_darcy_config(config))
    sol = ms.solve_darcy(prob)
    h = config.hash()
    div = sol.div(prob.spacing)
    report = StudyReport(columns=[
        "config_hash", "version", "converged", "iterations", "div_residual",
        "max_flux", "indeterminate_cells", "clamped"])
    report.add(config_hash=h, version=__version__, converged=sol.converged,
               iterations=sol.iterations,
               div_residual=float(np.abs(div).max()),
               max_flux=float(max(np.abs(sol.U[0]).max(),
                                  np.abs(sol.U[1]).max())),
               indeterminate_cells=int(sol.indeterminate.sum()),
               clamped=sol.clamped)
    report.summary_lines = [
        f"darcy  config {h}",
        f"  shape={shape[0]}x{shape[1]} converged={sol.converged} "
        f"iterations={sol.iterations}",
        f"  max |div U| = {np.abs(div).max():.12g}",
        f"  U3 = {sol.U3:g}",
    ]
    if not sol.converged:
        report.failed = True
    if config.get_bool("output", "dump_fields"):
        flds.dump_scalar(sol.P_hat, os.path.join(out_dir, "pressure_hat.txt"))
    return report


def run_verify(config: ExperimentConfig, out_dir: str,
               threads: int = 1) -> StudyReport:
    regime = config.get("medium", "regime")
    epsilons = config.get_floats("study", "epsilons")
    if not epsilons or any(e <= 0 or e >= 1 for e in epsilons):
        raise ConfigError("study.epsilons must be values in (0,1)")
    a_list = _study_a_eps(config, epsilons, regime)
    specs = [_medium_spec(config, epsilon=e, a_eps=a)
             for e, a in zip(epsilons, a_list)]
    n = config.get_int("grid", "n")
    func = parse_forcing(config.get("forcing", "f1"),
                         config.get("forcing", "f2"))
    rows = vi.verify_apriori(specs, n, _solver_config(config), f_prime=func)
    h = config.hash()
    report = StudyReport(columns=[
        "config_hash", "version", "epsilon", "a_eps", "scale",
        "velocity_ratio", "sym_grad_ratio", "grad_ratio", "converged",
        "failed"])
    report.summary_lines = [f"a-priori verification  config {h}",
                            f"  {'eps':>10} {'a_eps':>10} {'|u|/s^2':>12} "
                            f"{'|Du|/s':>12} {'|Du_full|/s':>12}"]
    for r in rows:
        report.add(config_hash=h, version=__version__, epsilon=r.epsilon,
                   a_eps=r.a_eps, scale=r.scale,
                   velocity_ratio=r.velocity_ratio,
                   sym_grad_ratio=r.sym_grad_ratio, grad_ratio=r.grad_ratio,
                   converged=r.converged, failed=r.failed)
        report.summary_lines.append(
            f"  {r.epsilon:>10.6g} {r.a_eps:>10.6g} {r.velocity_ratio:>12.6g} "
            f"{r.sym_grad_ratio:>12.6g} {r.grad_ratio:>12.6g}"
            + ("  FAILED" if r.failed else ""))
        if r.failed:
            report.failed = True
    ratios = [r.sym_grad_ratio for r in rows if not r.failed]
    if ratios and min(ratios) > 0:
        bounded = max(ratios) / min(ratios) < 2.0
        report.summary_lines.append(
            f"  sym-grad ratio spread factor "
            f"{max(ratios) / min(ratios):.4g} (bounded: {bounded})")
    return report


def _study_a_eps(config, epsilons, regime):
    a_raw = config.get("study", "a_eps_list").strip()
    if a_raw:
        a_list = [float(v) for v in a_raw.split()]
        if len(a_list) != len(epsilons):
            raise ConfigError("study.a_eps_list must match study.epsilons "
                              "in length")
        return a_list
    if regime == geometry.CRITICAL:
        lam = config.get_float("medium", "lam")
        return [lam * e for e in epsilons]
    if regime == geometry.SUPERCRITICAL:
        a = config.get_float("medium", "a_eps")
        return [a] * len(epsilons)
    raise ConfigError("study.a_eps_list is required for the subcritical "
                      "regime (a_eps must shrink faster than epsilon)")


def run_epsilon_study(config: ExperimentConfig, out_dir: str,
                      threads: int = 1) -> StudyReport:
    """Solve along an epsilon list, unfold, rescale and compare to the limit.

    The limit field is assembled macro cell by macro cell: the Darcy solve
    on the tabulated permeability gives xi(k') = f'(k') - grad P_hat(k'),
    and the matching cell solution chi^xi (cached per quantized xi) is the
    predicted profile in that cell.
    """
    regime = config.get("medium", "regime")
    epsilons = config.get_floats("study", "epsilons")
    if sorted(epsilons, reverse=True) != epsilons:
        raise ConfigError("study.epsilons must be strictly decreasing")
    a_list = _study_a_eps(config, epsilons, regime)
    n = config.get_int("grid", "n")
    func = parse_forcing(config.get("forcing", "f1"),
                         config.get("forcing", "f2"))
    solver_cfg = _solver_config(config)
    h = config.hash()
    report = StudyReport(columns=[
        "config_hash", "version", "epsilon", "a_eps", "distance",
        "solution_norm", "limit_norm", "converged", "failed"])
    report.summary_lines = [f"epsilon study  config {h}",
                            f"  regime={regime} n={n}"]

    # regime permeability table, shared by all epsilon stages
    spec0 = _medium_spec(config, epsilon=epsilons[0], a_eps=a_list[0])
    table = _build_table(
        config, spec0, n, threads,
        directions=cp.default_directions(
            config.get_int("study", "table_directions")),
        magnitudes=config.get_floats("study", "table_magnitudes"))

    chi_cache: dict = {}
    distances = []
    for e_idx, (eps, a_eps) in enumerate(zip(epsilons, a_list)):
        try:
            spec = _medium_spec(config, epsilon=eps, a_eps=a_eps)
            grid = geometry.build_thin_medium(spec, n)
            forcing = vi.forcing_from_function(grid, func)
            prob = vi.BinghamProblem(grid, spec.mu, spec.yield_eps, eps,
                                     forcing)
            sol = vi.solve_bingham(prob, solver_cfg)
            unfolded = flds.unfold(sol.velocity, a_eps)
            s = eps if regime == geometry.SUPERCRITICAL else a_eps
            rescaled = flds.UnfoldedField(data=unfolded.data / s**2,
                                          a_eps=a_eps)
            limit = _limit_field(config, spec, grid, table, func, chi_cache,
                                 solver_cfg)
            diff = flds.UnfoldedField(data=rescaled.data - limit.data,
                                      a_eps=a_eps)
            d = diff.l2_norm()
            distances.append(d)
            report.add(config_hash=h, version=__version__, epsilon=eps,
                       a_eps=a_eps, distance=d,
                       solution_norm=rescaled.l2_norm(),
                       limit_norm=limit.l2_norm(),
                       converged=sol.converged, failed=False)
            report.summary_lines.append(
                f"  eps={eps:<10.6g} a_eps={a_eps:<10.6g} "
                f"distance={d:.8g}")
            if not sol.converged:
                report.failed = True
        except Exception as exc:
            report.add(config_hash=h, version=__version__, epsilon=eps,
                       a_eps=a_eps, distance=float("nan"),
                       solution_norm=float("nan"),
                       limit_norm=float("nan"), converged=False, failed=True)
            report.summary_lines.append(f"  eps={eps:g} FAILED: {exc}")
            report.failed = True
    if len(distances) == len(epsilons) and len(distances) >= 2:
        mono = all(b <= a * (1 + 1e-12)
                   for a, b in zip(distances, distances[1:]))
        report.summary_lines.append(f"  distances nonincreasing: {mono}")
    return report


def _limit_field(config, spec, grid, table, func, chi_cache, solver_cfg):
    """Predicted limit profile per macro cell from the Darcy + cell problems."""
    M1, M2 = grid.macro_cells
    n = grid.n
    darcy = ms.DarcyProblem(
        extent=spec.omega_extent, shape=(M1, M2), forcing=func, table=table,
        config=_darcy_config(config))
    dsol = ms.solve_darcy(darcy)
    hx, hy = darcy.spacing
    gx, gy = ms._grad_faces(dsol.P_hat, darcy.spacing)
    if M1 > 1:
        gx_pad = np.pad(gx, ((1, 1), (0, 0)), mode="edge")
        gx_c = 0.5 * (gx_pad[:-1] + gx_pad[1:])
    else:
        gx_c = np.zeros((M1, M2))
    if M2 > 1:
        gy_pad = np.pad(gy, ((0, 0), (1, 1)), mode="edge")
        gy_c = 0.5 * (gy_pad[:, :-1] + gy_pad[:, 1:])
    else:
        gy_c = np.zeros((M1, M2))
    xc = (np.arange(M1) + 0.5) * hx
    yc = (np.arange(M2) + 0.5) * hy
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    F1, F2 = func(X, Y)
    data = np.zeros((3, M1, M2, n, n, n))
    for k1 in range(M1):
        for k2 in range(M2):
            xi = (F1[k1, k2] - gx_c[k1, k2], F2[k1, k2] - gy_c[k1, k2])
            key = (round(xi[0], 10), round(xi[1], 10))
            if key not in chi_cache:
                chi_cache[key] = _limit_cell_values(config, spec, n, key,
                                                    solver_cfg)
            data[:, k1, k2] = chi_cache[key]
    return flds.UnfoldedField(data=data, a_eps=spec.a_eps)


def _limit_cell_values(config, spec, n, xi, solver_cfg) -> np.ndarray:
    """Cell-centered chi^xi on the unit cell, regime-appropriate."""
    if spec.regime == geometry.SUBCRITICAL:
        grid2 = geometry.build_cell_2d(spec, n)
        prob = cp.CellProblem(regime=spec.regime, lam=spec.lam, grid=grid2,
                              mu=spec.mu, g=spec.g, xi=xi)
        sol = cp.solve_cell_subcritical(prob, solver_cfg)
        out = np.zeros((3, n, n, n))
        out[0] = sol.chi_cells[0][:, :, None]
        out[1] = sol.chi_cells[1][:, :, None]
        return out
    grid3 = geometry.build_cell(spec, n)
    prob = cp.CellProblem(regime=spec.regime, lam=spec.lam, grid=grid3,
                          mu=spec.mu, g=spec.g, xi=xi)
    if spec.regime == geometry.CRITICAL:
        sol = cp.solve_cell_critical(prob, solver_cfg)
    else:
        sol = cp.solve_cell_supercritical(prob, n_profile=1024)
    return sol.chi_cells


_RUNNERS = {
    "single": run_single,
    "cell": run_cell,
    "sweep": run_sweep,
    "darcy": run_darcy,
    "epsilon-study": run_epsilon_study,
    "verify-apriori": run_verify,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="thinbingham",
        description="Bingham flow in thin porous media: solvers, cell "
                    "problems, permeability sweeps and convergence studies.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="INI experiment config")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    try:
        config = parse_config(args.config)
        cfg_cmd = config.get("experiment", "command")
        if config.parser.has_option("experiment", "command") \
                and cfg_cmd != args.command:
            raise ConfigError(
                f"experiment.command = {cfg_cmd!r} does not match the "
                f"requested subcommand {args.command!r}")
        np.random.seed(args.seed % (2**32))
        os.makedirs(args.out, exist_ok=True)
        report = _RUNNERS[args.command](config, args.out,
                                        threads=max(1, args.threads))
    except (ConfigError, geometry.GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    write_report(report, args.out)
    print(report.summary_text(), end="")
    if report.failed:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
