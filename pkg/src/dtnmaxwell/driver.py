"""Adaptive loop, run configuration and result export."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
import logging
import os
from pathlib import Path
import time

import numpy as np

from .bisection import refine_marked
from .dtn import (ConfigurationError, WaveParams, boundary_source, choose_N, dtn_factors,
                  th_norm)
from .estimator import EstimatorReport, compute_indicators, face_topology, mark_elements
from .fem import (FieldSolution, assemble, build_dof_map, hcurl_error, solve,
                  sphere_face_quadrature)
from .harmonics import quadrature_for_degree
from .mesh import GeometryDescriptor, Mesh, load_mesh
from .meshgen import generate_shell_mesh
from .oracle import plane_wave_sampler, point_source_sampler

__all__ = [
    "RunConfig",
    "ConvergenceRecord",
    "RunResult",
    "adaptive_solve",
    "solve_on_mesh",
    "fit_slope",
    "export_csv",
    "export_vtk",
    "load_config",
    "parse_config",
    "read_csv",
    "truncation_sweep",
    "OUTPUT_ENV",
    "CSV_COLUMNS",
]

log = logging.getLogger(__name__)

OUTPUT_ENV = "DTNMAXWELL_OUTPUT_DIR"
CSV_COLUMNS = ("iter", "n_tets", "n_dofs", "eps_h", "eps_N", "true_error", "wall_time_s")
# degree used to measure the incident boundary data when sizing N
_F_NORM_DEGREE = 40


@dataclass
class RunConfig:
    """Settings of one adaptive run.

    ``mesh`` is ``"shell"`` (generated from ``obstacle_radius``, ``R``,
    ``shell_layers``, ``shell_subdiv``) or a path to a mesh file.
    ``incident`` is ``"none"`` (dipole benchmark with exact Dirichlet data)
    or ``"plane_wave"``.
    """

    eps_target: float
    kappa: float = 2.0
    R: float = 0.5
    obstacle_radius: float | None = 0.1
    mesh: str = "shell"
    shell_layers: int = 2
    shell_subdiv: int = 1
    incident: str = "none"
    polarization: tuple = (1.0, 0.0, 0.0)
    direction: tuple = (0.0, 0.0, -1.0)
    N: str = "auto"
    n_tol: float = 1e-8
    f_norm: str = "auto"
    theta: float = 0.5
    max_dofs: int = 50_000
    max_iters: int = 30
    boundary_degree: str = "auto"
    interior_degree: int = 4
    error_degree: int = 5
    lowrank_threshold: int = 4000
    timing: str = "wall"
    output_dir: str = "output"
    vtk: bool = False

    def __post_init__(self):
        if not (0 < self.theta < 1):
            raise ConfigurationError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.eps_target > 0:
            raise ConfigurationError("eps_target must be positive")
        if self.max_dofs <= 0 or self.max_iters < 0:
            raise ConfigurationError("max_dofs must be positive and max_iters nonnegative")
        if self.incident not in ("none", "plane_wave"):
            raise ConfigurationError(f"unknown incident field {self.incident!r}")
        if self.timing not in ("wall", "off"):
            raise ConfigurationError("timing must be 'wall' or 'off'")
        if str(self.N) != "auto":
            try:
                if int(self.N) < 1:
                    raise ValueError
            except ValueError:
                raise ConfigurationError(f"N must be 'auto' or a positive integer, got {self.N!r}") from None
        if str(self.f_norm) != "auto":
            try:
                if float(self.f_norm) <= 0:
                    raise ValueError
            except ValueError:
                raise ConfigurationError("f_norm must be 'auto' or a positive number") from None
        if self.mesh == "shell" and self.obstacle_radius is None:
            raise ConfigurationError("the generated shell needs obstacle_radius")

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)


def _convert(raw: str, default, name: str):
    s = raw.strip()
    if name == "obstacle_radius":
        if s.lower() in ("none", "mesh", ""):
            return None
        try:
            return float(s)
        except ValueError:
            raise ConfigurationError(f"{name}: expected a number or 'none', got {raw!r}") from None
    if isinstance(default, bool):
        if s.lower() in ("1", "true", "yes", "on"):
            return True
        if s.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        parts = s.replace(",", " ").split()
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            raise ConfigurationError(f"{name}: expected numbers, got {raw!r}") from None
    if isinstance(default, int):
        try:
            return int(s)
        except ValueError:
            raise ConfigurationError(f"{name}: expected an integer, got {raw!r}") from None
    if isinstance(default, float) or name in ("eps_target",):
        try:
            return float(s)
        except ValueError:
            raise ConfigurationError(f"{name}: expected a number, got {raw!r}") from None
    return s


def parse_config(text: str, base_dir: str | os.PathLike | None = None) -> RunConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    proto = {f.name: f for f in fields(RunConfig)}
    defaults = {f.name: f.default for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in proto:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(val, defaults[key], key)
    if "eps_target" not in values:
        raise ConfigurationError("eps_target is required")
    if base_dir is not None and values.get("mesh", "shell") != "shell":
        p = Path(values["mesh"])
        if not p.is_absolute():
            values["mesh"] = str(Path(base_dir) / p)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


@dataclass
class ConvergenceRecord:
    rows: list = field(default_factory=list)
    stop_reason: str = ""
    N: int = 0
    f_norm: float = 0.0

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)


@dataclass
class RunResult:
    solution: FieldSolution
    record: ConvergenceRecord
    report: EstimatorReport
    mesh: Mesh


@dataclass
class _Problem:
    w: WaveParams
    geom: GeometryDescriptor
    mesh: Mesh
    dirichlet: object
    exact: object
    f_spectrum: object
    f_norm: float
    N: int


def _setup(cfg: RunConfig) -> _Problem:
    if cfg.mesh == "shell":
        mesh = generate_shell_mesh(cfg.obstacle_radius, cfg.R, cfg.shell_layers, cfg.shell_subdiv)
        R = cfg.R
        Rp = cfg.obstacle_radius
        geom = GeometryDescriptor(R, cfg.obstacle_radius)
    else:
        mesh = load_mesh(cfg.mesh)
        R = mesh.outer_radius()
        if abs(R - cfg.R) > 1e-9 * R:
            log.info("mesh outer radius %.6g overrides configured R=%.6g", R, cfg.R)
        Rp = mesh.obstacle_radius()
        geom = GeometryDescriptor(R, cfg.obstacle_radius)
    w = WaveParams(cfg.kappa, R, Rp)

    if cfg.incident == "none":
        exact = point_source_sampler(cfg.kappa)
        dirichlet = exact
        einc = None
    else:
        einc = plane_wave_sampler(cfg.kappa, cfg.polarization, cfg.direction)
        exact = None
        dirichlet = lambda x: -einc(x)[0]
    # the unknown is the radiating field, so the boundary source on Gamma_R vanishes;
    # the incident data only sizes the truncation term
    f_spectrum = None
    if str(cfg.f_norm) == "auto":
        f_norm = 0.0
        if einc is not None:
            S = boundary_source(einc, w, _F_NORM_DEGREE, quadrature_for_degree(_F_NORM_DEGREE))
            f_norm = th_norm(S, "div_half")
        if f_norm == 0.0:
            f_norm = 1.0
    else:
        f_norm = float(cfg.f_norm)
    N = choose_N(w, f_norm, cfg.n_tol) if str(cfg.N) == "auto" else int(cfg.N)
    return _Problem(w, geom, mesh, dirichlet, exact, f_spectrum, f_norm, N)


def solve_on_mesh(mesh: Mesh, w: WaveParams, N: int, dirichlet, f_spectrum=None,
                  boundary_degree=None, lowrank_threshold: int = 4000):
    """Assemble and solve once; returns ``(solution, system, face quadrature, factors)``."""
    F = dtn_factors(w, N)
    if boundary_degree in (None, "auto"):
        fq = sphere_face_quadrature(mesh, w.R, max(4, 2 * N + 2), N=N)
    else:
        fq = sphere_face_quadrature(mesh, w.R, int(boundary_degree))
    dofs = build_dof_map(mesh)
    sys = assemble(mesh, dofs, w, F, f_spectrum, dirichlet, fq=fq, lowrank_threshold=lowrank_threshold)
    return solve(sys), sys, fq, F


def adaptive_solve(cfg: RunConfig, mesh: Mesh | None = None, callback=None) -> RunResult:
    """Solve, estimate, stop if ``eps_h <= eps_target``, otherwise mark, refine and repeat.

    Stops on the tolerance, on ``max_iters`` refinements, or before solving a
    refined mesh whose edge count exceeds ``max_dofs``.
    """
    pb = _setup(cfg)
    if mesh is not None:
        pb.mesh = mesh
    rec = ConvergenceRecord(N=pb.N, f_norm=pb.f_norm)
    m = pb.mesh
    t_start = time.perf_counter()
    it = 0
    while True:
        t0 = time.perf_counter()
        try:
            sol, sys, fq, F = solve_on_mesh(m, pb.w, pb.N, pb.dirichlet, pb.f_spectrum,
                                            cfg.boundary_degree, cfg.lowrank_threshold)
            rep = compute_indicators(sol, pb.w, F, pb.f_spectrum, fq, sys.coupling, pb.f_norm,
                                     cfg.interior_degree, face_topology(m.tets))
        except Exception as exc:
            raise RuntimeError(f"iteration {it}: {exc}") from exc
        err = hcurl_error(sol, pb.exact, cfg.error_degree) if pb.exact is not None else None
        wall = time.perf_counter() - t0 if cfg.timing == "wall" else None
        rec.rows.append({"iter": it, "n_tets": m.n_tets, "n_dofs": sol.dofs.n_dofs,
                         "eps_h": rep.eps_h, "eps_N": rep.eps_N, "true_error": err,
                         "wall_time_s": wall})
        log.info("iter %d: tets=%d dofs=%d eps_h=%.4e eps_N=%.3e err=%s",
                 it, m.n_tets, sol.dofs.n_dofs, rep.eps_h, rep.eps_N,
                 "-" if err is None else f"{err:.4e}")
        if callback is not None:
            callback(it, sol, rep)
        if rep.eps_h <= cfg.eps_target:
            rec.stop_reason = "eps"
            break
        if it >= cfg.max_iters:
            rec.stop_reason = "max_iters"
            break
        marked = mark_elements(rep, cfg.theta)
        if marked.converged:
            rec.stop_reason = "eps"
            break
        try:
            m_new = refine_marked(m, marked.marked, pb.geom)
        except Exception as exc:
            raise RuntimeError(f"iteration {it}: refinement failed: {exc}") from exc
        if build_dof_map(m_new).n_dofs > cfg.max_dofs:
            rec.stop_reason = "max_dofs"
            break
        m = m_new
        it += 1
    log.info("stopped (%s) after %.1f s", rec.stop_reason, time.perf_counter() - t_start)
    return RunResult(sol, rec, rep, m)


def fit_slope(record: ConvergenceRecord, column: str = "true_error", tail: int = 4) -> float:
    """Least-squares slope of ``log(column)`` against ``log(n_dofs)`` over the last ``tail`` rows."""
    if column not in ("eps_h", "true_error"):
        raise ValueError("column must be 'eps_h' or 'true_error'")
    if tail < 2 or len(record.rows) < tail:
        raise ValueError(f"need at least {max(tail, 2)} rows, have {len(record.rows)}")
    rows = record.rows[-tail:]
    y = np.array([r[column] if r[column] is not None else np.nan for r in rows], dtype=float)
    x = np.array([r["n_dofs"] for r in rows], dtype=float)
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise ValueError(f"column {column!r} has missing or non-positive entries")
    if np.ptp(x) == 0:
        raise ValueError("dof counts do not vary over the tail")
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def export_csv(record: ConvergenceRecord, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(CSV_COLUMNS)
            for r in record.rows:
                wr.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({c: (None if r[c] == "" else (int(r[c]) if c in ("iter", "n_tets", "n_dofs")
                                                   else float(r[c]))) for c in CSV_COLUMNS})
    return out


def export_vtk(sol: FieldSolution | None, mesh: Mesh, path) -> None:
    """Legacy ASCII unstructured grid; field at tet barycenters as real and imaginary vectors."""
    path = Path(path)
    nt = mesh.n_tets
    vals = np.zeros((nt, 3), dtype=complex) if sol is None else sol.barycenter_values()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write("# vtk DataFile Version 2.0\n")
            fh.write("edge element field\nASCII\nDATASET UNSTRUCTURED_GRID\n")
            fh.write(f"POINTS {mesh.n_vertices} double\n")
            np.savetxt(fh, mesh.vertices, fmt="%.17g")
            fh.write(f"CELLS {nt} {5 * nt}\n")
            np.savetxt(fh, np.hstack([np.full((nt, 1), 4), mesh.tets]), fmt="%d")
            fh.write(f"CELL_TYPES {nt}\n")
            np.savetxt(fh, np.full(nt, 10), fmt="%d")
            fh.write(f"CELL_DATA {nt}\n")
            fh.write("VECTORS E_real double\n")
            np.savetxt(fh, vals.real, fmt="%.17g")
            fh.write("VECTORS E_imag double\n")
            np.savetxt(fh, vals.imag, fmt="%.17g")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def truncation_sweep(cfg: RunConfig, nmax: int):
    """Solve on the initial mesh for ``N = 1..nmax``; rows of ``(N, eps_N, eps_h, error, diff)``.

    ``diff`` is the H(curl) distance to the ``N = nmax`` solution.
    """
    if nmax < 1:
        raise ConfigurationError("nmax must be >= 1")
    pb = _setup(cfg)
    sols = {}
    rows = []
    for N in range(1, nmax + 1):
        sol, sys, fq, F = solve_on_mesh(pb.mesh, pb.w, N, pb.dirichlet, pb.f_spectrum,
                                        None, cfg.lowrank_threshold)
        rep = compute_indicators(sol, pb.w, F, pb.f_spectrum, fq, sys.coupling, pb.f_norm,
                                 cfg.interior_degree)
        err = hcurl_error(sol, pb.exact, cfg.error_degree) if pb.exact is not None else None
        sols[N] = sol
        rows.append([N, rep.eps_N, rep.eps_h, err])
    ref = sols[nmax]
    zero = lambda x: (np.zeros((len(x), 3)), np.zeros((len(x), 3)))
    for r in rows:
        d = FieldSolution(pb.mesh, ref.dofs, sols[r[0]].coeffs - ref.coeffs)
        r.append(hcurl_error(d, zero, cfg.error_degree))
    return rows
