"""Command-line front end.

``vvflow <command> [--config FILE] [flags]`` with commands solve,
stokes-nonstd, decompose, study and verify. Exit status 0 on success, 1 on
solver failure, 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from .config import COMMANDS, ConfigError, RunConfig, parse_config
from .io import provenance, write_coefficients, write_csv, write_report, write_vtk

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so ``main`` controls the status."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vvflow", description="Velocity-vorticity Navier-Stokes solver on a box.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", metavar="FILE", help="flat key = value file; flags override it")
    p.add_argument("--nu", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mesh", type=int, nargs=3, metavar=("NX", "NY", "NZ"))
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--lambda-steps", type=int, dest="lambda_steps")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--threads", type=int)
    p.add_argument("--quad-degree", type=int, choices=(4, 6), dest="quad_degree")
    p.add_argument("--seed", type=int)
    return p


def parse_args(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k != "config" and v is not None}
    if "mesh" in flags:
        flags["mesh"] = tuple(flags["mesh"])
    return parse_config(args.config, flags)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_args(argv)
    except ConfigError as e:
        print(f"vvflow: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


def run(cfg: RunConfig) -> int:
    from threadpoolctl import threadpool_limits

    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"vvflow: cannot create output directory {out}: {e.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    with threadpool_limits(limits=cfg.threads):
        try:
            return COMMAND_TABLE[cfg.command](cfg, out)
        except ConfigError as e:
            print(f"vvflow: config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as e:
            print(f"vvflow: solver failure: {e}", file=sys.stderr)
            return EXIT_SOLVER


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------
def _mesh(cfg: RunConfig):
    from .mesh import build_box_mesh

    return build_box_mesh(*cfg.mesh, extent=cfg.extent)


def _vvs_forcing(cfg: RunConfig):
    """Forcing of the coupled problem and the manufactured case when there is one."""
    from .manufactured import make_manufactured_case

    if cfg.forcing == "zero":
        return None, None
    if cfg.forcing == "manufactured":
        case = make_manufactured_case(cfg.nu, cfg.alpha)
        return case.f, case
    return cfg.forcing_field, None


def _picard_config(cfg: RunConfig):
    from .picard import PicardConfig

    return PicardConfig.with_steps(cfg.lambda_steps, max_iter=cfg.max_iter, tol=cfg.tol,
                                   damping=cfg.damping, quad_degree=cfg.quad_degree, skew=cfg.skew)


def _tolerances(cfg: RunConfig) -> dict:
    return {"tol": cfg.tol, "max_iter": cfg.max_iter, "lambda_steps": cfg.lambda_steps,
            "damping": cfg.damping, "quad_degree": cfg.quad_degree, "solver": cfg.solver}


def _fmt(k, v) -> str:
    if isinstance(v, float):
        return f"{k} = {v:.10e}"
    return f"{k} = {v}"


def _measured_constants(cfg: RunConfig, mesh):
    """C_P, trilinear M and C* on the run mesh (C* from config when given)."""
    from .fespaces import build_space
    from .fieldcalc import estimate_poincare
    from .picard import Constants
    from .stokes import NonstdStokesOperator
    from .verify import measure_coercivity_margin, measure_trilinear_constants

    c_p = estimate_poincare(build_space(mesh, 2, 1, "zero-trace"))
    op = NonstdStokesOperator(mesh)
    tri = measure_trilinear_constants(mesh, cfg.probes, cfg.seed, operator=op)
    c_star = cfg.c_star
    if c_star is None:
        c_star = measure_coercivity_margin(mesh, cfg.nu, cfg.alpha, n_probes=cfg.probes,
                                           seed=cfg.seed, c_p=c_p, operator=op)
    return Constants(c_p=c_p, c_star=c_star, M=tri.M), tri


def _state_fields(s) -> dict:
    return {"velocity": s.u, "vorticity": s.w, "pressure": s.P, "vorticity_multiplier": s.eta}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_solve(cfg: RunConfig, out: Path) -> int:
    from .fespaces import Spaces
    from .fieldcalc import alpha_plus
    from .picard import PicardError, VVSProblem, check_smallness, solve_vvs
    from .stokes import StokesOperator
    from .verify import case_errors

    mesh = _mesh(cfg)
    f, case = _vvs_forcing(cfg)
    pc = _picard_config(cfg)
    spaces = Spaces.build(mesh)
    problem = VVSProblem(spaces, f, cfg.nu, cfg.alpha, pc,
                         StokesOperator(spaces, cfg.quad_degree, cfg.solver, tol=cfg.tol))
    constants, tri = _measured_constants(cfg, mesh)
    small = check_smallness(problem.f_norm, cfg.nu, cfg.alpha, constants)
    header = provenance(cfg.echo(), mesh, _tolerances(cfg))
    sections = {"smallness": small.lines() + [_fmt(f"M_{k}", v) for k, v in
                                              (("cross", tri.cross), ("convection", tri.convection),
                                               ("rotation", tri.rotation))]}
    t0 = time.perf_counter()
    try:
        res = solve_vvs(problem)
    except PicardError as e:
        if e.trace is not None:
            write_csv(out / "trace.csv", *e.trace.rows())
        if e.best is not None:
            write_vtk(out / "fields.vtk", mesh, _state_fields(e.best), "vvflow solve (best iterate)")
        sections["result"] = ["status = failed", f"message = {e}"]
        write_report(out / "report.txt", header, sections)
        print(f"vvflow: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    wall = time.perf_counter() - t0
    s = res.state
    write_csv(out / "trace.csv", *res.trace.rows())
    write_coefficients(out / "velocity_coefficients.csv", s.u)
    write_vtk(out / "fields.vtk", mesh, _state_fields(s), "vvflow solve")
    x = s.u.free_values
    T = problem.T
    energy = cfg.alpha * x @ (T.M_X @ x) + cfg.nu * x @ (T.G_X @ x)
    fu = float(problem.F_X @ s.u.coefficients)
    star = problem.star_norm(s.u)
    bound = math.sqrt(2.0 / alpha_plus(cfg.alpha, cfg.nu, constants.c_p)) * problem.f_norm
    result = ["status = converged", f"iterations = {res.iterations}",
              _fmt("residual_velocity", res.final_residuals[0]),
              _fmt("residual_vorticity", res.final_residuals[1]),
              _fmt("star_norm", star), _fmt("apriori_bound", bound),
              f"apriori_holds = {star <= bound * (1 + 1e-12) or problem.f_norm == 0}",
              _fmt("energy_defect", abs(energy - fu) / abs(fu) if fu else abs(energy)),
              _fmt("wall_time_s", wall)]
    sections["result"] = result
    if case is not None:
        sections["errors"] = [_fmt(k, v) for k, v in case_errors(case, s).items()]
    write_report(out / "report.txt", header, sections)
    return EXIT_OK


def cmd_stokes_nonstd(cfg: RunConfig, out: Path) -> int:
    from .fieldcalc import error_norms
    from .manufactured import make_nonstd_case
    from .stokes import NonstdParams, NonstdStokesOperator

    mesh = _mesh(cfg)
    a = cfg.convection_field
    params = NonstdParams(a, cfg.nu, cfg.alpha, cfg.c_star)
    case = None
    if cfg.forcing == "zero":
        g = None
    elif cfg.forcing == "manufactured":
        case = make_nonstd_case(cfg.nu, cfg.alpha, a)
        g = case.g
    else:
        g = cfg.forcing_field
    op = NonstdStokesOperator(mesh, cfg.quad_degree)
    sol = op.solve(params, g)
    write_vtk(out / "fields.vtk", mesh, {"velocity": sol.u, "pressure": sol.p},
              "vvflow stokes-nonstd")
    write_coefficients(out / "pressure_coefficients.csv", sol.p)
    sections = {"smallness": [_fmt(k, v) for k, v in sol.smallness.items()],
                "result": [_fmt("linear_residual", sol.report.residual)]}
    if case is not None:
        eu = error_norms(sol.u, case.u)
        sections["errors"] = [_fmt("u_L2", eu.l2), _fmt("u_H1", eu.h1_semi), _fmt("rot_u", eu.rot)]
    write_report(out / "report.txt", provenance(cfg.echo(), mesh, _tolerances(cfg)), sections)
    return EXIT_OK


def cmd_decompose(cfg: RunConfig, out: Path) -> int:
    from .fieldcalc import helmholtz_decompose

    mesh = _mesh(cfg)
    g, _ = _vvs_forcing(cfg)
    if g is None:
        raise ConfigError("decompose needs a nonzero forcing field")
    res = helmholtz_decompose(g, mesh)
    write_vtk(out / "fields.vtk", mesh, {"field": res.g_h, "solenoidal": res.psi,
                                         "potential": res.q}, "vvflow decompose")
    write_coefficients(out / "potential_coefficients.csv", res.q)
    sections = {"result": [_fmt("residual", res.residual), _fmt("orthogonality", res.orthogonality)]}
    write_report(out / "report.txt", provenance(cfg.echo(), mesh, _tolerances(cfg)), sections)
    return EXIT_OK


def cmd_study(cfg: RunConfig, out: Path) -> int:
    from .manufactured import make_manufactured_case
    from .verify import run_convergence_study

    if cfg.forcing != "manufactured":
        raise ConfigError("study needs forcing = manufactured (errors use the exact solution)")
    if len(set(cfg.mesh)) != 1:
        raise ConfigError(f"study refines cube meshes; mesh must be n n n, got {cfg.mesh}")
    ns = tuple(cfg.mesh[0] * 2**k for k in range(cfg.levels))
    study = run_convergence_study(make_manufactured_case(cfg.nu, cfg.alpha), ns, _picard_config(cfg))
    write_csv(out / "rates.csv", *study.table.rows())
    lines = []
    for rec in study.records:
        lines += [f"n = {rec.n}", f"  iterations = {rec.iterations}",
                  _fmt("  energy_defect", rec.energy_defect),
                  _fmt("  apriori_slack", rec.apriori_slack)]
    write_report(out / "report.txt", provenance(cfg.echo(), None, _tolerances(cfg)),
                 {"levels": [f"n = {' '.join(map(str, ns))}"], "records": lines})
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    from .fespaces import Spaces
    from .picard import VVSProblem
    from .verify import run_invariant_suite

    mesh = _mesh(cfg)
    f, _ = _vvs_forcing(cfg)
    problem = VVSProblem(Spaces.build(mesh), f, cfg.nu, cfg.alpha, _picard_config(cfg))
    suite = run_invariant_suite(nu=cfg.nu, alpha=cfg.alpha, problem=problem,
                                n_probes=cfg.probes, seed=cfg.seed)
    write_csv(out / "checks.csv", ["check", "value", "bound", "passed"],
              [[c.name, c.value, c.bound, c.passed] for c in suite.checks])
    sections = {"checks": [c.line() for c in suite.checks], "diagnostics": suite.diagnostics.lines(),
                "summary": [f"passed = {suite.passed}"]}
    write_report(out / "report.txt", provenance(cfg.echo(), mesh, _tolerances(cfg)), sections)
    for c in suite.checks:
        if not c.passed:
            print(c.line(), file=sys.stderr)
    return EXIT_OK if suite.passed else EXIT_SOLVER


COMMAND_TABLE = {"solve": cmd_solve, "stokes-nonstd": cmd_stokes_nonstd,
                 "decompose": cmd_decompose, "study": cmd_study, "verify": cmd_verify}


if __name__ == "__main__":
    sys.exit(main())
