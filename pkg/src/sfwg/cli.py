"""Command-line front end: convergence sweeps in mesh size and time step,
table/CSV/plot-data emission, and the bundled property self-test.

Sweep entries may run concurrently (SFWG_THREADS caps the worker count);
rows are emitted in input order, so reports are deterministic for a fixed
configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import assembly, driver, errors, fespace, linalg, mesh, weakcalc

EXIT_OK = 0
EXIT_SELFTEST_FAIL = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


# ---------------------------------------------------------------------------
# report formatting
# ---------------------------------------------------------------------------


def _fmt_rate(r):
    return "" if r is None else f"{r:.6f}"


def write_csv(report, path):
    lines = ["n_or_P,h_or_tau,trb_err,trb_rate,h2_err,h2_rate,l2_err,l2_rate"]
    rates = report.rates()
    for i, row in enumerate(report.rows):
        lines.append(
            f"{row.index},{row.spacing:.12e},"
            f"{row.trb:.12e},{_fmt_rate(rates['trb'][i])},"
            f"{row.h2:.12e},{_fmt_rate(rates['h2'][i])},"
            f"{row.l2:.12e},{_fmt_rate(rates['l2'][i])}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def write_markdown(report, path, title):
    head = "n" if report.axis == "n" else "P"
    lines = [f"# {title}", "",
             f"| {head} | energy err | rate | 2,h err | rate | L2 err | rate |",
             "|---|---|---|---|---|---|---|"]
    rates = report.rates()

    def cell(r):
        return "---" if r is None else f"{r:.2f}"

    for i, row in enumerate(report.rows):
        lines.append(
            f"| {row.index} | {row.trb:.4E} | {cell(rates['trb'][i])} "
            f"| {row.h2:.4E} | {cell(rates['h2'][i])} "
            f"| {row.l2:.4E} | {cell(rates['l2'][i])} |")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def write_dat(report, path):
    lines = []
    for key in ("trb", "h2", "l2"):
        lines.append(f"# {key}")
        for row in report.rows:
            lines.append(f"{row.spacing:.12e} {getattr(row, key):.12e}")
        lines.append("")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _emit(report, prefix, title, dat):
    write_csv(report, f"{prefix}.csv")
    write_markdown(report, f"{prefix}.md", title)
    if dat:
        write_dat(report, f"{prefix}.dat")


def _workers(n_items):
    try:
        cap = int(os.environ.get("SFWG_THREADS", "1") or "1")
    except ValueError:
        cap = 1
    return max(1, min(cap, n_items))


# ---------------------------------------------------------------------------
# sweep workers (module level so a process pool can pickle them)
# ---------------------------------------------------------------------------


def _config_from(params, n, steps):
    return driver.SchemeConfig(
        k=params["k"], j=params["j"], theta=params["theta"], steps=steps,
        t_end=params["t_end"], mesh_family=params["family"], n=n,
        mesh_path=params.get("mesh_path"), solver=params["solver"],
        cg_tol=params["cg_tol"], cg_maxit=params["cg_maxit"],
        initialization=params["initialization"], startup=params["startup"])


def _h_case(args):
    params, n = args
    sol = errors.default_solution()
    cfg = _config_from(params, n, params["steps"])
    res = driver.run_transient(cfg, sol.f, sol.psi, sol.grad_psi,
                               sol.boundary_data())
    errs = errors.evaluate_errors(res.u, sol, params["t_end"], res.mesh,
                                  res.dofmap, res.A, res.M)
    if params.get("dump_matrix"):
        assembly.dump_matrix_market(
            res.A, f"{params['prefix']}_stiffness_{n}.mtx")
    index = n if params["family"] != "file" else res.mesh.num_cells
    return index, res.mesh.h, errs


def _tau_case(args):
    params, P, ref_coeffs = args
    sol = errors.default_solution()
    cfg = _config_from(params, params["n"], P)
    res = driver.run_transient(cfg, sol.f, sol.psi, sol.grad_psi,
                               sol.boundary_data())
    if ref_coeffs is None:
        errs = errors.evaluate_errors(res.u, sol, params["t_end"], res.mesh,
                                      res.dofmap, res.A, res.M)
    else:
        e = fespace.WeakFunction(res.dofmap, res.u.coeffs - ref_coeffs)
        errs = errors.ErrorTriple(
            errors.triple_bar_norm(e, res.A),
            errors.norm_2h(e, res.mesh, res.dofmap),
            errors.l2_norm_v0(e, res.M))
    return P, params["t_end"] / P, errs


def _map_cases(fn, cases):
    workers = _workers(len(cases))
    if workers == 1:
        return [fn(c) for c in cases]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cases))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def run_convergence_h(params):
    """Mesh-refinement sweep at fixed step count; returns an ErrorReport."""
    report = errors.ErrorReport(axis="n")
    cases = [(params, n) for n in params["n_list"]]
    for index, h, errs in _map_cases(_h_case, cases):
        report.add(index, h, errs)
    return report


def run_convergence_tau(params):
    """Time-step sweep on a fixed mesh; returns an ErrorReport."""
    ref_coeffs = None
    if params.get("reference_steps"):
        sol = errors.default_solution()
        cfg = _config_from(params, params["n"], params["reference_steps"])
        ref = driver.run_transient(cfg, sol.f, sol.psi, sol.grad_psi,
                                   sol.boundary_data())
        ref_coeffs = ref.u.coeffs
    report = errors.ErrorReport(axis="P")
    cases = [(params, P, ref_coeffs) for P in params["p_list"]]
    for P, tau, errs in _map_cases(_tau_case, cases):
        report.add(P, tau, errs)
    return report


# ---------------------------------------------------------------------------
# self-test properties
# ---------------------------------------------------------------------------


def _prop_quadrature_moments():
    rng = np.random.default_rng(7)
    for exactness in (2, 7, 13, 19):
        rule = fespace.triangle_quadrature(exactness)
        exps = fespace.monomial_exponents(exactness)
        coef = rng.standard_normal(len(exps))
        approx = 0.0
        exact = 0.0
        for cc, (a, b) in zip(coef, exps):
            approx += cc * float(rule.weights @ (rule.points[:, 0] ** a
                                                 * rule.points[:, 1] ** b))
            exact += cc * float(fespace._triangle_moment(a, b))
        if abs(approx - exact) > 1e-11 * max(1.0, abs(exact)):
            return False, f"triangle moments off at exactness {exactness}"
    square = np.array([[0., 0.], [1., 0.], [1., 1.], [0., 1.]])
    for exactness in (4, 11):
        rule = fespace.polygon_quadrature(square, exactness)
        for (a, b) in fespace.monomial_exponents(exactness):
            approx = float(rule.weights @ (rule.points[:, 0] ** a
                                           * rule.points[:, 1] ** b))
            exact = 1.0 / ((a + 1) * (b + 1))
            if abs(approx - exact) > 1e-11 * max(1.0, exact):
                return False, f"square moments off: x^{a} y^{b}"
    for exactness in (5, 12):
        rule = fespace.edge_quadrature(exactness)
        for mdeg in range(exactness + 1):
            approx = float(rule.weights @ rule.points ** mdeg)
            exact = 2.0 / (mdeg + 1) if mdeg % 2 == 0 else 0.0
            if abs(approx - exact) > 1e-11 * max(1.0, abs(exact)):
                return False, f"edge moments off: s^{mdeg}"
    return True, "triangle, polygon and edge rules match analytic moments"


def _monomial_field(a, b):
    def u(x, y):
        return x ** a * y ** b

    def gu(x, y):
        gx = a * x ** (a - 1) * y ** b if a else np.zeros_like(x)
        gy = b * x ** a * y ** (b - 1) if b else np.zeros_like(x)
        return gx, gy

    def lap(x, y):
        r = np.zeros_like(x)
        if a >= 2:
            r = r + a * (a - 1) * x ** (a - 2) * y ** b
        if b >= 2:
            r = r + b * (b - 1) * x ** a * y ** (b - 2)
        return r

    return u, gu, lap


def _prop_weak_laplacian_exactness():
    k, j = 2, 5
    for build in (mesh.build_uniform_triangle_mesh, mesh.build_quad_mesh):
        grid = build(1)
        dm = fespace.build_dofmap(grid, k)
        ops = [weakcalc.local_weak_laplacian(grid, dm, c, k, j)
               for c in range(grid.num_cells)]
        for (a, b) in fespace.monomial_exponents(k):
            u, gu, lap = _monomial_field(a, b)
            w = weakcalc.interpolate(u, gu, grid, dm)
            for op in ops:
                got = op.apply(w.coeffs[dm.cell_dofs(op.cell)])
                want = weakcalc.project_cell(lap, grid, op.cell, j)
                d = got - want
                gap = np.sqrt(d @ op.mass @ d)
                scale = max(1.0, np.sqrt(want @ op.mass @ want))
                if gap > 1e-9 * scale:
                    return False, (f"x^{a} y^{b} mismatch {gap/scale:.2e} "
                                   f"on cell {op.cell}")
    return True, "weak Laplacian of P_k interpolants matches projected Laplacian"


def _prop_stiffness_spd():
    for build in (mesh.build_uniform_triangle_mesh, mesh.build_quad_mesh):
        grid = build(1)
        dm = fespace.build_dofmap(grid, 2)
        A = assembly.assemble_stiffness(grid, dm, 2, 5)
        free = dm.free_dofs
        dense = A.toarray()[np.ix_(free, free)]
        lo = float(np.linalg.eigvalsh(dense).min())
        if lo <= 0.0:
            return False, f"free stiffness block min eig {lo:.3e}"
    return True, "free-DOF stiffness blocks are positive definite"


def _prop_schur_blocks():
    for build in (mesh.build_uniform_triangle_mesh, mesh.build_quad_mesh):
        grid = build(1)
        dm = fespace.build_dofmap(grid, 2)
        rep = linalg.schur_validate(grid, dm, 2, 5)
        if not rep.ok:
            return False, rep.failure()
    return True, "mass/edge blocks SPD and Schur solve agrees with full solve"


def _prop_dissipation():
    grid = mesh.build_uniform_triangle_mesh(2)
    dm = fespace.build_dofmap(grid, 2)
    A = assembly.assemble_stiffness(grid, dm, 2, 5)
    M = assembly.assemble_mass_v0(grid, dm, 2)
    rng = np.random.default_rng(11)
    for theta in (0.5, 1.0):
        stepper = driver.ThetaStepper(M, A, dm.free_dofs, theta, 0.1)
        for _ in range(3):
            u = np.zeros(dm.total_dofs)
            u[dm.free_dofs] = rng.standard_normal(len(dm.free_dofs))
            prev = np.sqrt(u @ (M.mat @ u))
            zero = np.zeros(dm.total_dofs)
            for _step in range(10):
                u, _ = stepper.step(u, zero, zero)
                cur = np.sqrt(u @ (M.mat @ u))
                if cur > prev * (1.0 + 1e-12):
                    return False, (f"norm grew at theta={theta}: "
                                   f"{prev:.6e} -> {cur:.6e}")
                prev = cur
    return True, "interior L2 norm non-increasing for f=0 runs"


SELFTEST_PROPERTIES = (
    ("quadrature-moments", _prop_quadrature_moments),
    ("weak-laplacian-exactness", _prop_weak_laplacian_exactness),
    ("stiffness-spd", _prop_stiffness_spd),
    ("schur-blocks", _prop_schur_blocks),
    ("dissipation", _prop_dissipation),
)


def run_selftest(json_mode=False, out=None):
    """Run the bundled invariant suite at tiny sizes; exit 0 iff all pass."""
    if out is None:
        out = sys.stdout
    results = {}
    all_ok = True
    for name, fn in SELFTEST_PROPERTIES:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing property is a failing property
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        seconds = time.perf_counter() - t0
        results[name] = {"ok": bool(ok), "seconds": round(seconds, 3),
                         "detail": detail}
        all_ok = all_ok and ok
    if json_mode:
        print(json.dumps({"passed": all_ok, "properties": results}), file=out)
    else:
        for name, res in results.items():
            status = "ok  " if res["ok"] else "FAIL"
            print(f"{status} {name} ({res['seconds']:.2f}s): {res['detail']}",
                  file=out)
    return (EXIT_OK if all_ok else EXIT_SELFTEST_FAIL), results


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _add_common(p):
    p.add_argument("--k", type=int, default=2, help="polynomial degree (>= 2)")
    p.add_argument("--j-offset", type=int, default=None,
                   help="j = k + offset (default 3 for triangles, 6 for quads)")
    p.add_argument("--theta", type=float, default=1.0,
                   help="time-scheme parameter in [1/2, 1]")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--mesh", default="tri",
                   help="tri, quad, or file:PATH")
    p.add_argument("--solver", choices=("direct", "cg"), default="direct")
    p.add_argument("--cg-tol", type=float, default=1e-10)
    p.add_argument("--cg-maxit", type=int, default=None)
    p.add_argument("--initialization", choices=("consistent", "projection"),
                   default="consistent")
    p.add_argument("--startup", choices=("auto", "none"), default="auto")
    p.add_argument("--dat", action="store_true",
                   help="also write gnuplot-friendly <prefix>.dat")
    p.add_argument("--dump-matrix", action="store_true",
                   help="dump stiffness matrices in Matrix Market format")


def build_parser():
    p = argparse.ArgumentParser(
        prog="sfwg",
        description="Stabilizer-free weak Galerkin solver for the clamped "
                    "fourth-order parabolic problem on the unit square.")
    sub = p.add_subparsers(dest="command", required=True)

    h = sub.add_parser("convergence-h",
                       help="mesh refinement sweep at fixed step count")
    _add_common(h)
    h.add_argument("--n", type=_int_list, default=[4, 8, 16],
                   help="comma-separated refinement levels")
    h.add_argument("--steps", type=int, default=100, help="time steps P")
    h.add_argument("--prefix", default="sfwg_h")

    t = sub.add_parser("convergence-tau",
                       help="time-step sweep on a fixed mesh")
    _add_common(t)
    t.add_argument("--n", type=int, default=8, help="fixed refinement level")
    t.add_argument("--p-list", type=_int_list, default=[8, 16, 32, 64])
    t.add_argument("--reference-steps", type=int, default=None,
                   help="measure against a reference run with this many steps")
    t.add_argument("--prefix", default="sfwg_tau")

    s = sub.add_parser("selftest", help="run the bundled property suite")
    s.add_argument("--json", action="store_true",
                   help="machine-readable summary")
    return p


def _parse_mesh(parser, text):
    if text == "tri" or text == "quad":
        return text, None
    if text.startswith("file:"):
        path = text[5:]
        if not path:
            parser.error("empty path in --mesh file:PATH")
        return "file", path
    parser.error(f"unknown mesh family {text!r}")


def _params_from(parser, args):
    family, mesh_path = _parse_mesh(parser, args.mesh)
    if args.k < 2:
        parser.error("--k must be >= 2")
    if not 0.5 <= args.theta <= 1.0:
        parser.error("--theta must lie in [1/2, 1] (the stable range)")
    if args.t_end <= 0.0:
        parser.error("--t-end must be positive")
    offset = args.j_offset
    if offset is None:
        offset = 6 if family == "quad" else 3
    if offset < 0:
        parser.error("--j-offset must be >= 0")
    return {
        "k": args.k, "j": args.k + offset, "theta": args.theta,
        "t_end": args.t_end, "family": family, "mesh_path": mesh_path,
        "solver": args.solver, "cg_tol": args.cg_tol,
        "cg_maxit": args.cg_maxit, "initialization": args.initialization,
        "startup": args.startup, "dump_matrix": args.dump_matrix,
        "prefix": args.prefix,
    }


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "selftest":
        code, _ = run_selftest(json_mode=args.json)
        return code

    params = _params_from(parser, args)
    try:
        if args.command == "convergence-h":
            if any(n < 1 for n in args.n):
                parser.error("--n entries must be >= 1")
            if args.steps < 1:
                parser.error("--steps must be >= 1")
            params["n_list"] = (args.n if params["family"] != "file"
                                else args.n[:1])
            params["steps"] = args.steps
            report = run_convergence_h(params)
            title = (f"mesh refinement: k={params['k']} j={params['j']} "
                     f"theta={params['theta']} P={params['steps']} "
                     f"mesh={args.mesh}")
        else:
            if any(pv < 1 for pv in args.p_list):
                parser.error("--p-list entries must be >= 1")
            params["n"] = args.n
            params["p_list"] = args.p_list
            params["reference_steps"] = args.reference_steps
            report = run_convergence_tau(params)
            title = (f"time refinement: k={params['k']} j={params['j']} "
                     f"theta={params['theta']} n={params['n']} "
                     f"mesh={args.mesh}")
    except (driver.SolverError, linalg.LinearSolveError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (mesh.MeshError, weakcalc.LocalSolveError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    _emit(report, params["prefix"], title, args.dat)
    print(f"wrote {params['prefix']}.csv and {params['prefix']}.md")
    return EXIT_OK


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
