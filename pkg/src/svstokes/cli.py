"""Command-line front end: mesh analysis, solves, studies, property suites.

Outputs are deterministic for a fixed seed (no timestamps in data files), so
repeated invocations produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import experiments as ex
from . import stokes as st
from .criticality import criticality_report
from .errors import SvStokesError
from .mesh import generate_family, parse_mesh
from .pressure import (
    build_full_space,
    correction_functional,
    record_functional_norms,
)

#: The theory behind the elements assumes k >= 4; smaller k still runs.
MIN_THEORY_K = 4


def _add_mesh_args(p):
    p.add_argument("--mesh", help="path to a plain-v1 mesh file")
    p.add_argument(
        "--family",
        choices=["structured-square", "crisscross", "perturbed-crisscross"],
        help="built-in mesh family",
    )
    p.add_argument("--n", type=int, default=2, help="family subdivisions")
    p.add_argument("--t", type=float, default=None, help="family perturbation")


def _load_mesh(args):
    if args.mesh:
        return parse_mesh(Path(args.mesh).read_text())
    if args.family:
        return generate_family(args.family, args.n, args.t)
    raise SvStokesError("either --mesh or --family is required")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svstokes",
        description="Scott-Vogelius type Stokes elements with pressure-improved "
        "spaces: analysis, solves, studies, property suites.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="criticality report of a mesh")
    _add_mesh_args(p)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--out", default=None, help="directory for report.json")

    p = sub.add_parser("solve", help="solve one Stokes problem")
    _add_mesh_args(p)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--element", choices=list(ex.ELEMENTS) + ["plain"], default="sv")
    p.add_argument("--functional", choices=["point", "weighted"], default="point")
    p.add_argument("--case", default="M1")
    p.add_argument("--beta", action="store_true", help="also estimate inf-sup")
    p.add_argument("--out", default=".")
    p.add_argument("--format", choices=["csv", "json", "both"], default="both")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("study", help="parameter study over a mesh family")
    p.add_argument(
        "--kind", choices=["convergence", "divergence"], default="convergence"
    )
    p.add_argument("--case", default="M1")
    p.add_argument("--element", choices=list(ex.ELEMENTS), default="sv-mod")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--family", default="structured-square")
    p.add_argument("--n-list", default="2,4,8")
    p.add_argument("--n", type=int, default=2, help="subdivisions (divergence kind)")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--t-list", default="0.4,0.2,0.1,0.05")
    p.add_argument("--functional", choices=["point", "weighted"], default="point")
    p.add_argument("--beta", action="store_true")
    p.add_argument("--out", default=".")
    p.add_argument("--format", choices=["csv", "json", "both"], default="both")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("props", help="run the property suites")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--mesh", action="append", default=None, help="extra mesh file")
    p.add_argument("--out", default=None)
    return parser


def _warn_small_k(k):
    if k < MIN_THEORY_K:
        print(
            f"warning: k={k} is below the stability theory's k>=4; proceeding",
            file=sys.stderr,
        )


def _cmd_analyze(args) -> int:
    mesh = _load_mesh(args)
    report = criticality_report(mesh, args.eta).to_json()
    print(report)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "report.json").write_text(report + "\n")
    return 0


def _cmd_solve(args) -> int:
    mesh = _load_mesh(args)
    _warn_small_k(args.k)
    case = ex.manufactured(args.case)
    if args.element == "plain":
        space = build_full_space(mesh, args.k)
        sol = st.solve_stokes(mesh, args.k, space, case.f)
        p_h = sol.p
    else:
        sol, p_h = ex.solve_element(
            mesh, args.k, args.element, args.eta, args.functional, case.f
        )
    beta = None
    if args.beta:
        beta = st.infsup_estimate(mesh, args.k, sol.space)
    if sol.space.kind == "reduced" and sol.space.eta == 0.0 and args.element != "plain":
        func = correction_functional(mesh, args.k, 0.0, args.functional)
        record_functional_norms(sol.space, func)
    payload = json.loads(st.solution_json(sol, beta=beta))
    payload["element"] = args.element
    payload["case"] = case.id
    payload["err_u_H1"] = ex.velocity_h1_error(
        sol.velocity, sol.u, case.grad_u, 2 * args.k + 2
    )
    payload["err_p_L2"] = ex.pressure_l2_error(p_h, case.p, 2 * args.k + 2)
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.format in ("json", "both"):
        (outdir / "solution.json").write_text(text + "\n")
    if args.format in ("csv", "both"):
        (outdir / "solution.csv").write_text(st.solution_csv(sol))
    return 0


def _parse_list(text, cast, flag):
    try:
        values = [cast(s) for s in text.split(",") if s]
    except ValueError:
        print(f"usage error: bad value in {flag}: {text!r}", file=sys.stderr)
        raise SystemExit(2) from None
    if not values:
        print(f"usage error: {flag} is empty", file=sys.stderr)
        raise SystemExit(2)
    return values


def _cmd_study(args) -> int:
    _warn_small_k(args.k)
    if args.kind == "convergence":
        n_list = _parse_list(args.n_list, int, "--n-list")
        result = ex.convergence_study(
            args.case,
            args.element,
            args.k,
            args.family,
            n_list,
            eta=args.eta,
            functional=args.functional,
            t=args.t,
            seed=args.seed,
            compute_beta=args.beta,
        )
    else:
        t_list = _parse_list(args.t_list, float, "--t-list")
        result = ex.divergence_vs_eta(
            args.case,
            args.k,
            t_list,
            n=args.n,
            functional=args.functional,
            seed=args.seed,
        )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = f"study_{args.kind}_{result.params['element']}_k{args.k}"
    if args.format in ("csv", "both"):
        (outdir / f"{stem}.csv").write_text(result.to_csv())
    if args.format in ("json", "both"):
        (outdir / f"{stem}.json").write_text(result.to_json() + "\n")
    print(result.to_csv(), end="")
    return 0


def _cmd_props(args) -> int:
    meshes = None
    if args.mesh:
        meshes = ex.default_suite_meshes()
        for path in args.mesh:
            meshes.append((Path(path).stem, Path(path).read_text()))
    report = ex.property_suites(seed=args.seed, meshes=meshes)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "props.json").write_text(text + "\n")
    return 0 if report["all_passed"] else 1


def run(argv=None) -> int:
    """Execute a CLI invocation; returns the exit code (0 ok, 1 domain, 2 usage)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "analyze": _cmd_analyze,
        "solve": _cmd_solve,
        "study": _cmd_study,
        "props": _cmd_props,
    }
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return handlers[args.command](args)
    except SvStokesError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
