"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; the whole module stays within desk-scale budgets (largest solve:
structured-square n=16 at k=4).
"""

import math
from math import comb

import numpy as np
import pytest

import svstokes as sv
from svstokes import (
    build_reduced_space,
    correction_functional,
    critical_function,
    critical_sets,
    functional_Atz,
    generate_family,
    inject_modified,
    manufactured,
    mean_value_zero,
    postprocess_pressure,
    solve_stokes,
    vertex_patch,
)
from svstokes.criticality import theta
from svstokes.experiments import (
    convergence_study,
    divergence_vs_eta,
    perturbation_for_theta,
)
from svstokes.mesh import cell_centers
from svstokes.polynomials import (
    TriangleBasis,
    barycentric,
    chebyshev_eval,
    k_lambda_point,
)


def _report(num, name, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    print(f"criterion {num:2d} [{status}] {name}: {detail}")
    assert passed, f"criterion {num} failed: {detail}"


SUITE_MESHES = [
    ("structured-square-2", lambda: generate_family("structured-square", 2)),
    ("structured-square-4", lambda: generate_family("structured-square", 4)),
    ("crisscross-2", lambda: generate_family("crisscross", 2)),
]


def test_criterion_01_critical_function_identities():
    tol = 1e-10
    worst = 0.0
    meshes = [
        generate_family("structured-square", 2),
        generate_family("crisscross", 2),
        generate_family("perturbed-crisscross", 2, 0.3),
    ]
    for mesh in meshes:
        for k in range(4, 9):
            binom = comb(k + 1, 2)
            for z in range(mesh.n_vertices):
                patch = vertex_patch(mesh, z)
                b = critical_function(mesh, z, k)
                for ell0, kt in enumerate(patch.triangles):
                    sign = -1.0 if ell0 % 2 == 0 else 1.0
                    area = float(mesh.area[kt])
                    worst = max(
                        worst,
                        abs(b.integral_on(kt) - sign / binom) * binom,
                        abs(b.l2_norm_on(kt) ** 2 - 1.0 / area) * area,
                        abs(b.eval_at_vertex(kt, z) - sign * binom / area)
                        / (binom / area),
                    )
                    for y in map(int, mesh.triangles[kt]):
                        if y != z:
                            expect = sign * (-1.0) ** (k - 1) / area
                            worst = max(
                                worst, abs(b.eval_at_vertex(kt, y) - expect) * area
                            )
                expect = binom * sum(b.l2_norm_on(kt) ** 2 for kt in patch.triangles)
                worst = max(worst, abs(functional_Atz(b, patch) - expect) / expect)
    _report(
        1,
        "critical-function identities (k=4..8, 3 meshes)",
        worst <= tol,
        f"max relative defect {worst:.2e} (tol {tol:.0e})",
    )


def test_criterion_02_stability_estimate():
    rng = np.random.default_rng(2024)
    mesh = generate_family("crisscross", 1)
    ok = True
    emp_upper = 0.0  # empirical replacement for 3/4 (sup of norm2*area/coef2)
    emp_lower = math.inf  # empirical replacement for 7/12
    for k in (4, 5, 6):
        for t in range(mesh.n_triangles):
            area = float(mesh.area[t])
            bs = [critical_function(mesh, int(z), k) for z in mesh.triangles[t]]
            blocks = np.array([b.coeffs[t] for b in bs])
            ints = np.array([b.integral_on(t) for b in bs])
            for _ in range(200):
                c = rng.standard_normal(3)
                comb_vec = c @ blocks
                norm2 = float(comb_vec @ comb_vec)
                coef2 = float(c @ c) / area
                mean = float(c @ ints) / area
                min_alpha = norm2 - area * mean * mean
                ok = ok and 0.75 * norm2 <= coef2 * (1 + 1e-12)
                ok = ok and coef2 <= (12 / 7) * min_alpha * (1 + 1e-12)
                emp_upper = max(emp_upper, norm2 / coef2)
                emp_lower = min(emp_lower, min_alpha / coef2)
    _report(
        2,
        "stability estimate, printed constants 3/4 and 12/7",
        ok,
        f"empirical: |K| lam_max={emp_upper:.4f} (<=4/3), "
        f"min-alpha ratio={emp_lower:.4f} (>=7/12={7 / 12:.4f})",
    )


def test_criterion_03_orthogonal_decomposition():
    tol = 1e-10
    worst = 0.0
    dims_ok = True
    # eta = 0 splitting on the Robinson mesh
    mesh = generate_family("structured-square", 4)
    for k in (4, 5):
        crit, super_crit = critical_sets(mesh, 0.0)
        space = build_reduced_space(mesh, k, 0.0)
        nm = TriangleBasis(k - 1).n_modes
        dims_ok = dims_ok and space.dim + len(crit) + 1 == mesh.n_triangles * nm
        dense = space.dense()
        col_norms = np.linalg.norm(dense, axis=0)
        for z in crit:
            d = mean_value_zero(critical_function(mesh, z, k))
            inner = np.abs(dense.T @ d.flat()) / (col_norms * d.l2_norm())
            worst = max(worst, float(inner.max()))
    # eta splitting on the perturbed mesh, centers captured
    mesh = generate_family("perturbed-crisscross", 2, 0.3)
    eta = max(theta(vertex_patch(mesh, z)) for z in cell_centers(mesh, 2))
    for k in (4, 5):
        crit, super_crit = critical_sets(mesh, eta)
        assert set(cell_centers(mesh, 2)) <= set(crit)
        space = build_reduced_space(mesh, k, eta)
        nm = TriangleBasis(k - 1).n_modes
        dims_ok = dims_ok and space.dim + len(crit) + 1 == mesh.n_triangles * nm
        dense = space.dense()
        col_norms = np.linalg.norm(dense, axis=0)
        for z in crit:
            b = critical_function(mesh, z, k)
            d = mean_value_zero(b) if z in super_crit else b
            inner = np.abs(dense.T @ d.flat()) / (col_norms * d.l2_norm())
            worst = max(worst, float(inner.max()))
    _report(
        3,
        "orthogonal decomposition (eta=0 and eta-splitting)",
        dims_ok and worst <= tol,
        f"dim check {dims_ok}, max scaled inner product {worst:.2e}",
    )


def test_criterion_04_postprocessing_equivalence():
    tol = 1e-9
    case = manufactured("M1")
    worst = 0.0
    for name, make in SUITE_MESHES:
        mesh = make()
        for variant in ("point", "weighted"):
            space = build_reduced_space(mesh, 4, 0.0)
            func = correction_functional(mesh, 4, 0.0, variant)
            sol = solve_stokes(mesh, 4, space, case.f)
            p_star = postprocess_pressure(sol, space, func)
            modified = inject_modified(space, func)
            sol_mod = solve_stokes(mesh, 4, modified, case.f)
            du = np.linalg.norm(sol.u - sol_mod.u) / np.linalg.norm(sol.u)
            dp = (p_star - sol_mod.p).l2_norm() / p_star.l2_norm()
            worst = max(worst, du, dp)
    _report(
        4,
        "post-processing equivalence (3 meshes x 2 functionals)",
        worst <= tol,
        f"max relative coefficient distance {worst:.2e} (tol {tol:.0e})",
    )


def test_criterion_05_divergence_free():
    case = manufactured("M1")
    worst = 0.0
    for name, make in SUITE_MESHES:
        mesh = make()
        space = build_reduced_space(mesh, 4, 0.0)
        func = correction_functional(mesh, 4, 0.0, "point")
        for spc in (space, inject_modified(space, func)):
            sol = solve_stokes(mesh, 4, spc, case.f)
            worst = max(worst, sv.divergence_norm(sol) / sol.grad_norm())
    _report(
        5,
        "divergence-free sv and sv-mod (eta=0) on all test meshes",
        worst <= 1e-9,
        f"max ||div u|| / ||grad u|| = {worst:.2e}",
    )


@pytest.fixture(scope="module")
def rate_studies():
    ns = [2, 4, 8, 16]
    mod = convergence_study("M1", "sv-mod", 4, "structured-square", ns, eta=0.0)
    plain = convergence_study("M1", "sv", 4, "structured-square", ns, eta=0.0)
    return mod, plain


def test_criterion_06_rate_recovery(rate_studies):
    mod, plain = rate_studies
    rate_p_mod = mod.rates["rate_p_L2"]
    rate_p_sv = plain.rates["rate_p_L2"]
    rate_u_mod = mod.rates["rate_u_H1"]
    rate_u_sv = plain.rates["rate_u_H1"]
    ok = (
        rate_p_mod >= 3.7
        and rate_p_sv <= rate_p_mod - 1.0
        and rate_u_mod >= 3.7
        and rate_u_sv >= 3.7
    )
    _report(
        6,
        "rate recovery on M1 (k=4, n=2..16)",
        ok,
        f"p-rate sv-mod {rate_p_mod:.2f} (>=3.7), sv {rate_p_sv:.2f} "
        f"(gap {rate_p_mod - rate_p_sv:.2f} >= 1.0), "
        f"u-rates {rate_u_mod:.2f}/{rate_u_sv:.2f} (>=3.7)",
    )


def test_criterion_06b_monotone_improvement(rate_studies):
    # the modification never substantially worsens the pressure error
    mod, plain = rate_studies
    ok = all(
        a["err_p_L2"] <= 1.05 * b["err_p_L2"]
        for a, b in zip(mod.rows, plain.rows)
    )
    _report(6, "monotone pressure improvement (5% slack)", ok)


def test_criterion_07_divergence_vs_eta():
    result = divergence_vs_eta("M1", 4, [0.4, 0.2, 0.1, 0.05], n=2)
    slope = result.rates["slope_div_vs_eta"]
    etas = np.array([r["eta"] for r in result.rows])
    divs = np.array([r["div_u_L2"] for r in result.rows])
    fit = np.polyfit(np.log(etas[:-1]), np.log(divs[:-1]), 1)
    predicted = math.exp(fit[1] + fit[0] * math.log(etas[-1]))
    extrap_ok = divs[-1] <= 10.0 * predicted
    ok = 0.8 <= slope <= 1.3 and extrap_ok
    _report(
        7,
        "divergence vs eta (pw-mod, perturbed crisscross)",
        ok,
        f"log-log slope {slope:.3f} in [0.8, 1.3]; smallest-eta div "
        f"{divs[-1]:.3e} <= 10 x extrapolated {predicted:.3e}",
    )


def test_criterion_08_infsup_robustness():
    taus = [0.2, 0.1, 0.05, 0.025]
    betas_plain, betas_wired = [], []
    for tau in taus:
        t = perturbation_for_theta(2, tau)
        mesh = generate_family("perturbed-crisscross", 2, t)
        eta = max(theta(vertex_patch(mesh, z)) for z in cell_centers(mesh, 2))
        # plain SV at eta=0: no exactly singular vertices -> full constraint
        # set is just the mean
        plain = build_reduced_space(mesh, 4, 0.0)
        assert plain.constrained == []
        betas_plain.append(sv.infsup_estimate(mesh, 4, plain))
        reduced = build_reduced_space(mesh, 4, eta)
        func = correction_functional(mesh, 4, eta, "point")
        wired = inject_modified(reduced, func)
        betas_wired.append(sv.infsup_estimate(mesh, 4, wired))
    slope = float(np.polyfit(np.log(taus), np.log(betas_plain), 1)[0])
    variation = max(betas_wired) / min(betas_wired)
    ok = abs(slope - 1.0) <= 0.3 and variation <= 2.0
    _report(
        8,
        "inf-sup robustness (plain decays, pw-mod stable)",
        ok,
        f"plain beta slope {slope:.3f} (1 +/- 0.3), "
        f"pw-mod variation x{variation:.2f} (<= 2)",
    )


def test_criterion_09_extension_bound():
    rng = np.random.default_rng(909)
    tri = np.array([[0.0, 0.0], [1.1, 0.1], [0.25, 0.85]])
    grid = []
    for i in range(41):
        for j in range(41 - i):
            a, b = i / 40, j / 40
            grid.append((1 - a - b, a, b))
    grid = np.array(grid)
    worst = -math.inf
    for k in range(2, 7):
        basis = TriangleBasis(k)
        vals_grid = basis.eval_raw(grid)
        for lam in (0.25, 1.0):
            bound_factor = 1.02 * float(chebyshev_eval(k, 1.0 + lam))
            for _ in range(100):
                c = rng.standard_normal(basis.n_modes)
                sup = float(np.abs(vals_grid @ c).max())
                for alpha in np.linspace(0, 2 * math.pi, 24, endpoint=False):
                    y = k_lambda_point(tri, float(alpha), lam)
                    lam_y = barycentric(tri, y[None, :])
                    val = abs(float((basis.eval_raw(lam_y) @ c)[0]))
                    worst = max(worst, val - bound_factor * sup)
    # gamma branches, each on its domain of validity (see decisions ledger)
    gamma_ok = True
    for k in range(2, 7):
        for lam in np.linspace(0.0, 4.0, 33):
            tk = float(chebyshev_eval(k, 1.0 + lam))
            gamma_ok = gamma_ok and tk <= (2.0**k + 1) / 2 * (1 + lam) ** k * (
                1 + 1e-12
            )
            if lam >= 8.0 / k**2:
                gamma_ok = gamma_ok and tk <= math.exp(lam * k * k / 2) * (1 + 1e-12)
    _report(
        9,
        "polynomial extension bound and growth-bound branches",
        worst <= 0.0 and gamma_ok,
        f"max overshoot over 1.02 T_k(1+lam) sup: {worst:.2e}; branches ok: {gamma_ok}",
    )


def test_criterion_10_cli_determinism(tmp_path, capsys):
    from svstokes.cli import run

    pairs = [
        ["solve", "--family", "structured-square", "--n", "2", "--element",
         "sv-mod", "--seed", "3"],
        ["study", "--kind", "divergence", "--k", "4", "--t-list", "0.4,0.2",
         "--seed", "3"],
        ["analyze", "--family", "structured-square", "--n", "2"],
    ]
    identical = True
    for i, args in enumerate(pairs):
        out_a = tmp_path / f"a{i}"
        out_b = tmp_path / f"b{i}"
        assert run(args + ["--out", str(out_a)]) == 0
        assert run(args + ["--out", str(out_b)]) == 0
        for fa in sorted(out_a.iterdir()):
            fb = out_b / fa.name
            identical = identical and fa.read_bytes() == fb.read_bytes()
    capsys.readouterr()
    _report(10, "CLI determinism (byte-identical data files)", identical)
