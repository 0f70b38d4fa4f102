import json

import numpy as np
import pytest

from svstokes import (
    UnknownCase,
    convergence_study,
    divergence_vs_eta,
    generate_family,
    manufactured,
    property_suites,
    serialize_mesh,
)
from svstokes.experiments import (
    best_approx_error,
    default_suite_meshes,
    perturbation_for_theta,
)
from svstokes.mesh import cell_centers, vertex_patch
from svstokes.criticality import theta


class TestManufactured:
    def test_unknown_case(self):
        with pytest.raises(UnknownCase):
            manufactured("M3")

    def test_m1_divergence_free_fd(self):
        case = manufactured("M1")
        rng = np.random.default_rng(0)
        pts = rng.uniform(0.05, 0.95, (50, 2))
        h = 1e-6
        dux = (case.u(pts + [h, 0])[:, 0] - case.u(pts - [h, 0])[:, 0]) / (2 * h)
        dvy = (case.u(pts + [0, h])[:, 1] - case.u(pts - [0, h])[:, 1]) / (2 * h)
        assert np.abs(dux + dvy).max() <= 1e-9

    def test_m1_grad_matches_fd(self):
        case = manufactured("M1")
        pts = np.array([[0.3, 0.7], [0.11, 0.45]])
        h = 1e-6
        g = case.grad_u(pts)
        for c, e in [(0, [h, 0]), (1, [0, h])]:
            fd = (case.u(pts + e) - case.u(pts - e)) / (2 * h)
            assert np.allclose(g[:, :, c], fd, atol=1e-8)

    def test_m1_pressure_corner_nonzero_mean_zero(self):
        case = manufactured("M1")
        assert case.p(np.array([[0.0, 0.0]]))[0] == pytest.approx(1.0)
        assert case.corner_value == pytest.approx(-1.0)
        # quadrature oracle for the mean
        from svstokes.polynomials import quadrature

        mesh = generate_family("structured-square", 4)
        rule = quadrature(12)
        total = sum(
            float(mesh.area[t])
            * float(rule.weights @ case.p(rule.points @ mesh.triangle_vertices(t)))
            for t in range(mesh.n_triangles)
        )
        assert abs(total) <= 1e-10

    def test_m1_velocity_vanishes_on_boundary(self):
        case = manufactured("M1")
        s = np.linspace(0, 1, 13)
        for edge in (
            np.column_stack([s, np.zeros_like(s)]),
            np.column_stack([s, np.ones_like(s)]),
            np.column_stack([np.zeros_like(s), s]),
            np.column_stack([np.ones_like(s), s]),
        ):
            assert np.abs(case.u(edge)).max() <= 1e-14

    def test_m2_polynomial_pressure(self):
        case = manufactured("M2")
        pts = np.array([[0.2, 0.4]])
        assert case.p(pts)[0] == pytest.approx(0.2**3 + 0.4**3 - 0.5)

    def test_aliases(self):
        assert manufactured("M1").id == manufactured("M1-smooth-corner").id


class TestStudies:
    def test_convergence_rows_and_rates(self):
        result = convergence_study(
            "M1", "sv", 4, "structured-square", [2, 4], eta=0.0
        )
        assert len(result.rows) == 2
        assert result.rows[0]["h"] > result.rows[1]["h"]
        assert "rate_p_L2" in result.rates

    def test_csv_schema(self):
        result = convergence_study(
            "M1", "sv", 4, "structured-square", [2, 4], eta=0.0
        )
        lines = result.to_csv().strip().splitlines()
        assert lines[0] == (
            "family,n,h,k,eta,element,err_u_H1,err_p_L2,div_u_L2,beta,rate_tag"
        )
        assert len(lines) >= 3
        # rate rows carry the tag in the last column
        assert any(line.split(",")[-1].startswith("rate_") for line in lines[1:])

    def test_monotone_improvement_mod_never_much_worse(self):
        sv = convergence_study("M1", "sv", 4, "structured-square", [2, 4], eta=0.0)
        mod = convergence_study(
            "M1", "sv-mod", 4, "structured-square", [2, 4], eta=0.0
        )
        for a, b in zip(mod.rows, sv.rows):
            assert a["err_p_L2"] <= 1.05 * b["err_p_L2"]
            assert a["err_u_H1"] == pytest.approx(b["err_u_H1"], rel=1e-9)

    def test_divergence_vs_eta_rows(self):
        # n = 1 is degenerate (reflection symmetry kills the checkerboard
        # component of div u); n = 2 is the study default
        result = divergence_vs_eta("M1", 4, [0.4, 0.2], n=2)
        assert len(result.rows) == 2
        assert result.rows[0]["eta"] > result.rows[1]["eta"]
        assert result.rows[0]["div_u_L2"] > result.rows[1]["div_u_L2"] > 0
        assert all(r["p_best_approx"] > 0 for r in result.rows)

    def test_perturbation_inversion(self):
        for target in (0.1, 0.05):
            t = perturbation_for_theta(2, target)
            mesh = generate_family("perturbed-crisscross", 2, t)
            th = max(
                theta(vertex_patch(mesh, z)) for z in cell_centers(mesh, 2)
            )
            assert th == pytest.approx(target, abs=1e-9)

    def test_best_approx_error_consistency(self):
        # polynomial pressure inside the space: zero best-approximation error
        from svstokes import build_reduced_space

        mesh = generate_family("perturbed-crisscross", 1, 0.5)
        space = build_reduced_space(mesh, 4, 0.0)
        p = lambda xy: xy[:, 0] ** 2 - xy[:, 1] + 0.1 - (1 / 3 - 1 / 2 + 0.1)
        assert best_approx_error(space, p, 10) <= 1e-12


class TestPropertySuites:
    def test_all_pass_and_deterministic(self):
        rep1 = property_suites(seed=42)
        rep2 = property_suites(seed=42)
        assert rep1["all_passed"]
        assert json.dumps(rep1, sort_keys=True) == json.dumps(rep2, sort_keys=True)

    def test_corrupted_mesh_reported_not_crashed(self):
        meshes = default_suite_meshes()
        good = generate_family("structured-square", 1)
        text = serialize_mesh(good)
        # duplicate the last triangle line
        lines = text.strip().splitlines()
        lines[0] = "4 3"
        lines.append(lines[-1])
        meshes.append(("corrupted", "\n".join(lines) + "\n"))
        rep = property_suites(seed=42, meshes=meshes, k_list=(4,))
        assert rep["meshes"]["corrupted"]["ok"] is False
        assert rep["meshes"]["corrupted"]["error"] == "NonConformingMesh"
        assert rep["all_passed"] is False
