import json
import math

import numpy as np
import pytest

from svstokes import (
    AllVerticesCritical,
    InvalidParameter,
    Mesh,
    MissingCompanion,
    companions,
    critical_sets,
    criticality_report,
    extended_regions_and_overlap,
    generate_family,
    robinson_classify,
    theta,
    theta_min,
    vertex_patch,
)
from svstokes.mesh import cell_centers


class _FakePatch:
    def __init__(self, angles, on_boundary):
        self.angles = tuple(angles)
        self.on_boundary = on_boundary
        self.size = len(self.angles)


class TestTheta:
    def test_interior_right_angles(self):
        patch = _FakePatch([math.pi / 2] * 4, on_boundary=False)
        assert theta(patch) == pytest.approx(0.0, abs=1e-15)

    def test_boundary_single_triangle(self):
        patch = _FakePatch([1.234], on_boundary=True)
        assert theta(patch) == 0.0

    def test_boundary_two_thirds(self):
        patch = _FakePatch([math.pi / 3, math.pi / 3], on_boundary=True)
        assert theta(patch) == pytest.approx(math.sqrt(3) / 2)

    def test_interior_uses_cyclic_wrap(self):
        # wrap pair (last, first) must count: angles sum to 2*pi
        a = [math.pi / 2, math.pi / 2, 3 * math.pi / 4, math.pi / 4]
        patch = _FakePatch(a, on_boundary=False)
        expect = max(
            abs(math.sin(a[i] + a[(i + 1) % 4])) for i in range(4)
        )
        assert theta(patch) == pytest.approx(expect)
        assert theta(patch) > 0

    def test_rigid_motion_and_scaling_invariance(self):
        mesh = generate_family("perturbed-crisscross", 1, 0.3)
        rng = np.random.default_rng(7)
        for _ in range(5):
            angle = rng.uniform(0, 2 * math.pi)
            scale = rng.uniform(0.2, 5.0)
            R = scale * np.array(
                [
                    [math.cos(angle), -math.sin(angle)],
                    [math.sin(angle), math.cos(angle)],
                ]
            )
            moved = Mesh(mesh.vertices @ R.T + rng.uniform(-3, 3, 2), mesh.triangles)
            for z in range(mesh.n_vertices):
                d = theta(vertex_patch(mesh, z)) - theta(vertex_patch(moved, z))
                assert abs(d) <= 1e-12


class TestCriticalSets:
    def test_structured_square_corners(self):
        mesh = generate_family("structured-square", 1)
        crit, super_crit = critical_sets(mesh, 0.0)
        singles = [
            z
            for z in range(mesh.n_vertices)
            if vertex_patch(mesh, z).size == 1
        ]
        assert sorted(super_crit) == sorted(singles)
        assert len(super_crit) == 2

    def test_crisscross_center_even(self):
        mesh = generate_family("crisscross", 1)
        crit, super_crit = critical_sets(mesh, 0.0)
        assert 4 in crit and 4 not in super_crit

    def test_crisscross_family_centers(self):
        for n in (1, 2, 3):
            mesh = generate_family("crisscross", n)
            crit, super_crit = critical_sets(mesh, 0.0)
            centers = cell_centers(mesh, n)
            assert set(centers) <= set(crit)
            assert not set(centers) & set(super_crit)

    def test_structured_family_exactly_two(self):
        for n in (2, 3, 4):
            mesh = generate_family("structured-square", n)
            crit, super_crit = critical_sets(mesh, 0.0)
            assert len(crit) == 2 and crit == super_crit

    def test_eta_window(self):
        mesh = generate_family("perturbed-crisscross", 1, 0.06)
        z = cell_centers(mesh, 1)[0]
        th = theta(vertex_patch(mesh, z))
        assert 0.01 < th < 0.05  # ~ t/2
        c_small, _ = critical_sets(mesh, 0.01)
        c_big, _ = critical_sets(mesh, 0.05)
        assert z in c_big and z not in c_small

    def test_monotone_in_eta(self):
        mesh = generate_family("perturbed-crisscross", 2, 0.4)
        previous = set()
        for eta in (0.0, 0.05, 0.2, 0.7, 1.0):
            crit, super_crit = critical_sets(mesh, eta)
            assert previous <= set(crit)
            assert set(super_crit) <= set(crit)
            previous = set(crit)

    def test_monotone_at_tiny_eta(self):
        # eta below the floating-point singularity floor must not lose C(0)
        mesh = generate_family("crisscross", 1)
        c0, _ = critical_sets(mesh, 0.0)
        c_tiny, _ = critical_sets(mesh, 1e-14)
        assert set(c0) <= set(c_tiny)

    def test_eta_out_of_range(self):
        mesh = generate_family("crisscross", 1)
        with pytest.raises(InvalidParameter):
            critical_sets(mesh, 1.5)


class TestThetaMin:
    def test_all_ones(self):
        mesh = generate_family("crisscross", 1)
        assert theta_min(mesh, 0.0) == pytest.approx(1.0)

    def test_brute_force(self):
        mesh = generate_family("perturbed-crisscross", 2, 0.3)
        crit, _ = critical_sets(mesh, 0.05)
        expect = min(
            theta(vertex_patch(mesh, z))
            for z in range(mesh.n_vertices)
            if z not in set(crit)
        )
        assert theta_min(mesh, 0.05) == pytest.approx(expect)

    def test_all_critical(self):
        mesh = generate_family("crisscross", 1)
        with pytest.raises(AllVerticesCritical):
            theta_min(mesh, 1.0)


class TestCompanions:
    def test_structured_square_corner(self):
        mesh = generate_family("structured-square", 2)
        _, super_crit = critical_sets(mesh, 0.0)
        for z in super_crit:
            kz, kzp = companions(mesh, z)
            patch = vertex_patch(mesh, z)
            assert patch.size == 1 and kz == patch.triangles[0]
            # adjacency-scan oracle: the unique edge-neighbor outside the patch
            neighbors = {
                int(nb) for nb in mesh.neighbors[kz] if nb >= 0
            } - set(patch.triangles)
            assert neighbors == {kzp}

    def test_single_triangle_missing(self, ref_triangle_mesh):
        with pytest.raises(MissingCompanion):
            companions(ref_triangle_mesh, 0)

    def test_n3_boundary_vertex(self, reentrant_mesh):
        # center (vertex 4) has three right angles on the boundary
        patch = vertex_patch(reentrant_mesh, 4)
        assert patch.size == 3 and patch.on_boundary
        assert theta(patch) <= 1e-12
        _, super_crit = critical_sets(reentrant_mesh, 0.0)
        assert 4 in super_crit
        kz, kzp = companions(reentrant_mesh, 4)
        assert kz == patch.triangles[1]
        # K_z' shares the edge of K_z opposite the center
        loc = reentrant_mesh.local_index(kz, 4)
        assert kzp == int(reentrant_mesh.neighbors[kz, loc])
        assert kzp not in patch.triangles


class TestRobinson:
    def test_structured_square_4(self):
        flags = robinson_classify(generate_family("structured-square", 4), 0.0)
        assert len(flags) == 2 and all(flags.values())

    def test_structured_square_1_shares_triangles(self):
        flags = robinson_classify(generate_family("structured-square", 1), 0.0)
        assert len(flags) == 2 and not any(flags.values())

    def test_single_supercritical(self, ear_mesh):
        _, super_crit = critical_sets(ear_mesh, 0.0)
        assert len(super_crit) == 1
        flags = robinson_classify(ear_mesh, 0.0)
        assert flags == {super_crit[0]: True}

    def test_enumeration_order_invariance(self):
        mesh = generate_family("structured-square", 3)
        flags = robinson_classify(mesh, 0.0)
        # relabel vertices with a fixed permutation and compare
        rng = np.random.default_rng(3)
        perm = rng.permutation(mesh.n_vertices)
        inv = np.argsort(perm)
        verts = mesh.vertices[inv]
        tris = perm[mesh.triangles]
        relabeled = Mesh(verts, tris)
        flags2 = robinson_classify(relabeled, 0.0)
        assert {int(perm[z]): v for z, v in flags.items()} == flags2


class TestRegionsOverlap:
    def test_single_supercritical_self_overlap(self, ear_mesh):
        _, c_ov = extended_regions_and_overlap(ear_mesh, 0.0)
        assert c_ov == 1

    def test_distant_corners(self):
        _, c_ov = extended_regions_and_overlap(
            generate_family("structured-square", 4), 0.0
        )
        assert c_ov == 1

    def test_structured_square_1(self):
        _, c_ov = extended_regions_and_overlap(
            generate_family("structured-square", 1), 0.0
        )
        assert c_ov == 2

    def test_region_contains_companion_pair(self):
        mesh = generate_family("structured-square", 4)
        regions, _ = extended_regions_and_overlap(mesh, 0.0)
        for z, reg in regions.items():
            kz, kzp = companions(mesh, z)
            assert (kz, kzp) == reg.companion
            assert kz in reg.triangles and kzp in reg.triangles


class TestReport:
    def test_json_schema(self):
        mesh = generate_family("structured-square", 2)
        payload = json.loads(criticality_report(mesh, 0.0).to_json())
        for key in (
            "theta",
            "theta_min",
            "critical",
            "supercritical",
            "robinson",
            "companions",
            "C_ov",
        ):
            assert key in payload
        # both corner regions reach the center vertex (0.5, 0.5) on n=2
        assert payload["C_ov"] == 2
        assert set(payload["critical"]) == set(payload["supercritical"])
        assert len(payload["theta"]) == mesh.n_vertices
        assert all(0.0 <= v <= 1.0 for v in payload["theta"].values())
        assert set(payload["supercritical"]) <= set(payload["critical"])

    def test_missing_companion_reported_not_raised(self, ref_triangle_mesh):
        report = criticality_report(ref_triangle_mesh, 0.0)
        assert report.warnings
        assert report.companions == {}
