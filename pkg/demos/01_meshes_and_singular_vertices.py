"""Meshes, vertex patches, and the singularity measure.

A vertex is singular when every pair of consecutive fan angles sums to a
multiple of pi.  The crisscross cell centers are the canonical interior
example; the structured-square family has two corners covered by a single
triangle, which makes them super-critical (odd patch, measure zero).
"""

import svstokes as sv

for kind, n, t in [
    ("structured-square", 2, None),
    ("crisscross", 2, None),
    ("perturbed-crisscross", 2, 0.3),
]:
    mesh = sv.generate_family(kind, n, t)
    crit, super_crit = sv.critical_sets(mesh, 0.0)
    print(f"{kind}(n={n}{'' if t is None else f', t={t}'}):")
    print(f"  {mesh.n_triangles} triangles, {mesh.n_vertices} vertices, "
          f"shape regularity {sv.shape_regularity(mesh):.3f}")
    print(f"  singular vertices {crit}, super-critical {super_crit}")

# the perturbation moves the centers off the singular configuration
print("\nTheta(center) under perturbation of the crisscross cell centers:")
for t in (0.4, 0.2, 0.1, 0.05):
    mesh = sv.generate_family("perturbed-crisscross", 1, t)
    z = sv.cell_centers(mesh, 1)[0]
    print(f"  t={t:<5} Theta = {sv.theta(sv.vertex_patch(mesh, z)):.5f}")

# full criticality report (what `svstokes analyze` prints)
mesh = sv.generate_family("structured-square", 4)
print("\nCriticality report of structured-square(4):")
print(sv.criticality_report(mesh, eta=0.0).to_json())
