"""Critical functions: the directions removed from the pressure space.

Each vertex carries a broken polynomial supported on its patch, built from
a Jacobi polynomial of the barycentric coordinate.  Its per-triangle
integrals, norms, and vertex traces have closed forms, and its alternating
trace sum is strictly positive: it spans exactly the direction the trace
constraint removes.
"""

from math import comb

import svstokes as sv

mesh = sv.generate_family("structured-square", 2)
k = 4
binom = comb(k + 1, 2)
_, super_crit = sv.critical_sets(mesh, 0.0)
z = super_crit[0]
patch = sv.vertex_patch(mesh, z)
b = sv.critical_function(mesh, z, k)

print(f"critical function of vertex {z} (patch of {patch.size} triangle(s)), k={k}")
for ell0, kt in enumerate(patch.triangles):
    area = float(mesh.area[kt])
    sign = -1 if ell0 % 2 == 0 else 1
    print(f"  triangle {kt}:")
    print(f"    integral   {b.integral_on(kt):+.6f}   closed form {sign / binom:+.6f}")
    print(f"    L2 norm^2  {b.l2_norm_on(kt) ** 2:.6f}   closed form {1 / area:.6f}")
    print(f"    trace at z {b.eval_at_vertex(kt, z):+.4f}  closed form {sign * binom / area:+.4f}")

atz = sv.functional_Atz(b, patch)
norm2 = sum(b.l2_norm_on(kt) ** 2 for kt in patch.triangles)
print(f"alternating trace sum A(b) = {atz:.4f} = binom(k+1,2) ||b||^2 = {binom * norm2:.4f}")

# mean-zero normalization ties the function into the mean-zero pressure space
b0 = sv.mean_value_zero(b)
print(f"mean before/after normalization: {b.mean():+.2e} -> {b0.mean():+.2e}")
