"""Shape boundary fluxes whose solution energy concentrates where you ask.

With measurements on the bottom edge only, the script looks for a flux whose
solution is large inside a target box B near the upper-left corner while
staying small on the entire right half D of the square, and additionally is
orthogonal to a fixed handful of coarse flux modes.  Refining the flux basis
makes the ratio between the two energies as large as you like; that freedom
is what lets the reconstruction separate a pixel from a scatterer behind it.
"""

import numpy as np

from helmono import (
    basis_edge_values,
    basis_solutions,
    boundary_basis,
    build_unit_square_mesh,
    gram_from_solutions,
    localized_potential,
    mark_sigma,
    project_onto_basis,
    rect_region,
)

mesh = mark_sigma(build_unit_square_mesh(32), "bottom")
region_b = rect_region(mesh, (0.0, 0.75, 0.25, 1.0))   # target box
region_d = rect_region(mesh, (0.5, 0.0, 1.0, 1.0))     # region to avoid
coarse = boundary_basis(mesh, 8)
v_coarse = np.eye(coarse.dim)[:, :3]                   # modes to stay orthogonal to

print("measurements on the bottom edge; target B = [0, 0.25] x [0.75, 1],")
print("avoided D = right half; flux orthogonal to 3 coarse modes")
print()
print("basis dim   energy in B   energy in D   B/D ratio   |proj on V|")

for segments in (8, 16, 32):
    basis = boundary_basis(mesh, segments)
    if segments == 8:
        v = v_coarse
    else:
        v = project_onto_basis(basis, basis_edge_values(coarse, v_coarse))
    result = localized_potential(mesh, 1.0, 1.0, basis, region_b, region_d, v)
    solutions = basis_solutions(mesh, 1.0, 1.0, basis)
    g_b = gram_from_solutions(mesh, region_b, basis, solutions, k=1.0).matrix
    g_d = gram_from_solutions(mesh, region_d, basis, solutions, k=1.0).matrix
    b_energy = result.g @ g_b @ result.g
    d_energy = result.g @ g_d @ result.g
    leak = np.linalg.norm(v.T @ result.g)
    print(f"{basis.dim:9d}   {b_energy:11.4e}   {d_energy:11.4e}"
          f"   {result.ratio:9.3f}   {leak:.1e}")

print()
print("the absolute energies depend on the normalization of the flux; the")
print("figure of merit is their ratio, which grows with every refinement.")
