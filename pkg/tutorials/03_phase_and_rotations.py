"""Phase estimation and the group-corrected bound.

Part 1 estimates the phase of a coherent state with mean photon number 4
using a 512-bin canonical phase measurement. The labels are corrected
affinely at each point so the estimate is locally unbiased. Its variance
stays above 1/(4 Var n) but does not reach it.

Part 2 is about rotations exp(i theta.s) with s = sigma/2. When the
parameters are group coordinates the bound picks up the factor
K(theta) = Z (e^Z - I)^-1 with Z = i theta.C, C the su(2) structure
constants. The closed form is compared with its Bernoulli series.
"""

import numpy as np

from qcrb.bounds import StructureConstants, k_matrix, k_matrix_series
from qcrb.povm import affine_unbiased_labels, builtin_phase, error_matrices
from qcrb.states import ParamPoint, coherent_state, fock_ops, unitary_shift_family

dim = 40
n = fock_ops(dim)[2]
rho0 = coherent_state(dim, 2.0)
fam = unitary_shift_family(rho0, [n])
phase = builtin_phase(dim, 512)

var_n = np.trace(rho0.matrix @ n @ n).real - np.trace(rho0.matrix @ n).real ** 2
print(f"Var n = {var_n:.6f}, floor 1/(4 Var n) = {1 / (4 * var_n):.6f}")
for th in np.linspace(-np.pi / 8, np.pi / 8, 5):
    pt = ParamPoint.real([th])
    p = affine_unbiased_labels(phase, fam, pt, [th])
    R = error_matrices(p, fam.matrix(pt), [th]).R[0, 0].real
    print(f"theta={th:+.3f}  R={R:.6f}  R*4Var(n)={4 * var_n * R:.4f}")

sc = StructureConstants.su2(hermitian=True)
for theta in ([0, 0, 0.3], [0.3, -0.2, 0.5], [1.0, -0.7, 0.4]):
    k = k_matrix(sc, theta)
    gap = np.abs(k - k_matrix_series(sc, theta)).max()
    print(f"theta={theta}  |K - series| = {gap:.1e}")
    print(np.round(k, 4))
