"""Counting photons in a tilted thermal state.

rho(gamma) = e^{gamma n/2} rho0 e^{gamma n/2} / chi(gamma) is a real
exponential family in the number operator. Measuring n and reporting the
count estimates <n>_gamma without bias, and its variance equals the
symmetric (Helstrom) bound d^2 ln chi / d gamma^2.
"""

import math

import numpy as np

from qcrb.bounds import check_bound, helstrom_bound
from qcrb.logderiv import fisher_sld, generator_cov, sld
from qcrb.povm import builtin_spectral, error_matrices, mean_jacobian
from qcrb.states import ParamPoint, canonical_family_real, fock_ops, thermal_state

dim = 16
n = fock_ops(dim)[2]
fam = canonical_family_real(thermal_state(dim, 1.0), [n])
meas = builtin_spectral([n])

h = 1e-4
log_chi = lambda g: math.log(fam.chi([g]))

for g in (-0.3, 0.0, 0.3):
    pt = ParamPoint.real([g])
    rho = fam.matrix(pt)
    G = fisher_sld(sld(fam, pt)).entries
    S = generator_cov([n], rho).entries
    mean = np.trace(rho @ n).real
    R = error_matrices(meas, rho, [mean]).R.real
    D = mean_jacobian(meas, fam, pt).real
    fd = (log_chi(g + h) - 2 * log_chi(g) + log_chi(g - h)) / h**2
    rep = check_bound(R, helstrom_bound(D, G), attain_tol=1e-8)
    print(f"gamma={g:+.1f}  G={G[0, 0]:.8f}  S={S[0, 0].real:.8f}  d2lnchi={fd:.8f}  "
          f"R={R[0, 0]:.8f}  {rep.verdict.value}")
