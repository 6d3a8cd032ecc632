import math

import numpy as np
import pytest

from qcrb.audit import (
    canonical_fit_residual,
    disk_grid,
    gaussian_chi_residual,
    regularity_check,
    theorem1_audit,
    theorem2_audit,
    theorem3_audit,
)
from qcrb.errors import SingularR
from qcrb.povm import Povm, builtin_heterodyne, builtin_spectral
from qcrb.states import (
    ParamPoint,
    StateFamily,
    canonical_family_complex,
    canonical_family_real,
    coherent_state,
    fock_ops,
    fock_state,
    pauli,
    thermal_state,
)

SX, SY, SZ = pauli()


@pytest.fixture(scope="module")
def thermal8():
    n = fock_ops(8)[2]
    return canonical_family_real(thermal_state(8, 1.0), [n]), n


@pytest.fixture(scope="module")
def coherent30():
    a = fock_ops(30)[0]
    fam = canonical_family_complex(coherent_state(30, 0), [a])
    return fam, a, builtin_heterodyne(30, 6.0, 80)


def _series_log_chi(p, g):
    # ln sum_m p_m e^{g m} for the truncated thermal populations
    return math.log(sum(pm * math.exp(g * m) for m, pm in enumerate(p)))


def test_regularity_canonical_and_one_parameter(thermal8):
    fam, n = thermal8
    grid = [ParamPoint.real([g]) for g in (-0.2, 0.0, 0.3)]
    sym, ana = regularity_check(fam, builtin_spectral([n]), grid)
    assert sym == 0.0 and ana == 0.0


def test_regularity_heterodyne_analytic(coherent30):
    fam, _, p = coherent30
    grid = [ParamPoint.complex([b]) for b in (0.0, 0.2 - 0.1j)]
    sym, ana = regularity_check(fam, p, grid)
    assert sym == 0.0
    assert ana <= 1e-6


def test_regularity_two_parameter_symmetry():
    s1, s2 = np.diag([1.0, 0.0, -1.0, 0.5]), np.diag([0.0, 2.0, 1.0, -1.0])
    fam = canonical_family_real(np.eye(4) / 4, [s1, s2])
    sym, _ = regularity_check(fam, builtin_spectral([s1, s2]), [ParamPoint.real([0.1, -0.2])])
    assert sym <= 1e-6


def test_regularity_singular_error_matrix(thermal8):
    fam, _ = thermal8
    constant = Povm(effects=[np.eye(8)], labels=[1.0])
    with pytest.raises(SingularR):
        regularity_check(fam, constant, [ParamPoint.real([0.0])])


def test_theorem1_thermal_attained(thermal8):
    fam, n = thermal8
    p = np.diag(thermal_state(8, 1.0).matrix).real
    for g in (-0.3, 0.0, 0.3):
        v = theorem1_audit(fam, builtin_spectral([n]), [g])
        assert v.helstrom_attained and v.reasons == ()
        assert v.right_eigen_residual <= 1e-6 and v.canonical_fit_residual <= 1e-6
        h = 1e-4
        fd = (_series_log_chi(p, g + h) - 2 * _series_log_chi(p, g) + _series_log_chi(p, g - h)) / h**2
        assert abs(v.details["R"][0, 0] - fd) <= 1e-6


def test_theorem1_heterodyne_not_attained(thermal8):
    fam, n = thermal8
    het = builtin_heterodyne(8, 6.0, 80)
    # |alpha|^2 - 1 is an unbiased estimate of <n> from the Q-function
    p = het.relabel(np.abs(het.labels[:, 0]) ** 2 - 1.0, name="heterodyne_n")
    v = theorem1_audit(fam, p, [0.0])
    assert not v.helstrom_attained
    assert v.details["bias"] <= 1e-6
    assert v.details["diff_min_eig"] > 0.1
    assert "NotAttained" in v.reasons


def test_theorem1_rank_changing_family_not_canonical():
    plus = np.full((2, 2), 0.5, complex)
    zero = np.diag([1.0, 0.0]).astype(complex)
    fam = StateFamily(lambda g: (1 - g[0] ** 2) * zero + g[0] ** 2 * plus, 1)
    v = theorem1_audit(fam, builtin_spectral([SZ]), [0.3], target=lambda pt: [1 - pt.gamma[0] ** 2 / 2],
                       generators=[SZ])
    assert v.canonical_fit_residual > 1e-2
    assert "NotCanonical" in v.reasons
    assert not v.helstrom_attained
    direct = canonical_fit_residual(fam, [SZ], [ParamPoint.real([g]) for g in (0.1, 0.3)])
    assert direct > 1e-2


def test_theorem2_coherent_heterodyne(coherent30):
    fam, a, p = coherent30
    v = theorem2_audit(fam, p, [0.0], target=lambda pt: pt.beta)
    assert v.right_attained and v.reasons == ()
    assert abs(v.details["R"][0, 0] - 1) <= 1e-6
    assert abs(v.details["H"][0, 0] - 1) <= 1e-6
    assert v.details["analytic"]


def test_theorem2_number_measurement_is_biased(coherent30):
    fam, _, _ = coherent30
    n = fock_ops(30)[2]
    v = theorem2_audit(fam, builtin_spectral([n]), [0.3 + 0.1j], target=lambda pt: pt.beta)
    assert v.biased and not v.right_attained


def test_theorem1_and_theorem2_agree_on_thermal(thermal8):
    fam, n = thermal8
    p = builtin_spectral([n])
    cf = fam.as_complex()
    for g in (-0.3, 0.0, 0.3):
        v1 = theorem1_audit(fam, p, [g])
        v2 = theorem2_audit(cf, p, [g / 2])
        assert v1.helstrom_attained and v2.right_attained
        assert abs(v1.details["R"][0, 0] - v2.details["R"][0, 0]) <= 1e-12
        # commuting Hermitian generator: the complex mean depends on beta + beta_bar
        assert not v2.details["analytic"]


def test_theorem3_vacuum_heterodyne(coherent30):
    fam, _, p = coherent30
    v = theorem3_audit(fam, p)
    assert v.right_attained and v.reasons == ()
    assert v.gaussian_chi_residual <= 1e-6
    assert abs(v.details["R"][0, 0] - 1) <= 1e-6
    assert v.details["label_linearity"] <= 1e-3


def test_theorem3_fock_one_is_not_gaussian():
    a = fock_ops(30)[0]
    fam = canonical_family_complex(fock_state(30, 1), [a])
    res, _ = gaussian_chi_residual(fam, disk_grid(1))
    assert res >= 1e-3
    # <1| e^{conj(b) a} e^{b a^H} |1> = (1 + |b|^2) e^{|b|^2}, so ln chi - 2|b|^2 is explicit
    b = 0.5
    assert math.log(fam.chi([b])) == pytest.approx(math.log(1 + b * b) + b * b, abs=1e-10)


def test_theorem3_wrong_label_scale(coherent30):
    fam, _, p = coherent30
    v = theorem3_audit(fam, p.relabel(2 * p.labels))
    assert "LabelsNotLinear" in v.reasons
    assert not v.right_attained


def test_audits_are_idempotent(coherent30):
    fam, _, p = coherent30
    a = theorem3_audit(fam, p)
    b = theorem3_audit(fam, p)
    assert a.reasons == b.reasons
    for k in ("R", "H0"):
        assert np.array_equal(a.details[k], b.details[k])
    assert a.details["label_linearity"] == b.details["label_linearity"]
