import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcrb.errors import DimensionTooSmall, NonHermitianGenerator, TruncationInsufficient
from qcrb.states import (
    COMPLEX,
    DensityOperator,
    ParamPoint,
    StateFamily,
    canonical_family_complex,
    canonical_family_real,
    coherent_state,
    family_derivative,
    fock_ops,
    pauli,
    thermal_state,
    unitary_shift_family,
)

from conftest import random_density, random_hermitian

SX, SY, SZ = pauli()


def test_fock_ops_small():
    a, ad, n = fock_ops(2)
    assert np.array_equal(a, [[0, 1], [0, 0]])
    assert np.array_equal(ad, a.T)
    assert np.array_equal(n, np.diag([0, 1]))
    with pytest.raises(DimensionTooSmall):
        fock_ops(1)


def test_ccr_interior():
    a, ad, _ = fock_ops(10)
    c = a @ ad - ad @ a
    assert np.abs(np.diag(c)[:9] - 1).max() <= 1e-14
    assert c[9, 9] == pytest.approx(-9)


def _series_ket(dim, alpha):
    # independent construction with the plain factorial
    return np.array([math.exp(-abs(alpha) ** 2 / 2) * alpha**m / math.sqrt(math.factorial(m))
                     for m in range(dim)], complex)


def test_coherent_mean_field():
    a, _, n = fock_ops(20)
    v = _series_ket(20, 0.5)
    assert abs(v.conj() @ a @ v - 0.5) <= 1e-9
    rho = coherent_state(20, 0.5)
    assert abs(rho.expect(a) - 0.5) <= 1e-9


def test_coherent_examples():
    assert np.array_equal(coherent_state(5, 0).matrix, np.diag([1, 0, 0, 0, 0]).astype(complex))
    _, _, n = fock_ops(30)
    assert abs(coherent_state(30, 1.0).expect(n) - 1.0) <= 1e-9
    with pytest.raises(TruncationInsufficient) as exc:
        coherent_state(8, 2.0)
    assert exc.value.required_dim > 8


def test_thermal_truncation_policy():
    rho = thermal_state(16, 1.0)
    p = np.diag(rho.matrix).real
    assert np.allclose(p[1:] / p[:-1], 0.5)
    with pytest.raises(TruncationInsufficient):
        thermal_state(16, 1.0, strict=True)
    thermal_state(40, 1.0, strict=True)


def test_real_canonical_qubit_logistic():
    # e^{g sz/2} (I/2) e^{g sz/2} / chi = diag(e^g, e^-g) / (e^g + e^-g)
    fam = canonical_family_real(np.eye(2) / 2, [SZ])
    for g in (0.5, 1.0, -1.3):
        expected = np.array([1.0, math.exp(-2 * g)]) / (1 + math.exp(-2 * g))
        assert np.allclose(np.diag(fam.matrix([g])).real, expected, atol=1e-14)
    assert np.allclose(np.diag(fam.matrix([0.5])).real, [0.7311, 0.2689], atol=1e-4)
    assert np.allclose(np.diag(fam.matrix([1.0])).real, [0.8808, 0.1192], atol=1e-4)
    assert np.allclose(fam.matrix([0.0]), np.eye(2) / 2)


def test_real_canonical_normalized(rng):
    fam = canonical_family_real(random_density(rng, 3), [random_hermitian(rng, 3)])
    for g in rng.uniform(-2, 2, 20):
        assert abs(np.trace(fam.matrix([g])) - 1) <= 1e-10


def test_real_canonical_needs_hermitian():
    with pytest.raises(NonHermitianGenerator):
        canonical_family_real(np.eye(2) / 2, [np.array([[0, 1], [0, 0]])])


def test_complex_coherent_family():
    a, ad, _ = fock_ops(30)
    fam = canonical_family_complex(coherent_state(30, 0), [a])
    assert abs(fam.chi([0.3]) - math.exp(0.09)) <= 1e-8
    # <0| e^{conj(b) a} e^{b a^H} |0> by the truncated series sum |b|^2m / m!
    series = sum(0.09**m / math.factorial(m) for m in range(30))
    assert abs(fam.chi([0.3]) - series) <= 1e-12
    for beta in (0.3, 0.2 - 0.4j):
        assert np.abs(fam.matrix([beta]) - coherent_state(30, beta).matrix).max() <= 1e-8
    assert np.allclose(fam.matrix([0]), coherent_state(30, 0).matrix)


def test_complex_vacuum_gaussian_log_chi():
    a, _, _ = fock_ops(40)
    fam = canonical_family_complex(coherent_state(40, 0), [a])
    for r in np.linspace(0, 1, 5):
        for phi in np.linspace(0, 2 * np.pi, 7):
            b = r * np.exp(1j * phi)
            assert abs(math.log(fam.chi([b])) - abs(b) ** 2) <= 1e-8


def test_unitary_shift_examples(rng):
    plus = np.full((2, 2), 0.5, complex)
    minus = np.array([[0.5, -0.5], [-0.5, 0.5]], complex)
    fam = unitary_shift_family(plus, [SZ / 2])
    assert np.abs(fam.matrix([np.pi]) - minus).max() <= 1e-10
    assert np.allclose(fam.matrix([0]), plus)
    rho0 = random_density(rng, 4)
    fam = unitary_shift_family(rho0, [random_hermitian(rng, 4), random_hermitian(rng, 4)], hbar=0.7)
    w0 = np.linalg.eigvalsh(rho0)
    for _ in range(5):
        th = rng.uniform(-2, 2, 2)
        assert np.abs(np.linalg.eigvalsh(fam.matrix(th)) - w0).max() <= 1e-12


def test_param_point_pairing():
    p = ParamPoint.complex([0.3 - 0.2j])
    assert p.gamma[0] == pytest.approx(0.6)
    assert p.theta[0] == pytest.approx(-0.2)
    assert p.beta[0] == pytest.approx(0.3 - 0.2j)


def test_constant_family_derivative():
    rho = np.diag([0.7, 0.3]).astype(complex)
    fam = StateFamily(lambda g: rho, 1)
    assert np.abs(family_derivative(fam, [0.4], 0)).max() == 0


def test_qubit_derivative_and_richardson():
    fam = canonical_family_real(np.eye(2) / 2, [SZ])
    d = family_derivative(fam, [0.0], 0)
    # (sz rho0 + rho0 sz) / 2 - mu rho0 with mu = 0
    assert np.allclose(d, SZ / 2, atol=1e-14)
    d5 = fam.derivative([0.0], 0, step=1e-5)
    d6 = fam.derivative([0.0], 0, step=1e-6)
    assert np.abs(d5 - d6).max() <= 1e-6
    assert np.abs(d5 - d).max() <= 1e-6


def test_wirtinger_consistency():
    # d rho / d beta and d rho / d beta_bar of a complex family are adjoints
    a, _, _ = fock_ops(30)
    fam = canonical_family_complex(coherent_state(30, 0), [a])
    pt = ParamPoint.complex([0.2 + 0.1j])
    db = fam.derivative(pt, 0)
    dbb = fam.derivative(pt, 0, conj=True)
    assert np.allclose(db, dbb.conj().T)
    # analytic against central differences in (gamma, theta)
    fd = fam.derivative(pt, 0, conj=True, step=1e-5)
    assert np.linalg.norm(fd - dbb) <= 1e-6 * np.linalg.norm(dbb)


def _families(rng, d):
    rho0 = random_density(rng, d)
    h1, h2 = random_hermitian(rng, d), random_hermitian(rng, d)
    return [
        canonical_family_real(rho0, [h1]),
        canonical_family_real(rho0, [h1, h2]),  # non-commuting: differences
        canonical_family_complex(rho0, [0.5 * (h1 + 1j * h2)]),
        unitary_shift_family(rho0, [h1, h2]),
    ]


def test_derivative_traceless_and_analytic_vs_fd(rng):
    count = 0
    while count < 20:
        for fam in _families(rng, int(rng.integers(2, 6))):
            n = fam.arity
            pt = rng.uniform(-0.5, 0.5, n)
            if fam.kind == COMPLEX:
                pt = pt + 1j * rng.uniform(-0.5, 0.5, n)
            for k in range(n):
                d = fam.derivative(pt, k)
                assert abs(np.trace(d)) <= 1e-8
                if fam.has_analytic_derivative:
                    fd = fam.derivative(pt, k, step=1e-5)
                    assert np.linalg.norm(fd - d) <= 1e-6 * max(np.linalg.norm(d), 1e-3)
            count += 1


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 6))
def test_every_evaluation_is_a_state(seed, d):
    rng = np.random.default_rng(seed)
    for fam in _families(rng, d):
        n = fam.arity
        pt = rng.uniform(-1, 1, n) + (1j * rng.uniform(-1, 1, n) if fam.kind == COMPLEX else 0)
        rho = fam.matrix(pt)
        assert abs(np.trace(rho) - 1) <= 1e-10
        assert np.linalg.eigvalsh(rho)[0] >= -1e-10
        DensityOperator(rho)


def test_density_operator_validation():
    with pytest.raises(ValueError):
        DensityOperator(np.diag([0.6, 0.6]))
    with pytest.raises(ValueError):
        DensityOperator(np.diag([1.2, -0.2]))
