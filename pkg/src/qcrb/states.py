"""Parametric density-operator families and Fock-space building blocks.

Complex parameters use the pairing ``beta = gamma / 2 + 1j * theta``.
Wirtinger derivatives are assembled from the real partials as::

    d/d beta     = d/d gamma - (1j / 2) d/d theta
    d/d beta_bar = d/d gamma + (1j / 2) d/d theta

which is the unique combination with ``d beta / d beta = 1`` and
``d beta / d beta_bar = 0``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from . import matkernel as mk
from .config import DEFAULT_TOL
from .errors import (
    DerivativeFailure,
    DimensionTooSmall,
    DivergentChi,
    NonHermitianGenerator,
    NoConvergence,
    OutOfDomain,
    TruncationInsufficient,
)

__all__ = [
    "DensityOperator",
    "ParamPoint",
    "GeneratorSet",
    "GeneratingFunction",
    "StateFamily",
    "CanonicalRealFamily",
    "CanonicalComplexFamily",
    "UnitaryShiftFamily",
    "fock_ops",
    "coherent_ket",
    "coherent_state",
    "thermal_state",
    "fock_state",
    "pauli",
    "canonical_family_real",
    "canonical_family_complex",
    "unitary_shift_family",
    "family_derivative",
]

REAL = "real"
COMPLEX = "complex"


# --------------------------------------------------------------------------
# basic types


class DensityOperator:
    """Trace-one Hermitian PSD matrix.

    Construction validates trace and positivity; ``validate=False`` skips the
    eigenvalue check for hot loops that already guarantee it.
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix, validate=True, tol=1e-10):
        m = mk.as_matrix(matrix)
        if validate:
            mk.check_hermitian(m, name="density operator")
            tr = np.trace(m).real
            if abs(tr - 1.0) > tol:
                raise ValueError(f"density operator trace is {tr!r}, expected 1")
            min_eig = np.linalg.eigvalsh(mk.hermitize(m))[0]
            if min_eig < -tol:
                raise ValueError(f"density operator has eigenvalue {min_eig:.3g} < 0")
        m = mk.hermitize(m)
        m.setflags(write=False)
        self.matrix = m

    @property
    def dim(self):
        return self.matrix.shape[0]

    def expect(self, op):
        return complex(np.trace(self.matrix @ op))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __repr__(self):
        return f"DensityOperator(dim={self.dim})"


@dataclass(frozen=True)
class ParamPoint:
    """A parameter value; complex points are held as (gamma, theta) pairs."""

    kind: str
    gamma: np.ndarray
    theta: Optional[np.ndarray] = None

    @classmethod
    def real(cls, values):
        v = np.atleast_1d(np.asarray(values, dtype=float)).copy()
        if not np.all(np.isfinite(v)):
            raise OutOfDomain("non-finite parameter")
        return cls(REAL, v, None)

    @classmethod
    def complex(cls, beta):
        b = np.atleast_1d(np.asarray(beta, dtype=complex))
        if not np.all(np.isfinite(b)):
            raise OutOfDomain("non-finite parameter")
        return cls(COMPLEX, 2.0 * b.real, b.imag.copy())

    @property
    def beta(self):
        if self.kind != COMPLEX:
            raise TypeError("real parameter point has no complex view")
        return 0.5 * self.gamma + 1j * self.theta

    @property
    def values(self):
        return self.gamma if self.kind == REAL else self.beta

    def __len__(self):
        return self.gamma.size


def _as_point(p, kind):
    if isinstance(p, ParamPoint):
        if p.kind != kind:
            raise OutOfDomain(f"expected a {kind} parameter point, got {p.kind}")
        return p
    return ParamPoint.real(p) if kind == REAL else ParamPoint.complex(p)


@dataclass(frozen=True)
class GeneratorSet:
    ops: tuple
    hermitian: bool = False
    zero_mean_adjusted: bool = False

    def __post_init__(self):
        ops = tuple(mk.as_matrix(o) for o in self.ops)
        if not ops:
            raise ValueError("generator set is empty")
        d = ops[0].shape[0]
        if any(o.shape != (d, d) for o in ops):
            raise ValueError("generators have inconsistent shapes")
        object.__setattr__(self, "ops", ops)
        if self.hermitian:
            for k, o in enumerate(ops):
                if not mk.is_hermitian(o):
                    raise NonHermitianGenerator(f"generator {k} is not Hermitian")
        vec = np.array([o.ravel() for o in ops])
        gram = vec.conj() @ vec.T
        w = np.linalg.eigvalsh(mk.hermitize(gram))
        if w[0] <= 1e-10 * max(w[-1], 1e-300):
            raise ValueError("generators are not linearly independent")

    @classmethod
    def of(cls, ops, hermitian=None):
        ops = [mk.as_matrix(o) for o in ops]
        if hermitian is None:
            hermitian = all(mk.is_hermitian(o) for o in ops)
        return cls(tuple(ops), hermitian=hermitian)

    @property
    def dim(self):
        return self.ops[0].shape[0]

    def __len__(self):
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)

    def __getitem__(self, k):
        return self.ops[k]

    def commuting(self, tol=DEFAULT_TOL.commute_tol):
        for i, a in enumerate(self.ops):
            for b in self.ops[i + 1:]:
                scale = max(np.linalg.norm(a) * np.linalg.norm(b), 1.0)
                if np.linalg.norm(mk.commutator(a, b)) > tol * scale:
                    return False
        return True

    def combine(self, coeffs):
        return sum(c * o for c, o in zip(coeffs, self.ops))

    def zero_mean(self, rho):
        rho = np.asarray(rho)
        ops = tuple(o - np.trace(rho @ o) * np.eye(self.dim) for o in self.ops)
        return GeneratorSet(ops, hermitian=self.hermitian, zero_mean_adjusted=True)


@dataclass(frozen=True)
class GeneratingFunction:
    """Moment generating function of a canonical family.

    ``log_gradient`` is d ln chi / d gamma for real families and
    d ln chi / d beta_bar for complex ones; ``log_hessian`` is the matching
    second derivative (d^2 / d beta_bar_i d beta_k for complex families).
    """

    chi: Callable
    log_gradient: Callable
    log_hessian: Callable


# --------------------------------------------------------------------------
# Fock space helpers


def fock_ops(dim):
    """Truncated annihilation, creation and number operators."""
    if dim < 2:
        raise DimensionTooSmall("dim must be >= 2")
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    return a, a.conj().T.copy(), np.diag(np.arange(dim, dtype=float)).astype(complex)


def _poisson_tail(mean, dim):
    from scipy.stats import poisson

    return float(poisson.sf(dim - 1, mean)) if mean > 0 else 0.0


def coherent_ket(dim, alpha):
    """Truncated coherent vector, entries e^{-|a|^2/2} a^m / sqrt(m!); not renormalized."""
    m = np.arange(dim)
    alpha = complex(alpha)
    if alpha == 0:
        v = np.zeros(dim, complex)
        v[0] = 1.0
        return v
    logmag = -0.5 * abs(alpha) ** 2 + m * np.log(abs(alpha)) - 0.5 * gammaln(m + 1)
    return np.exp(logmag) * np.exp(1j * m * np.angle(alpha))


def coherent_state(dim, alpha, tail_tol=DEFAULT_TOL.truncation_tail):
    """Pure coherent state |alpha><alpha| on a ``dim``-level truncation.

    Raises TruncationInsufficient when the Poisson mass beyond the
    truncation exceeds ``tail_tol``.
    """
    if dim < 2:
        raise DimensionTooSmall("dim must be >= 2")
    mean = abs(alpha) ** 2
    tail = _poisson_tail(mean, dim)
    if tail > tail_tol:
        need = dim
        while _poisson_tail(mean, need) > tail_tol:
            need += 1
        raise TruncationInsufficient(
            f"coherent amplitude {alpha} needs dim >= {need} (tail {tail:.2e} at dim {dim})",
            required_dim=need,
        )
    v = coherent_ket(dim, alpha)
    v = v / np.linalg.norm(v)
    return DensityOperator(np.outer(v, v.conj()))


def thermal_state(dim, nbar, strict=False, tail_tol=DEFAULT_TOL.truncation_tail):
    """Gibbs state of the truncated number operator with mean occupation ``nbar``
    for the untruncated oscillator.

    The populations ``(nbar/(nbar+1))^m`` are renormalized on the ``dim``
    levels. With ``strict=True`` a discarded tail above ``tail_tol`` raises.
    """
    if dim < 2:
        raise DimensionTooSmall("dim must be >= 2")
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    if nbar == 0:
        return fock_state(dim, 0)
    q = nbar / (nbar + 1.0)
    tail = q**dim
    if strict and tail > tail_tol:
        need = int(np.ceil(np.log(tail_tol) / np.log(q)))
        raise TruncationInsufficient(
            f"thermal nbar={nbar} needs dim >= {need} (tail {tail:.2e})", required_dim=need
        )
    p = q ** np.arange(dim)
    return DensityOperator(np.diag(p / p.sum()))


def fock_state(dim, n):
    if not 0 <= n < dim:
        raise ValueError(f"Fock level {n} outside truncation {dim}")
    m = np.zeros((dim, dim), complex)
    m[n, n] = 1.0
    return DensityOperator(m)


def pauli():
    """Return (sx, sy, sz)."""
    sx = np.array([[0, 1], [1, 0]], complex)
    sy = np.array([[0, -1j], [1j, 0]], complex)
    sz = np.array([[1, 0], [0, -1]], complex)
    return sx, sy, sz


# --------------------------------------------------------------------------
# families


class StateFamily:
    """A differentiable map from parameters to density operators.

    Parameters
    ----------
    func : callable
        Maps a parameter array (float for real kind, complex ``beta`` for
        complex kind) to a density matrix.
    arity : int
    kind : {"real", "complex"}
    dfunc : callable, optional
        Analytic derivative ``dfunc(values, k, conj)``. For real families
        ``conj`` is ignored; for complex ones it selects d/d beta_bar.
    step : float
        Central-difference step used when ``dfunc`` is absent.
    """

    def __init__(self, func, arity, kind=REAL, dfunc=None, step=DEFAULT_TOL.fd_step,
                 metadata=None):
        if kind not in (REAL, COMPLEX):
            raise ValueError(f"unknown family kind {kind!r}")
        self._func = func
        self._dfunc = dfunc
        self.arity = int(arity)
        self.kind = kind
        self.step = float(step)
        self.metadata = dict(metadata or {})

    @property
    def derivative_mode(self):
        return "analytic" if self._dfunc is not None else f"central_difference({self.step:g})"

    @property
    def has_analytic_derivative(self):
        return self._dfunc is not None

    def point(self, p):
        p = _as_point(p, self.kind)
        if len(p) != self.arity:
            raise OutOfDomain(f"expected {self.arity} parameters, got {len(p)}")
        return p

    def matrix(self, p):
        """Density matrix as a plain ndarray (no validation)."""
        p = self.point(p)
        try:
            m = np.asarray(self._func(p.values), dtype=complex)
        except (NoConvergence, FloatingPointError, OverflowError) as exc:
            raise OutOfDomain(str(exc)) from exc
        if not np.all(np.isfinite(m)):
            raise OutOfDomain("family evaluation produced non-finite entries")
        return mk.hermitize(m)

    def evaluate(self, p):
        return DensityOperator(self.matrix(p))

    # derivatives -----------------------------------------------------

    def derivative(self, p, k, conj=False, step=None):
        """d rho / d param_k, or d/d beta_bar_k when ``conj`` on a complex family.

        Passing ``step`` forces central differences with that step even when
        an analytic derivative exists.
        """
        p = self.point(p)
        if not 0 <= k < self.arity:
            raise IndexError(f"parameter index {k} out of range")
        try:
            if self._dfunc is not None and step is None:
                d = np.asarray(self._dfunc(p.values, k, conj), dtype=complex)
            elif self.kind == REAL:
                d = self._fd_real(p, k, self.step if step is None else step)
            else:
                h = self.step if step is None else step
                dg = self.real_derivative(p, k, "gamma", h)
                dt = self.real_derivative(p, k, "theta", h)
                d = dg + 0.5j * dt if conj else dg - 0.5j * dt
        except (OutOfDomain, DivergentChi):
            raise
        except (NoConvergence, ArithmeticError, ValueError) as exc:
            raise DerivativeFailure(str(exc)) from exc
        if not np.all(np.isfinite(d)):
            raise DerivativeFailure("non-finite derivative")
        return d

    def _fd_real(self, p, k, h):
        e = np.zeros(self.arity)
        e[k] = h
        plus = self.matrix(ParamPoint.real(p.gamma + e))
        minus = self.matrix(ParamPoint.real(p.gamma - e))
        return (plus - minus) / (2 * h)

    def real_derivative(self, p, k, coord="gamma", h=None):
        """Partial derivative along a real coordinate of a complex family.

        ``coord`` is ``"gamma"`` (twice the real part of beta) or ``"theta"``
        (the imaginary part). Uses the analytic Wirtinger derivatives when
        available, otherwise central differences.
        """
        p = self.point(p)
        if self.kind == REAL:
            if coord != "gamma":
                raise ValueError("real families only have gamma coordinates")
            return self.derivative(p, k)
        if self._dfunc is not None and h is None:
            db = np.asarray(self._dfunc(p.values, k, False), dtype=complex)
            dbb = np.asarray(self._dfunc(p.values, k, True), dtype=complex)
            # d/dgamma = (d_b + d_bb)/2 ; d/dtheta = i (d_b - d_bb)
            return 0.5 * (db + dbb) if coord == "gamma" else 1j * (db - dbb)
        h = self.step if h is None else h
        e = np.zeros(self.arity)
        e[k] = h
        if coord == "gamma":
            plus = ParamPoint(COMPLEX, p.gamma + e, p.theta)
            minus = ParamPoint(COMPLEX, p.gamma - e, p.theta)
        elif coord == "theta":
            plus = ParamPoint(COMPLEX, p.gamma, p.theta + e)
            minus = ParamPoint(COMPLEX, p.gamma, p.theta - e)
        else:
            raise ValueError(f"unknown coordinate {coord!r}")
        return (self.matrix(plus) - self.matrix(minus)) / (2 * h)

    def real_coordinate_derivatives(self, p):
        """All derivatives along real coordinates.

        Real families: ``[d/dgamma_k]``. Complex families:
        ``[d/dgamma_1..n, d/dtheta_1..n]``.
        """
        p = self.point(p)
        if self.kind == REAL:
            return [self.derivative(p, k) for k in range(self.arity)]
        out = [self.real_derivative(p, k, "gamma") for k in range(self.arity)]
        out += [self.real_derivative(p, k, "theta") for k in range(self.arity)]
        return out

    def __repr__(self):
        return f"{type(self).__name__}(arity={self.arity}, kind={self.kind!r}, mode={self.derivative_mode})"


def _check_rho0(rho0):
    if isinstance(rho0, DensityOperator):
        return rho0
    return DensityOperator(rho0)


def _as_generators(gens, need_hermitian=False):
    if not isinstance(gens, GeneratorSet):
        gens = GeneratorSet.of(gens)
    if need_hermitian:
        for k, o in enumerate(gens.ops):
            if not mk.is_hermitian(o):
                raise NonHermitianGenerator(f"generator {k} is not Hermitian")
    return gens


class CanonicalRealFamily(StateFamily):
    """rho(gamma) = chi^-1 exp(gamma.s/2) rho0 exp(gamma.s/2), chi = Tr rho0 exp(gamma.s)."""

    def __init__(self, rho0, gens, hbar=1.0, step=DEFAULT_TOL.fd_step):
        self.rho0 = _check_rho0(rho0)
        self.generators = _as_generators(gens, need_hermitian=True)
        if self.generators.dim != self.rho0.dim:
            raise ValueError("generator and state dimensions differ")
        self.hbar = float(hbar)
        self.commuting = self.generators.commuting()
        dfunc = self._analytic_derivative if self.commuting else None
        super().__init__(self._rho, len(self.generators), REAL, dfunc, step,
                         metadata={"form": "canonical_real"})
        self.generating_function = GeneratingFunction(self.chi, self.mu, self.log_hessian)

    def _half_exp(self, gamma):
        return mk.matrix_exp(0.5 * self.generators.combine(gamma))

    def _unnormalized(self, gamma):
        e = self._half_exp(gamma)
        return e @ self.rho0.matrix @ e

    def chi(self, gamma):
        gamma = np.atleast_1d(np.asarray(gamma, float))
        val = np.trace(self._unnormalized(gamma)).real
        if not np.isfinite(val) or val <= 0:
            raise DivergentChi(f"chi({gamma}) = {val}")
        return float(val)

    def _rho(self, gamma):
        m = self._unnormalized(gamma)
        tr = np.trace(m).real
        if not np.isfinite(tr) or tr <= 0:
            raise DivergentChi(f"chi({gamma}) = {tr}")
        return m / tr

    def mu(self, gamma):
        """d ln chi / d gamma; equals <s_k> in the commuting case."""
        gamma = np.atleast_1d(np.asarray(gamma, float))
        if self.commuting:
            rho = self._rho(gamma)
            return np.array([np.trace(rho @ s).real for s in self.generators])
        # Frechet derivative of exp(gamma.s) contracted with rho0
        m = self.generators.combine(gamma)
        chi = self.chi(gamma)
        out = []
        for s in self.generators:
            _, de = mk.expm_derivative(m, s)
            out.append(np.trace(self.rho0.matrix @ de).real / chi)
        return np.array(out)

    def log_hessian(self, gamma, h=1e-5):
        gamma = np.atleast_1d(np.asarray(gamma, float))
        n = self.arity
        if self.commuting:
            rho = self._rho(gamma)
            c = [s - np.trace(rho @ s) * np.eye(rho.shape[0]) for s in self.generators]
            return np.array([[np.trace(rho @ c[i] @ c[k]).real for k in range(n)]
                             for i in range(n)])
        hess = np.empty((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            hess[:, k] = (self.mu(gamma + e) - self.mu(gamma - e)) / (2 * h)
        return 0.5 * (hess + hess.T)

    def _analytic_derivative(self, gamma, k, conj=False):
        rho = self._rho(gamma)
        s = self.generators[k]
        mu = np.trace(rho @ s).real
        return 0.5 * (s @ rho + rho @ s) - mu * rho

    def as_complex(self):
        """The same family written as a complex canonical family in beta = gamma/2 + i theta."""
        return CanonicalComplexFamily(self.rho0, self.generators, hbar=self.hbar, step=self.step)


class CanonicalComplexFamily(StateFamily):
    """rho(beta) = chi^-1 exp(beta.x^H) rho0 exp(conj(beta).x).

    Derivatives are analytic for arbitrary (non-commuting, non-normal)
    generators through the Frechet derivative of the exponential.
    """

    def __init__(self, rho0, gens, hbar=1.0, step=DEFAULT_TOL.fd_step):
        self.rho0 = _check_rho0(rho0)
        self.generators = _as_generators(gens)
        if self.generators.dim != self.rho0.dim:
            raise ValueError("generator and state dimensions differ")
        self.hbar = float(hbar)
        super().__init__(self._rho, len(self.generators), COMPLEX, self._analytic_derivative,
                         step, metadata={"form": "canonical_complex"})
        self.generating_function = GeneratingFunction(self.chi, self.mu, self.log_hessian)

    def _right(self, beta):
        # exp(conj(beta).x) -- the factor to the right of rho0
        return mk.matrix_exp(self.generators.combine(np.conj(beta)))

    def _unnormalized(self, beta):
        r = self._right(beta)
        return r.conj().T @ self.rho0.matrix @ r

    def chi(self, beta):
        beta = np.atleast_1d(np.asarray(beta, complex))
        try:
            val = np.trace(self._unnormalized(beta)).real
        except NoConvergence as exc:
            raise DivergentChi(str(exc)) from exc
        if not np.isfinite(val) or val <= 0:
            raise DivergentChi(f"chi({beta}) = {val}")
        return float(val)

    def _rho(self, beta):
        m = self._unnormalized(beta)
        tr = np.trace(m).real
        if not np.isfinite(tr) or tr <= 0:
            raise DivergentChi(f"chi({beta}) = {tr}")
        return m / tr

    def _frechet_terms(self, beta, k):
        m = self.generators.combine(np.conj(beta))
        r, dr = mk.expm_derivative(m, self.generators[k])
        return r, dr

    def mu(self, beta):
        """d ln chi / d beta_bar_k (complex vector)."""
        beta = np.atleast_1d(np.asarray(beta, complex))
        out = []
        for k in range(self.arity):
            r, dr = self._frechet_terms(beta, k)
            left = r.conj().T @ self.rho0.matrix
            out.append(np.trace(left @ dr) / np.trace(left @ r).real)
        return np.array(out)

    def log_hessian(self, beta, h=1e-5):
        """H_ik = d^2 ln chi / d beta_bar_i d beta_k by central differences of mu."""
        beta = np.atleast_1d(np.asarray(beta, complex))
        n = self.arity
        hess = np.empty((n, n), complex)
        for k in range(n):
            e = np.zeros(n, complex)
            e[k] = 1.0
            # d/d beta_k = d/d gamma_k - (i/2) d/d theta_k ; gamma step moves beta by h/2
            dg = (self.mu(beta + 0.5 * h * e) - self.mu(beta - 0.5 * h * e)) / (2 * h)
            dt = (self.mu(beta + 1j * h * e) - self.mu(beta - 1j * h * e)) / (2 * h)
            hess[:, k] = dg - 0.5j * dt
        return mk.hermitize(hess)

    def _analytic_derivative(self, beta, k, conj=False):
        r, dr = self._frechet_terms(beta, k)
        left = r.conj().T @ self.rho0.matrix
        chi = np.trace(left @ r).real
        rho = left @ r / chi
        mu = np.trace(left @ dr) / chi
        d_bar = left @ dr / chi - mu * rho
        return d_bar if conj else d_bar.conj().T


class UnitaryShiftFamily(StateFamily):
    """rho(theta) = U rho0 U^H with U = exp(i theta.s / hbar)."""

    def __init__(self, rho0, gens, hbar=1.0, step=DEFAULT_TOL.fd_step):
        if hbar <= 0:
            raise ValueError("hbar must be positive")
        self.rho0 = _check_rho0(rho0)
        self.generators = _as_generators(gens, need_hermitian=True)
        if self.generators.dim != self.rho0.dim:
            raise ValueError("generator and state dimensions differ")
        self.hbar = float(hbar)
        super().__init__(self._rho, len(self.generators), REAL, self._analytic_derivative,
                         step, metadata={"form": "unitary_shift"})

    def _exponent(self, theta):
        return 1j * self.generators.combine(theta) / self.hbar

    def unitary(self, theta):
        return mk.matrix_exp(self._exponent(np.atleast_1d(theta)))

    def _rho(self, theta):
        u = self.unitary(theta)
        return u @ self.rho0.matrix @ u.conj().T

    def _analytic_derivative(self, theta, k, conj=False):
        u, du = mk.expm_derivative(self._exponent(theta), 1j * self.generators[k] / self.hbar)
        a = du @ self.rho0.matrix @ u.conj().T
        return a + a.conj().T

    def as_canonical_complex(self):
        """Complex canonical view: rho(beta) with beta = 1j * theta / hbar."""
        return CanonicalComplexFamily(self.rho0, self.generators, hbar=self.hbar, step=self.step)

    def beta_of(self, theta):
        return 1j * np.atleast_1d(np.asarray(theta, float)) / self.hbar


def canonical_family_real(rho0, gens, hbar=1.0):
    return CanonicalRealFamily(rho0, gens, hbar=hbar)


def canonical_family_complex(rho0, gens, hbar=1.0):
    return CanonicalComplexFamily(rho0, gens, hbar=hbar)


def unitary_shift_family(rho0, gens, hbar=1.0):
    return UnitaryShiftFamily(rho0, gens, hbar=hbar)


def family_derivative(fam, p, k, conj=False):
    """d rho / d param_k (real) or d rho / d beta_k, d rho / d beta_bar_k (complex)."""
    return fam.derivative(p, k, conj=conj)
