"""Lower-bound matrices and the checks that compare them with error matrices."""

from dataclasses import dataclass
import enum
import warnings

import numpy as np
from scipy.special import bernoulli

from . import matkernel as mk
from .config import DEFAULT_TOL
from .errors import (
    BiasedEstimator,
    KindMismatch,
    SeriesDivergence,
    ShapeMismatch,
    SingularInformationWarning,
    SingularityAtPole,
)
from .logderiv import ALD, FisherMatrix, LogDerivSet, fisher_rld, rld

__all__ = [
    "JacobianMatrix",
    "Verdict",
    "BoundReport",
    "StructureConstants",
    "helstrom_bound",
    "right_bound",
    "heisenberg_bound",
    "k_matrix",
    "k_matrix_series",
    "lie_bound",
    "check_bound",
    "mean_ccr_check",
    "schwarz_chain",
    "imaginary_part_jacobian",
]


@dataclass(frozen=True)
class JacobianMatrix:
    """D_ik = d theta_i / d alpha^k, with the optional d theta_i / d alpha_bar^k."""

    entries: np.ndarray
    conj_entries: np.ndarray = None

    def __post_init__(self):
        e = np.atleast_2d(np.asarray(self.entries))
        if not np.all(np.isfinite(e)):
            raise ValueError("Jacobian has non-finite entries")
        object.__setattr__(self, "entries", e)
        if self.conj_entries is not None:
            object.__setattr__(self, "conj_entries", np.atleast_2d(np.asarray(self.conj_entries)))

    @property
    def analytic(self):
        if self.conj_entries is None:
            return True
        return bool(np.linalg.norm(self.conj_entries) <= 1e-8)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def imaginary_part_jacobian(n, hbar=1.0):
    """Jacobian of theta_i = hbar Im beta_i with respect to beta: (hbar / 2i) I."""
    return JacobianMatrix(hbar / 2j * np.eye(n), -hbar / 2j * np.eye(n))


class Verdict(str, enum.Enum):
    ATTAINED = "Attained"
    SATISFIED = "Satisfied"
    VIOLATED = "Violated"
    SUBSPACE_BOUND = "SubspaceBound"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class BoundReport:
    bound: np.ndarray
    r_matrix: np.ndarray
    diff_min_eig: float
    verdict: Verdict
    tol: float
    attain_tol: float = None
    distance: float = None

    @property
    def ok(self):
        return self.verdict is not Verdict.VIOLATED


def _mat(x):
    return np.atleast_2d(np.asarray(x))


def _inverse(info, rcond, name):
    inv, rank = mk.pinv(_mat(info), rcond, full_output=True)
    if rank < inv.shape[0]:
        warnings.warn(
            f"{name} information matrix has rank {rank} < {inv.shape[0]}; "
            "bound holds on its range only",
            SingularInformationWarning,
            stacklevel=3,
        )
    return inv


def helstrom_bound(D, G, rcond=DEFAULT_TOL.pinv_rcond):
    """D G^+ D^T, the coordinate-invariant symmetric bound."""
    if isinstance(G, FisherMatrix) and G.kind != "G":
        raise KindMismatch(f"helstrom_bound needs a symmetric information matrix, got {G.kind}")
    d = _mat(D)
    g = _mat(G)
    if d.shape[1] != g.shape[0]:
        raise ShapeMismatch(f"D has {d.shape[1]} columns, G is {g.shape}")
    b = d @ _inverse(g, rcond, "symmetric") @ d.T
    b = mk.hermitize(b)
    return b.real if np.isrealobj(d) or np.allclose(b.imag, 0) else b


def right_bound(D, H, rcond=DEFAULT_TOL.pinv_rcond):
    """D H^+ D^H, the complex right bound."""
    if isinstance(H, FisherMatrix) and H.kind != "H":
        raise KindMismatch(f"right_bound needs a right information matrix, got {H.kind}")
    d = _mat(D).astype(complex)
    h = _mat(H)
    if d.shape[1] != h.shape[0]:
        raise ShapeMismatch(f"D has {d.shape[1]} columns, H is {h.shape}")
    return mk.hermitize(d @ _inverse(h, rcond, "right") @ d.conj().T)


def heisenberg_bound(S0, hbar=1.0, rcond=DEFAULT_TOL.pinv_rcond):
    """(hbar^2 / 4) S0^+."""
    return 0.25 * hbar**2 * _inverse(_mat(S0), rcond, "generator")


# --------------------------------------------------------------------------
# Lie-group correction


class StructureConstants:
    """Structure constants ``C[i, k, j]`` of ``[x_i, x_k] = C^j_ik x_j``.

    Entries may be complex: Hermitian generators of a compact group have
    purely imaginary constants.
    """

    def __init__(self, C, hbar=1.0, check=True):
        c = np.asarray(C)
        if c.ndim != 3 or len(set(c.shape)) != 1:
            raise ValueError(f"structure constants must be n x n x n, got {c.shape}")
        self.C = c
        self.hbar = float(hbar)
        if check:
            anti = np.abs(c + c.transpose(1, 0, 2)).max()
            if anti > 1e-10:
                raise ValueError(f"structure constants are not antisymmetric ({anti:.2e})")
            jac = self.jacobi_residual()
            if jac > 1e-10:
                raise ValueError(f"Jacobi identity violated ({jac:.2e})")

    @property
    def n(self):
        return self.C.shape[0]

    @classmethod
    def from_generators(cls, ops, hbar=1.0):
        """Fit constants from explicit operators by least squares on vec(x_j)."""
        ops = [mk.as_matrix(o) for o in ops]
        n = len(ops)
        basis = np.array([o.ravel() for o in ops]).T
        c = np.zeros((n, n, n), complex)
        for i in range(n):
            for k in range(n):
                comm = mk.commutator(ops[i], ops[k]).ravel()
                coef, *_ = np.linalg.lstsq(basis, comm, rcond=None)
                if np.linalg.norm(basis @ coef - comm) > 1e-8 * max(1.0, np.linalg.norm(comm)):
                    raise ValueError("operators do not close under commutation")
                c[i, k] = coef
        if np.allclose(c.imag, 0, atol=1e-13):
            c = c.real
        return cls(np.where(np.abs(c) < 1e-14, 0, c), hbar=hbar)

    @classmethod
    def su2(cls, hermitian=False, hbar=1.0):
        """su(2): C^j_ik = eps_ikj, or i eps_ikj for Hermitian spin generators."""
        eps = np.zeros((3, 3, 3))
        for i, k, j in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
            eps[i, k, j] = 1.0
            eps[k, i, j] = -1.0
        return cls(1j * eps if hermitian else eps, hbar=hbar)

    def adjoint(self):
        """Matrices C_k with (C_k)[i, j] = C^j_ik; they satisfy [C_i, C_k] = C^j_ik C_j."""
        return [self.C[:, k, :].copy() for k in range(self.n)]

    def jacobi_residual(self):
        c = self.C
        # sum_m C^m_ij C^l_mk + cyclic
        t = np.einsum("ijm,mkl->ijkl", c, c)
        cyc = t + t.transpose(1, 2, 0, 3) + t.transpose(2, 0, 1, 3)
        return float(np.abs(cyc).max()) if cyc.size else 0.0

    def generator_matrix(self, theta):
        """i theta_k C^k with C^k = C_k / hbar."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size != self.n:
            raise ShapeMismatch(f"theta has {theta.size} entries, algebra has {self.n}")
        adj = self.adjoint()
        z = sum(t * a for t, a in zip(theta, adj)) if self.n else np.zeros((0, 0))
        return 1j * np.asarray(z, dtype=complex) / self.hbar


def _check_poles(z):
    ev = np.linalg.eigvals(z) if z.size else np.array([])
    for lam in ev:
        m = np.round(lam.imag / (2 * np.pi))
        if m != 0 and abs(lam - 2j * np.pi * m) < 1e-8 * max(1.0, abs(lam)):
            raise SingularityAtPole(f"eigenvalue {lam:.6g} of i theta.C sits on a pole of z/(e^z - 1)")


def k_matrix(sc, theta):
    """K(theta) = Z (e^Z - I)^-1 with Z = i theta.C, continuous through ker Z.

    Computed as the inverse of the entire function (e^Z - I)/Z, read off the
    exponential of the block matrix [[Z, I], [0, 0]], so no eigenvector
    basis of Z is needed and the removable singularity at 0 takes care of
    itself.
    """
    z = sc.generator_matrix(theta)
    n = z.shape[0]
    if n == 0:
        return np.zeros((0, 0), complex)
    _check_poles(z)
    block = np.zeros((2 * n, 2 * n), complex)
    block[:n, :n] = z
    block[:n, n:] = np.eye(n)
    psi = mk.matrix_exp(block)[:n, n:]
    try:
        k = np.linalg.solve(psi, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise SingularityAtPole(str(exc)) from exc
    return k


def k_matrix_series(sc, theta, terms=40):
    """Bernoulli-series evaluation of the same K, valid for spectral radius < 2 pi.

    Raises SeriesDivergence outside the disc of convergence.
    """
    z = sc.generator_matrix(theta)
    n = z.shape[0]
    rad = max(np.abs(np.linalg.eigvals(z)), default=0.0)
    if rad >= 2 * np.pi:
        raise SeriesDivergence(f"spectral radius {rad:.4g} >= 2 pi")
    b = bernoulli(terms)  # scipy uses B_1 = -1/2
    out = np.zeros((n, n), complex)
    power = np.eye(n, dtype=complex)
    fact = 1.0
    for m in range(terms + 1):
        if m:
            power = power @ z
            fact *= m
        out += b[m] / fact * power
    return out


def lie_bound(D, K, S, rcond=DEFAULT_TOL.pinv_rcond):
    """D K^H S^+ K D^H, Hermitized."""
    d = _mat(D).astype(complex)
    k = _mat(K).astype(complex)
    s = _mat(S)
    if d.shape[1] != k.shape[0] or k.shape[1] != s.shape[0]:
        raise ShapeMismatch("incompatible shapes for D, K, S")
    return mk.hermitize(d @ k.conj().T @ _inverse(s, rcond, "generator") @ k @ d.conj().T)


# --------------------------------------------------------------------------
# comparison


def check_bound(R, bound, tol=DEFAULT_TOL.psd_tol, attain_tol=None, rank_deficient=False,
                inconclusive_scale=0.0):
    """Compare an error matrix with a bound in the PSD order.

    ``Attained`` when ``max |R - bound| <= attain_tol`` (``tol`` if not
    given); ``Violated`` when the smallest eigenvalue of ``R - bound`` is
    below ``-tol``, unless that deficit is within ``inconclusive_scale``
    (the discretization error of the measurement), which gives
    ``Inconclusive``. A bound built from a rank-deficient information
    matrix that is otherwise satisfied is reported as ``SubspaceBound``.
    """
    r = _mat(R)
    b = _mat(bound)
    if r.shape != b.shape:
        raise ShapeMismatch(f"R is {r.shape}, bound is {b.shape}")
    attain_tol = tol if attain_tol is None else attain_tol
    diff = mk.hermitize(r - b)
    min_eig = float(np.linalg.eigvalsh(diff)[0]) if diff.size else 0.0
    dist = float(np.abs(diff).max()) if diff.size else 0.0
    if dist <= attain_tol:
        verdict = Verdict.ATTAINED
    elif min_eig >= -tol:
        verdict = Verdict.SUBSPACE_BOUND if rank_deficient else Verdict.SATISFIED
    elif -min_eig <= inconclusive_scale:
        verdict = Verdict.INCONCLUSIVE
    else:
        verdict = Verdict.VIOLATED
    return BoundReport(b, r, min_eig, verdict, tol, attain_tol, dist)


def mean_ccr_check(q_ops, p_lds, rho, hbar=1.0):
    """M_ik = Tr rho [q_i, p_k]; equals i hbar delta_ik for unbiased q."""
    if isinstance(p_lds, LogDerivSet) and p_lds.kind != ALD:
        raise KindMismatch(f"expected antisymmetric derivatives, got {p_lds.kind}")
    rho = rho.matrix if hasattr(rho, "matrix") else np.asarray(rho)
    q = list(q_ops)
    p = list(p_lds)
    m = np.empty((len(q), len(p)), complex)
    for i, qi in enumerate(q):
        for k, pk in enumerate(p):
            m[i, k] = np.trace(rho @ mk.commutator(qi, pk))
    return m


def schwarz_chain(fam, q, p, target=None, povm=None, tol=DEFAULT_TOL.unbiased_tol):
    """The one-parameter chain R >= Tr rho (q - t)(q - t)^H >= |dt/dbeta|^2 / H.

    Returns ``(R, mid, rhs)``. ``R`` comes from ``povm`` when one is given
    (with labels as the estimates); otherwise the spectral measurement of a
    normal ``q`` is assumed and ``R = mid``.
    """
    if fam.kind != "complex" or fam.arity != 1:
        raise KindMismatch("schwarz_chain needs a one-parameter complex family")
    p = fam.point(p)
    rho = fam.matrix(p)
    q = mk.as_matrix(q)
    value = np.trace(q @ rho)
    if target is not None and abs(value - target) > tol:
        raise BiasedEstimator(f"<q> = {value:.6g} differs from target {target:.6g}")
    d = np.trace(q @ fam.derivative(p, 0, conj=False))
    h = fisher_rld(rld(fam, p)).entries[0, 0].real
    c = q - value * np.eye(q.shape[0])
    mid = float(np.trace(rho @ c @ c.conj().T).real)
    rhs = float(abs(d) ** 2 / h) if h > 0 else 0.0
    if mid < rhs - 1e-8:
        raise ArithmeticError(f"Schwarz chain broken: mid {mid} < rhs {rhs}")
    if povm is not None:
        from .povm import error_matrices

        r = float(error_matrices(povm, rho, np.array([value])).R[0, 0].real)
    else:
        r = mid
    return r, mid, rhs
