"""Dense complex matrix primitives.

Everything here is a thin, checked layer over LAPACK (via numpy/scipy):
Hermitian eigendecomposition, PSD testing, the symmetrized Lyapunov solve
used for logarithmic derivatives, the matrix exponential and a Hermitian
pseudo-inverse with rank reporting.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .config import DEFAULT_TOL
from .errors import NoConvergence, NotHermitian

__all__ = [
    "EigenSystem",
    "as_matrix",
    "hermitize",
    "check_hermitian",
    "is_hermitian",
    "hermitian_eigen",
    "is_psd",
    "lyapunov_solve",
    "matrix_exp",
    "expm_derivative",
    "pinv",
    "commutator",
    "anticommutator",
]


def as_matrix(m):
    """Return ``m`` as a square complex ndarray (a copy is not forced)."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def hermitize(m):
    m = np.asarray(m)
    return 0.5 * (m + m.conj().T)


def commutator(a, b):
    return a @ b - b @ a


def anticommutator(a, b):
    return a @ b + b @ a


def is_hermitian(m, rtol=DEFAULT_TOL.hermitian_rtol):
    m = np.asarray(m)
    scale = max(np.linalg.norm(m), 1.0)
    return np.linalg.norm(m - m.conj().T) <= rtol * scale


def check_hermitian(m, rtol=DEFAULT_TOL.hermitian_rtol, name="matrix"):
    m = as_matrix(m)
    if not is_hermitian(m, rtol):
        dev = np.linalg.norm(m - m.conj().T)
        raise NotHermitian(f"{name} is not Hermitian (||m - m^H|| = {dev:.3g})")
    return m


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


def hermitian_eigen(m, rtol=DEFAULT_TOL.hermitian_rtol):
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Raises
    ------
    NotHermitian
        If ``||m - m^H|| > rtol * ||m||``.
    NoConvergence
        If LAPACK fails to converge.
    """
    m = check_hermitian(m, rtol)
    try:
        w, v = np.linalg.eigh(hermitize(m))
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return EigenSystem(w, v)


def is_psd(m, tol=DEFAULT_TOL.psd_tol):
    """Return ``(verdict, min_eig)`` with verdict ``min_eig >= -tol``."""
    w = hermitian_eigen(m).eigenvalues
    min_eig = float(w[0]) if w.size else 0.0
    return bool(min_eig >= -tol), min_eig


def lyapunov_solve(a, b, floor=None, full_output=False):
    """Solve ``a X + X a = 2 b`` for PSD ``a`` and Hermitian ``b``.

    The solve is done in the eigenbasis of ``a``; entry pairs whose
    eigenvalue sum is below ``floor`` are set to zero, which restricts the
    solution to the support of ``a``.

    Parameters
    ----------
    a : (d, d) array_like
        Hermitian positive semidefinite.
    b : (d, d) array_like
        Hermitian right-hand side.
    floor : float, optional
        Absolute threshold on ``lambda_i + lambda_j``. Defaults to
        ``1e-10 * max eigenvalue of a``.
    full_output : bool
        If True, also return a dict with the support residual, the full
        residual and the support rank.

    Returns
    -------
    X : ndarray
        Hermitian solution.
    info : dict, optional
    """
    es = hermitian_eigen(a)
    lam, u = es.eigenvalues, es.eigenvectors
    b = check_hermitian(b, name="b")
    if floor is None:
        floor = DEFAULT_TOL.support_floor * max(float(lam[-1]), 0.0)
        floor = max(floor, np.finfo(float).tiny)
    bt = u.conj().T @ b @ u
    denom = lam[:, None] + lam[None, :]
    keep = denom >= floor
    xt = np.zeros_like(bt)
    xt[keep] = 2.0 * bt[keep] / denom[keep]
    x = hermitize(u @ xt @ u.conj().T)
    if not full_output:
        return x
    r_tilde = denom * xt - 2.0 * bt
    info = {
        "support_residual": float(np.linalg.norm(np.where(keep, r_tilde, 0.0))),
        "residual": float(np.linalg.norm(a @ x + x @ a - 2.0 * b)),
        "support_rank": int(np.count_nonzero(lam >= floor / 2.0)),
    }
    return x, info


def matrix_exp(m):
    """Matrix exponential.

    Hermitian and anti-Hermitian inputs go through ``eigh`` (exact
    unitarity / positivity); everything else goes to scipy's
    scaling-and-squaring Pade implementation.
    """
    m = as_matrix(m)
    if is_hermitian(m, 1e-14):
        w, v = np.linalg.eigh(hermitize(m))
        return (v * np.exp(w)) @ v.conj().T
    if is_hermitian(1j * m, 1e-14):
        w, v = np.linalg.eigh(hermitize(1j * m))
        return (v * np.exp(-1j * w)) @ v.conj().T
    try:
        out = scipy.linalg.expm(m)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NoConvergence(str(exc)) from exc
    if not np.all(np.isfinite(out)):
        raise NoConvergence("matrix exponential overflowed")
    return out


def expm_derivative(m, e):
    """Return ``(exp(m), d/dt exp(m + t e) at t=0)``."""
    m = as_matrix(m)
    e = as_matrix(e)
    try:
        return scipy.linalg.expm_frechet(m, e, compute_expm=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NoConvergence(str(exc)) from exc


def pinv(m, tol=DEFAULT_TOL.pinv_rcond, full_output=False):
    """Moore-Penrose pseudo-inverse of a Hermitian matrix.

    Eigenvalues with magnitude below ``tol * max |eigenvalue|`` are treated
    as zero. With ``full_output`` the numerical rank is returned too.
    """
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    if m.size == 0:
        return (m.copy(), 0) if full_output else m.copy()
    w, v = np.linalg.eigh(hermitize(m))
    scale = np.max(np.abs(w))
    keep = np.abs(w) > tol * scale if scale > 0 else np.zeros_like(w, dtype=bool)
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    out = hermitize((v * inv_w) @ v.conj().T)
    if full_output:
        return out, int(np.count_nonzero(keep))
    return out
