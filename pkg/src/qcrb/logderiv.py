"""Symmetric, right and antisymmetric logarithmic derivatives and the
information matrices built from them.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np

from . import matkernel as mk
from .config import DEFAULT_TOL
from .errors import DegenerateSpectrum, KindMismatch, SupportMismatchWarning
from .states import COMPLEX, REAL, DensityOperator, GeneratorSet

__all__ = [
    "LogDerivSet",
    "FisherMatrix",
    "sld",
    "sld_from_derivatives",
    "rld",
    "rld_from_derivatives",
    "ald",
    "ald_from_derivatives",
    "fisher_sld",
    "fisher_rld",
    "generator_cov",
]

SLD, RLD, ALD = "SLD", "RLD", "ALD"


@dataclass(frozen=True)
class LogDerivSet:
    kind: str
    ops: tuple
    residuals: np.ndarray
    means: np.ndarray
    rho: np.ndarray = field(repr=False, default=None)
    support_residuals: np.ndarray = None

    def __len__(self):
        return len(self.ops)

    def __getitem__(self, k):
        return self.ops[k]


@dataclass(frozen=True)
class FisherMatrix:
    """An information matrix: symmetric (G), right (H) or generator covariance (S)."""

    kind: str
    entries: np.ndarray
    at: object = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    @property
    def shape(self):
        return self.entries.shape


def _rho_matrix(rho):
    return rho.matrix if isinstance(rho, DensityOperator) else mk.as_matrix(rho)


# --------------------------------------------------------------------------
# symmetric


def sld_from_derivatives(rho, drhos, floor=None):
    """SLDs from a state and its coordinate derivatives."""
    rho = _rho_matrix(rho)
    ops, res, sres, means = [], [], [], []
    for d in drhos:
        g, info = mk.lyapunov_solve(rho, mk.hermitize(d), floor=floor, full_output=True)
        ops.append(g)
        res.append(info["residual"])
        sres.append(info["support_residual"])
        means.append(np.trace(rho @ g))
    return LogDerivSet(SLD, tuple(ops), np.array(res), np.array(means), rho, np.array(sres))


def sld(fam, p, floor=None):
    """Symmetric logarithmic derivatives ``g rho + rho g = 2 d rho``.

    For complex families the real coordinates ``(gamma_1..n, theta_1..n)``
    are used, giving ``2n`` operators.
    """
    p = fam.point(p)
    rho = fam.matrix(p)
    return sld_from_derivatives(rho, fam.real_coordinate_derivatives(p), floor)


# --------------------------------------------------------------------------
# right


def rld_from_derivatives(rho, dbar_rhos, tol=DEFAULT_TOL.pinv_rcond,
                         support_tol=DEFAULT_TOL.residual_tol):
    """Right logarithmic derivatives ``rho h = d rho / d beta_bar``.

    Solved as ``h = pinv(rho) d``. Components of ``d`` outside the range of
    ``rho`` cannot be represented; they show up in ``residuals`` and trigger
    a :class:`SupportMismatchWarning` above ``support_tol``.
    """
    rho = _rho_matrix(rho)
    rinv, _ = mk.pinv(rho, tol, full_output=True)
    proj = rho @ rinv
    ops, res, sres, means = [], [], [], []
    for d in dbar_rhos:
        h = rinv @ d
        ops.append(h)
        r = rho @ h - d
        res.append(float(np.linalg.norm(r)))
        sres.append(float(np.linalg.norm(proj @ r)))
        means.append(np.trace(h @ rho))
    res = np.array(res)
    if np.any(res > support_tol * max(1.0, max(np.linalg.norm(d) for d in dbar_rhos))):
        warnings.warn(
            f"derivative leaves the support of rho (residual {res.max():.2e}); "
            "support-restricted solution returned",
            SupportMismatchWarning,
            stacklevel=2,
        )
    return LogDerivSet(RLD, tuple(ops), res, np.array(means), rho, np.array(sres))


def rld(fam, p, tol=DEFAULT_TOL.pinv_rcond):
    if fam.kind != COMPLEX:
        raise KindMismatch("right logarithmic derivatives need a complex family")
    p = fam.point(p)
    rho = fam.matrix(p)
    dbar = [fam.derivative(p, k, conj=True) for k in range(fam.arity)]
    return rld_from_derivatives(rho, dbar, tol)


# --------------------------------------------------------------------------
# antisymmetric


def ald_from_derivatives(rho, drhos, hbar=1.0, gap_floor=None):
    """Hermitian ``p`` with ``[rho, p] = (hbar / i) d rho`` and ``Tr rho p = 0``.

    The equation fixes ``p`` only up to operators commuting with ``rho``.
    The block on each eigenspace of ``rho`` is set to zero, which gives zero
    mean and the smallest ``Tr rho p^2`` among all solutions.
    """
    rho = _rho_matrix(rho)
    es = mk.hermitian_eigen(rho)
    lam, u = es.eigenvalues, es.eigenvectors
    if gap_floor is None:
        gap_floor = DEFAULT_TOL.ald_gap_floor * max(float(np.max(np.abs(lam))), 1e-300)
    gaps = lam[:, None] - lam[None, :]
    solvable = np.abs(gaps) >= gap_floor
    ops, res, means = [], [], []
    for d in drhos:
        dt = u.conj().T @ mk.hermitize(d) @ u
        rhs = (hbar / 1j) * dt
        blocked = np.abs(np.where(solvable, 0.0, rhs))
        scale = max(np.linalg.norm(rhs), 1.0)
        if blocked.max(initial=0.0) > 1e3 * gap_floor * scale:
            raise DegenerateSpectrum(
                f"derivative has weight {blocked.max():.2e} inside a degenerate eigenspace of rho"
            )
        pt = np.zeros_like(rhs)
        pt[solvable] = rhs[solvable] / gaps[solvable]
        pmat = mk.hermitize(u @ pt @ u.conj().T)
        ops.append(pmat)
        res.append(float(np.linalg.norm(mk.commutator(rho, pmat) - (hbar / 1j) * d)))
        means.append(np.trace(rho @ pmat))
    return LogDerivSet(ALD, tuple(ops), np.array(res), np.array(means), rho)


def ald(fam, p, hbar=1.0, gap_floor=None):
    if fam.kind != REAL:
        raise KindMismatch("antisymmetric logarithmic derivatives need a real family")
    p = fam.point(p)
    return ald_from_derivatives(fam.matrix(p), fam.real_coordinate_derivatives(p), hbar, gap_floor)


# --------------------------------------------------------------------------
# information matrices


def fisher_sld(lds, rho=None, at=None):
    """G_ik = Re Tr rho g_i g_k (the symmetrized second moment)."""
    if lds.kind != SLD:
        raise KindMismatch(f"expected SLDs, got {lds.kind}")
    rho = lds.rho if rho is None else _rho_matrix(rho)
    n = len(lds)
    g = np.empty((n, n))
    for i in range(n):
        rg = rho @ lds.ops[i]
        for k in range(i, n):
            g[i, k] = g[k, i] = np.trace(rg @ lds.ops[k]).real
    return FisherMatrix("G", g, at)


def fisher_rld(lds, rho=None, at=None):
    """H_kl = Tr h_k h_l^H rho."""
    if lds.kind != RLD:
        raise KindMismatch(f"expected RLDs, got {lds.kind}")
    rho = lds.rho if rho is None else _rho_matrix(rho)
    n = len(lds)
    h = np.empty((n, n), complex)
    for k in range(n):
        for l in range(n):
            h[k, l] = np.trace(lds.ops[k] @ lds.ops[l].conj().T @ rho)
    return FisherMatrix("H", mk.hermitize(h), at)


def generator_cov(gens, rho, at=None):
    """S_ik = Tr rho (x_i - mu_i)(x_k - mu_k)^H."""
    rho = _rho_matrix(rho)
    ops = gens.ops if isinstance(gens, (GeneratorSet, LogDerivSet)) else tuple(gens)
    d = rho.shape[0]
    cent = [x - np.trace(rho @ x) * np.eye(d) for x in ops]
    n = len(cent)
    s = np.empty((n, n), complex)
    for i in range(n):
        for k in range(n):
            s[i, k] = np.trace(rho @ cent[i] @ cent[k].conj().T)
    s = mk.hermitize(s)
    if np.allclose(s.imag, 0.0, atol=1e-14):
        s = s.real
    return FisherMatrix("S", s, at)
