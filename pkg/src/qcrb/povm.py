"""Generalized measurements: representation, error matrices, sampling and
the built-in spectral, heterodyne and phase measurements.

Effects are stored either as full matrices or, for rank-one effects, as
kets (``effect_j = |k_j><k_j|``). The ket form keeps an 80x80 heterodyne
grid on a 30-level truncation at a few megabytes.
"""

from dataclasses import dataclass
import itertools
import logging

import numpy as np

from . import matkernel as mk
from .config import DEFAULT_TOL
from .errors import BinsTooFew, InvalidPovm, NotCommuting, TruncationInsufficient
from .states import COMPLEX, DensityOperator, GeneratorSet, coherent_ket

__all__ = [
    "Povm",
    "ErrorMatrices",
    "povm_validate",
    "state_completeness_residual",
    "probabilities",
    "moment_ops",
    "error_matrices",
    "mean_jacobian",
    "unbiasedness_check",
    "right_eigen_check",
    "eigen_residuals",
    "sample",
    "empirical_covariance",
    "covariance_standard_errors",
    "affine_unbiased_labels",
    "builtin_spectral",
    "builtin_heterodyne",
    "builtin_phase",
]

log = logging.getLogger(__name__)

SAMPLE_CHUNK = 1 << 16


class Povm:
    """A finite (possibly quadrature-weighted) resolution of the identity.

    Parameters
    ----------
    effects : (N, d, d) array_like, optional
    kets : (N, d) array_like, optional
        Rank-one effects ``|k_j><k_j|``; give exactly one of effects/kets.
    labels : (N,) or (N, m) array_like
        Estimate attached to each outcome, real or complex.
    weights : (N,) array_like, optional
        Quadrature weights; defaults to ones.
    tol_norm : float
        Completeness tolerance.
    """

    def __init__(self, effects=None, labels=None, weights=None, kets=None,
                 tol_norm=DEFAULT_TOL.norm_tol_finite, name="povm", projective=False):
        if (effects is None) == (kets is None):
            raise ValueError("give exactly one of effects or kets")
        if kets is not None:
            kets = np.asarray(kets, dtype=complex)
            if kets.ndim != 2:
                raise ValueError("kets must be (N, d)")
            n_out, self.dim = kets.shape
            self.kets = kets
            self._effects = None
        else:
            eff = np.asarray(effects, dtype=complex)
            if eff.ndim != 3 or eff.shape[1] != eff.shape[2]:
                raise ValueError("effects must be (N, d, d)")
            n_out, self.dim = eff.shape[0], eff.shape[1]
            self.kets = None
            self._effects = eff
        if labels is None:
            labels = np.arange(n_out, dtype=float)
        lab = np.asarray(labels)
        if lab.ndim == 1:
            lab = lab[:, None]
        if lab.shape[0] != n_out:
            raise ValueError("one label vector per effect required")
        if not np.all(np.isfinite(lab)):
            raise ValueError("labels must be finite")
        self.labels = lab
        self.weights = np.ones(n_out) if weights is None else np.asarray(weights, float)
        if self.weights.shape != (n_out,):
            raise ValueError("one weight per effect required")
        self.tol_norm = float(tol_norm)
        self.name = name
        self.projective = bool(projective)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def n_labels(self):
        return self.labels.shape[1]

    @property
    def complex_labels(self):
        return np.iscomplexobj(self.labels) and not np.allclose(self.labels.imag, 0)

    @property
    def effects(self):
        """Unweighted effects as an (N, d, d) array (materialized for kets)."""
        if self._effects is None:
            return np.einsum("ja,jb->jab", self.kets, self.kets.conj())
        return self._effects

    def weighted_sum(self, coeffs=None):
        """sum_j w_j c_j Pi_j for scalar coefficients ``c_j`` (default 1)."""
        c = self.weights if coeffs is None else self.weights * np.asarray(coeffs)
        if self.kets is not None:
            return (self.kets.T * c) @ self.kets.conj()
        return np.tensordot(c, self._effects, axes=1)

    def traces(self, op):
        """Tr(op Pi_j) for every effect (unweighted)."""
        op = np.asarray(op)
        if self.kets is not None:
            return np.einsum("ja,ab,jb->j", self.kets.conj(), op, self.kets)
        return np.einsum("jab,ba->j", self._effects, op)

    def relabel(self, labels, name=None):
        """Same effects with new labels (e.g. a function of the raw outcome)."""
        out = Povm(effects=self._effects, kets=self.kets, labels=labels, weights=self.weights,
                   tol_norm=self.tol_norm, name=name or self.name, projective=self.projective)
        return out

    def __repr__(self):
        return f"Povm({self.name!r}, outcomes={len(self)}, dim={self.dim}, labels={self.n_labels})"


@dataclass(frozen=True)
class ErrorMatrices:
    R: np.ndarray
    Q: np.ndarray
    Sigma: np.ndarray
    theta_hat: np.ndarray
    completeness_residual: float = 0.0


# --------------------------------------------------------------------------
# validation


def povm_validate(p, dim=None):
    """Return ``(ok, completeness_residual, worst_effect_min_eig)``.

    The residual is the spectral norm of ``sum_j w_j Pi_j - I``.
    """
    if dim is not None and dim != p.dim:
        return False, float("inf"), float("nan")
    total = p.weighted_sum()
    residual = float(np.linalg.norm(total - np.eye(p.dim), 2))
    if p.kets is not None:
        worst = 0.0  # rank-one effects are PSD by construction
    else:
        worst = min(float(np.linalg.eigvalsh(mk.hermitize(e))[0]) for e in p._effects)
    herm_ok = p.kets is not None or all(mk.is_hermitian(e) for e in p._effects)
    ok = residual <= p.tol_norm and worst >= -1e-10 and herm_ok and np.all(p.weights >= 0)
    return bool(ok), residual, worst


def state_completeness_residual(p, rho):
    """|| rho^1/2 (sum_j w_j Pi_j - I) rho^1/2 ||: the defect the state can see."""
    rho = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    w, v = np.linalg.eigh(mk.hermitize(rho))
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    defect = p.weighted_sum() - np.eye(p.dim)
    return float(np.linalg.norm(sq @ defect @ sq, 2))


def _require_valid(p, rho):
    ok, residual, worst = povm_validate(p)
    if ok:
        return residual
    if worst < -1e-10 or np.any(p.weights < 0):
        raise InvalidPovm(f"{p.name}: an effect is not PSD (min eig {worst:.2e})")
    sr = state_completeness_residual(p, rho)
    if sr > p.tol_norm:
        raise InvalidPovm(
            f"{p.name}: completeness residual {residual:.2e} (state-restricted {sr:.2e}) "
            f"exceeds {p.tol_norm:.1e}"
        )
    return sr


# --------------------------------------------------------------------------
# statistics


def probabilities(p, rho):
    """w_j Tr(rho Pi_j), real, unnormalized."""
    rho = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    return p.weights * p.traces(rho).real


def moment_ops(p):
    """First-moment operators ``q_i = sum_j w_j lambda_ji Pi_j`` and the
    second-moment operators ``sum_j w_j lambda_ji conj(lambda_jk) Pi_j``.
    """
    m = p.n_labels
    q = [p.weighted_sum(p.labels[:, i]) for i in range(m)]
    second = [[p.weighted_sum(p.labels[:, i] * np.conj(p.labels[:, k])) for k in range(m)]
              for i in range(m)]
    herm = not p.complex_labels
    return GeneratorSet.of(q, hermitian=herm) if _independent(q) else tuple(q), second


def _independent(ops):
    vec = np.array([o.ravel() for o in ops])
    s = np.linalg.svd(vec, compute_uv=False)
    return s[-1] > 1e-10 * max(s[0], 1e-300)


def error_matrices(p, rho, theta):
    """Total error R, operator-estimate error Q and Sigma = R - Q about ``theta``."""
    rho_m = rho.matrix if isinstance(rho, DensityOperator) else mk.as_matrix(rho)
    residual = _require_valid(p, rho_m)
    theta = np.atleast_1d(np.asarray(theta, dtype=complex))
    if theta.size != p.n_labels:
        raise ValueError(f"theta has {theta.size} entries, povm has {p.n_labels} labels")
    probs = probabilities(p, rho_m)
    dev = p.labels - theta[None, :]
    r = mk.hermitize((dev.T * probs) @ dev.conj())
    d = p.dim
    cent = [p.weighted_sum(p.labels[:, i]) - theta[i] * np.eye(d) for i in range(p.n_labels)]
    m = p.n_labels
    q = np.empty((m, m), complex)
    for i in range(m):
        for k in range(m):
            q[i, k] = np.trace(rho_m @ cent[i] @ cent[k].conj().T)
    q = mk.hermitize(q)
    theta_hat = (p.labels.T @ probs)
    if not p.complex_labels and np.allclose(theta.imag, 0):
        r, q, theta_hat = r.real, q.real, theta_hat.real
    return ErrorMatrices(r, q, r - q, theta_hat, residual)


def mean_jacobian(p, fam, point, conj=False):
    """d E[lambda_i] / d param_k from the exact derivative of the state.

    For complex families ``conj`` selects d / d beta_bar.
    """
    cols = []
    for k in range(fam.arity):
        dr = fam.derivative(point, k, conj=conj)
        dp = p.weights * p.traces(dr)
        cols.append(p.labels.T @ dp)
    jac = np.array(cols).T
    if fam.kind != COMPLEX and not p.complex_labels:
        jac = jac.real
    return jac


def unbiasedness_check(p, fam, points, target):
    """max over points of || E[lambda](point) - target(point) ||."""
    worst = 0.0
    for pt in points:
        rho = fam.matrix(pt)
        mean = p.labels.T @ probabilities(p, rho)
        t = np.atleast_1d(np.asarray(target(pt)))
        worst = max(worst, float(np.linalg.norm(mean - t)))
    return worst


def eigen_residuals(p, x_ops):
    """Per-effect ``max_k || x_k Pi_j - lambda_jk Pi_j || / || Pi_j ||``.

    Zero effects get residual 0.
    """
    ops = list(x_ops)
    if len(ops) != p.n_labels:
        raise ValueError(f"{len(ops)} operators but {p.n_labels} label components")
    out = np.zeros(len(p))
    if p.kets is not None:
        # || x |k><k| - l |k><k| || / || |k><k| || = || (x - l) k || / || k ||
        norms = np.linalg.norm(p.kets, axis=1)
        keep = norms > 0
        for kidx, x in enumerate(ops):
            resid = p.kets @ x.T - p.labels[:, kidx][:, None] * p.kets
            r = np.zeros(len(p))
            r[keep] = np.linalg.norm(resid[keep], axis=1) / norms[keep]
            np.maximum(out, r, out=out)
        return out
    for j, e in enumerate(p._effects):
        ne = np.linalg.norm(e, 2)
        if ne == 0:
            continue
        for kidx, x in enumerate(ops):
            out[j] = max(out[j], np.linalg.norm(x @ e - p.labels[j, kidx] * e, 2) / ne)
    return out


def right_eigen_check(p, x_ops, tol=None):
    """max_{j,k} || x_k Pi_j - lambda_jk Pi_j || / || Pi_j ||.

    ``tol`` is accepted for interface symmetry; the caller compares.
    """
    return float(eigen_residuals(p, x_ops).max(initial=0.0))


# --------------------------------------------------------------------------
# sampling


def sample(p, rho, n, seed, chunk=SAMPLE_CHUNK):
    """Draw ``n`` outcome indices i.i.d. from w_j Tr(rho Pi_j).

    Probabilities are clipped at zero and renormalized; the renormalization
    defect is logged. The stream is split into fixed-size chunks, each with
    its own generator spawned from ``(seed, chunk index)``, so the result
    does not depend on how chunks are scheduled. ``seed`` is an integer or
    a tuple of integers.
    """
    rho_m = rho.matrix if isinstance(rho, DensityOperator) else mk.as_matrix(rho)
    _require_valid(p, rho_m)
    probs = np.clip(probabilities(p, rho_m), 0.0, None)
    total = probs.sum()
    if total <= 0:
        raise InvalidPovm("outcome probabilities sum to zero")
    if abs(total - 1.0) > 1e-12:
        log.info("%s: renormalizing outcome probabilities (sum %.3e)", p.name, total)
    probs = probs / total
    entropy = [int(x) for x in np.atleast_1d(seed)]
    out = np.empty(int(n), dtype=np.int64)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    for c, start in enumerate(range(0, int(n), chunk)):
        stop = min(start + chunk, int(n))
        rng = np.random.default_rng(np.random.SeedSequence([*entropy, c]))
        u = rng.random(stop - start)
        out[start:stop] = np.searchsorted(cdf, u, side="right")
    np.minimum(out, len(probs) - 1, out=out)
    return out


def empirical_covariance(p, outcomes, theta):
    """(1/n) sum (lambda - theta)(lambda - theta)^H over sampled outcomes."""
    theta = np.atleast_1d(np.asarray(theta, dtype=complex))
    dev = p.labels[outcomes] - theta[None, :]
    cov = dev.T @ dev.conj() / len(outcomes)
    if not p.complex_labels and np.allclose(theta.imag, 0):
        cov = cov.real
    return cov


def covariance_standard_errors(p, rho, theta, n):
    """Exact standard errors of the entries of :func:`empirical_covariance`
    for ``n`` i.i.d. samples, separately for real and imaginary parts.
    """
    rho_m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    probs = np.clip(probabilities(p, rho_m), 0.0, None)
    probs = probs / probs.sum()
    theta = np.atleast_1d(np.asarray(theta, dtype=complex))
    dev = p.labels - theta[None, :]
    x = dev[:, :, None] * dev.conj()[:, None, :]
    se = []
    for part in (x.real, x.imag):
        mean = np.tensordot(probs, part, axes=1)
        var = np.tensordot(probs, part**2, axes=1) - mean**2
        se.append(np.sqrt(np.clip(var, 0.0, None) / n))
    return se[0], se[1]


def affine_unbiased_labels(p, fam, point, target_value):
    """Relabel ``p`` so its mean equals ``target_value`` to first order at ``point``.

    Real families: lambda' = A (lambda - m) + t with A = (dm/dalpha)^-1.
    Complex families: lambda' = A (lambda - m) + B conj(lambda - m) + t,
    chosen so that d E[lambda'] / d beta = I and d E[lambda'] / d beta_bar = 0.
    The number of label components must equal the family arity.
    """
    rho = fam.matrix(point)
    probs = probabilities(p, rho)
    mean = p.labels.T @ probs
    t = np.atleast_1d(np.asarray(target_value))
    dev = p.labels - mean[None, :]
    if fam.kind != COMPLEX:
        j = mean_jacobian(p, fam, point)
        a = np.linalg.inv(np.atleast_2d(j))
        new = dev @ a.T + t[None, :]
        if np.isrealobj(t) or np.allclose(np.imag(t), 0):
            new = new.real if np.allclose(new.imag if np.iscomplexobj(new) else 0, 0) else new
        return p.relabel(new)
    j1 = mean_jacobian(p, fam, point, conj=False)
    j2 = mean_jacobian(p, fam, point, conj=True)
    n = fam.arity
    # [A B] [[J1, J2], [conj(J2), conj(J1)]] = [I 0]
    big = np.block([[j1, j2], [j2.conj(), j1.conj()]])
    rhs = np.hstack([np.eye(n), np.zeros((n, n))])
    ab = np.linalg.solve(big.T, rhs.T).T
    a, b = ab[:, :n], ab[:, n:]
    new = dev @ a.T + dev.conj() @ b.T + t[None, :]
    return p.relabel(new.astype(complex))


# --------------------------------------------------------------------------
# built-in measurements


def builtin_spectral(s_ops, tol=DEFAULT_TOL.commute_tol):
    """Joint spectral measure of commuting Hermitian operators.

    Labels are the eigenvalue tuples; degenerate joint eigenspaces share
    one projector.
    """
    ops = [mk.check_hermitian(o, name="spectral operator") for o in s_ops]
    for a, b in itertools.combinations(ops, 2):
        if np.linalg.norm(mk.commutator(a, b)) > tol * max(1.0, np.linalg.norm(a) * np.linalg.norm(b)):
            raise NotCommuting("operators do not commute")
    d = ops[0].shape[0]
    # a generic combination separates joint eigenspaces
    rng = np.random.default_rng(12345)
    coeffs = 1.0 + rng.random(len(ops))
    _, v = np.linalg.eigh(mk.hermitize(sum(c * o for c, o in zip(coeffs, ops))))
    vals = np.array([[np.vdot(v[:, i], o @ v[:, i]).real for o in ops] for i in range(d)])
    groups = {}
    scale = max(1.0, max(np.abs(vals).max(), 0.0))
    for i, row in enumerate(vals):
        key = tuple(np.round(row / (1e-8 * scale)).astype(np.int64))
        groups.setdefault(key, []).append(i)
    effects, labels = [], []
    for idx in groups.values():
        vecs = v[:, idx]
        effects.append(vecs @ vecs.conj().T)
        labels.append(vals[idx].mean(axis=0))
    order = np.lexsort(np.array(labels).T[::-1])
    effects = np.array(effects)[order]
    labels = np.array(labels)[order]
    return Povm(effects=effects, labels=labels, name="spectral", projective=True)


def builtin_heterodyne(dim, radius, grid, max_residual=None):
    """Coherent-state measurement on a centred ``grid x grid`` midpoint lattice
    covering ``[-radius, radius]^2``, effects ``w |alpha><alpha|``,
    ``w = dRe dIm / pi``, labels ``alpha``.

    The completeness residual on the full truncated space grows with ``dim``
    for a fixed radius; it is reported by :func:`povm_validate`, and when
    ``max_residual`` is given a larger residual raises
    TruncationInsufficient.
    """
    if grid < 2 or radius <= 0:
        raise ValueError("need grid >= 2 and radius > 0")
    h = 2.0 * radius / grid
    x = -radius + (np.arange(grid) + 0.5) * h
    re, im = np.meshgrid(x, x, indexing="ij")
    alphas = (re + 1j * im).ravel()
    kets = np.array([coherent_ket(dim, a) for a in alphas])
    p = Povm(kets=kets, labels=alphas, weights=np.full(alphas.size, h * h / np.pi),
             tol_norm=DEFAULT_TOL.norm_tol_continuous, name="heterodyne")
    if max_residual is not None:
        _, residual, _ = povm_validate(p)
        if residual > max_residual:
            raise TruncationInsufficient(
                f"heterodyne grid radius {radius} leaves completeness residual {residual:.2e} on dim {dim}"
            )
    return p


def builtin_phase(dim, bins, min_ratio=4):
    """Covariant phase measurement with ``bins`` uniform phase bins on (-pi, pi].

    Effects are ``(1/bins) |e(l)><e(l)|`` with ``|e(l)> = sum_m e^{i m l}|m>``;
    completeness is exact because the discrete Fourier sums cancel for
    ``bins > dim - 1``.
    """
    if bins < min_ratio * dim:
        raise BinsTooFew(f"need bins >= {min_ratio} * dim = {min_ratio * dim}, got {bins}")
    dl = 2 * np.pi / bins
    lam = -np.pi + (np.arange(bins) + 0.5) * dl
    kets = np.exp(1j * np.outer(lam, np.arange(dim)))
    return Povm(kets=kets, labels=lam, weights=np.full(bins, dl / (2 * np.pi)),
                tol_norm=DEFAULT_TOL.norm_tol_finite, name="phase")
