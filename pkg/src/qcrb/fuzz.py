"""Randomized bound-validity sweep.

Each case draws a small complex-parametrized family, a random POVM and
random labels, corrects the labels affinely so the estimate is locally
unbiased for beta at the origin, and compares the exact error matrices
with the Helstrom bound (in the real coordinates 2 Re beta, Im beta) and
with the right bound.
"""

from dataclasses import dataclass

import numpy as np

from . import matkernel as mk
from .bounds import helstrom_bound, right_bound
from .logderiv import fisher_rld, fisher_sld, rld, sld
from .povm import Povm, affine_unbiased_labels, error_matrices, mean_jacobian
from .states import COMPLEX, CanonicalComplexFamily, DensityOperator, ParamPoint, StateFamily

__all__ = ["FuzzCase", "random_family", "random_povm", "near_optimal_povm", "fuzz_case", "run_fuzz"]


@dataclass(frozen=True)
class FuzzCase:
    index: int
    dim: int
    arity: int
    family: str
    outcomes: int
    helstrom_min_eig: float
    right_min_eig: float
    bias: float
    sld_residual: float
    rld_residual: float
    attempts: int


def _ginibre(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_family(rng, dim, arity, canonical=False):
    """A random complex family through a full-rank state at beta = 0.

    ``canonical=False``: rho = M / Tr M with M = A A^H and
    A = A0 + sum_k (beta_k A_k + conj(beta_k) B_k), with exact derivatives.
    ``canonical=True``: the canonical form with random non-normal generators.
    """
    if canonical:
        a0 = _ginibre(rng, dim, dim)
        rho0 = a0 @ a0.conj().T
        rho0 /= np.trace(rho0).real
        gens = [0.5 * _ginibre(rng, dim, dim) for _ in range(arity)]
        return CanonicalComplexFamily(DensityOperator(mk.hermitize(rho0)), gens)
    a0 = _ginibre(rng, dim, dim)
    ak = [_ginibre(rng, dim, dim) for _ in range(arity)]
    bk = [_ginibre(rng, dim, dim) for _ in range(arity)]

    def amat(beta):
        return a0 + sum(b * x + np.conj(b) * y for b, x, y in zip(beta, ak, bk))

    def func(beta):
        a = amat(beta)
        m = a @ a.conj().T
        return m / np.trace(m).real

    def dfunc(beta, k, conj):
        a = amat(beta)
        m = a @ a.conj().T
        t = np.trace(m).real
        # d M / d beta_bar_k
        dm = bk[k] @ a.conj().T + a @ ak[k].conj().T
        d_bar = dm / t - m * np.trace(dm) / t**2
        return d_bar if conj else d_bar.conj().T

    return StateFamily(func, arity, COMPLEX, dfunc, metadata={"form": "random_quadratic"})


def random_povm(rng, dim, outcomes, arity, rank=1):
    """Effects S^-1/2 G_j S^-1/2 from random PSD G_j, complex labels."""
    g = []
    for _ in range(outcomes):
        b = _ginibre(rng, dim, rank)
        g.append(b @ b.conj().T)
    s = sum(g)
    w, v = np.linalg.eigh(mk.hermitize(s))
    s_inv_half = (v / np.sqrt(w)) @ v.conj().T
    effects = np.array([mk.hermitize(s_inv_half @ x @ s_inv_half) for x in g])
    labels = _ginibre(rng, outcomes, arity)
    return Povm(effects=effects, labels=labels, name="random")


def near_optimal_povm(rng, fam, point, outcomes, arity, eps):
    """Eigenprojectors of a random combination of the SLDs, mixed with a
    weight-``eps`` random POVM so every label direction stays estimable.
    """
    g = sld(fam, point).ops
    c = rng.standard_normal(len(g))
    _, v = np.linalg.eigh(mk.hermitize(sum(a * x for a, x in zip(c, g))))
    proj = np.einsum("ai,bi->iab", v, v.conj())
    rand = random_povm(rng, v.shape[0], outcomes, arity)
    effects = np.concatenate([(1 - eps) * proj, eps * rand.effects])
    labels = _ginibre(rng, effects.shape[0], arity)
    return Povm(effects=effects, labels=labels, name="near_optimal")


def _real_view(labels):
    # beta = gamma / 2 + i theta  ->  (gamma, theta) = (2 Re beta, Im beta)
    return np.hstack([2.0 * labels.real, labels.imag])


def fuzz_case(rng, dim, arity, canonical=False, near_optimal=False, max_cond=1e8):
    """One (family, POVM) pair. Returns None when the draw is ill-conditioned."""
    fam = random_family(rng, dim, arity, canonical)
    origin = ParamPoint.complex(np.zeros(arity))
    rho = fam.matrix(origin)
    if np.linalg.eigvalsh(rho)[0] < 1e-6:
        return None
    outcomes = int(rng.integers(2 * arity * dim // 2 + 2, 3 * dim + 3))
    if near_optimal:
        p = near_optimal_povm(rng, fam, origin, outcomes, arity, eps=10.0 ** rng.uniform(-3, -1))
    else:
        p = random_povm(rng, dim, outcomes, arity, rank=int(rng.integers(1, 3)))
    j1 = mean_jacobian(p, fam, origin)
    j2 = mean_jacobian(p, fam, origin, conj=True)
    if np.linalg.cond(np.block([[j1, j2], [j2.conj(), j1.conj()]])) > max_cond:
        return None
    p = affine_unbiased_labels(p, fam, origin, np.zeros(arity, complex))
    d1 = mean_jacobian(p, fam, origin)
    d2 = mean_jacobian(p, fam, origin, conj=True)
    bias = float(max(np.abs(d1 - np.eye(arity)).max(), np.abs(d2).max(),
                     np.abs(p.labels.T @ (p.weights * p.traces(rho).real)).max()))

    # right bound on the complex estimate of beta
    h_ld = rld(fam, origin)
    h = fisher_rld(h_ld).entries
    if np.linalg.cond(h) > max_cond:
        return None
    r = error_matrices(p, rho, np.zeros(arity, complex)).R
    rb = right_bound(d1, h)
    right_min = float(np.linalg.eigvalsh(mk.hermitize(r - rb))[0])

    # Helstrom bound on the real estimate of (gamma, theta)
    g_ld = sld(fam, origin)
    g = fisher_sld(g_ld).entries
    if np.linalg.cond(g) > max_cond:
        return None
    pr = p.relabel(_real_view(p.labels))
    rr = error_matrices(pr, rho, np.zeros(2 * arity)).R
    dr = mean_jacobian_real(pr, fam, origin)
    hb = helstrom_bound(dr, g)
    hel_min = float(np.linalg.eigvalsh(mk.hermitize(rr - hb))[0])
    kind = ("canonical" if canonical else "quadratic") + ("+near_optimal" if near_optimal else "")
    return (dim, arity, kind, len(p), hel_min, right_min, bias,
            float(g_ld.residuals.max()), float(h_ld.residuals.max()))


def mean_jacobian_real(p, fam, point):
    """d E[lambda] / d (gamma_1..n, theta_1..n)."""
    cols = []
    for d in fam.real_coordinate_derivatives(point):
        cols.append(p.labels.T @ (p.weights * p.traces(d)))
    return np.array(cols).T.real


def run_fuzz(n_cases=100, seed=0, max_dim=6, max_arity=2, canonical_every=4, near_optimal_every=3,
             max_attempts=20):
    """Run ``n_cases`` valid cases; ill-conditioned draws are redrawn from
    the next substream of the same case index, so the sweep is reproducible.
    """
    out = []
    for i in range(n_cases):
        for attempt in range(max_attempts):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), i, attempt]))
            dim = int(rng.integers(2, max_dim + 1))
            arity = int(rng.integers(1, max_arity + 1))
            canonical = canonical_every > 0 and i % canonical_every == canonical_every - 1
            near = near_optimal_every > 0 and i % near_optimal_every == 0
            res = fuzz_case(rng, dim, arity, canonical, near)
            if res is not None:
                out.append(FuzzCase(i, *res, attempt + 1))
                break
        else:
            raise RuntimeError(f"fuzz case {i}: no well-conditioned draw in {max_attempts} attempts")
    return out
