"""Scenario configs, the pipeline that runs them, and self-validating reports.

A scenario is one JSON document naming a family, a measurement, a grid of
parameter points, the bounds to compare and the audits to run. The report
is JSON too; every matrix carries the invariants it claims (Hermitian,
PSD) so :func:`verify_report` can check a report without rerunning it.
"""

import copy
import csv
import datetime
import io
import json
import logging
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import matkernel as mk
from .audit import regularity_check, theorem1_audit, theorem2_audit, theorem3_audit
from .bounds import (
    StructureConstants,
    Verdict,
    check_bound,
    heisenberg_bound,
    helstrom_bound,
    imaginary_part_jacobian,
    k_matrix,
    k_matrix_series,
    lie_bound,
    right_bound,
)
from .config import DEFAULT_TOL, Tolerances
from .errors import ConfigInvalid, DegenerateSpectrum, QcrbError
from .fuzz import run_fuzz
from .logderiv import ald_from_derivatives, fisher_rld, fisher_sld, generator_cov, rld, sld
from .povm import (
    Povm,
    affine_unbiased_labels,
    builtin_heterodyne,
    builtin_phase,
    builtin_spectral,
    covariance_standard_errors,
    empirical_covariance,
    error_matrices,
    mean_jacobian,
    sample,
)
from .states import (
    COMPLEX,
    REAL,
    CanonicalComplexFamily,
    CanonicalRealFamily,
    DensityOperator,
    ParamPoint,
    UnitaryShiftFamily,
    coherent_state,
    fock_ops,
    fock_state,
    pauli,
    thermal_state,
)

__all__ = [
    "load_config",
    "validate_config",
    "list_scenarios",
    "find_scenario",
    "run_scenario",
    "verify_report",
    "report_to_json",
    "report_to_csv",
    "strip_timestamp",
    "encode_matrix",
    "decode_matrix",
]

log = logging.getLogger(__name__)

FAMILY_TYPES = ("canonical_real", "canonical_complex", "unitary_shift")
GENERATOR_TYPES = ("fock_a", "fock_adag", "fock_n", "pauli", "spin", "explicit")
STATE_TYPES = ("vacuum", "fock", "coherent", "thermal", "diag", "explicit")
POVM_TYPES = ("spectral", "heterodyne", "phase", "explicit")
BOUND_TYPES = ("helstrom", "right", "heisenberg", "lie")
AUDIT_TYPES = ("theorem1", "theorem2", "theorem3", "regularity")
TARGET_TYPES = ("log_gradient", "parameter")
KINDS = ("pipeline", "fuzz")
TIMESTAMP_KEY = "generated_at"
MC_Z = 5.0


# --------------------------------------------------------------------------
# matrix encoding


def encode_matrix(m, hermitian=False, psd=False):
    """Row-major ``[re, im]`` pairs with the invariants the matrix claims."""
    a = np.atleast_2d(np.asarray(m, dtype=complex))
    data = [[[float(z.real), float(z.imag)] for z in row] for row in a]
    return {"type": "matrix", "shape": list(a.shape), "data": data,
            "hermitian": bool(hermitian), "psd": bool(psd)}


def decode_matrix(obj):
    if isinstance(obj, dict):
        obj = obj["data"]
    a = np.asarray(obj, dtype=float)
    if a.ndim != 3 or a.shape[-1] != 2:
        raise ValueError("matrix must be rows of [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def _encode_vector(v):
    return [[float(np.real(z)), float(np.imag(z))] for z in np.atleast_1d(v)]


def _f(x):
    return None if x is None else float(x)


# --------------------------------------------------------------------------
# config loading and validation


def load_config(path):
    """Read a config file; JSON syntax errors become ConfigInvalid with a line."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid([f"line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from exc


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)


def _complex_of(x):
    if _is_number(x):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(_is_number(v) for v in x):
        return complex(x[0], x[1])
    raise ValueError(f"expected a number or [re, im], got {x!r}")


def _check_matrix(obj, dim, where, diags, hermitian=False, density=False):
    try:
        m = decode_matrix(obj)
    except (ValueError, TypeError, KeyError) as exc:
        diags.append(f"{where}: {exc}")
        return None
    if m.shape != (dim, dim):
        diags.append(f"{where}: shape {m.shape[0]}x{m.shape[1]} does not match dim {dim}")
        return None
    if (hermitian or density) and not mk.is_hermitian(m):
        diags.append(f"{where}: matrix is not Hermitian")
        return None
    if density:
        w = np.linalg.eigvalsh(mk.hermitize(m))
        if w[0] < -1e-10:
            diags.append(f"{where}: matrix is not positive semidefinite (min eigenvalue {w[0]:.3g})")
        if abs(np.trace(m).real - 1) > 1e-10:
            diags.append(f"{where}: trace is {np.trace(m).real:.12g}, expected 1")
    return m


def _validate_generators(gens, dim, need_hermitian, diags):
    if not isinstance(gens, list) or not gens:
        diags.append("family.generators: must be a non-empty list")
        return
    for i, g in enumerate(gens):
        where = f"family.generators[{i}]"
        if not isinstance(g, dict) or g.get("type") not in GENERATOR_TYPES:
            diags.append(f"{where}.type: must be one of {', '.join(GENERATOR_TYPES)}")
            continue
        t = g["type"]
        if "scale" in g and not _is_number(g["scale"]):
            diags.append(f"{where}.scale: must be a number")
        if t in ("pauli", "spin"):
            if dim != 2:
                diags.append(f"{where}: {t} generators need dim 2")
            if g.get("axis") not in ("x", "y", "z"):
                diags.append(f"{where}.axis: must be x, y or z")
        if t == "fock_adag" and need_hermitian:
            diags.append(f"{where}: this family needs Hermitian generators")
        if t == "fock_a" and need_hermitian:
            diags.append(f"{where}: this family needs Hermitian generators")
        if t == "explicit":
            _check_matrix(g.get("matrix"), dim, f"{where}.matrix", diags, hermitian=need_hermitian)


def _validate_state(spec, dim, diags):
    where = "family.rho0"
    if not isinstance(spec, dict) or spec.get("type") not in STATE_TYPES:
        diags.append(f"{where}.type: must be one of {', '.join(STATE_TYPES)}")
        return
    t = spec["type"]
    if t == "fock":
        n = spec.get("n")
        if not isinstance(n, int) or isinstance(n, bool) or not 0 <= n < dim:
            diags.append(f"{where}.n: must be an integer in [0, dim)")
    elif t == "coherent":
        try:
            _complex_of(spec.get("alpha"))
        except ValueError as exc:
            diags.append(f"{where}.alpha: {exc}")
    elif t == "thermal":
        nbar = spec.get("nbar")
        if not _is_number(nbar) or nbar <= 0:
            diags.append(f"{where}.nbar: must be a positive number")
    elif t == "diag":
        vals = spec.get("values")
        if (not isinstance(vals, list) or len(vals) != dim or not all(_is_number(v) for v in vals)):
            diags.append(f"{where}.values: must be {dim} numbers")
        elif min(vals) < 0 or abs(sum(vals) - 1) > 1e-10:
            diags.append(f"{where}.values: must be non-negative and sum to 1")
    elif t == "explicit":
        _check_matrix(spec.get("matrix"), dim, f"{where}.matrix", diags, density=True)


def _validate_points(points, kind, arity, diags):
    if not isinstance(points, list) or not points:
        diags.append("points: must be a non-empty list")
        return
    for i, p in enumerate(points):
        where = f"points[{i}]"
        if not isinstance(p, list) or len(p) != arity:
            diags.append(f"{where}: must list {arity} coordinate(s)")
            continue
        for v in p:
            if kind == COMPLEX:
                try:
                    _complex_of(v)
                except ValueError as exc:
                    diags.append(f"{where}: {exc}")
            elif not _is_number(v):
                diags.append(f"{where}: coordinates must be real numbers")


def _validate_povm(spec, dim, diags):
    if spec is None:
        return
    if not isinstance(spec, dict) or spec.get("type") not in POVM_TYPES:
        diags.append(f"povm.type: must be one of {', '.join(POVM_TYPES)}")
        return
    t = spec["type"]
    if t == "heterodyne":
        if not _is_number(spec.get("radius")) or spec["radius"] <= 0:
            diags.append("povm.radius: must be a positive number")
        g = spec.get("grid")
        if not isinstance(g, int) or isinstance(g, bool) or g < 2:
            diags.append("povm.grid: must be an integer >= 2")
    elif t == "phase":
        b = spec.get("bins")
        if not isinstance(b, int) or isinstance(b, bool) or b < 4 * dim:
            diags.append(f"povm.bins: must be an integer >= 4 * dim = {4 * dim}")
    elif t == "explicit":
        effects = spec.get("effects")
        labels = spec.get("labels")
        if not isinstance(effects, list) or not effects:
            diags.append("povm.effects: must be a non-empty list of matrices")
            return
        for i, e in enumerate(effects):
            _check_matrix(e, dim, f"povm.effects[{i}]", diags, hermitian=True)
        if not isinstance(labels, list) or len(labels) != len(effects):
            diags.append("povm.labels: need one label vector per effect")
        w = spec.get("weights")
        if w is not None and (not isinstance(w, list) or len(w) != len(effects)
                              or not all(_is_number(x) and x >= 0 for x in w)):
            diags.append("povm.weights: need one non-negative number per effect")


def validate_config(cfg):
    """Parse and invariant checks only. Returns a list of diagnostics
    (empty when valid). ``cfg`` is a dict or a path.
    """
    if not isinstance(cfg, dict):
        try:
            cfg = load_config(cfg)
        except ConfigInvalid as exc:
            return list(exc.diagnostics)
        except OSError as exc:
            return [f"config: cannot read ({exc})"]
    diags = []
    if not isinstance(cfg, dict):
        return ["config: top level must be a JSON object"]
    name = cfg.get("name")
    if not isinstance(name, str) or not name.strip():
        diags.append("name: must be a non-empty string")
    kind = cfg.get("kind", "pipeline")
    if kind not in KINDS:
        diags.append(f"kind: must be one of {', '.join(KINDS)}")
    dim = cfg.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 2:
        diags.append("dim: dim >= 2 required")
        dim = None
    hbar = cfg.get("hbar", 1.0)
    if not _is_number(hbar) or hbar <= 0:
        diags.append("hbar: must be a positive number")
    tol = cfg.get("tolerances", {})
    if not isinstance(tol, dict):
        diags.append("tolerances: must be an object")
    else:
        try:
            DEFAULT_TOL.with_overrides(tol)
        except (KeyError, TypeError, ValueError) as exc:
            diags.append(f"tolerances: {exc}")
    mc = cfg.get("mc")
    if mc is not None:
        if not isinstance(mc, dict):
            diags.append("mc: must be an object")
        else:
            s = mc.get("samples")
            if not isinstance(s, int) or isinstance(s, bool) or s <= 0:
                diags.append("mc.samples: must be a positive integer")
            sd = mc.get("seed")
            if not isinstance(sd, int) or isinstance(sd, bool) or sd < 0:
                diags.append("mc.seed: must be a non-negative integer")
    if kind == "fuzz":
        fz = cfg.get("fuzz", {})
        if not isinstance(fz, dict):
            diags.append("fuzz: must be an object")
        else:
            for key, lo in (("cases", 1), ("seed", 0), ("max_arity", 1)):
                v = fz.get(key, lo)
                if not isinstance(v, int) or isinstance(v, bool) or v < lo:
                    diags.append(f"fuzz.{key}: must be an integer >= {lo}")
        return diags
    if dim is None:
        return diags
    fam = cfg.get("family")
    if not isinstance(fam, dict) or fam.get("type") not in FAMILY_TYPES:
        diags.append(f"family.type: must be one of {', '.join(FAMILY_TYPES)}")
        return diags
    ftype = fam["type"]
    _validate_generators(fam.get("generators"), dim, ftype != "canonical_complex", diags)
    _validate_state(fam.get("rho0"), dim, diags)
    arity = len(fam.get("generators") or [])
    kind_pts = COMPLEX if ftype == "canonical_complex" else REAL
    _validate_points(cfg.get("points"), kind_pts, arity, diags)
    _validate_povm(cfg.get("povm"), dim, diags)
    target = cfg.get("target", "parameter")
    if target not in TARGET_TYPES:
        diags.append(f"target: must be one of {', '.join(TARGET_TYPES)}")
    if target == "log_gradient" and ftype == "unitary_shift":
        diags.append("target: log_gradient needs a canonical family")
    corr = cfg.get("correction", "none")
    if corr not in ("none", "affine_local"):
        diags.append("correction: must be none or affine_local")
    for key, allowed in (("bounds", BOUND_TYPES), ("audits", AUDIT_TYPES)):
        val = cfg.get(key, [])
        if not isinstance(val, list) or any(v not in allowed for v in val):
            diags.append(f"{key}: entries must be among {', '.join(allowed)}")
    if "lie" in cfg.get("bounds", []) and ftype != "unitary_shift":
        diags.append("bounds: lie needs a unitary_shift family")
    if "heisenberg" in cfg.get("bounds", []) and ftype != "unitary_shift":
        diags.append("bounds: heisenberg needs a unitary_shift family")
    if "helstrom" in cfg.get("bounds", []) and ftype == "canonical_complex":
        diags.append("bounds: helstrom needs a real family")
    if "theorem1" in cfg.get("audits", []) and ftype != "canonical_real":
        diags.append("audits: theorem1 needs a canonical_real family")
    if "theorem3" in cfg.get("audits", []) and ftype != "canonical_complex":
        diags.append("audits: theorem3 needs a canonical_complex family")
    if cfg.get("audits") and cfg.get("povm") is None:
        diags.append("audits: need a povm")
    if mc is not None and cfg.get("povm") is None:
        diags.append("mc: needs a povm")
    return diags


# --------------------------------------------------------------------------
# scenario registry


def _builtin_dir():
    return resources.files("qcrb") / "scenarios"


def _scan(directory):
    out = []
    for path in sorted(Path(directory).glob("*.json")):
        cfg = load_config(path)
        out.append((cfg.get("name", path.stem), cfg.get("description", ""), path))
    return out


def list_scenarios(custom_dir=None):
    """``[(name, description, path)]`` for the shipped scenarios plus any
    in ``custom_dir``. Duplicate names raise ConfigInvalid.
    """
    with resources.as_file(_builtin_dir()) as builtin:
        entries = _scan(builtin)
    if custom_dir is not None:
        entries += _scan(custom_dir)
    seen = {}
    for name, _, path in entries:
        if name in seen:
            raise ConfigInvalid([f"duplicate scenario name {name!r} ({seen[name]} and {path})"])
        seen[name] = path
    return entries


def find_scenario(name_or_path, custom_dir=None):
    """A path if it exists on disk, otherwise a scenario name."""
    p = Path(name_or_path)
    if p.exists():
        return p
    for name, _, path in list_scenarios(custom_dir):
        if name == name_or_path:
            return path
    raise ConfigInvalid([f"config: no file or scenario named {name_or_path!r}"])


# --------------------------------------------------------------------------
# building objects from a config


def _generator(spec, dim, hbar):
    t = spec["type"]
    a, ad, n = fock_ops(dim) if t.startswith("fock") else (None, None, None)
    if t == "fock_a":
        m = a
    elif t == "fock_adag":
        m = ad
    elif t == "fock_n":
        m = n
    elif t in ("pauli", "spin"):
        m = dict(zip("xyz", pauli()))[spec["axis"]]
        if t == "spin":
            m = 0.5 * hbar * m
    else:
        m = decode_matrix(spec["matrix"])
    return spec.get("scale", 1.0) * m


def _state(spec, dim):
    t = spec["type"]
    if t == "vacuum":
        return fock_state(dim, 0)
    if t == "fock":
        return fock_state(dim, spec["n"])
    if t == "coherent":
        return coherent_state(dim, _complex_of(spec["alpha"]))
    if t == "thermal":
        return thermal_state(dim, float(spec["nbar"]))
    if t == "diag":
        return DensityOperator(np.diag(np.asarray(spec["values"], dtype=complex)))
    return DensityOperator(decode_matrix(spec["matrix"]))


def _family(cfg):
    spec = cfg["family"]
    dim = cfg["dim"]
    hbar = float(cfg.get("hbar", 1.0))
    gens = [_generator(g, dim, hbar) for g in spec["generators"]]
    rho0 = _state(spec["rho0"], dim)
    cls = {"canonical_real": CanonicalRealFamily, "canonical_complex": CanonicalComplexFamily,
           "unitary_shift": UnitaryShiftFamily}[spec["type"]]
    return cls(rho0, gens, hbar=hbar), gens


def _povm(cfg, gens):
    spec = cfg.get("povm")
    if spec is None:
        return None
    t = spec["type"]
    dim = cfg["dim"]
    if t == "spectral":
        return builtin_spectral(gens)
    if t == "heterodyne":
        return builtin_heterodyne(dim, float(spec["radius"]), int(spec["grid"]))
    if t == "phase":
        return builtin_phase(dim, int(spec["bins"]))
    effects = np.array([decode_matrix(e) for e in spec["effects"]])
    labels = np.array([[_complex_of(v) for v in np.atleast_1d(lab).tolist()]
                       if not _is_number(lab) else [complex(lab)] for lab in spec["labels"]])
    if np.allclose(labels.imag, 0):
        labels = labels.real
    return Povm(effects=effects, labels=labels, weights=spec.get("weights"), name="explicit")


def _point(fam, raw):
    if fam.kind == COMPLEX:
        return ParamPoint.complex([_complex_of(v) for v in raw])
    return ParamPoint.real([float(v) for v in raw])


def _complex_view(fam, pt):
    """(complex family, beta) describing the same state, or (None, None)."""
    if fam.kind == COMPLEX:
        return fam, pt
    if isinstance(fam, UnitaryShiftFamily):
        return fam.as_canonical_complex(), ParamPoint.complex(fam.beta_of(pt.gamma))
    if isinstance(fam, CanonicalRealFamily):
        return fam.as_complex(), ParamPoint.complex(0.5 * pt.gamma)
    return None, None


def _target(cfg, fam, pt):
    if cfg.get("target", "parameter") == "log_gradient":
        return np.atleast_1d(fam.mu(pt.values))
    return np.atleast_1d(pt.values)


def _target_jacobian(cfg, fam, pt):
    """d target / d parameter (real families) or d target / d beta."""
    n = fam.arity
    if cfg.get("target", "parameter") == "log_gradient":
        return np.atleast_2d(fam.log_hessian(pt.values))
    return np.eye(n)


def _right_target_jacobian(cfg, fam, pt):
    """d target / d beta of the complex view, used when there is no POVM."""
    if isinstance(fam, UnitaryShiftFamily):
        return imaginary_part_jacobian(fam.arity, fam.hbar).entries
    # canonical real: gamma = beta + beta_bar, so d/d beta = d/d gamma
    return _target_jacobian(cfg, fam, pt)


# --------------------------------------------------------------------------
# the pipeline


def _bound_record(name, bound, R, tol, inconclusive, hermitian=True):
    rec = {"matrix": encode_matrix(bound, hermitian=hermitian, psd=True)}
    if R is not None:
        rep = check_bound(R, bound, tol.psd_tol, attain_tol=tol.attain_tol * max(1.0, float(np.abs(bound).max())),
                          inconclusive_scale=inconclusive)
        rec.update(diff_min_eig=rep.diff_min_eig, verdict=rep.verdict.value, distance=rep.distance)
        if np.size(bound) == 1 and float(np.real(np.ravel(bound)[0])) > 0:
            rec["ratio"] = float(np.real(np.ravel(R)[0]) / np.real(np.ravel(bound)[0]))
    return rec


def _logderiv_record(fam, pt, hbar, tol):
    rho = fam.matrix(pt)
    rec = {}
    s = sld(fam, pt)
    rec["sld"] = {"residual": float(s.residuals.max()), "support_residual": float(s.support_residuals.max())}
    cf, beta = _complex_view(fam, pt)
    if cf is not None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            r = rld(cf, beta)
        rec["rld"] = {"residual": float(r.residuals.max()),
                      "support_residual": float(r.support_residuals.max()),
                      "support_mismatch": bool(caught)}
    try:
        a = ald_from_derivatives(rho, fam.real_coordinate_derivatives(pt), hbar)
        rec["ald"] = {"applicable": True, "residual": float(a.residuals.max())}
    except DegenerateSpectrum as exc:
        rec["ald"] = {"applicable": False, "reason": str(exc)}
    return rec


def _fisher_record(fam, pt, gens):
    rec = {}
    rho = fam.matrix(pt)
    g = fisher_sld(sld(fam, pt)).entries
    rec["G"] = encode_matrix(g, hermitian=True, psd=True)
    cf, beta = _complex_view(fam, pt)
    if cf is not None:
        rec["H"] = encode_matrix(fisher_rld(rld(cf, beta)).entries, hermitian=True, psd=True)
    rec["S"] = encode_matrix(generator_cov(gens, rho).entries, hermitian=True, psd=True)
    if hasattr(fam, "log_hessian"):
        rec["log_chi_hessian"] = encode_matrix(fam.log_hessian(pt.values), hermitian=True, psd=True)
    return rec


def _mc_record(p, rho, theta, R, mc, idx):
    n = int(mc["samples"])
    seed = (int(mc["seed"]), int(idx))
    outcomes = sample(p, rho, n, seed)
    emp = empirical_covariance(p, outcomes, theta)
    se_re, se_im = covariance_standard_errors(p, rho, theta, n)
    r = np.atleast_2d(R)
    diff = np.atleast_2d(emp) - r
    z = []
    for part, se in ((diff.real, se_re), (diff.imag, se_im)):
        tiny = se <= 1e-15
        zz = np.where(tiny, np.where(np.abs(part) <= 1e-12, 0.0, np.inf), np.abs(part) / np.where(tiny, 1, se))
        z.append(zz)
    max_z = float(max(z[0].max(), z[1].max()))
    return {"samples": n, "seed": list(seed), "empirical": encode_matrix(emp, hermitian=True, psd=True),
            "stderr_re": encode_matrix(se_re), "stderr_im": encode_matrix(se_im),
            "max_z": max_z, "within_5se": bool(max_z <= MC_Z)}


def _verdict_record(v):
    details = {}
    for k, val in v.details.items():
        if isinstance(val, np.ndarray) or (isinstance(val, (complex, np.complexfloating))):
            details[k] = encode_matrix(val)
        elif isinstance(val, (bool, np.bool_)):
            details[k] = bool(val)
        elif isinstance(val, (int, float, np.floating, np.integer)):
            details[k] = float(val)
        else:
            details[k] = val
    return {"helstrom_attained": v.helstrom_attained, "right_attained": v.right_attained,
            "right_eigen_residual": _f(v.right_eigen_residual), "canonical_fit_residual": _f(v.canonical_fit_residual),
            "gaussian_chi_residual": _f(v.gaussian_chi_residual), "reasons": list(v.reasons), "details": details}


def _soft(rec, key, fn):
    """Run ``fn``; a numerical failure becomes an error record under ``key``."""
    try:
        rec[key] = fn()
    except (QcrbError, ArithmeticError, np.linalg.LinAlgError) as exc:
        rec.setdefault("errors", []).append({"item": key, "error": type(exc).__name__, "message": str(exc)})


def _run_point(cfg, fam, gens, base_povm, idx, raw, tol):
    pt = _point(fam, raw)
    hbar = float(cfg.get("hbar", 1.0))
    rec = {"index": idx, "point": _encode_vector(pt.values)}
    rho = fam.matrix(pt)
    _soft(rec, "logderiv_residuals", lambda: _logderiv_record(fam, pt, hbar, tol))
    _soft(rec, "fisher", lambda: _fisher_record(fam, pt, gens))
    p = base_povm
    theta = _target(cfg, fam, pt)
    R = None
    em = None
    if p is not None:
        if cfg.get("correction", "none") == "affine_local":
            p = affine_unbiased_labels(p, fam, pt, theta)
        em = error_matrices(p, rho, theta)
        R = em.R
        rec["error_matrices"] = {
            "R": encode_matrix(em.R, hermitian=True, psd=True),
            "Q": encode_matrix(em.Q, hermitian=True, psd=True),
            "Sigma": encode_matrix(em.Sigma, hermitian=True, psd=True),
            "theta_hat": _encode_vector(em.theta_hat),
            "target": _encode_vector(theta),
            "bias": float(np.linalg.norm(em.theta_hat - theta)),
            "completeness_residual": float(em.completeness_residual),
        }
    inconclusive = 0.0
    if em is not None:
        inconclusive = em.completeness_residual * max(1.0, float(np.abs(p.labels).max()) ** 2)
    bounds = {}
    for name in cfg.get("bounds", []):
        _soft(bounds, name, lambda name=name: _compute_bound(name, cfg, fam, gens, pt, p, R, tol, inconclusive))
    if "errors" in bounds:
        rec.setdefault("errors", []).extend(bounds.pop("errors"))
    rec["bounds"] = bounds
    audits = {}
    for name in cfg.get("audits", []):
        if name == "theorem1":
            _soft(audits, name, lambda: _verdict_record(theorem1_audit(fam, p, pt, target=_target_fn(cfg, fam), tol=tol)))
        elif name == "theorem2":
            cf, beta = _complex_view(fam, pt)
            tgt = None if cfg.get("target") == "log_gradient" else (lambda q: q.beta)
            _soft(audits, name, lambda: _verdict_record(theorem2_audit(cf, p, beta, target=tgt, tol=tol)))
    if "errors" in audits:
        rec.setdefault("errors", []).extend(audits.pop("errors"))
    if audits:
        rec["audits"] = audits
    if cfg.get("mc") and p is not None:
        _soft(rec, "mc", lambda: _mc_record(p, rho, theta, R, cfg["mc"], idx))
    return rec


def _target_fn(cfg, fam):
    if cfg.get("target", "parameter") == "log_gradient":
        return None
    return lambda q: q.values


def _compute_bound(name, cfg, fam, gens, pt, p, R, tol, inconclusive):
    hbar = float(cfg.get("hbar", 1.0))
    rho = fam.matrix(pt)
    if name == "helstrom":
        d = mean_jacobian(p, fam, pt) if p is not None else _target_jacobian(cfg, fam, pt)
        g = fisher_sld(sld(fam, pt)).entries
        return _bound_record(name, helstrom_bound(np.real_if_close(d), g), R, tol, inconclusive)
    if name == "heisenberg":
        d = np.atleast_2d(mean_jacobian(p, fam, pt) if p is not None else _target_jacobian(cfg, fam, pt))
        s0 = generator_cov(gens, fam.rho0.matrix).entries
        b = mk.hermitize(d @ heisenberg_bound(s0, hbar) @ d.conj().T)
        return _bound_record(name, np.real_if_close(b), R, tol, inconclusive)
    cf, beta = _complex_view(fam, pt)
    d = mean_jacobian(p, cf, beta) if p is not None else _right_target_jacobian(cfg, fam, pt)
    if name == "right":
        h = fisher_rld(rld(cf, beta)).entries
        return _bound_record(name, right_bound(d, h), R, tol, inconclusive)
    # lie: the same right bound through the group correction K(theta)
    sc = StructureConstants.from_generators(gens, hbar)
    k = k_matrix(sc, pt.gamma)
    s0 = generator_cov(gens, fam.rho0.matrix).entries
    rec = _bound_record(name, lie_bound(d, k, s0), R, tol, inconclusive)
    z = sc.generator_matrix(pt.gamma)
    rec["k_matrix"] = encode_matrix(k)
    rec["k_identity_residual"] = float(np.abs(k @ (mk.matrix_exp(z) - np.eye(len(k))) - z).max())
    try:
        rec["k_series_residual"] = float(np.abs(k - k_matrix_series(sc, pt.gamma)).max())
    except ArithmeticError as exc:
        rec["k_series_residual"] = None
        rec["k_series_error"] = str(exc)
    h = fisher_rld(rld(cf, beta)).entries
    rec["right_bound_distance"] = float(np.abs(lie_bound(d, k, s0) - right_bound(d, h)).max())
    return rec


def _scenario_checks(cfg, fam, p, tol):
    out = {}
    audits = cfg.get("audits", [])
    if "theorem3" in audits:
        _soft(out, "theorem3", lambda: _verdict_record(theorem3_audit(fam, p, tol=tol)))
    if "regularity" in audits:
        def reg():
            grid = [_point(fam, raw) for raw in cfg["points"]]
            s, a = regularity_check(fam, p, grid)
            return {"symmetry_residual": s, "analyticity_residual": a}
        _soft(out, "regularity", reg)
    return out


def _run_fuzz(cfg, tol):
    fz = cfg.get("fuzz", {})
    cases = run_fuzz(n_cases=int(fz.get("cases", 100)), seed=int(fz.get("seed", 0)),
                     max_dim=int(cfg["dim"]), max_arity=int(fz.get("max_arity", 2)))
    records = []
    for c in cases:
        rec = {"index": c.index, "dim": c.dim, "arity": c.arity, "family": c.family, "outcomes": c.outcomes,
               "attempts": c.attempts, "bias": c.bias,
               "logderiv_residuals": {"sld": {"residual": c.sld_residual}, "rld": {"residual": c.rld_residual},
                                      "ald": {"applicable": False, "reason": "not a unitary or pure family"}},
               "bounds": {}}
        for name, m in (("helstrom", c.helstrom_min_eig), ("right", c.right_min_eig)):
            verdict = Verdict.SATISFIED if m >= -tol.psd_tol else Verdict.VIOLATED
            rec["bounds"][name] = {"diff_min_eig": m, "verdict": verdict.value}
        records.append(rec)
    return records


def run_scenario(cfg, seed=None):
    """Execute a validated config; returns the report as a dict.

    ``seed`` overrides ``mc.seed`` (and the fuzz seed). Raises
    ConfigInvalid when the config does not validate.
    """
    if not isinstance(cfg, dict):
        cfg = load_config(cfg)
    diags = validate_config(cfg)
    if diags:
        raise ConfigInvalid(diags)
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        if cfg.get("mc"):
            cfg["mc"]["seed"] = int(seed)
        if cfg.get("kind") == "fuzz":
            cfg.setdefault("fuzz", {})["seed"] = int(seed)
    tol = Tolerances().with_overrides(cfg.get("tolerances"))
    report = {
        "artifact": {"name": "qcrb", "version": __version__},
        TIMESTAMP_KEY: datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": cfg,
        "tolerances": tol.as_dict(),
    }
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if cfg.get("kind", "pipeline") == "fuzz":
            report["points"] = _run_fuzz(cfg, tol)
            report["checks"] = {}
        else:
            fam, gens = _family(cfg)
            p = _povm(cfg, gens)
            if p is not None:
                p.tol_norm = (tol.norm_tol_continuous if cfg["povm"]["type"] == "heterodyne"
                              else tol.norm_tol_finite)
            report["points"] = [_run_point(cfg, fam, gens, p, i, raw, tol)
                                for i, raw in enumerate(cfg["points"])]
            report["checks"] = _scenario_checks(cfg, fam, p, tol)
    report["summary"] = _summary(report)
    return report


def _summary(report):
    counts = {v.value: 0 for v in Verdict}
    worst = None
    for rec in report["points"]:
        for b in rec.get("bounds", {}).values():
            if "verdict" in b:
                counts[b["verdict"]] += 1
                worst = b["diff_min_eig"] if worst is None else min(worst, b["diff_min_eig"])
    errors = sum(len(rec.get("errors", [])) for rec in report["points"])
    errors += len(report.get("checks", {}).get("errors", []))
    return {"verdicts": counts, "worst_diff_min_eig": worst, "violated": counts["Violated"] > 0,
            "errors": errors}


# --------------------------------------------------------------------------
# output and verification


def report_to_json(report):
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=True) + "\n"


def report_to_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "point", "bound", "diff_min_eig", "verdict", "ratio"])
    name = report["config"].get("name", "")
    for rec in report["points"]:
        for bname in sorted(rec.get("bounds", {})):
            b = rec["bounds"][bname]
            if "verdict" not in b:
                continue
            w.writerow([name, rec["index"], bname, repr(float(b["diff_min_eig"])), b["verdict"],
                        "" if "ratio" not in b else repr(float(b["ratio"]))])
    return buf.getvalue()


def strip_timestamp(report):
    out = dict(report)
    out.pop(TIMESTAMP_KEY, None)
    return out


def _walk(obj, path="$"):
    if isinstance(obj, dict):
        if obj.get("type") == "matrix" and "data" in obj:
            yield path, obj
            return
        for k in sorted(obj):
            yield from _walk(obj[k], f"{path}.{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _walk(v, f"{path}[{i}]")


def verify_report(report, tol=DEFAULT_TOL):
    """Check every matrix against the invariants it declares. Returns a
    list of problems (empty when the report is self-consistent).
    """
    if not isinstance(report, dict):
        try:
            report = json.loads(Path(report).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            return [f"$: cannot read report ({exc})"]
    problems = []
    for key in ("artifact", "config", "points", "summary"):
        if key not in report:
            problems.append(f"$.{key}: missing")
    for path, obj in _walk(report):
        try:
            m = decode_matrix(obj)
        except (ValueError, TypeError) as exc:
            problems.append(f"{path}: {exc}")
            continue
        if list(m.shape) != list(obj.get("shape", [])):
            problems.append(f"{path}: shape {list(m.shape)} does not match declared {obj.get('shape')}")
            continue
        if not np.all(np.isfinite(m)):
            problems.append(f"{path}: non-finite entries")
            continue
        if obj.get("hermitian") or obj.get("psd"):
            if m.shape[0] != m.shape[1] or not mk.is_hermitian(m, tol.hermitian_rtol):
                problems.append(f"{path}: declared Hermitian but is not")
                continue
        if obj.get("psd"):
            w = np.linalg.eigvalsh(mk.hermitize(m))
            scale = max(1.0, float(np.abs(w).max()))
            if w[0] < -tol.psd_tol * scale:
                problems.append(f"{path}: declared PSD but min eigenvalue is {w[0]:.3e}")
    for rec in report.get("points", []):
        for name, b in rec.get("bounds", {}).items():
            if b.get("verdict") not in (None, *[v.value for v in Verdict]):
                problems.append(f"$.points[{rec.get('index')}].bounds.{name}: unknown verdict {b.get('verdict')!r}")
    return problems
