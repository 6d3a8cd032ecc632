"""Numerical tolerances shared by every module.

All thresholds live in one frozen record so a caller can see (and override)
every knob in one place.
"""

from dataclasses import dataclass, fields, replace
import json
import os

__all__ = ["Tolerances", "DEFAULT_TOL", "tolerances_from_env"]

TOL_ENV_VAR = "QCRB_TOL_OVERRIDE"


@dataclass(frozen=True)
class Tolerances:
    hermitian_rtol: float = 1e-10
    support_floor: float = 1e-10  # relative to the largest eigenvalue
    psd_tol: float = 1e-8
    attain_tol: float = 1e-6  # relative to max(1, ||bound||)
    fd_step: float = 1e-5
    ald_gap_floor: float = 1e-8
    pinv_rcond: float = 1e-10
    norm_tol_finite: float = 1e-10
    norm_tol_continuous: float = 1e-6
    truncation_tail: float = 1e-10
    commute_tol: float = 1e-10
    unbiased_tol: float = 1e-8
    residual_tol: float = 1e-8

    def with_overrides(self, overrides):
        if not overrides:
            return self
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown tolerance fields: {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_TOL = Tolerances()


def tolerances_from_env(base=DEFAULT_TOL):
    """Apply the exploratory override variable, if set, to ``base``.

    The variable holds a JSON object of field -> value. It exists for ad-hoc
    runs only; tests never set it.
    """
    raw = os.environ.get(TOL_ENV_VAR)
    if not raw:
        return base
    return base.with_overrides(json.loads(raw))
