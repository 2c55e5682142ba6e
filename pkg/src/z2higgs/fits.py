"""Weighted fits of exponential decay with a power-law correction.

The model is y(n) = C e^{-c n} / n^p, fitted as weighted least squares on
log y = log C - c n - p log n with sigma_log = sigma_y / y.  A pure
exponential submodel (p = 0) is always fitted alongside and compared by an
Akaike criterion, which is the desk-scale detector for the presence of a
polynomial correction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError

COND_THRESHOLD = 1e10


@dataclass(frozen=True)
class FitResult:
    C: float
    c: float
    p: float
    cov: tuple
    fit_range: tuple
    residual_norm: float
    method: str
    n_used: int
    condition: float
    aic: float
    aic_pure: float
    pure_c: float
    pure_C: float
    prefers_correction: bool
    kappa: float = None

    @property
    def c_err(self):
        return math.sqrt(self.cov[1][1])

    @property
    def p_err(self):
        return math.sqrt(self.cov[2][2])

    def to_dict(self):
        return {
            "C": self.C, "c": self.c, "p": self.p,
            "cov": [list(r) for r in self.cov],
            "fit_range": list(self.fit_range),
            "residual_norm": self.residual_norm, "method": self.method,
            "n_used": self.n_used, "condition": self.condition,
            "aic": self.aic, "aic_pure": self.aic_pure,
            "pure_c": self.pure_c, "pure_C": self.pure_C,
            "prefers_correction": self.prefers_correction, "kappa": self.kappa,
        }


def _normalize_rows(data):
    rows = []
    for row in data:
        if hasattr(row, "n"):
            rows.append((row.n, row.mean, row.stderr))
        else:
            n, y, s = row
            rows.append((float(n), float(y), float(s)))
    return rows


def _wls(X, z, w):
    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    zw = z * sw
    cond = np.linalg.cond(Xw)
    if not np.isfinite(cond) or cond > COND_THRESHOLD:
        raise NumericError(f"design matrix ill-conditioned (cond = {cond:.3g})")
    beta, res, rank, _ = np.linalg.lstsq(Xw, zw, rcond=None)
    if rank < X.shape[1]:
        raise NumericError("rank-deficient design matrix")
    cov = np.linalg.inv(Xw.T @ Xw)
    resid = zw - Xw @ beta
    chi2 = float(resid @ resid)
    return beta, cov, chi2, cond


def fit_decay(data, fit_range=None, kappa=None):
    """Fit (C, c, p) of C e^{-c n} / n^p to (n, y, sigma_y) rows.

    Points outside the range, with nonpositive y, or with y <= 2 sigma_y
    (signal below noise) are dropped with a warning.  Exact data (all sigma
    zero) is fitted unweighted with a residual-scaled covariance.
    """
    rows = _normalize_rows(data)
    if fit_range is None:
        ns = [r[0] for r in rows]
        fit_range = (min(ns), max(ns))
    kept = []
    for n, y, s in rows:
        if not fit_range[0] <= n <= fit_range[1]:
            continue
        if y <= 0:
            warnings.warn(f"dropping nonpositive point y({n}) = {y}")
            continue
        if s > 0 and y <= 2 * s:
            warnings.warn(f"dropping point n={n}: signal below noise (y <= 2 sigma)")
            continue
        kept.append((n, y, s))
    if len(kept) < 4:
        raise NumericError(f"need at least 4 usable points, have {len(kept)}")
    n = np.array([r[0] for r in kept])
    y = np.array([r[1] for r in kept])
    s = np.array([r[2] for r in kept])
    z = np.log(y)
    exact = bool(np.all(s == 0))
    w = np.ones_like(y) if exact else (y / s) ** 2

    X3 = np.column_stack([np.ones_like(n), -n, -np.log(n)])
    beta3, cov3, chi2_3, cond3 = _wls(X3, z, w)
    X2 = np.column_stack([np.ones_like(n), -n])
    beta2, cov2, chi2_2, _ = _wls(X2, z, w)

    if exact:
        dof = max(len(kept) - 3, 1)
        scale = chi2_3 / dof
        cov3 = cov3 * scale
        cov2 = cov2 * (chi2_2 / max(len(kept) - 2, 1))
        aic3 = len(kept) * math.log(max(chi2_3, 1e-300) / len(kept)) + 2 * 3
        aic2 = len(kept) * math.log(max(chi2_2, 1e-300) / len(kept)) + 2 * 2
        method = "unweighted-ls"
    else:
        aic3 = chi2_3 + 2 * 3
        aic2 = chi2_2 + 2 * 2
        method = "wls-log"

    return FitResult(
        C=float(np.exp(beta3[0])), c=float(beta3[1]), p=float(beta3[2]),
        cov=tuple(tuple(float(v) for v in row) for row in cov3),
        fit_range=tuple(fit_range), residual_norm=math.sqrt(chi2_3),
        method=method, n_used=len(kept), condition=float(cond3),
        aic=float(aic3), aic_pure=float(aic2),
        pure_c=float(beta2[1]), pure_C=float(np.exp(beta2[0])),
        prefers_correction=bool(aic3 < aic2), kappa=kappa)


@dataclass(frozen=True)
class CompareReport:
    delta_c: float
    sigma_pooled: float
    rel_tol: float
    tolerance: float
    passed: bool
    c_a: float
    c_b: float

    def to_dict(self):
        return {"delta_c": self.delta_c, "sigma_pooled": self.sigma_pooled,
                "rel_tol": self.rel_tol, "tolerance": self.tolerance,
                "passed": self.passed, "c_a": self.c_a, "c_b": self.c_b}


def compare_c(fit_a, fit_b, rel_tol=0.10):
    """Compare decay constants of two fits at max(rel_tol * |c_b|, 2 sigma)."""
    if fit_a.kappa is not None and fit_b.kappa is not None \
            and fit_a.kappa != fit_b.kappa:
        raise ConfigError(f"kappa mismatch: {fit_a.kappa} vs {fit_b.kappa}")
    delta = fit_a.c - fit_b.c
    sigma = math.sqrt(fit_a.cov[1][1] + fit_b.cov[1][1])
    tol = max(rel_tol * abs(fit_b.c), 2 * sigma)
    return CompareReport(delta_c=delta, sigma_pooled=sigma, rel_tol=rel_tol,
                         tolerance=tol, passed=abs(delta) <= tol,
                         c_a=fit_a.c, c_b=fit_b.c)
