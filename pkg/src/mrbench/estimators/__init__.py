"""Coefficient paths for PCR, PLS1, PLS2, predictor and simultaneous envelopes."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .envelope import (
    EnvelopeResult,
    SenvResult,
    envelope_basis,
    envelope_objective,
    senv_from_moments,
    xenv_from_moments,
)
from .linear import (
    center,
    fit_ols,
    moments,
    ols_from_moments,
    pcr_path_from_moments,
    pls_path_from_moments,
)

STUDY_METHODS = ("PCR", "PLS1", "PLS2", "XENV", "SENV")
ALL_METHODS = STUDY_METHODS + ("OLS",)


@dataclass
class ReducedBasis:
    loadings: np.ndarray
    q: int
    variance_explained: float
    mean: np.ndarray


@dataclass
class CoefficientPath:
    method: str
    coef: np.ndarray  # (lmax + 1, p, m)
    intercepts: np.ndarray  # (lmax + 1, m)
    lmax: int
    prereduction: ReducedBasis | None = None
    failed: np.ndarray | None = None
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if self.failed is None:
            self.failed = np.zeros(self.lmax + 1, dtype=bool)

    def predict(self, x, l):
        return np.asarray(x) @ self.coef[l] + self.intercepts[l]


def pca_prereduce(x, var_cap=0.995, max_components=None):
    """Principal-component reduction of wide predictor data.

    Keeps the leading components until ``var_cap`` of the total variance is
    reached, never more than ``min(n - 1, p)``.
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    ev = s**2
    qmax = min(n - 1, p)
    if max_components is not None:
        qmax = min(qmax, max_components)
    frac = np.cumsum(ev) / ev.sum()
    q = int(np.searchsorted(frac, var_cap - 1e-12) + 1)
    q = max(1, min(q, qmax))
    loadings = vt[:q].T.copy()
    basis = ReducedBasis(loadings, q, float(frac[q - 1]), mean)
    return basis, xc @ loadings


def restrict_to_range(sxx, sxy, rel_tol=1e-10):
    """Moments expressed in the eigenbasis of ``sxx`` restricted to
    eigenvalues above ``rel_tol`` times the largest.

    Used for population-level fits on designs whose covariance spectrum runs
    far below double precision (p = 250): directions with negligible
    variance carry no recoverable signal and would make the envelope matrices
    numerically indefinite. Returns ``(basis, sxx_r, sxy_r)``; coefficients
    fitted on the reduced moments map back as ``basis @ coef``.
    """
    evals, evecs = np.linalg.eigh(np.asarray(sxx, dtype=float))
    keep = evals > rel_tol * evals.max()
    basis = evecs[:, keep][:, ::-1]
    return basis, np.diag(evals[keep][::-1]), basis.T @ np.asarray(sxy, dtype=float)


def fit_pcr(x, y, lmax):
    xc, yc, _, _ = center(x, y)
    sxx, sxy, _ = moments(xc, yc)
    coefs, _ = pcr_path_from_moments(sxx, sxy, lmax)
    return _finish("PCR", coefs, x, y)


def fit_pls2(x, y, lmax):
    xc, yc, _, _ = center(x, y)
    lmax_ok = min(lmax, xc.shape[0] - 1, xc.shape[1])
    sxx, sxy, _ = moments(xc, yc)
    coefs, _ = pls_path_from_moments(sxx, sxy, lmax_ok)
    return _finish("PLS2", _pad(coefs, lmax), x, y)


def fit_pls1(x, y, lmax):
    xc, yc, _, _ = center(x, y)
    lmax_ok = min(lmax, xc.shape[0] - 1, xc.shape[1])
    sxx, sxy, _ = moments(xc, yc)
    cols = [pls_path_from_moments(sxx, sxy[:, [j]], lmax_ok)[0] for j in range(sxy.shape[1])]
    coefs = np.concatenate(cols, axis=2)
    return _finish("PLS1", _pad(coefs, lmax), x, y)


def fit_xenv(x, y, u):
    xc, yc, _, _ = center(x, y)
    sxx, sxy, syy = moments(xc, yc)
    return xenv_from_moments(sxx, sxy, syy, u)[0]


def fit_senv(x, y, u, d):
    xc, yc, _, _ = center(x, y)
    sxx, sxy, syy = moments(xc, yc)
    return senv_from_moments(sxx, sxy, syy, u, d).beta


def _pad(coefs, lmax):
    if coefs.shape[0] == lmax + 1:
        return coefs
    extra = np.repeat(coefs[-1:], lmax + 1 - coefs.shape[0], axis=0)
    return np.concatenate([coefs, extra], axis=0)


def _finish(method, coefs, x, y, failed=None, reduced=None, notes=None):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if reduced is not None:
        coefs = np.einsum("pq,lqm->lpm", reduced.loadings, coefs)
    xm, ym = x.mean(axis=0), y.mean(axis=0)
    intercepts = ym[None, :] - np.einsum("p,lpm->lm", xm, coefs)
    return CoefficientPath(
        method=method,
        coef=coefs,
        intercepts=intercepts,
        lmax=coefs.shape[0] - 1,
        prereduction=reduced,
        failed=failed,
        notes=list(notes or []),
    )


def _envelope_path(method, sxx, sxy, syy, lmax, senv_response_dim):
    p, m = sxy.shape
    coefs = np.zeros((lmax + 1, p, m))
    failed = np.zeros(lmax + 1, dtype=bool)
    notes = []
    d = min(senv_response_dim, m)
    for l in range(1, lmax + 1):
        u = min(l, p)
        if u < l:
            coefs[l] = coefs[l - 1]
            failed[l] = failed[l - 1]
            continue
        try:
            if method == "XENV":
                coefs[l] = xenv_from_moments(sxx, sxy, syy, u)[0]
            else:
                res = senv_from_moments(sxx, sxy, syy, u, d)
                coefs[l] = res.beta
                if res.flag:
                    notes.append(f"l={l}: {res.flag}")
        except (ValueError, np.linalg.LinAlgError) as exc:
            coefs[l] = np.nan
            failed[l] = True
            notes.append(f"l={l}: {exc}")
    if lmax > p:
        notes.append(f"path truncated at {p} components")
    return coefs, failed, notes


def fit_method(method, x, y, lmax=10, senv_response_dim=2, var_cap=0.995):
    """Full coefficient path ``l = 0..lmax`` for one method.

    Wide data (``p > n``) is first reduced to leading principal components;
    coefficients are mapped back to the original predictors. For the
    envelope methods ``l`` is the predictor envelope dimension.
    """
    method = method.upper()
    if method not in ALL_METHODS:
        raise ValueError(f"unknown method {method!r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, p = x.shape
    reduced = None
    z = x
    if p > n:
        reduced, z = pca_prereduce(x, var_cap=var_cap)
    zc, yc, _, _ = center(z, y)
    sxx, sxy, syy = moments(zc, yc)
    q = zc.shape[1]
    notes = []
    failed = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if method == "PCR":
            coefs, rank = pcr_path_from_moments(sxx, sxy, lmax)
            if rank < lmax:
                notes.append(f"path truncated at rank {rank}")
        elif method in ("PLS1", "PLS2"):
            lmax_ok = min(lmax, n - 1, q)
            if method == "PLS2":
                coefs = pls_path_from_moments(sxx, sxy, lmax_ok)[0]
            else:
                coefs = np.concatenate(
                    [pls_path_from_moments(sxx, sxy[:, [j]], lmax_ok)[0] for j in range(y.shape[1])],
                    axis=2,
                )
            coefs = _pad(coefs, lmax)
        elif method == "OLS":
            coefs = np.zeros((lmax + 1, q, y.shape[1]))
            coefs[1:] = ols_from_moments(sxx, sxy)
        else:
            coefs, failed, notes = _envelope_path(method, sxx, sxy, syy, lmax, senv_response_dim)
    return _finish(method, coefs, x, y, failed=failed, reduced=reduced, notes=notes)


__all__ = [
    "ALL_METHODS",
    "STUDY_METHODS",
    "CoefficientPath",
    "EnvelopeResult",
    "ReducedBasis",
    "SenvResult",
    "center",
    "envelope_basis",
    "envelope_objective",
    "fit_method",
    "fit_ols",
    "fit_pcr",
    "fit_pls1",
    "fit_pls2",
    "fit_senv",
    "fit_xenv",
    "moments",
    "ols_from_moments",
    "pca_prereduce",
    "pcr_path_from_moments",
    "pls_path_from_moments",
    "restrict_to_range",
    "senv_from_moments",
    "xenv_from_moments",
]
