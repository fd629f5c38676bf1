"""Centering, OLS, principal component regression and kernel PLS.

All path functions work on centered moment matrices (``sxx``, ``sxy``) so the
same code serves sample data and population covariances.
"""
from __future__ import annotations

import warnings

import numpy as np


def center(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] < 2:
        raise ValueError("centering needs at least two observations")
    xm = x.mean(axis=0)
    ym = y.mean(axis=0)
    return x - xm, y - ym, xm, ym


def moments(xc, yc):
    """Sample (co)variances of centered data, divisor n - 1."""
    d = xc.shape[0] - 1
    return xc.T @ xc / d, xc.T @ yc / d, yc.T @ yc / d


def ols_from_moments(sxx, sxy):
    sxx = np.asarray(sxx, dtype=float)
    p = sxx.shape[0]
    if np.linalg.matrix_rank(sxx) < p:
        raise np.linalg.LinAlgError("predictor covariance is singular; reduce the predictors first")
    return np.linalg.solve(sxx, sxy)


def fit_ols(x, y):
    """Least-squares coefficients ``Sxx^-1 Sxy`` from centered data."""
    xc, yc, _, _ = center(x, y)
    if xc.shape[0] <= xc.shape[1]:
        raise np.linalg.LinAlgError(
            f"OLS needs n > p, got n={xc.shape[0]}, p={xc.shape[1]}"
        )
    sxx, sxy, _ = moments(xc, yc)
    return ols_from_moments(sxx, sxy)


def _numerical_rank(evals):
    evals = np.asarray(evals)
    if evals.size == 0 or evals[0] <= 0:
        return 0
    tol = evals.size * np.finfo(float).eps * evals[0] * 10
    return int(np.sum(evals > tol))


def pcr_path_from_moments(sxx, sxy, lmax):
    """Coefficient matrices for 0..lmax leading principal components.

    Component counts above the numerical rank of ``sxx`` repeat the
    full-rank fit. Returns ``(coefs, rank)`` with ``coefs`` of shape
    ``(lmax + 1, p, m)``.
    """
    sxy = np.atleast_2d(np.asarray(sxy, dtype=float))
    if sxy.shape[0] != sxx.shape[0]:
        sxy = sxy.T
    evals, evecs = np.linalg.eigh(sxx)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    rank = _numerical_rank(evals)
    if lmax > rank:
        warnings.warn(f"PCR path truncated at rank {rank} (requested {lmax})", RuntimeWarning)
    p, m = sxy.shape
    coefs = np.zeros((lmax + 1, p, m))
    # score-space regression coefficients, one row per component
    gamma = (evecs.T @ sxy)[:rank] / evals[:rank, None]
    acc = np.zeros((p, m))
    for l in range(1, lmax + 1):
        if l <= rank:
            acc = acc + np.outer(evecs[:, l - 1], gamma[l - 1])
        coefs[l] = acc
    return coefs, rank


def pls_path_from_moments(sxx, sxy, lmax, tol=1e-12):
    """Kernel PLS on cross-product matrices, all responses jointly.

    Only the cross-covariance is deflated; the weight of each component is
    the dominant left singular vector of the deflated ``sxy``. The resulting
    coefficients coincide with NIPALS. If the deflated cross-covariance
    vanishes the remaining entries repeat the last fit.

    Returns ``(coefs, ncomp)`` where ``ncomp`` counts the extracted components.
    """
    sxx = np.asarray(sxx, dtype=float)
    xty = np.array(sxy, dtype=float)
    if xty.ndim == 1:
        xty = xty[:, None]
    p, m = xty.shape
    coefs = np.zeros((lmax + 1, p, m))
    scale = np.linalg.norm(xty)
    R = np.zeros((p, lmax))
    P = np.zeros((p, lmax))
    acc = np.zeros((p, m))
    ncomp = 0
    for a in range(lmax):
        if scale == 0 or np.linalg.norm(xty) <= tol * scale:
            break
        if m == 1:
            w = xty[:, 0].copy()
        elif m <= p:
            _, vecs = np.linalg.eigh(xty.T @ xty)
            w = xty @ vecs[:, -1]
        else:
            _, vecs = np.linalg.eigh(xty @ xty.T)
            w = vecs[:, -1]
        w /= np.linalg.norm(w)
        r = w - R[:, :a] @ (P[:, :a].T @ w)
        sr = sxx @ r
        tt = r @ sr
        if tt <= tol * max(np.trace(sxx), 1e-300):
            break
        pa = sr / tt
        qa = xty.T @ r / tt
        xty = xty - tt * np.outer(pa, qa)
        R[:, a] = r
        P[:, a] = pa
        acc = acc + np.outer(r, qa)
        coefs[a + 1] = acc
        ncomp = a + 1
    for l in range(ncomp + 1, lmax + 1):
        coefs[l] = coefs[ncomp]
    return coefs, ncomp
