"""Predictor and simultaneous envelope estimators.

Both reduce to minimizing

    J(G) = log det(G' M G) + log det(G' (M + U)^-1 G)

over semi-orthogonal ``G`` of a given width. The optimizer scores a pool of
eigenvector-based starting bases and then polishes the best one by cyclic
single-column updates. Each column update is a majorize-minimize step whose
surrogate is minimized by the smallest eigenvector of a small symmetric
matrix, so J never increases.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class EnvelopeResult:
    basis: np.ndarray
    objective: float
    converged: bool
    sweeps: int
    pool_best: float


def _logdet_pd(a):
    sign, val = np.linalg.slogdet(a)
    if sign <= 0:
        return np.inf
    return val


def _check_pd(a, name):
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} is not positive definite") from exc


def envelope_objective(basis, m_mat, mu_inv):
    """J at ``basis``; ``mu_inv`` is the inverse of ``m_mat + u_mat``."""
    return _logdet_pd(basis.T @ m_mat @ basis) + _logdet_pd(basis.T @ mu_inv @ basis)


def _batched_subset_logdet(mat, subsets, chunk=20000):
    out = np.empty(len(subsets))
    for start in range(0, len(subsets), chunk):
        idx = subsets[start : start + chunk]
        blocks = mat[idx[:, :, None], idx[:, None, :]]
        sign, val = np.linalg.slogdet(blocks)
        out[start : start + chunk] = np.where(sign > 0, val, np.inf)
    return out


def _subset_candidates(vecs, diag_logs, other, u, top, max_subsets):
    """Best subsets of eigenvectors ``vecs`` (descending order).

    ``diag_logs[i]`` is the log of the diagonal entry contributed by vector
    ``i`` to one log-det term; ``other`` is the other term's matrix expressed
    in the same eigenbasis. Returns a list of index tuples.
    """
    p = vecs.shape[1]
    k = min(p, u + top)
    picks = []
    if math.comb(k, u) <= max_subsets:
        subsets = np.array(list(itertools.combinations(range(k), u)), dtype=np.intp)
        scores = diag_logs[subsets].sum(axis=1) + _batched_subset_logdet(other, subsets)
        picks.append(tuple(subsets[int(np.argmin(scores))]))
    else:
        # greedy forward selection over the leading k vectors
        chosen: list[int] = []
        for _ in range(u):
            rest = [i for i in range(k) if i not in chosen]
            trial = np.array([chosen + [i] for i in rest], dtype=np.intp)
            scores = diag_logs[trial].sum(axis=1) + _batched_subset_logdet(other, trial)
            chosen.append(rest[int(np.argmin(scores))])
        picks.append(tuple(sorted(chosen)))
    # single-vector contributions over all p vectors
    single = diag_logs + np.log(np.clip(np.diag(other), 1e-300, None))
    picks.append(tuple(sorted(np.argsort(single, kind="stable")[:u])))
    picks.append(tuple(range(u)))
    return picks


def _orthonormal(a):
    q, r = np.linalg.qr(a)
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def _column_update(basis, k, m_mat, mu_inv, max_inner, tol):
    """Majorize-minimize update of column ``k`` with the others held fixed."""
    p, u = basis.shape
    g = basis[:, k]
    others = np.delete(basis, k, axis=1)
    if u > 1:
        q_full, _ = np.linalg.qr(others, mode="complete")
        comp = q_full[:, u - 1 :]
        mo = m_mat @ others
        no = mu_inv @ others
        a_mat = m_mat - mo @ np.linalg.solve(others.T @ mo, mo.T)
        b_mat = mu_inv - no @ np.linalg.solve(others.T @ no, no.T)
        a_mat = comp.T @ a_mat @ comp
        b_mat = comp.T @ b_mat @ comp
    else:
        comp = np.eye(p)
        a_mat, b_mat = m_mat, mu_inv
    a_mat = (a_mat + a_mat.T) / 2
    b_mat = (b_mat + b_mat.T) / 2
    vec = comp.T @ g
    vec /= np.linalg.norm(vec)
    alpha, beta = vec @ a_mat @ vec, vec @ b_mat @ vec
    f = np.log(alpha) + np.log(beta)
    for _ in range(max_inner):
        _, evecs = np.linalg.eigh(a_mat / alpha + b_mat / beta)
        cand = evecs[:, 0]
        ca, cb = cand @ a_mat @ cand, cand @ b_mat @ cand
        if ca <= 0 or cb <= 0:
            break
        fc = np.log(ca) + np.log(cb)
        if not fc < f:
            break
        done = f - fc <= tol * max(1.0, abs(f))
        vec, alpha, beta, f = cand, ca, cb, fc
        if done:
            break
    new = basis.copy()
    new[:, k] = comp @ vec
    return new


def envelope_basis(
    m_mat,
    u_mat,
    u,
    init=None,
    search_pool=True,
    max_sweeps=500,
    tol=1e-8,
    pool_top=10,
    max_subsets=20000,
    max_inner=20,
    step_tol=1e-7,
):
    """Minimize the envelope objective over ``p x u`` semi-orthogonal bases.

    Parameters
    ----------
    m_mat : (p, p) positive definite matrix.
    u_mat : (p, p) positive semi-definite matrix.
    u : envelope dimension, ``1 <= u <= p``.
    init : optional starting basis added to the candidate pool.
    search_pool : if False only ``init`` is used as a start.
    tol, step_tol : a sweep converges when the relative drop in J is below
        ``tol`` and the basis moves by less than ``step_tol`` (Frobenius
        norm of the part of the new basis outside the old span).

    Returns
    -------
    EnvelopeResult
        ``converged`` is False when the sweep cap was hit first; the basis is
        then the best found.
    """
    m_mat = np.asarray(m_mat, dtype=float)
    u_mat = np.asarray(u_mat, dtype=float)
    p = m_mat.shape[0]
    if not 1 <= u <= p:
        raise ValueError(f"envelope dimension must lie in 1..{p}, got {u}")
    m_mat = (m_mat + m_mat.T) / 2
    mu = (m_mat + u_mat + (m_mat + u_mat).T) / 2
    _check_pd(m_mat, "M")
    nu, v_mu = np.linalg.eigh(mu)
    nu, v_mu = nu[::-1], v_mu[:, ::-1]
    if nu[-1] <= 0:
        raise ValueError("M + U is not positive definite")
    mu_inv = (v_mu / nu) @ v_mu.T
    mu_inv = (mu_inv + mu_inv.T) / 2

    candidates = []
    if init is not None:
        candidates.append(_orthonormal(np.asarray(init, dtype=float)))
    if search_pool or init is None:
        mu_m, v_m = np.linalg.eigh(m_mat)
        mu_m, v_m = mu_m[::-1], v_m[:, ::-1]
        # eigenvectors of M + U: second term is diagonal in this basis
        m_in_mu = v_mu.T @ m_mat @ v_mu
        for s in _subset_candidates(v_mu, -np.log(nu), m_in_mu, u, pool_top, max_subsets):
            candidates.append(v_mu[:, list(s)])
        # eigenvectors of M: first term is diagonal in this basis
        inv_in_m = v_m.T @ mu_inv @ v_m
        for s in _subset_candidates(v_m, np.log(mu_m), inv_in_m, u, pool_top, max_subsets):
            candidates.append(v_m[:, list(s)])
        # leading directions of U and of the generalized problem U v = t M v
        _, v_u = np.linalg.eigh(u_mat)
        candidates.append(v_u[:, ::-1][:, :u].copy())
        chol = np.linalg.cholesky(m_mat)
        ci = np.linalg.inv(chol)
        _, w = np.linalg.eigh(ci @ u_mat @ ci.T)
        candidates.append(_orthonormal(ci.T @ w[:, ::-1][:, :u]))

    scores = [envelope_objective(c, m_mat, mu_inv) for c in candidates]
    best = int(np.argmin(scores))
    basis, j = candidates[best], scores[best]
    pool_best = j
    if not np.isfinite(j):
        raise ValueError("no finite starting value for the envelope objective")

    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        j_old, old = j, basis
        for k in range(u):
            basis = _column_update(basis, k, m_mat, mu_inv, max_inner, tol * 1e-2)
        basis = _orthonormal(basis)
        j = envelope_objective(basis, m_mat, mu_inv)
        # J is flat near the optimum, so also require the subspace to settle
        moved = np.linalg.norm(basis - old @ (old.T @ basis))
        if j_old - j <= tol * max(1.0, abs(j_old)) and moved <= step_tol:
            converged = True
            break
    return EnvelopeResult(basis, float(j), converged, sweeps, float(pool_best))


def xenv_from_moments(sxx, sxy, syy, u, init=None, search_pool=True):
    """Predictor-envelope coefficients and the fitted basis."""
    sxx = np.asarray(sxx, dtype=float)
    sxy = np.asarray(sxy, dtype=float)
    syy = np.atleast_2d(np.asarray(syy, dtype=float))
    _check_pd(syy, "Syy")
    u_mat = sxy @ np.linalg.solve(syy, sxy.T)
    u_mat = (u_mat + u_mat.T) / 2
    res = envelope_basis(sxx - u_mat, u_mat, u, init=init, search_pool=search_pool)
    g = res.basis
    beta = g @ np.linalg.solve(g.T @ sxx @ g, g.T @ sxy)
    return beta, res


@dataclass
class SenvResult:
    beta: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray
    objective: float
    history: list = field(default_factory=list)
    converged: bool = False
    flag: str = ""


def _senv_objective(sxx, sxy, syy, sxx_inv, gamma, phi):
    syp = phi.T @ syy @ phi
    sxp = sxy @ phi
    m_x = sxx - sxp @ np.linalg.solve(syp, sxp.T)
    return (
        envelope_objective(gamma, m_x, sxx_inv)
        + _logdet_pd(syp)
        + _logdet_pd(phi.T @ np.linalg.solve(syy, phi))
    )


def senv_from_moments(sxx, sxy, syy, u, d, max_iter=1000, tol=1e-8):
    """Simultaneous envelope by alternating predictor and response updates.

    The alternation decreases the profile objective

        log|G' Sx|yP G| + log|G' Sx^-1 G| + log|P' Sy P| + log|P' Sy^-1 P|

    blockwise, where ``G`` spans the predictor envelope (width ``u``) and
    ``P`` the response envelope (width ``d``). Both blocks start from fully
    optimized envelope fits; after that each block update is one warm-started
    sweep of column updates, since the two blocks are strongly coupled and
    polishing one of them to convergence before moving the other is wasted
    work.
    """
    sxx = np.asarray(sxx, dtype=float)
    sxy = np.asarray(sxy, dtype=float)
    syy = np.atleast_2d(np.asarray(syy, dtype=float))
    p, m = sxy.shape
    if not 1 <= d <= m:
        raise ValueError(f"response envelope dimension must lie in 1..{m}, got {d}")
    _check_pd(syy, "Syy")
    _check_pd(sxx, "Sxx")
    sxx_inv = np.linalg.inv(sxx)
    sxx_inv = (sxx_inv + sxx_inv.T) / 2

    def gamma_step(phi, init, pool, sweeps=500):
        syp = phi.T @ syy @ phi
        sxp = sxy @ phi
        fit = sxp @ np.linalg.solve(syp, sxp.T)
        fit = (fit + fit.T) / 2
        return envelope_basis(sxx - fit, fit, u, init=init, search_pool=pool, max_sweeps=sweeps).basis

    def phi_step(gamma, init, pool, sweeps=500):
        sgg = gamma.T @ sxx @ gamma
        syg = sxy.T @ gamma
        fit = syg @ np.linalg.solve(sgg, syg.T)
        fit = (fit + fit.T) / 2
        return envelope_basis(syy - fit, fit, d, init=init, search_pool=pool, max_sweeps=sweeps).basis

    gamma = gamma_step(np.eye(m), None, True)
    phi = phi_step(gamma, None, True)
    obj = _senv_objective(sxx, sxy, syy, sxx_inv, gamma, phi)
    history = [obj]
    best = (obj, gamma, phi)
    converged, flag = False, ""
    for it in range(max_iter):
        first = it == 0
        gamma = gamma_step(phi, gamma, first, 500 if first else 1)
        phi = phi_step(gamma, phi, False, 1)
        new = _senv_objective(sxx, sxy, syy, sxx_inv, gamma, phi)
        history.append(new)
        if new > obj + 1e-10 * max(1.0, abs(obj)):
            flag = "objective increased; kept best iterate"
            break
        if new < best[0]:
            best = (new, gamma, phi)
        if obj - new <= tol * max(1.0, abs(obj)):
            converged = True
            break
        obj = new
    else:
        flag = "iteration cap reached"
    obj, gamma, phi = best
    beta = gamma @ np.linalg.solve(gamma.T @ sxx @ gamma, gamma.T @ sxy @ phi) @ phi.T
    return SenvResult(beta, gamma, phi, obj, history, converged, flag)
