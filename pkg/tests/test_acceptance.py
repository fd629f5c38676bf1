"""Acceptance criteria 1-8. Each test records one PASS/FAIL line that is
printed in the terminal summary.

Criteria 4, 5, 6 and 8 run real studies (about 25 minutes in total on one
core); they share session-scoped study runs.
"""
import time

import numpy as np
import pytest
from scipy import stats

from mrbench import analysis
from mrbench.estimators import (
    center,
    fit_method,
    fit_ols,
    fit_pcr,
    fit_pls2,
    fit_senv,
    fit_xenv,
    moments,
    pcr_path_from_moments,
    restrict_to_range,
    xenv_from_moments,
)
from mrbench.harness import RunConfig, design_key_frame, draw_dataset, population_for, run_study
from mrbench.metrics import averaged_paths, estimation_error, prediction_error
from mrbench.simulation import assemble_population, design_grid, find_designs

NINE_LIKE = dict(p=20, gamma=0.9, relpos=(5, 6, 7, 8), eta=0.0)
TWENTYNINE_LIKE = dict(p=20, gamma=0.9, relpos=(5, 6, 7, 8), eta=1.2)
ENVELOPES = ("XENV", "SENV")
# envelope minimum estimation errors reported for the eta = 0 design span 4.8-8.6
BAND = (0.5 * 4.8, 1.5 * 8.6)


def design_id(levels):
    (d,) = find_designs(**levels)
    return d.design_id


def record(log, key, checks):
    ok = all(c for _, c in checks)
    detail = "; ".join(desc if c else f"{desc} [FAILED]" for desc, c in checks)
    log[key] = (ok, detail)
    print(f"criterion {key}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, detail


def minima(records, design, column):
    """{(method, response): (min averaged error, argmin l)} for one design."""
    avg = averaged_paths(records[records.design_id == design], column)
    out = {}
    for (meth, resp), block in avg.groupby(["method", "response"]):
        block = block.sort_values("l")
        i = int(np.argmin(block[column].to_numpy()))
        out[meth, resp] = (float(block[column].iloc[i]), int(block["l"].iloc[i]))
    return out


def fmt(mins, method, m=4):
    return ",".join(f"{mins[method, j][0]:.2f}({mins[method, j][1]})" for j in range(1, m + 1))


@pytest.fixture(scope="session")
def study_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def desk_study(study_root):
    """9-like and 29-like designs, 50 replicates, all five methods."""
    cfg = RunConfig(
        designs=(design_id(NINE_LIKE), design_id(TWENTYNINE_LIKE)),
        replicates=50,
        output_dir=str(study_root / "desk"),
    )
    t0 = time.time()
    res = run_study(cfg)
    return cfg, res, time.time() - t0


@pytest.fixture(scope="session")
def reduced_grid(study_root):
    cfg = RunConfig(replicates=10, output_dir=str(study_root / "grid"))
    t0 = time.time()
    res = run_study(cfg)
    return cfg, res, time.time() - t0


# 1


def test_criterion_1_reduction_identities(acceptance_log):
    cfg = RunConfig()
    _, ds = draw_dataset(cfg, design_id(dict(p=20, gamma=0.2, relpos=(1, 2, 3, 4), eta=0.4)), "OLS", 1)
    x, y = ds.x, ds.y
    ols = fit_ols(x, y)
    checks = []
    timings = []

    def timed(fn, *args):
        t = time.time()
        out = fn(*args)
        timings.append(time.time() - t)
        return out

    d = np.abs(timed(fit_pcr, x, y, 20).coef[20] - ols).max()
    checks.append((f"PCR(20)=OLS max|diff| {d:.1e}", d < 1e-6))
    d = np.abs(timed(fit_pls2, x, y, 20).coef[20] - ols).max()
    checks.append((f"PLS2(20)=OLS {d:.1e}", d < 1e-6))
    d = np.abs(timed(fit_xenv, x, y, 20) - ols).max()
    checks.append((f"Xenv(u=20)=OLS {d:.1e}", d < 1e-6))
    worst = 0.0
    for u in (1, 2, 3, 4, 6, 8):
        worst = max(worst, np.abs(timed(fit_senv, x, y, u, 4) - timed(fit_xenv, x, y, u)).max())
    checks.append((f"Senv(d=4,u)=Xenv(u) for u in 1,2,3,4,6,8: {worst:.1e}", worst < 1e-4))
    checks.append((f"slowest single fit {max(timings):.2f}s", max(timings) < 1.0))
    record(acceptance_log, 1, checks)


# 2


def test_criterion_2_population_recovery(acceptance_log):
    worst_x, worst_pcr, worst_direct = 0.0, 0.0, 0.0
    for design in design_grid():
        pop = population_for(design.design_id, RunConfig.base_seed)
        basis, sxx_r, sxy_r = restrict_to_range(pop.sigma_xx, pop.sigma_xy)
        beta, _ = xenv_from_moments(sxx_r, sxy_r, pop.sigma_yy, 4)
        worst_x = max(worst_x, np.abs(basis @ beta - pop.beta_true).max())
        if design.p == 20:
            beta, _ = xenv_from_moments(pop.sigma_xx, pop.sigma_xy, pop.sigma_yy, 4)
            worst_direct = max(worst_direct, np.abs(beta - pop.beta_true).max())
        lcov = max(design.relpos)
        coefs, _ = pcr_path_from_moments(pop.sigma_xx, pop.sigma_xy, lcov)
        worst_pcr = max(worst_pcr, np.abs(coefs[lcov] - pop.beta_true).max())
    record(
        acceptance_log,
        2,
        [
            (f"Xenv(u=4) on true blocks, all 32 designs: {worst_x:.1e}", worst_x < 1e-6),
            (f"Xenv(u=4) on unreduced blocks, p=20 designs: {worst_direct:.1e}", worst_direct < 1e-6),
            (f"PCR(l=max relpos) on true blocks, all 32 designs: {worst_pcr:.1e}", worst_pcr < 1e-6),
        ],
    )


# 3


def test_criterion_3_simulation_fidelity(acceptance_log):
    t0 = time.time()
    r2_err = tr_err = 0.0
    min_eig = np.inf
    for design in design_grid():
        for seed in range(3):
            pop = assemble_population(design, np.random.default_rng(seed))
            r2_err = max(r2_err, abs(pop.latent_r2() - 0.8))
            tr_err = max(
                tr_err,
                abs(np.trace(pop.sigma_xx) - pop.lam.sum()),
                abs(np.trace(pop.sigma_yy) - pop.kappa.sum()),
            )
            min_eig = min(min_eig, pop.joint_eigenvalues()[0])
            pop.cholesky()  # raises if not positive definite
    elapsed = time.time() - t0
    record(
        acceptance_log,
        3,
        [
            (f"latent R2 error {r2_err:.1e}", r2_err < 1e-10),
            (f"joint covariance PD (min eigenvalue {min_eig:.1e})", min_eig > 0),
            (f"trace identities {tr_err:.1e}", tr_err < 1e-10),
            (f"runtime {elapsed:.1f}s", elapsed < 60),
        ],
    )


# 4


@pytest.mark.slow
def test_criterion_4_nine_like(desk_study, acceptance_log):
    _, res, elapsed = desk_study
    d = design_id(NINE_LIKE)
    est = minima(res.records, d, "est_error")
    pred = minima(res.records, d, "pred_error")
    resp = range(1, 5)
    env_l1 = all(est[m, j][1] == 1 for m in ENVELOPES for j in resp)
    pcr_l = all(est["PCR", j][1] in (7, 8) for j in resp)
    pred_band = all(1.0 <= pred[m, j][0] <= 1.10 for m in ENVELOPES for j in resp)
    pred_le = all(pred[m, j][0] <= pred["PCR", j][0] for m in ENVELOPES for j in resp)
    est_band = all(BAND[0] <= est[m, j][0] <= BAND[1] for m in ENVELOPES for j in resp)
    record(
        acceptance_log,
        4,
        [
            (f"(a) envelope est. minima at l=1: XENV {fmt(est, 'XENV')} SENV {fmt(est, 'SENV')}", env_l1),
            (f"(a) PCR est. minima at l in 7,8: {fmt(est, 'PCR')}", pcr_l),
            (f"(b) envelope pred. minima in [1, 1.10]: XENV {fmt(pred, 'XENV')} SENV {fmt(pred, 'SENV')}", pred_band),
            (f"(b) envelope pred. minima <= PCR {fmt(pred, 'PCR')}", pred_le),
            (f"(c) envelope est. minima in [{BAND[0]:.2f}, {BAND[1]:.2f}]", est_band),
            (f"desk study runtime {elapsed:.0f}s (both designs)", True),
        ],
    )


# 5


@pytest.mark.slow
def test_criterion_5_twentynine_like(desk_study, acceptance_log):
    _, res, _ = desk_study
    d = design_id(TWENTYNINE_LIKE)
    est = minima(res.records, d, "est_error")
    wins = sum(est["PCR", j][0] < min(est[m, j][0] for m in ENVELOPES) for j in range(1, 5))
    small = all(est[m, j][1] <= 2 for m in ENVELOPES for j in range(1, 5))
    record(
        acceptance_log,
        5,
        [
            (
                f"PCR below both envelopes for {wins}/4 responses: PCR {fmt(est, 'PCR')} "
                f"XENV {fmt(est, 'XENV')} SENV {fmt(est, 'SENV')}",
                wins >= 3,
            ),
            ("envelope component counts at the minimum <= 2", small),
        ],
    )


# 6


@pytest.mark.slow
def test_criterion_6_reduced_grid_manova(reduced_grid, acceptance_log):
    cfg, res, elapsed = reduced_grid
    key = design_key_frame()
    out = {}
    for name, table in (("error", res.u), ("component", res.v)):
        factors = analysis.factor_frame(table.frame, key)
        x, terms = analysis.build_model_matrix(factors, max_order=3)
        out[name] = {r.term: r for r in analysis.manova_pillai(table.values.astype(float), x, terms)}
    e, c = out["error"], out["component"]
    record(
        acceptance_log,
        6,
        [
            (f"{len(res.u)} rows (32 designs x 5 methods x 10 replicates)", len(res.u) == 1600),
            (
                f"error model: Pillai gamma {e['gamma'].pillai:.3f} > method {e['method'].pillai:.3f}",
                e["gamma"].pillai > e["method"].pillai,
            ),
            (f"component model: method p = {c['method'].p_value:.1e} < 0.001", c["method"].p_value < 1e-3),
            (
                f"relpos p = {e['relpos'].p_value:.1e} / {c['relpos'].p_value:.1e}, gamma p = "
                f"{e['gamma'].p_value:.1e} / {c['gamma'].p_value:.1e} (error / component) < 0.05",
                max(e["relpos"].p_value, c["relpos"].p_value, e["gamma"].p_value, c["gamma"].p_value) < 0.05,
            ),
            (f"runtime {elapsed / 60:.1f} min <= 120", elapsed <= 7200),
        ],
    )


# 7


def test_criterion_7_metric_and_analysis_oracles(acceptance_log):
    g = np.random.default_rng(2024)
    a, b = g.standard_normal(5), g.standard_normal(5)
    brute = sum((ai - bi) ** 2 for ai, bi in zip(a, b)) / 1.3
    est_ok = abs(estimation_error(a, b, 1.3) - brute) < 1e-12

    p = 4
    m = g.standard_normal((p, p))
    sxx = m @ m.T + 0.5 * np.eye(p)
    beta = g.standard_normal(p)
    beta_hat = beta + 0.3 * g.standard_normal(p)
    xs = g.multivariate_normal(np.zeros(p), sxx, size=200_000)
    ys = xs @ beta + np.sqrt(0.6) * g.standard_normal(200_000)
    mc = np.mean((ys - xs @ beta_hat) ** 2) / 0.6
    closed = prediction_error(beta, beta_hat, sxx, 0.6)
    pred_rel = abs(closed - mc) / mc

    y = np.array([[1.0, 2.0], [2.0, 1.5], [1.5, 3.0], [4.0, 3.5], [5.0, 5.0], [4.5, 3.0]])
    grp = np.repeat([0, 1], 3)
    x = np.column_stack([np.ones(6), grp])
    terms = [("(Intercept)", slice(0, 1)), ("g", slice(1, 2))]
    h = sum(3 * np.outer(y[grp == k].mean(0) - y.mean(0), y[grp == k].mean(0) - y.mean(0)) for k in (0, 1))
    e = sum((y[grp == k] - y[grp == k].mean(0)).T @ (y[grp == k] - y[grp == k].mean(0)) for k in (0, 1))
    pillai_err = abs(analysis.manova_pillai(y, x, terms)[0].pillai - np.trace(h @ np.linalg.inv(h + e)))

    lev = np.repeat([0.0, 1.0], 20)
    xn = np.column_stack([np.ones(40), lev])
    pv = [analysis.manova_pillai(g.standard_normal((40, 4)), xn, terms)[0].p_value for _ in range(500)]
    ks = stats.kstest(pv, "uniform").statistic
    record(
        acceptance_log,
        7,
        [
            ("estimation error vs summation oracle", est_ok),
            (f"prediction error vs Monte Carlo (200000 draws) rel. diff {pred_rel:.2%}", pred_rel < 0.01),
            (f"Pillai vs explicit SSCP {pillai_err:.1e}", pillai_err < 1e-10),
            (f"null Pillai p-values KS statistic {ks:.3f} < 0.1 (500 reps)", ks < 0.1),
        ],
    )


# 8


@pytest.mark.slow
def test_criterion_8_determinism(desk_study, study_root, acceptance_log):
    cfg, _, _ = desk_study
    names = ("records.csv", "u.csv", "v.csv")
    ref = {n: (study_root / "desk" / n).read_bytes() for n in names}
    repeat = RunConfig(designs=cfg.designs, replicates=cfg.replicates, output_dir=str(study_root / "repeat"))
    run_study(repeat)
    par = RunConfig(
        designs=cfg.designs, replicates=cfg.replicates, parallel_width=8, output_dir=str(study_root / "par8")
    )
    run_study(par)
    same_repeat = all((study_root / "repeat" / n).read_bytes() == ref[n] for n in names)
    same_par = all((study_root / "par8" / n).read_bytes() == ref[n] for n in names)
    record(
        acceptance_log,
        8,
        [
            (f"repeated desk run byte-identical ({', '.join(names)})", same_repeat),
            ("parallel_width 8 identical to 1", same_par),
        ],
    )



@pytest.mark.slow
def test_reduced_grid_gamma_largest_main_effect(reduced_grid):
    """gamma carries the largest main-effect Pillai statistic in the error
    model."""
    _, res, _ = reduced_grid
    factors = analysis.factor_frame(res.u.frame, design_key_frame())
    x, terms = analysis.build_model_matrix(factors)
    results = analysis.manova_pillai(res.u.values, x, terms)
    mains = {r.term: round(r.pillai, 4) for r in results if r.term in analysis.FACTORS}
    print("main-effect Pillai:", mains)
    assert max(mains, key=mains.get) == "gamma", mains


@pytest.mark.slow
def test_reduced_grid_envelopes_use_fewer_components(reduced_grid):
    """Both envelope methods use fewer components than PCR in every
    gamma x relpos cell."""
    _, res, _ = reduced_grid
    factors = analysis.factor_frame(res.v.frame, design_key_frame())
    eff = analysis.effect_means(res.v.values.astype(float), factors, ["method", "gamma", "relpos"])
    eff = eff.set_index(["method", "gamma", "relpos"])
    raw = eff[["y1", "y2", "y3", "y4"]].mean(axis=1)
    for gamma in (0.2, 0.9):
        for relpos in ("1:4", "5:8"):
            for env in ENVELOPES:
                assert raw[env, gamma, relpos] < raw["PCR", gamma, relpos]
                assert eff.loc[(env, gamma, relpos), "pc1"] < eff.loc[("PCR", gamma, relpos), "pc1"]
