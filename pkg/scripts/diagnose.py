#!/usr/bin/env python3
"""Scorecard of the bundled dataset against the study's headline numbers.

Runs the full pipeline (descriptives, model fits, aversion calibration,
demand-vs-solvency frontier, hybrid design, Monte Carlo ruin) and prints
each quantity next to its target band.  Used while tuning the generator;
keep it runnable as a one-stop integration check.
"""

from __future__ import annotations

import argparse
import math
import sys
import time

import numpy as np

from indexins.data import correlation, describe, load_claims
from indexins import models
from indexins import utility as ut
from indexins import solvency as sv
from indexins import hybrid as hy
from indexins.stats import GpdTail


def block(title):
    print(f"\n== {title} " + "=" * max(0, 60 - len(title)))


def check(name, value, lo, hi, fmt="{:.4f}"):
    ok = "PASS" if lo <= value <= hi else "FAIL"
    print(f"  {name:44s} {fmt.format(value):>12s}  [{fmt.format(lo)}, {fmt.format(hi)}]  {ok}")


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", default="data/loss_data.csv")
    ap.add_argument("--fast", action="store_true", help="skip demand/MC blocks")
    ap.add_argument("--tau", type=float, default=0.8)
    args = ap.parse_args(argv)

    t_start = time.time()
    ds = load_claims(args.data)
    p = ds.claim_frequency

    block("Table-1 cells (rel err vs printed, tol 0.5%)")
    targets = {
        ("loss", None): (109.08, 1.09, 2128.59, 113.37),
        ("duration", None): (2.09, 0.01, 19.65, 2.39),
        ("loss", True): (95.56, 1.09, 902.21, 85.31),
        ("duration", True): (3.20, 0.01, 16.09, 2.64),
        ("loss", False): (118.25, 2.01, 2128.59, 128.16),
        ("duration", False): (1.33, 0.01, 19.65, 1.85),
    }
    worst = 0.0
    for (var, cond), cells in targets.items():
        st = describe(ds, var, cond)
        got = (st.mean, st.minimum, st.maximum, st.sd)
        rel = max(abs(g - t) / abs(t) for g, t in zip(got, cells))
        worst = max(worst, rel)
        print(f"  {var:9s} delta={str(cond):5s} rel_err={rel:.5f} got="
              + ", ".join(f"{g:.3f}" for g in got))
    check("worst relative cell error", worst, 0.0, 0.005, "{:.5f}")

    block("correlations loss~duration")
    check("overall", correlation(ds, "loss", "duration"), 0.56, 0.58)
    check("delta=1", correlation(ds, "loss", "duration", True), 0.64, 0.66)
    check("delta=0", correlation(ds, "loss", "duration", False), 0.74, 0.76)

    block("model metrics (in-sample)")
    fits = {}
    mets = {}
    for method in ("linear", "tree", "forest", "boosted"):
        t0 = time.time()
        fits[method] = models.fit_conditional_mean(ds, method, seed=0)
        mets[method] = models.evaluate(fits[method], ds)
        m = mets[method]
        print(f"  {method:8s} r2={m.r2:.4f} corr={m.correlation:.4f} "
              f"rmse={m.rmse:.2f} mae={m.mae:.2f}  ({time.time()-t0:.1f}s)")
    check("linear r2", mets["linear"].r2, 0.589, 0.609)
    check("linear corr", mets["linear"].correlation, 0.764, 0.784)
    ordered = (min(mets["boosted"].r2, mets["forest"].r2)
               > max(mets["tree"].r2, mets["linear"].r2))
    print(f"  boosted/forest beat tree/linear: {ordered}")
    coefs = models.linear_coefficients(fits["linear"])
    print("  linear coefs:", {k: round(v, 3) for k, v in coefs.items()
                              if k in ("duration", "backup_activated", "backup_quality", "backup_excess")})
    signs_ok = (coefs["duration"] > 0 and coefs["backup_activated"] < 0
                and coefs["backup_quality"] < 0 and coefs["backup_excess"] < 0)
    print(f"  sign pattern (+T, -delta, -B, -Lambda): {signs_ok}")

    boosted = fits["boosted"]
    preds = models.cond_mean(boosted, ds)
    cv = preds.std() / preds.mean()
    sk = float(((preds - preds.mean()) ** 3).mean() / preds.std() ** 3)
    print(f"  boosted payout cv={cv:.4f} skew={sk:.3f} mean={preds.mean():.2f}")

    block("aversion calibration (claims-only)")
    pi_y_claims = 1.4 * ds.mean_loss
    a_minus = ut.calibrate_alpha_minus(ds, pi_y_claims, "claims")
    lam = ut.calibrate_lambda(ds, a_minus, pi_y_claims, 1.4, 0.5, "claims")
    mu = ut.AversionDistribution(a_minus, lam)
    print(f"  alpha_minus={a_minus:.6f} lambda={lam:.2f} mean_aversion={mu.mean:.6f}")
    print(f"  alpha_minus*meanY = {a_minus*ds.mean_loss:.3f} (scale check)")

    if args.fast:
        print(f"\n(total {time.time()-t_start:.1f}s, fast mode)")
        return 0

    block(f"demand vs solvency (tau={args.tau}, boosted)")
    e_ann = ds.annual_mean_loss
    beta = 0.9
    a_hi = a_minus + 8.0 / lam
    grid = np.linspace(a_minus * 0.999, a_hi, 25)
    t0 = time.time()
    laps = [models.fit_cond_laplace(ds, float(a), "boosted", seed=0) for a in grid]
    print(f"  ({len(grid)} laplace fits in {time.time()-t0:.1f}s)")

    moments = sv.portfolio_moments(ds, boosted, beta, "claims")
    print(f"  claims moments: pi*={moments.pi_star:.2f} sigma={moments.sigma_phi:.2f} "
          f"cv={moments.sigma_phi/moments.pi_star:.4f}")

    def demand(theta: float) -> float:
        params = ut.PricingParams(0.4, theta, beta, args.tau, e_ann)
        return ut.demand_count_direct(ds, boosted, laps, 500, mu, params, grid)

    def threshold(theta: float) -> float:
        return sv.n_min_gaussian(moments, theta, 0.005)

    for th in (0.10, 0.13, 0.15, 0.16, 0.18, 0.20, 0.25, 0.30):
        print(f"  theta={th:.2f} demand={demand(th):8.1f}  n_min={threshold(th):6d}")
    res = sv.theta_min_search(demand, threshold, np.arange(0.04, 0.42, 0.01))
    if res.feasible:
        print(f"  theta_min={res.theta_min:.4f} demand={res.demand_at_min:.1f} "
              f"threshold={res.threshold_at_min:.1f}")
        check("theta_min", res.theta_min, 0.15, 0.21)
        check("demand at theta_min", res.demand_at_min, 245, 1e9, "{:.1f}")
    else:
        print(f"  INFEASIBLE everywhere; closest gap {res.closest_gap:.1f} at {res.closest_theta:.3f}")
    check("n_min_gaussian(0.18)", threshold(0.18), 234, 286, "{:.0f}")

    block("hybrid design (alpha = mean aversion)")
    alpha_h = mu.mean
    lap_h = models.fit_cond_laplace(ds, alpha_h, "boosted", seed=0)
    for stratum, label in ((True, "d1"), (False, "d0")):
        sub = ds.subset(ds.mask(stratum))
        sub_lap = models.fit_cond_laplace(sub, alpha_h, "boosted", seed=0)
        sub_mean = boosted
        for method, p_target, lo, hi in (
            ("tree", 0.8379 if stratum else 0.6787, 0.28 if stratum else 0.22, 0.36 if stratum else 0.30),
            ("boosted", 0.8943 if stratum else 0.4960, 0.23 if stratum else 0.18, 0.31 if stratum else 0.26),
        ):
            dm = hy.fit_delta_model(sub, sub_mean, sub_lap, beta, method, seed=0)
            e_star, share = hy.solve_e_for_share(sub, dm, p_target)
            flags, p_e = hy.partition(sub, dm, e_star)
            eta_e, theta_max = hy.eta_e_theta_max(sub, flags, beta, 0.4, e_star)
            print(f"  {label} {method:8s} target_pe={p_target:.4f} got_pe={p_e:.4f} "
                  f"e*={e_star:8.3f} theta_max={theta_max:.4f}  [{lo:.2f},{hi:.2f}] "
                  f"{'PASS' if lo <= theta_max <= hi else 'FAIL'}")

    block("Monte Carlo ruin oracle (claims basis)")
    theta_mc = res.theta_min if res.feasible else 0.18
    for th in (theta_mc, 0.18):
        n_req = threshold(th)
        est = sv.simulate_ruin(ds, boosted, n_req, th, beta, trials=100_000,
                               seed=11, claim_prob=1.0)
        bar = 0.005 + 3 * est.ci_half_width
        print(f"  theta={th:.4f} n={n_req} ruin={est.probability:.5f} "
              f"ci={est.ci_half_width:.5f} bar={bar:.5f} "
              f"{'PASS' if est.probability <= bar else 'FAIL'}")

    tail = GpdTail(shape=0.5, scale=0.003)
    params = sv.SolvencyParams(eps=0.005, eps_prime=0.0025, a=2.4, tail=tail)
    th_acc = 0.20
    try:
        n_acc = sv.n_min_accumulation(moments, th_acc, params)
        est = sv.simulate_ruin(ds, boosted, n_acc, th_acc, beta, trials=100_000,
                               seed=12, claim_prob=1.0, accumulation=tail)
        print(f"  accumulation theta={th_acc} n={n_acc} ruin={est.probability:.5f} "
              f"{'PASS' if est.probability <= 0.005 else 'FAIL'}")
    except Exception as exc:
        print(f"  accumulation: {exc}")

    print(f"\n(total {time.time()-t_start:.1f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
