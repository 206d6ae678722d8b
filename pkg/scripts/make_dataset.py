#!/usr/bin/env python3
"""Build the bundled business-interruption claims file.

Generates a 10,000-claim synthetic portfolio whose descriptive statistics,
stratum correlations and model-fit behaviour match the published study
tables.  All randomness is drawn once; scalar knobs (per-stratum duration
tilt, interaction strength) are then solved in a deterministic inner loop
so the Pearson correlations and the linear-model R^2 land on their printed
values, and the headline cells (mean/min/max/sd of loss and duration per
stratum) are pinned exactly by affine adjustment plus extreme-row
placement.

Usage: python scripts/make_dataset.py [--out data/loss_data.csv] [--seed 7]
"""

from __future__ import annotations

import argparse
import csv
import pathlib
import sys

import numpy as np

SERVICE_LEVELS = ("t1", "t2", "t3", "t4", "t5")

# printed target cells: (mean, min, max, sd)
TARGET_Y_ALL = (109.08, 1.09, 2128.59, 113.37)
TARGET_T_ALL = (2.09, 0.01, 19.65, 2.39)
TARGET_Y_D1 = (95.56, 1.09, 902.21, 85.31)
TARGET_T_D1 = (3.20, 0.01, 16.09, 2.64)
TARGET_Y_D0 = (118.25, 2.01, 2128.59, 128.16)
TARGET_T_D0 = (1.33, 0.01, 19.65, 1.85)

CORR_D1 = 0.65
CORR_D0 = 0.75
LINEAR_R2 = 0.599

N1 = 4041  # backup plan activated
N0 = 5959  # backup absent or too late

# far-tail ladder overwriting the largest raw losses (delta = 0 stratum)
LADDER_D0 = (2128.59, 1680.0, 1340.0, 1080.0, 900.0)
LADDER_D1 = (902.21, 818.0, 748.0)

X_PROBS = (0.28, 0.24, 0.20, 0.16, 0.12)
X_ADD = np.array([-52.0, -22.0, 0.0, 28.0, 65.0])

SEVERE_SHARE_D1 = 0.13
SEVERE_SHARE_D0 = 0.32


def _pin_moments(x, mean, sd, lo, hi):
    z = (x - x.mean()) / x.std()
    return np.clip(mean + sd * z, lo, hi)


def _pin_cells(x, cells, ladder=(), ladder_rows=None, rounds=8):
    """Exact mean/sd via affine steps; min and the far tail placed.

    ``ladder_rows`` receive the ladder values (largest first); everything
    else is kept strictly below the smallest ladder value.
    """
    mean, minimum, maximum, sd = cells
    x = x.astype(float).copy()
    ladder = np.asarray(ladder, dtype=float)
    for _ in range(rounds):
        x = _pin_moments(x, mean, sd, lo=minimum, hi=maximum)
        if ladder.size:
            rows = (np.argsort(x)[-ladder.size:][::-1]
                    if ladder_rows is None else ladder_rows)
            mask = np.ones(x.size, dtype=bool)
            mask[rows] = False
            knee = ladder.min() * 0.90
            xm = x[mask]
            x[mask] = np.where(xm > knee, knee + 0.30 * (xm - knee), xm)
            x[rows] = ladder
        else:
            x[np.argmax(x)] = maximum
        x[np.argmin(x)] = minimum
    return x


def _duration(rng, n, mu, sigma, t_max):
    t = rng.lognormal(mu, sigma, n)
    for _ in range(8):
        over = t > t_max
        if not over.any():
            break
        t[over] = rng.lognormal(mu, sigma, int(over.sum()))
    return np.clip(t, 0.011, t_max)


def _rank01(x):
    """Rank transform to (0, 1), ties broken by position."""
    order = np.argsort(x, kind="stable")
    r = np.empty_like(order, dtype=float)
    r[order] = (np.arange(x.size) + 0.5) / x.size
    return r


class _Draws:
    """All stochastic inputs, drawn once so knob tuning is deterministic."""

    def __init__(self, seed: int):
        rng = np.random.default_rng(seed)
        t1 = 3.42 * rng.weibull(1.22, N1)
        for _ in range(8):
            over = t1 > 16.09
            if not over.any():
                break
            t1[over] = 3.42 * rng.weibull(1.22, int(over.sum()))
        self.t1 = _pin_cells(np.clip(t1, 0.011, 16.09), TARGET_T_D1)
        self.t0 = _pin_cells(_duration(rng, N0, -0.253, 1.038, 19.65), TARGET_T_D0)
        self.x1 = rng.choice(5, size=N1, p=X_PROBS)
        self.x0 = rng.choice(5, size=N0, p=X_PROBS)
        self.b1 = np.clip(rng.beta(4.2, 1.9, N1), 0.02, 0.98)
        self.b0 = np.clip(rng.beta(3.2, 2.1, N0), 0.02, 0.98)
        self.u1 = rng.lognormal(np.log(0.9), 0.7, N1)
        self.z1 = rng.standard_normal(N1)
        self.z0 = rng.standard_normal(N0)
        self.shuffle = np.random.default_rng(2024).permutation(N1 + N0)


def _structure(d: _Draws, q_interact: float) -> tuple[np.ndarray, np.ndarray]:
    """Raw losses per stratum before pinning.

    Each stratum mixes a calm bulk (high floor, modest spread) with a
    severe ramp whose occupancy is a power of a blended severity rank, so
    the payout distribution keeps a bounded, light-tailed right end while
    per-stratum moments land near the printed cells without distortion.
    """
    # --- backup-activated stratum ------------------------------------------
    t1, x1, b1 = d.t1, d.x1, d.b1
    lam1 = np.maximum(t1 - d.u1, 0.0)
    ratio1 = np.minimum(lam1 / t1, 1.0)
    gx1 = X_ADD[x1]
    k1 = np.quantile(t1, 1.0 - SEVERE_SHARE_D1)
    severe1 = t1 > k1
    m1 = (54.0 + 11.5 * t1 + 0.30 * gx1 + 30.0 * (0.62 - b1)
          - 22.0 * b1 * ratio1)
    if severe1.any():
        score = (0.60 * _rank01(t1[severe1]) + 0.25 * (1.0 - b1[severe1])
                 + 0.15 * _rank01(gx1[severe1]))
        pos = (0.55 * _rank01(score)
               + 0.45 * np.minimum(np.maximum(t1[severe1] - k1, 0.0), 4.0) / 4.0)
        pos = _rank01(pos)
        shelf = pos < 0.28
        level = np.where(shelf,
                         151.0 + 8.0 * pos / 0.28,
                         172.0 + 285.0 * ((pos - 0.28) / 0.72) ** 1.15)
        m1_sev = (level + 1.3 * gx1[severe1]
                  + 95.0 * (0.62 - b1[severe1]) - 42.0 * (b1 * ratio1)[severe1])
        m1 = m1.copy()
        m1[severe1] = m1_sev
    inter1 = q_interact * gx1 * (t1 - t1.mean()) * 0.11
    sig1 = np.where(severe1, 0.19, 0.205)
    y1 = np.maximum(m1 + inter1, 6.0) * np.exp(sig1 * d.z1 - 0.5 * sig1**2)

    # --- backup-failed stratum ----------------------------------------------
    t0, x0, b0 = d.t0, d.x0, d.b0
    gx0 = X_ADD[x0]
    k0 = np.quantile(t0, 1.0 - SEVERE_SHARE_D0)
    severe0 = t0 > k0
    violent = severe0 & ((x0 == 4) | ((x0 == 3) & (b0 < 0.40))) \
        & (t0 > np.quantile(t0, 0.88))
    m0 = 46.0 + 24.0 * t0 + 0.22 * gx0 + 20.0 * (0.55 - b0)
    if severe0.any():
        score = (0.60 * _rank01(t0[severe0]) + 0.25 * (1.0 - b0[severe0])
                 + 0.15 * _rank01(gx0[severe0]))
        pos = (0.55 * _rank01(score)
               + 0.45 * np.minimum(np.maximum(t0[severe0] - k0, 0.0), 3.5) / 3.5)
        pos = _rank01(pos) ** 1.25
        m0_sev = (135.0 + 345.0 * pos + 1.5 * gx0[severe0]
                  + 115.0 * (0.55 - b0[severe0]))
        m0 = m0.copy()
        m0[severe0] = m0_sev
    m0 = np.where(violent, m0 * 1.05 + 18.0, m0)
    inter0 = q_interact * gx0 * (t0 - t0.mean()) * 0.26
    sig0 = np.where(severe0, 0.22, 0.22)
    sig0 = np.where(violent, 0.38, sig0)
    y0 = np.maximum(m0 + inter0, 6.0) * np.exp(sig0 * d.z0 - 0.5 * sig0**2)
    return y1, y0



def _ladder_rows(t, x, count, q_hi):
    """Rows for the far-tail ladder: spaced duration quantiles, mixed services.

    Dense zones keep the outliers diluted inside whatever leaf a tree puts
    them in, so fitted payouts stay light-tailed.
    """
    qs = np.linspace(q_hi, q_hi - 0.025 * (count - 1), count)
    order = np.argsort(t)
    rows, used = [], set()
    for k, q in enumerate(qs):
        pos = int(q * (t.size - 1))
        for idx in order[pos::-1]:
            if idx not in used and x[idx] == k % 5:
                rows.append(idx)
                used.add(idx)
                break
    return np.asarray(rows)


def _assemble(d: _Draws, y1: np.ndarray, y0: np.ndarray,
              c1: float, c0: float) -> tuple[np.ndarray, np.ndarray]:
    """Apply the duration tilt knobs and pin every printed loss cell."""
    r1 = np.sqrt(d.t1)
    r0 = np.sqrt(d.t0)
    y1 = y1 + c1 * (r1 - r1.mean())
    y0 = y0 + c0 * (r0 - r0.mean())
    rows1 = _ladder_rows(d.t1, d.x1, len(LADDER_D1), 0.985)
    rows0 = _ladder_rows(d.t0, d.x0, len(LADDER_D0), 0.985)
    y1 = _pin_cells(y1, TARGET_Y_D1, LADDER_D1, rows1)
    y0 = _pin_cells(y0, TARGET_Y_D0, LADDER_D0, rows0)
    return y1, y0


def _corr(y, t):
    return float(np.corrcoef(y, t)[0, 1])


def _linear_r2(d: _Draws, y1, y0) -> float:
    n = N1 + N0
    y = np.concatenate([y1, y0])
    x = np.zeros((n, 9))
    x[:, 0] = np.concatenate([d.t1, d.t0])
    x[np.arange(n), 1 + np.concatenate([d.x1, d.x0])] = 1.0
    x[:, 6] = np.concatenate([np.ones(N1), np.zeros(N0)])
    x[:, 7] = np.concatenate([d.b1, d.b0])
    x[:, 8] = np.concatenate([np.maximum(d.t1 - d.u1, 0.0), np.zeros(N0)])
    design = np.column_stack([np.ones(n), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return 1.0 - float((resid**2).sum() / ((y - y.mean()) ** 2).sum())


def _solve_knob(f, lo, hi, target, tol, iters=40):
    """Monotone scalar solve by bisection on f(knob) - target."""
    flo, fhi = f(lo) - target, f(hi) - target
    if flo * fhi > 0:
        return lo if abs(flo) < abs(fhi) else hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid) - target
        if abs(fm) < tol:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate(seed: int = 7, verbose: bool = False) -> dict:
    d = _Draws(seed)
    q = 1.0
    c1 = c0 = 0.0
    for _ in range(4):
        y1_raw, y0_raw = _structure(d, q)

        def corr1_of(c):
            y1, _ = _assemble(d, y1_raw, y0_raw, c, c0)
            return _corr(y1, d.t1)

        def corr0_of(c):
            _, y0 = _assemble(d, y1_raw, y0_raw, c1, c)
            return _corr(y0, d.t0)

        c1 = _solve_knob(corr1_of, -120.0, 120.0, CORR_D1, 1e-5)
        c0 = _solve_knob(corr0_of, -160.0, 160.0, CORR_D0, 1e-5)

        def r2_of(qq):
            a, b = _structure(d, qq)
            y1, y0 = _assemble(d, a, b, c1, c0)
            return _linear_r2(d, y1, y0)

        # R^2(q) is a downward parabola; aim for the target on its left arm,
        # falling back to the maximiser when the target is out of reach
        qs = np.linspace(-4.0, 4.0, 33)
        vals = np.array([r2_of(qq) for qq in qs])
        peak = int(vals.argmax())
        if vals[peak] <= LINEAR_R2:
            q_new = float(qs[peak])
            if verbose:
                print(f"  max achievable linear R2 = {vals[peak]:.4f} at q = {q_new:.2f}")
        else:
            lo = qs[: peak + 1][vals[: peak + 1] <= LINEAR_R2]
            lo = float(lo[-1]) if lo.size else float(qs[0])
            q_new = _solve_knob(r2_of, lo, float(qs[peak]), LINEAR_R2, 1e-5)
        if verbose:
            print(f"  knobs: c1={c1:.3f} c0={c0:.3f} q={q_new:.3f}")
        if abs(q_new - q) < 1e-3:
            q = q_new
            break
        q = q_new

    y1, y0 = _assemble(d, *_structure(d, q), c1, c0)
    if verbose:
        print(f"  corr1={_corr(y1, d.t1):.4f} corr0={_corr(y0, d.t0):.4f} "
              f"linR2={_linear_r2(d, y1, y0):.4f}")
    lam1 = np.maximum(d.t1 - d.u1, 0.0)
    return {
        "loss": np.concatenate([y1, y0]),
        "duration": np.concatenate([d.t1, d.t0]),
        "service": np.concatenate([d.x1, d.x0]),
        "delta": np.concatenate([np.ones(N1, dtype=int), np.zeros(N0, dtype=int)]),
        "quality": np.concatenate([d.b1, d.b0]),
        "excess": np.concatenate([lam1, np.zeros(N0)]),
        "order": d.shuffle,
    }


def write_csv(cols: dict, path: pathlib.Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        w = csv.writer(handle)
        w.writerow(["loss", "duration", "service_type", "backup_activated",
                    "backup_quality", "backup_excess"])
        for i in cols["order"]:
            w.writerow([
                f"{cols['loss'][i]:.6f}",
                f"{cols['duration'][i]:.6f}",
                SERVICE_LEVELS[cols["service"][i]],
                cols["delta"][i],
                f"{cols['quality'][i]:.6f}",
                f"{cols['excess'][i]:.6f}",
            ])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/loss_data.csv")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args(argv)
    cols = generate(args.seed, args.verbose)
    write_csv(cols, pathlib.Path(args.out))
    print(f"wrote {cols['loss'].size} claims to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
