#!/usr/bin/env python3
"""Fit a phase-type law to the Weibull(shape=2, scale=1) jump distribution.

The benchmark models in models/ use phase-type jumps standing in for a
Weibull(2, 1) claim law.  This script produces those parameters: it fits a
mixture of Erlang(k, rate) laws with a common rate (a dense subclass of
phase-type with a single free rate), by non-negative least squares on the
density over a grid, with an outer golden-section search over the rate.

The fit is a pragmatic default, not a certified benchmark; rerun with a
larger --dim for a tighter fit.  Output is the alpha / T block to paste
into a model file, plus fit diagnostics (sup-CDF error, first two moments).

Usage: python3 scripts/fit_weibull_ph.py [--dim 8] [--write-models]
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np
from scipy import optimize, special

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from levy_dividend.levy_model import PhaseTypeLaw  # noqa: E402


def weibull_pdf(x):
    return 2.0 * x * np.exp(-(x**2))


def weibull_cdf(x):
    return 1.0 - np.exp(-(x**2))


def erlang_design(xs, rate, dim):
    """Columns: Erlang(k, rate) densities at xs, k = 1..dim."""
    cols = []
    for k in range(1, dim + 1):
        cols.append(
            rate**k * xs ** (k - 1) * np.exp(-rate * xs) / math.factorial(k - 1)
        )
    return np.column_stack(cols)


def fit_weights(xs, target, rate, dim, norm_penalty=50.0):
    """Non-negative least squares with a soft sum-to-one row, then renormalize."""
    A = erlang_design(xs, rate, dim)
    A_aug = np.vstack([A, norm_penalty * np.ones(dim)])
    y_aug = np.append(target, norm_penalty)
    w, _ = optimize.nnls(A_aug, y_aug)
    total = w.sum()
    if total <= 0:
        raise RuntimeError("degenerate fit")
    w /= total
    resid = np.linalg.norm(A @ w - target)
    return w, resid


def best_fit(dim, x_max=4.0, n_grid=801):
    xs = np.linspace(1e-4, x_max, n_grid)
    target = weibull_pdf(xs)
    obj = lambda rate: fit_weights(xs, target, rate, dim)[1]
    res = optimize.minimize_scalar(obj, bounds=(0.5, 6.0 * dim), method="bounded",
                                   options={"xatol": 1e-6})
    rate = res.x
    w, resid = fit_weights(xs, target, rate, dim)
    return rate, w, resid


def diagnostics(law: PhaseTypeLaw):
    xs = np.linspace(0.0, 6.0, 1201)
    cdf = np.array([1.0 - law.survival(x) for x in xs])
    sup_cdf = np.max(np.abs(cdf - weibull_cdf(xs)))
    m1 = law.mean()
    m1_true = special.gamma(1.5)
    return sup_cdf, m1, m1_true


def format_model(name, c, sigma, alpha, rate, extra=""):
    dim = alpha.size
    T = np.diag(np.full(dim, -rate)) + np.diag(np.full(dim - 1, rate), k=1)
    lines = [
        f"# {name}: drift {c}, volatility {sigma}, Poisson rate 2 with",
        "# phase-type jumps fitted to Weibull(2, 1) by scripts/fit_weibull_ph.py",
        "# (in-repo least-squares Erlang-mixture fit; a stand-in default, not a",
        "# certified benchmark parameter set).",
        "[model]",
        f"c = {c}",
        f"sigma = {sigma}",
        "kappa = 2.0",
        "alpha = " + ", ".join(f"{a:.12g}" for a in alpha),
        "T = " + "; ".join(
            ", ".join(f"{v:.12g}" for v in row) for row in T
        ),
        "[problem]",
        "q = 0.05",
        "beta = 1.5",
        "delta = 1.0",
    ]
    return "\n".join(lines) + "\n"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--write-models", action="store_true",
                    help="write models/case1.model and models/case2.model")
    args = ap.parse_args()

    rate, w, resid = best_fit(args.dim)
    law = PhaseTypeLaw.erlang_mixture(w, rate)
    law.check()
    sup_cdf, m1, m1_true = diagnostics(law)

    print(f"dim = {args.dim}, common rate = {rate:.12g}, density L2 resid = {resid:.3e}")
    print("erlang weights:", ", ".join(f"{x:.6g}" for x in w))
    print(f"sup |CDF - Weibull CDF| = {sup_cdf:.3e}")
    print(f"mean = {m1:.6f} (Weibull: {m1_true:.6f})")
    print("alpha = " + ", ".join(f"{a:.12g}" for a in law.alpha))

    if args.write_models:
        models = Path(__file__).resolve().parents[1] / "models"
        models.mkdir(exist_ok=True)
        (models / "case1.model").write_text(
            format_model("unbounded-variation benchmark", 2.0, 0.2, law.alpha, rate)
        )
        (models / "case2.model").write_text(
            format_model("bounded-variation benchmark", 4.0, 0.0, law.alpha, rate)
        )
        print("wrote models/case1.model and models/case2.model")


if __name__ == "__main__":
    main()
