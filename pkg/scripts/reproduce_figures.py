#!/usr/bin/env python3
"""Regenerate the benchmark figure data as CSV files.

Drives the CLI end to end on the two shipped models:

* fig1_*   -- b vs g(b)/h(b) for a ladder of injection costs (the curves
              move up with beta; the zero of g marks the threshold)
* fig2_*   -- value function of the optimal threshold next to deliberately
              non-optimal thresholds (the optimum dominates pointwise)
* fig3_*   -- sensitivity of the value to the injection cost beta and to
              the dividend cap delta

Usage: python3 scripts/reproduce_figures.py [--out-dir out]
"""

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from levy_dividend.cli import main as cli  # noqa: E402
from levy_dividend.solver import solution_from_text  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
BETAS = "1.01,1.05,1.1,1.5,2,3"


def model_with_beta(base: Path, beta: float, tmp: Path) -> Path:
    text = []
    for line in base.read_text().splitlines():
        if line.strip().startswith("beta"):
            line = f"beta = {beta}"
        text.append(line)
    out = tmp / f"{base.stem}_beta{beta}.model"
    out.write_text("\n".join(text) + "\n")
    return out


def run(args):
    code = cli(args)
    if code != 0:
        raise SystemExit(f"command failed ({code}): {' '.join(args)}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="out")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as td:
        tmp = Path(td)
        for case in ("case1", "case2"):
            base = ROOT / "models" / f"{case}.model"

            # threshold-selection curves per injection cost
            for beta in (1.01, 1.05, 1.1, 1.5, 2.0, 3.0):
                mf = model_with_beta(base, beta, tmp)
                run(["gcurve", "--model", str(mf), "--grid", "0:15:0.05",
                     "--out", str(out / f"fig1_{case}_beta{beta}.csv")])

            # value-function comparison around the optimum
            sol_file = tmp / f"{case}.sol"
            run(["solve", "--model", str(base), "--out", str(sol_file)])
            sol = solution_from_text(sol_file.read_text())
            if sol.b_star > 0:
                blist = ",".join(
                    f"{f * sol.b_star:.6g}" for f in (1 / 3, 2 / 3, 4 / 3)
                )
            else:
                blist = "0.25,0.5,0.75,1"
            run(["value", "--model", str(base),
                 "--grid", f"0:{sol.b_star + 10:.4g}:0.05",
                 "--b-list", blist, "--out", str(out / f"fig2_{case}.csv")])

        # sensitivity sweeps on the diffusion case
        beta_grid = ",".join(
            [f"{1 + 0.01 * k:.2f}" for k in range(1, 10)]
            + [f"{1 + 0.1 * k:.1f}" for k in range(1, 21)]
        )
        delta_grid = ",".join(
            [f"{0.01 * k:.2f}" for k in range(1, 10)]
            + [f"{0.1 * k:.1f}" for k in range(1, 31)]
        )
        base = ROOT / "models" / "case1.model"
        run(["sweep", "--model", str(base), "--sweep", f"beta={beta_grid}",
             "--grid", "0:12:0.25", "--out", str(out / "fig3_beta.csv")])
        run(["sweep", "--model", str(base), "--sweep", f"delta={delta_grid}",
             "--grid", "0:12:0.25", "--out", str(out / "fig3_delta.csv")])

    print(f"wrote figure data to {out}/")


if __name__ == "__main__":
    main()
