"""Command-line front-end.

Subcommands: solve, value, gcurve, simulate, verify, sweep.  Input is a
key = value model file; output is a flat key = value text or a CSV with a
header row and 12 significant digits, written atomically.  Exit codes:
0 success, 1 verification/acceptance failure, 2 input error.

The environment variable LEVY_DIVIDEND_THREADS caps the worker threads
used for sweep points (default 1).
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import simulator, solver, verifier
from .levy_model import ModelFileError, load_model_file, validate


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: str
    out: str | None = None
    grid: tuple[float, float, float] | None = None
    b_list: tuple[float, ...] = ()
    sweep_param: str | None = None
    sweep_values: tuple[float, ...] = ()
    n_paths: int = 100_000
    dt: float = 0.01
    seed: int = 0
    horizon: float | None = None
    antithetic: bool = False
    x0: float = 0.0
    b_override: float | None = None
    target: str = "npv"
    grid_out: str | None = None
    paths_out: str | None = None


_COMMANDS = ("solve", "value", "gcurve", "simulate", "verify", "sweep")


def _threads() -> int:
    raw = os.environ.get("LEVY_DIVIDEND_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _atomic_write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or Path("."), prefix=target.name)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def _csv(header: list[str], rows: list[list[float | str]]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(c if isinstance(c, str) else _fmt(c) for c in row))
    return "\n".join(lines) + "\n"


def _parse_grid(spec: str) -> tuple[float, float, float]:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must be a:b:step, got {spec!r}")
    return float(parts[0]), float(parts[1]), float(parts[2])


def _grid_points(grid: tuple[float, float, float]) -> np.ndarray:
    a, b, step = grid
    if step <= 0:
        raise ValueError("grid step must be > 0")
    pts = np.arange(a, b + 0.5 * step, step)
    if pts.size == 0:
        raise ValueError("grid is empty")
    return pts


def _parse_floats(spec: str) -> tuple[float, ...]:
    return tuple(float(v) for v in spec.split(",") if v.strip())


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_solve(cfg: RunConfig, ctx: solver.Context) -> int:
    sol = solver.find_threshold(ctx)
    _atomic_write(cfg.out, solver.solution_to_text(sol))
    return 0


def cmd_gcurve(cfg: RunConfig, ctx: solver.Context) -> int:
    bs = _grid_points(cfg.grid or (0.0, 40.0, 0.5))
    sol = solver.find_threshold(ctx)
    bs = np.unique(np.append(bs, sol.b_star))
    rows = []
    for b in bs:
        rows.append([
            float(b),
            solver.g_of_b(ctx, b),
            solver.h_of_b(ctx, b),
            solver.g_over_h(ctx, b),
            "1" if abs(b - sol.b_star) < 1e-12 else "0",
        ])
    _atomic_write(cfg.out, _csv(["b", "g", "h", "g_over_h", "is_b_star"], rows))
    return 0


def cmd_value(cfg: RunConfig, ctx: solver.Context) -> int:
    sol = solver.find_threshold(ctx)
    grid = cfg.grid or (0.0, sol.b_star + 10.0, 0.1)
    xs = _grid_points(grid)
    bs = [sol.b_star] + [b for b in cfg.b_list if abs(b - sol.b_star) > 1e-12]
    header = ["x"]
    cols = []
    for b in bs:
        vf = solver.value_function(ctx, b)
        header += [f"v_b{b:.6g}", f"dv_b{b:.6g}"]
        cols.append((vf.values(xs), vf.derivs(xs)))
    rows = []
    for i, x in enumerate(xs):
        row: list[float | str] = [float(x)]
        for v, dv in cols:
            row += [float(v[i]), float(dv[i])]
        rows.append(row)
    _atomic_write(cfg.out, _csv(header, rows))
    return 0


def _sweep_one(ctx_base: solver.Context, param: str, value: float, xs: np.ndarray):
    if param == "beta":
        params = replace(ctx_base.params, beta=value)
    else:
        params = replace(ctx_base.params, delta=value)
    ctx = solver.make_context(ctx_base.model, params)
    sol = solver.find_threshold(ctx)
    vf = solver.value_function(ctx, sol.b_star)
    return value, sol.b_star, vf.values(xs)


def cmd_sweep(cfg: RunConfig, ctx: solver.Context) -> int:
    if cfg.sweep_param not in ("beta", "delta"):
        raise ValueError("--sweep must be beta=... or delta=...")
    if not cfg.sweep_values or any(v <= 0 for v in cfg.sweep_values):
        raise ValueError("sweep values must be positive")
    xs = _grid_points(cfg.grid or (0.0, 20.0, 1.0))
    workers = _threads()
    job = lambda v: _sweep_one(ctx, cfg.sweep_param, v, xs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, cfg.sweep_values))
    else:
        results = [job(v) for v in cfg.sweep_values]
    header = [cfg.sweep_param, "b_star"] + [f"v_x{x:.6g}" for x in xs]
    rows = [[v, b, *map(float, vals)] for v, b, vals in results]
    _atomic_write(cfg.out, _csv(header, rows))
    return 0


def cmd_verify(cfg: RunConfig, ctx: solver.Context) -> int:
    sol = solver.find_threshold(ctx)
    if cfg.b_override is not None:
        sol = replace(sol, b_star=cfg.b_override,
                      zero_threshold=cfg.b_override == 0.0,
                      g_residual=solver.g_of_b(ctx, cfg.b_override))
    rep = verifier.check_hjb(ctx, sol)
    _atomic_write(cfg.out, verifier.report_to_text(rep))
    if cfg.grid_out:
        rows = [[x, r, v, vp] for x, r, v, vp in rep.rows]
        _atomic_write(cfg.grid_out, _csv(["x", "residual", "v", "dv"], rows))
    return 0 if rep.passed else 1


def cmd_simulate(cfg: RunConfig, ctx: solver.Context) -> int:
    if cfg.b_override is not None:
        b = cfg.b_override
    else:
        b = solver.find_threshold(ctx).b_star
    sim_cfg = simulator.SimConfig(
        n_paths=cfg.n_paths, dt=cfg.dt, horizon=cfg.horizon,
        seed=cfg.seed, antithetic=cfg.antithetic,
    )
    run = simulator.simulate_npv if cfg.target == "npv" else simulator.simulate_ruin_laplace
    est, sample = run(ctx.model, ctx.params, b, cfg.x0, sim_cfg, return_paths=True)
    _atomic_write(cfg.out, simulator.estimate_to_text(est))
    if cfg.paths_out:
        _atomic_write(cfg.paths_out, simulator.paths_to_csv(sample))
    return 0


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levy-dividend",
        description="Bail-out dividend optimization for spectrally negative "
                    "Levy models with phase-type jumps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", required=True, help="model file path")
        p.add_argument("--out", default=None, help="output path (default: stdout)")

    p = sub.add_parser("solve", help="compute the optimal threshold")
    common(p)

    p = sub.add_parser("gcurve", help="CSV of b, g(b), h(b), g/h over a b-grid")
    common(p)
    p.add_argument("--grid", default=None, help="a:b:step over b (default 0:40:0.5)")

    p = sub.add_parser("value", help="CSV of x, v_b(x), v_b'(x) for a list of b")
    common(p)
    p.add_argument("--grid", default=None, help="a:b:step over x")
    p.add_argument("--b-list", default="", help="comma-separated thresholds "
                   "(the optimum is always included)")

    p = sub.add_parser("sweep", help="re-solve over a beta or delta grid")
    common(p)
    p.add_argument("--sweep", required=True, help="beta=v1,v2,... or delta=v1,v2,...")
    p.add_argument("--grid", default=None, help="a:b:step over x for value columns")

    p = sub.add_parser("verify", help="certify the variational inequalities")
    common(p)
    p.add_argument("--b", type=float, default=None,
                   help="verify this threshold instead of the optimum")
    p.add_argument("--grid-out", default=None, help="per-gridpoint CSV path")

    p = sub.add_parser("simulate", help="Monte Carlo estimate of the NPV or "
                       "the ruin-time transform")
    common(p)
    p.add_argument("--target", choices=("npv", "ruin"), default="npv")
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--b", type=float, default=None,
                   help="threshold (default: the solved optimum)")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--paths-out", default=None, help="per-path CSV dump")
    return parser


def _to_config(ns: argparse.Namespace) -> RunConfig:
    grid = _parse_grid(ns.grid) if getattr(ns, "grid", None) else None
    sweep_param, sweep_values = None, ()
    if getattr(ns, "sweep", None):
        if "=" not in ns.sweep:
            raise ValueError("--sweep must look like beta=1.1,1.5")
        sweep_param, vals = ns.sweep.split("=", 1)
        sweep_param = sweep_param.strip()
        sweep_values = _parse_floats(vals)
    return RunConfig(
        command=ns.command,
        model=ns.model,
        out=ns.out,
        grid=grid,
        b_list=_parse_floats(getattr(ns, "b_list", "") or ""),
        sweep_param=sweep_param,
        sweep_values=sweep_values,
        n_paths=getattr(ns, "paths", 100_000),
        dt=getattr(ns, "dt", 0.01),
        seed=getattr(ns, "seed", 0),
        horizon=getattr(ns, "horizon", None),
        antithetic=getattr(ns, "antithetic", False),
        x0=getattr(ns, "x0", 0.0),
        b_override=getattr(ns, "b", None),
        grid_out=getattr(ns, "grid_out", None),
        paths_out=getattr(ns, "paths_out", None),
        target=getattr(ns, "target", "npv"),
    )


_DISPATCH = {
    "solve": cmd_solve,
    "gcurve": cmd_gcurve,
    "value": cmd_value,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = _to_config(ns)
        model, params = load_model_file(cfg.model)
        validate(model, params)
    except (ModelFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        ctx = solver.make_context(model, params, check=False)
        return _DISPATCH[cfg.command](cfg, ctx)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerics or verification failure
        print(f"failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
