"""Optimal refraction threshold and the candidate value function.

Dividends are paid at the maximal admissible rate above a threshold b and
capital is injected at zero.  The net present value v_b of that strategy
has a closed form in the scale objects; the slope of v_b jumps at b by an
amount proportional to

    g(b) = beta*Z(b) - 1 - W(b) * f(b),

so the smooth-fit threshold b* is the first b with g(b) <= 0.  This module
computes f, g, h, b*, assembles v_b and its derivatives as piecewise
exponential mixtures, and exposes the ruin-time Laplace transform of the
refracted process, which coincides with v'/beta at the optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .levy_model import LevyModel, ProblemParams, mean_rate, validate
from .scale_engine import (
    ExpMixture,
    PiecewiseExp,
    ScaleSet,
    build_scale_set,
    convolve_mixture,
    derivative,
    shift,
    weighted_tail_integral,
)


class BracketFailure(RuntimeError):
    """No sign change of g found; signals a numerics bug, not a model case."""


@dataclass(frozen=True)
class Context:
    """A validated model with its scale objects; everything here is immutable."""

    model: LevyModel
    params: ProblemParams
    scales: ScaleSet


def make_context(model: LevyModel, params: ProblemParams, *, check: bool = True) -> Context:
    if check:
        validate(model, params)
    return Context(model, params, build_scale_set(model, params))


@dataclass(frozen=True)
class Solution:
    b_star: float
    f_at_b_star: float
    phi_q: float
    varphi_q: float
    zero_threshold: bool
    g_residual: float


# --------------------------------------------------------------------------
# f, h, g
# --------------------------------------------------------------------------

def _tail_W(ctx: Context, b: float) -> float:
    """int_0^inf e^{-varphi(q) y} W(y + b) dy; strictly positive."""
    return weighted_tail_integral(ctx.scales.W, ctx.scales.varphi_q, b)


def _tail_Wprime(ctx: Context, b: float) -> float:
    return weighted_tail_integral(derivative(ctx.scales.W), ctx.scales.varphi_q, b)


def f_of_b(ctx: Context, b: float) -> float:
    """Dividend-scale factor entering v_b; finite for every b >= 0."""
    if b < 0:
        raise ValueError("b must be >= 0")
    beta, q = ctx.params.beta, ctx.params.q
    iw = _tail_W(ctx, b)
    zb = ctx.scales.Z(b)
    return (beta * zb - 1.0 + beta * q * iw) / (ctx.scales.varphi_q * iw)


def h_of_b(ctx: Context, b: float) -> float:
    """h(b) = 1 - W(b) / (varphi(q) * tail integral); strictly positive."""
    if b < 0:
        raise ValueError("b must be >= 0")
    return 1.0 - ctx.scales.W(b) / (ctx.scales.varphi_q * _tail_W(ctx, b))


def g_of_b(ctx: Context, b: float) -> float:
    """Slope-gap factor: v_b'(b+) - v_b'(b-) = delta * WY(0) * g(b)."""
    if b < 0:
        raise ValueError("b must be >= 0")
    beta = ctx.params.beta
    return beta * ctx.scales.Z(b) - 1.0 - ctx.scales.W(b) * f_of_b(ctx, b)


def g_over_h(ctx: Context, b: float) -> float:
    """g/h equals beta * E_b[e^{-q ruin time of the refracted process}] - 1,
    hence lies in [-1, beta - 1] and tends to -1 as b grows."""
    return g_of_b(ctx, b) / h_of_b(ctx, b)


def zero_threshold_criterion(ctx: Context) -> float:
    """Closed form of g(0).

    For bounded variation this is beta - 1 + (1 - beta - beta*q/(delta*
    varphi(q))) * delta/c, computed without touching g; the threshold is
    zero exactly when this is <= 0.  With a diffusion component it equals
    beta - 1 > 0, so the threshold is always positive.
    """
    beta, q, delta = ctx.params.beta, ctx.params.q, ctx.params.delta
    if not ctx.model.bounded_variation:
        return beta - 1.0
    w0 = 1.0 / ctx.model.c
    return beta - 1.0 + (1.0 - beta - beta * q / (delta * ctx.scales.varphi_q)) * delta * w0


# --------------------------------------------------------------------------
# Threshold search
# --------------------------------------------------------------------------

_SUBSCAN = 32


def find_threshold(ctx: Context) -> Solution:
    """Smallest b with g(b) <= 0.

    g(0) <= 0 gives the zero threshold directly.  Otherwise brackets
    [2^k, 2^{k+1}] are scanned in order, each subdivided so the *first*
    sign change is caught even if g is not monotone, then bisected to an
    interval of width 1e-12.
    """
    g0 = g_of_b(ctx, 0.0)
    if g0 <= 0.0:
        return Solution(
            b_star=0.0,
            f_at_b_star=f_of_b(ctx, 0.0),
            phi_q=ctx.scales.phi_q,
            varphi_q=ctx.scales.varphi_q,
            zero_threshold=True,
            g_residual=g0,
        )

    lo = 0.0
    hi = 1.0
    bracket = None
    while bracket is None:
        if hi > 1e6:
            raise BracketFailure("no sign change of g up to b = 1e6")
        grid = np.linspace(lo, hi, _SUBSCAN + 1)[1:]
        vals = np.array([g_of_b(ctx, b) for b in grid])
        if not np.all(np.isfinite(vals)):
            raise BracketFailure(f"g not finite while scanning up to b = {hi}")
        neg = np.nonzero(vals <= 0.0)[0]
        if neg.size:
            k = neg[0]
            bracket = (grid[k - 1] if k else lo, grid[k])
        else:
            lo = hi
            hi *= 2.0

    a, b = bracket
    for _ in range(200):
        if b - a <= 1e-12:
            break
        mid = 0.5 * (a + b)
        if g_of_b(ctx, mid) > 0.0:
            a = mid
        else:
            b = mid
    b_star = 0.5 * (a + b)
    return Solution(
        b_star=b_star,
        f_at_b_star=f_of_b(ctx, b_star),
        phi_q=ctx.scales.phi_q,
        varphi_q=ctx.scales.varphi_q,
        zero_threshold=False,
        g_residual=g_of_b(ctx, b_star),
    )


# --------------------------------------------------------------------------
# Value function assembly
# --------------------------------------------------------------------------

def _drop_growing_rates(m: ExpMixture, rel_tol: float = 1e-6) -> ExpMixture:
    """Remove the analytically-cancelled growing exponentials.

    The positive roots enter each raw piece of v_b but their assembled
    coefficients vanish identically; here they are only float residue.  A
    residue above ``rel_tol`` of the mixture scale means an assembly bug.
    """
    if not m.terms:
        return m
    scale = max(abs(t.coef) for t in m.terms)
    kept = []
    for t in m.terms:
        if t.rate.real > 1e-9:
            if abs(t.coef) > rel_tol * scale:
                raise ArithmeticError(
                    f"growing term {t} failed to cancel (scale {scale:.3e})"
                )
            continue
        kept.append(t)
    return ExpMixture(tuple(kept))


def _assemble_value_general(ctx: Context, b: float) -> PiecewiseExp:
    """v_b from the four-term closed form, for any b >= 0."""
    s = ctx.scales
    beta, q, delta = ctx.params.beta, ctx.params.q, ctx.params.delta
    fb = f_of_b(ctx, b)
    base = s.Zbar.scaled(beta) + ExpMixture.constant(beta * mean_rate(ctx.model) / q) \
        + s.Z.scaled(-fb / q)
    above = (
        base
        + shift(s.WYbar, b).scaled(-delta)
        + convolve_mixture(s.WY, s.Z, b).scaled(beta * delta)
        + convolve_mixture(s.WY, s.W, b).scaled(-fb * delta)
    )
    above = _drop_growing_rates(above)
    if b == 0.0:
        v0 = above(0.0)
        return PiecewiseExp((0.0,), (above,), v0, beta)
    below = base
    v0 = below(0.0)
    return PiecewiseExp((0.0, float(b)), (below, above), v0, beta)


def _value_zero_threshold(ctx: Context) -> PiecewiseExp:
    """Closed form of v_0 in the refracted scale objects alone."""
    s = ctx.scales
    beta, q, delta = ctx.params.beta, ctx.params.q, ctx.params.delta
    const = delta / q + beta * (mean_rate(ctx.model) / q - delta / q)
    m = ExpMixture.constant(const) + s.ZYbar.scaled(beta) \
        + s.ZY.scaled(-beta / s.varphi_q)
    m = _drop_growing_rates(m)
    return PiecewiseExp((0.0,), (m,), m(0.0), beta)


def value_function(ctx: Context, b: float) -> PiecewiseExp:
    """v_b as a piecewise mixture; below zero it continues with slope beta
    (an initial injection back to zero)."""
    if b < 0:
        raise ValueError("b must be >= 0")
    if b == 0.0:
        return _value_zero_threshold(ctx)
    return _assemble_value_general(ctx, b)


def value_at(ctx: Context, b: float, x) -> float | np.ndarray:
    vf = value_function(ctx, b)
    if np.ndim(x) == 0:
        return vf.value(float(x))
    return vf.values(np.asarray(x, dtype=float))


def value_derivative_at(ctx: Context, b: float, x: float) -> tuple[float, float]:
    """One-sided derivatives (left, right); they differ only at the kinks."""
    vf = value_function(ctx, b)
    return vf.deriv(x, 1, side=-1), vf.deriv(x, 1, side=+1)


# --------------------------------------------------------------------------
# Ruin-time Laplace transform of the refracted process
# --------------------------------------------------------------------------

def ruin_transform_function(ctx: Context, b: float) -> PiecewiseExp:
    """E_x[e^{-q * (first passage of the refracted process below 0)}] as a
    function of the start point x, for refraction level b.

    At b = b* this equals v'_{b*}/beta everywhere, which is how the slope
    bounds are certified.
    """
    if b < 0:
        raise ValueError("b must be >= 0")
    s = ctx.scales
    q, delta = ctx.params.q, ctx.params.delta
    Wp = derivative(s.W)
    ratio = _tail_W(ctx, b) / _tail_Wprime(ctx, b)
    below = s.Z + s.W.scaled(-q * ratio)
    above = (
        below
        + convolve_mixture(s.WY, s.W, b).scaled(delta * q)
        + convolve_mixture(s.WY, Wp, b).scaled(-q * ratio * delta)
    )
    above = _drop_growing_rates(above)
    if b == 0.0:
        return PiecewiseExp((0.0,), (above,), 1.0, 0.0)
    return PiecewiseExp((0.0, float(b)), (below, above), 1.0, 0.0)


def refracted_ruin_laplace(ctx: Context, b: float, x: float) -> float:
    return ruin_transform_function(ctx, b).value(float(x))


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def solution_to_text(sol: Solution) -> str:
    lines = [
        f"b_star = {sol.b_star:.12g}",
        f"f_b_star = {sol.f_at_b_star:.12g}",
        f"phi_q = {sol.phi_q:.12g}",
        f"varphi_q = {sol.varphi_q:.12g}",
        f"g_residual = {sol.g_residual:.12g}",
        f"zero_threshold = {1 if sol.zero_threshold else 0}",
    ]
    return "\n".join(lines) + "\n"


def solution_from_text(text: str) -> Solution:
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, val = (p.strip() for p in line.split("=", 1))
        kv[key] = val
    return Solution(
        b_star=float(kv["b_star"]),
        f_at_b_star=float(kv["f_b_star"]),
        phi_q=float(kv["phi_q"]),
        varphi_q=float(kv["varphi_q"]),
        zero_threshold=kv["zero_threshold"] not in ("0", "false", "False"),
        g_residual=float(kv["g_residual"]),
    )
