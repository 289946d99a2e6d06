"""Exact scale-function algebra for rational Laplace exponents.

For a model whose Laplace exponent psi is rational, the scale function
W^{(q)} (the function on [0, inf) with Laplace transform 1/(psi - q)) is a
finite mixture of exponentials over the roots of psi(theta) = q, obtained
by partial fractions.  This module provides

* :class:`ExpMixture` -- sums of coef * x^p * e^{rate x} (p <= 1), closed
  under differentiation, integration, shifts, weighted tail integrals and
  segment convolutions, all in closed form;
* root extraction for psi - q via a companion matrix plus Newton polish;
* :class:`ScaleSet` -- the eight scale objects (W, its antiderivative, the
  two Z-families) for the original and the refracted process;
* :class:`PiecewiseExp` -- piecewise mixtures with an affine extension on
  the left, which is how the zero conventions below the origin (W = 0,
  Z = 1, Zbar = x) and the value function's injection slope are realized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from ._ddpoly import polish_root, residue_quotient
from .levy_model import (
    LevyModel,
    NoConvergence,
    ProblemParams,
    phi_root,
    rational_exponent,
    varphi_root,
)


class RepeatedRoots(ArithmeticError):
    """psi(theta) = q has (numerically) repeated roots."""


class DivergentTail(ValueError):
    """Tail integral diverges: the weight s does not dominate every rate."""


# --------------------------------------------------------------------------
# Mixture algebra
# --------------------------------------------------------------------------

class Term(NamedTuple):
    coef: complex
    rate: complex
    power: int = 0


@dataclass(frozen=True)
class ExpMixture:
    """M(x) = sum_i coef_i * x^power_i * e^{rate_i x}, real-valued on x >= 0.

    The term list is closed under complex conjugation so the imaginary part
    cancels; evaluation returns the real part.  Powers are capped at 1 (a
    linear factor), which is exactly what antiderivatives of constants need.
    """

    terms: tuple[Term, ...]

    def __post_init__(self):
        cleaned = []
        for coef, rate, power in self.terms:
            if power not in (0, 1):
                raise ValueError(f"polynomial factor degree {power} not supported")
            cleaned.append(Term(complex(coef), complex(rate), int(power)))
        object.__setattr__(self, "terms", tuple(cleaned))

    def __call__(self, x):
        if np.ndim(x) == 0:
            # compensated summation: the identity checks run at 1e-9 absolute
            # on values of order 1e5, a few ulps away from double precision
            x = float(x)
            parts = []
            for coef, rate, power in self.terms:
                contrib = coef * np.exp(rate * x)
                if power:
                    contrib = contrib * x
                parts.append(contrib.real)
            return math.fsum(parts)
        xs = np.asarray(x, dtype=float)
        out = np.zeros(xs.shape, dtype=complex)
        for coef, rate, power in self.terms:
            contrib = coef * np.exp(rate * xs)
            if power:
                contrib = contrib * xs
            out += contrib
        return out.real

    def imag_residue(self, x):
        """Leftover imaginary part; should be ~0 for conjugate-closed terms."""
        xs = np.asarray(x, dtype=float)
        out = np.zeros(xs.shape, dtype=complex)
        for coef, rate, power in self.terms:
            contrib = coef * np.exp(rate * xs)
            if power:
                contrib = contrib * xs
            out += contrib
        return out.imag

    @property
    def max_real_rate(self) -> float:
        return max((t.rate.real for t in self.terms), default=-np.inf)

    def scaled(self, a: complex) -> "ExpMixture":
        return ExpMixture(tuple(Term(a * c, r, p) for c, r, p in self.terms))

    def __add__(self, other: "ExpMixture") -> "ExpMixture":
        return _merge(self.terms + other.terms)

    @staticmethod
    def constant(c: float) -> "ExpMixture":
        return ExpMixture((Term(complex(c), 0j, 0),))

    @staticmethod
    def zero() -> "ExpMixture":
        return ExpMixture(())


def _merge(terms) -> ExpMixture:
    groups: dict[tuple[complex, int], list[complex]] = {}
    for coef, rate, power in terms:
        groups.setdefault((complex(rate), int(power)), []).append(complex(coef))
    kept = []
    for (rate, power), coefs in groups.items():
        # compensated: partial-fraction sums cancel and get re-amplified by
        # the growing exponentials, so plain accumulation loses digits
        c = complex(math.fsum(z.real for z in coefs), math.fsum(z.imag for z in coefs))
        if c != 0:
            kept.append(Term(c, rate, power))
    return ExpMixture(tuple(kept))


@lru_cache(maxsize=None)
def derivative(m: ExpMixture) -> ExpMixture:
    """Exact termwise derivative."""
    out: list[Term] = []
    for coef, rate, power in m.terms:
        out.append(Term(coef * rate, rate, power))
        if power:
            out.append(Term(coef * power, rate, power - 1))
    return _merge(out)


@lru_cache(maxsize=None)
def antiderivative(m: ExpMixture) -> ExpMixture:
    """Exact antiderivative vanishing at 0.

    Constants integrate to a linear term; linear rate-0 terms would need a
    quadratic factor and are rejected.
    """
    out: list[Term] = []
    for coef, rate, power in m.terms:
        if rate == 0:
            if power:
                raise ValueError("antiderivative would need a quadratic factor")
            out.append(Term(coef, 0j, 1))
        elif power == 0:
            out.append(Term(coef / rate, rate, 0))
        else:
            out.append(Term(coef / rate, rate, 1))
            out.append(Term(-coef / rate**2, rate, 0))
    at_zero = sum((t.coef for t in out if t.power == 0), 0j)
    out.append(Term(-at_zero, 0j, 0))
    return _merge(out)


def nth_derivative(m: ExpMixture, order: int) -> ExpMixture:
    for _ in range(order):
        m = derivative(m)
    return m


def shift(m: ExpMixture, b: float) -> ExpMixture:
    """Mixture representing x |-> M(x - b) (valid where x - b >= 0)."""
    out: list[Term] = []
    for coef, rate, power in m.terms:
        damp = coef * np.exp(-rate * b)
        if power == 0:
            out.append(Term(damp, rate, 0))
        else:
            out.append(Term(damp, rate, 1))
            out.append(Term(-damp * b, rate, 0))
    return _merge(out)


def weighted_tail_integral(m: ExpMixture, s: float, b: float) -> float:
    """Closed form of int_0^inf e^{-s y} M(y + b) dy, requiring s > max Re(rate)."""
    if s <= m.max_real_rate + 1e-12:
        raise DivergentTail(
            f"weight s={s} does not dominate max rate {m.max_real_rate}"
        )
    total = 0j
    for coef, rate, power in m.terms:
        d = s - rate
        head = coef * np.exp(rate * b)
        if power == 0:
            total += head / d
        else:
            total += head * (b / d + 1.0 / d**2)
    return float(total.real)


def convolve_mixture(A: ExpMixture, B: ExpMixture, b: float,
                     rate_tol: float = 1e-9) -> ExpMixture:
    """Mixture in x for int_b^x A(x - y) B(y) dy (valid for x >= b).

    Cross terms are (e^{rB x} - e^{rA (x-b) + rB b})/(rB - rA); coincident
    rates degenerate to (x - b) e^{r x}.
    """
    out: list[Term] = []
    for ca, ra, pa in A.terms:
        if pa:
            raise NotImplementedError("convolution inputs must be pure exponentials")
        for cb, rb, pb in B.terms:
            if pb:
                raise NotImplementedError("convolution inputs must be pure exponentials")
            d = rb - ra
            w = ca * cb
            if abs(d) > rate_tol:
                out.append(Term(w / d, rb, 0))
                out.append(Term(-w * np.exp(d * b) / d, ra, 0))
            else:
                head = w * np.exp(d * b)
                out.append(Term(head, ra, 1))
                out.append(Term(-head * b, ra, 0))
    return _merge(out)


def convolve_segment(A: ExpMixture, B: ExpMixture, b: float, x: float) -> float:
    """int_b^x A(x - y) B(y) dy in closed form (requires b <= x)."""
    if x < b:
        raise ValueError(f"segment requires b <= x, got b={b}, x={x}")
    return convolve_mixture(A, B, b)(x)


# --------------------------------------------------------------------------
# Roots of psi - q and the scale function
# --------------------------------------------------------------------------

def _require_simple(roots: np.ndarray, gap: float = 1e-7) -> None:
    r = np.asarray(roots)
    for i in range(len(r)):
        for j in range(i + 1, len(r)):
            if abs(r[i] - r[j]) < gap:
                raise RepeatedRoots(
                    f"roots {r[i]} and {r[j]} are within {gap}; "
                    "perturb q by ~1e-9 to separate them"
                )


def _symmetrize(roots: np.ndarray) -> np.ndarray:
    """Force the root set to be exactly closed under conjugation."""
    roots = np.asarray(roots, dtype=complex).copy()
    tol = 1e-9
    real_mask = np.abs(roots.imag) < tol * (1.0 + np.abs(roots.real))
    roots[real_mask] = roots[real_mask].real
    pos = [i for i in range(len(roots)) if roots[i].imag > 0]
    neg = [i for i in range(len(roots)) if roots[i].imag < 0]
    if len(pos) != len(neg):
        raise NoConvergence("complex roots do not pair into conjugates")
    used = set()
    for i in pos:
        j = min((k for k in neg if k not in used),
                key=lambda k: abs(np.conj(roots[k]) - roots[i]),
                default=None)
        if j is None:
            raise NoConvergence("complex roots do not pair into conjugates")
        used.add(j)
        mean = 0.5 * (roots[i] + np.conj(roots[j]))
        roots[i] = mean
        roots[j] = np.conj(mean)
    return roots


def psi_roots(model: LevyModel, q: float, delta: float = 0.0) -> np.ndarray:
    """All roots of psi(theta) = q (psi_Y when delta > 0), largest real part first.

    Companion-matrix eigenvalues of the cleared-denominator polynomial,
    then Newton polish in compensated float-pair arithmetic (plain doubles
    stall near 1e-13 for the mid-plane roots, which is visible after the
    growing exponentials amplify coefficient noise).  The leading root is
    the real positive one; all others lie strictly to its left.
    """
    rat = rational_exponent(model, delta)
    poly = rat.shifted_numerator(q)
    deg = len(poly) - 1
    if deg < 1:
        raise NoConvergence("psi - q degenerates to a constant")
    dpoly = np.polyder(poly)
    roots = np.roots(poly)
    for _ in range(2):
        num = np.polyval(poly, roots)
        den = np.polyval(dpoly, roots)
        step = num / den
        ok = np.isfinite(step)
        roots[ok] = roots[ok] - step[ok]
    roots = np.array([polish_root(poly, dpoly, complex(r)) for r in roots])
    roots = _symmetrize(roots)
    scale = np.linalg.norm(poly) * np.maximum(1.0, np.abs(roots)) ** deg
    resid = np.abs(np.polyval(poly, roots)) / scale
    if np.any(resid > 1e-10):
        raise NoConvergence(f"root residual {resid.max():.3e} exceeds 1e-10")
    _require_simple(roots)
    order = np.argsort(-roots.real)
    roots = roots[order]
    top = roots[0]
    if top.imag != 0 or (len(roots) > 1 and roots[1].real >= top.real - 1e-12):
        raise NoConvergence("leading root is not a simple real root")
    return roots


def build_W(model: LevyModel, q: float, delta: float = 0.0) -> ExpMixture:
    """Scale function as sum_i e^{rho_i x} / psi'(rho_i) over the roots of psi = q.

    At a root, psi' equals N'/Q for the cleared-denominator polynomial N,
    so the residues come from one compensated polynomial quotient each.
    """
    rat = rational_exponent(model, delta)
    roots = psi_roots(model, q, delta)
    poly = rat.shifted_numerator(q)
    dpoly = np.polyder(poly)
    terms = tuple(
        Term(residue_quotient(rat.den, dpoly, complex(r)), r, 0) for r in roots
    )
    return ExpMixture(terms)


def make_Z(W: ExpMixture, q: float) -> ExpMixture:
    """Z = 1 + q * int_0^x W."""
    return ExpMixture.constant(1.0) + antiderivative(W).scaled(q)


def make_Zbar(W: ExpMixture, q: float) -> ExpMixture:
    """Antiderivative of Z; carries the linear term x."""
    return antiderivative(make_Z(W, q))


@dataclass(frozen=True)
class ScaleSet:
    """The scale objects of X and of the refracted process Y = X - delta*t."""

    W: ExpMixture
    Wbar: ExpMixture
    Z: ExpMixture
    Zbar: ExpMixture
    WY: ExpMixture
    WYbar: ExpMixture
    ZY: ExpMixture
    ZYbar: ExpMixture
    phi_q: float
    varphi_q: float
    q: float


def build_scale_set(model: LevyModel, params: ProblemParams) -> ScaleSet:
    q = params.q
    W = build_W(model, q)
    WY = build_W(model, q, delta=params.delta)
    return ScaleSet(
        W=W,
        Wbar=antiderivative(W),
        Z=make_Z(W, q),
        Zbar=make_Zbar(W, q),
        WY=WY,
        WYbar=antiderivative(WY),
        ZY=make_Z(WY, q),
        ZYbar=make_Zbar(WY, q),
        phi_q=phi_root(model, q),
        varphi_q=varphi_root(model, params, q),
        q=q,
    )


# --------------------------------------------------------------------------
# Piecewise functions with an affine left extension
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseExp:
    """Piecewise mixture: piece i on [breaks[i], breaks[i+1]), last piece to +inf.

    Left of breaks[0] the function is affine,
    below_value + below_slope * (x - breaks[0]); this encodes the
    below-zero conventions (W = 0; Z = 1; Zbar = x) and the injection
    slope of the value function.
    """

    breaks: tuple[float, ...]
    pieces: tuple[ExpMixture, ...]
    below_value: float = 0.0
    below_slope: float = 0.0

    def __post_init__(self):
        if len(self.breaks) != len(self.pieces) or not self.breaks:
            raise ValueError("need one piece per breakpoint")
        if any(b2 <= b1 for b1, b2 in zip(self.breaks, self.breaks[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    def _region(self, x: float, side: int) -> int:
        kind = "right" if side >= 0 else "left"
        return int(np.searchsorted(self.breaks, x, side=kind)) - 1

    def value(self, x: float, side: int = +1) -> float:
        i = self._region(x, side)
        if i < 0:
            return self.below_value + self.below_slope * (x - self.breaks[0])
        return self.pieces[i](x)

    def deriv(self, x: float, order: int = 1, side: int = +1) -> float:
        i = self._region(x, side)
        if i < 0:
            return self.below_slope if order == 1 else 0.0
        return nth_derivative(self.pieces[i], order)(x)

    def values(self, xs) -> np.ndarray:
        """Vectorized evaluation (right-continuous at breakpoints)."""
        xs = np.asarray(xs, dtype=float)
        idx = np.searchsorted(self.breaks, xs, side="right") - 1
        out = np.empty(xs.shape)
        below = idx < 0
        out[below] = self.below_value + self.below_slope * (xs[below] - self.breaks[0])
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = piece(xs[mask])
        return out

    def derivs(self, xs, order: int = 1) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        idx = np.searchsorted(self.breaks, xs, side="right") - 1
        out = np.empty(xs.shape)
        below = idx < 0
        out[below] = self.below_slope if order == 1 else 0.0
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = nth_derivative(piece, order)(xs[mask])
        return out


def w_like(m: ExpMixture) -> PiecewiseExp:
    """Scale-function convention: zero left of the origin."""
    return PiecewiseExp((0.0,), (m,), 0.0, 0.0)


def z_like(m: ExpMixture) -> PiecewiseExp:
    """Z convention: identically 1 left of the origin."""
    return PiecewiseExp((0.0,), (m,), 1.0, 0.0)


def zbar_like(m: ExpMixture) -> PiecewiseExp:
    """Zbar convention: identity left of the origin."""
    return PiecewiseExp((0.0,), (m,), 0.0, 1.0)


# --------------------------------------------------------------------------
# Debug dump
# --------------------------------------------------------------------------

_SCALE_COLUMNS = ("W", "Wbar", "Z", "Zbar", "WY", "WYbar", "ZY", "ZYbar")


def scale_table(scales: ScaleSet, xs) -> dict[str, np.ndarray]:
    """Columns x, W, Wbar, Z, Zbar, WY, WYbar, ZY, ZYbar with the usual
    conventions applied left of the origin."""
    xs = np.asarray(xs, dtype=float)
    wrappers = {
        "W": w_like(scales.W),
        "Wbar": w_like(scales.Wbar),
        "Z": z_like(scales.Z),
        "Zbar": zbar_like(scales.Zbar),
        "WY": w_like(scales.WY),
        "WYbar": w_like(scales.WYbar),
        "ZY": z_like(scales.ZY),
        "ZYbar": zbar_like(scales.ZYbar),
    }
    table = {"x": xs}
    for name in _SCALE_COLUMNS:
        table[name] = wrappers[name].values(xs)
    return table


def scale_table_csv(scales: ScaleSet, xs) -> str:
    """Debug dump of the scale objects on a grid, one CSV row per point."""
    table = scale_table(scales, xs)
    names = list(table)
    lines = [",".join(names)]
    for i in range(len(table["x"])):
        lines.append(",".join(f"{table[n][i]:.12g}" for n in names))
    return "\n".join(lines) + "\n"
