"""Spectrally negative Levy surplus models with phase-type downward jumps.

The surplus process is

    X_t = c*t + sigma*B_t - sum_{n <= N_t} Z_n,

where B is a standard Brownian motion, N a Poisson process with rate
``kappa`` and the Z_n are i.i.d. phase-type jump sizes.  Everything
downstream (scale functions, thresholds, verification, simulation) is
driven by the Laplace exponent

    psi(theta) = c*theta + sigma^2/2 * theta^2 + kappa*(L(theta) - 1),

with L the Laplace transform of the jump law.  Phase-type jumps make psi a
rational function of theta, which is what allows exact scale functions in
:mod:`levy_dividend.scale_engine`.

The control problem pays dividends at a rate bounded by ``delta`` and
injects capital (at unit cost ``beta``) to keep the surplus non-negative;
those constants live in :class:`ProblemParams`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg


class MonotonePaths(ValueError):
    """The process has monotone paths (no diffusion, no jumps, or drift <= 0)."""


class DriftTooSmall(ValueError):
    """Bounded-variation drift must exceed the maximal dividend rate."""


class BadPhaseType(ValueError):
    """The (alpha, T) pair is not a valid phase-type representation."""


class PoleHit(ArithmeticError):
    """Laplace exponent evaluated at a pole of the jump transform."""


class NoConvergence(RuntimeError):
    """A root finder exhausted its iteration budget."""


class ModelFileError(ValueError):
    """Malformed model file."""


# --------------------------------------------------------------------------
# Jump law
# --------------------------------------------------------------------------

# Pade-13 scaling-and-squaring, batched over a family T*z.  The verifier's
# quadrature needs the jump density at hundreds of points per grid node;
# per-matrix scipy.linalg.expm calls dominate the runtime otherwise.
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_PADE13_THETA = 5.371920351148152


def _expm_batch(T: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """Stack of e^{T z} for z >= 0, one squaring budget for the whole batch."""
    zs = np.asarray(zs, dtype=float)
    norm = np.linalg.norm(T, 1) * float(zs.max(initial=0.0))
    s = max(0, int(np.ceil(np.log2(norm / _PADE13_THETA)))) if norm > _PADE13_THETA else 0
    A = T[None, :, :] * (zs[:, None, None] / 2.0**s)
    eye = np.broadcast_to(np.eye(T.shape[0]), A.shape)
    b = _PADE13
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * eye)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * eye)
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R

@dataclass(frozen=True, eq=False)
class PhaseTypeLaw:
    """Absorption-time law of a finite-state Markov chain.

    ``alpha`` is the initial distribution over the transient phases and
    ``subgen`` the sub-generator T; the exit rate vector is t = -T 1.
    sum(alpha) < 1 is allowed and puts the defect mass on an atom at 0.
    """

    alpha: np.ndarray
    subgen: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        T = np.atleast_2d(np.asarray(self.subgen, dtype=float))
        if a.ndim != 1 or T.shape != (a.size, a.size):
            raise BadPhaseType(
                f"alpha has length {a.size} but subgenerator has shape {T.shape}"
            )
        a.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "subgen", T)

    @property
    def dim(self) -> int:
        return self.alpha.size

    @property
    def exit_rates(self) -> np.ndarray:
        return -self.subgen @ np.ones(self.dim)

    def check(self) -> None:
        """Raise :class:`BadPhaseType` on the first violated invariant."""
        tol = 1e-12
        a, T = self.alpha, self.subgen
        if np.any(a < -tol):
            raise BadPhaseType("alpha has negative entries")
        if a.sum() > 1.0 + 1e-9:
            raise BadPhaseType(f"alpha sums to {a.sum()} > 1")
        d = np.diag(T)
        if np.any(d >= 0):
            raise BadPhaseType("subgenerator diagonal must be strictly negative")
        off = T - np.diag(d)
        if np.any(off < -tol):
            raise BadPhaseType("subgenerator off-diagonal entries must be >= 0")
        rows = T @ np.ones(self.dim)
        if np.any(rows > tol):
            raise BadPhaseType("subgenerator row sums must be <= 0")
        if not np.any(rows < -tol):
            raise BadPhaseType("at least one subgenerator row must have an exit rate")

    def mean(self) -> float:
        """E[Z] = alpha (-T)^{-1} 1."""
        return float(self.alpha @ np.linalg.solve(-self.subgen, np.ones(self.dim)))

    def laplace(self, theta: complex) -> complex:
        """E[e^{-theta Z}] = alpha (theta I - T)^{-1} t, defect mass excluded."""
        A = theta * np.eye(self.dim) - self.subgen
        try:
            sol = np.linalg.solve(A.astype(complex), self.exit_rates.astype(complex))
        except np.linalg.LinAlgError as exc:
            raise PoleHit(f"theta={theta} is an eigenvalue of -T") from exc
        val = complex(self.alpha @ sol)
        if not np.isfinite(val.real) or not np.isfinite(val.imag):
            raise PoleHit(f"transform not finite at theta={theta}")
        return val

    def density(self, z):
        """Density alpha e^{Tz} t of the jump size at z > 0 (vectorized in z)."""
        zs = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.zeros(zs.shape)
        pos = zs >= 0
        if np.any(pos):
            batch = _expm_batch(self.subgen, zs[pos])
            out[pos] = np.einsum("i,nij,j->n", self.alpha, batch, self.exit_rates)
        return out if np.ndim(z) else float(out[0])

    def survival(self, z: float) -> float:
        """P(Z > z) for z >= 0."""
        if z <= 0:
            return float(self.alpha.sum())
        return float(self.alpha @ scipy.linalg.expm(self.subgen * z) @ np.ones(self.dim))

    def tail_mean(self, z: float) -> float:
        """E[Z 1{Z > z}] in closed form: z*P(Z>z) + alpha e^{Tz} (-T)^{-1} 1."""
        z = max(z, 0.0)
        resolvent = np.linalg.solve(-self.subgen, np.ones(self.dim))
        return z * self.survival(z) + float(
            self.alpha @ scipy.linalg.expm(self.subgen * z) @ resolvent
        )

    # -- common constructions ------------------------------------------------

    @classmethod
    def exponential(cls, rate: float) -> "PhaseTypeLaw":
        return cls(np.array([1.0]), np.array([[-float(rate)]]))

    @classmethod
    def hyperexponential(cls, weights, rates) -> "PhaseTypeLaw":
        w = np.asarray(weights, dtype=float)
        r = np.asarray(rates, dtype=float)
        return cls(w, np.diag(-r))

    @classmethod
    def erlang_mixture(cls, weights, rate: float) -> "PhaseTypeLaw":
        """Mixture of Erlang(k, rate) laws, k = 1..len(weights), on a single chain.

        The chain runs through states 1 -> 2 -> ... -> K at the common rate and
        exits from state K; starting k steps before the end gives Erlang(k).
        """
        w = np.asarray(weights, dtype=float)
        K = w.size
        T = np.diag(np.full(K, -float(rate))) + np.diag(np.full(K - 1, float(rate)), k=1)
        alpha = w[::-1].copy()  # weight of Erlang(k) enters at state K-k+1
        return cls(alpha, T)


# --------------------------------------------------------------------------
# Model and problem constants
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LevyModel:
    """Drift ``c``, volatility ``sigma``, Poisson jump rate ``kappa``, jump law."""

    c: float
    sigma: float = 0.0
    kappa: float = 0.0
    jumps: PhaseTypeLaw | None = None

    @property
    def bounded_variation(self) -> bool:
        return self.sigma == 0.0


@dataclass(frozen=True)
class ProblemParams:
    """Discount rate ``q``, injection cost ``beta`` > 1, dividend rate cap ``delta``."""

    q: float
    beta: float
    delta: float


def refract(model: LevyModel, delta: float) -> LevyModel:
    """The refracted process Y = X - delta*t is again of the same class."""
    return replace(model, c=model.c - delta)


def validate(model: LevyModel, params: ProblemParams) -> None:
    """Check every model/problem invariant; raise on the first violation."""
    if model.sigma < 0:
        raise ValueError("sigma must be >= 0")
    if model.kappa < 0:
        raise ValueError("kappa must be >= 0")
    if model.kappa > 0:
        if model.jumps is None:
            raise BadPhaseType("kappa > 0 requires a jump law")
        model.jumps.check()
    if model.sigma == 0.0 and model.kappa == 0.0:
        raise MonotonePaths("no diffusion and no jumps: paths are monotone")
    if model.sigma == 0.0 and model.c <= 0.0:
        raise MonotonePaths("bounded variation requires drift c > 0")
    if params.q <= 0:
        raise ValueError("discount rate q must be > 0")
    if params.beta <= 1:
        raise ValueError("injection cost beta must exceed 1")
    if params.delta <= 0:
        raise ValueError("dividend cap delta must be > 0")
    if model.sigma == 0.0 and model.c <= params.delta:
        raise DriftTooSmall(
            f"bounded variation requires c > delta (c={model.c}, delta={params.delta})"
        )


# --------------------------------------------------------------------------
# Laplace exponent
# --------------------------------------------------------------------------

def laplace_exponent(model: LevyModel, theta):
    """psi(theta) for real theta >= 0 or complex theta away from transform poles."""
    if not isinstance(theta, complex) and theta < 0:
        raise ValueError("theta must be >= 0 (complex arguments are allowed)")
    val = model.c * theta + 0.5 * model.sigma**2 * theta * theta
    if model.kappa > 0:
        val = val + model.kappa * (model.jumps.laplace(theta) - 1.0)
    if isinstance(theta, complex):
        return val
    return float(np.real(val))


def laplace_exponent_refracted(model: LevyModel, params: ProblemParams, theta):
    """psi_Y(theta) = psi(theta) - delta*theta for the refracted process."""
    return laplace_exponent(model, theta) - params.delta * theta


def mean_rate(model: LevyModel) -> float:
    """psi'(0+) = c - kappa * E[Z]."""
    if model.kappa == 0:
        return float(model.c)
    return float(model.c - model.kappa * model.jumps.mean())


def jump_density(model: LevyModel, z):
    """Density of the (positive) jump size; integrates to sum(alpha)."""
    if model.jumps is None:
        raise ValueError("model has no jump component")
    return model.jumps.density(z)


# -- rational representation ------------------------------------------------

def _char_poly_and_adjugate_numerator(law: PhaseTypeLaw):
    """Faddeev-LeVerrier: coefficients of det(theta I - T) and of
    alpha adj(theta I - T) t, both highest power first.

    Avoids eigendecomposition, which is unreliable for defective
    sub-generators such as Erlang chains.
    """
    T = law.subgen
    K = law.dim
    t = law.exit_rates
    den = np.zeros(K + 1)
    den[0] = 1.0
    num = np.zeros(K)
    M = np.eye(K)
    for k in range(1, K + 1):
        num[k - 1] = law.alpha @ M @ t
        AM = T @ M
        ck = -np.trace(AM) / k
        den[k] = ck
        M = AM + ck * np.eye(K)
    return den, num


@dataclass(frozen=True, eq=False)
class RationalExponent:
    """psi(theta) = num(theta) / den(theta) with polynomial coefficient arrays."""

    num: np.ndarray
    den: np.ndarray

    def value(self, theta):
        d = np.polyval(self.den, theta)
        scale = np.max(np.abs(self.den)) * max(1.0, abs(theta)) ** (len(self.den) - 1)
        if abs(d) < 1e-12 * scale:
            raise PoleHit(f"theta={theta} hits a pole of the jump transform")
        return np.polyval(self.num, theta) / d

    def deriv(self, theta):
        n = np.polyval(self.num, theta)
        d = np.polyval(self.den, theta)
        npr = np.polyval(np.polyder(self.num), theta)
        dpr = np.polyval(np.polyder(self.den), theta)
        return (npr * d - n * dpr) / (d * d)

    def shifted_numerator(self, q: float) -> np.ndarray:
        """Coefficients of the polynomial whose roots solve psi(theta) = q."""
        poly = np.polysub(self.num, q * self.den)
        lead = np.max(np.abs(poly))
        keep = np.nonzero(np.abs(poly) > 1e-14 * lead)[0]
        return poly[keep[0]:]


@lru_cache(maxsize=None)
def _rational_cached(model: LevyModel, delta: float) -> RationalExponent:
    c = model.c - delta
    v = 0.5 * model.sigma**2
    drift_part = np.array([v, c, -model.kappa])
    if model.kappa == 0:
        return RationalExponent(np.array([v, c, 0.0]), np.array([1.0]))
    den, pnum = _char_poly_and_adjugate_numerator(model.jumps)
    num = np.polyadd(np.polymul(drift_part, den), model.kappa * pnum)
    return RationalExponent(num, den)


def rational_exponent(model: LevyModel, delta: float = 0.0) -> RationalExponent:
    """Rational form of psi (or psi_Y when delta > 0), built once per model."""
    return _rational_cached(model, float(delta))


# -- positive roots ----------------------------------------------------------

def phi_root(model: LevyModel, q: float, delta: float = 0.0) -> float:
    """Unique positive root of psi(theta) = q (psi_Y when delta > 0).

    Bracket by doubling, bisect to 1e-14 interval width, then two Newton
    polish steps; psi is convex with psi(0) = 0 so the root is unique.
    """
    if q <= 0:
        raise ValueError("q must be > 0")
    rat = rational_exponent(model, delta)
    f = lambda th: float(np.real(rat.value(th))) - q
    hi = 1.0
    for _ in range(200):
        if f(hi) > 0:
            break
        hi *= 2.0
    else:
        raise NoConvergence("could not bracket the positive root")
    lo = 0.0
    for _ in range(200):
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    root = 0.5 * (lo + hi)
    for _ in range(2):
        step = f(root) / float(np.real(rat.deriv(root)))
        if np.isfinite(step):
            root -= step
    if abs(f(root)) > 1e-12 * q:
        raise NoConvergence(f"root residual {f(root):.3e} exceeds 1e-12*q")
    return float(root)


def varphi_root(model: LevyModel, params: ProblemParams, q: float) -> float:
    """Positive root of psi_Y(theta) = q; always exceeds the unrefracted root."""
    return phi_root(model, q, delta=params.delta)


# --------------------------------------------------------------------------
# Model files
# --------------------------------------------------------------------------

_JUMP_EXP = re.compile(r"exp\(\s*([^)]+?)\s*\)$")
_JUMP_HYPER = re.compile(r"hyperexp\(\s*(.+?)\s*\)$")

_MODEL_KEYS = {"c", "sigma", "kappa", "jumps", "alpha", "T", "q", "beta", "delta"}


def _parse_matrix(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip()]
    return np.array([[float(v) for v in row.replace(",", " ").split()] for row in rows])


def parse_model_text(text: str) -> tuple[LevyModel, ProblemParams]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            continue  # section headers are cosmetic
        if "=" not in line:
            raise ModelFileError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _MODEL_KEYS:
            raise ModelFileError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ModelFileError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val

    def need(key):
        if key not in values:
            raise ModelFileError(f"missing required key {key!r}")
        return values[key]

    def fnum(key, default=None):
        if key not in values:
            if default is None:
                raise ModelFileError(f"missing required key {key!r}")
            return default
        try:
            return float(values[key])
        except ValueError as exc:
            raise ModelFileError(f"key {key!r}: not a number: {values[key]!r}") from exc

    c = fnum("c")
    sigma = fnum("sigma", 0.0)
    kappa = fnum("kappa", 0.0)

    jumps = None
    if "jumps" in values:
        if "alpha" in values or "T" in values:
            raise ModelFileError("give either 'jumps = ...' shorthand or alpha/T, not both")
        spec = values["jumps"]
        if m := _JUMP_EXP.match(spec):
            jumps = PhaseTypeLaw.exponential(float(m.group(1)))
        elif m := _JUMP_HYPER.match(spec):
            pairs = [p.strip() for p in m.group(1).split(",")]
            weights, rates = [], []
            for p in pairs:
                try:
                    w, r = p.split(":")
                    weights.append(float(w))
                    rates.append(float(r))
                except ValueError as exc:
                    raise ModelFileError(f"bad hyperexp component {p!r}") from exc
            jumps = PhaseTypeLaw.hyperexponential(weights, rates)
        else:
            raise ModelFileError(f"unrecognized jumps spec {spec!r}")
    elif "alpha" in values or "T" in values:
        if "alpha" not in values or "T" not in values:
            raise ModelFileError("alpha and T must be given together")
        try:
            alpha = np.array([float(v) for v in values["alpha"].replace(",", " ").split()])
            T = _parse_matrix(need("T"))
        except ValueError as exc:
            raise ModelFileError(f"could not parse alpha/T: {exc}") from exc
        try:
            jumps = PhaseTypeLaw(alpha, T)
        except BadPhaseType as exc:
            raise ModelFileError(str(exc)) from exc
    elif kappa > 0:
        raise ModelFileError("kappa > 0 requires a jump law (jumps= or alpha/T)")

    model = LevyModel(c=c, sigma=sigma, kappa=kappa, jumps=jumps)
    params = ProblemParams(q=fnum("q"), beta=fnum("beta"), delta=fnum("delta"))
    return model, params


def load_model_file(path) -> tuple[LevyModel, ProblemParams]:
    return parse_model_text(Path(path).read_text())
