"""Closed-form reference objects.

Very singular solution and its tail correction exponent, reference shapes,
sharp constants, the classical (alpha = 1) Barenblatt profiles, the mesa
plateau and the linear (m = 1) profile obtained by Fourier inversion of the
Mittag-Leffler symbol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import specfun as sf
from .errors import ConvergenceError, DomainError, RegimeError
from .kernel import Kernel, Params, ball_volume, exponents, sphere_area

__all__ = [
    "VssProfile",
    "TailExpansion",
    "vss",
    "gamma_star",
    "barenblatt_classical",
    "fast_classical",
    "reference_shape",
    "head_shape",
    "free_boundary_exponent",
    "free_boundary_constant",
    "mesa_plateau",
    "linear_profile",
    "linear_tail_envelope",
    "flux_constant",
    "head_constant",
]


def _require(p: Params, regime: str) -> None:
    if p.regime != regime:
        raise RegimeError(f"operation needs the {regime} regime, got m = {p.m} ({p.regime})")


# ---------------------------------------------------------------------------
# fast diffusion: very singular solution and tail
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VssProfile:
    """U*(z) = c_star z^(-gamma_mass), gamma_mass = 2/(1-m)."""

    c_star: float
    gamma_mass: float
    params: Params

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return self.c_star * z ** (-self.gamma_mass)

    def log(self, z):
        return math.log(self.c_star) - self.gamma_mass * np.log(np.asarray(z, dtype=float))


@dataclass(frozen=True)
class TailExpansion:
    """Tail exponent gamma* with the threshold z0 beyond which the bracket is proven."""

    gamma_star: float
    z0: float
    Lambda: float


def vss(p: Params) -> VssProfile:
    _require(p, "fast")
    g = 2.0 / (1.0 - p.m)
    qhat = Kernel(p).moment(g)
    # U* solves U*^m = int K U*, i.e. c*^(m-1) = Qhat(2/(1-m))
    c_star = qhat ** (-1.0 / (1.0 - p.m))
    return VssProfile(c_star=c_star, gamma_mass=g, params=p)


def gamma_star(p: Params, root_tol: float = 1e-13) -> TailExpansion:
    _require(p, "fast")
    ker = Kernel(p)
    g = 2.0 / (1.0 - p.m)
    q0 = ker.moment(g)
    if p.classical:
        gs = 2.0
    else:
        def f(x):
            return ker.moment(g + x) / q0 - p.m

        hi = 1.0
        while f(hi) > 0.0:
            hi *= 2.0
            if hi > 1e8:
                raise ConvergenceError("could not bracket gamma*")
        lo = 0.0
        gs = brentq(f, lo, hi, xtol=root_tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    Lam = p.m - ker.moment(g + 1.5 * gs) / q0
    need = abs(p.m * (p.m - 1.0)) / 2.0
    # smallest z = 2^(k/16) >= 1 with need z^(-2 gs) <= Lam z^(-3 gs/2)
    k = 0
    while True:
        z = 2.0 ** (k / 16.0)
        if need * z ** (-2.0 * gs) <= Lam * z ** (-1.5 * gs):
            break
        k += 1
    return TailExpansion(gamma_star=gs, z0=z, Lambda=Lam)


def fast_classical(p: Params, z):
    """Classical (alpha = 1) fast-diffusion profile c*_1 (1 + z^2)^(-1/(1-m))."""
    _require(p, "fast")
    c1 = vss(p.replace(alpha=1.0)).c_star
    z = np.asarray(z, dtype=float)
    return c1 * (1.0 + z * z) ** (-1.0 / (1.0 - p.m))


# ---------------------------------------------------------------------------
# slow diffusion
# ---------------------------------------------------------------------------

def barenblatt_classical(p: Params, z):
    """Classical Barenblatt profile ((m-1) b_1/(2m) (1 - z^2)_+)^(1/(m-1))."""
    _require(p, "slow")
    b1 = exponents(p.replace(alpha=1.0)).b
    z = np.asarray(z, dtype=float)
    base = (p.m - 1.0) * b1 / (2.0 * p.m) * np.maximum((1.0 - z) * (1.0 + z), 0.0)
    return base ** (1.0 / (p.m - 1.0))


def free_boundary_exponent(p: Params) -> float:
    _require(p, "slow")
    return (2.0 - p.alpha) / (p.m - 1.0)


def free_boundary_constant(p: Params, b: float | None = None) -> float:
    """lim U(z)/(1-z)^((2-alpha)/(m-1)) as z -> 1 for the canonical profile.

    ``b`` overrides the similarity exponent (used by negative controls).
    """
    _require(p, "slow")
    if b is None:
        b = exponents(p).b
    gam = free_boundary_exponent(p)
    val = b ** p.alpha * sf.gamma_ratio(1.0 + gam, 3.0 - p.alpha + gam)
    return val ** (1.0 / (p.m - 1.0))


def head_shape(d: int, z):
    """V^m near the origin: 1 (d = 1), |log z| (d = 2), z^(2-d) (d >= 3)."""
    z = np.asarray(z, dtype=float)
    if d == 1:
        return np.ones_like(z)
    if d == 2:
        return np.abs(np.log(z))
    return z ** (2.0 - d)


def reference_shape(p: Params, z):
    """Reference shape V(z) for the slow regime, continuous at z = 1/2."""
    _require(p, "slow")
    za, scalar = sf._as_array(z)
    if np.any(za <= 0.0):
        raise DomainError("reference_shape needs z > 0")
    gam = free_boundary_exponent(p)
    out = np.empty_like(za)
    outer = za >= 0.5
    out[outer] = np.maximum(1.0 - za[outer], 0.0) ** gam
    inner = ~outer
    if np.any(inner):
        match = 0.5 ** gam / float(head_shape(p.d, 0.5) ** (1.0 / p.m))
        out[inner] = match * head_shape(p.d, za[inner]) ** (1.0 / p.m)
    return sf._ret(out, scalar)


def mesa_plateau(p: Params, x_norm):
    """Mesa limit M chi_{|x| <= 1} / |B_1|."""
    x = np.asarray(x_norm, dtype=float)
    return np.where(x <= 1.0, p.mass / ball_volume(p.d), 0.0)


def flux_constant(p: Params) -> float:
    """lim -|dB_1| z^(d-1) (U^m)'(z) as z -> 0, equal to M/Gamma(1-alpha)."""
    return p.mass * float(sf.rgamma(1.0 - p.alpha)) if p.alpha < 1.0 else 0.0


def head_constant(p: Params) -> float:
    """lim U^m / V^m at z = 0 as stated for d >= 2 (flux-determined).

    For d = 1 the returned value is M Gamma(b+1)/(2 Gamma(b+1-alpha)); the
    exact limit is Q(0) int_0^inf rho U(rho) drho, which depends on the first
    moment and not on the mass alone (see the diagnostics in validate).
    """
    ig = float(sf.rgamma(1.0 - p.alpha)) if p.alpha < 1.0 else 0.0
    if p.d >= 3:
        return p.mass * ig / (sphere_area(p.d) * (p.d - 2.0))
    if p.d == 2:
        return p.mass * ig / sphere_area(2)
    b = exponents(p).b
    return p.mass * sf.gamma_ratio(b + 1.0, b + 1.0 - p.alpha) / 2.0


# ---------------------------------------------------------------------------
# linear diffusion
# ---------------------------------------------------------------------------

def linear_tail_envelope(p: Params, z):
    """Shape z^(d(alpha-1)/(2-alpha)) exp(-sigma z^(2/(2-alpha))) of the m = 1 tail.

    At alpha = 1 this is the Gaussian factor exp(-z^2/4).
    """
    z = np.asarray(z, dtype=float)
    a = p.alpha
    sigma = linear_tail_rate(a)
    return z ** (p.d * (a - 1.0) / (2.0 - a)) * np.exp(-sigma * z ** (2.0 / (2.0 - a)))


def linear_tail_rate(alpha: float) -> float:
    """sigma = (2-alpha)(alpha^alpha/4)^(1/(2-alpha)), 1/4 at alpha = 1."""
    return (2.0 - alpha) * (alpha ** alpha / 4.0) ** (1.0 / (2.0 - alpha))


class _LinearInverter:
    """Radial inverse Fourier transform of E_alpha(-|xi|^2) in d = 1, 2, 3."""

    def __init__(self, alpha: float, d: int, spec: sf.QuadratureSpec):
        if d not in (1, 2, 3):
            raise RegimeError("linear_profile supports d in {1, 2, 3}")
        self.alpha = alpha
        self.d = d
        self.spec = spec
        # E_alpha(-x) ~ x^-1/Gamma(1-alpha) - x^-2/Gamma(1-2alpha); matched by
        # a1/(1+xi^2) + a2/(1+xi^2)^2, whose transforms are elementary
        self.a1 = float(sf.rgamma(1.0 - alpha)) if alpha < 1.0 else 0.0
        self.a2 = self.a1 - (float(sf.rgamma(1.0 - 2.0 * alpha)) if alpha < 1.0 else 0.0)

    def remainder(self, xi):
        xi = np.asarray(xi, dtype=float)
        x2 = xi * xi
        e = sf.mittag_leffler_neg(self.alpha, x2)
        r = 1.0 / (1.0 + x2)
        return e - self.a1 * r - self.a2 * r * r

    def surrogate_transform(self, z: float) -> float:
        a1, a2 = self.a1, self.a2
        if self.d == 1:
            # (1/pi) int_0^inf cos(xi z) g(xi) dxi
            return (a1 * 0.5 * math.exp(-z) + a2 * 0.25 * (1.0 + z) * math.exp(-z))
        if self.d == 3:
            # (1/(2 pi^2 z)) int_0^inf xi sin(xi z) g(xi) dxi
            return (a1 * math.pi / 2.0 * math.exp(-z) + a2 * math.pi / 4.0 * z * math.exp(-z)) / (2.0 * math.pi ** 2 * z)
        # (1/(2 pi)) int_0^inf xi J0(xi z) g(xi) dxi
        return (a1 * float(sf.bessel_k0(z)) + a2 * 0.5 * z * float(sf.bessel_k1(z))) / (2.0 * math.pi)

    def kernel(self, xi, z: float):
        if self.d == 1:
            return np.cos(xi * z) / math.pi
        if self.d == 3:
            return xi * np.sin(xi * z) / (2.0 * math.pi ** 2 * z)
        return xi * sf.bessel_j0(xi * z) / (2.0 * math.pi)

    def zeros(self, z: float, n: int) -> np.ndarray:
        k = np.arange(1, n + 1, dtype=float)
        if self.d == 1:
            return (k - 0.5) * math.pi / z
        if self.d == 3:
            return k * math.pi / z
        beta = (k - 0.25) * math.pi
        return (beta + 1.0 / (8.0 * beta) - 31.0 / (384.0 * beta ** 3)) / z

    def at_zero(self) -> float:
        if self.d == 1:
            if self.alpha == 1.0:
                return 1.0 / math.sqrt(4.0 * math.pi)
            return float(sf.rgamma(1.0 - self.alpha / 2.0)) / 2.0
        if self.alpha < 1.0:
            return math.inf
        return (4.0 * math.pi) ** (-self.d / 2.0)

    def value(self, z: float) -> float:
        if z == 0.0:
            if self.d == 1 and self.alpha < 1.0:
                f = lambda xi: self.remainder(xi) / math.pi
                v, _ = sf.integrate(f, 0.0, math.inf, self.spec, points=[1.0, 4.0])
                return v + self.surrogate_transform(0.0)
            return self.at_zero()
        f = lambda xi: self.remainder(xi) * self.kernel(xi, z)
        if self.alpha == 1.0:
            # Gaussian symbol: the integrand is negligible beyond xi = 12
            edges = np.concatenate([[0.0], self.zeros(z, 4000)])
            edges = edges[edges < 12.0]
            edges = np.append(edges, 12.0)
            return math.fsum(sf.integrate(f, edges[i], edges[i + 1], self.spec)[0] for i in range(edges.size - 1))
        # panels between the oscillator zeros, Euler-averaged partial sums
        edges = np.concatenate([[0.0], self.zeros(z, 400)])
        partial = []
        total = 0.0
        settled = 0
        for i in range(edges.size - 1):
            v, _ = sf.integrate(f, edges[i], edges[i + 1], self.spec)
            total += v
            partial.append(total)
            if edges[i + 1] > 8.0 and abs(v) < 1e-14:
                settled += 1
                if settled >= 3:
                    return total + self.surrogate_transform(z)
            if len(partial) >= 24 and edges[i + 1] > 8.0:
                est = _euler_limit(partial[-16:])
                prev = _euler_limit(partial[-17:-1])
                if abs(est - prev) < 1e-13:
                    return est + self.surrogate_transform(z)
        raise ConvergenceError("oscillatory inversion did not settle", value=total + self.surrogate_transform(z))


def _euler_limit(partial_sums) -> float:
    """Repeated averaging of consecutive partial sums of an alternating series."""
    s = np.asarray(partial_sums, dtype=float)
    while s.size > 1:
        s = 0.5 * (s[1:] + s[:-1])
    return float(s[0])


# decay exp(-20) of the tail envelope at which linear_profile switches to it
LINEAR_MATCH_DECAY = 20.0

LINEAR_QUAD = sf.QuadratureSpec(abs_tol=1e-13, rel_tol=1e-11, max_subdivisions=400)


def linear_profile(p: Params, z, spec: sf.QuadratureSpec = LINEAR_QUAD):
    """U_{alpha,1,M}(z): radial inverse Fourier transform of M E_alpha(-|xi|^2)."""
    if p.m != 1.0:
        raise RegimeError("linear_profile needs m = 1")
    inv = _LinearInverter(p.alpha, p.d, spec)
    za, scalar = sf._as_array(z)
    if np.any(za < 0.0):
        raise DomainError("linear_profile needs z >= 0")
    # past z_c the inversion is below its absolute accuracy; continue with
    # the tail envelope matched at z_c
    z_c = (LINEAR_MATCH_DECAY / linear_tail_rate(p.alpha)) ** ((2.0 - p.alpha) / 2.0)
    far = za > z_c
    out = np.empty_like(za)
    out[~far] = [inv.value(float(v)) for v in za[~far]]
    if np.any(far):
        env = np.asarray(linear_tail_envelope(p, za[far])) / float(linear_tail_envelope(p, z_c))
        out[far] = inv.value(z_c) * env
    return sf._ret(out * p.mass, scalar)
