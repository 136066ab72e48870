"""Similarity exponents, the profile kernel Q and K, its moments and the
discrete weight matrix.

The profile equation is U^m(z) = int_z^inf K(z, rho) U(rho) drho with
K(z, rho) = rho Q(z/rho) and

    Q(eta) = 1/Gamma(1-alpha) int_eta^1 (1 - s^(1/b))^(-alpha) s^(1-d) ds.

With s = u^b every integral of Q against a power of eta collapses to an
upper incomplete beta function, which is how everything below is evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import specfun as sf
from .errors import DomainError, ParameterError, QuadratureError

__all__ = [
    "Params",
    "Exponents",
    "critical_exponent",
    "exponents",
    "Kernel",
    "q_kernel",
    "q_kernel_deriv",
    "q_moment",
    "k_point",
    "q_asymptotics",
    "KernelAsymptotics",
    "Mesh",
    "KernelWeights",
    "assemble_weights",
    "sphere_area",
    "ball_volume",
]


def critical_exponent(d: int) -> float:
    return max(0.0, (d - 2.0) / d)


def sphere_area(d: int) -> float:
    """|dB_1| = 2 pi^(d/2) / Gamma(d/2)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d: int) -> float:
    """|B_1| = pi^(d/2) / Gamma(d/2 + 1)."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass(frozen=True)
class Params:
    """Problem parameters: fractional order, diffusion exponent, dimension, mass."""

    alpha: float
    m: float
    d: int = 1
    mass: float = 1.0

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ParameterError(f"d must be a positive integer, got {self.d!r}")
        if not (0.0 < self.alpha <= 1.0):
            raise ParameterError(f"alpha must lie in (0, 1], got {self.alpha}")
        mc = critical_exponent(self.d)
        if not (self.m > mc) or not math.isfinite(self.m):
            raise ParameterError(
                f"m must exceed the critical exponent m_c = {mc:.6g} for d = {self.d}, got m = {self.m}"
            )
        if not (self.mass > 0.0) or not math.isfinite(self.mass):
            raise ParameterError(f"mass must be positive, got {self.mass}")

    @property
    def m_c(self) -> float:
        return critical_exponent(self.d)

    @property
    def regime(self) -> str:
        if self.m > 1.0:
            return "slow"
        if self.m < 1.0:
            return "fast"
        return "linear"

    @property
    def classical(self) -> bool:
        return self.alpha == 1.0

    def replace(self, **kw) -> "Params":
        vals = dict(alpha=self.alpha, m=self.m, d=self.d, mass=self.mass)
        vals.update(kw)
        return Params(**vals)


@dataclass(frozen=True)
class Exponents:
    a: float
    b: float


def exponents(p: Params) -> Exponents:
    """Similarity exponents a = alpha d / (2 + d(m-1)), b = alpha / (2 + d(m-1))."""
    denom = 2.0 + p.d * (p.m - 1.0)
    if denom <= 0.0:
        raise ParameterError(f"m must exceed m_c = {p.m_c:.6g} for d = {p.d}")
    b = p.alpha / denom
    return Exponents(a=p.d * b, b=b)


@dataclass(frozen=True)
class KernelAsymptotics:
    eta1_coeff: float  # lim Q(eta)/(1-eta)^(1-alpha) as eta -> 1
    eta1_next: float  # relative first-order correction in (1 - eta)
    eta0_constant: float  # lim Q(eta)/V^m(eta) as eta -> 0
    eta0_description: str


class Kernel:
    """Evaluator for Q, Q' and their power moments at fixed parameters."""

    # below this distance to eta = 1 the two-term expansion is used
    NEAR_ONE = 1e-8

    def __init__(self, p: Params):
        self.p = p
        self.b = exponents(p).b
        self.alpha = p.alpha
        self.d = p.d
        self.qb = 1.0 - p.alpha  # second beta parameter
        self.inv_gamma = 0.0 if p.classical else float(sf.rgamma(1.0 - p.alpha))
        self._series_cache: dict[float, np.ndarray] = {}

    # -- helpers -----------------------------------------------------------
    def _t_and_X(self, s: np.ndarray, one_minus_s=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """t = s^(1/b), X = 1 - t and log t, all to full relative accuracy."""
        with np.errstate(divide="ignore"):
            if one_minus_s is None:
                ls = np.log(s)
            else:
                ls = np.where(s > 0.5, np.log1p(-np.asarray(one_minus_s, dtype=float)), np.log(s))
        lt = ls / self.b
        return np.exp(lt), -np.expm1(lt), lt

    # -- Q -----------------------------------------------------------------
    def q(self, eta, one_minus_eta=None):
        eta_a, scalar = sf._as_array(eta)
        if np.any(~((eta_a > 0.0) & (eta_a <= 1.0))):
            raise DomainError("Q is defined for 0 < eta <= 1")
        if self.p.classical:
            out = np.full_like(eta_a, self.b)
            return sf._ret(out, scalar)
        ome = 1.0 - eta_a if one_minus_eta is None else np.atleast_1d(np.asarray(one_minus_eta, float)) * np.ones_like(eta_a)
        t, X, lt = self._t_and_X(eta_a, ome)
        out = np.empty_like(eta_a)
        near = ome < self.NEAR_ONE
        if np.any(near):
            a = self.asymptotics()
            e = ome[near]
            out[near] = a.eta1_coeff * e ** self.qb * (1.0 + a.eta1_next * e)
        far = ~near
        if np.any(far):
            pQ = self.b * (2.0 - self.d)
            out[far] = self.b * self.inv_gamma * sf.beta_upper(t[far], pQ, self.qb, one_minus_t=X[far], log_t=lt[far])
        return sf._ret(out, scalar)

    def dq(self, eta):
        eta_a, scalar = sf._as_array(eta)
        if np.any(~((eta_a > 0.0) & (eta_a < 1.0))):
            raise DomainError("Q' is evaluated on 0 < eta < 1")
        if self.p.classical:
            raise DomainError("Q' is a point mass at eta = 1 when alpha = 1")
        _, X, _ = self._t_and_X(eta_a)
        out = -self.inv_gamma * X ** (-self.alpha) * eta_a ** (1.0 - self.d)
        return sf._ret(out, scalar)

    def q_at_zero(self) -> float:
        """Q(0+) (finite only for d = 1)."""
        if self.d != 1:
            return math.inf
        if self.p.classical:
            return self.b
        return sf.gamma_ratio(self.b + 1.0, self.b + 1.0 - self.alpha)

    def asymptotics(self) -> KernelAsymptotics:
        a, b, d = self.alpha, self.b, self.d
        if self.p.classical:
            c1 = b
            nxt = 0.0
        else:
            c1 = b ** a / float(sf.gamma_fn(2.0 - a))
            # 1 - eta^(1/b) = (1-eta)/b * (1 + (1/b - 1)(1-eta)/2 + ...), eta^(1-d) = 1 + (d-1)(1-eta) + ...
            k1 = a * (1.0 / b - 1.0) / 2.0 + (d - 1.0)
            nxt = k1 * (1.0 - a) / (2.0 - a)
        if d == 1:
            c0 = self.q_at_zero()
            desc = "Q(0) finite; V^m = 1"
        elif d == 2:
            c0 = self.inv_gamma
            desc = "Q ~ |log eta| / Gamma(1-alpha); V^m = |log eta|"
        else:
            c0 = self.inv_gamma / (d - 2.0)
            desc = "Q ~ eta^(2-d) / ((d-2) Gamma(1-alpha)); V^m = eta^(2-d)"
        return KernelAsymptotics(eta1_coeff=c1, eta1_next=nxt, eta0_constant=c0, eta0_description=desc)

    # -- moments -----------------------------------------------------------
    def moment(self, gamma: float) -> float:
        """Qhat(gamma) = int_0^1 Q(s) s^(gamma-3) ds for gamma > max(2, d)."""
        if not gamma > max(2.0, self.d):
            raise DomainError(f"Qhat(gamma) needs gamma > max(2, d) = {max(2, self.d)}")
        pp = self.b * (gamma - self.d)
        if self.p.classical:
            return self.b / (gamma - 2.0)
        return self.b / (gamma - 2.0) * sf.gamma_ratio(pp, self.qb + pp)

    def _H_series_coeffs(self, gamma: float, n: int = 60) -> np.ndarray:
        key = (gamma, n)
        if key in self._series_cache:
            return self._series_cache[key]
        pQ = self.b * (2.0 - self.d)
        k = np.arange(n, dtype=float)
        c = np.ones(n)
        e = np.ones(n)
        for i in range(1, n):
            c[i] = c[i - 1] * (i - pQ) / i
            e[i] = e[i - 1] * (i - self.b * (gamma - 2.0)) / i
        # inner sums, the k = 0 term carries 1/Gamma(2 - alpha) directly
        g2 = float(sf.rgamma(2.0 - self.alpha))
        ck = np.empty(n)
        ck[0] = g2
        ck[1:] = c[1:] * self.inv_gamma / (self.qb + k[1:])
        A = np.array([np.dot(ck[: i + 1], e[i::-1]) for i in range(n)])
        coeffs = self.b * self.b * A
        self._series_cache[key] = coeffs
        return coeffs

    def _H_near_one(self, X: np.ndarray, gamma: float) -> np.ndarray:
        coeffs = self._H_series_coeffs(gamma)
        n = coeffs.size
        expo = 2.0 - self.alpha + np.arange(n)
        logX = np.log(np.where(X > 0, X, 1.0))
        terms = coeffs[None, :] * np.exp(np.outer(logX, np.ones(n)) * expo[None, :]) / expo[None, :]
        return np.where(X > 0, terms.sum(axis=1), 0.0)

    def _series_radius(self, gamma: float) -> float:
        grow = max(1.0, abs(self.b * (gamma - 2.0) - 1.0), abs(1.0 - self.b * (2.0 - self.d)))
        return min(0.5, 1.5 / grow)

    def H(self, s, gamma: float, one_minus_s=None):
        """H_gamma(s) = int_s^1 Q(sigma) sigma^(gamma-3) dsigma for 0 < s <= 1 (gamma != 2)."""
        s_a, scalar = sf._as_array(s)
        if np.any(~((s_a > 0.0) & (s_a <= 1.0))):
            raise DomainError("H needs 0 < s <= 1")
        if gamma == 2.0:
            raise DomainError("H is evaluated for gamma != 2 only")
        if self.p.classical:
            out = self.b * (1.0 - s_a ** (gamma - 2.0)) / (gamma - 2.0)
            return sf._ret(out, scalar)
        ome = None if one_minus_s is None else np.atleast_1d(np.asarray(one_minus_s, float)) * np.ones_like(s_a)
        t, X, lt = self._t_and_X(s_a, ome)
        out = np.empty_like(s_a)
        near = X <= self._series_radius(gamma)
        if np.any(near):
            out[near] = self._H_near_one(X[near], gamma)
        far = ~near
        if np.any(far):
            sf_ = s_a[far]
            qv = self.q_from_tX(t[far], X[far], lt[far])
            pp = self.b * (gamma - self.d)
            E = sf.beta_upper(t[far], pp, self.qb, one_minus_t=X[far], log_t=lt[far])
            out[far] = (-qv * sf_ ** (gamma - 2.0) + self.b * self.inv_gamma * E) / (gamma - 2.0)
        return sf._ret(out, scalar)

    def q_from_tX(self, t: np.ndarray, X: np.ndarray, lt: np.ndarray | None = None) -> np.ndarray:
        pQ = self.b * (2.0 - self.d)
        return self.b * self.inv_gamma * sf.beta_upper(t, pQ, self.qb, one_minus_t=X, log_t=lt)

    def P_scaled(self, s, gamma: float):
        """s^(-gamma) int_0^s Q(sigma) sigma^(gamma-3) dsigma, gamma > max(2, d), 0 <= s <= 1."""
        s_a, scalar = sf._as_array(s)
        if not gamma > max(2.0, self.d):
            raise DomainError("P needs gamma > max(2, d)")
        if np.any(~((s_a >= 0.0) & (s_a <= 1.0))):
            raise DomainError("P needs 0 <= s <= 1")
        out = np.empty_like(s_a)
        if self.p.classical:
            with np.errstate(divide="ignore"):
                out = np.where(s_a > 0, self.b * s_a ** -2.0 / (gamma - 2.0), np.inf)
            return sf._ret(out, scalar)
        zero = s_a == 0.0
        out[zero] = np.inf if self.d >= 2 else 0.0
        pos = ~zero
        if np.any(pos):
            sp = s_a[pos]
            t, X, lt = self._t_and_X(sp)
            res = np.empty_like(sp)
            near = X <= self._series_radius(gamma)
            if np.any(near):
                # complement of H near s = 1 keeps full accuracy there
                res[near] = (self.moment(gamma) - self._H_near_one(X[near], gamma)) * sp[near] ** (-gamma)
            far = ~near
            if np.any(far):
                tf = t[far]
                qv = self.q_from_tX(tf, X[far], lt[far])
                pp = self.b * (gamma - self.d)
                bsc = sf.inc_beta_scaled(tf, pp, self.qb)  # t^-pp B_t(pp, q); t^pp = s^(gamma-d)
                res[far] = (qv * sp[far] ** -2.0 + self.b * self.inv_gamma * bsc * sp[far] ** (-float(self.d))) / (gamma - 2.0)
            out[pos] = res
        return sf._ret(out, scalar)

    def dE(self, s_lo, s_hi, gamma: float):
        """int_{s_lo}^{s_hi} (-Q'(sigma)) sigma^(gamma-2) dsigma for 0 < s_lo <= s_hi <= 1."""
        if self.p.classical:
            raise DomainError("derivative weights at alpha = 1 are a point mass")
        lo, scalar = sf._as_array(s_lo)
        hi = np.atleast_1d(np.asarray(s_hi, dtype=float)) * np.ones_like(lo)
        pp = self.b * (gamma - self.d)
        tl, Xl, ll = self._t_and_X(lo)
        th, Xh, lh = self._t_and_X(hi)
        El = sf.beta_upper(tl, pp, self.qb, one_minus_t=Xl, log_t=ll)
        Eh = np.where(hi >= 1.0, 0.0, sf.beta_upper(np.minimum(th, 1.0), pp, self.qb, one_minus_t=Xh, log_t=np.minimum(lh, 0.0)))
        return sf._ret(self.b * self.inv_gamma * (El - Eh), scalar)


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------

def q_kernel(p: Params, eta, one_minus_eta=None):
    return Kernel(p).q(eta, one_minus_eta)


def q_kernel_deriv(p: Params, eta):
    return Kernel(p).dq(eta)


def q_moment(p: Params, gamma: float) -> float:
    return Kernel(p).moment(gamma)


def k_point(p: Params, z: float, rho: float) -> float:
    """K(z, rho) = rho Q(z/rho) for 0 < z <= rho."""
    if not (z > 0.0 and rho >= z):
        raise DomainError("k_point needs 0 < z <= rho")
    return rho * float(Kernel(p).q(z / rho))


def q_asymptotics(p: Params) -> KernelAsymptotics:
    return Kernel(p).asymptotics()


# ---------------------------------------------------------------------------
# meshes and weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Mesh:
    """Strictly increasing node set z_0 < ... < z_I."""

    nodes: np.ndarray
    grading: str = "uniform"

    def __post_init__(self):
        z = np.asarray(self.nodes, dtype=float)
        if z.ndim != 1 or z.size < 9:
            raise DomainError("a mesh needs at least 9 nodes (I >= 8)")
        if z[0] < 0.0 or np.any(np.diff(z) <= 0.0) or not np.all(np.isfinite(z)):
            raise DomainError("mesh nodes must be finite, non-negative and strictly increasing")
        z.setflags(write=False)
        object.__setattr__(self, "nodes", z)

    @property
    def I(self) -> int:
        return self.nodes.size - 1

    @cached_property
    def mesh_id(self) -> str:
        import hashlib

        return hashlib.sha1(self.nodes.tobytes()).hexdigest()[:16]

    def scaled(self, factor: float) -> "Mesh":
        return Mesh(self.nodes * factor, self.grading)


@dataclass(frozen=True, eq=False)
class KernelWeights:
    """Integrated kernel weights on a mesh.

    w[i, j] = int_{z_j}^{z_{j+1}} K(z_i, rho) phi_j(rho) drho with the
    reference factor phi_j(rho) = (rho / z_anchor)^(-shape) and anchor the
    left or right node of the cell; shape = 0, anchor = left is the plain
    piecewise-constant rule. The last node carries no cell: w has shape
    (I+1, I) and multiplies the values at the anchor nodes.
    """

    mesh_id: str
    w: np.ndarray
    anchors: np.ndarray  # anchor node index per cell
    shapes: np.ndarray  # shape exponent per cell


def _cell_integrals(
    ker: Kernel, zi: np.ndarray, zl: np.ndarray, zr: np.ndarray, gamma: float, anchor_z: np.ndarray
) -> np.ndarray:
    """int_{zl}^{zr} K(zi, rho) (rho/anchor)^(-gamma) drho, elementwise with zi <= zl."""
    zi, zl, zr, anchor_z = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (zi, zl, zr, anchor_z)))
    out = np.empty(zi.shape)
    b = ker.b
    flat = zi == 0.0 if not ker.p.classical else np.ones(zi.shape, dtype=bool)
    if np.any(flat):
        # Q constant on the cell: b for alpha = 1, Q(0) for z = 0 (only reachable for d = 1)
        qc = b if ker.p.classical else ker.q_at_zero()
        a_, l_, r_ = anchor_z[flat], zl[flat], zr[flat]
        if gamma == 2.0:
            out[flat] = qc * a_ ** 2 * np.log(r_ / l_)
        else:
            out[flat] = qc * a_ ** gamma * (r_ ** (2.0 - gamma) - l_ ** (2.0 - gamma)) / (2.0 - gamma)
    rest = ~flat
    if not np.any(rest):
        return np.maximum(out, 0.0)
    zi_, zl_, zr_, an_ = zi[rest], zl[rest], zr[rest], anchor_z[rest]
    s_l = zi_ / zl_  # larger s (closer to 1)
    s_r = zi_ / zr_
    # 1 - s with full accuracy for the diagonal and near-diagonal cells
    ome_l = (zl_ - zi_) / zl_
    ome_r = (zr_ - zi_) / zr_
    scale = an_ / zi_
    use_P = gamma > max(2.0, ker.d)
    res = np.empty(zi_.size)
    # near the diagonal the H form is accurate; far away the scaled P form avoids cancellation
    near = s_r > 0.5
    if np.any(near):
        Hr = ker.H(s_r[near], gamma, one_minus_s=ome_r[near])
        on_diag = s_l[near] >= 1.0
        Hl = np.zeros(Hr.shape)
        if np.any(~on_diag):
            Hl[~on_diag] = ker.H(s_l[near][~on_diag], gamma, one_minus_s=ome_l[near][~on_diag])
        res[near] = zi_[near] ** 2 * scale[near] ** gamma * (Hr - Hl)
    far = ~near
    if np.any(far):
        if use_P:
            Pl = ker.P_scaled(s_l[far], gamma)  # s^-gamma P(s)
            Pr = ker.P_scaled(s_r[far], gamma)
            # (anchor/zi)^gamma [P(s_l) - P(s_r)] = (anchor/zl)^gamma Pl~ - (anchor/zr)^gamma Pr~
            res[far] = zi_[far] ** 2 * ((an_[far] / zl_[far]) ** gamma * Pl - (an_[far] / zr_[far]) ** gamma * Pr)
        else:
            Hr = ker.H(s_r[far], gamma)
            Hl = ker.H(s_l[far], gamma)
            res[far] = zi_[far] ** 2 * scale[far] ** gamma * (Hr - Hl)
    out[rest] = res
    return np.maximum(out, 0.0)


def power_tail(ker: Kernel, z: np.ndarray, z_max: float, gamma: float) -> np.ndarray:
    """int_{z_max}^inf K(z, rho) (rho/z_max)^(-gamma) drho for z <= z_max."""
    z = np.asarray(z, dtype=float)
    s = z / z_max
    out = np.zeros_like(z)
    pos = z > 0
    out[pos] = z[pos] ** 2 * ker.P_scaled(s[pos], gamma)
    if np.any(~pos):
        # z = 0, d = 1: Q(0) int rho^(1-gamma) z_max^gamma
        out[~pos] = ker.q_at_zero() * z_max ** 2 / (gamma - 2.0)
    return out


# (row, cell) pairs evaluated per vectorized call
_PAIR_BLOCK = 200_000


def assemble_weights(
    p: Params,
    mesh: Mesh,
    shapes=0.0,
    anchors: str | np.ndarray = "left",
    method: str = "closed",
    spec: sf.QuadratureSpec = sf.DEFAULT_QUAD,
    cells=None,
) -> KernelWeights:
    """Weight matrix for the discrete operator on ``mesh``.

    ``shapes`` (scalar or per-cell) and ``anchors`` ("left", "right" or a
    per-cell array of node indices) select the per-cell reference factor;
    the defaults give the plain weights int_cell K(z_i, rho) drho.
    ``method="ibp"`` evaluates plain weights by adaptive quadrature of the
    integrated-by-parts eta-integral instead of the closed forms.
    ``cells`` is an optional boolean mask; columns outside it stay zero.
    """
    z = mesh.nodes
    I = mesh.I
    ker = Kernel(p)
    if z[0] == 0.0 and p.d >= 2:
        raise DomainError("meshes for d >= 2 must start at z_min > 0")
    shp = np.broadcast_to(np.asarray(shapes, dtype=float), (I,)).copy()
    if isinstance(anchors, str):
        if anchors == "left":
            anc = np.arange(I)
        elif anchors == "right":
            anc = np.arange(1, I + 1)
        else:
            raise DomainError("anchors must be 'left', 'right' or an index array")
    else:
        anc = np.asarray(anchors, dtype=int)
    active = np.ones(I, dtype=bool) if cells is None else np.asarray(cells, dtype=bool)
    w = np.zeros((I + 1, I))
    if method == "ibp":
        if np.any(shp != 0.0) or np.any(anc != np.arange(I)):
            raise DomainError("the quadrature route computes plain weights only")
        for i in range(I):
            for j in range(i, I):
                if not active[j]:
                    continue
                try:
                    w[i, j] = _ibp_weight(ker, z, i, j, spec)
                except QuadratureError as exc:
                    raise QuadratureError(
                        f"weight quadrature failed for cell (i={i}, j={j})", value=exc.value, err_est=exc.err_est
                    ) from exc
    elif method == "closed":
        # cells sharing a shape are integrated together against all rows at once
        groups: dict[float, list[int]] = {}
        for j in np.flatnonzero(active):
            groups.setdefault(float(shp[j]), []).append(int(j))
        for gam, js in groups.items():
            js = np.asarray(js)
            rows, cols = np.nonzero(np.arange(I + 1)[:, None] <= js[None, :])
            cols = js[cols]
            for lo in range(0, rows.size, _PAIR_BLOCK):
                r_, c_ = rows[lo:lo + _PAIR_BLOCK], cols[lo:lo + _PAIR_BLOCK]
                w[r_, c_] = _cell_integrals(ker, z[r_], z[c_], z[c_ + 1], gam, z[anc[c_]])
    else:
        raise DomainError(f"unknown weight method {method!r}")
    if not np.all(np.isfinite(w)):
        bad = np.argwhere(~np.isfinite(w))[0]
        raise DomainError(f"non-finite weight at cell (i={bad[0]}, j={bad[1]})")
    return KernelWeights(mesh_id=mesh.mesh_id, w=w, anchors=anc, shapes=shp)


def _ibp_weight(ker: Kernel, z: np.ndarray, i: int, j: int, spec: sf.QuadratureSpec) -> float:
    """Plain weight from the eta-integral obtained by integrating by parts in rho."""
    zi, zl, zr = z[i], z[j], z[j + 1]
    if ker.p.classical:
        return ker.b * (zr * zr - zl * zl) / 2.0
    if zi == 0.0:
        return ker.q_at_zero() * (zr * zr - zl * zl) / 2.0
    def f(w):
        # w = 1 - eta keeps the (1 - eta^(1/b))^(-alpha) factor exact near eta = 1
        w = np.asarray(w, dtype=float)
        X = -np.expm1(np.log1p(-w) / ker.b)
        eta = 1.0 - w
        rmax = np.maximum(zl, zi / eta)
        return ker.inv_gamma * X ** (-ker.alpha) * eta ** (1.0 - ker.d) * (zr * zr - rmax * rmax) / 2.0

    w_hi = (zr - zi) / zr
    if j == i:
        val, _ = sf.integrate(f, 0.0, w_hi, spec, singular=(ker.alpha, 0.0))
        return val
    # below w = w_kink the integrand carries the singular factor; beyond it is smooth
    w_kink = (zl - zi) / zl
    v1, _ = sf.integrate(f, w_kink, w_hi, spec)
    v2, _ = sf.integrate(f, 0.0, w_kink, spec, singular=(ker.alpha, 0.0))
    return v1 + v2


def derivative_weights(
    p: Params, z_eval: np.ndarray, mesh: Mesh, shape_tail: float | None = None, z_tail: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear (hat) weights for (U^m)'(z) = -int_z^inf (-Q')(z/rho) U(rho) drho.

    Returns (D, tail) with -(U^m)'(z_k) = D[k] @ U + tail[k] * U_tail_scale, where
    the tail column integrates (rho/z_tail)^(-shape_tail) beyond the last node.
    A sequence of shapes gives one tail column per shape. Each z_eval must be
    a mesh node.
    """
    ker = Kernel(p)
    z = mesh.nodes
    I = mesh.I
    D = np.zeros((len(z_eval), I + 1))
    scalar = shape_tail is None or np.ndim(shape_tail) == 0
    shapes = [] if shape_tail is None else list(np.atleast_1d(np.asarray(shape_tail, dtype=float)))
    tail = np.zeros((len(z_eval), len(shapes)))
    z_eval = np.asarray(z_eval, dtype=float)
    idx = np.searchsorted(z, z_eval)
    if p.classical:
        D[np.arange(len(z_eval)), idx] = ker.b * z_eval
    else:
        origin = z_eval == 0.0
        if np.any(origin):
            # -Q'(0) = 1/Gamma(1-alpha) for d = 1
            h = np.diff(z)
            D[np.ix_(origin, np.arange(I))] += ker.inv_gamma * h / 2.0
            D[np.ix_(origin, np.arange(1, I + 1))] += ker.inv_gamma * h / 2.0
            for n, g in enumerate(shapes):
                tail[origin, n] = ker.inv_gamma * z_tail / (g - 1.0)
        ks = np.flatnonzero(~origin)
        # all (row, cell) pairs with the cell at or beyond the row's node
        counts = I - idx[ks]
        rows = np.repeat(ks, counts)
        js = np.concatenate([np.arange(idx[k], I) for k in ks]) if ks.size else np.zeros(0, dtype=int)
        for lo in range(0, rows.size, _PAIR_BLOCK):
            r_, j_ = rows[lo:lo + _PAIR_BLOCK], js[lo:lo + _PAIR_BLOCK]
            ze = z_eval[r_]
            zl, zr = z[j_], z[j_ + 1]
            s_l, s_r = ze / zl, ze / zr
            # int_cell (-Q')(ze/rho) rho^k drho = ze^(1+k) int (-Q')(s) s^(-2-k) ds, k = 0, 1
            m0 = ze * ker.dE(s_r, s_l, 0.0)
            m1 = ze * ze * ker.dE(s_r, s_l, -1.0)
            h = zr - zl
            # hat functions: U(rho) = U_l (zr - rho)/h + U_r (rho - zl)/h
            np.add.at(D, (r_, j_), (zr * m0 - m1) / h)
            np.add.at(D, (r_, j_ + 1), (m1 - zl * m0) / h)
        for n, g in enumerate(shapes):
            # int_{z_tail}^inf (-Q')(ze/rho) (rho/z_tail)^(-g) drho = ze st^(-g) int_0^st (-Q') s^(g-2) ds
            ze = z_eval[ks]
            st = ze / z_tail
            pp = ker.b * (g - ker.d)
            t = st ** (1.0 / ker.b)
            tail[ks, n] = ze * st ** (-float(ker.d)) * ker.b * ker.inv_gamma * np.asarray(sf.inc_beta_scaled(t, pp, ker.qb))
    if scalar:
        tail = tail[:, 0] if shapes else np.zeros(len(z_eval))
    return D, tail
