"""Discrete fixed-point solver for U^m(z) = int_z^inf K(z, rho) U(rho) drho.

Profiles are sampled at mesh nodes. The discrete operator is

    (K_h U)_i = (sum_j A_ij U_j + T_i)^(1/m),

with A built from integrated kernel weights (kernel.assemble_weights) and T
the contribution of a frozen analytic tail beyond the last node (fast
diffusion only). Iterates start from a certified subsolution, so Picard
iteration is monotone; every iteration checks this, together with the
upper barrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import closedform as cf
from . import specfun as sf
from .errors import (
    BracketViolation,
    ConvergenceError,
    DomainError,
    MassError,
    MonotonicityError,
    NumericalOverflowError,
    RegimeError,
)
from .kernel import (
    Kernel,
    KernelWeights,
    Mesh,
    Params,
    assemble_weights,
    derivative_weights,
    power_tail,
    sphere_area,
)

__all__ = [
    "FastTail",
    "SolveReport",
    "DiscreteProfile",
    "Operator",
    "make_mesh",
    "build_operator",
    "apply_operator",
    "subsolution_constant",
    "supersolution_constant",
    "solve_slow",
    "solve_fast",
    "sample_linear",
    "fast_tail",
    "vss_tail",
    "mass",
    "rescale_to_mass",
    "flux_and_head_diagnostics",
    "first_moment_head",
]

# slack of the per-iteration monotonicity and barrier checks, relative to max U
SLACK = 1e-12


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FastTail:
    """Frozen tail c* rho^(-g) (1 - (rho/L)^(-gamma*)) attached beyond z_max."""

    c_star: float
    gamma_mass: float
    gamma_star: float
    z0: float
    scale: float
    z_max: float

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.scale == 0.0:
            return np.exp(self.log_vss(rho))
        return np.exp(self.log_vss(rho)) * -np.expm1(-self.gamma_star * np.log(rho / self.scale))

    def log_vss(self, rho):
        return math.log(self.c_star) - self.gamma_mass * np.log(np.asarray(rho, dtype=float))

    def coefficients(self) -> list[tuple[float, float]]:
        """(coefficient, shape) pairs: tail = sum coef (rho/z_max)^(-shape)."""
        g, gs, zm = self.gamma_mass, self.gamma_star, self.z_max
        lead = math.log(self.c_star) - g * math.log(zm)
        if self.scale == 0.0:
            return [(math.exp(lead), g)]
        return [
            (math.exp(lead), g),
            (-math.exp(lead + gs * math.log(self.scale / zm)), g + gs),
        ]

    def mass_integral(self, d: int) -> float:
        """int_{z_max}^inf tail(rho) rho^(d-1) drho."""
        return sum(c * self.z_max ** d / (s - d) for c, s in self.coefficients())


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    monotone_certificate: bool = True
    nondecreasing_steps: int = 0
    final_mass: float = float("nan")
    flux_extrapolate: float = float("nan")
    wall_notes: str = ""
    status: str = "converged"

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "monotone_certificate": bool(self.monotone_certificate),
            "nondecreasing_steps": int(self.nondecreasing_steps),
            "final_mass": float(self.final_mass),
            "flux_extrapolate": float(self.flux_extrapolate),
            "wall_notes": self.wall_notes,
            "status": self.status,
        }


@dataclass(frozen=True, eq=False)
class DiscreteProfile:
    """Nodal values of a radial profile, non-negative and non-increasing."""

    mesh: Mesh
    values: np.ndarray
    regime: str
    params: Params
    tail: FastTail | None = None
    report: SolveReport | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).copy()
        if v.shape != self.mesh.nodes.shape:
            raise DomainError("values must match the mesh nodes")
        if not np.all(np.isfinite(v)):
            raise NumericalOverflowError("profile values are not finite")
        if np.any(v < 0.0):
            raise DomainError("profile values must be non-negative")
        rise = np.diff(v)
        if np.any(rise > SLACK * max(1.0, float(v.max(initial=0.0)))):
            k = int(np.argmax(rise))
            raise MonotonicityError(f"profile increases between nodes {k} and {k + 1}", node=k, amount=float(rise[k]))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def nodes(self) -> np.ndarray:
        return self.mesh.nodes

    def __call__(self, z):
        """Interpolated values; analytic tail beyond the last node, head shape below the first."""
        za, scalar = sf._as_array(z)
        zn, v = self.mesh.nodes, self.values
        out = np.empty_like(za)
        inside = (za >= zn[0]) & (za <= zn[-1])
        if self.regime == "slow":
            out[inside] = np.interp(za[inside], zn, v)
            out[za > zn[-1]] = 0.0
        else:
            pos = v > 0
            lz, lv = np.log(zn[pos]), np.log(v[pos])
            zi = za[inside]
            out[inside] = np.exp(np.interp(np.log(np.maximum(zi, zn[pos][0])), lz, lv))
            beyond = za > zn[-1]
            if np.any(beyond):
                out[beyond] = self.tail(za[beyond]) if self.tail is not None else 0.0
        below = za < zn[0]
        if np.any(below):
            out[below] = _head_extension(self, za[below])
        return sf._ret(out, scalar)


def _head_extension(u: DiscreteProfile, z: np.ndarray) -> np.ndarray:
    z0, v0 = u.mesh.nodes[0], u.values[0]
    d, m = u.params.d, u.params.m
    if d == 1:
        return np.full_like(z, v0)
    with np.errstate(divide="ignore"):
        ratio = cf.head_shape(d, z) / float(cf.head_shape(d, z0))
    return v0 * ratio ** (1.0 / m)


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

def make_mesh(
    regime: str,
    I: int,
    grading: str = "auto",
    power: float | None = None,
    z_min: float | None = None,
    z_max: float | None = None,
) -> Mesh:
    """Mesh for a regime.

    slow: [z_min or 0, 1], ``grading`` "uniform" or "power" (z = 1 - (1-x)^power);
    fast: log-spaced on [z_min, z_max]; linear: uniform on [z_min or 0, z_max].
    """
    if I < 8:
        raise DomainError("I must be at least 8")
    x = np.linspace(0.0, 1.0, I + 1)
    if regime == "slow":
        lo = 0.0 if z_min is None else float(z_min)
        if not 0.0 <= lo < 1.0:
            raise DomainError("slow meshes need 0 <= z_min < 1")
        if grading in ("auto", "power"):
            pw = 2.0 if power is None else float(power)
            if pw < 1.0:
                raise DomainError("power grading needs exponent >= 1")
            u = 1.0 - (1.0 - x) ** pw
            desc = f"power {pw:g} toward 1"
        elif grading == "uniform":
            u = x
            desc = "uniform"
        else:
            raise DomainError(f"unknown grading {grading!r}")
        nodes = lo + (1.0 - lo) * u
        nodes[-1] = 1.0
        return Mesh(nodes, desc)
    if regime == "fast":
        if z_min is None or z_max is None or not 0.0 < z_min < z_max:
            raise DomainError("fast meshes need 0 < z_min < z_max")
        if grading not in ("auto", "log"):
            raise DomainError("fast meshes are log-spaced")
        return Mesh(np.geomspace(z_min, z_max, I + 1), "log")
    if regime == "linear":
        lo = 0.0 if z_min is None else float(z_min)
        if z_max is None or not z_max > lo:
            raise DomainError("linear meshes need z_max > z_min")
        return Mesh(lo + (z_max - lo) * x, "uniform")
    raise RegimeError(f"unknown regime {regime!r}")


# ---------------------------------------------------------------------------
# the discrete operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Operator:
    """Dense nodal matrix A and tail vector T of K_h on a mesh."""

    params: Params
    mesh: Mesh
    A: np.ndarray
    T: np.ndarray

    def __call__(self, U: np.ndarray, with_tail: bool = True) -> np.ndarray:
        y = self.A @ U
        if with_tail:
            y = y + self.T
        return np.maximum(y, 0.0) ** (1.0 / self.params.m)


def _nodal_matrix(w: KernelWeights, n_nodes: int) -> np.ndarray:
    A = np.zeros((n_nodes, n_nodes))
    np.add.at(A.T, w.anchors, w.w.T)
    return A


def _fast_tail_vector(p: Params, mesh: Mesh, tail: FastTail) -> np.ndarray:
    ker = Kernel(p)
    z = mesh.nodes
    return sum(c * power_tail(ker, z, tail.z_max, s) for c, s in tail.coefficients())


def _tail_split(tail: FastTail) -> float:
    """Start of the cells whose weights follow the subsolution shape."""
    return max(2.0 * tail.scale, tail.z0 * tail.scale, tail.scale * 2.0 ** (1.0 / tail.gamma_star))


# per-cell exponents are rounded to this step so cells can share weight evaluations
KAPPA_STEP = 0.02


def _guess_slopes(tail: FastTail, z: np.ndarray) -> np.ndarray:
    """-dlog U/dlog z of U* (1 + (z/L)^(-gamma*)/k)^(-k), k = g/gamma*.

    The guess is flat at the origin, matches the two-term tail and is exact
    at alpha = 1.
    """
    g, gs = tail.gamma_mass, tail.gamma_star
    k = g / gs
    x = (z / tail.scale) ** (-gs)
    return g - gs * x / (1.0 + x / k)


def cell_slopes(z: np.ndarray, values: np.ndarray, g: float) -> np.ndarray:
    """Local power-law exponents -dlog U/dlog z per cell, clipped to [0, g]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.log(values[:-1] / values[1:]) / np.log(z[1:] / z[:-1])
    return np.clip(np.nan_to_num(k, nan=0.0, posinf=g), 0.0, g)


def build_operator(
    p: Params,
    mesh: Mesh,
    tail: FastTail | None = None,
    kappa: np.ndarray | None = None,
    spec: sf.QuadratureSpec = sf.DEFAULT_QUAD,
    method: str = "closed",
) -> Operator:
    """Assemble K_h.

    ``method`` picks the weight route for the tail-free operator: "closed"
    (closed-form cell integrals) or "ibp" (adaptive quadrature after
    integration by parts).

    Without a tail every cell uses the plain left-endpoint rule. With a
    fast-diffusion tail, cells beyond the split point are integrated exactly
    for the shape rho^(-g) (1 - (rho/L)^(-gamma*)) anchored at their right
    node, and the tail beyond the last node enters through T. The remaining
    cells follow rho^(-kappa_j) anchored at their right node, with kappa the
    local decay exponent (a guess from the tail parameters when omitted).
    """
    z = mesh.nodes
    I = mesh.I
    if tail is None:
        w = assemble_weights(p, mesh, method=method, spec=spec)
        return Operator(p, mesh, _nodal_matrix(w, I + 1), np.zeros(I + 1))
    g, gs = tail.gamma_mass, tail.gamma_star
    split = _tail_split(tail)
    shaped = z[:-1] >= split
    core = ~shaped
    if kappa is None:
        zc = np.sqrt(z[:-1] * z[1:])
        kappa = np.clip(_guess_slopes(tail, zc), 0.0, g)
    kq = np.round(np.asarray(kappa, dtype=float) / KAPPA_STEP) * KAPPA_STEP
    # the closed-form cell integrals exclude the exponent 2
    kq = np.where(np.abs(kq - 2.0) < 0.25 * KAPPA_STEP, 2.0 + 0.5 * KAPPA_STEP, kq)
    w0 = assemble_weights(p, mesh, shapes=kq, anchors="right", spec=spec, cells=core)
    A = _nodal_matrix(w0, I + 1)
    if np.any(shaped):
        wg = assemble_weights(p, mesh, shapes=g, anchors="right", spec=spec, cells=shaped).w
        wgg = assemble_weights(p, mesh, shapes=g + gs, anchors="right", spec=spec, cells=shaped).w
        zr = z[1:]
        r = (zr / tail.scale) ** (-gs)
        with np.errstate(divide="ignore", invalid="ignore"):
            ws = np.where(shaped[None, :], (wg - r[None, :] * wgg) / (1.0 - r[None, :]), 0.0)
        ws = np.maximum(ws, 0.0)
        A[:, 1:] += ws
    T = _fast_tail_vector(p, mesh, tail)
    return Operator(p, mesh, A, T)


def apply_operator(w, u: DiscreteProfile) -> DiscreteProfile:
    """K_h applied to a profile; ``w`` is an Operator or plain KernelWeights."""
    if isinstance(w, KernelWeights):
        if w.mesh_id != u.mesh.mesh_id:
            raise DomainError("weights were assembled on a different mesh")
        A = _nodal_matrix(w, u.mesh.I + 1)
        T = _fast_tail_vector(u.params, u.mesh, u.tail) if u.tail is not None else 0.0
        y = A @ u.values + T
        out = np.maximum(y, 0.0) ** (1.0 / u.params.m)
    else:
        if w.mesh.mesh_id != u.mesh.mesh_id:
            raise DomainError("operator was assembled on a different mesh")
        out = w(u.values)
    return DiscreteProfile(u.mesh, out, u.regime, u.params, u.tail)


def _shape_values(p: Params, z: np.ndarray) -> np.ndarray:
    out = np.zeros_like(z)
    pos = z > 0
    out[pos] = cf.reference_shape(p, z[pos])
    if np.any(~pos):
        if p.d != 1:
            raise DomainError("the reference shape is singular at z = 0 for d >= 2")
        out[~pos] = float(cf.reference_shape(p, 0.25))
    return out


def _ratio_formula(op: Operator, shape: np.ndarray) -> np.ndarray:
    m = op.params.m
    inner = shape > 0
    if not np.any(inner):
        raise DomainError("degenerate shape: no positive nodes")
    ks = op.A @ shape + op.T
    if np.any(ks[inner] <= 0.0):
        raise DomainError("degenerate shape: K_h shape vanishes at a positive node")
    with np.errstate(divide="ignore"):
        logr = np.log(ks[inner]) - m * np.log(shape[inner])
    return logr / (m - 1.0)


def _safety(m: float) -> float:
    # shrinking c by eps leaves a relative margin eps (m-1)/m in the certificate
    return min(1e-3, 1e-9 * m / (m - 1.0))


def subsolution_constant(op: Operator, shape: np.ndarray) -> float:
    """Largest c (up to a small safety factor) with c shape <= K_h(c shape)."""
    shape = np.asarray(shape, dtype=float)
    if op.params.m <= 1.0:
        raise RegimeError("the min formula is for m > 1")
    inner = shape[:-1] > 0
    if not np.all(inner):
        raise DomainError("degenerate shape: zero at an interior node")
    c = math.exp(float(np.min(_ratio_formula(op, shape)))) * (1.0 - _safety(op.params.m))
    u = c * shape
    ku = op(u)
    bad = ku < u * (1.0 - SLACK)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise MonotonicityError("subsolution certificate failed", node=k, amount=float(u[k] - ku[k]))
    return c


def supersolution_constant(op: Operator, shape: np.ndarray) -> float:
    """Smallest C (up to a small safety factor) with C shape >= K_h(C shape)."""
    shape = np.asarray(shape, dtype=float)
    if op.params.m <= 1.0:
        raise RegimeError("the max formula is for m > 1")
    C = math.exp(float(np.max(_ratio_formula(op, shape)))) * (1.0 + _safety(op.params.m))
    u = C * shape
    ku = op(u)
    bad = ku > u * (1.0 + SLACK) + SLACK * u.max()
    if np.any(bad):
        k = int(np.argmax(bad))
        raise BracketViolation("supersolution certificate failed", node=k, amount=float(ku[k] - u[k]))
    return C


def _picard(
    op: Operator, U: np.ndarray, upper, tol: float, max_iter: int, report: SolveReport, monotone: bool = True
) -> np.ndarray:
    """Picard loop; ``upper(new)`` returns the index of a barrier violation or -1.

    With ``monotone`` every iterate must dominate its predecessor.
    """
    hist = []
    for n in range(1, max_iter + 1):
        new = op(U)
        if not np.all(np.isfinite(new)):
            raise NumericalOverflowError("Picard iterate overflowed")
        scale = max(1.0, float(new.max()))
        drop = U - new
        if not np.any(drop > SLACK * scale):
            report.nondecreasing_steps += 1
        elif monotone:
            k = int(np.argmax(drop))
            report.monotone_certificate = False
            raise MonotonicityError(
                f"iterate decreased at node {k} in iteration {n}", iteration=n, node=k, amount=float(drop[k])
            )
        k = upper(new)
        if k >= 0:
            raise BracketViolation(f"iterate crossed the upper barrier at node {k} in iteration {n}", iteration=n, node=k)
        res = float(np.max(np.abs(new - U)) / max(float(new.max()), np.finfo(float).tiny))
        hist.append(res)
        U = new
        if res <= tol:
            report.iterations = n
            report.residual_history = np.asarray(hist)
            return U
    report.iterations = max_iter
    report.residual_history = np.asarray(hist)
    report.status = "failed"
    raise ConvergenceError(f"no convergence in {max_iter} iterations", value=U, report=report)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def _default_slow_power(p: Params, I: int) -> float:
    # keep the reference shape above the underflow range at the last interior node
    gam = cf.free_boundary_exponent(p)
    cap = 280.0 * math.log(10.0) / (gam * math.log(I))
    return float(min(3.0, max(1.0, cap)))


def solve_slow(
    p: Params,
    I: int = 512,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    mesh: Mesh | None = None,
    spec: sf.QuadratureSpec = sf.DEFAULT_QUAD,
    method: str = "closed",
) -> tuple[DiscreteProfile, SolveReport]:
    """Canonical slow-diffusion profile on [0, 1] by monotone Picard iteration."""
    if p.regime != "slow":
        raise RegimeError("solve_slow needs m > 1")
    if mesh is None:
        z_min = None if p.d == 1 else 1e-3
        mesh = make_mesh("slow", I, "power", power=_default_slow_power(p, I), z_min=z_min)
    op = build_operator(p, mesh, spec=spec, method=method)
    shape = _shape_values(p, mesh.nodes)
    # iterate on V = U / c0 with c0 the min-formula constant; by homogeneity
    # V solves the same problem with A scaled by c0^(1-m), and V = O(1)
    log_c0 = float(np.min(_ratio_formula(op, shape)))
    op_v = Operator(p, mesh, op.A * math.exp((1.0 - p.m) * log_c0), op.T)
    c = subsolution_constant(op_v, shape)
    C = supersolution_constant(op_v, shape)
    upper_vals = C * shape
    report = SolveReport(
        wall_notes=f"mesh: {mesh.grading}, I={mesh.I}; sub c={c * math.exp(log_c0):.6g}, super C={C * math.exp(log_c0):.6g}"
    )

    def upper(new):
        over = new - upper_vals
        bad = over > SLACK * max(1.0, float(upper_vals.max()))
        return int(np.argmax(bad)) if np.any(bad) else -1

    try:
        V = _picard(op_v, c * shape, upper, tol, max_iter, report)
    except ConvergenceError as exc:
        exc.report = report
        exc.value = exc.value * math.exp(log_c0)
        exc.nodes = mesh.nodes
        raise
    prof = DiscreteProfile(mesh, V * math.exp(log_c0), "slow", p, None, report)
    report.final_mass = mass(prof)
    report.flux_extrapolate = flux_and_head_diagnostics(prof)["flux0"]
    return prof, report


def _auto_scale(tail: FastTail, z_max: float) -> float:
    """L = 1 unless the canonical profile on [., z_max] leaves the double range.

    Otherwise L puts the known tail value at the last node near 1e-270, which
    leaves the rest of the range to the core.
    """
    g, gs = tail.gamma_mass, tail.gamma_star
    z_t = (g / gs) ** (-1.0 / gs)  # where the guess leaves its flat core
    lc = math.log(tail.c_star)
    log_core = lc - g * math.log(z_t)
    log_end = lc - g * math.log(z_max)
    bound = 250.0 * math.log(10.0)
    if log_core < bound and log_end > -bound:
        return 1.0
    # c* (L z_max)^(-g) = 1e-270
    return math.exp((lc + 270.0 * math.log(10.0)) / g - math.log(z_max))


def vss_tail(p: Params, z_max: float) -> FastTail:
    """The bare VSS c* rho^(-g) beyond z_max, without the gamma* correction (scale 0)."""
    return replace(fast_tail(p), scale=0.0, z_max=z_max)


def fast_tail(p: Params) -> FastTail:
    v = cf.vss(p)
    t = cf.gamma_star(p)
    return FastTail(v.c_star, v.gamma_mass, t.gamma_star, t.z0, 1.0, float("nan"))


def solve_fast(
    p: Params,
    I: int = 512,
    z_min: float | None = None,
    z_max: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    spec: sf.QuadratureSpec = sf.DEFAULT_QUAD,
    scale: float | None = None,
) -> tuple[DiscreteProfile, SolveReport]:
    """Fast-diffusion profile with the frozen subsolution tail.

    Returns U_L(z) = L^(-g) U(z/L), g = 2/(1-m), of the canonical profile U on
    the nodes L [z_min, z_max]. ``scale=None`` picks L = 1 unless the
    canonical profile would come close to overflow; the chosen L is stored
    in ``profile.tail.scale``.
    """
    if p.regime != "fast":
        raise RegimeError("solve_fast needs m_c < m < 1")
    base = fast_tail(p)
    z_min = 1e-2 if z_min is None else float(z_min)
    z_max = max(10.0 * base.z0, 10.0 * z_min, 100.0) if z_max is None else float(z_max)
    if z_max < max(10.0 * base.z0, 10.0 * z_min):
        raise DomainError("z_max must be at least max(10 z0, 10 z_min)")
    L = _auto_scale(base, z_max) if scale is None else float(scale)
    tail = replace(base, scale=L, z_max=L * z_max)
    mesh = make_mesh("fast", I, "log", z_min=L * z_min, z_max=L * z_max)
    z = mesh.nodes
    g, gs = tail.gamma_mass, tail.gamma_star
    with np.errstate(divide="ignore"):
        lz = np.log(z)
        lzs = lz - math.log(L)
        start = np.where(lzs > 0.0, np.exp(np.minimum(math.log(tail.c_star) - g * lz, 700.0)) * -np.expm1(-gs * np.maximum(lzs, 0.0)), 0.0)
    log_top = tail.log_vss(z)

    def upper(new):
        pos = new > 0
        with np.errstate(divide="ignore"):
            excess = np.where(pos, np.log(np.where(pos, new, 1.0)) - log_top, -np.inf)
        bad = excess > 1e-12
        return int(np.argmax(bad)) if np.any(bad) else -1

    # pilot pass with guessed cell exponents, then the certified pass with
    # exponents measured on the pilot
    pilot_report = SolveReport()
    op = build_operator(p, mesh, tail=tail, spec=spec)
    pilot = _picard(op, start, lambda new: -1, max(tol, 1e-6), max_iter, pilot_report, monotone=False)
    kappa = cell_slopes(z, pilot, g)
    op = build_operator(p, mesh, tail=tail, kappa=kappa, spec=spec)
    report = SolveReport(
        wall_notes=(
            f"mesh: log, I={I}, L*[{z_min:g}, {z_max:g}] with L={L:.6g}; tail-shaped cells from z={_tail_split(tail):.4g}; "
            f"pilot iterations {pilot_report.iterations}"
        )
    )
    try:
        U = _picard(op, start, upper, tol, max_iter, report)
    except ConvergenceError as exc:
        exc.nodes = mesh.nodes
        raise
    if np.any(U <= 0.0):
        raise ConvergenceError("fast profile is not strictly positive (tail underflow)", value=U, report=report)
    prof = DiscreteProfile(mesh, U, "fast", p, tail, report)
    report.final_mass = mass(prof)
    report.flux_extrapolate = flux_and_head_diagnostics(prof)["flux0"]
    return prof, report


def sample_linear(p: Params, I: int = 512, z_max: float = 40.0, spec: sf.QuadratureSpec = cf.LINEAR_QUAD) -> DiscreteProfile:
    """Linear-regime profile sampled from the Fourier inversion."""
    if p.m != 1.0:
        raise RegimeError("sample_linear needs m = 1")
    z_min = None if p.d == 1 else z_max / (4.0 * I)
    mesh = make_mesh("linear", I, z_min=z_min, z_max=z_max)
    vals = np.asarray(cf.linear_profile(p, mesh.nodes, spec))
    return DiscreteProfile(mesh, vals, "linear", p, None, SolveReport(wall_notes="sampled linear profile"))


# ---------------------------------------------------------------------------
# mass and rescaling
# ---------------------------------------------------------------------------

def _head_mass(u: DiscreteProfile) -> float:
    """int_0^{z_0} U rho^(d-1) drho from the head shape matched at the first node."""
    z0, v0 = u.mesh.nodes[0], u.values[0]
    d, m = u.params.d, u.params.m
    if z0 == 0.0:
        return 0.0
    if d == 1:
        return v0 * z0
    if d >= 3:
        # U ~ v0 (rho/z0)^(-(d-2)/m)
        return v0 * z0 ** d / (d - (d - 2.0) / m)
    # d = 2: U ~ v0 (log rho / log z0)^(1/m); substitute rho = z0 s
    L0 = abs(math.log(z0))

    def f(s):
        return s * (np.abs(np.log(z0 * s)) / L0) ** (1.0 / m)

    val, _ = sf.integrate(f, 0.0, 1.0, sf.QuadratureSpec(abs_tol=1e-15, rel_tol=1e-13))
    return v0 * z0 * z0 * val


def _linear_tail_mass(u: DiscreteProfile) -> float:
    zm, vm = u.mesh.nodes[-1], u.values[-1]
    if vm == 0.0:
        return 0.0
    d = u.params.d
    ref = float(cf.linear_tail_envelope(u.params, zm))

    def f(r):
        return np.asarray(cf.linear_tail_envelope(u.params, r)) / ref * r ** (d - 1)

    val, _ = sf.integrate(f, zm, math.inf, sf.QuadratureSpec(abs_tol=1e-300, rel_tol=1e-12))
    return vm * val


def mass(u: DiscreteProfile) -> float:
    """|dB_1| int_0^inf U rho^(d-1) drho.

    Trapezoidal cell averages against the exact cell measure, plus the head
    below the first node and the analytic tail beyond the last one.
    """
    z, v = u.mesh.nodes, u.values
    d = u.params.d
    if not np.any(v > 0):
        return 0.0
    meas = (z[1:] ** d - z[:-1] ** d) / d
    body = float(np.sum(0.5 * (v[1:] + v[:-1]) * meas))
    total = body + _head_mass(u)
    if u.regime == "fast" and u.tail is not None:
        total += u.tail.mass_integral(d)
    elif u.regime == "linear":
        total += _linear_tail_mass(u)
    return sphere_area(d) * total


def _rescaled(u: DiscreteProfile, A: float) -> DiscreteProfile:
    m = u.params.m
    lam = A ** ((m - 1.0) / 2.0)
    mesh = Mesh(u.mesh.nodes * lam, u.mesh.grading)
    tail = None
    if u.tail is not None:
        tail = replace(u.tail, scale=u.tail.scale * lam, z_max=u.tail.z_max * lam)
    return DiscreteProfile(mesh, A * u.values, u.regime, u.params, tail, u.report)


def rescale_to_mass(u: DiscreteProfile, M: float) -> DiscreteProfile:
    """U_M(z) = A U(A^(-(m-1)/2) z) with mass M; nodes are mapped exactly."""
    if not M > 0:
        raise MassError("target mass must be positive")
    m0 = mass(u)
    if not m0 > 0:
        raise MassError("cannot rescale a zero-mass profile")
    m = u.params.m
    expo = 1.0 + (m - 1.0) * u.params.d / 2.0
    A = (M / m0) ** (1.0 / expo)
    out = _rescaled(u, A)
    # the d = 2 head shape is not scale-covariant; a few secant steps close the gap
    for _ in range(8):
        mm = mass(out)
        if abs(mm / M - 1.0) <= 1e-14:
            break
        A *= (M / mm) ** (1.0 / expo)
        out = _rescaled(u, A)
    return DiscreteProfile(out.mesh, out.values, out.regime, u.params.replace(mass=M), out.tail, out.report)


# ---------------------------------------------------------------------------
# diagnostics near the origin
# ---------------------------------------------------------------------------

def _poly_limit(x: np.ndarray, y: np.ndarray) -> float:
    """Value at x = 0 of the interpolating polynomial."""
    return float(np.polyval(np.polyfit(x, y, len(x) - 1), 0.0))


def _flux_at(u: DiscreteProfile, idx: np.ndarray) -> np.ndarray:
    p = u.params
    z = u.mesh.nodes
    ze = z[idx]
    if u.tail is not None:
        coeffs = u.tail.coefficients()
        D, t = derivative_weights(p, ze, u.mesh, shape_tail=[s for _, s in coeffs], z_tail=u.tail.z_max)
        dd = D @ u.values + t @ np.array([c for c, _ in coeffs])
    else:
        D, _ = derivative_weights(p, ze, u.mesh)
        dd = D @ u.values
    return sphere_area(p.d) * ze ** (p.d - 1) * dd


def flux_and_head_diagnostics(u: DiscreteProfile) -> dict:
    """Flux -|dB_1| z^(d-1) (U^m)'(z) and U^m / V^m extrapolated to z = 0.

    The derivative uses -Q'-weighted cells with piecewise-linear U. The
    result flags ``unstable`` when the two-point and three-point
    extrapolations differ by more than 10%.
    """
    p = u.params
    z, v = u.mesh.nodes, u.values
    if p.classical:
        flux_nodes = np.arange(1, 4) if z[0] == 0.0 else np.arange(0, 3)
    else:
        flux_nodes = np.arange(0, 4) if z[0] == 0.0 else np.arange(0, 3)
    F = _flux_at(u, flux_nodes)
    zf = z[flux_nodes]
    if zf[0] == 0.0:
        flux0 = float(F[0])
        alt = _poly_limit(zf[1:], F[1:])
    else:
        flux0 = _poly_limit(zf, F)
        alt = _poly_limit(zf[:2], F[:2])
    head_nodes = np.arange(0, 3) if z[0] > 0.0 else np.arange(1, 4)
    zh = z[head_nodes]
    R = v[head_nodes] ** p.m / cf.head_shape(p.d, zh)
    if z[0] == 0.0 and p.d == 1:
        head = float(v[0] ** p.m)
        head_alt = _poly_limit(zh, R)
    else:
        head = _poly_limit(zh, R)
        head_alt = _poly_limit(zh[:2], R[:2])

    def differs(a, b):
        return abs(a - b) > 0.1 * max(abs(a), abs(b), 1e-300)

    return {
        "flux0": flux0,
        "flux_alt": alt,
        "flux_samples": F,
        "head_constant": head,
        "head_alt": head_alt,
        "unstable": bool(differs(flux0, alt) or differs(head, head_alt)),
    }


def first_moment_head(u: DiscreteProfile) -> float:
    """Q(0) int_0^inf rho U(rho) drho, the exact value of U^m(0) for d = 1."""
    if u.params.d != 1:
        raise RegimeError("the first-moment head formula is for d = 1")
    z, v = u.mesh.nodes, u.values
    # trapezoid on rho U with the exact linear-times-linear cell integral
    h = np.diff(z)
    body = float(np.sum(h * (v[:-1] * (2 * z[:-1] + z[1:]) + v[1:] * (z[:-1] + 2 * z[1:])) / 6.0))
    head = v[0] * z[0] ** 2 / 2.0
    tail = 0.0
    if u.tail is not None:
        tail = sum(c * u.tail.z_max ** 2 / (s - 2.0) for c, s in u.tail.coefficients())
    return Kernel(u.params).q_at_zero() * (body + head + tail)
