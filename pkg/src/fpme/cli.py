"""Command-line front end.

Subcommands: exponents, kernel, constants, profile, linear, validate.
Exit codes: 0 success, 1 validation failure, 2 usage or parameter error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import closedform as cf
from . import solver as S
from . import validate as V
from .errors import (
    ConvergenceError,
    DomainError,
    FpmeError,
    MonotonicityError,
    NumericalOverflowError,
    ParameterError,
    RegimeError,
)
from .kernel import Params, exponents, q_kernel, q_kernel_deriv

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

# keys accepted in --config files, mapped to argparse destinations
_CONFIG_KEYS = {
    "alpha": float,
    "m": float,
    "d": int,
    "mass": float,
    "grid_size": int,
    "tol": float,
    "max_iter": int,
    "z_min": float,
    "z_max": float,
    "points": int,
    "out": str,
    "format": str,
    "only": str,
}


class UsageError(Exception):
    pass


def _fmt(x: float) -> str:
    """Canonical float text: 17 significant digits."""
    return format(float(x), ".17g")


def read_config(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"config {path}: {exc.strerror}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config {path}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise UsageError(f"config {path}:{n}: unknown key {key!r}")
        try:
            out[key] = _CONFIG_KEYS[key](val)
        except ValueError:
            raise UsageError(f"config {path}:{n}: {key} expects {_CONFIG_KEYS[key].__name__}, got {val!r}") from None
    return out


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, text: str) -> None:
    if args.out:
        _atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# profile serialization
# ---------------------------------------------------------------------------

def profile_csv(meta: dict, z, U) -> str:
    lines = [f"# {k}={v}" for k, v in meta.items()]
    lines.append("z,U")
    lines += [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(z, U)]
    return "\n".join(lines) + "\n"


def read_profile_csv(text: str) -> tuple[dict, np.ndarray, np.ndarray]:
    meta, rows = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
        elif line and line != "z,U":
            a, b = line.split(",")
            rows.append((float(a), float(b)))
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return meta, arr[:, 0], arr[:, 1]


def profile_json(meta: dict, z, U) -> str:
    return json.dumps({"meta": meta, "z": [float(v) for v in z], "U": [float(v) for v in U]}, indent=1) + "\n"


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _shared(sp: argparse.ArgumentParser, params: bool = True) -> None:
    if params:
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--m", type=float)
        sp.add_argument("--d", type=int)
        sp.add_argument("--mass", type=float)
    sp.add_argument("--grid-size", type=int)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--out")
    sp.add_argument("--format", choices=("csv", "json"))
    sp.add_argument("--config")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fpme", description="Self-similar profiles of d_t^alpha u = Laplacian(u^m).")
    sub = ap.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("exponents", help="similarity exponents and regime")
    _shared(sp)
    sp = sub.add_parser("kernel", help="tabulate Q and Q' on a grid")
    _shared(sp)
    sp.add_argument("--points", type=int)
    sp = sub.add_parser("constants", help="closed-form constants of the regime")
    _shared(sp)
    sp = sub.add_parser("profile", help="solve for the mass-M profile")
    _shared(sp)
    sp.add_argument("--z-min", type=float)
    sp.add_argument("--z-max", type=float)
    sp.add_argument("--max-iter", type=int)
    sp = sub.add_parser("linear", help="m = 1 profile by Fourier inversion")
    _shared(sp)
    sp.add_argument("--z-max", type=float)
    sp = sub.add_parser("validate", help="run the diagnostic suite")
    _shared(sp, params=False)
    sp.add_argument("--only", help="comma-separated subset of: " + ", ".join(V.CHECKS))
    return ap


_DEFAULTS = {
    "alpha": 0.5,
    "m": 2.0,
    "d": 1,
    "mass": 1.0,
    "grid_size": 512,
    "tol": 1e-10,
    "max_iter": 100_000,
    "format": "csv",
    "points": 50,
}


def _merge(args: argparse.Namespace) -> argparse.Namespace:
    """CLI flags override the config file, which overrides defaults."""
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for key in set(_CONFIG_KEYS) | set(_DEFAULTS):
        if not hasattr(args, key):
            continue
        if getattr(args, key) is None:
            setattr(args, key, cfg.get(key, _DEFAULTS.get(key)))
    if args.format not in ("csv", "json"):
        raise UsageError(f"format must be csv or json, got {args.format!r}")
    return args


def _params(args, m: float | None = None) -> Params:
    return Params(alpha=args.alpha, m=args.m if m is None else m, d=args.d, mass=args.mass)


def _workers() -> int:
    raw = os.environ.get("FPME_NUM_THREADS", "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"FPME_NUM_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError("FPME_NUM_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def _table(args, rows: dict) -> None:
    if args.format == "json":
        _emit(args, json.dumps(rows, indent=2) + "\n")
    else:
        _emit(args, "".join(f"{k} = {v if isinstance(v, str) else _fmt(v)}\n" for k, v in rows.items()))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_exponents(args) -> int:
    p = _params(args)
    e = exponents(p)
    _table(args, {"a": e.a, "b": e.b, "m_c": p.m_c, "regime": p.regime})
    return EXIT_OK


def cmd_kernel(args) -> int:
    p = _params(args)
    n = args.points
    if n < 2:
        raise UsageError("--points must be at least 2")
    eta = np.linspace(0.0, 1.0, n + 2)[1:-1]
    Q = np.asarray(q_kernel(p, eta))
    dQ = np.asarray(q_kernel_deriv(p, eta)) if not p.classical else np.zeros_like(eta)
    if args.format == "json":
        _emit(args, json.dumps({"eta": eta.tolist(), "Q": Q.tolist(), "dQ": dQ.tolist()}, indent=1) + "\n")
    else:
        body = "".join(f"{_fmt(a)},{_fmt(b)},{_fmt(c)}\n" for a, b, c in zip(eta, Q, dQ))
        _emit(args, f"# alpha={_fmt(p.alpha)}\n# m={_fmt(p.m)}\n# d={p.d}\neta,Q,dQ\n" + body)
    return EXIT_OK


def cmd_constants(args) -> int:
    p = _params(args)
    rows = {"regime": p.regime, "b": exponents(p).b, "flux_constant": cf.flux_constant(p)}
    if p.regime == "fast":
        v = cf.vss(p)
        t = cf.gamma_star(p)
        rows.update(c_star=v.c_star, gamma_mass=v.gamma_mass, gamma_star=t.gamma_star, z0=t.z0, Lambda=t.Lambda)
    elif p.regime == "slow":
        rows.update(
            free_boundary_exponent=cf.free_boundary_exponent(p),
            free_boundary_constant=cf.free_boundary_constant(p),
        )
    rows["head_constant"] = cf.head_constant(p)
    _table(args, rows)
    return EXIT_OK


def _meta(args, p: Params, extra: dict) -> dict:
    e = exponents(p)
    meta = {
        "alpha": _fmt(p.alpha),
        "m": _fmt(p.m),
        "d": str(p.d),
        "mass": _fmt(p.mass),
        "grid_size": str(args.grid_size),
        "tol": _fmt(args.tol),
        "z_min": "" if getattr(args, "z_min", None) is None else _fmt(args.z_min),
        "z_max": "" if getattr(args, "z_max", None) is None else _fmt(args.z_max),
        "format": args.format,
        "a": _fmt(e.a),
        "b": _fmt(e.b),
        "regime": p.regime,
    }
    meta.update(extra)
    return meta


def _write_profile(args, meta: dict, z, U, report: dict | None) -> None:
    text = profile_json(meta, z, U) if args.format == "json" else profile_csv(meta, z, U)
    _emit(args, text)
    if args.out and report is not None:
        _atomic_write(args.out + ".report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")


def cmd_profile(args) -> int:
    p = _params(args)
    if p.regime == "linear":
        return cmd_linear(args)
    try:
        if p.regime == "slow":
            u, rep = S.solve_slow(p.replace(mass=1.0), I=args.grid_size, tol=args.tol, max_iter=args.max_iter)
        else:
            u, rep = S.solve_fast(
                p.replace(mass=1.0), I=args.grid_size, z_min=args.z_min, z_max=args.z_max, tol=args.tol,
                max_iter=args.max_iter,
            )
    except ConvergenceError as exc:
        # partial result: the best iterate on the canonical mesh
        rep = exc.report if isinstance(exc.report, S.SolveReport) else S.SolveReport(status="failed")
        rep.status = "failed"
        vals = np.asarray(exc.value) if exc.value is not None else np.zeros(0)
        nodes = getattr(exc, "nodes", None)
        if nodes is None or len(nodes) != vals.size:
            nodes, vals = np.zeros(0), np.zeros(0)
        meta = _meta(args, p, {"status": "failed", "error": str(exc), "iterations": str(rep.iterations)})
        _write_profile(args, meta, nodes, vals, rep.to_dict())
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    uM = S.rescale_to_mass(u, p.mass)
    extra = {
        "status": rep.status,
        "iterations": str(rep.iterations),
        "residual": _fmt(rep.residual_history[-1]) if len(rep.residual_history) else "nan",
        "final_mass": _fmt(S.mass(uM)),
        "monotone_certificate": str(rep.monotone_certificate).lower(),
    }
    if uM.tail is not None:
        t = uM.tail
        extra.update(c_star=_fmt(t.c_star), gamma_star=_fmt(t.gamma_star), tail_exponent=_fmt(t.gamma_mass),
                     tail_scale=_fmt(t.scale), tail_start=_fmt(t.z_max))
    else:
        extra["support"] = _fmt(uM.mesh.nodes[-1])
    _write_profile(args, _meta(args, p, extra), uM.mesh.nodes, uM.values, rep.to_dict())
    return EXIT_OK


def cmd_linear(args) -> int:
    p = _params(args, m=1.0)
    z_max = 10.0 if getattr(args, "z_max", None) is None else args.z_max
    z = np.linspace(0.0 if p.d == 1 else z_max / args.grid_size, z_max, args.grid_size + 1)
    try:
        U = np.asarray(cf.linear_profile(p, z))
    except ConvergenceError as exc:
        meta = _meta(args, p, {"status": "failed", "error": str(exc)})
        _write_profile(args, meta, np.zeros(0), np.zeros(0), None)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _write_profile(args, _meta(args, p, {"status": "converged", "z_max": _fmt(z_max)}), z, U, None)
    return EXIT_OK


def cmd_validate(args) -> int:
    data = {}
    if args.only:
        data["checks"] = args.only
    if args.grid_size is not None and args.grid_size != _DEFAULTS["grid_size"]:
        data["grid_size"] = args.grid_size
    try:
        cfg = V.ValidateConfig.from_mapping(data)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = V.replace(cfg, workers=_workers())
    report = V.run_all(cfg)
    _emit(args, report.to_json() + "\n")
    for r in report.results:
        tag = "PASS" if r.passed else ("WARN" if r.soft else "FAIL")
        print(f"{tag} {r.name}: observed {r.observed:.6g}, expected {r.expected:.6g} (tol {r.tolerance:.3g})", file=sys.stderr)
    for name, err in report.errors.items():
        print(f"ERROR {name}: {err}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VALIDATION


_COMMANDS = {
    "exponents": cmd_exponents,
    "kernel": cmd_kernel,
    "constants": cmd_constants,
    "profile": cmd_profile,
    "linear": cmd_linear,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        args = _merge(args)
        return _COMMANDS[args.command](args)
    except (UsageError, ParameterError, RegimeError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, MonotonicityError, NumericalOverflowError, FpmeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
