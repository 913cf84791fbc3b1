"""Command-line entry point: ``steklov-layer <mode> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 computation finished but the convergence claim was not met.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, FitError, NumericsError, SteklovError
from .fitting import FitResult, fit_two_term

__all__ = ["main", "build_parser", "fit_two_term", "FitResult", "parse_eps_grid"]

log = logging.getLogger("steklov_layer")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS, EXIT_CLAIM = 0, 2, 3, 4


def parse_eps_grid(text: str):
    """``a:b:step`` -> points ``a, a+step, ...`` strictly below ``b``."""
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"eps grid must look like a:b:step, got {text!r}") from None
    if step <= 0 or a <= 0 or b <= a:
        raise ConfigError("eps grid needs 0 < a < b and step > 0")
    n = int(np.floor((b - a) / step + 1e-9)) + 1
    pts = a + step * np.arange(n)
    pts = pts[pts < b - 1e-12 * b]
    return [float(round(p, 12)) for p in pts]


def _header(cfg_hash: str) -> str:
    return f"# steklov_layer {__version__} config={cfg_hash}\n"


def _write_csv(path, columns, rows, cfg_hash):
    buf = io.StringIO()
    buf.write(_header(cfg_hash))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    _emit(path, buf.getvalue())


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_json(path, obj):
    _emit(path, json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def _emit(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load(args):
    from .config import load_config
    if not args.config:
        raise ConfigError(f"{args.mode} needs --config")
    return load_config(args.config).override(args.tol_override)


def _mesh_for(cfg, curve, eps):
    from .mesh import classify_strip, mesh_star_domain, read_msh
    if cfg.mesh_file:
        mesh = read_msh(cfg.mesh_file)
        return classify_strip(mesh, curve, eps) if eps else mesh
    return mesh_star_domain(curve, eps, cfg.mesh["n_tangential"], cfg.mesh["n_layer"],
                            cfg.mesh.get("n_interior"))


def _matrices(mesh):
    from .fem import assemble_boundary_mass, assemble_mass, assemble_stiffness
    return {"K": assemble_stiffness(mesh), "M1": assemble_mass(mesh),
            "B": assemble_boundary_mass(mesh)}


# ---------------------------------------------------------------- modes


def run_steklov(args):
    from .steklov import solve_steklov, steklov_integrals
    cfg = _load(args)
    curve = cfg.build_curve()
    eps = cfg.eps_list[0] if cfg.eps_list else min(0.05, 0.5 * curve.max_eps)
    mesh = _mesh_for(cfg, curve, None if cfg.mesh_file else eps)
    mats = _matrices(mesh)
    pairs = solve_steklov(mesh, curve, cfg.mass_M, cfg.k, gap_tol=cfg.tolerances["gap_tol"],
                          disk_mode=cfg.disk_mode, tol=cfg.tolerances["eig_tol"], matrices=mats)
    rows = []
    for p in pairs:
        it = steklov_integrals(p, mesh, curve, mats)
        rows.append((p.index, p.mu, p.gap, it.vol_int, it.bnd_curv_int))
    _write_csv(args.out, ["index", "mu", "gap", "vol_int", "bnd_curv_int"], rows, cfg.digest())
    return EXIT_OK


def run_neumann(args):
    from .asymptotics import first_order_data
    from .perturbed import eigenvalue_curve
    from .steklov import solve_steklov
    cfg = _load(args)
    curve = cfg.build_curve()
    if not cfg.eps_list:
        raise ConfigError("neumann needs a non-empty eps_list")
    rows = []
    if cfg.j == 0:
        mu = mu1 = 0.0
    else:
        mesh = _mesh_for(cfg, curve, cfg.eps_list[0])
        mats = _matrices(mesh)
        pair = solve_steklov(mesh, curve, cfg.mass_M, cfg.j + 2, disk_mode=cfg.disk_mode,
                             matrices=mats)[cfg.j]
        data = first_order_data(pair, mesh, curve, cfg.mass_M, with_u1=False, matrices=mats)
        mu, mu1 = data.mu, data.mu1
    for r in eigenvalue_curve(curve, cfg.mass_M, cfg.j, cfg.eps_list, cfg.mesh,
                              mu=mu if cfg.j else None):
        pred = mu + r.eps * mu1
        rows.append((r.eps, r.j, r.lam, mu, pred, r.lam - pred))
    _write_csv(args.out, ["eps", "j", "lambda", "mu", "predicted", "remainder"], rows,
               cfg.digest())
    return EXIT_OK


def run_expand(args):
    from .asymptotics import compatibility_lambda, aux_problem_data, first_order_data, uj1_target
    from .steklov import solve_steklov
    cfg = _load(args)
    curve = cfg.build_curve()
    eps = cfg.eps_list[0] if cfg.eps_list else min(0.05, 0.5 * curve.max_eps)
    mesh = _mesh_for(cfg, curve, None if cfg.mesh_file else eps)
    mats = _matrices(mesh)
    pair = solve_steklov(mesh, curve, cfg.mass_M, cfg.j + 2, disk_mode=cfg.disk_mode,
                         matrices=mats)[cfg.j]
    data = first_order_data(pair, mesh, curve, cfg.mass_M, matrices=mats)
    f, g1, g2 = aux_problem_data(pair, mesh, curve, data.geom)
    lam_c = compatibility_lambda(f, g1, g2, pair, mesh, mats)
    side = float(data.u1 @ (mats["B"] @ pair.u))
    target = uj1_target(data.mu, data.mu1, data.geom)
    report = {
        "version": __version__,
        "config_hash": cfg.digest(),
        "j": cfg.j,
        "mu": data.mu,
        "mu1": data.mu1,
        "terms": data.terms,
        "vol_int": data.integrals.vol_int,
        "bnd_curv_int": data.integrals.bnd_curv_int,
        "compatibility_lambda": lam_c,
        "compatibility_residual": abs(lam_c - data.mu1),
        "uj1_condition": {"value": side, "target": target, "error": abs(side - target)},
        "aux_weak_residual": data.aux.weak_residual,
        "simple": pair.simple_flag,
        "n_nodes": mesh.n_nodes,
    }
    _write_json(args.out, report)
    return EXIT_OK


def run_quasimode(args):
    from .quasimode import residual_order_study
    cfg = _load(args)
    curve = cfg.build_curve()
    order = args.order if args.order is not None else cfg.order
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        st = residual_order_study(curve, cfg.mass_M, cfg.j, order, cfg.eps_list, cfg.mesh,
                                  disk_mode=cfg.disk_mode)
    for w in caught:
        log.warning("%s", w.message)
    rows = [(r.eps, r.residual, r.nearest_gap, r.norm_dev, r.floor_flag) for r in st.reports]
    _write_csv(args.out, ["eps", "residual", "nearest_gap", "norm_dev", "floor_flag"], rows,
               cfg.digest())
    log.info("order %d: residual slope %.4f +- %.4f, norm slope %.4f", order, st.slope,
             st.slope_half_width, st.norm_slope)
    return EXIT_OK


def run_ball(args):
    from .ball import ball_curves
    if args.M is None:
        raise ConfigError("ball needs --M")
    if args.kmax < 1 or args.lmax < 1:
        raise ConfigError("kmax and lmax must be >= 1")
    grid = parse_eps_grid(args.eps_grid)
    if grid[-1] >= 1.0:
        raise ConfigError("eps grid must stay below 1 on the unit disk")
    rows = ball_curves(args.M, args.kmax, args.lmax, grid)
    stamp = json.dumps({"M": args.M, "kmax": args.kmax, "lmax": args.lmax,
                        "eps_grid": args.eps_grid}, sort_keys=True)
    _write_csv(args.out, ["k", "l", "eps", "lambda"], rows,
               hashlib.sha256(stamp.encode()).hexdigest()[:16])
    return EXIT_OK


def run_converge(args):
    from .pipeline import fem_expansion, oracle_expansion
    cfg = _load(args)
    curve = cfg.build_curve()
    if len(cfg.eps_list) < 3:
        raise ConfigError("converge needs at least 3 eps values")
    rep = fem_expansion(curve, cfg.mass_M, cfg.j, cfg.eps_list, cfg.mesh,
                        disk_mode=cfg.disk_mode)
    out = {
        "version": __version__,
        "config_hash": cfg.digest(),
        "rows": [{"eps": r.eps, "lambda": r.lam, "mu": r.mu, "mu1": r.mu1,
                  "predicted": r.predicted, "remainder": r.remainder,
                  "lambda_coarse": r.lam_coarse, "lambda_fine": r.lam_fine,
                  "oleinik_pass": r.oleinik_pass} for r in rep.rows],
        "slope": rep.fit.slope if rep.fit else None,
        "slope_half_width": rep.fit.half_width if rep.fit else None,
        "environment": {**rep.meta, "tolerances": cfg.tolerances},
    }
    if curve.kind == "disk" and cfg.disk_mode and cfg.j % 2 == 1:
        if curve.params[0] == 1.0:
            ora = oracle_expansion((cfg.j + 1) // 2, cfg.mass_M, cfg.eps_list)
            out["oracle"] = [{"eps": r.eps, "lambda": r.lam, "predicted": r.predicted,
                              "remainder": r.remainder} for r in ora.rows]
            out["oracle_slope"] = ora.fit.slope
    _write_json(args.out, out)
    if rep.fit is None or rep.fit.slope < cfg.tolerances["min_slope"]:
        return EXIT_CLAIM
    return EXIT_OK


def run_mesh(args):
    from .mesh import write_msh
    cfg = _load(args)
    curve = cfg.build_curve()
    eps = cfg.eps_list[0] if cfg.eps_list else min(0.05, 0.5 * curve.max_eps)
    mesh = _mesh_for(cfg, curve, eps)
    if args.out in (None, "-"):
        raise ConfigError("mesh export needs --out PATH")
    write_msh(mesh, args.out)
    return EXIT_OK


MODES = {
    "steklov": run_steklov,
    "neumann": run_neumann,
    "expand": run_expand,
    "quasimode": run_quasimode,
    "ball": run_ball,
    "converge": run_converge,
    "mesh": run_mesh,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default="-", help="output file (default: stdout)")
    common.add_argument("--threads", type=int, default=1,
                        help="BLAS threads for the linear algebra")
    common.add_argument("--tol-override", action="append", default=[], metavar="K=V")
    p = _Parser(prog="steklov-layer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    for name in ("steklov", "neumann", "expand", "converge", "mesh"):
        sub.add_parser(name, parents=[common])
    q = sub.add_parser("quasimode", parents=[common])
    q.add_argument("--order", type=int, choices=[0, 1])
    b = sub.add_parser("ball", parents=[common])
    b.add_argument("--M", type=float)
    b.add_argument("--kmax", type=int, default=6)
    b.add_argument("--lmax", type=int, default=4)
    b.add_argument("--eps-grid", default="0.005:1:0.005")
    return p


def _setup_logging():
    level = os.environ.get("STEKLOV_LOG", "error").lower()
    if level not in ("error", "info", "debug"):
        level = "error"
    logging.basicConfig(level=getattr(logging, level.upper()), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        if args.threads and args.threads > 0:
            _limit_threads(args.threads)
        return MODES[args.mode](args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (NumericsError, FitError) as exc:
        return _fail(EXIT_NUMERICS, exc)
    except SteklovError as exc:          # pragma: no cover - all subclasses handled above
        return _fail(EXIT_NUMERICS, exc)


def _limit_threads(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return
    threadpool_limits(n)


if __name__ == "__main__":         # pragma: no cover
    sys.exit(main())
