"""Command-line front end.

Commands: thermo (observable sweep), verify (identity suite), psi
(two-parameter integral at given points), bethe (per-N root/eigenvalue
table), nlie-dump (raw ln a on the grid).  Exit codes: 0 success, 1
verification failure, 2 solver/precondition failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import verify as verify_mod
from .bethe import aux_from_bethe, lambda_eigenvalue, qtm_exact_diag
from .config import RunConfig
from .errors import QtmlabError
from .model import DisorderParam
from .nlie import solve_aux_finite, solve_aux_limit
from .thermo import ThermoPipeline

TWO_PI_I = 2j * np.pi

SCHEMA = 1


def _jsonify(obj):
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, (np.complexfloating,)):
        return _jsonify(complex(obj))
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonify(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(x) for x in obj]
    return obj


def _flatten_row(row: dict) -> dict:
    """Complex entries become value_re/value_im column pairs for CSV."""
    flat = {}
    for key, value in row.items():
        if isinstance(value, complex) or isinstance(value, np.complexfloating):
            flat[f"{key}_re"] = f"{value.real:.17g}"
            flat[f"{key}_im"] = f"{value.imag:.17g}"
        elif isinstance(value, float) or isinstance(value, np.floating):
            flat[key] = f"{float(value):.17g}"
        else:
            flat[key] = value
    return flat


def emit(payload: dict, rows_key: str, cfg: RunConfig, args):
    fmt = args.format or cfg["output.format"]
    path = args.out or cfg["output.path"]
    payload = {"schema": SCHEMA, "config_hash": cfg.config_hash(), "grid": cfg.grid_summary, **payload}
    if fmt == "json":
        text = json.dumps(_jsonify(payload), indent=2, sort_keys=True) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# schema={SCHEMA} config_hash={cfg.config_hash()}\n")
        buf.write(f"# grid={json.dumps(cfg.grid_summary)}\n")
        rows = [_flatten_row(r) for r in payload[rows_key]]
        if rows:
            writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -------------------------------------------------------------------------
# thermo
# -------------------------------------------------------------------------


def _thermo_task(payload):
    entries, T, h = payload
    cfg = RunConfig(entries=entries)
    pl = ThermoPipeline(
        gamma=float(cfg["model.gamma"]),
        J=float(cfg["model.J"]),
        grid_cfg=cfg.grid_config(),
        iter_cfg=cfg.iter_config(),
    )
    r = pl.point(T=T, h=h, delta_h=float(cfg["solver.delta_h"]))
    return {
        "T": T,
        "h": h,
        "f": r.f,
        "m_sigma": r.m_sigma,
        "m_G": r.m_G,
        "m_fd": r.m_fd,
        "aux_residual": r.aux_residual,
        "aux_iterations": r.aux_iterations,
        "sigma_residual": r.sigma_residual,
        "g_residual": r.g_residual,
        "cond_estimate": r.cond_estimate,
        "max_imag": r.max_imag,
    }


def cmd_thermo(cfg: RunConfig, args) -> int:
    points = [(T, h) for T in cfg.sweep_T for h in cfg.sweep_h]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_thermo_task, [(cfg.entries, T, h) for T, h in points]))
    else:
        pl = ThermoPipeline(
            gamma=float(cfg["model.gamma"]),
            J=float(cfg["model.J"]),
            grid_cfg=cfg.grid_config(),
            iter_cfg=cfg.iter_config(),
        )
        rows = []
        for T, h in points:
            r = pl.point(T=T, h=h, delta_h=float(cfg["solver.delta_h"]))
            rows.append(
                {
                    "T": T,
                    "h": h,
                    "f": r.f,
                    "m_sigma": r.m_sigma,
                    "m_G": r.m_G,
                    "m_fd": r.m_fd,
                    "aux_residual": r.aux_residual,
                    "aux_iterations": r.aux_iterations,
                    "sigma_residual": r.sigma_residual,
                    "g_residual": r.g_residual,
                    "cond_estimate": r.cond_estimate,
                    "max_imag": r.max_imag,
                }
            )
    emit({"rows": rows}, "rows", cfg, args)
    return 0


# -------------------------------------------------------------------------
# verify
# -------------------------------------------------------------------------


def cmd_verify(cfg: RunConfig, args) -> int:
    records, _ = verify_mod.run_suite(cfg, include_slow=not args.fast)
    rows = [
        {
            "name": r.name,
            "anchor": r.anchor,
            "max_residual": r.max_residual,
            "tolerance": r.tolerance,
            "pass": r.passed,
            **{f"detail_{k}": v for k, v in r.details.items() if np.isscalar(v)},
        }
        for r in records
    ]
    emit({"checks": rows}, "checks", cfg, args)
    failures = [r for r in records if not r.passed]
    for r in failures:
        print(
            f"FAIL {r.name}: max residual {r.max_residual:.3e} vs tolerance {r.tolerance:.1e}",
            file=sys.stderr,
        )
    return 1 if failures else 0


# -------------------------------------------------------------------------
# psi
# -------------------------------------------------------------------------


def cmd_psi(cfg: RunConfig, args) -> int:
    ctx = verify_mod.VerifyContext(cfg)
    N = max(cfg.trotter_list)
    calc = ctx.calculator(N)
    nu1, nu2 = complex(args.nu1), complex(args.nu2)
    ev = calc.psi(nu1, nu2)
    ctx_n = ctx.negated()
    partner = ctx_n.calculator(N).psi(nu2, nu1)
    record = {
        "nu1": nu1,
        "nu2": nu2,
        "N": N,
        "value": ev.value,
        "placement_nu1": ev.placement[0],
        "placement_nu2": ev.placement[1],
        "symmetry_partner": partner.value,
        "symmetry_gap": abs(ev.value - partner.value),
    }
    if abs(nu1.real) > 4.0:
        record["asymptote_nu1"] = calc.psi_limit_nu1(nu2)
    if abs(nu2.real) > 4.0:
        record["asymptote_nu2"] = calc.psi_limit_nu2(nu1)
    emit({"records": [record]}, "records", cfg, args)
    return 0


# -------------------------------------------------------------------------
# bethe
# -------------------------------------------------------------------------


def cmd_bethe(cfg: RunConfig, args) -> int:
    ctx = verify_mod.VerifyContext(cfg)
    p = ctx.p
    rows = []
    for N in cfg.trotter_list:
        st = ctx.state(N, p.kappa)
        lam0 = lambda_eigenvalue(st, 0.0)
        row = {
            "N": N,
            "roots": st.roots,
            "max_bethe_residual": float(np.max(st.bethe_residuals())),
            "lambda0": lam0,
            "f_N": complex(-p.T * np.log(lam0)),
        }
        grid = ctx.outer_grid()
        if abs(p.beta) / N < 0.95 * grid.contour.d:
            sol = aux_from_bethe(st, grid)
            lhs = np.sum(grid.weights * sol.log_one_plus_a) / TWO_PI_I
            row["sum_of_roots_residual"] = float(abs(lhs + np.sum(st.roots) + p.beta / 2.0))
        if N <= 6:
            ed = qtm_exact_diag(N, p.kappa, p)
            dom = ed.dominant_eigenvalue_at(0.0)
            row["ed_lambda0"] = dom
            row["ed_rel_error"] = float(abs(dom - lam0) / abs(dom))
        rows.append(row)
    emit({"rows": rows}, "rows", cfg, args)
    return 0


# -------------------------------------------------------------------------
# nlie-dump
# -------------------------------------------------------------------------


def cmd_nlie_dump(cfg: RunConfig, args) -> int:
    ctx = verify_mod.VerifyContext(cfg)
    p = ctx.p
    if args.N:
        grid = ctx.outer_grid(args.N)
        sol = solve_aux_finite(p, p.kappa, args.N, grid, ctx.iter_cfg)
    else:
        grid = ctx.outer_grid()
        sol = solve_aux_limit(p, p.kappa, grid, ctx.iter_cfg)
    rows = [
        {
            "node": complex(z),
            "weight": complex(w),
            "segment": int(tag),
            "log_a": complex(x),
            "log_one_plus_a": complex(u),
        }
        for z, w, tag, x, u in zip(
            grid.nodes, grid.weights, grid.segment_tags, sol.log_a_values, sol.log_one_plus_a
        )
    ]
    emit(
        {
            "rows": rows,
            "iterations": sol.iterations,
            "residual": sol.residual,
            "winding": sol.winding,
        },
        "rows",
        cfg,
        args,
    )
    return 0


# -------------------------------------------------------------------------


_COMMON_DEFAULTS = {"config": None, "overrides": [], "jobs": 1, "format": None, "out": None}


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", metavar="PATH", help="flat key=value config file")
    common.add_argument(
        "--set",
        dest="overrides",
        metavar="KEY=VALUE",
        action="append",
        help="override a config entry (repeatable)",
    )
    common.add_argument("--jobs", type=int, help="worker pool size for sweeps")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--out", metavar="PATH")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    ap = argparse.ArgumentParser(
        prog="qtmlab",
        description="Contour integral-equation solvers and identity checks for the "
        "twisted staggered six-vertex transfer matrix",
        parents=[common],
    )
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser(
        "thermo", parents=[common], help="free energy and magnetization over the configured sweep"
    )
    v = sub.add_parser("verify", parents=[common], help="run the identity suite")
    v.add_argument("--fast", action="store_true", help="skip the slowest cross-checks")
    psi = sub.add_parser(
        "psi", parents=[common], help="two-parameter weighted integral at (nu1, nu2)"
    )
    psi.add_argument("--nu1", required=True)
    psi.add_argument("--nu2", required=True)
    sub.add_parser("bethe", parents=[common], help="per-N roots, eigenvalue, and oracle comparison")
    d = sub.add_parser("nlie-dump", parents=[common], help="raw ln a on the grid")
    d.add_argument("--N", type=int, default=0, help="finite Trotter number (0 = Trotter limit)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for key, default in _COMMON_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, default)
    try:
        cfg = RunConfig.load(args.config, args.overrides)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    handlers = {
        "thermo": cmd_thermo,
        "verify": cmd_verify,
        "psi": cmd_psi,
        "bethe": cmd_bethe,
        "nlie-dump": cmd_nlie_dump,
    }
    try:
        return handlers[args.command](cfg, args)
    except QtmlabError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
