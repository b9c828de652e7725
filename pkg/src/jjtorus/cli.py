"""Command-line interface: ``jjtorus <command> ...``.

Exit codes: 0 success, 1 numerical failure (including empty results), 2 usage error.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import export
from .bessel import bessel_zeros, next_zero_of_solution
from .cache import ResultCache
from .config import CACHE_ENV, load_config
from .dynamics import ModelParams, rotation_number
from .errors import (ConvergenceError, DomainError, IntegrationError, NotFoundError,
                     OnDivisorError, UnclassifiableSingularity)

NUMERICAL_ERRORS = (ConvergenceError, IntegrationError, NotFoundError,
                    UnclassifiableSingularity, OnDivisorError, ArithmeticError)


class Failure(Exception):
    """Numerical failure already carrying a serialisable diagnostic."""

    def __init__(self, payload):
        super().__init__(payload.get("error", "failure"))
        self.payload = payload


def _alpha(text):
    t = text.strip().lower()
    if t in ("0", "0.0"):
        return 0.0
    if t in ("pi", "3.141592653589793"):
        return math.pi
    raise argparse.ArgumentTypeError("alpha must be 0 or pi")


def _emit(args, payload, csv=None, svg=None):
    fmt = args.format
    if fmt == "csv" and csv is not None:
        text = csv
    elif fmt == "svg" and svg is not None:
        text = svg
    else:
        text = export.dumps_json(payload)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# -- commands --------------------------------------------------------------------------

def cmd_rotation(args, cfg, cache):
    def compute():
        r = rotation_number(ModelParams(args.B, args.A, args.omega), cfg.tol)
        return export.to_jsonable(r)
    res = cache.cached("rotation", [args.B, args.A, args.omega], [cfg.tol], compute)
    _emit(args, res, export.dumps_csv(list(res), [list(res.values())]))


def cmd_portrait(args, cfg, cache):
    from .scan import ScanGrid
    if args.resume and os.path.exists(args.resume):
        grid = ScanGrid.load(args.resume)
    else:
        grid = ScanGrid(tuple(args.B_range), tuple(args.A_range), args.omega, args.nx, args.ny, cfg.tol)
    grid.run(cfg.threads, checkpoint=args.resume)
    overlay = []
    if args.overlay:
        from .phaselock import find_constrictions
        A_top = max(abs(x) for x in args.A_range)
        for ell in args.overlay:
            for p in find_constrictions(ell, args.omega, A_top, tol=cfg.tol):
                for sign in (1, -1):
                    if min(args.A_range) <= sign * p.A <= max(args.A_range):
                        overlay.append((p.B, sign * p.A))
    csv = export.dumps_csv(["B", "A", "rho", "locked"], grid.rows_csv())
    svg = export.portrait_svg(grid.B_values, grid.A_values, grid.rho, grid.locked, overlay,
                              title=f"rotation number, omega = {args.omega:g}")
    if args.out and args.format not in ("csv", "svg"):
        stem = os.path.splitext(args.out)[0]
        with open(stem + ".csv", "w") as fh:
            fh.write(csv)
        with open(stem + ".svg", "w") as fh:
            fh.write(svg)
        print(json.dumps({"csv": stem + ".csv", "svg": stem + ".svg", "cells": args.nx * args.ny}))
        return
    _emit(args, {"B": grid.B_values, "A": grid.A_values, "rho": grid.rho, "locked": grid.locked},
          csv, svg)


def cmd_boundary(args, cfg, cache):
    from .phaselock import boundary_B, boundary_curve
    if args.curve:
        lo, hi, n = args.curve
        c = boundary_curve(args.r, args.alpha, args.omega, lo, hi, int(n), cfg.tol)
        _emit(args, {"r": args.r, "alpha": args.alpha, "omega": args.omega, "A": c.x, "B": c.y,
                     "residual": c.residual, "tol": cfg.tol}, export.curve_csv(c))
        return
    pt = boundary_B(args.r, args.alpha, args.A, args.omega, args.guess, cfg.tol)
    res = export.to_jsonable(pt)
    _emit(args, res, export.dumps_csv(list(res), [list(res.values())]))


CONSTRICTION_COLUMNS = ["ell", "B", "A", "omega", "residual", "deriv_residual", "vertical_offset"]


def _constriction_rows(points):
    return [[p.ell, p.B, p.A, p.omega, p.residual, p.deriv_residual, p.vertical_offset]
            for p in points]


def cmd_constriction(args, cfg, cache):
    from . import phaselock as pl
    tols = [cfg.tol]
    if args.action == "find":
        try:
            p = pl.find_constriction(args.ell, args.omega, (args.s_lo, args.s_hi), cfg.tol)
        except NotFoundError as e:
            raise Failure({"result": [], "error": str(e)})
        table = _constriction_rows([p])
    elif args.action == "count":
        n = cache.cached("constriction-count", [args.ell, args.omega, args.A_upper], tols,
                         lambda: pl.count_constrictions_below(args.ell, args.omega, args.A_upper,
                                                              tol=cfg.tol))
        _emit(args, {"ell": args.ell, "omega": args.omega, "A_upper": args.A_upper, "count": n})
        return
    elif args.action == "list":
        table = cache.cached("constriction-list", [args.ell, args.omega, args.A_upper], tols,
                             lambda: export.to_jsonable(_constriction_rows(
                                 pl.find_constrictions(args.ell, args.omega, args.A_upper, tol=cfg.tol))))
        if not table:
            raise Failure({"result": [], "error": "no constriction below A_upper"})
    else:
        def compute():
            c = pl.trace_constriction_curve(args.ell, args.k, args.a_min, args.a_max, tol=cfg.tol)
            s0, _ = pl.landing_intercept(c)
            return export.to_jsonable({
                "ell": args.ell, "k": args.k, "seed_zero": c.meta["seed_zero"], "tol": cfg.tol,
                "intercept": s0, "a": c.x, "s": c.y, "residual": c.residual,
                "deriv_residual": c.meta["deriv_residual"]})
        meta = cache.cached("constriction-trace", [args.ell, args.k, args.a_min, args.a_max], tols, compute)
        rows = zip(meta["a"], meta["s"], meta["residual"], meta["deriv_residual"])
        _emit(args, meta, export.dumps_csv(["a", "s", "residual", "deriv_residual"], rows))
        return
    _emit(args, {"tol": cfg.tol, "constrictions": [dict(zip(CONSTRICTION_COLUMNS, r)) for r in table]},
          export.dumps_csv(CONSTRICTION_COLUMNS, table))


def cmd_bessel(args, cfg, cache):
    if args.action == "zeros":
        z = bessel_zeros(args.ell, args.k)
        _emit(args, {"ell": args.ell, "zeros": z.zeros},
              export.dumps_csv(["k", "zero"], [(i + 1, v) for i, v in enumerate(z.zeros)]))
    else:
        s1 = next_zero_of_solution(args.ell, args.s0)
        _emit(args, {"ell": args.ell, "s0": args.s0, "s1": s1})


def cmd_poincare(args, cfg, cache):
    from . import isomonodromy as iso
    if args.action == "map":
        r = iso.poincare_first_return(args.ell, args.a0, args.s0)
        payload = export.to_jsonable(r)
        if not r.defined:
            payload["error"] = "first return not defined: " + r.reason
            raise Failure(payload)
        _emit(args, payload)
    elif args.action == "divisor":
        b = iso.blowup_return(args.ell, args.s0)
        _emit(args, export.to_jsonable(b) | {"discrepancy": b.discrepancy})
    else:
        rep = iso.constriction_image_check(args.ell, args.k)
        payload = export.to_jsonable(rep) | {"max_distance": rep.max_distance,
                                              "max_residual": rep.max_residual, "ok": rep.ok()}
        if not rep.ok():
            raise Failure(payload | {"error": "image outside the target curve"})
        _emit(args, payload)


def cmd_leaf(args, cfg, cache):
    from . import isomonodromy as iso
    st = iso.FoliationState.from_chi_a(args.ell, args.chi, args.a, args.s0)
    leaf = iso.integrate_leaf(st, args.s1)
    grid = np.linspace(args.s0, leaf.state.s, args.samples)
    rows = leaf.records(grid)
    payload = {"ell": args.ell, "final": {"s": leaf.state.s, "chi": leaf.state.chi, "a": leaf.state.a,
                                          "chart": leaf.state.chart},
               "events": leaf.events, "complete": leaf.complete}
    _emit(args, payload, export.dumps_csv(["s", "chi", "a", "chart", "event"], rows))


def cmd_monodromy(args, cfg, cache):
    from .monodromy import LinearSystemParams, monodromy
    P = LinearSystemParams(args.ell, args.chi, args.a, args.s)
    m = monodromy(P, base_point=complex(args.base_point), radius=args.radius)
    _emit(args, {"entries": m.entries, "det": m.det, "trace": m.trace,
                 "distance_to_identity": m.distance_to_identity(),
                 "liouville_error": m.liouville_error(args.ell)})


def cmd_verify(args, cfg, cache):
    from .verify import run_suite
    res = run_suite(args.suite, cfg.threads, echo=lambda line: print(line, file=sys.stderr))
    payload = {"suite": args.suite, "passed": all(r.passed for r in res),
               "criteria": [{"number": r.number, "name": r.name, "passed": r.passed,
                             "elapsed": r.elapsed, "limit": r.limit, "detail": r.detail} for r in res]}
    _emit(args, payload)
    if not payload["passed"]:
        raise Failure({"error": "verification failed"} | {"quiet": True})


# -- parser ------------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, help="integrator tolerance (default 1e-11)")
    common.add_argument("--threads", type=int, help="worker processes for scans")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json", "svg"), help="output format")
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--cache-dir", help=f"result cache directory (default ${CACHE_ENV})")

    p = argparse.ArgumentParser(prog="jjtorus", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("rotation", parents=[common], help="rotation number at (B, A; omega)")
    s.add_argument("B", type=float)
    s.add_argument("A", type=float)
    s.add_argument("omega", type=float)
    s.set_defaults(func=cmd_rotation)

    s = sub.add_parser("portrait", parents=[common], help="rotation-number portrait")
    s.add_argument("--B-range", nargs=2, type=float, default=(-2.0, 2.0))
    s.add_argument("--A-range", nargs=2, type=float, default=(-4.0, 4.0))
    s.add_argument("--omega", type=float, default=1.0)
    s.add_argument("--nx", type=int, default=64)
    s.add_argument("--ny", type=int, default=64)
    s.add_argument("--overlay", type=int, nargs="*", help="overlay constrictions of these ell")
    s.add_argument("--resume", help="checkpoint file; pending rows are computed")
    s.set_defaults(func=cmd_portrait)

    s = sub.add_parser("boundary", parents=[common], help="boundary point or curve of L_r")
    s.add_argument("r", type=int)
    s.add_argument("alpha", type=_alpha)
    s.add_argument("A", type=float)
    s.add_argument("omega", type=float)
    s.add_argument("--guess", type=float)
    s.add_argument("--curve", nargs=3, type=float, metavar=("A_FROM", "A_TO", "N"))
    s.set_defaults(func=cmd_boundary)

    s = sub.add_parser("constriction", help="constriction search and curves")
    cs = s.add_subparsers(dest="action", required=True)
    c = cs.add_parser("find", parents=[common])
    c.add_argument("ell", type=int)
    c.add_argument("omega", type=float)
    c.add_argument("s_lo", type=float)
    c.add_argument("s_hi", type=float)
    for name in ("count", "list"):
        c = cs.add_parser(name, parents=[common])
        c.add_argument("ell", type=int)
        c.add_argument("omega", type=float)
        c.add_argument("A_upper", type=float)
    c = cs.add_parser("trace", parents=[common])
    c.add_argument("ell", type=int)
    c.add_argument("k", type=int)
    c.add_argument("--a-min", type=float, default=0.01)
    c.add_argument("--a-max", type=float, default=1.0)
    s.set_defaults(func=cmd_constriction)

    s = sub.add_parser("bessel", help="Bessel zeros and the next-zero map")
    bs = s.add_subparsers(dest="action", required=True)
    c = bs.add_parser("zeros", parents=[common])
    c.add_argument("ell", type=float)
    c.add_argument("k", type=int)
    c = bs.add_parser("nextzero", parents=[common])
    c.add_argument("ell", type=float)
    c.add_argument("s0", type=float)
    s.set_defaults(func=cmd_bessel)

    s = sub.add_parser("poincare", help="first-return map of the foliation")
    ps = s.add_subparsers(dest="action", required=True)
    c = ps.add_parser("map", parents=[common])
    c.add_argument("ell", type=float)
    c.add_argument("a0", type=float)
    c.add_argument("s0", type=float)
    c = ps.add_parser("divisor", parents=[common])
    c.add_argument("ell", type=float)
    c.add_argument("s0", type=float)
    c = ps.add_parser("check-curves", parents=[common])
    c.add_argument("ell", type=int)
    c.add_argument("k", type=int)
    s.set_defaults(func=cmd_poincare)

    s = sub.add_parser("leaf", help="leaves of the foliation")
    ls = s.add_subparsers(dest="action", required=True)
    c = ls.add_parser("integrate", parents=[common])
    c.add_argument("ell", type=float)
    c.add_argument("chi", type=float)
    c.add_argument("a", type=float)
    c.add_argument("s0", type=float)
    c.add_argument("s1", type=float)
    c.add_argument("--samples", type=int, default=101)
    s.set_defaults(func=cmd_leaf)

    s = sub.add_parser("monodromy", parents=[common], help="monodromy of the linear system")
    s.add_argument("ell", type=float)
    s.add_argument("chi", type=float)
    s.add_argument("a", type=float)
    s.add_argument("s", type=float)
    s.add_argument("--base-point", default="1", help="complex base point on |z| = 1, e.g. 1j")
    s.add_argument("--radius", type=float, default=1.0)
    s.set_defaults(func=cmd_monodromy)

    s = sub.add_parser("verify", parents=[common], help="run acceptance suites")
    s.add_argument("suite", choices=("dynamics", "bessel", "phaselock", "isomonodromy", "monodromy", "all"))
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(getattr(args, "config", None), tol=getattr(args, "tol", None),
                          threads=getattr(args, "threads", None), format=getattr(args, "format", None),
                          cache_dir=getattr(args, "cache_dir", None))
    except (OSError, ValueError) as e:
        parser.error(str(e))
    if getattr(args, "format", None) is None:
        args.format = cfg.format
    cache = ResultCache(cfg.cache_dir)
    try:
        args.func(args, cfg, cache)
    except Failure as f:
        if not f.payload.get("quiet"):
            sys.stdout.write(export.dumps_json(f.payload) + "\n")
            print(f"jjtorus: {f.payload.get('error', 'failure')}", file=sys.stderr)
        return 1
    except DomainError as e:
        print(f"jjtorus: error: {e}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as e:
        print(export.dumps_json({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
