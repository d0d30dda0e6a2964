"""Command line front end.

Subcommands operate on problem files, small JSON documents naming a prime,
an integrand in the constructible DSL, and a list of cells (or "auto" to
derive cells from a univariate polynomial absolute value). All output is
JSON with rationals rendered as canonical "num/den" strings, never floats,
and with a fixed key order so repeated runs are byte identical.

Exit codes: 0 success, 1 malformed input (schema or syntax), 2 precision
or enumeration exhaustion, 3 a verification check failed its bound.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from . import decompose, integrate, oracle, polys, sums
from .cells import Cell, cell_from_json, cell_to_json, zp_cell
from .expr import (
    ConstructibleExpr,
    Const,
    ParseError,
    as_poly_in,
    parse_constructible,
    print_constructible,
)
from .padic import Prime

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_PRECISION = 2
EXIT_VERIFY = 3


class InputError(Exception):
    """Problem file or argument rejected before any computation."""


# ---------------------------------------------------------------------------
# problem files

PROBLEM_VERSION = 1


class Problem:
    def __init__(self, prime: Prime, params: int, nvars: int,
                 integrand: ConstructibleExpr | None, cells,
                 mode: str, base_points: list[tuple[Fraction, ...]]):
        self.prime = prime
        self.params = params
        self.nvars = nvars
        self.integrand = integrand
        self.cells = cells  # list[Cell] or the string "auto"
        self.mode = mode
        self.base_points = base_points

    @property
    def arity(self) -> int:
        return self.params + self.nvars


def _parse_rational(raw) -> Fraction:
    if isinstance(raw, bool) or isinstance(raw, float):
        raise InputError(f"rationals must be integers or strings, got {raw!r}")
    try:
        return Fraction(raw)
    except (ValueError, ZeroDivisionError, TypeError):
        raise InputError(f"not a rational: {raw!r}") from None


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from None
    except json.JSONDecodeError as e:
        raise InputError(
            f"{path} is not valid JSON: {e.msg} (line {e.lineno}, column {e.colno})"
        ) from None
    if not isinstance(data, dict):
        raise InputError(f"{path} must hold a JSON object")
    return data


def load_problem(path: str, prime_flag: int | None) -> Problem:
    data = _load_json(path)
    if "version" not in data:
        raise InputError("problem file lacks the required \"version\" field")
    if data["version"] != PROBLEM_VERSION:
        raise InputError(f"unsupported problem version {data['version']!r}")

    p_raw = prime_flag if prime_flag is not None else data.get("p")
    if not isinstance(p_raw, int) or isinstance(p_raw, bool):
        raise InputError("a prime is required (field \"p\" or flag --p)")
    try:
        prime = Prime(p_raw)
    except ValueError as e:
        raise InputError(str(e)) from None

    variables = data.get("variables", {"params": 0, "integrate": 1})
    if (not isinstance(variables, dict)
            or set(variables) != {"params", "integrate"}):
        raise InputError("\"variables\" must hold \"params\" and \"integrate\"")
    params, nvars = variables["params"], variables["integrate"]
    if not (isinstance(params, int) and isinstance(nvars, int)
            and params >= 0 and nvars >= 1):
        raise InputError("\"params\" must be >= 0 and \"integrate\" >= 1")

    integrand = None
    if "integrand" in data:
        if not isinstance(data["integrand"], str):
            raise InputError("\"integrand\" must be a DSL string")
        integrand = parse_constructible(data["integrand"])

    cells_raw = data.get("cells", "auto")
    if cells_raw == "auto":
        cells = "auto"
        if params != 0 or nvars != 1:
            raise InputError("\"auto\" cells need exactly one variable")
    elif isinstance(cells_raw, list) and cells_raw:
        try:
            cells = [cell_from_json(c, prime) for c in cells_raw]
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"bad cell: {e}") from None
        arities = {c.arity for c in cells}
        if arities != {params + nvars}:
            raise InputError(
                f"cells have arity {sorted(arities)}, variables say {params + nvars}"
            )
    else:
        raise InputError("\"cells\" must be a non-empty list or \"auto\"")

    mode = data.get("mode", "concrete")
    if mode not in ("concrete", "symbolic"):
        raise InputError(f"unknown mode {mode!r}")

    points_raw = data.get("base_points")
    if points_raw is None:
        # symbolic runs need no points; concrete runs demand them later
        base_points = [()] if params == 0 else None
    elif not isinstance(points_raw, list) or not points_raw:
        raise InputError("\"base_points\" must be a non-empty list of points")
    else:
        base_points = []
        for pt in points_raw:
            if not isinstance(pt, list) or len(pt) != params:
                raise InputError(f"base points need {params} coordinates")
            base_points.append(tuple(_parse_rational(x) for x in pt))
    return Problem(prime, params, nvars, integrand, cells, mode, base_points)


# ---------------------------------------------------------------------------
# "auto" cells: integrands of the shape c * abs(f(x0))^s

def _as_poly_abs(f: ConstructibleExpr):
    """Split into (scale, coefficient tuple of f, exponent s)."""
    wrong = InputError(
        "\"auto\" cells need an integrand of the shape c*abs(f(x0))^s "
        "with s a positive integer; list cells explicitly otherwise"
    )
    if len(f.terms) != 1:
        raise wrong
    term = f.terms[0]
    if term.val_factors or len(term.norm_factors) > 1:
        raise wrong
    if not term.norm_factors:
        return term.coeff, (Fraction(1),), 1
    nf = term.norm_factors[0]
    if nf.power.denominator != 1 or nf.power < 1:
        raise wrong
    monos = as_poly_in(nf.h, 0)
    if monos is None or not all(isinstance(c, Const) for c in monos):
        raise wrong
    coeffs = polys.normalize(tuple(c.value for c in monos))
    if polys.is_zero(coeffs):
        raise InputError("f identically zero")
    return term.coeff, coeffs, int(nf.power)


def _auto_integrands(problem: Problem, precision: int):
    """Decompose the polynomial and return (scale, cell integrands)."""
    if problem.integrand is None:
        raise InputError("\"auto\" cells need an \"integrand\"")
    scale, coeffs, s = _as_poly_abs(problem.integrand)
    prepared = decompose.decompose_univariate(coeffs, problem.prime,
                                              precision_N=precision)
    powered = integrate.prepared_power(prepared, s)
    return scale, integrate.group_prepared(powered)


# ---------------------------------------------------------------------------
# output

def _emit(payload: dict, pretty: bool, out: str | None = None) -> None:
    if pretty:
        text = json.dumps(payload, indent=2) + "\n"
    else:
        text = json.dumps(payload, separators=(",", ":")) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _fail(message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": message}, separators=(",", ":")) + "\n")
    return code


def _rat(x: Fraction) -> str:
    return str(Fraction(x))


# ---------------------------------------------------------------------------
# verification shared by integrate/measure/verify

def _oracle_total(g: ConstructibleExpr, cells: list[Cell], prime: Prime,
                  N: int, budget: int):
    value = Fraction(0)
    bound = Fraction(0)
    for cell in cells:
        res = oracle.oracle_integrate(g, cell, prime, N, budget)
        if res.sampled:
            raise InputError(
                "oracle exceeded the class budget; raise --budget or lower --verify-N"
            )
        value += res.value
        bound += res.boundary_mass
    return value, bound


def _verify_report(symbolic: Fraction, oracle_value: Fraction,
                   bound: Fraction) -> dict:
    return {
        "symbolic": _rat(symbolic),
        "oracle": _rat(oracle_value),
        "bound": _rat(bound),
        "pass": abs(symbolic - oracle_value) <= bound,
    }


def _require_verifiable(problem: Problem) -> None:
    if problem.params != 0:
        raise InputError("verification needs a problem without parameters")
    if problem.mode != "concrete":
        raise InputError("verification needs concrete mode")


# ---------------------------------------------------------------------------
# subcommands

def cmd_decompose(args) -> int:
    problem = load_problem(args.path, args.p)
    if problem.cells != "auto":
        raise InputError("decompose works on \"auto\" problems (one variable)")
    if problem.integrand is None:
        raise InputError("decompose needs an \"integrand\"")
    _, coeffs, _ = _as_poly_abs(problem.integrand)
    terms = decompose.decompose_univariate(coeffs, problem.prime,
                                           precision_N=args.precision)
    _emit(decompose.prepared_to_json(terms), args.pretty, args.out)
    return EXIT_OK


def _integrate_problem(problem: Problem, precision: int):
    """Returns (values per base point, expression or None, integrable)."""
    if problem.cells == "auto":
        scale, cis = _auto_integrands(problem, precision)
        if problem.mode == "symbolic":
            res = integrate.eliminate_last_variable(cis)
            return None, res.value.scale(scale), res.integrable
        res = integrate.eliminate_last_variable(cis, base_point=[])
        return [res.value.constant_value() * scale], None, res.integrable

    if problem.integrand is None:
        raise InputError("integrate needs an \"integrand\"")
    if problem.mode == "symbolic":
        if problem.nvars != 1:
            raise InputError("symbolic mode eliminates exactly one variable")
        cis = [integrate.prepare_integrand(problem.integrand, c)
               for c in problem.cells]
        res = integrate.eliminate_last_variable(cis)
        return None, res.value, res.integrable

    if problem.base_points is None:
        raise InputError("concrete evaluation needs \"base_points\" or --point")
    values = []
    integrable = True
    for pt in problem.base_points:
        res = integrate.integrate_full(problem.integrand, problem.cells,
                                       eliminate=problem.nvars, base_point=pt)
        values.append(res.value.constant_value())
        integrable = integrable and res.integrable
    return values, None, integrable


def cmd_integrate(args) -> int:
    problem = load_problem(args.path, args.p)
    if args.mode is not None:
        problem.mode = args.mode
    if args.point is not None:
        coords = [s for s in args.point.split(",") if s]
        if len(coords) != problem.params:
            raise InputError(f"--point needs {problem.params} coordinates")
        problem.base_points = [tuple(_parse_rational(c) for c in coords)]

    values, expression, integrable = _integrate_problem(problem, args.precision)
    if expression is not None:
        payload = {
            "mode": "symbolic",
            "expression": print_constructible(expression),
            "nonintegrable": not integrable,
        }
    else:
        payload = {
            "mode": "concrete",
            "values": [_rat(v) for v in values],
            "nonintegrable": not integrable,
        }

    code = EXIT_OK
    if args.verify_N is not None:
        _require_verifiable(problem)
        domain = ([zp_cell(problem.prime)] if problem.cells == "auto"
                  else problem.cells)
        got, bound = _oracle_total(problem.integrand, domain, problem.prime,
                                   args.verify_N, args.budget)
        payload["verify"] = _verify_report(values[0], got, bound)
        if not payload["verify"]["pass"]:
            code = EXIT_VERIFY
    _emit(payload, args.pretty)
    return code


def cmd_measure(args) -> int:
    problem = load_problem(args.path, args.p)
    if problem.cells == "auto":
        raise InputError("measure needs explicit cells")
    if problem.base_points is None:
        raise InputError("measure needs \"base_points\" for parametrized cells")
    one = ConstructibleExpr.const(Fraction(1))
    measures = []
    for pt in problem.base_points:
        res = integrate.integrate_full(one, problem.cells,
                                       eliminate=problem.nvars, base_point=pt)
        measures.append(res.value.constant_value())
    payload = {"measures": [_rat(v) for v in measures]}

    code = EXIT_OK
    if args.verify_N is not None:
        _require_verifiable(problem)
        got = Fraction(0)
        bound = Fraction(0)
        for cell in problem.cells:
            res = oracle.oracle_measure(cell, problem.prime, args.verify_N,
                                        args.budget)
            if res.sampled:
                raise InputError(
                    "oracle exceeded the class budget; raise --budget "
                    "or lower --verify-N"
                )
            got += res.value
            bound += res.boundary_mass
        payload["verify"] = _verify_report(measures[0], got, bound)
        if not payload["verify"]["pass"]:
            code = EXIT_VERIFY
    _emit(payload, args.pretty)
    return code


def cmd_verify(args) -> int:
    problem = load_problem(args.path, args.p)
    problem.mode = "concrete"
    _require_verifiable(problem)
    values, _, _ = _integrate_problem(problem, args.precision)
    domain = ([zp_cell(problem.prime)] if problem.cells == "auto"
              else problem.cells)
    got, bound = _oracle_total(problem.integrand, domain, problem.prime,
                               args.verify_N, args.budget)
    report = _verify_report(values[0], got, bound)
    _emit(report, args.pretty)
    return EXIT_OK if report["pass"] else EXIT_VERIFY


def _parse_poly_arg(text: str):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError:
        raise InputError(
            "the polynomial is a JSON array of rationals, lowest degree first"
        ) from None
    if not isinstance(raw, list) or not raw:
        raise InputError(
            "the polynomial is a JSON array of rationals, lowest degree first"
        )
    coeffs = polys.normalize(tuple(_parse_rational(c) for c in raw))
    if polys.is_zero(coeffs):
        raise InputError("f identically zero")
    return coeffs


def cmd_zeta(args) -> int:
    if args.p is None:
        raise InputError("zeta needs --p")
    try:
        prime = Prime(args.p)
    except ValueError as e:
        raise InputError(str(e)) from None
    coeffs = _parse_poly_arg(args.f)
    z = integrate.igusa_zeta(coeffs, prime, precision_N=args.precision)
    payload = {
        "numerator": [_rat(c) for c in z.numerator],
        "denominator_factors": [
            {"c": c, "d": d} for c, d in z.denominator_factors
        ],
    }
    code = EXIT_OK
    if args.check_poincare is not None:
        if args.check_poincare < 1:
            raise InputError("--check-poincare needs a depth >= 1")
        report = integrate.poincare_check(coeffs, prime, args.check_poincare)
        payload["poincare"] = {
            "passed": report.passed,
            "counts": list(report.counts),
            "expected": [_rat(m) for m in report.expected],
        }
        if not report.passed:
            code = EXIT_VERIFY
    _emit(payload, args.pretty)
    return code


def cmd_parse(args) -> int:
    problem = load_problem(args.path, args.p)
    payload = {
        "ok": True,
        "p": problem.prime.p,
        "params": problem.params,
        "integrate": problem.nvars,
        "mode": problem.mode,
        "integrand": (None if problem.integrand is None
                      else print_constructible(problem.integrand)),
        "cells": ("auto" if problem.cells == "auto"
                  else [cell_to_json(c) for c in problem.cells]),
    }
    _emit(payload, args.pretty)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring

def _default_budget() -> int:
    raw = os.environ.get("PADIC_CELLS_BUDGET")
    if raw is None:
        return oracle.DEFAULT_BUDGET
    try:
        budget = int(raw)
    except ValueError:
        raise InputError(f"PADIC_CELLS_BUDGET is not an integer: {raw!r}") from None
    if budget < 1:
        raise InputError("PADIC_CELLS_BUDGET must be positive")
    return budget


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p", type=int, default=None,
                        help="prime, overriding the problem file")
    common.add_argument("--precision", type=int, default=8, metavar="N",
                        help="working depth for decomposition (default 8)")
    common.add_argument("--budget", type=int, default=None,
                        help="class budget for oracle enumeration")
    style = common.add_mutually_exclusive_group()
    style.add_argument("--json", dest="pretty", action="store_false",
                       help="compact JSON output (default)")
    style.add_argument("--pretty", dest="pretty", action="store_true",
                       help="indented JSON output")
    common.set_defaults(pretty=False)

    parser = argparse.ArgumentParser(
        prog="padicells",
        description="exact integration over p-adic cells",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("decompose", parents=[common],
                        help="partition Z_p into cells preparing |f|")
    sp.add_argument("path", help="problem file")
    sp.add_argument("--out", default=None, help="write JSON here instead of stdout")
    sp.set_defaults(handler=cmd_decompose)

    sp = sub.add_parser("integrate", parents=[common],
                        help="integrate a constructible function over cells")
    sp.add_argument("path", help="problem file")
    sp.add_argument("--mode", choices=("concrete", "symbolic"), default=None)
    sp.add_argument("--point", default=None,
                    help="comma separated parameter values, e.g. 1/3,2")
    sp.add_argument("--verify-N", dest="verify_N", type=int, default=None,
                    metavar="N", help="also compare against the oracle at depth N")
    sp.set_defaults(handler=cmd_integrate)

    sp = sub.add_parser("measure", parents=[common],
                        help="total measure of the listed cells")
    sp.add_argument("path", help="problem file")
    sp.add_argument("--verify-N", dest="verify_N", type=int, default=None,
                    metavar="N", help="also compare against the oracle at depth N")
    sp.set_defaults(handler=cmd_measure)

    sp = sub.add_parser("verify", parents=[common],
                        help="compare the exact integral against the oracle")
    sp.add_argument("path", help="problem file")
    sp.add_argument("--verify-N", dest="verify_N", type=int, default=6,
                    metavar="N", help="oracle depth (default 6)")
    sp.set_defaults(handler=cmd_verify)

    sp = sub.add_parser("zeta", parents=[common],
                        help="rational form of the local zeta function of f")
    sp.add_argument("f", help="JSON array of coefficients, lowest degree first")
    sp.add_argument("--check-poincare", dest="check_poincare", type=int,
                    default=None, metavar="I",
                    help="check root counts against the series up to depth I")
    sp.set_defaults(handler=cmd_zeta)

    sp = sub.add_parser("parse", parents=[common],
                        help="syntax check a problem file and echo it back")
    sp.add_argument("path", help="problem file")
    sp.set_defaults(handler=cmd_parse)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.precision < 1:
            raise InputError("--precision must be >= 1")
        if args.budget is None:
            args.budget = _default_budget()
        elif args.budget < 1:
            raise InputError("--budget must be positive")
        return args.handler(args)
    except InputError as e:
        return _fail(str(e), EXIT_INPUT)
    except ParseError as e:
        sys.stderr.write(json.dumps(
            {"error": e.message, "span": {"start": e.span.start, "end": e.span.end}},
            separators=(",", ":"),
        ) + "\n")
        return EXIT_INPUT
    except decompose.PrecisionExhausted as e:
        return _fail(str(e), EXIT_PRECISION)
    except oracle.StabilizationError as e:
        return _fail(str(e), EXIT_PRECISION)
    except sums.DivergentSumError as e:
        return _fail(str(e), EXIT_INPUT)
    except (ValueError, TypeError, KeyError, ZeroDivisionError, OverflowError) as e:
        return _fail(str(e), EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
