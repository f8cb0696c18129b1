"""Command-line front end.

Exit codes follow the validation taxonomy: 0 valid/success, 1 I/O or format
error, 2 condition (C) violated, 3 condition (CW1) violated.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io as jio
from .envelope import (ExtensionConfig, build_extension, envelope_eval, gradient_eval)
from .jet import JetError, Tolerances, compute_slack, validate
from .modulus import build_modulus, envelope_exact, omega0_closed, omega_hat, phi_hat
from .verify import SUITES, run_suite

EXIT_OK, EXIT_IO, EXIT_C, EXIT_CW1 = 0, 1, 2, 3
STATUS_EXIT = {"valid": EXIT_OK, "violates-C": EXIT_C, "violates-CW1": EXIT_CW1}


def _default_seed() -> int:
    env = os.environ.get("JETCONVEX_SEED")
    return int(env) if env not in (None, "") else 0


def _tolerances(args) -> Tolerances:
    return Tolerances(args.eps_c, args.eps_p, args.eps_g)


def _parse_box(text: str, dim: int) -> np.ndarray:
    """``lo:hi`` per axis, comma separated; a single range applies to every axis."""
    parts = [p for p in text.split(",") if p.strip()]
    try:
        pairs = [tuple(float(v) for v in p.split(":")) for p in parts]
    except ValueError:
        raise jio.FormatError("bad --box %r" % text) from None
    if any(len(p) != 2 for p in pairs):
        raise jio.FormatError("bad --box %r, expected lo:hi[,lo:hi...]" % text)
    if len(pairs) == 1:
        pairs = pairs * dim
    if len(pairs) != dim:
        raise jio.FormatError("--box has %d ranges for dimension %d" % (len(pairs), dim))
    return np.array(pairs, dtype=float)


def _emit_json(obj, out):
    out.write(json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n")


def cmd_validate(args, out) -> int:
    ds = jio.load_jet(args.jet)
    report = validate(compute_slack(ds), _tolerances(args))
    _emit_json(report.to_dict(), out)
    return STATUS_EXIT[report.status]


def cmd_build(args, out) -> int:
    ds = jio.load_jet(args.jet)
    tol = _tolerances(args)
    slack = compute_slack(ds)
    report = validate(slack, tol)
    if not report.valid and not args.force:
        _emit_json(report.to_dict(), sys.stderr)
        print("refusing to build from a non-extendable jet (use --force)", file=sys.stderr)
        return STATUS_EXIT[report.status]
    box = _parse_box(args.box, ds.dim) if args.box else None
    seed = args.seed if args.seed is not None else _default_seed()
    mod = build_modulus(slack, args.nodes, args.tmax, tol)
    cfg = ExtensionConfig(enrichment=args.enrichment, seed=seed, stencil=args.stencil,
                          forced=bool(args.force and not report.valid))
    try:
        model = build_extension(ds, slack, mod, box, cfg)
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_IO
    jio.save_model(args.output, model, tol)
    _emit_json({"model": args.output, "degenerate": model.degenerate,
                "candidates": int(len(model.candidates)), "validation": report.status,
                "forced": cfg.forced}, out)
    return EXIT_OK


def cmd_eval(args, out) -> int:
    model, _ = jio.load_model(args.model)
    d = model.dataset.dim
    if args.queries == "-":
        X = jio.read_queries(sys.stdin, d)
    else:
        X = jio.read_queries(args.queries, d)
    header = ["x%d" % k for k in range(d)] + ["lower", "upper"]
    if args.grad:
        header += ["grad%d" % k for k in range(d)]
    header.append("status")
    rows = []
    for x in X:
        res = envelope_eval(model, x, args.mode)
        row = list(x)
        if res.ok:
            row += [res.lower, res.upper]
            if args.grad:
                row += list(gradient_eval(model, x, args.mode))
        else:
            row += [float("nan")] * (2 + (d if args.grad else 0))
        row.append(res.status)
        rows.append(row)
    jio.write_csv(out, header, rows)
    return EXIT_OK


def cmd_check(args, out) -> int:
    if args.suite != "all" and args.suite not in SUITES:
        print("unknown suite %r; choose from all, %s" % (args.suite, ", ".join(SUITES)), file=sys.stderr)
        return EXIT_IO
    model, _ = jio.load_model(args.model)
    seed = args.seed if args.seed is not None else _default_seed()
    reports = run_suite(model, args.suite, args.samples, seed)
    _emit_json([r.to_dict() for r in reports], out)
    return EXIT_OK if all(r.passed for r in reports if r.gated) else EXIT_IO


def cmd_modulus(args, out) -> int:
    if args.steps < 1:
        print("--steps must be >= 1", file=sys.stderr)
        return EXIT_IO
    if not 0 < args.tmin <= args.tmax:
        print("need 0 < --tmin <= --tmax", file=sys.stderr)
        return EXIT_IO
    doc = jio.read_json(args.source)
    tol = Tolerances()
    if isinstance(doc, dict) and doc.get("format") == jio.MODEL_FORMAT:
        model, tol = jio.model_from_doc(doc)
        ds, mod = model.dataset, model.modulus
        slack = model.slack
    else:
        ds = jio.jet_from_doc(doc)
        slack = compute_slack(ds)
        mod = build_modulus(slack, args.nodes, None, tol)
    ts = np.linspace(args.tmin, args.tmax, args.steps)
    rows = []
    for t in ts:
        rows.append([t, omega0_closed(slack, t, tol), envelope_exact(slack, t, tol)[0],
                     omega_hat(mod, t), phi_hat(mod, t)])
    jio.write_csv(out, ["t", "omega0", "envelope", "omegahat", "phihat"], rows)
    return EXIT_OK


def _add_tolerances(p):
    p.add_argument("--eps-c", type=float, default=0.0, help="allowed negative slack (relative)")
    p.add_argument("--eps-p", type=float, default=1e-9, help="slack threshold for equality (relative)")
    p.add_argument("--eps-g", type=float, default=1e-6, help="gradient gap threshold (relative)")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 and 3 keep their validation meaning."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, "%s: error: %s\n" % (self.prog, message))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jetconvex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check extendability of a jet file")
    p.add_argument("jet")
    _add_tolerances(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build", help="build and save an extension model")
    p.add_argument("jet")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--box", help="domain box, lo:hi per axis, comma separated")
    p.add_argument("--nodes", type=int, default=64)
    p.add_argument("--tmax", type=float, default=None)
    p.add_argument("--enrichment", type=int, default=16)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--stencil", type=float, default=1e-5)
    p.add_argument("--force", action="store_true", help="build even if validation fails")
    _add_tolerances(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("eval", help="evaluate a model at query points (CSV)")
    p.add_argument("model")
    p.add_argument("queries", help="CSV file of query points, '-' for stdin")
    p.add_argument("--mode", choices=("shared", "refined"), default=None)
    p.add_argument("--grad", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", help="run property checks on a model")
    p.add_argument("model")
    p.add_argument("--suite", default="all")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("modulus", help="tabulate the modulus pipeline (CSV)")
    p.add_argument("source", help="model file or jet file")
    p.add_argument("--tmin", type=float, default=0.25)
    p.add_argument("--tmax", type=float, default=4.0)
    p.add_argument("--steps", type=int, default=16)
    p.add_argument("--nodes", type=int, default=64)
    p.set_defaults(func=cmd_modulus)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (OSError, jio.FormatError, JetError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_IO


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
