"""Command-line interface: ``ricciclass check | curvature | corpus | ode``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import RicciClassError

EXIT_OK, EXIT_ERROR, EXIT_MISMATCH = 0, 1, 2

_CONDITION_CHOICES = ("rr", "prs", "co", "qe1", "qe2", "classify")
_TENSORS = ("christoffel", "riemann", "ricci", "scalar", "schouten", "cotton", "weyl")


def _key_values(text: str | None, cast=str) -> dict:
    """``"a=1, b=2"`` -> {"a": cast("1"), ...}."""
    out = {}
    if not text:
        return out
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"expected name=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = cast(v.strip())
    return out


def _interval(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"expected a:b, got {text!r}")
    return float(lo), float(hi)


def _domain(text: str | None) -> dict[str, tuple[float, float]] | None:
    if not text:
        return None
    return {k: _interval(v) for k, v in _key_values(text).items()}


def _config(args, **overrides):
    from .sampling import SamplingConfig

    fields = dict(points=args.points, seed=args.seed, domain=_domain(getattr(args, "domain", None)))
    if getattr(args, "tol", None) is not None:
        fields["tol"] = args.tol
    fields.update(overrides)
    return SamplingConfig(**fields)


def _write(text: str, path: str | None) -> None:
    if path is None:
        return
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _expectation(verdicts: Sequence[str], expect: str | None) -> int:
    if expect is None:
        return EXIT_OK
    return EXIT_OK if all(v == expect for v in verdicts) else EXIT_MISMATCH


# ------------------------------------------------------------------ check

def cmd_check(args) -> int:
    from .dsl import parse_manifold, validate_spec
    from .report import ReportDocument, classify, emit_report, run_condition

    spec = parse_manifold(Path(args.file).read_text())
    validate_spec(spec)
    cfg = _config(args)
    start = time.perf_counter()
    if args.condition == "classify":
        reports = classify(spec, cfg)
    else:
        reports = [run_condition(spec, args.condition, cfg)]
    elapsed = int(round((time.perf_counter() - start) * 1000)) if args.timing else 0
    doc = ReportDocument.for_spec(spec, reports, elapsed)
    _write(emit_report(doc, "json"), args.json)
    if args.json != "-":
        sys.stdout.write(emit_report(doc, args.format))
    return _expectation([r.verdict for r in reports], args.expect)


# ------------------------------------------------------------------ curvature

def _tensor_items(spec, name: str):
    from .classical import ClassicalPack
    from .tensors import CurvaturePack

    pack = CurvaturePack(spec)
    if name in ("christoffel", "riemann", "ricci", "scalar"):
        return getattr(pack, name)
    if name in ("cotton", "weyl") and spec.dim < 3:
        raise ValueError(f"the {name} tensor needs dimension at least 3")
    return getattr(ClassicalPack(pack), name)


def cmd_curvature(args) -> int:
    from .dsl import parse_manifold
    from .tensors import evaluate_tensors

    spec = parse_manifold(Path(args.file).read_text())
    at = _key_values(args.at, float)
    missing = [c for c in spec.coords if c not in at]
    if missing:
        raise ValueError(f"--at lacks coordinate(s) {', '.join(missing)}")
    item = _tensor_items(spec, args.tensor)
    env = {c: np.array([at[c]]) for c in spec.coords}
    vals, bad = evaluate_tensors({args.tensor: item}, spec, env, 1)
    if bad[0]:
        raise ValueError("the point lies outside the domain of the metric expressions")
    arr = np.asarray(vals[args.tensor])[0]
    if arr.ndim == 0:
        components = {"": float(arr)}
    else:
        components = {",".join(str(i + 1) for i in idx): float(v)
                      for idx, v in np.ndenumerate(arr) if abs(v) > args.zero}
    if args.json:
        sys.stdout.write(json.dumps({"tensor": args.tensor, "point": at, "components": components},
                                    indent=2) + "\n")
    else:
        for k, v in components.items():
            label = f"{args.tensor}[{k}]" if k else args.tensor
            sys.stdout.write(f"{label} = {v:.12g}\n")
        if not components:
            sys.stdout.write(f"{args.tensor}: all components below {args.zero:g}\n")
    return EXIT_OK


# ------------------------------------------------------------------ corpus

def cmd_corpus(args) -> int:
    from .corpus import export_family, get_family, list_families, verify_family

    if args.action == "list":
        for fam in list_families():
            expected = ", ".join(f"{k} {v}" for k, v in fam.expected.items())
            sys.stdout.write(f"{fam.id:<12} n={fam.dim}  {fam.summary}\n{'':<12} expects: {expected}\n")
        return EXIT_OK
    params = _key_values(args.params)
    if args.action == "export":
        if not args.id or not args.path:
            raise ValueError("corpus export needs <id> <path>")
        text = export_family(args.id, params)
        _write(text, args.path)
        return EXIT_OK
    ids = [f.id for f in list_families()] if args.id in (None, "all") else [get_family(args.id).id]
    if params and len(ids) > 1:
        raise ValueError("--params applies to a single family")
    cfg = _config(args)
    start = time.perf_counter()
    failed = 0
    for fid in ids:
        res = verify_family(fid, cfg, params)
        verdicts = " ".join(f"{k}={v}" for k, v in res.verdicts().items())
        status = "ok" if res.ok else "MISMATCH"
        sys.stdout.write(f"{fid:<12} {status:<9} {verdicts}  ({res.seconds:.2f}s)\n")
        for k, (want, got) in res.mismatches.items():
            sys.stdout.write(f"{'':<12} {k}: expected {want}, got {got}\n")
        for k, v in res.extras.items():
            if not v < 1e-9:
                sys.stdout.write(f"{'':<12} printed {k} differs: residual {v:.3e}\n")
        failed += not res.ok
    sys.stdout.write(f"{len(ids) - failed}/{len(ids)} families verified in "
                     f"{time.perf_counter() - start:.1f}s\n")
    return EXIT_OK if failed == 0 else EXIT_MISMATCH


# ------------------------------------------------------------------ ode

def cmd_ode(args) -> int:
    from .ode import builtin_systems, get_system, integrate_rif_system, parse_init, verify_numeric_metric
    from .report import emit_report, ReportDocument

    if args.action == "list":
        for sid in builtin_systems():
            sys_ = get_system(sid)
            flag = "  [experimental]" if sys_.experimental else ""
            init = ", ".join(f"{k}={v:g}" for k, v in sys_.init.items())
            sys.stdout.write(f"{sid:<16} {sys_.summary}{flag}\n{'':<16} default init: {init}; "
                             f"range {sys_.span[0]:g}:{sys_.span[1]:g}; step {sys_.step:g}\n")
        return EXIT_OK
    if not args.system:
        raise ValueError("ode run needs a system id")
    system = get_system(args.system)
    span = _interval(args.range) if args.range else None
    metric = integrate_rif_system(system, parse_init(args.init or ""), args.step, span)
    lines = [f"system {system.id}: step {metric.step:g}"]
    for sol in metric.solutions:
        end = ", ".join(f"{k}={v:.10g}" for k, v in zip(sol.block.state, sol.ys[-1]))
        lines.append(f"  {sol.block.coord} in [{sol.xs[0]:g}, {sol.xs[-1]:g}], {len(sol.xs)} nodes"
                     f"{' (truncated by guard)' if sol.truncated else ''}; end state {end}")
    lines.append(f"  half-step estimate {metric.step_estimate:.3e}, interpolation error "
                 f"{metric.interpolation_error:.3e}")
    if system.first_integral is not None:
        lines.append(f"  first integral drift {metric.first_integral_drift():.3e} (normalized), "
                     f"{metric.first_integral_drift(normalized=False):.3e} (absolute)")
    if system.experimental:
        lines.append("  experimental system: verdicts are reported, not asserted")
    sys.stdout.write("\n".join(lines) + "\n")
    if not args.verify:
        return EXIT_OK
    cfg = _config(args, tol=args.tol if args.tol is not None else 1e-4,
                  sc_guard=1e-7, ricci_guard=1e-7)
    reports = [verify_numeric_metric(metric, c, cfg) for c in args.verify.split(",")]
    doc = ReportDocument(__version__, f"ode:{system.id}", reports, 0)
    _write(emit_report(doc, "json"), args.json)
    if args.json != "-":
        sys.stdout.write(emit_report(doc, args.format))
    return _expectation([r.verdict for r in reports], args.expect)


# ------------------------------------------------------------------ entry point

def _sampling_flags(p: argparse.ArgumentParser, tol_default: float | None) -> None:
    p.add_argument("--points", type=int, default=50, help="sample points (default 50)")
    p.add_argument("--seed", type=int, default=42, help="sampling seed (default 42)")
    p.add_argument("--tol", type=float, default=tol_default, help="residual tolerance")
    p.add_argument("--domain", help="per-coordinate override, e.g. \"x1=0:1,x2=0.5:2\"")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ricciclass",
                                     description="Classify metrics by curvature conditions.")
    parser.add_argument("--version", action="version", version=f"ricciclass {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="run one condition, or all of them, on a .rfm file")
    p.add_argument("file")
    p.add_argument("--condition", required=True, choices=_CONDITION_CHOICES, type=str.lower)
    _sampling_flags(p, 1e-8)
    p.add_argument("--json", metavar="PATH", help="write the JSON report here ('-' for stdout)")
    p.add_argument("--expect", choices=("holds", "fails"))
    p.add_argument("--format", choices=("human", "json"), default="human")
    p.add_argument("--timing", action="store_true", help="record wall time in timing_ms")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("curvature", help="evaluate a curvature tensor at a point")
    p.add_argument("file")
    p.add_argument("--at", required=True, help="\"x1=...,x2=...\"")
    p.add_argument("--tensor", choices=_TENSORS, default="ricci")
    p.add_argument("--zero", type=float, default=1e-14, help="hide components below this size")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser("corpus", help="list, export or verify the built-in families")
    p.add_argument("action", choices=("list", "export", "verify"))
    p.add_argument("id", nargs="?")
    p.add_argument("path", nargs="?")
    p.add_argument("--params", help="\"m=2,c1=1\"")
    _sampling_flags(p, None)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("ode", help="integrate a built-in ODE system and verify the resulting metric")
    p.add_argument("action", choices=("run", "list"))
    p.add_argument("system", nargs="?")
    p.add_argument("--init", help="\"q=1,q_1=0.3\" (defaults per system)")
    p.add_argument("--range", help="a:b")
    p.add_argument("--step", type=float)
    p.add_argument("--verify", help="comma separated conditions, e.g. qe2,co")
    _sampling_flags(p, None)
    p.add_argument("--json", metavar="PATH")
    p.add_argument("--expect", choices=("holds", "fails"))
    p.add_argument("--format", choices=("human", "json"), default="human")
    p.set_defaults(func=cmd_ode)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (RicciClassError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        sys.stderr.write(f"ricciclass: error: {msg}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
