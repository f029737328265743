"""Closed-form metric families with their expected verdicts and printed closed forms.

Each family is a FamilyDescriptor: parameters with defaults, free coordinate
functions with default bodies, positivity constraints, a builder and the
verdicts it must reproduce.  Parameters stay symbolic constants in the built
spec so the exported .rfm text shows the family shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .dsl import ManifoldSpec, parse_expression, pretty_print, probe_points
from .errors import ParameterConstraintViolation, UnknownFamily
from .expr import (
    ONE, ZERO, Expr, add, as_expr, cosh, differentiate, exp, ln, mul, power, sin, cos, sqrt,
    sym, tanh,
)
from .numeric import Program

__all__ = ["FamilyDescriptor", "Param", "FreeFunction", "Extra", "BuiltFamily", "list_families",
           "get_family", "instantiate_family", "build_family", "export_family", "verify_family",
           "FamilyVerification", "extras_residuals", "FragmentCheck", "co_3d_fragment_check"]


@dataclass(frozen=True)
class Param:
    name: str
    default: Fraction


@dataclass(frozen=True)
class FreeFunction:
    """A coordinate function left free by the family, filled with a default body."""

    name: str
    coord: str
    default: str


@dataclass(frozen=True)
class Extra:
    """A closed form the computed geometry must reproduce.

    ``kind`` is one of ``scalar``, ``ricci``, ``alpha``, ``beta``, ``qe_a``,
    ``qe_b``, ``omega_vector``; ``value`` is an Expr (scalar kinds), a list of
    n Exprs (one-forms and vectors) or an n-by-n nested list (ricci).
    """

    kind: str
    value: object


@dataclass(frozen=True)
class Constraint:
    text: str
    positive: Callable[["_Ctx"], Expr]


@dataclass
class BuiltFamily:
    spec: ManifoldSpec
    extras: list[Extra]


class _Ctx:
    """Symbols and function bodies handed to a family builder."""

    def __init__(self, coords: Sequence[str], params: Sequence[Param], funcs: Mapping[str, tuple[str, Expr]]):
        self.coords = tuple(coords)
        self.x = [sym(c) for c in coords]
        self.c = {p.name: sym(p.name) for p in params}
        self.funcs = dict(funcs)

    def __getattr__(self, name):
        c = self.__dict__.get("c", {})
        if name in c:
            return c[name]
        f = self.__dict__.get("funcs", {})
        if name in f:
            return f[name][1]
        raise AttributeError(name)

    def d(self, name: str, order: int = 1) -> Expr:
        coord, body = self.funcs[name]
        for _ in range(order):
            body = differentiate(body, coord)
        return body


@dataclass(frozen=True)
class FamilyDescriptor:
    id: str
    dim: int
    summary: str
    params: tuple[Param, ...]
    functions: tuple[FreeFunction, ...]
    domain: Mapping[str, tuple[float, float]]
    expected: Mapping[str, str]
    builder: Callable[[_Ctx], tuple[list[Expr], Expr | None, list[Extra]]] = field(repr=False)
    constraints: tuple[Constraint, ...] = ()

    @property
    def coords(self) -> tuple[str, ...]:
        return tuple(f"x{i}" for i in range(1, self.dim + 1))

    def defaults(self) -> dict[str, Fraction]:
        return {p.name: p.default for p in self.params}


def _P(**kw) -> tuple[Param, ...]:
    return tuple(Param(k, Fraction(v)) for k, v in kw.items())


def _F(*items: tuple[str, str, str]) -> tuple[FreeFunction, ...]:
    return tuple(FreeFunction(*t) for t in items)


def _diag(values: Sequence[Expr]) -> list[list[Expr]]:
    n = len(values)
    return [[as_expr(values[i]) if i == j else ZERO for j in range(n)] for i in range(n)]


def _div(a, b) -> Expr:
    return mul(a, power(b, -1))


H, F = "holds", "fails"


# ------------------------------------------------------------------ 3D: f1 dx1^2 + f2 h2 dx2^2 + f3 h3 q dx3^2

def _rr_3d(k: _Ctx):
    m, c1, c2, c3 = k.m, k.c1, k.c2, k.c3
    f, h, q = k.f, k.h, k.q
    df, dh = k.d("f"), k.d("h")
    g = [
        _div(mul(c2, df, df), f),
        _div(mul(m, m, c2, f, dh, dh), mul(h, add(mul(c2, c3), mul(-1, m, m, h)))),
        mul(c1, power(f, m), power(h, m), q),
    ]
    sc = _div(mul(add(1, mul(-1, m)), c3), mul(2, m, f, h))
    lfh = ln(mul(f, h))
    beta = [mul(-1, differentiate(lfh, x)) for x in k.coords]
    return g, None, [Extra("scalar", sc), Extra("beta", beta)]


def _prs_3d(k: _Ctx):
    c1, c2, c3, c4 = k.c1, k.c2, k.c3, k.c4
    f, h, q = k.f, k.h, k.q
    df, dh = k.d("f"), k.d("h")
    g = [
        _div(mul(c1, df, df), f),
        _div(mul(c2, f, dh, dh), mul(h, add(mul(c3, h), c4))),
        mul(f, h, q),
    ]
    alpha = [_div(mul(-1, df), mul(2, f)), ZERO, ZERO]
    pref = _div(mul(-1, add(mul(c1, c3), c2)), mul(4, c1, c2, h))
    ri = _diag([ZERO, mul(pref, _div(mul(c2, dh, dh), add(mul(c3, h), c4))), mul(pref, q, h, h)])
    return g, None, [Extra("alpha", alpha), Extra("ricci", ri)]


def _qe1_3d(k: _Ctx):
    m, c1, c2, c3, c4 = k.m, k.c1, k.c2, k.c3, k.c4
    f, h, q = k.f, k.h, k.q
    df, dh = k.d("f"), k.d("h")
    one_m = add(1, mul(-1, m))
    c2f1 = add(mul(c2, f), -1)
    f3 = mul(c3, power(m, mul(-1, m)), power(f, one_m), power(c2f1, m))
    f1 = _div(mul(c1, c3, df, df), mul(f3, f))
    h2 = mul(c4, power(h, _div(add(2, mul(-3, m)), add(mul(2, m), -2))), dh, dh)
    g = [f1, mul(f, h2), mul(f3, h, q)]
    hpow = power(h, _div(add(2, mul(-1, m)), add(mul(2, m), -2)))
    mm = power(m, m)
    tail = power(c2f1, add(m, -2))
    a = add(
        mul(_div(m, mul(8, one_m, c4, f)), hpow),
        mul(-1, _div(add(mul(c2, c2, f, f), mul(add(m, -2), c2, f), power(add(m, -1), 2)),
                     mul(2, c1, mm, power(f, m))), tail),
    )
    b = add(
        mul(_div(m, mul(8, add(m, -1), c4, f)), hpow),
        mul(_div(mul(m, add(m, -1)), mul(2, c1, mm, power(f, m))), tail),
    )
    omega = [mul(f, dh, c2f1), mul(2, one_m, h, df), ZERO]
    return g, None, [Extra("qe_a", a), Extra("qe_b", b), Extra("omega_vector", omega)]


def _qe2_3d(k: _Ctx):
    c1, c2, c3 = k.c1, k.c2, k.c3
    l1, l3, h2 = k.l1, k.l3, k.h2
    d1, d3 = k.d("l1"), k.d("l3")
    q3 = _div(mul(c1, d3, d3), add(mul(c1, c3), mul(-1, c2, l3, l3)))
    g = [mul(c1, d1, d1), h2, mul(c2, l1, l1, q3)]
    lam = mul(l1, l3)
    return g, lam, [Extra("ricci", _diag([ZERO] * 3))]


# ------------------------------------------------------------------ 4D: dx1^2 + f q (dx2^2 + dx3^2 + dx4^2)

def _warped_4d(f: Expr, q: Expr) -> list[Expr]:
    w = mul(f, q)
    return [ONE, w, w, w]


def _prs_4d1_b1(k: _Ctx):
    c0, c1, c2, c3 = k.c0, k.c1, k.c2, k.c3
    base = add(mul(c1, k.x[0]), c0)
    f = power(base, 2)
    lin = add(mul(c2, k.x[3]), c3)
    q = power(lin, -2)
    alpha = [_div(mul(-1, c1), base), ZERO, ZERO, ZERO]
    r = _div(mul(-2, add(mul(c1, c1), mul(c2, c2))), power(lin, 2))
    return _warped_4d(f, q), None, [Extra("alpha", alpha), Extra("ricci", _diag([ZERO, r, r, r]))]


def _prs_4d1_b2(k: _Ctx):
    c0, c1, c2, c3 = k.c0, k.c1, k.c2, k.c3
    base = add(mul(c1, k.x[0]), c0)
    f = power(base, 2)
    arg = add(mul(c2, k.x[3]), c3)
    q = _div(mul(c2, c2), mul(c1, c1, power(cosh(arg), 2)))
    alpha = [_div(mul(-1, c1), base), ZERO, ZERO, mul(c2, tanh(arg))]
    r = mul(-1, c2, c2)
    return _warped_4d(f, q), None, [Extra("alpha", alpha), Extra("ricci", _diag([ZERO, r, r, ZERO]))]


def _co_4d1(k: _Ctx):
    q = power(add(mul(k.c1, k.x[3]), k.c0), -2)
    return _warped_4d(k.f, q), None, []


def _qe1_4d1_f(k: _Ctx):
    c1, c2, c3, c4 = k.c1, k.c2, k.c3, k.c4
    f = mul(4, c3, power(cosh(add(mul(c1, k.x[0]), c2)), 2))
    q = power(add(mul(2, c1, sqrt(c3), k.x[3]), c4), -2)
    df, dq = differentiate(f, "x1"), differentiate(q, "x4")
    ddf, ddq = differentiate(df, "x1"), differentiate(dq, "x4")
    q3 = power(q, 3)
    a = mul(-1, _div(add(mul(2, ddf, q3, f), mul(df, df, q3), mul(2, f, q, ddq), mul(-1, dq, dq, f)),
                     mul(4, f, f, q3)))
    return _warped_4d(f, q), None, [Extra("qe_a", a)]


# ------------------------------------------------------------------ 4D: diagonal, functions of x1

def _rr_4d2(k: _Ctx):
    f1, f2 = k.f1, k.f2
    d1, d2, dd2 = k.d("f1"), k.d("f2"), k.d("f2", 2)
    sc = _div(add(mul(-2, f1, f2, dd2), mul(f1, d2, d2), mul(f2, d1, d2)), mul(2, f1, f1, f2, f2))
    beta = [differentiate(ln(power(sc, 2)), x) for x in k.coords]
    beta = [mul(Fraction(1, 2), b) for b in beta]
    return [f1, f2, ONE, ONE], None, [Extra("scalar", sc), Extra("beta", beta)]


def _prs_4d2(k: _Ctx):
    m, c1, c2, c3, c4 = k.m, k.c1, k.c2, k.c3, k.c4
    f = k.f
    df = k.d("f")
    mp1 = add(m, 1)
    e = exp(mul(c3, power(f, mp1)))
    f1 = mul(c1, c2, c4, m, m, e, power(f, _div(add(mul(m, m), mul(-1, m), -1), mp1)), df, df)
    f2 = mul(c2, power(f, m))
    f4 = mul(c4, e, power(f, _div(mul(-1, m), mp1)))
    alpha = [_div(mul(add(m, mul(-1, c3, power(mp1, 2), power(f, mp1))), df), mul(2, mp1, f)),
             ZERO, ZERO, ZERO]
    r44 = _div(mul(-1, c3, power(mp1, 2)), mul(2, c1, c2, m, m))
    return [f1, f2, f, f4], None, [Extra("alpha", alpha), Extra("ricci", _diag([ZERO, ZERO, ZERO, r44])),
                                   Extra("qe_a", ZERO)]


def _qe2_4d2(k: _Ctx):
    m, n, c1, c2, c3 = k.m, k.n, k.c1, k.c2, k.c3
    f = k.f
    df = k.d("f")
    nu = sqrt(add(1, mul(n, n), mul(m, m)))
    f1 = mul(c1, c2, c3, power(f, add(mul(-1, nu), -2)), df, df)
    lam = mul(_div(add(1, n, m, nu), -4), ln(f))
    return [f1, f, mul(c2, power(f, m)), mul(c3, power(f, n))], lam, []


# ------------------------------------------------------------------ 4D: q(x4) dx1^2 + u(x3) dx2^2 + h(x2) dx3^2 + f(x1) dx4^2

def _qe2_4d3(k: _Ctx):
    x1, x2, x3, x4 = k.x
    lin4 = add(mul(k.c1, x4), k.c0)
    q = power(lin4, 2)
    u = power(add(mul(k.c2, x3), k.c3), 2)
    h = power(add(mul(k.c4, x2), k.c5), 2)
    lam4 = mul(k.c6, lin4)
    lam1 = add(mul(k.c7, cos(mul(k.c1, x1))), mul(k.c8, sin(mul(k.c1, x1))))
    return [q, u, h, ONE], mul(lam1, lam4), [Extra("ricci", _diag([ZERO] * 4))]


_FAMILIES: tuple[FamilyDescriptor, ...] = (
    FamilyDescriptor(
        "rr-3d", 3, "Ricci recurrent warped 3D metric",
        _P(m=2, c1=1, c2=1, c3=8),
        _F(("f", "x1", "exp(x1)"), ("h", "x2", "x2"), ("q", "x3", "1")),
        {"x2": (0.1, 1.9)},
        {"RR": H, "PRS": F, "CO": F, "QE1": H},
        _rr_3d,
        (Constraint("m must differ from 1", lambda k: power(add(k.m, -1), 2)),
         Constraint("c2*c3 - m^2*h must be positive", lambda k: add(mul(k.c2, k.c3), mul(-1, k.m, k.m, k.h))),
         Constraint("f must be positive", lambda k: k.f),
         Constraint("h must be positive", lambda k: k.h)),
    ),
    FamilyDescriptor(
        "prs-3d", 3, "pseudo Ricci symmetric 3D metric that is also quasi Einstein and Cotton",
        _P(c1=1, c2=1, c3=1, c4=1),
        _F(("f", "x1", "exp(x1)"), ("h", "x2", "x2"), ("q", "x3", "1")),
        {"x2": (0.5, 2.0)},
        {"PRS": H, "QE1": H, "CO": H, "RR": F},
        _prs_3d,
        (Constraint("f must be positive", lambda k: k.f),
         Constraint("h must be positive", lambda k: k.h),
         Constraint("c3*h + c4 must be positive", lambda k: add(mul(k.c3, k.h), k.c4))),
    ),
    FamilyDescriptor(
        "qe1-3d", 3, "quasi Einstein 3D metric solved explicitly",
        _P(m=2, c1=1, c2=2, c3=1, c4=1),
        _F(("f", "x1", "exp(x1)"), ("h", "x2", "x2"), ("q", "x3", "1")),
        {"x1": (0.0, 1.0), "x2": (0.5, 2.0)},
        {"QE1": H},
        _qe1_3d,
        (Constraint("m must differ from 1", lambda k: power(add(k.m, -1), 2)),
         Constraint("c2*f - 1 must be positive", lambda k: add(mul(k.c2, k.f), -1)),
         Constraint("f must be positive", lambda k: k.f),
         Constraint("h must be positive", lambda k: k.h)),
    ),
    FamilyDescriptor(
        "qe2-3d", 3, "Ricci flat 3D metric with a parallel Hessian scalar",
        _P(c1=1, c2=1, c3=4),
        _F(("l1", "x1", "x1 + 2"), ("l3", "x3", "x3"), ("h2", "x2", "1")),
        {"x1": (0.0, 1.0), "x3": (-1.5, 1.5)},
        {"QE2": H, "CO": H, "RR": F, "PRS": F, "QE1": F},
        _qe2_3d,
        (Constraint("c1*c3 - c2*l3^2 must be positive",
                    lambda k: add(mul(k.c1, k.c3), mul(-1, k.c2, k.l3, k.l3))),
         Constraint("l1 must not vanish", lambda k: power(k.l1, 2))),
    ),
    FamilyDescriptor(
        "prs-4d1-b1", 4, "pseudo Ricci symmetric warped 4D metric, first branch",
        _P(c0=0, c1=1, c2=1, c3=1),
        (),
        {"x1": (1.0, 3.0), "x4": (0.0, 2.0)},
        {"PRS": H, "QE1": H, "CO": H, "RR": F},
        _prs_4d1_b1,
        (Constraint("c1*x1 + c0 must not vanish", lambda k: power(add(mul(k.c1, k.x[0]), k.c0), 2)),
         Constraint("c2*x4 + c3 must not vanish", lambda k: power(add(mul(k.c2, k.x[3]), k.c3), 2))),
    ),
    FamilyDescriptor(
        "prs-4d1-b2", 4, "pseudo Ricci symmetric warped 4D metric, second branch",
        _P(c0=0, c1=1, c2=1, c3=0),
        (),
        {"x1": (1.0, 3.0)},
        {"PRS": H, "QE1": F, "RR": F, "CO": F},
        _prs_4d1_b2,
        (Constraint("c1*x1 + c0 must not vanish", lambda k: power(add(mul(k.c1, k.x[0]), k.c0), 2)),
         Constraint("c1 and c2 must not vanish", lambda k: mul(k.c1, k.c1, k.c2, k.c2))),
    ),
    FamilyDescriptor(
        "co-4d1", 4, "Cotton warped 4D metric with free warping function",
        _P(c0=1, c1=1),
        _F(("f", "x1", "exp(x1)"),),
        {"x4": (0.0, 2.0)},
        {"CO": H, "RR": F, "PRS": F},
        _co_4d1,
        (Constraint("f must be positive", lambda k: k.f),
         Constraint("c1*x4 + c0 must not vanish", lambda k: power(add(mul(k.c1, k.x[3]), k.c0), 2))),
    ),
    FamilyDescriptor(
        "qe1-4d1-f", 4, "warped 4D metric from the quasi Einstein reduction, elementary branch of q",
        _P(c1=Fraction(1, 2), c2=0, c3=1, c4=2),
        (),
        {},
        # the elementary q solution is the zero first-integral branch, which is Einstein
        {"QE1": F, "CO": H, "RR": F, "PRS": F},
        _qe1_4d1_f,
        (Constraint("c3 must be positive", lambda k: k.c3),
         Constraint("2*c1*sqrt(c3)*x4 + c4 must not vanish",
                    lambda k: power(add(mul(2, k.c1, sqrt(k.c3), k.x[3]), k.c4), 2))),
    ),
    FamilyDescriptor(
        "rr-4d2", 4, "Ricci recurrent 4D metric reducing to a surface",
        (),
        _F(("f1", "x1", "1"), ("f2", "x1", "x1^4")),
        {"x1": (0.5, 2.0)},
        {"RR": H, "PRS": F, "QE1": F, "CO": F},
        _rr_4d2,
        (Constraint("f1 must be positive", lambda k: k.f1),
         Constraint("f2 must be positive", lambda k: k.f2)),
    ),
    FamilyDescriptor(
        "prs-4d2", 4, "pseudo Ricci symmetric 4D metric with a rank one Ricci tensor",
        _P(m=1, c1=1, c2=1, c3=1, c4=1),
        _F(("f", "x1", "x1"),),
        {"x1": (0.5, 2.0)},
        {"PRS": H, "QE1": H, "RR": F},
        _prs_4d2,
        (Constraint("f must be positive", lambda k: k.f),
         Constraint("m + 1 must not vanish", lambda k: power(add(k.m, 1), 2)),
         Constraint("m must not vanish", lambda k: power(k.m, 2))),
    ),
    FamilyDescriptor(
        "qe2-4d2", 4, "4D metric whose Ricci tensor is a Hessian, with nonzero Ricci",
        _P(m=1, n=1, c1=1, c2=1, c3=1),
        _F(("f", "x1", "exp(x1)"),),
        {},
        {"QE2": H},
        _qe2_4d2,
        (Constraint("f must be positive", lambda k: k.f),),
    ),
    FamilyDescriptor(
        "qe2-4d3", 4, "flat 4D metric with a parallel Hessian scalar",
        _P(c0=1, c1=1, c2=1, c3=1, c4=1, c5=1, c6=1, c7=1, c8=1),
        (),
        {"x2": (0.0, 1.0), "x3": (0.0, 1.0), "x4": (0.0, 1.0)},
        {"QE2": H, "CO": H, "RR": F, "PRS": F, "QE1": F},
        _qe2_4d3,
        (Constraint("c1*x4 + c0 must not vanish", lambda k: power(add(mul(k.c1, k.x[3]), k.c0), 2)),
         Constraint("c2*x3 + c3 must not vanish", lambda k: power(add(mul(k.c2, k.x[2]), k.c3), 2)),
         Constraint("c4*x2 + c5 must not vanish", lambda k: power(add(mul(k.c4, k.x[1]), k.c5), 2))),
    ),
)

_BY_ID = {f.id: f for f in _FAMILIES}


def list_families() -> list[FamilyDescriptor]:
    return list(_FAMILIES)


def get_family(family_id: str) -> FamilyDescriptor:
    try:
        return _BY_ID[family_id]
    except KeyError:
        raise UnknownFamily(f"no family {family_id!r}; known: {', '.join(_BY_ID)}") from None


def _as_fraction(v) -> Fraction:
    if isinstance(v, float):
        return Fraction(repr(v))
    return Fraction(v)


def _resolve_functions(fam: FamilyDescriptor, overrides: Mapping[str, object], consts: Sequence[str]):
    out = {}
    known = {f.name for f in fam.functions}
    for name in overrides:
        if name not in known:
            raise ParameterConstraintViolation(f"{fam.id} has no free function {name!r}")
    for ff in fam.functions:
        body = overrides.get(ff.name, ff.default)
        if isinstance(body, str):
            body = parse_expression(body, list(consts), [ff.coord])
        body = as_expr(body)
        stray = body.free - {ff.coord} - set(consts)
        if stray:
            raise ParameterConstraintViolation(
                f"function {ff.name} may depend only on {ff.coord}, found {sorted(stray)}")
        out[ff.name] = (ff.coord, body)
    return out


def _check_constraints(fam: FamilyDescriptor, ctx: _Ctx, values: Mapping[str, Fraction],
                       domain: Mapping[str, tuple[float, float]]) -> None:
    if not fam.constraints:
        return
    n_probe = 64
    rng_pts = probe_points(_Probe(fam.coords, domain), n_probe, 0)
    corners = {}
    for i, c in enumerate(fam.coords):
        corners[c] = np.array([domain[c][0], domain[c][1]] * 2) if i % 2 == 0 else \
            np.array([domain[c][0], domain[c][0], domain[c][1], domain[c][1]])
    env = {c: np.concatenate([rng_pts[c], corners[c]]) for c in fam.coords}
    size = n_probe + 4
    consts = {k: float(v) for k, v in values.items()}
    for con in fam.constraints:
        vals, bad = Program([con.positive(ctx)]).run({**consts, **env}, size=size)
        v = np.broadcast_to(vals[0], (size,))
        with np.errstate(invalid="ignore"):
            ok = ~bad & np.isfinite(v) & (v > 0)
        if not ok.all():
            raise ParameterConstraintViolation(f"{fam.id}: {con.text}")


@dataclass(frozen=True)
class _Probe:
    coords: tuple[str, ...]
    domain: Mapping[str, tuple[float, float]]


def build_family(family_id: str, params: Mapping[str, object] | None = None,
                 overrides: Mapping[str, object] | None = None,
                 domain: Mapping[str, tuple[float, float]] | None = None) -> BuiltFamily:
    """Build the spec and its closed-form extras."""
    fam = get_family(family_id)
    values = fam.defaults()
    for k, v in (params or {}).items():
        if k not in values:
            raise ParameterConstraintViolation(f"{fam.id} has no parameter {k!r}")
        values[k] = _as_fraction(v)
    dom = {c: (-1.0, 1.0) for c in fam.coords}
    dom.update(fam.domain)
    dom.update(domain or {})
    funcs = _resolve_functions(fam, overrides or {}, list(values))
    ctx = _Ctx(fam.coords, fam.params, funcs)
    _check_constraints(fam, ctx, values, dom)
    diag, lam, extras = fam.builder(ctx)
    spec = ManifoldSpec(
        name=fam.id.replace("-", "_"),
        coords=fam.coords,
        metric=tuple(tuple(r) for r in _diag(diag)),
        domain=dom,
        constants=values,
        functions={k: v for k, v in funcs.items()},
        lam=lam,
    )
    return BuiltFamily(spec, extras)


def instantiate_family(family_id: str, params: Mapping[str, object] | None = None,
                       overrides: Mapping[str, object] | None = None,
                       domain: Mapping[str, tuple[float, float]] | None = None) -> ManifoldSpec:
    return build_family(family_id, params, overrides, domain).spec


def export_family(family_id: str, params: Mapping[str, object] | None = None,
                  overrides: Mapping[str, object] | None = None) -> str:
    """.rfm text of a family instance."""
    return pretty_print(instantiate_family(family_id, params, overrides))


# ------------------------------------------------------------------ verification

EXTRA_TOL = 1e-9


@dataclass
class FamilyVerification:
    id: str
    reports: list
    expected: Mapping[str, str]
    mismatches: dict[str, tuple[str, str]]
    extras: dict[str, float]
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.mismatches and all(v < EXTRA_TOL for v in self.extras.values())

    def verdicts(self) -> dict[str, str]:
        return {r.id: r.verdict for r in self.reports}


def _values(exprs: Sequence[Expr], spec: ManifoldSpec, points: Mapping[str, np.ndarray], size: int) -> np.ndarray:
    vals, _ = Program(list(exprs)).run({**spec.constant_values(), **points}, slots=spec.slots, size=size)
    return np.stack([np.broadcast_to(v, (size,)) for v in vals], axis=-1)


def _pair_residual(computed: np.ndarray, printed: np.ndarray) -> float:
    diff = np.abs(computed - printed)
    scale = 1.0 + np.abs(computed) + np.abs(printed)
    return float(np.max(diff / scale)) if diff.size else 0.0


def _parallel_residual(u: np.ndarray, v: np.ndarray) -> float:
    """Largest normalized 2x2 minor of the pair (u, v) per point: zero iff parallel."""
    wedge = np.abs(u[:, :, None] * v[:, None, :] - u[:, None, :] * v[:, :, None])
    scale = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
    return float(np.max(wedge.max(axis=(1, 2)) / np.maximum(scale, 1e-300)))


def extras_residuals(built: BuiltFamily, reports: Mapping[str, object], gs) -> dict[str, float]:
    """Compare each printed closed form against the computed object at the sample points."""
    spec, out = built.spec, {}
    n, size = spec.dim, gs.size
    for ex in built.extras:
        if ex.kind == "scalar":
            out["scalar"] = _pair_residual(gs.scalar, _values([ex.value], spec, gs.points, size)[:, 0])
        elif ex.kind == "ricci":
            flat = [ex.value[i][j] for i in range(n) for j in range(n)]
            printed = _values(flat, spec, gs.points, size).reshape(size, n, n)
            out["ricci"] = _pair_residual(gs.ricci, printed)
        elif ex.kind in ("alpha", "beta"):
            rep = reports.get("PRS" if ex.kind == "alpha" else "RR")
            if rep is None or ex.kind not in rep.data:
                continue
            mask = rep.data["mask"]
            printed = _values(ex.value, spec, gs.points, size)[mask]
            out[ex.kind] = _pair_residual(rep.data[ex.kind], printed)
        elif ex.kind in ("qe_a", "qe_b"):
            rep = reports.get("QE1")
            if rep is None or "a" not in rep.data:
                continue
            mask = rep.data["mask"]
            printed = _values([ex.value], spec, gs.points, size)[mask, 0]
            key = ex.kind[3:]
            out[ex.kind] = _pair_residual(rep.data[key], printed)
        elif ex.kind == "omega_vector":
            rep = reports.get("QE1")
            if rep is None or "omega" not in rep.data:
                continue
            mask = rep.data["mask"]
            vec = _values(ex.value, spec, gs.points, size)[mask]
            form = np.einsum("pij,pj->pi", gs.g[mask], vec)
            out["omega"] = _parallel_residual(rep.data["omega"], form)
        else:
            raise ValueError(f"unknown closed form kind {ex.kind!r}")
    return out


def verify_family(family_id: str, cfg=None, params: Mapping[str, object] | None = None,
                  overrides: Mapping[str, object] | None = None) -> FamilyVerification:
    """Classify a family instance and compare against its expected verdicts and closed forms."""
    import time

    from .report import CONDITIONS, consistency_notes, run_on_samples
    from .sampling import SamplingConfig, symbolic_samples

    start = time.perf_counter()
    cfg = cfg or SamplingConfig()
    fam = get_family(family_id)
    built = build_family(family_id, params, overrides)
    spec = built.spec
    cids = [c for c in CONDITIONS if c != "QE2" or spec.lam is not None]
    gs = symbolic_samples(spec, cfg, True, 3 if spec.lam is not None else 0)
    reports = [run_on_samples(c, gs, cfg) for c in cids]
    consistency_notes(reports, spec.dim)
    by = {r.id: r for r in reports}
    mismatches = {k: (v, by[k].verdict) for k, v in fam.expected.items() if by[k].verdict != v}
    extras = extras_residuals(built, by, gs)
    return FamilyVerification(fam.id, reports, dict(fam.expected), mismatches, extras,
                              time.perf_counter() - start)


# ------------------------------------------------------------------ printed fragments

# The 3D Cotton example stops at h2 as a function of h3; f3 is left as an
# unevaluated quadrature, so only what the fragment pins down is checked.
CO_3D_H2 = "h_1^2/((c1 - c0*ln(h))*h^2)"
CO_3D_H_EQUATION = ("2*h2*h*h_2", "-h*h2_1*h_1", "-2*h2*h_1^2", "c0*h2^2*h^2")
# (i, j, k) with j < k; zero for every diagonal metric of the separable 3D shape
CO_3D_STRUCTURAL_ZEROS = ((0, 0, 2), (0, 1, 2), (1, 0, 2), (1, 1, 2), (2, 0, 1))


@dataclass(frozen=True)
class FragmentCheck:
    id: str
    relation: float       # normalized residual of the printed h equation on the printed h2
    structural: float     # largest Cotton component the ansatz forces to vanish
    unchecked: tuple[tuple[int, int, int], ...]
    points: int

    def ok(self, tol: float = 1e-9) -> bool:
        return self.relation < tol and self.structural < tol


def _random_poly(rng: np.random.Generator, lead: float, size: int = 4):
    coefs = np.concatenate([[1.0, lead], rng.uniform(-0.3, 0.3, size)])
    p = np.polynomial.Polynomial(coefs)

    def fn(xs, order):
        return (p.deriv(order) if order else p)(np.asarray(xs, dtype=float))
    return fn


def co_3d_fragment_check(seed: int = 0, points: int = 20, c0: float = 1.0, c1: float = 3.0) -> FragmentCheck:
    """Check the printed h2 = h3'^2/((c1 - c0 ln h3) h3^2) of the 3D Cotton example.

    f1, f2, f3, h3 and q are seeded random polynomials near 1 bound as slots.
    """
    from .classical import ClassicalPack
    from .expr import slot, subs
    from .tensors import CurvaturePack, evaluate_tensors

    rng = np.random.default_rng(seed)
    h, hp, hpp = (slot("h3", "x2", k) for k in range(3))
    jets = {"h": h, "h_1": hp, "h_2": hpp}
    h2 = subs(parse_expression(CO_3D_H2, ["c0", "c1", "h", "h_1"], []), jets)
    dh2 = differentiate(h2, "x2")
    terms = [subs(parse_expression(t, ["c0", "h", "h_1", "h_2", "h2", "h2_1"], []),
                  {**jets, "h2": h2, "h2_1": dh2}) for t in CO_3D_H_EQUATION]
    f1, f2, f3 = (slot(n, "x1") for n in ("f1", "f2", "f3"))
    metric = ((f1, ZERO, ZERO), (ZERO, mul(f2, h2), ZERO), (ZERO, ZERO, mul(f3, h, slot("q", "x3"))))
    slots = {n: _random_poly(rng, rng.uniform(-0.5, 0.5)) for n in ("f1", "f2", "f3", "q")}
    slots["h3"] = _random_poly(rng, 0.7)
    spec = ManifoldSpec(name="co_3d_fragment", coords=("x1", "x2", "x3"), metric=metric,
                        domain={c: (-0.3, 0.3) for c in ("x1", "x2", "x3")},
                        constants={"c0": Fraction(c0), "c1": Fraction(c1)}, slots=slots)
    env = {c: rng.uniform(-0.3, 0.3, points) for c in spec.coords}
    vals, bad = Program(terms).run({**spec.constant_values(), **env}, slots=slots, size=points)
    stack = np.stack([np.broadcast_to(v, (points,)) for v in vals], axis=-1)[~bad]
    relation = float(np.max(np.abs(stack.sum(axis=1)) / (1.0 + np.abs(stack).sum(axis=1))))
    out, bad = evaluate_tensors({"c": ClassicalPack(CurvaturePack(spec)).cotton}, spec, env, points)
    c = out["c"][~bad]
    structural = max(float(np.max(np.abs(c[:, i, j, k]))) for i, j, k in CO_3D_STRUCTURAL_ZEROS)
    unchecked = tuple((i, j, k) for i in range(3) for j in range(3) for k in range(j + 1, 3)
                      if (i, j, k) not in CO_3D_STRUCTURAL_ZEROS)
    return FragmentCheck("co-3d-fragment", relation, structural, unchecked, int((~bad).sum()))
