"""Manifold definitions: the ManifoldSpec value type and the .rfm file format.

A .rfm file is line oriented::

    manifold sphere2
    dim 2
    coords th ph
    domain th in [0.2, 2.9]
    const r = 1
    func s(t) = r*sin(t)
    metric diag: r^2, s(th)^2

Each line holds one declaration and ``#`` starts a comment.  Expressions use
``+ - * / ^`` (``^`` is right associative, ``**`` is accepted as a synonym),
unary minus, parentheses, the elementary functions, calls to declared
``func`` definitions (inlined on parse) and ``diff(expr, coord)``.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch, EmptyDomain, NotPositiveDefinite, RfmSyntaxError, UnboundSymbol,
    UndeclaredSymbol,
)
from .expr import (
    FUNCTIONS, ZERO, Expr, Sym, add, as_expr, differentiate, func, mul, num, power, subs, sym,
    to_text,
)
from .numeric import Program, SlotFunction

__all__ = [
    "ManifoldSpec", "parse_manifold", "pretty_print", "validate_spec", "ValidationReport",
    "spec_hash", "parse_expression",
]

DEFAULT_INTERVAL = (-1.0, 1.0)


@dataclass(frozen=True, eq=False)
class ManifoldSpec:
    """A coordinate chart with a metric written in explicit expressions.

    ``metric`` is a symmetric n-by-n tuple of expressions in the coordinates
    and declared constants.  ``functions`` keeps the named helper
    definitions (parameter name, body) for printing; their bodies are
    already inlined into the metric.  ``slots`` binds numerically supplied
    coordinate functions (see ``ode``) and is not part of the text form.
    """

    name: str
    coords: tuple[str, ...]
    metric: tuple[tuple[Expr, ...], ...]
    domain: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    constants: Mapping[str, Fraction | None] = field(default_factory=dict)
    functions: Mapping[str, tuple[str, Expr]] = field(default_factory=dict)
    lam: Expr | None = None
    slots: Mapping[str, SlotFunction] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.coords)
        if n < 2:
            raise DimensionMismatch(f"dimension must be at least 2, got {n}")
        if len(self.metric) != n or any(len(r) != n for r in self.metric):
            raise DimensionMismatch(f"metric is not {n}x{n}")
        rows = tuple(tuple(as_expr(v) for v in r) for r in self.metric)
        for i in range(n):
            for j in range(i):
                if rows[i][j] is not rows[j][i]:
                    raise DimensionMismatch(f"metric entries ({i + 1},{j + 1}) and ({j + 1},{i + 1}) differ")
        object.__setattr__(self, "metric", rows)
        dom = {c: tuple(float(v) for v in self.domain.get(c, DEFAULT_INTERVAL)) for c in self.coords}
        object.__setattr__(self, "domain", dom)
        consts = {k: (None if v is None else Fraction(v)) for k, v in self.constants.items()}
        object.__setattr__(self, "constants", consts)
        if self.lam is not None:
            object.__setattr__(self, "lam", as_expr(self.lam))
        allowed = set(self.coords) | set(consts)
        exprs = [e for r in rows for e in r] + ([self.lam] if self.lam is not None else [])
        for e in exprs:
            extra = e.free - allowed
            if extra:
                raise UndeclaredSymbol(f"undeclared symbol(s) {sorted(extra)}")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def constant_values(self) -> dict[str, float]:
        return {k: float(v) for k, v in self.constants.items() if v is not None}

    def is_diagonal(self) -> bool:
        n = self.dim
        return all(self.metric[i][j] is ZERO for i in range(n) for j in range(n) if i != j)

    def with_constants(self, **values) -> "ManifoldSpec":
        consts = dict(self.constants)
        for k, v in values.items():
            if k not in consts:
                raise UndeclaredSymbol(f"no constant named {k!r}")
            consts[k] = Fraction(v) if not isinstance(v, float) else Fraction(repr(v))
        return self.replace(constants=consts)

    def replace(self, **changes) -> "ManifoldSpec":
        fields = dict(name=self.name, coords=self.coords, metric=self.metric, domain=self.domain,
                      constants=self.constants, functions=self.functions, lam=self.lam,
                      slots=self.slots)
        fields.update(changes)
        return ManifoldSpec(**fields)

    def _key(self):
        return (self.name, self.coords, self.metric, tuple(sorted(self.domain.items())),
                tuple(sorted(self.constants.items())), tuple(sorted(self.functions.items())),
                self.lam, tuple(sorted((k, id(v)) for k, v in self.slots.items())))

    def __eq__(self, other):
        if not isinstance(other, ManifoldSpec):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash((self.name, self.coords))


# ------------------------------------------------------------------ lexer

_TOKEN = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\*\*|[-+*/^(),\[\]=:])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _lex(text: str, lineno: int, col0: int = 1) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise RfmSyntaxError(f"unexpected character {text[pos]!r}", lineno, col0 + pos)
        kind = m.lastgroup
        if kind != "ws":
            t = m.group()
            toks.append(_Tok(kind, "^" if t == "**" else t, lineno, col0 + pos))
        pos = m.end()
    return toks


# ------------------------------------------------------------------ expression parser

_INFIX = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_PREFIX_BP = 30


class _ExprParser:
    def __init__(self, toks: Sequence[_Tok], line: int, end_col: int, names: set[str],
                 funcs: Mapping[str, tuple[str, Expr]], coords: Sequence[str]):
        self.toks = list(toks)
        self.i = 0
        self.line = line
        self.end_col = end_col
        self.names = names
        self.funcs = funcs
        self.coords = coords

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self) -> _Tok:
        t = self.peek()
        if t is None:
            raise RfmSyntaxError("unexpected end of line", self.line, self.end_col)
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t is None or t.text != text:
            where = t.col if t is not None else self.end_col
            found = repr(t.text) if t is not None else "end of line"
            raise RfmSyntaxError(f"expected {text!r}, found {found}", self.line, where)
        return self.take()

    def expression(self, rbp: int = 0) -> Expr:
        left = self.prefix()
        while True:
            t = self.peek()
            if t is None or t.kind != "op" or t.text not in _INFIX:
                return left
            bp = _INFIX[t.text]
            if bp <= rbp:
                return left
            self.take()
            if t.text == "^":
                right = self.expression(bp - 1)
                left = power(left, right)
            else:
                right = self.expression(bp)
                if t.text == "+":
                    left = add(left, right)
                elif t.text == "-":
                    left = add(left, mul(-1, right))
                elif t.text == "*":
                    left = mul(left, right)
                else:
                    left = mul(left, power(right, -1))

    def prefix(self) -> Expr:
        t = self.take()
        if t.kind == "number":
            return num(Fraction(t.text))
        if t.text == "-":
            return mul(-1, self.expression(_PREFIX_BP))
        if t.text == "+":
            return self.expression(_PREFIX_BP)
        if t.text == "(":
            e = self.expression()
            self.expect(")")
            return e
        if t.kind == "name":
            nxt = self.peek()
            if nxt is not None and nxt.text == "(":
                return self.call(t)
            if t.text in self.names:
                return sym(t.text)
            raise UndeclaredSymbol(f"undeclared symbol {t.text!r}", t.line, t.col)
        raise RfmSyntaxError(f"unexpected {t.text!r}", t.line, t.col)

    def call(self, name_tok: _Tok) -> Expr:
        name = name_tok.text
        self.expect("(")
        args = [self.expression()]
        while self.peek() is not None and self.peek().text == ",":
            self.take()
            args.append(self.expression())
        self.expect(")")
        if name in FUNCTIONS or name == "sqrt":
            self._arity(name_tok, args, 1)
            return func(name, args[0])
        if name == "diff":
            self._arity(name_tok, args, 2)
            var = args[1]
            if not (isinstance(var, Sym) and var.payload in self.coords):
                raise RfmSyntaxError("second argument of diff must be a coordinate", name_tok.line, name_tok.col)
            return differentiate(args[0], var.payload)
        if name in self.funcs:
            self._arity(name_tok, args, 1)
            param, body = self.funcs[name]
            return subs(body, {param: args[0]})
        raise UndeclaredSymbol(f"undeclared function {name!r}", name_tok.line, name_tok.col)

    def _arity(self, tok: _Tok, args: list, k: int) -> None:
        if len(args) != k:
            raise RfmSyntaxError(f"{tok.text} takes {k} argument(s), got {len(args)}", tok.line, tok.col)

    def finish(self) -> None:
        t = self.peek()
        if t is not None:
            raise RfmSyntaxError(f"unexpected {t.text!r}", t.line, t.col)


def parse_expression(text: str, names: Sequence[str] = (), coords: Sequence[str] = ()) -> Expr:
    """Parse a standalone expression over the given symbol names."""
    toks = _lex(text, 1)
    p = _ExprParser(toks, 1, len(text) + 1, set(names) | set(coords), {}, coords)
    e = p.expression()
    p.finish()
    return e


def _number(p: _ExprParser) -> Fraction:
    e = p.expression()
    if not e.is_number:
        raise RfmSyntaxError("expected a number", p.line, p.toks[0].col if p.toks else p.end_col)
    return e.payload


# ------------------------------------------------------------------ file parser

_KEYWORDS = ("manifold", "dim", "coords", "domain", "const", "func", "lambda", "metric")


def parse_manifold(text: str) -> ManifoldSpec:
    """Parse .rfm source into a ManifoldSpec."""
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].rstrip()
        stripped = body.lstrip()
        if not stripped:
            continue
        col0 = len(body) - len(stripped) + 1
        lines.append((lineno, stripped, col0, len(body) + 1))

    name = None
    dim = None
    dim_loc = (0, 0)
    coords: list[str] = []
    coords_loc = (0, 0)
    constants: dict[str, Fraction | None] = {}
    # first pass: headers, coordinates and constants are order independent
    for lineno, s, col0, _ in lines:
        word = s.split(None, 1)[0]
        if word not in _KEYWORDS:
            raise RfmSyntaxError(f"unknown declaration {word!r}", lineno, col0)
        rest = s[len(word):]
        if word == "coords":
            toks = _lex(rest, lineno, col0 + len(word))
            if not toks or any(t.kind != "name" for t in toks):
                bad = next((t for t in toks if t.kind != "name"), None)
                raise RfmSyntaxError("coords expects names", lineno, bad.col if bad else col0)
            coords = [t.text for t in toks]
            coords_loc = (lineno, col0)
        elif word == "const":
            toks = _lex(rest, lineno, col0 + len(word))
            if not toks or toks[0].kind != "name":
                raise RfmSyntaxError("const expects a name", lineno, toks[0].col if toks else col0 + 5)
            constants[toks[0].text] = None

    names = set(coords) | set(constants)
    funcs: dict[str, tuple[str, Expr]] = {}
    domain: dict[str, tuple[float, float]] = {}
    lam = None
    metric_entries: dict[tuple[int, int], Expr] = {}
    metric_loc = None
    diag: list[Expr] | None = None

    for lineno, s, col0, end in lines:
        word = s.split(None, 1)[0]
        rest = s[len(word):]
        toks = _lex(rest, lineno, col0 + len(word))
        p = _ExprParser(toks, lineno, end, names, funcs, coords)
        if word == "manifold":
            t = p.take()
            if t.kind != "name":
                raise RfmSyntaxError("manifold expects a name", lineno, t.col)
            name = t.text
            p.finish()
        elif word == "dim":
            t = p.take()
            if t.kind != "number" or not t.text.isdigit():
                raise RfmSyntaxError("dim expects an integer", lineno, t.col)
            dim = int(t.text)
            dim_loc = (lineno, t.col)
            p.finish()
        elif word == "coords":
            pass
        elif word == "domain":
            t = p.take()
            if t.kind != "name":
                raise RfmSyntaxError("domain expects a coordinate", lineno, t.col)
            if t.text not in coords:
                raise UndeclaredSymbol(f"undeclared coordinate {t.text!r}", lineno, t.col)
            kw = p.take()
            if kw.text != "in":
                raise RfmSyntaxError("expected 'in'", lineno, kw.col)
            p.expect("[")
            lo = _number(p)
            p.expect(",")
            hi = _number(p)
            p.expect("]")
            p.finish()
            domain[t.text] = (float(lo), float(hi))
        elif word == "const":
            t = p.take()
            if p.peek() is not None:
                p.expect("=")
                constants[t.text] = _number(p)
                p.finish()
        elif word == "func":
            t = p.take()
            if t.kind != "name":
                raise RfmSyntaxError("func expects a name", lineno, t.col)
            if t.text in names or t.text in FUNCTIONS or t.text in ("sqrt", "diff"):
                raise RfmSyntaxError(f"{t.text!r} is already defined", lineno, t.col)
            p.expect("(")
            param = p.take()
            if param.kind != "name":
                raise RfmSyntaxError("func parameter must be a name", lineno, param.col)
            p.expect(")")
            p.expect("=")
            inner = _ExprParser(p.toks[p.i:], lineno, end, names | {param.text}, funcs, coords)
            body = inner.expression()
            inner.finish()
            funcs[t.text] = (param.text, body)
        elif word == "lambda":
            p.expect("=")
            lam = p.expression()
            p.finish()
        elif word == "metric":
            metric_loc = (lineno, col0)
            t = p.take()
            if t.text == "diag":
                p.expect(":")
                diag = [p.expression()]
                while p.peek() is not None and p.peek().text == ",":
                    p.take()
                    diag.append(p.expression())
                p.finish()
            elif t.text == "g":
                idx = []
                for _ in range(2):
                    p.expect("[")
                    it = p.take()
                    if it.kind != "number" or not it.text.isdigit():
                        raise RfmSyntaxError("metric index must be a positive integer", lineno, it.col)
                    idx.append((int(it.text), it.col))
                    p.expect("]")
                p.expect("=")
                e = p.expression()
                p.finish()
                n_expected = dim if dim is not None else len(coords)
                for k, c in idx:
                    if not 1 <= k <= n_expected:
                        raise DimensionMismatch(f"metric index {k} outside 1..{n_expected}", lineno, c)
                i, j = sorted(k for k, _ in idx)
                metric_entries[(i - 1, j - 1)] = e
            else:
                raise RfmSyntaxError("expected 'diag:' or 'g[i][j] ='", lineno, t.col)

    if name is None:
        raise RfmSyntaxError("missing 'manifold' declaration", 1, 1)
    if dim is None:
        raise RfmSyntaxError("missing 'dim' declaration", 1, 1)
    if len(coords) != dim:
        line, col = coords_loc if coords_loc[0] else dim_loc
        raise DimensionMismatch(f"{len(coords)} coordinates declared for dim {dim}", line, col)
    if metric_loc is None:
        raise RfmSyntaxError("missing 'metric' declaration", lines[-1][0] if lines else 1, 1)
    rows = [[ZERO] * dim for _ in range(dim)]
    if diag is not None:
        if len(diag) != dim:
            raise DimensionMismatch(f"diag has {len(diag)} entries for dim {dim}", *metric_loc)
        for i, e in enumerate(diag):
            rows[i][i] = e
    for (i, j), e in metric_entries.items():
        rows[i][j] = e
        rows[j][i] = e
    return ManifoldSpec(name=name, coords=tuple(coords), metric=tuple(tuple(r) for r in rows),
                        domain=domain, constants=constants, functions=funcs, lam=lam)


# ------------------------------------------------------------------ printing

def _fmt_bound(v: float) -> str:
    return repr(float(v))


def pretty_print(s: ManifoldSpec) -> str:
    """Canonical .rfm text for ``s``; parsing it gives back an equal spec."""
    out = [f"manifold {s.name}", f"dim {s.dim}", "coords " + " ".join(s.coords)]
    for c in s.coords:
        lo, hi = s.domain[c]
        out.append(f"domain {c} in [{_fmt_bound(lo)}, {_fmt_bound(hi)}]")
    for k in sorted(s.constants):
        v = s.constants[k]
        out.append(f"const {k}" if v is None else f"const {k} = {to_text(num(v))}")
    for k, (param, body) in s.functions.items():
        out.append(f"func {k}({param}) = {to_text(body)}")
    if s.lam is not None:
        out.append(f"lambda = {to_text(s.lam)}")
    if s.is_diagonal():
        out.append("metric diag: " + ", ".join(to_text(s.metric[i][i]) for i in range(s.dim)))
    else:
        for i in range(s.dim):
            for j in range(i, s.dim):
                if s.metric[i][j] is not ZERO or i == j:
                    out.append(f"metric g[{i + 1}][{j + 1}] = {to_text(s.metric[i][j])}")
    return "\n".join(out) + "\n"


def spec_hash(s: ManifoldSpec) -> str:
    return hashlib.sha256(pretty_print(s).encode()).hexdigest()


# ------------------------------------------------------------------ validation

@dataclass(frozen=True)
class ValidationReport:
    probes: int
    rejected: int
    symmetric: bool

    @property
    def rejected_fraction(self) -> float:
        return self.rejected / self.probes if self.probes else 0.0


def probe_points(s: ManifoldSpec, count: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    pts = {}
    for c in s.coords:
        lo, hi = s.domain[c]
        if not hi > lo:
            raise EmptyDomain(f"domain of {c} is [{lo}, {hi}]")
        pts[c] = rng.uniform(lo, hi, count)
    return pts


def metric_values(s: ManifoldSpec, env: Mapping[str, object], size: int) -> tuple[np.ndarray, np.ndarray]:
    """Metric components over a batch: returns (g[N, n, n], bad[N])."""
    n = s.dim
    flat = [s.metric[i][j] for i in range(n) for j in range(n)]
    if s.lam is not None:
        flat.append(s.lam)
    vals, bad = Program(flat).run({**s.constant_values(), **env}, slots=s.slots, size=size)
    g = np.stack(vals[: n * n], axis=-1).reshape(size, n, n)
    return g, bad


def positive_definite(g: np.ndarray) -> np.ndarray:
    """Leading principal minors all positive, per point."""
    ok = np.ones(g.shape[0], dtype=bool)
    for k in range(1, g.shape[-1] + 1):
        ok &= np.linalg.det(g[:, :k, :k]) > 0
    return ok


def validate_spec(s: ManifoldSpec, n_probe: int = 64, seed: int = 0) -> ValidationReport:
    """Probe symmetry, positive definiteness and domain guards at seeded points."""
    missing = [k for k, v in s.constants.items() if v is None]
    if missing:
        raise UnboundSymbol(missing[0])
    symmetric = all(s.metric[i][j] is s.metric[j][i] for i in range(s.dim) for j in range(s.dim))
    pts = probe_points(s, n_probe, seed)
    g, bad = metric_values(s, pts, n_probe)
    with np.errstate(all="ignore"):
        ok = ~bad & np.all(np.isfinite(g), axis=(1, 2))
        ok[ok] &= positive_definite(g[ok])
    rejected = int(n_probe - ok.sum())
    if rejected > n_probe / 2:
        raise NotPositiveDefinite(f"{rejected} of {n_probe} probe points rejected for {s.name}")
    return ValidationReport(n_probe, rejected, symmetric)
