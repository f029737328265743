"""Vectorised evaluation of expression DAGs with domain guards, and zero testing."""

from __future__ import annotations

from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DomainViolation, InconclusiveZeroTest, UnboundSymbol
from .expr import (
    ONE, ZERO, Add, Expr, Func, Mul, Num, Pow, Slot, Sym, add, additive_terms,
    as_expr, expand, mul, num, postorder, power,
)

__all__ = [
    "EPS_DEN", "Program", "evaluate", "evaluate_many", "ZeroVerdict",
    "together", "normalize_and_is_zero", "is_zero", "SlotFunction",
]

EPS_DEN = 1e-10

# (name, coordinate values, derivative order) -> values
SlotFunction = Callable[[np.ndarray, int], np.ndarray]

_UFUNCS = {
    "exp": np.exp, "ln": np.log, "sin": np.sin, "cos": np.cos, "tan": np.tan,
    "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
}


class Program:
    """A compiled batch evaluator for a fixed list of root expressions.

    Nodes shared between roots are evaluated once.  ``run`` returns the root
    values together with a boolean mask of points at which some guard fired
    (non-positive logarithm or fractional-power base, near-zero denominator,
    tan at a pole, or a non-finite result).
    """

    def __init__(self, roots: Sequence[Expr]):
        self.roots = [as_expr(r) for r in roots]
        self.nodes = list(postorder(self.roots))
        self._index = {id(n): i for i, n in enumerate(self.nodes)}
        self.symbols = sorted({n.payload for n in self.nodes if isinstance(n, Sym)})
        self.slots = sorted({n.payload[0] for n in self.nodes if isinstance(n, Slot)})

    def run(self, env: Mapping[str, object], slots: Mapping[str, SlotFunction] | None = None,
            size: int | None = None) -> tuple[list[np.ndarray], np.ndarray]:
        if size is None:
            size = max((np.size(v) for v in env.values()), default=1)
        slots = slots or {}
        vals: list[np.ndarray | None] = [None] * len(self.nodes)
        bad = np.zeros(size, dtype=bool)
        idx = self._index
        with np.errstate(all="ignore"):
            for i, node in enumerate(self.nodes):
                if isinstance(node, Num):
                    v = np.full(size, float(node.payload))
                elif isinstance(node, Sym):
                    if node.payload not in env:
                        raise UnboundSymbol(node.payload)
                    v = np.broadcast_to(np.asarray(env[node.payload], dtype=float), (size,))
                elif isinstance(node, Slot):
                    name, coord, order = node.payload
                    if name not in slots:
                        raise UnboundSymbol(name)
                    if coord not in env:
                        raise UnboundSymbol(coord)
                    xs = np.broadcast_to(np.asarray(env[coord], dtype=float), (size,))
                    v = np.asarray(slots[name](xs, order), dtype=float)
                elif isinstance(node, Add):
                    v = vals[idx[id(node.args[0])]].copy()
                    for a in node.args[1:]:
                        v += vals[idx[id(a)]]
                elif isinstance(node, Mul):
                    v = vals[idx[id(node.args[0])]].copy()
                    for a in node.args[1:]:
                        v *= vals[idx[id(a)]]
                elif isinstance(node, Pow):
                    b = vals[idx[id(node.args[0])]]
                    x = node.args[1]
                    if isinstance(x, Num) and x.payload.denominator == 1:
                        k = int(x.payload)
                        if k < 0:
                            bad |= np.abs(b) < EPS_DEN
                        if k == 2:
                            v = b * b
                        elif k == -1:
                            v = 1.0 / b
                        else:
                            v = np.power(b, float(k))
                    else:
                        bad |= ~(b > 0)
                        xv = float(x.payload) if isinstance(x, Num) else vals[idx[id(x)]]
                        v = np.power(np.where(b > 0, b, 1.0), xv)
                        if isinstance(x, Num) and x.payload < 0:
                            bad |= b < EPS_DEN
                elif isinstance(node, Func):
                    a = vals[idx[id(node.args[0])]]
                    name = node.payload
                    if name == "ln":
                        bad |= ~(a > 0)
                        v = np.log(np.where(a > 0, a, 1.0))
                    elif name == "tan":
                        bad |= np.abs(np.cos(a)) < EPS_DEN
                        v = np.tan(a)
                    else:
                        v = _UFUNCS[name](a)
                else:  # pragma: no cover
                    raise TypeError(type(node))
                vals[i] = v
            out = [np.array(vals[idx[id(r)]], dtype=float) for r in self.roots]
        for o in out:
            bad |= ~np.isfinite(o)
        return out, bad


def _merge(*mappings: Mapping[str, float] | None) -> dict[str, float]:
    env: dict[str, float] = {}
    for m in mappings:
        if m:
            env.update(m)
    return env


def evaluate(e: Expr, *bindings: Mapping[str, float] | None,
             slots: Mapping[str, SlotFunction] | None = None) -> float:
    """Evaluate ``e`` at a single point.

    ``bindings`` are merged left to right (typically constants, then the
    coordinates of the point).  Raises DomainViolation when a guard fires.
    """
    env = _merge(*bindings)
    (v,), bad = Program([e]).run(env, slots=slots, size=1)
    if bad[0]:
        raise DomainViolation(f"{e} leaves its domain at {env}")
    return float(v[0])


def evaluate_many(exprs: Sequence[Expr], env: Mapping[str, object],
                  slots: Mapping[str, SlotFunction] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate several expressions over a batch; returns (values[k, N], bad[N])."""
    vals, bad = Program(exprs).run(env, slots=slots)
    return np.vstack(vals) if vals else np.zeros((0, len(bad))), bad


class ZeroVerdict(str, Enum):
    SYMBOLIC = "symbolically-zero"
    NUMERIC = "numerically-zero"
    NONZERO = "nonzero"


def _split_fraction(t: Expr) -> tuple[list[Expr], dict[Expr, Expr]]:
    numer: list[Expr] = []
    denom: dict[Expr, Expr] = {}
    for f in (t.args if isinstance(t, Mul) else (t,)):
        if isinstance(f, Pow) and isinstance(f.args[1], Num) and f.args[1].payload < 0:
            denom[f.args[0]] = num(-f.args[1].payload)
        else:
            numer.append(f)
    return numer, denom


def together(e: Expr) -> tuple[Expr, Expr]:
    """Bring the additive terms of ``e`` over a common denominator.

    Returns (numerator, denominator) with the numerator expanded.  The
    denominator is the least common multiple over the syntactic
    denominator factors of the terms.
    """
    e = expand(e)
    parts = [_split_fraction(t) for t in additive_terms(e)]
    lcm: dict[Expr, Expr] = {}
    for _, den in parts:
        for b, k in den.items():
            if b not in lcm or (k.payload > lcm[b].payload):
                lcm[b] = k
    if not lcm:
        return e, ONE
    pieces = []
    for numer, den in parts:
        extra = []
        for b, k in lcm.items():
            left = k.payload - (den[b].payload if b in den else 0)
            if left:
                extra.append(power(b, num(left)))
        pieces.append(mul(*numer, *extra))
    numerator = expand(add(*pieces))
    denominator = mul(*[power(b, k) for b, k in lcm.items()])
    return numerator, denominator


def normalize_and_is_zero(
    e: Expr,
    domain: Mapping[str, tuple[float, float]] | None = None,
    bindings: Mapping[str, float] | None = None,
    k: int = 25,
    seed: int = 0,
    rel_tol: float = 1e-10,
    slots: Mapping[str, SlotFunction] | None = None,
) -> tuple[Expr, ZeroVerdict]:
    """Normalise ``e`` and decide whether it vanishes identically.

    Symbols not fixed by ``bindings`` are sampled uniformly from ``domain``
    (default [-1, 1]).  Up to 10*k candidates are drawn; points where a
    guard fires are discarded, and fewer than k survivors raise
    InconclusiveZeroTest.  A point passes when
    ``|sum| <= rel_tol * (1 + sum |term|)`` over the additive terms.
    """
    e = as_expr(e)
    numerator, denominator = together(e)
    normal = numerator if denominator is ONE else mul(numerator, power(denominator, -1))
    if numerator is ZERO:
        return ZERO, ZeroVerdict.SYMBOLIC
    bindings = dict(bindings or {})
    domain = dict(domain or {})
    terms = list(additive_terms(expand(e)))
    prog = Program(terms)
    free = [s for s in prog.symbols if s not in bindings]
    rng = np.random.default_rng(seed)
    total = 10 * k
    env: dict[str, object] = dict(bindings)
    for s in free:
        lo, hi = domain.get(s, (-1.0, 1.0))
        env[s] = rng.uniform(lo, hi, total)
    vals, bad = prog.run(env, slots=slots, size=total)
    good = np.flatnonzero(~bad)[:k]
    if len(good) < k:
        raise InconclusiveZeroTest(f"only {len(good)} of {k} admissible sample points")
    stack = np.vstack(vals)[:, good]
    resid = np.abs(stack.sum(axis=0))
    scale = 1.0 + np.abs(stack).sum(axis=0)
    if np.all(resid <= rel_tol * scale):
        return normal, ZeroVerdict.NUMERIC
    return normal, ZeroVerdict.NONZERO


def is_zero(e: Expr, **kwargs) -> bool:
    return normalize_and_is_zero(e, **kwargs)[1] is not ZeroVerdict.NONZERO
