"""Immutable, hash-consed symbolic scalar expressions.

Every node is interned on construction, so structurally identical
expressions are the same Python object and ``a is b`` is the equality test.
Construction applies a light canonical form (flattening, numeric folding,
like-term collection, power merging); ``expand`` goes further and
distributes products over sums.  Derivatives are memoised per node.

Node kinds: ``Num`` (exact rational), ``Sym`` (coordinate or named
constant), ``Add``, ``Mul``, ``Pow``, ``Func`` (exp, ln, sin, cos, tan,
sinh, cosh, tanh; sqrt is stored as a power 1/2) and ``Slot``, a numeric
function of one coordinate bound at evaluation time (used for metrics
assembled from ODE trajectories).
"""

from __future__ import annotations

import hashlib
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Union

__all__ = [
    "Expr", "Num", "Sym", "Add", "Mul", "Pow", "Func", "Slot",
    "ZERO", "ONE", "HALF", "as_expr", "num", "sym", "symbols", "slot",
    "add", "mul", "power", "func", "exp", "ln", "sin", "cos", "tan",
    "sinh", "cosh", "tanh", "sqrt", "differentiate", "subs", "expand",
    "additive_terms", "free_symbols", "slot_names", "to_text", "FUNCTIONS",
    "postorder",
]

FUNCTIONS = ("exp", "ln", "sin", "cos", "tan", "sinh", "cosh", "tanh")

Scalar = Union[int, float, Fraction]
ExprLike = Union["Expr", int, float, Fraction]

_TABLE: dict[tuple, "Expr"] = {}


class Expr:
    """Base node.  Do not instantiate directly; use the factory functions."""

    __slots__ = ("payload", "args", "digest", "free", "order_key", "_dcache", "_expanded")
    rank = 9

    def __setattr__(self, name, value):
        raise AttributeError("Expr nodes are immutable")

    # arithmetic sugar -------------------------------------------------
    def __add__(self, other: ExprLike) -> Expr:
        return add(self, other)

    def __radd__(self, other: ExprLike) -> Expr:
        return add(other, self)

    def __sub__(self, other: ExprLike) -> Expr:
        return add(self, mul(-1, other))

    def __rsub__(self, other: ExprLike) -> Expr:
        return add(other, mul(-1, self))

    def __mul__(self, other: ExprLike) -> Expr:
        return mul(self, other)

    def __rmul__(self, other: ExprLike) -> Expr:
        return mul(other, self)

    def __truediv__(self, other: ExprLike) -> Expr:
        return mul(self, power(other, -1))

    def __rtruediv__(self, other: ExprLike) -> Expr:
        return mul(other, power(self, -1))

    def __pow__(self, other: ExprLike) -> Expr:
        return power(self, other)

    def __rpow__(self, other: ExprLike) -> Expr:
        return power(other, self)

    def __neg__(self) -> Expr:
        return mul(-1, self)

    def __pos__(self) -> Expr:
        return self

    def __str__(self) -> str:
        return to_text(self)

    def __repr__(self) -> str:
        return f"Expr({to_text(self)!r})"

    def __reduce__(self):
        # pickling rebuilds through the canonical constructors
        return (_rebuild, (type(self).__name__, self.payload, self.args))

    def diff(self, var: str) -> Expr:
        return differentiate(self, var)

    @property
    def is_number(self) -> bool:
        return isinstance(self, Num)


class Num(Expr):
    __slots__ = ()
    rank = 0

    @property
    def value(self) -> Fraction:
        return self.payload


class Sym(Expr):
    __slots__ = ()
    rank = 1

    @property
    def name(self) -> str:
        return self.payload


class Slot(Expr):
    """order-th derivative of a numerically supplied function of one coordinate."""

    __slots__ = ()
    rank = 2

    @property
    def name(self) -> str:
        return self.payload[0]

    @property
    def coord(self) -> str:
        return self.payload[1]

    @property
    def deriv(self) -> int:
        return self.payload[2]


class Func(Expr):
    __slots__ = ()
    rank = 3

    @property
    def name(self) -> str:
        return self.payload

    @property
    def arg(self) -> Expr:
        return self.args[0]


class Pow(Expr):
    __slots__ = ()
    rank = 4

    @property
    def base(self) -> Expr:
        return self.args[0]

    @property
    def exponent(self) -> Expr:
        return self.args[1]


class Mul(Expr):
    __slots__ = ()
    rank = 5


class Add(Expr):
    __slots__ = ()
    rank = 6


_CLASSES = {c.__name__: c for c in (Num, Sym, Slot, Func, Pow, Mul, Add)}


def _rebuild(clsname, payload, args):
    if clsname == "Num":
        return num(payload)
    if clsname == "Sym":
        return sym(payload)
    if clsname == "Slot":
        return slot(*payload)
    if clsname == "Func":
        return func(payload, args[0])
    if clsname == "Pow":
        return power(*args)
    if clsname == "Mul":
        return mul(*args)
    return add(*args)


def _intern(cls, payload, args: tuple = ()) -> Expr:
    key = (cls, payload, args)
    node = _TABLE.get(key)
    if node is not None:
        return node
    node = object.__new__(cls)
    h = hashlib.blake2b(digest_size=8)
    h.update(cls.__name__.encode())
    h.update(repr(payload).encode())
    free: set[str] = set()
    for a in args:
        h.update(a.digest)
        free |= a.free
    if cls is Sym:
        free.add(payload)
    elif cls is Slot:
        free.add(payload[1])
    label = ""
    if cls is Sym:
        label = payload
    elif cls is Slot:
        label = f"{payload[0]}{payload[1]}{payload[2]:03d}"
    elif cls is Func:
        label = payload
    digest = h.digest()
    setter = object.__setattr__
    setter(node, "payload", payload)
    setter(node, "args", args)
    setter(node, "digest", digest)
    setter(node, "free", frozenset(free))
    if cls is Num:
        order = (0, "", float(payload), digest)
    else:
        order = (cls.rank, label, 0.0, digest)
    setter(node, "order_key", order)
    setter(node, "_dcache", {})
    setter(node, "_expanded", None)
    _TABLE[key] = node
    return node


# ---------------------------------------------------------------- atoms

def _to_fraction(v: Scalar) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, bool):
        return Fraction(int(v))
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        if v != v or v in (float("inf"), float("-inf")):
            raise ValueError(f"cannot represent {v} exactly")
        return Fraction(repr(v))
    raise TypeError(f"not a number: {v!r}")


def num(v: Scalar) -> Num:
    return _intern(Num, _to_fraction(v))


def sym(name: str) -> Sym:
    return _intern(Sym, name)


def symbols(names: str) -> tuple[Sym, ...]:
    return tuple(sym(n) for n in names.replace(",", " ").split())


def slot(name: str, coord: str, order: int = 0) -> Slot:
    return _intern(Slot, (name, coord, int(order)))


def as_expr(v: ExprLike) -> Expr:
    if isinstance(v, Expr):
        return v
    return num(v)


ZERO = num(0)
ONE = num(1)
HALF = num(Fraction(1, 2))
MINUS_ONE = num(-1)


# ---------------------------------------------------------------- sums

def _split_coeff(e: Expr) -> tuple[Fraction, Expr]:
    if isinstance(e, Mul) and isinstance(e.args[0], Num):
        rest = e.args[1:]
        if len(rest) == 1:
            return e.args[0].payload, rest[0]
        return e.args[0].payload, _intern(Mul, None, rest)
    return Fraction(1), e


def _with_coeff(c: Fraction, rest: Expr) -> Expr:
    if c == 1:
        return rest
    if isinstance(rest, Mul):
        return _intern(Mul, None, (num(c),) + rest.args)
    return _intern(Mul, None, (num(c), rest))


def _sorted(items: Iterable[Expr]) -> tuple[Expr, ...]:
    return tuple(sorted(items, key=lambda e: e.order_key))


def add(*args: ExprLike) -> Expr:
    const = Fraction(0)
    coeffs: dict[Expr, Fraction] = {}
    stack = list(args)
    while stack:
        a = stack.pop()
        if not isinstance(a, Expr):
            const += _to_fraction(a)
            continue
        if isinstance(a, Num):
            const += a.payload
        elif isinstance(a, Add):
            stack.extend(a.args)
        else:
            c, rest = _split_coeff(a)
            coeffs[rest] = coeffs.get(rest, Fraction(0)) + c
    terms = [_with_coeff(c, r) for r, c in coeffs.items() if c != 0]
    if const != 0:
        terms.append(num(const))
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    return _intern(Add, None, _sorted(terms))


# ---------------------------------------------------------------- products

def mul(*args: ExprLike) -> Expr:
    return _mul(args, 0)


def _mul(args, depth: int) -> Expr:
    coef = Fraction(1)
    bases: dict[Expr, list[Expr]] = {}
    exps: list[Expr] = []
    stack = list(args)
    while stack:
        a = stack.pop()
        if not isinstance(a, Expr):
            coef *= _to_fraction(a)
            continue
        if isinstance(a, Num):
            coef *= a.payload
        elif isinstance(a, Mul):
            stack.extend(a.args)
        elif isinstance(a, Func) and a.payload == "exp":
            exps.append(a.args[0])
        elif isinstance(a, Pow):
            bases.setdefault(a.args[0], []).append(a)
        else:
            bases.setdefault(a, []).append(a)
    if coef == 0:
        return ZERO
    factors: list[Expr] = []
    redo = False
    for b, items in bases.items():
        if len(items) == 1:
            p = items[0]
        else:
            e = add(*[(it.args[1] if isinstance(it, Pow) else ONE) for it in items])
            p = power(b, e)
        if isinstance(p, Num):
            coef *= p.payload
            continue
        if isinstance(p, Mul) or (isinstance(p, Func) and p.payload == "exp"):
            redo = True
        factors.append(p)
    if exps:
        ex = func("exp", add(*exps)) if len(exps) > 1 else func("exp", exps[0])
        if isinstance(ex, Num):
            coef *= ex.payload
        else:
            if not (isinstance(ex, Func) and ex.payload == "exp"):
                redo = True
            factors.append(ex)
    if coef == 0:
        return ZERO
    if redo and depth < 4:
        return _mul([num(coef)] + factors, depth + 1)
    if not factors:
        return num(coef)
    if coef == 1 and len(factors) == 1:
        return factors[0]
    fs = _sorted(factors)
    if coef != 1:
        fs = (num(coef),) + fs
    return _intern(Mul, None, fs)


def _iroot(n: int, q: int) -> int | None:
    if n < 0:
        return None
    if n in (0, 1):
        return n
    r = round(n ** (1.0 / q))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand ** q == n:
            return cand
    return None


def _num_power(a: Fraction, b: Fraction) -> Fraction | None:
    if b.denominator == 1:
        if a == 0 and b < 0:
            return None
        if abs(b) > 4096:
            return None
        return a ** int(b)
    if a <= 0:
        return None
    p = _iroot(a.numerator, b.denominator)
    q = _iroot(a.denominator, b.denominator)
    if p is None or q is None:
        return None
    return Fraction(p, q) ** b.numerator


def power(base: ExprLike, exponent: ExprLike) -> Expr:
    base = as_expr(base)
    exponent = as_expr(exponent)
    if exponent is ZERO:
        return ONE
    if exponent is ONE:
        return base
    if base is ONE:
        return ONE
    if isinstance(exponent, Num):
        e = exponent.payload
        if isinstance(base, Num):
            folded = _num_power(base.payload, e)
            if folded is not None:
                return num(folded)
            return _intern(Pow, None, (base, exponent))
        if base is ZERO and e > 0:
            return ZERO
        if isinstance(base, Pow) and e.denominator == 1:
            return power(base.args[0], mul(base.args[1], exponent))
        if isinstance(base, Mul) and e.denominator == 1:
            return mul(*[power(f, exponent) for f in base.args])
        if isinstance(base, Func) and base.payload == "exp":
            return func("exp", mul(exponent, base.args[0]))
    return _intern(Pow, None, (base, exponent))


# ---------------------------------------------------------------- functions

_ZERO_VALUES = {"exp": ONE, "ln": None, "sin": ZERO, "cos": ONE, "tan": ZERO,
                "sinh": ZERO, "cosh": ONE, "tanh": ZERO}


def _pull_logs(arg: Expr) -> tuple[list[Expr], list[Expr]]:
    """Split exp's argument into c*ln(u) pieces (returned as u^c) and the rest."""
    pulled, rest = [], []
    for t in additive_terms(arg):
        c, r = _split_coeff(t)
        if isinstance(r, Func) and r.payload == "ln":
            pulled.append(power(r.args[0], num(c)))
        else:
            rest.append(t)
    return pulled, rest


def func(name: str, arg: ExprLike) -> Expr:
    arg = as_expr(arg)
    if name == "sqrt":
        return power(arg, HALF)
    if name not in _ZERO_VALUES:
        raise ValueError(f"unknown function {name!r}")
    if arg is ZERO and _ZERO_VALUES[name] is not None:
        return _ZERO_VALUES[name]
    if name == "ln":
        if arg is ONE:
            return ZERO
        if isinstance(arg, Func) and arg.payload == "exp":
            return arg.args[0]
    if name == "exp":
        if isinstance(arg, Func) and arg.payload == "ln":
            return arg.args[0]
        pulled, rest = _pull_logs(arg)
        if pulled:
            return mul(*pulled, func("exp", add(*rest)))
    return _intern(Func, name, (arg,))


def exp(a: ExprLike) -> Expr:
    return func("exp", a)


def ln(a: ExprLike) -> Expr:
    return func("ln", a)


def sin(a: ExprLike) -> Expr:
    return func("sin", a)


def cos(a: ExprLike) -> Expr:
    return func("cos", a)


def tan(a: ExprLike) -> Expr:
    return func("tan", a)


def sinh(a: ExprLike) -> Expr:
    return func("sinh", a)


def cosh(a: ExprLike) -> Expr:
    return func("cosh", a)


def tanh(a: ExprLike) -> Expr:
    return func("tanh", a)


def sqrt(a: ExprLike) -> Expr:
    return power(a, HALF)


# ---------------------------------------------------------------- traversal

def postorder(roots: Iterable[Expr], stop: Callable[[Expr], bool] | None = None) -> Iterator[Expr]:
    """Yield every distinct node reachable from ``roots``, children first.

    Iterative, so arbitrarily deep expressions are safe.  Nodes for which
    ``stop`` returns true are neither yielded nor descended into.
    """
    seen: set[int] = set()
    stack: list[tuple[Expr, bool]] = [(r, False) for r in reversed(list(roots))]
    while stack:
        node, ready = stack.pop()
        if ready:
            yield node
            continue
        if id(node) in seen or (stop is not None and stop(node)):
            continue
        seen.add(id(node))
        stack.append((node, True))
        for c in reversed(node.args):
            if id(c) not in seen:
                stack.append((c, False))


def additive_terms(e: Expr) -> tuple[Expr, ...]:
    return e.args if isinstance(e, Add) else (e,)


def free_symbols(e: Expr) -> frozenset[str]:
    """Names of coordinates and constants appearing in ``e`` (slot coordinates included)."""
    return e.free


def slot_names(e: Expr) -> frozenset[str]:
    return frozenset(n.payload[0] for n in postorder([e]) if isinstance(n, Slot))


# ---------------------------------------------------------------- calculus

def _derive_node(e: Expr, var: str, d: Callable[[Expr], Expr]) -> Expr:
    if isinstance(e, Sym):
        return ONE if e.payload == var else ZERO
    if isinstance(e, Slot):
        name, coord, k = e.payload
        return slot(name, coord, k + 1) if coord == var else ZERO
    if isinstance(e, Add):
        return add(*[d(a) for a in e.args])
    if isinstance(e, Mul):
        fs = e.args
        parts = []
        for i, f in enumerate(fs):
            df = d(f)
            if df is ZERO:
                continue
            parts.append(mul(df, *fs[:i], *fs[i + 1:]))
        return add(*parts)
    if isinstance(e, Pow):
        b, x = e.args
        db = d(b)
        if var not in x.free:
            if db is ZERO:
                return ZERO
            return mul(x, power(b, add(x, -1)), db)
        return mul(e, add(mul(d(x), ln(b)), mul(x, db, power(b, -1))))
    if isinstance(e, Func):
        a = e.args[0]
        da = d(a)
        if da is ZERO:
            return ZERO
        name = e.payload
        if name == "exp":
            outer = e
        elif name == "ln":
            outer = power(a, -1)
        elif name == "sin":
            outer = cos(a)
        elif name == "cos":
            outer = mul(-1, sin(a))
        elif name == "tan":
            outer = add(1, power(e, 2))
        elif name == "sinh":
            outer = cosh(a)
        elif name == "cosh":
            outer = sinh(a)
        else:  # tanh
            outer = add(1, mul(-1, power(e, 2)))
        return mul(outer, da)
    return ZERO


def differentiate(e: ExprLike, var: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to the symbol ``var``."""
    e = as_expr(e)
    if var not in e.free:
        return ZERO

    def d(n: Expr) -> Expr:
        if var not in n.free:
            return ZERO
        return n._dcache[var]

    def done(n: Expr) -> bool:
        return var not in n.free or var in n._dcache

    for node in postorder([e], stop=done):
        node._dcache[var] = _derive_node(node, var, d)
    return e._dcache[var]


def _rebuild_with(e: Expr, args: tuple[Expr, ...]) -> Expr:
    if isinstance(e, Add):
        return add(*args)
    if isinstance(e, Mul):
        return mul(*args)
    if isinstance(e, Pow):
        return power(*args)
    if isinstance(e, Func):
        return func(e.payload, args[0])
    return e


def subs(e: ExprLike, mapping: Mapping[str, ExprLike]) -> Expr:
    """Replace symbols by expressions (simultaneously)."""
    e = as_expr(e)
    repl = {k: as_expr(v) for k, v in mapping.items()}
    keys = frozenset(repl)
    out: dict[int, Expr] = {}

    def untouched(n: Expr) -> bool:
        return not (n.free & keys)

    for node in postorder([e], stop=untouched):
        if isinstance(node, Sym):
            out[id(node)] = repl.get(node.payload, node)
        elif node.args:
            new_args = tuple(out.get(id(a), a) for a in node.args)
            out[id(node)] = _rebuild_with(node, new_args)
        else:
            out[id(node)] = node
    return out.get(id(e), e)


_EXPAND_LIMIT = 4000


def _distribute(factors: list[Expr]) -> Expr | None:
    acc: list[Expr] = [ONE]
    for f in factors:
        ts = additive_terms(f)
        if len(acc) * len(ts) > _EXPAND_LIMIT:
            return None
        acc = [mul(a, t) for a in acc for t in ts]
    return add(*acc)


def _expand_node(e: Expr, ex: Callable[[Expr], Expr]) -> Expr:
    if isinstance(e, Add):
        return add(*[ex(a) for a in e.args])
    if isinstance(e, Mul):
        fs = [ex(a) for a in e.args]
        out = _distribute(fs)
        return out if out is not None else mul(*fs)
    if isinstance(e, Pow):
        b, x = ex(e.args[0]), ex(e.args[1])
        if isinstance(x, Num) and x.payload.denominator == 1 and 1 < x.payload <= 12 and isinstance(b, Add):
            out = _distribute([b] * int(x.payload))
            if out is not None:
                return out
        return power(b, x)
    if isinstance(e, Func):
        return func(e.payload, ex(e.args[0]))
    return e


def expand(e: ExprLike) -> Expr:
    """Distribute products over sums and re-collect like terms."""
    e = as_expr(e)

    def ex(n: Expr) -> Expr:
        return n._expanded if n._expanded is not None else n

    for node in postorder([e], stop=lambda n: n._expanded is not None):
        object.__setattr__(node, "_expanded", _expand_node(node, ex))
    return e._expanded


# ---------------------------------------------------------------- printing

_P_ADD, _P_NEG, _P_MUL, _P_POW, _P_ATOM = 1, 2, 3, 4, 5


def _num_text(v: Fraction) -> tuple[str, int]:
    if v.denominator == 1:
        return str(v.numerator), (_P_ATOM if v >= 0 else _P_NEG)
    s = f"{abs(v.numerator)}/{v.denominator}"
    return ("-" + s, _P_NEG) if v < 0 else (s, _P_MUL)


def _paren(t: tuple[str, int], need: int) -> str:
    return f"({t[0]})" if t[1] < need else t[0]


def _is_negative(e: Expr) -> bool:
    if isinstance(e, Num):
        return e.payload < 0
    return isinstance(e, Mul) and isinstance(e.args[0], Num) and e.args[0].payload < 0


def _fmt(e: Expr) -> tuple[str, int]:
    if isinstance(e, Num):
        return _num_text(e.payload)
    if isinstance(e, Sym):
        return e.payload, _P_ATOM
    if isinstance(e, Slot):
        name, coord, k = e.payload
        return f"{name}{chr(39) * k}({coord})", _P_ATOM
    if isinstance(e, Func):
        return f"{e.payload}({_fmt(e.args[0])[0]})", _P_ATOM
    if isinstance(e, Pow):
        b, x = e.args
        if isinstance(x, Num) and x.payload < 0:
            return _fmt_product(Fraction(1), [e])
        if x is HALF:
            return f"sqrt({_fmt(b)[0]})", _P_ATOM
        bs = _paren(_fmt(b), _P_ATOM)
        if isinstance(x, Num) and x.payload.denominator == 1:
            xs = str(x.payload.numerator)
        else:
            xs = f"({_fmt(x)[0]})"
        return f"{bs}^{xs}", _P_POW
    if isinstance(e, Mul):
        if isinstance(e.args[0], Num):
            return _fmt_product(e.args[0].payload, list(e.args[1:]))
        return _fmt_product(Fraction(1), list(e.args))
    if isinstance(e, Add):
        terms = [t for t in e.args if not isinstance(t, Num)] + [t for t in e.args if isinstance(t, Num)]
        out = []
        for i, t in enumerate(terms):
            if i and _is_negative(t):
                out.append(" - " + _paren(_fmt(mul(-1, t)), _P_NEG))
            elif i:
                out.append(" + " + _paren(_fmt(t), _P_NEG))
            else:
                out.append(_fmt(t)[0])
        return "".join(out), _P_ADD
    raise TypeError(type(e))


def _fmt_product(coef: Fraction, factors: list[Expr]) -> tuple[str, int]:
    numer, denom = [], []
    for f in factors:
        if isinstance(f, Pow) and isinstance(f.args[1], Num) and f.args[1].payload < 0:
            denom.append(power(f.args[0], num(-f.args[1].payload)))
        else:
            numer.append(f)
    a = abs(coef)
    ns = [_paren(_fmt(f), _P_POW) for f in numer]
    if a.numerator != 1 or not ns:
        ns.insert(0, str(a.numerator))
    ds = [_paren(_fmt(f), _P_POW) for f in denom]
    if a.denominator != 1:
        ds.insert(0, str(a.denominator))
    text = "*".join(ns)
    if ds:
        text += "/" + (ds[0] if len(ds) == 1 else "(" + "*".join(ds) + ")")
    if coef < 0:
        return "-" + text, _P_NEG
    return text, _P_MUL


def to_text(e: ExprLike) -> str:
    """Render in the infix syntax accepted by the .rfm expression parser."""
    return _fmt(as_expr(e))[0]
