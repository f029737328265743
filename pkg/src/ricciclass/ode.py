"""ODE systems in solved form, numeric metrics built from their trajectories, and a
finite-difference curvature oracle.

A RifOdeSystem is a set of blocks.  Each block has one independent
coordinate and a few unknown functions, each with its highest derivative
given explicitly.  State symbols are the function name for the value and
``name_k`` for the k-th derivative.  Integration is classical RK4 at a fixed
step, run twice (h and h/2) so every trajectory carries an error estimate.

The integrated functions enter metrics as slots.  A slot's derivatives below
the ODE order come from a Hermite interpolant through the node values and
derivatives; higher derivatives are evaluated from the ODE itself, by total
differentiation of the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.interpolate import BPoly

from .conditions import ConditionReport
from .dsl import ManifoldSpec, metric_values, parse_expression
from .errors import BoundaryTooClose, GuardViolationAtStart, StepTooLarge
from .expr import Expr, ONE, add, additive_terms, as_expr, differentiate, mul, slot, slot_names, subs, sym
from .numeric import Program
from .sampling import GeometrySamples, SamplingConfig, sample_points
from .tensors import ricci_sign

__all__ = [
    "OdeBlock", "RifOdeSystem", "NumericMetric", "integrate_rif_system", "builtin_systems",
    "get_system", "FdCurvature", "fd_curvature_oracle", "fd_samples", "verify_numeric_metric",
    "NUMERIC_TOL", "STEP_TOL", "parse_init",
]

STEP_TOL = 1e-6          # largest accepted half-step estimate
NUMERIC_TOL = 1e-4       # default residual tolerance of the finite-difference pipeline
NUMERIC_GUARD = 1e-7     # Ricci / scalar guards, above finite-difference noise
INNER_H = 1e-3           # metric differencing step used by verify_numeric_metric
OUTER_FACTOR = 10.0      # step for differencing curvature, in units of the inner step


def _state_names(name: str, order: int) -> list[str]:
    return [name] + [f"{name}_{k}" for k in range(1, order)]


@dataclass(frozen=True)
class OdeBlock:
    """Unknown functions of one coordinate with their highest derivatives solved for."""

    coord: str
    orders: tuple[tuple[str, int], ...]
    rhs: Mapping[str, Expr]

    @property
    def state(self) -> list[str]:
        out = []
        for name, k in self.orders:
            out.extend(_state_names(name, k))
        return out

    @property
    def functions(self) -> list[str]:
        return [name for name, _ in self.orders]


@dataclass(frozen=True)
class RifOdeSystem:
    """Solved-form ODE blocks plus the metric assembled from their solutions.

    ``metric`` is the diagonal of the metric, written with slots for the
    integrated functions.  Symbols of other blocks inside a block's
    right-hand side are bound to their initial values (used where a block
    depends on another only through initial data).
    """

    id: str
    summary: str
    blocks: tuple[OdeBlock, ...]
    constants: Mapping[str, Fraction]
    metric: tuple[Expr, ...]
    coords: tuple[str, ...]
    domain: Mapping[str, tuple[float, float]]
    init: Mapping[str, float]
    span: tuple[float, float]
    step: float
    lam: Expr | None = None
    experimental: bool = False
    first_integral: tuple[Expr, Expr] | None = None    # (I with symbol C, C as a function of the state)
    closed_forms: Mapping[str, Expr] = field(default_factory=dict)
    expected: Mapping[str, str] = field(default_factory=dict)
    coefficients: Mapping[str, Expr] = field(default_factory=dict)   # printed closed forms on the state

    @property
    def state(self) -> list[str]:
        return [s for b in self.blocks for s in b.state]

    @property
    def metric_functions(self) -> frozenset[str]:
        """Integrated functions that appear in the metric (these must stay positive)."""
        out = set()
        for e in self.metric:
            out |= slot_names(e)
        return frozenset(out)

    def block_of(self, function: str) -> OdeBlock:
        for b in self.blocks:
            if function in b.functions:
                return b
        raise KeyError(function)


# ------------------------------------------------------------------ integration

class _Rhs:
    """Vector field of one block as a numpy callable."""

    def __init__(self, block: OdeBlock, env: Mapping[str, float]):
        self.block = block
        self.names = block.state
        self.env = dict(env)
        self.program = Program([block.rhs[name] for name, _ in block.orders])
        self.slots = []
        pos = 0
        for name, k in block.orders:
            self.slots.append((pos, k))
            pos += k

    def __call__(self, x: float, y: np.ndarray) -> tuple[np.ndarray, bool]:
        env = dict(self.env)
        env[self.block.coord] = x
        env.update(zip(self.names, y))
        vals, bad = self.program.run(env, size=1)
        dy = np.empty_like(y)
        for (pos, k), v in zip(self.slots, vals):
            dy[pos:pos + k - 1] = y[pos + 1:pos + k]
            dy[pos + k - 1] = v[0]
        return dy, bool(bad[0]) or not np.all(np.isfinite(dy))


def _guard_ok(block: OdeBlock, y: np.ndarray, positive: frozenset[str]) -> bool:
    """Finite state, and every metric factor strictly positive."""
    if not np.all(np.isfinite(y)):
        return False
    pos = 0
    for name, k in block.orders:
        if name in positive and not y[pos] > 0:
            return False
        pos += k
    return True


def _rk4(f: _Rhs, block: OdeBlock, y0: np.ndarray, a: float, h: float, steps: int,
         positive: frozenset[str]):
    """Fixed-step RK4; stops early at the first node where a guard fails."""
    ys = [y0]
    y = y0
    for i in range(steps):
        x = a + i * h
        k1, b1 = f(x, y)
        k2, b2 = f(x + h / 2, y + h / 2 * k1)
        k3, b3 = f(x + h / 2, y + h / 2 * k2)
        k4, b4 = f(x + h, y + h * k3)
        y_new = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if b1 or b2 or b3 or b4 or not _guard_ok(block, y_new, positive):
            break
        ys.append(y_new)
        y = y_new
    return np.array(ys)


@dataclass
class _BlockSolution:
    block: OdeBlock
    xs: np.ndarray
    ys: np.ndarray             # (nodes, state)
    highest: np.ndarray        # (nodes, functions): highest derivative at nodes
    truncated: bool
    step_estimate: float
    interpolation_error: float = 0.0
    polys: dict[str, BPoly] = field(default_factory=dict)


def _total_derivatives(block: OdeBlock, depth: int) -> dict[str, list[Expr]]:
    """d^j/dx^j of each right-hand side, j = 0..depth, rewritten on the state."""
    out = {}
    chain = {}
    for name, k in block.orders:
        names = _state_names(name, k)
        for j, s in enumerate(names[:-1]):
            chain[s] = sym(names[j + 1])
        chain[names[-1]] = block.rhs[name]
    for name, _ in block.orders:
        seq = [block.rhs[name]]
        for _ in range(depth):
            e = seq[-1]
            terms = [differentiate(e, block.coord)]
            for s, ds in chain.items():
                de = differentiate(e, s)
                if de.is_number and de.payload == 0:
                    continue
                terms.append(mul(de, ds))
            seq.append(add(*terms))
        out[name] = seq
    return out


class NumericMetric:
    """A metric whose integrated functions are bound as slots to dense output."""

    def __init__(self, system: RifOdeSystem, solutions: list[_BlockSolution], env: Mapping[str, float],
                 step: float):
        self.system = system
        self.solutions = solutions
        self.env = dict(env)
        self.step = step
        self._derived = {}
        self._programs: dict[tuple[str, int], Program] = {}

    @property
    def dim(self) -> int:
        return len(self.system.coords)

    @property
    def truncated(self) -> bool:
        return any(s.truncated for s in self.solutions)

    @property
    def step_estimate(self) -> float:
        return max(s.step_estimate for s in self.solutions)

    @property
    def interpolation_error(self) -> float:
        return max(s.interpolation_error for s in self.solutions)

    def span(self, coord: str) -> tuple[float, float]:
        for s in self.solutions:
            if s.block.coord == coord:
                return float(s.xs[0]), float(s.xs[-1])
        return self.system.domain.get(coord, (-1.0, 1.0))

    def _solution(self, function: str) -> _BlockSolution:
        for s in self.solutions:
            if function in s.block.functions:
                return s
        raise KeyError(function)

    def _state_at(self, sol: _BlockSolution, xs: np.ndarray) -> dict[str, np.ndarray]:
        env = {}
        for name, k in sol.block.orders:
            poly = sol.polys[name]
            for j, s in enumerate(_state_names(name, k)):
                env[s] = poly(xs, j) if j else poly(xs)
        return env

    def evaluate(self, function: str, xs: np.ndarray, order: int = 0) -> np.ndarray:
        """Derivative of the given order of an integrated function at ``xs``."""
        sol = self._solution(function)
        k = dict(sol.block.orders)[function]
        xs = np.asarray(xs, dtype=float)
        if order < k:
            return sol.polys[function](xs, order) if order else sol.polys[function](xs)
        depth = order - k
        key = (function, depth)
        if key not in self._programs:
            if sol.block.coord not in self._derived or len(self._derived[sol.block.coord][function]) <= depth:
                self._derived[sol.block.coord] = _total_derivatives(sol.block, max(depth, 3))
            self._programs[key] = Program([self._derived[sol.block.coord][function][depth]])
        env = dict(self.env)
        env.update(self._state_at(sol, xs))
        env[sol.block.coord] = xs
        (v,), _ = self._programs[key].run(env, size=xs.size)
        return v

    def coefficient(self, name: str, xs: np.ndarray) -> np.ndarray:
        """Evaluate one of the system's printed coefficient formulas along the first block."""
        sol = self.solutions[0]
        xs = np.asarray(xs, dtype=float)
        env = {**self.env, **self._state_at(sol, xs), sol.block.coord: xs}
        (v,), _ = Program([self.system.coefficients[name]]).run(env, size=xs.size)
        return v

    def slot_function(self, function: str) -> Callable[[np.ndarray, int], np.ndarray]:
        def fn(xs, order):
            return self.evaluate(function, xs, order)
        fn.__name__ = f"slot_{function}"
        return fn

    @property
    def spec(self) -> ManifoldSpec:
        if not hasattr(self, "_spec"):
            slots = {f: self.slot_function(f) for b in self.system.blocks for f in b.functions}
            n = len(self.system.coords)
            metric = tuple(tuple(self.system.metric[i] if i == j else as_expr(0) for j in range(n))
                           for i in range(n))
            domain = {c: self.span(c) for c in self.system.coords}
            self._spec = ManifoldSpec(
                name=self.system.id.replace("-", "_"), coords=self.system.coords, metric=metric,
                domain=domain, constants=dict(self.system.constants), lam=self.system.lam, slots=slots)
        return self._spec

    def first_integral_drift(self, normalized: bool = True) -> float:
        """Largest |I| along the trajectory, C fixed by the initial state.

        With ``normalized`` each value is divided by 1 + the sum of the
        absolute values of the additive terms of I, like every other residual.
        """
        if self.system.first_integral is None:
            raise ValueError(f"{self.system.id} has no first integral")
        integral, constant = self.system.first_integral
        sol = self.solutions[0]
        env = {**self.env, **dict(zip(sol.block.state, sol.ys.T)), sol.block.coord: sol.xs}
        (c_vals,), _ = Program([constant]).run(env, size=sol.xs.size)
        env["C"] = c_vals[0]
        terms = additive_terms(integral)
        vals, _ = Program(list(terms)).run(env, size=sol.xs.size)
        stack = np.stack(vals)
        drift = np.abs(stack.sum(axis=0))
        if normalized:
            drift = drift / (1.0 + np.abs(stack).sum(axis=0))
        return float(np.max(drift))


def _hermite(xs: np.ndarray, derivs: np.ndarray) -> BPoly:
    return BPoly.from_derivatives(xs, derivs.tolist(), extrapolate=False)


def integrate_rif_system(system: RifOdeSystem, init: Mapping[str, float] | None = None,
                         step: float | None = None, span: tuple[float, float] | None = None) -> NumericMetric:
    """Integrate every block with RK4 at ``step`` and build the numeric metric."""
    state0 = dict(system.init)
    state0.update(init or {})
    unknown = set(state0) - set(system.state)
    if unknown:
        raise ValueError(f"unknown state variable(s) {sorted(unknown)} for {system.id}")
    h = float(step if step is not None else system.step)
    a, b = span if span is not None else system.span
    if not h > 0 or not b > a:
        raise ValueError("need a positive step and a nonempty range")
    steps = int(round((b - a) / h))
    if steps < 1:
        raise StepTooLarge(f"step {h} does not fit in [{a}, {b}]")
    consts = {k: float(v) for k, v in system.constants.items()}
    positive = system.metric_functions
    solutions = []
    for block in system.blocks:
        y0 = np.array([state0[s] for s in block.state], dtype=float)
        if not _guard_ok(block, y0, positive):
            raise GuardViolationAtStart(f"initial state of {', '.join(block.functions)} violates positivity")
        frozen = {s: state0[s] for s in system.state if s not in block.state}
        f = _Rhs(block, {**consts, **frozen})
        dy0, bad0 = f(a, y0)
        if bad0:
            raise GuardViolationAtStart(f"right-hand side undefined at the initial state of {block.coord}")
        coarse = _rk4(f, block, y0, a, h, steps, positive)
        fine = _rk4(f, block, y0, a, h / 2, 2 * steps, positive)
        nodes = min(len(coarse), (len(fine) + 1) // 2)
        coarse = coarse[:nodes]
        if nodes < 2:
            raise GuardViolationAtStart(f"guard fired on the first step of {block.coord}")
        common = fine[: 2 * nodes - 1: 2]
        est = float(np.max(np.abs(coarse - common) / (1.0 + np.abs(common))))
        if est > STEP_TOL:
            raise StepTooLarge(f"half-step estimate {est:.2e} exceeds {STEP_TOL:g} at step {h}")
        xs = a + h * np.arange(nodes)
        highest = np.array([[v for v in _highest(f, x, y)] for x, y in zip(xs, coarse)])
        sol = _BlockSolution(block, xs, coarse, highest, nodes - 1 < steps, est)
        pos = 0
        for fi, (name, k) in enumerate(block.orders):
            derivs = np.concatenate([coarse[:, pos:pos + k], highest[:, fi:fi + 1]], axis=1)
            sol.polys[name] = _hermite(xs, derivs)
            pos += k
        mids = fine[1: 2 * nodes - 1: 2]
        if len(mids):
            xm = xs[:-1] + h / 2
            worst = 0.0
            pos = 0
            for name, k in block.orders:
                approx = sol.polys[name](xm)
                exact = mids[:, pos]
                worst = max(worst, float(np.max(np.abs(approx - exact) / (1.0 + np.abs(exact)))))
                pos += k
            sol.interpolation_error = worst
        solutions.append(sol)
    return NumericMetric(system, solutions, consts, h)


def _highest(f: _Rhs, x: float, y: np.ndarray) -> list[float]:
    dy, _ = f(x, y)
    out = []
    for pos, k in f.slots:
        out.append(dy[pos + k - 1])
    return out


def parse_init(text: str) -> dict[str, float]:
    """``"q=1, q_1=0.3"`` -> mapping."""
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"expected name=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = float(v)
    return out


# ------------------------------------------------------------------ built-in systems

def _helpers(closed: Mapping[str, tuple[str, Expr]]) -> dict[str, Expr]:
    """Closed-form helper functions and their first derivatives as ``name``, ``name_1``, ..."""
    out = {}
    for name, (c, body) in closed.items():
        e = body
        for j in range(4):
            out[name if j == 0 else f"{name}_{j}"] = e
            e = differentiate(e, c)
    return out


def _on_state(text: str, coord: str, names: Sequence[str], helpers: Mapping[str, Expr]) -> Expr:
    e = parse_expression(text, list(names) + list(helpers), [coord])
    return subs(e, helpers) if helpers else e


def _block(coord: str, consts: Sequence[str], closed: Mapping[str, tuple[str, Expr]],
           frozen: Sequence[str], **rhs: tuple[int, str]) -> OdeBlock:
    """Parse right-hand sides; closed-form helper functions are substituted with their derivatives."""
    orders = tuple((name, k) for name, (k, _) in rhs.items())
    state = [s for name, k in orders for s in _state_names(name, k)]
    helpers = _helpers(closed)
    names = list(consts) + state + list(frozen)
    return OdeBlock(coord, orders, {name: _on_state(text, coord, names, helpers)
                                    for name, (_, text) in rhs.items()})


def _qe1_4d1() -> RifOdeSystem:
    consts = {"c1": Fraction(1, 2), "c2": Fraction(0), "c3": Fraction(1)}
    blk = _block("x4", consts, {}, (), q=(2, "(32*c1^2*c3*q^3 + q_1^2)/(2*q)"))
    names = list(consts) + ["q", "q_1", "C"]
    integral = parse_expression("q_1^2 - 16*c1^2*c3*q^3 - C*q", names, [])
    constant = parse_expression("(q_1^2 - 16*c1^2*c3*q^3)/q", names, [])
    f = parse_expression("4*c3*cosh(c1*x1 + c2)^2", list(consts), ["x1"])
    w = mul(f, slot("q", "x4"))
    return RifOdeSystem(
        "qe1-4d1", "warped 4D quasi Einstein metric with q from its second order equation",
        (blk,), consts, (ONE, w, w, w), ("x1", "x2", "x3", "x4"), {},
        {"q": 1.0, "q_1": 0.3}, (0.0, 1.0), 1e-3,
        first_integral=(integral, constant), closed_forms={"f": f}, expected={"QE1": "holds"})


_QE2_4D1_F_PRINTED = "-(f*f_1*l1_1 + 8*c1^2*f + f_1^2)/(2*f)"
_QE2_4D1_F = "-(4*f*f_1*l1_1 + 8*c1^2*f + f_1^2)/(2*f)"
_QE2_4D1_L = "(6*f*f_1*l1_1 + 12*c1^2*f + 3*f_1^2)/(4*f^2)"


def _qe2_4d1(printed: bool = False) -> RifOdeSystem:
    # The f equation as printed carries f f' l1' with coefficient 1.  Rederiving
    # Ri = 2 Hess(lambda) for this metric gives 4, and only 4 is compatible with
    # the printed l1 equation; the printed variant is kept for comparison.
    consts = {"c0": Fraction(2), "c1": Fraction(1)}
    blk = _block("x1", consts, {}, (),
                 f=(2, _QE2_4D1_F_PRINTED if printed else _QE2_4D1_F),
                 l1=(2, _QE2_4D1_L))
    q = parse_expression("1/(c1*x4 + c0)^2", list(consts), ["x4"])
    w = mul(slot("f", "x1"), q)
    return RifOdeSystem(
        "qe2-4d1-printed" if printed else "qe2-4d1",
        "warped 4D metric and scalar with Ri = 2 Hess(lambda)"
        + (", f equation exactly as printed" if printed else ""),
        (blk,), consts, (ONE, w, w, w), ("x1", "x2", "x3", "x4"), {"x4": (0.0, 1.0)},
        {"f": 1.0, "f_1": 0.0, "l1": 0.0, "l1_1": 0.0}, (0.0, 0.5), 1e-3,
        lam=slot("l1", "x1"), experimental=printed, closed_forms={"q": q},
        expected={} if printed else {"QE2": "holds", "CO": "holds"})


_QE1_4D2_F2 = ("(2*f1*f2^2*f3*f4*f4_2 - f1*f2^2*f3*f4_1^2 + f1*f2^2*f4*f3_1*f4_1 - f1*f2*f4^2*f2_1*f3_1"
               " + f1*f3*f4^2*f2_1^2 - f2^2*f3*f4*f1_1*f4_1 + f2*f3*f4^2*f1_1*f2_1)/(2*f1*f2*f3*f4^2)")
_QE1_4D2_F3 = ("(2*f1*f2*f3^2*f4*f4_2 - f1*f2*f3^2*f4_1^2 + f1*f2*f4^2*f3_1^2 - f1*f3*f4^2*f2_1*f3_1"
               " + f1*f3^2*f4*f2_1*f4_1 - f2*f3^2*f4*f1_1*f4_1 + f2*f3*f4^2*f1_1*f3_1)/(2*f1*f2*f3*f4^2)")
QE1_4D2_A_PRINTED = ("(f1*f2*f3*f4_1^2 + f2*f3*f4*f1_1*f4_1 + f1*f2*f4*f3_1*f4_1 - f1*f3*f4*f2_1*f4_1"
                     " - 2*f1*f2*f3*f4*f4_2)/(4*f1^2*f2*f3*f4^2)")
# As printed the f3' f4' term carries +; the triple eigenvalue of g^-1 Ri has -,
# which also restores the f2 <-> f3 symmetry of the system.
QE1_4D2_A = ("(f1*f2*f3*f4_1^2 + f2*f3*f4*f1_1*f4_1 - f1*f2*f4*f3_1*f4_1 - f1*f3*f4*f2_1*f4_1"
             " - 2*f1*f2*f3*f4*f4_2)/(4*f1^2*f2*f3*f4^2)")
QE1_4D2_B = ("(f1*f2*f3*f4_1^2 + f2*f3*f4*f1_1*f4_1 + f1*f4^2*f2_1*f3_1"
             " - 2*f1*f2*f3*f4*f4_2)/(2*f1^2*f2*f3*f4^2)")


def _qe1_4d2() -> RifOdeSystem:
    closed = {"f1": ("x1", as_expr(1)), "f4": ("x1", parse_expression("exp(x1)", [], ["x1"]))}
    blk = _block("x1", (), closed, (), f2=(2, _QE1_4D2_F2), f3=(2, _QE1_4D2_F3))
    helpers = _helpers(closed)
    coefficients = {key: _on_state(text, "x1", blk.state, helpers) for key, text in
                    (("a", QE1_4D2_A), ("a_printed", QE1_4D2_A_PRINTED), ("b", QE1_4D2_B))}
    metric = (closed["f1"][1], slot("f2", "x1"), slot("f3", "x1"), closed["f4"][1])
    return RifOdeSystem(
        "qe1-4d2", "diagonal 4D quasi Einstein metric with f2, f3 from their equations",
        (blk,), {}, metric, ("x1", "x2", "x3", "x4"), {},
        {"f2": 1.0, "f2_1": 0.5, "f3": 1.0, "f3_1": 0.2}, (0.0, 1.0), 1e-3,
        closed_forms={"f1": closed["f1"][1], "f4": closed["f4"][1]}, expected={"QE1": "holds"},
        coefficients=coefficients)


def _rr_4d3() -> RifOdeSystem:
    hb = _block("x2", (), {}, (), h=(3, "h_1*(2*h*h_2 - h_1^2)/(2*h^2)"))
    ub = _block("x3", (), {}, ("h", "h_1", "h_2"), u=(2, "(u*h_1^2 + h*u_1^2 - 2*h*u*h_2)/(2*h*u)"))
    f = parse_expression("exp(x1)", [], ["x1"])
    q = parse_expression("exp(x4)", [], ["x4"])
    return RifOdeSystem(
        "rr-4d3", "4D metric with h, u from their equations; recurrence is reported, not asserted",
        (hb, ub), {}, (q, slot("u", "x3"), slot("h", "x2"), f), ("x1", "x2", "x3", "x4"), {},
        {"h": 1.0, "h_1": 0.5, "h_2": 0.2, "u": 1.0, "u_1": 0.3}, (0.0, 1.0), 1e-3,
        experimental=True, closed_forms={"f": f, "q": q})


_SYSTEMS: dict[str, Callable[[], RifOdeSystem]] = {
    "qe1-4d1": _qe1_4d1,
    "qe2-4d1": _qe2_4d1,
    "qe2-4d1-printed": lambda: _qe2_4d1(printed=True),
    "qe1-4d2": _qe1_4d2,
    "rr-4d3": _rr_4d3,
}


def builtin_systems() -> list[str]:
    return list(_SYSTEMS)


def get_system(system_id: str) -> RifOdeSystem:
    try:
        return _SYSTEMS[system_id]()
    except KeyError:
        raise KeyError(f"no ODE system {system_id!r}; known: {', '.join(_SYSTEMS)}") from None


# ------------------------------------------------------------------ finite differences

@dataclass
class FdCurvature:
    """Curvature from finite differences of the metric at a batch of points (leading axis)."""

    g: np.ndarray
    ginv: np.ndarray
    christoffel: np.ndarray     # [p, k, i, j] = Gamma^k_ij
    riemann: np.ndarray         # [p, l, i, j, k] = R^l_ijk
    ricci: np.ndarray
    scalar: np.ndarray
    bad: np.ndarray


_D1 = ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0))          # / 12h
_D2 = ((-2, -1.0), (-1, 16.0), (0, -30.0), (1, 16.0), (2, -1.0))   # / 12h^2


MetricFn = Callable[[Mapping[str, np.ndarray], int], tuple[np.ndarray, np.ndarray]]


def _metric_fn(source) -> tuple[tuple[str, ...], Mapping[str, tuple[float, float]], MetricFn, ManifoldSpec]:
    spec = source.spec if isinstance(source, NumericMetric) else source

    def fn(env, size):
        return metric_values(spec, env, size)
    return spec.coords, spec.domain, fn, spec


def _shift(points: Mapping[str, np.ndarray], coords, moves) -> dict[str, np.ndarray]:
    out = dict(points)
    for c, d in moves:
        out[c] = out[c] + d
    return out


def _metric_derivatives(fn: MetricFn, coords, points, h: np.ndarray):
    """g, dg[p, m, i, j] = d_m g_ij and ddg[p, m, l, i, j] from 4th-order central stencils."""
    n = len(coords)
    size = len(h)
    envs = [dict(points)]
    index = {(): 0}

    def want(key, moves):
        if key not in index:
            index[key] = len(envs)
            envs.append(_shift(points, coords, moves))

    for m in range(n):
        for s, _ in _D1:
            want(((m, s),), [(coords[m], s * h)])
    for m in range(n):
        for l in range(m + 1, n):
            for s1, _ in _D1:
                for s2, _ in _D1:
                    want(((m, s1), (l, s2)), [(coords[m], s1 * h), (coords[l], s2 * h)])
    env = {c: np.concatenate([e[c] for e in envs]) for c in coords}
    gs, bad = fn(env, size * len(envs))
    gs = gs.reshape(len(envs), size, n, n)
    bad = bad.reshape(len(envs), size).any(axis=0)
    g0 = gs[0]
    dg = np.zeros((size, n, n, n))
    ddg = np.zeros((size, n, n, n, n))
    hh = h[:, None, None]
    for m in range(n):
        acc = sum(w * gs[index[((m, s),)]] for s, w in _D1)
        dg[:, m] = acc / (12 * hh)
        acc2 = sum(w * (gs[index[((m, s),)]] if s else g0) for s, w in _D2)
        ddg[:, m, m] = acc2 / (12 * hh ** 2)
        for l in range(m + 1, n):
            acc = sum(w1 * w2 * gs[index[((m, s1), (l, s2))]] for s1, w1 in _D1 for s2, w2 in _D1)
            ddg[:, m, l] = ddg[:, l, m] = acc / (144 * hh ** 2)
    return g0, dg, ddg, bad


def _curvature_from_derivatives(g, dg, ddg, sign: int):
    ginv = np.linalg.inv(g)
    # Gamma_{l,ij} (first kind) and its derivatives
    first = 0.5 * (np.einsum("pilj->plij", dg) + np.einsum("pjli->plij", dg) - np.einsum("plij->plij", dg))
    gam = np.einsum("pkl,plij->pkij", ginv, first)
    dfirst = 0.5 * (np.einsum("pmilj->pmlij", ddg) + np.einsum("pmjli->pmlij", ddg)
                    - np.einsum("pmlij->pmlij", ddg))
    dginv = -np.einsum("pka,pmab,pbl->pmkl", ginv, dg, ginv)
    dgam = np.einsum("pmkl,plij->pmkij", dginv, first) + np.einsum("pkl,pmlij->pmkij", ginv, dfirst)
    # R^l_ijk = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik, stored [l, i, j, k]
    riem = (np.einsum("piljk->plijk", dgam) - np.einsum("pjlik->plijk", dgam)
            + np.einsum("plim,pmjk->plijk", gam, gam) - np.einsum("pljm,pmik->plijk", gam, gam))
    ricci = sign * np.einsum("piijk->pjk", riem)
    scalar = np.einsum("pjk,pjk->p", ginv, ricci)
    return ginv, gam, riem, ricci, scalar


def _step_sizes(points: Mapping[str, np.ndarray], coords, h: float | None, size: int) -> np.ndarray:
    if h is not None:
        return np.full(size, float(h))
    scale = np.max(np.abs(np.stack([points[c] for c in coords])), axis=0)
    return 1e-4 * (1.0 + scale)


def _as_batch(point: Mapping[str, object], coords) -> tuple[dict[str, np.ndarray], int]:
    pts = {c: np.atleast_1d(np.asarray(point[c], dtype=float)) for c in coords}
    size = max(len(v) for v in pts.values())
    return {c: np.broadcast_to(v, (size,)).copy() for c, v in pts.items()}, size


def _check_boundary(points, coords, domain, reach: np.ndarray) -> None:
    for c in coords:
        lo, hi = domain[c]
        if np.any(points[c] - 2 * reach < lo - 1e-15) or np.any(points[c] + 2 * reach > hi + 1e-15):
            raise BoundaryTooClose(f"point closer than 2h to the boundary of {c} in [{lo}, {hi}]")


def fd_curvature_oracle(metric, point: Mapping[str, object], h: float | None = None) -> FdCurvature:
    """Christoffel, Riemann, Ricci and scalar curvature from central differences of g.

    ``point`` maps each coordinate to a value or an array (a batch of
    points).  The step defaults to 1e-4 (1 + |x|).
    """
    coords, domain, fn, _ = _metric_fn(metric)
    pts, size = _as_batch(point, coords)
    hs = _step_sizes(pts, coords, h, size)
    _check_boundary(pts, coords, domain, hs)
    g, dg, ddg, bad = _metric_derivatives(fn, coords, pts, hs)
    ginv, gam, riem, ricci, scalar = _curvature_from_derivatives(g, dg, ddg, ricci_sign())
    return FdCurvature(g, ginv, gam, riem, ricci, scalar, bad)


def _lam_derivatives(spec: ManifoldSpec, pts, h: np.ndarray, gam: np.ndarray):
    """lambda_;i and lambda_;ij from central differences."""
    coords = spec.coords
    n = len(coords)
    size = len(h)
    prog = Program([spec.lam])
    envs = [dict(pts)]
    index = {(): 0}
    for m in range(n):
        for s, _ in _D1:
            index[((m, s),)] = len(envs)
            envs.append(_shift(pts, coords, [(coords[m], s * h)]))
    for m in range(n):
        for l in range(m + 1, n):
            for s1, _ in _D1:
                for s2, _ in _D1:
                    index[((m, s1), (l, s2))] = len(envs)
                    envs.append(_shift(pts, coords, [(coords[m], s1 * h), (coords[l], s2 * h)]))
    env = {c: np.concatenate([e[c] for e in envs]) for c in coords}
    (vals,), bad = prog.run({**spec.constant_values(), **env}, slots=spec.slots, size=size * len(envs))
    vals = vals.reshape(len(envs), size)
    d1 = np.zeros((size, n))
    d2 = np.zeros((size, n, n))
    for m in range(n):
        d1[:, m] = sum(w * vals[index[((m, s),)]] for s, w in _D1) / (12 * h)
        d2[:, m, m] = sum(w * (vals[index[((m, s),)]] if s else vals[0]) for s, w in _D2) / (12 * h ** 2)
        for l in range(m + 1, n):
            d2[:, m, l] = d2[:, l, m] = sum(
                w1 * w2 * vals[index[((m, s1), (l, s2))]] for s1, w1 in _D1 for s2, w2 in _D1) / (144 * h ** 2)
    hess = d2 - np.einsum("pkij,pk->pij", gam, d1)
    return d1, hess, bad.reshape(len(envs), size).any(axis=0)


def fd_samples(metric, cfg: SamplingConfig, h: float = INNER_H, derivatives: bool = True,
               lam_order: int = 0) -> GeometrySamples:
    """GeometrySamples from finite differences only.

    Ricci and scalar curvature come from central differences of g with step
    ``h``; their covariant derivatives (and the third derivative of lambda)
    from central differences of those results with step 10 h.  Sample points
    are drawn from the domain shrunk by the stencil reach.
    """
    coords, domain, fn, spec = _metric_fn(metric)
    outer = OUTER_FACTOR * h
    reach = 2 * (outer + h) + 1e-9
    box = {}
    for c in coords:
        lo, hi = (cfg.domain or {}).get(c, domain[c])
        box[c] = (lo + reach, hi - reach)
    inner_cfg = cfg.with_(domain=None, margin=0.0)
    pts, unfilled = sample_points(box, inner_cfg)
    size = len(pts[coords[0]])
    n = len(coords)
    hs = np.full(size, h)
    sign = ricci_sign()

    def at(points):
        g, dg, ddg, bad = _metric_derivatives(fn, coords, points, hs)
        ginv, gam, _, ricci, scalar = _curvature_from_derivatives(g, dg, ddg, sign)
        return g, ginv, gam, ricci, scalar, bad

    g, ginv, gam, ricci, scalar, bad = at(pts)
    extra = {}
    if derivatives or lam_order >= 3:
        dri = np.zeros((size, n, n, n))
        dsc = np.zeros((size, n))
        dhess = np.zeros((size, n, n, n))
        need_lam = lam_order >= 3
        base_hess = None
        if lam_order:
            lam_d, base_hess, lbad = _lam_derivatives(spec, pts, hs, gam)
            bad |= lbad
        for m, c in enumerate(coords):
            acc_r = np.zeros((size, n, n))
            acc_s = np.zeros(size)
            acc_h = np.zeros((size, n, n))
            for s, w in _D1:
                shifted = _shift(pts, coords, [(c, s * outer)])
                _, _, gam_s, ri_s, sc_s, b_s = at(shifted)
                bad |= b_s
                acc_r += w * ri_s
                acc_s += w * sc_s
                if need_lam:
                    _, hs_s, lb = _lam_derivatives(spec, shifted, hs, gam_s)
                    bad |= lb
                    acc_h += w * hs_s
            dri[:, :, :, m] = acc_r / (12 * outer)
            dsc[:, m] = acc_s / (12 * outer)
            dhess[:, :, :, m] = acc_h / (12 * outer)
        # covariant corrections, derivative index last
        dri = dri - np.einsum("pmki,pmj->pijk", gam, ricci) - np.einsum("pmkj,pim->pijk", gam, ricci)
        if derivatives:
            extra["ricci_d"] = dri
            extra["scalar_d"] = dsc
        if need_lam:
            extra["lam_ddd"] = (dhess - np.einsum("pmki,pmj->pijk", gam, base_hess)
                                - np.einsum("pmkj,pim->pijk", gam, base_hess))
    if lam_order:
        if "lam_ddd" not in extra:
            lam_d, base_hess, lbad = _lam_derivatives(spec, pts, hs, gam)
            bad |= lbad
        extra["lam_d"] = lam_d
        if lam_order >= 2:
            extra["lam_dd"] = base_hess
    gs = GeometrySamples(coords=coords, points=pts, g=g, ginv=ginv, ricci=ricci, scalar=scalar,
                         skipped=unfilled, **extra)
    finite = ~bad & np.all(np.isfinite(g), axis=(1, 2)) & np.all(np.isfinite(ricci), axis=(1, 2))
    if not finite.all():
        gs = gs.subset(finite)
    return gs


def numeric_config(cfg: SamplingConfig | None = None) -> SamplingConfig:
    """Default sampling for the finite-difference pipeline: relaxed tolerance and guards."""
    if cfg is None:
        return SamplingConfig(tol=NUMERIC_TOL, sc_guard=NUMERIC_GUARD, ricci_guard=NUMERIC_GUARD)
    return cfg


def verify_numeric_metric(metric, condition: str, cfg: SamplingConfig | None = None,
                          h: float = INNER_H) -> ConditionReport:
    """Run one condition on finite-difference samples (same residual cores as the symbolic route)."""
    from .errors import MissingLambda
    from .report import condition_id, run_on_samples

    cid = condition_id(condition)
    cfg = numeric_config(cfg)
    spec = metric.spec if isinstance(metric, NumericMetric) else metric
    if cid == "QE2" and spec.lam is None:
        raise MissingLambda(f"{spec.name} declares no scalar function")
    derivatives = cid in ("RR", "PRS", "CO")
    lam_order = 3 if cid == "QE2" else 0
    gs = fd_samples(metric, cfg, h, derivatives, lam_order)
    report = run_on_samples(cid, gs, cfg)
    report.notes.append(f"finite-difference pipeline, inner step {h:g}, outer step {OUTER_FACTOR * h:g}")
    if isinstance(metric, NumericMetric) and metric.system.experimental:
        report.notes.append("experimental system: verdict reported, not asserted")
    return report
