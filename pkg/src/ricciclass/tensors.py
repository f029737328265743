"""Symbolic tensor fields and the curvature stack of a coordinate metric.

Conventions
-----------
* ``christoffel[k, i, j]`` is the Levi-Civita symbol with upper index k.
* ``riemann[l, i, j, k]`` is ``R^l_{ijk} = d_i G^l_jk - d_j G^l_ik
  + G^l_im G^m_jk - G^l_jm G^m_ik``.
* ``riemann_lower[h, i, j, k] = g_kl R^l_hij``; it is antisymmetric in
  (h, i) and in (j, k), and on the unit round sphere equals
  ``g_hk g_ij - g_hj g_ik``.
* ``ricci[j, k] = R^i_ijk`` (contraction on the first index).
* A covariant derivative appends the new index at the end, so
  ``T_{ab;c}`` is stored at ``[a, b, c]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Mapping, Sequence

import numpy as np

from .dsl import ManifoldSpec
from .errors import IndexOutOfRange, SingularMetric
from .expr import (
    HALF, ONE, ZERO, Expr, add, as_expr, differentiate, expand, mul, power, sin, sym,
)
from .numeric import Program

__all__ = [
    "TensorField", "CurvaturePack", "curvature_pack", "covariant_derivative", "derivative_component",
    "divergence",
    "raise_index", "lower_index", "contract", "trace", "norm_squared", "tensor_product",
    "evaluate_tensors", "ricci_sign", "metric_inverse", "identity_residuals",
    "IdentityResiduals", "normalized_residual",
]


class TensorField:
    """Dense array of expressions plus an index-position string.

    ``variance`` has one character per index: ``"u"`` for contravariant,
    ``"d"`` for covariant.  Scalars have an empty variance string.
    """

    __slots__ = ("coords", "components", "variance")

    def __init__(self, coords: Sequence[str], components, variance: str):
        arr = np.asarray(components, dtype=object)
        comps = np.empty(arr.shape, dtype=object)
        for idx in np.ndindex(arr.shape):
            comps[idx] = as_expr(arr[idx])
        n = len(coords)
        if comps.ndim != len(variance) or any(s != n for s in comps.shape):
            raise IndexOutOfRange(f"component shape {comps.shape} does not match variance {variance!r} in dim {n}")
        if set(variance) - {"u", "d"}:
            raise ValueError(f"bad variance {variance!r}")
        self.coords = tuple(coords)
        self.components = comps
        self.variance = variance

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def rank(self) -> tuple[int, int]:
        return self.variance.count("u"), self.variance.count("d")

    def __getitem__(self, idx) -> Expr:
        return self.components[idx]

    def map(self, fn) -> "TensorField":
        out = np.empty(self.components.shape, dtype=object)
        for idx in np.ndindex(out.shape):
            out[idx] = fn(self.components[idx])
        return TensorField(self.coords, out, self.variance)

    def __add__(self, other: "TensorField") -> "TensorField":
        _same(self, other)
        return TensorField(self.coords, _zip(self.components, other.components, add), self.variance)

    def __sub__(self, other: "TensorField") -> "TensorField":
        _same(self, other)
        return TensorField(self.coords, _zip(self.components, other.components,
                                             lambda a, b: add(a, mul(-1, b))), self.variance)

    def scale(self, factor) -> "TensorField":
        f = as_expr(factor)
        return self.map(lambda e: mul(f, e))

    def is_symmetric(self, i: int = 0, j: int = 1) -> bool:
        c = self.components
        return all(c[idx] is c[_swap(idx, i, j)] for idx in np.ndindex(c.shape))

    def __repr__(self) -> str:
        return f"TensorField(variance={self.variance!r}, dim={self.dim})"


def _same(a: TensorField, b: TensorField) -> None:
    if a.variance != b.variance or a.coords != b.coords:
        raise IndexOutOfRange("tensor fields have different shapes")


def _zip(a: np.ndarray, b: np.ndarray, fn) -> np.ndarray:
    out = np.empty(a.shape, dtype=object)
    for idx in np.ndindex(a.shape):
        out[idx] = fn(a[idx], b[idx])
    return out


def _swap(idx: tuple, i: int, j: int) -> tuple:
    lst = list(idx)
    lst[i], lst[j] = lst[j], lst[i]
    return tuple(lst)


def _obj(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(ZERO)
    return out


# ------------------------------------------------------------------ inverse metric

def _det(m: list[list[Expr]]) -> Expr:
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return add(mul(m[0][0], m[1][1]), mul(-1, m[0][1], m[1][0]))
    terms = []
    for j in range(n):
        if m[0][j] is ZERO:
            continue
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        terms.append(mul(-1 if j % 2 else 1, m[0][j], _det(minor)))
    return add(*terms)


def metric_inverse(g: np.ndarray) -> np.ndarray:
    """Symbolic inverse: entrywise for diagonal metrics, adjugate over determinant otherwise."""
    n = g.shape[0]
    inv = _obj((n, n))
    if all(g[i, j] is ZERO for i in range(n) for j in range(n) if i != j):
        for i in range(n):
            if g[i, i] is ZERO:
                raise SingularMetric(f"diagonal entry {i + 1} vanishes")
            inv[i, i] = power(g[i, i], -1)
        return inv
    rows = [[g[i, j] for j in range(n)] for i in range(n)]
    det = _det(rows)
    if expand(det) is ZERO:
        raise SingularMetric("metric determinant vanishes identically")
    det_inv = power(det, -1)
    for i in range(n):
        for j in range(i, n):
            minor = [r[:i] + r[i + 1:] for k, r in enumerate(rows) if k != j]
            cof = _det(minor) if n > 1 else ONE
            v = mul(-1 if (i + j) % 2 else 1, cof, det_inv)
            inv[i, j] = v
            inv[j, i] = v
    return inv


# ------------------------------------------------------------------ covariant derivative

def derivative_component(t: TensorField, idx: tuple[int, ...], k: int, pack: "CurvaturePack") -> Expr:
    """One component ``t_{idx;k}`` of the covariant derivative."""
    n = t.dim
    gam = pack.christoffel.components
    comps = t.components
    terms = [differentiate(comps[idx], t.coords[k])]
    for pos, v in enumerate(t.variance):
        for m in range(n):
            other = comps[idx[:pos] + (m,) + idx[pos + 1:]]
            if other is ZERO:
                continue
            if v == "u":
                c = gam[idx[pos], k, m]
                if c is not ZERO:
                    terms.append(mul(c, other))
            else:
                c = gam[m, k, idx[pos]]
                if c is not ZERO:
                    terms.append(mul(-1, c, other))
    return add(*terms)


def covariant_derivative(t: TensorField, pack: "CurvaturePack") -> TensorField:
    """Append one covariant index: the Levi-Civita derivative of ``t``."""
    n = t.dim
    comps = t.components
    out = np.empty(comps.shape + (n,), dtype=object)
    for idx in np.ndindex(comps.shape):
        for k in range(n):
            out[idx + (k,)] = derivative_component(t, idx, k, pack)
    return TensorField(t.coords, out, t.variance + "d")


def divergence(t: TensorField, pack: "CurvaturePack", pos: int = 0) -> TensorField:
    """``g^{ab} t_{..a..;b}`` with the contracted slot at ``pos`` (covariant)."""
    _check_pos(t, pos)
    if t.variance[pos] != "d":
        raise IndexOutOfRange("divergence slot must be covariant")
    n = t.dim
    ginv = pack.ginv.components
    rest_shape = t.components.shape[:-1]
    out = np.empty(rest_shape, dtype=object)
    for ridx in np.ndindex(rest_shape):
        terms = []
        for a in range(n):
            for b in range(n):
                if ginv[a, b] is ZERO:
                    continue
                idx = ridx[:pos] + (a,) + ridx[pos:]
                d = derivative_component(t, idx, b, pack)
                if d is not ZERO:
                    terms.append(mul(ginv[a, b], d))
        out[ridx] = add(*terms)
    return TensorField(t.coords, out, t.variance[:pos] + t.variance[pos + 1:])


# ------------------------------------------------------------------ metric algebra

def _check_pos(t: TensorField, *pos: int) -> None:
    for p in pos:
        if not 0 <= p < len(t.variance):
            raise IndexOutOfRange(f"index position {p} out of range for variance {t.variance!r}")


def _apply_matrix(t: TensorField, pos: int, mat: np.ndarray, new: str) -> TensorField:
    n = t.dim
    comps = t.components
    out = np.empty(comps.shape, dtype=object)
    for idx in np.ndindex(comps.shape):
        terms = []
        for m in range(n):
            a = mat[idx[pos], m]
            b = comps[idx[:pos] + (m,) + idx[pos + 1:]]
            if a is not ZERO and b is not ZERO:
                terms.append(mul(a, b))
        out[idx] = add(*terms)
    var = t.variance[:pos] + new + t.variance[pos + 1:]
    return TensorField(t.coords, out, var)


def raise_index(t: TensorField, pos: int, pack: "CurvaturePack") -> TensorField:
    _check_pos(t, pos)
    if t.variance[pos] != "d":
        raise IndexOutOfRange(f"index {pos} is already contravariant")
    return _apply_matrix(t, pos, pack.ginv.components, "u")


def lower_index(t: TensorField, pos: int, pack: "CurvaturePack") -> TensorField:
    _check_pos(t, pos)
    if t.variance[pos] != "u":
        raise IndexOutOfRange(f"index {pos} is already covariant")
    return _apply_matrix(t, pos, pack.g.components, "d")


def contract(t: TensorField, i: int, j: int, pack: "CurvaturePack | None" = None) -> TensorField:
    """Contract positions i and j; two covariant indices are contracted through the inverse metric."""
    _check_pos(t, i, j)
    if i == j:
        raise IndexOutOfRange("cannot contract an index with itself")
    i, j = sorted((i, j))
    vi, vj = t.variance[i], t.variance[j]
    n = t.dim
    if vi != vj:
        weight = np.empty((n, n), dtype=object)
        for a in range(n):
            for b in range(n):
                weight[a, b] = ONE if a == b else ZERO
    elif pack is None:
        raise IndexOutOfRange("contracting two like indices needs a metric")
    else:
        weight = (pack.ginv if vi == "d" else pack.g).components
    comps = t.components
    rest_shape = tuple(s for k, s in enumerate(comps.shape) if k not in (i, j))
    out = np.empty(rest_shape, dtype=object)
    for ridx in np.ndindex(rest_shape):
        terms = []
        for a in range(n):
            for b in range(n):
                w = weight[a, b]
                if w is ZERO:
                    continue
                full = list(ridx)
                full.insert(i, a)
                full.insert(j, b)
                c = comps[tuple(full)]
                if c is not ZERO:
                    terms.append(mul(w, c))
        out[ridx] = add(*terms)
    var = "".join(v for k, v in enumerate(t.variance) if k not in (i, j))
    return TensorField(t.coords, out, var)


def trace(t: TensorField, pack: "CurvaturePack", i: int = 0, j: int = 1) -> Expr:
    out = contract(t, i, j, pack)
    return out.components[()] if out.components.ndim == 0 else out


def norm_squared(t: TensorField, pack: "CurvaturePack") -> Expr:
    """Full contraction of ``t`` with itself through the metric."""
    lowered = t
    for pos, v in enumerate(t.variance):
        if v == "u":
            lowered = lower_index(lowered, pos, pack)
    raised = lowered
    for pos in range(len(t.variance)):
        raised = raise_index(raised, pos, pack)
    a, b = lowered.components, raised.components
    terms = [mul(a[idx], b[idx]) for idx in np.ndindex(a.shape) if a[idx] is not ZERO and b[idx] is not ZERO]
    return add(*terms)


def tensor_product(a: TensorField, b: TensorField) -> TensorField:
    out = np.empty(a.components.shape + b.components.shape, dtype=object)
    for i in np.ndindex(a.components.shape):
        for j in np.ndindex(b.components.shape):
            out[i + j] = mul(a.components[i], b.components[j])
    return TensorField(a.coords, out, a.variance + b.variance)


# ------------------------------------------------------------------ curvature

def _christoffel(coords, g, ginv) -> np.ndarray:
    n = len(coords)
    dg = np.empty((n, n, n), dtype=object)  # dg[l, i, j] = d_l g_ij
    for l in range(n):
        for i in range(n):
            for j in range(i, n):
                v = differentiate(g[i, j], coords[l])
                dg[l, i, j] = v
                dg[l, j, i] = v
    gam = _obj((n, n, n))
    for k in range(n):
        for i in range(n):
            for j in range(i, n):
                terms = []
                for l in range(n):
                    if ginv[k, l] is ZERO:
                        continue
                    inner = add(dg[i, l, j], dg[j, l, i], mul(-1, dg[l, i, j]))
                    if inner is not ZERO:
                        terms.append(mul(ginv[k, l], inner))
                v = mul(HALF, add(*terms))
                gam[k, i, j] = v
                gam[k, j, i] = v
    return gam


def _riemann(coords, gam) -> np.ndarray:
    n = len(coords)
    dgam = np.empty((n, n, n, n), dtype=object)  # dgam[d, l, j, k] = d_d G^l_jk
    for d in range(n):
        for l in range(n):
            for j in range(n):
                for k in range(j, n):
                    v = differentiate(gam[l, j, k], coords[d])
                    dgam[d, l, j, k] = v
                    dgam[d, l, k, j] = v
    r = _obj((n, n, n, n))
    for l in range(n):
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(n):
                    terms = [dgam[i, l, j, k], mul(-1, dgam[j, l, i, k])]
                    for m in range(n):
                        a, b = gam[l, i, m], gam[m, j, k]
                        if a is not ZERO and b is not ZERO:
                            terms.append(mul(a, b))
                        a, b = gam[l, j, m], gam[m, i, k]
                        if a is not ZERO and b is not ZERO:
                            terms.append(mul(-1, a, b))
                    v = add(*terms)
                    r[l, i, j, k] = v
                    r[l, j, i, k] = mul(-1, v)
    return r


def _unit_sphere_pack() -> "CurvaturePack":
    th = sym("th")
    spec = ManifoldSpec(name="unit-sphere", coords=("th", "ph"),
                        metric=((ONE, ZERO), (ZERO, power(sin(th), 2))),
                        domain={"th": (0.2, 2.9), "ph": (0.0, 6.0)})
    return CurvaturePack(spec, sign=1)


@lru_cache(maxsize=None)
def ricci_sign() -> int:
    """+1 when the raw contraction gives the unit 2-sphere scalar curvature +2, else -1."""
    sc = _unit_sphere_pack().scalar
    (v,), bad = Program([sc]).run({"th": 1.0, "ph": 0.5}, size=1)
    value = float(v[0])
    if abs(abs(value) - 2.0) > 1e-9:
        raise RuntimeError(f"sphere calibration produced sc={value}")
    return 1 if value > 0 else -1


class CurvaturePack:
    """Lazily computed curvature objects of a ManifoldSpec."""

    def __init__(self, spec: ManifoldSpec, sign: int | None = None):
        self.spec = spec
        self.coords = spec.coords
        self.n = spec.dim
        self._sign = sign

    @property
    def sign(self) -> int:
        if self._sign is None:
            self._sign = ricci_sign()
        return self._sign

    def _field(self, comps, variance) -> TensorField:
        return TensorField(self.coords, comps, variance)

    @cached_property
    def g(self) -> TensorField:
        return self._field(np.array(self.spec.metric, dtype=object), "dd")

    @cached_property
    def ginv(self) -> TensorField:
        return self._field(metric_inverse(self.g.components), "uu")

    @cached_property
    def christoffel(self) -> TensorField:
        return self._field(_christoffel(self.coords, self.g.components, self.ginv.components), "udd")

    @cached_property
    def riemann(self) -> TensorField:
        return self._field(_riemann(self.coords, self.christoffel.components), "uddd")

    @cached_property
    def riemann_lower(self) -> TensorField:
        n = self.n
        g, r = self.g.components, self.riemann.components
        out = _obj((n, n, n, n))
        for h in range(n):
            for i in range(h + 1, n):
                for j in range(n):
                    for k in range(n):
                        terms = [mul(g[k, l], r[l, h, i, j]) for l in range(n)
                                 if g[k, l] is not ZERO and r[l, h, i, j] is not ZERO]
                        v = add(*terms)
                        out[h, i, j, k] = v
                        out[i, h, j, k] = mul(-1, v)
        return self._field(out, "dddd")

    @cached_property
    def ricci(self) -> TensorField:
        n = self.n
        r = self.riemann.components
        out = _obj((n, n))
        for j in range(n):
            for k in range(j, n):
                v = mul(self.sign, add(*[r[i, i, j, k] for i in range(n)]))
                out[j, k] = v
                out[k, j] = v
        return self._field(out, "dd")

    @cached_property
    def scalar(self) -> Expr:
        return trace(self.ricci, self)

    @cached_property
    def ricci_mixed(self) -> TensorField:
        """Ri^i_j with the first index raised."""
        return raise_index(self.ricci, 0, self)

    @cached_property
    def ricci_derivative(self) -> TensorField:
        return covariant_derivative(self.ricci, self)

    @cached_property
    def scalar_gradient(self) -> TensorField:
        return self._field([differentiate(self.scalar, c) for c in self.coords], "d")

    @cached_property
    def riemann_derivative(self) -> TensorField:
        return covariant_derivative(self.riemann_lower, self)

    def derivative(self, t: TensorField) -> TensorField:
        return covariant_derivative(t, self)

    def gradient(self, f: Expr) -> TensorField:
        return self._field([differentiate(f, c) for c in self.coords], "d")

    def hessian(self, f: Expr) -> TensorField:
        return covariant_derivative(self.gradient(f), self)


def curvature_pack(spec: ManifoldSpec) -> CurvaturePack:
    return CurvaturePack(spec)


# ------------------------------------------------------------------ numeric evaluation

def evaluate_tensors(items: Mapping[str, TensorField | Expr], spec: ManifoldSpec,
                     env: Mapping[str, np.ndarray], size: int) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Evaluate several tensors at a batch of points with one shared program.

    Returns arrays of shape ``(size, *tensor_shape)`` and the guard mask.
    """
    names, shapes, flat = [], [], []
    for name, t in items.items():
        comps = t.components if isinstance(t, TensorField) else np.array(as_expr(t), dtype=object)
        names.append(name)
        shapes.append(comps.shape)
        flat.extend(comps.reshape(-1).tolist() if comps.ndim else [comps[()]])
    vals, bad = Program(flat).run({**spec.constant_values(), **env}, slots=spec.slots, size=size)
    out = {}
    pos = 0
    for name, shape in zip(names, shapes):
        k = int(np.prod(shape)) if shape else 1
        block = np.stack(vals[pos:pos + k], axis=-1) if k else np.zeros((size, 0))
        out[name] = block.reshape((size,) + shape)
        pos += k
    return out, bad


def normalized_residual(terms: np.ndarray, axis: int = -1) -> np.ndarray:
    """|sum of terms| / (1 + sum of |terms|) along ``axis``."""
    return np.abs(terms.sum(axis=axis)) / (1.0 + np.abs(terms).sum(axis=axis))


@dataclass(frozen=True)
class IdentityResiduals:
    second_bianchi: float
    contracted_bianchi: float
    first_bianchi: float
    ricci_identity: float
    points: int

    def as_dict(self) -> dict[str, float]:
        return {
            "second_bianchi": self.second_bianchi,
            "contracted_bianchi": self.contracted_bianchi,
            "first_bianchi": self.first_bianchi,
            "ricci_identity": self.ricci_identity,
        }

    @property
    def worst(self) -> float:
        return max(self.as_dict().values())


def probe_one_form(coords: Sequence[str]) -> list[Expr]:
    """A one-form with non-constant, non-closed components used to exercise the Ricci identity."""
    xs = [sym(c) for c in coords]
    n = len(xs)
    return [add(1, mul(xs[a], xs[(a + 1) % n]), mul(xs[(a + 2) % n], xs[(a + 2) % n])) for a in range(n)]


def identity_residuals(spec: ManifoldSpec, env: Mapping[str, np.ndarray], size: int,
                       pack: CurvaturePack | None = None) -> IdentityResiduals:
    """Max normalized residuals of the curvature identities over a batch of points.

    Checks the differential Bianchi identity on the lowered Riemann tensor,
    its twice contracted form ``sc_;k = 2 Ri^j_{k;j}``, the cyclic identity
    and the commutator of second covariant derivatives of a probe one-form.
    """
    pack = pack or CurvaturePack(spec)
    omega = TensorField(spec.coords, probe_one_form(spec.coords), "d")
    d2omega = covariant_derivative(covariant_derivative(omega, pack), pack)
    vals, bad = evaluate_tensors({
        "R": pack.riemann_lower, "Rup": pack.riemann, "dR": pack.riemann_derivative,
        "ginv": pack.ginv, "dRi": pack.ricci_derivative, "dsc": pack.scalar_gradient,
        "w": omega, "ddw": d2omega,
    }, spec, env, size)
    ok = ~bad
    R, Rup, dR = vals["R"][ok], vals["Rup"][ok], vals["dR"][ok]
    # R_{hijk;l} + R_{hikl;j} + R_{hilj;k}
    t1 = dR
    t2 = np.einsum("phiklj->phijkl", dR)
    t3 = np.einsum("philjk->phijkl", dR)
    second = normalized_residual(np.stack([t1, t2, t3], axis=-1))
    first = normalized_residual(np.stack([
        R, np.einsum("phjki->phijk", R), np.einsum("phkij->phijk", R)], axis=-1))
    # sc_;k - 2 g^{ij} Ri_{ik;j}
    summands = -2.0 * np.einsum("pij,pikj->pkij", vals["ginv"][ok], vals["dRi"][ok])
    n = spec.dim
    contracted = normalized_residual(np.concatenate(
        [vals["dsc"][ok][:, :, None], summands.reshape(-1, n, n * n)], axis=-1))
    # w_{a;ij} - w_{a;ji} = w_l R^l_{ija}
    ddw = vals["ddw"][ok]
    rhs = -np.einsum("pl,plija->paijl", vals["w"][ok], Rup)
    ricci_id = normalized_residual(np.concatenate(
        [ddw[..., None], -np.einsum("paji->paij", ddw)[..., None], rhs], axis=-1))

    def worst(a):
        return float(a.max()) if a.size else 0.0

    return IdentityResiduals(worst(second), worst(contracted), worst(first), worst(ricci_id), int(ok.sum()))
