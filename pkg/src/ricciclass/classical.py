"""Schouten, Cotton and Weyl tensors, the divergence of Weyl and the Bianchi operator."""

from __future__ import annotations

from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import DimensionTooLow, NotSymmetric
from .expr import ZERO, add, mul
from .tensors import CurvaturePack, TensorField, contract, covariant_derivative, divergence

__all__ = ["ClassicalPack", "schouten_cotton", "weyl_and_divergence", "bianchi_operator",
           "schouten", "cotton", "weyl"]


def schouten(pack: CurvaturePack) -> TensorField:
    """S = Ri - sc/(2n-2) g."""
    n = pack.n
    if n < 3:
        raise DimensionTooLow("the Schouten tensor vanishes identically in dimension 2")
    coef = mul(Fraction(-1, 2 * n - 2), pack.scalar)
    return pack.ricci + pack.g.scale(coef)


def _antisymmetrize_last(dt: TensorField) -> TensorField:
    """C_ijk = T_ij;k - T_ik;j from the covariant derivative of a symmetric 2-tensor."""
    n = dt.dim
    d = dt.components
    out = np.empty((n, n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if k == j:
                    out[i, j, k] = ZERO
                elif k > j:
                    out[i, j, k] = add(d[i, j, k], mul(-1, d[i, k, j]))
                else:
                    out[i, j, k] = mul(-1, out[i, k, j])
    return TensorField(dt.coords, out, "ddd")


def cotton(pack: CurvaturePack, s: TensorField | None = None) -> TensorField:
    s = s if s is not None else schouten(pack)
    return _antisymmetrize_last(covariant_derivative(s, pack))


def schouten_cotton(pack: CurvaturePack) -> tuple[TensorField, TensorField]:
    s = schouten(pack)
    return s, cotton(pack, s)


def weyl(pack: CurvaturePack) -> TensorField:
    """Totally trace-free part of the lowered Riemann tensor (zero for n = 3)."""
    n = pack.n
    out = np.empty((n,) * 4, dtype=object)
    if n <= 3:
        out.fill(ZERO)
        return TensorField(pack.coords, out, "dddd")
    g, ri, r = pack.g.components, pack.ricci.components, pack.riemann_lower.components
    a = mul(Fraction(1, (n - 1) * (n - 2)), pack.scalar)
    b = Fraction(-1, n - 2)
    for h in range(n):
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    out[h, i, j, k] = add(
                        r[h, i, j, k],
                        mul(a, add(mul(g[h, k], g[i, j]), mul(-1, g[h, j], g[i, k]))),
                        mul(b, add(mul(ri[h, k], g[i, j]), mul(-1, ri[h, j], g[i, k]),
                                   mul(ri[i, j], g[h, k]), mul(-1, ri[i, k], g[h, j]))),
                    )
    return TensorField(pack.coords, out, "dddd")


def weyl_and_divergence(pack: CurvaturePack) -> tuple[TensorField, TensorField]:
    """W and div(W)_ijk = g^{hl} W_hijk;l."""
    w = weyl(pack)
    if pack.n <= 3:
        out = np.empty((pack.n,) * 3, dtype=object)
        out.fill(ZERO)
        return w, TensorField(pack.coords, out, "ddd")
    return w, divergence(w, pack, pos=0)


def bianchi_operator(t: TensorField, pack: CurvaturePack) -> TensorField:
    """B(T)_k = 2 g^{ij} T_ik;j - g^{ij} T_ij;k for a symmetric covariant 2-tensor."""
    if t.variance != "dd":
        raise NotSymmetric(f"expected a covariant 2-tensor, got variance {t.variance!r}")
    if not t.is_symmetric():
        raise NotSymmetric("tensor is not symmetric")
    dt = covariant_derivative(t, pack)
    div = contract(dt, 0, 2, pack)          # g^{ij} T_ik;j -> index k
    grad_tr = contract(dt, 0, 1, pack)      # g^{ij} T_ij;k
    return div.scale(2) - grad_tr


class ClassicalPack:
    """Lazily computed Schouten, Cotton, Weyl and div(W) of a curvature pack."""

    def __init__(self, pack: CurvaturePack):
        self.pack = pack

    @cached_property
    def schouten(self) -> TensorField:
        return schouten(self.pack)

    @cached_property
    def cotton(self) -> TensorField:
        return cotton(self.pack, self.schouten)

    @cached_property
    def weyl(self) -> TensorField:
        return weyl(self.pack)

    @cached_property
    def weyl_divergence(self) -> TensorField:
        return weyl_and_divergence(self.pack)[1]
