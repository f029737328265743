"""Shared builders for the test suite."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from ricciclass.dsl import ManifoldSpec, parse_manifold
from ricciclass.tensors import evaluate_tensors

SPHERE2 = """
manifold sphere2
dim 2
coords th ph
domain th in [0.2, 2.9]
domain ph in [0, 6]
metric diag: 1, sin(th)^2
"""

SPHERE3 = """
manifold sphere3
dim 3
coords a b c
domain a in [0.2, 2.9]
domain b in [0.2, 2.9]
domain c in [0, 6]
metric diag: 1, sin(a)^2, sin(a)^2*sin(b)^2
"""

SPHERE4 = """
manifold sphere4
dim 4
coords a b c d
domain a in [0.3, 2.8]
domain b in [0.3, 2.8]
domain c in [0.3, 2.8]
domain d in [0, 6]
metric diag: 1, sin(a)^2, sin(a)^2*sin(b)^2, sin(a)^2*sin(b)^2*sin(c)^2
"""


def flat(n: int) -> ManifoldSpec:
    coords = " ".join(f"x{i + 1}" for i in range(n))
    return parse_manifold(f"manifold flat{n}\ndim {n}\ncoords {coords}\nmetric diag: "
                          + ", ".join(["1"] * n) + "\n")


def sphere(n: int) -> ManifoldSpec:
    return parse_manifold({2: SPHERE2, 3: SPHERE3, 4: SPHERE4}[n])


def perturbed_metric(n: int, seed: int) -> ManifoldSpec:
    """g = I + 0.1 x1 x2 S on [-0.5, 0.5]^n with S a seeded symmetric matrix of small rationals."""
    rng = np.random.default_rng(seed)
    coords = [f"x{i + 1}" for i in range(n)]
    lines = [f"manifold perturbed_{n}_{seed}", f"dim {n}", "coords " + " ".join(coords)]
    lines += [f"domain {c} in [-0.5, 0.5]" for c in coords]
    for i in range(n):
        for j in range(i, n):
            s = Fraction(int(rng.integers(-10, 11)), 10)
            # a second monomial keeps every coordinate in play
            t = Fraction(int(rng.integers(-10, 11)), 10)
            extra = f" + 0.1*({t})*{coords[(i + j) % n]}^2"
            base = "1 + " if i == j else ""
            lines.append(f"metric g[{i + 1}][{j + 1}] = {base}0.1*({s})*x1*x2{extra}")
    return parse_manifold("\n".join(lines) + "\n")


def points(spec: ManifoldSpec, count: int, seed: int = 0, margin: float = 0.05) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    out = {}
    for c in spec.coords:
        lo, hi = spec.domain[c]
        pad = margin * (hi - lo)
        out[c] = rng.uniform(lo + pad, hi - pad, count)
    return out


def values(spec: ManifoldSpec, tensor, pts: dict[str, np.ndarray]) -> np.ndarray:
    size = len(next(iter(pts.values())))
    out, bad = evaluate_tensors({"t": tensor}, spec, pts, size)
    assert not bad.any()
    return out["t"]


def rel_diff(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / (1.0 + np.max(np.abs(b))))
