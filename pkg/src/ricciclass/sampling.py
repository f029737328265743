"""Seeded sample points and the arrays of geometric data the condition checks consume."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .dsl import ManifoldSpec, metric_values, positive_definite
from .errors import EmptyDomain, MissingLambda
from .tensors import CurvaturePack, evaluate_tensors

__all__ = ["SamplingConfig", "sample_points", "GeometrySamples", "symbolic_samples", "pack_for"]


@dataclass(frozen=True)
class SamplingConfig:
    """How many points to draw, from where, and the thresholds applied to them."""

    points: int = 50
    seed: int = 42
    tol: float = 1e-8
    sc_guard: float = 1e-10
    ricci_guard: float = 1e-10
    domain: Mapping[str, tuple[float, float]] | None = None
    margin: float = 0.0

    def __post_init__(self):
        if self.points < 1:
            raise ValueError("points must be at least 1")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")

    def with_(self, **changes) -> "SamplingConfig":
        return replace(self, **changes)


Acceptor = Callable[[Mapping[str, np.ndarray], int], np.ndarray]


def sample_points(domain: Mapping[str, tuple[float, float]], cfg: SamplingConfig,
                  accept: Acceptor | None = None) -> tuple[dict[str, np.ndarray], int]:
    """Draw ``cfg.points`` uniform points from the box, skipping rejected candidates.

    Up to ten times the requested count is drawn in one seeded batch; the
    first accepted candidates are kept.  Returns the points (one array per
    coordinate) and the number of requested points that could not be filled.
    """
    box = dict(domain)
    if cfg.domain:
        box.update(cfg.domain)
    for c, (lo, hi) in box.items():
        if not hi > lo:
            raise EmptyDomain(f"domain of {c} is [{lo}, {hi}]")
    rng = np.random.default_rng(cfg.seed)
    total = 10 * cfg.points
    cand = {}
    for c, (lo, hi) in box.items():
        pad = cfg.margin * (hi - lo)
        cand[c] = rng.uniform(lo + pad, hi - pad, total)
    ok = np.ones(total, dtype=bool) if accept is None else np.asarray(accept(cand, total), dtype=bool)
    keep = np.flatnonzero(ok)[: cfg.points]
    pts = {c: v[keep] for c, v in cand.items()}
    return pts, cfg.points - len(keep)


def metric_acceptor(spec: ManifoldSpec) -> Acceptor:
    def accept(env, size):
        g, bad = metric_values(spec, env, size)
        ok = ~bad
        with np.errstate(all="ignore"):
            ok &= np.all(np.isfinite(g), axis=(1, 2))
            if ok.any():
                ok[ok] = positive_definite(g[ok])
        return ok
    return accept


@dataclass
class GeometrySamples:
    """Geometric data at a batch of accepted points, as plain arrays.

    Leading axis indexes points.  Covariant derivative indices come last.
    Optional fields are None when not requested.
    """

    coords: tuple[str, ...]
    points: dict[str, np.ndarray]
    g: np.ndarray
    ginv: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    ricci_d: np.ndarray | None = None
    scalar_d: np.ndarray | None = None
    lam_d: np.ndarray | None = None
    lam_dd: np.ndarray | None = None
    lam_ddd: np.ndarray | None = None
    skipped: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def size(self) -> int:
        return self.g.shape[0]

    def point(self, p: int) -> dict[str, float]:
        return {c: float(self.points[c][p]) for c in self.coords}

    def subset(self, mask: np.ndarray) -> "GeometrySamples":
        out = {}
        for name in ("g", "ginv", "ricci", "scalar", "ricci_d", "scalar_d", "lam_d", "lam_dd", "lam_ddd"):
            v = getattr(self, name)
            out[name] = None if v is None else v[mask]
        pts = {c: v[mask] for c, v in self.points.items()}
        dropped = int(np.size(mask) - np.count_nonzero(mask)) if mask.dtype == bool else 0
        return replace(self, points=pts, skipped=self.skipped + dropped, notes=list(self.notes), **out)


_PACKS: "OrderedDict[ManifoldSpec, CurvaturePack]" = OrderedDict()


def pack_for(spec: ManifoldSpec) -> CurvaturePack:
    """Memoised curvature pack (specs are immutable values)."""
    pack = _PACKS.get(spec)
    if pack is None:
        pack = CurvaturePack(spec)
        _PACKS[spec] = pack
        while len(_PACKS) > 32:
            _PACKS.popitem(last=False)
    return pack


def symbolic_samples(spec: ManifoldSpec, cfg: SamplingConfig, derivatives: bool = True,
                     lam_order: int = 0) -> GeometrySamples:
    """Evaluate the symbolic curvature stack of ``spec`` at seeded points.

    ``derivatives`` adds the covariant derivatives of Ricci and scalar
    curvature; ``lam_order`` (0 to 3) adds that many covariant derivatives
    of the spec's scalar function.
    """
    pts, unfilled = sample_points(spec.domain, cfg, metric_acceptor(spec))
    size = len(next(iter(pts.values())))
    pack = pack_for(spec)
    items = {"g": pack.g, "ginv": pack.ginv, "ricci": pack.ricci, "scalar": pack.scalar}
    if derivatives:
        items["ricci_d"] = pack.ricci_derivative
        items["scalar_d"] = pack.scalar_gradient
    if lam_order:
        if spec.lam is None:
            raise MissingLambda(f"{spec.name} declares no scalar function")
        d1 = pack.gradient(spec.lam)
        items["lam_d"] = d1
        if lam_order >= 2:
            d2 = pack.derivative(d1)
            items["lam_dd"] = d2
            if lam_order >= 3:
                items["lam_ddd"] = pack.derivative(d2)
    vals, bad = evaluate_tensors(items, spec, pts, size)
    gs = GeometrySamples(coords=spec.coords, points=pts, skipped=unfilled, **{
        k: vals[k] for k in items})
    if bad.any():
        gs = gs.subset(~bad)
    return gs
