"""Residual checks for the curvature conditions and recovery of their associated data.

Every check has two layers.  The ``*_from_samples`` functions take a
GeometrySamples (plain arrays at accepted points) and do all of the work;
the public ``*_check`` functions build those samples from the symbolic
curvature stack of a ManifoldSpec.  The finite-difference pipeline in
``ode`` feeds the same core functions, so both routes share one
definition of each residual.

Residuals are normalized pointwise: |sum of terms| / (1 + sum |terms|),
where the terms are products of the sampled base quantities (metric,
Ricci, scalar curvature, their covariant derivatives).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Any

import numpy as np
import scipy.linalg

from .dsl import ManifoldSpec
from .errors import (
    DimensionTooLow, InvalidRank, MissingLambda, PreconditionNotRR, RicciVanishes,
)
from .expr import Expr, exp, mul
from .sampling import GeometrySamples, SamplingConfig, pack_for, sample_points, symbolic_samples
from .tensors import (
    TensorField, contract, evaluate_tensors, normalized_residual, tensor_product,
)

__all__ = [
    "ConditionReport", "EigenStructure", "eigen_structure",
    "rr_check", "prs_check", "cotton_check", "qe_rank_check", "qe_hessian_check",
    "rr_from_samples", "prs_from_samples", "cotton_from_samples", "qe_rank_from_samples",
    "qe_hessian_from_samples", "rr_structure_check", "StructureReport", "sym_rank_codim",
    "conformal_ricci", "ConformalRicci", "conformal_residual", "prs_qe_alignment",
    "HOLDS", "FAILS", "INCONCLUSIVE",
]

HOLDS, FAILS, INCONCLUSIVE = "holds", "fails", "inconclusive"

NONZERO_FORM = 1e-8        # |beta| or |alpha| must exceed this times (1 + |grad sc|)
NONZERO_SHARE = 0.9        # ... at this share of points
CLUSTER_GAP = 1e-6         # eigenvalue clustering, relative to 1 + spectral radius
RECOVERED_POINTS = 3       # how many points of recovered one-forms go into reports


@dataclass
class ConditionReport:
    id: str
    points_used: int
    points_skipped: int
    max_residual: float
    mean_residual: float
    verdict: str
    recovered: dict[str, Any] | None = None
    notes: list[str] = field(default_factory=list)
    data: dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    def as_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "points_used": int(self.points_used),
            "points_skipped": int(self.points_skipped),
            "max_residual": float(self.max_residual),
            "mean_residual": float(self.mean_residual),
            "verdict": self.verdict,
            "recovered": self.recovered,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ConditionReport":
        return cls(id=d["id"], points_used=d["points_used"], points_skipped=d["points_skipped"],
                   max_residual=d["max_residual"], mean_residual=d["mean_residual"],
                   verdict=d["verdict"], recovered=d["recovered"], notes=list(d["notes"]))

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS


# ------------------------------------------------------------------ helpers

def _quad(v: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    return np.einsum("pi,pij,pj->p", v, ginv, v)


def _norm(v: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(_quad(v, ginv), 0.0))


def ricci_norm_sq(ricci: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    return np.einsum("pia,pjb,pij,pab->p", ginv, ginv, ricci, ricci)


def _pointwise(terms: np.ndarray) -> np.ndarray:
    """Per-point max of the normalized residual; the last axis holds the terms."""
    res = normalized_residual(terms)
    return res.reshape(res.shape[0], -1).max(axis=1) if res.size else np.zeros(res.shape[0])


def _stats(res: np.ndarray) -> tuple[float, float]:
    if res.size == 0:
        return 0.0, 0.0
    return float(res.max()), float(res.mean())


def _verdict(res: np.ndarray, skipped: int, requested: int, tol: float) -> str:
    total = max(requested, skipped + res.size)
    if res.size == 0 or skipped / total >= 0.5:
        return INCONCLUSIVE
    return HOLDS if float(res.max()) < tol else FAILS


def _rows(values: np.ndarray, gs: GeometrySamples) -> list[dict[str, Any]]:
    out = []
    for p in range(min(RECOVERED_POINTS, values.shape[0])):
        v = values[p]
        out.append({"point": gs.point(p), "value": v.tolist() if np.ndim(v) else float(v)})
    return out


def _requested(gs: GeometrySamples, cfg: SamplingConfig) -> int:
    return max(cfg.points, gs.size + gs.skipped)


def _check_ricci(gs: GeometrySamples, cfg: SamplingConfig) -> np.ndarray:
    ri_n = np.sqrt(np.maximum(ricci_norm_sq(gs.ricci, gs.ginv), 0.0))
    if gs.size and np.all(ri_n < cfg.ricci_guard):
        raise RicciVanishes("the Ricci tensor vanishes at every sample point")
    return ri_n


# ------------------------------------------------------------------ Ricci recurrent

def rr_from_samples(gs: GeometrySamples, cfg: SamplingConfig) -> ConditionReport:
    """sc Ri_ij;k - sc_;k Ri_ij = 0 with a nonvanishing recurrence form grad(ln sc)."""
    ri_n = _check_ricci(gs, cfg)
    keep = (np.abs(gs.scalar) >= cfg.sc_guard) & (ri_n >= cfg.ricci_guard)
    skipped = gs.skipped + int((~keep).sum())
    sc, ri, dri, dsc, ginv = gs.scalar[keep], gs.ricci[keep], gs.ricci_d[keep], gs.scalar_d[keep], gs.ginv[keep]
    terms = np.stack([sc[:, None, None, None] * dri, -dsc[:, None, None, :] * ri[:, :, :, None]], axis=-1)
    res = _pointwise(terms)
    mx, mean = _stats(res)
    verdict = _verdict(res, skipped, _requested(gs, cfg), cfg.tol)
    notes: list[str] = []
    beta = dsc / sc[:, None]
    nonzero = _norm(beta, ginv) > NONZERO_FORM * (1.0 + _norm(dsc, ginv))
    share = float(nonzero.mean()) if nonzero.size else 0.0
    recovered = None
    if verdict == HOLDS and share < NONZERO_SHARE:
        verdict = FAILS
        notes.append("beta vanishes: the Ricci tensor is parallel, which is not recurrent")
    if verdict == HOLDS:
        ri_up = np.einsum("pia,pjb,pab->pij", ginv, ginv, ri)
        rn = ri_n[keep]
        dnorm = np.einsum("pij,pijk->pk", ri_up, dri) / rn[:, None]
        nri = np.stack([dri / rn[:, None, None, None],
                        -ri[..., None] * dnorm[:, None, None, :] / (rn ** 2)[:, None, None, None]], axis=-1)
        recovered = {"beta": _rows(beta, _subset_points(gs, keep)),
                     "normalized_ricci_parallel_residual": _stats(_pointwise(nri))[0]}
    data = {"residual": res, "beta": beta, "mask": keep}
    return ConditionReport("RR", int(keep.sum()), skipped, mx, mean, verdict, recovered, notes, data)


def _subset_points(gs: GeometrySamples, keep: np.ndarray) -> GeometrySamples:
    return gs.subset(keep) if keep.dtype == bool and not keep.all() else gs


# ------------------------------------------------------------------ pseudo Ricci symmetric

def prs_terms(sc, ri, dri, dsc) -> np.ndarray:
    """The four terms of 2 sc Ri_ij;k - 2 sc_;k Ri_ij - sc_;i Ri_kj - sc_;j Ri_ik."""
    return np.stack([
        2.0 * sc[:, None, None, None] * dri,
        -2.0 * dsc[:, None, None, :] * ri[:, :, :, None],
        -np.einsum("pi,pkj->pijk", dsc, ri),
        -np.einsum("pj,pik->pijk", dsc, ri),
    ], axis=-1)


def prs_alpha(gs: GeometrySamples) -> np.ndarray:
    """alpha = grad(ln |Ri|^2) / 4."""
    ri_up = np.einsum("pia,pjb,pab->pij", gs.ginv, gs.ginv, gs.ricci)
    return np.einsum("pij,pijk->pk", ri_up, gs.ricci_d) / (2.0 * ricci_norm_sq(gs.ricci, gs.ginv))[:, None]


def prs_from_samples(gs: GeometrySamples, cfg: SamplingConfig) -> ConditionReport:
    ri_n = _check_ricci(gs, cfg)
    sc_small = np.abs(gs.scalar) < cfg.sc_guard
    keep = ~sc_small & (ri_n >= cfg.ricci_guard)
    skipped = gs.skipped + int((~keep).sum())
    sub = _subset_points(gs, keep)
    res = _pointwise(prs_terms(sub.scalar, sub.ricci, sub.ricci_d, sub.scalar_d))
    mx, mean = _stats(res)
    verdict = _verdict(res, skipped, _requested(gs, cfg), cfg.tol)
    notes = []
    if sc_small.any():
        notes.append(f"skipped {int(sc_small.sum())} points with vanishing scalar curvature")
    alpha = prs_alpha(sub) if sub.size else np.zeros((0, gs.n))
    a_n = _norm(alpha, sub.ginv)
    nonzero = a_n > NONZERO_FORM * (1.0 + _norm(sub.scalar_d, sub.ginv))
    share = float(nonzero.mean()) if nonzero.size else 0.0
    recovered = None
    if verdict == HOLDS and share < NONZERO_SHARE:
        verdict = FAILS
        notes.append("alpha vanishes at most points")
    ri_alpha = np.einsum("pij,pjk,pk->pi", sub.ricci, sub.ginv, alpha)
    ratio = _norm(ri_alpha, sub.ginv) / np.maximum(ri_n[keep] * a_n, 1e-300)
    half_grad = sub.scalar_d / (2.0 * sub.scalar[:, None])
    strong = np.abs(sub.scalar) > 1e-6
    diff = _norm(alpha - half_grad, sub.ginv) / np.maximum(a_n + _norm(half_grad, sub.ginv), 1e-300)
    data = {"residual": res, "alpha": alpha, "ricci_alpha_ratio": ratio,
            "alpha_vs_half_grad_ln_sc": np.where(strong, diff, 0.0), "mask": keep}
    if verdict == HOLDS:
        recovered = {"alpha": _rows(alpha, sub),
                     "ricci_alpha_ratio": _stats(ratio)[0],
                     "alpha_vs_half_grad_ln_sc": _stats(data["alpha_vs_half_grad_ln_sc"])[0]}
    return ConditionReport("PRS", int(keep.sum()), skipped, mx, mean, verdict, recovered, notes, data)


# ------------------------------------------------------------------ Cotton

def cotton_terms(gs: GeometrySamples) -> np.ndarray:
    """Terms of C_ijk = S_ij;k - S_ik;j written through Ri_;k, sc_;k and g."""
    n = gs.n
    c = 1.0 / (2 * n - 2)
    dri, dsc, g = gs.ricci_d, gs.scalar_d, gs.g
    return np.stack([
        dri,
        -c * dsc[:, None, None, :] * g[:, :, :, None],
        -np.einsum("pikj->pijk", dri),
        c * dsc[:, None, :, None] * g[:, :, None, :],
    ], axis=-1)


def cotton_from_samples(gs: GeometrySamples, cfg: SamplingConfig) -> ConditionReport:
    if gs.n < 3:
        raise DimensionTooLow("the Cotton tensor is defined for dimension at least 3")
    res = _pointwise(cotton_terms(gs))
    mx, mean = _stats(res)
    verdict = _verdict(res, gs.skipped, _requested(gs, cfg), cfg.tol)
    return ConditionReport("CO", gs.size, gs.skipped, mx, mean, verdict, None, [], {"residual": res})


# ------------------------------------------------------------------ quasi Einstein (rank)

@dataclass(frozen=True)
class EigenStructure:
    """Eigenvalues of g^-1 Ri at one point, grouped into clusters."""

    values: np.ndarray
    vectors: np.ndarray
    clusters: tuple[tuple[float, int, tuple[int, ...]], ...]   # (mean, multiplicity, indices)

    @property
    def multiplicities(self) -> tuple[int, ...]:
        return tuple(c[1] for c in self.clusters)


def eigen_structure(ricci: np.ndarray, g: np.ndarray, rel_gap: float = CLUSTER_GAP) -> EigenStructure:
    """Generalized symmetric eigenproblem Ri v = mu g v, clustered by gaps."""
    vals, vecs = scipy.linalg.eigh(ricci, g)
    radius = float(np.max(np.abs(vals))) if vals.size else 0.0
    gap = rel_gap * (1.0 + radius)
    groups: list[list[int]] = [[0]]
    for k in range(1, len(vals)):
        if vals[k] - vals[k - 1] <= gap:
            groups[-1].append(k)
        else:
            groups.append([k])
    clusters = tuple((float(np.mean(vals[idx])), len(idx), tuple(idx)) for idx in groups)
    return EigenStructure(vals, vecs, clusters)


def _minor_residual(t: np.ndarray) -> float:
    """Largest normalized 2x2 minor of a symmetric matrix."""
    n = t.shape[0]
    worst = 0.0
    for i in range(n):
        for k in range(i + 1, n):
            for j in range(n):
                for l in range(j + 1, n):
                    a = t[i, j] * t[k, l]
                    b = t[i, l] * t[k, j]
                    worst = max(worst, abs(a - b) / (1.0 + abs(a) + abs(b)))
    return worst


def qe_rank_from_samples(gs: GeometrySamples, cfg: SamplingConfig) -> ConditionReport:
    """Ri - a g of rank exactly one, decided by eigenvalue clusters and by 2x2 minors."""
    ri_n = _check_ricci(gs, cfg)
    keep = ri_n >= cfg.ricci_guard
    skipped = gs.skipped + int((~keep).sum())
    sub = _subset_points(gs, keep)
    n = gs.n
    res, eig_ok, minor_ok = [], [], []
    a_vals, b_vals, mu_vals, omegas = [], [], [], []
    einstein = 0
    for p in range(sub.size):
        g, ri = sub.g[p], sub.ricci[p]
        es = eigen_structure(ri, g)
        radius = float(np.max(np.abs(es.values)))
        cands = [c for c in es.clusters if c[1] == n - 1]
        if len(es.clusters) == 1:
            einstein += 1
        best = None
        for mean, mult, idx in (cands or es.clusters):
            r = _minor_residual(ri - mean * g)
            if best is None or r < best[0]:
                best = (r, mean, idx)
        r, a, idx = best
        t_size = float(np.max(np.abs(ri - a * g)))
        structured = len(es.clusters) == 2 and sorted(es.multiplicities) == sorted([n - 1, 1])
        eig_ok.append(structured)
        minor_ok.append(r < cfg.tol and t_size > CLUSTER_GAP * (1.0 + radius))
        res.append(r)
        simple = [c for c in es.clusters if c[2] != idx]
        if structured and simple:
            mu = simple[0][0]
            v = es.vectors[:, simple[0][2][0]]
            omegas.append(g @ v)
            mu_vals.append(mu)
        else:
            mu_vals.append(np.nan)
            omegas.append(np.full(n, np.nan))
        a_vals.append(a)
        b_vals.append(float(sub.scalar[p]) - n * a)
    res_a = np.asarray(res)
    mx, mean = _stats(res_a)
    requested = _requested(gs, cfg)
    notes = []
    total = max(requested, skipped + len(res))
    if len(res) == 0 or skipped / total >= 0.5:
        verdict = INCONCLUSIVE
    else:
        eig_verdict = all(eig_ok)
        minor_verdict = all(minor_ok)
        verdict = HOLDS if (eig_verdict and minor_verdict) else FAILS
        if eig_verdict != minor_verdict:
            notes.append("eigenvalue clustering and 2x2 minors disagree")
        notes.append(f"eigen clustering verdict: {HOLDS if eig_verdict else FAILS}")
        notes.append(f"minor criterion verdict: {HOLDS if minor_verdict else FAILS}")
        if einstein > len(res) / 2:
            verdict = FAILS
            notes.append("Einstein: b=0")
    a_arr, b_arr = np.asarray(a_vals), np.asarray(b_vals)
    om = np.asarray(omegas).reshape(-1, n)
    recovered = None
    if verdict == HOLDS:
        recovered = {"a": _rows(a_arr, sub), "b": _rows(b_arr, sub), "omega": _rows(om, sub)}
    data = {"residual": res_a, "a": a_arr, "b": b_arr, "mu": np.asarray(mu_vals), "omega": om,
            "eigen_ok": np.asarray(eig_ok), "minor_ok": np.asarray(minor_ok), "mask": keep}
    return ConditionReport("QE1", len(res), skipped, mx, mean, verdict, recovered, notes, data)


# ------------------------------------------------------------------ quasi Einstein (Hessian)

def hessian_bianchi_terms(gs: GeometrySamples) -> np.ndarray:
    """Terms of B(T)_k = 2 g^ij T_ik;j - g^ij T_ij;k for T the Hessian of the scalar function."""
    n = gs.n
    a = 2.0 * np.einsum("pij,pikj->pkij", gs.ginv, gs.lam_ddd)
    b = -np.einsum("pij,pijk->pkij", gs.ginv, gs.lam_ddd)
    return np.concatenate([a.reshape(-1, n, n * n), b.reshape(-1, n, n * n)], axis=-1)


def qe_hessian_from_samples(gs: GeometrySamples, cfg: SamplingConfig) -> ConditionReport:
    """Ri = (n-2) Hess(lambda)."""
    if gs.lam_dd is None:
        raise MissingLambda("no scalar function available")
    n = gs.n
    terms = np.stack([gs.ricci, -(n - 2) * gs.lam_dd], axis=-1)
    res = _pointwise(terms)
    mx, mean = _stats(res)
    verdict = _verdict(res, gs.skipped, _requested(gs, cfg), cfg.tol)
    recovered = None
    data: dict[str, Any] = {"residual": res}
    if gs.lam_ddd is not None:
        bres = _pointwise(hessian_bianchi_terms(gs))
        data["hessian_bianchi"] = bres
        if verdict == HOLDS:
            recovered = {"hessian_bianchi_residual": _stats(bres)[0]}
    return ConditionReport("QE2", gs.size, gs.skipped, mx, mean, verdict, recovered, [], data)


# ------------------------------------------------------------------ symbolic entry points

def rr_check(spec: ManifoldSpec, cfg: SamplingConfig | None = None) -> ConditionReport:
    cfg = cfg or SamplingConfig()
    return rr_from_samples(symbolic_samples(spec, cfg), cfg)


def prs_check(spec: ManifoldSpec, cfg: SamplingConfig | None = None) -> ConditionReport:
    cfg = cfg or SamplingConfig()
    return prs_from_samples(symbolic_samples(spec, cfg), cfg)


def cotton_check(spec: ManifoldSpec, cfg: SamplingConfig | None = None) -> ConditionReport:
    cfg = cfg or SamplingConfig()
    if spec.dim < 3:
        raise DimensionTooLow("the Cotton tensor is defined for dimension at least 3")
    return cotton_from_samples(symbolic_samples(spec, cfg), cfg)


def qe_rank_check(spec: ManifoldSpec, cfg: SamplingConfig | None = None) -> ConditionReport:
    cfg = cfg or SamplingConfig()
    return qe_rank_from_samples(symbolic_samples(spec, cfg, derivatives=False), cfg)


def qe_hessian_check(spec: ManifoldSpec, cfg: SamplingConfig | None = None) -> ConditionReport:
    cfg = cfg or SamplingConfig()
    if spec.lam is None:
        raise MissingLambda(f"{spec.name} declares no scalar function")
    return qe_hessian_from_samples(symbolic_samples(spec, cfg, derivatives=False, lam_order=3), cfg)


# ------------------------------------------------------------------ structure of recurrent metrics

@dataclass(frozen=True)
class StructureReport:
    eigen_deviation: float        # max |eig - {sc/2, sc/2, 0, ...}| / (1 + |sc|)
    ricci_square: float           # normalized Ri^k_i Ri^i_l - sc/2 Ri^k_l
    scalar_norm: float            # max |sc^2 - 2|Ri|^2| / sc^2
    beta_eigen: float             # max |Ri beta - sc/2 beta| / |beta|
    points: int

    def holds(self, eig_tol: float = 1e-8, tol: float = 1e-9) -> bool:
        return (self.eigen_deviation < eig_tol and self.ricci_square < tol
                and self.scalar_norm < tol and self.beta_eigen < tol)


def rr_structure_from_samples(gs: GeometrySamples) -> StructureReport:
    n = gs.n
    keep = np.abs(gs.scalar) > 1e-10
    gs = _subset_points(gs, keep)
    sc = gs.scalar
    devs = []
    for p in range(gs.size):
        vals = scipy.linalg.eigh(gs.ricci[p], gs.g[p], eigvals_only=True)
        expected = np.sort(np.array([sc[p] / 2, sc[p] / 2] + [0.0] * (n - 2)))
        devs.append(float(np.max(np.abs(np.sort(vals) - expected))) / (1.0 + abs(sc[p])))
    mixed = np.einsum("pka,pai->pki", gs.ginv, gs.ricci)
    prod = np.einsum("pki,pil->pkli", mixed, mixed)
    terms = np.concatenate([prod, (-0.5 * sc[:, None, None] * mixed)[..., None]], axis=-1)
    sq = _stats(_pointwise(terms))[0]
    norm_sq = ricci_norm_sq(gs.ricci, gs.ginv)
    sn = float(np.max(np.abs(sc ** 2 - 2 * norm_sq) / sc ** 2)) if gs.size else 0.0
    beta = gs.scalar_d / sc[:, None]
    ri_beta = np.einsum("pij,pjk,pk->pi", gs.ricci, gs.ginv, beta)
    dev = _norm(ri_beta - 0.5 * sc[:, None] * beta, gs.ginv) / np.maximum(_norm(beta, gs.ginv), 1e-300)
    be = float(dev.max()) if dev.size else 0.0
    return StructureReport(max(devs, default=0.0), sq, sn, be, gs.size)


def rr_structure_check(report: ConditionReport, spec: ManifoldSpec,
                       cfg: SamplingConfig | None = None) -> StructureReport:
    """Eigenvalue pattern and algebraic identities that a recurrent Ricci tensor must satisfy."""
    if report.id != "RR" or report.verdict != HOLDS:
        raise PreconditionNotRR(f"needs a holding RR report, got {report.id} {report.verdict}")
    cfg = cfg or SamplingConfig()
    return rr_structure_from_samples(symbolic_samples(spec, cfg))


# ------------------------------------------------------------------ PRS with a = 0

def prs_qe_alignment(gs: GeometrySamples, cfg: SamplingConfig) -> dict[str, float]:
    """For a PRS metric whose Ricci tensor has rank one: g(omega, alpha) and Ri - sc omega omega/|omega|^2."""
    qe = qe_rank_from_samples(gs, cfg)
    sub = _subset_points(gs, qe.data["mask"])
    alpha = prs_alpha(sub)
    om = qe.data["omega"]
    cos = np.abs(np.einsum("pi,pij,pj->p", om, sub.ginv, alpha)) / np.maximum(
        _norm(om, sub.ginv) * _norm(alpha, sub.ginv), 1e-300)
    outer = np.einsum("pi,pj->pij", om, om) / _quad(om, sub.ginv)[:, None, None]
    terms = np.stack([sub.ricci, -sub.scalar[:, None, None] * outer], axis=-1)
    return {"a_max": float(np.max(np.abs(qe.data["a"]))),
            "omega_alpha": float(np.nanmax(cos)),
            "rank_one_residual": float(np.nanmax(_pointwise(terms)))}


# ------------------------------------------------------------------ conformal change

@dataclass
class ConformalRicci:
    spec: ManifoldSpec          # the rescaled metric exp(2 lambda) g
    formula: TensorField        # Ricci of the rescaled metric from the transformation rule
    direct: TensorField         # Ricci of the rescaled metric computed from scratch
    terms: list[TensorField]    # additive pieces of the formula, for residual normalization


def conformal_ricci(spec: ManifoldSpec, lam: Expr | None = None) -> ConformalRicci:
    """Ricci of exp(2 lambda) g, both by the transformation rule and directly."""
    lam = lam if lam is not None else spec.lam
    if lam is None:
        raise MissingLambda(f"{spec.name} declares no scalar function")
    pack = pack_for(spec)
    n = spec.dim
    factor = exp(mul(2, lam))
    hat = spec.replace(
        name=f"{spec.name}-conformal",
        metric=tuple(tuple(mul(factor, e) for e in row) for row in spec.metric),
        lam=None)
    grad = pack.gradient(lam)
    hess = pack.hessian(lam)
    laplace = contract(hess, 0, 1, pack).components[()]
    grad_sq = contract(tensor_product(grad, grad), 0, 1, pack).components[()]
    terms = [
        pack.ricci,
        hess.scale(-(n - 2)),
        tensor_product(grad, grad).scale(n - 2),
        pack.g.scale(mul(-1, laplace)),
        pack.g.scale(mul(-(n - 2), grad_sq)),
    ]
    formula = terms[0]
    for t in terms[1:]:
        formula = formula + t
    direct = pack_for(hat).ricci
    return ConformalRicci(hat, formula, direct, terms)


def conformal_residual(result: ConformalRicci, spec: ManifoldSpec, cfg: SamplingConfig) -> float:
    """Max normalized difference between the transformation rule and the direct Ricci."""
    from .sampling import metric_acceptor
    pts, _ = sample_points(spec.domain, cfg, metric_acceptor(result.spec))
    size = len(next(iter(pts.values())))
    items = {f"t{k}": t for k, t in enumerate(result.terms)}
    items["direct"] = result.direct
    vals, bad = evaluate_tensors(items, spec, pts, size)
    stack = [vals[f"t{k}"][~bad] for k in range(len(result.terms))] + [-vals["direct"][~bad]]
    return _stats(_pointwise(np.stack(stack, axis=-1)))[0]


# ------------------------------------------------------------------ determinantal codimension

def sym_rank_codim(n: int, r: int) -> int:
    """Codimension of symmetric n x n matrices of rank at most r."""
    if not (isinstance(n, int) and isinstance(r, int)) or n < 1 or not 0 <= r <= n:
        raise InvalidRank(f"rank {r} is not between 0 and {n}")
    return comb(n - r + 1, 2)
