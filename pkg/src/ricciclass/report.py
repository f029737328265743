"""Condition dispatch, classification and the JSON report document."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from . import __version__
from .conditions import (
    FAILS, HOLDS, ConditionReport, cotton_from_samples, prs_from_samples, qe_hessian_from_samples,
    qe_rank_from_samples, rr_from_samples,
)
from .dsl import ManifoldSpec, spec_hash
from .errors import DimensionTooLow, MissingLambda, RicciVanishes
from .sampling import GeometrySamples, SamplingConfig, symbolic_samples

__all__ = ["CONDITIONS", "run_condition", "run_on_samples", "classify", "ReportDocument",
           "emit_report", "parse_report"]

CONDITIONS = ("RR", "PRS", "CO", "QE1", "QE2")

_CORES = {
    "RR": rr_from_samples,
    "PRS": prs_from_samples,
    "CO": cotton_from_samples,
    "QE1": qe_rank_from_samples,
    "QE2": qe_hessian_from_samples,
}

_ALIASES = {"rr": "RR", "prs": "PRS", "co": "CO", "cotton": "CO", "qe1": "QE1", "qe": "QE1",
            "qe2": "QE2"}


def condition_id(name: str) -> str:
    key = name.strip()
    if key.upper() in CONDITIONS:
        return key.upper()
    if key.lower() in _ALIASES:
        return _ALIASES[key.lower()]
    raise ValueError(f"unknown condition {name!r}")


def _vanishing_report(cid: str, gs: GeometrySamples) -> ConditionReport:
    return ConditionReport(cid, gs.size, gs.skipped, 0.0, 0.0, FAILS, None,
                           ["Ricci tensor vanishes at every sample point; the condition needs Ri nonzero"])


def run_on_samples(cid: str, gs: GeometrySamples, cfg: SamplingConfig) -> ConditionReport:
    """Run one condition on precomputed samples; a vanishing Ricci tensor is a failure."""
    cid = condition_id(cid)
    try:
        report = _CORES[cid](gs, cfg)
    except RicciVanishes:
        report = _vanishing_report(cid, gs)
    if cid == "QE1":
        _add_eigen_summary(report)
    return report


def _add_eigen_summary(report: ConditionReport) -> None:
    ok = report.data.get("eigen_ok")
    if ok is None or ok.size == 0:
        return
    shape = "(n-1, 1)"
    report.notes.append(f"eigenvalue pattern {shape} at {int(ok.sum())} of {ok.size} points")


def _needs(cids: Iterable[str], spec: ManifoldSpec) -> tuple[bool, int]:
    cids = set(cids)
    derivatives = bool(cids & {"RR", "PRS", "CO"})
    lam = 3 if "QE2" in cids and spec.lam is not None else 0
    return derivatives, lam


def run_condition(spec: ManifoldSpec, cid: str, cfg: SamplingConfig | None = None) -> ConditionReport:
    cfg = cfg or SamplingConfig()
    cid = condition_id(cid)
    if cid == "QE2" and spec.lam is None:
        raise MissingLambda(f"{spec.name} declares no scalar function")
    if cid == "CO" and spec.dim < 3:
        raise DimensionTooLow("the Cotton tensor is defined for dimension at least 3")
    derivatives, lam = _needs([cid], spec)
    return run_on_samples(cid, symbolic_samples(spec, cfg, derivatives, lam), cfg)


def classify(spec: ManifoldSpec, cfg: SamplingConfig | None = None,
             conditions: Sequence[str] = CONDITIONS) -> list[ConditionReport]:
    """Run every applicable condition on one shared sample set and add consistency notes."""
    cfg = cfg or SamplingConfig()
    cids = [condition_id(c) for c in conditions]
    if spec.lam is None:
        cids = [c for c in cids if c != "QE2"]
    if spec.dim < 3:
        cids = [c for c in cids if c != "CO"]
    derivatives, lam = _needs(cids, spec)
    gs = symbolic_samples(spec, cfg, derivatives, lam)
    reports = [run_on_samples(c, gs, cfg) for c in cids]
    consistency_notes(reports, spec.dim)
    return reports


def consistency_notes(reports: Sequence[ConditionReport], n: int) -> None:
    """Append notes stating whether the verdicts respect the known implications and exclusions."""
    by = {r.id: r for r in reports}

    def holds(c):
        return c in by and by[c].verdict == HOLDS

    def note(c, text):
        if c in by:
            by[c].notes.append(text)

    if holds("RR") and holds("PRS"):
        note("PRS", "inconsistent: a Ricci tensor cannot be both recurrent and pseudo Ricci symmetric")
    if holds("RR") and "CO" in by:
        if holds("CO"):
            note("CO", "inconsistent: a Ricci recurrent metric cannot have vanishing Cotton tensor")
        else:
            note("CO", "consistent: Ricci recurrent metrics are never Cotton flat")
    if holds("RR") and "QE1" in by:
        if n == 3:
            note("QE1", "consistent: a Ricci recurrent metric in dimension three is quasi Einstein"
                 if holds("QE1") else
                 "inconsistent: a Ricci recurrent metric in dimension three must be quasi Einstein")
        elif holds("QE1"):
            note("QE1", "inconsistent: above dimension three a Ricci recurrent metric is not quasi Einstein")
    if holds("PRS") and holds("QE1") and "CO" in by:
        a = by["QE1"].data.get("a")
        if a is not None and a.size and float(min(abs(a))) > 1e-8:
            note("CO", "consistent: pseudo Ricci symmetric and quasi Einstein with a nonzero forces Cotton flat"
                 if holds("CO") else
                 "inconsistent: pseudo Ricci symmetric and quasi Einstein with a nonzero forces Cotton flat")
    if holds("PRS") and holds("CO") and "QE1" in by and not holds("QE1"):
        note("QE1", "inconsistent: pseudo Ricci symmetric and Cotton flat forces quasi Einstein")


# ------------------------------------------------------------------ document

@dataclass
class ReportDocument:
    version: str
    spec_hash: str
    conditions: list[ConditionReport] = field(default_factory=list)
    timing_ms: int = 0

    def as_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "spec_hash": self.spec_hash,
            "conditions": [c.as_dict() for c in self.conditions],
            "timing_ms": int(self.timing_ms),
        }

    @classmethod
    def for_spec(cls, spec: ManifoldSpec, reports: Sequence[ConditionReport], timing_ms: int = 0):
        return cls(__version__, spec_hash(spec), list(reports), timing_ms)

    def __eq__(self, other):
        if not isinstance(other, ReportDocument):
            return NotImplemented
        return self.as_dict() == other.as_dict()


def emit_report(doc: ReportDocument, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(doc.as_dict(), indent=2) + "\n"
    if fmt != "human":
        raise ValueError(f"unknown format {fmt!r}")
    header = f"{'condition':<10} {'verdict':<13} {'used':>5} {'skipped':>8} {'max residual':>14} {'mean residual':>14}"
    lines = [f"ricciclass {doc.version}  spec {doc.spec_hash[:16]}", header, "-" * len(header)]
    for c in doc.conditions:
        lines.append(f"{c.id:<10} {c.verdict:<13} {c.points_used:>5} {c.points_skipped:>8} "
                     f"{c.max_residual:>14.3e} {c.mean_residual:>14.3e}")
        for n in c.notes:
            lines.append(f"{'':<10} note: {n}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> ReportDocument:
    d = json.loads(text)
    return ReportDocument(d["version"], d["spec_hash"],
                          [ConditionReport.from_dict(c) for c in d["conditions"]], d["timing_ms"])
