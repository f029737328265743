"""The twelve acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line (visible without ``-s``) before
asserting, so ``pytest tests/test_acceptance.py`` doubles as a report.
"""

import time

import numpy as np
import pytest

from ricciclass.classical import ClassicalPack, bianchi_operator
from ricciclass.cli import main
from ricciclass.conditions import (
    conformal_residual, conformal_ricci, prs_check, qe_rank_check, rr_check, rr_structure_check,
)
from ricciclass.corpus import build_family, export_family, instantiate_family, list_families, verify_family
from ricciclass.dsl import parse_manifold, pretty_print
from ricciclass.errors import DimensionMismatch, RfmSyntaxError, UndeclaredSymbol
from ricciclass.expr import exp, sym
from ricciclass.numeric import ZeroVerdict, normalize_and_is_zero
from ricciclass.ode import fd_curvature_oracle, get_system, integrate_rif_system, verify_numeric_metric
from ricciclass.report import classify
from ricciclass.sampling import SamplingConfig, symbolic_samples
from ricciclass.tensors import CurvaturePack, evaluate_tensors, identity_residuals, normalized_residual

from support import perturbed_metric, points, values

FAMILIES = [f.id for f in list_families()]


@pytest.fixture
def verdict(capsys):
    def report(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail
    return report


def test_criterion_01_corpus_reproduction(verdict, capsys):
    start = time.perf_counter()
    code = main(["corpus", "verify", "all"])
    elapsed = time.perf_counter() - start
    capsys.readouterr()
    worst = 0.0
    for fam in FAMILIES:
        v = verify_family(fam)
        worst = max([worst] + [r.max_residual for r in v.reports if r.id in v.expected and r.holds])
    ok = code == 0 and worst < 1e-8 and elapsed < 120
    verdict(1, ok, f"12/12 families, worst holding residual {worst:.1e}, {elapsed:.1f}s")


def test_criterion_02_printed_formulas(verdict):
    rr = instantiate_family("rr-3d")
    m, c3 = sym("m"), sym("c3")
    printed_sc = (1 - m) * c3 / (2 * m * exp(sym("x1")) * sym("x2"))
    _, zero = normalize_and_is_zero(CurvaturePack(rr).scalar - printed_sc, domain=rr.domain,
                                    bindings=rr.constant_values())
    built = build_family("prs-4d1-b1")
    spec = built.spec
    printed = next(e.value for e in built.extras if e.kind == "ricci")
    pts = points(spec, 50, seed=2)
    ri = values(spec, CurvaturePack(spec).ricci, pts)
    pr = np.stack([np.stack([np.broadcast_to(values(spec, e, pts), (50,)) for e in row], -1)
                   for row in printed], -2)
    rel_b1 = float(np.max(np.abs(ri - pr)) / np.max(np.abs(pr)))
    p2 = instantiate_family("prs-4d2")
    r44 = values(p2, CurvaturePack(p2).ricci[3, 3], points(p2, 50, seed=3))
    c = {k: float(v) for k, v in p2.constant_values().items()}
    want = -c["c3"] * (c["m"] + 1) ** 2 / (2 * c["c1"] * c["c2"] * c["m"] ** 2)
    err_44 = float(np.max(np.abs(r44 - want)))
    ok = zero is not ZeroVerdict.NONZERO and rel_b1 < 1e-12 and err_44 < 1e-10
    verdict(2, ok, f"rr-3d sc {zero.value}, prs-4d1-b1 Ricci rel {rel_b1:.1e}, prs-4d2 Ri44 err {err_44:.1e}")


def test_criterion_03_recurrent_structure(verdict):
    spec = instantiate_family("rr-3d")
    s = rr_structure_check(rr_check(spec), spec)
    ok = s.eigen_deviation < 1e-8 and s.scalar_norm < 1e-9 and s.beta_eigen < 1e-9 and s.ricci_square < 1e-9
    verdict(3, ok, f"eigen {s.eigen_deviation:.1e}, |sc^2-2|Ri|^2| {s.scalar_norm:.1e}, "
                   f"Ri beta {s.beta_eigen:.1e}, Ri^2 {s.ricci_square:.1e}")


def test_criterion_04_prs_alpha(verdict):
    worst_ratio = worst_half = worst_match = 0.0
    for fam in ("prs-4d1-b1", "prs-4d2"):
        built = build_family(fam)
        spec = built.spec
        cfg = SamplingConfig()
        gs = symbolic_samples(spec, cfg)
        report = prs_check(spec, cfg)
        sub = gs.subset(report.data["mask"])
        printed = np.stack([np.broadcast_to(values(spec, e, sub.points), (sub.size,))
                            for e in next(e.value for e in built.extras if e.kind == "alpha")], -1)
        ginv = sub.ginv

        def norm(v):
            return np.sqrt(np.einsum("pi,pij,pj->p", v, ginv, v))

        ri_alpha = np.einsum("pij,pjk,pk->pi", sub.ricci, ginv, printed)
        ri_n = np.sqrt(np.einsum("pia,pjb,pij,pab->p", ginv, ginv, sub.ricci, sub.ricci))
        worst_ratio = max(worst_ratio, float(np.max(norm(ri_alpha) / (ri_n * norm(printed)))))
        strong = np.abs(sub.scalar) > 1e-6
        half = sub.scalar_d / (2 * sub.scalar[:, None])
        worst_half = max(worst_half, float(np.max(norm((printed - half)[strong]) / norm(printed[strong]))))
        worst_match = max(worst_match, float(np.max(norm(report.data["alpha"] - printed) / norm(printed))))
    ok = worst_ratio < 1e-9 and worst_half < 1e-9 and worst_match < 1e-9
    verdict(4, ok, f"|Ri alpha| ratio {worst_ratio:.1e}, alpha vs grad ln sc / 2 {worst_half:.1e}, "
                   f"recovered vs printed {worst_match:.1e}")


def test_criterion_05_exclusions(verdict):
    reports = {r.id: r for r in classify(instantiate_family("rr-3d"))}
    both = [fam for fam in FAMILIES
            if all(r.holds for r in classify(instantiate_family(fam), conditions=("RR", "PRS")))]
    ok = (reports["PRS"].verdict == "fails" and reports["CO"].verdict == "fails"
          and reports["CO"].max_residual > 1e-3 and reports["QE1"].holds and not both)
    verdict(5, ok, f"rr-3d PRS {reports['PRS'].verdict}, CO {reports['CO'].verdict} "
                   f"({reports['CO'].max_residual:.2f}), QE1 {reports['QE1'].verdict}; RR and PRS together: {both}")


def test_criterion_06_prs_qe_cotton_chain(verdict):
    reports = {r.id: r for r in classify(instantiate_family("prs-3d"))}
    a_min = float(np.min(np.abs(reports["QE1"].data["a"])))
    ok = reports["PRS"].holds and reports["QE1"].holds and reports["CO"].holds and a_min > 1e-8
    verdict(6, ok, f"prs-3d PRS {reports['PRS'].verdict}, QE1 {reports['QE1'].verdict} "
                   f"(min |a| {a_min:.2f}), CO {reports['CO'].verdict}")


def _weyl_cotton_residual(spec, pts, size):
    pack = CurvaturePack(spec)
    cp = ClassicalPack(pack)
    vals, bad = evaluate_tensors({"dw": cp.weyl_divergence, "c": cp.cotton}, spec, pts, size)
    terms = np.stack([vals["dw"][~bad], -0.5 * vals["c"][~bad]], axis=-1)
    return float(np.max(normalized_residual(terms)))


def _bianchi_ricci_residual(spec, pts, size):
    pack = CurvaturePack(spec)
    vals, bad = evaluate_tensors({"b": bianchi_operator(pack.ricci, pack), "dri": pack.ricci_derivative,
                                  "ginv": pack.ginv, "dsc": pack.scalar_gradient}, spec, pts, size)
    # B(Ri)_k over 1 + the magnitudes of its summands
    ginv, dri = vals["ginv"][~bad], vals["dri"][~bad]
    scale = 1 + 2 * np.einsum("pij,pikj->pk", np.abs(ginv), np.abs(dri)) + np.abs(vals["dsc"][~bad])
    return float(np.max(np.abs(vals["b"][~bad]) / scale))


def test_criterion_07_universal_identities(verdict):
    specs = [instantiate_family(f) for f in FAMILIES]
    specs += [perturbed_metric(n, seed) for n in (3, 4) for seed in range(20)]
    worst = {"contracted": 0.0, "second": 0.0, "weyl": 0.0, "bianchi_op": 0.0}
    for k, spec in enumerate(specs):
        size = 6
        pts = points(spec, size, seed=100 + k)
        res = identity_residuals(spec, pts, size)
        worst["contracted"] = max(worst["contracted"], res.contracted_bianchi)
        worst["second"] = max(worst["second"], res.second_bianchi)
        worst["bianchi_op"] = max(worst["bianchi_op"], _bianchi_ricci_residual(spec, pts, size))
        if spec.dim == 4:
            worst["weyl"] = max(worst["weyl"], _weyl_cotton_residual(spec, pts, size))
    ok = all(v < 1e-8 for v in worst.values())
    verdict(7, ok, f"{len(specs)} metrics, worst " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_08_oracle_agreement(verdict):
    worst = 0.0
    for fam in FAMILIES:
        spec = instantiate_family(fam)
        pts = points(spec, 20, seed=8, margin=0.05)
        sym_ri = values(spec, CurvaturePack(spec).ricci, pts)
        fd = fd_curvature_oracle(spec, pts)
        scale = np.max(np.abs(sym_ri))
        # Ricci-flat families are compared absolutely
        worst = max(worst, float(np.max(np.abs(fd.ricci - sym_ri)) / (scale if scale > 1e-12 else 1.0)))
    verdict(8, worst < 1e-5, f"worst finite-difference vs symbolic Ricci {worst:.1e} over 12 families")


def test_criterion_09_ode_pipeline(verdict):
    system = get_system("qe1-4d1")
    coarse = integrate_rif_system(system, step=1e-3, span=(0.0, 1.0))
    fine = integrate_rif_system(system, step=5e-4, span=(0.0, 1.0))
    d1, d2 = coarse.first_integral_drift(), fine.first_integral_drift()
    qe1 = verify_numeric_metric(coarse, "QE1")
    qe2_metric = integrate_rif_system(get_system("qe2-4d1"))
    qe2 = verify_numeric_metric(qe2_metric, "QE2")
    co = verify_numeric_metric(qe2_metric, "CO")
    ok = d1 < 1e-8 and d1 / d2 >= 8 and qe1.holds and qe2.holds and co.holds
    verdict(9, ok, f"drift {d1:.1e} (ratio {d1 / d2:.1f}), QE1 {qe1.verdict} {qe1.max_residual:.1e}, "
                   f"QE2 {qe2.verdict} {qe2.max_residual:.1e}, CO {co.verdict} {co.max_residual:.1e}")


def test_criterion_10_conformal_construction(verdict):
    parts = []
    ok = True
    for fam in ("qe2-3d", "qe2-4d3"):
        spec = instantiate_family(fam)
        result = conformal_ricci(spec)
        res = conformal_residual(result, spec, SamplingConfig())
        qe = qe_rank_check(result.spec)
        ok &= res < 1e-9 and qe.holds
        parts.append(f"{fam} rule vs direct {res:.1e}, QE1 {qe.verdict}")
    verdict(10, ok, "; ".join(parts))


def test_criterion_11_parser(verdict):
    stable = all(parse_manifold(pretty_print(parse_manifold(export_family(f)))) == instantiate_family(f)
                 and pretty_print(parse_manifold(export_family(f))) == export_family(f) for f in FAMILIES)
    cases = [
        (RfmSyntaxError, "manifold e\ndim 2\ncoords x y\nmetric diag: 1, (x\n"),
        (UndeclaredSymbol, "manifold e\ndim 2\ncoords x y\nmetric diag: 1, z\n"),
        (DimensionMismatch, "manifold e\ndim 3\ncoords x y z\nmetric diag: 1, 1\n"),
    ]
    errors_ok = True
    for cls, text in cases:
        try:
            parse_manifold(text)
            errors_ok = False
        except cls as exc:
            errors_ok &= exc.line == 4 and exc.column >= 1
    verdict(11, stable and errors_ok, f"round trip on 12 exports {stable}, located error classes {errors_ok}")


def test_criterion_12_determinism(verdict, tmp_path, capsys):
    spec_file = tmp_path / "prs.rfm"
    spec_file.write_text(export_family("prs-3d"))
    outs = []
    for k in range(3):
        target = tmp_path / f"out{k}.json"
        main(["check", str(spec_file), "--condition", "classify", "--json", str(target)])
        outs.append(target.read_bytes())
    capsys.readouterr()
    same = len(set(outs)) == 1
    verdict(12, same, f"3 runs of check --json, {len(outs[0])} bytes each, identical {same}")
