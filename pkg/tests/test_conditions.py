import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ricciclass.conditions import (
    conformal_residual, conformal_ricci, cotton_check, eigen_structure, prs_check, prs_qe_alignment,
    qe_hessian_check, qe_rank_check, rr_check, rr_structure_check, sym_rank_codim,
)
from ricciclass.corpus import build_family, instantiate_family
from ricciclass.errors import DimensionTooLow, InvalidRank, MissingLambda, PreconditionNotRR
from ricciclass.expr import ZERO, num, sym
from ricciclass.report import run_condition
from ricciclass.sampling import SamplingConfig, symbolic_samples

from support import flat, perturbed_metric, sphere

CFG = SamplingConfig(points=20)


def extra(fam, kind):
    return next(e.value for e in build_family(fam).extras if e.kind == kind)


# ---------------------------------------------------------------- Ricci recurrent

def test_recurrent_family_recovers_its_one_form():
    report = rr_check(instantiate_family("rr-3d"), CFG)
    assert report.holds and report.max_residual < 1e-12
    beta, mask = report.data["beta"], report.data["mask"]
    gs = symbolic_samples(instantiate_family("rr-3d"), CFG).subset(mask)
    x2 = gs.points["x2"]
    np.testing.assert_allclose(beta, np.stack([-np.ones_like(x2), -1 / x2, 0 * x2], axis=1), atol=1e-12)
    assert report.recovered["beta"][0]["value"][0] == pytest.approx(-1.0)


def test_parallel_ricci_is_not_recurrent():
    report = rr_check(sphere(3), CFG)
    assert report.verdict == "fails"
    assert any("beta vanishes" in note for note in report.notes)


@pytest.mark.parametrize("fam", ["co-4d1", "prs-4d1-b1"])
def test_non_recurrent_families(fam):
    assert rr_check(instantiate_family(fam), CFG).verdict == "fails"


def test_flat_metric_fails_with_a_note():
    report = run_condition(flat(3), "RR", CFG)
    assert report.verdict == "fails"
    assert "vanishes" in report.notes[0]


def test_recurrent_structure():
    spec = instantiate_family("rr-3d")
    structure = rr_structure_check(rr_check(spec, CFG), spec, CFG)
    assert structure.holds()
    assert structure.points > 0


def test_structure_check_needs_a_holding_report():
    spec = instantiate_family("prs-3d")
    with pytest.raises(PreconditionNotRR):
        rr_structure_check(rr_check(spec, CFG), spec, CFG)


# ---------------------------------------------------------------- pseudo Ricci symmetric

def test_prs_recovers_alpha():
    spec = instantiate_family("prs-4d1-b1")
    report = prs_check(spec, CFG)
    assert report.holds
    gs = symbolic_samples(spec, CFG).subset(report.data["mask"])
    alpha = report.data["alpha"]
    np.testing.assert_allclose(alpha[:, 0], -1 / gs.points["x1"], rtol=1e-10)
    np.testing.assert_allclose(alpha[:, 1:], 0.0, atol=1e-10)


def test_prs_fails_on_recurrent_family():
    assert prs_check(instantiate_family("rr-3d"), CFG).verdict == "fails"


def test_prs_with_vanishing_a_has_orthogonal_forms():
    spec = instantiate_family("prs-4d2")
    out = prs_qe_alignment(symbolic_samples(spec, CFG), CFG)
    assert out["a_max"] < 1e-9
    assert out["omega_alpha"] < 1e-9
    assert out["rank_one_residual"] < 1e-9


# ---------------------------------------------------------------- Cotton

def test_cotton_needs_dimension_three():
    with pytest.raises(DimensionTooLow):
        cotton_check(sphere(2), CFG)


def test_cotton_verdicts():
    assert cotton_check(instantiate_family("co-4d1"), CFG).holds
    assert cotton_check(instantiate_family("rr-3d"), CFG).verdict == "fails"


# ---------------------------------------------------------------- quasi Einstein, rank form

def test_quasi_einstein_coefficients():
    spec = instantiate_family("prs-4d1-b1")
    report = qe_rank_check(spec, CFG)
    assert report.holds
    gs = symbolic_samples(spec, CFG, derivatives=False).subset(report.data["mask"])
    a = report.data["a"]
    np.testing.assert_allclose(a, -4 / gs.points["x1"] ** 2, rtol=1e-9)
    np.testing.assert_allclose(gs.scalar, 3 * a, rtol=1e-9)
    np.testing.assert_allclose(report.data["b"], -a, rtol=1e-9)
    assert np.all(report.data["eigen_ok"]) and np.all(report.data["minor_ok"])


def test_quasi_einstein_fails_without_rank_one_part():
    report = qe_rank_check(instantiate_family("prs-4d1-b2"), CFG)
    assert report.verdict == "fails"


def test_einstein_metric_is_not_quasi_einstein():
    report = qe_rank_check(sphere(3), CFG)
    assert report.verdict == "fails"
    assert "Einstein: b=0" in report.notes


def test_eigen_structure_clusters():
    g = np.diag([1.0, 2.0, 3.0])
    ri = np.diag([2.0, 4.0, 9.0])
    es = eigen_structure(ri, g)
    assert sorted(es.multiplicities) == [1, 2]


# ---------------------------------------------------------------- quasi Einstein, Hessian form

@pytest.mark.parametrize("fam", ["qe2-3d", "qe2-4d2", "qe2-4d3"])
def test_hessian_condition_holds(fam):
    report = qe_hessian_check(instantiate_family(fam), CFG)
    assert report.holds
    assert report.recovered["hessian_bianchi_residual"] < 1e-9


def test_hessian_condition_fails_for_a_wrong_function():
    spec = instantiate_family("qe2-4d2").replace(lam=sym("x2"))
    assert qe_hessian_check(spec, CFG).verdict == "fails"


def test_hessian_condition_needs_lambda():
    with pytest.raises(MissingLambda):
        qe_hessian_check(instantiate_family("rr-3d"), CFG)


# ---------------------------------------------------------------- conformal change

def test_constant_rescaling_leaves_ricci_unchanged():
    spec = instantiate_family("rr-3d")
    result = conformal_ricci(spec, num(2))
    assert conformal_residual(result, spec, CFG) < 1e-12


@pytest.mark.parametrize("lam", ["x1", "x1*x2/3"])
def test_conformal_rule_on_flat_space(lam):
    from ricciclass.dsl import parse_expression
    spec = flat(3)
    result = conformal_ricci(spec, parse_expression(lam, [], spec.coords))
    assert conformal_residual(result, spec, CFG) < 1e-9


@pytest.mark.parametrize("fam", ["qe2-3d", "qe2-4d3"])
def test_rescaled_hessian_families_are_quasi_einstein(fam):
    spec = instantiate_family(fam)
    result = conformal_ricci(spec)
    assert conformal_residual(result, spec, CFG) < 1e-9
    assert qe_rank_check(result.spec, CFG).holds


# ---------------------------------------------------------------- determinantal codimension

def test_sym_rank_codimension():
    assert sym_rank_codim(3, 1) == 3
    assert sym_rank_codim(4, 1) == 6
    assert sym_rank_codim(4, 4) == 0
    with pytest.raises(InvalidRank):
        sym_rank_codim(3, 4)


# ---------------------------------------------------------------- invariances

@settings(max_examples=10, deadline=None)
@given(st.sampled_from(["rr-3d", "prs-4d1-b1", "co-4d1"]), st.sampled_from([2, 3, 5]))
def test_verdicts_survive_constant_scaling(fam, c):
    spec = instantiate_family(fam)
    scaled = spec.replace(metric=tuple(tuple(num(c) * e for e in row) for row in spec.metric))
    for check in (rr_check, prs_check, cotton_check):
        assert check(spec, CFG).verdict == check(scaled, CFG).verdict


@pytest.mark.parametrize("seed", [0, 1])
def test_generic_metrics_satisfy_nothing(seed):
    spec = perturbed_metric(3, seed)
    for check in (rr_check, prs_check, cotton_check, qe_rank_check):
        assert check(spec, CFG).verdict == "fails"


def test_printed_extras_match_recovered_values():
    spec = instantiate_family("prs-4d2")
    assert extra("prs-4d2", "qe_a") is ZERO
    report = qe_rank_check(spec, CFG)
    assert np.max(np.abs(report.data["a"])) < 1e-9
