import numpy as np
import pytest

from ricciclass.corpus import (
    EXTRA_TOL, build_family, co_3d_fragment_check, export_family, get_family, instantiate_family, list_families, verify_family,
)
from ricciclass.dsl import parse_manifold, validate_spec
from ricciclass.errors import ParameterConstraintViolation
from ricciclass.numeric import evaluate
from ricciclass.sampling import SamplingConfig
from ricciclass.tensors import CurvaturePack

IDS = [f.id for f in list_families()]


def at(spec, expr, **coords):
    return evaluate(expr, spec.constant_values(), coords)


def test_corpus_has_twelve_families():
    assert len(IDS) == 12
    assert len(set(IDS)) == 12
    assert {i.split("-")[0] for i in IDS} == {"rr", "prs", "co", "qe1", "qe2"}


@pytest.mark.parametrize("fam", IDS)
def test_family_verifies(fam):
    v = verify_family(fam)
    assert v.ok, (v.mismatches, v.extras)
    assert set(v.expected) <= set(v.verdicts())
    assert all(r < EXTRA_TOL for r in v.extras.values())


@pytest.mark.parametrize("fam", IDS)
def test_family_validates_on_its_domain(fam):
    assert validate_spec(instantiate_family(fam)).rejected_fraction < 0.5


@pytest.mark.parametrize("fam", ["rr-3d", "qe1-3d"])
def test_excluded_parameter_value(fam):
    with pytest.raises(ParameterConstraintViolation):
        instantiate_family(fam, {"m": 1})


def test_unknown_parameter():
    with pytest.raises(ParameterConstraintViolation):
        instantiate_family("rr-3d", {"zeta": 2})


def test_other_parameters_still_verify():
    assert verify_family("rr-3d", params={"m": 3, "c3": 20}).ok
    assert verify_family("prs-4d1-b1", params={"c1": 2, "c3": 2}).ok


def test_free_function_override():
    v = verify_family("co-4d1", overrides={"f": "exp(x1) + 2"})
    assert v.verdicts()["CO"] == "holds"


def test_recurrent_scalar_curvature():
    spec = instantiate_family("rr-3d")
    sc = CurvaturePack(spec).scalar
    for x1, x2 in [(0.0, 1.0), (0.5, 0.3), (-0.7, 1.8)]:
        assert at(spec, sc, x1=x1, x2=x2, x3=0.0) == pytest.approx(-2 * np.exp(-x1) / x2, rel=1e-12)


def test_prs_4d2_ricci_is_rank_one():
    spec = instantiate_family("prs-4d2")
    ri = CurvaturePack(spec).ricci
    env = dict(x1=1.2, x2=0.1, x3=0.2, x4=0.3)
    assert at(spec, ri[3, 3], **env) == pytest.approx(-2.0, rel=1e-12)
    for i in range(4):
        for j in range(4):
            if (i, j) != (3, 3):
                assert at(spec, ri[i, j], **env) == pytest.approx(0.0, abs=1e-12)


def test_qe2_4d3_is_ricci_flat():
    spec = instantiate_family("qe2-4d3")
    ri = CurvaturePack(spec).ricci
    env = dict(x1=0.3, x2=0.4, x3=0.5, x4=0.6)
    assert max(abs(at(spec, ri[i, j], **env)) for i in range(4) for j in range(4)) < 1e-12


def test_extras_are_recorded():
    built = build_family("prs-4d1-b1")
    assert {e.kind for e in built.extras} == {"alpha", "ricci"}


@pytest.mark.parametrize("fam", IDS)
def test_export_parses_back(fam):
    assert parse_manifold(export_family(fam)) == instantiate_family(fam)


def test_descriptor_lookup():
    fam = get_family("qe2-3d")
    assert fam.expected["QE2"] == "holds"
    with pytest.raises(KeyError):
        get_family("nope")


def test_verification_is_deterministic():
    cfg = SamplingConfig(points=10, seed=3)
    a, b = verify_family("prs-3d", cfg), verify_family("prs-3d", cfg)
    assert [r.as_dict() for r in a.reports] == [r.as_dict() for r in b.reports]


# ---------------------------------------------------------------- printed fragment of the 3D Cotton example

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cotton_fragment_is_consistent(seed):
    check = co_3d_fragment_check(seed=seed)
    assert check.ok()
    assert check.points == 20
    assert len(check.unchecked) == 4


def test_cotton_fragment_detects_a_wrong_relation(monkeypatch):
    import ricciclass.corpus as corpus
    monkeypatch.setattr(corpus, "CO_3D_H2", "h_1^2/((c1 + c0*ln(h))*h^2)")
    assert co_3d_fragment_check().relation > 1e-3


def test_cotton_fragment_structural_zeros_are_not_vacuous(monkeypatch):
    import ricciclass.corpus as corpus
    monkeypatch.setattr(corpus, "CO_3D_STRUCTURAL_ZEROS", ((2, 1, 2),))
    assert co_3d_fragment_check().structural > 1e-3
