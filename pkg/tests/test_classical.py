import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ricciclass.classical import ClassicalPack, bianchi_operator, schouten_cotton, weyl_and_divergence
from ricciclass.corpus import build_family, instantiate_family
from ricciclass.dsl import parse_manifold
from ricciclass.errors import DimensionTooLow, NotSymmetric
from ricciclass.expr import ZERO, add, sym
from ricciclass.tensors import CurvaturePack, TensorField, covariant_derivative, raise_index

from support import flat, perturbed_metric, points, rel_diff, sphere, values

EXP_4D = parse_manifold("manifold expo\ndim 4\ncoords x1 x2 x3 x4\nmetric diag: 1, exp(x1), exp(2*x1), 1\n")


def evaluated(spec, **tensors):
    pts = points(spec, 6, seed=13)
    return pts, {k: values(spec, t, pts) for k, t in tensors.items()}


def test_schouten_needs_dimension_three():
    with pytest.raises(DimensionTooLow):
        ClassicalPack(CurvaturePack(sphere(2))).schouten


@pytest.mark.parametrize("spec", [sphere(3), sphere(4), instantiate_family("co-4d1")],
                         ids=["sphere3", "sphere4", "co-4d1"])
def test_cotton_vanishes(spec):
    cp = ClassicalPack(CurvaturePack(spec))
    _, v = evaluated(spec, c=cp.cotton)
    assert np.max(np.abs(v["c"])) < 1e-12


def test_cotton_of_a_recurrent_metric():
    built = build_family("rr-3d")
    spec = built.spec
    pack = CurvaturePack(spec)
    beta = next(e.value for e in built.extras if e.kind == "beta")
    beta = TensorField(spec.coords, beta, "d")
    _, v = evaluated(spec, c=ClassicalPack(pack).cotton, ri=pack.ricci, g=pack.g, sc=pack.scalar, beta=beta)
    c, ri, g, sc, b = v["c"], v["ri"], v["g"], v["sc"], v["beta"]
    assert np.max(np.abs(c)) > 1e-3
    # Ri_ij;k = b_k Ri_ij and sc_k = b_k sc
    n = spec.dim
    dsc = b * sc[:, None]
    expected = (np.einsum("pk,pij->pijk", b, ri) - np.einsum("pj,pik->pijk", b, ri)
                - (np.einsum("pij,pk->pijk", g, dsc) - np.einsum("pik,pj->pijk", g, dsc)) / (2 * n - 2))
    assert rel_diff(c, expected) < 1e-12


def test_weyl_vanishes_in_dimension_three():
    cp = ClassicalPack(CurvaturePack(perturbed_metric(3, 2)))
    assert all(c is ZERO for c in cp.weyl.components.flat)


@pytest.mark.parametrize("spec", [flat(4), sphere(4)], ids=["flat", "sphere4"])
def test_weyl_vanishes_on_conformally_flat_metrics(spec):
    _, v = evaluated(spec, w=ClassicalPack(CurvaturePack(spec)).weyl)
    assert np.max(np.abs(v["w"])) < 1e-12


@pytest.mark.parametrize("spec", [EXP_4D, perturbed_metric(4, 5), instantiate_family("qe2-4d3")],
                         ids=["expo", "perturbed", "qe2-4d3"])
def test_weyl_divergence_is_proportional_to_cotton(spec):
    pack = CurvaturePack(spec)
    w, dw = weyl_and_divergence(pack)
    _, c = schouten_cotton(pack)
    n = spec.dim
    _, v = evaluated(spec, dw=dw, c=c, w=w, g=pack.ginv)
    assert rel_diff(v["dw"], (n - 3) / (n - 2) * v["c"]) < 1e-11
    # trace-free in every pair
    assert np.max(np.abs(np.einsum("phk,phijk->pij", v["g"], v["w"]))) < 1e-11


def test_cotton_antisymmetry_and_trace():
    spec = perturbed_metric(3, 4)
    pack = CurvaturePack(spec)
    _, v = evaluated(spec, c=ClassicalPack(pack).cotton, ginv=pack.ginv)
    c = v["c"]
    assert np.max(np.abs(c + np.einsum("pijk->pikj", c))) < 1e-13
    assert np.max(np.abs(np.einsum("pij,pijk->pk", v["ginv"], c))) < 1e-11
    assert np.max(np.abs(c + np.einsum("pijk->pjki", c) + np.einsum("pijk->pkij", c))) < 1e-11


@pytest.mark.parametrize("spec", [sphere(3), perturbed_metric(4, 1), instantiate_family("qe2-3d")],
                         ids=["sphere3", "perturbed", "qe2-3d"])
def test_bianchi_operator_annihilates_metric_and_ricci(spec):
    pack = CurvaturePack(spec)
    _, v = evaluated(spec, bg=bianchi_operator(pack.g, pack), br=bianchi_operator(pack.ricci, pack))
    assert np.max(np.abs(v["bg"])) < 1e-12
    assert np.max(np.abs(v["br"])) < 1e-10


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 50))
def test_bianchi_operator_on_a_hessian(seed):
    """B(Hess f)_k = d_k(Lap f) + 2 Ri_kj grad^j f."""
    spec = perturbed_metric(3, seed)
    pack = CurvaturePack(spec)
    x1, x2, x3 = (sym(c) for c in spec.coords)
    f = x1 * x2 + x3 ** 3 + x1 ** 2 * x3
    hess = pack.hessian(f)
    lap = add(*[pack.ginv[i, j] * hess[i, j] for i in range(3) for j in range(3)])
    grad_up = raise_index(pack.gradient(f), 0, pack)
    _, v = evaluated(spec, b=bianchi_operator(hess, pack), dl=pack.gradient(lap), ri=pack.ricci, gu=grad_up)
    assert rel_diff(v["b"], v["dl"] + 2 * np.einsum("pkj,pj->pk", v["ri"], v["gu"])) < 1e-10


def test_bianchi_operator_requires_symmetric_covariant_input():
    pack = CurvaturePack(sphere(3))
    with pytest.raises(NotSymmetric):
        bianchi_operator(pack.ginv, pack)
    skew = TensorField(pack.coords, [[0, 1, 0], [-1, 0, 0], [0, 0, 0]], "dd")
    with pytest.raises(NotSymmetric):
        bianchi_operator(skew, pack)


def test_covariant_derivative_of_schouten_matches_cotton_definition():
    spec = instantiate_family("prs-3d")
    pack = CurvaturePack(spec)
    s, c = schouten_cotton(pack)
    _, v = evaluated(spec, ds=covariant_derivative(s, pack), c=c)
    assert rel_diff(v["c"], v["ds"] - np.einsum("pijk->pikj", v["ds"])) < 1e-13
