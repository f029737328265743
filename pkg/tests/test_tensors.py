import math

import numpy as np
import pytest

from ricciclass.corpus import instantiate_family, list_families
from ricciclass.errors import BoundaryTooClose
from ricciclass.expr import ZERO
from ricciclass.numeric import evaluate
from ricciclass.ode import fd_curvature_oracle
from ricciclass.tensors import (
    CurvaturePack, TensorField, contract, covariant_derivative, identity_residuals, norm_squared,
    normalized_residual, trace,
)

from support import flat, perturbed_metric, points, rel_diff, sphere, values


def at(spec, expr, **coords):
    return evaluate(expr, spec.constant_values(), coords)


def test_flat_metric_has_no_curvature():
    pack = CurvaturePack(flat(3))
    for t in (pack.christoffel, pack.riemann, pack.ricci):
        assert all(c is ZERO for c in t.components.flat)
    assert pack.scalar is ZERO


def test_round_sphere():
    spec = sphere(2)
    pack = CurvaturePack(spec)
    th = 0.8
    assert at(spec, pack.christoffel[0, 1, 1], th=th, ph=0.0) == pytest.approx(-math.sin(th) * math.cos(th))
    assert at(spec, pack.christoffel[1, 0, 1], th=th, ph=0.0) == pytest.approx(math.cos(th) / math.sin(th))
    assert at(spec, pack.ricci[0, 0], th=th, ph=0.0) == pytest.approx(1.0)
    assert at(spec, pack.ricci[1, 1], th=math.pi / 3, ph=0.0) == pytest.approx(0.75)
    assert at(spec, pack.scalar, th=th, ph=0.0) == pytest.approx(2.0)


def test_three_sphere_is_einstein():
    spec = sphere(3)
    pack = CurvaturePack(spec)
    pts = points(spec, 6, seed=1)
    ri, g = values(spec, pack.ricci, pts), values(spec, pack.g, pts)
    assert rel_diff(ri, 2 * g) < 1e-13
    assert rel_diff(values(spec, pack.scalar, pts), np.full(6, 6.0)) < 1e-13


def test_warped_product_ricci_component():
    spec = instantiate_family("prs-4d1-b1")
    ri22 = CurvaturePack(spec).ricci[1, 1]
    assert at(spec, ri22, x1=2.0, x2=0.0, x3=0.0, x4=1.0) == pytest.approx(-1.0, abs=1e-14)


@pytest.mark.parametrize("spec", [sphere(3), instantiate_family("rr-3d"), perturbed_metric(3, 7)],
                         ids=["sphere3", "rr-3d", "perturbed"])
def test_metric_is_parallel(spec):
    pack = CurvaturePack(spec)
    pts = points(spec, 5, seed=2)
    dg = values(spec, covariant_derivative(pack.g, pack), pts)
    assert np.max(np.abs(dg)) < 1e-12


@pytest.mark.parametrize("spec", [sphere(4), instantiate_family("qe2-4d3"), perturbed_metric(4, 3)],
                         ids=["sphere4", "qe2-4d3", "perturbed"])
def test_index_symmetries(spec):
    pack = CurvaturePack(spec)
    assert pack.ricci.is_symmetric()
    assert pack.christoffel.is_symmetric(1, 2)
    pts = points(spec, 4, seed=4)
    r = values(spec, pack.riemann_lower, pts)
    assert np.max(np.abs(r + np.einsum("pijkl->pjikl", r))) < 1e-12
    assert np.max(np.abs(r + np.einsum("pijkl->pijlk", r))) < 1e-12
    assert rel_diff(r, np.einsum("pijkl->pklij", r)) < 1e-11


def test_traces_and_norms():
    spec = instantiate_family("rr-3d")
    pack = CurvaturePack(spec)
    env = dict(x1=0.0, x2=1.0, x3=0.0)
    assert at(spec, trace(pack.ricci, pack) - pack.scalar, **env) == pytest.approx(0.0, abs=1e-14)
    assert at(spec, norm_squared(pack.g, pack), **env) == pytest.approx(3.0)
    assert at(spec, norm_squared(pack.ricci, pack), **env) == pytest.approx(2.0)
    assert at(spec, pack.scalar, **env) == pytest.approx(-2.0)


def test_ricci_is_a_contraction_of_riemann():
    spec = perturbed_metric(3, 11)
    pack = CurvaturePack(spec)
    pts = points(spec, 4)
    contracted = values(spec, contract(pack.riemann, 0, 1), pts) * pack.sign
    assert rel_diff(contracted, values(spec, pack.ricci, pts)) < 1e-13


def test_tensor_field_rejects_bad_shapes():
    from ricciclass.errors import IndexOutOfRange
    with pytest.raises(IndexOutOfRange):
        TensorField(("x", "y"), [[1, 0]], "dd")


def test_normalized_residual():
    terms = np.array([[1.0, -1.0], [2.0, 1.0]])
    np.testing.assert_allclose(normalized_residual(terms), [0.0, 0.75])


# ---------------------------------------------------------------- identities

@pytest.mark.parametrize("fam", [f.id for f in list_families()])
def test_curvature_identities_on_corpus(fam):
    spec = instantiate_family(fam)
    res = identity_residuals(spec, points(spec, 8, seed=5), 8)
    assert res.points == 8
    assert res.worst < 1e-10, res.as_dict()


@pytest.mark.parametrize("n,seed", [(3, 0), (3, 1), (4, 0)])
def test_curvature_identities_on_random_metrics(n, seed):
    spec = perturbed_metric(n, seed)
    res = identity_residuals(spec, points(spec, 6, seed=seed), 6)
    assert res.worst < 1e-10, res.as_dict()


# ---------------------------------------------------------------- finite-difference oracle

def test_oracle_on_flat_space():
    fd = fd_curvature_oracle(flat(3), {"x1": 0.1, "x2": -0.2, "x3": 0.3})
    assert np.max(np.abs(fd.riemann)) < 1e-10
    assert np.max(np.abs(fd.ricci)) < 1e-10


def test_oracle_on_sphere():
    fd = fd_curvature_oracle(sphere(2), {"th": 1.0, "ph": 2.0})
    assert fd.ricci[0, 0, 0] == pytest.approx(1.0, abs=1e-6)
    assert fd.scalar[0] == pytest.approx(2.0, abs=1e-6)


def test_oracle_refuses_points_near_the_boundary():
    with pytest.raises(BoundaryTooClose):
        fd_curvature_oracle(sphere(2), {"th": 0.2, "ph": 2.0})


@pytest.mark.parametrize("spec", [perturbed_metric(4, 9), instantiate_family("qe2-4d2")],
                         ids=["perturbed", "qe2-4d2"])
def test_oracle_agrees_with_symbolic_route(spec):
    pack = CurvaturePack(spec)
    pts = points(spec, 5, seed=8, margin=0.1)
    fd = fd_curvature_oracle(spec, pts)
    assert not fd.bad.any()
    assert rel_diff(fd.christoffel, values(spec, pack.christoffel, pts)) < 1e-7
    assert rel_diff(fd.ricci, values(spec, pack.ricci, pts)) < 1e-6
