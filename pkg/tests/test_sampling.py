import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ricciclass.corpus import instantiate_family
from ricciclass.errors import EmptyDomain
from ricciclass.sampling import SamplingConfig, metric_acceptor, sample_points, symbolic_samples


def test_single_point_is_reproducible():
    cfg = SamplingConfig(points=1, seed=42)
    box = {"x": (0.0, 1.0), "y": (0.0, 1.0)}
    a, _ = sample_points(box, cfg)
    b, _ = sample_points(box, cfg)
    assert all(np.array_equal(a[c], b[c]) for c in box)


def test_recurrent_family_accepts_most_points():
    spec = instantiate_family("rr-3d")
    pts, skipped = sample_points(spec.domain, SamplingConfig(), metric_acceptor(spec))
    assert len(pts["x1"]) >= 45 and skipped <= 5


def test_zero_width_interval():
    with pytest.raises(EmptyDomain):
        sample_points({"x": (1.0, 1.0)}, SamplingConfig())


def test_rejected_candidates_are_replaced_then_reported():
    half = lambda env, size: env["x"] > 0.5  # noqa: E731
    pts, skipped = sample_points({"x": (0.0, 1.0)}, SamplingConfig(points=20), half)
    assert skipped == 0 and np.all(pts["x"] > 0.5)
    never = lambda env, size: np.zeros(size, dtype=bool)  # noqa: E731
    pts, skipped = sample_points({"x": (0.0, 1.0)}, SamplingConfig(points=20), never)
    assert skipped == 20 and pts["x"].size == 0


def test_domain_override_and_margin():
    cfg = SamplingConfig(points=30, domain={"x": (2.0, 3.0)}, margin=0.1)
    pts, _ = sample_points({"x": (0.0, 1.0)}, cfg)
    assert np.all((pts["x"] >= 2.1) & (pts["x"] <= 2.9))


def test_config_validation():
    with pytest.raises(ValueError):
        SamplingConfig(points=0)
    with pytest.raises(ValueError):
        SamplingConfig(tol=0.0)
    assert SamplingConfig().with_(seed=1).seed == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31))
def test_points_stay_in_the_box(count, seed):
    box = {"x": (-1.0, 2.0), "y": (0.5, 0.75)}
    pts, skipped = sample_points(box, SamplingConfig(points=count, seed=seed))
    assert skipped == 0
    for c, (lo, hi) in box.items():
        assert pts[c].size == count and np.all((pts[c] >= lo) & (pts[c] <= hi))


def test_samples_subset_and_point():
    gs = symbolic_samples(instantiate_family("prs-3d"), SamplingConfig(points=8))
    mask = np.arange(gs.size) % 2 == 0
    sub = gs.subset(mask)
    assert sub.size == 4 and sub.n == 3
    assert sub.point(1) == gs.point(2)
    np.testing.assert_array_equal(sub.ricci, gs.ricci[mask])
