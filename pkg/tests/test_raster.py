import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import disc_roi
from oracles import brute_capsules, dilate_by_shifts, flood_components, largest_by_flood
from vesselaug.colonize import GrowthParams, VesselTree
from vesselaug.errors import DimensionMismatch
from vesselaug.raster import (
    STRUCTURES,
    dilate,
    erode,
    fit_to_roi,
    largest_component,
    make_structure_mask,
    rasterize,
    threshold,
)

small_masks = arrays(np.bool_, st.tuples(st.integers(1, 16), st.integers(1, 16)))


def test_rasterize_vertical_bar():
    t = VesselTree([(8, 5), (8, 15)], [-1, 0], [1.0, 1.0])
    img = rasterize(t, 20, 24)
    expect = brute_capsules(t.positions, t.parents, t.radii, 20, 24)
    assert np.array_equal(img, expect)
    cols = np.flatnonzero(img.any(axis=0))
    rows = np.flatnonzero(img.any(axis=1))
    assert cols.tolist() == [7, 8, 9]
    assert rows.tolist() == list(range(4, 17))
    assert img[20:, :].sum() == 0


def test_rasterize_far_from_tree_and_clipping():
    t = VesselTree([(2, 2), (2, 6)], [-1, 0], [1.0, 1.0])
    img = rasterize(t, 30, 30)
    assert img[15:, 15:].sum() == 0
    outside = VesselTree([(-50, -50), (-40, -50)], [-1, 0], [2.0, 2.0])
    assert rasterize(outside, 10, 10).sum() == 0


def test_rasterize_root_only_paints_disk():
    img = rasterize(VesselTree([(4, 4)], [-1], [1.0]), 9, 9)
    assert int(img.sum()) == 5


@settings(max_examples=30, deadline=None)
@given(
    pts=st.lists(st.tuples(st.floats(-3, 18), st.floats(-3, 18)), min_size=1, max_size=5),
    radii=st.lists(st.floats(0.2, 3.0), min_size=5, max_size=5),
    data=st.data(),
)
def test_rasterize_matches_capsule_oracle(pts, radii, data):
    n = len(pts)
    parents = [-1] + [data.draw(st.integers(0, i - 1)) for i in range(1, n)]
    t = VesselTree(pts, parents, radii[:n])
    img = rasterize(t, 16, 14)
    assert np.array_equal(img, brute_capsules(t.positions, t.parents, t.radii, 16, 14))


def test_threshold():
    img = np.array([[0.6, 0.5, 0.0, 1.0]])
    assert threshold(img, 0.5).tolist() == [[True, False, False, True]]
    assert threshold(img, 0.0).tolist() == [[True, True, False, True]]
    assert not threshold(img, 1.0).any()
    with pytest.raises(ValueError):
        threshold(img, 1.5)


def test_largest_component_examples():
    m = np.zeros((6, 6), bool)
    m[0, 0:3] = m[1, 0:2] = True  # 5 pixels
    m[4, 3:6] = True  # 3 pixels
    out = largest_component(m, 8)
    assert out.sum() == 5 and not out[4].any()

    single = np.zeros((5, 5), bool)
    single[1:3, 1:4] = True
    assert np.array_equal(largest_component(single), single)

    diag = np.zeros((3, 3), bool)
    diag[0, 0] = diag[1, 1] = True
    assert largest_component(diag, 8).sum() == 2
    assert largest_component(diag, 4).sum() == 1
    assert largest_component(diag, 4)[0, 0]

    assert not largest_component(np.zeros((4, 4), bool)).any()


@settings(max_examples=60, deadline=None)
@given(m=small_masks, conn=st.sampled_from([4, 8]))
def test_largest_component_matches_flood_fill(m, conn):
    assert np.array_equal(largest_component(m, conn), largest_by_flood(m, conn))
    out = largest_component(m, conn)
    if out.any():
        assert len(flood_components(out, conn)) == 1


def test_erode_examples():
    m = np.zeros((5, 5), bool)
    m[1:4, 1:4] = True
    out = erode(m, "cross", 1)
    assert out.sum() == 1 and out[2, 2]
    assert np.array_equal(erode(m, "cross", 0), m)
    assert erode(m, "square", 1).sum() == 1
    assert not erode(m, "cross", 2).any()


@settings(max_examples=60, deadline=None)
@given(m=small_masks, se=st.sampled_from(["cross", "square"]), it=st.integers(0, 3))
def test_erosion_is_anti_extensive_and_dual_to_dilation(m, se, it):
    out = erode(m, se, it)
    assert not (out & ~m).any()
    # with outside treated as background for erosion, the complement's outside is foreground
    dual = ~m
    for _ in range(it):
        dual = dilate_by_shifts(dual, STRUCTURES[se], border=True)
    assert np.array_equal(out, ~dual)
    assert np.array_equal(dilate(~m, se, it, border_value=True), dual)


def test_fit_to_roi():
    m = np.zeros((4, 4), bool)
    m[1, 1] = m[3, 3] = True
    assert np.array_equal(fit_to_roi(m, np.ones((4, 4), bool)), m)
    assert not fit_to_roi(m, np.zeros((4, 4), bool)).any()
    roi = np.ones((4, 4), bool)
    roi[3, 3] = False
    out = fit_to_roi(m, roi)
    assert out[1, 1] and not out[3, 3]
    with pytest.raises(DimensionMismatch):
        fit_to_roi(m, np.ones((3, 4), bool))


DENSE = dict(attraction_radius=30.0, segment_length=3.0, kill_radius=5.0, max_nodes=600)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_structure_mask_contract(seed):
    roi = disc_roi(96)
    params = GrowthParams(seed=seed, **DENSE)
    m0, tree = make_structure_mask(roi, params, 600, erosion_iterations=0, return_tree=True)
    assert m0.any() and not (m0 & ~roi).any()
    assert len(flood_components(m0, 8)) == 1
    # containment chain: each later stage only removes pixels
    painted = threshold(rasterize(tree, 96, 96), 0)
    assert not (m0 & ~painted).any()
    m1 = make_structure_mask(roi, params, 600, erosion_iterations=1)
    assert not (m1 & ~m0).any()
    assert len(flood_components(m1, 8)) <= 1


def test_structure_mask_default_params_nonempty():
    roi = disc_roi(128)
    m = make_structure_mask(roi, GrowthParams(seed=5), 1000)
    assert m.any() and not (m & ~roi).any()


def test_structure_mask_deterministic():
    roi = disc_roi(96)
    params = GrowthParams(seed=9, **DENSE)
    a = make_structure_mask(roi, params, 600)
    b = make_structure_mask(roi, params, 600)
    assert a.tobytes() == b.tobytes()
