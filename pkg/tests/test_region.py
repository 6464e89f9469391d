import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nkscreen.grid import ptdf
from nkscreen.region import (
    AssumptionViolated,
    ContingencyRegion,
    ROW_META_DTYPE,
    bounding_box,
    build_region,
    contingency_violation_fractions,
    drop_constant_dims,
    eliminate_redundant,
    prune_by_box_support,
    enumerate_contingencies,
    filter_contingencies,
    load_region,
    save_region,
    standardize,
    with_box,
)
from helpers import ring3


def region_from_rows(A, b, box=None):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    meta = np.zeros(len(b), dtype=ROW_META_DTYPE)
    meta["line"] = np.arange(len(b))
    r = ContingencyRegion(
        A=A,
        b=b,
        row_meta=meta,
        contingencies=[(0,)],
        n_full=A.shape[1],
        dim_map=np.arange(A.shape[1]),
        dropped_values=np.full(A.shape[1], np.nan),
        mu=np.zeros(A.shape[1]),
        sigma=np.ones(A.shape[1]),
        box_lower=None if box is None else np.asarray(box[0], dtype=float),
        box_upper=None if box is None else np.asarray(box[1], dtype=float),
    )
    return r.validate(require_interior=False)


def test_enumerate_ring_k1():
    net = ring3()
    assert enumerate_contingencies(net, 1) == [(0,), (1,), (2,)]


def test_enumerate_ring_k2_pairs_all_island():
    net = ring3()
    # every pair of ring edges isolates a bus, so only singletons survive
    assert enumerate_contingencies(net, 2) == [(0,), (1,), (2,)]


def test_build_region_counts_and_rhs():
    net = ring3()
    region = build_region(net, k=1)
    assert region.n_rows == 12  # 3 contingencies x 2 surviving lines x 2 signs
    assert np.all(region.b == 5.0)
    assert len(region.contingencies) == 3
    assert region.dim == 3


def test_region_membership_matches_flow_oracle():
    net = ring3(limits=(1.0, 1.0, 1.0))
    region = build_region(net, k=1)
    rng = np.random.default_rng(0)
    X = rng.normal(scale=1.5, size=(200, 3))
    member = region.membership(X)
    for i, x in enumerate(X):
        ok = True
        for c in region.contingencies:
            keep, H = ptdf(net, c)
            f = H @ x
            if np.any(f > net.f_upper[keep] + 1e-9) or np.any(f < net.f_lower[keep] - 1e-9):
                ok = False
                break
        assert member[i] == ok


def test_violation_fractions_and_filter():
    # line 1 (1-2) has a tight limit; when line 0 is out, a bus0->bus1
    # transfer reroutes over line 1 and violates it, so contingency (0,)
    # is the one the filter should drop
    net = ring3(limits=(5.0, 1.0, 5.0))
    region = build_region(net, k=1)
    X = np.zeros((100, 3))
    X[:95, 0] = 2.0
    X[:95, 1] = -2.0
    fr = contingency_violation_fractions(region, X)
    assert fr[0] == pytest.approx(0.95)
    assert fr[1] == 0.0 and fr[2] == 0.0
    filtered = filter_contingencies(region, X, threshold=0.9)
    assert filtered.contingencies == [(1,), (2,)]
    assert filtered.n_rows == 8
    assert filtered.meta["filtered_contingencies"] == [(0,)]
    # contingency ids in row_meta stay aligned with the contingency list
    assert filtered.row_meta["contingency"].max() == len(filtered.contingencies) - 1


def test_filter_keeps_everything_when_benign():
    net = ring3()
    region = build_region(net, k=1)
    X = np.zeros((50, 3))
    filtered = filter_contingencies(region, X)
    assert filtered.n_rows == region.n_rows
    assert len(filtered.contingencies) == 3


def test_bounding_box_simple():
    X = np.array([[1.0, -2.0], [3.0, -6.0]])
    lo, hi = bounding_box(X, inflate=1.2)
    assert hi[0] == pytest.approx(3.2)
    assert lo[0] == pytest.approx(0.0)  # extended to include the origin
    assert lo[1] == pytest.approx(-6.4)
    assert hi[1] == pytest.approx(0.0)
    lo2, hi2 = bounding_box(X, inflate=1.2, include_origin=False)
    assert lo2[0] == pytest.approx(0.8)
    assert hi2[1] == pytest.approx(-1.6)


def test_drop_constant_dims_folds_rhs():
    A = np.array([[1.0, 2.0], [0.5, -1.0]])
    b = np.array([4.0, 3.0])
    region = region_from_rows(A, b)
    X = np.column_stack([np.linspace(-1, 1, 20), np.full(20, 0.5)])
    out = drop_constant_dims(region, X)
    assert out.dim == 1
    assert out.b[0] == pytest.approx(4.0 - 2.0 * 0.5)
    assert out.b[1] == pytest.approx(3.0 + 1.0 * 0.5)
    assert list(out.dim_map) == [0]
    assert out.dropped_values[1] == pytest.approx(0.5)
    # membership of conforming full points is unchanged
    pts = np.column_stack([np.linspace(-3, 3, 30), np.full(30, 0.5)])
    before = region.membership(pts)
    after = out.membership(pts)
    assert np.array_equal(before, after)


def test_drop_constant_dims_removes_rows_on_dropped_dims():
    A = np.array([[1.0, 0.0], [0.0, 1.0]])
    b = np.array([2.0, 2.0])
    region = region_from_rows(A, b)
    X = np.column_stack([np.linspace(-1, 1, 10), np.ones(10)])
    out = drop_constant_dims(region, X)
    assert out.n_rows == 1  # the row on the constant dim became vacuous
    assert out.dim == 1


def test_drop_constant_dims_rejects_violated_slice():
    A = np.array([[1.0, 0.0], [0.0, 1.0]])
    b = np.array([2.0, 2.0])
    region = region_from_rows(A, b)
    X = np.column_stack([np.linspace(-1, 1, 10), np.full(10, 5.0)])  # slice outside row 1
    with pytest.raises(AssumptionViolated):
        drop_constant_dims(region, X)


def test_drop_constant_dims_all_constant_rejected():
    region = region_from_rows(np.array([[1.0, 1.0]]), np.array([2.0]))
    X = np.ones((10, 2))
    with pytest.raises(AssumptionViolated):
        drop_constant_dims(region, X)


def test_eliminate_redundant_duplicates_and_dominated():
    A = np.array([
        [1.0, 0.0],    # kept: x <= 1
        [2.0, 0.0],    # duplicate direction, x <= 1.5: dominated by neither... 3.0/2 = 1.5
        [1.0, 0.0],    # exact duplicate of row 0 with looser rhs
        [0.0, 1.0],    # kept: y <= 1
        [1.0, 1.0],    # x + y <= 5: redundant inside the box
        [-1.0, 0.0],   # kept: x >= -1
        [0.0, -1.0],   # kept: y >= -1
    ])
    b = np.array([1.0, 3.0, 2.0, 1.0, 5.0, 1.0, 1.0])
    box = (np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
    region = region_from_rows(A, b, box=box)
    out = eliminate_redundant(region)
    # rows 0, 3, 5, 6 survive: the square [-1,1]^2
    assert out.n_rows == 4
    assert sorted(out.row_meta["line"].tolist()) == [0, 3, 5, 6]


def test_eliminate_redundant_idempotent():
    net = ring3(limits=(1.0, 2.0, 1.5))
    region = build_region(net, k=1)
    rng = np.random.default_rng(5)
    X = rng.normal(scale=0.8, size=(300, 3))
    region = with_box(region, X)
    once = eliminate_redundant(region)
    twice = eliminate_redundant(once)
    assert once.n_rows == twice.n_rows
    assert np.allclose(once.A, twice.A)
    assert np.allclose(once.b, twice.b)


def test_eliminate_redundant_preserves_membership_in_box():
    net = ring3(limits=(0.8, 1.6, 1.1))
    region = build_region(net, k=1)
    rng = np.random.default_rng(6)
    X = rng.normal(scale=0.7, size=(400, 3))
    region = with_box(region, X)
    reduced = eliminate_redundant(region, aim_points=X[:100])
    pts = rng.uniform(region.box_lower, region.box_upper, size=(1000, 3))
    m_before = region.margins(pts)
    m_after = reduced.margins(pts)
    # agree except within the tolerance band around the boundary
    clear = np.abs(m_before) > 1e-5
    assert np.array_equal(m_before[clear] <= 0, m_after[clear] <= 0)
    assert reduced.n_rows <= region.n_rows


def test_standardize_identity_roundtrip():
    net = ring3()
    region = build_region(net, k=1)
    out = standardize(region, np.zeros(3), np.ones(3))
    assert np.allclose(out.A, region.A)
    assert np.allclose(out.b, region.b)


def test_standardize_rejects_center_outside():
    region = region_from_rows(np.array([[1.0, 0.0]]), np.array([1.0]))
    with pytest.raises(AssumptionViolated):
        standardize(region, np.array([5.0, 0.0]), np.ones(2))


def test_standardize_rejects_double_application():
    region = region_from_rows(np.eye(2), np.array([1.0, 1.0]))
    out = standardize(region, np.zeros(2), np.array([2.0, 2.0]))
    with pytest.raises(ValueError):
        standardize(out, np.zeros(2), np.ones(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_standardize_preserves_membership(seed):
    rng = np.random.default_rng(seed)
    net = ring3(limits=(1.0, 1.0, 1.0))
    region = build_region(net, k=1)
    mu = rng.normal(scale=0.05, size=3)
    sigma = rng.uniform(0.5, 2.0, size=3)
    out = standardize(region, mu, sigma)
    X = rng.normal(scale=1.2, size=(50, 3))
    assert np.array_equal(region.membership(X), out.membership(X))
    # margins in the new coordinates agree at mapped points
    assert np.allclose(out.margins(out.project(X)), region.margins(region.project(X)), atol=1e-9)


def test_save_load_roundtrip(tmp_path):
    net = ring3()
    region = build_region(net, k=1)
    rng = np.random.default_rng(2)
    X = rng.normal(size=(100, 3))
    region = with_box(region, X)
    path = tmp_path / "region.npz"
    save_region(region, path)
    back = load_region(path)
    assert np.array_equal(back.A, region.A)
    assert np.array_equal(back.b, region.b)
    assert back.contingencies == region.contingencies
    assert np.array_equal(back.box_lower, region.box_lower)
    assert np.array_equal(back.row_meta, region.row_meta)
    assert back.meta["k"] == 1


def test_validate_rejects_bad_regions():
    with pytest.raises(AssumptionViolated):
        region_from_rows(np.array([[1.0, 0.0]]), np.array([-1.0])).validate()
    with pytest.raises(AssumptionViolated):
        region_from_rows(np.array([[0.0, 0.0]]), np.array([1.0]))


def test_box_support_prune_keeps_violable_rows_only():
    A = np.array([
        [1.0, 0.0],    # x <= 1: violable in box, kept
        [1.0, 0.0],    # parallel with looser rhs: collapsed into row 0
        [0.0, 1.0],    # y <= 5: box tops out at 2, unreachable, dropped
        [1.0, 1.0],    # x + y <= 3: reachable (max 4), kept
        [-1.0, 0.0],   # x >= -10: unreachable, dropped
    ])
    b = np.array([1.0, 1.5, 5.0, 3.0, 10.0])
    box = (np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
    region = region_from_rows(A, b, box=box)
    out = prune_by_box_support(region)
    assert sorted(out.row_meta["line"].tolist()) == [0, 3]


def test_box_support_prune_is_weaker_than_exact():
    # a row implied only by a combination of other rows survives the screen
    # but not the exact elimination
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    b = np.array([1.0, 1.0, 3.0, 1.0, 1.0])
    box = (np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
    region = region_from_rows(A, b, box=box)
    screened = prune_by_box_support(region)
    exact = eliminate_redundant(region)
    assert screened.n_rows == 5   # support of x+y over the box is 4 > 3
    assert exact.n_rows == 4      # but x <= 1 and y <= 1 imply it


def test_box_support_prune_idempotent_and_membership():
    net = ring3(limits=(0.8, 1.6, 1.1))
    region = build_region(net, k=1)
    rng = np.random.default_rng(11)
    X = rng.normal(scale=0.7, size=(400, 3))
    region = with_box(region, X)
    once = prune_by_box_support(region)
    twice = prune_by_box_support(once)
    assert once.n_rows == twice.n_rows
    assert np.allclose(once.A, twice.A)
    pts = rng.uniform(region.box_lower, region.box_upper, size=(1000, 3))
    m_before = region.margins(pts)
    m_after = once.margins(pts)
    clear = np.abs(m_before) > 1e-5
    assert np.array_equal(m_before[clear] <= 0, m_after[clear] <= 0)


def test_box_support_prune_requires_box():
    region = region_from_rows(np.array([[1.0, 0.0]]), np.array([1.0]))
    with pytest.raises(ValueError):
        prune_by_box_support(region)


def test_box_support_prune_rejects_unreachable_everything():
    A = np.array([[1.0, 0.0], [0.0, 1.0]])
    b = np.array([100.0, 100.0])
    box = (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    region = region_from_rows(A, b, box=box)
    with pytest.raises(AssumptionViolated):
        prune_by_box_support(region)
