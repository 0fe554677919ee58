import numpy as np
import pytest
from hypothesis import given, strategies as st

from selfaffine.covering import (AxisRectangle, certify_selection, partition_and_select,
                                 select_translates)
from selfaffine.lyapunov import make_rng


def random_family(rng, n, ratio=8.0, d=2):
    norms = rng.uniform(1.0, ratio, n)
    a = norms[:, None] * rng.uniform(0.05, 1.0, (n, d))
    a[np.arange(n), rng.integers(0, d, n)] = norms
    c = rng.uniform(0.0, 40.0, (n, d))
    return [AxisRectangle(ci, ai) for ci, ai in zip(c, a)]


def test_rectangle_basics():
    R = AxisRectangle([0.0, 0.0], [2.0, 1.0])
    assert R.norm == 2.0
    assert R.intersects(AxisRectangle([3.0, 0.0], [1.0, 1.0]))  # touching counts
    assert not R.intersects(AxisRectangle([3.1, 0.0], [1.0, 1.0]))
    assert R.inflate(3).contains(AxisRectangle([4.0, 0.0], [1.0, 1.0]))
    with pytest.raises(ValueError):
        AxisRectangle([0.0], [0.0])


def test_simple_selection():
    rects = [AxisRectangle([0, 0], [1, 0.5]), AxisRectangle([1, 0], [1, 0.4]),
             AxisRectangle([10, 0], [1, 0.3])]
    res = partition_and_select(rects)
    assert res.selected[1] == [0, 2]
    assert res.blockers == {1: 0}
    assert res.M == pytest.approx(3.0)
    assert res.certified


def test_dominant_axis_partition():
    rects = [AxisRectangle([0, 0], [2, 1]), AxisRectangle([0, 0], [1, 2])]
    res = partition_and_select(rects)
    assert list(res.classes) == [1, 2]
    assert res.selected == {1: [0], 2: [1]}


@given(st.integers(0, 100_000), st.integers(2, 60))
def test_random_families_certify(seed, n):
    res = partition_and_select(random_family(make_rng(seed), n), lattice=300)
    assert res.certified, res.certificate["failures"]
    for cls, kept in res.selected.items():
        members = [j for j in range(n) if res.classes[j] == cls]
        # maximality: every rejected member meets a kept one
        for j in set(members) - set(kept):
            assert any(res.rects[j].intersects(res.rects[i]) for i in kept)


@given(st.integers(0, 100_000), st.integers(1, 40))
def test_one_dimensional_exact(seed, n):
    res = partition_and_select(random_family(make_rng(seed), n, d=1), d=1)
    assert res.certified
    assert res.certificate["lattice_cover"]


def test_certification_detects_bad_factor():
    rects = [AxisRectangle([0, 0], [1, 1]), AxisRectangle([1.9, 0], [1, 1])]
    res = partition_and_select(rects)
    assert res.certified
    res.M = 1.5
    assert not certify_selection(res)


def test_higher_dimension_rejected():
    with pytest.raises(ValueError, match="d <= 2"):
        partition_and_select([AxisRectangle([0, 0, 0], [1, 1, 1])])


def test_mixed_dimension_rejected():
    with pytest.raises(ValueError):
        partition_and_select([AxisRectangle([0], [1]), AxisRectangle([0, 0], [1, 1])])


def test_translates_factor_two_fails():
    """Overlapping images are not always inside the doubled cube; tripling suffices."""
    maps = [([[1.0]], [0.0]), ([[1.0]], [0.9])]
    res = select_translates([0.5], 0.5, maps, factor=2.0)
    assert res.selected == [0]
    assert not res.certified
    assert select_translates([0.5], 0.5, maps).certified


@given(st.integers(0, 100_000), st.integers(1, 40), st.integers(1, 3))
def test_translates_certify(seed, n, d):
    rng = make_rng(seed)
    T = rng.normal(size=(d, d)) * 0.3
    while abs(np.linalg.det(T)) < 1e-2:
        T = rng.normal(size=(d, d)) * 0.3
    b = rng.uniform(0.0, 3.0, (n, d))
    res = select_translates(np.full(d, 0.5), 0.5, [(T, x) for x in b], lattice=200)
    assert res.certified, res.certificate


def test_translates_need_common_linear_part():
    with pytest.raises(ValueError, match="linear part"):
        select_translates([0.5], 0.5, [([[0.5]], [0.0]), ([[0.4]], [1.0])])
