#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""base_space のテスト"""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import settings as hsettings
from hypothesis import strategies as st

from base_space import (LIMIT, BaseMap, SampledBaseSpace, compose, hbar_distance, is_dense_isometric_embedding,
                        is_isometric_embedding, is_limit, is_metric_map, is_proper, make_geometric_grid,
                        one_point_compactify, power_series_map)
from errors import GridError, LimitPointError, UnsampledPointError


def test_geometric_grid_points():
    grid = make_geometric_grid(1.0, 0.5, 4)
    assert grid.points == (1.0, 0.5, 0.25, 0.125)
    assert grid.distance(1.0, 0.25) == pytest.approx(0.75)
    assert not grid.has_limit


def test_geometric_grid_with_two_points():
    assert len(make_geometric_grid(0.5, 0.1, 2)) == 2


@pytest.mark.parametrize("hbar_max, ratio, count", [
    (1.0, 1.5, 4),
    (1.0, 0.0, 4),
    (-1.0, 0.5, 4),
    (1.0, 0.5, 1),
    (1.0, 0.5, 2.5),
])
def test_geometric_grid_rejects_bad_parameters(hbar_max, ratio, count):
    with pytest.raises(GridError):
        make_geometric_grid(hbar_max, ratio, count)


def test_from_metric_checks_triangle_inequality():
    with pytest.raises(GridError):
        SampledBaseSpace.from_metric([1.0, 0.5, 0.25], lambda x, y: (x - y) ** 2 * 10)


def test_points_must_decrease():
    with pytest.raises(GridError):
        SampledBaseSpace.euclidean([0.25, 0.5])


def test_one_point_compactification():
    grid = make_geometric_grid(1.0, 0.5, 4)
    compact = one_point_compactify(grid)
    assert compact.has_limit
    assert compact.all_points[-1] is LIMIT
    assert hbar_distance(compact, 0.25) == 0.25
    assert compact.distance(0.5, LIMIT) == 0.5
    with pytest.raises(LimitPointError):
        one_point_compactify(compact)
    with pytest.raises(LimitPointError):
        hbar_distance(grid, 0.25)


def test_unsampled_point():
    grid = make_geometric_grid(1.0, 0.5, 3)
    with pytest.raises(UnsampledPointError):
        grid.index_of(0.3)
    # KeyError としても捕まえられる
    with pytest.raises(KeyError):
        grid.index_of(0.3)
    with pytest.raises(UnsampledPointError):
        grid.index_of(LIMIT)


def test_metric_map_detects_expansion():
    grid = make_geometric_grid(1.0, 0.5, 5)
    doubling = BaseMap.from_function(grid, lambda h: 2 * h)
    check = is_metric_map(doubling)
    assert not check
    assert check.witness is not None
    assert is_metric_map(BaseMap.from_function(grid, lambda h: h / 2))


def test_proper_map():
    compact = one_point_compactify(make_geometric_grid(1.0, 0.5, 6))
    assert is_proper(BaseMap.identity(compact))
    squared = BaseMap.from_function(compact, lambda h: h * h)
    assert is_proper(squared)
    assert is_limit(squared(LIMIT))


def test_constant_map_is_not_proper():
    compact = one_point_compactify(make_geometric_grid(1.0, 0.5, 6))
    constant = BaseMap.from_function(compact, lambda h: 1.0)
    assert not is_proper(constant)


def test_dense_isometric_embedding():
    grid = make_geometric_grid(1.0, 0.5, 4)
    compact = one_point_compactify(grid)
    inclusion = BaseMap(grid, compact, grid.points)
    assert is_dense_isometric_embedding(inclusion)

    larger = one_point_compactify(make_geometric_grid(1.0, 0.5, 5))
    partial = BaseMap(grid, larger, grid.points)
    assert is_isometric_embedding(partial)
    assert not is_dense_isometric_embedding(partial)


def test_snapping_errors_are_recorded():
    grid = make_geometric_grid(1.0, 0.5, 4)
    alpha = BaseMap.from_function(grid, lambda h: 0.9 * h, target=grid)
    assert alpha(1.0) == 1.0
    assert alpha.snapping_error(1.0) == pytest.approx(0.1)
    assert alpha.max_snapping_error == pytest.approx(0.1)


def test_compose_and_power_series():
    grid = make_geometric_grid(1.0, 0.5, 4)
    f = power_series_map([1, 0.5])
    assert f(0.5) == pytest.approx(0.625)
    first = BaseMap.from_function(grid, lambda h: h / 2)
    second = BaseMap.from_function(first.target, lambda h: h / 3)
    composed = compose(second, first)
    assert composed(1.0) == pytest.approx(1 / 6)
    identity = BaseMap.identity(grid)
    assert compose(first, identity).mapping == first.mapping


def test_hbar_distance_with_custom_metric():
    space = SampledBaseSpace.from_metric([1.0, 0.5, 0.25], lambda x, y: 2 * abs(x - y),
                                         limit_metric=lambda x: 2 * x)
    assert hbar_distance(space, 0.5) == pytest.approx(1.0)
    assert hbar_distance(space, 0.25) == pytest.approx(0.5)
    assert space.distance(1.0, LIMIT) == pytest.approx(2.0)


# ========================================
# 距離写像の合成
# ========================================

grids = st.lists(st.integers(min_value=1, max_value=1000), min_size=2, max_size=8, unique=True).map(
    lambda ks: sorted((k / 1000 for k in ks), reverse=True))
# ħ ↦ c·ħ^p（0 < c <= 1, 1 <= p <= 1/c なので (0, 1] 上で縮小的）
power_maps = st.tuples(st.floats(min_value=0.25, max_value=1.0), st.floats(min_value=0.0, max_value=1.0)).map(
    lambda ct: (ct[0], 1 + ct[1] * (1 / ct[0] - 1)))


def power_map(c, p):
    return lambda h: c * h ** p


@hsettings(max_examples=100, deadline=None)
@given(grids, power_maps, power_maps, st.booleans())
def test_metric_maps_are_closed_under_composition(points, first, second, compactify):
    grid = SampledBaseSpace.euclidean(points)
    if compactify:
        grid = one_point_compactify(grid)
    inner = BaseMap.from_function(grid, power_map(*first))
    outer = BaseMap.from_function(inner.target, power_map(*second))
    assert is_metric_map(inner)
    assert is_metric_map(outer)
    composed = compose(outer, inner)
    assert is_metric_map(composed)
    for p in grid.points:
        assert composed(p) == pytest.approx(power_map(*second)(power_map(*first)(p)))


# ========================================
# 距離行列のキャッシュ
# ========================================

def test_distance_matrix_is_cached_and_read_only():
    space = one_point_compactify(make_geometric_grid(1.0, 0.5, 4))
    matrix = space.full_distance_matrix
    assert space.full_distance_matrix is matrix
    assert matrix.shape == (5, 5)
    assert not matrix.flags.writeable
    with pytest.raises(ValueError):
        matrix[0, 1] = 3.0
    assert space.distance(1.0, 0.25) == pytest.approx(0.75)
    assert space.distance(0.5, LIMIT) == pytest.approx(0.5)
    assert np.allclose(matrix, matrix.T)
