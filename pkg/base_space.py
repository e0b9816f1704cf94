#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
サンプル化された基底空間

パラメータ ħ の有限集合（降順）と距離行列、必要なら一点コンパクト化の極限点 0_I を持つ。
基底写像 BaseMap と、距離写像・固有写像・稠密等長埋め込みの判定を提供する。
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from errors import GridError, InvalidParameterError, LimitPointError, UnsampledPointError
from settings import resolve


class _LimitPoint:
    """一点コンパクト化で付け加えた点 0_I"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "LIMIT"

    def __reduce__(self):
        return (_LimitPoint, ())


LIMIT = _LimitPoint()


def is_limit(point):
    return point is LIMIT


@dataclass(frozen=True)
class SampledBaseSpace:
    """有限サンプルの距離空間

    points は正の実数の狭義減少列。distances[i][k] は points[i] と points[k] の距離、
    limit_distances[i] は points[i] と 0_I の距離（None なら極限点なし）。
    """
    points: tuple
    distances: tuple
    limit_distances: tuple = None
    resolution: float = 0.0

    def __post_init__(self):
        points = tuple(float(p) for p in self.points)
        object.__setattr__(self, 'points', points)
        n = len(points)
        if n == 0:
            raise GridError("基底空間には少なくとも1点が必要です")
        if any(not (p > 0 and math.isfinite(p)) for p in points):
            raise GridError("点は正の有限値である必要があります")
        if any(points[i] <= points[i + 1] for i in range(n - 1)):
            raise GridError("点は狭義減少列である必要があります")
        if self.resolution < 0:
            raise GridError("resolution は非負である必要があります")

        matrix = np.array(self.distances, dtype=float)
        if matrix.shape != (n, n):
            raise GridError(f"距離行列の形が不正です: {matrix.shape}")
        object.__setattr__(self, 'distances', tuple(tuple(float(d) for d in row) for row in matrix))

        if self.limit_distances is not None:
            limit = tuple(float(d) for d in self.limit_distances)
            if len(limit) != n:
                raise GridError("極限点への距離の数が点の数と一致しません")
            if any(not d > 0 for d in limit):
                raise GridError("|ħ|_I はすべての点で正である必要があります")
            object.__setattr__(self, 'limit_distances', limit)

        self._audit_metric()

    def _audit_metric(self):
        tolerance = resolve(None, 'base_space.metric_tolerance', 1e-12)
        matrix = self.full_distance_matrix
        if np.any(matrix < 0):
            raise GridError("距離が負です")
        if np.any(np.abs(np.diag(matrix)) > tolerance):
            raise GridError("d(x, x) = 0 が成り立ちません")
        if np.any(np.abs(matrix - matrix.T) > tolerance):
            raise GridError("距離が対称ではありません")
        # d(i,k) <= d(i,j) + d(j,k) を全三つ組で確認
        bound = matrix[:, :, None] + matrix[None, :, :]
        violation = matrix[:, None, :] - bound
        if np.any(violation > tolerance):
            i, j, k = np.unravel_index(np.argmax(violation), violation.shape)
            raise GridError(f"三角不等式が成り立ちません: ({i}, {j}, {k})")
        off_diagonal = matrix + np.eye(len(matrix))
        if np.any(off_diagonal <= 0):
            raise GridError("異なる点の距離が 0 です")

    @classmethod
    def euclidean(cls, points, resolution=0.0):
        points = tuple(float(p) for p in points)
        array = np.array(points)
        return cls(points, np.abs(array[:, None] - array[None, :]), None, resolution)

    @classmethod
    def from_metric(cls, points, metric, limit_metric=None, resolution=0.0):
        """任意の距離関数から構成（構成時に三角不等式を検査）"""
        points = tuple(float(p) for p in points)
        distances = [[metric(x, y) for y in points] for x in points]
        limit = None if limit_metric is None else [limit_metric(x) for x in points]
        return cls(points, distances, limit, resolution)

    @property
    def has_limit(self):
        return self.limit_distances is not None

    @property
    def all_points(self):
        """極限点があれば末尾に LIMIT を加えた点列"""
        return self.points + ((LIMIT,) if self.has_limit else ())

    def __len__(self):
        return len(self.points)

    def index_of(self, point):
        if is_limit(point):
            if not self.has_limit:
                raise UnsampledPointError("この基底空間には極限点がありません")
            return len(self.points)
        try:
            return self.points.index(point)
        except ValueError:
            pass
        for i, p in enumerate(self.points):
            if math.isclose(p, point, rel_tol=1e-12, abs_tol=0.0):
                return i
        raise UnsampledPointError(f"サンプルされていない点です: {point}")

    def contains(self, point):
        try:
            self.index_of(point)
            return True
        except UnsampledPointError:
            return False

    def distance(self, x, y):
        i = self.index_of(x)
        k = self.index_of(y)
        return float(self.full_distance_matrix[i, k])

    @cached_property
    def full_distance_matrix(self):
        """極限点を含めた距離行列（初回に作って読み取り専用で保持）"""
        n = len(self.points)
        size = n + (1 if self.has_limit else 0)
        matrix = np.zeros((size, size))
        matrix[:n, :n] = np.array(self.distances)
        if self.has_limit:
            matrix[:n, n] = self.limit_distances
            matrix[n, :n] = self.limit_distances
        matrix.setflags(write=False)
        return matrix

    def limit_distance(self, point):
        """|ħ|_I。極限点がなければ一点コンパクト化の既定値 ħ を使う"""
        if self.has_limit:
            return self.limit_distances[self.index_of(point)]
        self.index_of(point)
        return float(point)


def make_geometric_grid(hbar_max, ratio, count):
    """{hbar_max·ratio^k : k = 0..count-1} のユークリッド格子"""
    if not (0 < ratio < 1):
        raise GridError(f"ratio は (0, 1) の範囲である必要があります: {ratio}")
    if not hbar_max > 0:
        raise GridError(f"hbar_max は正である必要があります: {hbar_max}")
    if int(count) != count or count < 2:
        raise GridError(f"count は 2 以上の整数である必要があります: {count}")
    points = [hbar_max * ratio ** k for k in range(int(count))]
    return SampledBaseSpace.euclidean(points, resolution=0.0)


def one_point_compactify(space):
    """0_I を付け加え d(ħ, 0_I) = ħ とする"""
    if space.has_limit:
        raise LimitPointError("すでに極限点があります")
    return SampledBaseSpace(space.points, space.distances, space.points, space.resolution)


def hbar_distance(space, hbar):
    """|ħ|_I = d(ħ, 0_I)"""
    if not space.has_limit:
        raise LimitPointError("極限点がない基底空間では |ħ|_I は定義されません")
    if is_limit(hbar):
        raise UnsampledPointError("0_I 自身の |ħ|_I は正ではありません")
    return space.limit_distances[space.index_of(hbar)]


# ========================================
# 基底写像
# ========================================

@dataclass(frozen=True)
class MapCheck:
    """判定結果と反例（違反した点の組）"""
    passed: bool
    witness: tuple = None
    detail: str = ""

    def __bool__(self):
        return self.passed


@dataclass(frozen=True)
class BaseMap:
    """α: I → J。mapping は source.all_points と同じ並び"""
    source: SampledBaseSpace
    target: SampledBaseSpace
    mapping: tuple
    snapping_errors: tuple = field(default=None)

    def __post_init__(self):
        mapping = tuple(LIMIT if is_limit(y) else float(y) for y in self.mapping)
        if len(mapping) != len(self.source.all_points):
            raise InvalidParameterError("写像が始域の全点で定義されていません")
        for y in mapping:
            if not self.target.contains(y):
                raise UnsampledPointError(f"像 {y} が終域にありません")
        object.__setattr__(self, 'mapping', mapping)
        errors = self.snapping_errors
        if errors is None:
            errors = (0.0,) * len(mapping)
        object.__setattr__(self, 'snapping_errors', tuple(float(e) for e in errors))

    def __call__(self, point):
        return self.mapping[self.source.index_of(point)]

    def snapping_error(self, point):
        return self.snapping_errors[self.source.index_of(point)]

    @classmethod
    def identity(cls, space):
        return cls(space, space, space.all_points)

    @classmethod
    def from_function(cls, source, function, target=None):
        """関数から基底写像を作る

        target を省略すると像の集合を終域にする（始域がコンパクト化済みなら終域も同様）。
        target を与えると最寄りのサンプルに丸め、丸め誤差を記録する。
        """
        values = [float(function(p)) for p in source.points]
        if target is None:
            if any(not v > 0 for v in values):
                raise GridError("像は正である必要があります")
            image = sorted(set(values), reverse=True)
            target = SampledBaseSpace.euclidean(image)
            if source.has_limit:
                target = one_point_compactify(target)
            mapping = list(values) + ([LIMIT] if source.has_limit else [])
            return cls(source, target, mapping)

        mapping = []
        errors = []
        for v in values:
            nearest = min(target.points, key=lambda p: abs(p - v))
            mapping.append(nearest)
            errors.append(abs(nearest - v))
        if source.has_limit:
            at_zero = float(function(0.0))
            if target.has_limit and abs(at_zero) <= resolve(None, 'base_space.metric_tolerance', 1e-12):
                mapping.append(LIMIT)
                errors.append(0.0)
            else:
                nearest = min(target.points, key=lambda p: abs(p - at_zero))
                mapping.append(nearest)
                errors.append(abs(nearest - at_zero))
        return cls(source, target, mapping, errors)

    @property
    def max_snapping_error(self):
        return max(self.snapping_errors) if self.snapping_errors else 0.0


def power_series_map(coefficients):
    """α(ħ) = a1·ħ + a2·ħ² + ... を返す関数"""
    coefficients = tuple(float(c) for c in coefficients)

    def alpha(hbar):
        return sum(c * hbar ** (k + 1) for k, c in enumerate(coefficients))

    return alpha


def compose(outer, inner):
    """outer ∘ inner"""
    if outer.source != inner.target:
        raise InvalidParameterError("inner の終域と outer の始域が一致しません")
    mapping = tuple(outer(y) for y in inner.mapping)
    errors = tuple(e + outer.snapping_error(y) for y, e in zip(inner.mapping, inner.snapping_errors))
    return BaseMap(inner.source, outer.target, mapping, errors)


def is_metric_map(alpha, tolerance=None):
    """d_J(α(x), α(y)) <= d_I(x, y) + tol を全サンプル対で確認"""
    tolerance = resolve(tolerance, 'base_space.metric_tolerance', 1e-12)
    points = alpha.source.all_points
    for i, x in enumerate(points):
        for y in points[i + 1:]:
            d_source = alpha.source.distance(x, y)
            d_target = alpha.target.distance(alpha(x), alpha(y))
            if d_target > d_source + tolerance:
                return MapCheck(False, (x, y), f"d_J={d_target:.6g} > d_I={d_source:.6g}")
    return MapCheck(True)


def is_proper(alpha, window=None):
    """有限サンプル上の固有性の代用判定

    始域の末尾で |α(ħ)|_J が狭義減少し、0_I が 0_J に写ることを要求する。
    """
    window = int(resolve(window, 'base_space.proper_tail_window', 4))
    source = alpha.source
    target = alpha.target
    if source.has_limit:
        image = alpha(LIMIT)
        if not is_limit(image):
            return MapCheck(False, (LIMIT, image), "0_I が 0_J に写りません")
    tail = source.points[-window:] if len(source.points) > window else source.points
    sizes = []
    for p in tail:
        image = alpha(p)
        if is_limit(image):
            return MapCheck(False, (p, image), "内部の点が 0_J に写っています")
        sizes.append(target.limit_distance(image))
    for k in range(len(sizes) - 1):
        if not sizes[k + 1] < sizes[k]:
            return MapCheck(False, (tail[k], tail[k + 1]),
                            "末尾で |α(ħ)|_J が減少しません（0_J から離れた点の逆像が末尾を含む）")
    return MapCheck(True)


def is_isometric_embedding(alpha, tolerance=None):
    """単射かつ全サンプル距離を保つ"""
    tolerance = resolve(tolerance, 'base_space.metric_tolerance', 1e-12)
    points = alpha.source.all_points
    images = [alpha(p) for p in points]
    for i in range(len(images)):
        for k in range(i + 1, len(images)):
            if images[i] is images[k] or (not is_limit(images[i]) and images[i] == images[k]):
                return MapCheck(False, (points[i], points[k]), "単射ではありません")
    for i, x in enumerate(points):
        for y in points[i + 1:]:
            gap = abs(alpha.target.distance(alpha(x), alpha(y)) - alpha.source.distance(x, y))
            if gap > tolerance:
                return MapCheck(False, (x, y), "等長ではありません")
    return MapCheck(True)


def is_dense_isometric_embedding(alpha, tolerance=None):
    """単射・等長・像が（極限点を除き）終域の resolution 以内で稠密"""
    tolerance = resolve(tolerance, 'base_space.metric_tolerance', 1e-12)
    embedding = is_isometric_embedding(alpha, tolerance)
    if not embedding:
        return embedding
    images = [alpha(p) for p in alpha.source.all_points]
    resolution = alpha.target.resolution
    for y in alpha.target.points:
        nearest = min(alpha.target.distance(y, image) for image in images)
        if nearest > resolution + tolerance:
            return MapCheck(False, (y,), f"終域の点 {y} が像から離れています")
    return MapCheck(True)
