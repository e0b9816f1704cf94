#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
量子化スキームと量子化条件の数値判定

ファジー球面（スピン j 表現、ħ_j = 1/√(j(j+1))）と非可換トーラス（時計・シフト行列、ħ_N = 1/N）。
古典多項式は単項式のキー（球面は指数 (n1, n2, n3)、トーラスはフーリエモード (m1, m2)）から
係数への辞書で表す。von Neumann・Dirac・Rieffel の条件、変形の非退化性・積の閉性、
同値な量子化の判定を ConvergenceReport などのレポートで返す。
"""

import itertools
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy.special import roots_legendre

import algebra
from bundle import GeneratorExpression, Profile, check_uniform_continuity
from errors import (FlowUnavailableError, InvalidParameterError, LimitPointError,
                    MissingBracketError, NotCauchyError, TooFewSamplesError, UnknownLabelError,
                    UnsampledPointError)
from limit import TailConfig, estimate_limit, fit_tail_slope, local_slopes
from settings import get_setting, resolve


# ========================================
# 古典多項式（辞書表現）
# ========================================

def _poly_add(p, q, scale=1):
    result = dict(p)
    for key, value in q.items():
        result[key] = result.get(key, 0) + scale * value
    return {k: v for k, v in result.items() if v != 0}


def _poly_mul(p, q):
    result = {}
    for k1, v1 in p.items():
        for k2, v2 in q.items():
            key = tuple(a + b for a, b in zip(k1, k2))
            result[key] = result.get(key, 0) + v1 * v2
    return {k: v for k, v in result.items() if v != 0}


def _poly_derivative(p, axis):
    result = {}
    for key, value in p.items():
        if key[axis]:
            lowered = list(key)
            lowered[axis] -= 1
            lowered = tuple(lowered)
            result[lowered] = result.get(lowered, 0) + key[axis] * value
    return result


def _laplacian(p):
    result = {}
    for axis in range(3):
        result = _poly_add(result, _poly_derivative(_poly_derivative(p, axis), axis))
    return result


@lru_cache(maxsize=None)
def _radius_power(k):
    """r^{2k} = (x1² + x2² + x3²)^k"""
    r2 = {(2, 0, 0): Fraction(1), (0, 2, 0): Fraction(1), (0, 0, 2): Fraction(1)}
    result = {(0, 0, 0): Fraction(1)}
    for _ in range(k):
        result = _poly_mul(result, r2)
    return result


def _projection_coefficient(k, degree):
    """調和射影 H = Σ_k c_k r^{2k} Δ^k p の係数"""
    denominator = Fraction(2 ** k * math.factorial(k))
    for i in range(1, k + 1):
        denominator *= 2 * degree + 1 - 2 * i
    return Fraction((-1) ** k) / denominator


def _harmonic_projection(p, degree):
    """次数 degree の斉次多項式 p = H + r²·q に分解して (H, q) を返す"""
    laplacians = [p]
    while laplacians[-1]:
        laplacians.append(_laplacian(laplacians[-1]))
    harmonic = {}
    remainder = {}
    for k, term in enumerate(laplacians[:-1]):
        c = _projection_coefficient(k, degree)
        harmonic = _poly_add(harmonic, _poly_mul(_radius_power(k), term), c)
        if k >= 1:
            remainder = _poly_add(remainder, _poly_mul(_radius_power(k - 1), term), -c)
    return harmonic, remainder


@lru_cache(maxsize=None)
def harmonic_components(key):
    """単項式を球面上で球面調和成分に分解: ((l, ((key, 係数), ...)), ...)"""
    components = []
    current = {tuple(key): Fraction(1)}
    degree = sum(key)
    while current and degree >= 0:
        harmonic, current = _harmonic_projection(current, degree)
        if harmonic:
            components.append((degree, tuple(sorted(harmonic.items()))))
        degree -= 2
    return tuple(sorted(components))


def _monomials(dimension, max_degree):
    """次数 max_degree 以下の単項式キー（次数順）"""
    keys = [k for k in itertools.product(range(max_degree + 1), repeat=dimension) if sum(k) <= max_degree]
    return sorted(keys, key=lambda k: (sum(k), tuple(-n for n in k)))


# ========================================
# スピン行列と対称化積
# ========================================

@lru_cache(maxsize=None)
def spin_matrices(two_j):
    """スピン j = two_j/2 の (S1, S2, S3)。基底は m = j, j-1, ..., -j"""
    j = two_j / 2
    n = two_j + 1
    m = j - np.arange(n)
    raising = np.zeros((n, n), dtype=complex)
    for k in range(1, n):
        raising[k - 1, k] = math.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    S1 = (raising + raising.T) / 2
    S2 = (raising - raising.T) / 2j
    S3 = np.diag(m).astype(complex)
    return tuple(algebra.as_fiber_element(S) for S in (S1, S2, S3))


@lru_cache(maxsize=4096)
def _symmetrized_product(two_j, key):
    """指数 key の単項式に S_a を代入した全順序の平均"""
    degree = sum(key)
    if degree == 0:
        return algebra.identity(two_j + 1)
    spins = spin_matrices(two_j)
    result = np.zeros((two_j + 1,) * 2, dtype=complex)
    for axis in range(3):
        if key[axis]:
            lowered = list(key)
            lowered[axis] -= 1
            result += key[axis] / degree * (spins[axis] @ _symmetrized_product(two_j, tuple(lowered)))
    return algebra.as_fiber_element(result)


def _casimir(two_j):
    j = two_j / 2
    return j * (j + 1)


def _harmonic_scale(two_j, l):
    """次数 l の調和成分の正規化定数（l > 2j では 0）"""
    if l > two_j:
        return 0.0
    product = Fraction(1)
    for k in range(1, l + 1):
        product *= (two_j + 1) ** 2 - k ** 2
    return math.sqrt(Fraction(4 ** l) / product)


@lru_cache(maxsize=4096)
def _sphere_monomial(two_j, key, ordering):
    if ordering == 'symmetric':
        scale = _casimir(two_j) ** (-sum(key) / 2)
        return algebra.as_fiber_element(scale * _symmetrized_product(two_j, key))
    result = np.zeros((two_j + 1,) * 2, dtype=complex)
    for l, harmonic in harmonic_components(key):
        scale = _harmonic_scale(two_j, l)
        if scale == 0.0:
            continue
        for component, coefficient in harmonic:
            result += scale * float(coefficient) * _symmetrized_product(two_j, component)
    return algebra.as_fiber_element(result)


# ========================================
# 量子化スキーム共通部分
# ========================================

class QuantizationScheme:
    """量子化スキームの共通処理（ħ の照合・量子化・シンボル）"""

    name = "scheme"

    def index_of(self, hbar):
        try:
            return self.hbars.index(hbar)
        except ValueError:
            pass
        for i, h in enumerate(self.hbars):
            if math.isclose(h, hbar, rel_tol=1e-12, abs_tol=0.0):
                return i
        raise UnsampledPointError(f"{self.name} の ħ 格子にない点です: {hbar}")

    def contains(self, hbar):
        try:
            self.index_of(hbar)
            return True
        except UnsampledPointError:
            return False

    def _check_labels(self, expr):
        unknown = expr.labels() - set(self.labels)
        if unknown:
            raise UnknownLabelError(f"{self.name} に登録されていないラベル: {sorted(unknown)}")

    def to_classical(self, expr, hbar=None):
        """式を古典多項式の辞書へ（係数関数は ħ での値、ħ が None なら極限値）"""
        self._check_labels(expr)
        poly = {}
        for word, profile, coefficient in expr.terms:
            if profile is not None:
                if hbar is None:
                    if profile.limit is None:
                        raise LimitPointError("係数関数の極限値が未知です（limit.classical_form を使ってください）")
                    coefficient = coefficient * profile.limit
                else:
                    coefficient = coefficient * profile.value(hbar)
            key = self._word_key(word)
            poly[key] = poly.get(key, 0) + coefficient
        return {k: v for k, v in poly.items() if v != 0}

    def quantize(self, expr, hbar):
        """Q_ħ(expr)"""
        index = self.index_of(hbar)
        poly = self.to_classical(expr, self.hbars[index])
        dim = self.fiber_dim(self.hbars[index])
        matrix = np.zeros((dim, dim), dtype=complex)
        for key, coefficient in poly.items():
            matrix = matrix + coefficient * self._monomial_matrix(key, index)
        return algebra.as_fiber_element(matrix)

    def symbol(self, expr):
        """位相空間格子上の古典シンボル"""
        return self.evaluate_classical(expr, self.symbol_grid)

    @property
    def sizes(self):
        raise NotImplementedError


def _bracket_table(entries):
    table = {}
    for (a, b), value in entries.items():
        table[(a, b)] = GeneratorExpression.parse(value) if isinstance(value, str) else value
    return table


def _drop_small(poly, relative=1e-12):
    if not poly:
        return poly
    scale = max(1.0, max(abs(v) for v in poly.values()))
    return {k: v for k, v in poly.items() if abs(v) > relative * scale}


# ========================================
# ファジー球面
# ========================================

_SPHERE_LABELS = ('x1', 'x2', 'x3')
_LEVI_CIVITA = {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1, (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}


def _sphere_brackets():
    """{x_a, x_b} = -ε_abc x_c"""
    table = {}
    for a in range(3):
        for b in range(3):
            value = GeneratorExpression.zero()
            for c in range(3):
                sign = _LEVI_CIVITA.get((a, b, c), 0)
                if sign:
                    value = value - sign * GeneratorExpression.generator(_SPHERE_LABELS[c])
            table[(_SPHERE_LABELS[a], _SPHERE_LABELS[b])] = value
    return table


@dataclass(frozen=True, eq=False)
class FuzzySphereScheme(QuantizationScheme):
    """スピン j 表現による球面の量子化

    ordering: 'harmonic'（球面調和成分ごとに正規化した対称化積）または 'symmetric'。
    hbar_rule: 'casimir'（1/√(j(j+1))）または 'inverse_j'（1/j）。
    """
    j_values: tuple
    hbar_rule: str = 'casimir'
    ordering: str = 'harmonic'
    bracket_table: dict = field(default=None)

    name = "fuzzy_sphere"

    def __post_init__(self):
        doubled = []
        for j in self.j_values:
            two_j = 2 * Fraction(j).limit_denominator(1000)
            if two_j.denominator != 1 or two_j < 1 or not math.isclose(float(two_j), 2 * float(j)):
                raise InvalidParameterError(f"j は 1/2 以上の半整数である必要があります: {j}")
            doubled.append(int(two_j))
        if not doubled:
            raise InvalidParameterError("j の値が空です")
        if any(doubled[k] >= doubled[k + 1] for k in range(len(doubled) - 1)):
            raise InvalidParameterError("j は狭義増加である必要があります")
        if self.hbar_rule not in ('casimir', 'inverse_j'):
            raise InvalidParameterError(f"未知の hbar_rule です: {self.hbar_rule}")
        if self.ordering not in ('harmonic', 'symmetric'):
            raise InvalidParameterError(f"未知の ordering です: {self.ordering}")

        object.__setattr__(self, 'j_values', tuple(d / 2 for d in doubled))
        object.__setattr__(self, 'two_j', tuple(doubled))
        if self.hbar_rule == 'casimir':
            hbars = tuple(1 / math.sqrt(_casimir(d)) for d in doubled)
        else:
            hbars = tuple(2 / d for d in doubled)
        object.__setattr__(self, 'hbars', hbars)
        object.__setattr__(self, 'labels', _SPHERE_LABELS)
        object.__setattr__(self, 'letters', tuple((label, False) for label in _SPHERE_LABELS))
        table = _sphere_brackets() if self.bracket_table is None else _bracket_table(self.bracket_table)
        object.__setattr__(self, 'bracket_table', table)
        grid, weights = _sphere_grid(int(get_setting('quantization.sphere_quadrature_nodes', 41)),
                                     int(get_setting('quantization.sphere_azimuth_nodes', 80)))
        object.__setattr__(self, 'symbol_grid', grid)
        object.__setattr__(self, 'symbol_weights', weights)

    @property
    def sizes(self):
        return self.j_values

    def fiber_dim(self, hbar):
        return self.two_j[self.index_of(hbar)] + 1

    def degree_cap(self, hbar):
        """量子化が単射な多項式の最高次数 2j"""
        return self.two_j[self.index_of(hbar)]

    def letter_matrix(self, label, adjoint, hbar):
        two_j = self.two_j[self.index_of(hbar)]
        try:
            axis = _SPHERE_LABELS.index(label)
        except ValueError:
            raise UnknownLabelError(f"fuzzy_sphere に登録されていないラベル: {label}")
        # Q(x_a) は自己共役
        return _sphere_monomial(two_j, tuple(int(a == axis) for a in range(3)), self.ordering)

    def _word_key(self, word):
        key = [0, 0, 0]
        for label, _ in word:
            key[_SPHERE_LABELS.index(label)] += 1
        return tuple(key)

    def _monomial_matrix(self, key, index):
        return _sphere_monomial(self.two_j[index], key, self.ordering)

    def from_classical(self, poly):
        terms = []
        for key, coefficient in poly.items():
            word = tuple((label, False) for label, n in zip(_SPHERE_LABELS, key) for _ in range(n))
            terms.append((word, None, coefficient))
        return GeneratorExpression(tuple(terms))

    def evaluate_classical(self, expr, points):
        points = np.asarray(points, dtype=float)
        values = np.zeros(len(points), dtype=complex)
        for key, coefficient in self.to_classical(expr).items():
            values += coefficient * np.prod(points ** np.array(key), axis=1)
        return values

    def _table_poly(self, a, b):
        entry = self.bracket_table.get((_SPHERE_LABELS[a], _SPHERE_LABELS[b]))
        return None if entry is None else self.to_classical(entry)

    def poisson_bracket(self, a, b):
        """{a, b} = Σ ∂_a p ∂_b q {x_a, x_b}（括弧は表から）"""
        p = self.to_classical(a)
        q = self.to_classical(b)
        result = {}
        missing = []
        for i in range(3):
            dp = _poly_derivative(p, i)
            if not dp:
                continue
            for k in range(3):
                dq = _poly_derivative(q, k)
                if not dq:
                    continue
                entry = self._table_poly(i, k)
                if entry is None:
                    missing.append((_SPHERE_LABELS[i], _SPHERE_LABELS[k]))
                    continue
                result = _poly_add(result, _poly_mul(_poly_mul(dp, dq), entry))
        if missing:
            raise MissingBracketError(f"括弧テーブルにない組です: {missing}", missing)
        return self.from_classical(_drop_small(result))

    def section_for(self, expr, bundle):
        """古典式に対応する断面の式（単項式ごとに生成元の積）"""
        return self.from_classical(self.to_classical(expr))

    def fit_classical(self, values, max_degree):
        """格子上の値を max_degree 次以下の多項式で最小二乗近似"""
        keys = _monomials(3, max_degree)
        design = np.column_stack([np.prod(self.symbol_grid ** np.array(k), axis=1) for k in keys])
        coefficients, *_ = np.linalg.lstsq(design.astype(complex), np.asarray(values, dtype=complex),
                                           rcond=None)
        return self.from_classical(_drop_small(dict(zip(keys, coefficients))))

    def classical_flow(self, hamiltonian, t, steps=None, points=None):
        """ẋ = {h, x} を RK4 で時間 t だけ積分した位相空間格子の像"""
        steps = int(resolve(steps, 'quantization.flow_steps_per_unit_time', 200))
        points = self.symbol_grid if points is None else np.asarray(points, dtype=float)
        h = self.to_classical(hamiltonian)
        gradient = [_poly_derivative(h, b) for b in range(3)]
        fields = []
        missing = []
        for b in range(3):
            if not gradient[b]:
                continue
            for a in range(3):
                entry = self._table_poly(b, a)
                if entry is None:
                    missing.append((_SPHERE_LABELS[b], _SPHERE_LABELS[a]))
                else:
                    fields.append((a, _poly_mul(gradient[b], entry)))
        if missing:
            raise MissingBracketError(f"括弧テーブルにない組です: {missing}", missing)

        def velocity(x):
            v = np.zeros_like(x)
            for a, poly in fields:
                for key, coefficient in poly.items():
                    v[:, a] += (coefficient * np.prod(x ** np.array(key), axis=1)).real
            return v

        count = max(1, math.ceil(abs(t) * steps))
        dt = t / count
        x = np.array(points, dtype=float)
        for _ in range(count):
            k1 = velocity(x)
            k2 = velocity(x + dt / 2 * k1)
            k3 = velocity(x + dt / 2 * k2)
            k4 = velocity(x + dt * k3)
            x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return x

    def classical_basis(self, hbar, max_degree):
        """量子化が単射であるべき単項式（次数 min(2j, max_degree) 以下）"""
        return _monomials(3, min(self.degree_cap(hbar), max_degree))

    def truncated_basis(self, hbar, max_degree):
        cap = self.degree_cap(hbar)
        return [k for k in _monomials(3, max_degree) if sum(k) > cap]

    def closure_basis(self):
        return _monomials(3, 2)

    def key_label(self, key):
        return "*".join(f"{label}^{n}" if n > 1 else label
                        for label, n in zip(_SPHERE_LABELS, key) if n) or "1"


def _sphere_grid(polar_nodes, azimuth_nodes):
    """cos θ のガウス・ルジャンドル点 × 等間隔の φ、両極を加えた格子と求積重み"""
    nodes, weights = roots_legendre(polar_nodes)
    phi = 2 * np.pi * np.arange(azimuth_nodes) / azimuth_nodes
    sine = np.sqrt(1 - nodes ** 2)
    grid = np.column_stack([
        np.outer(sine, np.cos(phi)).ravel(),
        np.outer(sine, np.sin(phi)).ravel(),
        np.repeat(nodes, azimuth_nodes),
    ])
    poles = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    quadrature = np.repeat(weights, azimuth_nodes) * (2 * np.pi / azimuth_nodes) / (4 * np.pi)
    grid = np.vstack([grid, poles])
    quadrature = np.concatenate([quadrature, [0.0, 0.0]])
    grid.setflags(write=False)
    quadrature.setflags(write=False)
    return grid, quadrature


def fuzzy_sphere_scheme(j_values, hbar_rule='casimir', ordering='harmonic', bracket_table=None):
    return FuzzySphereScheme(tuple(j_values), hbar_rule, ordering, bracket_table)


# ========================================
# 非可換トーラス
# ========================================

_TORUS_LABELS = ('u', 'v')
_TORUS_MODES = {('u', False): (1, 0), ('u', True): (-1, 0), ('v', False): (0, 1), ('v', True): (0, -1)}


@lru_cache(maxsize=None)
def clock_shift(N):
    """U = diag(ω^k), V e_k = e_{k+1}（UV = ωVU）"""
    omega = np.exp(2j * np.pi / N)
    U = np.diag(omega ** np.arange(N))
    V = np.roll(np.eye(N, dtype=complex), 1, axis=0)
    return algebra.as_fiber_element(U), algebra.as_fiber_element(V)


@lru_cache(maxsize=4096)
def weyl_operator(N, mode):
    """W(m) = ω^{-m1 m2/2} U^{m1} V^{m2}"""
    m1, m2 = mode
    phase = np.exp(-1j * np.pi * m1 * m2 / N)
    clock = np.diag(np.exp(2j * np.pi * m1 * np.arange(N) / N))
    shift = np.roll(np.eye(N, dtype=complex), m2, axis=0)
    return algebra.as_fiber_element(phase * clock @ shift)


@dataclass(frozen=True, eq=False)
class NCTorusScheme(QuantizationScheme):
    """時計・シフト行列によるトーラスの量子化（Weyl 順序）"""
    N_values: tuple
    bracket_table: dict = field(default=None)

    name = "nc_torus"

    def __post_init__(self):
        sizes = []
        for N in self.N_values:
            if int(N) != N or N < 2:
                raise InvalidParameterError(f"N は 2 以上の整数である必要があります: {N}")
            sizes.append(int(N))
        if not sizes:
            raise InvalidParameterError("N の値が空です")
        if any(sizes[k] >= sizes[k + 1] for k in range(len(sizes) - 1)):
            raise InvalidParameterError("N は狭義増加である必要があります")
        object.__setattr__(self, 'N_values', tuple(sizes))
        object.__setattr__(self, 'hbars', tuple(1 / N for N in sizes))
        object.__setattr__(self, 'labels', _TORUS_LABELS)
        object.__setattr__(self, 'letters', tuple(_TORUS_MODES))
        if self.bracket_table is None:
            table = {
                ('u', 'u'): GeneratorExpression.zero(),
                ('v', 'v'): GeneratorExpression.zero(),
                ('u', 'v'): GeneratorExpression.parse('u*v') * (-2 * np.pi),
                ('v', 'u'): GeneratorExpression.parse('u*v') * (2 * np.pi),
            }
        else:
            table = _bracket_table(self.bracket_table)
        object.__setattr__(self, 'bracket_table', table)
        size = int(get_setting('quantization.torus_grid_size', 64))
        x = np.arange(size) / size
        grid = np.column_stack([np.repeat(x, size), np.tile(x, size)])
        grid.setflags(write=False)
        object.__setattr__(self, 'symbol_grid', grid)

    @property
    def sizes(self):
        return self.N_values

    def fiber_dim(self, hbar):
        return self.N_values[self.index_of(hbar)]

    def degree_cap(self, hbar):
        """|m_i| の上限（|m_i| < N/2）"""
        return (self.fiber_dim(hbar) - 1) // 2

    def letter_matrix(self, label, adjoint, hbar):
        if label not in _TORUS_LABELS:
            raise UnknownLabelError(f"nc_torus に登録されていないラベル: {label}")
        U, V = clock_shift(self.fiber_dim(hbar))
        matrix = U if label == 'u' else V
        return algebra.adjoint(matrix) if adjoint else matrix

    def _word_key(self, word):
        m1 = sum(_TORUS_MODES[letter][0] for letter in word)
        m2 = sum(_TORUS_MODES[letter][1] for letter in word)
        return (m1, m2)

    def _monomial_matrix(self, key, index):
        return weyl_operator(self.N_values[index], key)

    def mode_word(self, mode):
        m1, m2 = mode
        return (tuple(('u', m1 < 0) for _ in range(abs(m1)))
                + tuple(('v', m2 < 0) for _ in range(abs(m2))))

    def from_classical(self, poly):
        return GeneratorExpression(tuple((self.mode_word(m), None, c) for m, c in poly.items()))

    def evaluate_classical(self, expr, points):
        points = np.asarray(points, dtype=float)
        values = np.zeros(len(points), dtype=complex)
        for mode, coefficient in self.to_classical(expr).items():
            values += coefficient * np.exp(2j * np.pi * (points @ np.array(mode, dtype=float)))
        return values

    def _bracket_rate(self):
        """{u, v} = λ·uv の λ"""
        for pair, sign in ((('u', 'v'), 1), (('v', 'u'), -1)):
            entry = self.bracket_table.get(pair)
            if entry is not None:
                poly = self.to_classical(entry)
                if set(poly) - {(1, 1)}:
                    raise InvalidParameterError("トーラスの括弧 {u, v} は uv の定数倍である必要があります")
                return sign * poly.get((1, 1), 0)
        return None

    def poisson_bracket(self, a, b):
        """{e_m, e_n} = λ(m1 n2 - m2 n1) e_{m+n}"""
        p = self.to_classical(a)
        q = self.to_classical(b)
        rate = None
        result = {}
        for m, cm in p.items():
            for n, cn in q.items():
                wedge = m[0] * n[1] - m[1] * n[0]
                if wedge == 0:
                    continue
                if rate is None:
                    rate = self._bracket_rate()
                    if rate is None:
                        raise MissingBracketError("括弧テーブルにない組です: [('u', 'v')]", [('u', 'v')])
                key = (m[0] + n[0], m[1] + n[1])
                result[key] = result.get(key, 0) + rate * wedge * cm * cn
        return self.from_classical(_drop_small(result))

    def section_for(self, expr, bundle):
        """モード m を Weyl 位相の係数関数付きの語 u^{m1} v^{m2} に写す（評価すると W(m)）"""
        terms = []
        for mode, coefficient in self.to_classical(expr).items():
            profile = None
            if mode[0] * mode[1] != 0:
                profile = Profile(bundle.base.points,
                                  [np.exp(-1j * np.pi * mode[0] * mode[1] * a) for a in bundle.anchors],
                                  limit=1.0)
            terms.append((self.mode_word(mode), profile, coefficient))
        return GeneratorExpression(tuple(terms))

    def classical_flow(self, hamiltonian, t, steps=None, points=None):
        raise FlowUnavailableError("nc_torus には古典ハミルトン流が用意されていません")

    def classical_basis(self, hbar, max_mode):
        bound = min(self.degree_cap(hbar), max_mode)
        return [(m1, m2) for m1 in range(-bound, bound + 1) for m2 in range(-bound, bound + 1)]

    def truncated_basis(self, hbar, max_mode):
        cap = self.degree_cap(hbar)
        return [(m1, m2) for m1 in range(-max_mode, max_mode + 1) for m2 in range(-max_mode, max_mode + 1)
                if max(abs(m1), abs(m2)) > cap]

    def closure_basis(self):
        return [(m1, m2) for m1 in range(-2, 3) for m2 in range(-2, 3) if abs(m1) + abs(m2) <= 2]

    def key_label(self, key):
        return f"e{key}"


def nc_torus_scheme(N_values, bracket_table=None):
    return NCTorusScheme(tuple(N_values), bracket_table)


def make_scheme(name, sizes, **options):
    """名前から量子化スキームを作る（CLI 用）"""
    if name == 'fuzzy_sphere':
        return fuzzy_sphere_scheme(sizes, options.get('hbar_rule', 'casimir'),
                                   options.get('ordering', 'harmonic'))
    if name == 'nc_torus':
        return nc_torus_scheme(sizes)
    raise InvalidParameterError(f"未知の量子化スキームです: {name}")


def _expression(expr):
    return GeneratorExpression.parse(expr) if isinstance(expr, str) else expr


def quantize(s, expr, hbar):
    """Q_ħ(expr)"""
    return s.quantize(_expression(expr), hbar)


# ========================================
# 収束レポート
# ========================================

@dataclass
class ConvergenceReport:
    name: str
    table: pd.DataFrame
    slope: float
    exact: bool
    passed: bool
    residual_limit: object = None
    violations: list = field(default_factory=list)

    def to_frame(self):
        return self.table


def _grid_points(s, grid):
    if grid is None:
        return list(s.hbars)
    points = getattr(grid, 'points', grid)
    return [s.hbars[s.index_of(p)] for p in points]


def convergence_report(name, hbars, values, residuals, config=None):
    """残差列から収束レポートを作る

    残差が exact_tolerance 以下なら厳密とみなし合格。
    そうでなければ末尾での非増加と log-log 傾き ≥ slope_minimum を要求する。
    """
    config = config or TailConfig.from_settings()
    hbars = [float(h) for h in hbars]
    residuals = [float(r) for r in residuals]
    table = pd.DataFrame({
        'hbar': hbars,
        'value': [float(v) for v in values],
        'residual': residuals,
        'slope_estimate': local_slopes(hbars, residuals),
    })
    exact = max(residuals, default=0.0) <= config.exact_tolerance
    slope = fit_tail_slope(hbars, residuals, config.window)
    violations = []
    if not exact:
        tail = residuals[-config.window:]
        for k in range(len(tail) - 1):
            if tail[k + 1] > tail[k] * (1 + 1e-9) + config.exact_tolerance:
                violations.append("末尾で残差が減少していません")
                break
        if slope is None or slope < config.slope_minimum:
            shown = "なし" if slope is None else f"{slope:.3g}"
            violations.append(f"残差の傾き {shown} が最小値 {config.slope_minimum} を下回ります")
    residual_limit = None
    try:
        residual_limit = estimate_limit(pd.Series(residuals, index=hbars), config, nonnegative=True)
    except (TooFewSamplesError, NotCauchyError):
        pass
    return ConvergenceReport(name, table, slope, exact, not violations, residual_limit, violations)


def check_von_neumann(s, a, b, grid=None, config=None):
    """r(ħ) = ‖Q(a)Q(b) - Q(ab)‖"""
    a = _expression(a)
    b = _expression(b)
    hbars = _grid_points(s, grid)
    values = []
    residuals = []
    for h in hbars:
        product = s.quantize(a * b, h)
        values.append(algebra.operator_norm(product))
        residuals.append(algebra.operator_norm(s.quantize(a, h) @ s.quantize(b, h) - product))
    return convergence_report('von_neumann', hbars, values, residuals, config)


def check_dirac(s, a, b, grid=None, config=None):
    """r(ħ) = ‖(i/ħ)[Q(a), Q(b)] - Q({a, b})‖"""
    a = _expression(a)
    b = _expression(b)
    bracket = s.poisson_bracket(a, b)
    hbars = _grid_points(s, grid)
    values = []
    residuals = []
    for h in hbars:
        scaled = algebra.scaled_bracket(s.quantize(a, h), s.quantize(b, h), h)
        values.append(algebra.operator_norm(scaled))
        residuals.append(algebra.operator_norm(scaled - s.quantize(bracket, h)))
    return convergence_report('dirac', hbars, values, residuals, config)


def check_equivalence(s1, s2, expr, grid=None, config=None):
    """同じファイバーを持つ2つの量子化の差 ‖Q(A) - Q'(A)‖ → 0"""
    if s1.name != s2.name or s1.hbars != s2.hbars:
        raise InvalidParameterError("同値性の判定には同じ ħ 格子とファイバーのスキームが必要です")
    expr = _expression(expr)
    hbars = _grid_points(s1, grid)
    values = []
    residuals = []
    for h in hbars:
        Q1 = s1.quantize(expr, h)
        values.append(algebra.operator_norm(Q1))
        residuals.append(algebra.operator_norm(Q1 - s2.quantize(expr, h)))
    return convergence_report('equivalence', hbars, values, residuals, config)


@dataclass
class RieffelReport:
    table: pd.DataFrame
    continuity: object
    limit: object
    symbol_sup: float
    matches: bool
    passed: bool
    violations: list = field(default_factory=list)


def check_rieffel(s, a, grid=None, config=None):
    """ħ ↦ ‖Q_ħ(a)‖ の一様連続性と、その極限が古典シンボルの sup ノルムに一致するか"""
    config = config or TailConfig.from_settings()
    a = _expression(a)
    hbars = _grid_points(s, grid)
    norms = pd.Series([algebra.operator_norm(s.quantize(a, h)) for h in hbars],
                      index=pd.Index(hbars, name='hbar'), name='norm')
    continuity = check_uniform_continuity(norms)
    violations = list(continuity.violations)
    symbol_sup = float(np.max(np.abs(s.symbol(a)))) if not a.is_zero else 0.0
    limit = None
    matches = False
    try:
        limit = estimate_limit(norms, config, nonnegative=True)
        matches = abs(limit.value - symbol_sup) <= config.uniqueness_tolerance
        if not matches:
            violations.append(f"極限 {limit.value:.6g} が古典シンボルの sup {symbol_sup:.6g} と一致しません")
    except (TooFewSamplesError, NotCauchyError) as e:
        violations.append(f"極限を推定できません: {e}")
    table = pd.DataFrame({'hbar': hbars, 'value': norms.to_numpy(),
                          'residual': [abs(v - symbol_sup) for v in norms.to_numpy()],
                          'slope_estimate': float('nan')})
    return RieffelReport(table, continuity, limit, symbol_sup, matches, not violations, violations)


# ========================================
# 変形の非退化性と閉性
# ========================================

@dataclass
class DeformationReport:
    passed: bool
    table: pd.DataFrame
    truncated: dict
    violations: list = field(default_factory=list)


def _rank(matrix):
    if matrix.size == 0:
        return 0
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular.size == 0 or singular[0] == 0:
        return 0
    return int(np.sum(singular > 1e-8 * singular[0]))


def check_deformation(s, grid=None, trials=None, rng=None, max_degree=None):
    """Q_ħ の非退化性（Q(A) = 0 ⇒ A = 0）と量子化された生成元の積の閉性

    次数上限（球面は 2j、トーラスは |m_i| < N/2）を超える項は失敗ではなく
    truncated として記録する。
    """
    trials = int(resolve(trials, 'bundle.generation_trials', 8))
    rng = rng if rng is not None else np.random.default_rng(0)
    if max_degree is None:
        key = 'quantization.deformation_max_degree' if s.name == 'fuzzy_sphere' else 'quantization.deformation_max_mode'
        max_degree = int(get_setting(key, 4 if s.name == 'fuzzy_sphere' else 3))
    rows = []
    truncated = {}
    violations = []
    for h in _grid_points(s, grid):
        index = s.index_of(h)
        basis = s.classical_basis(h, max_degree)
        symbols = np.column_stack([s.symbol(s.from_classical({k: 1})) for k in basis])
        images = np.column_stack([s._monomial_matrix(k, index).ravel() for k in basis])
        quantized_rank = _rank(images)
        symbol_rank = _rank(symbols)
        # null(Q) ⊆ null(シンボル) なら単射
        injective = _rank(np.vstack([images, symbols])) == quantized_rank

        closure = np.column_stack([s._monomial_matrix(k, index).ravel() for k in s.closure_basis()])
        letters = [s.letter_matrix(label, adj, h) for label, adj in s.letters]
        products = np.column_stack([(x @ y).ravel() for x in letters for y in letters])
        closed = _rank(np.hstack([closure, products])) == _rank(closure)

        random_ok = True
        for _ in range(trials):
            c = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
            if np.max(np.abs(symbols @ c)) > 1e-8 and algebra.operator_norm(
                    (images @ c).reshape(s.fiber_dim(h), -1)) <= 1e-10:
                random_ok = False

        flagged = [s.key_label(k) for k in s.truncated_basis(h, max_degree)]
        if flagged:
            truncated[h] = flagged

        zero_ok = algebra.operator_norm(s.quantize(GeneratorExpression.zero(), h)) == 0.0
        rows.append({'hbar': h, 'dim': s.fiber_dim(h), 'basis_size': len(basis),
                     'symbol_rank': symbol_rank, 'quantized_rank': quantized_rank,
                     'injective': injective, 'closed': closed, 'random_nonzero': random_ok,
                     'truncated': len(flagged)})
        if not injective:
            violations.append(f"ħ={h:.6g} で量子化が単射ではありません")
        if not closed:
            violations.append(f"ħ={h:.6g} で生成元の積が量子化の像に含まれません")
        if not random_ok:
            violations.append(f"ħ={h:.6g} で非零の古典式が 0 に量子化されました")
        if not zero_ok:
            violations.append(f"ħ={h:.6g} で 0 が 0 に量子化されません")

    if truncated:
        count = sum(len(v) for v in truncated.values())
        print(f"[WARNING] 次数上限を超えて切り捨てられた項が {count} 個あります", file=sys.stderr)
    table = pd.DataFrame(rows, columns=['hbar', 'dim', 'basis_size', 'symbol_rank', 'quantized_rank',
                                       'injective', 'closed', 'random_nonzero', 'truncated'])
    return DeformationReport(not violations, table, truncated, violations)
