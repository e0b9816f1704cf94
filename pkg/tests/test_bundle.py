#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""bundle のテスト"""

import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import settings as hsettings
from hypothesis import strategies as st

import algebra
from base_space import BaseMap, SampledBaseSpace, compose, make_geometric_grid
from bundle import (GeneratorExpression, Profile, Section, canonical_restriction, check_fullness,
                    check_uniform_continuity, constant_bundle, evaluate, is_cauchy_tail, module_action,
                    norm_function, random_expression, reparametrize_bundle, restrict_section, words_up_to,
                    restrict_to_vanishing, sup_distance, sup_norm)
from errors import InvalidParameterError, TooFewSamplesError, UnknownLabelError

x1 = GeneratorExpression.generator('x1')
x2 = GeneratorExpression.generator('x2')
x3 = GeneratorExpression.generator('x3')


def geometric_series(function, count=16):
    grid = make_geometric_grid(1.0, 0.5, count)
    return pd.Series([function(h) for h in grid.points], index=pd.Index(grid.points, name='hbar'))


# ========================================
# 式
# ========================================

def test_parse_matches_construction():
    assert GeneratorExpression.parse("x1*x2 - 2*x3") == x1 * x2 - 2 * x3
    assert GeneratorExpression.parse("(x1 + x2)^2") == x1 * x1 + x1 * x2 + x2 * x1 + x2 * x2
    assert GeneratorExpression.parse("-x3") == -x3


def test_parse_adjoint_and_complex_coefficients():
    u = GeneratorExpression.generator('u')
    v = GeneratorExpression.generator('v')
    assert GeneratorExpression.parse("u*v'") == u * v.adjoint()
    assert GeneratorExpression.parse("(1j*u)'") == -1j * u.adjoint()


@pytest.mark.parametrize("text", ["", "x1 +", "(x1", "x1^x2", "x1 $ x2"])
def test_parse_errors(text):
    with pytest.raises(InvalidParameterError):
        GeneratorExpression.parse(text)


def test_expression_normal_form():
    assert (x1 - x1).is_zero
    assert (x1 * x2).degree == 2
    assert str(GeneratorExpression.zero()) == "0"
    assert (x1 + x2).labels() == {'x1', 'x2'}


# ========================================
# 断面と評価
# ========================================

def test_section_rejects_unknown_label(sphere_bundle):
    with pytest.raises(UnknownLabelError):
        sphere_bundle.section("x1 + y")
    with pytest.raises(KeyError):
        Section(sphere_bundle, GeneratorExpression.generator('u'))


@hsettings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6), st.integers(min_value=0, max_value=7))
def test_evaluation_is_star_homomorphism(sphere_bundle, seed, index):
    rng = np.random.default_rng(seed)
    point = sphere_bundle.base.points[index]
    a = Section(sphere_bundle, random_expression(sphere_bundle.letters, rng))
    b = Section(sphere_bundle, random_expression(sphere_bundle.letters, rng))
    A = evaluate(a, point)
    B = evaluate(b, point)
    assert np.allclose(evaluate(a * b, point), A @ B, atol=1e-9)
    assert np.allclose(evaluate(a + b, point), A + B, atol=1e-12)
    assert np.allclose(evaluate(a.adjoint(), point), algebra.adjoint(A), atol=1e-12)


def test_norm_function_of_x3(sphere, sphere_bundle):
    N = norm_function(sphere_bundle.section("x3"))
    expected = [math.sqrt(j / (j + 1)) for j in sphere.j_values]
    assert list(N.index) == list(sphere.hbars)
    assert N.to_numpy() == pytest.approx(expected, rel=1e-10)
    assert sup_norm(sphere_bundle.section("x3")) == pytest.approx(math.sqrt(5 / 6))


def test_sup_norm_is_a_c_star_norm(sphere_bundle):
    rng = np.random.default_rng(4)
    for _ in range(5):
        a = Section(sphere_bundle, random_expression(sphere_bundle.letters, rng))
        b = Section(sphere_bundle, random_expression(sphere_bundle.letters, rng))
        assert sup_norm(a.adjoint() * a) == pytest.approx(sup_norm(a) ** 2, rel=1e-9)
        assert sup_norm(a * b) <= sup_norm(a) * sup_norm(b) + 1e-9
        assert sup_distance(a, a) == 0.0


def test_torus_letters_are_unitary(torus_bundle):
    for point in torus_bundle.base.points:
        U = evaluate(torus_bundle.section("u"), point)
        assert algebra.is_unitary(U)
        assert np.allclose(evaluate(torus_bundle.section("u*u'"), point), np.eye(U.shape[0]))


# ========================================
# 一様連続性
# ========================================

def test_uniform_continuity_of_smooth_profiles():
    assert check_uniform_continuity(geometric_series(lambda h: h)).passed
    assert check_uniform_continuity(geometric_series(lambda h: 1.0)).passed


def test_sin_inverse_is_not_uniformly_continuous():
    report = check_uniform_continuity(geometric_series(lambda h: math.sin(1 / h)))
    assert not report.passed
    assert not report.cauchy


def test_uniform_continuity_needs_three_samples():
    with pytest.raises(TooFewSamplesError):
        check_uniform_continuity(geometric_series(lambda h: h, count=2))


def test_cauchy_tail():
    partial_sums = np.cumsum([0.5 ** k for k in range(12)])
    assert is_cauchy_tail(partial_sums)
    assert not is_cauchy_tail([(-1) ** k for k in range(12)])
    assert is_cauchy_tail([2.0] * 6)


# ========================================
# 加群作用と制限
# ========================================

def test_module_action_scales_fibers(sphere_bundle):
    a = sphere_bundle.section("x3")
    scaled = module_action(lambda h: h, a)
    for point in sphere_bundle.base.points:
        assert np.allclose(evaluate(scaled, point), point * evaluate(a, point))
    assert module_action(lambda h: 1.0, a) is a
    assert module_action(lambda h: 0.0, a).expr.is_zero


def test_module_action_warns_for_oscillating_profile(sphere_bundle, capsys):
    points = sphere_bundle.base.points
    alternating = Profile(points, [(-1) ** k for k in range(len(points))])
    module_action(alternating, sphere_bundle.section("x3"))
    assert "[WARNING]" in capsys.readouterr().err


@hsettings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_norm_function_of_module_action(sphere_bundle, seed):
    rng = np.random.default_rng(seed)
    c0, c1 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    a = Section(sphere_bundle, random_expression(sphere_bundle.letters, rng))
    fa = module_action(lambda h: c0 + c1 * h, a)
    expected = [abs(c0 + c1 * h) * n for h, n in norm_function(a).items()]
    assert norm_function(fa).to_numpy() == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_cauchy_sequence_stays_in_closed_span(sphere_bundle):
    rng = np.random.default_rng(11)
    points = sphere_bundle.base.points
    words = words_up_to(sphere_bundle.letters, 2)
    count = 80
    # 項 k は 2^-k·g_k·w_k（|g_k| <= 1）
    profiles = np.exp(2j * np.pi * rng.random((count, len(points)))) * rng.random((count, len(points)))
    weights = 0.5 ** np.arange(count)

    def partial_sum(n):
        total = sphere_bundle.zero()
        for k in range(n + 1):
            word = Section(sphere_bundle, GeneratorExpression.word(words[k % len(words)]))
            total = total + module_action(Profile(points, weights[k] * profiles[k]), word)
        return total

    limit = sphere_bundle.zero()
    for w, word in enumerate(words):
        summed = (weights[w::len(words), None] * profiles[w::len(words)]).sum(axis=0)
        limit = limit + module_action(Profile(points, summed), Section(sphere_bundle, GeneratorExpression.word(word)))

    sections = {n: partial_sum(n) for n in (5, 10, 20, 40)}
    for n, s in sections.items():
        assert sup_distance(s, limit) <= 0.5 ** n + 1e-12
    assert sup_distance(sections[10], sections[20]) <= 0.5 ** 10 + 1e-12
    assert norm_function(sections[40]).to_numpy() == pytest.approx(norm_function(limit).to_numpy(), abs=1e-9)


def test_restrict_to_vanishing(sphere_bundle):
    points = sphere_bundle.base.points
    cutoff = Profile(points, [1.0] * 4 + [0.5, 0.25, 0.0, 0.0])
    a = restrict_to_vanishing(sphere_bundle.section("x1"), cutoff, core=points[:4])
    assert np.allclose(evaluate(a, points[-1]), 0)
    with pytest.raises(InvalidParameterError):
        restrict_to_vanishing(sphere_bundle.section("x1"), Profile(points, [2.0] * len(points)))
    with pytest.raises(InvalidParameterError):
        restrict_to_vanishing(sphere_bundle.section("x1"), Profile(points, [0.0] + [1.0] * 7))


# ========================================
# 充満性とバンドルの構成
# ========================================

def test_fullness_of_flagship_bundles(sphere_bundle, torus_bundle):
    sphere_report = check_fullness(sphere_bundle, rng=np.random.default_rng(0))
    assert sphere_report.passed, sphere_report.violations
    assert all(f.full for f in sphere_report.fibers)
    assert check_fullness(torus_bundle, rng=np.random.default_rng(0)).passed


def test_fullness_fails_for_commuting_generators(sphere):
    base = make_geometric_grid(1.0, 0.5, 3)
    bundle = constant_bundle(sphere, sphere.hbars[2], base)
    restricted = type(bundle)(bundle.base, bundle.scheme, ('x3',), bundle.anchors)
    assert not check_fullness(restricted, rng=np.random.default_rng(0)).passed


def test_reparametrize_and_restrict(sphere_bundle):
    alpha = BaseMap.from_function(sphere_bundle.base, lambda h: h / 2)
    moved = reparametrize_bundle(sphere_bundle, alpha)
    for point in sphere_bundle.base.points:
        assert moved.fiber_dim(alpha(point)) == sphere_bundle.fiber_dim(point)

    inclusion = BaseMap(SampledBaseSpace.euclidean(sphere_bundle.base.points[-3:]), sphere_bundle.base,
                        sphere_bundle.base.points[-3:])
    restricted = canonical_restriction(sphere_bundle, inclusion)
    assert restricted.base.points == sphere_bundle.base.points[-3:]
    section = restrict_section(sphere_bundle.section("x1"), inclusion)
    last = sphere_bundle.base.points[-1]
    assert np.array_equal(evaluate(section, last), evaluate(sphere_bundle.section("x1"), last))


def test_restriction_along_composite_map(sphere_bundle):
    points = sphere_bundle.base.points
    middle = SampledBaseSpace.euclidean(points[2:])
    inner = SampledBaseSpace.euclidean(points[-3:])
    first = BaseMap(middle, sphere_bundle.base, middle.points)
    second = BaseMap(inner, middle, inner.points)
    composite = compose(first, second)

    a = module_action(lambda h: 1 + h, sphere_bundle.section("x1*x2 + 2*x3"))
    stepwise = restrict_section(restrict_section(a, first), second)
    direct = restrict_section(a, composite)
    assert stepwise.bundle.anchors == direct.bundle.anchors
    assert stepwise.base == direct.base
    for point in inner.points:
        assert np.array_equal(evaluate(stepwise, point), evaluate(direct, point))
        assert np.array_equal(evaluate(direct, point), evaluate(a, point))
