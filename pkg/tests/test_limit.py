#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""limit のテスト"""

import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import settings as hsettings
from hypothesis import strategies as st

from base_space import LIMIT, make_geometric_grid
from bundle import (GeneratorExpression, Section, constant_bundle, evaluate, make_bundle, module_action,
                    random_expression)
from errors import LimitPointError, NotCauchyError, NotExtendedError, TooFewSamplesError
from limit import (TailConfig, check_extension_axioms, check_uniqueness, classical_symbol, estimate_limit,
                   evaluate_extended, extend_bundle, extend_section, extended_norm_function, fit_tail_slope,
                   in_null_ideal, limit_fiber, limiting_norm, local_slopes, quotient_equal, quotient_map,
                   quotient_norm, tail_fit_limit)
from quantization import fuzzy_sphere_scheme, nc_torus_scheme


def series(function, count=12, ratio=0.5):
    grid = make_geometric_grid(1.0, ratio, count)
    return pd.Series([function(h) for h in grid.points], index=pd.Index(grid.points, name='hbar'))


# ========================================
# 極限推定
# ========================================

def test_constant_tail_is_exact():
    estimate = estimate_limit(series(lambda h: 3.0))
    assert estimate.value == 3.0
    assert estimate.error_bound == 0.0
    assert estimate.method == 'cauchy-tail'


def test_richardson_recovers_limit():
    estimate = estimate_limit(series(lambda h: 1 + 0.7 * h ** 2))
    assert estimate.method == 'richardson'
    assert estimate.value == pytest.approx(1.0, abs=1e-9)
    assert abs(estimate.value - 1.0) <= estimate.error_bound + 1e-9


def test_estimate_limit_rejects_oscillation():
    with pytest.raises(NotCauchyError) as info:
        estimate_limit(series(lambda h: math.sin(1 / h), count=16))
    assert len(info.value.differences) > 0


def test_estimate_limit_needs_samples():
    with pytest.raises(TooFewSamplesError):
        estimate_limit(series(lambda h: h, count=3))


def test_estimate_limit_ignores_value_at_zero():
    s = series(lambda h: 2 + h)
    with_zero = pd.concat([s, pd.Series([100.0], index=pd.Index([0.0], name='hbar'))])
    assert estimate_limit(with_zero).value == pytest.approx(estimate_limit(s).value)


def test_tail_slope():
    s = series(lambda h: 0.3 * h ** 2)
    assert fit_tail_slope(s.index, s.to_numpy()) == pytest.approx(2.0)
    slopes = local_slopes(s.index, s.to_numpy())
    assert math.isnan(slopes[0])
    assert slopes[1:] == pytest.approx([2.0] * 11)
    assert fit_tail_slope([1.0, 0.5], [0.0, 0.0]) is None


def test_tail_config_overrides():
    config = TailConfig.from_settings(window=6)
    assert config.window == 6
    assert config.null_tolerance == pytest.approx(1e-3)


# ========================================
# 極限ノルムと零イデアル
# ========================================

def test_limiting_norm_of_x3_on_large_spins():
    scheme = fuzzy_sphere_scheme([5, 10, 20, 40])
    estimate = limiting_norm(make_bundle(scheme).section("x3"))
    assert estimate.value == pytest.approx(1.0, abs=2e-3)


def test_null_ideal(sphere_bundle):
    commutator = sphere_bundle.section("x1*x2 - x2*x1")
    assert in_null_ideal(commutator)
    assert not in_null_ideal(sphere_bundle.section("x3"))
    shrinking = module_action(lambda h: h, sphere_bundle.section("x3"))
    assert in_null_ideal(shrinking)


@hsettings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_null_ideal_absorbs_and_is_closed(large_spin_extended, seed):
    rng = np.random.default_rng(seed)
    bundle = large_spin_extended
    letters = bundle.letters

    def random_section(max_length):
        return Section(bundle, random_expression(letters, rng, max_length=max_length))

    # ħ·b と一次式どうしの交換子は K₀ の元
    k1 = module_action(lambda h: h, random_section(2))
    c, d = random_section(1), random_section(1)
    k2 = c * d - d * c
    a = random_section(2)
    scalar = complex(rng.standard_normal(), rng.standard_normal())

    assert in_null_ideal(k1)
    assert in_null_ideal(k2)
    assert in_null_ideal(a * k1)
    assert in_null_ideal(k2 * a)
    assert in_null_ideal(k1 + k2)
    assert in_null_ideal(scalar * k1)
    assert in_null_ideal(k2.adjoint())
    assert not in_null_ideal(bundle.unit() + k1)


@pytest.fixture(scope='module')
def large_torus_extended():
    return extend_bundle(make_bundle(nc_torus_scheme([16, 32, 64, 128])))


@pytest.mark.parametrize("bundle_name", ["large_spin_extended", "large_torus_extended"])
def test_random_pairs_commute_in_limit_fiber(bundle_name, request):
    bundle = request.getfixturevalue(bundle_name)
    rng = np.random.default_rng(7)
    for _ in range(50):
        x = quotient_map(random_expression(bundle.letters, rng, max_length=2), bundle)
        y = quotient_map(random_expression(bundle.letters, rng, max_length=2), bundle)
        commutator = x * y - y * x
        if commutator.expr.is_zero:
            continue
        estimate = commutator.limiting_norm
        assert estimate.value <= 1e-3 + estimate.error_bound, (str(x.expr), str(y.expr))


# ========================================
# 拡張
# ========================================

def test_extend_bundle_is_memoized(sphere_bundle, sphere_extended):
    assert sphere_extended.is_extended
    assert sphere_extended.origin is sphere_bundle
    assert extend_bundle(sphere_bundle) is sphere_extended
    with pytest.raises(LimitPointError):
        extend_bundle(sphere_extended)


def test_extension_is_conservative(sphere_bundle, sphere_extended):
    a = sphere_bundle.section("x1*x3 + 2*x2")
    extended = extend_section(a, sphere_extended)
    for point in sphere_bundle.base.points:
        assert np.array_equal(evaluate(a, point), evaluate_extended(extended, point))
    assert isinstance(evaluate_extended(extended, LIMIT), type(quotient_map(extended)))


def test_extended_norm_function(sphere_extended):
    N = extended_norm_function(sphere_extended.section("x3"))
    assert N.index[-1] == 0.0
    assert N.iloc[-1] == pytest.approx(1.0, abs=1e-2)
    assert len(N) == len(sphere_extended.base.points) + 1


def test_extension_axioms(sphere_extended, torus_extended):
    report = check_extension_axioms(sphere_extended, rng=np.random.default_rng(1))
    assert report.passed, report.violations
    assert report.conservative
    assert check_extension_axioms(torus_extended, rng=np.random.default_rng(1)).passed


def test_extension_axioms_need_extended_bundle(sphere_bundle):
    with pytest.raises(NotExtendedError):
        check_extension_axioms(sphere_bundle)


# ========================================
# 極限ファイバー
# ========================================

def test_limit_fiber_is_commutative(sphere_extended, torus_extended):
    assert limit_fiber(sphere_extended).is_commutative()
    assert limit_fiber(torus_extended).is_commutative()


def test_limit_fiber_of_constant_bundle_is_not_commutative(sphere):
    base = make_geometric_grid(1.0, 0.5, 6)
    extended = extend_bundle(constant_bundle(sphere, sphere.hbars[1], base))
    assert not limit_fiber(extended).is_commutative()


def test_limit_fiber_requires_extension(sphere_bundle):
    with pytest.raises(NotExtendedError):
        limit_fiber(sphere_bundle)


def test_quotient_arithmetic(sphere_extended):
    x1 = quotient_map("x1", sphere_extended)
    x2 = quotient_map("x2", sphere_extended)
    assert quotient_equal(x1 * x2, x2 * x1)
    assert not quotient_equal(x1, x2)
    assert quotient_norm(x1 - x1) == 0.0
    assert quotient_norm(x1) == pytest.approx(1.0, abs=1e-2)
    assert quotient_norm(x1.adjoint()) == pytest.approx(quotient_norm(x1))


def test_classical_symbol_of_x3(sphere, sphere_extended):
    symbol = classical_symbol(quotient_map("x3", sphere_extended))
    assert np.allclose(symbol, sphere.symbol_grid[:, 2])
    unit = limit_fiber(sphere_extended).unit()
    assert np.allclose(unit.symbol, 1.0)


def test_uniqueness(sphere_extended, torus_extended):
    report = check_uniqueness(sphere_extended, max_degree=1)
    assert report.passed, report.violations
    assert set(report.table['element']) >= {"x1", "x2", "x3"}
    assert check_uniqueness(torus_extended, elements=["u", "v'", "u*v"]).passed


def test_uniqueness_scales_with_coefficient(sphere_extended):
    doubled = GeneratorExpression.parse("2*x3")
    report = check_uniqueness(sphere_extended, elements=[doubled])
    assert report.passed
    assert report.table['quotient_norm'].iloc[0] == pytest.approx(2.0, abs=2e-2)


def test_uniqueness_on_torus_fourier_modes(torus, torus_extended):
    modes = [m for m in torus.closure_basis() if m != (0, 0)]
    elements = [torus.section_for(torus.from_classical({m: 1}), torus_extended) for m in modes]
    report = check_uniqueness(torus_extended, elements=elements)
    assert report.passed, report.violations
    assert len(report.table) == len(modes)
    assert report.table['quotient_norm'].to_numpy() == pytest.approx(1.0, abs=1e-12)
    assert report.table['symbol_sup'].to_numpy() == pytest.approx(1.0, abs=1e-12)


def test_uniqueness_on_torus_words_up_to_mode_two(torus_extended):
    words = [f"{u}*{v}" for u in ("u'^2", "u'", "u", "u^2") for v in ("v'^2", "v'", "v", "v^2")]
    report = check_uniqueness(torus_extended, elements=words)
    assert report.passed, report.violations
    assert report.table['quotient_norm'].to_numpy() == pytest.approx(1.0, abs=1e-12)


@pytest.fixture(scope='module')
def large_spin_extended():
    return extend_bundle(make_bundle(fuzzy_sphere_scheme([5, 10, 20, 40])))


def test_uniqueness_cubic_words_on_large_spins(large_spin_extended):
    # x1*x2*x3 のノルムは j=5,10 で一度減ってから増える
    report = check_uniqueness(large_spin_extended, max_degree=3)
    assert len(report.table) == 1 + 3 + 9 + 27
    assert report.passed, report.violations
    row = report.table.set_index('element').loc["x1*x2*x3"]
    assert row['symbol_sup'] == pytest.approx(3 ** -1.5, abs=1e-3)
    assert row['quotient_norm'] == pytest.approx(3 ** -1.5, abs=0.05)


def test_uniqueness_records_unestimable_elements(sphere_extended):
    config = TailConfig.from_settings(minimum_samples=50)
    report = check_uniqueness(sphere_extended, elements=["x1", "x2*x3"], config=config)
    assert not report.passed
    assert len(report.violations) == 2
    assert not report.table['agrees'].any()
    assert report.table['method'].isna().all()


def test_tail_fit_limit_handles_late_turnaround():
    points = [0.2, 0.1, 0.05, 0.025]
    values = [0.5, 0.4, 0.45, 0.475]
    estimate = tail_fit_limit(pd.Series(values, index=points))
    assert estimate.method == 'tail-fit'
    assert estimate.value == pytest.approx(0.5)
    assert estimate.error_bound == pytest.approx(0.025)
    with pytest.raises(TooFewSamplesError):
        tail_fit_limit(pd.Series([1.0, 0.5], index=[0.1, 0.05]))
