#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
量子化の極限チェック実行システム
実験設定 JSON に並べたチェックを順に実行し、収束表の CSV と JSON サマリーを書き出す

使用方法:
  python main.py run experiments/sphere.json --out results --seed 0 --jobs 2

終了コード: 0 = 全チェック合格, 1 = 不合格あり, 2 = 設定エラー
"""

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import psutil

import functors
import limit
import quantization
from base_space import BaseMap, make_geometric_grid, power_series_map
from bundle import (GeneratorExpression, check_fullness, check_uniform_continuity, make_bundle,
                    random_expression, reparametrize_bundle)
from errors import (CompatibilityError, ConfigError, GridError, InvalidParameterError,
                    NonMetricMapError, QuantLimitError)
from settings import get_setting, load_settings

DEFAULT_GRID = {'hbar_max': 1.0, 'ratio': 0.5, 'count': 16}
DEFAULT_OUTPUT_DIRECTORY = "results"
PROFILES = {
    'sin_inverse': lambda h: math.sin(1 / h),
    'identity': lambda h: h,
    'constant': lambda h: 1.0,
}
ALPHA_KINDS = ('identity', 'power_series')

# ========================================
# 結果の型と数値の表現
# ========================================

@dataclass
class CheckResult:
    name: str
    passed: bool
    numbers: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    table: pd.DataFrame = None


@dataclass
class CheckContext:
    """チェック1件分の実行環境"""
    config: dict
    scheme: object
    bundle: object
    grid: object
    rng: np.random.Generator


def _number(value, error_bound=0.0, method='exact'):
    return {'value': value, 'error_bound': error_bound, 'method': method}


def _estimate(estimate):
    return None if estimate is None else estimate.as_dict()


def _slope_number(report):
    """傾きと、末尾の局所傾きのばらつきを誤差とした数値"""
    if report.slope is None:
        return _number(None, None, 'loglog-fit')
    window = limit.TailConfig.from_settings().window
    local = report.table['slope_estimate'].iloc[-window:].dropna().to_numpy()
    error = float(np.max(np.abs(local - report.slope))) if len(local) else None
    return _number(report.slope, error, 'loglog-fit')


def _convergence_numbers(report):
    numbers = {
        'max_residual': _number(float(report.table['residual'].max()), 0.0, 'sampled'),
        'slope': _slope_number(report),
    }
    if report.residual_limit is not None:
        numbers['residual_limit'] = report.residual_limit.as_dict()
    return numbers


def _sanitize(value):
    """JSON に書けない値（NaN, Inf, numpy の数値）を変換"""
    if isinstance(value, dict):
        return {str(k): _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _expression(text):
    return GeneratorExpression.parse(text) if isinstance(text, str) else text


def _expect_pass(params):
    return params.get('expect', 'pass') == 'pass'


# ========================================
# 射の構成
# ========================================

def _morphism_spec(ctx, name):
    for spec in ctx.config.get('morphisms', []):
        if spec['name'] == name:
            return spec
    raise InvalidParameterError(f"射 {name} が定義されていません")


def build_morphism(ctx, name):
    """設定の射をバンドルから作る（power_series は像の格子へ再パラメータ化した終域）"""
    spec = _morphism_spec(ctx, name)
    source = ctx.bundle
    alpha_spec = spec.get('alpha', {'kind': 'identity'})
    if alpha_spec['kind'] == 'identity':
        alpha = BaseMap.identity(source.base)
        target = source
    else:
        alpha = BaseMap.from_function(source.base, power_series_map(alpha_spec['coefficients']))
        target = reparametrize_bundle(source, alpha)
    return functors.make_morphism(alpha, spec.get('labels', {}), source, target, ctx.rng)


def _default_family(ctx):
    return ['1'] + list(ctx.scheme.labels)


# ========================================
# チェックの実装
# ========================================

def run_von_neumann(ctx, params):
    report = quantization.check_von_neumann(ctx.scheme, params['a'], params['b'])
    return CheckResult('von_neumann', report.passed, _convergence_numbers(report), report.violations,
                       report.table)


def run_dirac(ctx, params):
    report = quantization.check_dirac(ctx.scheme, params['a'], params['b'])
    return CheckResult('dirac', report.passed, _convergence_numbers(report), report.violations, report.table)


def run_equivalence(ctx, params):
    scheme = ctx.scheme
    other = scheme
    if scheme.name == 'fuzzy_sphere':
        default = 'symmetric' if scheme.ordering == 'harmonic' else 'harmonic'
        other = quantization.fuzzy_sphere_scheme(scheme.j_values, scheme.hbar_rule,
                                                 params.get('ordering', default))
    report = quantization.check_equivalence(scheme, other, params['expr'])
    return CheckResult('equivalence', report.passed, _convergence_numbers(report), report.violations,
                       report.table)


def run_rieffel(ctx, params):
    report = quantization.check_rieffel(ctx.scheme, params['a'])
    numbers = {
        'limit': _estimate(report.limit),
        'symbol_sup': _number(report.symbol_sup, 0.0, 'quadrature'),
        'continuity_exponent': _number(report.continuity.exponent, None, 'power-fit'),
    }
    return CheckResult('rieffel', report.passed, numbers, report.violations, report.table)


def run_deformation(ctx, params):
    report = quantization.check_deformation(ctx.scheme, trials=params.get('trials'), rng=ctx.rng,
                                            max_degree=params.get('max_degree'))
    numbers = {'truncated_terms': _number(sum(len(v) for v in report.truncated.values()))}
    return CheckResult('deformation', report.passed, numbers, report.violations, report.table)


def run_fullness(ctx, params):
    report = check_fullness(ctx.bundle, params.get('trials'), ctx.rng)
    table = pd.DataFrame([{'hbar': f.hbar, 'dim': f.dim, 'connected': f.connected,
                           'simple_spectrum': f.simple_spectrum, 'word_rank': f.word_rank,
                           'spans': f.spans, 'full': f.full} for f in report.fibers])
    numbers = {'full_fibers': _number(sum(f.full for f in report.fibers))}
    return CheckResult('fullness', report.passed, numbers, report.violations, table)


def run_uniform_continuity(ctx, params):
    profile = PROFILES[params['profile']]
    points = ctx.grid.points
    series = pd.Series([profile(h) for h in points], index=pd.Index(points, name='hbar'), name='value')
    report = check_uniform_continuity(series, tolerance=params.get('tolerance'))
    expected = _expect_pass(params)
    violations = [] if report.passed == expected else (
        report.violations or ["一様連続性の判定が期待と異なります"])
    numbers = {
        'exponent': _number(report.exponent, None, 'power-fit'),
        'constant': _number(report.constant, None, 'power-fit'),
    }
    table = report.modulus.reset_index()
    return CheckResult('uniform_continuity', report.passed == expected, numbers, violations, table)


def run_limiting_norm(ctx, params):
    estimate = limit.limiting_norm(ctx.bundle.section(params['expr']))
    violations = []
    expected = params.get('expected')
    if expected is not None:
        tolerance = params.get('tolerance', limit.TailConfig.from_settings().equality_tolerance)
        if abs(estimate.value - expected) > tolerance + estimate.error_bound:
            violations.append(f"極限ノルム {estimate.value:.6g} が期待値 {expected} と一致しません")
    return CheckResult('limiting_norm', not violations, {'limiting_norm': estimate.as_dict()}, violations)


def run_null_ideal(ctx, params):
    section = ctx.bundle.section(params['expr'])
    estimate = limit.limiting_norm(section)
    inside = limit.in_null_ideal(section, params.get('tolerance'))
    expected = params.get('expect', True)
    violations = [] if inside == expected else [
        f"{params['expr']} の零イデアル判定が {inside} でした（期待 {expected}）"]
    return CheckResult('null_ideal', not violations, {'limiting_norm': estimate.as_dict()}, violations)


def run_commutativity(ctx, params):
    """極限ファイバーで生成元と乱択した式の交換子が消えるか"""
    extended = limit.extend_bundle(ctx.bundle)
    fiber = limit.limit_fiber(extended)
    violations = []
    if not fiber.is_commutative(params.get('tolerance')):
        violations.append("極限ファイバーの生成元が可換ではありません")
    pairs = int(params.get('pairs', get_setting('bundle.generation_trials', 8)))
    largest = 0.0
    for _ in range(pairs):
        x = limit.quotient_map(random_expression(extended.letters, ctx.rng), extended)
        y = limit.quotient_map(random_expression(extended.letters, ctx.rng), extended)
        gap = x * y - y * x
        if gap.expr.is_zero:
            continue
        largest = max(largest, gap.limiting_norm.value)
        if not limit.quotient_equal(x * y, y * x, params.get('tolerance')):
            violations.append(f"交換子が極限で消えません: [{x.expr}, {y.expr}]")
    numbers = {'max_commutator_norm': _number(largest, None, 'richardson')}
    return CheckResult('commutativity', not violations, numbers, violations)


def run_extension(ctx, params):
    extended = limit.extend_bundle(ctx.bundle)
    report = limit.check_extension_axioms(extended, params.get('trials'), ctx.rng)
    table = pd.DataFrame([{'fullness': report.fullness, 'completeness': report.completeness,
                           'uniform_continuity': report.uniform_continuity,
                           'conservative': report.conservative}])
    return CheckResult('extension', report.passed, {}, report.violations, table)


def run_uniqueness(ctx, params):
    extended = limit.extend_bundle(ctx.bundle)
    report = limit.check_uniqueness(extended, params.get('elements'), params.get('tolerance'),
                                    int(params.get('max_degree', 3)))
    numbers = {'max_gap': _number(float(report.table['gap'].max()), None, 'quadrature')}
    return CheckResult('uniqueness', report.passed, numbers, report.violations, report.table)


def run_morphism(ctx, params):
    expected = _expect_pass(params)
    try:
        sigma = build_morphism(ctx, params['morphism'])
    except (NonMetricMapError, CompatibilityError) as e:
        violations = [] if not expected else [str(e)]
        return CheckResult('morphism', not expected, {}, violations)
    rows = []
    for point in sigma.source.base.points:
        report = functors.fiber_map(sigma, point, ctx.rng, params.get('trials')).report
        rows.append({'hbar': report.hbar, 'image': sigma.alpha(point), 'homomorphism': report.homomorphism,
                     'star': report.star, 'injective': report.injective, 'surjective': report.surjective,
                     'isometric': report.isometric, 'passed': report.passed})
    table = pd.DataFrame(rows)
    passed = bool(table['passed'].all())
    violations = [f"ħ={row['hbar']:.6g} でファイバー写像が *-準同型になりません"
                  for row in rows if not row['passed']]
    if not expected:
        violations = violations or ["射が両立条件を満たしてしまいました"]
        passed = False
    return CheckResult('morphism', passed, {}, violations, table)


def _dynamics(ctx, params):
    times = params.get('times', (0.1, 0.5, 1.0))
    return functors.DynamicalBundleData(ctx.bundle, params['hamiltonian'], tuple(times))


def run_dynamics_lift(ctx, params):
    report = functors.check_dynamics_lift(_dynamics(ctx, params), ctx.rng, params.get('trials'))
    numbers = {'max_gap': _number(float(report.table[['identity', 'group_law', 'multiplicative', 'star']]
                                        .to_numpy().max()), 0.0, 'sampled')}
    return CheckResult('dynamics_lift', report.passed, numbers, report.violations, report.table)


def run_limit_dynamics(ctx, params):
    D = _dynamics(ctx, params)
    report = functors.limit_dynamics(D, params.get('generators'))
    frames = [r.table.assign(generator=g, t=t)[['generator', 't', 'hbar', 'value', 'residual',
                                                'slope_estimate']]
              for (g, t), r in report.reports.items()]
    table = pd.concat(frames, ignore_index=True)
    numbers = {
        'max_residual': _number(float(report.table['max_residual'].max()), 0.0, 'sampled'),
        'max_fit_error': _number(float(report.table['fit_error'].max()), 0.0, 'least-squares'),
    }
    return CheckResult('limit_dynamics', report.passed, numbers, report.violations, table)


def run_post_quantization(ctx, params):
    P = functors.make_post_quantization(ctx.bundle, params.get('family', _default_family(ctx)))
    report = functors.check_post_quantization(P, ctx.rng, params.get('pairs'))
    frames = [r.table.assign(a=a, b=b)[['a', 'b', 'hbar', 'value', 'residual', 'slope_estimate']]
              for (a, b), r in report.reports.items()]
    table = pd.concat(frames, ignore_index=True) if frames else None
    numbers = {'max_residual': _number(float(report.table['max_residual'].max()) if len(report.table)
                                       else 0.0, 0.0, 'sampled')}
    return CheckResult('post_quantization', report.passed, numbers, report.violations, table)


def run_poisson_bracket(ctx, params):
    P = functors.make_post_quantization(ctx.bundle, params.get('family', _default_family(ctx)))
    a = _expression(params['a'])
    b = _expression(params['b'])
    lhs = functors.poisson_bracket_at_limit(P, a, b)
    expected = limit.quotient_map(ctx.scheme.section_for(_expression(params['expected']), P.bundle), P.bundle)
    violations = []
    gap = lhs - expected
    gap_number = _number(0.0) if gap.expr.is_zero else gap.limiting_norm.as_dict()
    if not limit.quotient_equal(lhs, expected, params.get('tolerance')):
        violations.append(f"{{{a}, {b}}} が {params['expected']} と一致しません")
    reverse = functors.poisson_bracket_at_limit(P, b, a)
    if not limit.quotient_equal(reverse, -lhs, params.get('tolerance')):
        violations.append(f"{{{a}, {b}}} が反対称ではありません")
    return CheckResult('poisson_bracket', not violations, {'gap': gap_number}, violations)


def run_second_order(ctx, params):
    alpha = BaseMap.from_function(ctx.grid, power_series_map(params['coefficients']))
    report = functors.is_second_order(alpha)
    expected = _expect_pass(params)
    violations = []
    if report.passed != expected:
        violations.append(report.detail or f"二次性の判定が期待と異なります（{report.passed}）")
    constant = params.get('expected_constant')
    if report.passed and constant is not None:
        if abs(report.constant.value - constant) > 1e-6 + report.constant.error_bound:
            violations.append(f"定数 K={report.constant.value:.6g} が期待値 {constant} と一致しません")
    numbers = {'constant': _estimate(report.constant),
               'snapping_error': _number(report.snapping_error, 0.0, 'sampled')}
    return CheckResult('second_order', not violations, numbers, violations, report.table)


def run_poisson_functoriality(ctx, params):
    sigma = build_morphism(ctx, params['morphism'])
    family = params.get('family', _default_family(ctx))
    P_source = functors.make_post_quantization(sigma.source, family)
    P_target = functors.make_post_quantization(sigma.target, params.get('target_family', family))
    report = functors.check_poisson_functoriality(sigma, P_source, P_target, params.get('tolerance'))
    numbers = {'constant': _estimate(report.constant)}
    return CheckResult('poisson_functoriality', report.passed, numbers, report.violations, report.table)


def run_poisson_laws(ctx, params):
    P = functors.make_post_quantization(ctx.bundle, params.get('family', _default_family(ctx)))
    report = functors.check_poisson_laws(P, ctx.rng, params.get('trials'), params.get('tolerance'))
    table = report.table
    numbers = {'checked_cases': _number(float((~table['skipped']).sum()), None, 'count'),
               'skipped_cases': _number(float(table['skipped'].sum()), None, 'count')}
    return CheckResult('poisson_laws', report.passed, numbers, report.violations, table)


@dataclass(frozen=True)
class CheckSpec:
    run: object
    required: tuple = ()
    expressions: tuple = ()
    expression_lists: tuple = ()


CHECKS = {
    'von_neumann': CheckSpec(run_von_neumann, ('a', 'b'), ('a', 'b')),
    'dirac': CheckSpec(run_dirac, ('a', 'b'), ('a', 'b')),
    'equivalence': CheckSpec(run_equivalence, ('expr',), ('expr',)),
    'rieffel': CheckSpec(run_rieffel, ('a',), ('a',)),
    'deformation': CheckSpec(run_deformation),
    'fullness': CheckSpec(run_fullness),
    'uniform_continuity': CheckSpec(run_uniform_continuity, ('profile',)),
    'limiting_norm': CheckSpec(run_limiting_norm, ('expr',), ('expr',)),
    'null_ideal': CheckSpec(run_null_ideal, ('expr',), ('expr',)),
    'commutativity': CheckSpec(run_commutativity),
    'extension': CheckSpec(run_extension),
    'uniqueness': CheckSpec(run_uniqueness, (), (), ('elements',)),
    'morphism': CheckSpec(run_morphism, ('morphism',)),
    'dynamics_lift': CheckSpec(run_dynamics_lift, ('hamiltonian',), ('hamiltonian',)),
    'limit_dynamics': CheckSpec(run_limit_dynamics, ('hamiltonian',), ('hamiltonian',), ('generators',)),
    'post_quantization': CheckSpec(run_post_quantization, (), (), ('family',)),
    'poisson_bracket': CheckSpec(run_poisson_bracket, ('a', 'b', 'expected'), ('a', 'b', 'expected'),
                                 ('family',)),
    'second_order': CheckSpec(run_second_order, ('coefficients',)),
    'poisson_functoriality': CheckSpec(run_poisson_functoriality, ('morphism',), (),
                                       ('family', 'target_family')),
    'poisson_laws': CheckSpec(run_poisson_laws, (), (), ('family',)),
}


# ========================================
# 設定ファイルの読み込みと検証
# ========================================

def load_config(config_file):
    """実験設定 JSON を読み込む（失敗は ConfigError）"""
    try:
        with open(config_file, 'r', encoding='utf-8') as f:
            return json.load(f)
    except OSError as e:
        raise ConfigError(f"設定ファイルを開けません: {config_file}", [str(e)]) from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"設定ファイルの JSON が不正です: {config_file}", [str(e)]) from e


def _expression_errors(text, labels, where):
    if not isinstance(text, str):
        return [f"{where}は式の文字列である必要があります"]
    try:
        expr = GeneratorExpression.parse(text)
    except InvalidParameterError as e:
        return [f"{where}: {e}"]
    unknown = expr.labels() - set(labels)
    if unknown:
        return [f"{where}に未知のラベルがあります: {sorted(unknown)}"]
    return []


def _build_scheme(scheme_config):
    return quantization.make_scheme(scheme_config['name'], scheme_config['sizes'],
                                    hbar_rule=scheme_config.get('hbar_rule', 'casimir'),
                                    ordering=scheme_config.get('ordering', 'harmonic'))


def _validate_scheme(config, errors):
    scheme_config = config.get('scheme')
    if not isinstance(scheme_config, dict):
        errors.append("schemeが見つかりません")
        return None
    name = scheme_config.get('name')
    if name not in ('fuzzy_sphere', 'nc_torus'):
        errors.append(f"scheme.nameは fuzzy_sphere または nc_torus である必要があります: {name}")
        return None
    sizes = scheme_config.get('sizes')
    if not isinstance(sizes, list) or not sizes or not all(isinstance(s, (int, float)) for s in sizes):
        errors.append("scheme.sizesは数値の空でないリストである必要があります")
        return None
    if name == 'nc_torus' and ({'hbar_rule', 'ordering'} & set(scheme_config)):
        errors.append("hbar_rule と ordering は fuzzy_sphere でのみ指定できます")
    try:
        return _build_scheme(scheme_config)
    except InvalidParameterError as e:
        errors.append(f"scheme: {e}")
        return None


def _validate_morphisms(config, labels, errors):
    morphisms = config.get('morphisms', [])
    if not isinstance(morphisms, list):
        errors.append("morphismsはリストである必要があります")
        return set()
    names = set()
    for k, spec in enumerate(morphisms):
        where = f"morphisms[{k}]"
        if not isinstance(spec, dict) or not isinstance(spec.get('name'), str):
            errors.append(f"{where}.nameが見つかりません")
            continue
        if spec['name'] in names:
            errors.append(f"{where}.nameが重複しています: {spec['name']}")
        names.add(spec['name'])
        alpha = spec.get('alpha', {'kind': 'identity'})
        kind = alpha.get('kind') if isinstance(alpha, dict) else None
        if kind not in ALPHA_KINDS:
            errors.append(f"{where}.alpha.kindは {' / '.join(ALPHA_KINDS)} のいずれかです: {kind}")
        elif kind == 'power_series':
            coefficients = alpha.get('coefficients')
            if (not isinstance(coefficients, list) or not coefficients
                    or not all(isinstance(c, (int, float)) for c in coefficients) or coefficients[0] <= 0):
                errors.append(f"{where}.alpha.coefficientsは先頭が正の数値リストである必要があります")
        label_map = spec.get('labels', {})
        if not isinstance(label_map, dict):
            errors.append(f"{where}.labelsは辞書である必要があります")
            continue
        for label, image in label_map.items():
            if label not in labels:
                errors.append(f"{where}.labelsに未知のラベルがあります: {label}")
            errors.extend(_expression_errors(image, labels, f"{where}.labels.{label}"))
    return names


def _validate_check(k, check, labels, morphisms, scheme, errors):
    where = f"checks[{k}]"
    if not isinstance(check, dict) or check.get('name') not in CHECKS:
        name = check.get('name') if isinstance(check, dict) else check
        errors.append(f"{where}.nameが未知のチェックです: {name}")
        return
    spec = CHECKS[check['name']]
    for key in spec.required:
        if key not in check:
            errors.append(f"{where}.{key}が見つかりません")
    for key in spec.expressions:
        if key in check:
            errors.extend(_expression_errors(check[key], labels, f"{where}.{key}"))
    for key in spec.expression_lists:
        if key in check:
            if not isinstance(check[key], list) or not check[key]:
                errors.append(f"{where}.{key}は式の空でないリストである必要があります")
                continue
            for n, text in enumerate(check[key]):
                errors.extend(_expression_errors(text, labels, f"{where}.{key}[{n}]"))
    if 'morphism' in check and check['morphism'] not in morphisms:
        errors.append(f"{where}.morphismが未定義の射です: {check['morphism']}")
    if 'profile' in check and check['profile'] not in PROFILES:
        errors.append(f"{where}.profileは {' / '.join(PROFILES)} のいずれかです: {check['profile']}")
    if 'expect' in check and check['name'] != 'null_ideal' and check['expect'] not in ('pass', 'fail'):
        errors.append(f"{where}.expectは pass または fail です")
    if check['name'] == 'null_ideal' and not isinstance(check.get('expect', True), bool):
        errors.append(f"{where}.expectは true または false です")
    if 'tolerance' in check and (not isinstance(check['tolerance'], (int, float)) or check['tolerance'] <= 0):
        errors.append(f"{where}.toleranceは正の数である必要があります")
    if 'times' in check and (not isinstance(check['times'], list)
                             or not all(isinstance(t, (int, float)) for t in check['times'])):
        errors.append(f"{where}.timesは数値のリストである必要があります")
    if 'coefficients' in check:
        coefficients = check['coefficients']
        if (not isinstance(coefficients, list) or not coefficients
                or not all(isinstance(c, (int, float)) for c in coefficients)):
            errors.append(f"{where}.coefficientsは数値のリストである必要があります")
    if check['name'] == 'equivalence' and 'ordering' in check and scheme is not None:
        if scheme.name != 'fuzzy_sphere' or check['ordering'] not in ('harmonic', 'symmetric'):
            errors.append(f"{where}.orderingは fuzzy_sphere の harmonic / symmetric のみです")
    if check['name'] == 'limit_dynamics' and scheme is not None and scheme.name == 'nc_torus':
        errors.append(f"{where}: nc_torus には古典ハミルトン流が用意されていません")


def validate_config(config):
    """実験設定のバリデーション（エラーメッセージのリストを返す）"""
    if not isinstance(config, dict):
        return ["設定のトップレベルはオブジェクトである必要があります"]
    errors = []

    if 'seed' in config and (not isinstance(config['seed'], int) or isinstance(config['seed'], bool)):
        errors.append("seedは整数である必要があります")

    scheme = _validate_scheme(config, errors)
    labels = scheme.labels if scheme is not None else ()

    grid = config.get('grid', DEFAULT_GRID)
    if not isinstance(grid, dict):
        errors.append("gridはオブジェクトである必要があります")
    else:
        try:
            make_geometric_grid(**{**DEFAULT_GRID, **grid})
        except (GridError, TypeError) as e:
            errors.append(f"grid: {e}")

    morphisms = _validate_morphisms(config, labels, errors)

    checks = config.get('checks')
    if not isinstance(checks, list) or not checks:
        errors.append("checksは空でないリストである必要があります")
    elif scheme is not None:
        for k, check in enumerate(checks):
            _validate_check(k, check, labels, morphisms, scheme, errors)

    output = config.get('output', {})
    if not isinstance(output, dict):
        errors.append("outputはオブジェクトである必要があります")

    return errors


# ========================================
# 実行と書き出し
# ========================================

def _run_check(ctx, params):
    name = params['name']
    print(f"[CHECK] {name} を実行します", file=sys.stderr)
    try:
        result = CHECKS[name].run(ctx, params)
    except (QuantLimitError, np.linalg.LinAlgError, ValueError, ArithmeticError) as e:
        # 数値計算の失敗もチェック不合格として残す
        result = CheckResult(name, False, {}, [f"{type(e).__name__}: {e}"])
    status = "合格" if result.passed else "不合格"
    print(f"[CHECK] {name}: {status}", file=sys.stderr)
    for violation in result.violations:
        print(f"[CHECK]   - {violation}", file=sys.stderr)
    return result


def _write_atomic(path, text):
    """一時ファイルに書いてから os.replace で置き換える"""
    directory = os.path.dirname(os.path.abspath(path))
    fd, temporary = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.remove(temporary)
        raise


def default_jobs():
    jobs = int(get_setting('system.jobs', 0) or 0)
    if jobs > 0:
        return jobs
    return psutil.cpu_count(logical=False) or 1


def run_experiment(config_file, out_dir=None, seed=None, jobs=None):
    """実験設定を実行し終了コードを返す"""
    load_settings()
    try:
        config = load_config(config_file)
        errors = validate_config(config)
        if errors:
            raise ConfigError("設定ファイルに誤りがあります", errors)
    except ConfigError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        for error in e.errors:
            print(f"[ERROR]   - {error}", file=sys.stderr)
        return 2

    seed = seed if seed is not None else config.get('seed', int(get_setting('system.default_seed', 0)))
    jobs = jobs if jobs else default_jobs()
    output = config.get('output', {})
    out_dir = out_dir or output.get('directory', DEFAULT_OUTPUT_DIRECTORY)
    summary_file = output.get('summary', get_setting('output.summary_file', 'summary.json'))
    float_format = get_setting('output.csv_float_format', '%.12e')
    os.makedirs(out_dir, exist_ok=True)

    scheme = _build_scheme(config['scheme'])
    bundle = make_bundle(scheme)
    # 拡張をスレッド間で共有するため先に作っておく
    limit.extend_bundle(bundle)
    grid = make_geometric_grid(**{**DEFAULT_GRID, **config.get('grid', {})})
    checks = config['checks']
    print(f"[CONFIG] {config_file}: {scheme.name} sizes={list(scheme.sizes)} "
          f"checks={len(checks)} seed={seed} jobs={jobs}", file=sys.stderr)

    contexts = [CheckContext(config, scheme, bundle, grid, np.random.default_rng(seed + k))
                for k in range(len(checks))]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_check, ctx, params) for ctx, params in zip(contexts, checks)]
        results = [future.result() for future in futures]

    entries = []
    for k, result in enumerate(results):
        entry = {'name': result.name, 'passed': result.passed, 'numbers': result.numbers,
                 'violations': result.violations, 'csv': None}
        if result.table is not None:
            filename = f"{k:02d}_{result.name}.csv"
            _write_atomic(os.path.join(out_dir, filename),
                          result.table.to_csv(index=False, float_format=float_format))
            print(f"[CSV] {filename} を保存しました", file=sys.stderr)
            entry['csv'] = filename
        entries.append(entry)

    passed = all(r.passed for r in results)
    summary = {
        'config': os.path.basename(config_file),
        'seed': seed,
        'scheme': {'name': scheme.name, 'sizes': list(scheme.sizes), 'hbars': list(scheme.hbars)},
        'passed': passed,
        'checks': entries,
    }
    text = json.dumps(_sanitize(summary), indent=2, ensure_ascii=False, sort_keys=True) + "\n"
    _write_atomic(os.path.join(out_dir, summary_file), text)
    failed = sum(not r.passed for r in results)
    print(f"[SUMMARY] {len(results) - failed}/{len(results)} 件合格 -> {os.path.join(out_dir, summary_file)}",
          file=sys.stderr)
    return 0 if passed else 1


# ========================================
# メイン処理
# ========================================

def build_parser():
    parser = argparse.ArgumentParser(prog='main.py', description="量子化の極限チェック実行システム")
    commands = parser.add_subparsers(dest='command', required=True)
    run = commands.add_parser('run', help="実験設定のチェックを実行")
    run.add_argument('config', help="実験設定 JSON")
    run.add_argument('--out', default=None, help="出力ディレクトリ")
    run.add_argument('--seed', type=int, default=None, help="乱数シード（設定の seed より優先）")
    run.add_argument('--jobs', type=int, default=None, help="並列実行数")
    return parser


def main(argv=None):
    """メイン関数"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.jobs is not None and args.jobs < 1:
        print("[ERROR] --jobs は 1 以上である必要があります", file=sys.stderr)
        return 2
    return run_experiment(args.config, args.out, args.seed, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
