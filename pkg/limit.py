#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
極限点への拡張と極限ファイバー

ノルム関数の ħ → 0 極限を格子の末尾から推定し（リチャードソン外挿、失敗時は末尾の値）、
零イデアル判定・一点コンパクト化された基底への拡張・0 での商ファイバーを提供する。
商ファイバーの元は式のまま持ち、ノルムは外挿した極限ノルムで測る。
"""

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from base_space import LIMIT, BaseMap, is_dense_isometric_embedding, is_limit, one_point_compactify
from bundle import (Bundle, GeneratorExpression, Section, check_fullness, check_uniform_continuity,
                    evaluate, is_cauchy_tail, norm_function, random_expression, sup_norm,
                    words_up_to)
from errors import (InvalidParameterError, LimitPointError, NotCauchyError, NotEmbeddingError,
                    NotExtendedError, SymbolUnavailableError, TooFewSamplesError)
from settings import get_setting, resolve


# ========================================
# 末尾の設定と極限推定
# ========================================

@dataclass(frozen=True)
class TailConfig:
    """極限推定・零判定の許容値"""
    window: int = 4
    minimum_samples: int = 4
    slope_minimum: float = 0.9
    exact_tolerance: float = 1e-10
    null_tolerance: float = 1e-3
    equality_tolerance: float = 1e-3
    uniqueness_tolerance: float = 0.05
    order_bounds: tuple = (0.5, 8.0)

    @classmethod
    def from_settings(cls, **overrides):
        values = {
            'window': int(get_setting('limit.tail_window', 4)),
            'minimum_samples': int(get_setting('limit.minimum_samples', 4)),
            'slope_minimum': float(get_setting('limit.slope_minimum', 0.9)),
            'exact_tolerance': float(get_setting('limit.exact_tolerance', 1e-10)),
            'null_tolerance': float(get_setting('limit.null_tolerance', 1e-3)),
            'equality_tolerance': float(get_setting('limit.equality_tolerance', 1e-3)),
            'uniqueness_tolerance': float(get_setting('limit.uniqueness_tolerance', 0.05)),
            'order_bounds': tuple(get_setting('limit.richardson_order_bounds', [0.5, 8.0])),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class LimitEstimate:
    value: float
    error_bound: float
    method: str
    samples_used: int

    def as_dict(self):
        return {'value': self.value, 'error_bound': self.error_bound, 'method': self.method}


def _sampled(series):
    """index が正の ħ の部分を格子順（降順）で取り出す"""
    index = np.asarray(series.index, dtype=float)
    values = np.asarray(series.to_numpy())
    keep = index > 0
    order = np.argsort(-index[keep], kind='stable')
    return index[keep][order], values[keep][order]


def _richardson(points, values, bounds):
    """N(ħ) = ℓ + c·ħ^p を3点に当てはめ (ℓ, p, c) を返す。不適なら None"""
    h1, h2, h3 = points
    n1, n2, n3 = values
    d1 = n1 - n2
    d2 = n2 - n3
    if d1 == 0 or d2 == 0 or np.sign(d1) != np.sign(d2):
        return None
    rho = d1 / d2

    def mismatch(p):
        return (h1 ** p - h2 ** p) / (h2 ** p - h3 ** p) - rho

    lower, upper = bounds
    if mismatch(lower) * mismatch(upper) > 0:
        return None
    p = brentq(mismatch, lower, upper)
    c = d2 / (h2 ** p - h3 ** p)
    return n3 - c * h3 ** p, p, c


def estimate_limit(series, config=None, nonnegative=False):
    """格子順の数列の ħ → 0 極限

    series は index が ħ の pd.Series（index 0 の値は無視）。
    末尾が一定なら誤差 0 で末尾の値、そうでなければリチャードソン外挿を試み、
    外挿できなければ末尾の値と最後の差分を誤差として返す。
    """
    config = config or TailConfig.from_settings()
    points, values = _sampled(series)
    values = values.astype(float)
    n = len(values)
    if n < config.minimum_samples:
        raise TooFewSamplesError(f"極限推定には {config.minimum_samples} 点以上必要です: {n}")
    if not np.all(np.isfinite(values)):
        raise InvalidParameterError("数列に NaN または Inf が含まれています")

    differences = np.abs(np.diff(values))
    tail = differences[-(config.window - 1):]
    scale = max(1.0, float(np.max(np.abs(values))))
    if tail.max() <= 1e-15 * scale:
        value = float(values[-1])
        return LimitEstimate(max(value, 0.0) if nonnegative else value, 0.0, 'cauchy-tail', n)

    cauchy = is_cauchy_tail(values)
    if not cauchy:
        raise NotCauchyError(f"末尾がコーシー列ではありません: {cauchy.reason}", cauchy.differences)

    fit = _richardson(points[-3:], values[-3:], config.order_bounds)
    if fit is None:
        value = float(values[-1])
        error = float(differences[-1])
        method = 'cauchy-tail'
    else:
        value, order, coefficient = fit
        previous = _richardson(points[-4:-1], values[-4:-1], config.order_bounds)
        error = abs(value - previous[0]) if previous is not None else float(differences[-1])
        window = slice(-config.window, None)
        residual = np.abs(values[window] - (value + coefficient * points[window] ** order))
        error = float(max(error, residual.max()))
        method = 'richardson'
    if nonnegative:
        value = max(value, 0.0)
    return LimitEstimate(float(value), error, method, n)


def tail_fit_limit(series, config=None, nonnegative=False, points=3):
    """末尾 points 点への一次式 ℓ + c·ħ の当てはめ

    コーシー判定を通らない遅い収束（小さい ħ の手前で揺れる列）用。
    誤差は外挿の幅 |ℓ - 末尾の値| と当てはめ残差の大きい方。
    """
    config = config or TailConfig.from_settings()
    hbar, values = _sampled(series)
    values = values.astype(float)
    if len(values) < config.minimum_samples:
        raise TooFewSamplesError(f"極限推定には {config.minimum_samples} 点以上必要です: {len(values)}")
    if not np.all(np.isfinite(values)):
        raise InvalidParameterError("数列に NaN または Inf が含まれています")
    hbar = hbar[-points:]
    values = values[-points:]
    slope, value = np.polyfit(hbar, values, 1)
    residual = np.abs(values - (value + slope * hbar)).max()
    error = float(max(abs(value - values[-1]), residual))
    if nonnegative:
        value = max(value, 0.0)
    return LimitEstimate(float(value), error, 'tail-fit', len(series))


def fit_tail_slope(hbar, residual, window=None):
    """log r を log ħ に一次式で当てはめた傾き（正の値が2点未満なら None）"""
    window = int(resolve(window, 'limit.tail_window', 4))
    hbar = np.asarray(hbar, dtype=float)[-window:]
    residual = np.asarray(residual, dtype=float)[-window:]
    usable = (residual > 1e-300) & np.isfinite(residual) & (hbar > 0)
    if usable.sum() < 2:
        return None
    slope, _ = np.polyfit(np.log(hbar[usable]), np.log(residual[usable]), 1)
    return float(slope)


def local_slopes(hbar, residual):
    """隣接点間の log-log 傾き（先頭は NaN）"""
    hbar = np.asarray(hbar, dtype=float)
    residual = np.asarray(residual, dtype=float)
    slopes = [float('nan')]
    for k in range(1, len(hbar)):
        if residual[k] > 0 and residual[k - 1] > 0:
            slopes.append(float(np.log(residual[k - 1] / residual[k]) / np.log(hbar[k - 1] / hbar[k])))
        else:
            slopes.append(float('nan'))
    return slopes


# ========================================
# 極限ノルムと零イデアル
# ========================================

def limiting_norm(a, config=None):
    """lim_{ħ→0} ‖φ_ħ(a)‖ の推定"""
    return estimate_limit(norm_function(a), config, nonnegative=True)


def in_null_ideal(a, tolerance=None, config=None):
    """a ∈ K₀ の判定: 極限ノルム ≤ tol + 誤差"""
    config = config or TailConfig.from_settings()
    tolerance = config.null_tolerance if tolerance is None else tolerance
    estimate = limiting_norm(a, config)
    return estimate.value <= tolerance + estimate.error_bound


def profile_limit(profile, config=None):
    """係数関数の極限（既知ならその値、なければ実部・虚部を別々に外挿）"""
    if profile.limit is not None:
        return profile.limit
    series = profile.series()
    real = estimate_limit(series.map(lambda v: v.real), config).value
    imag = estimate_limit(series.map(lambda v: v.imag), config).value
    return complex(real, imag)


def classical_form(expr, config=None):
    """係数関数を極限値に置き換えた式"""
    return GeneratorExpression(tuple(
        (word, None, coefficient if profile is None else coefficient * profile_limit(profile, config))
        for word, profile, coefficient in expr.terms
    ))


# ========================================
# 拡張
# ========================================

def extend_bundle(B, alpha=None):
    """一点コンパクト化した基底への極小拡張

    alpha を省略すると B の基底から one_point_compactify(B.base) への包含を使う。
    同じ (B, alpha) には同じオブジェクトを返す。
    """
    if B.is_extended:
        raise LimitPointError("すでに極限点を持つバンドルは拡張できません")
    if alpha is None:
        alpha = _canonical_inclusion(B.base)
    return _extend(B, alpha)


@lru_cache(maxsize=None)
def _canonical_inclusion(base):
    return BaseMap(base, one_point_compactify(base), base.points)


@lru_cache(maxsize=None)
def _extend(B, alpha):
    if alpha.source != B.base:
        raise NotEmbeddingError("α の始域がバンドルの基底と一致しません")
    if not alpha.target.has_limit:
        raise LimitPointError("拡張先の基底に極限点がありません")
    check = is_dense_isometric_embedding(alpha)
    if not check:
        raise NotEmbeddingError(f"α が稠密等長埋め込みではありません: {check.detail}")
    anchors = []
    for y in alpha.target.points:
        source = next(x for x in B.base.points if alpha(x) == y)
        anchors.append(B.anchor(source))
    return Bundle(alpha.target, B.scheme, B.labels, anchors, origin=B, embedding=alpha)


def extend_section(a, extended):
    """断面を拡張バンドルへ運ぶ（係数関数は埋め込みで押し出す）"""
    if extended.origin is not a.bundle:
        raise NotExtendedError("拡張元のバンドルが断面のバンドルと一致しません")
    return Section(extended, a.expr.map_profiles(lambda p: p.transport(extended.embedding)))


def _require_extended(bundle):
    if not bundle.is_extended:
        raise NotExtendedError("拡張済み（極限点を持つ）バンドルが必要です")


# ========================================
# 極限ファイバーの元
# ========================================

@dataclass(frozen=True)
class LimitFiberElement:
    """A₀ = 𝔄/K₀ の元（式の剰余類）"""
    bundle: Bundle
    expr: GeneratorExpression

    def __post_init__(self):
        _require_extended(self.bundle)
        Section(self.bundle, self.expr)

    @cached_property
    def limiting_norm(self):
        return limiting_norm(Section(self.bundle, self.expr))

    @property
    def symbol(self):
        """スキームがシンボル規則を持てば古典シンボル、なければ None"""
        try:
            return classical_symbol(self)
        except SymbolUnavailableError:
            return None

    def _other(self, other):
        if isinstance(other, LimitFiberElement):
            if other.bundle is not self.bundle:
                raise InvalidParameterError("異なる極限ファイバーの元は演算できません")
            return other.expr
        return other

    def __add__(self, other):
        return LimitFiberElement(self.bundle, self.expr + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return LimitFiberElement(self.bundle, self.expr - self._other(other))

    def __neg__(self):
        return LimitFiberElement(self.bundle, -self.expr)

    def __mul__(self, other):
        return LimitFiberElement(self.bundle, self.expr * self._other(other))

    def __rmul__(self, other):
        return LimitFiberElement(self.bundle, other * self.expr)

    def adjoint(self):
        return LimitFiberElement(self.bundle, self.expr.adjoint())


def quotient_map(a, bundle=None):
    """φ₀: 拡張バンドルの断面（または式）を商ファイバーへ"""
    if isinstance(a, Section):
        return LimitFiberElement(a.bundle, a.expr)
    if bundle is None:
        raise InvalidParameterError("式を渡す場合はバンドルが必要です")
    if isinstance(a, str):
        a = GeneratorExpression.parse(a)
    return LimitFiberElement(bundle, a)


def evaluate_extended(a, point):
    """拡張バンドル上の評価（0_I では商ファイバーの元）"""
    _require_extended(a.bundle)
    if is_limit(point):
        return quotient_map(a)
    return evaluate(a, point)


def extended_norm_function(a):
    """N_a を 0 まで延ばした pd.Series（0 の値は極限ノルム）"""
    _require_extended(a.bundle)
    N = norm_function(a)
    limit = limiting_norm(a).value
    return pd.concat([N, pd.Series([limit], index=pd.Index([0.0], name='hbar'))]).rename('norm')


def quotient_norm(x):
    if x.expr.is_zero:
        return 0.0
    return x.limiting_norm.value


def quotient_equal(x, y, tolerance=None):
    """‖x − y‖₀ ≤ tol + 誤差 による剰余類の等号"""
    tolerance = resolve(tolerance, 'limit.equality_tolerance', 1e-3)
    difference = x - y
    if difference.expr.is_zero:
        return True
    estimate = difference.limiting_norm
    return estimate.value <= tolerance + estimate.error_bound


def classical_symbol(x, config=None):
    """剰余類の古典シンボル（スキームの位相空間格子上の値）"""
    scheme = x.bundle.scheme
    if not hasattr(scheme, 'symbol'):
        raise SymbolUnavailableError(f"スキーム {getattr(scheme, 'name', scheme)} はシンボル規則を持ちません")
    return scheme.symbol(classical_form(x.expr, config))


# ========================================
# 極限ファイバーの見え方（関手 G の像）
# ========================================

@dataclass(frozen=True)
class LimitFiber:
    """0 でのファイバー A₀"""
    bundle: Bundle

    def __post_init__(self):
        _require_extended(self.bundle)

    @property
    def generators(self):
        return tuple(LimitFiberElement(self.bundle, g) for g in self.bundle.generators)

    def element(self, expr):
        return quotient_map(expr, self.bundle)

    def unit(self):
        return self.element(GeneratorExpression.unit())

    def norm(self, x):
        return quotient_norm(x)

    def equal(self, x, y, tolerance=None):
        return quotient_equal(x, y, tolerance)

    def product(self, x, y):
        return x * y

    def symbol(self, x):
        return classical_symbol(x)

    def is_commutative(self, tolerance=None):
        generators = self.generators
        for i, x in enumerate(generators):
            for y in generators[i + 1:]:
                if not quotient_equal(x * y, y * x, tolerance):
                    return False
        return True


def limit_fiber(B):
    """G: 拡張バンドルの 0 でのファイバー"""
    if not B.is_extended:
        raise NotExtendedError("limit_fiber には拡張済みバンドルが必要です")
    return LimitFiber(B)


# ========================================
# 拡張の公理と一意性の照合
# ========================================

@dataclass
class ExtensionReport:
    passed: bool
    fullness: bool
    completeness: bool
    uniform_continuity: bool
    conservative: bool
    violations: list = field(default_factory=list)


def check_extension_axioms(B, trials=None, rng=None):
    """拡張バンドルに充満性・完備性（sup ノルム）・一様連続性の代用判定を適用

    拡張元があれば元の点での評価がビット単位で一致することも確認する。
    """
    _require_extended(B)
    trials = int(resolve(trials, 'bundle.generation_trials', 8))
    rng = rng if rng is not None else np.random.default_rng(0)
    violations = []

    fullness = check_fullness(B, trials, rng)
    violations.extend(fullness.violations)

    sections = [Section(B, g) for g in B.generators]
    sections += [Section(B, random_expression(B.letters, rng)) for _ in range(trials)]

    completeness = True
    continuity = True
    for a in sections:
        N = extended_norm_function(a)
        if N.iloc[-1] > sup_norm(a) + limiting_norm(a).error_bound + 1e-12:
            completeness = False
            violations.append(f"極限ノルムが sup ノルムを超えています: {a.expr}")
        report = check_uniform_continuity(N)
        if not report.passed:
            continuity = False
            violations.extend(f"{a.expr}: {v}" for v in report.violations)

    conservative = True
    if B.origin is not None:
        for a in sections:
            original = Section(B.origin, a.expr.map_profiles(lambda p: p.pullback(B.embedding)))
            for x in B.origin.base.points:
                if not np.array_equal(evaluate(original, x), evaluate(a, B.embedding(x))):
                    conservative = False
                    violations.append(f"ħ={x:.6g} で拡張前後の評価が一致しません: {a.expr}")

    passed = fullness.passed and completeness and continuity and conservative
    return ExtensionReport(passed, fullness.passed, completeness, continuity, conservative, violations)


@dataclass
class UniquenessReport:
    passed: bool
    table: pd.DataFrame
    violations: list = field(default_factory=list)


def _norm_for_uniqueness(x, config):
    """商ノルムの推定（コーシー判定を通らない列は末尾の一次当てはめ）"""
    if x.expr.is_zero:
        return LimitEstimate(0.0, 0.0, 'exact', 0)
    try:
        return x.limiting_norm
    except NotCauchyError:
        return tail_fit_limit(norm_function(Section(x.bundle, x.expr)), config, nonnegative=True)


def check_uniqueness(B, elements=None, tolerance=None, max_degree=3, config=None):
    """商ノルムと古典シンボルの sup ノルムが一致し、随伴が複素共役に対応するかを照合

    elements を省略すると長さ max_degree 以下の生成元の語を使う。
    極限を推定できない元は例外にせず、違反として表に残す。
    """
    _require_extended(B)
    config = config or TailConfig.from_settings()
    tolerance = config.uniqueness_tolerance if tolerance is None else tolerance
    if elements is None:
        elements = [GeneratorExpression.word(w) for w in words_up_to(B.letters, max_degree)]
    rows = []
    violations = []
    for expr in elements:
        if isinstance(expr, str):
            expr = GeneratorExpression.parse(expr)
        x = quotient_map(expr, B)
        symbol = classical_symbol(x, config)
        sup = float(np.max(np.abs(symbol))) if len(symbol) else 0.0
        conjugate_gap = float(np.max(np.abs(classical_symbol(x.adjoint(), config) - np.conj(symbol)),
                                     initial=0.0))
        try:
            estimate = _norm_for_uniqueness(x, config)
            adjoint_estimate = _norm_for_uniqueness(x.adjoint(), config)
        except (TooFewSamplesError, InvalidParameterError) as e:
            rows.append({'element': str(expr), 'quotient_norm': float('nan'), 'error_bound': float('nan'),
                         'method': None, 'symbol_sup': sup, 'gap': float('nan'),
                         'conjugate_gap': conjugate_gap, 'agrees': False})
            violations.append(f"{expr}: 商ノルムを推定できません: {e}")
            continue
        gap = abs(estimate.value - sup)
        agrees = (gap <= tolerance and conjugate_gap <= 1e-9
                  and abs(adjoint_estimate.value - estimate.value) <= tolerance)
        rows.append({'element': str(expr), 'quotient_norm': estimate.value,
                     'error_bound': estimate.error_bound, 'method': estimate.method, 'symbol_sup': sup,
                     'gap': gap, 'conjugate_gap': conjugate_gap, 'agrees': agrees})
        if not agrees:
            violations.append(f"{expr}: 商ノルム {estimate.value:.6g} とシンボルの sup {sup:.6g} が一致しません")
    table = pd.DataFrame(rows, columns=['element', 'quotient_norm', 'error_bound', 'method', 'symbol_sup',
                                        'gap', 'conjugate_gap', 'agrees'])
    return UniquenessReport(not violations, table, violations)


__all__ = [
    'LIMIT', 'TailConfig', 'LimitEstimate', 'estimate_limit', 'tail_fit_limit', 'fit_tail_slope', 'local_slopes',
    'limiting_norm', 'in_null_ideal', 'profile_limit', 'classical_form', 'extend_bundle',
    'extend_section', 'LimitFiberElement', 'quotient_map', 'evaluate_extended',
    'extended_norm_function', 'quotient_norm', 'quotient_equal', 'classical_symbol', 'LimitFiber',
    'limit_fiber', 'check_extension_axioms', 'check_uniqueness',
]
