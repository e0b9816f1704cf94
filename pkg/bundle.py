#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
UC_b バンドルの断面と評価写像

断面は生成元の語の一次結合（GeneratorExpression）で内包的に表し、
評価 φ_ħ は語を生成元像の順序付き行列積として計算する（厳密な *-準同型）。
一様連続性・充満性の経験的判定、C₀(I) 加群作用、標準制限もここに置く。
"""

import itertools
import re
import sys
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy.sparse.csgraph import connected_components

import algebra
from base_space import LIMIT, SampledBaseSpace, is_isometric_embedding, is_limit
from errors import (GridError, InvalidParameterError, LimitPointError, TooFewSamplesError,
                    UnknownLabelError)
from settings import resolve


# ========================================
# 係数関数（基底格子上のサンプル）
# ========================================

@dataclass(frozen=True)
class Profile:
    """基底点でサンプルしたスカラー係数関数

    limit は ħ → 0 の値が解析的に分かっている場合のみ持つ。
    """
    points: tuple
    values: tuple
    limit: complex = None

    def __post_init__(self):
        points = tuple(float(p) for p in self.points)
        values = tuple(complex(v) for v in self.values)
        if len(points) != len(values):
            raise GridError("係数関数の点と値の数が一致しません")
        if not all(np.isfinite(v) for v in values):
            raise InvalidParameterError("係数関数は有界（有限値）である必要があります")
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'values', values)
        if self.limit is not None:
            object.__setattr__(self, 'limit', complex(self.limit))

    @classmethod
    def from_function(cls, points, function, limit=None):
        return cls(points, [function(p) for p in points], limit)

    @classmethod
    def from_series(cls, series, points=None, limit=None):
        """pd.Series（index が ħ）から作る。points を与えるとその順に並べ替える"""
        if points is None:
            return cls(tuple(series.index), tuple(series.to_numpy()), limit)
        values = []
        index = [float(p) for p in series.index]
        for p in points:
            matches = [k for k, q in enumerate(index) if np.isclose(q, p, rtol=1e-12, atol=0.0)]
            if not matches:
                raise GridError(f"係数関数が点 {p} でサンプルされていません")
            values.append(series.iloc[matches[0]])
        if len(index) != len(points):
            raise GridError("係数関数の格子が基底格子と一致しません")
        return cls(tuple(points), values, limit)

    def value(self, point):
        if is_limit(point):
            if self.limit is None:
                raise LimitPointError("係数関数の極限値が未知です")
            return self.limit
        try:
            return self.values[self.points.index(point)]
        except ValueError:
            for p, v in zip(self.points, self.values):
                if np.isclose(p, point, rtol=1e-12, atol=0.0):
                    return v
        raise GridError(f"係数関数が点 {point} でサンプルされていません")

    def __mul__(self, other):
        if self.points != other.points:
            raise GridError("係数関数の格子が一致しません")
        limit = None
        if self.limit is not None and other.limit is not None:
            limit = self.limit * other.limit
        return Profile(self.points, [a * b for a, b in zip(self.values, other.values)], limit)

    def conjugate(self):
        limit = None if self.limit is None else self.limit.conjugate()
        return Profile(self.points, [v.conjugate() for v in self.values], limit)

    def pullback(self, alpha):
        """α の始域の点へ引き戻す（値は α(x) での値）"""
        points = alpha.source.points
        return Profile(points, [self.value(alpha(p)) for p in points], self.limit)

    def transport(self, alpha):
        """単射 α で終域の点へ押し出す"""
        if alpha.source.points == alpha.target.points and all(
                alpha(p) == p for p in alpha.source.points):
            return self
        values = []
        for y in alpha.target.points:
            sources = [x for x in alpha.source.points if alpha(x) == y]
            if not sources:
                raise InvalidParameterError(f"終域の点 {y} は像に含まれず係数関数を運べません")
            candidates = {self.value(x) for x in sources}
            if len(candidates) > 1:
                raise InvalidParameterError(f"点 {y} の逆像で係数関数の値が一致しません")
            values.append(candidates.pop())
        return Profile(alpha.target.points, values, self.limit)

    def series(self):
        return pd.Series(self.values, index=pd.Index(self.points, name='hbar'), name='coefficient')

    def sort_key(self):
        limit = () if self.limit is None else (self.limit.real, self.limit.imag)
        return (self.points, tuple((v.real, v.imag) for v in self.values), limit)


def _profile_product(p, q):
    if p is None:
        return q
    if q is None:
        return p
    return p * q


def _term_sort_key(item):
    word, profile = item
    return (word, () if profile is None else (1,) + profile.sort_key())


# ========================================
# 生成元式
# ========================================

@dataclass(frozen=True)
class GeneratorExpression:
    """生成元ラベルの語の一次結合

    terms は (word, profile, coefficient) の組。word は (label, adjoint) の文字のタプル。
    同じ (word, profile) の項は合算し、係数 0 の項は落とした正規形で保持する。
    """
    terms: tuple = ()

    def __post_init__(self):
        merged = {}
        for word, profile, coefficient in self.terms:
            word = tuple((str(label), bool(adj)) for label, adj in word)
            key = (word, profile)
            merged[key] = merged.get(key, 0j) + complex(coefficient)
        canonical = tuple(
            (word, profile, merged[(word, profile)])
            for word, profile in sorted(merged, key=_term_sort_key)
            if merged[(word, profile)] != 0
        )
        object.__setattr__(self, 'terms', canonical)

    # ---- 構成 ----
    @classmethod
    def generator(cls, label):
        word = ((label, False),)
        return cls(((word, None, 1),))

    @classmethod
    def word(cls, letters, coefficient=1.0):
        return cls(((tuple(letters), None, coefficient),))

    @classmethod
    def unit(cls):
        return cls((((), None, 1),))

    @classmethod
    def zero(cls):
        return cls(())

    @classmethod
    def constant(cls, value):
        return cls((((), None, value),))

    @classmethod
    def parse(cls, text):
        return _Parser(text).parse()

    # ---- 代数演算 ----
    def __add__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return GeneratorExpression(self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return GeneratorExpression(tuple((w, p, -c) for w, p, c in self.terms))

    def __sub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return GeneratorExpression(tuple((w, p, c * other) for w, p, c in self.terms))
        if not isinstance(other, GeneratorExpression):
            return NotImplemented
        return GeneratorExpression(tuple(
            (w1 + w2, _profile_product(p1, p2), c1 * c2)
            for w1, p1, c1 in self.terms
            for w2, p2, c2 in other.terms
        ))

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self * other
        return NotImplemented

    def __pow__(self, exponent):
        result = GeneratorExpression.unit()
        for _ in range(int(exponent)):
            result = result * self
        return result

    def adjoint(self):
        """語を逆順にし文字の随伴を反転、係数と係数関数は複素共役"""
        return GeneratorExpression(tuple(
            (tuple((label, not adj) for label, adj in reversed(w)),
             None if p is None else p.conjugate(),
             c.conjugate())
            for w, p, c in self.terms
        ))

    def scale(self, profile):
        """全項に係数関数を掛ける"""
        return GeneratorExpression(tuple(
            (w, _profile_product(p, profile), c) for w, p, c in self.terms))

    def map_profiles(self, function):
        return GeneratorExpression(tuple(
            (w, None if p is None else function(p), c) for w, p, c in self.terms))

    # ---- 問い合わせ ----
    @property
    def is_zero(self):
        return not self.terms

    @property
    def degree(self):
        return max((len(w) for w, _, _ in self.terms), default=0)

    @property
    def has_profiles(self):
        return any(p is not None for _, p, _ in self.terms)

    def labels(self):
        return {label for w, _, _ in self.terms for label, _ in w}

    def profiles(self):
        return [p for _, p, _ in self.terms if p is not None]

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for word, profile, coefficient in self.terms:
            letters = "*".join(label + ("'" if adj else "") for label, adj in word)
            coefficient_text = _format_coefficient(coefficient)
            pieces = []
            if coefficient_text != "1" or not letters:
                pieces.append(coefficient_text)
            if profile is not None:
                pieces.append("f(ħ)")
            if letters:
                pieces.append(letters)
            parts.append("*".join(pieces))
        return " + ".join(parts)


def _coerce(value):
    if isinstance(value, GeneratorExpression):
        return value
    if isinstance(value, (int, float, complex, np.number)):
        return GeneratorExpression.constant(value)
    return NotImplemented


def _format_coefficient(c):
    c = complex(c)
    if c.imag == 0:
        real = c.real
        return str(int(real)) if real == int(real) else repr(real)
    if c.real == 0:
        return f"{c.imag!r}j"
    return f"({c.real!r}{c.imag:+}j)"


# ========================================
# 式のパーサ
# ========================================

_TOKEN = re.compile(r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?j?)"
                    r"|(?P<label>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*^()']))")


class _Parser:
    """式の文字列を読む: 'x1*x2 - 2*x3', "u*v'", '(x1 + x2)^2'"""

    def __init__(self, text):
        self.text = text
        self.tokens = self._tokenize(text)
        self.position = 0

    @staticmethod
    def _tokenize(text):
        tokens = []
        position = 0
        stripped = text.rstrip()
        while position < len(stripped):
            match = _TOKEN.match(stripped, position)
            if not match or match.end() == position:
                raise InvalidParameterError(f"式を解釈できません: {text!r}（位置 {position}）")
            kind = match.lastgroup
            tokens.append((kind, match.group(kind)))
            position = match.end()
        return tokens

    def _peek(self):
        return self.tokens[self.position] if self.position < len(self.tokens) else (None, None)

    def _take(self):
        token = self._peek()
        self.position += 1
        return token

    def parse(self):
        if not self.tokens:
            raise InvalidParameterError("空の式です")
        result = self._sum()
        if self.position != len(self.tokens):
            raise InvalidParameterError(f"式の末尾を解釈できません: {self.text!r}")
        return result

    def _sum(self):
        result = self._product()
        while self._peek() in (('op', '+'), ('op', '-')):
            _, op = self._take()
            term = self._product()
            result = result + term if op == '+' else result - term
        return result

    def _product(self):
        result = self._power()
        while self._peek() == ('op', '*'):
            self._take()
            result = result * self._power()
        return result

    def _power(self):
        base = self._unary()
        if self._peek() == ('op', '^'):
            self._take()
            kind, value = self._take()
            if kind != 'number' or not value.isdigit():
                raise InvalidParameterError(f"指数は非負整数である必要があります: {self.text!r}")
            base = base ** int(value)
        return base

    def _unary(self):
        if self._peek() == ('op', '-'):
            self._take()
            return -self._unary()
        if self._peek() == ('op', '+'):
            self._take()
            return self._unary()
        return self._postfix()

    def _postfix(self):
        result = self._atom()
        while self._peek() == ('op', "'"):
            self._take()
            result = result.adjoint()
        return result

    def _atom(self):
        kind, value = self._take()
        if kind == 'number':
            return GeneratorExpression.constant(complex(value) if value.endswith('j') else float(value))
        if kind == 'label':
            return GeneratorExpression.generator(value)
        if (kind, value) == ('op', '('):
            result = self._sum()
            if self._take() != ('op', ')'):
                raise InvalidParameterError(f"括弧が閉じていません: {self.text!r}")
            return result
        raise InvalidParameterError(f"式を解釈できません: {self.text!r}")


def words_up_to(letters, max_length):
    """長さ max_length 以下の全ての語（空語を含む）"""
    words = []
    for length in range(max_length + 1):
        words.extend(itertools.product(letters, repeat=length))
    return words


def random_expression(letters, rng, max_length=2, terms=3):
    """複素正規係数を持つランダムな式"""
    expression = GeneratorExpression.zero()
    for _ in range(terms):
        length = int(rng.integers(0, max_length + 1))
        word = tuple(letters[int(k)] for k in rng.integers(0, len(letters), size=length))
        coefficient = complex(rng.standard_normal(), rng.standard_normal())
        expression = expression + GeneratorExpression.word(word, coefficient)
    return expression


# ========================================
# バンドルと断面
# ========================================

@dataclass(frozen=True, eq=False)
class Bundle:
    """UC_b バンドル

    anchors[i] は基底点 base.points[i] のファイバーを与える量子化スキーム側の ħ。
    origin は拡張元のバンドル、embedding はその基底の埋め込み（拡張していなければ None）。
    """
    base: SampledBaseSpace
    scheme: object
    labels: tuple
    anchors: tuple
    origin: object = field(default=None)
    embedding: object = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, 'labels', tuple(self.labels))
        object.__setattr__(self, 'anchors', tuple(float(a) for a in self.anchors))
        if len(self.anchors) != len(self.base.points):
            raise GridError("すべての基底点にファイバーが必要です")
        for label in self.labels:
            if label not in self.scheme.labels:
                raise UnknownLabelError(f"スキームに登録されていないラベルです: {label}")
        for anchor in self.anchors:
            self.scheme.index_of(anchor)

    @property
    def is_extended(self):
        return self.base.has_limit

    @property
    def generators(self):
        return tuple(GeneratorExpression.generator(label) for label in self.labels)

    @property
    def letters(self):
        return tuple(letter for letter in self.scheme.letters if letter[0] in self.labels)

    @property
    def fibers(self):
        """基底点ごとのファイバー次元の表"""
        return pd.Series([self.scheme.fiber_dim(a) for a in self.anchors],
                         index=pd.Index(self.base.points, name='hbar'), name='dim')

    def anchor(self, point):
        if is_limit(point):
            raise LimitPointError("0_I のファイバーは limit モジュールで扱います")
        return self.anchors[self.base.index_of(point)]

    def fiber_dim(self, point):
        return self.scheme.fiber_dim(self.anchor(point))

    def section(self, expr):
        if isinstance(expr, str):
            expr = GeneratorExpression.parse(expr)
        return Section(self, expr)

    def unit(self):
        return Section(self, GeneratorExpression.unit())

    def zero(self):
        return Section(self, GeneratorExpression.zero())

    def same_fibers(self, other):
        return (self.base == other.base and self.scheme is other.scheme
                and self.labels == other.labels and self.anchors == other.anchors)


@dataclass(frozen=True)
class Section:
    """バンドルの断面（式と所属バンドル）"""
    bundle: Bundle
    expr: GeneratorExpression

    def __post_init__(self):
        unknown = self.expr.labels() - set(self.bundle.labels)
        if unknown:
            raise UnknownLabelError(f"バンドルにない生成元ラベル: {sorted(unknown)}")
        for profile in self.expr.profiles():
            if profile.points != self.bundle.base.points:
                raise GridError("係数関数が基底格子でサンプルされていません")

    @property
    def base(self):
        return self.bundle.base

    def _other(self, other):
        if isinstance(other, Section):
            if other.bundle is not self.bundle:
                raise InvalidParameterError("異なるバンドルの断面は演算できません")
            return other.expr
        return other

    def __add__(self, other):
        return Section(self.bundle, self.expr + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Section(self.bundle, self.expr - self._other(other))

    def __neg__(self):
        return Section(self.bundle, -self.expr)

    def __mul__(self, other):
        return Section(self.bundle, self.expr * self._other(other))

    def __rmul__(self, other):
        return Section(self.bundle, other * self.expr)

    def adjoint(self):
        return Section(self.bundle, self.expr.adjoint())

    def evaluate(self, point):
        return evaluate(self, point)


@lru_cache(maxsize=2048)
def _word_matrix(scheme, anchor, word):
    """語を生成元像の順序付き積として評価"""
    matrix = np.eye(scheme.fiber_dim(anchor), dtype=complex)
    for label, adj in word:
        matrix = matrix @ scheme.letter_matrix(label, adj, anchor)
    matrix.setflags(write=False)
    return matrix


@lru_cache(maxsize=256)
def _expression_matrix(scheme, anchor, expr, point):
    matrix = np.zeros((scheme.fiber_dim(anchor),) * 2, dtype=complex)
    for word, profile, coefficient in expr.terms:
        weight = coefficient if profile is None else coefficient * profile.value(point)
        matrix = matrix + weight * _word_matrix(scheme, anchor, word)
    return algebra.as_fiber_element(matrix)


def evaluate(a, hbar):
    """φ_ħ(a)"""
    bundle = a.bundle
    if is_limit(hbar):
        raise LimitPointError("0_I での評価は limit.evaluate_extended を使います")
    index = bundle.base.index_of(hbar)
    return _expression_matrix(bundle.scheme, bundle.anchors[index], a.expr, bundle.base.points[index])


def norm_function(a):
    """N_a: ħ ↦ ‖φ_ħ(a)‖_ħ（格子順の pd.Series）"""
    points = a.base.points
    norms = [algebra.operator_norm(evaluate(a, p)) for p in points]
    return pd.Series(norms, index=pd.Index(points, name='hbar'), name='norm')


def sup_norm(a):
    """‖a‖ = sup_ħ ‖φ_ħ(a)‖"""
    return float(norm_function(a).max())


def sup_distance(a, b):
    return sup_norm(a - b)


# ========================================
# 一様連続性とコーシー判定
# ========================================

@dataclass(frozen=True)
class CauchyCheck:
    passed: bool
    differences: tuple
    reason: str = ""

    def __bool__(self):
        return self.passed


def is_cauchy_tail(values, tolerance=None, contraction=None, slack=None):
    """格子順の数列の末尾がコーシー的かを判定

    差分の末尾 (全体の 1/3, 最低 2 個) が許容誤差以下なら合格。
    そうでなければ末尾の差分がほぼ単調非増加で、最後の差分が前半の最大差分の
    contraction 倍以下であることを要求する。
    """
    tolerance = resolve(tolerance, 'bundle.uniform_continuity_tolerance', 1e-6)
    contraction = resolve(contraction, 'bundle.contraction', 0.6)
    slack = resolve(slack, 'bundle.monotone_slack', 0.1)
    values = np.asarray(values)
    differences = np.abs(np.diff(values))
    if len(differences) == 0:
        return CauchyCheck(True, ())
    window = min(len(differences), max(2, len(differences) // 3))
    tail = differences[-window:]
    head = differences[:int(np.ceil(len(differences) / 2))]
    if tail.max() <= tolerance:
        return CauchyCheck(True, tuple(differences))
    for k in range(len(tail) - 1):
        if tail[k + 1] > tail[k] * (1 + slack) + tolerance:
            return CauchyCheck(False, tuple(differences), "末尾の差分が減少していません")
    if tail[-1] > contraction * head.max() + tolerance:
        return CauchyCheck(False, tuple(differences), "末尾の差分が前半に比べて縮小していません")
    return CauchyCheck(True, tuple(differences))


@dataclass
class UniformContinuityReport:
    modulus: pd.Series
    exponent: float
    constant: float
    cauchy: bool
    passed: bool
    violations: list = field(default_factory=list)


def check_uniform_continuity(N, window=None, tolerance=None):
    """経験的連続率 ω(δ) の冪フィットと末尾コーシー判定

    N は index が ħ（格子順）の pd.Series。
    """
    tolerance = resolve(tolerance, 'bundle.uniform_continuity_tolerance', 1e-6)
    if len(N) < 3:
        raise TooFewSamplesError(f"一様連続性の判定には3点以上必要です: {len(N)}")
    values = np.asarray(N.to_numpy())
    points = np.asarray(N.index, dtype=float)
    distance = np.abs(points[:, None] - points[None, :])
    change = np.abs(values[:, None] - values[None, :])
    if window is None:
        window = float(distance.max())
    if not window > 0:
        raise InvalidParameterError("window は正である必要があります")

    pairs = (distance > 0) & (distance <= window * (1 + 1e-12))
    deltas = np.unique(distance[pairs])
    omega = np.array([change[pairs & (distance <= d)].max() for d in deltas])
    modulus = pd.Series(omega, index=pd.Index(deltas, name='delta'), name='omega')

    violations = []
    exponent = float('nan')
    constant = 0.0
    significant = omega > tolerance
    if significant.sum() >= 2:
        exponent, intercept = np.polyfit(np.log(deltas[significant]), np.log(omega[significant]), 1)
        exponent = float(exponent)
        constant = float(np.exp(intercept))
        if not exponent > 0:
            violations.append(f"連続率の冪指数が正ではありません: γ={exponent:.3g}")
    elif significant.any():
        constant = float(omega[significant].max())

    # 0 に置いた極限値は ω で評価済みなのでコーシー判定はサンプル点のみ
    cauchy = is_cauchy_tail(values[points > 0], tolerance=tolerance)
    if not cauchy:
        violations.append(f"末尾がコーシー列ではありません: {cauchy.reason}")

    return UniformContinuityReport(modulus, exponent, constant, bool(cauchy), not violations, violations)


# ========================================
# C₀(I) 加群作用と制限
# ========================================

def _as_profile(f, base, limit=None):
    if isinstance(f, Profile):
        if f.points != base.points:
            raise GridError("係数関数の格子が基底格子と一致しません")
        return f
    if isinstance(f, pd.Series):
        return Profile.from_series(f, base.points, limit)
    if callable(f):
        return Profile.from_function(base.points, f, limit)
    raise InvalidParameterError("係数関数は pd.Series・Profile・関数のいずれかです")


def module_action(f, a, limit=None):
    """fa: evaluate(fa, ħ) = f(ħ)·evaluate(a, ħ)

    一様連続でない係数関数は警告のみで受け付ける。
    """
    profile = _as_profile(f, a.base, limit)
    if all(v == 1 for v in profile.values):
        return a
    if all(v == 0 for v in profile.values):
        return a.bundle.zero()
    if len(profile.values) >= 3:
        report = check_uniform_continuity(profile.series())
        if not report.passed:
            print(f"[WARNING] 係数関数が一様連続ではない可能性があります: {'; '.join(report.violations)}",
                  file=sys.stderr)
    return Section(a.bundle, a.expr.scale(profile))


def restrict_to_vanishing(a, cutoff, core=()):
    """0 で消える断面への制限（cutoff は [0,1] 値、core 上で 1、末尾で非増加）"""
    profile = _as_profile(cutoff, a.base)
    values = np.array(profile.values)
    if np.any(np.abs(values.imag) > 0) or np.any(values.real < 0) or np.any(values.real > 1):
        raise InvalidParameterError("cutoff は [0, 1] の実数値である必要があります")
    for point in core:
        if profile.value(point) != 1:
            raise InvalidParameterError(f"cutoff が core の点 {point} で 1 ではありません")
    if np.any(np.diff(values.real) > 0):
        raise InvalidParameterError("cutoff が格子の末尾に向かって減衰していません")
    return module_action(profile, a)


# ========================================
# 充満性（評価写像の全射性）の代用判定
# ========================================

@dataclass
class FiberGeneration:
    hbar: float
    dim: int
    connected: bool
    simple_spectrum: bool
    word_rank: int = None
    spans: bool = None

    @property
    def full(self):
        return self.connected or bool(self.spans)


@dataclass
class FullnessReport:
    passed: bool
    sup_norm_identity: bool
    fibers: list
    violations: list = field(default_factory=list)


def _generated_algebra_is_full(matrices, rng, trials):
    """Burnside 判定: 単純スペクトルのエルミート元の固有基底で生成元が連結なグラフを作るか"""
    dim = matrices[0].shape[0]
    if dim == 1:
        return True, True
    letters = list(matrices) + [np.conj(m).T for m in matrices]
    hermitian = []
    for m in letters:
        hermitian.append(m + np.conj(m).T)
        hermitian.append(1j * (m - np.conj(m).T))
    for m1 in letters:
        for m2 in letters:
            product = m1 @ m2
            hermitian.append(product + np.conj(product).T)
            hermitian.append(1j * (product - np.conj(product).T))
    hermitian = np.array(hermitian)

    for _ in range(max(1, trials)):
        coefficients = rng.standard_normal(len(hermitian))
        K = np.tensordot(coefficients, hermitian, axes=1)
        eigenvalues, vectors = np.linalg.eigh((K + np.conj(K).T) / 2)
        scale = max(np.max(np.abs(eigenvalues)), 1.0)
        if np.min(np.diff(eigenvalues)) <= 1e-8 * scale:
            continue
        adjacency = np.zeros((dim, dim), dtype=bool)
        for m in letters:
            entries = np.abs(np.conj(vectors).T @ m @ vectors)
            adjacency |= entries > 1e-8 * max(algebra.operator_norm(m), 1e-300)
        count, _ = connected_components(adjacency.astype(int), directed=False)
        return count == 1, True
    return False, False


def check_fullness(B, trials=None, rng=None):
    """充満性の代用判定

    (a) ランダム断面で ‖a*a‖ = ‖a‖² と三角不等式（sup ノルム）
    (b) 各ファイバーで生成元像が M_n 全体を生成するか（Burnside 判定）。
        次元が小さいファイバーでは長さ max_word_length 以下の語の張る空間の次元も報告する。
    """
    trials = int(resolve(trials, 'bundle.generation_trials', 8))
    rng = rng if rng is not None else np.random.default_rng(0)
    max_length = int(resolve(None, 'bundle.max_word_length', 4))
    rank_limit = int(resolve(None, 'bundle.rank_dimension_limit', 8))
    violations = []

    letters = B.letters
    sup_ok = True
    for _ in range(trials):
        a = Section(B, random_expression(letters, rng))
        b = Section(B, random_expression(letters, rng))
        norm_a = sup_norm(a)
        if abs(sup_norm(a.adjoint() * a) - norm_a ** 2) > 1e-9 * max(norm_a ** 2, 1.0):
            sup_ok = False
            violations.append(f"C*-恒等式が sup ノルムで成り立ちません: {a.expr}")
        if sup_norm(a + b) > norm_a + sup_norm(b) + 1e-9:
            sup_ok = False
            violations.append("sup ノルムの三角不等式が成り立ちません")

    fibers = []
    for point in B.base.points:
        anchor = B.anchor(point)
        matrices = [B.scheme.letter_matrix(label, adj, anchor) for label, adj in letters]
        connected, simple = _generated_algebra_is_full(matrices, rng, trials)
        dim = matrices[0].shape[0]
        word_rank = None
        spans = None
        if dim <= rank_limit:
            words = words_up_to(letters, max_length)
            stack = np.array([_word_matrix(B.scheme, anchor, tuple(w)).ravel() for w in words])
            word_rank = int(np.linalg.matrix_rank(stack, tol=1e-9))
            spans = word_rank == dim * dim
        fiber = FiberGeneration(point, dim, connected, simple, word_rank, spans)
        fibers.append(fiber)
        if not fiber.full:
            violations.append(f"ħ={point:.6g} で生成元が M_{dim} を生成しません")

    passed = sup_ok and all(f.full for f in fibers)
    return FullnessReport(passed, sup_ok, fibers, violations)


# ========================================
# バンドルの構成と標準制限
# ========================================

@lru_cache(maxsize=None)
def make_bundle(scheme):
    """量子化スキームが生成するバンドル（基底はスキームの ħ 格子）"""
    base = SampledBaseSpace.euclidean(scheme.hbars)
    return Bundle(base, scheme, scheme.labels, scheme.hbars)


def constant_bundle(scheme, hbar, base):
    """全ファイバーがスキームの ħ でのファイバーに等しいバンドル"""
    return Bundle(base, scheme, scheme.labels, (hbar,) * len(base.points))


def reparametrize_bundle(B, alpha):
    """単射な基底写像 α でファイバーを運ぶ（終域の全点が像である必要がある）"""
    if alpha.source != B.base:
        raise GridError("α の始域がバンドルの基底と一致しません")
    if alpha.target.has_limit:
        raise LimitPointError("終域に極限点がある写像では再パラメータ化できません")
    anchors = []
    for y in alpha.target.points:
        sources = [x for x in B.base.points if alpha(x) == y]
        if len(sources) != 1:
            raise InvalidParameterError(f"終域の点 {y} の逆像が一意ではありません")
        anchors.append(B.anchor(sources[0]))
    return Bundle(alpha.target, B.scheme, B.labels, anchors)


@lru_cache(maxsize=None)
def canonical_restriction(B, alpha):
    """α[I] 上のファイバーだけを残したバンドル"""
    if alpha.target != B.base:
        raise GridError("α の終域がバンドルの基底と一致しません")
    embedding = is_isometric_embedding(alpha)
    if not embedding:
        raise InvalidParameterError(f"α が等長単射ではありません: {embedding.detail}")
    anchors = []
    for p in alpha.source.points:
        image = alpha(p)
        if is_limit(image):
            raise LimitPointError("内部の点が極限点に写っています")
        anchors.append(B.anchor(image))
    return Bundle(alpha.source, B.scheme, B.labels, anchors)


def restrict_section(a, alpha):
    """断面を標準制限へ（係数関数は α で引き戻す）"""
    restricted = canonical_restriction(a.bundle, alpha)
    return Section(restricted, a.expr.map_profiles(lambda p: p.pullback(alpha)))


__all__ = [
    'LIMIT', 'Profile', 'GeneratorExpression', 'Bundle', 'Section', 'evaluate', 'norm_function',
    'sup_norm', 'sup_distance', 'is_cauchy_tail', 'check_uniform_continuity', 'module_action',
    'restrict_to_vanishing', 'check_fullness', 'make_bundle', 'constant_bundle',
    'reparametrize_bundle', 'canonical_restriction', 'restrict_section', 'words_up_to',
    'random_expression',
]
