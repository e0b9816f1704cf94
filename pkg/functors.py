#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
バンドル射と関手

バンドル射 σ = (α, β) は基底写像 α と生成元ラベルの代入 β の組。
両立条件は評価行列の零空間（ある ħ で 0 になる式の組合せ）が β で α(ħ) 上の 0 に
写ることを有限のバッテリーで確かめる。拡張関手 F、制限関手 G、L = G∘F、
力学系付きバンドルとポアソン極限もここで扱う。
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg import null_space

import algebra
import base_space
from base_space import LIMIT, BaseMap, MapCheck, is_limit, is_metric_map, is_proper
from bundle import GeneratorExpression, Section, evaluate, random_expression, words_up_to
from errors import (CompatibilityError, InvalidParameterError, MissingBracketError,
                    MorphismMismatchError, NonMetricMapError, NotCauchyError, NotExtendedError,
                    NotProperError, NotSelfAdjointError, PreconditionError, TooFewSamplesError)
from limit import (LimitFiberElement, TailConfig, classical_form, estimate_limit, extend_bundle,
                   fit_tail_slope, in_null_ideal, limit_fiber, quotient_equal, quotient_map)
from quantization import convergence_report
from settings import get_setting, resolve


# ========================================
# バンドル射
# ========================================

def _substitute(expr, label_map, alpha):
    """β: 文字を像の式に置き換え、係数関数は α で運ぶ"""
    result = GeneratorExpression.zero()
    for word, profile, coefficient in expr.terms:
        image = GeneratorExpression.constant(coefficient)
        for label, adj in word:
            letter = label_map[label]
            image = image * (letter.adjoint() if adj else letter)
        if profile is not None:
            image = image.scale(profile.transport(alpha))
        result = result + image
    return result


@dataclass(frozen=True)
class BundleMorphism:
    """σ = (α, β): source → target。label_map は (ラベル, 像の式) の組のタプル"""
    alpha: BaseMap
    label_map: tuple
    source: object
    target: object

    @property
    def images(self):
        return dict(self.label_map)

    def beta(self, expr):
        if isinstance(expr, str):
            expr = GeneratorExpression.parse(expr)
        return _substitute(expr, self.images, self.alpha)

    def __call__(self, a):
        if a.bundle is not self.source:
            raise MorphismMismatchError("断面が射の始域のバンドルに属していません")
        return Section(self.target, self.beta(a.expr))


def _label_map(label_map, source, target):
    images = {}
    for label in source.labels:
        value = label_map.get(label, label if label in target.labels else None)
        if value is None:
            raise InvalidParameterError(f"ラベル {label} の像が指定されていません")
        if isinstance(value, str):
            value = GeneratorExpression.parse(value)
        Section(target, value)
        images[label] = value
    unknown = set(label_map) - set(source.labels)
    if unknown:
        raise InvalidParameterError(f"始域にないラベルの像が指定されています: {sorted(unknown)}")
    return tuple(sorted(images.items()))


def _battery(B, rng, size=None, length=None):
    size = int(resolve(size, 'functors.battery_size', 64))
    length = int(resolve(length, 'functors.battery_word_length', 2))
    words = [tuple(w) for w in words_up_to(B.letters, length)]
    if len(words) > size:
        chosen = sorted(rng.choice(len(words), size=size, replace=False))
        words = [()] + [words[k] for k in chosen if words[k] != ()]
    return [GeneratorExpression.word(w) for w in words]


def check_compatibility(sigma, rng=None, tolerance=None):
    """ħ で評価が一致する式の組が α(ħ) で一致するか

    各 ħ で評価行列の零空間を取り、その組合せの β 像の評価が 0 であることを確認する。
    違反すれば (組合せの式, 0, ħ) を witness に持つ MapCheck を返す。
    """
    tolerance = resolve(tolerance, 'functors.compatibility_tolerance', 1e-10)
    rng = rng if rng is not None else np.random.default_rng(0)
    battery = _battery(sigma.source, rng)
    images = [sigma.beta(e) for e in battery]
    for point in sigma.source.base.points:
        image_point = sigma.alpha(point)
        if is_limit(image_point):
            return MapCheck(False, (point, image_point), "内部の点が極限点に写っています")
        columns = np.column_stack([evaluate(Section(sigma.source, e), point).ravel() for e in battery])
        relations = null_space(columns, rcond=1e-10)
        if relations.size == 0:
            continue
        targets = np.column_stack([evaluate(Section(sigma.target, e), image_point).ravel() for e in images])
        scale = max(1.0, float(np.max(np.abs(targets))))
        for vector in relations.T:
            residual = np.max(np.abs(targets @ vector))
            if residual > tolerance * scale:
                combination = GeneratorExpression.zero()
                for coefficient, e in zip(vector, battery):
                    if abs(coefficient) > 1e-12:
                        combination = combination + complex(coefficient) * e
                return MapCheck(False, (combination, GeneratorExpression.zero(), point),
                                f"ħ={point:.6g} で 0 になる組合せが α(ħ) で 0 になりません（残差 {residual:.3g}）")
    return MapCheck(True)


def make_morphism(alpha, label_map, source, target, rng=None):
    """距離写像 α とラベル対応から射を作り、両立条件のバッテリーを通す"""
    if alpha.source != source.base or alpha.target != target.base:
        raise InvalidParameterError("α の始域・終域がバンドルの基底と一致しません")
    metric = is_metric_map(alpha)
    if not metric:
        raise NonMetricMapError(f"α が距離写像ではありません: {metric.detail}", metric.witness)
    sigma = BundleMorphism(alpha, _label_map(dict(label_map), source, target), source, target)
    check = check_compatibility(sigma, rng)
    if not check:
        raise CompatibilityError(f"両立条件を満たしません: {check.detail}", check.witness)
    return sigma


def identity_morphism(B):
    labels = tuple((label, GeneratorExpression.generator(label)) for label in sorted(B.labels))
    return BundleMorphism(BaseMap.identity(B.base), labels, B, B)


def compose(sigma2, sigma1, audit=True):
    """σ2 ∘ σ1"""
    if sigma1.target is not sigma2.source:
        raise MorphismMismatchError("σ1 の終域と σ2 の始域が一致しません")
    alpha = base_space.compose(sigma2.alpha, sigma1.alpha)
    labels = tuple((label, sigma2.beta(image)) for label, image in sigma1.label_map)
    sigma = BundleMorphism(alpha, labels, sigma1.source, sigma2.target)
    if audit:
        check = check_compatibility(sigma)
        if not check:
            raise CompatibilityError(f"合成が両立条件を満たしません: {check.detail}", check.witness)
    return sigma


# ========================================
# ファイバー写像
# ========================================

@dataclass
class FiberMapReport:
    hbar: float
    homomorphism: bool
    star: bool
    injective: bool
    surjective: bool
    isometric: bool = None

    @property
    def passed(self):
        return self.homomorphism and self.star and self.isometric is not False


@dataclass
class FiberMap:
    """σ_ħ: φ_ħ(a) ↦ φ_{α(ħ)}(β(a))"""
    sigma: BundleMorphism
    hbar: float
    report: FiberMapReport = None

    @property
    def image_point(self):
        return self.sigma.alpha(self.hbar)

    def __call__(self, a):
        """断面・式なら β 像の評価、行列なら語の評価の一次結合として写す"""
        if isinstance(a, Section):
            a = a.expr
        if isinstance(a, (GeneratorExpression, str)):
            return evaluate(Section(self.sigma.target, self.sigma.beta(a)), self.image_point)
        matrix = np.asarray(a)
        words = [GeneratorExpression.word(w) for w in words_up_to(self.sigma.source.letters,
                                                                  int(get_setting('bundle.max_word_length', 4)))]
        columns = np.column_stack([evaluate(Section(self.sigma.source, w), self.hbar).ravel() for w in words])
        coefficients, *_ = np.linalg.lstsq(columns, matrix.ravel(), rcond=None)
        if np.max(np.abs(columns @ coefficients - matrix.ravel())) > 1e-9 * max(1.0, np.max(np.abs(matrix))):
            raise InvalidParameterError("行列が語の評価の張る空間にありません")
        expr = GeneratorExpression.zero()
        for c, w in zip(coefficients, words):
            expr = expr + complex(c) * w
        return self(expr)


def fiber_map(sigma, hbar, rng=None, trials=None):
    """σ_ħ と *-準同型・等長性の報告"""
    rng = rng if rng is not None else np.random.default_rng(0)
    trials = int(resolve(trials, 'bundle.generation_trials', 8))
    tolerance = resolve(None, 'functors.compatibility_tolerance', 1e-10)
    isometry_tolerance = resolve(None, 'functors.isometry_tolerance', 1e-9)
    point = sigma.source.base.points[sigma.source.base.index_of(hbar)]
    result = FiberMap(sigma, point)
    letters = sigma.source.letters

    homomorphism = True
    star = True
    for _ in range(trials):
        a = random_expression(letters, rng)
        b = random_expression(letters, rng)
        A = result(a)
        B = result(b)
        scale = max(1.0, algebra.operator_norm(A), algebra.operator_norm(B)) ** 2
        if np.max(np.abs(result(a * b) - A @ B)) > tolerance * scale:
            homomorphism = False
        if np.max(np.abs(result(a + 2 * b) - (A + 2 * B))) > tolerance * scale:
            homomorphism = False
        if np.max(np.abs(result(a.adjoint()) - algebra.adjoint(A))) > tolerance * scale:
            star = False

    battery = _battery(sigma.source, rng)
    source_columns = np.column_stack([evaluate(Section(sigma.source, e), point).ravel() for e in battery])
    image_columns = np.column_stack([result(e).ravel() for e in battery])
    source_rank = np.linalg.matrix_rank(source_columns, tol=1e-9)
    image_rank = np.linalg.matrix_rank(image_columns, tol=1e-9)
    injective = image_rank == source_rank
    target_words = _battery(sigma.target, rng)
    target_columns = np.column_stack([evaluate(Section(sigma.target, e), result.image_point).ravel()
                                      for e in target_words])
    surjective = np.linalg.matrix_rank(np.hstack([image_columns, target_columns]), tol=1e-9) == image_rank

    isometric = None
    if injective and surjective:
        isometric = True
        for _ in range(trials):
            a = random_expression(letters, rng)
            source_norm = algebra.operator_norm(evaluate(Section(sigma.source, a), point))
            if abs(algebra.operator_norm(result(a)) - source_norm) > isometry_tolerance * max(1.0, source_norm):
                isometric = False
    result.report = FiberMapReport(point, homomorphism, star, bool(injective), bool(surjective), isometric)
    return result


# ========================================
# 関手 F, G, L
# ========================================

def extend_morphism(sigma):
    """F(σ) = (C(α), β)。C(α) は 0_I を 0_J に写す"""
    proper = is_proper(sigma.alpha)
    if not proper:
        raise NotProperError(f"α が固有写像ではありません: {proper.detail}")
    source = extend_bundle(sigma.source)
    target = extend_bundle(sigma.target)
    mapping = tuple(sigma.alpha(p) for p in sigma.source.base.points) + (LIMIT,)
    errors = tuple(sigma.alpha.snapping_error(p) for p in sigma.source.base.points) + (0.0,)
    alpha = BaseMap(source.base, target.base, mapping, errors)
    return BundleMorphism(alpha, sigma.label_map, source, target)


@dataclass(frozen=True)
class LimitMorphism:
    """σ₀: A₀ → B₀, φ₀(a) ↦ φ₀(β(a))"""
    morphism: BundleMorphism

    def __call__(self, x):
        if x.bundle is not self.morphism.source:
            raise MorphismMismatchError("極限ファイバーの元が射の始域に属していません")
        return LimitFiberElement(self.morphism.target, self.morphism.beta(x.expr))

    @property
    def source(self):
        return limit_fiber(self.morphism.source)

    @property
    def target(self):
        return limit_fiber(self.morphism.target)


def limit_morphism(sigma):
    """G(σ): 拡張済みの射の 0 でのファイバー写像"""
    if not (sigma.source.is_extended and sigma.target.is_extended):
        raise NotExtendedError("limit_morphism には拡張済みバンドル間の射が必要です")
    if not is_limit(sigma.alpha(LIMIT)):
        raise NotProperError("0_I が 0_J に写りません")
    return LimitMorphism(sigma)


def classical_limit(sigma):
    """L(σ) = G(F(σ))"""
    return limit_morphism(extend_morphism(sigma))


def limit_object(B):
    """L(B) = G(F(B))"""
    return limit_fiber(extend_bundle(B))


# ========================================
# 力学系付きバンドル
# ========================================

@dataclass(frozen=True)
class DynamicalBundleData:
    bundle: object
    hamiltonian: GeneratorExpression
    times: tuple = (0.1, 0.5, 1.0)

    def __post_init__(self):
        hamiltonian = self.hamiltonian
        if isinstance(hamiltonian, str):
            hamiltonian = GeneratorExpression.parse(hamiltonian)
        object.__setattr__(self, 'hamiltonian', hamiltonian)
        object.__setattr__(self, 'times', tuple(float(t) for t in self.times))
        Section(self.bundle, hamiltonian)
        for point in self.bundle.base.points:
            if not algebra.is_self_adjoint(self.generator(point)):
                raise NotSelfAdjointError(f"ħ={point:.6g} でハミルトニアンが自己共役ではありません")

    def generator(self, point):
        """H = Q_ħ(h)（ファイバーの ħ で量子化）"""
        return self.bundle.scheme.quantize(classical_form(self.hamiltonian), self.bundle.anchor(point))

    def propagator(self, point, t):
        return algebra.unitary_flow(self.generator(point), t, self.bundle.anchor(point))

    def evolve(self, A, point, t):
        """τ_{t;ħ}(A) = e^{itH/ħ} A e^{-itH/ħ}"""
        return algebra.conjugate_by(self.propagator(point, t), A)


@dataclass
class DynamicsLiftReport:
    passed: bool
    table: pd.DataFrame
    violations: list = field(default_factory=list)


def check_dynamics_lift(D, rng=None, trials=None):
    """τ_{t;ħ} の自己同型の法則: τ_0 = id、群法則、乗法性、*-保存"""
    rng = rng if rng is not None else np.random.default_rng(0)
    trials = int(resolve(trials, 'bundle.generation_trials', 8))
    tolerance = resolve(None, 'functors.flow_tolerance', 1e-8)
    letters = D.bundle.letters
    rows = []
    violations = []
    for point in D.bundle.base.points:
        for t in D.times:
            s = float(rng.uniform(-1.0, 1.0))
            identity_gap = group_gap = product_gap = star_gap = 0.0
            for _ in range(trials):
                A = evaluate(Section(D.bundle, random_expression(letters, rng)), point)
                B = evaluate(Section(D.bundle, random_expression(letters, rng)), point)
                scale = max(1.0, algebra.operator_norm(A) * max(1.0, algebra.operator_norm(B)))
                identity_gap = max(identity_gap, algebra.operator_norm(D.evolve(A, point, 0.0) - A) / scale)
                group_gap = max(group_gap, algebra.operator_norm(
                    D.evolve(A, point, s + t) - D.evolve(D.evolve(A, point, t), point, s)) / scale)
                product_gap = max(product_gap, algebra.operator_norm(
                    D.evolve(A @ B, point, t) - D.evolve(A, point, t) @ D.evolve(B, point, t)) / scale)
                star_gap = max(star_gap, algebra.operator_norm(
                    D.evolve(algebra.adjoint(A), point, t) - algebra.adjoint(D.evolve(A, point, t))) / scale)
            ok = max(identity_gap, group_gap, product_gap, star_gap) <= tolerance
            rows.append({'hbar': point, 't': t, 'identity': identity_gap, 'group_law': group_gap,
                         'multiplicative': product_gap, 'star': star_gap, 'passed': ok})
            if not ok:
                violations.append(f"ħ={point:.6g}, t={t} で自己同型の法則が成り立ちません")
    table = pd.DataFrame(rows, columns=['hbar', 't', 'identity', 'group_law', 'multiplicative', 'star',
                                       'passed'])
    return DynamicsLiftReport(not violations, table, violations)


@dataclass
class LimitDynamicsReport:
    passed: bool
    table: pd.DataFrame
    reports: dict
    violations: list = field(default_factory=list)


def limit_dynamics(D, generators=None, times=None, config=None):
    """0 での力学 τ_{t;0} を古典ハミルトン流による引き戻しと比較

    g∘Φ_t を g と同じ次数の多項式 ĝ_t に当てはめ、
    r(ħ) = ‖τ_{t;ħ}(φ_ħ(g)) - φ_ħ(ĝ_t)‖ が 0 に収束するかを判定する。
    """
    scheme = D.bundle.scheme
    config = config or TailConfig.from_settings(exact_tolerance=get_setting('functors.flow_tolerance', 1e-8))
    generators = D.bundle.generators if generators is None else generators
    times = D.times if times is None else tuple(times)
    h = classical_form(D.hamiltonian)
    rows = []
    reports = {}
    violations = []
    for g in generators:
        if isinstance(g, str):
            g = GeneratorExpression.parse(g)
        for t in times:
            flowed = scheme.classical_flow(h, t)
            pulled_back = scheme.evaluate_classical(g, flowed)
            fitted = scheme.fit_classical(pulled_back, g.degree)
            fit_error = float(np.max(np.abs(scheme.symbol(fitted) - pulled_back)))
            section = Section(D.bundle, scheme.section_for(fitted, D.bundle))
            points = list(D.bundle.base.points)
            values = []
            residuals = []
            for point in points:
                evolved = D.evolve(evaluate(Section(D.bundle, g), point), point, t)
                values.append(algebra.operator_norm(evolved))
                residuals.append(algebra.operator_norm(evolved - evaluate(section, point)))
            report = convergence_report('limit_dynamics', points, values, residuals, config)
            reports[(str(g), t)] = report
            rows.append({'generator': str(g), 't': t, 'limit': str(fitted), 'fit_error': fit_error,
                         'max_residual': max(residuals), 'slope': report.slope, 'exact': report.exact,
                         'passed': report.passed})
            if not report.passed:
                violations.extend(f"{g}, t={t}: {v}" for v in report.violations)
    table = pd.DataFrame(rows, columns=['generator', 't', 'limit', 'fit_error', 'max_residual', 'slope',
                                       'exact', 'passed'])
    return LimitDynamicsReport(not violations, table, reports, violations)


def extend_dynamics(D):
    """F_D: 拡張バンドル上の同じハミルトニアン"""
    extended = extend_bundle(D.bundle)
    return DynamicalBundleData(extended, D.hamiltonian, D.times)


@dataclass(frozen=True)
class LimitDynamics:
    """G_D の像: 0 でのファイバーとハミルトニアンの剰余類"""
    fiber: object
    hamiltonian: LimitFiberElement
    times: tuple


def restrict_dynamics(D):
    """G_D: 拡張済みの力学系付きバンドルを 0 のファイバーへ"""
    fiber = limit_fiber(D.bundle)
    return LimitDynamics(fiber, quotient_map(D.hamiltonian, D.bundle), D.times)


def limit_dynamics_object(D):
    """L_D = G_D ∘ F_D（対象）"""
    return restrict_dynamics(extend_dynamics(D))


def is_dynamical_morphism(sigma, D_source, D_target, tolerance=None):
    """β(h_A) と h_B の評価が α(ħ) で一致するか"""
    tolerance = resolve(tolerance, 'functors.compatibility_tolerance', 1e-10)
    if D_source.bundle is not sigma.source or D_target.bundle is not sigma.target:
        return MapCheck(False, None, "力学系のバンドルが射の始域・終域と一致しません")
    image = Section(sigma.target, sigma.beta(D_source.hamiltonian))
    hamiltonian = Section(sigma.target, D_target.hamiltonian)
    for point in sigma.source.base.points:
        y = sigma.alpha(point)
        gap = algebra.operator_norm(evaluate(image, y) - evaluate(hamiltonian, y))
        if gap > tolerance * max(1.0, algebra.operator_norm(evaluate(hamiltonian, y))):
            return MapCheck(False, (point,), f"ħ={point:.6g} でハミルトニアンが対応しません")
    return MapCheck(True)


def dynamical_limit_morphism(sigma, D_source, D_target):
    """L_D（射）: ハミルトニアンを保つ射の古典極限"""
    check = is_dynamical_morphism(sigma, D_source, D_target)
    if not check:
        raise PreconditionError(f"力学系の射ではありません: {check.detail}")
    return classical_limit(sigma)


# ========================================
# ポスト量子化とポアソン極限
# ========================================

def _term_coordinates(expressions):
    """式の (word, profile) ごとの係数ベクトル"""
    keys = sorted({(w, p) for e in expressions for w, p, _ in e.terms},
                  key=lambda k: (k[0], () if k[1] is None else (1,) + k[1].sort_key()))
    index = {k: i for i, k in enumerate(keys)}
    matrix = np.zeros((len(keys), len(expressions)), dtype=complex)
    for col, e in enumerate(expressions):
        for w, p, c in e.terms:
            matrix[index[(w, p)], col] += c
    return matrix


def span_coordinates(family, expr):
    """family の一次結合として expr を表す係数（表せなければ None）"""
    matrix = _term_coordinates(list(family) + [expr])
    basis = matrix[:, :-1]
    target = matrix[:, -1]
    if basis.size == 0:
        return None if np.any(target) else np.zeros(0)
    coefficients, *_ = np.linalg.lstsq(basis, target, rcond=None)
    if np.max(np.abs(basis @ coefficients - target), initial=0.0) > 1e-10:
        return None
    return coefficients


@dataclass(frozen=True, eq=False)
class PostQuantizationData:
    """ポスト量子化バンドル: 族 P と括弧表 (a, b) ↦ c_{a,b}"""
    bundle: object
    family: tuple
    bracket_table: dict


def make_post_quantization(B, family):
    """c_{a,b} をスキームの古典括弧から作り、P ∪ {c} を族とする"""
    bundle = B if B.is_extended else extend_bundle(B)
    scheme = bundle.scheme
    members = []
    for a in family:
        a = GeneratorExpression.parse(a) if isinstance(a, str) else a
        Section(bundle, a)
        if a not in members:
            members.append(a)
    table = {}
    for a in members:
        for b in members:
            bracket = scheme.poisson_bracket(classical_form(a), classical_form(b))
            table[(a, b)] = scheme.section_for(bracket, bundle)
    closure = list(members)
    for c in table.values():
        if c not in closure:
            closure.append(c)
    return PostQuantizationData(bundle, tuple(closure), table)


def poisson_bracket_at_limit(P, a, b):
    """{φ₀(a), φ₀(b)} = φ₀(c_{a,b})（表の族の張る空間上で双線形に延ばす）"""
    a = GeneratorExpression.parse(a) if isinstance(a, str) else a
    b = GeneratorExpression.parse(b) if isinstance(b, str) else b
    if (a, b) in P.bracket_table:
        return quotient_map(P.bracket_table[(a, b)], P.bundle)
    members = sorted({x for x, _ in P.bracket_table}, key=str)
    ca = span_coordinates(members, a)
    cb = span_coordinates(members, b)
    if ca is None or cb is None:
        raise MissingBracketError(f"括弧表にない組です: ({a}, {b})", [(str(a), str(b))])
    result = GeneratorExpression.zero()
    for x, alpha in zip(members, ca):
        for y, beta in zip(members, cb):
            if abs(alpha) > 1e-14 and abs(beta) > 1e-14:
                result = result + complex(alpha * beta) * P.bracket_table[(x, y)]
    return quotient_map(result, P.bundle)


@dataclass
class PostQuantizationReport:
    passed: bool
    density: bool
    commutators_vanish: bool
    reports: dict
    table: pd.DataFrame
    violations: list = field(default_factory=list)


def check_post_quantization(P, rng=None, pairs=None, config=None):
    """(i) P が生成元と単位を含む (ii) 括弧表の残差が 0 に収束 (iii) 交換子が極限で消える"""
    rng = rng if rng is not None else np.random.default_rng(0)
    pairs = int(resolve(pairs, 'bundle.generation_trials', 8))
    bundle = P.bundle
    base = bundle.base
    violations = []

    required = [GeneratorExpression.unit()] + list(bundle.generators)
    density = all(span_coordinates(P.family, g) is not None for g in required)
    if not density:
        violations.append("族 P が単位と生成元を張りません")

    reports = {}
    rows = []
    for (a, b), c in P.bracket_table.items():
        sa = Section(bundle, a)
        sb = Section(bundle, b)
        sc = Section(bundle, c)
        values = []
        residuals = []
        for point in base.points:
            scaled = 1j / base.limit_distance(point) * algebra.commutator(evaluate(sa, point), evaluate(sb, point))
            values.append(algebra.operator_norm(scaled))
            residuals.append(algebra.operator_norm(scaled - evaluate(sc, point)))
        report = convergence_report('post_quantization', base.points, values, residuals, config)
        reports[(str(a), str(b))] = report
        rows.append({'a': str(a), 'b': str(b), 'c': str(c), 'max_residual': max(residuals),
                     'slope': report.slope, 'exact': report.exact, 'passed': report.passed})
        if not report.passed:
            violations.extend(f"({a}, {b}): {v}" for v in report.violations)

    commutators_vanish = True
    for _ in range(pairs):
        a = Section(bundle, random_expression(bundle.letters, rng))
        b = Section(bundle, random_expression(bundle.letters, rng))
        try:
            vanishes = in_null_ideal(a * b - b * a)
        except (NotCauchyError, TooFewSamplesError) as e:
            vanishes = False
            violations.append(f"交換子の極限を推定できません: {e}")
        if not vanishes:
            commutators_vanish = False
            violations.append(f"交換子が極限で消えません: [{a.expr}, {b.expr}]")

    table = pd.DataFrame(rows, columns=['a', 'b', 'c', 'max_residual', 'slope', 'exact', 'passed'])
    return PostQuantizationReport(not violations, density, commutators_vanish, reports, table, violations)


@dataclass
class PoissonLawsReport:
    passed: bool
    antisymmetry: bool
    bilinearity: bool
    jacobi: bool
    leibniz: bool
    table: pd.DataFrame
    violations: list = field(default_factory=list)


def _holds_at_limit(lhs, rhs, tolerance):
    try:
        return quotient_equal(lhs, rhs, tolerance)
    except (NotCauchyError, TooFewSamplesError):
        return False


def check_poisson_laws(P, rng=None, trials=None, tolerance=None):
    """極限の括弧の反対称性・双線形性・ヤコビ恒等式・ライプニッツ則を剰余類の等号で確認

    ヤコビ恒等式で内側の括弧が表の張る空間の外に出る組は skipped として表に残す。
    ライプニッツ則は生成元の積を族に加えたポスト量子化で {a, bc} を求める。
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    trials = int(resolve(trials, 'bundle.generation_trials', 8))
    bundle = P.bundle
    members = sorted({a for a, _ in P.bracket_table}, key=str)
    zero = quotient_map(GeneratorExpression.zero(), bundle)
    rows = []
    violations = []

    def record(law, case, holds, skipped=False):
        rows.append({'law': law, 'case': case, 'holds': holds, 'skipped': skipped})
        if not holds and not skipped:
            violations.append(f"{law}: {case} が成り立ちません")

    def bracket(a, b):
        return poisson_bracket_at_limit(P, a, b)

    for a in members:
        for b in members:
            record('antisymmetry', f"{{{a}, {b}}}", _holds_at_limit(bracket(a, b), -bracket(b, a), tolerance))

    for _ in range(trials):
        weights = rng.normal(size=len(members))
        x = GeneratorExpression.zero()
        for w, m in zip(weights, members):
            x = x + complex(w) * m
        for b in members:
            expected_left = zero
            expected_right = zero
            for w, m in zip(weights, members):
                expected_left = expected_left + complex(w) * bracket(m, b)
                expected_right = expected_right + complex(w) * bracket(b, m)
            record('bilinearity', f"{{Σλm, {b}}}", _holds_at_limit(bracket(x, b), expected_left, tolerance))
            record('bilinearity', f"{{{b}, Σλm}}", _holds_at_limit(bracket(b, x), expected_right, tolerance))

    for i, a in enumerate(members):
        for j in range(i + 1, len(members)):
            for c in members[j + 1:]:
                b = members[j]
                case = f"({a}, {b}, {c})"
                try:
                    total = (bracket(a, P.bracket_table[(b, c)]) + bracket(b, P.bracket_table[(c, a)])
                             + bracket(c, P.bracket_table[(a, b)]))
                except MissingBracketError:
                    record('jacobi', case, False, skipped=True)
                    continue
                record('jacobi', case, _holds_at_limit(total, zero, tolerance))

    generators = list(bundle.generators)
    products = [b * c for b in generators for c in generators]
    with_products = make_post_quantization(bundle, members + products)
    for a in members:
        for b in generators:
            for c in generators:
                lhs = poisson_bracket_at_limit(with_products, a, b * c)
                rhs = (poisson_bracket_at_limit(with_products, a, b) * quotient_map(c, bundle)
                       + quotient_map(b, bundle) * poisson_bracket_at_limit(with_products, a, c))
                record('leibniz', f"{{{a}, {b}*{c}}}", _holds_at_limit(lhs, rhs, tolerance))

    table = pd.DataFrame(rows, columns=['law', 'case', 'holds', 'skipped'])
    checked = table[~table['skipped']]

    def law_passed(law):
        return bool(checked.loc[checked['law'] == law, 'holds'].all())

    return PoissonLawsReport(not violations, law_passed('antisymmetry'), law_passed('bilinearity'),
                             law_passed('jacobi'), law_passed('leibniz'), table, violations)


@dataclass
class SecondOrderReport:
    passed: bool
    constant: object
    table: pd.DataFrame
    snapping_error: float
    detail: str = ""


def is_second_order(alpha, config=None):
    """k(ħ) = |1/|ħ|_I - 1/|α(ħ)|_J| の極限 K を推定（末尾がコーシーなら合格）"""
    points = []
    values = []
    for p in alpha.source.points:
        image = alpha(p)
        if is_limit(image):
            raise PreconditionError(f"内部の点 {p} が極限点に写っています")
        points.append(p)
        values.append(abs(1 / alpha.source.limit_distance(p) - 1 / alpha.target.limit_distance(image)))
    series = pd.Series(values, index=pd.Index(points, name='hbar'), name='k')
    table = pd.DataFrame({'hbar': points, 'k': values})
    try:
        constant = estimate_limit(series, config, nonnegative=True)
    except NotCauchyError as e:
        return SecondOrderReport(False, None, table, alpha.max_snapping_error, f"二次ではありません: {e}")
    return SecondOrderReport(True, constant, table, alpha.max_snapping_error)


def is_smooth(sigma, P_source, P_target):
    """β[P_A] ⊆ span P_B"""
    for a in P_source.family:
        if span_coordinates(P_target.family, sigma.beta(a)) is None:
            return MapCheck(False, (a,), f"β({a}) が P_B の張る空間にありません")
    return MapCheck(True)


@dataclass
class PoissonFunctorialityReport:
    passed: bool
    constant: object
    table: pd.DataFrame
    violations: list = field(default_factory=list)


def check_poisson_functoriality(sigma, P_source, P_target, tolerance=None, config=None):
    """{σ₀(a), σ₀(b)} = σ₀({a, b}) を括弧表の全組で確認

    食い違いの上界 k(ħ)·‖φ_{α(ħ)}(β([a, b]))‖ の列と、その傾きも報告する。
    """
    if P_source.bundle.origin is not sigma.source or P_target.bundle.origin is not sigma.target:
        raise MorphismMismatchError("ポスト量子化のバンドルが射の始域・終域の拡張ではありません")
    smooth = is_smooth(sigma, P_source, P_target)
    if not smooth:
        raise PreconditionError(f"滑らかさの条件が成り立ちません: {smooth.detail}")
    order = is_second_order(sigma.alpha, config)
    if not order.passed:
        raise PreconditionError(f"α が二次ではありません: {order.detail}")

    config = config or TailConfig.from_settings()
    extended = extend_morphism(sigma)
    sigma0 = limit_morphism(extended)
    k = order.table.set_index('hbar')['k']
    points = list(sigma.source.base.points)
    rows = []
    violations = []
    for (a, b), c in P_source.bracket_table.items():
        lhs = poisson_bracket_at_limit(P_target, sigma.beta(a), sigma.beta(b))
        rhs = sigma0(quotient_map(c, extended.source))
        equal = quotient_equal(lhs, rhs, tolerance)
        commutator = Section(sigma.target, sigma.beta(a * b - b * a))
        bounds = [k[p] * algebra.operator_norm(evaluate(commutator, sigma.alpha(p))) for p in points]
        slope = fit_tail_slope(points, bounds, config.window)
        # 上界が 0 でなければ傾き slope_minimum 以上で 0 に向かうこと
        decays = bounds[-1] <= config.exact_tolerance or (slope is not None and slope >= config.slope_minimum)
        rows.append({'a': str(a), 'b': str(b), 'equal': equal, 'max_bound': max(bounds),
                     'last_bound': bounds[-1], 'slope': slope, 'decays': decays})
        if not equal:
            violations.append(f"({a}, {b}) でポアソン括弧が保たれません")
        if not decays:
            shown = "なし" if slope is None else f"{slope:.3g}"
            violations.append(f"({a}, {b}) の食い違いの上界が傾き {config.slope_minimum} 以上で減少しません（傾き {shown}）")
    table = pd.DataFrame(rows, columns=['a', 'b', 'equal', 'max_bound', 'last_bound', 'slope',
                                        'decays'])
    return PoissonFunctorialityReport(not violations, order.constant, table, violations)


@dataclass(frozen=True)
class PoissonLimit:
    """L_P の像: 極限ファイバーと剰余類上の括弧表"""
    fiber: object
    brackets: tuple

    def bracket(self, a, b):
        for (x, y), c in self.brackets:
            if x == a.expr and y == b.expr:
                return c
        raise MissingBracketError(f"括弧表にない組です: ({a.expr}, {b.expr})", [(str(a.expr), str(b.expr))])


def limit_poisson_object(P):
    """L_P（対象）"""
    brackets = tuple(((a, b), quotient_map(c, P.bundle)) for (a, b), c in P.bracket_table.items())
    return PoissonLimit(limit_fiber(P.bundle), brackets)


def poisson_limit_morphism(sigma, P_source, P_target):
    """L_P（射）: 滑らかさと二次性を確認してから古典極限をとる"""
    if not is_smooth(sigma, P_source, P_target):
        raise PreconditionError("滑らかさの条件が成り立ちません")
    if not is_second_order(sigma.alpha).passed:
        raise PreconditionError("α が二次ではありません")
    return classical_limit(sigma)
