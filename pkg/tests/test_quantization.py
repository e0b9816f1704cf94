#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""quantization のテスト"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import settings as hsettings
from hypothesis import strategies as st

import algebra
from bundle import GeneratorExpression
from errors import FlowUnavailableError, InvalidParameterError, MissingBracketError, UnknownLabelError
from quantization import (check_deformation, check_dirac, check_equivalence, check_rieffel, check_von_neumann,
                          clock_shift, fuzzy_sphere_scheme, make_scheme, nc_torus_scheme, quantize,
                          spin_matrices, weyl_operator)


# ========================================
# ファジー球面
# ========================================

def test_spin_commutation_relations():
    for two_j in (1, 2, 3, 6):
        S1, S2, S3 = spin_matrices(two_j)
        assert np.allclose(algebra.commutator(S1, S2), 1j * S3)
        assert np.allclose(algebra.commutator(S2, S3), 1j * S1)
        j = two_j / 2
        assert np.allclose(S1 @ S1 + S2 @ S2 + S3 @ S3, j * (j + 1) * np.eye(two_j + 1))


def test_spin_half_anchors(small_sphere):
    h = small_sphere.hbars[0]
    assert h == pytest.approx(1 / math.sqrt(0.75))
    assert np.allclose(quantize(small_sphere, "x3", h), np.diag([1, -1]) / math.sqrt(3))
    assert np.allclose(quantize(small_sphere, "x3^2", h), np.eye(2) / 3)


def test_casimir_is_identity(sphere):
    for h in sphere.hbars:
        Q = quantize(sphere, "x1^2 + x2^2 + x3^2", h)
        assert np.allclose(Q, np.eye(Q.shape[0]))
        assert np.allclose(quantize(sphere, "1", h), np.eye(Q.shape[0]))


def test_norm_of_quantized_x3(sphere):
    for j, h in zip(sphere.j_values, sphere.hbars):
        assert algebra.operator_norm(quantize(sphere, "x3", h)) == pytest.approx(math.sqrt(j / (j + 1)))


def test_norm_of_quantized_x3_up_to_spin_forty():
    scheme = fuzzy_sphere_scheme([k / 2 for k in range(1, 81)])
    assert scheme.j_values[-1] == 40
    for j, h in zip(scheme.j_values, scheme.hbars):
        norm = algebra.operator_norm(quantize(scheme, "x3", h))
        assert norm == pytest.approx(math.sqrt(j / (j + 1)), abs=1e-10)


def test_inverse_j_rule():
    scheme = fuzzy_sphere_scheme([1, 2, 4], hbar_rule='inverse_j')
    assert scheme.hbars == pytest.approx((1.0, 0.5, 0.25))


def test_sphere_poisson_bracket(sphere):
    x1, x2, x3 = (GeneratorExpression.generator(label) for label in ('x1', 'x2', 'x3'))
    assert sphere.poisson_bracket(x1, x2) == -x3
    assert sphere.poisson_bracket(x2, x1) == x3
    assert sphere.poisson_bracket(x1, x1).is_zero


def test_missing_bracket_entry():
    scheme = fuzzy_sphere_scheme([0.5, 1], bracket_table={('x1', 'x2'): GeneratorExpression.parse("-x3")})
    with pytest.raises(MissingBracketError) as info:
        scheme.poisson_bracket(GeneratorExpression.parse("x2"), GeneratorExpression.parse("x3"))
    assert ('x2', 'x3') in info.value.missing


def test_dirac_is_exact_on_linear_generators(sphere):
    report = check_dirac(sphere, "x1", "x2")
    assert report.passed
    assert report.exact
    assert report.table['residual'].max() <= 1e-12
    assert list(report.table.columns) == ['hbar', 'value', 'residual', 'slope_estimate']


def test_dirac_with_inverse_j_rule_converges():
    scheme = fuzzy_sphere_scheme([1, 2, 4, 8, 16], hbar_rule='inverse_j')
    report = check_dirac(scheme, "x1", "x2")
    assert not report.exact
    assert report.passed, report.violations


def test_von_neumann_slope_two(sphere):
    report = check_von_neumann(sphere, "x3", "x3")
    assert report.passed, report.violations
    assert report.slope == pytest.approx(2.0, abs=0.3)
    assert report.residual_limit.value == pytest.approx(0.0, abs=1e-2)


def test_von_neumann_slope_on_large_spins():
    scheme = fuzzy_sphere_scheme([5, 10, 20, 40])
    report = check_von_neumann(scheme, "x3", "x3")
    assert report.passed, report.violations
    assert not report.exact
    assert report.slope >= 1.5


def test_rieffel(sphere):
    report = check_rieffel(sphere, "x3")
    assert report.passed, report.violations
    assert report.symbol_sup == pytest.approx(1.0)
    assert report.limit.value == pytest.approx(1.0, abs=0.05)


def test_deformation(sphere, capsys):
    report = check_deformation(sphere, rng=np.random.default_rng(0))
    assert report.passed, report.violations
    # j = 1/2 では次数 2 以上が切り捨て
    assert report.truncated[sphere.hbars[0]]
    assert "[WARNING]" in capsys.readouterr().err


def test_equivalence_of_orderings(sphere):
    symmetric = fuzzy_sphere_scheme(sphere.j_values, ordering='symmetric')
    assert check_equivalence(sphere, symmetric, "x3^2").passed
    linear = check_equivalence(sphere, symmetric, "x1 + 2*x2")
    assert linear.exact
    assert check_equivalence(sphere, sphere, "x1*x2*x3").table['residual'].max() == 0.0


def test_equivalence_needs_same_fibers(sphere, torus):
    with pytest.raises(InvalidParameterError):
        check_equivalence(sphere, fuzzy_sphere_scheme([1, 2]), "x1")
    with pytest.raises(InvalidParameterError):
        check_equivalence(sphere, torus, "x1")


def test_classical_flow_rotates_about_x3(sphere):
    h = GeneratorExpression.parse("x3")
    for t in (0.1, 0.5, 1.0):
        image = sphere.classical_flow(h, t, points=[[1.0, 0.0, 0.0]])
        assert image[0] == pytest.approx([math.cos(t), math.sin(t), 0.0], abs=1e-9)


@pytest.mark.parametrize("j_values", [[0.3, 1], [1, 0.5], []])
def test_invalid_sphere_sizes(j_values):
    with pytest.raises(InvalidParameterError):
        fuzzy_sphere_scheme(j_values)


def test_unknown_label(sphere):
    with pytest.raises(UnknownLabelError):
        quantize(sphere, "u", sphere.hbars[0])


def test_make_scheme():
    assert make_scheme('nc_torus', [4, 8]).hbars == pytest.approx((0.25, 0.125))
    assert make_scheme('fuzzy_sphere', [0.5, 1], ordering='symmetric').ordering == 'symmetric'
    with pytest.raises(InvalidParameterError):
        make_scheme('klein_bottle', [1])


# ========================================
# 非可換トーラス
# ========================================

@pytest.mark.parametrize("N", [2, 3, 5, 8])
def test_clock_shift_relation(N):
    U, V = clock_shift(N)
    omega = np.exp(2j * np.pi / N)
    assert np.allclose(U @ V, omega * V @ U)
    assert algebra.is_unitary(U) and algebra.is_unitary(V)


@hsettings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(-3, 3), st.integers(-3, 3), st.integers(-3, 3), st.integers(-3, 3))
def test_weyl_product_rule(N, m1, m2, n1, n2):
    wedge = m1 * n2 - m2 * n1
    lhs = weyl_operator(N, (m1, m2)) @ weyl_operator(N, (n1, n2))
    rhs = np.exp(1j * np.pi * wedge / N) * weyl_operator(N, (m1 + n1, m2 + n2))
    assert np.allclose(lhs, rhs)


def test_torus_dirac_residual_matches_sine_formula():
    scheme = nc_torus_scheme([4, 8, 10, 16, 32])
    report = check_dirac(scheme, "u", "v")
    expected = [abs(2 * math.pi - 2 * N * math.sin(math.pi / N)) for N in scheme.N_values]
    assert report.table['residual'].to_numpy() == pytest.approx(expected, rel=1e-9)
    assert report.table['residual'].iloc[2] == pytest.approx(0.10285, abs=1e-5)
    assert report.slope == pytest.approx(2.0, abs=0.05)
    assert report.passed


def test_torus_dirac_slope_up_to_sixty_four():
    scheme = nc_torus_scheme([8, 16, 32, 64])
    report = check_dirac(scheme, "u", "v")
    assert report.passed, report.violations
    assert report.slope >= 1.9
    assert check_dirac(nc_torus_scheme([10]), "u", "v").table['residual'].iloc[0] == pytest.approx(0.10285, abs=1e-5)


def test_torus_von_neumann_residual(torus):
    report = check_von_neumann(torus, "u", "v")
    expected = [2 * math.sin(math.pi / (2 * N)) for N in torus.N_values]
    assert report.table['residual'].to_numpy() == pytest.approx(expected, rel=1e-9)
    assert report.passed


def test_torus_poisson_bracket(torus):
    u = GeneratorExpression.generator('u')
    v = GeneratorExpression.generator('v')
    assert torus.poisson_bracket(u, v) == -2 * math.pi * (u * v)
    assert torus.poisson_bracket(u, u.adjoint()).is_zero


def test_torus_rieffel_and_deformation(torus):
    assert check_rieffel(torus, "u*v").passed
    report = check_deformation(torus, rng=np.random.default_rng(0))
    assert report.passed, report.violations
    assert report.truncated


def test_torus_has_no_classical_flow(torus):
    with pytest.raises(FlowUnavailableError):
        torus.classical_flow(GeneratorExpression.parse("u + u'"), 1.0)
