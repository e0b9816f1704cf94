#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""algebra のテスト"""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import settings as hsettings
from hypothesis import strategies as st

import algebra
from errors import DimensionMismatchError, InvalidParameterError, NotSelfAdjointError

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)
dims = st.integers(min_value=1, max_value=16)


def random_matrix(seed, dim):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))


def random_hermitian(seed, dim):
    A = random_matrix(seed, dim)
    return (A + np.conj(A).T) / 2


@hsettings(max_examples=1000, deadline=None)
@given(seeds, dims)
def test_c_star_identity(seed, dim):
    A = random_matrix(seed, dim)
    norm = algebra.operator_norm(A)
    assert algebra.operator_norm(algebra.adjoint(A) @ A) == pytest.approx(norm ** 2, rel=1e-10)


@hsettings(max_examples=1000, deadline=None)
@given(seeds, dims)
def test_submultiplicative(seed, dim):
    A = random_matrix(seed, dim)
    B = random_matrix(seed + 1, dim)
    assert algebra.operator_norm(A @ B) <= algebra.operator_norm(A) * algebra.operator_norm(B) + 1e-10


@hsettings(max_examples=1000, deadline=None)
@given(seeds, dims)
def test_triangle_inequality(seed, dim):
    A = random_matrix(seed, dim)
    B = random_matrix(seed + 1, dim)
    assert algebra.operator_norm(A + B) <= algebra.operator_norm(A) + algebra.operator_norm(B) + 1e-10


@hsettings(max_examples=1000, deadline=None)
@given(seeds, dims, st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_norm_is_homogeneous(seed, dim, scale):
    A = random_matrix(seed, dim)
    expected = abs(scale) * algebra.operator_norm(A)
    assert algebra.operator_norm(scale * A) == pytest.approx(expected, rel=1e-10, abs=1e-12)


@hsettings(max_examples=1000, deadline=None)
@given(seeds, dims)
def test_adjoint_is_involutive_and_isometric(seed, dim):
    A = random_matrix(seed, dim)
    assert np.array_equal(algebra.adjoint(algebra.adjoint(A)), A)
    assert algebra.operator_norm(algebra.adjoint(A)) == pytest.approx(algebra.operator_norm(A), rel=1e-10)


@pytest.mark.parametrize("entries, expected", [
    (np.eye(2), np.eye(2)),
    ([[0, 1], [0, 0]], [[0, 0], [1, 0]]),
    ([[0, 1j], [0, 0]], [[0, 0], [-1j, 0]]),
])
def test_adjoint_examples(entries, expected):
    assert np.array_equal(algebra.adjoint(np.array(entries, dtype=complex)), np.array(expected, dtype=complex))


@pytest.mark.parametrize("entries, expected", [
    (np.eye(3), 1.0),
    ([[0, 2], [0, 0]], 2.0),
    ([[0.5, 0], [0, -0.5]], 0.5),
])
def test_operator_norm_examples(entries, expected):
    assert algebra.operator_norm(np.array(entries, dtype=complex)) == pytest.approx(expected, abs=1e-12)


@hsettings(max_examples=30, deadline=None)
@given(seeds, dims, st.floats(-2, 2), st.floats(-2, 2))
def test_unitary_flow_group_law(seed, dim, s, t):
    H = random_hermitian(seed, dim)
    hbar = 0.3
    U_s = algebra.unitary_flow(H, s, hbar)
    U_t = algebra.unitary_flow(H, t, hbar)
    assert algebra.is_unitary(U_t)
    assert np.allclose(algebra.unitary_flow(H, s + t, hbar), U_s @ U_t, atol=1e-9)


def test_unitary_flow_at_zero_is_identity():
    H = random_hermitian(3, 4)
    assert np.allclose(algebra.unitary_flow(H, 0.0, 0.5), np.eye(4))


def test_conjugate_by_preserves_products():
    H = random_hermitian(1, 3)
    A = random_matrix(2, 3)
    B = random_matrix(3, 3)
    U = algebra.unitary_flow(H, 0.7, 0.2)
    lhs = algebra.conjugate_by(U, A @ B)
    rhs = algebra.conjugate_by(U, A) @ algebra.conjugate_by(U, B)
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_scaled_bracket_of_spin_like_pair():
    A = np.array([[0, 1], [1, 0]]) / 2
    B = np.array([[0, -1j], [1j, 0]]) / 2
    C = np.array([[1, 0], [0, -1]]) / 2
    assert np.allclose(algebra.scaled_bracket(A, B, 1.0), -C)


def test_fiber_element_is_read_only():
    A = algebra.as_fiber_element([[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        A[0, 0] = 5


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        algebra.commutator(np.eye(2), np.eye(3))
    with pytest.raises(DimensionMismatchError):
        algebra.as_fiber_element(np.ones((2, 3)))


def test_invalid_entries():
    with pytest.raises(InvalidParameterError):
        algebra.operator_norm(np.array([[np.nan]]))
    with pytest.raises(InvalidParameterError):
        algebra.scaled_bracket(np.eye(2), np.eye(2), 0.0)


def test_unitary_flow_requires_self_adjoint():
    with pytest.raises(NotSelfAdjointError):
        algebra.unitary_flow(np.array([[0, 1], [0, 0]]), 1.0, 1.0)
    # ValueError としても捕まえられる
    with pytest.raises(ValueError):
        algebra.unitary_flow(np.array([[0, 1], [0, 0]]), 1.0, 1.0)
