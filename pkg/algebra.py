#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
有限次元 C*-代数の基本演算

ファイバー要素は正方複素行列（読み取り専用の numpy 配列）で表す。
随伴・作用素ノルム・交換子・ユニタリ一径数群を提供する。
"""

import numpy as np
import scipy.linalg as la

from errors import DimensionMismatchError, InvalidParameterError, NotSelfAdjointError
from settings import resolve


def as_fiber_element(entries):
    """配列を検証して読み取り専用の複素正方行列に変換"""
    matrix = np.array(entries, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(f"正方行列ではありません: shape={matrix.shape}")
    if matrix.shape[0] == 0:
        raise InvalidParameterError("空の行列はファイバー要素になりません")
    if not np.all(np.isfinite(matrix)):
        raise InvalidParameterError("行列に NaN または Inf が含まれています")
    matrix.setflags(write=False)
    return matrix


def identity(dim):
    return as_fiber_element(np.eye(dim, dtype=complex))


def zero(dim):
    return as_fiber_element(np.zeros((dim, dim), dtype=complex))


def adjoint(A):
    """共役転置"""
    return as_fiber_element(np.conj(np.asarray(A)).T)


def operator_norm(A):
    """スペクトルノルム（最大特異値）"""
    matrix = np.asarray(A)
    if matrix.size == 0:
        raise InvalidParameterError("空の行列のノルムは定義されません")
    if not np.all(np.isfinite(matrix)):
        raise InvalidParameterError("行列に NaN または Inf が含まれています")
    return float(np.linalg.norm(matrix, 2))


def _check_pair(A, B):
    if np.shape(A) != np.shape(B):
        raise DimensionMismatchError(f"次元が一致しません: {np.shape(A)} と {np.shape(B)}")


def commutator(A, B):
    """[A, B] = AB - BA"""
    _check_pair(A, B)
    A = np.asarray(A)
    B = np.asarray(B)
    return as_fiber_element(A @ B - B @ A)


def scaled_bracket(A, B, hbar):
    """(i/ħ)[A, B]"""
    if not hbar > 0:
        raise InvalidParameterError(f"ħ は正である必要があります: {hbar}")
    return as_fiber_element(1j / hbar * commutator(A, B))


def is_self_adjoint(A, tolerance=None):
    """最大成分ノルムで A - A* を評価"""
    tolerance = resolve(tolerance, 'algebra.self_adjoint_tolerance', 1e-10)
    matrix = np.asarray(A)
    return bool(np.max(np.abs(matrix - np.conj(matrix).T)) <= tolerance)


def is_unitary(U, tolerance=None):
    tolerance = resolve(tolerance, 'algebra.unitary_tolerance', 1e-9)
    matrix = np.asarray(U)
    residual = np.conj(matrix).T @ matrix - np.eye(matrix.shape[0])
    return operator_norm(residual) <= tolerance


def unitary_flow(H, t, hbar):
    """U = exp(itH/ħ) をスペクトル分解で計算

    H = V diag(λ) V* から U = V diag(exp(itλ/ħ)) V*。
    """
    if not hbar > 0:
        raise InvalidParameterError(f"ħ は正である必要があります: {hbar}")
    if not is_self_adjoint(H):
        raise NotSelfAdjointError("ハミルトニアンが自己共役ではありません")
    matrix = np.asarray(H)
    # 数値的な非エルミート成分を除いてから対角化
    hermitian = (matrix + np.conj(matrix).T) / 2
    eigenvalues, vectors = la.eigh(hermitian)
    phases = np.exp(1j * t * eigenvalues / hbar)
    return as_fiber_element((vectors * phases) @ np.conj(vectors).T)


def conjugate_by(U, A):
    """U A U*"""
    _check_pair(U, A)
    U = np.asarray(U)
    return as_fiber_element(U @ np.asarray(A) @ np.conj(U).T)
