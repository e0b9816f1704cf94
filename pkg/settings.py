#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
設定ファイル管理

setting.json をモジュール変数 settings に読み込み、ドット記法のキーで参照する。
ライブラリ関数の許容誤差などの既定値はすべてここを経由して取得する。
"""

import json
import os
import sys

# 設定ファイルのグローバル変数
settings = None

SETTINGS_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "setting.json")

# ========================================
# 設定ファイル管理機能
# ========================================

def load_settings(settings_file=None, verbose=True):
    """setting.jsonから設定を読み込む"""
    global settings

    settings_file = settings_file or SETTINGS_FILE

    try:
        if os.path.exists(settings_file):
            with open(settings_file, 'r', encoding='utf-8') as f:
                settings = json.load(f)
            if verbose:
                print(f"[SETTINGS] 設定ファイルを読み込みました: {settings_file}", file=sys.stderr)
        else:
            print(f"[ERROR] 設定ファイルが見つかりません: {settings_file}", file=sys.stderr)
            settings = {}
            return False
    except (OSError, json.JSONDecodeError) as e:
        print(f"[ERROR] 設定ファイルの読み込みに失敗しました: {e}", file=sys.stderr)
        settings = {}
        return False

    return True


def save_settings(settings_file=None):
    """現在の設定をsetting.jsonに保存"""
    settings_file = settings_file or SETTINGS_FILE

    try:
        with open(settings_file, 'w', encoding='utf-8') as f:
            json.dump(settings, f, indent=2, ensure_ascii=False)
        print(f"[SETTINGS] 設定ファイルを保存しました: {settings_file}", file=sys.stderr)
        return True
    except OSError as e:
        print(f"[ERROR] 設定ファイルの保存に失敗しました: {e}", file=sys.stderr)
        return False


def get_setting(key_path, default_value=None):
    """設定値を取得（ドット記法対応）

    初回呼び出し時に setting.json を黙って読み込む。
    キーが無ければ [WARNING] を出して default_value を返す。
    """
    if settings is None:
        load_settings(verbose=False)

    try:
        value = settings
        for key in key_path.split('.'):
            value = value[key]
        return value
    except (KeyError, TypeError):
        if settings:
            print(f"[WARNING] 設定キー '{key_path}' が見つかりません。デフォルト値を使用: {default_value}",
                  file=sys.stderr)
        return default_value


def update_setting(key_path, new_value):
    """設定値を更新"""
    if settings is None:
        load_settings(verbose=False)

    try:
        keys = key_path.split('.')
        current = settings
        for key in keys[:-1]:
            current = current.setdefault(key, {})
        current[keys[-1]] = new_value
        return True
    except (AttributeError, TypeError):
        print(f"[ERROR] 設定キー '{key_path}' の更新に失敗しました", file=sys.stderr)
        return False


def resolve(value, key_path, default_value):
    """引数が None なら設定値、なければ既定値"""
    if value is not None:
        return value
    return get_setting(key_path, default_value)


def validate_settings(settings_dict):
    """設定値のバリデーション（エラーメッセージのリストを返す）"""
    errors = []

    # 正の数であるべき値
    positive_checks = [
        'algebra.self_adjoint_tolerance',
        'algebra.unitary_tolerance',
        'bundle.uniform_continuity_tolerance',
        'limit.null_tolerance',
        'limit.equality_tolerance',
        'limit.uniqueness_tolerance',
        'limit.slope_minimum',
        'functors.compatibility_tolerance',
        'functors.isometry_tolerance',
    ]
    for key_path in positive_checks:
        value = _lookup(settings_dict, key_path)
        if value is None:
            errors.append(f"{key_path}が見つかりません")
        elif not isinstance(value, (int, float)) or value <= 0:
            errors.append(f"{key_path}は正の数である必要があります")

    # 範囲チェック
    range_checks = [
        ('bundle.contraction', 0, 1),
        ('bundle.max_word_length', 1, 8),
        ('limit.tail_window', 2, 16),
        ('limit.minimum_samples', 3, 64),
        ('quantization.sphere_quadrature_nodes', 3, 401),
        ('quantization.torus_grid_size', 4, 1024),
    ]
    for key_path, min_val, max_val in range_checks:
        value = _lookup(settings_dict, key_path)
        if value is None:
            errors.append(f"{key_path}が見つかりません")
        elif not (min_val <= value <= max_val):
            errors.append(f"{key_path}の値が範囲外です ({min_val}-{max_val})")

    nodes = _lookup(settings_dict, 'quantization.sphere_quadrature_nodes')
    if isinstance(nodes, int) and nodes % 2 == 0:
        errors.append("quantization.sphere_quadrature_nodesは奇数である必要があります")

    return errors


def _lookup(settings_dict, key_path):
    value = settings_dict
    try:
        for key in key_path.split('.'):
            value = value[key]
        return value
    except (KeyError, TypeError):
        return None
