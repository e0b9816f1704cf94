#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""設定ファイル管理のテスト"""

import copy
import json

import pytest

import settings as settings_module
from settings import get_setting, load_settings, resolve, save_settings, update_setting, validate_settings


@pytest.fixture
def isolated_settings(monkeypatch):
    """テスト中の変更がグローバル設定に残らないようにする"""
    monkeypatch.setattr(settings_module, 'settings', copy.deepcopy(settings_module.settings))
    return settings_module


def test_get_setting_dot_path():
    assert get_setting('limit.tail_window') == 4
    assert get_setting('functors.battery_word_length') == 2


def test_missing_key_returns_default(capsys):
    assert get_setting('limit.no_such_key', 7) == 7
    assert "[WARNING]" in capsys.readouterr().err


def test_resolve_prefers_explicit_value():
    assert resolve(0.5, 'limit.slope_minimum', 1.0) == 0.5
    assert resolve(None, 'limit.slope_minimum', 1.0) == 0.9
    assert resolve(None, 'limit.no_such_key', 1.0) == 1.0


def test_update_setting(isolated_settings):
    assert update_setting('limit.tail_window', 6)
    assert get_setting('limit.tail_window') == 6
    assert update_setting('experimental.new.key', "on")
    assert get_setting('experimental.new.key') == "on"


def test_shipped_settings_are_valid():
    assert validate_settings(settings_module.settings) == []


def test_validate_settings_reports_errors():
    broken = copy.deepcopy(settings_module.settings)
    broken['limit']['null_tolerance'] = 0
    broken['bundle']['contraction'] = 1.5
    broken['quantization']['sphere_quadrature_nodes'] = 40
    del broken['functors']['isometry_tolerance']
    errors = validate_settings(broken)
    assert any('limit.null_tolerance' in e for e in errors)
    assert any('bundle.contraction' in e for e in errors)
    assert any('sphere_quadrature_nodes' in e for e in errors)
    assert any('functors.isometry_tolerance' in e for e in errors)


def test_load_settings_from_file(tmp_path, isolated_settings):
    path = tmp_path / "setting.json"
    path.write_text(json.dumps({'limit': {'tail_window': 3}}), encoding='utf-8')
    assert load_settings(str(path), verbose=False)
    assert get_setting('limit.tail_window') == 3


def test_load_settings_missing_file(tmp_path, isolated_settings, capsys):
    assert not load_settings(str(tmp_path / "missing.json"))
    assert "[ERROR]" in capsys.readouterr().err
    assert get_setting('limit.tail_window', 5) == 5


def test_save_and_reload(tmp_path, isolated_settings):
    path = str(tmp_path / "saved.json")
    update_setting('limit.tail_window', 5)
    assert save_settings(path)
    update_setting('limit.tail_window', 9)
    assert load_settings(path, verbose=False)
    assert get_setting('limit.tail_window') == 5
