#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
テスト共通の設定とフィクスチャ
"""

import os
import sys

import pytest

# リポジトリ直下のモジュールを import できるようにする
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from bundle import make_bundle  # noqa: E402
from limit import extend_bundle  # noqa: E402
from quantization import fuzzy_sphere_scheme, nc_torus_scheme  # noqa: E402
from settings import load_settings  # noqa: E402


@pytest.fixture(scope='session', autouse=True)
def loaded_settings():
    load_settings(verbose=False)


@pytest.fixture(scope='session')
def sphere():
    return fuzzy_sphere_scheme([0.5, 1, 1.5, 2, 2.5, 3, 4, 5])


@pytest.fixture(scope='session')
def small_sphere():
    return fuzzy_sphere_scheme([0.5, 1, 1.5, 2])


@pytest.fixture(scope='session')
def torus():
    return nc_torus_scheme([4, 8, 16, 32])


@pytest.fixture(scope='session')
def sphere_bundle(sphere):
    return make_bundle(sphere)


@pytest.fixture(scope='session')
def torus_bundle(torus):
    return make_bundle(torus)


@pytest.fixture(scope='session')
def sphere_extended(sphere_bundle):
    return extend_bundle(sphere_bundle)


@pytest.fixture(scope='session')
def torus_extended(torus_bundle):
    return extend_bundle(torus_bundle)
