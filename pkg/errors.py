#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
例外クラス定義

ライブラリ内の前提条件違反はすべて QuantLimitError の派生クラスで送出する。
チェック関数は性質の不成立では例外を出さず、レポートの passed フラグで返す。
"""


class QuantLimitError(Exception):
    """ライブラリ全体の基底例外"""


class InvalidParameterError(QuantLimitError, ValueError):
    """引数の値が不正"""


class DimensionMismatchError(InvalidParameterError):
    """行列の次元が一致しない"""


class NotSelfAdjointError(InvalidParameterError):
    """自己共役であるべき行列が自己共役でない"""


class GridError(InvalidParameterError):
    """サンプル格子の構成が不正"""


class LimitPointError(QuantLimitError):
    """極限点 0_I の有無が前提と合わない"""


class UnsampledPointError(QuantLimitError, KeyError):
    """サンプルされていない点での評価"""

    def __str__(self):
        # KeyError は repr で包むので素のメッセージに戻す
        return str(self.args[0]) if self.args else ""


class UnknownLabelError(QuantLimitError, KeyError):
    """量子化スキームに登録されていない生成元ラベル"""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class MissingBracketError(QuantLimitError):
    """括弧テーブルにない組"""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = tuple(missing)


class TooFewSamplesError(QuantLimitError):
    """推定に必要なサンプル数が足りない"""


class NotCauchyError(QuantLimitError):
    """数列の末尾がコーシー判定を通らない"""

    def __init__(self, message, differences=()):
        super().__init__(message)
        self.differences = tuple(differences)


class NonMetricMapError(QuantLimitError):
    """基底写像が距離を増やす"""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NotProperError(QuantLimitError):
    """基底写像が固有写像でない"""


class NotEmbeddingError(QuantLimitError):
    """稠密等長埋め込みでない"""


class NotExtendedError(QuantLimitError):
    """拡張済みバンドルが必要な操作に未拡張のものを渡した"""


class CompatibilityError(QuantLimitError):
    """バンドル射の両立条件違反（witness に反例の組を保持）"""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class MorphismMismatchError(QuantLimitError):
    """合成できない射の組"""


class FlowUnavailableError(QuantLimitError):
    """古典ハミルトン流が用意されていないスキーム"""


class PreconditionError(QuantLimitError):
    """滑らかさ・二次条件などの前提が成り立たない"""


class ConfigError(QuantLimitError):
    """実験設定ファイルのエラー（CLI の終了コード 2）"""

    def __init__(self, message, errors=()):
        super().__init__(message)
        self.errors = list(errors)


class SymbolUnavailableError(QuantLimitError):
    """古典シンボルの規則を持たないスキーム"""
