# -*- coding: utf-8 -*-
"""
Labmate - 模型回應解析器

解析兩欄結構化回應：
    Obstruction: <Yes|No>; Interaction: <Yes|No>; Message: <自由文本到結尾>

嚴格模式只接受這一種文法；寬鬆模式（需明確開啟）在文法不符時
退而擷取前兩個獨立的 yes/no 字詞。任何輸入都只會得到結果或 ParseError。
"""

import logging
import re
from dataclasses import dataclass
from typing import Union

from core.errors import ParseError
from core.rules import JudgmentSource, SceneJudgment

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VlmResponse:
    """解析後的模型回應；raw 重新解析會得到相同的三個欄位"""
    obstruction: bool
    interaction: bool
    message: str
    raw: str

    def to_judgment(self, source: JudgmentSource = JudgmentSource.LIVE) -> SceneJudgment:
        return SceneJudgment(
            obstruction=self.obstruction,
            interaction=self.interaction,
            message=self.message,
            source=source,
        )


def _yes_no(value: bool) -> str:
    return "Yes" if value else "No"


def format_response(obstruction: bool, interaction: bool, message: str = "") -> str:
    """產生標準格式的回應字串（mock 後端與測試共用）"""
    return (
        f"Obstruction: {_yes_no(obstruction)}; Interaction: {_yes_no(interaction)}; "
        f"Message: {message}"
    ).rstrip()


class ResponseParser:
    """
    結構化回應解析器

    逐段比對文法，失敗時 ParseError.offset 指向第一個不符合的位置
    （相對於去除 <think> 區塊與前後空白後的文本）。
    """

    _THINK = re.compile(r'<think>.*?</think>', re.DOTALL | re.IGNORECASE)
    _OBSTRUCTION = re.compile(r'obstruction\s*:\s*', re.IGNORECASE)
    _INTERACTION = re.compile(r'interaction\s*:\s*', re.IGNORECASE)
    _YES_NO = re.compile(r'(yes|no)\b', re.IGNORECASE)
    _SEPARATOR = re.compile(r'\s*;\s*')
    _MESSAGE = re.compile(r'\s*;\s*message\s*:', re.IGNORECASE)
    _TRAILER = re.compile(r'[\s;.]*\Z')
    _TOKEN = re.compile(r'\b(yes|no)\b', re.IGNORECASE)

    def __init__(self, lenient: bool = False):
        self.lenient = lenient

    def clean_think_tag(self, text: str) -> str:
        """移除推理模型輸出的 <think>...</think> 區塊"""
        if not text:
            return ""
        return self._THINK.sub('', text).strip()

    def parse(self, raw: Union[str, bytes]) -> VlmResponse:
        """
        解析模型回應

        Args:
            raw: 模型文本；bytes 以 UTF-8 解碼（無效位元組以替代字元取代）

        Returns:
            VlmResponse

        Raises:
            ParseError: 文本不符合文法（寬鬆模式下也找不到兩個 yes/no）
        """
        if isinstance(raw, (bytes, bytearray)):
            raw = bytes(raw).decode('utf-8', errors='replace')
        if not isinstance(raw, str):
            raise ParseError(0, f"expected text, got {type(raw).__name__}")

        text = self.clean_think_tag(raw)
        try:
            return self._parse_strict(text, raw)
        except ParseError as e:
            if not self.lenient:
                raise ParseError(e.offset, e.reason, raw) from None
            return self._parse_lenient(text, raw)

    def _expect(self, pattern: re.Pattern, text: str, pos: int, what: str) -> re.Match:
        match = pattern.match(text, pos)
        if match is None:
            raise ParseError(pos, f"expected {what}", text)
        return match

    def _parse_strict(self, text: str, raw: str) -> VlmResponse:
        pos = self._expect(self._OBSTRUCTION, text, 0, "'Obstruction:'").end()
        m = self._expect(self._YES_NO, text, pos, "Yes or No after 'Obstruction:'")
        obstruction = m.group(1).lower() == 'yes'
        pos = self._expect(self._SEPARATOR, text, m.end(), "';'").end()
        pos = self._expect(self._INTERACTION, text, pos, "'Interaction:'").end()
        m = self._expect(self._YES_NO, text, pos, "Yes or No after 'Interaction:'")
        interaction = m.group(1).lower() == 'yes'
        pos = m.end()

        # Message 欄位可省略
        if self._TRAILER.match(text, pos):
            message = ""
        else:
            pos = self._expect(self._MESSAGE, text, pos, "'; Message:' or end of text").end()
            message = text[pos:].strip()

        return VlmResponse(obstruction, interaction, message, raw)

    def _parse_lenient(self, text: str, raw: str) -> VlmResponse:
        tokens = self._TOKEN.findall(text)
        if len(tokens) < 2:
            raise ParseError(len(text), "lenient scan found fewer than two yes/no tokens", raw)
        logger.warning(f"回應不符合格式，寬鬆解析: {text[:60]!r}")
        return VlmResponse(tokens[0].lower() == 'yes', tokens[1].lower() == 'yes', "", raw)


_STRICT = ResponseParser()
_LENIENT = ResponseParser(lenient=True)


def parse_response(raw: Union[str, bytes], lenient: bool = False) -> VlmResponse:
    """便捷函數：解析模型回應"""
    return (_LENIENT if lenient else _STRICT).parse(raw)
