# -*- coding: utf-8 -*-
"""
Labmate - 例外類別

所有領域錯誤都繼承 LabmateError，CLI 以此區分「領域錯誤」(exit 1) 與其他錯誤。
"""

from typing import Optional


class LabmateError(Exception):
    """所有領域錯誤的基底類別"""


class ConfigError(LabmateError):
    """配置文件或參數無效"""


# ---------------------------------------------------------------- 感知

class SchemaError(LabmateError, ValueError):
    """場景記錄不符合 JSONL 結構"""

    def __init__(self, field: str, reason: str = "invalid"):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class NonFiniteValue(LabmateError, ValueError):
    """出現 NaN 或 Inf"""


class DegenerateDepth(LabmateError, ValueError):
    """深度缺失、非正數或非有限值"""


class EmptyScene(LabmateError):
    """場景中沒有任何物件"""


# ---------------------------------------------------------------- 規則

class NoGoal(LabmateError):
    """沒有目標點，且未設定備用的人機距離閾值"""


class InconsistentLabels(LabmateError):
    """(obstruction=False, interaction=True) 這個不可能的組合"""


# ---------------------------------------------------------------- 推理

class ParseError(LabmateError):
    """模型回應不符合結構化格式"""

    def __init__(self, offset: int, reason: str, raw: str = ""):
        self.offset = offset
        self.reason = reason
        self.raw = raw
        super().__init__(f"offset {offset}: {reason}")


class BackendError(LabmateError):
    """後端調用失敗"""


class TransportError(BackendError):
    """重試後仍無法完成 HTTP 請求"""


class BackendTimeoutError(BackendError, TimeoutError):
    """重試後最後一次失敗為超時"""


# ---------------------------------------------------------------- 決策

class UndefinedTransition(LabmateError):
    """狀態轉移表中沒有定義的 (state, event) 組合"""

    def __init__(self, state, event):
        self.state = state
        self.event = event
        super().__init__(f"undefined transition: {state} + {event}")


class NoMessageNeeded(LabmateError):
    """路徑暢通時不需要對人說話"""


# ---------------------------------------------------------------- 模擬

class InfeasiblePlacement(LabmateError):
    """在房間範圍與閾值限制下無法擺放出要求的類別"""


class DatasetIOError(LabmateError, OSError):
    """資料集無法寫入或讀取"""


class EpisodeError(LabmateError):
    """回合模擬中途失敗（附帶模擬時間）"""

    def __init__(self, tick: int, cause: Optional[BaseException] = None):
        self.tick = tick
        self.cause = cause
        super().__init__(f"episode failed at t={tick}s: {cause}")


# ---------------------------------------------------------------- 評估

class TooFewRecords(LabmateError):
    """記錄數少於折數"""


class EmptyInput(LabmateError):
    """空的預測或真值列表"""


class LengthMismatch(LabmateError):
    """預測與真值長度不一致"""


class TooFewFolds(LabmateError):
    """聚合至少需要兩折"""


class MissingCell(LabmateError):
    """差值表缺少某個 (scenario, variant) 格子"""

    def __init__(self, scenario: str, variant: str):
        self.scenario = scenario
        self.variant = variant
        super().__init__(f"missing cell: {scenario} / {variant}")
