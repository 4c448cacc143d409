# -*- coding: utf-8 -*-
"""
Labmate - 距離規則與真值標註

以距離閾值判斷「是否正在操作設備」，以機器人 → 目標線段的通道判斷「是否擋路」。
操作必然擋路（資料集中沒有「操作但不擋路」這一類），因此標註器在結構上
不可能輸出 (obstruction=False, interaction=True)。
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from config import RULE_CONFIG
from core.errors import ConfigError, InconsistentLabels, NoGoal
from core.perception import DistanceReport, distance_matrix
from core.scene import Position3, Scene

logger = logging.getLogger(__name__)

_ORIGIN = Position3(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RuleConfig:
    """
    距離規則配置

    Attributes:
        t_interact_m: 人與設備距離小於此值 → 正在操作
        corridor_halfwidth_m: 人到 (原點, 目標) 線段距離小於此值 → 擋路
        t_obstruct_m: 無目標點時的備用人機距離閾值；None 表示不啟用
    """
    t_interact_m: float = RULE_CONFIG['t_interact_m']
    corridor_halfwidth_m: float = RULE_CONFIG['corridor_halfwidth_m']
    t_obstruct_m: Optional[float] = RULE_CONFIG['t_obstruct_m']

    def __post_init__(self):
        for name in ('t_interact_m', 'corridor_halfwidth_m', 't_obstruct_m'):
            value = getattr(self, name)
            if value is None and name == 't_obstruct_m':
                continue
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
                raise ConfigError(f"rules.{name} must be a positive number, got {value!r}")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "RuleConfig":
        """由配置表建立；所有鍵可省略，未知鍵視為錯誤"""
        allowed = set(cls.__dataclass_fields__)
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown rules keys: {sorted(unknown)}")
        return cls(**dict(data))

    def to_dict(self) -> Dict:
        return asdict(self)


class JudgmentSource(Enum):
    ORACLE = "oracle"
    MOCK = "mock"
    LIVE = "live"


@dataclass(frozen=True)
class SceneJudgment:
    """(obstruction, interaction) 二元判斷 + 對人說的話"""
    obstruction: bool
    interaction: bool
    message: str = ""
    source: JudgmentSource = JudgmentSource.ORACLE

    @property
    def consistent(self) -> bool:
        """操作蘊含擋路"""
        return not (self.interaction and not self.obstruction)

    @property
    def labels(self) -> Tuple[bool, bool]:
        return self.obstruction, self.interaction

    @property
    def blocking(self) -> bool:
        """決策層的保守解讀：任何一個標籤為真都視為路徑受阻"""
        return self.obstruction or self.interaction

    def to_dict(self) -> Dict:
        return {
            'obstruction': self.obstruction,
            'interaction': self.interaction,
            'message': self.message,
            'source': self.source.value,
            'consistent': self.consistent,
        }


class ScenarioClass(Enum):
    """三個合法類別；與一致的 (obstruction, interaction) 組合一一對應"""
    OBSTRUCT_INTERACT = "obstruct_interact"
    NEITHER = "neither"
    OBSTRUCT_ONLY = "obstruct_only"

    @property
    def labels(self) -> Tuple[bool, bool]:
        return _CLASS_LABELS[self]

    @classmethod
    def from_labels(cls, obstruction: bool, interaction: bool) -> "ScenarioClass":
        for klass, labels in _CLASS_LABELS.items():
            if labels == (bool(obstruction), bool(interaction)):
                return klass
        raise InconsistentLabels("interaction without obstruction is not a valid class")


_CLASS_LABELS = {
    ScenarioClass.OBSTRUCT_INTERACT: (True, True),
    ScenarioClass.NEITHER: (False, False),
    ScenarioClass.OBSTRUCT_ONLY: (True, False),
}


def to_class(judgment: SceneJudgment) -> ScenarioClass:
    """判斷 → 場景類別"""
    return ScenarioClass.from_labels(judgment.obstruction, judgment.interaction)


def point_segment_distance(p: Position3, a: Position3, b: Position3) -> float:
    """點 p 到閉線段 [a, b] 的歐氏距離（a 可與 b 重合）"""
    pv, av, bv = p.as_array(), a.as_array(), b.as_array()
    ab = bv - av
    denom = float(np.dot(ab, ab))
    if denom == 0.0:
        return float(np.linalg.norm(pv - av))
    t = float(np.dot(pv - av, ab)) / denom
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(pv - (av + t * ab)))


def goal_straight_ahead(goal: Position3) -> Position3:
    """與目標同距離、位於機器人正前方的點（「目標在畫面中央」的假設）"""
    return Position3(goal.norm(), 0.0, 0.0)


def classify_scene(
    scene: Scene,
    cfg: RuleConfig,
    report: Optional[DistanceReport] = None,
    goal_override: Optional[Position3] = None,
) -> SceneJudgment:
    """
    真值標註器

    - interaction：任一人到最近設備的距離 < t_interact_m
    - obstruction：interaction 為真，或任一人到 (原點, 目標) 線段距離 < corridor_halfwidth_m；
      無目標點時改用人機距離 < t_obstruct_m
    - 閾值採嚴格不等式，剛好等於閾值不算

    Args:
        scene: 已驗證場景
        cfg: 規則配置
        report: 已計算的距離報告（可省略）
        goal_override: 以此點取代場景目標（用於模擬「目標在正前方」的偏差）

    Raises:
        NoGoal: 沒有目標點且 t_obstruct_m 未設定
    """
    report = report or distance_matrix(scene)
    goal = goal_override or scene.goal

    if goal is None and cfg.t_obstruct_m is None:
        raise NoGoal(f"scene {scene.scene_id} has no goal and t_obstruct_m is unset")

    interaction = any(d < cfg.t_interact_m for d in report.human_equipment_m.values())

    on_path = False
    for human in scene.humans():
        if goal is not None:
            gap = point_segment_distance(human.position, _ORIGIN, goal)
            if gap < cfg.corridor_halfwidth_m:
                on_path = True
                break
        elif report.human_robot_m[human.key] < cfg.t_obstruct_m:
            on_path = True
            break

    return SceneJudgment(
        obstruction=interaction or on_path,
        interaction=interaction,
        message="",
        source=JudgmentSource.ORACLE,
    )
