# -*- coding: utf-8 -*-
"""
Labmate - 提示詞模板管理

標準化場景提示詞：物件清單 →（距離 + 距離規則）→ 問題。
Vision 變體只有物件清單與問題；Vision+Depth 在兩者之間插入距離句與規則句，
因此 Vision 文本永遠是 Vision+Depth 文本的子序列。
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from core.errors import EmptyScene
from core.perception import DistanceReport
from core.rules import RuleConfig
from core.scene import ClassLabel, Scene


class PromptVariant(Enum):
    """提示詞模態"""
    VISION_ONLY = "vision"
    VISION_PLUS_DEPTH = "vision+depth"

    @classmethod
    def parse(cls, name: str) -> "PromptVariant":
        aliases = {'vision_only': cls.VISION_ONLY, 'depth': cls.VISION_PLUS_DEPTH}
        key = name.strip().lower()
        if key in aliases:
            return aliases[key]
        return cls(key)


@dataclass(frozen=True)
class PromptBundle:
    """
    送往後端的提示詞包

    Attributes:
        text: 模板實例化後的文本
        image_ref: 影像路徑（原樣轉交）
        labels: 場景中的物件標籤
        distances_included: 是否含距離句（== variant 為 Vision+Depth）
        variant: 提示詞模態
        format_hint: 回應格式指令，與模板分開傳送
    """
    text: str
    image_ref: Optional[str]
    labels: Tuple[ClassLabel, ...]
    distances_included: bool
    variant: PromptVariant
    format_hint: str = ""


class PromptTemplates:
    """提示詞模板管理類別"""

    OBJECTS_SENTENCE = "This scene contains the following objects: {objects}."
    DISTANCES_SENTENCE = "The distances between these objects are: {pairs}."
    QUESTION_SENTENCE = (
        "Is the human obstructing the path and/or interacting with the equipment ({equipment})? "
        "Respond with Yes or No."
    )

    # 距離規則（Vision+Depth 才附上）
    RULE_INTERACT = "A human closer than {t:.2f} m to a piece of equipment is interacting with it."
    RULE_CORRIDOR = (
        "A human within {t:.2f} m of the straight path from the robot to its goal is obstructing the path."
    )
    RULE_FALLBACK = "A human closer than {t:.2f} m to the robot is obstructing the path."
    RULE_IMPLIES = "A human interacting with equipment is also obstructing the path."

    # 兩欄回應格式
    FORMAT_HINT = (
        "Answer exactly in the form: Obstruction: <Yes|No>; Interaction: <Yes|No>; "
        "Message: <one sentence for the human, or nothing>."
    )

    PAIR_SEPARATOR = "–"

    @staticmethod
    def join_names(names: Sequence[str]) -> str:
        """a / a and b / a, b and c"""
        if len(names) <= 1:
            return "".join(names)
        return ", ".join(names[:-1]) + " and " + names[-1]

    @classmethod
    def render_distances(cls, scene: Scene, report: DistanceReport) -> str:
        """距離對渲染為「a–b: D.DD m」，依字典序排列"""
        names = scene.display_names()
        rendered = []
        for a, b, d in report.pairs():
            left, right = sorted((names[a], names[b]))
            rendered.append(f"{left}{cls.PAIR_SEPARATOR}{right}: {d:.2f} m")
        return ", ".join(sorted(rendered))

    @classmethod
    def render_rules(cls, rules: RuleConfig, has_goal: bool) -> str:
        parts = [cls.RULE_INTERACT.format(t=rules.t_interact_m)]
        if has_goal:
            parts.append(cls.RULE_CORRIDOR.format(t=rules.corridor_halfwidth_m))
        elif rules.t_obstruct_m is not None:
            parts.append(cls.RULE_FALLBACK.format(t=rules.t_obstruct_m))
        parts.append(cls.RULE_IMPLIES)
        return " ".join(parts)

    @classmethod
    def build_scene_prompt(
        cls,
        scene: Scene,
        report: DistanceReport,
        variant: PromptVariant,
        rules: Optional[RuleConfig] = None,
    ) -> PromptBundle:
        """
        構建場景判斷提示詞

        Args:
            scene: 場景（至少一個物件）
            report: 距離報告
            variant: Vision / Vision+Depth
            rules: 距離規則（Vision+Depth 時渲染為文字）

        Returns:
            PromptBundle

        Raises:
            EmptyScene: 場景沒有物件
        """
        if not scene.objects:
            raise EmptyScene(f"scene {scene.scene_id} has no objects")

        rules = rules or RuleConfig()
        names = scene.display_names()
        object_names = [names[o.key] for o in scene.objects]
        equipment_names = [names[o.key] for o in scene.objects if o.label.is_equipment]

        parts: List[str] = [cls.OBJECTS_SENTENCE.format(objects=cls.join_names(object_names))]

        with_depth = variant is PromptVariant.VISION_PLUS_DEPTH
        if with_depth:
            parts.append(cls.DISTANCES_SENTENCE.format(pairs=cls.render_distances(scene, report)))
            parts.append(cls.render_rules(rules, scene.goal is not None))

        parts.append(cls.QUESTION_SENTENCE.format(
            equipment=", ".join(equipment_names) if equipment_names else "none"
        ))

        return PromptBundle(
            text=" ".join(parts),
            image_ref=scene.image_ref,
            labels=tuple(scene.labels()),
            distances_included=with_depth,
            variant=variant,
            format_hint=cls.FORMAT_HINT,
        )


def build_prompt(
    scene: Scene,
    report: DistanceReport,
    variant: PromptVariant,
    rules: Optional[RuleConfig] = None,
) -> PromptBundle:
    """便捷函數：構建場景提示詞"""
    return PromptTemplates.build_scene_prompt(scene, report, variant, rules)


if __name__ == '__main__':
    from core.perception import distance_matrix
    from core.scene import Position3, Scenario, SceneObject

    demo = Scene(
        scene_id="demo",
        scenario=Scenario.S1,
        objects=(
            SceneObject(ClassLabel.HUMAN_CHEMIST, 0, Position3(2.0, 0.4, 0.0)),
            SceneObject(ClassLabel.FUMEHOOD, 0, Position3(2.0, 0.0, 0.0)),
        ),
        goal=Position3(2.0, 0.0, 0.0),
    )
    for v in PromptVariant:
        print(f"=== {v.value} ===")
        print(build_prompt(demo, distance_matrix(demo), v).text, "\n")
