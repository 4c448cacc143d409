# -*- coding: utf-8 -*-
"""
Labmate - 單場景管線

感知 → 提示詞 → 後端 → 判斷，供 CLI 的 decide、回合模擬與評估共用。
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

from core.api_client import BackendConfig, BackendKind, query_backend
from core.decision import compose_message
from core.errors import NoMessageNeeded
from core.perception import DistanceReport, distance_matrix, nearest_equipment
from core.rules import JudgmentSource, RuleConfig, SceneJudgment, classify_scene
from core.scene import ClassLabel, Scene
from templates.prompts import PromptBundle, PromptVariant, build_prompt
from utils.response_parser import VlmResponse

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneResult:
    """一個場景經過管線的完整結果"""
    scene: Scene
    report: DistanceReport
    bundle: PromptBundle
    response: VlmResponse
    judgment: SceneJudgment
    equipment: Optional[ClassLabel]

    @property
    def message(self) -> str:
        """模型沒有給訊息時，依判斷組合一句"""
        if self.judgment.message:
            return self.judgment.message
        try:
            return compose_message(
                (self.judgment.blocking, self.judgment.interaction),
                self.equipment or ClassLabel.FUMEHOOD,
            )
        except NoMessageNeeded:
            return ""

    def to_dict(self) -> Dict:
        return {
            'scene_id': self.scene.scene_id,
            'scenario': self.scene.scenario.value,
            'variant': self.bundle.variant.value,
            'prompt': self.bundle.text,
            'raw_response': self.response.raw,
            'judgment': self.judgment.to_dict(),
            'equipment': self.equipment.value if self.equipment else None,
            'message': self.message,
            'warnings': list(self.report.warnings),
        }


class ScenePipeline:
    """
    場景判斷管線

    持有規則、後端與提示詞變體；judge() 對單一場景執行完整流程。
    """

    def __init__(
        self,
        backend: BackendConfig,
        variant: PromptVariant = PromptVariant.VISION_PLUS_DEPTH,
        rules: Optional[RuleConfig] = None,
    ):
        self.backend = backend
        self.variant = variant
        self.rules = rules or RuleConfig()
        self.source = JudgmentSource.MOCK if backend.kind is BackendKind.MOCK else JudgmentSource.LIVE

    def judge(self, scene: Scene) -> SceneResult:
        """
        判斷單一場景

        Raises:
            EmptyScene: 場景沒有物件
            BackendError / ParseError: 後端失敗
        """
        report = distance_matrix(scene)
        bundle = build_prompt(scene, report, self.variant, self.rules)
        response = query_backend(bundle, self.backend, scene, self.rules)
        judgment = response.to_judgment(self.source)
        target = nearest_equipment(scene, report)

        if not judgment.consistent:
            logger.warning(f"場景 {scene.scene_id}: 判斷不一致 (interaction 無 obstruction)")

        return SceneResult(
            scene=scene,
            report=report,
            bundle=bundle,
            response=response,
            judgment=judgment,
            equipment=target.label if target else None,
        )

    def oracle(self, scene: Scene) -> SceneJudgment:
        """規則真值（不經過後端）"""
        return classify_scene(scene, self.rules)
