# -*- coding: utf-8 -*-
"""
Labmate - 回合模擬

1 Hz 離散事件迴圈：機器人接近目標、感知、經後端判斷、推進狀態機；
人在 occupancy_s 秒後離開設備（或同意讓路時立刻讓開），
直到機器人抵達目標為止。同一個場景在兩種策略下看到相同的判斷。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.api_client import BackendConfig
from core.decision import (
    ActionKind,
    DecisionConfig,
    DecisionEvent,
    DecisionMachine,
    EpisodeTrace,
    Policy,
    ReplyIntent,
    RobotState,
    interpret_reply,
    question_for,
)
from core.errors import ConfigError, EpisodeError, LabmateError
from core.pipeline import ScenePipeline
from core.rules import JudgmentSource, RuleConfig, SceneJudgment
from core.scene import ClassLabel, Scenario, Scene
from templates.prompts import PromptVariant
from utils.scenario_generator import NoiseModel, ScenarioSpec, generate_scene

logger = logging.getLogger(__name__)

DEFAULT_REPLIES: Tuple[str, ...] = ("Yes, please wait a moment.",)
_CLEAR = SceneJudgment(False, False, "", JudgmentSource.ORACLE)


@dataclass(frozen=True)
class EpisodeSpec:
    """
    單一回合的設定（對應 episode spec JSON）

    Attributes:
        scenario: 場景生成規格（occupancy_s 決定人佔用多久）
        index: 場景索引
        replies: 依序回覆機器人的句子；用完後不再回覆
        decision: 決策時間參數
    """
    scenario: ScenarioSpec
    index: int = 0
    replies: Tuple[str, ...] = DEFAULT_REPLIES
    decision: DecisionConfig = field(default_factory=DecisionConfig)

    @classmethod
    def from_dict(cls, data: Mapping, rules: Optional[RuleConfig] = None) -> "EpisodeSpec":
        """
        {"scenario", "seed", "index", "occupancy_s", "class_mix", "replies", "decision"}
        """
        allowed = {'scenario', 'seed', 'index', 'occupancy_s', 'class_mix', 'replies', 'decision', 'noise'}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown episode spec keys: {sorted(unknown)}")

        index = int(data.get('index', 0))
        sim = {
            'scenario': Scenario.parse(data.get('scenario', 's1')),
            'seed': int(data.get('seed', 0)),
            'count': index + 1,
        }
        if 'occupancy_s' in data:
            sim['occupancy_s'] = int(data['occupancy_s'])
        if 'class_mix' in data:
            sim['class_mix'] = tuple(float(p) for p in data['class_mix'])
        if rules is not None:
            sim['rules'] = rules
        noise = NoiseModel(**data.get('noise', {}))

        replies = data.get('replies', list(DEFAULT_REPLIES))
        if not isinstance(replies, list) or not all(isinstance(r, str) for r in replies):
            raise ConfigError("episode replies must be a list of strings")

        return cls(
            scenario=ScenarioSpec(noise=noise, **sim),
            index=index,
            replies=tuple(replies),
            decision=DecisionConfig.from_mapping(data.get('decision', {})),
        )


class _World:
    """回合中的物理世界：人何時離開、路徑是否真的被擋住"""

    def __init__(self, scene: Scene, occupancy_s: int):
        self.scene = scene
        self.truly_blocked = bool(scene.truth and scene.truth[0])
        self.departure_s = occupancy_s if scene.humans() else 0
        self.yielded = False

    def humans_present(self, t: int) -> bool:
        return not self.yielded and t < self.departure_s

    def path_blocked(self, t: int) -> bool:
        return self.truly_blocked and self.humans_present(t)


def _tick_limit(spec: EpisodeSpec) -> int:
    cfg = spec.decision
    per_query = cfg.query_timeout_s + cfg.reply_delay_s
    return (spec.scenario.occupancy_s + per_query * (cfg.max_reasks + 2)
            + cfg.reallocation_delay_s + cfg.travel_s + 10)


def run_episode(
    spec: EpisodeSpec,
    policy: Policy,
    backend: BackendConfig,
    variant: PromptVariant = PromptVariant.VISION_PLUS_DEPTH,
    rules: Optional[RuleConfig] = None,
    scene: Optional[Scene] = None,
) -> EpisodeTrace:
    """
    執行單一回合

    每個 tick 依序處理：人離開 → 計時器 → 感知與判斷 → 到期的回覆 → 行進。

    Args:
        spec: 回合設定
        policy: 主動 / 被動
        backend: 判斷後端
        variant: 提示詞變體
        rules: 距離規則（預設取 spec 內的規則）
        scene: 指定場景（省略時依 spec 產生）

    Returns:
        EpisodeTrace

    Raises:
        EpisodeError: 後端失敗或回合未能在時限內結束（附帶模擬時間）
    """
    rules = rules or spec.scenario.rules
    scene = scene or generate_scene(spec.scenario, spec.index)
    pipeline = ScenePipeline(backend, variant, rules)
    world = _World(scene, spec.scenario.occupancy_s)
    machine = DecisionMachine(policy, spec.decision)
    machine.trace.scene_id = scene.scene_id
    machine.trace.policy = policy.value

    replies = list(spec.replies)
    reply_due: Optional[int] = None
    timer_due: Optional[int] = None
    travelled = 0
    cached: Optional[Tuple[SceneJudgment, Optional[ClassLabel]]] = None
    cfg = spec.decision

    def deliver(event: DecisionEvent, t: int) -> None:
        nonlocal reply_due, timer_due
        before = machine.state
        actions = machine.deliver(event)
        if machine.state is not before:
            timer_due = None
            if machine.state is not RobotState.QUERYING:
                reply_due = None
        for action in actions:
            if action.kind is ActionKind.START_TIMER:
                timer_due = t + int(action.seconds)
            elif action.kind in (ActionKind.EMIT_MESSAGE, ActionKind.REASK) and replies:
                reply_due = t + cfg.reply_delay_s

    limit = _tick_limit(spec)
    for t in range(limit + 1):
        machine.advance(float(t), path_blocked=world.path_blocked(t - 1) if t > 0 else False)

        # 人離開設備
        if world.departure_s == t and scene.humans() and not world.yielded:
            deliver(DecisionEvent.path_clear(), t)

        if timer_due is not None and t >= timer_due:
            timer_due = None
            deliver(DecisionEvent.timeout(), t)

        if machine.state is RobotState.NAVIGATING:
            if world.humans_present(t) and scene.humans():
                if cached is None:
                    try:
                        result = pipeline.judge(scene)
                    except LabmateError as e:
                        raise EpisodeError(t, e) from e
                    cached = (result.judgment, result.equipment)
                judgment, equipment = cached
                deliver(DecisionEvent.of_judgment(judgment, equipment), t)
            else:
                deliver(DecisionEvent.of_judgment(_CLEAR), t)

        if reply_due is not None and t >= reply_due and replies:
            reply_due = None
            text = replies.pop(0)
            asked = question_for(machine.last_judgment)
            if interpret_reply(text, asked) is ReplyIntent.PROCEED_GRANTED:
                # 人同意讓路：讓開通道
                world.yielded = True
            deliver(DecisionEvent.reply(text), t)

        if machine.state is RobotState.PROCEEDING and not world.path_blocked(t):
            if travelled >= cfg.travel_s:
                deliver(DecisionEvent.goal_reached(), t)
            travelled += 1

        if machine.arrived:
            return machine.trace

    raise EpisodeError(limit, RuntimeError("robot did not arrive within the tick limit"))


@dataclass
class PolicyComparison:
    """配對回合的統計"""
    episodes: int
    mean_idle_proactive: float
    mean_idle_passive: float
    mean_saved: float
    saved_std: float
    min_saved: float
    mean_reallocated_proactive: float
    dominance_violations: int
    pairs: List[Dict] = field(default_factory=list)

    def to_dict(self, include_pairs: bool = False) -> Dict:
        data = asdict(self)
        if not include_pairs:
            data.pop('pairs')
        return data


def _run_pair(args) -> Tuple[EpisodeTrace, EpisodeTrace]:
    spec, backend, variant, rules = args
    scene = generate_scene(spec.scenario, spec.index)
    proactive = run_episode(spec, Policy.PROACTIVE, backend, variant, rules, scene)
    passive = run_episode(spec, Policy.PASSIVE, backend, variant, rules, scene)
    return proactive, passive


def compare_policies(
    spec: ScenarioSpec,
    backend: BackendConfig,
    episodes: int,
    replies: Sequence[str] = DEFAULT_REPLIES,
    decision: Optional[DecisionConfig] = None,
    variant: PromptVariant = PromptVariant.VISION_PLUS_DEPTH,
    jobs: Optional[int] = None,
) -> PolicyComparison:
    """
    以相同種子的場景配對比較主動與被動策略

    回合彼此獨立，可平行執行；結果依索引順序歸約。
    """
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    decision = decision or DecisionConfig()
    scenario = spec.with_overrides(count=max(spec.count, episodes))
    work = [
        (EpisodeSpec(scenario, i, tuple(replies), decision), backend, variant, spec.rules)
        for i in range(episodes)
    ]

    with ThreadPoolExecutor(max_workers=jobs) as executor:
        results = list(executor.map(_run_pair, work))

    saved = [passive.idle_s - proactive.idle_s for proactive, passive in results]
    pairs = [
        {
            'scene_id': proactive.scene_id,
            'idle_proactive': proactive.idle_s,
            'idle_passive': passive.idle_s,
            'reallocated_proactive': proactive.reallocated_s,
            'saved': s,
        }
        for (proactive, passive), s in zip(results, saved)
    ]
    violations = sum(1 for s in saved if s < 0)
    if violations:
        logger.warning(f"{violations} 組回合中主動策略的等待時間較長")

    return PolicyComparison(
        episodes=episodes,
        mean_idle_proactive=float(np.mean([p.idle_s for p, _ in results])),
        mean_idle_passive=float(np.mean([q.idle_s for _, q in results])),
        mean_saved=float(np.mean(saved)),
        saved_std=float(np.std(saved, ddof=1)) if len(saved) > 1 else 0.0,
        min_saved=min(saved),
        mean_reallocated_proactive=float(np.mean([p.reallocated_s for p, _ in results])),
        dominance_violations=violations,
        pairs=pairs,
    )
