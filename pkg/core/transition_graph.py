# -*- coding: utf-8 -*-
"""
Labmate - 狀態轉移圖

窮舉 step_fsm（每個狀態 × 代表性事件 × 策略）建立有向圖，
檢查可達狀態的封閉性、安全性與可終止性。
"""

import logging
from typing import Dict, Iterable, List, Tuple

import networkx as nx

from core.decision import DecisionEvent, EventKind, Policy, RobotState, step_fsm
from core.errors import UndefinedTransition
from core.rules import JudgmentSource, SceneJudgment
from core.scene import ClassLabel

logger = logging.getLogger(__name__)


def _judgment(o: bool, i: bool) -> SceneJudgment:
    return SceneJudgment(o, i, "", JudgmentSource.ORACLE)


REPRESENTATIVE_JUDGMENTS = [_judgment(o, i) for o in (True, False) for i in (True, False)]
REPRESENTATIVE_REPLIES = ["Yes, please wait a moment.", "go ahead", "no", "yes", "hmm"]


def representative_events() -> List[DecisionEvent]:
    events = [DecisionEvent.of_judgment(j, ClassLabel.FUMEHOOD) for j in REPRESENTATIVE_JUDGMENTS]
    events += [DecisionEvent.reply(text) for text in REPRESENTATIVE_REPLIES]
    events += [DecisionEvent.timeout(), DecisionEvent.path_clear(), DecisionEvent.goal_reached()]
    return events


class TransitionGraph:
    """
    單一策略的狀態轉移圖

    節點為 RobotState，邊帶有觸發事件（events 屬性為列表）。
    回覆事件的結果取決於引發詢問的判斷，因此兩種詢問語境都會展開。
    """

    def __init__(self, policy: Policy, events: Iterable[DecisionEvent] = None):
        self.policy = policy
        self.events = list(events) if events is not None else representative_events()
        self.graph = nx.MultiDiGraph()
        self.undefined: List[Tuple[RobotState, str]] = []
        self._build()
        logger.debug(
            f"轉移圖 ({policy.value}): {self.graph.number_of_nodes()} 節點, "
            f"{self.graph.number_of_edges()} 條邊"
        )

    def _build(self):
        contexts = [_judgment(True, True), _judgment(True, False)]
        frontier = [RobotState.NAVIGATING]
        self.graph.add_node(RobotState.NAVIGATING)
        seen = {RobotState.NAVIGATING}

        while frontier:
            state = frontier.pop()
            for event in self.events:
                for context in contexts:
                    try:
                        target, actions = step_fsm(state, event, self.policy, context)
                    except UndefinedTransition:
                        self.undefined.append((state, event.describe()))
                        continue
                    self.graph.add_edge(
                        state, target,
                        event=event,
                        label=event.describe(),
                        actions=[a.kind.value for a in actions],
                    )
                    if target not in seen:
                        seen.add(target)
                        frontier.append(target)

    @property
    def reachable_states(self) -> List[RobotState]:
        return sorted(nx.descendants(self.graph, RobotState.NAVIGATING) | {RobotState.NAVIGATING},
                      key=lambda s: list(RobotState).index(s))

    def safety_violations(self) -> List[Tuple[RobotState, str]]:
        """有擋路判斷的事件直接導向 Proceeding 的邊"""
        violations = []
        for source, target, data in self.graph.edges(data=True):
            event = data['event']
            if (target is RobotState.PROCEEDING and event.kind is EventKind.JUDGMENT
                    and event.judgment.obstruction):
                violations.append((source, data['label']))
        return violations

    def dead_ends(self) -> List[RobotState]:
        """無法到達 Arrived 的可達狀態"""
        return [s for s in self.reachable_states
                if s is not RobotState.ARRIVED and not nx.has_path(self.graph, s, RobotState.ARRIVED)]

    def validate(self) -> Dict:
        """
        驗證轉移表

        Returns:
            {
                'is_valid': bool,
                'policy': str,
                'reachable_states': list,
                'undefined_transitions': list,
                'safety_violations': list,
                'dead_ends': list,
                'warnings': list,
                'errors': list,
            }
        """
        result = {
            'is_valid': True,
            'policy': self.policy.value,
            'reachable_states': [s.value for s in self.reachable_states],
            'undefined_transitions': [(s.value, e) for s, e in self.undefined],
            'safety_violations': [(s.value, e) for s, e in self.safety_violations()],
            'dead_ends': [s.value for s in self.dead_ends()],
            'warnings': [],
            'errors': [],
        }

        if result['undefined_transitions']:
            result['is_valid'] = False
            result['errors'].append(f"發現 {len(result['undefined_transitions'])} 個未定義轉移")
        if result['safety_violations']:
            result['is_valid'] = False
            result['errors'].append(f"擋路判斷直接進入 Proceeding: {result['safety_violations']}")
        if result['dead_ends']:
            result['is_valid'] = False
            result['errors'].append(f"無法抵達 Arrived 的狀態: {result['dead_ends']}")

        unreachable = [s.value for s in RobotState if s not in self.reachable_states]
        if unreachable:
            result['warnings'].append(f"不可達狀態: {unreachable}")

        logger.info(
            f"轉移表驗證 ({self.policy.value}): 有效={result['is_valid']}, "
            f"可達={len(result['reachable_states'])}, 未定義={len(result['undefined_transitions'])}"
        )
        return result

    def visualize(self) -> str:
        """文字版轉移表"""
        lines = [f"=== {self.policy.value} ==="]
        for source, target, data in sorted(self.graph.edges(data=True),
                                           key=lambda e: (e[0].value, e[2]['label'], e[1].value)):
            if source is target and not data['actions']:
                continue
            actions = f" [{', '.join(data['actions'])}]" if data['actions'] else ""
            lines.append(f"{source.value:18s} --{data['label']}--> {target.value}{actions}")
        return "\n".join(dict.fromkeys(lines))


def validate_policies() -> Dict[str, Dict]:
    """兩種策略各自的驗證結果"""
    return {policy.value: TransitionGraph(policy).validate() for policy in Policy}
