# -*- coding: utf-8 -*-
"""
決策狀態機測試

測試內容：
1. 訊息組合（等待詢問 / 請求通過）
2. 回覆理解（fixtures/messages.json 的 replies）
3. step_fsm 轉移與安全性（擋路時絕不直接前進）
4. DecisionMachine 重新詢問、超時、時間累計
5. DecisionConfig 驗證

運行方法：
    pytest tests/test_decision.py -v
"""

import sys
import os

# 添加項目根目錄到路徑
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import json
import unittest
from pathlib import Path

from hypothesis import given, settings
from hypothesis import strategies as st

from core.decision import (
    REASK_PREFIX,
    Action,
    ActionKind,
    DecisionConfig,
    DecisionEvent,
    DecisionMachine,
    Policy,
    QuestionKind,
    ReplyIntent,
    RobotState,
    compose_message,
    interpret_reply,
    question_for,
    step_fsm,
)
from core.errors import ConfigError, InconsistentLabels, NoMessageNeeded, UndefinedTransition
from core.rules import SceneJudgment
from core.scene import ClassLabel

FIXTURES = Path(__file__).parent / "fixtures"
MESSAGES = json.loads((FIXTURES / "messages.json").read_text(encoding="utf-8"))

BOTH = SceneJudgment(True, True)
OBSTRUCT = SceneJudgment(True, False)
CLEAR = SceneJudgment(False, False)
ODD = SceneJudgment(False, True)

judgments = st.builds(SceneJudgment, st.booleans(), st.booleans())
events = st.one_of(
    judgments.map(DecisionEvent.of_judgment),
    st.sampled_from(["yes", "no", "go ahead", "please wait", "hmm"]).map(DecisionEvent.reply),
    st.sampled_from([DecisionEvent.timeout(), DecisionEvent.path_clear()]),
)


class TestComposeMessage(unittest.TestCase):
    """訊息組合"""

    def test_wait_offer(self):
        self.assertEqual(compose_message((True, True), ClassLabel.FUMEHOOD), MESSAGES["wait_offer"])

    def test_passage_request(self):
        self.assertEqual(compose_message((True, False), ClassLabel.INSTRUMENT), MESSAGES["passage_request"])

    def test_plain_string_equipment(self):
        self.assertIn("centrifuge", compose_message((True, True), "centrifuge"))

    def test_clear_path_has_no_message(self):
        with self.assertRaises(NoMessageNeeded):
            compose_message((False, False), ClassLabel.FUMEHOOD)

    def test_inconsistent_labels(self):
        with self.assertRaises(InconsistentLabels):
            compose_message((False, True), ClassLabel.FUMEHOOD)


class TestInterpretReply(unittest.TestCase):
    """回覆理解"""

    def test_fixture_replies(self):
        for case in MESSAGES["replies"]:
            with self.subTest(text=case["text"], asked=case["asked"]):
                intent = interpret_reply(case["text"], QuestionKind(case["asked"]))
                self.assertIs(intent, ReplyIntent(case["intent"]))

    def test_no_depends_on_question(self):
        self.assertIs(interpret_reply("no", QuestionKind.WAIT_OFFER), ReplyIntent.PROCEED_GRANTED)
        self.assertIs(interpret_reply("no", QuestionKind.PASSAGE_REQUEST), ReplyIntent.WAIT_REQUESTED)

    def test_conflicting_phrases_are_unclear(self):
        self.assertIs(interpret_reply("wait... actually go ahead"), ReplyIntent.UNCLEAR)

    def test_yes_and_no_together_are_unclear(self):
        self.assertIs(interpret_reply("yes and no"), ReplyIntent.UNCLEAR)

    def test_curly_apostrophe(self):
        self.assertIs(interpret_reply("I’m done"), ReplyIntent.PROCEED_GRANTED)

    def test_question_for(self):
        self.assertIs(question_for(BOTH), QuestionKind.WAIT_OFFER)
        self.assertIs(question_for(OBSTRUCT), QuestionKind.PASSAGE_REQUEST)
        self.assertIs(question_for(None), QuestionKind.PASSAGE_REQUEST)


class TestStepFsm(unittest.TestCase):
    """純轉移函數"""

    def test_clear_path_proceeds(self):
        state, actions = step_fsm(RobotState.NAVIGATING, DecisionEvent.of_judgment(CLEAR), Policy.PROACTIVE)
        self.assertIs(state, RobotState.PROCEEDING)
        self.assertEqual(actions, [])

    def test_blocking_judgment_queries(self):
        event = DecisionEvent.of_judgment(BOTH, ClassLabel.FUMEHOOD)
        state, actions = step_fsm(RobotState.NAVIGATING, event, Policy.PROACTIVE)
        self.assertIs(state, RobotState.QUERYING)
        self.assertEqual(actions, [Action.emit(MESSAGES["wait_offer"]), Action.timer(30)])

    def test_model_message_is_reused(self):
        judgment = SceneJudgment(True, True, message="Shall I wait?")
        _, actions = step_fsm(RobotState.NAVIGATING, DecisionEvent.of_judgment(judgment), Policy.PROACTIVE)
        self.assertEqual(actions[0].text, "Shall I wait?")

    def test_inconsistent_judgment_still_asks(self):
        state, actions = step_fsm(RobotState.NAVIGATING, DecisionEvent.of_judgment(ODD), Policy.PROACTIVE)
        self.assertIs(state, RobotState.QUERYING)
        self.assertEqual(actions[0].text, MESSAGES["wait_offer"])

    def test_passive_policy_waits(self):
        state, actions = step_fsm(RobotState.NAVIGATING, DecisionEvent.of_judgment(OBSTRUCT), Policy.PASSIVE)
        self.assertIs(state, RobotState.PASSIVE_WAITING)
        self.assertEqual(actions, [])
        state, actions = step_fsm(state, DecisionEvent.path_clear(), Policy.PASSIVE)
        self.assertIs(state, RobotState.NAVIGATING)
        self.assertEqual(actions, [Action.of(ActionKind.RESUME_TASK)])

    def test_passive_policy_rejects_proactive_states(self):
        for state in (RobotState.QUERYING, RobotState.WAITING_ON_HUMAN, RobotState.REALLOCATED):
            with self.subTest(state=state):
                with self.assertRaises(UndefinedTransition):
                    step_fsm(state, DecisionEvent.timeout(), Policy.PASSIVE)

    def test_wait_then_reallocate(self):
        state, actions = step_fsm(RobotState.QUERYING, DecisionEvent.reply("yes"), Policy.PROACTIVE, BOTH)
        self.assertIs(state, RobotState.WAITING_ON_HUMAN)
        self.assertEqual(actions, [Action.timer(5)])
        state, actions = step_fsm(state, DecisionEvent.timeout(), Policy.PROACTIVE, BOTH)
        self.assertIs(state, RobotState.REALLOCATED)
        self.assertEqual(actions, [Action.of(ActionKind.REALLOCATE)])

    def test_go_ahead_at_equipment_reduces_speed(self):
        state, actions = step_fsm(RobotState.QUERYING, DecisionEvent.reply("go ahead"), Policy.PROACTIVE, BOTH)
        self.assertIs(state, RobotState.PROCEEDING)
        self.assertEqual([a.kind for a in actions], [ActionKind.PROCEED, ActionKind.REDUCED_SPEED])
        _, actions = step_fsm(RobotState.QUERYING, DecisionEvent.reply("go ahead"), Policy.PROACTIVE, OBSTRUCT)
        self.assertEqual([a.kind for a in actions], [ActionKind.PROCEED])

    def test_query_timeout_falls_back_to_passive_wait(self):
        state, _ = step_fsm(RobotState.QUERYING, DecisionEvent.timeout(), Policy.PROACTIVE, BOTH)
        self.assertIs(state, RobotState.PASSIVE_WAITING)

    def test_unclear_reply_reasks(self):
        state, actions = step_fsm(RobotState.QUERYING, DecisionEvent.reply("blorp"), Policy.PROACTIVE, BOTH)
        self.assertIs(state, RobotState.QUERYING)
        self.assertEqual(actions, [Action.of(ActionKind.REASK)])

    def test_arrived_is_absorbing(self):
        state, actions = step_fsm(RobotState.ARRIVED, DecisionEvent.of_judgment(BOTH), Policy.PROACTIVE)
        self.assertIs(state, RobotState.ARRIVED)
        self.assertEqual(actions, [])

    def test_goal_reached(self):
        state, _ = step_fsm(RobotState.PROCEEDING, DecisionEvent.goal_reached(), Policy.PASSIVE)
        self.assertIs(state, RobotState.ARRIVED)

    @settings(max_examples=500, deadline=None)
    @given(state=st.sampled_from(list(RobotState)), event=events, policy=st.sampled_from(list(Policy)),
           last=st.one_of(st.none(), judgments))
    def test_blocking_judgment_never_proceeds(self, state, event, policy, last):
        """擋路判斷永遠不會讓機器人直接進入 Proceeding"""
        try:
            new_state, _ = step_fsm(state, event, policy, last)
        except UndefinedTransition:
            self.assertIs(policy, Policy.PASSIVE)
            return
        if event.judgment is not None and event.judgment.blocking:
            self.assertIsNot(new_state, RobotState.PROCEEDING)


class TestDecisionMachine(unittest.TestCase):
    """單一擁有者包裝"""

    def test_reask_then_timeout(self):
        machine = DecisionMachine(Policy.PROACTIVE)
        machine.deliver(DecisionEvent.of_judgment(BOTH, ClassLabel.FUMEHOOD))
        self.assertEqual(machine.pending_question(), MESSAGES["wait_offer"])

        actions = machine.deliver(DecisionEvent.reply("blorp"))
        self.assertEqual(actions, [Action.of(ActionKind.REASK)])
        self.assertIs(machine.state, RobotState.QUERYING)
        self.assertEqual(machine.trace.dialogue[-1], ("robot", REASK_PREFIX + MESSAGES["wait_offer"]))

        machine.deliver(DecisionEvent.reply("blorp"))
        self.assertIs(machine.state, RobotState.PASSIVE_WAITING)
        self.assertIsNone(machine.pending_question())

    def test_idle_and_reallocated_accounting(self):
        machine = DecisionMachine(Policy.PROACTIVE)
        machine.deliver(DecisionEvent.of_judgment(BOTH))
        machine.deliver(DecisionEvent.reply("Yes, please wait a moment."))
        machine.advance(5.0)
        machine.deliver(DecisionEvent.timeout())
        machine.advance(60.0)
        machine.deliver(DecisionEvent.path_clear())
        machine.advance(63.0)
        machine.deliver(DecisionEvent.goal_reached())

        self.assertTrue(machine.arrived)
        self.assertEqual(machine.trace.idle_s, 5.0)
        self.assertEqual(machine.trace.reallocated_s, 55.0)
        self.assertEqual(machine.trace.queries, 1)
        self.assertEqual(machine.trace.duration, 63.0)
        self.assertEqual(machine.trace.to_dict()["final_state"], "arrived")

    def test_blocked_time_while_moving(self):
        machine = DecisionMachine(Policy.PROACTIVE)
        machine.deliver(DecisionEvent.of_judgment(CLEAR))
        machine.advance(4.0, path_blocked=True)
        self.assertEqual(machine.trace.blocked_s, 4.0)

    def test_time_cannot_go_backwards(self):
        machine = DecisionMachine(Policy.PASSIVE)
        machine.advance(10.0)
        with self.assertRaises(ValueError):
            machine.advance(9.0)


class TestDecisionEventsAndConfig(unittest.TestCase):
    """事件與配置驗證"""

    def test_empty_reply_rejected(self):
        with self.assertRaises(ValueError):
            DecisionEvent.reply("   ")

    def test_describe(self):
        self.assertEqual(DecisionEvent.of_judgment(OBSTRUCT).describe(), "judgment(T,F)")
        self.assertEqual(DecisionEvent.timeout().describe(), "timeout")

    def test_config_validation(self):
        for kwargs in ({'query_timeout_s': 0}, {'travel_s': -1}, {'max_reasks': 1.5}):
            with self.subTest(**kwargs):
                with self.assertRaises(ConfigError):
                    DecisionConfig(**kwargs)
        with self.assertRaises(ConfigError):
            DecisionConfig.from_mapping({'timeout': 3})


if __name__ == '__main__':
    unittest.main(verbosity=2)
