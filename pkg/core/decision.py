# -*- coding: utf-8 -*-
"""
Labmate - 決策狀態機

把場景判斷轉為機器人行為：前進、詢問、等待或改派其他任務，
並統計等待時間。step_fsm 是純函數；DecisionMachine 是單一擁有者的包裝，
依序處理事件、記錄軌跡與對話。
"""

import logging
import re
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Tuple, Union

from config import DECISION_CONFIG
from core.errors import ConfigError, InconsistentLabels, NoMessageNeeded, UndefinedTransition
from core.rules import SceneJudgment
from core.scene import ClassLabel

logger = logging.getLogger(__name__)


class RobotState(Enum):
    NAVIGATING = "navigating"
    QUERYING = "querying"
    WAITING_ON_HUMAN = "waiting_on_human"
    REALLOCATED = "reallocated"
    PASSIVE_WAITING = "passive_waiting"
    PROCEEDING = "proceeding"
    ARRIVED = "arrived"


class Policy(Enum):
    PROACTIVE = "proactive"
    PASSIVE = "passive"


class EventKind(Enum):
    JUDGMENT = "judgment"
    HUMAN_REPLY = "human_reply"
    TIMEOUT = "timeout"
    PATH_CLEAR = "path_clear"
    GOAL_REACHED = "goal_reached"


@dataclass(frozen=True)
class DecisionEvent:
    """
    狀態機事件

    Attributes:
        kind: 事件種類
        judgment: 場景判斷（JUDGMENT 事件）
        equipment: 判斷所針對的設備（用於組合訊息）
        text: 人的回覆（HUMAN_REPLY 事件，不可為空）
    """
    kind: EventKind
    judgment: Optional[SceneJudgment] = None
    equipment: Optional[ClassLabel] = None
    text: str = ""

    def __post_init__(self):
        if self.kind is EventKind.JUDGMENT and self.judgment is None:
            raise ValueError("judgment event requires a SceneJudgment")
        if self.kind is EventKind.HUMAN_REPLY and not self.text.strip():
            raise ValueError("human reply text must be non-empty")

    @classmethod
    def of_judgment(cls, judgment: SceneJudgment, equipment: Optional[ClassLabel] = None) -> "DecisionEvent":
        return cls(EventKind.JUDGMENT, judgment=judgment, equipment=equipment)

    @classmethod
    def reply(cls, text: str) -> "DecisionEvent":
        return cls(EventKind.HUMAN_REPLY, text=text)

    @classmethod
    def timeout(cls) -> "DecisionEvent":
        return cls(EventKind.TIMEOUT)

    @classmethod
    def path_clear(cls) -> "DecisionEvent":
        return cls(EventKind.PATH_CLEAR)

    @classmethod
    def goal_reached(cls) -> "DecisionEvent":
        return cls(EventKind.GOAL_REACHED)

    def describe(self) -> str:
        if self.kind is EventKind.JUDGMENT:
            o, i = self.judgment.labels
            return f"judgment({'T' if o else 'F'},{'T' if i else 'F'})"
        if self.kind is EventKind.HUMAN_REPLY:
            return f"reply({self.text!r})"
        return self.kind.value


class ActionKind(Enum):
    EMIT_MESSAGE = "emit_message"
    START_TIMER = "start_timer"
    REALLOCATE = "reallocate"
    RESUME_TASK = "resume_task"
    PROCEED = "proceed"
    REDUCED_SPEED = "reduced_speed"
    REASK = "reask"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    text: str = ""
    seconds: float = 0.0

    @classmethod
    def emit(cls, text: str) -> "Action":
        return cls(ActionKind.EMIT_MESSAGE, text=text)

    @classmethod
    def timer(cls, seconds: float) -> "Action":
        return cls(ActionKind.START_TIMER, seconds=seconds)

    @classmethod
    def of(cls, kind: ActionKind) -> "Action":
        return cls(kind)


@dataclass(frozen=True)
class DecisionConfig:
    """
    決策時間參數（模擬秒）

    Attributes:
        query_timeout_s: 發問後等待回覆的上限
        reallocation_delay_s: 人要求等待後，機器人轉去做其他工作前的延遲
        reply_delay_s: 模擬中人回覆所需時間
        travel_s: 路徑暢通後抵達目標所需時間
        max_reasks: 回覆不明確時重新詢問的次數
    """
    query_timeout_s: int = DECISION_CONFIG['query_timeout_s']
    reallocation_delay_s: int = DECISION_CONFIG['reallocation_delay_s']
    reply_delay_s: int = DECISION_CONFIG['reply_delay_s']
    travel_s: int = DECISION_CONFIG['travel_s']
    max_reasks: int = 1

    def __post_init__(self):
        for name in ('query_timeout_s', 'reallocation_delay_s', 'reply_delay_s', 'travel_s', 'max_reasks'):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError(f"decision.{name} must be a non-negative integer, got {value!r}")
        if self.query_timeout_s == 0:
            raise ConfigError("decision.query_timeout_s must be positive")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "DecisionConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown decision keys: {sorted(unknown)}")
        return cls(**dict(data))

    def to_dict(self) -> Dict:
        return asdict(self)


# ---------------------------------------------------------------- 訊息

WAIT_OFFER_TEMPLATE = "You seem to be using the {equipment}. Shall I wait until you are done?"
PASSAGE_REQUEST_TEMPLATE = "Excuse me — may I pass to reach the {equipment}?"
REASK_PREFIX = "Sorry, I did not catch that. "


def _equipment_name(equipment: Union[ClassLabel, str]) -> str:
    return equipment.value if isinstance(equipment, ClassLabel) else str(equipment)


def compose_message(labels: Tuple[bool, bool], equipment: Union[ClassLabel, str]) -> str:
    """
    依判斷組合對人說的話

    Raises:
        NoMessageNeeded: (False, False) 路徑暢通
        InconsistentLabels: (False, True)
    """
    obstruction, interaction = labels
    if not obstruction and not interaction:
        raise NoMessageNeeded("path is clear")
    if not obstruction:
        raise InconsistentLabels("interaction without obstruction has no message")
    template = WAIT_OFFER_TEMPLATE if interaction else PASSAGE_REQUEST_TEMPLATE
    return template.format(equipment=_equipment_name(equipment))


# ---------------------------------------------------------------- 回覆理解

class ReplyIntent(Enum):
    WAIT_REQUESTED = "wait_requested"
    PROCEED_GRANTED = "proceed_granted"
    UNCLEAR = "unclear"


class QuestionKind(Enum):
    WAIT_OFFER = "wait_offer"            # 「需要我等嗎？」
    PASSAGE_REQUEST = "passage_request"  # 「可以讓我過嗎？」


WAIT_PHRASES = (
    "please wait", "wait", "hold on", "a moment", "one moment", "just a moment", "moment",
    "not yet", "one minute", "a minute", "a second", "busy", "not done", "not finished",
    "still using", "don't come", "do not come", "stay back",
)
PROCEED_PHRASES = (
    "go ahead", "carry on", "proceed", "you can pass", "you may pass", "come through",
    "go on", "i'm done", "im done", "i am done", "done", "finished", "all yours", "go for it",
)
AFFIRMATIVE_WORDS = ("yes", "yeah", "yep", "sure", "ok", "okay", "please", "of course", "certainly")
NEGATIVE_WORDS = ("no", "nope", "nah", "not really")


def _phrase_pattern(phrases) -> re.Pattern:
    ordered = sorted(phrases, key=len, reverse=True)
    return re.compile(r"\b(?:" + "|".join(re.escape(p) for p in ordered) + r")\b")


_WAIT_RE = _phrase_pattern(WAIT_PHRASES)
_PROCEED_RE = _phrase_pattern(PROCEED_PHRASES)
_YES_RE = _phrase_pattern(AFFIRMATIVE_WORDS)
_NO_RE = _phrase_pattern(NEGATIVE_WORDS)


def interpret_reply(text: str, asked: QuestionKind = QuestionKind.WAIT_OFFER) -> ReplyIntent:
    """
    以關鍵詞分類人的回覆

    明確片語（wait / go ahead ...）優先；只有 yes/no 時依所問的問題解讀：
    對「需要我等嗎」回答 yes 表示等待，對「可以讓我過嗎」回答 yes 表示放行。
    兩種明確片語同時出現、或無法辨識時回傳 UNCLEAR。
    """
    normalized = (text or "").lower().replace("’", "'")
    if not normalized.strip():
        return ReplyIntent.UNCLEAR

    wants_wait = bool(_WAIT_RE.search(normalized))
    remainder = _WAIT_RE.sub(" ", normalized)
    wants_proceed = bool(_PROCEED_RE.search(remainder))

    if wants_wait and wants_proceed:
        return ReplyIntent.UNCLEAR
    if wants_wait:
        return ReplyIntent.WAIT_REQUESTED
    if wants_proceed:
        return ReplyIntent.PROCEED_GRANTED

    said_yes = bool(_YES_RE.search(normalized))
    said_no = bool(_NO_RE.search(normalized))
    if said_yes == said_no:
        return ReplyIntent.UNCLEAR

    yes_means = ReplyIntent.WAIT_REQUESTED if asked is QuestionKind.WAIT_OFFER else ReplyIntent.PROCEED_GRANTED
    no_means = ReplyIntent.PROCEED_GRANTED if asked is QuestionKind.WAIT_OFFER else ReplyIntent.WAIT_REQUESTED
    return yes_means if said_yes else no_means


def question_for(judgment: Optional[SceneJudgment]) -> QuestionKind:
    """發問內容：有人在操作設備就問要不要等，否則請求通過"""
    if judgment is not None and judgment.interaction:
        return QuestionKind.WAIT_OFFER
    return QuestionKind.PASSAGE_REQUEST


# ---------------------------------------------------------------- 狀態轉移

_MOVING = (RobotState.NAVIGATING, RobotState.PROCEEDING)
_PROACTIVE_ONLY = (RobotState.QUERYING, RobotState.WAITING_ON_HUMAN, RobotState.REALLOCATED)
WAITING_STATES = (RobotState.WAITING_ON_HUMAN, RobotState.PASSIVE_WAITING)


def _query_message(event: DecisionEvent) -> str:
    judgment = event.judgment
    if judgment.message and judgment.obstruction and judgment.interaction:
        return judgment.message
    equipment = event.equipment or ClassLabel.FUMEHOOD
    # 不一致的 (F, T) 判斷當作有人在操作設備
    labels = (True, judgment.interaction)
    return compose_message(labels, equipment)


def _proceed_actions(judgment: Optional[SceneJudgment]) -> List[Action]:
    actions = [Action.of(ActionKind.PROCEED)]
    if judgment is not None and judgment.interaction:
        actions.append(Action.of(ActionKind.REDUCED_SPEED))
    return actions


def step_fsm(
    state: RobotState,
    event: DecisionEvent,
    policy: Policy,
    last_judgment: Optional[SceneJudgment] = None,
    cfg: Optional[DecisionConfig] = None,
) -> Tuple[RobotState, List[Action]]:
    """
    狀態轉移函數（純函數）

    Args:
        state: 目前狀態
        event: 事件
        policy: 主動 / 被動
        last_judgment: 觸發目前詢問的判斷（解讀回覆與決定是否減速）
        cfg: 時間參數

    Returns:
        (新狀態, 動作列表)

    Raises:
        UndefinedTransition: 被動策略下出現主動策略專屬狀態
    """
    cfg = cfg or DecisionConfig()
    kind = event.kind

    if state is RobotState.ARRIVED:
        return state, []
    if policy is Policy.PASSIVE and state in _PROACTIVE_ONLY:
        raise UndefinedTransition(state, event.describe())
    if kind is EventKind.GOAL_REACHED:
        return RobotState.ARRIVED, []

    if state in _MOVING:
        if kind is EventKind.JUDGMENT:
            if not event.judgment.blocking:
                return RobotState.PROCEEDING, []
            if policy is Policy.PASSIVE:
                return RobotState.PASSIVE_WAITING, []
            return RobotState.QUERYING, [Action.emit(_query_message(event)), Action.timer(cfg.query_timeout_s)]
        return state, []

    if state is RobotState.PASSIVE_WAITING:
        if kind is EventKind.PATH_CLEAR:
            return RobotState.NAVIGATING, [Action.of(ActionKind.RESUME_TASK)]
        return state, []

    if state is RobotState.QUERYING:
        if kind is EventKind.HUMAN_REPLY:
            intent = interpret_reply(event.text, question_for(last_judgment))
            if intent is ReplyIntent.WAIT_REQUESTED:
                return RobotState.WAITING_ON_HUMAN, [Action.timer(cfg.reallocation_delay_s)]
            if intent is ReplyIntent.PROCEED_GRANTED:
                return RobotState.PROCEEDING, _proceed_actions(last_judgment)
            return RobotState.QUERYING, [Action.of(ActionKind.REASK)]
        if kind is EventKind.TIMEOUT:
            return RobotState.PASSIVE_WAITING, []
        if kind is EventKind.PATH_CLEAR:
            return RobotState.NAVIGATING, [Action.of(ActionKind.RESUME_TASK)]
        return state, []

    if state is RobotState.WAITING_ON_HUMAN:
        if kind is EventKind.TIMEOUT:
            return RobotState.REALLOCATED, [Action.of(ActionKind.REALLOCATE)]
        if kind is EventKind.PATH_CLEAR:
            return RobotState.NAVIGATING, [Action.of(ActionKind.RESUME_TASK)]
        if kind is EventKind.HUMAN_REPLY:
            intent = interpret_reply(event.text, question_for(last_judgment))
            if intent is ReplyIntent.PROCEED_GRANTED:
                return RobotState.PROCEEDING, _proceed_actions(last_judgment)
        return state, []

    if state is RobotState.REALLOCATED:
        if kind is EventKind.PATH_CLEAR:
            return RobotState.NAVIGATING, [Action.of(ActionKind.RESUME_TASK)]
        if kind is EventKind.HUMAN_REPLY:
            intent = interpret_reply(event.text, question_for(last_judgment))
            if intent is ReplyIntent.PROCEED_GRANTED:
                return RobotState.NAVIGATING, [Action.of(ActionKind.RESUME_TASK)]
        return state, []

    raise UndefinedTransition(state, event.describe())


# ---------------------------------------------------------------- 回合軌跡

@dataclass
class EpisodeTrace:
    """
    回合軌跡

    Attributes:
        transitions: (模擬時間, 進入的狀態, 事件)
        idle_s: 在 WaitingOnHuman / PassiveWaiting 的秒數
        reallocated_s: 在 Reallocated 的秒數
        blocked_s: 判斷為暢通但實際被擋住的秒數
        dialogue: (說話者, 文本)
        queries: 發問次數
        duration: 回合總長
    """
    transitions: List[Tuple[float, RobotState, DecisionEvent]] = field(default_factory=list)
    idle_s: float = 0.0
    reallocated_s: float = 0.0
    blocked_s: float = 0.0
    dialogue: List[Tuple[str, str]] = field(default_factory=list)
    queries: int = 0
    duration: float = 0.0
    scene_id: str = ""
    policy: str = ""

    @property
    def final_state(self) -> RobotState:
        return self.transitions[-1][1] if self.transitions else RobotState.NAVIGATING

    def to_dict(self) -> Dict:
        return {
            'scene_id': self.scene_id,
            'policy': self.policy,
            'transitions': [
                {'t': t, 'state': s.value, 'event': e.describe()} for t, s, e in self.transitions
            ],
            'idle_s': self.idle_s,
            'reallocated_s': self.reallocated_s,
            'blocked_s': self.blocked_s,
            'dialogue': [{'speaker': who, 'text': text} for who, text in self.dialogue],
            'queries': self.queries,
            'duration': self.duration,
            'final_state': self.final_state.value,
        }


class DecisionMachine:
    """
    單一擁有者的狀態機

    依序處理事件，負責：
    - 以 advance() 推進模擬時間並累計等待 / 改派 / 受阻秒數
    - 回覆不明確時重新詢問，超過 max_reasks 次後視為超時
    - 記錄轉移與對話
    """

    def __init__(self, policy: Policy, cfg: Optional[DecisionConfig] = None,
                 state: RobotState = RobotState.NAVIGATING):
        self.policy = policy
        self.cfg = cfg or DecisionConfig()
        self.state = state
        self.trace = EpisodeTrace()
        self.last_judgment: Optional[SceneJudgment] = None
        self.last_message = ""
        self.now = 0.0
        self._reasks = 0

    def advance(self, t: float, path_blocked: bool = False) -> None:
        """推進到時間 t，並把 [now, t) 記入目前狀態"""
        if t < self.now:
            raise ValueError(f"time went backwards: {t} < {self.now}")
        dt = t - self.now
        if self.state in WAITING_STATES:
            self.trace.idle_s += dt
        elif self.state is RobotState.REALLOCATED:
            self.trace.reallocated_s += dt
        elif self.state in _MOVING and path_blocked:
            self.trace.blocked_s += dt
        self.now = t
        self.trace.duration = t

    def deliver(self, event: DecisionEvent) -> List[Action]:
        """處理一個事件並回傳動作"""
        if event.kind is EventKind.HUMAN_REPLY:
            self.trace.dialogue.append(("human", event.text))
            if self.state is RobotState.QUERYING:
                asked = question_for(self.last_judgment)
                if interpret_reply(event.text, asked) is ReplyIntent.UNCLEAR:
                    self._reasks += 1
                    if self._reasks > self.cfg.max_reasks:
                        logger.info("回覆仍不明確，視為超時")
                        event = DecisionEvent.timeout()

        previous = self.state
        state, actions = step_fsm(previous, event, self.policy, self.last_judgment, self.cfg)

        if event.kind is EventKind.JUDGMENT and state is RobotState.QUERYING and previous is not state:
            self.last_judgment = event.judgment
            self.trace.queries += 1
            self._reasks = 0

        for action in actions:
            if action.kind is ActionKind.EMIT_MESSAGE:
                self.last_message = action.text
                self.trace.dialogue.append(("robot", action.text))
            elif action.kind is ActionKind.REASK:
                self.trace.dialogue.append(("robot", REASK_PREFIX + self.last_message))

        self.state = state
        self.trace.transitions.append((self.now, state, event))
        if state is not previous:
            logger.info(f"[t={self.now:g}s] {previous.value} → {state.value} ({event.describe()})")
        return actions

    def pending_question(self) -> Optional[str]:
        return self.last_message if self.state is RobotState.QUERYING else None

    @property
    def arrived(self) -> bool:
        return self.state is RobotState.ARRIVED
