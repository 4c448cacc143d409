# -*- coding: utf-8 -*-
"""
Labmate - 模型後端客戶端

兩種後端：
- Http：chat-completions 風格的 HTTP 端點（例如本地部署的 LLaVA）
- Mock：以規則真值為基礎、按機率 ε 翻轉標籤的確定性替身
"""

import base64
import hashlib
import logging
import mimetypes
import os
import threading
import time
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import requests

from config import API_CONFIG, MOCK_CONFIG
from core.decision import compose_message
from core.errors import BackendTimeoutError, ConfigError, TransportError
from core.perception import distance_matrix, nearest_equipment
from core.rules import RuleConfig, classify_scene, goal_straight_ahead
from core.scene import ClassLabel, Scene
from templates.prompts import PromptBundle, PromptVariant
from utils.response_parser import VlmResponse, format_response, parse_response

logger = logging.getLogger(__name__)


class BackendKind(Enum):
    MOCK = "mock"
    HTTP = "http"


@dataclass(frozen=True)
class BackendConfig:
    """
    後端配置

    Attributes:
        kind: mock / http
        endpoint_url: HTTP 端點（僅 http）
        model_name: 請求中的模型名稱
        timeout_ms: 單次請求超時（毫秒）
        max_retries: 傳輸失敗後的重試次數（總嘗試次數 = max_retries + 1）
        backoff_s: 指數退避基數，第 n 次重試前等待 backoff_s * 2**n 秒
        epsilon: 標籤翻轉機率（僅 mock）
        seed: 隨機種子（僅 mock）
        max_in_flight: 同一客戶端同時進行的請求上限
        attach_image: 是否附上影像
        lenient_parse: 允許寬鬆解析
        role: base / fine_tuned（評估差值表用）
        name: 顯示名稱
        assume_goal_ahead: mock 在無距離資訊時假設目標位於正前方
    """
    kind: BackendKind = BackendKind(API_CONFIG['kind'])
    endpoint_url: str = API_CONFIG['endpoint_url']
    model_name: str = API_CONFIG['model_name']
    timeout_ms: int = API_CONFIG['timeout_ms']
    max_retries: int = API_CONFIG['max_retries']
    backoff_s: float = API_CONFIG['backoff_s']
    epsilon: float = MOCK_CONFIG['epsilon']
    seed: int = MOCK_CONFIG['seed']
    max_in_flight: int = API_CONFIG['max_in_flight']
    attach_image: bool = API_CONFIG['attach_image']
    lenient_parse: bool = API_CONFIG['lenient_parse']
    role: str = "fine_tuned"
    name: str = ""
    assume_goal_ahead: bool = MOCK_CONFIG['assume_goal_ahead']

    def __post_init__(self):
        if not isinstance(self.kind, BackendKind):
            object.__setattr__(self, 'kind', BackendKind(str(self.kind).lower()))
        if not 0.0 <= float(self.epsilon) <= 1.0:
            raise ConfigError(f"backend.epsilon must be within [0, 1], got {self.epsilon}")
        if not isinstance(self.timeout_ms, int) or self.timeout_ms <= 0:
            raise ConfigError(f"backend.timeout_ms must be a positive integer, got {self.timeout_ms}")
        if not isinstance(self.max_retries, int) or self.max_retries < 0:
            raise ConfigError(f"backend.max_retries must be >= 0, got {self.max_retries}")
        if self.backoff_s < 0:
            raise ConfigError("backend.backoff_s must be >= 0")
        if self.max_in_flight < 1:
            raise ConfigError("backend.max_in_flight must be >= 1")
        if self.role not in ("base", "fine_tuned"):
            raise ConfigError(f"backend.role must be 'base' or 'fine_tuned', got {self.role!r}")
        if self.kind is BackendKind.HTTP and not self.endpoint_url:
            raise ConfigError("backend.endpoint_url is required for http backends")
        if not self.name:
            default = self.model_name if self.kind is BackendKind.HTTP else f"mock-eps{self.epsilon:g}"
            object.__setattr__(self, 'name', default)

    @classmethod
    def from_mapping(cls, data: Mapping) -> "BackendConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown backend keys: {sorted(unknown)}")
        try:
            return cls(**dict(data))
        except ValueError as e:
            raise ConfigError(f"invalid backend config: {e}") from None

    def with_overrides(self, **overrides) -> "BackendConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['kind'] = self.kind.value
        return data


# ---------------------------------------------------------------- Mock

def _scene_rng(seed: int, scene_id: str) -> np.random.Generator:
    """由 (seed, scene_id) 導出獨立亂數流，與評估順序與併發排程無關"""
    digest = hashlib.sha256(f"{seed}:{scene_id}".encode('utf-8')).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], 'big'))


def mock_judgment(
    scene: Scene,
    cfg: BackendConfig,
    rules: Optional[RuleConfig] = None,
    variant: Optional[PromptVariant] = None,
) -> VlmResponse:
    """
    Mock 後端判斷

    以規則真值為基礎，兩個標籤各自以機率 ε 翻轉；
    兩者皆真時附上對人說的話，其餘情況訊息為空。
    回應字串經過 parse_response 產生，因此必定可重新解析。
    """
    rules = rules or RuleConfig()
    report = distance_matrix(scene)

    goal_override = None
    if cfg.assume_goal_ahead and variant is PromptVariant.VISION_ONLY and scene.goal is not None:
        goal_override = goal_straight_ahead(scene.goal)

    oracle = classify_scene(scene, rules, report, goal_override=goal_override)

    rng = _scene_rng(cfg.seed, scene.scene_id)
    flips = rng.random(2) < cfg.epsilon
    obstruction = oracle.obstruction != bool(flips[0])
    interaction = oracle.interaction != bool(flips[1])

    message = ""
    if obstruction and interaction:
        target = nearest_equipment(scene, report)
        equipment = target.label if target is not None else ClassLabel.FUMEHOOD
        message = compose_message((True, True), equipment)

    return parse_response(format_response(obstruction, interaction, message))


# ---------------------------------------------------------------- HTTP

class ChatCompletionsClient:
    """chat-completions 風格的 HTTP 客戶端（含重試、退避與併發上限）"""

    def __init__(self, cfg: BackendConfig, api_key: Optional[str] = None):
        self.cfg = cfg
        self.api_key = api_key if api_key is not None else os.getenv(API_CONFIG['api_key_env'])
        self.timeout = cfg.timeout_ms / 1000.0
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)
        self._stats_lock = threading.Lock()

        # 統計
        self.request_count = 0
        self.retry_count = 0
        self.failure_count = 0
        self.total_tokens_input = 0
        self.total_tokens_output = 0

        logger.info(f"後端客戶端已建立: {cfg.name} @ {cfg.endpoint_url}")

    def _image_part(self, image_ref: str) -> Dict:
        """本地檔案轉為 base64 data URL，其他參照原樣轉交"""
        if os.path.isfile(image_ref):
            mime = mimetypes.guess_type(image_ref)[0] or 'application/octet-stream'
            with open(image_ref, 'rb') as f:
                encoded = base64.b64encode(f.read()).decode('ascii')
            url = f"data:{mime};base64,{encoded}"
        else:
            url = image_ref
        return {'type': 'image_url', 'image_url': {'url': url}}

    def build_payload(self, bundle: PromptBundle) -> Dict:
        content: List[Dict] = [{'type': 'text', 'text': bundle.text}]
        if bundle.format_hint:
            content.append({'type': 'text', 'text': bundle.format_hint})
        if self.cfg.attach_image and bundle.image_ref:
            content.append(self._image_part(bundle.image_ref))
        return {
            'model': self.cfg.model_name,
            'messages': [{'role': 'user', 'content': content}],
            'stream': False,
        }

    def _headers(self) -> Dict[str, str]:
        headers = {'Content-Type': 'application/json'}
        if self.api_key:
            headers['Authorization'] = f'Bearer {self.api_key}'
        return headers

    def complete(self, bundle: PromptBundle) -> str:
        """
        發送請求並回傳模型文本

        Raises:
            BackendTimeoutError: 重試用盡且最後一次為超時
            TransportError: 重試用盡，或狀態碼不可重試（如 401、400）
        """
        payload = self.build_payload(bundle)
        attempts = self.cfg.max_retries + 1
        last_error = None
        last_was_timeout = False
        rejected = None

        with self._slots:
            for attempt in range(attempts):
                if attempt > 0:
                    with self._stats_lock:
                        self.retry_count += 1
                    time.sleep(self.cfg.backoff_s * 2 ** (attempt - 1))
                try:
                    response = requests.post(
                        self.cfg.endpoint_url,
                        headers=self._headers(),
                        json=payload,
                        timeout=self.timeout,
                    )
                    if response.status_code != 200:
                        if not _retryable_status(response.status_code):
                            rejected = f"HTTP {response.status_code}: {response.text[:200]}"
                            break
                        raise TransportError(f"HTTP {response.status_code}: {response.text[:200]}")

                    result = response.json()
                    content, usage = _extract_content(result)

                    with self._stats_lock:
                        self.request_count += 1
                        self.total_tokens_input += usage.get('prompt_tokens', 0)
                        self.total_tokens_output += usage.get('completion_tokens', 0)
                    logger.debug(f"後端回應 ({self.cfg.name}): {content[:80]!r}")
                    return content

                except requests.exceptions.Timeout:
                    last_error = "請求超時"
                    last_was_timeout = True
                    logger.warning(f"請求超時（第 {attempt + 1}/{attempts} 次）")

                except requests.exceptions.ConnectionError as e:
                    last_error = f"網路連接失敗: {e}"
                    last_was_timeout = False
                    logger.warning(f"網路連接失敗（第 {attempt + 1}/{attempts} 次）")

                except (TransportError, ValueError, requests.exceptions.RequestException) as e:
                    last_error = str(e)
                    last_was_timeout = False
                    logger.warning(f"請求失敗（第 {attempt + 1}/{attempts} 次）: {e}")

        with self._stats_lock:
            self.failure_count += 1
        if rejected is not None:
            error_msg = f"後端拒絕請求（不重試）: {rejected}"
            logger.error(error_msg)
            raise TransportError(error_msg)
        error_msg = f"後端調用失敗（共嘗試 {attempts} 次）: {last_error}"
        logger.error(error_msg)
        if last_was_timeout:
            raise BackendTimeoutError(error_msg)
        raise TransportError(error_msg)

    def judge(self, bundle: PromptBundle) -> VlmResponse:
        return parse_response(self.complete(bundle), lenient=self.cfg.lenient_parse)

    def get_statistics(self) -> Dict:
        """獲取統計信息"""
        with self._stats_lock:
            return {
                'model': self.cfg.model_name,
                'endpoint': self.cfg.endpoint_url,
                'request_count': self.request_count,
                'retry_count': self.retry_count,
                'failure_count': self.failure_count,
                'total_tokens': self.total_tokens_input + self.total_tokens_output,
            }

    def print_statistics(self):
        """打印統計信息"""
        stats = self.get_statistics()

        print("\n" + "=" * 60)
        print("📊 後端調用統計")
        print("=" * 60)
        print(f"模型.................... {stats['model']}")
        print(f"端點.................... {stats['endpoint']}")
        print(f"成功請求................ {stats['request_count']}")
        print(f"重試次數................ {stats['retry_count']}")
        print(f"失敗次數................ {stats['failure_count']}")
        print(f"總 Token 使用........... {stats['total_tokens']:,}")
        print("=" * 60 + "\n")


def _retryable_status(status: int) -> bool:
    """429 與 5xx 可重試；其他狀態碼（401、400 等）直接失敗"""
    return status == 429 or status >= 500


def _extract_content(result) -> Tuple[str, Dict]:
    """取出 choices[0].message.content；形狀不符時拋出 ValueError"""
    try:
        content = result['choices'][0]['message']['content']
    except (KeyError, IndexError, TypeError):
        raise ValueError(f"API 回應格式異常: {str(result)[:200]}") from None
    if not isinstance(content, str):
        raise ValueError("API 回應的 content 不是文字")
    usage = result.get('usage') or {}
    return content, usage if isinstance(usage, dict) else {}


_clients: Dict[BackendConfig, ChatCompletionsClient] = {}
_clients_lock = threading.Lock()


def get_client(cfg: BackendConfig) -> ChatCompletionsClient:
    """同一配置共用一個客戶端，使併發上限對所有調用生效"""
    with _clients_lock:
        client = _clients.get(cfg)
        if client is None:
            client = ChatCompletionsClient(cfg)
            _clients[cfg] = client
        return client


def query_backend(
    bundle: PromptBundle,
    cfg: BackendConfig,
    scene: Scene,
    rules: Optional[RuleConfig] = None,
) -> VlmResponse:
    """
    向後端查詢場景判斷

    Raises:
        TransportError / BackendTimeoutError: HTTP 重試用盡
        ParseError: 模型輸出不符格式（原文保存在錯誤中）
    """
    if cfg.kind is BackendKind.MOCK:
        return mock_judgment(scene, cfg, rules, bundle.variant)
    return get_client(cfg).judge(bundle)


if __name__ == '__main__':
    from dotenv import load_dotenv

    from config import LOGGING_CONFIG
    from core.scene import Position3, Scenario, SceneObject
    from templates.prompts import build_prompt

    load_dotenv()
    logging.basicConfig(level=LOGGING_CONFIG['level'], format=LOGGING_CONFIG['format'])

    demo = Scene(
        scene_id="demo",
        scenario=Scenario.S1,
        objects=(
            SceneObject(ClassLabel.HUMAN_CHEMIST, 0, Position3(2.0, 0.4, 0.0)),
            SceneObject(ClassLabel.FUMEHOOD, 0, Position3(2.0, 0.0, 0.0)),
        ),
        goal=Position3(2.0, 0.0, 0.0),
    )
    bundle = build_prompt(demo, distance_matrix(demo), PromptVariant.VISION_PLUS_DEPTH)
    print(query_backend(bundle, BackendConfig(), demo))
