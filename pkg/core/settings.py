# -*- coding: utf-8 -*-
"""
Labmate - 全域配置

解析順序：config.py 預設值 < TOML 配置文件 < 命令列參數。
配置文件路徑來自 --config 或環境變數 LABMATE_CONFIG。

TOML 區段：[rules] [backend] [decision] [sim] [eval] [paths]
"""

import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

from config import EVAL_CONFIG, PROJECT_CONFIG
from core.api_client import BackendConfig
from core.decision import DecisionConfig
from core.errors import ConfigError
from core.rules import RuleConfig
from utils.scenario_generator import ScenarioSpec

logger = logging.getLogger(__name__)

SECTIONS = ('rules', 'backend', 'decision', 'sim', 'eval', 'paths')
EVAL_KEYS = {'folds', 'seed'}
PATH_KEYS = {'dataset', 'report', 'out'}


@dataclass(frozen=True)
class GlobalConfig:
    """
    已解析的全域配置

    Attributes:
        rules: 距離規則
        backend: 後端
        decision: 決策時間參數
        sim: 場景生成預設值
        eval: 評估參數（folds, seed）
        paths: 預設檔案路徑
        verbosity: -1 安靜 / 0 一般 / 1 詳細
        source: 配置文件路徑（若有）
    """
    rules: RuleConfig = field(default_factory=RuleConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    decision: DecisionConfig = field(default_factory=DecisionConfig)
    sim: ScenarioSpec = field(default_factory=ScenarioSpec)
    eval: Dict = field(default_factory=lambda: {'folds': EVAL_CONFIG['folds'], 'seed': EVAL_CONFIG['seed']})
    paths: Dict = field(default_factory=dict)
    verbosity: int = 0
    source: Optional[str] = None

    def to_dict(self) -> Dict:
        return {
            'rules': self.rules.to_dict(),
            'backend': self.backend.to_dict(),
            'decision': self.decision.to_dict(),
            'sim': {
                'scenario': self.sim.scenario.value,
                'count': self.sim.count,
                'seed': self.sim.seed,
                'occupancy_s': self.sim.occupancy_s,
                'class_mix': list(self.sim.class_mix),
                'pos_sigma_m': self.sim.noise.pos_sigma_m,
                'depth_sigma_m': self.sim.noise.depth_sigma_m,
                'dropout_p': self.sim.noise.dropout_p,
            },
            'eval': dict(self.eval),
            'paths': dict(self.paths),
            'source': self.source,
        }

    def print_summary(self) -> None:
        """打印配置摘要"""
        print("\n" + "=" * 60)
        print("⚙️  Labmate 配置")
        print("=" * 60)
        print(f"配置文件................ {self.source or '（無，使用預設值）'}")
        for section, values in self.to_dict().items():
            if not isinstance(values, dict):
                continue
            print(f"\n[{section}]")
            for key, value in values.items():
                print(f"  {key:22s} {value}")
        print("=" * 60 + "\n")


def read_config_file(path: str) -> Dict[str, Dict]:
    """
    讀取 TOML 配置文件

    Raises:
        ConfigError: 檔案不存在、語法錯誤或含有未知區段
    """
    try:
        with open(path, 'rb') as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"配置文件不存在: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"配置文件語法錯誤 {path}: {e}") from None
    except OSError as e:
        raise ConfigError(f"無法讀取配置文件 {path}: {e}") from None

    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for section, values in data.items():
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
    return data


def _merge(base: Mapping, overrides: Optional[Mapping]) -> Dict:
    merged = dict(base)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _check_keys(section: str, values: Mapping, allowed: set) -> None:
    unknown = set(values) - allowed
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")


def resolve_config(
    config_path: Optional[str] = None,
    overrides: Optional[Mapping[str, Mapping]] = None,
    verbosity: int = 0,
) -> GlobalConfig:
    """
    解析全域配置

    Args:
        config_path: 配置文件；None 時讀取 LABMATE_CONFIG 環境變數
        overrides: 命令列參數，依區段分組（值為 None 的項目忽略）
        verbosity: 日誌詳細程度

    Returns:
        GlobalConfig

    Raises:
        ConfigError: 未知區段 / 鍵或無效值
    """
    overrides = overrides or {}
    unknown = set(overrides) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown override sections: {sorted(unknown)}")

    path = config_path or os.getenv(PROJECT_CONFIG['config_env'])
    file_data = read_config_file(path) if path else {}
    if path:
        logger.info(f"已載入配置文件: {path}")

    sections = {s: _merge(file_data.get(s, {}), overrides.get(s)) for s in SECTIONS}

    rules = RuleConfig.from_mapping(sections['rules'])
    backend = BackendConfig.from_mapping(sections['backend'])
    decision = DecisionConfig.from_mapping(sections['decision'])
    sim = ScenarioSpec.from_mapping(sections['sim'], rules=rules)

    _check_keys('eval', sections['eval'], EVAL_KEYS)
    _check_keys('paths', sections['paths'], PATH_KEYS)
    eval_cfg = _merge({'folds': EVAL_CONFIG['folds'], 'seed': EVAL_CONFIG['seed']}, sections['eval'])

    return GlobalConfig(
        rules=rules,
        backend=backend,
        decision=decision,
        sim=sim,
        eval=eval_cfg,
        paths=dict(sections['paths']),
        verbosity=verbosity,
        source=path,
    )
