# -*- coding: utf-8 -*-
"""
Labmate 人機共享實驗室決策系統 - 配置文件
感知 → 推理 → 決策 三段流程的預設參數
"""

# 專案版本
VERSION = '0.1.0'
VERSION_NAME = 'Shared Lab Edition'

# 距離規則（單位：公尺）
# 閾值依照通風櫥操作距離與機器人底盤寬度估算
RULE_CONFIG = {
    't_interact_m': 0.8,           # 人與設備距離小於此值視為正在操作
    'corridor_halfwidth_m': 0.6,   # 機器人 → 目標線段兩側的通道半寬
    't_obstruct_m': 1.2,           # 沒有目標點時，人與機器人距離的備用閾值
}

# 後端 API 配置
API_CONFIG = {
    'kind': 'mock',
    'endpoint_url': 'http://localhost:8000/v1/chat/completions',
    'model_name': 'llava-1.5-7b',
    'timeout_ms': 30000,
    'max_retries': 3,
    'backoff_s': 1.0,
    'max_in_flight': 4,
    'attach_image': True,
    'lenient_parse': False,
    'api_key_env': 'LABMATE_API_KEY',
}

# Mock 後端（確定性替身）
MOCK_CONFIG = {
    'epsilon': 0.0,          # 每個標籤獨立翻轉的機率
    'seed': 0,
    'assume_goal_ahead': False,
}

# 決策狀態機時間參數（模擬秒）
DECISION_CONFIG = {
    'query_timeout_s': 30,
    'reallocation_delay_s': 5,
    'reply_delay_s': 0,
    'travel_s': 3,
}

# 場景模擬器
SIM_CONFIG = {
    'room_depth_m': 8.0,
    'room_width_m': 6.0,
    'occupancy_s': 60,
    'class_mix': None,                    # None 時依場景取 SCENARIO_CLASS_MIX
    'pos_sigma_m': 0.0,
    'depth_sigma_m': 0.0,
    'dropout_p': 0.0,
    'max_placement_attempts': 200,
    'coordinate_decimals': 6,
}

# 各場景預設類別比例 (ObstructInteract, Neither, ObstructOnly)
# S2 的人在通道上或通道外、遠離設備，沒有「操作中」這一類
SCENARIO_CLASS_MIX = {
    's1': (1 / 3, 1 / 3, 1 / 3),
    's2': (0.0, 0.5, 0.5),
    's3': (1 / 3, 1 / 3, 1 / 3),
}

# 預設相機（RealSense D435i 級別的 640x480 內參）
CAMERA_CONFIG = {
    'fx': 615.0,
    'fy': 615.0,
    'cx': 320.0,
    'cy': 240.0,
    'width': 640,
    'height': 480,
}

# 評估流程
EVAL_CONFIG = {
    'folds': 5,
    'seed': 0,
    'schema_version': '1',
}

# 專案配置
PROJECT_CONFIG = {
    'encoding': 'utf-8',
    'config_env': 'LABMATE_CONFIG',
}

# 日誌配置
LOGGING_CONFIG = {
    'level': 'INFO',
    'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
}

# 版本更新日誌
CHANGELOG = """
V0.1.0 - 初版
- ✨ 感知：邊界框 + 深度 → 機器人座標系 3D 位置 → 兩兩距離矩陣
- ✨ 規則：距離閾值 + 通道判斷的真值標註器
- ✨ 推理：標準化提示詞、Chat Completions 後端、結構化回應解析
- ✨ 決策：主動詢問 / 被動等待 兩種策略的狀態機
- ✨ 模擬與評估：S1/S2/S3 場景生成、5 折交叉驗證、準確率差值表
"""
