# -*- coding: utf-8 -*-
"""
Labmate - 場景生成器

依 (seed, scenario, index) 確定性地產生 S1 / S2 / S3 場景：
1. 依類別比例（最大餘數法）決定每個 index 的目標類別
2. 在房間範圍內拒絕取樣，直到無噪聲場景經規則標註後落在目標類別
3. 真值取自無噪聲場景，再對輸出的位置（或偵測）加上感測噪聲
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config import SCENARIO_CLASS_MIX, SIM_CONFIG
from core.errors import ConfigError, InfeasiblePlacement
from core.rules import RuleConfig, ScenarioClass, classify_scene, to_class
from core.scene import (
    CameraIntrinsics,
    ClassLabel,
    Position3,
    Scenario,
    Scene,
    SceneObject,
)
from utils.scene_io import ingest_scene, write_records

logger = logging.getLogger(__name__)

CLASS_ORDER = (ScenarioClass.OBSTRUCT_INTERACT, ScenarioClass.NEITHER, ScenarioClass.OBSTRUCT_ONLY)
_SCENARIO_STREAM = {Scenario.S1: 1, Scenario.S2: 2, Scenario.S3: 3}

# 相機光學座標 (x 右, y 下, z 前) → 機器人座標 (x 前, y 左, z 上)
MOUNTED_ROTATION = ((0.0, 0.0, 1.0), (-1.0, 0.0, 0.0), (0.0, -1.0, 0.0))
BBOX_HALF_SIZE = {
    ClassLabel.HUMAN_CHEMIST: (30.0, 90.0),
    ClassLabel.INSTRUMENT: (40.0, 30.0),
    ClassLabel.FUMEHOOD: (80.0, 100.0),
}

_MIN_FORWARD_M = 0.5
_WALL_MARGIN_M = 0.5
_EQUIPMENT_SPACING_M = 1.5


@dataclass(frozen=True)
class NoiseModel:
    """
    感測噪聲

    Attributes:
        pos_sigma_m: 位置抖動標準差
        depth_sigma_m: 沿視線方向的深度噪聲標準差
        dropout_p: 物件漏偵測機率
    """
    pos_sigma_m: float = SIM_CONFIG['pos_sigma_m']
    depth_sigma_m: float = SIM_CONFIG['depth_sigma_m']
    dropout_p: float = SIM_CONFIG['dropout_p']

    def __post_init__(self):
        if self.pos_sigma_m < 0 or self.depth_sigma_m < 0:
            raise ConfigError("noise sigmas must be >= 0")
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ConfigError("noise.dropout_p must be within [0, 1]")

    @property
    def is_clean(self) -> bool:
        return self.pos_sigma_m == 0 and self.depth_sigma_m == 0 and self.dropout_p == 0


@dataclass(frozen=True)
class ScenarioSpec:
    """
    場景 / 回合生成規格

    Attributes:
        scenario: S1 / S2 / S3
        count: 場景數
        seed: 非負整數種子
        noise: 感測噪聲
        occupancy_s: 人佔用設備的秒數（回合模擬用）
        class_mix: (ObstructInteract, Neither, ObstructOnly) 比例，總和為 1；None 時取場景預設
        rules: 標註用的距離規則
        room_depth_m / room_width_m: 房間範圍
        emit_detections: 以邊界框 + 深度輸出，而非已定位的位置
        max_attempts: 每個場景的拒絕取樣上限
        decimals: 座標小數位數
    """
    scenario: Scenario = Scenario.S1
    count: int = 1
    seed: int = 0
    noise: NoiseModel = field(default_factory=NoiseModel)
    occupancy_s: int = SIM_CONFIG['occupancy_s']
    class_mix: Optional[Tuple[float, float, float]] = SIM_CONFIG['class_mix']
    rules: RuleConfig = field(default_factory=RuleConfig)
    room_depth_m: float = SIM_CONFIG['room_depth_m']
    room_width_m: float = SIM_CONFIG['room_width_m']
    emit_detections: bool = False
    max_attempts: int = SIM_CONFIG['max_placement_attempts']
    decimals: int = SIM_CONFIG['coordinate_decimals']

    def __post_init__(self):
        if self.scenario not in _SCENARIO_STREAM:
            raise ConfigError(f"scenario must be s1, s2 or s3, got {self.scenario}")
        if self.class_mix is None:
            object.__setattr__(self, 'class_mix', tuple(SCENARIO_CLASS_MIX[self.scenario.value]))
        if not isinstance(self.count, int) or self.count < 1:
            raise ConfigError(f"count must be >= 1, got {self.count}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if len(self.class_mix) != 3 or any(p < 0 for p in self.class_mix):
            raise ConfigError("class_mix must be three non-negative probabilities")
        if abs(sum(self.class_mix) - 1.0) > 1e-9:
            raise ConfigError(f"class_mix must sum to 1, got {sum(self.class_mix)}")
        if self.occupancy_s < 0:
            raise ConfigError("occupancy_s must be >= 0")
        if self.room_depth_m <= 2 * _MIN_FORWARD_M or self.room_width_m <= 2 * _WALL_MARGIN_M:
            raise ConfigError("room is too small")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")

    @classmethod
    def from_mapping(cls, data: Mapping, **overrides) -> "ScenarioSpec":
        """由 [sim] 配置表建立；噪聲參數攤平在同一層"""
        data = dict(data)
        data.update({k: v for k, v in overrides.items() if v is not None})
        noise_keys = {'pos_sigma_m', 'depth_sigma_m', 'dropout_p'}
        noise = NoiseModel(**{k: data.pop(k) for k in list(data) if k in noise_keys})
        if 'scenario' in data and not isinstance(data['scenario'], Scenario):
            data['scenario'] = Scenario.parse(data['scenario'])
        if data.get('class_mix') is not None:
            data['class_mix'] = tuple(float(p) for p in data['class_mix'])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown sim keys: {sorted(unknown)}")
        return cls(noise=noise, **data)

    def with_overrides(self, **overrides) -> "ScenarioSpec":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


# ---------------------------------------------------------------- 類別分配

def allocate_counts(count: int, class_mix: Sequence[float]) -> List[int]:
    """最大餘數法：各類別數量與 count × 比例 相差不超過 1"""
    quotas = [count * p for p in class_mix]
    counts = [int(math.floor(q)) for q in quotas]
    remainder = count - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


@lru_cache(maxsize=64)
def _class_schedule(count: int, class_mix: Tuple[float, ...], seed: int, stream: int) -> Tuple[ScenarioClass, ...]:
    schedule: List[ScenarioClass] = []
    for klass, n in zip(CLASS_ORDER, allocate_counts(count, class_mix)):
        schedule.extend([klass] * n)
    rng = np.random.default_rng([seed, stream])
    return tuple(schedule[i] for i in rng.permutation(len(schedule)))


def class_for_index(spec: ScenarioSpec, index: int) -> ScenarioClass:
    return _class_schedule(spec.count, tuple(spec.class_mix), spec.seed, _SCENARIO_STREAM[spec.scenario])[index]


# S2 的人只在通道上或通道外、遠離設備
_FEASIBLE_CLASSES = {
    Scenario.S1: frozenset(CLASS_ORDER),
    Scenario.S2: frozenset({ScenarioClass.NEITHER, ScenarioClass.OBSTRUCT_ONLY}),
    Scenario.S3: frozenset(CLASS_ORDER),
}


def check_feasible(spec: ScenarioSpec) -> None:
    """
    類別比例不得給該場景擺不出的類別任何權重

    Raises:
        InfeasiblePlacement: 例如 S2 要求 ObstructInteract
    """
    for klass, weight in zip(CLASS_ORDER, spec.class_mix):
        if weight > 0 and klass not in _FEASIBLE_CLASSES[spec.scenario]:
            raise InfeasiblePlacement(
                f"{spec.scenario.value} cannot place class {klass.value} (class_mix weight {weight:g})"
            )


# ---------------------------------------------------------------- 取樣

class _Sampler:
    """單一場景的拒絕取樣器"""

    def __init__(self, spec: ScenarioSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.half_width = spec.room_width_m / 2.0

    def point(self, x: float, y: float) -> Position3:
        d = self.spec.decimals
        return Position3(round(float(x), d), round(float(y), d), 0.0)

    def in_room(self, p: Position3) -> bool:
        return _MIN_FORWARD_M <= p.x <= self.spec.room_depth_m and abs(p.y) <= self.half_width

    def anywhere(self) -> Position3:
        return self.point(
            self.rng.uniform(_MIN_FORWARD_M, self.spec.room_depth_m),
            self.rng.uniform(-self.half_width, self.half_width),
        )

    def equipment_spot(self) -> Position3:
        return self.point(
            self.rng.uniform(3.0, self.spec.room_depth_m - _WALL_MARGIN_M),
            self.rng.uniform(-self.half_width + _WALL_MARGIN_M, self.half_width - _WALL_MARGIN_M),
        )

    def near(self, anchor: Position3) -> Position3:
        """設備附近、操作距離以內"""
        r = self.rng.uniform(0.25, 0.95) * self.spec.rules.t_interact_m
        theta = self.rng.uniform(0.0, 2 * math.pi)
        return self.point(anchor.x + r * math.cos(theta), anchor.y + r * math.sin(theta))

    def on_corridor(self, goal: Position3) -> Position3:
        """機器人 → 目標線段上，橫向偏移小於通道半寬"""
        t = self.rng.uniform(0.15, 0.85)
        lateral = self.rng.uniform(-0.9, 0.9) * self.spec.rules.corridor_halfwidth_m
        length = math.hypot(goal.x, goal.y) or 1.0
        perp_x, perp_y = -goal.y / length, goal.x / length
        return self.point(goal.x * t + perp_x * lateral, goal.y * t + perp_y * lateral)

    def human_for(self, klass: ScenarioClass, goal: Position3, equipment: List[SceneObject],
                  target: Optional[SceneObject]) -> Position3:
        if klass is ScenarioClass.OBSTRUCT_INTERACT:
            anchor = target if target is not None else equipment[self.rng.integers(len(equipment))]
            return self.near(anchor.position)
        if klass is ScenarioClass.OBSTRUCT_ONLY:
            return self.on_corridor(goal)
        return self.anywhere()

    def layout(self) -> Tuple[List[SceneObject], Position3, SceneObject]:
        """設備擺放；回傳 (設備, 目標點, 目標設備)"""
        scenario = self.spec.scenario
        if scenario is Scenario.S1:
            goal_label, other_label = ClassLabel.FUMEHOOD, ClassLabel.INSTRUMENT
        elif scenario is Scenario.S2:
            goal_label, other_label = ClassLabel.INSTRUMENT, ClassLabel.FUMEHOOD
        elif self.rng.random() < 0.5:
            goal_label, other_label = ClassLabel.FUMEHOOD, ClassLabel.INSTRUMENT
        else:
            goal_label, other_label = ClassLabel.INSTRUMENT, ClassLabel.FUMEHOOD

        goal_pos = self.equipment_spot()
        other_pos = self.equipment_spot()
        target = SceneObject(goal_label, 0, goal_pos)
        other = SceneObject(other_label, 0, other_pos)
        return [target, other], goal_pos, target

    def candidate(self, klass: ScenarioClass) -> Optional[Scene]:
        equipment, goal, target = self.layout()
        if math.dist(equipment[0].position.as_list(), equipment[1].position.as_list()) < _EQUIPMENT_SPACING_M:
            return None

        scenario = self.spec.scenario
        # S1 的操作對象固定為目標設備；S3 可以是任一設備（S2 不會要求此類別）
        interact_target = target if scenario is Scenario.S1 else None
        humans = [self.human_for(klass, goal, equipment, interact_target)]
        if scenario is Scenario.S3:
            extra = int(self.rng.integers(1, 3))
            for _ in range(extra):
                # 其他人不得改變場景類別，交由標註器檢查
                humans.append(self.human_for(ScenarioClass.NEITHER, goal, equipment, None))

        if not all(self.in_room(p) for p in humans):
            return None

        objects = tuple(
            [SceneObject(ClassLabel.HUMAN_CHEMIST, i, p) for i, p in enumerate(humans)] + equipment
        )
        return Scene(scene_id="", scenario=scenario, objects=objects, goal=goal)


def scene_id_for(spec: ScenarioSpec, index: int) -> str:
    return f"{spec.scenario.value}-{spec.seed}-{index:05d}"


def _scene_rng(spec: ScenarioSpec, index: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, _SCENARIO_STREAM[spec.scenario], index])


def _clean_scene(spec: ScenarioSpec, index: int, rng: np.random.Generator) -> Scene:
    check_feasible(spec)
    klass = class_for_index(spec, index)
    sampler = _Sampler(spec, rng)
    for _ in range(spec.max_attempts):
        candidate = sampler.candidate(klass)
        if candidate is None:
            continue
        judgment = classify_scene(candidate, spec.rules)
        if to_class(judgment) is klass:
            return replace(candidate, scene_id=scene_id_for(spec, index), truth=judgment.labels)
    raise InfeasiblePlacement(
        f"{spec.scenario.value} index {index}: no placement for class {klass.value} "
        f"after {spec.max_attempts} attempts"
    )


def generate_clean_scene(spec: ScenarioSpec, index: int) -> Scene:
    """無噪聲場景（真值的來源）"""
    _check_index(spec, index)
    return _clean_scene(spec, index, _scene_rng(spec, index))


def _check_index(spec: ScenarioSpec, index: int) -> None:
    if not 0 <= index < spec.count:
        raise IndexError(f"index {index} out of range for count {spec.count}")


# ---------------------------------------------------------------- 噪聲

def _jitter(p: Position3, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    arr = p.as_array()
    if noise.pos_sigma_m > 0:
        arr = arr + rng.normal(0.0, noise.pos_sigma_m, size=3)
    return arr


def _scale_along_ray(arr: np.ndarray, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    if noise.depth_sigma_m <= 0:
        return arr
    r = float(np.linalg.norm(arr))
    if r == 0.0:
        return arr
    r_noisy = max(r + rng.normal(0.0, noise.depth_sigma_m), 1e-3)
    return arr * (r_noisy / r)


def mounted_camera() -> CameraIntrinsics:
    """朝前安裝於機器人原點的預設相機"""
    base = CameraIntrinsics.default()
    return replace(base, rotation=MOUNTED_ROTATION)


def _noisy_positions(clean: Scene, spec: ScenarioSpec, rng: np.random.Generator) -> List[SceneObject]:
    objects = []
    for obj in clean.objects:
        dropped = spec.noise.dropout_p > 0 and rng.random() < spec.noise.dropout_p
        arr = _scale_along_ray(_jitter(obj.position, spec.noise, rng), spec.noise, rng)
        if dropped:
            continue
        pos = Position3(*(round(float(v), spec.decimals) for v in arr))
        objects.append(SceneObject(obj.label, obj.instance_id, pos))
    return objects


def _detection_records(clean: Scene, spec: ScenarioSpec, cam: CameraIntrinsics,
                       rng: np.random.Generator) -> List[Dict]:
    records = []
    d = spec.decimals
    for obj in clean.objects:
        dropped = spec.noise.dropout_p > 0 and rng.random() < spec.noise.dropout_p
        u, v, depth = cam.project(Position3.from_array(_jitter(obj.position, spec.noise, rng)))
        if spec.noise.depth_sigma_m > 0:
            depth = depth + rng.normal(0.0, spec.noise.depth_sigma_m)
        hw, hh = BBOX_HALF_SIZE[obj.label]
        records.append({
            'label': obj.label.value,
            'instance_id': obj.instance_id,
            'bbox': [round(u - hw, d), round(v - hh, d), round(u + hw, d), round(v + hh, d)],
            'depth_m': None if dropped or depth <= 0 else round(float(depth), d),
        })
    return records


# ---------------------------------------------------------------- 公開介面

def generate_record(spec: ScenarioSpec, index: int) -> Dict:
    """
    產生一筆 JSONL 記錄（含真值）

    同一 (seed, scenario, index) 永遠得到相同的記錄。
    """
    _check_index(spec, index)
    rng = _scene_rng(spec, index)
    clean = _clean_scene(spec, index, rng)

    if spec.emit_detections:
        cam = mounted_camera()
        record = {
            'scene_id': clean.scene_id,
            'scenario': clean.scenario.value,
            'goal': clean.goal.as_list(spec.decimals),
            'objects': _detection_records(clean, spec, cam, rng),
            'intrinsics': cam.to_dict(),
        }
    else:
        noisy = clean.with_objects(_noisy_positions(clean, spec, rng))
        record = noisy.to_record(spec.decimals)
        record.pop('truth', None)

    o, i = clean.truth
    record['truth'] = {'obstruction': o, 'interaction': i}
    return record


def generate_scene(spec: ScenarioSpec, index: int) -> Scene:
    """
    產生一個帶真值的場景（已加噪聲）

    Raises:
        InfeasiblePlacement: 規則閾值與房間範圍下無法擺出目標類別
    """
    return ingest_scene(generate_record(spec, index))


def iter_records(spec: ScenarioSpec, progress: bool = False) -> Iterator[Dict]:
    indices = range(spec.count)
    if progress:
        indices = tqdm(indices, desc=f"generate {spec.scenario.value}", unit="scene")
    for index in indices:
        yield generate_record(spec, index)


def generate_dataset(spec: ScenarioSpec, out, progress: bool = False) -> int:
    """
    產生 JSONL 資料集

    Args:
        spec: 生成規格
        out: 檔案路徑或文字串流
        progress: 顯示進度條

    Returns:
        寫出的場景數

    Raises:
        DatasetIOError: 無法寫入
        InfeasiblePlacement: 無法擺放
    """
    check_feasible(spec)
    written = write_records(iter_records(spec, progress), out)
    logger.info(f"已產生 {written} 個 {spec.scenario.value} 場景 (seed={spec.seed})")
    return written


def class_counts(scenes: Sequence[Scene]) -> Dict[str, int]:
    """依真值統計類別數量"""
    counts = {klass.value: 0 for klass in CLASS_ORDER}
    for scene in scenes:
        if scene.truth is not None:
            counts[ScenarioClass.from_labels(*scene.truth).value] += 1
    return counts
