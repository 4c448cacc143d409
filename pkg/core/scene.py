# -*- coding: utf-8 -*-
"""
Labmate - 場景資料類型

感知階段的基本單位：類別標籤、相機內外參、偵測框、3D 位置與場景。
座標系約定：機器人位於原點，x 朝前、y 朝左、z 朝上（公尺）。
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config import CAMERA_CONFIG
from core.errors import DegenerateDepth, NonFiniteValue, SchemaError

ROBOT_NODE = "robot"


class ClassLabel(Enum):
    """偵測類別（封閉集合）；機器人本身以座標原點隱式表示"""
    HUMAN_CHEMIST = "human_chemist"
    INSTRUMENT = "instrument"
    FUMEHOOD = "fumehood"

    @property
    def is_human(self) -> bool:
        return self is ClassLabel.HUMAN_CHEMIST

    @property
    def is_equipment(self) -> bool:
        return not self.is_human

    @classmethod
    def parse(cls, name, field_name: str = "label") -> "ClassLabel":
        """由序列化名稱解析，未知標籤拋出 SchemaError"""
        try:
            return cls(name)
        except ValueError:
            raise SchemaError(field_name, f"unknown label {name!r}") from None


class Scenario(Enum):
    """互動場景：S1 人在目標設備前、S2 人擋在路上、S3 多人"""
    S1 = "s1"
    S2 = "s2"
    S3 = "s3"
    UNKNOWN = "unknown"

    @classmethod
    def parse(cls, name, field_name: str = "scenario") -> "Scenario":
        if name is None:
            return cls.UNKNOWN
        try:
            return cls(str(name).lower())
        except ValueError:
            raise SchemaError(field_name, f"unknown scenario {name!r}") from None


def _require_finite(values: Iterable[float], what: str) -> None:
    for v in values:
        if not math.isfinite(v):
            raise NonFiniteValue(f"{what}: non-finite value {v!r}")


@dataclass(frozen=True)
class Position3:
    """機器人座標系下的 3D 位置（公尺）"""
    x: float
    y: float
    z: float

    def __post_init__(self):
        _require_finite((self.x, self.y, self.z), "position")

    @classmethod
    def from_sequence(cls, values, field_name: str = "position") -> "Position3":
        if not isinstance(values, (list, tuple)) or len(values) != 3:
            raise SchemaError(field_name, "expected [x, y, z]")
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
            raise SchemaError(field_name, "coordinates must be numbers")
        return cls(float(values[0]), float(values[1]), float(values[2]))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Position3":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def as_list(self, decimals: Optional[int] = None) -> List[float]:
        if decimals is None:
            return [self.x, self.y, self.z]
        return [round(self.x, decimals), round(self.y, decimals), round(self.z, decimals)]

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


_IDENTITY = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


@dataclass(frozen=True)
class CameraIntrinsics:
    """
    針孔相機模型 + 相機 → 機器人的剛體外參

    Attributes:
        fx, fy: 焦距（像素）
        cx, cy: 主點（像素）
        rotation: 3x3 旋轉矩陣（相機 → 機器人）
        translation: 平移（公尺）
    """
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: Tuple[Tuple[float, float, float], ...] = _IDENTITY
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        _require_finite((self.fx, self.fy, self.cx, self.cy), "intrinsics")
        if self.fx <= 0 or self.fy <= 0:
            raise SchemaError("intrinsics", "fx and fy must be positive")
        rot = np.asarray(self.rotation, dtype=float)
        if rot.shape != (3, 3):
            raise SchemaError("intrinsics.rotation", "expected a 3x3 matrix")
        if len(self.translation) != 3:
            raise SchemaError("intrinsics.translation", "expected [x, y, z]")
        _require_finite(rot.ravel(), "intrinsics.rotation")
        _require_finite(self.translation, "intrinsics.translation")
        if not np.allclose(rot @ rot.T, np.eye(3), rtol=0.0, atol=1e-9):
            raise SchemaError("intrinsics.rotation", "rotation is not orthonormal")
        if np.linalg.det(rot) <= 0:
            raise SchemaError("intrinsics.rotation", "rotation is a reflection (det <= 0)")

    @classmethod
    def default(cls) -> "CameraIntrinsics":
        return cls(
            fx=CAMERA_CONFIG['fx'], fy=CAMERA_CONFIG['fy'],
            cx=CAMERA_CONFIG['cx'], cy=CAMERA_CONFIG['cy'],
        )

    @classmethod
    def from_dict(cls, data: Dict) -> "CameraIntrinsics":
        """由 JSON 物件建立；未知欄位視為結構錯誤"""
        if not isinstance(data, dict):
            raise SchemaError("intrinsics", "expected an object")
        allowed = {'fx', 'fy', 'cx', 'cy', 'rotation', 'translation'}
        unknown = set(data) - allowed
        if unknown:
            raise SchemaError("intrinsics", f"unknown keys {sorted(unknown)}")
        missing = {'fx', 'fy', 'cx', 'cy'} - set(data)
        if missing:
            raise SchemaError("intrinsics", f"missing keys {sorted(missing)}")
        try:
            kwargs = {k: float(data[k]) for k in ('fx', 'fy', 'cx', 'cy')}
            if 'rotation' in data:
                kwargs['rotation'] = tuple(tuple(float(v) for v in row) for row in data['rotation'])
            if 'translation' in data:
                kwargs['translation'] = tuple(float(v) for v in data['translation'])
        except (TypeError, ValueError):
            raise SchemaError("intrinsics", "values must be numbers") from None
        return cls(**kwargs)

    def to_dict(self) -> Dict:
        return {
            'fx': self.fx, 'fy': self.fy, 'cx': self.cx, 'cy': self.cy,
            'rotation': [list(row) for row in self.rotation],
            'translation': list(self.translation),
        }

    def camera_to_robot(self, point: np.ndarray) -> np.ndarray:
        return np.asarray(self.rotation, dtype=float) @ point + np.asarray(self.translation, dtype=float)

    def robot_to_camera(self, point: np.ndarray) -> np.ndarray:
        return np.asarray(self.rotation, dtype=float).T @ (point - np.asarray(self.translation, dtype=float))

    def project(self, position: Position3) -> Tuple[float, float, float]:
        """
        前向針孔投影（back_project 的逆運算）

        Returns:
            (u, v, depth)：像素座標與相機座標系下的深度
        """
        x, y, z = self.robot_to_camera(position.as_array())
        if not z > 0:
            raise DegenerateDepth(f"point is behind the camera (z={z})")
        return self.fx * x / z + self.cx, self.fy * y / z + self.cy, float(z)


@dataclass(frozen=True)
class Detection:
    """
    單一偵測結果

    深度合法性（> 0 且有限）由 back_project 檢查；RealSense 對無效像素回傳 0，
    因此這裡允許 0 或 None 進入，交由定位階段處理。
    """
    label: ClassLabel
    bbox: Tuple[float, float, float, float]
    depth_m: Optional[float] = None
    confidence: float = 1.0
    instance_id: int = 0

    def __post_init__(self):
        if len(self.bbox) != 4:
            raise SchemaError("bbox", "expected [u_min, v_min, u_max, v_max]")
        _require_finite(self.bbox, "bbox")
        u0, v0, u1, v1 = self.bbox
        if not (u0 < u1 and v0 < v1):
            raise SchemaError("bbox", "requires u_min < u_max and v_min < v_max")
        if not (0.0 <= self.confidence <= 1.0):
            raise SchemaError("confidence", "must be within [0, 1]")

    @property
    def center(self) -> Tuple[float, float]:
        u0, v0, u1, v1 = self.bbox
        return (u0 + u1) / 2.0, (v0 + v1) / 2.0


@dataclass(frozen=True)
class SceneObject:
    """已定位的場景物件"""
    label: ClassLabel
    instance_id: int
    position: Position3

    @property
    def key(self) -> str:
        return f"{self.label.value}[{self.instance_id}]"


@dataclass(frozen=True)
class Scene:
    """
    帶時間戳的一組已定位物件，是感知的基本單位

    Attributes:
        scene_id: 場景識別碼
        scenario: S1 / S2 / S3 / Unknown
        objects: (label, instance_id) 不重複的物件
        goal: 機器人的導航目標（可缺）
        image_ref: 影像路徑，原樣轉交給後端
        truth: 真值 (obstruction, interaction)，若記錄中有提供
        warnings: 定位階段被排除的偵測
    """
    scene_id: str
    scenario: Scenario
    objects: Tuple[SceneObject, ...]
    goal: Optional[Position3] = None
    image_ref: Optional[str] = None
    truth: Optional[Tuple[bool, bool]] = None
    warnings: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        seen = set()
        for obj in self.objects:
            ident = (obj.label, obj.instance_id)
            if ident in seen:
                raise SchemaError("objects", f"duplicate object {obj.key}")
            seen.add(ident)

    def humans(self) -> List[SceneObject]:
        return [o for o in self.objects if o.label.is_human]

    def equipment(self) -> List[SceneObject]:
        return [o for o in self.objects if o.label.is_equipment]

    def labels(self) -> List[ClassLabel]:
        return [o.label for o in self.objects]

    def display_names(self) -> Dict[str, str]:
        """
        物件鍵 → 顯示名稱

        同一標籤只出現一次時用裸標籤（fumehood），
        出現多次時加索引（human_chemist[0], human_chemist[1]）。
        """
        counts: Dict[ClassLabel, int] = {}
        for obj in self.objects:
            counts[obj.label] = counts.get(obj.label, 0) + 1
        names = {ROBOT_NODE: ROBOT_NODE}
        for obj in self.objects:
            names[obj.key] = obj.key if counts[obj.label] > 1 else obj.label.value
        return names

    def with_objects(self, objects: Sequence[SceneObject]) -> "Scene":
        return replace(self, objects=tuple(objects))

    def to_record(self, decimals: Optional[int] = None) -> Dict:
        """轉為 JSONL 記錄（位置形式）"""
        record = {
            'scene_id': self.scene_id,
            'scenario': self.scenario.value,
            'goal': self.goal.as_list(decimals) if self.goal else None,
            'objects': [
                {
                    'label': o.label.value,
                    'instance_id': o.instance_id,
                    'position': o.position.as_list(decimals),
                }
                for o in self.objects
            ],
        }
        if self.truth is not None:
            record['truth'] = {'obstruction': self.truth[0], 'interaction': self.truth[1]}
        if self.image_ref:
            record['image_ref'] = self.image_ref
        return record
