# -*- coding: utf-8 -*-
"""
Labmate - 感知模組

邊界框中心 + 深度 → 相機座標 → 機器人座標，
再計算所有物件（含原點上的機器人）兩兩之間的歐氏距離。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import DegenerateDepth
from core.scene import (
    ROBOT_NODE,
    CameraIntrinsics,
    Detection,
    Position3,
    Scene,
    SceneObject,
)

logger = logging.getLogger(__name__)


def _pair_key(a: str, b: str) -> Tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class DistanceReport:
    """
    兩兩距離報告

    entries 每個無序對只存一次（鍵按字典序排列），以 get(a, b) 任意順序查詢。

    Attributes:
        nodes: 參與計算的節點（robot + 物件鍵）
        entries: (a, b) → 距離（公尺）
        human_equipment_m: 每個人 → 最近設備的距離（場景無設備時為空）
        human_robot_m: 每個人 → 機器人的距離
        warnings: 被排除的偵測
    """
    nodes: Tuple[str, ...]
    entries: Dict[Tuple[str, str], float]
    human_equipment_m: Dict[str, float] = field(default_factory=dict)
    human_robot_m: Dict[str, float] = field(default_factory=dict)
    warnings: Tuple[str, ...] = ()

    def get(self, a: str, b: str) -> float:
        if a == b:
            raise KeyError(f"no self-distance for {a}")
        return self.entries[_pair_key(a, b)]

    def __len__(self) -> int:
        return len(self.entries)

    def pairs(self) -> List[Tuple[str, str, float]]:
        return [(a, b, d) for (a, b), d in sorted(self.entries.items())]


def back_project(det: Detection, cam: CameraIntrinsics) -> Position3:
    """
    將偵測框中心反投影到機器人座標系

    相機座標：((u - cx)·z / fx, (v - cy)·z / fy, z)，再經過外參轉換。

    Args:
        det: 偵測結果（深度取框中心）
        cam: 相機內外參

    Returns:
        機器人座標系下的位置

    Raises:
        DegenerateDepth: 深度缺失、非正數或非有限值
    """
    z = det.depth_m
    if z is None or not isinstance(z, (int, float)) or not math.isfinite(z) or z <= 0:
        raise DegenerateDepth(f"{det.label.value}[{det.instance_id}]: invalid depth {z!r}")
    u, v = det.center
    p_cam = np.array([(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, float(z)])
    return Position3.from_array(cam.camera_to_robot(p_cam))


def localize_detections(
    detections: Sequence[Detection],
    cam: CameraIntrinsics,
) -> Tuple[List[SceneObject], List[str]]:
    """
    批次定位偵測結果

    深度無效的偵測不會被默默丟棄，而是列入 warnings。

    Returns:
        (已定位物件, 警告訊息)
    """
    objects: List[SceneObject] = []
    warnings: List[str] = []
    for det in detections:
        try:
            position = back_project(det, cam)
        except DegenerateDepth as e:
            warnings.append(f"excluded {det.label.value}[{det.instance_id}]: {e}")
            logger.warning(f"排除無深度偵測: {det.label.value}[{det.instance_id}]")
            continue
        objects.append(SceneObject(det.label, det.instance_id, position))
    return objects, warnings


def distance_matrix(scene: Scene) -> DistanceReport:
    """
    計算場景內所有物件與機器人原點的兩兩歐氏距離

    D_ij = ||p_i - p_j||_2，逐元素計算 sqrt(dx² + dy² + dz²)。

    Args:
        scene: 已驗證的場景

    Returns:
        DistanceReport（空場景回傳空報告）
    """
    nodes = [ROBOT_NODE] + [o.key for o in scene.objects]
    coords = np.array(
        [[0.0, 0.0, 0.0]] + [[o.position.x, o.position.y, o.position.z] for o in scene.objects],
        dtype=float,
    )

    dx = coords[:, 0][:, None] - coords[:, 0][None, :]
    dy = coords[:, 1][:, None] - coords[:, 1][None, :]
    dz = coords[:, 2][:, None] - coords[:, 2][None, :]
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)

    entries: Dict[Tuple[str, str], float] = {}
    rows, cols = np.triu_indices(len(nodes), k=1)
    for i, j in zip(rows.tolist(), cols.tolist()):
        entries[_pair_key(nodes[i], nodes[j])] = float(dist[i, j])

    index = {name: i for i, name in enumerate(nodes)}
    equipment = [o.key for o in scene.objects if o.label.is_equipment]
    human_equipment: Dict[str, float] = {}
    human_robot: Dict[str, float] = {}
    for human in scene.humans():
        h = index[human.key]
        human_robot[human.key] = float(dist[h, 0])
        if equipment:
            human_equipment[human.key] = min(float(dist[h, index[e]]) for e in equipment)

    logger.debug(f"距離矩陣: 場景 {scene.scene_id}, {len(nodes)} 個節點, {len(entries)} 組距離")

    return DistanceReport(
        nodes=tuple(nodes),
        entries=entries,
        human_equipment_m=human_equipment,
        human_robot_m=human_robot,
        warnings=scene.warnings,
    )


def nearest_equipment(scene: Scene, report: Optional[DistanceReport] = None) -> Optional[SceneObject]:
    """回傳離任一人最近的設備（無人時回傳離機器人最近的設備）"""
    equipment = scene.equipment()
    if not equipment:
        return None
    report = report or distance_matrix(scene)
    humans = scene.humans()
    if not humans:
        return min(equipment, key=lambda e: report.get(ROBOT_NODE, e.key))
    return min(
        equipment,
        key=lambda e: min(report.get(h.key, e.key) for h in humans),
    )
