# -*- coding: utf-8 -*-
"""
Labmate - 場景資料讀寫

JSONL 格式，每行一個場景：
    {"scene_id", "scenario", "goal", "objects": [...], "intrinsics"?, "truth"?, "image_ref"?}
物件可以是已定位的 {"label", "instance_id", "position"}，
或原始偵測 {"label", "instance_id", "bbox", "depth_m", "confidence"?}（需相機參數）。
"""

import json
import logging
import os
from typing import IO, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from core.errors import DatasetIOError, SchemaError
from core.perception import localize_detections
from core.scene import (
    CameraIntrinsics,
    ClassLabel,
    Detection,
    Position3,
    Scenario,
    Scene,
    SceneObject,
)

logger = logging.getLogger(__name__)

RECORD_KEYS = {'scene_id', 'scenario', 'goal', 'objects', 'intrinsics', 'truth', 'image_ref'}
POSITION_OBJECT_KEYS = {'label', 'instance_id', 'position'}
DETECTION_OBJECT_KEYS = {'label', 'instance_id', 'bbox', 'depth_m', 'confidence'}

Sink = Union[str, os.PathLike, IO[str]]


def _check_keys(data: Dict, allowed: set, where: str, strict: bool) -> None:
    unknown = sorted(set(data) - allowed)
    if not unknown:
        return
    if strict:
        raise SchemaError(f"{where}.{unknown[0]}", "unknown key")
    logger.warning(f"忽略未知欄位 {where}: {unknown}")


def _require_bool(value, field_name: str) -> bool:
    if not isinstance(value, bool):
        raise SchemaError(field_name, "expected true or false")
    return value


def _instance_id(raw: Dict, label: ClassLabel, counters: Dict[ClassLabel, int], where: str) -> int:
    """未給 instance_id 時依偵測順序編號"""
    if 'instance_id' not in raw:
        return counters.get(label, 0)
    value = raw['instance_id']
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise SchemaError(f"{where}.instance_id", "expected a non-negative integer")
    return value


def _parse_truth(raw) -> Tuple[bool, bool]:
    if not isinstance(raw, dict) or set(raw) != {'obstruction', 'interaction'}:
        raise SchemaError("truth", "expected {\"obstruction\": bool, \"interaction\": bool}")
    obstruction = _require_bool(raw['obstruction'], "truth.obstruction")
    interaction = _require_bool(raw['interaction'], "truth.interaction")
    if interaction and not obstruction:
        raise SchemaError("truth", "interaction without obstruction is not a valid class")
    return obstruction, interaction


def ingest_scene(
    record: Union[Dict, str],
    strict: bool = True,
    camera: Optional[CameraIntrinsics] = None,
) -> Scene:
    """
    驗證一筆記錄並建立 Scene

    Args:
        record: 已解碼的 dict 或一行 JSON 文本
        strict: True 時未知欄位視為錯誤，否則記錄警告後忽略
        camera: 記錄沒有 intrinsics 時使用的相機參數

    Returns:
        Scene（偵測形式的物件已反投影到機器人座標）

    Raises:
        SchemaError: 記錄結構錯誤或未知標籤
        NonFiniteValue: 出現 NaN / Inf
    """
    if isinstance(record, str):
        try:
            record = json.loads(record)
        except json.JSONDecodeError as e:
            raise SchemaError("record", f"invalid JSON: {e.msg} at column {e.colno}") from None
    if not isinstance(record, dict):
        raise SchemaError("record", "expected a JSON object")

    _check_keys(record, RECORD_KEYS, "record", strict)

    scene_id = record.get('scene_id')
    if not isinstance(scene_id, str) or not scene_id:
        raise SchemaError("scene_id", "expected a non-empty string")

    scenario = Scenario.parse(record.get('scenario'))

    goal = None
    if record.get('goal') is not None:
        goal = Position3.from_sequence(record['goal'], "goal")

    raw_objects = record.get('objects')
    if not isinstance(raw_objects, list):
        raise SchemaError("objects", "expected a list")

    objects: List[SceneObject] = []
    detections: List[Detection] = []
    counters: Dict[ClassLabel, int] = {}

    for n, raw in enumerate(raw_objects):
        where = f"objects[{n}]"
        if not isinstance(raw, dict):
            raise SchemaError(where, "expected an object")
        label = ClassLabel.parse(raw.get('label'), f"{where}.label")
        instance_id = _instance_id(raw, label, counters, where)
        counters[label] = max(counters.get(label, 0), instance_id + 1)

        if 'position' in raw:
            _check_keys(raw, POSITION_OBJECT_KEYS, where, strict)
            position = Position3.from_sequence(raw['position'], f"{where}.position")
            objects.append(SceneObject(label, instance_id, position))
        elif 'bbox' in raw:
            _check_keys(raw, DETECTION_OBJECT_KEYS, where, strict)
            bbox = raw['bbox']
            if not isinstance(bbox, list) or len(bbox) != 4 or any(
                    isinstance(v, bool) or not isinstance(v, (int, float)) for v in bbox):
                raise SchemaError(f"{where}.bbox", "expected [u_min, v_min, u_max, v_max]")
            depth = raw.get('depth_m')
            if depth is not None and (isinstance(depth, bool) or not isinstance(depth, (int, float))):
                raise SchemaError(f"{where}.depth_m", "expected a number or null")
            confidence = raw.get('confidence', 1.0)
            if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
                raise SchemaError(f"{where}.confidence", "expected a number")
            detections.append(Detection(
                label=label,
                bbox=tuple(float(v) for v in bbox),
                depth_m=None if depth is None else float(depth),
                confidence=float(confidence),
                instance_id=instance_id,
            ))
        else:
            raise SchemaError(where, "expected either 'position' or 'bbox'")

    warnings: Tuple[str, ...] = ()
    if detections:
        if 'intrinsics' in record:
            cam = CameraIntrinsics.from_dict(record['intrinsics'])
        elif camera is not None:
            cam = camera
        else:
            raise SchemaError("intrinsics", "required when objects are given as detections")
        localized, dropped = localize_detections(detections, cam)
        objects.extend(localized)
        warnings = tuple(dropped)

    truth = _parse_truth(record['truth']) if record.get('truth') is not None else None

    image_ref = record.get('image_ref')
    if image_ref is not None and not isinstance(image_ref, str):
        raise SchemaError("image_ref", "expected a string path")

    return Scene(
        scene_id=scene_id,
        scenario=scenario,
        objects=tuple(objects),
        goal=goal,
        image_ref=image_ref,
        truth=truth,
        warnings=warnings,
    )


def iter_records(path: Union[str, os.PathLike]) -> Iterator[Tuple[int, str]]:
    """逐行讀取 JSONL（跳過空行），回傳 (行號, 文本)"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            for lineno, line in enumerate(f, start=1):
                if line.strip():
                    yield lineno, line
    except OSError as e:
        raise DatasetIOError(f"無法讀取資料集 {path}: {e}") from e


def load_dataset(
    path: Union[str, os.PathLike],
    strict: bool = True,
    camera: Optional[CameraIntrinsics] = None,
) -> List[Scene]:
    """
    載入 JSONL 資料集

    Raises:
        DatasetIOError: 檔案無法讀取
        SchemaError: 任一行無效（欄位名稱前加上行號）
    """
    scenes = []
    seen_ids = set()
    for lineno, line in iter_records(path):
        try:
            scene = ingest_scene(line, strict=strict, camera=camera)
        except SchemaError as e:
            raise SchemaError(f"line {lineno}: {e.field}", e.reason) from None
        if scene.scene_id in seen_ids:
            raise SchemaError(f"line {lineno}: scene_id", f"duplicate scene_id {scene.scene_id!r}")
        seen_ids.add(scene.scene_id)
        scenes.append(scene)
    logger.info(f"已載入 {len(scenes)} 個場景: {path}")
    return scenes


def dumps_record(record: Dict) -> str:
    """固定格式的一行 JSON"""
    return json.dumps(record, ensure_ascii=False, allow_nan=False)


def write_records(records: Iterable[Dict], out: Sink) -> int:
    """
    寫出 JSONL

    Args:
        records: 記錄
        out: 檔案路徑或已開啟的文字串流

    Returns:
        寫出的行數

    Raises:
        DatasetIOError: 無法寫入
    """
    count = 0
    try:
        if hasattr(out, 'write'):
            for record in records:
                out.write(dumps_record(record) + "\n")
                count += 1
        else:
            with open(out, 'w', encoding='utf-8', newline='\n') as f:
                for record in records:
                    f.write(dumps_record(record) + "\n")
                    count += 1
    except OSError as e:
        raise DatasetIOError(f"無法寫入資料集 {out}: {e}") from e
    return count


def write_scenes(scenes: Iterable[Scene], out: Sink, decimals: Optional[int] = None) -> int:
    return write_records((s.to_record(decimals) for s in scenes), out)
