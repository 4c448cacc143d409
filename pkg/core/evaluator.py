# -*- coding: utf-8 -*-
"""
Labmate - 評估流程

分層 k 折切分 → 每個 (後端, 變體, 場景) 格子逐折計算聯合準確率 →
平均 ± 樣本標準差（四捨五入到整數）→ 差值表。
mock 後端不需要訓練，各折只差在測試成員。
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from config import EVAL_CONFIG
from core.api_client import BackendConfig
from core.errors import (
    BackendError,
    EmptyInput,
    EmptyScene,
    LengthMismatch,
    MissingCell,
    ParseError,
    TooFewFolds,
    TooFewRecords,
)
from core.pipeline import ScenePipeline
from core.rules import RuleConfig, ScenarioClass, SceneJudgment, classify_scene
from core.scene import Scene
from templates.prompts import PromptVariant

logger = logging.getLogger(__name__)

Labels = Tuple[bool, bool]
Prediction = Optional[Union[SceneJudgment, Labels]]

ROLE_BASE = "base"
ROLE_FINE_TUNED = "fine_tuned"
FINE_TUNED_VS_BASE = "fine_tuned_vs_base"
DEPTH_VS_VISION = "depth_vs_vision"


# ---------------------------------------------------------------- 資料

@dataclass(frozen=True)
class DatasetRecord:
    """帶真值的場景"""
    scene: Scene
    truth: Labels

    @property
    def scenario(self) -> str:
        return self.scene.scenario.value

    @property
    def stratum(self) -> str:
        return f"{self.scenario}/{ScenarioClass.from_labels(*self.truth).value}"


def records_from_scenes(scenes: Iterable[Scene], rules: Optional[RuleConfig] = None) -> List[DatasetRecord]:
    """沒有真值的場景以規則標註補上"""
    rules = rules or RuleConfig()
    records = []
    relabelled = 0
    for scene in scenes:
        truth = scene.truth
        if truth is None:
            truth = classify_scene(scene, rules).labels
            relabelled += 1
        records.append(DatasetRecord(scene, truth))
    if relabelled:
        logger.warning(f"{relabelled} 個場景沒有真值，已用規則標註")
    return records


# ---------------------------------------------------------------- 切分

@dataclass(frozen=True)
class FoldSplit:
    """
    k 折切分

    Attributes:
        k: 折數
        seed: 種子
        assignments: 第 i 筆記錄 → 所屬測試折
    """
    k: int
    seed: int
    assignments: Tuple[int, ...]

    def test_indices(self, fold: int) -> List[int]:
        return [i for i, f in enumerate(self.assignments) if f == fold]

    def fold_sizes(self) -> List[int]:
        return [self.assignments.count(f) for f in range(self.k)]


def kfold_split(n: int, k: int, seed: int, strata: Optional[Sequence[str]] = None) -> FoldSplit:
    """
    確定性的分層 k 折切分

    各層內打亂後依層名順序串接，再以位置 mod k 輪流分配，
    因此各折大小相差不超過 1，且每層平均分散到各折。

    Raises:
        TooFewFolds: k < 2
        TooFewRecords: n < k
    """
    if k < 2:
        raise TooFewFolds(f"need at least 2 folds, got {k}")
    if n < k:
        raise TooFewRecords(f"{n} records cannot fill {k} folds")
    if strata is not None and len(strata) != n:
        raise LengthMismatch(f"strata has {len(strata)} entries for {n} records")

    strata = list(strata) if strata is not None else [""] * n
    groups: Dict[str, List[int]] = {}
    for i, key in enumerate(strata):
        groups.setdefault(key, []).append(i)

    rng = np.random.default_rng(seed)
    order: List[int] = []
    for key in sorted(groups):
        members = groups[key]
        order.extend(members[j] for j in rng.permutation(len(members)))

    assignments = [0] * n
    for position, index in enumerate(order):
        assignments[index] = position % k
    return FoldSplit(k=k, seed=seed, assignments=tuple(assignments))


# ---------------------------------------------------------------- 指標

def _labels_of(pred: Prediction) -> Optional[Labels]:
    if pred is None:
        return None
    if isinstance(pred, SceneJudgment):
        return pred.labels
    return bool(pred[0]), bool(pred[1])


def joint_accuracy(preds: Sequence[Prediction], truths: Sequence[Labels]) -> float:
    """
    聯合準確率（%）：兩個標籤都正確才算對；None（解析或後端失敗）算錯

    Raises:
        EmptyInput / LengthMismatch
    """
    if not preds or not truths:
        raise EmptyInput("joint_accuracy needs at least one prediction")
    if len(preds) != len(truths):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(truths)} truths")
    correct = sum(1 for p, t in zip(preds, truths) if _labels_of(p) == (bool(t[0]), bool(t[1])))
    return 100.0 * correct / len(truths)


def round_half_away(value: float) -> int:
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


@dataclass(frozen=True)
class FoldAggregate:
    """
    逐折準確率的彙總

    mean / spread 為四捨五入後的整數；raw_* 與 variance 保留原值。
    """
    mean: int
    spread: int
    raw_mean: float
    raw_spread: float
    variance: float
    values: Tuple[float, ...]

    def as_tuple(self) -> Tuple[int, int]:
        return self.mean, self.spread

    def __str__(self) -> str:
        return f"{self.mean}±{self.spread}"


def aggregate_folds(accs: Sequence[float]) -> FoldAggregate:
    """
    平均 ± 樣本標準差（n−1）

    Raises:
        TooFewFolds: 少於兩個值
    """
    if len(accs) < 2:
        raise TooFewFolds(f"need at least 2 fold accuracies, got {len(accs)}")
    values = np.asarray(accs, dtype=float)
    raw_mean = float(np.mean(values))
    raw_spread = float(np.std(values, ddof=1))
    return FoldAggregate(
        mean=round_half_away(raw_mean),
        spread=round_half_away(raw_spread),
        raw_mean=raw_mean,
        raw_spread=raw_spread,
        variance=raw_spread ** 2,
        values=tuple(float(v) for v in values),
    )


def _single_fold(accs: Sequence[float]) -> FoldAggregate:
    """只有一個非空折時的彙總：不估計離散程度"""
    raw_mean = float(accs[0])
    return FoldAggregate(
        mean=round_half_away(raw_mean),
        spread=0,
        raw_mean=raw_mean,
        raw_spread=0.0,
        variance=0.0,
        values=(raw_mean,),
    )


CellKey = Tuple[str, str, str]  # (scenario, variant, role)


def delta_table(
    cells: Mapping[CellKey, float],
    families: Sequence[str] = (FINE_TUNED_VS_BASE, DEPTH_VS_VISION),
) -> Dict[str, Dict[str, int]]:
    """
    差值表（百分點）

    - fine_tuned_vs_base：同為 vision 變體，微調 − 基礎
    - depth_vs_vision：微調模型，vision+depth − vision

    Raises:
        MissingCell: 缺少計算所需的格子
    """
    vision = PromptVariant.VISION_ONLY.value
    depth = PromptVariant.VISION_PLUS_DEPTH.value
    scenarios = sorted({key[0] for key in cells})

    def cell(scenario: str, variant: str, role: str) -> float:
        try:
            return cells[(scenario, variant, role)]
        except KeyError:
            raise MissingCell(scenario, f"{variant}/{role}") from None

    table: Dict[str, Dict[str, int]] = {}
    for family in families:
        if family == FINE_TUNED_VS_BASE:
            left, right = (vision, ROLE_FINE_TUNED), (vision, ROLE_BASE)
        elif family == DEPTH_VS_VISION:
            left, right = (depth, ROLE_FINE_TUNED), (vision, ROLE_FINE_TUNED)
        else:
            raise ValueError(f"unknown delta family {family!r}")
        table[family] = {
            s: round_half_away(cell(s, *left) - cell(s, *right)) for s in scenarios
        }
    return table


# ---------------------------------------------------------------- 評估

@dataclass(frozen=True)
class Outcome:
    """單一場景的評估結果"""
    judgment: Optional[SceneJudgment]
    failure: Optional[str] = None      # 'parse' / 'backend' / 'empty'


@dataclass
class CellResult:
    scenario: str
    variant: str
    backend: str
    role: str
    n: int
    fold_accuracies: List[float]
    mean: int
    spread: int
    raw_mean: float
    raw_spread: float
    variance: float
    parse_failures: int = 0
    backend_failures: int = 0
    inconsistent: int = 0
    confusion: Dict[str, int] = field(default_factory=dict)


@dataclass
class EvalReport:
    """評估報告（JSON 以排序鍵輸出，不含時間戳）"""
    schema_version: str
    config: Dict
    cells: List[CellResult]
    deltas: Dict[str, Dict[str, int]]
    parse_failure_rate: float
    backend_failure_rate: float
    inconsistent_prediction_rate: float

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def cell_means(self) -> Dict[CellKey, float]:
        means: Dict[CellKey, float] = {}
        for c in self.cells:
            means.setdefault((c.scenario, c.variant, c.role), c.mean)
        return means


def _evaluate_scene(pipeline: ScenePipeline, scene: Scene) -> Outcome:
    try:
        return Outcome(pipeline.judge(scene).judgment)
    except ParseError as e:
        logger.warning(f"場景 {scene.scene_id}: 回應無法解析 ({e.reason})")
        return Outcome(None, 'parse')
    except BackendError as e:
        logger.warning(f"場景 {scene.scene_id}: 後端失敗 ({e})")
        return Outcome(None, 'backend')
    except EmptyScene:
        return Outcome(None, 'empty')


def _confusion(outcomes: Sequence[Outcome], truths: Sequence[Labels]) -> Dict[str, int]:
    counts = {'obstruction_fp': 0, 'obstruction_fn': 0, 'interaction_fp': 0, 'interaction_fn': 0}
    for outcome, (t_o, t_i) in zip(outcomes, truths):
        if outcome.judgment is None:
            continue
        p_o, p_i = outcome.judgment.labels
        counts['obstruction_fp'] += int(p_o and not t_o)
        counts['obstruction_fn'] += int(t_o and not p_o)
        counts['interaction_fp'] += int(p_i and not t_i)
        counts['interaction_fn'] += int(t_i and not p_i)
    return counts


def run_eval(
    records: Sequence[DatasetRecord],
    backends: Sequence[BackendConfig],
    variants: Sequence[PromptVariant],
    k: int = EVAL_CONFIG['folds'],
    seed: int = EVAL_CONFIG['seed'],
    rules: Optional[RuleConfig] = None,
    jobs: Optional[int] = None,
    progress: bool = False,
) -> EvalReport:
    """
    執行完整評估

    每個 (後端, 變體) 對所有場景各判斷一次（每個場景恰好屬於一個測試折），
    再依場景分組、逐折計分。後端與解析失敗計為錯誤並分別統計。

    Raises:
        TooFewRecords / TooFewFolds: 記錄或折數不足
    """
    if not records:
        raise EmptyInput("dataset is empty")
    split = kfold_split(len(records), k, seed, [r.stratum for r in records])
    truths = [r.truth for r in records]
    scenarios = sorted({r.scenario for r in records})

    cells: List[CellResult] = []
    total = parse_total = backend_total = inconsistent_total = 0

    for backend in backends:
        for variant in variants:
            pipeline = ScenePipeline(backend, variant, rules)
            scenes = [r.scene for r in records]
            with ThreadPoolExecutor(max_workers=jobs) as executor:
                mapped = executor.map(lambda s: _evaluate_scene(pipeline, s), scenes)
                if progress:
                    mapped = tqdm(mapped, total=len(scenes), desc=f"{backend.name}/{variant.value}", unit="scene")
                outcomes = list(mapped)

            for scenario in scenarios:
                members = [i for i, r in enumerate(records) if r.scenario == scenario]
                fold_accs = []
                for fold in range(k):
                    test = [i for i in split.test_indices(fold) if records[i].scenario == scenario]
                    if not test:
                        logger.warning(f"{scenario} 在第 {fold} 折沒有測試資料")
                        continue
                    fold_accs.append(joint_accuracy(
                        [outcomes[i].judgment for i in test], [truths[i] for i in test]))
                if len(fold_accs) < 2:
                    logger.warning(f"{scenario} 只有 {len(fold_accs)} 個非空測試折，spread 記為 0")
                    agg = _single_fold(fold_accs)
                else:
                    agg = aggregate_folds(fold_accs)

                cell_outcomes = [outcomes[i] for i in members]
                parse_failures = sum(1 for o in cell_outcomes if o.failure == 'parse')
                backend_failures = sum(1 for o in cell_outcomes if o.failure == 'backend')
                inconsistent = sum(1 for o in cell_outcomes if o.judgment is not None and not o.judgment.consistent)

                cells.append(CellResult(
                    scenario=scenario,
                    variant=variant.value,
                    backend=backend.name,
                    role=backend.role,
                    n=len(members),
                    fold_accuracies=list(agg.values),
                    mean=agg.mean,
                    spread=agg.spread,
                    raw_mean=agg.raw_mean,
                    raw_spread=agg.raw_spread,
                    variance=agg.variance,
                    parse_failures=parse_failures,
                    backend_failures=backend_failures,
                    inconsistent=inconsistent,
                    confusion=_confusion(cell_outcomes, [truths[i] for i in members]),
                ))
                total += len(members)
                parse_total += parse_failures
                backend_total += backend_failures
                inconsistent_total += inconsistent
                logger.info(f"[{backend.name} / {variant.value} / {scenario}] {agg}")

    report = EvalReport(
        schema_version=EVAL_CONFIG['schema_version'],
        config={
            'folds': k,
            'seed': seed,
            'records': len(records),
            'backends': [b.to_dict() for b in backends],
            'variants': [v.value for v in variants],
        },
        cells=cells,
        deltas={},
        parse_failure_rate=parse_total / total if total else 0.0,
        backend_failure_rate=backend_total / total if total else 0.0,
        inconsistent_prediction_rate=inconsistent_total / total if total else 0.0,
    )
    report.deltas = available_deltas(report.cell_means())
    return report


def available_deltas(cells: Mapping[CellKey, float]) -> Dict[str, Dict[str, int]]:
    """只計算格子齊全的差值族"""
    deltas = {}
    for family in (FINE_TUNED_VS_BASE, DEPTH_VS_VISION):
        try:
            deltas.update(delta_table(cells, (family,)))
        except MissingCell as e:
            logger.debug(f"略過差值 {family}: {e}")
    return deltas


# ---------------------------------------------------------------- 報告

def cells_from_table(data: Union[Mapping, Sequence]) -> Dict[CellKey, float]:
    """
    由報告或格子表取出 (scenario, variant, role) → 平均準確率

    接受 EvalReport JSON（含 "cells"）或格子列表
    [{"scenario", "variant", "role", "mean", "spread"?}, ...]
    """
    rows = data.get('cells', []) if isinstance(data, Mapping) else data
    means: Dict[CellKey, float] = {}
    for row in rows:
        key = (str(row['scenario']).lower(), str(row['variant']), str(row['role']))
        means.setdefault(key, float(row['mean']))
    return means


def render_table(data: Union[Mapping, Sequence]) -> str:
    """文字表格：每格 mean±spread，附差值列"""
    rows = data.get('cells', []) if isinstance(data, Mapping) else data
    lines = [f"{'scenario':10s}{'variant':16s}{'role':12s}{'accuracy':>10s}"]
    lines.append("-" * 48)
    for row in sorted(rows, key=lambda r: (str(r['scenario']).lower(), r['variant'], r['role'])):
        acc = f"{round_half_away(float(row['mean']))}±{round_half_away(float(row.get('spread', 0)))}"
        lines.append(f"{str(row['scenario']).lower():10s}{row['variant']:16s}{row['role']:12s}{acc:>10s}")

    deltas = available_deltas(cells_from_table(data))
    for family, values in deltas.items():
        lines.append("")
        lines.append(f"{family}: " + ", ".join(f"{s} {v:+d}" for s, v in values.items()))
    return "\n".join(lines)
