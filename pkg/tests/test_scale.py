# -*- coding: utf-8 -*-
"""
大規模驗收測試

測試內容：
1. mock ε 遞增時聯合準確率不上升（每個 ε 2000 個場景）
2. ε≈0.0619、5 折 × 200 個場景的評估落在 88±3
3. S1/S2/S3 × ε{0, 0.1, 0.5} 各 1000 組配對回合，主動策略從不等得更久
4. 超過 10,000 個生成場景中不出現 (False, True)
5. 解析器 100,000 個隨機輸入只會丟出 ParseError

這些測試需要數分鐘；設定 LABMATE_SKIP_SLOW=1 可跳過。

運行方法：
    pytest tests/test_scale.py -v
"""

import sys
import os

# 添加項目根目錄到路徑
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import math
import unittest

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from core.api_client import BackendConfig
from core.errors import ParseError
from core.evaluator import records_from_scenes, run_eval
from core.rules import RuleConfig, classify_scene
from core.scene import Scenario
from core.simulator import compare_policies
from templates.prompts import PromptVariant
from utils.response_parser import parse_response
from utils.scenario_generator import NoiseModel, ScenarioSpec, generate_record, generate_scene
from utils.scene_io import ingest_scene

SKIP_SLOW = bool(os.environ.get('LABMATE_SKIP_SLOW'))
CLEAN = NoiseModel(pos_sigma_m=0.0, depth_sigma_m=0.0, dropout_p=0.0)
EPSILON_GRID = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5)
EPSILON_88 = 1 - math.sqrt(0.88)


def clean_records(scenario: Scenario, count: int, seed: int = 0):
    spec = ScenarioSpec(scenario=scenario, count=count, seed=seed, noise=CLEAN)
    return records_from_scenes(generate_scene(spec, i) for i in range(count))


@unittest.skipIf(SKIP_SLOW, "LABMATE_SKIP_SLOW")
class TestAccuracyAtScale(unittest.TestCase):
    """mock 後端的準確率"""

    @classmethod
    def setUpClass(cls):
        cls.records = clean_records(Scenario.S1, 2000, seed=11)

    def accuracy(self, records, epsilon, k=5):
        report = run_eval(records, [BackendConfig(epsilon=epsilon, seed=5)],
                          (PromptVariant.VISION_PLUS_DEPTH,), k=k, seed=3)
        self.assertEqual(len(report.cells), 1)
        return report.cells[0]

    def test_accuracy_never_rises_with_epsilon(self):
        n = len(self.records)
        previous = None
        for epsilon in EPSILON_GRID:
            with self.subTest(epsilon=epsilon):
                acc = self.accuracy(self.records, epsilon).raw_mean
                expected = 100.0 * (1 - epsilon) ** 2
                stderr = 100.0 * math.sqrt(max(expected / 100 * (1 - expected / 100), 1e-4) / n)
                self.assertAlmostEqual(acc, expected, delta=4 * stderr + 0.5)
                if previous is not None:
                    self.assertLessEqual(acc, previous + stderr)
                previous = acc

    def test_five_folds_of_two_hundred_near_88(self):
        cell = self.accuracy(self.records[:1000], EPSILON_88)
        self.assertEqual(cell.n, 1000)
        self.assertEqual(len(cell.fold_accuracies), 5)
        self.assertLessEqual(abs(cell.mean - 88), 3)
        self.assertLessEqual(cell.spread, 6)
        for acc in cell.fold_accuracies:
            self.assertTrue(0.0 <= acc <= 100.0)


@unittest.skipIf(SKIP_SLOW, "LABMATE_SKIP_SLOW")
class TestDominanceAtScale(unittest.TestCase):
    """1000 組配對回合的支配性"""

    def test_proactive_never_waits_longer(self):
        for scenario in (Scenario.S1, Scenario.S2, Scenario.S3):
            spec = ScenarioSpec(scenario=scenario, count=1000, seed=21)
            for epsilon in (0.0, 0.1, 0.5):
                with self.subTest(scenario=scenario.value, epsilon=epsilon):
                    result = compare_policies(spec, BackendConfig(epsilon=epsilon, seed=21), episodes=1000)
                    self.assertEqual(result.episodes, 1000)
                    self.assertEqual(result.dominance_violations, 0)
                    self.assertGreaterEqual(result.min_saved, 0.0)
                    self.assertGreaterEqual(result.mean_saved, 0.0)


@unittest.skipIf(SKIP_SLOW, "LABMATE_SKIP_SLOW")
class TestNoFourthClassAtScale(unittest.TestCase):
    """(False, True) 不出現"""

    def test_ten_thousand_scenes(self):
        rules = RuleConfig()
        seen = 0
        for scenario in (Scenario.S1, Scenario.S2, Scenario.S3):
            spec = ScenarioSpec(scenario=scenario, count=3400, seed=31)
            for i in range(spec.count):
                record = generate_record(spec, i)
                truth = (record['truth']['obstruction'], record['truth']['interaction'])
                self.assertNotEqual(truth, (False, True), record['scene_id'])
                labels = classify_scene(ingest_scene(record), rules).labels
                self.assertNotEqual(labels, (False, True), record['scene_id'])
                seen += 1
        self.assertGreaterEqual(seen, 10_000)


parser_input = st.one_of(
    st.text(max_size=200),
    st.binary(max_size=200),
    st.builds(
        lambda o, i, tail: f"Obstruction: {o}; Interaction: {i}; Message: {tail}",
        st.sampled_from(["Yes", "No", "yes", "NO", "Maybe", ""]),
        st.sampled_from(["Yes", "No", "yes", "NO", "Maybe", ""]),
        st.text(max_size=60),
    ),
)


@unittest.skipIf(SKIP_SLOW, "LABMATE_SKIP_SLOW")
class TestParserFuzzAtScale(unittest.TestCase):
    """100,000 個隨機輸入"""

    @settings(max_examples=100_000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(data=parser_input, lenient=st.booleans())
    def test_only_parse_errors_escape(self, data, lenient):
        try:
            r = parse_response(data, lenient=lenient)
        except ParseError as e:
            self.assertGreaterEqual(e.offset, 0)
        else:
            self.assertIsInstance(r.obstruction, bool)
            self.assertIsInstance(r.interaction, bool)
            self.assertIsInstance(r.message, str)


if __name__ == '__main__':
    unittest.main(verbosity=2)
