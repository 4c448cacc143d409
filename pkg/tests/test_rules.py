# -*- coding: utf-8 -*-
"""
距離規則與真值標註測試

測試內容：
1. 點到線段距離（垂足、端點、取樣對照）
2. classify_scene 範例與閾值邊界
3. 標註器一致性與單調性（隨機場景）
4. 類別對應
5. RuleConfig 驗證

運行方法：
    pytest tests/test_rules.py -v
"""

import sys
import os

# 添加項目根目錄到路徑
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import unittest

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from core.errors import ConfigError, InconsistentLabels, NoGoal
from core.rules import (
    JudgmentSource,
    RuleConfig,
    ScenarioClass,
    SceneJudgment,
    classify_scene,
    goal_straight_ahead,
    point_segment_distance,
    to_class,
)
from core.scene import ClassLabel, Position3, Scenario, Scene, SceneObject

HUMAN = ClassLabel.HUMAN_CHEMIST
FUMEHOOD = ClassLabel.FUMEHOOD
INSTRUMENT = ClassLabel.INSTRUMENT

coord = st.floats(min_value=-6.0, max_value=6.0, allow_nan=False, allow_infinity=False)
points = st.builds(Position3, coord, coord, coord)
positive = st.floats(min_value=0.05, max_value=3.0)


def make_scene(*objects, goal=(4.0, 0.0, 0.0)) -> Scene:
    return Scene(
        scene_id="rules",
        scenario=Scenario.S2,
        objects=tuple(SceneObject(label, i, Position3(*p)) for label, i, p in objects),
        goal=Position3(*goal) if goal is not None else None,
    )


@st.composite
def lab_scenes(draw):
    n_humans = draw(st.integers(min_value=0, max_value=3))
    n_equipment = draw(st.integers(min_value=0, max_value=3))
    objects = [(HUMAN, i, (draw(coord), draw(coord), 0.0)) for i in range(n_humans)]
    objects += [(draw(st.sampled_from([FUMEHOOD, INSTRUMENT])), 100 + i, (draw(coord), draw(coord), 0.0))
                for i in range(n_equipment)]
    goal = draw(st.one_of(st.none(), st.tuples(coord, coord, st.just(0.0))))
    return make_scene(*objects, goal=goal)


class TestPointSegmentDistance(unittest.TestCase):
    """點到閉線段距離"""

    def test_perpendicular_foot_inside(self):
        d = point_segment_distance(Position3(0, 1, 0), Position3(-1, 0, 0), Position3(1, 0, 0))
        self.assertEqual(d, 1.0)

    def test_clamps_to_endpoint(self):
        d = point_segment_distance(Position3(2, 0, 0), Position3(0, 0, 0), Position3(1, 0, 0))
        self.assertEqual(d, 1.0)

    def test_degenerate_segment(self):
        d = point_segment_distance(Position3(3, 4, 0), Position3(0, 0, 0), Position3(0, 0, 0))
        self.assertEqual(d, 5.0)

    @settings(max_examples=100, deadline=None)
    @given(p=points, a=points, b=points)
    def test_matches_dense_sampling(self, p, a, b):
        """與 1e-4 解析度的線段取樣相差 < 1e-3"""
        ts = np.linspace(0.0, 1.0, 10001)[:, None]
        samples = a.as_array()[None, :] + ts * (b.as_array() - a.as_array())[None, :]
        sampled = float(np.min(np.linalg.norm(samples - p.as_array()[None, :], axis=1)))
        exact = point_segment_distance(p, a, b)
        self.assertLessEqual(exact, sampled + 1e-9)
        self.assertLess(abs(exact - sampled), 1e-3)


class TestClassifyScene(unittest.TestCase):
    """規則標註器"""

    def setUp(self):
        self.cfg = RuleConfig()

    def test_human_at_fumehood(self):
        """人離通風櫥 0.4 m → (True, True)"""
        scene = make_scene((HUMAN, 0, (4.0, 0.4, 0.0)), (FUMEHOOD, 0, (4.0, 0.0, 0.0)))
        j = classify_scene(scene, self.cfg)
        self.assertEqual(j.labels, (True, True))
        self.assertEqual(j.source, JudgmentSource.ORACLE)
        self.assertEqual(j.message, "")

    def test_far_field(self):
        """人遠離一切且不在通道上 → (False, False)"""
        scene = make_scene((HUMAN, 0, (1.0, 5.0, 0.0)), (FUMEHOOD, 0, (4.0, 0.0, 0.0)))
        self.assertEqual(classify_scene(scene, self.cfg).labels, (False, False))

    def test_on_corridor_only(self):
        """人距路徑 0.3 m、距設備 2 m 以上 → (True, False)"""
        scene = make_scene((HUMAN, 0, (2.0, 0.3, 0.0)), (FUMEHOOD, 0, (4.0, 0.0, 0.0)))
        self.assertEqual(classify_scene(scene, self.cfg).labels, (True, False))

    def test_interaction_threshold_is_strict(self):
        """剛好等於 t_interact_m 不算操作"""
        cfg = RuleConfig(t_interact_m=0.5)
        scene = make_scene((HUMAN, 0, (3.0, 2.5, 0.0)), (FUMEHOOD, 0, (3.0, 3.0, 0.0)))
        self.assertFalse(classify_scene(scene, cfg).interaction)
        cfg = RuleConfig(t_interact_m=0.5000001)
        self.assertTrue(classify_scene(scene, cfg).interaction)

    def test_corridor_threshold_is_strict(self):
        """剛好等於通道半寬不算擋路"""
        cfg = RuleConfig(corridor_halfwidth_m=0.5)
        scene = make_scene((HUMAN, 0, (2.0, 0.5, 0.0)), (FUMEHOOD, 0, (4.0, 0.0, 0.0)))
        self.assertEqual(classify_scene(scene, cfg).labels, (False, False))

    def test_no_goal_uses_robot_distance(self):
        cfg = RuleConfig(t_obstruct_m=1.2)
        scene = make_scene((HUMAN, 0, (1.0, 0.0, 0.0)), goal=None)
        self.assertEqual(classify_scene(scene, cfg).labels, (True, False))

    def test_no_goal_without_fallback_raises(self):
        cfg = RuleConfig(t_obstruct_m=None)
        scene = make_scene((HUMAN, 0, (1.0, 0.0, 0.0)), goal=None)
        with self.assertRaises(NoGoal):
            classify_scene(scene, cfg)

    def test_goal_override_straight_ahead(self):
        """目標改放正前方時，原本不擋路的人可能變成擋路"""
        goal = Position3(3.0, 4.0, 0.0)
        self.assertEqual(goal_straight_ahead(goal), Position3(5.0, 0.0, 0.0))
        scene = make_scene((HUMAN, 0, (2.5, 0.0, 0.0)), goal=(3.0, 4.0, 0.0))
        self.assertFalse(classify_scene(scene, self.cfg).obstruction)
        self.assertTrue(classify_scene(scene, self.cfg, goal_override=goal_straight_ahead(goal)).obstruction)

    @settings(max_examples=300, deadline=None)
    @given(scene=lab_scenes(), t_interact=positive, corridor=positive)
    def test_never_interaction_without_obstruction(self, scene, t_interact, corridor):
        cfg = RuleConfig(t_interact_m=t_interact, corridor_halfwidth_m=corridor)
        self.assertTrue(classify_scene(scene, cfg).consistent)

    @settings(max_examples=200, deadline=None)
    @given(scene=lab_scenes(), t1=positive, t2=positive)
    def test_monotone_in_thresholds(self, scene, t1, t2):
        """放寬閾值不會讓 True 變成 False"""
        assume(t1 < t2)
        small = classify_scene(scene, RuleConfig(t_interact_m=t1, corridor_halfwidth_m=t1))
        large = classify_scene(scene, RuleConfig(t_interact_m=t2, corridor_halfwidth_m=t2))
        if small.interaction:
            self.assertTrue(large.interaction)
        if small.obstruction:
            self.assertTrue(large.obstruction)


class TestScenarioClass(unittest.TestCase):
    """類別對應"""

    def test_examples(self):
        self.assertIs(to_class(SceneJudgment(True, True)), ScenarioClass.OBSTRUCT_INTERACT)
        self.assertIs(to_class(SceneJudgment(False, False)), ScenarioClass.NEITHER)
        self.assertIs(to_class(SceneJudgment(True, False)), ScenarioClass.OBSTRUCT_ONLY)

    def test_inconsistent_rejected(self):
        with self.assertRaises(InconsistentLabels):
            to_class(SceneJudgment(False, True))

    def test_bijection(self):
        self.assertEqual(len(ScenarioClass), 3)
        for klass in ScenarioClass:
            self.assertIs(ScenarioClass.from_labels(*klass.labels), klass)

    def test_consistency_and_blocking(self):
        j = SceneJudgment(False, True)
        self.assertFalse(j.consistent)
        self.assertTrue(j.blocking)
        self.assertFalse(SceneJudgment(False, False).blocking)


class TestRuleConfig(unittest.TestCase):
    """配置驗證"""

    def test_defaults(self):
        cfg = RuleConfig()
        self.assertEqual((cfg.t_interact_m, cfg.corridor_halfwidth_m, cfg.t_obstruct_m), (0.8, 0.6, 1.2))

    def test_non_positive_rejected(self):
        for kwargs in ({'t_interact_m': 0}, {'corridor_halfwidth_m': -0.1}, {'t_obstruct_m': 0.0}):
            with self.subTest(**kwargs):
                with self.assertRaises(ConfigError):
                    RuleConfig(**kwargs)

    def test_unknown_key_rejected(self):
        with self.assertRaises(ConfigError):
            RuleConfig.from_mapping({'t_interact': 0.5})

    def test_from_mapping_round_trip(self):
        cfg = RuleConfig.from_mapping({'t_interact_m': 0.5})
        self.assertEqual(RuleConfig.from_mapping(cfg.to_dict()), cfg)


if __name__ == '__main__':
    unittest.main(verbosity=2)
