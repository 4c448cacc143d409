# -*- coding: utf-8 -*-
"""
CLI 測試（labmate.main）

測試內容：
1. gen / label / eval / report / decide / episode 子命令
2. 互動式 decide（mock.patch input）
3. 結束碼：0 成功 / 1 領域錯誤 / 2 用法錯誤

運行方法：
    pytest tests/test_cli.py -v
"""

import sys
import os

# 添加項目根目錄到路徑
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import io
import json
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from labmate import main

sys.path.insert(0, str(Path(__file__).parent / "fixtures"))
from stub_server import StubChatServer  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
SCENE = {
    'scene_id': 'cli-001',
    'scenario': 's1',
    'goal': [4.0, 0.0, 0.0],
    'objects': [
        {'label': 'human_chemist', 'instance_id': 0, 'position': [4.0, 0.4, 0.0]},
        {'label': 'fumehood', 'instance_id': 0, 'position': [4.0, 0.0, 0.0]},
    ],
}


class CliTestCase(unittest.TestCase):
    """共用：暫存目錄、乾淨環境、擷取輸出"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.env = mock.patch.dict(os.environ, {}, clear=False)
        self.env.start()
        os.environ.pop('LABMATE_CONFIG', None)

    def tearDown(self):
        self.env.stop()
        self.tmp.cleanup()

    def run_cli(self, *argv):
        with mock.patch('sys.stdout', new_callable=io.StringIO) as out, \
                mock.patch('sys.stderr', new_callable=io.StringIO) as err:
            code = main(list(argv))
        return code, out.getvalue(), err.getvalue()

    def make_dataset(self, count=30, name="scenes.jsonl"):
        path = self.dir / name
        code, _, _ = self.run_cli('gen', '--scenario', 's1', '--count', str(count), '--seed', '3',
                                  '--out', str(path))
        self.assertEqual(code, 0)
        return path

    def write_scene(self, record=None):
        path = self.dir / "scene.json"
        path.write_text(json.dumps(record or SCENE), encoding="utf-8")
        return str(path)


class TestGenAndLabel(CliTestCase):

    def test_gen_writes_file(self):
        path = self.dir / "s2.jsonl"
        code, out, _ = self.run_cli('gen', '--scenario', 's2', '--count', '10', '--seed', '1', '--out', str(path))
        self.assertEqual(code, 0)
        lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(len(lines), 10)
        self.assertTrue(all(json.loads(line)['scenario'] == 's2' for line in lines))
        self.assertFalse(any(json.loads(line)['truth']['interaction'] for line in lines))
        self.assertIn("10", out)

    def test_gen_s2_with_interaction_weight_fails(self):
        path = self.dir / "s2.jsonl"
        code, _, err = self.run_cli('gen', '--scenario', 's2', '--count', '6', '--class-mix', '0.4,0.3,0.3',
                                    '--out', str(path))
        self.assertEqual(code, 1)
        self.assertIn("obstruct_interact", err)
        self.assertFalse(path.exists())

    def test_gen_streams_to_stdout(self):
        code, out, _ = self.run_cli('gen', '--count', '4', '--seed', '2')
        self.assertEqual(code, 0)
        self.assertEqual(len(out.splitlines()), 4)

    def test_gen_is_reproducible(self):
        first = self.run_cli('gen', '--count', '5', '--seed', '8', '--class-mix', '0.2,0.4,0.4')[1]
        second = self.run_cli('gen', '--count', '5', '--seed', '8', '--class-mix', '0.2,0.4,0.4')[1]
        self.assertEqual(first, second)

    def test_label_summary(self):
        dataset = self.make_dataset(count=9)
        out_path = self.dir / "labelled.jsonl"
        code, out, _ = self.run_cli('--json', 'label', '--dataset', str(dataset), '--out', str(out_path))
        self.assertEqual(code, 0)
        summary = json.loads(out)
        self.assertEqual(summary['scenes'], 9)
        self.assertEqual(summary['disagreements'], 0)
        self.assertEqual(sum(summary['class_counts'].values()), 9)
        self.assertEqual(len(out_path.read_text(encoding="utf-8").splitlines()), 9)


class TestEvalAndReport(CliTestCase):

    def test_eval_perfect_mock(self):
        dataset = self.make_dataset()
        report = self.dir / "report.json"
        code, out, _ = self.run_cli('eval', '--dataset', str(dataset), '--epsilon', '0', '--folds', '5',
                                    '--report', str(report), '--jobs', '2')
        self.assertEqual(code, 0)
        self.assertIn("100±0", out)
        data = json.loads(report.read_text(encoding="utf-8"))
        self.assertEqual(len(data['cells']), 2)
        self.assertTrue(all(cell['mean'] == 100 for cell in data['cells']))

    def test_eval_json_is_reproducible(self):
        dataset = self.make_dataset()
        args = ('--json', 'eval', '--dataset', str(dataset), '--epsilon', '0.2', '--variant', 'vision')
        first, second = self.run_cli(*args)[1], self.run_cli(*args)[1]
        self.assertEqual(first, second)
        self.assertEqual(len(json.loads(first)['cells']), 1)

    def test_eval_with_base_row(self):
        dataset = self.make_dataset()
        code, out, _ = self.run_cli('--json', 'eval', '--dataset', str(dataset), '--epsilon', '0',
                                    '--base-epsilon', '1')
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)['deltas']['fine_tuned_vs_base'], {'s1': 100})

    def test_report_table(self):
        code, out, _ = self.run_cli('report', '--table', str(FIXTURES / "accuracy_cells.json"))
        self.assertEqual(code, 0)
        self.assertIn("fine_tuned_vs_base: s1 +59, s2 +74, s3 +47", out)

    def test_report_json(self):
        code, out, _ = self.run_cli('--json', 'report', '--table', str(FIXTURES / "accuracy_cells.json"))
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)['deltas']['depth_vs_vision'], {'s1': -18, 's2': 0, 's3': -8})

    def test_missing_dataset_is_domain_error(self):
        code, _, err = self.run_cli('eval', '--dataset', str(self.dir / "absent.jsonl"))
        self.assertEqual(code, 1)
        self.assertIn("錯誤", err)

    def test_dataset_required(self):
        code, _, err = self.run_cli('label')
        self.assertEqual(code, 1)
        self.assertIn("--dataset", err)


class TestDecide(CliTestCase):

    def test_scripted_reply(self):
        code, out, _ = self.run_cli('--json', 'decide', '--scene', self.write_scene(), '--reply', 'yes')
        self.assertEqual(code, 0)
        data = json.loads(out)
        self.assertEqual(data['state'], 'waiting_on_human')
        self.assertEqual(data['trace']['dialogue'][0]['text'],
                         "You seem to be using the fumehood. Shall I wait until you are done?")

    def test_passive_policy(self):
        code, out, _ = self.run_cli('--json', 'decide', '--scene', self.write_scene(), '--policy', 'passive')
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)['state'], 'passive_waiting')

    def test_interactive_reply(self):
        with mock.patch('builtins.input', return_value="go ahead") as prompt:
            code, out, _ = self.run_cli('decide', '--scene', self.write_scene(), '--interactive')
        self.assertEqual(code, 0)
        prompt.assert_called_once()
        self.assertIn("reduced_speed", out)
        self.assertIn("proceeding", out)

    def test_interactive_reask_then_silence(self):
        with mock.patch('builtins.input', side_effect=["blorp", EOFError()]):
            code, out, _ = self.run_cli('decide', '--scene', self.write_scene(), '--interactive')
        self.assertEqual(code, 0)
        self.assertIn("reask", out)
        self.assertIn("passive_waiting", out)

    def test_http_backend_prints_statistics(self):
        with StubChatServer() as stub:
            code, out, _ = self.run_cli('decide', '--scene', self.write_scene(), '--backend', 'http',
                                        '--endpoint', stub.url, '--reply', 'yes')
        self.assertEqual(code, 0)
        self.assertEqual(len(stub.requests), 1)
        self.assertIn("後端調用統計", out)
        self.assertIn("waiting_on_human", out)

    def test_json_output_has_no_statistics(self):
        with StubChatServer() as stub:
            code, out, _ = self.run_cli('--json', 'decide', '--scene', self.write_scene(), '--backend', 'http',
                                        '--endpoint', stub.url)
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)['state'], 'querying')

    def test_bad_scene_is_domain_error(self):
        record = dict(SCENE, objects=[{'label': 'robot_dog', 'position': [1.0, 0.0, 0.0]}])
        code, _, err = self.run_cli('decide', '--scene', self.write_scene(record))
        self.assertEqual(code, 1)
        self.assertIn("robot_dog", err)


class TestEpisode(CliTestCase):

    def test_compare_policies(self):
        code, out, _ = self.run_cli('--json', 'episode', '--class-mix', '1,0,0', '--epsilon', '0',
                                    '--episodes', '3', '--jobs', '2')
        self.assertEqual(code, 0)
        data = json.loads(out)
        self.assertEqual(data['mean_saved'], 55.0)
        self.assertEqual(len(data['pairs']), 3)

    def test_single_policy_trace(self):
        out_path = self.dir / "episode.json"
        code, out, _ = self.run_cli('episode', '--class-mix', '1,0,0', '--policy', 'passive',
                                    '--out', str(out_path))
        self.assertEqual(code, 0)
        self.assertIn("idle=60s", out)
        data = json.loads(out_path.read_text(encoding="utf-8"))
        self.assertEqual(data['episodes'][0]['final_state'], 'arrived')

    def test_spec_file(self):
        spec = self.dir / "spec.json"
        spec.write_text(json.dumps({'scenario': 's1', 'seed': 2, 'class_mix': [1, 0, 0],
                                    'replies': ['go ahead']}), encoding="utf-8")
        code, out, _ = self.run_cli('--json', 'episode', '--spec', str(spec), '--policy', 'proactive')
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)['episodes'][0]['idle_s'], 0.0)


class TestExitCodes(CliTestCase):

    def test_no_command(self):
        code, out, _ = self.run_cli()
        self.assertEqual(code, 2)
        self.assertIn("Labmate", out)

    def test_usage_error(self):
        self.assertEqual(self.run_cli('gen', '--count', 'many')[0], 2)
        self.assertEqual(self.run_cli('gen', '--class-mix', '1,2')[0], 2)
        self.assertEqual(self.run_cli('frobnicate')[0], 2)

    def test_version(self):
        code, out, _ = self.run_cli('--version')
        self.assertEqual(code, 0)
        self.assertIn("labmate", out)

    def test_invalid_config_value(self):
        code, _, err = self.run_cli('gen', '--class-mix', '0.5,0.5,0.5')
        self.assertEqual(code, 1)
        self.assertIn("class_mix", err)


if __name__ == '__main__':
    unittest.main(verbosity=2)
