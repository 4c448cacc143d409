# -*- coding: utf-8 -*-
"""
Labmate 人機共享實驗室決策系統 - CLI 主程式

子命令：
    gen      產生合成場景資料集（JSONL）
    label    以規則標註器重新標註資料集
    decide   對單一場景做判斷並產生詢問訊息（可互動回覆）
    episode  執行回合模擬，比較主動 / 被動策略
    eval     k 折交叉驗證評估
    report   顯示評估報告或準確率表
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Dict, List, Optional, Sequence

from dotenv import load_dotenv

from config import LOGGING_CONFIG, VERSION, VERSION_NAME
from core.api_client import BackendConfig, BackendKind, get_client
from core.decision import ActionKind, DecisionEvent, DecisionMachine, Policy, RobotState
from core.errors import ConfigError, DatasetIOError, LabmateError
from core.evaluator import available_deltas, cells_from_table, records_from_scenes, render_table, run_eval
from core.pipeline import ScenePipeline
from core.rules import classify_scene
from core.settings import GlobalConfig, resolve_config
from core.simulator import DEFAULT_REPLIES, EpisodeSpec, compare_policies, run_episode
from templates.prompts import PromptVariant
from utils.scenario_generator import CLASS_ORDER, allocate_counts, class_counts, generate_dataset
from utils.scene_io import ingest_scene, load_dataset, write_scenes

logger = logging.getLogger(__name__)


def print_banner():
    """打印歡迎橫幅"""
    banner = f"""
╔══════════════════════════════════════════════════════════╗
║                                                          ║
║       Labmate 人機共享實驗室決策系統 v{VERSION:<19s}║
║       🤖 感知 → 推理 → 主動詢問                           ║
║       🧪 {VERSION_NAME:<48s}║
║                                                          ║
╚══════════════════════════════════════════════════════════╝
"""
    print(banner)


def setup_logging(verbosity: int) -> None:
    """CLI 唯一的 basicConfig 呼叫；-v 為 DEBUG，-q 為 WARNING"""
    if verbosity > 0:
        level = logging.DEBUG
    elif verbosity < 0:
        level = logging.WARNING
    else:
        level = LOGGING_CONFIG['level']
    logging.basicConfig(level=level, format=LOGGING_CONFIG['format'])


def _class_mix(text: str):
    try:
        parts = tuple(float(p) for p in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"class mix must be three comma-separated numbers: {text!r}")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"class mix must have three entries: {text!r}")
    return parts


def _variant(text: str) -> PromptVariant:
    try:
        return PromptVariant.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument('--backend', choices=[k.value for k in BackendKind], help='判斷後端（mock / http）')
    p.add_argument('--epsilon', type=float, help='mock 後端的標籤翻轉機率 ε')
    p.add_argument('--endpoint', help='HTTP chat-completions 端點 URL')
    p.add_argument('--model', help='HTTP 請求中的模型名稱')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='labmate',
        description='Labmate 人機共享實驗室決策系統',
    )
    parser.add_argument('--version', action='version', version=f"labmate {VERSION}")
    parser.add_argument('--config', help='TOML 配置文件（亦可用環境變數 LABMATE_CONFIG）')
    parser.add_argument('--json', action='store_true', help='以 JSON 輸出到 stdout')
    parser.add_argument('-v', '--verbose', action='store_true', help='詳細日誌（DEBUG）')
    parser.add_argument('-q', '--quiet', action='store_true', help='只顯示警告與錯誤')
    parser.add_argument('--show-config', action='store_true', help='執行前打印已解析的配置')

    sub = parser.add_subparsers(dest='command', metavar='<command>')

    # gen
    p = sub.add_parser('gen', help='產生合成場景資料集')
    p.add_argument('--scenario', choices=['s1', 's2', 's3'], help='場景類型')
    p.add_argument('--count', type=int, help='場景數量')
    p.add_argument('--seed', type=int, help='隨機種子（u64）')
    p.add_argument('--out', help='輸出 JSONL 路徑（省略時寫到 stdout）')
    p.add_argument('--class-mix', type=_class_mix, help='類別比例 a,b,c（ObstructInteract, Neither, ObstructOnly）')
    p.add_argument('--occupancy', type=int, help='人佔用設備的秒數')
    p.add_argument('--pos-sigma', type=float, help='位置高斯噪聲標準差（公尺）')
    p.add_argument('--depth-sigma', type=float, help='深度乘性噪聲標準差')
    p.add_argument('--dropout', type=float, help='偵測遺失機率')
    p.add_argument('--detections', action='store_true', default=None,
                   help='以邊界框 + 深度輸出物件（經預設相機投影）')

    # label
    p = sub.add_parser('label', help='以規則標註器重新標註資料集')
    p.add_argument('--dataset', help='輸入 JSONL')
    p.add_argument('--out', help='輸出 JSONL（省略時只打印統計）')
    p.add_argument('--rules-from-config', action='store_true',
                   help='以配置中的規則覆寫既有真值（預設只補上缺少的真值並回報不一致）')
    p.add_argument('--strict', action='store_true', help='記錄中有未知欄位時報錯')

    # decide
    p = sub.add_parser('decide', help='判斷單一場景並產生詢問訊息')
    p.add_argument('--scene', required=True, help='單一場景 JSON 記錄')
    _add_backend_flags(p)
    p.add_argument('--variant', type=_variant, help='提示詞變體（vision / vision+depth）')
    p.add_argument('--policy', choices=[x.value for x in Policy], default=Policy.PROACTIVE.value,
                   help='決策策略')
    p.add_argument('--interactive', action='store_true', help='打印機器人訊息並從 stdin 讀取回覆')
    p.add_argument('--reply', action='append', help='腳本化的人類回覆（可重複）')

    # episode
    p = sub.add_parser('episode', help='執行回合模擬')
    p.add_argument('--spec', help='回合設定 JSON（與下列場景參數擇一）')
    p.add_argument('--scenario', choices=['s1', 's2', 's3'], help='場景類型')
    p.add_argument('--seed', type=int, help='隨機種子（u64）')
    p.add_argument('--index', type=int, default=0, help='第一個場景的索引')
    p.add_argument('--occupancy', type=int, help='人佔用設備的秒數')
    p.add_argument('--class-mix', type=_class_mix, help='類別比例 a,b,c')
    p.add_argument('--reply', action='append', help='人類回覆（可重複，依序使用）')
    p.add_argument('--policy', choices=['proactive', 'passive', 'both'], default='both', help='策略')
    p.add_argument('--episodes', type=int, default=1, help='回合數')
    _add_backend_flags(p)
    p.add_argument('--variant', type=_variant, help='提示詞變體')
    p.add_argument('--jobs', type=int, default=os.cpu_count(), help='平行工作數')
    p.add_argument('--out', help='結果 JSON 輸出路徑')

    # eval
    p = sub.add_parser('eval', help='k 折交叉驗證評估')
    p.add_argument('--dataset', help='JSONL 資料集')
    _add_backend_flags(p)
    p.add_argument('--variant', type=_variant, action='append',
                   help='提示詞變體（可重複；預設兩種都評估）')
    p.add_argument('--folds', type=int, help='折數 k')
    p.add_argument('--seed', type=int, help='切分種子（u64）')
    p.add_argument('--report', help='報告 JSON 輸出路徑')
    p.add_argument('--base-epsilon', type=float,
                   help='加入一個 base 角色的 mock 後端（供 fine_tuned_vs_base 差值）')
    p.add_argument('--strict', action='store_true', help='記錄中有未知欄位時報錯')
    p.add_argument('--lenient', action='store_true', help='寬鬆解析模型輸出')
    p.add_argument('--jobs', type=int, default=os.cpu_count(), help='平行工作數')

    # report
    p = sub.add_parser('report', help='顯示評估報告或準確率表')
    group = p.add_mutually_exclusive_group()
    group.add_argument('--report', help='eval 產生的報告 JSON')
    group.add_argument('--table', help='格子表 JSON（[{scenario, variant, role, mean, spread}]）')

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Dict]:
    """命令列參數 → 配置區段（None 表示未指定）"""
    opts = vars(args)
    get = opts.get
    return {
        'backend': {
            'kind': get('backend'),
            'epsilon': get('epsilon'),
            'endpoint_url': get('endpoint'),
            'model_name': get('model'),
            'lenient_parse': True if get('lenient') else None,
        },
        'sim': {
            'scenario': get('scenario'),
            'count': get('count'),
            'seed': get('seed') if args.command in ('gen', 'episode') else None,
            'class_mix': get('class_mix'),
            'occupancy_s': get('occupancy'),
            'pos_sigma_m': get('pos_sigma'),
            'depth_sigma_m': get('depth_sigma'),
            'dropout_p': get('dropout'),
            'emit_detections': get('detections'),
        },
        'eval': {
            'folds': get('folds'),
            'seed': get('seed') if args.command == 'eval' else None,
        },
        'paths': {
            'dataset': get('dataset'),
            'report': get('report') if args.command == 'eval' else None,
            'out': get('out'),
        },
    }


def _emit(args: argparse.Namespace, data) -> None:
    if args.json:
        print(json.dumps(data, sort_keys=True, ensure_ascii=False, indent=2))


def _read_json(path: str):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except OSError as e:
        raise DatasetIOError(f"無法讀取 {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DatasetIOError(f"{path} 不是有效的 JSON: {e}") from e


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
    except OSError as e:
        raise DatasetIOError(f"無法寫入 {path}: {e}") from e


def _require_path(cfg: GlobalConfig, key: str, flag: str) -> str:
    path = cfg.paths.get(key)
    if not path:
        raise ConfigError(f"{flag} is required (or set [paths].{key} in the config file)")
    return path


def _progress(args: argparse.Namespace, cfg: GlobalConfig) -> bool:
    return not args.json and cfg.verbosity >= 0 and sys.stderr.isatty()


# ---------------------------------------------------------------- 子命令

def cmd_gen(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    spec = cfg.sim
    out = cfg.paths.get('out')
    if out is None:
        generate_dataset(spec, sys.stdout)
        return 0

    written = generate_dataset(spec, out, progress=_progress(args, cfg))
    planned = dict(zip((k.value for k in CLASS_ORDER), allocate_counts(spec.count, spec.class_mix)))
    summary = {'out': out, 'written': written, 'scenario': spec.scenario.value,
               'seed': spec.seed, 'class_counts': planned}
    if args.json:
        _emit(args, summary)
    else:
        print(f"✓ 已寫出 {written} 個 {spec.scenario.value} 場景 → {out}")
        for name, n in planned.items():
            print(f"  {name:18s} {n}")
    return 0


def cmd_label(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    dataset = _require_path(cfg, 'dataset', '--dataset')
    scenes = load_dataset(dataset, strict=args.strict)

    labelled = []
    filled = disagreements = 0
    for scene in scenes:
        truth = classify_scene(scene, cfg.rules).labels
        if scene.truth is None:
            filled += 1
        elif scene.truth != truth:
            disagreements += 1
            logger.warning(f"{scene.scene_id}: 記錄真值 {scene.truth} 與規則標註 {truth} 不一致")
            if not args.rules_from_config:
                truth = scene.truth
        labelled.append(replace(scene, truth=truth))

    out = cfg.paths.get('out')
    if out:
        write_scenes(labelled, out, decimals=cfg.sim.decimals)

    counts = class_counts(labelled)
    summary = {'dataset': dataset, 'scenes': len(labelled), 'filled': filled,
               'disagreements': disagreements, 'class_counts': counts, 'out': out}
    if args.json:
        _emit(args, summary)
    else:
        print(f"📋 {dataset}: {len(labelled)} 個場景（補上 {filled}，不一致 {disagreements}）")
        for name, n in counts.items():
            print(f"  {name:18s} {n}")
        if out:
            print(f"✓ 已寫出 → {out}")
    return 0


def _print_backend_statistics(args: argparse.Namespace, backends: Sequence[BackendConfig]) -> None:
    """HTTP 後端的調用統計（--json 時不打印）"""
    if args.json:
        return
    for backend in backends:
        if backend.kind is BackendKind.HTTP:
            get_client(backend).print_statistics()


def _print_actions(actions) -> None:
    for action in actions:
        if action.kind is ActionKind.EMIT_MESSAGE:
            continue
        detail = f" {action.seconds:g}s" if action.seconds else ""
        print(f"  → {action.kind.value}{detail}")


def cmd_decide(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    try:
        with open(args.scene, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise DatasetIOError(f"無法讀取場景 {args.scene}: {e}") from e
    scene = ingest_scene(text.strip())

    variant = args.variant or PromptVariant.VISION_PLUS_DEPTH
    result = ScenePipeline(cfg.backend, variant, cfg.rules).judge(scene)
    machine = DecisionMachine(Policy(args.policy), cfg.decision)
    machine.trace.scene_id = scene.scene_id
    machine.trace.policy = args.policy

    actions = machine.deliver(DecisionEvent.of_judgment(result.judgment, result.equipment))
    if not args.json:
        j = result.judgment
        print(f"🔍 {scene.scene_id}: obstruction={j.obstruction} interaction={j.interaction} → {machine.state.value}")
        _print_actions(actions)

    replies = list(args.reply or [])
    while machine.state is RobotState.QUERYING:
        question = machine.last_message
        if replies:
            reply = replies.pop(0)
        elif args.interactive:
            print(f"🤖 {question}", flush=True)
            try:
                reply = input("🧑 ")
            except EOFError:
                reply = ""
        else:
            if not args.json:
                print(f"🤖 {question}")
            break
        # 空白回覆視同沒有回應
        if not reply.strip():
            actions = machine.deliver(DecisionEvent.timeout())
            if not args.json:
                _print_actions(actions)
            break
        actions = machine.deliver(DecisionEvent.reply(reply))
        if not args.json:
            _print_actions(actions)

    if args.json:
        data = result.to_dict()
        data['state'] = machine.state.value
        data['trace'] = machine.trace.to_dict()
        _emit(args, data)
    else:
        print(f"📍 最終狀態: {machine.state.value}")
    _print_backend_statistics(args, [cfg.backend])
    return 0


def cmd_episode(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    if args.episodes < 1:
        raise ConfigError("--episodes must be >= 1")
    variant = args.variant or PromptVariant.VISION_PLUS_DEPTH

    if args.spec:
        spec = EpisodeSpec.from_dict(_read_json(args.spec), rules=cfg.rules)
    else:
        replies = tuple(args.reply) if args.reply else DEFAULT_REPLIES
        scenario = cfg.sim.with_overrides(count=max(cfg.sim.count, args.index + args.episodes))
        spec = EpisodeSpec(scenario, args.index, replies, cfg.decision)

    if args.policy == 'both':
        comparison = compare_policies(spec.scenario, cfg.backend, args.episodes, spec.replies,
                                      spec.decision, variant, args.jobs)
        data = comparison.to_dict(include_pairs=True)
        if not args.json:
            print(f"📊 {comparison.episodes} 組配對回合")
            print(f"  平均等待（主動）...... {comparison.mean_idle_proactive:.2f} s")
            print(f"  平均等待（被動）...... {comparison.mean_idle_passive:.2f} s")
            print(f"  平均節省.............. {comparison.mean_saved:.2f} s (±{comparison.saved_std:.2f})")
            print(f"  平均改派（主動）...... {comparison.mean_reallocated_proactive:.2f} s")
            if comparison.dominance_violations:
                print(f"  ⚠️  主動策略較慢的回合: {comparison.dominance_violations}")
    else:
        policy = Policy(args.policy)
        scenario = spec.scenario.with_overrides(count=max(spec.scenario.count, spec.index + args.episodes))
        traces = [
            run_episode(replace(spec, scenario=scenario, index=spec.index + i), policy, cfg.backend, variant, cfg.rules)
            for i in range(args.episodes)
        ]
        data = {'policy': policy.value, 'episodes': [t.to_dict() for t in traces]}
        if not args.json:
            for trace in traces:
                print(f"🎬 {trace.scene_id} [{policy.value}] idle={trace.idle_s:g}s "
                      f"reallocated={trace.reallocated_s:g}s duration={trace.duration:g}s")
                for t, state, event in trace.transitions:
                    print(f"  t={t:>5g}  {event.describe():28s} → {state.value}")
                for speaker, text in trace.dialogue:
                    print(f"  {'🤖' if speaker == 'robot' else '🧑'} {text}")

    out = cfg.paths.get('out')
    if out:
        _write_text(out, json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
        if not args.json:
            print(f"✓ 已寫出 → {out}")
    _emit(args, data)
    return 0


def cmd_eval(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    dataset = _require_path(cfg, 'dataset', '--dataset')
    scenes = load_dataset(dataset, strict=args.strict)
    records = records_from_scenes(scenes, cfg.rules)

    backends = [cfg.backend]
    if args.base_epsilon is not None:
        backends.insert(0, cfg.backend.with_overrides(
            kind=BackendKind.MOCK, epsilon=args.base_epsilon, role='base', name=''))
    variants: List[PromptVariant] = args.variant or list(PromptVariant)

    report = run_eval(records, backends, variants, k=int(cfg.eval['folds']), seed=int(cfg.eval['seed']),
                      rules=cfg.rules, jobs=args.jobs, progress=_progress(args, cfg))
    text = report.to_json()

    path = cfg.paths.get('report')
    if path:
        _write_text(path, text)

    if args.json:
        sys.stdout.write(text)
    else:
        print(render_table(report.to_dict()))
        print(f"\n解析失敗率: {report.parse_failure_rate:.2%}  後端失敗率: {report.backend_failure_rate:.2%}"
              f"  不一致預測率: {report.inconsistent_prediction_rate:.2%}")
        if path:
            print(f"✓ 報告 → {path}")
    _print_backend_statistics(args, backends)
    return 0


def cmd_report(args: argparse.Namespace, cfg: GlobalConfig) -> int:
    path = args.report or args.table or cfg.paths.get('report')
    if not path:
        raise ConfigError("--report or --table is required")
    data = _read_json(path)
    if args.json:
        cells = cells_from_table(data)
        _emit(args, {
            'cells': [{'scenario': s, 'variant': v, 'role': r, 'mean': m} for (s, v, r), m in sorted(cells.items())],
            'deltas': available_deltas(cells),
        })
    else:
        print(render_table(data))
    return 0


COMMANDS = {
    'gen': cmd_gen,
    'label': cmd_label,
    'decide': cmd_decide,
    'episode': cmd_episode,
    'eval': cmd_eval,
    'report': cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """主程式；回傳結束碼（0 成功 / 1 領域錯誤 / 2 用法錯誤）"""
    load_dotenv()

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if args.command is None:
        print_banner()
        parser.print_help(sys.stderr)
        return 2

    verbosity = 1 if args.verbose else (-1 if args.quiet else 0)
    setup_logging(verbosity)

    try:
        cfg = resolve_config(args.config, _overrides(args), verbosity)
        if args.show_config:
            cfg.print_summary()
        return COMMANDS[args.command](args, cfg)
    except LabmateError as e:
        print(f"❌ 錯誤: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("\n\n⚠️  使用者中斷操作", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
