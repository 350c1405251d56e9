"""
命令行入口

    python -m app.main synth --out data/synth.csv --events 5000 --signal 1.0 --seed 0
    python -m app.main label --in data/synth.csv --k 10 --out data/labels.csv
    python -m app.main train --config configs/default.conf --out runs/default
    python -m app.main eval --checkpoint runs/default/best.axlob --data data/synth.csv
    python -m app.main permtest --checkpoint runs/default/initial.axlob --data data/synth.csv --trials 5
    python -m app.main params --config configs/default.conf
    python -m app.main search --config configs/default.conf --iterations 8

每条命令向 stdout 输出一行 JSON（ResponseModel）；出错时向 stderr 输出一行 JSON，
退出码 2 配置错误、3 数据错误、4 数值发散。
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from typing import Any, Dict, List, Optional, Sequence

from app.core.config import settings
from app.core.run_config import RunConfig, load_run_config, parse_overrides
from app.models.metrics import RunMetadata
from app.models.response import failure, success
from app.services.evaluation_service import evaluate_checkpoint
from app.services.permutation_service import permutation_robustness, write_study_csv
from app.services.search_service import random_search
from app.services.training_service import load_datasets, run_training
from axial.checkpoint import load_checkpoint, read_checkpoint
from axial.errors import AxlobError, ConfigError, DataError, FileAccessError
from axial.model import init, parameter_count
from axial.model_config import canonical_text
from lob.ingest import IngestFormat, ingest, write_canonical_csv, write_labels
from lob.labeling import DEFAULT_ALPHA, class_distribution
from lob.splits import split, split_windows
from lob.synth import SynthConfig, synth_generate
from lob.windows import build_windows

logger = logging.getLogger(__name__)

# 对照用的 Axial-LOB 参考模型可学习参数量
REFERENCE_PARAMETER_COUNT = 9615
SPLIT_CHOICES = ("train", "validation", "test")


class CommandParser(argparse.ArgumentParser):
    """用法错误转为 ConfigError，由 main 统一输出单行错误"""

    def error(self, message: str):
        raise ConfigError(f"命令行参数错误: {message}")


def _require_file(path: str, what: str) -> str:
    if not path or not os.path.isfile(path):
        raise DataError(f"{what}不存在: {path}")
    return path


def _write_sidecar(path: str, items: Dict[str, Any]) -> str:
    sidecar = f"{path}.conf"
    with open(sidecar, "w", encoding="utf-8") as f:
        f.write(canonical_text(items))
    return sidecar


def _ensure_parent(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def _parse_horizons(text: Optional[str], k: int) -> List[int]:
    if not text:
        return [k]
    try:
        horizons = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"--horizons 需要逗号分隔的整数，当前为 {text!r}")
    if not horizons or min(horizons) <= 0:
        raise ConfigError("--horizons 中的步长必须为正整数")
    return horizons


def _checkpoint_run_config(checkpoint: str, data_path: Optional[str], overrides: Dict[str, str]) -> RunConfig:
    """检查点中保存的运行配置 + --data + --set"""
    items = read_checkpoint(_require_file(checkpoint, "检查点文件")).config_items
    if data_path:
        items["data.path"] = data_path
    items.update(overrides)
    return RunConfig.from_items(items)


def cmd_synth(args: argparse.Namespace) -> Dict[str, Any]:
    cfg = SynthConfig(events=args.events, horizon=args.horizon, alpha=args.alpha,
                      signal=args.signal, noise=args.noise, days=args.days)
    series = synth_generate(cfg, seed=args.seed)
    _ensure_parent(args.out)
    write_canonical_csv(series, args.out)
    items = {f"synth.{k}": v for k, v in asdict(cfg).items()}
    items["seed"] = args.seed
    sidecar = _write_sidecar(args.out, items)
    return {"out": args.out, "config": sidecar, "events": len(series),
            "planted_accuracy": series.metadata["planted_accuracy"],
            "class_shares": series.metadata["class_shares"]}


def cmd_label(args: argparse.Namespace) -> Dict[str, Any]:
    series = ingest(_require_file(args.input, "输入文件"), IngestFormat(args.format))
    windows = build_windows(series, args.k, args.alpha)
    _ensure_parent(args.out)
    write_labels(windows, args.out)

    table = class_distribution(series, _parse_horizons(args.horizons, args.k), args.alpha)
    summary_path = f"{args.out}.distribution.csv"
    table.to_csv(summary_path, encoding="utf-8", lineterminator="\n")
    logger.info("标签分布:\n%s", table.to_string())
    sidecar = _write_sidecar(args.out, {"label.input": args.input, "label.format": args.format,
                                        "label.k": args.k, "label.alpha": args.alpha})
    return {"out": args.out, "config": sidecar, "distribution": summary_path, "windows": len(windows),
            "class_distribution": json.loads(table.to_json(orient="index"))}


def cmd_train(args: argparse.Namespace) -> Dict[str, Any]:
    run_config = load_run_config(args.config, parse_overrides(args.set))
    _require_file(run_config.data.path, "数据文件")
    output_dir = args.out or os.path.join(settings.OUTPUT_DIRECTORY, run_config.config_hash())
    run = run_training(run_config, output_dir)
    return {
        "output_dir": output_dir,
        "config_hash": run_config.config_hash(),
        "best_epoch": run.state.best_epoch,
        "best_val_loss": run.state.best_val_loss,
        "epochs": run.state.epoch + 1,
        "stopped_early": run.state.stopped_early,
        "test_macro_f1": run.test_report.macro_f1 if run.test_report else None,
    }


def cmd_eval(args: argparse.Namespace) -> Dict[str, Any]:
    run_config = _checkpoint_run_config(args.checkpoint, args.data, parse_overrides(args.set))
    data = run_config.data
    series = ingest(_require_file(data.path, "数据文件"), data.format, run_config.fi2010.feature_rows, data.keep_ranges)
    segments = dict(zip(SPLIT_CHOICES, split_windows(series, split(series), data.horizon, data.alpha,
                                                     run_config.model.input_height)))
    metadata = RunMetadata(seed=run_config.seed, config_hash=run_config.config_hash(),
                           checkpoint=os.path.basename(args.checkpoint))
    report = evaluate_checkpoint(args.checkpoint, segments[args.split], metadata)

    out = args.out or os.path.join(os.path.dirname(args.checkpoint), f"eval_{args.split}.json")
    _ensure_parent(out)
    with open(out, "w", encoding="utf-8") as f:
        f.write(report.to_text())
    run_config.write(f"{out}.conf")
    return {"out": out, "split": args.split, "total": report.total,
            "macro_f1": report.macro_f1, "accuracy": report.accuracy}


def cmd_permtest(args: argparse.Namespace) -> Dict[str, Any]:
    if args.trials < 0:
        raise ConfigError(f"--trials 不能为负数，当前为 {args.trials}")
    run_config = _checkpoint_run_config(args.checkpoint, args.data, parse_overrides(args.set))
    _require_file(run_config.data.path, "数据文件")
    model, _ = load_checkpoint(args.checkpoint)
    data = load_datasets(run_config)
    study = permutation_robustness(model, data, run_config.train, trials=args.trials, seed=args.seed)

    out = args.out or os.path.join(os.path.dirname(args.checkpoint), "permtest.csv")
    _ensure_parent(out)
    summary = f"{out}.summary.csv"
    write_study_csv(study, out, summary)
    run_config.write(f"{out}.conf")
    return {"out": out, "summary": summary, "trials": args.trials, "rows": len(study.trials),
            "mean_delta": study.mean_delta, "std_delta": study.std_delta}


def cmd_params(args: argparse.Namespace) -> Dict[str, Any]:
    run_config = load_run_config(args.config, parse_overrides(args.set))
    count = parameter_count(init(run_config.model, run_config.seed))
    return {"parameters": count, "reference_parameters": REFERENCE_PARAMETER_COUNT,
            "config_hash": run_config.config_hash()}


def cmd_search(args: argparse.Namespace) -> Dict[str, Any]:
    run_config = load_run_config(args.config, parse_overrides(args.set))
    _require_file(run_config.data.path, "数据文件")
    output_dir = args.out or os.path.join(settings.OUTPUT_DIRECTORY, f"search_{run_config.config_hash()}")
    run_config.write(os.path.join(output_dir, settings.RUN_CONFIG_NAME))
    frame = random_search(run_config, args.iterations, args.seed, output_dir)
    best = json.loads(frame.iloc[0].to_json()) if not frame.empty else None
    return {"output_dir": output_dir, "candidates": len(frame), "best": best}


def build_parser() -> CommandParser:
    parser = CommandParser(prog="axlob", description="Axial-LOB 订单簿中间价方向分类")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=CommandParser)

    p = commands.add_parser("synth", help="生成带植入信号的合成订单簿")
    p.add_argument("--out", required=True)
    p.add_argument("--events", type=int, default=5000)
    p.add_argument("--signal", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--days", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_synth)

    p = commands.add_parser("label", help="标注并输出各步长的类别分布")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--out", required=True)
    p.add_argument("--horizons", default=None, help="如 10,20,30,50,100")
    p.add_argument("--format", default=IngestFormat.CANONICAL_CSV.value, choices=[f.value for f in IngestFormat])
    p.set_defaults(handler=cmd_label)

    p = commands.add_parser("train", help="训练模型")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("eval", help="评估检查点")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--split", default="test", choices=SPLIT_CHOICES)
    p.add_argument("--out", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(handler=cmd_eval)

    p = commands.add_parser("permtest", help="输入置换稳健性实验")
    p.add_argument("--checkpoint", required=True, help="起始权重，通常为 initial.axlob")
    p.add_argument("--data", default=None)
    p.add_argument("--trials", type=int, default=5, help="随机置换试验个数，另加一行恒等置换")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(handler=cmd_permtest)

    p = commands.add_parser("params", help="统计可学习参数量")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(handler=cmd_params)

    p = commands.add_parser("search", help="随机超参数搜索")
    p.add_argument("--config", default=None)
    p.add_argument("--iterations", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(handler=cmd_search)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=settings.LOG_LEVEL, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        logger.info("执行命令 %s", args.command)
        data = args.handler(args)
    except AxlobError as e:
        print(failure(e, e.exit_code).to_line(), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        wrapped = FileAccessError(f"文件读写失败: {e}")
        print(failure(wrapped, wrapped.exit_code).to_line(), file=sys.stderr)
        return wrapped.exit_code
    print(success(args.command, data).to_line())
    logger.info("命令 %s 完成", args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
