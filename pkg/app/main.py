"""
消息传递求解套件命令行入口

    python -m app.main equilibrium --rrg 100 3 --seed 1 --method grounded
    python -m app.main toll --rrg 100 3 --tau-max 1
    python -m app.main atomic --network data/siouxfalls.txt --case I --bilevel
    python -m app.main flow-control --rrg 200 3 --theta 0.1 --ggd
    python -m app.main oracle --list
"""
import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import List, Optional

from pydantic import ValidationError

from .config import APP_NAME, APP_VERSION, settings
from .core.constants import ExitCodes, NetworkSources, Subcommands
from .core.errors import ConfigError
from .core.logger import logger
from .models.result_models import RunSummary
from .oracles import oracle_registry
from .schemas.run_schemas import NetworkSpec, RunConfig
from .services.artifact_service import ArtifactService
from .services.experiment_service import execute


def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--seed", type=int, default=0, help="随机种子")
    parser.add_argument("--realizations", type=int, default=1, help="独立实现数，种子依次递增")
    parser.add_argument("--output-dir", default=settings.OUTPUT_DIR, help="输出目录（环境变量 FLOWNET_OUTPUT_DIR）")
    parser.add_argument("--log-level", default=None, help="日志级别")
    parser.add_argument("--sweeps", type=int, default=None, help="扫描轮数上限")
    parser.add_argument("--test-mode", action="store_true", help="与基准解比较，不一致时退出码为 4")

    source = parser.add_mutually_exclusive_group()
    source.add_argument("--rrg", nargs=2, type=int, metavar=("N", "D"), help="随机正则图")
    source.add_argument("--small-world", nargs="+", type=float, metavar="SIDE [P_RW]", help="重连方格")
    source.add_argument("--lattice", type=int, metavar="SIDE", help="方格")
    source.add_argument("--network", help="路网文件")
    parser.add_argument("--resources", help="资源文件")
    parser.add_argument("--case", choices=["I", "II"], help="苏福尔斯原子博弈的用户设置")
    parser.add_argument("--destinations", type=int, default=1, help="目的地数量 N_d")
    return parser


def _add_method(parser: argparse.ArgumentParser, default: str):
    parser.add_argument("--method", choices=["grounded", "constrained"], default=default, help="目的地处理方式")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog=APP_NAME, description="路网均衡、收费与流量调控的消息传递求解器")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    equilibrium = subparsers.add_parser(Subcommands.EQUILIBRIUM, parents=[common], help="非原子 Wardrop 均衡")
    _add_method(equilibrium, "grounded")
    equilibrium.add_argument("--learning-rate", type=float, default=settings.MP_LEARNING_RATE)
    equilibrium.add_argument("--sensitivity", type=float, default=1.0)

    toll = subparsers.add_parser(Subcommands.TOLL, parents=[common], help="双层收费优化")
    _add_method(toll, "grounded")
    toll.add_argument("--learning-rate", type=float, default=settings.MP_LEARNING_RATE)
    toll.add_argument("--sensitivity", type=float, default=1.0)
    toll.add_argument("--tau-max", type=float, default=1.0)
    toll.add_argument("--tollable-fraction", type=float, default=1.0)
    toll.add_argument("--selection", choices=["heuristic", "random", "all"], default="all")
    toll.add_argument("--updates-per-sweep", type=int, default=settings.TOLL_UPDATES_PER_SWEEP,
                      help="每轮收费更新次数，0 表示按 (2/5)·N_d·|E| 的消息更新间隔")
    toll.add_argument("--warmup-sweeps", type=int, default=settings.TOLL_WARMUP_SWEEPS)

    atomic = subparsers.add_parser(Subcommands.ATOMIC, parents=[common], help="原子博弈均衡与收费")
    atomic.add_argument("--sensitivity", type=float, default=1.0)
    atomic.add_argument("--window", type=int, default=settings.ATOMIC_WINDOW)
    atomic.add_argument("--tie-break", choices=["residual", "bias"], default="residual")
    atomic.add_argument("--trials", type=int, default=settings.ATOMIC_TRIALS)
    atomic.add_argument("--tau-max", type=float, default=1.0)
    atomic.add_argument("--sources", type=int, default=3, help="生成网络上的源节点数")
    atomic.add_argument("--users", type=int, default=4, help="每个源节点的用户数")
    atomic.add_argument("--bilevel", action="store_true", help="运行双层收费")

    control = subparsers.add_parser(Subcommands.FLOW_CONTROL, parents=[common], help="无向网络流量调控")
    _add_method(control, "constrained")
    control.add_argument("--theta", type=float, default=0.1)
    control.add_argument("--targets", type=int, default=5, help="随机目标边数量")
    control.add_argument("--target", nargs=2, type=int, action="append", metavar=("P", "Q"), help="指定目标边")
    control.add_argument("--r-min", type=float, default=settings.FLOW_CONTROL_R_MIN)
    control.add_argument("--r-max", type=float, default=settings.FLOW_CONTROL_R_MAX)
    control.add_argument("--step", type=float, default=settings.FLOW_CONTROL_STEP)
    control.add_argument("--ggd", action="store_true", help="同时运行精确梯度基线")

    oracle = subparsers.add_parser(Subcommands.ORACLE, parents=[common], help="运行基准求解器")
    oracle.add_argument("--list", action="store_true", dest="list_oracles", help="列出基准求解器")
    oracle.add_argument("--id", dest="oracle_id", help="基准求解器 ID")
    oracle.add_argument("--sensitivity", type=float, default=1.0)
    oracle.add_argument("--sources", type=int, default=3)
    oracle.add_argument("--users", type=int, default=4)

    generate = subparsers.add_parser(Subcommands.GENERATE, parents=[common], help="生成网络文件")
    generate.add_argument("--undirected", action="store_true")
    generate.add_argument("--output", help="输出文件")
    return parser


def _network_spec(args: argparse.Namespace) -> NetworkSpec:
    values = {"num_destinations": args.destinations, "case": args.case, "resource_path": args.resources}
    if args.network:
        values.update(kind=NetworkSources.FILE, path=args.network)
    elif args.small_world:
        values.update(kind=NetworkSources.SMALL_WORLD, side=int(args.small_world[0]))
        if len(args.small_world) > 1:
            values["p_rw"] = args.small_world[1]
    elif args.lattice:
        values.update(kind=NetworkSources.LATTICE, side=args.lattice)
    elif args.rrg:
        values.update(kind=NetworkSources.RRG, n=args.rrg[0], degree=args.rrg[1])
    return NetworkSpec(**values)


def build_config(args: argparse.Namespace) -> RunConfig:
    """命令行参数转运行配置"""
    values = {
        "subcommand": args.subcommand,
        "network": _network_spec(args),
        "seed": args.seed,
        "realizations": args.realizations,
        "sweeps": args.sweeps,
        "test_mode": args.test_mode,
        "output_dir": args.output_dir
    }
    optional = {
        "method": "method",
        "learning_rate": "learning_rate",
        "sensitivity": "sensitivity",
        "tau_max": "tau_max",
        "tollable_fraction": "tollable_fraction",
        "selection": "selection",
        "warmup_sweeps": "warmup_sweeps",
        "window": "window",
        "tie_break": "tie_break",
        "trials": "trials",
        "num_sources": "sources",
        "users_per_source": "users",
        "bilevel": "bilevel",
        "theta": "theta",
        "num_targets": "targets",
        "targets": "target",
        "r_min": "r_min",
        "r_max": "r_max",
        "step": "step",
        "ggd": "ggd",
        "oracle_id": "oracle_id",
        "list_oracles": "list_oracles",
        "undirected": "undirected",
        "output": "output"
    }
    for field, attr in optional.items():
        value = getattr(args, attr, None)
        if value is not None:
            values[field] = value
    if hasattr(args, "updates_per_sweep"):
        values["updates_per_sweep"] = args.updates_per_sweep or None
    return RunConfig(**values)


def _print_error(record: dict):
    print(json.dumps(record, ensure_ascii=False), file=sys.stderr)


def run_realizations(config: RunConfig) -> List[RunSummary]:
    """按种子并行运行多个独立实现"""
    configs = [config.for_seed(config.seed + k) for k in range(config.realizations)]
    if len(configs) == 1:
        return [execute(configs[0])]
    summaries = []
    with ProcessPoolExecutor() as executor:
        futures = [executor.submit(execute, item) for item in configs]
        for future in as_completed(futures):
            summaries.append(future.result())
    return sorted(summaries, key=lambda s: s.seed)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        logger.set_level(args.log_level)

    try:
        config = build_config(args)
    except (ValidationError, ConfigError) as e:
        error = e if isinstance(e, ConfigError) else ConfigError("配置无效", {"errors": e.errors()})
        _print_error(error.to_dict())
        return ExitCodes.CONFIG_ERROR

    if config.subcommand == Subcommands.ORACLE and config.list_oracles:
        oracle_registry.discover_oracles()
        print(json.dumps(oracle_registry.list_oracles(), ensure_ascii=False, indent=2))
        return ExitCodes.OK

    summaries = run_realizations(config)
    for summary in summaries:
        if summary.exit_code != ExitCodes.OK and "error" in summary.metrics:
            _print_error(summary.metrics["error"])
    if config.realizations > 1:
        ArtifactService(config.output_dir).write_summary(config, summaries)
    for summary in summaries:
        if summary.exit_code != ExitCodes.OK:
            return summary.exit_code
    return ExitCodes.OK


if __name__ == "__main__":
    sys.exit(main())
