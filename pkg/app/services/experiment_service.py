"""
实验服务模块
把运行配置转成网络、参数和求解器调用，并写出 CSV 产物
"""
import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, Union

import numpy as np

from ..core.atomic_mp import run_atomic_bilevel, run_atomic_equilibrium
from ..core.bilevel_toll import run_bilevel
from ..core.constants import NetworkSources, Subcommands
from ..core.cost_model import AffineLatency
from ..core.errors import ConfigError, FlowNetError, NonConvergenceError, OracleError, OracleMismatchError
from ..core.flow_control import gradient_mse_trace, run_flow_control, run_ggd_control
from ..core.logger import logger
from ..core.mp_equilibrium import run_equilibrium, run_equilibrium_multidest
from ..core.network_builder import generate_lattice, generate_rrg, generate_small_world, place_integer_users, preprocess
from ..core.parsers import load_tntp, write_network
from ..models.network_models import DirectedNetwork, UndirectedNetwork
from ..models.params_models import AtomicParams, BilevelParams, EquilibriumParams, FlowControlParams
from ..models.result_models import RunSummary
from ..oracles import oracle_registry
from ..oracles.builtin.atomic_min_cost_flow import atomic_min_cost_flow
from ..oracles.builtin.convex_equilibrium import convex_equilibrium
from ..schemas.run_schemas import RunConfig
from .artifact_service import ArtifactService

# 测试模式下与基准解比较的容差
EQUILIBRIUM_MATCH_TOL = 1e-6
GRADIENT_MATCH_TOL = 1e-10


class ExperimentService:
    """单次实现的实验执行"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.artifacts = ArtifactService(config.output_dir)
        self.logger = logging.getLogger("ExperimentService")

    # 网络

    def build_network(self, directed: bool = True) -> Union[DirectedNetwork, UndirectedNetwork]:
        spec = self.config.network
        seed = self.config.seed
        if spec.kind == NetworkSources.FILE:
            if not directed:
                raise ConfigError("无向流网络只能由生成器给出")
            resource_path = spec.resource_path
            if resource_path is None and spec.case is not None:
                resource_path = Path(spec.path).parent / f"siouxfalls_case_{spec.case}.txt"
            return preprocess(load_tntp(spec.path, resource_path))
        if spec.kind == NetworkSources.RRG:
            return generate_rrg(spec.n, spec.degree, seed, directed, spec.num_destinations)
        if spec.kind == NetworkSources.SMALL_WORLD:
            return generate_small_world(spec.side, spec.p_rw, seed, directed, spec.num_destinations)
        return generate_lattice(spec.side, seed, directed, spec.num_destinations)

    def build_cost(self, net: DirectedNetwork) -> AffineLatency:
        return AffineLatency.from_network(net, self.config.sensitivity)

    def equilibrium_params(self) -> EquilibriumParams:
        values = {"learning_rate": self.config.learning_rate, "method": self.config.method, "seed": self.config.seed}
        if self.config.sweeps and self.config.subcommand == Subcommands.EQUILIBRIUM:
            values["max_sweeps"] = self.config.sweeps
        return EquilibriumParams(**values)

    # 子命令

    def cmd_equilibrium(self) -> Dict[str, Any]:
        """非原子均衡：收敛轨迹与边流量，流量误差相对凸优化基准"""
        net = self.build_network()
        cost = self.build_cost(net)
        classes = net.traffic_classes()
        oracle = convex_equilibrium(net, cost, classes=classes)
        params = self.equilibrium_params()
        if len(classes) > 1:
            report = run_equilibrium_multidest(net, cost, classes=classes, params=params, reference_flows=oracle.flows)
        else:
            report = run_equilibrium(net, cost, method=self.config.method, params=params, reference_flows=oracle.flows)

        self.artifacts.write_csv(
            self.config, "convergence.csv",
            ["sweep", "message_change", "flow_error", "leaf_count"],
            ([r.sweep, r.message_change, r.flow_error, r.leaf_count] for r in report.trace)
        )
        self.artifacts.write_csv(
            self.config, "flows.csv",
            ["edge", "head", "tail", "flow", "oracle_flow"],
            ([net.edge_labels[e], net.node_labels[h], net.node_labels[t], report.flows[e], oracle.flows[e]]
             for e, (h, t) in enumerate(net.edges))
        )
        self.artifacts.write_csv(
            self.config, "messages.csv",
            ["class", "node", "edge", "working_point", "leaf", "alpha", "beta", "breakpoint"],
            ([m.traffic_class, net.node_labels[m.node], net.edge_labels[m.edge], m.working_point, m.leaf,
              m.alpha, m.beta, m.breakpoint] for m in report.messages)
        )
        metrics = {
            "sweeps": report.sweeps,
            "converged": report.converged,
            "flow_error": report.final_flow_error,
            "wardrop_passed": report.wardrop.passed if report.wardrop else False
        }
        if not report.converged:
            raise NonConvergenceError("消息传递均衡在预算内未收敛", metrics)
        if self.config.test_mode and (report.final_flow_error or 0.0) > EQUILIBRIUM_MATCH_TOL:
            raise OracleMismatchError("均衡流量与基准解不一致", metrics)
        return metrics

    def cmd_toll(self) -> Dict[str, Any]:
        """双层收费：分数代价降低轨迹与最优收费"""
        net = self.build_network()
        cost = self.build_cost(net)
        values = {
            "tau_max": self.config.tau_max,
            "warmup_sweeps": self.config.warmup_sweeps,
            "updates_per_sweep": self.config.updates_per_sweep,
            "tollable_fraction": self.config.tollable_fraction,
            "selection": self.config.selection,
            "equilibrium": self.equilibrium_params()
        }
        if self.config.sweeps:
            values["sweeps"] = self.config.sweeps
        trajectory = run_bilevel(net, cost, BilevelParams(**values), classes=net.traffic_classes())

        self.artifacts.write_csv(
            self.config, "toll_trace.csv",
            ["sweep", "social_cost", "fractional_reduction", "nonzero_tolls"],
            ([r.sweep, r.social_cost, r.fractional_reduction, r.nonzero_tolls] for r in trajectory.records)
        )
        self.artifacts.write_vector(
            self.config, "tolls.txt",
            ([net.node_labels[h], net.node_labels[t], tau] for (h, t), tau in zip(net.edges, trajectory.best_tolls))
        )
        metrics = {
            "nash_cost": trajectory.nash_cost,
            "optimum_cost": trajectory.optimum_cost,
            "best_social_cost": trajectory.best_social_cost,
            "tollable_edges": len(trajectory.tollable_edges),
            "lower_converged": trajectory.lower_converged
        }
        if not trajectory.lower_converged:
            raise NonConvergenceError("冻结收费后下层消息传递未收敛", metrics)
        return metrics

    def build_atomic_network(self) -> DirectedNetwork:
        net = self.build_network()
        if self.config.network.kind == NetworkSources.FILE:
            return net
        return place_integer_users(net, self.config.num_sources, self.config.users_per_source, self.config.seed)

    def cmd_atomic(self) -> Dict[str, Any]:
        """原子博弈均衡或双层收费"""
        net = self.build_atomic_network()
        cost = self.build_cost(net)
        values = {
            "window": self.config.window,
            "tie_break": self.config.tie_break,
            "tau_max": self.config.tau_max,
            "trials": self.config.trials,
            "seed": self.config.seed
        }
        if self.config.sweeps:
            values["max_sweeps"] = self.config.sweeps
            values["toll_sweeps"] = self.config.sweeps
        params = AtomicParams(**values)

        if self.config.bilevel:
            result = run_atomic_bilevel(net, cost, params)
            self.artifacts.write_csv(
                self.config, "atomic_toll_trace.csv",
                ["sweep", "social_cost", "fractional_reduction", "nonzero_tolls"],
                ([r.sweep, r.social_cost, r.fractional_reduction, r.nonzero_tolls] for r in result.trajectory)
            )
            self.artifacts.write_vector(
                self.config, "tolls.txt",
                ([net.node_labels[h], net.node_labels[t], tau] for (h, t), tau in zip(net.edges, result.tolls))
            )
            return {
                "nash_cost": result.nash_cost,
                "optimum_cost": result.optimum_cost,
                "social_cost": result.social_cost,
                "thresholded": result.thresholded
            }

        result = run_atomic_equilibrium(net, cost, params=params)
        self.artifacts.write_csv(
            self.config, "atomic_flows.csv",
            ["edge", "head", "tail", "flow"],
            ([net.edge_labels[e], net.node_labels[h], net.node_labels[t], result.flows[e]]
             for e, (h, t) in enumerate(net.edges))
        )
        metrics = {
            "potential": result.potential,
            "social_cost": result.social_cost,
            "converged": result.converged,
            "repaired": result.repaired
        }
        if self.config.test_mode:
            exact = atomic_min_cost_flow(net, cost)
            metrics["oracle_potential"] = exact.potential
            if result.potential > exact.potential + EQUILIBRIUM_MATCH_TOL * max(1.0, abs(exact.potential)):
                raise OracleMismatchError("原子博弈势函数高于精确最小值", metrics)
        return metrics

    def flow_control_params(self) -> FlowControlParams:
        values = {
            "theta": self.config.theta,
            "num_targets": self.config.num_targets,
            "targets": self.config.targets,
            "r_min": self.config.r_min,
            "r_max": self.config.r_max,
            "step": self.config.step,
            "method": self.config.method,
            "seed": self.config.seed
        }
        if self.config.sweeps:
            values["max_sweeps"] = self.config.sweeps
        return FlowControlParams(**values)

    def cmd_flowcontrol(self) -> Dict[str, Any]:
        """流量调控：目标轨迹、调控后的 r，以及可选的精确梯度基线"""
        net = self.build_network(directed=False)
        params = self.flow_control_params()
        result = run_flow_control(net, params)
        self.artifacts.write_csv(
            self.config, "control_trace.csv",
            ["step", "objective", "min_rho"],
            ([r.step, r.objective, r.min_rho] for r in result.trajectory)
        )
        self.artifacts.write_vector(
            self.config, "resistance.txt",
            ([net.node_labels[i], net.node_labels[j], r] for (i, j), r in zip(net.edges, result.resistance))
        )
        metrics = {"success": result.success, "objective": result.objective, "steps": result.steps}

        if self.config.ggd:
            baseline = run_ggd_control(net, params)
            self.artifacts.write_csv(
                self.config, "ggd_trace.csv",
                ["step", "objective", "min_rho"],
                ([r.step, r.objective, r.min_rho] for r in baseline.trajectory)
            )
            metrics["ggd_success"] = baseline.success

        if self.config.test_mode:
            trace = gradient_mse_trace(net, params, sweeps=params.max_sweeps)
            self.artifacts.write_csv(
                self.config, "gradient_mse.csv",
                ["sweep", "mse", "flow_error"],
                ([r.sweep, r.mse, r.flow_error] for r in trace)
            )
            metrics["gradient_mse"] = trace[-1].mse
            if not trace[-1].mse < GRADIENT_MATCH_TOL:
                raise OracleMismatchError("梯度消息与精确梯度不一致", metrics)
        return metrics

    def cmd_oracle(self) -> Dict[str, Any]:
        """按 ID 运行一个基准求解器"""
        oracle_id = self.config.oracle_id
        if not oracle_registry.list_oracles():
            oracle_registry.discover_oracles()
        oracle = oracle_registry.get_oracle(oracle_id) if oracle_id else None
        if oracle is None:
            raise ConfigError(f"未知的基准求解器: {oracle_id}", {"available": [o["oracle_id"] for o in oracle_registry.list_oracles()]})
        if "cost" in oracle.required_parameters:
            net = self.build_atomic_network() if oracle_id.startswith("atomic") else self.build_network()
            parameters = {"network": net, "cost": self.build_cost(net)}
        else:
            parameters = {"network": self.build_network(directed=False)}
        report = oracle_registry.execute_oracle(oracle_id, parameters)
        path = self.artifacts.run_dir(self.config) / f"{oracle_id}.json"
        path.write_text(report.to_json() + "\n", encoding="utf-8")
        if not report.success:
            raise OracleError(report.error or "基准求解器失败", report.metadata)
        return dict(report.metadata)

    def cmd_generate(self) -> Dict[str, Any]:
        """生成网络并写成文本格式"""
        net = self.build_network(directed=not self.config.undirected)
        if self.config.output:
            path = write_network(net, self.config.output)
        else:
            path = write_network(net, self.artifacts.run_dir(self.config) / "network.txt")
        return {"path": str(path), "nodes": net.num_nodes, "edges": net.num_edges}

    def handler(self) -> Callable[[], Dict[str, Any]]:
        return {
            Subcommands.EQUILIBRIUM: self.cmd_equilibrium,
            Subcommands.TOLL: self.cmd_toll,
            Subcommands.ATOMIC: self.cmd_atomic,
            Subcommands.FLOW_CONTROL: self.cmd_flowcontrol,
            Subcommands.ORACLE: self.cmd_oracle,
            Subcommands.GENERATE: self.cmd_generate
        }[self.config.subcommand]


def execute(config: RunConfig) -> RunSummary:
    """
    执行一次实现；错误被转换为退出码和机器可读记录，不向外抛出

    Returns:
        实现摘要（出错时 metrics["error"] 为错误记录）
    """
    start = time.time()
    service = ExperimentService(config)
    error = None
    try:
        service.artifacts.write_config(config)
        metrics = service.handler()()
        exit_code = 0
    except FlowNetError as e:
        metrics = dict(e.metadata)
        metrics["error"] = e.to_dict()
        exit_code = e.exit_code
        error = e.message
    except ValueError as e:
        wrapped = ConfigError(str(e))
        metrics = {"error": wrapped.to_dict()}
        exit_code = wrapped.exit_code
        error = wrapped.message
    logger.log_run(config.subcommand, config.seed, config.digest(), exit_code, time.time() - start, error)
    return RunSummary(seed=config.seed, exit_code=exit_code, metrics=_plain(metrics))


def _plain(metrics: Dict[str, Any]) -> Dict[str, Any]:
    """numpy 标量转为内置类型，便于跨进程传递与写出"""
    return {key: value.item() if isinstance(value, np.generic) else value for key, value in metrics.items()}
