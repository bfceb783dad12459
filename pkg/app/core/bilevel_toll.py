"""
双层收费优化

下层是带收费的势函数消息传递（EquilibriumSolver），上层在同一组工作点上
维护社会代价 H 的平行消息。每隔固定次数的消息更新随机挑一条可收费边，
把它的收费调到让 x^N_e(τ) 最接近边上全社会代价极小点 x^G_e 的位置。
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from ..models.message_models import MessageTable
from ..models.network_models import DirectedNetwork, TrafficClass
from ..models.params_models import BilevelParams, TollSelection
from ..models.result_models import TollRecord, TollTrajectory
from ..oracles.builtin.convex_equilibrium import convex_equilibrium
from ..oracles.builtin.social_optimum import social_optimum
from .cost_model import LatencyModel, TollState, social_cost
from .edge_profile import merge_responses, optimize_edge_toll, interpolate_response
from .errors import ConfigError, OracleError
from .logger import logger
from .mp_equilibrium import EquilibriumSolver

# 记录点的代价允许超过 H_N 的容差
RECORD_TOL = 1e-6


def fractional_reduction(cost_value: float, nash_cost: float, optimum_cost: float) -> float:
    """(H − H_S)/(H_N − H_S)；无可降低的差距时为 0"""
    gap = nash_cost - optimum_cost
    if gap <= 1e-12:
        return 0.0
    return (cost_value - optimum_cost) / gap


class BilevelTollOptimizer:
    """
    双层消息传递收费优化器
    """

    def __init__(
        self,
        net: DirectedNetwork,
        cost: LatencyModel,
        params: Optional[BilevelParams] = None,
        classes: Optional[List[TrafficClass]] = None,
        tollable: Optional[List[int]] = None
    ):
        self.net = net
        self.cost = cost
        self.params = params or BilevelParams()
        self.logger = logging.getLogger("BilevelTollOptimizer")
        self.solver = EquilibriumSolver(net, cost, None, self.params.equilibrium, classes=classes)
        self.rng = self.solver.rng

        self.upper = MessageTable(self.solver.num_classes, self.solver.num_slots)
        self.upper.randomize(self.rng, self.solver.wp)
        self.tau_max = np.full(net.num_edges, self.params.tau_max)
        self.set_tollable(range(net.num_edges) if tollable is None else tollable)

    @property
    def tolls(self) -> np.ndarray:
        return self.solver.tolls

    def toll_state(self) -> TollState:
        """当前收费及其上限；越界时构造失败"""
        return TollState(tau=self.solver.tolls.tolist(), tau_max=self.tau_max.tolist())

    def set_tollable(self, edges):
        edges = sorted(set(int(e) for e in edges))
        for e in edges:
            if not 0 <= e < self.net.num_edges:
                raise ConfigError(f"可收费边 {e} 不存在")
        self.tollable = edges
        mask = np.zeros(self.net.num_edges, dtype=bool)
        mask[edges] = True
        self.tau_max = np.where(mask, self.params.tau_max, 0.0)
        self.solver.tolls[~mask] = 0.0

    def update_upper_message(self, a: int, s: int) -> float:
        """上层消息更新；工作点沿用下层，不在这里移动"""
        message = self.solver.solve_slot(self.upper, a, s, upper=True)
        if message is None:
            return 0.0
        return self.upper.assign(a, s, message)

    def toll_dependent_flow(self, e: int, tau_max: Optional[float] = None) -> List[Tuple[float, float]]:
        """
        x^N_e(τ)：当前下层消息下边 e 的流量随收费的变化

        Returns:
            (τ, x^N) 断点列表，多类别时为各类别之和
        """
        tau_max = self.tau_max[e] if tau_max is None else tau_max
        return merge_responses([
            self.solver.edge_profile(a, e, include_toll=False).toll_response(tau_max)
            for a in range(self.solver.num_classes)
        ])

    def social_target(self, e: int) -> float:
        """x^G_e = argmin H^full_e"""
        return sum(
            self.solver.edge_profile(a, e, table=self.upper, upper=True).argmin()
            for a in range(self.solver.num_classes)
        )

    def optimal_toll(self, e: int) -> float:
        tau = optimize_edge_toll(self.toll_dependent_flow(e), self.social_target(e))
        return float(min(max(tau, 0.0), self.tau_max[e]))

    def update_toll(self, e: int) -> float:
        tau = self.optimal_toll(e)
        self.solver.tolls[e] = tau
        return tau

    def full_cost_reduction(self, e: int) -> float:
        """把 x^N_e 推向 x^G_e 能使 H^full_e 下降的量"""
        response = self.toll_dependent_flow(e, self.params.tau_max)
        tau = optimize_edge_toll(response, self.social_target(e))
        reduction = 0.0
        for a in range(self.solver.num_classes):
            upper = self.solver.edge_profile(a, e, table=self.upper, upper=True)
            class_response = self.solver.edge_profile(a, e, include_toll=False).toll_response(self.params.tau_max)
            before = upper.value(interpolate_response(class_response, 0.0))
            after = upper.value(interpolate_response(class_response, tau))
            if math.isfinite(before) and math.isfinite(after):
                reduction += before - after
        return reduction

    def toll_interval(self) -> int:
        if self.params.updates_per_sweep is None:
            return max(1, int(round(0.4 * self.solver.num_classes * self.net.num_edges)))
        return max(1, self.solver.sweep_length() // self.params.updates_per_sweep)

    def sweep(self, update_tolls: bool) -> float:
        """下层与上层交错更新的一轮；update_tolls 时按节奏更新收费"""
        change = 0.0
        interval = self.toll_interval()
        for count, (a, s) in enumerate(self.solver.draw_schedule(self.solver.sweep_length()), start=1):
            change = max(change, self.solver.update_message(a, s))
            self.update_upper_message(a, s)
            if update_tolls and self.tollable and count % interval == 0:
                e = self.tollable[int(self.rng.integers(len(self.tollable)))]
                self.update_toll(e)
        return change

    def settle(self, max_sweeps: int) -> bool:
        """冻结收费，运行到下层收敛"""
        for _ in range(max_sweeps):
            if self.sweep(update_tolls=False) < self.solver.params.tol and self.solver.certified():
                return True
        return False


def select_tollable_edges(
    optimizer: BilevelTollOptimizer,
    fraction: float,
    selection: TollSelection = TollSelection.HEURISTIC,
    rng: Optional[np.random.Generator] = None
) -> List[int]:
    """
    选出可收费边

    Args:
        optimizer: 已在无收费下预热的优化器
        fraction: 可收费比例，(0, 1]
        selection: heuristic 按 H^full_e 可降低量排序，random 随机抽取，all 全部
        rng: 随机抽取用的生成器

    Returns:
        升序的边编号
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError("可收费比例必须在 (0, 1] 内", {"fraction": fraction})
    num_edges = optimizer.net.num_edges
    count = max(1, int(round(fraction * num_edges)))
    selection = TollSelection(selection)
    if selection == TollSelection.ALL_EDGES or count >= num_edges:
        return list(range(num_edges))
    if selection == TollSelection.RANDOM:
        rng = rng or optimizer.rng
        return sorted(int(e) for e in rng.choice(num_edges, size=count, replace=False))
    reductions = [(-optimizer.full_cost_reduction(e), e) for e in range(num_edges)]
    return sorted(e for _, e in sorted(reductions)[:count])


def marginal_cost_tolls(net: DirectedNetwork, cost: LatencyModel, classes: Optional[List[TrafficClass]] = None) -> np.ndarray:
    """τ_e = x_S,e · ℓ′_e(x_S,e)"""
    optimum = np.array(social_optimum(net, cost, classes=classes).flows)
    return optimum * cost.latency_prime(optimum)


def run_bilevel(
    net: DirectedNetwork,
    cost: LatencyModel,
    params: Optional[BilevelParams] = None,
    classes: Optional[List[TrafficClass]] = None,
    nash_cost: Optional[float] = None,
    optimum_cost: Optional[float] = None
) -> TollTrajectory:
    """
    双层收费优化

    Args:
        net: 路网
        cost: 延迟函数
        params: 参数（τ_max、预热轮数、收费节奏、可收费边选择）
        classes: 出行类别，默认取自路网
        nash_cost: H_N，缺省时由凸优化基准求得
        optimum_cost: H_S，缺省时由社会最优基准求得

    Returns:
        收费轨迹
    """
    params = params or BilevelParams()
    classes = classes or net.traffic_classes()
    if nash_cost is None:
        nash_cost = convex_equilibrium(net, cost, classes=classes).social_cost
    if optimum_cost is None:
        optimum_cost = social_optimum(net, cost, classes=classes).social_cost

    optimizer = BilevelTollOptimizer(net, cost, params, classes)
    for _ in range(params.warmup_sweeps):
        optimizer.sweep(update_tolls=False)

    if params.selection != TollSelection.ALL_EDGES or params.tollable_fraction < 1.0:
        optimizer.set_tollable(select_tollable_edges(optimizer, params.tollable_fraction, params.selection))

    trajectory = TollTrajectory(
        nash_cost=nash_cost,
        optimum_cost=optimum_cost,
        best_tolls=[0.0] * net.num_edges,
        best_social_cost=nash_cost,
        tollable_edges=optimizer.tollable
    )
    previous = None
    for sweep in range(1, params.sweeps + 1):
        optimizer.sweep(update_tolls=True)
        if sweep % params.record_interval:
            continue
        tolls = np.array(optimizer.toll_state().tau)
        try:
            evaluated = convex_equilibrium(net, cost, tolls=tolls, classes=classes, initial=previous)
        except OracleError as exc:
            logger.warning("收费记录评估失败", sweep=sweep, error=exc.message)
            continue
        previous = evaluated.class_flows
        value = social_cost(cost, evaluated.flows)
        if value > nash_cost + RECORD_TOL * max(1.0, abs(nash_cost)):
            logger.info("收费记录代价高于无收费均衡，跳过", sweep=sweep, social_cost=value, nash_cost=nash_cost)
            continue
        record = TollRecord(
            sweep=sweep,
            social_cost=value,
            fractional_reduction=fractional_reduction(value, nash_cost, optimum_cost),
            nonzero_tolls=int(np.count_nonzero(tolls > 0.0)),
            tolls=tolls.tolist()
        )
        trajectory.records.append(record)
        logger.log_solver_event("BilevelTollOptimizer", "toll_recorded", sweep=sweep, data={
            "social_cost": value,
            "fractional_reduction": record.fractional_reduction,
            "nonzero_tolls": record.nonzero_tolls
        }, level=logging.DEBUG)
        if value < trajectory.best_social_cost:
            trajectory.best_social_cost = value
            trajectory.best_tolls = tolls.tolist()

    trajectory.lower_converged = optimizer.settle(params.equilibrium.max_sweeps)
    if not trajectory.lower_converged:
        logger.warning("冻结收费后下层消息传递未收敛", sweeps=params.equilibrium.max_sweeps)
    logger.log_solver_event("BilevelTollOptimizer", "finished", sweep=params.sweeps, data={
        "best_social_cost": trajectory.best_social_cost,
        "nash_cost": nash_cost,
        "optimum_cost": optimum_cost,
        "records": len(trajectory.records)
    })
    return trajectory

