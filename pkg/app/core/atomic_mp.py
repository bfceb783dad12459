"""
原子路由博弈的最小和消息传递

每个用户控制一个单位流量，边流量为整数。槽位 (i→e) 上的消息是空腔能量
Φ_{i→e} 在以整数工作点 x̃ 为中心、半宽 M 的网格上的取值；
更新时在上游窗口的联合网格上做满足精确整数守恒的最小加卷积。
工作点每次向边际最优流量移动一步：x̃ ← x̃ + sign(x* − x̃)。
"""
import logging
import math
import time
from typing import Dict, List, Optional, Tuple

import numpy as np
import networkx as nx

from ..models.message_models import GridMessage
from ..models.network_models import DirectedNetwork
from ..models.params_models import AtomicParams, TieBreakRule
from ..models.result_models import AtomicBilevelResult, AtomicResult, TollRecord
from ..oracles.builtin.atomic_min_cost_flow import atomic_min_cost_flow
from .cost_model import AffineLatency
from .errors import ConfigError
from .logger import logger
from .mp_equilibrium import build_slots

_TIE_TOL = 1e-9
# 修复时 L1 距离的权重远大于势函数增量
_REPAIR_SCALE = 10 ** 6
_REPAIR_TIE_SCALE = 10 ** 2
# 交换图的超级源点，只有出弧
_EXCHANGE_SOURCE = -1


def user_counts(net: DirectedNetwork) -> List[int]:
    """各节点的整数用户数，目的地为 0"""
    counts = []
    for i, value in enumerate(net.resources):
        if i == net.destination:
            counts.append(0)
        elif value < 0 or abs(value - round(value)) > 1e-9:
            raise ConfigError("原子博弈要求节点资源为非负整数", {"node": i, "value": value})
        else:
            counts.append(int(round(value)))
    return counts


class AtomicSolver:
    """
    原子博弈的网格消息传递求解器
    upper=True 的一套消息在同样的工作点上传播社会代价，供双层收费使用
    """

    def __init__(self, net: DirectedNetwork, cost: AffineLatency, tolls=None, params: Optional[AtomicParams] = None):
        if len(net.destinations) != 1:
            raise ConfigError("原子博弈只支持单目的地")
        if cost.num_edges != net.num_edges:
            raise ConfigError("代价模型与路网的边数不一致")
        self.net = net
        self.cost = cost
        self.params = params or AtomicParams()
        self.logger = logging.getLogger("AtomicSolver")
        self.rng = np.random.default_rng(self.params.seed)

        self.users = user_counts(net)
        self.total_users = sum(self.users)
        self.destination = net.destination
        self.num_edges = net.num_edges
        self.num_slots = 2 * net.num_edges
        self.window = self.params.window
        self.tolls = np.zeros(net.num_edges) if tolls is None else np.array(tolls, dtype=float)
        self.slot_node, self.slot_edge, self.slot_sign, self.upstream = build_slots(net)

        width = 2 * self.window + 1
        scale = max(1, int(round(self.total_users / max(net.num_edges, 1))))
        self.wp = self.rng.integers(0, scale + 1, size=self.num_slots)
        self.values = np.zeros((self.num_slots, width))
        self.void = np.zeros(self.num_slots, dtype=bool)
        self.upper_values = np.zeros((self.num_slots, width))
        self.upper_void = np.zeros(self.num_slots, dtype=bool)
        self.flows = np.zeros(net.num_edges, dtype=int)
        self.bias = self.rng.uniform(0.0, self.params.bias_scale, size=net.num_edges)
        self._mark_invalid()

    def _mark_invalid(self):
        offsets = np.arange(-self.window, self.window + 1)
        invalid = (self.wp[:, None] + offsets[None, :]) < 0
        self.values[invalid] = math.inf
        self.upper_values[invalid] = math.inf

    # 局部代价

    def edge_energy(self, e: int, x: int, upper: bool = False) -> float:
        """φ_e(x) = Σ_{y≤x} (ℓ_e(y) + τ_e)，上层为 σ_e(x) = x ℓ_e(x)"""
        if upper:
            return self.cost.edge_atomic_sigma(e, x)
        return self.cost.edge_atomic_phi(e, x, float(self.tolls[e]))

    def _table(self, upper: bool) -> Tuple[np.ndarray, np.ndarray]:
        return (self.upper_values, self.upper_void) if upper else (self.values, self.void)

    def _window_costs(self, us: int, e2: int, upper: bool) -> List[Tuple[int, float]]:
        values, void = self._table(upper)
        options = []
        for idx, m in enumerate(range(-self.window, self.window + 1)):
            x = int(self.wp[us]) + m
            if x < 0:
                continue
            h = 0.0 if void[us] else values[us, idx]
            if math.isinf(h):
                continue
            options.append((x, h + self.edge_energy(e2, x, upper)))
        return options

    def update_grid_message(self, s: int, upper: bool = False) -> float:
        """
        槽位 s 的网格消息：对每个 m 在上游联合窗口上求满足 R_i = 0 的最小能量

        Returns:
            有限项的最大变化（可行性变化记为 inf）
        """
        values, void = self._table(upper)
        i = self.slot_node[s]
        sign = self.slot_sign[s]
        width = 2 * self.window + 1
        new = np.full(width, math.inf)

        if i == self.destination:
            for idx, m in enumerate(range(-self.window, self.window + 1)):
                if self.wp[s] + m >= 0:
                    new[idx] = 0.0
        else:
            # 上游边 Σ B x 的最小加卷积
            table: Dict[int, float] = {0: 0.0}
            for e2, us, b2 in self.upstream[s]:
                merged: Dict[int, float] = {}
                options = self._window_costs(us, e2, upper)
                for partial, base in table.items():
                    for x, c in options:
                        key = partial + b2 * x
                        value = base + c
                        if value < merged.get(key, math.inf):
                            merged[key] = value
                table = merged
            for idx, m in enumerate(range(-self.window, self.window + 1)):
                x_e = int(self.wp[s]) + m
                if x_e < 0:
                    continue
                new[idx] = table.get(-self.users[i] - sign * x_e, math.inf)

        finite = np.isfinite(new)
        if not finite.any():
            void[s] = True
            new = np.where(self._offsets() + self.wp[s] >= 0, 0.0, math.inf)
        else:
            void[s] = False
            new[finite] -= new[finite].min()

        old = values[s].copy()
        values[s] = new
        both = np.isfinite(old) & np.isfinite(new)
        if np.any(np.isfinite(old) != np.isfinite(new)):
            return math.inf
        return float(np.max(np.abs(old[both] - new[both]))) if both.any() else 0.0

    def _offsets(self) -> np.ndarray:
        return np.arange(-self.window, self.window + 1)

    def grid_snapshot(self, s: int, upper: bool = False) -> GridMessage:
        values, void = self._table(upper)
        return GridMessage(
            node=self.slot_node[s],
            edge=self.slot_edge[s],
            working_point=int(self.wp[s]),
            window=self.window,
            values=values[s].tolist(),
            void=bool(void[s])
        )

    # 边际流量

    def _value_at(self, s: int, x: int, upper: bool) -> float:
        values, void = self._table(upper)
        idx = x - int(self.wp[s]) + self.window
        if idx < 0 or idx >= values.shape[1] or x < 0:
            return math.inf
        return 0.0 if void[s] else float(values[s, idx])

    def overlap(self, e: int) -> List[int]:
        lo = max(0, int(self.wp[2 * e]) - self.window, int(self.wp[2 * e + 1]) - self.window)
        hi = min(int(self.wp[2 * e]) + self.window, int(self.wp[2 * e + 1]) + self.window)
        return list(range(lo, hi + 1))

    def full_energy(self, e: int, x: int, upper: bool = False) -> float:
        """Φ^full_e(x) = h_{i→e}(x) + h_{j→e}(x) + φ_e(x)"""
        return self._value_at(2 * e, x, upper) + self._value_at(2 * e + 1, x, upper) + self.edge_energy(e, x, upper)

    def slot_residual(self, s: int, x: int) -> int:
        """R_{i→e}：边 e 取 x、其余相邻边取上游工作点时节点 i 的守恒残差"""
        i = self.slot_node[s]
        if i == self.destination:
            return 0
        residual = self.users[i] + self.slot_sign[s] * x
        for _, us, b2 in self.upstream[s]:
            residual += b2 * int(self.wp[us])
        return residual

    def _nudge(self, e: int, s: Optional[int]):
        """窗口不重叠时把工作点推向对方"""
        s = 2 * e if s is None else s
        other = s ^ 1
        self.wp[s] += int(np.sign(self.wp[other] - self.wp[s]))

    def marginal_integer_flow(self, e: int, s: Optional[int] = None, upper: bool = False) -> Optional[int]:
        """
        x*_e = argmin_{x∈A_e} Φ^full_e(x)

        Args:
            e: 边
            s: 刚更新的槽位；重叠为空时推动它的工作点
            upper: 为 True 时对上层求 x^S_e

        Returns:
            边际流量；重叠为空或全不可行时返回 None
        """
        candidates = self.overlap(e)
        if not candidates:
            if not upper:
                self._nudge(e, s)
            return None
        energies = [(self.full_energy(e, x, upper), x) for x in candidates]
        finite = [(v, x) for v, x in energies if math.isfinite(v)]
        if not finite:
            return None
        if upper:
            return min(finite)[1]
        if self.params.tie_break == TieBreakRule.BIAS:
            return min((v + self.bias[e] * x, x) for v, x in finite)[1]
        best = min(v for v, _ in finite)
        tied = [x for v, x in finite if v <= best + _TIE_TOL * max(1.0, abs(best))]
        return min(tied, key=lambda x: (abs(self.slot_residual(2 * e, x)) + abs(self.slot_residual(2 * e + 1, x)), x))

    def update(self, s: int, upper: bool = False) -> bool:
        """更新一个槽位并移动工作点；返回该边的边际流量是否改变"""
        self.update_grid_message(s)
        if upper:
            self.update_grid_message(s, upper=True)
        e = self.slot_edge[s]
        x_star = self.marginal_integer_flow(e, s)
        step = 0 if x_star is None else int(np.sign(x_star - self.wp[s]))
        if step:
            self.wp[s] += step
        if x_star is None or step:
            # 工作点移动后在新窗口上重算
            self.update_grid_message(s)
            if upper:
                self.update_grid_message(s, upper=True)
        if x_star is None:
            return True
        changed = x_star != self.flows[e]
        self.flows[e] = x_star
        return changed

    def sweep(self, upper: bool = False) -> bool:
        changed = False
        for s in self.rng.integers(self.num_slots, size=self.params.sweep_factor * self.num_edges).tolist():
            changed |= self.update(s, upper)
        return changed

    def current_flows(self) -> np.ndarray:
        for e in range(self.num_edges):
            x = self.marginal_integer_flow(e)
            if x is not None:
                self.flows[e] = x
        return self.flows.copy()

    def residuals(self, flows) -> np.ndarray:
        residual = np.array(self.users, dtype=int) + self.net.incidence_matrix().astype(int) @ np.asarray(flows, dtype=int)
        residual[self.destination] = 0
        return residual

    def repair(self, flows) -> np.ndarray:
        """
        L1 距离最近的可行整数流（守恒残差由修正弧上的整数费用流抵消），
        平局按势函数增量
        """
        flows = np.asarray(flows, dtype=int)
        residual = self.residuals(flows)
        if not residual.any():
            return flows
        graph = nx.DiGraph()
        for i in range(self.net.num_nodes):
            graph.add_node(i, demand=0 if i == self.destination else -int(residual[i]))
        graph.nodes[self.destination]["demand"] = int(residual.sum())
        for e, (head, tail) in enumerate(self.net.edges):
            up = self.cost.edge_latency(e, int(flows[e]) + 1) + self.tolls[e]
            down = self.cost.edge_latency(e, int(flows[e])) + self.tolls[e]
            graph.add_edge(("inc", e), tail, weight=0)
            graph.add_edge(head, ("inc", e), weight=_REPAIR_SCALE + int(round(_REPAIR_TIE_SCALE * up)))
            if flows[e] > 0:
                graph.add_edge(("dec", e), head, weight=0, capacity=int(flows[e]))
                graph.add_edge(tail, ("dec", e), weight=max(1, _REPAIR_SCALE - int(round(_REPAIR_TIE_SCALE * down))),
                               capacity=int(flows[e]))
        correction = nx.min_cost_flow(graph)
        repaired = flows.copy()
        for e, (head, tail) in enumerate(self.net.edges):
            repaired[e] += correction[head][("inc", e)]
            if flows[e] > 0:
                repaired[e] -= correction[tail][("dec", e)]
        return repaired

    def _exchange_graph(self, flows: np.ndarray) -> Tuple[nx.DiGraph, Dict[Tuple[int, int], Tuple[int, int]]]:
        """剩余图：正向弧代价为多走一个用户的势增量，反向弧为少走一个用户的势减量"""
        graph = nx.DiGraph()
        arcs: Dict[Tuple[int, int], Tuple[int, int]] = {}

        def add(u: int, v: int, weight: float, e: int, delta: int):
            if graph.has_edge(u, v) and graph[u][v]["weight"] <= weight:
                return
            graph.add_edge(u, v, weight=weight)
            arcs[(u, v)] = (e, delta)

        for e, (head, tail) in enumerate(self.net.edges):
            x = int(flows[e])
            add(head, tail, self.edge_energy(e, x + 1) - self.edge_energy(e, x), e, 1)
            if x > 0:
                add(tail, head, self.edge_energy(e, x - 1) - self.edge_energy(e, x), e, -1)
        for i in range(self.net.num_nodes):
            graph.add_edge(_EXCHANGE_SOURCE, i, weight=0.0)
        return graph, arcs

    def exchange(self, flows, max_rounds: Optional[int] = None) -> Tuple[np.ndarray, int]:
        """
        单位交换改进：沿剩余图上势增量为负的环改动一个单位流量，直到没有负环

        整数边流量上的 Rosenthal 势是可分凸函数，没有负环的可行流即为全局极小。

        Returns:
            (改进后的流量, 消去的环数)
        """
        flows = np.asarray(flows, dtype=int).copy()
        max_rounds = max_rounds or 4 * max(self.total_users, 1) * max(self.num_edges, 1)
        for rounds in range(max_rounds):
            graph, arcs = self._exchange_graph(flows)
            try:
                cycle = nx.find_negative_cycle(graph, _EXCHANGE_SOURCE)
            except nx.NetworkXError:
                return flows, rounds
            pairs = list(zip(cycle[:-1], cycle[1:]))
            gain = sum(graph[u][v]["weight"] for u, v in pairs)
            if gain >= -_TIE_TOL * max(1.0, abs(gain)):
                return flows, rounds
            for u, v in pairs:
                e, delta = arcs[(u, v)]
                flows[e] += delta
        self.logger.warning(f"单位交换在 {max_rounds} 轮内未停止")
        return flows, max_rounds

    def result(self, converged: bool, sweeps: int) -> AtomicResult:
        flows = self.current_flows()
        repaired = False
        if self.residuals(flows).any():
            flows = self.repair(flows)
            repaired = True
            self.logger.info("最终边际流量不守恒，已修复为最近的可行整数流")
        exchanges = 0
        if self.params.exchange:
            flows, exchanges = self.exchange(flows)
            if exchanges:
                self.logger.debug(f"单位交换消去 {exchanges} 个负环")
        x = flows.astype(float)
        return AtomicResult(
            flows=flows.tolist(),
            potential=float(np.sum(self.cost.atomic_phi(x, self.tolls))),
            social_cost=float(np.sum(self.cost.sigma(x))),
            converged=converged,
            sweeps=sweeps,
            repaired=repaired,
            exchanges=exchanges
        )

    def run(self, max_sweeps: Optional[int] = None) -> AtomicResult:
        """边际流量连续 stable_sweeps 轮不变且守恒时视为收敛"""
        max_sweeps = max_sweeps or self.params.max_sweeps
        stable = 0
        sweeps = 0
        converged = False
        for sweeps in range(1, max_sweeps + 1):
            changed = self.sweep()
            flows = self.current_flows()
            stable = 0 if changed else stable + 1
            logger.log_sweep("AtomicSolver", sweeps, float(changed), None, {"stable": stable})
            if stable >= self.params.stable_sweeps and not self.residuals(flows).any():
                converged = True
                break
        if not converged:
            logger.warning("原子博弈消息传递在预算内未收敛", sweeps=sweeps)
        return self.result(converged, sweeps)


def run_atomic_equilibrium(
    net: DirectedNetwork,
    cost: AffineLatency,
    tolls=None,
    params: Optional[AtomicParams] = None
) -> AtomicResult:
    """
    原子博弈均衡：独立重启 restarts 次，保留势函数最低的结果

    Returns:
        整数流量、Rosenthal 势函数与社会代价
    """
    params = params or AtomicParams()
    start = time.time()
    result: Optional[AtomicResult] = None
    for restart in range(params.restarts):
        seed = None if params.seed is None else params.seed + restart
        candidate = AtomicSolver(net, cost, tolls, params.copy(update={"seed": seed})).run()
        candidate.restart = restart
        logger.debug(f"原子博弈第 {restart} 次重启", potential=candidate.potential, converged=candidate.converged)
        if result is None or candidate.potential < result.potential - _TIE_TOL * max(1.0, abs(result.potential)):
            result = candidate
    logger.log_solver_event("AtomicSolver", "converged" if result.converged else "not_converged", sweep=result.sweeps, data={
        "potential": result.potential,
        "repaired": result.repaired,
        "exchanges": result.exchanges,
        "restart": result.restart,
        "elapsed": round(time.time() - start, 3)
    })
    return result


def _toll_trial(
    net: DirectedNetwork,
    cost: AffineLatency,
    params: AtomicParams,
    seed: Optional[int],
    nash_cost: float,
    optimum_cost: float
) -> Tuple[np.ndarray, float, List[TollRecord]]:
    """一次双层试验：返回本次试验中最好的收费、对应社会代价与轨迹"""
    trial_params = params.copy(update={"seed": seed})
    solver = AtomicSolver(net, cost, None, trial_params)
    step = params.toll_step_fraction * params.tau_max
    interval = max(1, int(round(0.4 * net.num_edges)))
    best_tolls = np.zeros(net.num_edges)
    best_cost = nash_cost
    records: List[TollRecord] = []
    gap = nash_cost - optimum_cost

    count = 0
    for sweep in range(1, params.toll_sweeps + 1):
        for s in solver.rng.integers(solver.num_slots, size=params.sweep_factor * net.num_edges).tolist():
            solver.update(s, upper=True)
            count += 1
            if count % interval:
                continue
            e = int(solver.rng.integers(net.num_edges))
            x_star = solver.marginal_integer_flow(e)
            x_social = solver.marginal_integer_flow(e, upper=True)
            if x_star is None or x_social is None or x_star == x_social:
                continue
            direction = 1.0 if x_star > x_social else -1.0
            solver.tolls[e] = min(max(solver.tolls[e] + direction * step, 0.0), params.tau_max)

        tolls = solver.tolls.copy()
        value = atomic_min_cost_flow(net, cost, tolls).social_cost
        records.append(TollRecord(
            sweep=sweep,
            social_cost=value,
            fractional_reduction=0.0 if gap <= 1e-12 else (value - optimum_cost) / gap,
            nonzero_tolls=int(np.count_nonzero(tolls > 0.0)),
            tolls=tolls.tolist()
        ))
        if value < best_cost:
            best_cost = value
            best_tolls = tolls
    return best_tolls, best_cost, records


def run_atomic_bilevel(
    net: DirectedNetwork,
    cost: AffineLatency,
    params: Optional[AtomicParams] = None
) -> AtomicBilevelResult:
    """
    原子博弈的双层收费：多次独立试验取最好者，再做阈值化

    Returns:
        收费、社会代价与各试验的结果
    """
    params = params or AtomicParams()
    nash_cost = atomic_min_cost_flow(net, cost).social_cost
    optimum_cost = atomic_min_cost_flow(net, cost, social=True).social_cost

    best_tolls = np.zeros(net.num_edges)
    best_cost = nash_cost
    best_records: List[TollRecord] = []
    trial_costs = []
    for trial in range(params.trials):
        seed = None if params.seed is None else params.seed + trial
        tolls, value, records = _toll_trial(net, cost, params, seed, nash_cost, optimum_cost)
        trial_costs.append(value)
        if not best_records or value < best_cost:
            best_records = records
        if value < best_cost:
            best_tolls, best_cost = tolls, value

    threshold = params.threshold_fraction * params.tau_max
    thresholded = np.where(best_tolls >= threshold, best_tolls, 0.0)
    adopted = False
    if np.any(thresholded != best_tolls):
        value = atomic_min_cost_flow(net, cost, thresholded).social_cost
        if value <= best_cost:
            best_tolls, best_cost, adopted = thresholded, value, True

    logger.log_solver_event("AtomicSolver", "bilevel_finished", data={
        "social_cost": best_cost,
        "nash_cost": nash_cost,
        "optimum_cost": optimum_cost,
        "thresholded": adopted
    })
    return AtomicBilevelResult(
        tolls=best_tolls.tolist(),
        social_cost=best_cost,
        nash_cost=nash_cost,
        optimum_cost=optimum_cost,
        thresholded=adopted,
        trial_costs=trial_costs,
        trajectory=best_records
    )
