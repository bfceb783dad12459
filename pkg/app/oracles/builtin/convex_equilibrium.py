"""
凸优化均衡基准
条件梯度（最短路方向 + 精确线搜索）最小化势函数，再在当前支撑集上解 KKT 方程做有效集精修，
最后用 Wardrop 条件认证。多类别时联合求解。
"""
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import networkx as nx
from scipy.optimize import root_scalar

from ...config import settings
from ...core.constants import Tolerances
from ...core.cost_model import LatencyModel, conservation_residual, potential, social_cost, verify_wardrop
from ...core.errors import OracleError
from ...models.network_models import DirectedNetwork, TrafficClass
from ...models.result_models import OracleSolution, WardropCheck
from ..base_oracle import BaseOracle, OracleReport

MAX_POLISH_ROUNDS = 50


def _reverse_graph(net: DirectedNetwork, weights: np.ndarray) -> nx.DiGraph:
    """反向图，平行边只保留权重最小者，边属性记录原边编号"""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(net.num_nodes))
    for e, (head, tail) in enumerate(net.edges):
        w = float(weights[e])
        if graph.has_edge(tail, head) and graph[tail][head]["weight"] <= w:
            continue
        graph.add_edge(tail, head, weight=w, edge=e)
    return graph


def shortest_distances(net: DirectedNetwork, weights: np.ndarray, destination: int) -> np.ndarray:
    """各节点到目的地的最短路长度"""
    distance = nx.single_source_dijkstra_path_length(_reverse_graph(net, weights), destination, weight="weight")
    return np.array([distance.get(i, np.inf) for i in range(net.num_nodes)])


def all_or_nothing(net: DirectedNetwork, weights: np.ndarray, traffic_class: TrafficClass) -> np.ndarray:
    """把每个节点的需求全部加载到最短路上"""
    graph = _reverse_graph(net, weights)
    pred, distance = nx.dijkstra_predecessor_and_distance(graph, traffic_class.destination, weight="weight")
    flows = np.zeros(net.num_edges)
    load = np.array(traffic_class.resources, dtype=float)
    load[traffic_class.destination] = 0.0
    for i in sorted(distance, key=distance.get, reverse=True):
        if i == traffic_class.destination or load[i] <= 0.0:
            continue
        j = pred[i][0]
        e = graph[j][i]["edge"]
        flows[e] += load[i]
        load[j] += load[i]
    unreachable = [i for i in range(net.num_nodes) if i not in distance and load[i] > 0.0]
    if unreachable:
        raise OracleError("存在无法到达目的地的需求", {"nodes": unreachable[:10]})
    return flows


def _line_search(cost: LatencyModel, tolls: np.ndarray, x: np.ndarray, direction: np.ndarray) -> float:
    """沿 d 的精确线搜索：Σ (ℓ(x + t d) + τ) d = 0"""
    def slope(t):
        return float(np.dot(cost.latency(x + t * direction) + tolls, direction))

    if slope(1.0) <= 0.0:
        return 1.0
    if slope(0.0) >= 0.0:
        return 0.0
    return root_scalar(slope, bracket=[0.0, 1.0], method="brentq", xtol=1e-15).root


def _kkt_solve(
    net: DirectedNetwork,
    cost: LatencyModel,
    tolls: np.ndarray,
    classes: List[TrafficClass],
    x: np.ndarray,
    supports: List[np.ndarray]
) -> np.ndarray:
    """
    各类别支撑集上的联合 KKT 方程（在总流量处线性化延迟，仿射时精确）：
        ℓ_e(Σ_b x^b) + τ_e = u^a_head − u^a_tail,  e ∈ S_a
        Λ^a_i + Σ_{e∈S_a} B(i,e) x^a_e = 0,  i ≠ 𝒟_a
        u^a_{𝒟_a} = 0

    Returns:
        形状 (N_d, |E|) 的类别流量，支撑集外为零
    """
    n, k = net.num_nodes, len(classes)
    total = x.sum(axis=0)
    slope = cost.latency_prime(total)
    intercept = cost.latency(total) - slope * total + tolls

    columns = [(a, int(e)) for a, support in enumerate(supports) for e in np.flatnonzero(support)]
    index = {column: c for c, column in enumerate(columns)}
    m = len(columns)
    rows = m + k * n
    matrix = np.zeros((rows, m + k * n))
    rhs = np.zeros(rows)

    for r, (a, e) in enumerate(columns):
        head, tail = net.edges[e]
        for b in range(k):
            c = index.get((b, e))
            if c is not None:
                matrix[r, c] += slope[e]
        matrix[r, m + a * n + head] -= 1.0
        matrix[r, m + a * n + tail] += 1.0
        rhs[r] = -intercept[e]

    r = m
    for a, traffic_class in enumerate(classes):
        for i in range(n):
            if i == traffic_class.destination:
                matrix[r, m + a * n + i] = 1.0
            else:
                for e in net.incident_edges(i):
                    c = index.get((a, int(e)))
                    if c is not None:
                        matrix[r, c] = net.incidence(i, int(e))
                rhs[r] = -traffic_class.resources[i]
            r += 1

    solution, *_ = np.linalg.lstsq(matrix, rhs, rcond=None)
    result = np.zeros((k, net.num_edges))
    for c, (a, e) in enumerate(columns):
        result[a, e] = solution[c]
    return result


def _feasible(net: DirectedNetwork, classes: List[TrafficClass], x: np.ndarray, scale: float) -> bool:
    for a, traffic_class in enumerate(classes):
        residual = conservation_residual(net, x[a], traffic_class.resources, traffic_class.destination)
        if float(np.max(np.abs(residual))) > Tolerances.ORACLE_FEASIBILITY * scale:
            return False
    return True


def _checks(net: DirectedNetwork, cost: LatencyModel, tolls: np.ndarray, classes: List[TrafficClass],
            x: np.ndarray, tol: float) -> List[WardropCheck]:
    total = x.sum(axis=0)
    return [
        verify_wardrop(net, cost, tolls, x[a], tol=tol, traffic_class=traffic_class, total_flows=total)
        for a, traffic_class in enumerate(classes)
    ]


def _polish(
    net: DirectedNetwork,
    cost: LatencyModel,
    tolls: np.ndarray,
    classes: List[TrafficClass],
    x: np.ndarray,
    tol: float
) -> np.ndarray:
    """有效集精修：比率检验保持非负，各类别最短路上的紧边加入支撑集"""
    scale = max(1.0, sum(c.total_resource for c in classes))
    eps = 1e-12 * scale
    for _ in range(MAX_POLISH_ROUNDS):
        if _feasible(net, classes, x, scale) and all(c.passed for c in _checks(net, cost, tolls, classes, x, tol)):
            return x
        weights = cost.latency(x.sum(axis=0)) + tolls
        supports = []
        for a, traffic_class in enumerate(classes):
            distance = shortest_distances(net, weights, traffic_class.destination)
            reduced = weights + distance[net.tails] - distance[net.heads]
            supports.append((x[a] > eps) | (np.isfinite(reduced) & (reduced <= max(tol, 1e-7 * scale))))
        target = _kkt_solve(net, cost, tolls, classes, x, supports)
        if not _feasible(net, classes, target, scale):
            break
        if target.min() >= -eps:
            x = np.clip(target, 0.0, None)
            continue
        # 比率检验：沿 x → target 走到第一条边流量为零
        shrinking = target < -eps
        steps = x[shrinking] / (x[shrinking] - target[shrinking])
        x = np.clip(x + float(steps.min()) * (target - x), 0.0, None)
    return x


def _frank_wolfe(
    net: DirectedNetwork,
    cost: LatencyModel,
    tolls: np.ndarray,
    classes: List[TrafficClass],
    initial: Optional[np.ndarray],
    max_iterations: int
) -> Tuple[np.ndarray, int]:
    """所有类别同时做全有全无加载，步长按总流量方向做精确线搜索"""
    k = len(classes)
    scale = max(1.0, sum(c.total_resource for c in classes))
    if initial is not None and initial.min() >= 0.0 and _feasible(net, classes, initial, scale):
        x = initial.astype(float)
    else:
        free = cost.latency(np.zeros(net.num_edges)) + tolls
        x = np.array([all_or_nothing(net, free, c) for c in classes]).reshape(k, net.num_edges)

    iterations = 0
    for iterations in range(1, max_iterations + 1):
        total = x.sum(axis=0)
        weights = cost.latency(total) + tolls
        target = np.array([all_or_nothing(net, weights, c) for c in classes]).reshape(k, net.num_edges)
        gap = float(np.dot(weights, total - target.sum(axis=0)))
        if gap <= 1e-10 * max(1.0, float(np.dot(weights, total))):
            break
        step = _line_search(cost, tolls, total, target.sum(axis=0) - total)
        x = x + step * (target - x)
    return x, iterations


def convex_equilibrium(
    net: DirectedNetwork,
    cost: LatencyModel,
    tolls=None,
    classes: Optional[List[TrafficClass]] = None,
    initial=None,
    tol: Optional[float] = None,
    max_iterations: Optional[int] = None
) -> OracleSolution:
    """
    势函数极小化得到的认证 Wardrop 均衡

    多类别时所有类别在同一个条件梯度迭代中联合加载，精修时解联合 KKT 方程，
    因而总流量与各类别的最短路条件同时满足。

    Args:
        net: 路网
        cost: 延迟函数
        tolls: 收费
        classes: 出行类别，默认取自路网
        initial: 各类别的热启动流量
        tol: 认证容差，默认 ORACLE_TOL
        max_iterations: 条件梯度迭代上限

    Returns:
        认证解

    Raises:
        OracleError: 无法认证
    """
    tol = settings.ORACLE_TOL if tol is None else tol
    max_iterations = max_iterations or settings.ORACLE_MAX_ITERATIONS
    classes = classes or net.traffic_classes()
    tau = np.zeros(net.num_edges) if tolls is None else np.asarray(tolls, dtype=float)
    start = None if initial is None else np.asarray(initial, dtype=float)
    if start is not None and start.shape != (len(classes), net.num_edges):
        start = None

    class_flows, iterations = _frank_wolfe(net, cost, tau, classes, start, max_iterations)
    class_flows = _polish(net, cost, tau, classes, class_flows, tol)

    total = class_flows.sum(axis=0)
    checks = _checks(net, cost, tau, classes, class_flows, tol)
    for a, check in enumerate(checks):
        if not check.passed:
            raise OracleError("凸优化基准未能认证 Wardrop 条件", {
                "class": a,
                "max_violation": check.max_violation,
                "feasibility_residual": check.feasibility_residual
            })

    value = potential(cost, total, tau)
    return OracleSolution(
        flows=total.tolist(),
        class_flows=class_flows.tolist(),
        objective=value,
        social_cost=social_cost(cost, total),
        iterations=iterations,
        max_violation=max(c.max_violation for c in checks),
        feasibility_residual=max(c.feasibility_residual for c in checks)
    )


class ConvexEquilibriumOracle(BaseOracle):
    """条件梯度 + 有效集精修的 Wardrop 均衡基准"""

    @property
    def oracle_id(self) -> str:
        return "convex_equilibrium"

    @property
    def display_name(self) -> str:
        return "凸优化均衡"

    @property
    def description(self) -> str:
        return "最小化势函数得到认证的 Wardrop 均衡流量"

    @property
    def parameters(self) -> Dict[str, Any]:
        return {
            "network": {"type": "DirectedNetwork", "description": "路网"},
            "cost": {"type": "LatencyModel", "description": "延迟函数"},
            "tolls": {"type": "array", "description": "收费（可选）"}
        }

    @property
    def required_parameters(self) -> List[str]:
        return ["network", "cost"]

    def _execute(self, parameters: Dict[str, Any]) -> OracleReport:
        solution = convex_equilibrium(
            parameters["network"],
            parameters["cost"],
            tolls=parameters.get("tolls"),
            classes=parameters.get("classes")
        )
        return OracleReport.success_result(solution.dict(), {
            "objective": solution.objective,
            "social_cost": solution.social_cost,
            "max_violation": solution.max_violation
        })
