"""
原子博弈的整数凸费用流
每条边拆成单位容量的并行弧，第 k 条弧的费用为第 k 个用户带来的增量
（势函数为 ℓ_e(k) + τ_e，社会代价为 σ_e(k) − σ_e(k−1)）。增量非减，
因此网络单纯形给出的最小费用流就是整数势函数（或社会代价）的精确极小点。
"""
from typing import Any, Dict, List, Optional

import numpy as np
import networkx as nx

from ...core.cost_model import AffineLatency
from ...core.errors import OracleError
from ...models.network_models import DirectedNetwork
from ...models.result_models import AtomicResult
from ..base_oracle import BaseOracle, OracleReport
from .atomic_bruteforce import integer_resources

# network_simplex 需要整数费用
COST_SCALE = 10 ** 6


def _increments(cost: AffineLatency, e: int, units: int, tau: float, social: bool) -> List[float]:
    if social:
        return [cost.edge_atomic_sigma(e, k) - cost.edge_atomic_sigma(e, k - 1) for k in range(1, units + 1)]
    return [cost.edge_latency(e, k) + tau for k in range(1, units + 1)]


def atomic_min_cost_flow(
    net: DirectedNetwork,
    cost: AffineLatency,
    tolls=None,
    social: bool = False
) -> AtomicResult:
    """
    整数流量下势函数或社会代价的精确极小

    Args:
        net: 单目的地路网，资源为整数
        cost: 仿射延迟
        tolls: 收费
        social: True 时极小化社会代价

    Returns:
        极小点及其 Φ、H
    """
    users = integer_resources(net)
    total = sum(users)
    tau = np.zeros(net.num_edges) if tolls is None else np.asarray(tolls, dtype=float)
    flows = np.zeros(net.num_edges, dtype=int)
    if total > 0:
        graph = nx.DiGraph()
        for i in range(net.num_nodes):
            graph.add_node(i, demand=-users[i])
        graph.nodes[net.destination]["demand"] = total
        for e, (head, tail) in enumerate(net.edges):
            for k, increment in enumerate(_increments(cost, e, total, float(tau[e]), social), start=1):
                unit = ("unit", e, k)
                graph.add_edge(head, unit, capacity=1, weight=int(round(increment * COST_SCALE)))
                graph.add_edge(unit, tail, capacity=1, weight=0)
        try:
            flow_dict = nx.min_cost_flow(graph)
        except nx.NetworkXUnfeasible as exc:
            raise OracleError("整数费用流不可行", {"reason": str(exc)})
        for e, (head, _) in enumerate(net.edges):
            flows[e] = sum(flow_dict[head][("unit", e, k)] for k in range(1, total + 1))

    x = flows.astype(float)
    return AtomicResult(
        flows=flows.tolist(),
        potential=float(np.sum(cost.atomic_phi(x, tau))),
        social_cost=float(np.sum(cost.sigma(x))),
        converged=True
    )


class AtomicMinCostFlowOracle(BaseOracle):
    """整数凸费用流基准"""

    @property
    def oracle_id(self) -> str:
        return "atomic_min_cost_flow"

    @property
    def display_name(self) -> str:
        return "整数费用流"

    @property
    def description(self) -> str:
        return "用网络单纯形求原子博弈的势函数或社会代价的精确极小"

    @property
    def required_parameters(self) -> List[str]:
        return ["network", "cost"]

    def _execute(self, parameters: Dict[str, Any]) -> OracleReport:
        result = atomic_min_cost_flow(
            parameters["network"],
            parameters["cost"],
            parameters.get("tolls"),
            social=bool(parameters.get("social", False))
        )
        return OracleReport.success_result(result.dict(), {"potential": result.potential, "social_cost": result.social_cost})
