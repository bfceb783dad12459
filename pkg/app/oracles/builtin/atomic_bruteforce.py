"""
原子博弈蛮力枚举
逐源点枚举无环路径的多重集合，组合成所有整数边流量，取势函数的全局极小
"""
from itertools import combinations_with_replacement, product
from typing import Any, Dict, List, Optional

import numpy as np
import networkx as nx

from ...core.constants import BruteForceLimits
from ...core.cost_model import AffineLatency
from ...core.errors import OracleError
from ...models.network_models import DirectedNetwork
from ..base_oracle import BaseOracle, OracleReport


def integer_resources(net: DirectedNetwork) -> List[int]:
    """各节点的整数用户数（目的地为 0）"""
    users = []
    for i, value in enumerate(net.resources):
        if i == net.destination:
            users.append(0)
            continue
        if value < 0 or abs(value - round(value)) > 1e-9:
            raise OracleError("原子博弈要求非负整数资源", {"node": i, "value": value})
        users.append(int(round(value)))
    return users


def _paths(net: DirectedNetwork, source: int) -> List[List[int]]:
    graph = nx.MultiDiGraph()
    graph.add_nodes_from(range(net.num_nodes))
    for e, (head, tail) in enumerate(net.edges):
        graph.add_edge(head, tail, key=e)
    return [[key for _, _, key in path] for path in nx.all_simple_edge_paths(graph, source, net.destination)]


def atomic_bruteforce(net: DirectedNetwork, cost: AffineLatency, tolls=None) -> Dict[str, Any]:
    """
    原子势函数的全局极小

    Returns:
        {"minimum": Φ_min, "minimizers": [整数边流量, ...]}

    Raises:
        OracleError: 超出枚举规模上限或资源非整数
    """
    users = integer_resources(net)
    if sum(users) > BruteForceLimits.MAX_USERS or net.num_edges > BruteForceLimits.MAX_EDGES:
        raise OracleError("超出蛮力枚举的规模上限", {
            "users": sum(users),
            "edges": net.num_edges,
            "max_users": BruteForceLimits.MAX_USERS,
            "max_edges": BruteForceLimits.MAX_EDGES
        })
    tau = np.zeros(net.num_edges) if tolls is None else np.asarray(tolls, dtype=float)

    choices = []
    for source, count in enumerate(users):
        if count == 0:
            continue
        paths = _paths(net, source)
        if not paths:
            raise OracleError("源点无法到达目的地", {"node": source})
        choices.append([sum((np.bincount(p, minlength=net.num_edges) for p in combo), np.zeros(net.num_edges, dtype=int))
                        for combo in combinations_with_replacement(paths, count)])

    if not choices:
        return {"minimum": 0.0, "minimizers": [[0] * net.num_edges]}

    seen = set()
    best = np.inf
    minimizers: List[tuple] = []
    for parts in product(*choices):
        flows = tuple(int(v) for v in sum(parts))
        if flows in seen:
            continue
        seen.add(flows)
        value = float(np.sum(cost.atomic_phi(np.array(flows, dtype=float), tau)))
        if value < best - 1e-12:
            best = value
            minimizers = [flows]
        elif abs(value - best) <= 1e-12:
            minimizers.append(flows)
    return {"minimum": best, "minimizers": [list(m) for m in sorted(minimizers)]}


class AtomicBruteForceOracle(BaseOracle):
    """小规模原子博弈的蛮力枚举"""

    @property
    def oracle_id(self) -> str:
        return "atomic_bruteforce"

    @property
    def display_name(self) -> str:
        return "原子博弈枚举"

    @property
    def description(self) -> str:
        return f"总用户数不超过 {BruteForceLimits.MAX_USERS}、边数不超过 {BruteForceLimits.MAX_EDGES} 时枚举全部整数流量"

    @property
    def required_parameters(self) -> List[str]:
        return ["network", "cost"]

    def _execute(self, parameters: Dict[str, Any]) -> OracleReport:
        result = atomic_bruteforce(parameters["network"], parameters["cost"], parameters.get("tolls"))
        return OracleReport.success_result(result, {"minimum": result["minimum"], "count": len(result["minimizers"])})
