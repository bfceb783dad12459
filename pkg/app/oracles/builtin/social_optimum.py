"""
社会最优基准
社会代价 H 的极小点就是延迟换成边际代价 σ′ 之后的均衡
"""
from typing import Any, Dict, List, Optional

import numpy as np

from ...core.cost_model import LatencyModel, social_cost
from ...models.network_models import DirectedNetwork, TrafficClass
from ...models.result_models import OracleSolution
from ..base_oracle import BaseOracle, OracleReport
from .convex_equilibrium import convex_equilibrium


def social_optimum(
    net: DirectedNetwork,
    cost: LatencyModel,
    classes: Optional[List[TrafficClass]] = None,
    initial=None
) -> OracleSolution:
    """
    社会最优流量

    Returns:
        认证解，objective 与 social_cost 都是 H_S
    """
    solution = convex_equilibrium(net, cost.marginal_cost_model(), classes=classes, initial=initial)
    value = social_cost(cost, np.array(solution.flows))
    return solution.copy(update={"objective": value, "social_cost": value})


class SocialOptimumOracle(BaseOracle):
    """社会代价极小化基准"""

    @property
    def oracle_id(self) -> str:
        return "social_optimum"

    @property
    def display_name(self) -> str:
        return "社会最优"

    @property
    def description(self) -> str:
        return "最小化社会代价 H 得到 x_S 与 H_S"

    @property
    def required_parameters(self) -> List[str]:
        return ["network", "cost"]

    def _execute(self, parameters: Dict[str, Any]) -> OracleReport:
        solution = social_optimum(parameters["network"], parameters["cost"], classes=parameters.get("classes"))
        return OracleReport.success_result(solution.dict(), {"social_cost": solution.social_cost})
