"""
无向流网络的直接求解
对偶问题是加权拉普拉斯方程 Lμ = Λ（参考节点钉为 μ_𝒟 = 0），
流量 x_ij = (μ_j − μ_i) / r_ij 表示从 j 流向 i
"""
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from ...core.errors import OracleError
from ...models.network_models import UndirectedNetwork
from ..base_oracle import BaseOracle, OracleReport


def laplacian_matrix(net: UndirectedNetwork) -> sparse.csr_matrix:
    """L = B diag(1/r) Bᵀ"""
    m = net.num_edges
    rows = np.array([i for i, _ in net.edges] + [j for _, j in net.edges], dtype=int)
    cols = np.concatenate([np.arange(m), np.arange(m)])
    data = np.concatenate([np.ones(m), -np.ones(m)])
    incidence = sparse.csr_matrix((data, (rows, cols)), shape=(net.num_nodes, m))
    conductance = sparse.diags(1.0 / np.asarray(net.resistance, dtype=float))
    return (incidence @ conductance @ incidence.T).tocsr()


def laplacian_solve(net: UndirectedNetwork) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns:
        (节点势 μ, 边流量 x_ij)

    Raises:
        OracleError: 网络不连通
    """
    if not net.is_connected():
        raise OracleError("网络不连通，钉住参考节点后的拉普拉斯矩阵奇异")
    lam = net.signed_resources()
    keep = np.array([i for i in range(net.num_nodes) if i != net.reference], dtype=int)
    mu = np.zeros(net.num_nodes)
    if keep.size:
        reduced = laplacian_matrix(net)[keep][:, keep].tocsc()
        mu[keep] = spsolve(reduced, lam[keep])
    flows = np.array([(mu[j] - mu[i]) / r for (i, j), r in zip(net.edges, net.resistance)])
    return mu, flows


class LaplacianSolveOracle(BaseOracle):
    """拉普拉斯方程直接求解"""

    @property
    def oracle_id(self) -> str:
        return "laplacian_solve"

    @property
    def display_name(self) -> str:
        return "拉普拉斯求解"

    @property
    def description(self) -> str:
        return "钉住参考节点解 Lμ = Λ，给出无向网络的最优流量"

    @property
    def required_parameters(self) -> List[str]:
        return ["network"]

    def _execute(self, parameters: Dict[str, Any]) -> OracleReport:
        net = parameters["network"]
        if not isinstance(net, UndirectedNetwork):
            return OracleReport.error_result("拉普拉斯求解需要无向网络")
        mu, flows = laplacian_solve(net)
        return OracleReport.success_result(
            {"potentials": mu.tolist(), "flows": flows.tolist()},
            {"max_flow": float(np.max(np.abs(flows))) if flows.size else 0.0}
        )
