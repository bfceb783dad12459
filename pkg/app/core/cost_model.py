"""
代价模型
延迟函数、势函数、社会代价及其导数，以及 Wardrop 均衡条件检查
"""
from abc import ABC, abstractmethod
from typing import List, Optional, Sequence

import numpy as np
import networkx as nx
from pydantic import BaseModel, Field, root_validator

from ..config import settings
from ..models.network_models import DirectedNetwork, TrafficClass
from ..models.result_models import WardropCheck
from .constants import Tolerances
from .errors import DomainError


class TollState(BaseModel):
    """收费状态 τ_e ∈ [0, τ_max_e]"""
    tau: List[float] = Field(..., description="各边收费")
    tau_max: List[float] = Field(..., description="各边收费上限")

    @root_validator(skip_on_failure=True)
    def check_bounds(cls, values):
        tau, tau_max = values["tau"], values["tau_max"]
        if len(tau) != len(tau_max):
            raise ValueError("收费与上限长度不一致")
        for t, t_max in zip(tau, tau_max):
            if t < 0 or t > t_max + 1e-12:
                raise ValueError(f"收费 {t} 超出 [0, {t_max}]")
        return values


class LatencyModel(ABC):
    """
    延迟函数族接口
    要求 ℓ_e 在 x ≥ 0 上非减且二阶可导；消息传递只逐点使用 ℓ 和 ℓ′
    """

    @property
    @abstractmethod
    def num_edges(self) -> int:
        pass

    @abstractmethod
    def latency(self, x: np.ndarray) -> np.ndarray:
        """ℓ_e(x_e)"""
        pass

    @abstractmethod
    def latency_prime(self, x: np.ndarray) -> np.ndarray:
        """ℓ′_e(x_e)"""
        pass

    @abstractmethod
    def latency_integral(self, x: np.ndarray) -> np.ndarray:
        """∫₀ˣ ℓ_e(y) dy"""
        pass

    @abstractmethod
    def edge_latency(self, e: int, x: float) -> float:
        pass

    @abstractmethod
    def edge_latency_prime(self, e: int, x: float) -> float:
        pass

    @abstractmethod
    def marginal_cost_model(self) -> "LatencyModel":
        """边际社会代价 σ′_e(x) 对应的延迟函数"""
        pass

    def phi(self, x: np.ndarray, tolls: Optional[np.ndarray] = None) -> np.ndarray:
        """φ_e(x) = ∫₀ˣ [ℓ_e(y) + τ_e] dy"""
        value = self.latency_integral(x)
        if tolls is not None:
            value = value + tolls * x
        return value

    def phi_prime(self, x: np.ndarray, tolls: Optional[np.ndarray] = None) -> np.ndarray:
        value = self.latency(x)
        if tolls is not None:
            value = value + tolls
        return value

    def phi_second(self, x: np.ndarray) -> np.ndarray:
        return self.latency_prime(x)

    def sigma(self, x: np.ndarray) -> np.ndarray:
        """σ_e(x) = x ℓ_e(x)"""
        return x * self.latency(x)

    def sigma_prime(self, x: np.ndarray) -> np.ndarray:
        return self.latency(x) + x * self.latency_prime(x)

    def edge_phi_prime(self, e: int, x: float, tau: float = 0.0) -> float:
        return self.edge_latency(e, x) + tau

    def edge_phi_second(self, e: int, x: float) -> float:
        return self.edge_latency_prime(e, x)

    def edge_sigma_prime(self, e: int, x: float) -> float:
        return self.edge_latency(e, x) + x * self.edge_latency_prime(e, x)

    def edge_sigma_second(self, e: int, x: float) -> float:
        # 忽略 x ℓ″ 项，仿射延迟下精确
        return 2.0 * self.edge_latency_prime(e, x)


class AffineLatency(LatencyModel):
    """
    仿射延迟 ℓ_e(x) = a_e + b_e x
    路网文件中的 (t_e, c_e) 与全局灵敏度 s 给出 a_e = t_e，b_e = t_e s / c_e
    """

    def __init__(self, intercept: Sequence[float], slope: Sequence[float], sensitivity: float = 1.0):
        self.intercept = np.asarray(intercept, dtype=float)
        self.slope = np.asarray(slope, dtype=float)
        self.sensitivity = float(sensitivity)
        if self.intercept.shape != self.slope.shape:
            raise ValueError("截距与斜率长度不一致")
        if np.any(self.intercept < 0) or np.any(self.slope < 0):
            raise ValueError("仿射延迟的系数必须非负")
        # 热路径上用列表做标量访问
        self._a = self.intercept.tolist()
        self._b = self.slope.tolist()

    @classmethod
    def from_network(cls, net: DirectedNetwork, sensitivity: float = 1.0) -> "AffineLatency":
        """由路网上的 (t_e, c_e) 构造"""
        if sensitivity < 0:
            raise ValueError("灵敏度 s 必须非负")
        t = np.asarray(net.free_time, dtype=float)
        c = np.asarray(net.capacity, dtype=float)
        if t.size != net.num_edges or c.size != net.num_edges:
            raise ValueError("路网缺少 t_e 或 c_e")
        return cls(t, t * sensitivity / c, sensitivity)

    @property
    def num_edges(self) -> int:
        return self.intercept.size

    def latency(self, x: np.ndarray) -> np.ndarray:
        return self.intercept + self.slope * x

    def latency_prime(self, x: np.ndarray) -> np.ndarray:
        return self.slope + 0.0 * x

    def latency_integral(self, x: np.ndarray) -> np.ndarray:
        return self.intercept * x + 0.5 * self.slope * x * x

    def edge_latency(self, e: int, x: float) -> float:
        return self._a[e] + self._b[e] * x

    def edge_latency_prime(self, e: int, x: float) -> float:
        return self._b[e]

    def marginal_cost_model(self) -> "AffineLatency":
        # σ′(x) = a + 2bx
        return AffineLatency(self.intercept, 2.0 * self.slope, self.sensitivity)

    def atomic_phi(self, x: np.ndarray, tolls: Optional[np.ndarray] = None) -> np.ndarray:
        """原子势函数 Σ_{y=1..x} [ℓ_e(y) + τ_e]"""
        value = (self.intercept * x) + 0.5 * self.slope * x * (x + 1)
        if tolls is not None:
            value = value + tolls * x
        return value

    def edge_atomic_phi(self, e: int, x: int, tau: float = 0.0) -> float:
        return (self._a[e] + tau) * x + 0.5 * self._b[e] * x * (x + 1)

    def edge_atomic_sigma(self, e: int, x: int) -> float:
        return x * (self._a[e] + self._b[e] * x)


def _check_flows(flows: np.ndarray, atomic: bool = False) -> np.ndarray:
    flows = np.asarray(flows, dtype=float)
    if np.any(flows < -Tolerances.ZERO_FLOW):
        raise DomainError("流量不能为负", {"min_flow": float(flows.min())})
    if atomic and not np.allclose(flows, np.round(flows)):
        raise DomainError("原子博弈的流量必须为整数")
    return np.clip(flows, 0.0, None)


def potential(cost: LatencyModel, flows, tolls=None, atomic: bool = False) -> float:
    """
    势函数 Φ

    Args:
        cost: 延迟函数
        flows: 边流量（连续或整数）
        tolls: 收费向量
        atomic: 是否使用原子势函数

    Returns:
        Φ 值
    """
    x = _check_flows(flows, atomic)
    tau = None if tolls is None else np.asarray(tolls, dtype=float)
    if atomic:
        if not isinstance(cost, AffineLatency):
            raise DomainError("原子势函数只对仿射延迟实现")
        return float(np.sum(cost.atomic_phi(np.round(x), tau)))
    return float(np.sum(cost.phi(x, tau)))


def social_cost(cost: LatencyModel, flows, atomic: bool = False) -> float:
    """社会代价 H = Σ x_e ℓ_e(x_e)，收费不计入"""
    x = _check_flows(flows, atomic)
    return float(np.sum(cost.sigma(x)))


def conservation_residual(
    net: DirectedNetwork,
    flows,
    resources: Optional[Sequence[float]] = None,
    destination: Optional[int] = None
) -> np.ndarray:
    """
    各节点守恒残差 R_i = Λ_i + Σ_e B(i,e) x_e，目的地处置零
    """
    lam = np.asarray(net.resources if resources is None else resources, dtype=float)
    dest = net.destination if destination is None else destination
    residual = lam + net.incidence_matrix() @ np.asarray(flows, dtype=float)
    residual[dest] = 0.0
    return residual


def verify_wardrop(
    net: DirectedNetwork,
    cost: LatencyModel,
    tolls,
    flows,
    tol: float = None,
    traffic_class: Optional[TrafficClass] = None,
    total_flows=None
) -> WardropCheck:
    """
    检查 Wardrop 均衡条件

    节点势 u_i 为在权重 ℓ_e(x_e)+τ_e 下到目的地的最短路长度（u_𝒟 = 0）；
    通过条件：被使用的边（x_e > tol）上 u_i = ℓ_e + τ_e + u_j（容差 tol）。

    Args:
        net: 路网
        cost: 延迟函数
        tolls: 收费（None 表示无收费）
        flows: 被检查类别的边流量
        tol: 容差，默认 WARDROP_TOL
        traffic_class: 被检查的类别，默认单目的地
        total_flows: 计算延迟用的总流量，默认等于 flows

    Returns:
        检查结果
    """
    tol = settings.WARDROP_TOL if tol is None else tol
    x = np.asarray(flows, dtype=float)
    weights_at = x if total_flows is None else np.asarray(total_flows, dtype=float)
    tau = np.zeros(net.num_edges) if tolls is None else np.asarray(tolls, dtype=float)
    cls_ = traffic_class or net.traffic_classes()[0]

    residual = conservation_residual(net, x, cls_.resources, cls_.destination)
    feasibility = float(np.max(np.abs(residual))) if residual.size else 0.0
    if feasibility > tol or (x.size and x.min() < -tol):
        return WardropCheck(passed=False, feasible=False, feasibility_residual=feasibility)

    weights = cost.latency(np.clip(weights_at, 0.0, None)) + tau

    # 平行边只保留最小权重
    reverse = nx.DiGraph()
    reverse.add_nodes_from(range(net.num_nodes))
    for e, (head, tail) in enumerate(net.edges):
        w = float(weights[e])
        if reverse.has_edge(tail, head) and reverse[tail][head]["weight"] <= w:
            continue
        reverse.add_edge(tail, head, weight=w)
    distance = nx.single_source_dijkstra_path_length(reverse, cls_.destination, weight="weight")
    potentials = np.array([distance.get(i, np.inf) for i in range(net.num_nodes)])

    max_violation = 0.0
    for e, (head, tail) in enumerate(net.edges):
        if x[e] <= tol or not np.isfinite(potentials[head]):
            continue
        reduced = weights[e] + potentials[tail] - potentials[head]
        max_violation = max(max_violation, float(reduced))

    return WardropCheck(
        passed=max_violation <= tol,
        feasible=True,
        max_violation=max_violation,
        feasibility_residual=feasibility,
        potentials=[float(u) for u in potentials]
    )
