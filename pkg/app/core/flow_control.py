"""
无向流网络的流量调控

能量 Σ r_ij x_ij² / 2 在节点守恒约束下最小化。槽位 2k 为边 k=(i,j) 上 i→j 的消息，
2k+1 为 j→i 的消息；消息 (α, x̂) 表示空腔能量 α/2 (y − x̂)²，y 为沿消息方向的流量。
梯度消息是对消息不动点的伴随方程：目标边上的槽位带边界项，
其余通过下游槽位的链式法则向上游传播。控制参数 r 在 [r_min, r_max] 内做投影梯度下降。
"""
import logging
import math
import time
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..models.message_models import ControlState
from ..models.network_models import UndirectedNetwork
from ..models.params_models import DestinationMethod, FlowControlParams
from ..models.result_models import ControlRecord, FlowControlResult, GradientTraceRecord
from ..oracles.builtin.laplacian_solve import laplacian_matrix, laplacian_solve
from .constants import Tolerances
from .errors import ConfigError, MessageConsistencyError
from .logger import logger

_MIN_BASELINE = 1e-9
# 连续这么多轮全覆盖扫描都没有变化才算收敛
QUIET_SWEEPS = 2


def objective(flows, state: ControlState) -> Tuple[float, Dict[int, float]]:
    """
    铰链目标 𝒪 = Σ_𝒯 max(0, −ρ)，ρ = (|x| − |x⁰|)/|x⁰| − θ

    Returns:
        (𝒪, 各目标边的 ρ)
    """
    flows = np.asarray(flows, dtype=float)
    rho = {}
    total = 0.0
    for k in state.targets:
        base = abs(state.baseline[k])
        rho[k] = (abs(flows[k]) - base) / base - state.theta
        if rho[k] < 0:
            total -= rho[k]
    return total, rho


def hinge_slope(flow: float, rho: float, baseline: float) -> float:
    """∂𝒪_pq/∂x*_pq；ρ ≥ 0 时为 0"""
    if rho >= 0:
        return 0.0
    return -float(np.sign(flow)) / abs(baseline)


def edge_label(net: UndirectedNetwork, k: int) -> str:
    i, j = net.edges[k]
    return f"{net.node_labels[i]}-{net.node_labels[j]}"


def select_targets(
    net: UndirectedNetwork,
    baseline_flows,
    params: FlowControlParams,
    rng: np.random.Generator
) -> ControlState:
    """
    选择目标边并记录基线流量

    Raises:
        ConfigError: 指定的目标边不存在或基线流量为零
    """
    baseline_flows = np.asarray(baseline_flows, dtype=float)
    if params.targets:
        targets = []
        for i, j in params.targets:
            try:
                k = net.edge_index(i, j)
            except KeyError as e:
                raise ConfigError(str(e), {"target": [i, j]})
            if abs(baseline_flows[k]) <= _MIN_BASELINE:
                raise ConfigError("目标边的基线流量为零", {"target": [i, j]})
            targets.append(k)
    else:
        candidates = np.flatnonzero(np.abs(baseline_flows) > _MIN_BASELINE)
        if candidates.size == 0:
            raise ConfigError("没有可作为目标的非零流量边")
        count = min(params.num_targets, candidates.size)
        targets = sorted(rng.choice(candidates, size=count, replace=False).tolist())
    return ControlState(
        resistance=list(net.resistance),
        r_min=params.r_min,
        r_max=params.r_max,
        targets=targets,
        baseline={k: float(baseline_flows[k]) for k in targets},
        theta=params.theta
    )


class FlowController:
    """无向网络的值消息与梯度消息"""

    def __init__(self, net: UndirectedNetwork, params: Optional[FlowControlParams] = None):
        if not net.is_connected():
            raise ConfigError("流量调控要求网络连通")
        self.net = net
        self.params = params or FlowControlParams()
        self.logger = logging.getLogger("FlowController")
        self.rng = np.random.default_rng(self.params.seed)
        self.num_edges = net.num_edges
        self.num_slots = 2 * net.num_edges
        self.r = np.array(net.resistance, dtype=float)
        self.grounded = self.params.method == DestinationMethod.GROUNDED
        if self.grounded:
            self.lam = np.array(net.resources, dtype=float)
            self.lam[net.reference] = 0.0
        else:
            self.lam = net.signed_resources()

        # 槽位 s 从 source[s] 发往 target[s]
        self.source = np.zeros(self.num_slots, dtype=int)
        self.target = np.zeros(self.num_slots, dtype=int)
        for k, (i, j) in enumerate(net.edges):
            self.source[2 * k], self.target[2 * k] = i, j
            self.source[2 * k + 1], self.target[2 * k + 1] = j, i
        self.upstream: List[List[int]] = []
        self.downstream: List[List[int]] = [[] for _ in range(self.num_slots)]
        for s in range(self.num_slots):
            i, j = self.source[s], self.target[s]
            entries = [net.slot(k, neighbor) for neighbor, k in net.neighbors(i) if neighbor != j]
            self.upstream.append(entries)
            for u in entries:
                self.downstream[u].append(s)

        self.alpha = np.repeat(self.r, 2)
        self.offset = np.zeros(self.num_slots)
        self.state: Optional[ControlState] = None
        self.d_alpha = np.zeros((0, self.num_slots))
        self.d_offset = np.zeros((0, self.num_slots))

    def _fixed(self, s: int) -> bool:
        """方法一中参考节点发出的消息固定为 (r, 0)"""
        return self.grounded and self.source[s] == self.net.reference

    def _aggregate(self, s: int) -> Tuple[float, float, bool]:
        """上游的 A = Σ 1/α 与 c = Λ_i + Σ x̂；第三项表示存在接地上游（α = 0）"""
        upstream = self.upstream[s]
        alphas = self.alpha[upstream]
        if np.any(alphas == 0.0):
            return math.inf, 0.0, True
        conductance = float(np.sum(1.0 / alphas)) if upstream else 0.0
        return conductance, self.lam[self.source[s]] + float(np.sum(self.offset[upstream])), False

    def update_value_message(self, s: int) -> float:
        """
        α_{i→j} = [Σ α_{k→i}^{-1}]^{-1} + r_ij，x̂_{i→j} = (Λ_i + Σ x̂_{k→i}) / (1 + r_ij Σ α_{k→i}^{-1})

        Returns:
            消息变化量
        """
        k = s // 2
        r = self.r[k]
        if self._fixed(s):
            alpha, offset = r, 0.0
        else:
            conductance, c, grounded = self._aggregate(s)
            if grounded:
                alpha, offset = r, 0.0
            elif conductance == 0.0:
                # 叶子：流量被钉在 Λ_i
                alpha, offset = math.inf, c
            else:
                alpha, offset = 1.0 / conductance + r, c / (1.0 + r * conductance)
        old_alpha, old_offset = self.alpha[s], self.offset[s]
        self.alpha[s], self.offset[s] = alpha, offset
        change = abs(offset - old_offset)
        if math.isinf(alpha) or math.isinf(old_alpha):
            return change if alpha == old_alpha else math.inf
        return max(change, abs(alpha - old_alpha))

    def _denominator(self, k: int) -> float:
        value = self.alpha[2 * k] + self.alpha[2 * k + 1] - self.r[k]
        if not value > 0:
            raise MessageConsistencyError("平衡流量的分母非正", {
                "edge": k, "alpha_ij": float(self.alpha[2 * k]), "alpha_ji": float(self.alpha[2 * k + 1])
            })
        return value

    def equilibrium_flow(self, k: int) -> float:
        """x*_ij = (α_{j→i} x̂_{j→i} − α_{i→j} x̂_{i→j}) / (α_{i→j} + α_{j→i} − r_ij)，即从 j 到 i 的流量"""
        a_ij, a_ji = self.alpha[2 * k], self.alpha[2 * k + 1]
        if math.isinf(a_ij):
            return -float(self.offset[2 * k])
        if math.isinf(a_ji):
            return float(self.offset[2 * k + 1])
        return float((a_ji * self.offset[2 * k + 1] - a_ij * self.offset[2 * k]) / self._denominator(k))

    def flows(self) -> np.ndarray:
        return np.array([self.equilibrium_flow(k) for k in range(self.num_edges)])

    def flow_partials(self, k: int) -> Tuple[np.ndarray, np.ndarray, float]:
        """
        x*_k 对两个槽位的 α、x̂ 以及对 r_k 的直接偏导

        Returns:
            (∂x*/∂α[2k, 2k+1], ∂x*/∂x̂[2k, 2k+1], ∂x*/∂r)
        """
        a_ij, a_ji = self.alpha[2 * k], self.alpha[2 * k + 1]
        if math.isinf(a_ij):
            return np.zeros(2), np.array([-1.0, 0.0]), 0.0
        if math.isinf(a_ji):
            return np.zeros(2), np.array([0.0, 1.0]), 0.0
        d = self._denominator(k)
        x = self.equilibrium_flow(k)
        d_alpha = np.array([-(self.offset[2 * k] + x) / d, (self.offset[2 * k + 1] - x) / d])
        d_offset = np.array([-a_ij / d, a_ji / d])
        return d_alpha, d_offset, x / d

    # 梯度

    def set_state(self, state: ControlState):
        self.state = state
        self.d_alpha = np.zeros((len(state.targets), self.num_slots))
        self.d_offset = np.zeros((len(state.targets), self.num_slots))

    def gradient_boundary(self, s: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        目标边上槽位的边界梯度 ∂𝒪_pq/∂m = (∂𝒪_pq/∂x*)(∂x*/∂m)

        Returns:
            (∂𝒪/∂α_s, ∂𝒪/∂x̂_s)，按目标排列
        """
        targets = self.state.targets
        d_alpha = np.zeros(len(targets))
        d_offset = np.zeros(len(targets))
        k = s // 2
        if k not in targets:
            return d_alpha, d_offset
        t = targets.index(k)
        x = self.equilibrium_flow(k)
        base = self.state.baseline[k]
        rho = (abs(x) - abs(base)) / abs(base) - self.state.theta
        slope = hinge_slope(x, rho, base)
        if slope == 0.0:
            return d_alpha, d_offset
        partial_alpha, partial_offset, _ = self.flow_partials(k)
        d_alpha[t] = slope * partial_alpha[s % 2]
        d_offset[t] = slope * partial_offset[s % 2]
        return d_alpha, d_offset

    def message_partials(self, d: int, u: int) -> Tuple[float, float, float]:
        """
        下游消息 d = (i→l) 对上游消息 u = (k→i) 的偏导

        Returns:
            (∂α_d/∂α_u, ∂x̂_d/∂α_u, ∂x̂_d/∂x̂_u)；∂α_d/∂x̂_u 恒为 0
        """
        if self._fixed(d):
            return 0.0, 0.0, 0.0
        conductance, c, grounded = self._aggregate(d)
        if grounded:
            return 0.0, 0.0, 0.0
        if conductance == 0.0:
            return 0.0, 0.0, 1.0
        r = self.r[d // 2]
        damping = 1.0 + r * conductance
        if math.isinf(self.alpha[u]):
            return 0.0, 0.0, 1.0 / damping
        weight = 1.0 / self.alpha[u] ** 2
        return weight / conductance ** 2, c * r * weight / damping ** 2, 1.0 / damping

    def gradient_propagate(self, u: int) -> Tuple[np.ndarray, np.ndarray]:
        """∂𝒪/∂m_{k→i} = 边界项 + Σ_l Σ_m (∂𝒪/∂m_{i→l})(∂m_{i→l}/∂m_{k→i})"""
        d_alpha, d_offset = self.gradient_boundary(u)
        for d in self.downstream[u]:
            aa, xa, xx = self.message_partials(d, u)
            d_alpha = d_alpha + self.d_alpha[:, d] * aa + self.d_offset[:, d] * xa
            d_offset = d_offset + self.d_offset[:, d] * xx
        return d_alpha, d_offset

    def update_gradient_message(self, s: int) -> float:
        d_alpha, d_offset = self.gradient_propagate(s)
        change = 0.0
        if d_alpha.size:
            change = float(max(np.max(np.abs(d_alpha - self.d_alpha[:, s])), np.max(np.abs(d_offset - self.d_offset[:, s]))))
        self.d_alpha[:, s] = d_alpha
        self.d_offset[:, s] = d_offset
        return change

    def _resistance_partials(self, s: int) -> Tuple[float, float]:
        """(∂α_s/∂r, ∂x̂_s/∂r)；∂α_{k→i}/∂r_ki = 1"""
        if self._fixed(s):
            return 1.0, 0.0
        conductance, _, grounded = self._aggregate(s)
        if grounded:
            return 1.0, 0.0
        if conductance == 0.0:
            return 0.0, 0.0
        r = self.r[s // 2]
        return 1.0, -self.offset[s] * conductance / (1.0 + r * conductance)

    def gradient_per_target(self, k: int) -> np.ndarray:
        """∂𝒪_pq/∂r_k，按目标排列"""
        gradient = np.zeros(len(self.state.targets))
        for s in (2 * k, 2 * k + 1):
            d_alpha_r, d_offset_r = self._resistance_partials(s)
            gradient += self.d_alpha[:, s] * d_alpha_r + self.d_offset[:, s] * d_offset_r
        if k in self.state.targets:
            t = self.state.targets.index(k)
            x = self.equilibrium_flow(k)
            base = self.state.baseline[k]
            rho = (abs(x) - abs(base)) / abs(base) - self.state.theta
            _, _, direct = self.flow_partials(k)
            gradient[t] += hinge_slope(x, rho, base) * direct
        return gradient

    def gradient_wrt_r(self, k: int) -> float:
        return float(np.sum(self.gradient_per_target(k)))

    def gradient(self) -> np.ndarray:
        return np.array([self.gradient_wrt_r(k) for k in range(self.num_edges)])

    # 调度

    def step(self, s: int, with_gradient: bool = True) -> float:
        change = self.update_value_message(s)
        if with_gradient and self.state is not None:
            self.update_gradient_message(s)
        return change

    def schedule(self) -> List[int]:
        """一轮的更新顺序：槽位的随机排列首尾相接，每个槽位至少更新一次"""
        length = max(self.params.sweep_factor * self.num_edges, self.num_slots)
        rounds = -(-length // self.num_slots)
        order = np.concatenate([self.rng.permutation(self.num_slots) for _ in range(rounds)])
        return order[:length].tolist()

    def sweep(self, with_gradient: bool = True) -> float:
        change = 0.0
        for s in self.schedule():
            change = max(change, self.step(s, with_gradient))
        return change

    def converge(self, max_sweeps: Optional[int] = None, tol: float = Tolerances.CONSERVATION) -> bool:
        """只更新值消息直到收敛"""
        max_sweeps = max_sweeps or self.params.max_sweeps
        quiet = 0
        for sweep in range(1, max_sweeps + 1):
            change = self.sweep(with_gradient=False)
            quiet = quiet + 1 if change < tol else 0
            if quiet >= QUIET_SWEEPS:
                logger.log_sweep("FlowController", sweep, change)
                return True
        logger.warning("值消息在预算内未收敛", sweeps=max_sweeps)
        return False

    def set_resistance(self, k: int, value: float):
        self.r[k] = min(max(value, self.params.r_min), self.params.r_max)
        if self.state is not None:
            self.state.resistance[k] = float(self.r[k])

    def update_interval(self) -> int:
        if self.params.update_interval is not None:
            return max(1, self.params.update_interval)
        return max(1, int(round(4 * self.num_edges / 10)))


def _record(step: int, flows, state: ControlState) -> ControlRecord:
    value, rho = objective(flows, state)
    return ControlRecord(step=step, objective=value, min_rho=min(rho.values()) if rho else 0.0)


def _result(net: UndirectedNetwork, success: bool, resistance, flows, state: ControlState,
            trajectory: List[ControlRecord], steps: int) -> FlowControlResult:
    value, rho = objective(flows, state)
    return FlowControlResult(
        success=success,
        resistance=[float(r) for r in resistance],
        objective=value,
        rho={edge_label(net, k): v for k, v in rho.items()},
        trajectory=trajectory,
        steps=steps,
        flows=[float(x) for x in flows]
    )


def run_flow_control(net: UndirectedNetwork, params: Optional[FlowControlParams] = None) -> FlowControlResult:
    """
    消息传递流量调控：值消息与梯度消息随机交替更新，
    每 t_update 步随机选一条边做 r ← Π[r − s ∂𝒪/∂r]

    Returns:
        调控结果；𝒪 = 0 时 success 为 True
    """
    params = params or FlowControlParams()
    start = time.time()
    controller = FlowController(net, params)
    controller.converge()
    state = select_targets(net, controller.flows(), params, np.random.default_rng(params.seed))
    controller.set_state(state)
    for _ in range(params.warmup_sweeps):
        controller.sweep()

    interval = controller.update_interval()
    trajectory = [_record(0, controller.flows(), state)]
    steps = 0
    success = trajectory[0].objective == 0.0
    sweeps = 0
    while not success and sweeps < params.max_sweeps:
        sweeps += 1
        change = 0.0
        for s in controller.schedule():
            change = max(change, controller.step(s))
            steps += 1
            if steps % interval:
                continue
            k = int(controller.rng.integers(controller.num_edges))
            controller.set_resistance(k, controller.r[k] - params.step * controller.gradient_wrt_r(k))
            trajectory.append(_record(steps, controller.flows(), state))
        value, _ = objective(controller.flows(), state)
        logger.log_sweep("FlowController", sweeps, change, None, {"objective": value})
        success = value == 0.0 and change < Tolerances.CONSERVATION

    result = _result(net, success, controller.r, controller.flows(), state, trajectory, steps)
    logger.log_solver_event("FlowController", "success" if success else "failed", sweep=sweeps, data={
        "objective": result.objective,
        "steps": steps,
        "elapsed": round(time.time() - start, 3)
    }, level=logging.INFO if success else logging.WARNING)
    return result


def ggd_gradient(net: UndirectedNetwork, state: ControlState) -> np.ndarray:
    """
    由拉普拉斯矩阵的（钉住参考节点的）逆给出精确梯度：
    dμ/dr_f = −L† b_f x_f / r_f，dx_t/dr_f = −δ_tf x_t/r_t + (b_tᵀ L† b_f) x_f / (r_t r_f)

    Raises:
        OracleError: 网络不连通
    """
    net = net.with_resistance(state.resistance)
    _, flows = laplacian_solve(net)
    r = np.asarray(state.resistance, dtype=float)
    keep = np.array([i for i in range(net.num_nodes) if i != net.reference], dtype=int)
    green = np.zeros((net.num_nodes, net.num_nodes))
    if keep.size:
        green[np.ix_(keep, keep)] = np.linalg.inv(laplacian_matrix(net)[keep][:, keep].toarray())
    incidence = np.zeros((net.num_nodes, net.num_edges))
    for k, (i, j) in enumerate(net.edges):
        incidence[i, k], incidence[j, k] = 1.0, -1.0
    coupling = incidence.T @ green @ incidence

    _, rho = objective(flows, state)
    gradient = np.zeros(net.num_edges)
    for t in state.targets:
        slope = hinge_slope(flows[t], rho[t], state.baseline[t])
        if slope == 0.0:
            continue
        d_flow = coupling[t] * flows / (r[t] * r)
        d_flow[t] -= flows[t] / r[t]
        gradient += slope * d_flow
    return gradient


def run_ggd_control(net: UndirectedNetwork, params: Optional[FlowControlParams] = None) -> FlowControlResult:
    """与 run_flow_control 相同的调度与步长，梯度取精确值"""
    params = params or FlowControlParams()
    rng = np.random.default_rng(params.seed)
    _, flows = laplacian_solve(net)
    state = select_targets(net, flows, params, np.random.default_rng(params.seed))
    sweep_length = params.sweep_factor * net.num_edges
    interval = params.update_interval or max(1, int(round(4 * net.num_edges / 10)))
    trajectory = [_record(0, flows, state)]
    success = trajectory[0].objective == 0.0
    steps = 0
    budget = params.max_sweeps * sweep_length
    while not success and steps < budget:
        steps += interval
        k = int(rng.integers(net.num_edges))
        gradient = ggd_gradient(net, state)
        state.resistance[k] = float(np.clip(state.resistance[k] - params.step * gradient[k], params.r_min, params.r_max))
        _, flows = laplacian_solve(net.with_resistance(state.resistance))
        trajectory.append(_record(steps, flows, state))
        success = trajectory[-1].objective == 0.0
    logger.log_solver_event("GGDControl", "success" if success else "failed", data={"steps": steps})
    return _result(net, success, state.resistance, flows, state, trajectory, steps)


def gradient_mse_trace(
    net: UndirectedNetwork,
    params: Optional[FlowControlParams] = None,
    sweeps: int = 50
) -> List[GradientTraceRecord]:
    """固定 r 时联合扫描值消息与梯度消息，逐轮记录与精确梯度的均方误差"""
    params = params or FlowControlParams()
    controller = FlowController(net, params)
    _, exact_flows = laplacian_solve(net)
    state = select_targets(net, exact_flows, params, np.random.default_rng(params.seed))
    controller.set_state(state)
    exact = ggd_gradient(net, state)
    trace = []
    for sweep in range(1, sweeps + 1):
        controller.sweep()
        try:
            mse = float(np.mean((controller.gradient() - exact) ** 2))
            flow_error = float(np.max(np.abs(controller.flows() - exact_flows)))
        except MessageConsistencyError:
            mse, flow_error = math.inf, math.inf
        trace.append(GradientTraceRecord(sweep=sweep, mse=mse, flow_error=flow_error))
    return trace
