"""
非原子路由博弈的消息传递均衡求解

每个有向边 e 有两个槽位：头端 2e（B = -1）与尾端 2e+1（B = +1）。
槽位 (i→e) 上的消息是在固定 x_e 时节点 i 一侧的空腔能量的分段二次近似，
随机顺序逐个更新；每次更新后工作点按 x̃ ← s·x* + (1-s)·x̃ 向边际最优流量移动。
多目的地时每个类别各有一套消息，其他类别的流量作为背景冻结。
"""
import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..models.message_models import LowerMessage, MessageTable, SlotMessage
from ..models.network_models import DirectedNetwork, TrafficClass
from ..models.params_models import DestinationMethod, EquilibriumParams
from ..models.result_models import ConvergenceReport, SweepRecord, WardropCheck
from .cavity import CavityRootResult, CavityTerm, residual_limits, solve_cavity_root
from .constants import Tolerances
from .cost_model import LatencyModel, conservation_residual, verify_wardrop
from .edge_profile import EdgeProfile, EnergyPiece
from .errors import CavityInfeasibleError, ConfigError
from .logger import logger


@dataclass
class _PinnedLeaf:
    """被钉在断点上的上游叶子"""
    sign: int
    breakpoint: float
    slope: float
    curvature: float
    message: SlotMessage


def build_slots(net: DirectedNetwork):
    """
    槽位表：头端 2e（B = -1），尾端 2e+1（B = +1）

    Returns:
        (slot_node, slot_edge, slot_sign, upstream)，upstream[s] 为 (e′, 上游槽位, B(i,e′)) 列表
    """
    slot_node: List[int] = []
    slot_edge: List[int] = []
    slot_sign: List[int] = []
    for e, (head, tail) in enumerate(net.edges):
        slot_node += [head, tail]
        slot_edge += [e, e]
        slot_sign += [-1, 1]
    upstream: List[List[Tuple[int, int, int]]] = []
    for s in range(2 * net.num_edges):
        i, e = slot_node[s], slot_edge[s]
        entries = []
        for e2 in net.incident_edges(i):
            if e2 == e:
                continue
            # 上游消息来自 e2 的另一端
            other = 2 * e2 + 1 if net.edges[e2][0] == i else 2 * e2
            entries.append((e2, other, net.incidence(i, e2)))
        upstream.append(entries)
    return slot_node, slot_edge, slot_sign, upstream


def _branch(conductance: Optional[float], beta: float) -> Tuple[float, float]:
    if conductance is None or math.isinf(beta):
        return math.inf, 0.0
    if math.isinf(conductance):
        return 0.0, beta
    return 1.0 / conductance, beta


class EquilibriumSolver:
    """
    Wardrop 均衡的消息传递求解器
    """

    def __init__(
        self,
        net: DirectedNetwork,
        cost: LatencyModel,
        tolls=None,
        params: Optional[EquilibriumParams] = None,
        classes: Optional[List[TrafficClass]] = None
    ):
        self.net = net
        self.cost = cost
        self.params = params or EquilibriumParams()
        self.logger = logging.getLogger("EquilibriumSolver")

        if cost.num_edges != net.num_edges:
            raise ConfigError("代价模型与路网的边数不一致", {"cost": cost.num_edges, "network": net.num_edges})
        self.classes = classes or net.traffic_classes()
        self.num_classes = len(self.classes)
        self.num_edges = net.num_edges
        self.num_slots = 2 * net.num_edges
        self.tolls = np.zeros(net.num_edges) if tolls is None else np.array(tolls, dtype=float)
        if self.tolls.shape != (net.num_edges,) or np.any(self.tolls < 0):
            raise ConfigError("收费向量长度错误或含负值")

        self.rng = np.random.default_rng(self.params.seed)
        self._build_slots()
        self._build_resources()

        self.lower = MessageTable(self.num_classes, self.num_slots)
        self.wp = np.zeros((self.num_classes, self.num_slots))
        self.flows = np.zeros((self.num_classes, self.num_edges))
        self.total_flows = np.zeros(self.num_edges)
        self.skipped_updates = 0
        self.initialize()

    def _build_slots(self):
        self.slot_node, self.slot_edge, self.slot_sign, self.upstream = build_slots(self.net)

    def _build_resources(self):
        self.destinations = [c.destination for c in self.classes]
        self.lam = np.zeros((self.num_classes, self.net.num_nodes))
        for a, traffic_class in enumerate(self.classes):
            self.lam[a] = traffic_class.resources
            d = traffic_class.destination
            self.lam[a, d] = -(float(np.sum(self.lam[a])) - self.lam[a, d])
        self.class_totals = [c.total_resource for c in self.classes]

    def initialize(self):
        """随机初始化消息与工作点"""
        for a in range(self.num_classes):
            scale = self.class_totals[a] / max(self.num_edges, 1)
            self.wp[a] = self.rng.uniform(0.0, scale, size=self.num_slots)
        self.lower.randomize(self.rng, self.wp)
        self.flows[:] = 0.5 * (self.wp[:, 0::2] + self.wp[:, 1::2])
        self.total_flows[:] = self.flows.sum(axis=0)

    def set_tolls(self, tolls):
        self.tolls = np.array(tolls, dtype=float)

    # 局部代价

    def _grounded(self, a: int, i: int, upper: bool) -> bool:
        if i != self.destinations[a]:
            return False
        return upper or self.params.method == DestinationMethod.GROUNDED

    def edge_derivatives(self, a: int, e: int, x: float, upper: bool = False) -> Tuple[float, float]:
        """
        类别 a 在边 e 上流量为 x 时的一阶、二阶导数（其他类别冻结为背景）
        下层为 φ′ = ℓ + τ 与 φ″ = ℓ′，上层为 σ′ 与 σ″
        """
        y = max(self.total_flows[e] - self.flows[a, e] + x, 0.0)
        if upper:
            return self.cost.edge_sigma_prime(e, y), self.cost.edge_sigma_second(e, y)
        return self.cost.edge_phi_prime(e, y, float(self.tolls[e])), self.cost.edge_phi_second(e, y)

    def _upstream(self, table: MessageTable, a: int, s: int, upper: bool):
        terms: List[CavityTerm] = []
        leaves: List[_PinnedLeaf] = []
        pinned = 0.0
        for e2, us, sign in self.upstream[s]:
            center = float(table.center[a, us])
            slope, curvature = self.edge_derivatives(a, e2, center, upper)
            if table.leaf[a, us]:
                pinned += sign * center
                leaves.append(_PinnedLeaf(sign, center, slope, curvature, table.get(a, us)))
                continue
            alpha = float(table.alpha_right[a, us])
            if math.isinf(alpha):
                pinned += sign * center
                continue
            terms.append(CavityTerm(sign, alpha + curvature, float(table.beta_right[a, us]) + slope, center))
        return terms, pinned, leaves

    # 消息更新

    @staticmethod
    def _fixed(table: MessageTable, a: int, s: int) -> bool:
        """叶子或钉住的消息：空腔问题中按断点流量计入常数项"""
        return bool(table.leaf[a, s]) or math.isinf(table.alpha_right[a, s])

    def effective_resource(self, a: int, s: int, table: Optional[MessageTable] = None) -> float:
        """Λ^eff_{i→e} = Λ_i + Σ_{上游叶子与钉住边} B(i,e′)·x̃^b"""
        table = self.lower if table is None else table
        value = float(self.lam[a, self.slot_node[s]])
        for _, us, sign in self.upstream[s]:
            if self._fixed(table, a, us):
                value += sign * float(table.center[a, us])
        return value

    def _is_leaf_candidate(self, table: MessageTable, a: int, s: int, lam_eff: float) -> bool:
        if lam_eff <= Tolerances.ZERO_FLOW:
            return False
        threshold = self.params.leaf_threshold * max(1.0, lam_eff)
        if abs(self.wp[a, s] - lam_eff) > threshold:
            return False
        for _, us, _ in self.upstream[s]:
            if not self._fixed(table, a, us) and self.wp[a, us] > threshold:
                return False
        return True

    def _root(self, terms: List[CavityTerm], constant: float) -> Optional[CavityRootResult]:
        try:
            return solve_cavity_root(terms, constant)
        except CavityInfeasibleError:
            return None

    def _project(self, terms: List[CavityTerm], base: float, sign: int, x_e: float) -> Optional[float]:
        """把 x_e 投影到空腔约束有根的区间上"""
        try:
            r_minus, r_plus = residual_limits(terms, base)
        except CavityInfeasibleError:
            return None
        lo, hi = (-r_minus, -r_plus) if sign > 0 else (r_plus, r_minus)
        lo = max(lo, 0.0)
        if not lo <= hi:
            return None
        projected = min(max(x_e, lo), hi)
        return None if projected == x_e else projected

    def _activate_leaves(self, leaves: List[_PinnedLeaf], mu: float) -> Tuple[List[CavityTerm], float]:
        extra: List[CavityTerm] = []
        delta = 0.0
        for leaf in leaves:
            message = leaf.message
            right = message.beta_right + leaf.slope + mu * leaf.sign
            left = message.beta_left + leaf.slope + mu * leaf.sign
            if math.isfinite(message.alpha_right) and right < 0.0:
                alpha, beta = message.alpha_right, message.beta_right
            elif math.isfinite(message.alpha_left) and left > 0.0 and leaf.breakpoint > 0.0:
                alpha, beta = message.alpha_left, message.beta_left
            else:
                continue
            extra.append(CavityTerm(leaf.sign, alpha + leaf.curvature, beta + leaf.slope, leaf.breakpoint))
            delta -= leaf.sign * leaf.breakpoint
        return extra, delta

    @staticmethod
    def _message_from_root(root: CavityRootResult, sign: int, x_e: float) -> SlotMessage:
        if not root.degenerate:
            alpha = 0.0 if math.isinf(root.conductance) else 1.0 / root.conductance
            return SlotMessage.smooth(x_e, alpha, sign * root.mu)
        if sign < 0:
            # x_e 增大使根左移到 μ_lo 以下，减小使根右移到 μ_hi 以上
            alpha_right, beta_right = _branch(root.conductance_below, -root.mu_lo)
            alpha_left, beta_left = _branch(root.conductance_above, -root.mu_hi)
            if math.isinf(alpha_right) and math.isinf(alpha_left):
                return SlotMessage.pin(x_e)
            return SlotMessage(True, x_e, alpha_left, beta_left, alpha_right, beta_right)
        if root.conductance_above is not None and math.isfinite(root.mu_hi):
            alpha, beta = _branch(root.conductance_above, root.mu_hi)
        elif root.conductance_below is not None and math.isfinite(root.mu_lo):
            alpha, beta = _branch(root.conductance_below, root.mu_lo)
        else:
            return SlotMessage.pin(x_e)
        return SlotMessage.smooth(x_e, alpha, beta)

    def _solve_at(
        self,
        terms: List[CavityTerm],
        base: float,
        sign: int,
        x_e: float,
        leaves: List[_PinnedLeaf]
    ) -> Optional[SlotMessage]:
        x_e = max(x_e, 0.0)
        root = self._root(terms, base + sign * x_e)
        if root is None:
            projected = self._project(terms, base, sign, x_e)
            if projected is None:
                return None
            x_e = projected
            root = self._root(terms, base + sign * x_e)
            if root is None:
                return None
        if leaves and not root.degenerate:
            extra, delta = self._activate_leaves(leaves, root.mu)
            if extra:
                retry = self._root(terms + extra, base + delta + sign * x_e)
                if retry is not None:
                    root = retry
        return self._message_from_root(root, sign, x_e)

    def _confirm_leaf(self, table: MessageTable, a: int, s: int, candidate: SlotMessage, upper: bool) -> bool:
        """断点必须是边上全能量的极小点：D⁻(x^b) ≤ 0 ≤ D⁺(x^b)"""
        if not self.params.confirm_leaves:
            return True
        e = self.slot_edge[s]
        ref = float(self.flows[a, e])
        slope, curvature = self.edge_derivatives(a, e, ref, upper)
        profile = EdgeProfile([
            EnergyPiece(candidate.center, candidate.alpha_left, candidate.beta_left,
                        candidate.alpha_right, candidate.beta_right),
            table.piece(a, s ^ 1),
            EnergyPiece.smooth(ref, curvature, slope)
        ])
        x = candidate.center
        tol = Tolerances.CONSERVATION * max(1.0, abs(x))
        return profile.derivative_left(x) <= tol and profile.derivative_right(x) >= -tol

    def solve_slot(self, table: MessageTable, a: int, s: int, upper: bool = False) -> Optional[SlotMessage]:
        """
        计算槽位 (i→e) 的新消息

        Args:
            table: 消息表（下层或上层）
            a: 类别
            s: 槽位
            upper: 是否为社会代价层

        Returns:
            新消息；空腔约束在任何可行 x_e 上都无根时返回 None
        """
        i = self.slot_node[s]
        sign = self.slot_sign[s]
        x_e = float(self.wp[a, s])
        if self._grounded(a, i, upper):
            return SlotMessage.smooth(x_e, 0.0, 0.0)
        terms, pinned, leaves = self._upstream(table, a, s, upper)
        base = float(self.lam[a, i]) + pinned
        if sign < 0:
            lam_eff = self.effective_resource(a, s, table)
            if self._is_leaf_candidate(table, a, s, lam_eff):
                candidate = self._solve_at(terms, base, sign, lam_eff, leaves)
                if candidate is not None and candidate.leaf and self._confirm_leaf(table, a, s, candidate, upper):
                    return candidate
        return self._solve_at(terms, base, sign, x_e, leaves)

    def update_message(self, a: int, s: int) -> float:
        """
        更新下层消息并移动工作点

        Returns:
            本次更新中消息系数与工作点的最大变化
        """
        message = self.solve_slot(self.lower, a, s)
        if message is None:
            self.skipped_updates += 1
            self.logger.debug(f"槽位 {s} 的空腔约束无根，保留旧消息")
            return 0.0
        change = self.lower.assign(a, s, message)
        e = self.slot_edge[s]
        x_star = self.marginal_flow(a, e)
        self._set_flow(a, e, x_star)
        old = float(self.wp[a, s])
        rate = self.params.learning_rate
        new = rate * x_star + (1.0 - rate) * old
        if message.leaf:
            if abs(x_star - message.center) <= self._kink_tolerance(message.center):
                # 边际流量停在断点上，工作点取断点
                new = message.center
        elif self.slot_sign[s] < 0:
            kink = self.effective_resource(a, s)
            if (old - kink) * (new - kink) < 0.0:
                # 跨过 Λ^eff 时停在 Λ^eff，下一次更新在断点处求解
                new = kink
        self.wp[a, s] = new
        return max(change, abs(new - old))

    @staticmethod
    def _kink_tolerance(center: float) -> float:
        return Tolerances.CONSERVATION * max(1.0, abs(center))

    def release_leaves(self) -> int:
        """
        把所有叶子消息换成其光滑分支，叶子标记清零

        消息表停止变化但流量仍不守恒时调用；真正的叶子会在后续更新中重新被确认。

        Returns:
            释放的叶子数
        """
        released = 0
        for a, s in zip(*np.nonzero(self.lower.leaf)):
            message = self.lower.get(int(a), int(s))
            if math.isfinite(message.alpha_right):
                alpha, beta = message.alpha_right, message.beta_right
            elif math.isfinite(message.alpha_left):
                alpha, beta = message.alpha_left, message.beta_left
            else:
                alpha, beta = 0.0, 0.0
            self.lower.assign(int(a), int(s), SlotMessage.smooth(message.center, alpha, beta))
            released += 1
        return released

    def certified(self) -> bool:
        """守恒残差不超过 1e-8 且通过 Wardrop 检查"""
        self.current_flows()
        if self.max_residual() > Tolerances.CONSERVATION:
            return False
        return self.wardrop_check().passed

    # 边际流量

    def _cap(self, a: int) -> float:
        return max(self.class_totals[a], 0.0)

    def edge_profile(
        self,
        a: int,
        e: int,
        table: Optional[MessageTable] = None,
        upper: bool = False,
        include_toll: bool = True
    ) -> EdgeProfile:
        """边 e 上的全能量 Φ_{i→e} + Φ_{j→e} + φ_e（上层为 σ_e）"""
        table = self.lower if table is None else table
        ref = float(self.flows[a, e])
        slope, curvature = self.edge_derivatives(a, e, ref, upper)
        if not upper and not include_toll:
            slope -= self.tolls[e]
        return EdgeProfile(
            [table.piece(a, 2 * e), table.piece(a, 2 * e + 1), EnergyPiece.smooth(ref, curvature, slope)],
            cap=self._cap(a)
        )

    def marginal_flow(self, a: int, e: int) -> float:
        """x*_e = argmin_{x≥0} [Φ_{i→e} + Φ_{j→e} + φ_e]"""
        return self.edge_profile(a, e).argmin()

    def _set_flow(self, a: int, e: int, x: float):
        self.flows[a, e] = x
        self.total_flows[e] = float(self.flows[:, e].sum())

    def current_flows(self) -> np.ndarray:
        """由当前消息计算所有边的边际流量，形状 (N_d, |E|)"""
        for a in range(self.num_classes):
            for e in range(self.num_edges):
                self._set_flow(a, e, self.marginal_flow(a, e))
        return self.flows.copy()

    # 调度

    def sweep_length(self) -> int:
        return self.params.sweep_factor * self.num_classes * self.num_edges

    def draw_schedule(self, length: int) -> List[Tuple[int, int]]:
        """(类别, 槽位) 的随机排列首尾相接，每个槽位至少更新一次"""
        pairs = self.num_classes * self.num_slots
        length = max(length, pairs)
        rounds = -(-length // pairs)
        order = np.concatenate([self.rng.permutation(pairs) for _ in range(rounds)])[:length]
        return [(int(p) // self.num_slots, int(p) % self.num_slots) for p in order]

    def sweep(self) -> float:
        """一轮随机顺序更新，返回最大变化"""
        change = 0.0
        for a, s in self.draw_schedule(self.sweep_length()):
            change = max(change, self.update_message(a, s))
        return change

    def run(self, max_sweeps: Optional[int] = None, reference_flows=None) -> ConvergenceReport:
        """
        运行到收敛或扫描预算用尽

        Args:
            max_sweeps: 扫描轮数上限，默认取参数
            reference_flows: 基准流量（总流量），给出时记录逐轮 L∞ 误差

        Returns:
            收敛报告（未收敛时仍给出最后的流量与 Wardrop 检查）
        """
        max_sweeps = max_sweeps or self.params.max_sweeps
        reference = None if reference_flows is None else np.asarray(reference_flows, dtype=float)
        start = time.time()
        trace: List[SweepRecord] = []
        converged = False
        sweeps = 0
        for sweep in range(1, max_sweeps + 1):
            change = self.sweep()
            sweeps = sweep
            total = self.current_flows().sum(axis=0)
            flow_error = None if reference is None else float(np.max(np.abs(total - reference)))
            trace.append(SweepRecord(
                sweep=sweep,
                message_change=change,
                flow_error=flow_error,
                leaf_count=self.lower.leaf_count()
            ))
            logger.log_sweep("EquilibriumSolver", sweep, change, flow_error, {"leaves": self.lower.leaf_count()})
            if change < self.params.tol:
                # 消息表静止还不够，流量必须守恒且满足 Wardrop 条件
                if self.certified():
                    converged = True
                    break
                released = self.release_leaves()
                logger.log_solver_event(
                    "EquilibriumSolver", "stalled", sweep=sweep,
                    data={"max_residual": self.max_residual(), "released_leaves": released},
                    level=logging.DEBUG
                )

        report = self.report(converged, sweeps, trace)
        logger.log_solver_event(
            "EquilibriumSolver",
            "converged" if converged else "not_converged",
            sweep=sweeps,
            data={
                "elapsed": round(time.time() - start, 3),
                "wardrop_passed": report.wardrop.passed if report.wardrop else None,
                "skipped_updates": self.skipped_updates
            },
            level=logging.INFO if converged else logging.WARNING
        )
        return report

    def wardrop_check(self) -> WardropCheck:
        total = self.flows.sum(axis=0)
        if self.num_classes == 1:
            return verify_wardrop(self.net, self.cost, self.tolls, total, traffic_class=self.classes[0])
        checks = [
            verify_wardrop(self.net, self.cost, self.tolls, self.flows[a], traffic_class=self.classes[a], total_flows=total)
            for a in range(self.num_classes)
        ]
        return WardropCheck(
            passed=all(c.passed for c in checks),
            feasible=all(c.feasible for c in checks),
            max_violation=max(c.max_violation for c in checks),
            feasibility_residual=max(c.feasibility_residual for c in checks),
            potentials=checks[0].potentials
        )

    def max_residual(self) -> float:
        worst = 0.0
        for a, traffic_class in enumerate(self.classes):
            residual = conservation_residual(self.net, self.flows[a], traffic_class.resources, traffic_class.destination)
            worst = max(worst, float(np.max(np.abs(residual))))
        return worst

    def report(self, converged: bool, sweeps: int, trace: List[SweepRecord]) -> ConvergenceReport:
        return ConvergenceReport(
            converged=converged,
            sweeps=sweeps,
            flows=self.flows.sum(axis=0).tolist(),
            class_flows=self.flows.tolist(),
            trace=trace,
            wardrop=self.wardrop_check(),
            max_residual=self.max_residual(),
            messages=[self.snapshot(a, s) for a in range(self.num_classes) for s in range(self.num_slots)]
        )

    def snapshot(self, a: int, s: int) -> LowerMessage:
        return LowerMessage.from_slot(
            self.slot_node[s], self.slot_edge[s], float(self.wp[a, s]), self.lower.get(a, s), traffic_class=a
        )


def run_equilibrium(
    net: DirectedNetwork,
    cost: LatencyModel,
    tolls=None,
    method: DestinationMethod = DestinationMethod.GROUNDED,
    params: Optional[EquilibriumParams] = None,
    reference_flows=None
) -> ConvergenceReport:
    """
    单目的地 Wardrop 均衡

    Args:
        net: 预处理后的路网
        cost: 延迟函数
        tolls: 收费向量
        method: 目的地处理方式
        params: 求解参数
        reference_flows: 基准流量（可选）

    Returns:
        收敛报告
    """
    if len(net.destinations) != 1:
        raise ConfigError("多目的地路网请使用 run_equilibrium_multidest", {"destinations": net.destinations})
    params = (params or EquilibriumParams()).copy(update={"method": DestinationMethod(method)})
    solver = EquilibriumSolver(net, cost, tolls, params)
    return solver.run(reference_flows=reference_flows)


def run_equilibrium_multidest(
    net: DirectedNetwork,
    cost: LatencyModel,
    tolls=None,
    classes: Optional[List[TrafficClass]] = None,
    params: Optional[EquilibriumParams] = None,
    reference_flows=None
) -> ConvergenceReport:
    """
    多目的地均衡：每个类别一套消息，更新某一类别时其他类别的流量冻结为背景，
    调度在类别间随机交错
    """
    classes = classes or net.traffic_classes()
    solver = EquilibriumSolver(net, cost, tolls, params, classes=classes)
    return solver.run(reference_flows=reference_flows)
