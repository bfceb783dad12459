"""
结果模型：收敛报告、Wardrop检查、收费轨迹、原子博弈与流量调控结果
"""
from typing import List, Optional, Dict, Any

from pydantic import BaseModel, Field

from .message_models import LowerMessage


class WardropCheck(BaseModel):
    """Wardrop 均衡条件检查结果"""
    passed: bool = Field(..., description="是否通过")
    feasible: bool = Field(..., description="流量是否可行（守恒且非负）")
    max_violation: float = Field(0.0, description="被使用边上的最大约化代价")
    feasibility_residual: float = Field(0.0, description="守恒残差的最大绝对值")
    potentials: List[float] = Field(default_factory=list, description="节点势 u（u_𝒟 = 0）")


class SweepRecord(BaseModel):
    """单轮扫描记录"""
    sweep: int
    message_change: float
    flow_error: Optional[float] = None
    leaf_count: int = 0


class ConvergenceReport(BaseModel):
    """均衡求解报告"""
    converged: bool = Field(..., description="是否在预算内收敛")
    sweeps: int = Field(..., description="实际扫描轮数")
    flows: List[float] = Field(..., description="各边均衡流量（多类别时为总流量）")
    class_flows: List[List[float]] = Field(default_factory=list, description="各类别的边流量")
    trace: List[SweepRecord] = Field(default_factory=list, description="逐轮收敛轨迹")
    wardrop: Optional[WardropCheck] = Field(None, description="Wardrop 检查")
    max_residual: float = Field(0.0, description="最大守恒残差")
    messages: List[LowerMessage] = Field(default_factory=list, description="结束时各槽位的下层消息")

    @property
    def final_flow_error(self) -> Optional[float]:
        for record in reversed(self.trace):
            if record.flow_error is not None:
                return record.flow_error
        return None


class TollRecord(BaseModel):
    """收费轨迹中的一个记录点"""
    sweep: int
    social_cost: float
    fractional_reduction: float
    nonzero_tolls: int
    tolls: List[float] = Field(default_factory=list)


class TollTrajectory(BaseModel):
    """双层收费优化轨迹"""
    records: List[TollRecord] = Field(default_factory=list)
    best_tolls: List[float] = Field(default_factory=list, description="目前最优的收费向量")
    best_social_cost: float = Field(float("inf"))
    nash_cost: float = Field(..., description="无收费均衡的社会代价 H_N")
    optimum_cost: float = Field(..., description="社会最优 H_S")
    lower_converged: bool = Field(True, description="下层消息传递是否保持收敛")
    tollable_edges: List[int] = Field(default_factory=list)


class AtomicResult(BaseModel):
    """原子博弈均衡结果"""
    flows: List[int] = Field(..., description="整数边流量")
    potential: float = Field(..., description="Rosenthal 势函数值 Φ")
    social_cost: float = Field(..., description="社会代价 H")
    converged: bool = Field(..., description="是否收敛")
    sweeps: int = 0
    repaired: bool = Field(False, description="是否经过最近可行整数流修复")
    exchanges: int = Field(0, description="单位交换消去的负环数")
    restart: int = Field(0, description="势函数最低的那次重启的序号")


class AtomicBilevelResult(BaseModel):
    """原子博弈双层收费结果"""
    tolls: List[float]
    social_cost: float
    nash_cost: float
    optimum_cost: float
    thresholded: bool = Field(False, description="阈值化后的收费是否被采用")
    trial_costs: List[float] = Field(default_factory=list)
    trajectory: List[TollRecord] = Field(default_factory=list)


class ControlRecord(BaseModel):
    """流量调控轨迹记录"""
    step: int
    objective: float
    min_rho: float


class FlowControlResult(BaseModel):
    """流量调控结果"""
    success: bool = Field(..., description="𝒪 = 0 是否达成")
    resistance: List[float] = Field(..., description="调控后的 r")
    objective: float
    rho: Dict[str, float] = Field(default_factory=dict, description="各目标边的 ρ，键为 'p-q'")
    trajectory: List[ControlRecord] = Field(default_factory=list)
    steps: int = 0
    flows: List[float] = Field(default_factory=list)


class GradientTraceRecord(BaseModel):
    """梯度消息与精确梯度的均方误差轨迹"""
    sweep: int
    mse: float
    flow_error: float


class RunSummary(BaseModel):
    """单次实现的摘要（用于多实现汇总）"""
    seed: int
    exit_code: int
    metrics: Dict[str, Any] = Field(default_factory=dict)


class OracleSolution(BaseModel):
    """基准求解器给出的认证解"""
    flows: List[float] = Field(..., description="各边总流量")
    class_flows: List[List[float]] = Field(default_factory=list, description="各类别的边流量")
    objective: float = Field(..., description="目标函数值（势函数或社会代价）")
    social_cost: float = Field(..., description="社会代价 H")
    iterations: int = 0
    max_violation: float = Field(0.0, description="认证时的最大 Wardrop 违背")
    feasibility_residual: float = Field(0.0, description="守恒残差的最大绝对值")
