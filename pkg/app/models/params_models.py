"""
求解器参数模型
默认值取自 settings，命令行参数覆盖
"""
from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, validator, root_validator

from ..config import settings
from ..core.constants import DestinationMethods, TieBreakRules, TollSelections


class DestinationMethod(str, Enum):
    """目的地处理方式"""
    GROUNDED = DestinationMethods.GROUNDED
    CONSTRAINED = DestinationMethods.CONSTRAINED


class TieBreakRule(str, Enum):
    """原子博弈边际流量的平局规则"""
    RESIDUAL = TieBreakRules.RESIDUAL
    BIAS = TieBreakRules.BIAS


class TollSelection(str, Enum):
    """可收费边的选择方式"""
    HEURISTIC = TollSelections.HEURISTIC
    RANDOM = TollSelections.RANDOM
    ALL_EDGES = TollSelections.ALL_EDGES


class EquilibriumParams(BaseModel):
    """消息传递均衡求解参数"""
    learning_rate: float = Field(settings.MP_LEARNING_RATE, description="工作点学习率 s")
    sweep_factor: int = Field(settings.MP_SWEEP_FACTOR, description="每轮扫描的局部更新数为 sweep_factor·N_d·|E|")
    max_sweeps: int = Field(settings.MP_MAX_SWEEPS, description="扫描轮数上限")
    tol: float = Field(settings.MP_CONVERGENCE_TOL, description="收敛阈值（一轮内消息最大变化）")
    leaf_threshold: float = Field(settings.MP_LEAF_THRESHOLD, description="有效叶子判据的相对阈值")
    confirm_leaves: bool = Field(settings.MP_CONFIRM_LEAVES, description="是否用边上全能量确认有效叶子")
    method: DestinationMethod = Field(DestinationMethod.GROUNDED, description="目的地处理方式")
    seed: Optional[int] = Field(None, description="随机种子")

    @validator("learning_rate")
    def learning_rate_in_range(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError("学习率必须在 (0, 1] 内")
        return v

    @validator("sweep_factor", "max_sweeps")
    def must_be_positive(cls, v):
        if v < 1:
            raise ValueError("必须为正整数")
        return v

    @validator("tol", "leaf_threshold")
    def must_be_nonnegative(cls, v):
        if v < 0:
            raise ValueError("阈值不能为负")
        return v


class BilevelParams(BaseModel):
    """双层收费优化参数"""
    tau_max: float = Field(1.0, description="收费上限 τ_max")
    warmup_sweeps: int = Field(settings.TOLL_WARMUP_SWEEPS, description="冻结收费的预热轮数")
    sweeps: int = Field(settings.TOLL_SWEEPS, description="收费优化轮数")
    updates_per_sweep: Optional[int] = Field(
        settings.TOLL_UPDATES_PER_SWEEP,
        description="每轮收费更新次数；None 表示每 (2/5)·N_d·|E| 次消息更新一次"
    )
    tollable_fraction: float = Field(1.0, description="可收费边比例")
    selection: TollSelection = Field(TollSelection.ALL_EDGES, description="可收费边的选择方式")
    record_interval: int = Field(1, description="记录间隔（轮）")
    equilibrium: EquilibriumParams = Field(default_factory=EquilibriumParams)

    @validator("tau_max")
    def tau_max_nonnegative(cls, v):
        if v < 0:
            raise ValueError("τ_max 不能为负")
        return v

    @validator("tollable_fraction")
    def fraction_in_range(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError("可收费比例必须在 (0, 1] 内")
        return v

    @validator("updates_per_sweep")
    def updates_positive(cls, v):
        if v is not None and v < 1:
            raise ValueError("每轮收费更新次数必须为正")
        return v


class AtomicParams(BaseModel):
    """原子博弈求解参数"""
    window: int = Field(settings.ATOMIC_WINDOW, description="网格窗口半宽 M")
    max_sweeps: int = Field(settings.ATOMIC_MAX_SWEEPS, description="扫描轮数上限")
    sweep_factor: int = Field(settings.MP_SWEEP_FACTOR, description="每轮扫描的局部更新数为 sweep_factor·|E|")
    tie_break: TieBreakRule = Field(TieBreakRule.RESIDUAL, description="平局规则")
    bias_scale: float = Field(1e-6, description="随机偏置场的幅度")
    stable_sweeps: int = Field(3, description="边际流量连续不变的轮数达到此值即视为收敛")
    tau_max: float = Field(1.0, description="收费上限")
    toll_step_fraction: float = Field(settings.ATOMIC_TOLL_STEP_FRACTION, description="收费增量 Δτ / τ_max")
    trials: int = Field(settings.ATOMIC_TRIALS, description="双层过程的独立试验次数")
    threshold_fraction: float = Field(settings.ATOMIC_THRESHOLD_FRACTION, description="收费阈值 ε / τ_max")
    toll_sweeps: int = Field(20, description="双层过程的扫描轮数")
    restarts: int = Field(settings.ATOMIC_RESTARTS, description="均衡求解的独立重启次数，取势函数最低者")
    exchange: bool = Field(True, description="结束时对整数流做单位交换改进")
    seed: Optional[int] = None

    @validator("window", "max_sweeps", "sweep_factor", "trials", "stable_sweeps", "toll_sweeps", "restarts")
    def must_be_positive(cls, v):
        if v < 1:
            raise ValueError("必须为正整数")
        return v


class FlowControlParams(BaseModel):
    """流量调控参数"""
    theta: float = Field(0.1, description="相对增量阈值 θ")
    num_targets: int = Field(5, description="目标边数量 |𝒯|")
    targets: Optional[List[Tuple[int, int]]] = Field(None, description="显式指定的目标边")
    r_min: float = Field(settings.FLOW_CONTROL_R_MIN)
    r_max: float = Field(settings.FLOW_CONTROL_R_MAX)
    step: float = Field(settings.FLOW_CONTROL_STEP, description="梯度步长 s")
    update_interval: Optional[int] = Field(None, description="参数更新间隔；None 表示 4|E|/10")
    sweep_factor: int = Field(4, description="每轮扫描的局部更新数为 sweep_factor·|E|")
    max_sweeps: int = Field(settings.FLOW_CONTROL_MAX_SWEEPS)
    warmup_sweeps: int = Field(20, description="调控前消息与梯度的预热轮数")
    method: DestinationMethod = Field(DestinationMethod.CONSTRAINED)
    seed: Optional[int] = None

    @root_validator(skip_on_failure=True)
    def check_box(cls, values):
        if not 0 < values["r_min"] <= values["r_max"]:
            raise ValueError("需要 0 < r_min ≤ r_max")
        if values["step"] <= 0:
            raise ValueError("步长必须为正")
        return values
