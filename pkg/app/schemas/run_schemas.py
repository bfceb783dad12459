"""
命令行运行配置的模式定义
"""
import hashlib
import json
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, root_validator, validator

from ..config import settings
from ..core.constants import NetworkSources, Subcommands
from ..models.params_models import DestinationMethod, TieBreakRule, TollSelection


class NetworkSpec(BaseModel):
    """网络来源：生成器或文件"""
    kind: str = Field(NetworkSources.RRG, description="rrg / small_world / lattice / file")
    n: int = Field(100, description="随机正则图的节点数")
    degree: int = Field(3, description="随机正则图的度数")
    side: int = Field(15, description="方格边长")
    p_rw: float = Field(0.05, description="小世界重连概率")
    path: Optional[str] = Field(None, description="路网文件")
    resource_path: Optional[str] = Field(None, description="资源文件")
    case: Optional[str] = Field(None, description="苏福尔斯原子博弈的用户设置 I / II")
    num_destinations: int = Field(1, description="目的地数量 N_d")

    @validator("kind")
    def kind_must_be_known(cls, v):
        if v not in NetworkSources.ALL:
            raise ValueError(f"未知的网络来源: {v}")
        return v

    @root_validator(skip_on_failure=True)
    def file_needs_path(cls, values):
        if values["kind"] == NetworkSources.FILE and not values.get("path"):
            raise ValueError("文件网络需要 --network 路径")
        if values.get("case") not in (None, "I", "II"):
            raise ValueError("case 只能为 I 或 II")
        if values["num_destinations"] < 1:
            raise ValueError("目的地数量必须为正")
        return values


class RunConfig(BaseModel):
    """一次运行的完整配置；(配置, 种子) 决定全部输出"""
    subcommand: str = Field(..., description="子命令")
    network: NetworkSpec = Field(default_factory=NetworkSpec)
    seed: int = Field(0, description="随机种子")
    realizations: int = Field(1, description="独立实现数")
    sweeps: Optional[int] = Field(None, description="扫描轮数上限")
    learning_rate: float = Field(settings.MP_LEARNING_RATE, description="工作点学习率 s")
    method: DestinationMethod = Field(DestinationMethod.GROUNDED)
    sensitivity: float = Field(1.0, description="代价灵敏度")
    tau_max: float = Field(1.0)
    tollable_fraction: float = Field(1.0)
    selection: TollSelection = Field(TollSelection.ALL_EDGES)
    updates_per_sweep: Optional[int] = Field(settings.TOLL_UPDATES_PER_SWEEP)
    warmup_sweeps: int = Field(settings.TOLL_WARMUP_SWEEPS)
    window: int = Field(settings.ATOMIC_WINDOW)
    tie_break: TieBreakRule = Field(TieBreakRule.RESIDUAL)
    trials: int = Field(settings.ATOMIC_TRIALS)
    num_sources: int = Field(3)
    users_per_source: int = Field(4)
    bilevel: bool = Field(False, description="原子博弈是否做双层收费")
    theta: float = Field(0.1)
    num_targets: int = Field(5)
    targets: Optional[List[Tuple[int, int]]] = None
    r_min: float = Field(settings.FLOW_CONTROL_R_MIN)
    r_max: float = Field(settings.FLOW_CONTROL_R_MAX)
    step: float = Field(settings.FLOW_CONTROL_STEP)
    ggd: bool = Field(False, description="流量调控同时运行精确梯度基线")
    oracle_id: Optional[str] = None
    list_oracles: bool = False
    test_mode: bool = Field(False, description="与基准解比较，不一致时退出码为 4")
    undirected: bool = Field(False, description="生成无向流网络")
    output: Optional[str] = Field(None, description="生成网络的输出文件")
    output_dir: str = Field(settings.OUTPUT_DIR)

    @validator("subcommand")
    def subcommand_must_be_known(cls, v):
        if v not in Subcommands.ALL:
            raise ValueError(f"未知的子命令: {v}")
        return v

    @validator("realizations", "window", "trials", "num_targets", "num_sources", "users_per_source")
    def must_be_positive(cls, v):
        if v < 1:
            raise ValueError("必须为正整数")
        return v

    @validator("sweeps")
    def sweeps_positive(cls, v):
        if v is not None and v < 1:
            raise ValueError("扫描轮数必须为正")
        return v

    @validator("tau_max", "theta", "sensitivity")
    def must_be_nonnegative(cls, v):
        if v < 0:
            raise ValueError("不能为负")
        return v

    def canonical_json(self) -> str:
        """排除输出目录后的规范 JSON"""
        return json.dumps(self.dict(exclude={"output_dir"}), sort_keys=True, ensure_ascii=False, default=str)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:16]

    def for_seed(self, seed: int) -> "RunConfig":
        return self.copy(update={"seed": seed, "realizations": 1})
