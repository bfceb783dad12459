"""
消息模型

热路径上的消息保存在按 (类别, 槽位) 索引的 numpy 表中；
pydantic 快照模型只在需要导出或检查时生成。

槽位编号：有向边 e 的头端 (B = -1) 为 2e，尾端 (B = +1) 为 2e+1。
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Dict

import numpy as np
from pydantic import BaseModel, Field

from ..core.edge_profile import EnergyPiece


@dataclass
class SlotMessage:
    """单个槽位的分段二次消息；光滑消息两支相同，α = inf 表示钉住"""
    leaf: bool
    center: float
    alpha_left: float
    beta_left: float
    alpha_right: float
    beta_right: float

    @classmethod
    def smooth(cls, center: float, alpha: float, beta: float) -> "SlotMessage":
        return cls(False, center, alpha, beta, alpha, beta)

    @classmethod
    def pin(cls, center: float) -> "SlotMessage":
        return cls(False, center, math.inf, 0.0, math.inf, 0.0)

    @property
    def pinned(self) -> bool:
        return not self.leaf and math.isinf(self.alpha_right)


def _change(old: float, new: float) -> float:
    if old == new:
        return 0.0
    if math.isinf(old) or math.isinf(new):
        return math.inf
    return abs(new - old)


class MessageTable:
    """每个类别、每个槽位的消息表"""

    def __init__(self, num_classes: int, num_slots: int):
        shape = (num_classes, num_slots)
        self.leaf = np.zeros(shape, dtype=bool)
        self.center = np.zeros(shape)
        self.alpha_left = np.zeros(shape)
        self.beta_left = np.zeros(shape)
        self.alpha_right = np.zeros(shape)
        self.beta_right = np.zeros(shape)

    def randomize(self, rng: np.random.Generator, centers: np.ndarray):
        """α ~ U[0.5, 1.5]，β ~ U[-0.1, 0.1]，中心取给定工作点"""
        shape = self.center.shape
        self.alpha_left[:] = rng.uniform(0.5, 1.5, size=shape)
        self.beta_left[:] = rng.uniform(-0.1, 0.1, size=shape)
        self.alpha_right[:] = self.alpha_left
        self.beta_right[:] = self.beta_left
        self.center[:] = centers
        self.leaf[:] = False

    def get(self, a: int, s: int) -> SlotMessage:
        return SlotMessage(
            bool(self.leaf[a, s]),
            float(self.center[a, s]),
            float(self.alpha_left[a, s]),
            float(self.beta_left[a, s]),
            float(self.alpha_right[a, s]),
            float(self.beta_right[a, s])
        )

    def assign(self, a: int, s: int, message: SlotMessage) -> float:
        """写入消息并返回系数的最大变化"""
        old = self.get(a, s)
        change = max(
            _change(old.alpha_left, message.alpha_left),
            _change(old.beta_left, message.beta_left),
            _change(old.alpha_right, message.alpha_right),
            _change(old.beta_right, message.beta_right),
            _change(old.center, message.center) if (old.leaf or message.leaf) else 0.0,
            0.0 if old.leaf == message.leaf else 1.0
        )
        self.leaf[a, s] = message.leaf
        self.center[a, s] = message.center
        self.alpha_left[a, s] = message.alpha_left
        self.beta_left[a, s] = message.beta_left
        self.alpha_right[a, s] = message.alpha_right
        self.beta_right[a, s] = message.beta_right
        return change

    def piece(self, a: int, s: int) -> EnergyPiece:
        return EnergyPiece(
            float(self.center[a, s]),
            float(self.alpha_left[a, s]),
            float(self.beta_left[a, s]),
            float(self.alpha_right[a, s]),
            float(self.beta_right[a, s])
        )

    def leaf_count(self) -> int:
        return int(self.leaf.sum())


class LowerMessage(BaseModel):
    """下层（势函数）消息快照"""
    traffic_class: int = Field(0, description="类别序号")
    node: int
    edge: int
    working_point: float = Field(..., description="工作点 x̃")
    leaf: bool = Field(False, description="有效叶子标记 f")
    alpha: Optional[float] = Field(None, description="光滑消息的曲率 α")
    beta: Optional[float] = Field(None, description="光滑消息的斜率 β")
    breakpoint: Optional[float] = Field(None, description="叶子的断点 x̃^b")
    alpha_left: Optional[float] = None
    beta_left: Optional[float] = None
    alpha_right: Optional[float] = None
    beta_right: Optional[float] = None

    @classmethod
    def from_slot(
        cls, node: int, edge: int, working_point: float, message: SlotMessage, traffic_class: int = 0
    ) -> "LowerMessage":
        if message.leaf:
            return cls(
                traffic_class=traffic_class, node=node, edge=edge, working_point=working_point, leaf=True,
                breakpoint=message.center,
                alpha_left=message.alpha_left, beta_left=message.beta_left,
                alpha_right=message.alpha_right, beta_right=message.beta_right
            )
        return cls(
            traffic_class=traffic_class, node=node, edge=edge, working_point=working_point,
            alpha=message.alpha_right, beta=message.beta_right
        )


class GridMessage(BaseModel):
    """原子博弈的网格消息：h[m] = Φ_{i→e}(x̃+m)，m ∈ [-M, M]，不可行为 inf"""
    node: int
    edge: int
    working_point: int
    window: int
    values: List[float]
    void: bool = False


class ControlState(BaseModel):
    """上层控制状态"""
    resistance: List[float]
    r_min: float
    r_max: float
    targets: List[int] = Field(..., description="目标边编号")
    baseline: Dict[int, float] = Field(..., description="目标边的调控前流量 x⁰")
    theta: float
