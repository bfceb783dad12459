"""
边上的分段凸能量
两个端点的消息（光滑、钉住或有效叶子）与边自身代价的二次展开之和，
用于计算边际流量、收费响应曲线 x^N(τ) 以及边上全社会代价的极小点。
"""
import math
from dataclasses import dataclass
from typing import List, Tuple

from .errors import MessageConsistencyError

_SLOPE_TOL = 1e-9


@dataclass
class EnergyPiece:
    """
    以 center 为中心的分段二次能量
    x < center 用左支 (alpha_left, beta_left)，x ≥ center 用右支；
    alpha = inf 表示该侧为墙（不可行）
    """
    center: float
    alpha_left: float
    beta_left: float
    alpha_right: float
    beta_right: float

    @classmethod
    def smooth(cls, center: float, alpha: float, beta: float) -> "EnergyPiece":
        return cls(center, alpha, beta, alpha, beta)

    @classmethod
    def pin(cls, center: float) -> "EnergyPiece":
        return cls(center, math.inf, 0.0, math.inf, 0.0)

    @property
    def is_kink(self) -> bool:
        return (self.alpha_left != self.alpha_right) or (self.beta_left != self.beta_right) \
            or math.isinf(self.alpha_left) or math.isinf(self.alpha_right)

    @property
    def lower_wall(self) -> float:
        return self.center if math.isinf(self.alpha_left) else -math.inf

    @property
    def upper_wall(self) -> float:
        return self.center if math.isinf(self.alpha_right) else math.inf

    def _branch(self, left: bool, x: float) -> float:
        alpha, beta = (self.alpha_left, self.beta_left) if left else (self.alpha_right, self.beta_right)
        if math.isinf(alpha):
            if x == self.center:
                return beta
            return -math.inf if left else math.inf
        return beta + alpha * (x - self.center)

    def derivative_left(self, x: float) -> float:
        """左导数"""
        if x <= self.center:
            if math.isinf(self.alpha_left):
                return -math.inf
            return self._branch(True, x)
        return self._branch(False, x)

    def derivative_right(self, x: float) -> float:
        """右导数"""
        if x < self.center:
            return self._branch(True, x)
        if math.isinf(self.alpha_right):
            return math.inf
        return self._branch(False, x)

    def curvature_right(self, x: float) -> float:
        alpha = self.alpha_left if x < self.center else self.alpha_right
        return 0.0 if math.isinf(alpha) else alpha

    def value(self, x: float) -> float:
        left = x < self.center
        alpha, beta = (self.alpha_left, self.beta_left) if left else (self.alpha_right, self.beta_right)
        dx = x - self.center
        if math.isinf(alpha):
            return 0.0 if dx == 0.0 else math.inf
        return beta * dx + 0.5 * alpha * dx * dx


class EdgeProfile:
    """
    边能量 E(x) = Σ_pieces E_k(x)，定义域 x ≥ 0
    """

    def __init__(self, pieces: List[EnergyPiece], cap: float = math.inf):
        self.pieces = pieces
        self.cap = cap

    def check_convexity(self):
        """每个分段的右支斜率不小于左支斜率"""
        for piece in self.pieces:
            if math.isinf(piece.alpha_left) or math.isinf(piece.alpha_right):
                continue
            if piece.beta_right < piece.beta_left - _SLOPE_TOL * max(1.0, abs(piece.beta_left)):
                raise MessageConsistencyError(
                    "边能量非凸：β^R < β^L",
                    {"beta_left": piece.beta_left, "beta_right": piece.beta_right, "center": piece.center}
                )

    def bounds(self) -> Tuple[float, float]:
        lo = max([0.0] + [p.lower_wall for p in self.pieces])
        hi = min([math.inf] + [p.upper_wall for p in self.pieces])
        return lo, hi

    def knots(self) -> List[float]:
        lo, hi = self.bounds()
        return sorted({p.center for p in self.pieces if p.is_kink and lo < p.center < hi})

    def derivative_left(self, x: float) -> float:
        return sum(p.derivative_left(x) for p in self.pieces)

    def derivative_right(self, x: float) -> float:
        return sum(p.derivative_right(x) for p in self.pieces)

    def value(self, x: float) -> float:
        return sum(p.value(x) for p in self.pieces)

    def argmin(self, tau: float = 0.0) -> float:
        """
        min_{x≥0} E(x) + τ x

        Returns:
            极小点；可行域为空（两侧墙冲突）时返回墙的中点
        """
        self.check_convexity()
        lo, hi = self.bounds()
        if lo >= hi:
            return lo if lo == hi else 0.5 * (lo + hi)
        points = [lo] + self.knots()
        for idx, x0 in enumerate(points):
            slope = self.derivative_right(x0) + tau
            if slope >= 0.0:
                return x0
            x1 = points[idx + 1] if idx + 1 < len(points) else hi
            curvature = sum(p.curvature_right(x0) for p in self.pieces)
            if curvature > 0.0:
                root = x0 - slope / curvature
                if root <= x1:
                    return root
        if math.isinf(hi):
            if math.isinf(self.cap):
                raise MessageConsistencyError("边能量无下界", {"tau": tau})
            return max(self.cap, lo)
        return hi

    def toll_response(self, tau_max: float) -> List[Tuple[float, float]]:
        """
        收费响应 x^N(τ)，τ ∈ [0, τ_max]

        x^N 关于 τ 非增且分段线性；在所有可能改变分支的临界 τ 处取值，
        相邻点之间线性插值即为精确曲线。

        Returns:
            按 τ 升序排列的 (τ, x^N(τ)) 断点
        """
        return [(tau, self.argmin(tau)) for tau in self.critical_tolls(tau_max)]

    def critical_tolls(self, tau_max: float) -> List[float]:
        lo, hi = self.bounds()
        candidates = {0.0, tau_max}
        for x in [lo] + self.knots() + ([hi] if not math.isinf(hi) else []):
            for slope in (self.derivative_left(x), self.derivative_right(x)):
                if math.isfinite(slope) and 0.0 < -slope < tau_max:
                    candidates.add(-slope)
        return sorted(t for t in candidates if 0.0 <= t <= tau_max)


def merge_responses(responses: List[List[Tuple[float, float]]]) -> List[Tuple[float, float]]:
    """多个类别的响应曲线逐点相加"""
    taus = sorted({tau for response in responses for tau, _ in response})
    return [(tau, sum(interpolate_response(r, tau) for r in responses)) for tau in taus]


def interpolate_response(response: List[Tuple[float, float]], tau: float) -> float:
    """在断点列表上线性插值"""
    if not response:
        return 0.0
    if tau <= response[0][0]:
        return response[0][1]
    for (t0, x0), (t1, x1) in zip(response[:-1], response[1:]):
        if t0 <= tau <= t1:
            if t1 == t0:
                return x1
            return x0 + (x1 - x0) * (tau - t0) / (t1 - t0)
    return response[-1][1]


def optimize_edge_toll(response: List[Tuple[float, float]], target: float) -> float:
    """
    在分段线性响应上求 argmin_τ |x^N(τ) − x^G|，平局取较小的 τ

    Args:
        response: (τ, x^N) 断点，τ 升序
        target: 边上全社会代价的极小点 x^G

    Returns:
        最优收费
    """
    if not response:
        return 0.0
    tau0, x0 = response[0]
    if x0 <= target:
        return tau0
    for (t0, xa), (t1, xb) in zip(response[:-1], response[1:]):
        if xa >= target >= xb:
            if xa == xb:
                return t0
            return t0 + (t1 - t0) * (xa - target) / (xa - xb)
    # 目标低于可达下限：取首次达到最小响应的 τ
    x_min = min(x for _, x in response)
    for tau, x in response:
        if x <= x_min:
            return tau
    return response[-1][0]
