"""
空腔约束方程求解

对节点 i 与边 e，在固定 x_e 时求拉格朗日乘子 μ*，使
    R_{i→e}(μ) = C + Σ_k B_k x*_k(μ) = 0,
    x*_k(μ) = max(x̃_k − (μ B_k + g_k) / a_k, 0),
其中 a_k = α_{k→e'} + φ″_{e'}，g_k = β_{k→e'} + φ′_{e'}，C = Λ_i + B(i,e) x_e（含被钉住的上游流量）。
R 关于 μ 非增且分段线性，按断点排序后逐段扫描即可在有限步内求出精确根。
曲率为零的项在 R 上产生竖直跳变，单独处理。
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .constants import Tolerances
from .errors import CavityInfeasibleError


@dataclass
class CavityTerm:
    """上游边 e' 在空腔问题中的二次近似"""
    sign: int              # B(i,e')
    curvature: float       # a_k ≥ 0
    slope: float           # g_k
    working_point: float   # x̃_{k→e'}

    @property
    def breakpoint(self) -> float:
        """x*_k 开始为零的位置；曲率为零时即跳变点"""
        return self.sign * (self.curvature * self.working_point - self.slope)

    def is_active(self, mu: float) -> bool:
        if self.sign > 0:
            return mu < self.breakpoint
        return mu > self.breakpoint

    def optimal_flow(self, mu: float) -> float:
        if self.curvature == 0.0:
            raise ValueError("曲率为零的项没有唯一的最优流量")
        return max(self.working_point - (mu * self.sign + self.slope) / self.curvature, 0.0)


@dataclass
class CavityRootResult:
    """
    求根结果
    非退化时 mu_lo = mu_hi = mu；退化时 R 在 [mu_lo, mu_hi] 上恒为零。
    conductance 为根处 -dR/dμ = Σ_active 1/a_k（落在跳变点时为 inf）；
    conductance_below / conductance_above 为平台两侧相邻线段的电导，None 表示该侧无解（墙）。
    """
    mu: float
    degenerate: bool
    mu_lo: float
    mu_hi: float
    conductance: float
    conductance_below: Optional[float] = None
    conductance_above: Optional[float] = None


@dataclass
class _Segment:
    lo: float
    hi: float
    infinite: int          # +1: R=+∞，-1: R=-∞，0: 有限
    p: float
    q: float

    def value(self, mu: float) -> float:
        if self.infinite:
            return math.inf * self.infinite
        if math.isinf(mu):
            if self.q == 0.0:
                return self.p
            return -math.inf if mu > 0 else math.inf
        return self.p + self.q * mu


def _interior_point(lo: float, hi: float) -> float:
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(lo):
        return hi - max(1.0, abs(hi))
    if math.isinf(hi):
        return lo + max(1.0, abs(lo))
    return lo + 0.5 * (hi - lo)


def _segment(terms: List[CavityTerm], constant: float, lo: float, hi: float) -> _Segment:
    inside = _interior_point(lo, hi)
    plus_inf = minus_inf = False
    p = constant
    q = 0.0
    for term in terms:
        if not term.is_active(inside):
            continue
        if term.curvature == 0.0:
            if term.sign > 0:
                plus_inf = True
            else:
                minus_inf = True
            continue
        inv = 1.0 / term.curvature
        p += term.sign * (term.working_point - term.slope * inv)
        q -= inv
    if plus_inf and minus_inf:
        raise CavityInfeasibleError("空腔问题无下界（零曲率的流入与流出项同时活跃）", 0)
    return _Segment(lo, hi, 1 if plus_inf else (-1 if minus_inf else 0), p, q)


def _segments(terms: List[CavityTerm], constant: float) -> List[_Segment]:
    points = sorted({term.breakpoint for term in terms})
    bounds = [-math.inf] + points + [math.inf]
    return [_segment(terms, constant, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]


def _is_plateau(segment: _Segment, eps: float) -> bool:
    return segment.infinite == 0 and segment.q == 0.0 and abs(segment.p) <= eps


def _neighbor_conductance(segment: Optional[_Segment]) -> Optional[float]:
    if segment is None:
        return None
    if segment.infinite:
        return math.inf
    return -segment.q


def residual_limits(terms: List[CavityTerm], constant: float) -> Tuple[float, float]:
    """R(μ→-∞) 与 R(μ→+∞)"""
    segments = _segments(terms, constant)
    return segments[0].value(-math.inf), segments[-1].value(math.inf)


def evaluate_residual(terms: List[CavityTerm], constant: float, mu: float) -> float:
    """在非跳变点处计算 R(μ)"""
    value = constant
    for term in terms:
        if not term.is_active(mu):
            continue
        if term.curvature == 0.0:
            return math.inf * term.sign
        value += term.sign * term.optimal_flow(mu)
    return value


def solve_cavity_root(terms: List[CavityTerm], constant: float) -> CavityRootResult:
    """
    求解 R_{i→e}(μ) = 0

    Args:
        terms: 未被钉住的上游项
        constant: Λ_i + B(i,e) x_e 加上被钉住项的贡献

    Returns:
        求根结果

    Raises:
        CavityInfeasibleError: R 恒正或恒负
    """
    segments = _segments(terms, constant)
    scale = max(1.0, abs(constant), sum(abs(t.working_point) for t in terms))
    eps = Tolerances.ROOT * scale

    plateau_start = None
    for idx, seg in enumerate(segments):
        if plateau_start is not None:
            if _is_plateau(seg, eps):
                continue
            # 平台在 seg.lo 处结束
            below = segments[plateau_start - 1] if plateau_start > 0 else None
            return CavityRootResult(
                mu=seg.lo if math.isinf(segments[plateau_start].lo) else 0.5 * (segments[plateau_start].lo + seg.lo),
                degenerate=True,
                mu_lo=segments[plateau_start].lo,
                mu_hi=seg.lo,
                conductance=0.0,
                conductance_below=_neighbor_conductance(below),
                conductance_above=_neighbor_conductance(seg)
            )

        if seg.infinite > 0:
            continue
        if seg.infinite < 0:
            if idx == 0:
                break
            return CavityRootResult(mu=seg.lo, degenerate=False, mu_lo=seg.lo, mu_hi=seg.lo, conductance=math.inf)

        if _is_plateau(seg, eps):
            plateau_start = idx
            continue

        v_lo = seg.value(seg.lo)
        v_hi = seg.value(seg.hi)
        if v_hi > eps:
            continue
        if abs(v_hi) <= eps and idx + 1 < len(segments) and _is_plateau(segments[idx + 1], eps):
            # 根落在零平台的起点，交给平台分支
            continue
        if v_lo < -eps:
            if math.isinf(seg.lo):
                break
            # 上一段为正，此处为跳变
            return CavityRootResult(mu=seg.lo, degenerate=False, mu_lo=seg.lo, mu_hi=seg.lo, conductance=math.inf)
        mu = min(max(-seg.p / seg.q, seg.lo), seg.hi)
        return CavityRootResult(mu=mu, degenerate=False, mu_lo=mu, mu_hi=mu, conductance=-seg.q)

    if plateau_start is not None:
        start = segments[plateau_start]
        below = segments[plateau_start - 1] if plateau_start > 0 else None
        return CavityRootResult(
            mu=start.lo if not math.isinf(start.lo) else 0.0,
            degenerate=True,
            mu_lo=start.lo,
            mu_hi=math.inf,
            conductance=0.0,
            conductance_below=_neighbor_conductance(below),
            conductance_above=None
        )

    low, high = segments[0].value(-math.inf), segments[-1].value(math.inf)
    sign = 1 if high > 0 else -1
    raise CavityInfeasibleError(
        "空腔守恒约束无根",
        sign,
        {"residual_at_minus_inf": low, "residual_at_plus_inf": high}
    )
