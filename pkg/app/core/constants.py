"""
常量定义模块
包含求解器中使用的各种常量和枚举值
"""


# 目的地处理方式
class DestinationMethods:
    GROUNDED = "grounded"          # 方法一：目的地接地，不施加守恒约束
    CONSTRAINED = "constrained"    # 方法二：目的地受约束，Λ_D = -ΣΛ_i

    ALL = [
        GROUNDED,
        CONSTRAINED
    ]


# 原子博弈的平局打破规则
class TieBreakRules:
    RESIDUAL = "residual"          # 选择守恒残差最小者
    BIAS = "bias"                  # 随机偏置场 ξ_e x_e

    ALL = [
        RESIDUAL,
        BIAS
    ]


# 可收费边的选择方式
class TollSelections:
    HEURISTIC = "heuristic"        # 按边上全代价可降低量排序
    RANDOM = "random"              # 随机子集（对照组）
    ALL_EDGES = "all"

    ALL = [
        HEURISTIC,
        RANDOM,
        ALL_EDGES
    ]


# 网络来源
class NetworkSources:
    RRG = "rrg"
    SMALL_WORLD = "small_world"
    LATTICE = "lattice"
    FILE = "file"

    ALL = [
        RRG,
        SMALL_WORLD,
        LATTICE,
        FILE
    ]


# 命令行子命令
class Subcommands:
    EQUILIBRIUM = "equilibrium"
    TOLL = "toll"
    ATOMIC = "atomic"
    FLOW_CONTROL = "flow-control"
    ORACLE = "oracle"
    GENERATE = "generate"

    ALL = [
        EQUILIBRIUM,
        TOLL,
        ATOMIC,
        FLOW_CONTROL,
        ORACLE,
        GENERATE
    ]


# 退出码
class ExitCodes:
    OK = 0
    RUNTIME_ERROR = 1
    CONFIG_ERROR = 2
    NON_CONVERGENCE = 3
    ORACLE_MISMATCH = 4


# 数值容差
class Tolerances:
    ZERO_FLOW = 1e-12              # 视为零流量
    ROOT = 1e-12                   # 拉格朗日方程根的相对容差
    CONSERVATION = 1e-8            # 守恒检查
    ORACLE_FEASIBILITY = 1e-10     # 基准解可行性


# 蛮力枚举的规模上限
class BruteForceLimits:
    MAX_USERS = 8
    MAX_EDGES = 14


# 苏福尔斯测试网络
class SiouxFalls:
    NODES = 24
    EDGES = 76
    CENTRAL_NODE = 10              # 文件中的原始编号
    CASE_USERS = {
        "I": 4,
        "II": 6
    }
