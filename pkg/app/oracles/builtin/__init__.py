"""
内置基准求解器
"""
# 导入所有内置基准求解器，确保它们能被自动发现
from .convex_equilibrium import ConvexEquilibriumOracle, convex_equilibrium
from .social_optimum import SocialOptimumOracle, social_optimum
from .atomic_bruteforce import AtomicBruteForceOracle, atomic_bruteforce
from .atomic_min_cost_flow import AtomicMinCostFlowOracle, atomic_min_cost_flow
from .laplacian_solve import LaplacianSolveOracle, laplacian_solve
from .finite_difference import finite_difference
