"""
基准求解器模块
集中式求解器，只用于验证和归一化
"""
from .oracle_registry import OracleRegistry, oracle_registry
from .base_oracle import BaseOracle, OracleReport
