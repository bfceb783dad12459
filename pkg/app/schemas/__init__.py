"""
运行配置模式定义模块
"""
from .run_schemas import NetworkSpec, RunConfig
