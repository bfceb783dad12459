"""
基准求解器注册表
"""
import importlib
import pkgutil
from typing import Dict, Any, List, Optional

from .base_oracle import BaseOracle, OracleReport
from ..core.logger import logger


class OracleRegistry:
    """基准求解器注册表"""

    def __init__(self):
        self._oracles: Dict[str, BaseOracle] = {}

    def register(self, oracle: BaseOracle) -> None:
        if not isinstance(oracle, BaseOracle):
            raise TypeError(f"基准求解器必须是BaseOracle的实例，而不是{type(oracle)}")

        oracle_id = oracle.oracle_id
        if oracle_id in self._oracles:
            logger.warning(f"基准求解器ID '{oracle_id}' 已存在，将被覆盖")
        self._oracles[oracle_id] = oracle
        logger.debug(f"基准求解器 '{oracle_id}' 已注册")

    def get_oracle(self, oracle_id: str) -> Optional[BaseOracle]:
        return self._oracles.get(oracle_id)

    def list_oracles(self) -> List[Dict[str, Any]]:
        return [oracle.to_dict() for _, oracle in sorted(self._oracles.items())]

    def execute_oracle(self, oracle_id: str, parameters: Dict[str, Any]) -> OracleReport:
        """
        执行基准求解器

        Args:
            oracle_id: 基准求解器ID
            parameters: 参数

        Returns:
            执行结果
        """
        oracle = self.get_oracle(oracle_id)
        if not oracle:
            error_message = f"基准求解器 '{oracle_id}' 不存在"
            logger.error(error_message)
            return OracleReport.error_result(error_message)
        return oracle.execute(parameters)

    def discover_oracles(self, package_path: str = "app.oracles.builtin") -> int:
        """
        自动发现并注册基准求解器

        Args:
            package_path: 包路径

        Returns:
            注册数量
        """
        count = 0
        package = importlib.import_module(package_path)

        for _, name, is_pkg in pkgutil.iter_modules(package.__path__, package.__name__ + '.'):
            if is_pkg:
                count += self.discover_oracles(name)
                continue
            try:
                module = importlib.import_module(name)
                for attr_name in dir(module):
                    attr = getattr(module, attr_name)
                    if (isinstance(attr, type) and
                            issubclass(attr, BaseOracle) and
                            attr is not BaseOracle and
                            attr.__module__ == module.__name__):
                        try:
                            self.register(attr())
                            count += 1
                        except Exception as e:
                            logger.error(f"实例化基准求解器 '{attr_name}' 时发生错误: {str(e)}")
            except Exception as e:
                logger.error(f"导入模块 '{name}' 时发生错误: {str(e)}")

        return count


# 全局注册表实例
oracle_registry = OracleRegistry()
