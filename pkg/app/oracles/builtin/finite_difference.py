"""
中心差分梯度
"""
from typing import Callable

import numpy as np


def finite_difference(evaluate: Callable[[np.ndarray], float], point, h: float = 1e-6) -> np.ndarray:
    """
    逐坐标中心差分 (f(p + h e_k) − f(p − h e_k)) / 2h

    Args:
        evaluate: 确定性的目标函数
        point: 求导点
        h: 步长，必须为正
    """
    if h <= 0:
        raise ValueError("步长必须为正")
    point = np.asarray(point, dtype=float)
    gradient = np.zeros_like(point)
    for k in range(point.size):
        step = np.zeros_like(point)
        step.flat[k] = h
        gradient.flat[k] = (evaluate(point + step) - evaluate(point - step)) / (2.0 * h)
    return gradient
