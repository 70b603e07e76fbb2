"""
异常定义
各模块统一使用的错误类型
"""
from typing import Optional


class LatroError(Exception):
    """所有错误的基类"""


class InvalidArgumentError(LatroError, ValueError):
    """参数非法"""


class DegenerateGeometryError(LatroError):
    """几何退化（重合端点、重合形心等）"""


class MechanismError(LatroError):
    """刚度矩阵奇异或非正定，结构为机构"""

    def __init__(self, message: str, pivot_index: int = -1, dof: Optional[int] = None):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.dof = dof


class NotSPDError(LatroError):
    """精度矩阵非正定"""


class NumericalConsistencyError(LatroError):
    """数值一致性检查失败"""


class OptimizationAbortError(LatroError):
    """优化过程中止"""


class ConfigError(LatroError):
    """配置文件错误"""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"第{line}行: {message}"
        super().__init__(message)
        self.line = line
