#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
统一配置管理
集中管理所有默认参数，避免分散在各文件中
"""

import os
from typing import Dict, List, Tuple


class FemConfig:
    """有限元相关配置"""

    # A_min = A_MIN_RATIO * A_max
    A_MIN_RATIO: float = 1e-4

    # 求解残差容限
    RESIDUAL_TOL: float = 1e-10

    # Cholesky主元判定（相对最大主元）
    PIVOT_TOL: float = 1e-13

    # 稀疏分解的列排序
    PERMC_SPEC: str = "MMD_AT_PLUS_A"


class FieldConfig:
    """随机场配置"""

    # 默认SPDE指数
    DEFAULT_BETA: int = 1

    # 方差平方根的负值容限
    NEGATIVE_VARIANCE_TOL: float = 1e-14

    # 蒙特卡洛分块大小（每块独立随机流）
    MC_CHUNK_SIZE: int = 1000


class RegularizationConfig:
    """过滤与惩罚配置"""

    # 惩罚曲线参数
    S_STAR: float = 0.5
    SPLINE_DEGREE: int = 4

    # 惩罚曲线预设控制点 (x, y)
    PENALTY_PRESETS: Dict[str, List[Tuple[float, float]]] = {
        "default": [(0.0, 0.0), (0.1, 0.0), (0.2, 0.0),
                    (0.3, 0.015), (0.42, 0.42), (0.5, 0.5)],
        "mild": [(0.0, 0.0), (0.1, 0.02), (0.2, 0.06),
                 (0.3, 0.15), (0.4, 0.4), (0.5, 0.5)],
    }

    # 输入越界容限
    INPUT_TOL: float = 1e-12

    # 惩罚曲线反解的二分次数
    BISECTION_STEPS: int = 60


class MMAConfig:
    """MMA优化器配置"""

    ASYMPTOTE_INIT: float = 0.5       # 初始渐近线距离（相对变量范围）
    ASYMPTOTE_DECREASE: float = 0.7   # 振荡时收缩
    ASYMPTOTE_INCREASE: float = 1.2   # 单调时扩张
    MOVE_LIMIT: float = 0.2           # 每步最大移动
    ASYMPTOTE_MARGIN: float = 1e-5    # 渐近线与变量的最小距离
    ALBEFA: float = 0.1               # 子问题边界与渐近线的比例
    RAA0: float = 1e-5                # 目标函数近似的正则项

    # 收敛准则
    MAX_ITERATIONS: int = 400
    TOLERANCE: float = 1e-4

    # 保守近似内迭代
    INNER_ITERATIONS: int = 15
    CONSERVATIVE_TOLERANCE: float = 1e-7

    # 对偶子问题
    DUAL_MAX_ITERATIONS: int = 200
    DUAL_BISECTION_STEPS: int = 200
    DUAL_TOLERANCE: float = 1e-12
    DUAL_LAMBDA_MAX: float = 1e12
    KKT_TOLERANCE: float = 1e-8

    # 帕累托前沿与归一化常数的容差带
    FRONT_TOLERANCE: float = 0.02


class PathConfig:
    """文件路径配置"""

    # 目录配置
    PRESET_DIR: str = "presets"
    OUTPUT_DIR: str = "results"

    # 文件名配置
    HISTORY_FILE: str = "history.csv"
    SUMMARY_FILE: str = "summary.json"
    DESIGN_FILE: str = "design.json"
    DESIGN_VTK_FILE: str = "design.vtk"
    HISTOGRAM_FILE: str = "area_histogram.csv"
    FIELDS_CSV_FILE: str = "fields.csv"
    FIELDS_VTK_FILE: str = "fields.vtk"
    FIELD_STATS_FILE: str = "field_statistics.json"
    SAMPLES_FILE: str = "samples.csv"
    VALIDATION_FILE: str = "validation.json"
    FRONT_FILE: str = "pareto_front.csv"
    PENALTY_FILE: str = "penalty_curve.csv"
    STIFFNESS_MTX_FILE: str = "stiffness.mtx"
    PRECISION_MTX_FILE: str = "precision.mtx"

    @classmethod
    def get_preset_file(cls, name: str) -> str:
        """获取预设配置文件路径"""
        if not name.endswith(".json"):
            name = name + ".json"
        return os.path.join(cls.PRESET_DIR, name)

    @classmethod
    def get_output_file(cls, output_dir: str, filename: str) -> str:
        """获取输出文件完整路径"""
        return os.path.join(output_dir, filename)


class SystemConfig:
    """系统运行配置"""

    # 随机种子
    RANDOM_SEED: int = 42

    # 并行线程数（None表示硬件并行度）
    DEFAULT_THREADS = None

    # 慢速验收测试开关
    SLOW_TEST_ENV: str = "LATRO_SLOW"

    # 支持的输出格式
    OUTPUT_FORMATS: List[str] = ["csv", "json", "vtk", "png"]


def get_penalty_control_points(preset: str) -> List[Tuple[float, float]]:
    """获取惩罚曲线预设控制点"""
    if preset not in RegularizationConfig.PENALTY_PRESETS:
        raise KeyError(f"未知的惩罚曲线预设: {preset}")
    return list(RegularizationConfig.PENALTY_PRESETS[preset])


def get_thread_count(threads=None) -> int:
    """获取并行线程数，默认为硬件并行度"""
    if threads is None:
        threads = SystemConfig.DEFAULT_THREADS
    if threads is None:
        return os.cpu_count() or 1
    return max(1, int(threads))
