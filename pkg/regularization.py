"""
正则化模块
锥形核密度过滤与B样条惩罚曲线，设计变量到截面积的映射及链式求导
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import BSpline
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from config import RegularizationConfig, get_penalty_control_points
from models import Lattice, DesignState
from errors import InvalidArgumentError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class FilterOperator:
    """行归一化的过滤权重矩阵 W"""
    weights: sp.csr_matrix
    radius: float

    @property
    def is_identity(self) -> bool:
        return self.radius <= 0.0

    def apply(self, s: np.ndarray) -> np.ndarray:
        return self.weights @ np.asarray(s, dtype=float)

    def chain(self, grad: np.ndarray) -> np.ndarray:
        """ŝ的梯度反传到s：乘以Wᵀ"""
        return self.weights.T @ np.asarray(grad, dtype=float)


def build_filter(lattice: Lattice, radius: float) -> FilterOperator:
    """
    构造锥形核过滤器

    w_ei = max(0, R − ‖c_e − c_i‖)，W_ei = (w_ei/l_i) / Σ_k (w_ek/l_k)
    """
    if radius < 0:
        raise InvalidArgumentError(f"过滤半径不能为负: {radius}")
    n = lattice.n_members
    if radius == 0.0:
        return FilterOperator(sp.identity(n, format="csr"), 0.0)

    centroids = lattice.centroids
    tree = cKDTree(centroids)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    dist = np.linalg.norm(centroids[pairs[:, 0]] - centroids[pairs[:, 1]], axis=1) \
        if len(pairs) else np.zeros(0)
    w = radius - dist
    keep = w > 0.0
    pairs, w = pairs[keep], w[keep]

    diag = np.arange(n)
    rows = np.concatenate([diag, pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([diag, pairs[:, 1], pairs[:, 0]])
    vals = np.concatenate([np.full(n, radius), w, w]) / lattice.lengths[cols]
    W = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    row_sums = np.asarray(W.sum(axis=1)).ravel()
    W = sp.diags(1.0 / row_sums) @ W
    logger.debug("过滤器: R=%.3g, 平均邻居数%.1f", radius, W.nnz / n)
    return FilterOperator(W.tocsr(), float(radius))


def apply_filter(W: FilterOperator, s: np.ndarray) -> np.ndarray:
    return W.apply(s)


def filter_chain(W: FilterOperator, grad: np.ndarray) -> np.ndarray:
    return W.chain(grad)


def _check_unit_interval(values: np.ndarray, name: str) -> np.ndarray:
    tol = RegularizationConfig.INPUT_TOL
    values = np.asarray(values, dtype=float)
    if np.any(values < -tol) or np.any(values > 1.0 + tol) or np.any(np.isnan(values)):
        raise InvalidArgumentError(f"{name}超出[0,1]: 范围[{np.nanmin(values):.3g}, {np.nanmax(values):.3g}]")
    return np.clip(values, 0.0, 1.0)


class PenalizationCurve:
    """
    惩罚曲线：[0, s*] 上为4次夹持B样条（6个控制点），[s*, 1] 上为恒等直线

    控制点为None时整条曲线为恒等映射
    """

    def __init__(self, control_points: Optional[Sequence[Tuple[float, float]]] = None,
                 s_star: float = RegularizationConfig.S_STAR):
        self.s_star = float(s_star)
        self.control_points = None
        self._spline = None
        self._derivative = None
        if control_points is None:
            return

        points = np.asarray(control_points, dtype=float)
        self._validate(points)
        self.control_points = points
        k = RegularizationConfig.SPLINE_DEGREE
        n_inner = len(points) - k - 1
        inner = np.linspace(0.0, 1.0, n_inner + 2)[1:-1]
        knots = np.concatenate([np.zeros(k + 1), inner, np.ones(k + 1)])
        self._spline = BSpline(knots, points, k)
        self._derivative = self._spline.derivative()

    def _validate(self, points: np.ndarray):
        k = RegularizationConfig.SPLINE_DEGREE
        if points.ndim != 2 or points.shape != (k + 2, 2):
            raise InvalidArgumentError(f"惩罚曲线需要{k + 2}个二维控制点，实际形状{points.shape}")
        if not 0.0 < self.s_star <= 1.0:
            raise InvalidArgumentError(f"s*必须在(0,1]内: {self.s_star}")
        x, y = points[:, 0], points[:, 1]
        if not np.allclose(points[0], 0.0, atol=1e-12):
            raise InvalidArgumentError("首个控制点必须为(0,0)")
        if not np.allclose(points[-1], self.s_star, atol=1e-12):
            raise InvalidArgumentError(f"末个控制点必须为(s*, s*) = ({self.s_star}, {self.s_star})")
        if abs(x[-2] - y[-2]) > 1e-12:
            raise InvalidArgumentError("倒数第二个控制点必须位于对角线上（保证与恒等段C¹连接）")
        if np.any(np.diff(x) <= 0):
            raise InvalidArgumentError("控制点x坐标必须严格递增")
        if np.any(np.diff(y) < 0):
            raise InvalidArgumentError("控制点y坐标必须单调不减")

    @classmethod
    def from_preset(cls, preset: Union[str, None]) -> "PenalizationCurve":
        """由预设名（default/mild/none）创建"""
        if preset is None or preset == "none":
            return cls(None)
        try:
            return cls(get_penalty_control_points(preset))
        except KeyError as e:
            raise InvalidArgumentError(str(e)) from e

    @property
    def is_identity(self) -> bool:
        return self._spline is None

    def _parameter(self, x: np.ndarray) -> np.ndarray:
        """二分反解 x(u) = ŝ"""
        lo = np.zeros_like(x)
        hi = np.ones_like(x)
        for _ in range(RegularizationConfig.BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            below = self._spline(mid)[:, 0] < x
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def value(self, s: np.ndarray) -> np.ndarray:
        s = _check_unit_interval(s, "过滤密度")
        if self.is_identity:
            return s.copy()
        out = s.copy()
        mask = s < self.s_star
        if np.any(mask):
            u = self._parameter(s[mask])
            out[mask] = np.clip(self._spline(u)[:, 1], 0.0, self.s_star)
        return out

    def derivative(self, s: np.ndarray) -> np.ndarray:
        s = _check_unit_interval(s, "过滤密度")
        out = np.ones_like(s)
        if self.is_identity:
            return out
        mask = s < self.s_star
        if np.any(mask):
            u = self._parameter(s[mask])
            d = self._derivative(u)
            out[mask] = d[:, 1] / d[:, 0]
        return out

    def sample(self, count: int = 201) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """等距采样 (s, s̃, s̃')"""
        s = np.linspace(0.0, 1.0, count)
        return s, self.value(s), self.derivative(s)


def penalize(curve: PenalizationCurve, s_hat: np.ndarray) -> np.ndarray:
    return curve.value(s_hat)


def penalize_derivative(curve: PenalizationCurve, s_hat: np.ndarray) -> np.ndarray:
    return curve.derivative(s_hat)


def areas_from_design(s: np.ndarray, W: FilterOperator, curve: PenalizationCurve,
                      a_min: float, a_max: float) -> DesignState:
    """s → ŝ = Ws → s̃(ŝ) → A = A_min + s̃·(A_max − A_min)"""
    s = _check_unit_interval(s, "设计变量")
    filtered = np.clip(W.apply(s), 0.0, 1.0)
    penalized = curve.value(filtered)
    areas = a_min + penalized * (a_max - a_min)
    dA = curve.derivative(filtered) * (a_max - a_min)
    return DesignState(s.copy(), filtered, penalized, areas, dA)


def volume(lattice: Lattice, design: DesignState) -> float:
    return design.volume(lattice.lengths)


def volume_gradient(lattice: Lattice, design: DesignState, W: FilterOperator) -> np.ndarray:
    """∂V/∂s = Wᵀ(l ⊙ dA/dŝ)"""
    return W.chain(lattice.lengths * design.dA_dfiltered)


def initial_design(lattice: Lattice, W: FilterOperator, curve: PenalizationCurve,
                   a_min: float, a_max: float, v_max: float) -> np.ndarray:
    """满足 V(s) = V_max 的均匀初始设计"""
    n = lattice.n_members

    def excess(value: float) -> float:
        return volume(lattice, areas_from_design(np.full(n, value), W, curve, a_min, a_max)) - v_max

    if excess(1.0) <= 0.0:
        return np.ones(n)
    if excess(0.0) >= 0.0:
        raise InvalidArgumentError(f"V_max={v_max}不大于最小体积")
    value = brentq(excess, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return np.full(n, value)
