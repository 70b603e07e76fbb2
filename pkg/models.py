"""
核心数据模型定义
桁架点阵鲁棒拓扑优化的基础数据结构
"""
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import List, Dict, FrozenSet, Tuple, Optional, Any

import numpy as np
from scipy.sparse.csgraph import connected_components
import scipy.sparse as sp

from config import MMAConfig, FemConfig
from errors import InvalidArgumentError, DegenerateGeometryError


class DiagonalMode(Enum):
    """网格单元对角杆模式"""
    NONE = "none"
    SINGLE = "single"
    DOUBLE = "double"


class GradientPath(Enum):
    """标准差梯度的计算路径"""
    ADJOINT = "adjoint"          # 一次伴随求解
    PER_MEMBER = "per_member"    # 逐杆回代


@dataclass(frozen=True)
class Joint:
    """节点"""
    id: int
    position: Tuple[float, ...]
    fixed_dofs: FrozenSet[int] = frozenset()

    def __post_init__(self):
        d = len(self.position)
        if d not in (1, 2, 3):
            raise InvalidArgumentError(f"节点{self.id}坐标维数{d}不在{{1,2,3}}中")
        bad = [k for k in self.fixed_dofs if k < 0 or k >= d]
        if bad:
            raise InvalidArgumentError(f"节点{self.id}约束自由度{bad}超出范围0..{d - 1}")

    @property
    def dimension(self) -> int:
        return len(self.position)


@dataclass(frozen=True)
class Member:
    """杆件"""
    id: int
    joint_a: int
    joint_b: int
    length: float
    tangent: Tuple[float, ...]
    centroid: Tuple[float, ...]

    def __post_init__(self):
        if self.joint_a == self.joint_b:
            raise InvalidArgumentError(f"杆件{self.id}两端节点相同: {self.joint_a}")
        if not self.length > 0.0:
            raise DegenerateGeometryError(f"杆件{self.id}长度非正: {self.length}")


@dataclass(eq=False)
class Lattice:
    """销接桁架点阵（构造后不再修改）"""
    dimension: int
    joints: List[Joint]
    members: List[Member]
    loads: Dict[int, float] = field(default_factory=dict)  # 全局自由度 -> 力

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise InvalidArgumentError(f"维数必须为1、2或3，实际{self.dimension}")
        n_joints = len(self.joints)
        for i, joint in enumerate(self.joints):
            if joint.id != i:
                raise InvalidArgumentError(f"节点编号必须连续，位置{i}处为{joint.id}")
            if joint.dimension != self.dimension:
                raise InvalidArgumentError(f"节点{i}维数{joint.dimension}与点阵维数{self.dimension}不符")

        seen = set()
        for i, member in enumerate(self.members):
            if member.id != i:
                raise InvalidArgumentError(f"杆件编号必须连续，位置{i}处为{member.id}")
            for j in (member.joint_a, member.joint_b):
                if j < 0 or j >= n_joints:
                    raise InvalidArgumentError(f"杆件{i}引用了不存在的节点{j}")
            key = (min(member.joint_a, member.joint_b), max(member.joint_a, member.joint_b))
            if key in seen:
                raise InvalidArgumentError(f"杆件{i}与已有杆件重复连接节点{key}")
            seen.add(key)

        for dof in self.loads:
            if dof < 0 or dof >= self.n_dofs:
                raise InvalidArgumentError(f"荷载自由度{dof}超出范围")

        if self.members:
            n_comp, _ = connected_components(self.joint_adjacency, directed=False)
            if n_comp != 1:
                raise InvalidArgumentError("点阵结构图不连通")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def n_dofs(self) -> int:
        return self.dimension * len(self.joints)

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([j.position for j in self.joints], dtype=float).reshape(-1, self.dimension)

    @cached_property
    def connectivity(self) -> np.ndarray:
        return np.array([(m.joint_a, m.joint_b) for m in self.members], dtype=int).reshape(-1, 2)

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.array([m.length for m in self.members], dtype=float)

    @cached_property
    def tangents(self) -> np.ndarray:
        return np.array([m.tangent for m in self.members], dtype=float).reshape(-1, self.dimension)

    @cached_property
    def centroids(self) -> np.ndarray:
        return np.array([m.centroid for m in self.members], dtype=float).reshape(-1, self.dimension)

    @cached_property
    def joint_adjacency(self) -> sp.csr_matrix:
        """节点邻接矩阵"""
        conn = self.connectivity
        n = self.n_joints
        data = np.ones(len(conn))
        adj = sp.coo_matrix((data, (conn[:, 0], conn[:, 1])), shape=(n, n))
        return (adj + adj.T).tocsr()

    @cached_property
    def member_dofs(self) -> np.ndarray:
        """每根杆件的全局自由度 (n_e, 2d)，顺序为[a的d个分量, b的d个分量]"""
        d = self.dimension
        conn = self.connectivity
        offsets = np.arange(d)
        dofs_a = conn[:, 0:1] * d + offsets
        dofs_b = conn[:, 1:2] * d + offsets
        return np.hstack([dofs_a, dofs_b])

    @cached_property
    def fixed_dofs(self) -> np.ndarray:
        d = self.dimension
        fixed = [j.id * d + k for j in self.joints for k in sorted(j.fixed_dofs)]
        return np.array(sorted(fixed), dtype=int)

    @cached_property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.fixed_dofs] = False
        return np.flatnonzero(mask)

    @property
    def load_vector(self) -> np.ndarray:
        """全自由度荷载向量"""
        f = np.zeros(self.n_dofs)
        for dof, value in self.loads.items():
            f[dof] += value
        return f

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    def degrees(self) -> np.ndarray:
        """各节点连接的杆件数"""
        return np.bincount(self.connectivity.ravel(), minlength=self.n_joints)

    def with_boundary_conditions(self, fixed: Dict[int, FrozenSet[int]],
                                 loads: Dict[int, float]) -> "Lattice":
        """返回施加了边界条件与荷载的新点阵"""
        joints = [Joint(j.id, j.position, frozenset(fixed.get(j.id, frozenset())) | j.fixed_dofs)
                  for j in self.joints]
        merged = dict(self.loads)
        for dof, value in loads.items():
            merged[dof] = merged.get(dof, 0.0) + value
        return Lattice(self.dimension, joints, list(self.members), merged)


@dataclass(eq=False)
class AdjointLattice:
    """伴随（线图）点阵：顶点为原杆件形心，边连接共享节点的杆件"""
    vertices: np.ndarray          # (n_e, d)
    edges: np.ndarray             # (n_edges, 2)
    edge_lengths: np.ndarray      # (n_edges,)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]


@dataclass
class MemberState:
    """杆件状态：杨氏模量与截面积（按杆件向量化）"""
    youngs_moduli: np.ndarray
    areas: np.ndarray

    def __post_init__(self):
        self.youngs_moduli = np.asarray(self.youngs_moduli, dtype=float)
        self.areas = np.asarray(self.areas, dtype=float)
        if self.youngs_moduli.shape != self.areas.shape:
            raise InvalidArgumentError("杨氏模量与截面积长度不一致")


@dataclass
class DesignState:
    """设计状态：原始、过滤后、惩罚后密度及截面积"""
    raw: np.ndarray
    filtered: np.ndarray
    penalized: np.ndarray
    areas: np.ndarray
    dA_dfiltered: np.ndarray     # 对角链式导数 dA_e/dŝ_e

    def volume(self, lengths: np.ndarray) -> float:
        return float(np.dot(lengths, self.areas))


@dataclass
class ComplianceStatistics:
    """柔度统计量及其梯度"""
    mean: float
    std_dev: float
    dJ_dr: np.ndarray
    w: np.ndarray
    grad_mean: Optional[np.ndarray] = None
    grad_std: Optional[np.ndarray] = None
    displacements: Optional[np.ndarray] = None


@dataclass(frozen=True)
class LengthScale:
    """长度尺度 ℓ(x) = a + b·x[axis]"""
    a: float
    b: float = 0.0
    axis: int = 0

    @property
    def is_constant(self) -> bool:
        return self.b == 0.0

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.is_constant:
            return np.full(points.shape[0], float(self.a))
        if self.axis >= points.shape[1]:
            raise InvalidArgumentError(f"长度尺度坐标轴{self.axis}超出维数{points.shape[1]}")
        return self.a + self.b * points[:, self.axis]


@dataclass(frozen=True)
class Anisotropy:
    """各向异性参数"""
    direction: Tuple[float, ...]
    d_par: float
    d_perp: float

    def __post_init__(self):
        if self.d_par <= 0 or self.d_perp <= 0:
            raise InvalidArgumentError(f"各向异性参数必须为正: d∥={self.d_par}, d⊥={self.d_perp}")
        norm = float(np.linalg.norm(self.direction))
        if abs(norm - 1.0) > 1e-12:
            raise InvalidArgumentError(f"各向异性方向必须为单位向量，实际模长{norm}")


@dataclass
class RandomFieldSpec:
    """杨氏模量随机场参数"""
    mean: np.ndarray
    sigma: float
    beta: int = 1
    length_scale: LengthScale = field(default_factory=lambda: LengthScale(1.0))
    anisotropy: Optional[Anisotropy] = None
    dimension: int = 2
    uncorrelated: bool = False

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        if self.sigma < 0:
            raise InvalidArgumentError(f"标准差不能为负: {self.sigma}")
        if int(self.beta) != self.beta or self.beta < 1:
            raise InvalidArgumentError(f"β必须为正整数: {self.beta}")
        self.beta = int(self.beta)

    @property
    def nu(self) -> float:
        """光滑度 ν = 2β − d/2"""
        return 2.0 * self.beta - self.dimension / 2.0

    @staticmethod
    def beta_from_nu(nu: float, dimension: int) -> int:
        """由ν反推β，仅接受正整数"""
        beta = nu / 2.0 + dimension / 4.0
        if beta < 1 or abs(beta - round(beta)) > 1e-12:
            raise InvalidArgumentError(
                f"ν={nu}、d={dimension}对应β={beta}，不是正整数（不支持分数阶算子）")
        return int(round(beta))


@dataclass
class MMASettings:
    """MMA参数"""
    asymptote_init: float = MMAConfig.ASYMPTOTE_INIT
    asymptote_decrease: float = MMAConfig.ASYMPTOTE_DECREASE
    asymptote_increase: float = MMAConfig.ASYMPTOTE_INCREASE
    move_limit: float = MMAConfig.MOVE_LIMIT
    asymptote_margin: float = MMAConfig.ASYMPTOTE_MARGIN
    albefa: float = MMAConfig.ALBEFA
    raa0: float = MMAConfig.RAA0
    inner_iterations: int = MMAConfig.INNER_ITERATIONS
    max_iterations: int = MMAConfig.MAX_ITERATIONS
    tolerance: float = MMAConfig.TOLERANCE


@dataclass
class OptimizationProblem:
    """鲁棒优化问题"""
    lattice: Lattice
    field_spec: RandomFieldSpec
    precision: Any                      # random_field.PrecisionOperator
    v_max: float
    a_max: float
    alpha: float = 1.0
    a_min: Optional[float] = None
    filter: Any = None                  # regularization.FilterOperator
    penalty: Any = None                 # regularization.PenalizationCurve
    j_star: Optional[float] = None
    sigma_star: Optional[float] = None
    gradient_path: GradientPath = GradientPath.ADJOINT
    settings: MMASettings = field(default_factory=MMASettings)

    def __post_init__(self):
        if self.a_min is None:
            self.a_min = FemConfig.A_MIN_RATIO * self.a_max
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgumentError(f"α必须在[0,1]内: {self.alpha}")
        if not self.a_max > self.a_min >= 0.0:
            raise InvalidArgumentError(f"截面积范围非法: A_min={self.a_min}, A_max={self.a_max}")
        if self.v_max <= self.a_min * self.lattice.total_length:
            raise InvalidArgumentError(
                f"V_max={self.v_max}不可行，最小体积为{self.a_min * self.lattice.total_length}")
        for name in ("j_star", "sigma_star"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise InvalidArgumentError(f"{name}必须为正: {value}")


@dataclass
class OptimizationResult:
    """优化结果"""
    alpha: float
    design: DesignState
    statistics: ComplianceStatistics
    volume: float
    history: List[Dict[str, float]]
    iterations: int
    converged: bool
    wall_time: float
    j_star: Optional[float] = None
    sigma_star: Optional[float] = None

    @property
    def s(self) -> np.ndarray:
        return self.design.raw

    def summary(self, record_timing: bool = False) -> Dict[str, Any]:
        """结果摘要（JSON可序列化），默认不含耗时以保证输出可复现"""
        summary = {
            "alpha": self.alpha,
            "mean_compliance": self.statistics.mean,
            "std_compliance": self.statistics.std_dev,
            "volume": self.volume,
            "iterations": self.iterations,
            "converged": self.converged,
            "j_star": self.j_star,
            "sigma_star": self.sigma_star,
        }
        if record_timing:
            summary["wall_time"] = self.wall_time
        return summary
