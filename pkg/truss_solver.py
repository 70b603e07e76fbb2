"""
桁架有限元求解器
组装并分解刚度矩阵，求解平衡方程，计算柔度及刚度矩阵导数
"""
import logging
import threading
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite
from scipy.sparse.linalg import splu

from config import FemConfig
from models import Lattice, Member, MemberState
from errors import InvalidArgumentError, MechanismError, NumericalConsistencyError

logger = logging.getLogger(__name__)


def base_block(tangent) -> np.ndarray:
    """单元基本矩阵 [tt^T, −tt^T; −tt^T, tt^T]"""
    t = np.asarray(tangent, dtype=float)
    tt = np.outer(t, t)
    return np.block([[tt, -tt], [-tt, tt]])


def element_stiffness(member: Member, E: float, A: float) -> np.ndarray:
    """单元刚度矩阵 (E·A/l)·基本矩阵"""
    if not (E > 0 and A > 0 and member.length > 0):
        raise InvalidArgumentError(f"杆件{member.id}: E={E}, A={A}, l={member.length}必须为正")
    return (E * A / member.length) * base_block(member.tangent)


def dK_ds(member: Member, E: float, dA_ds: float) -> np.ndarray:
    """∂K_e/∂s_e = (E·dA/ds/l)·基本矩阵"""
    return (E * dA_ds / member.length) * base_block(member.tangent)


def dK_dr(member: Member, A: float) -> np.ndarray:
    """∂K_e/∂r_e = (A/l)·基本矩阵"""
    return (A / member.length) * base_block(member.tangent)


def d2K_drds(member: Member, dA_ds: float) -> np.ndarray:
    """∂²K_e/∂r_e∂s_e = (dA/ds/l)·基本矩阵"""
    return (dA_ds / member.length) * base_block(member.tangent)


def member_blocks(lattice: Lattice, coefficients: np.ndarray) -> np.ndarray:
    """按系数缩放的全部单元基本矩阵 (n_e, 2d, 2d)"""
    t = lattice.tangents
    tt = np.einsum("ei,ej->eij", t, t)
    blocks = np.concatenate([np.concatenate([tt, -tt], axis=2),
                             np.concatenate([-tt, tt], axis=2)], axis=1)
    return coefficients[:, None, None] * blocks


def axial_elongations(lattice: Lattice, u_full: np.ndarray) -> np.ndarray:
    """杆件轴向伸长 δ_e = t_e·(u_b − u_a)"""
    d = lattice.dimension
    u = np.asarray(u_full).reshape(-1, d)
    conn = lattice.connectivity
    return np.einsum("ei,ei->e", lattice.tangents, u[conn[:, 1]] - u[conn[:, 0]])


def axial_load_vector(lattice: Lattice, coefficients: np.ndarray) -> np.ndarray:
    """
    组装 Σ_e c_e·[−t_e; t_e] 形式的全自由度向量

    (∂K_e/∂r_e)u 等项均可写成该形式，c_e 为对应系数与伸长之积
    """
    d = lattice.dimension
    contrib = coefficients[:, None] * lattice.tangents
    vec = np.zeros(lattice.n_dofs)
    dofs = lattice.member_dofs
    np.add.at(vec, dofs[:, :d].ravel(), -contrib.ravel())
    np.add.at(vec, dofs[:, d:].ravel(), contrib.ravel())
    return vec


def assemble_matrix(lattice: Lattice, state: MemberState) -> sp.csc_matrix:
    """组装消去约束自由度后的刚度矩阵（不分解）"""
    E, A = state.youngs_moduli, state.areas
    if E.shape != (lattice.n_members,):
        raise InvalidArgumentError(f"杆件状态长度{E.shape}与杆件数{lattice.n_members}不符")
    blocks = member_blocks(lattice, E * A / lattice.lengths)
    dofs = lattice.member_dofs
    n = dofs.shape[1]
    rows = np.repeat(dofs, n, axis=1).ravel()
    cols = np.tile(dofs, (1, n)).ravel()
    K = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(lattice.n_dofs, lattice.n_dofs)).tocsc()
    free = lattice.free_dofs
    return K[free][:, free].tocsc()


class StiffnessSystem:
    """已分解的约束刚度系统"""

    def __init__(self, lattice: Lattice, K: sp.csc_matrix):
        self.lattice = lattice
        self.K = K
        self.free_dofs = lattice.free_dofs
        # SuperLU句柄的回代按锁串行执行
        self._lock = threading.Lock()
        self._lu = None
        if K.shape[0] > 0:
            self._factorize()

    @property
    def n_free(self) -> int:
        return self.K.shape[0]

    def _factorize(self):
        """稀疏分解并检查正定性"""
        try:
            lu = splu(self.K, permc_spec=FemConfig.PERMC_SPEC, diag_pivot_thresh=0.0,
                      options=dict(SymmetricMode=True))
        except RuntimeError as e:
            raise MechanismError(f"刚度矩阵奇异，结构为机构: {e}") from e

        pivots = lu.U.diagonal()
        scale = np.max(np.abs(pivots)) if pivots.size else 1.0
        bad = np.flatnonzero(~(pivots > FemConfig.PIVOT_TOL * scale))
        if bad.size:
            k = int(bad[0])
            column = int(np.flatnonzero(lu.perm_c == k)[0])
            dof = int(self.free_dofs[column])
            d = self.lattice.dimension
            raise MechanismError(
                f"刚度矩阵非正定: 第{k}个主元{pivots[k]:.3e}，对应节点{dof // d}的第{dof % d}个自由度",
                pivot_index=k, dof=dof)
        self._lu = lu

    def solve(self, f: np.ndarray) -> np.ndarray:
        """求解 K u = f（f按自由自由度索引，可为多列）"""
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.n_free:
            raise InvalidArgumentError(f"荷载长度{f.shape[0]}与自由度数{self.n_free}不符")
        if self._lu is None:
            return np.zeros_like(f)
        with self._lock:
            return self._lu.solve(f)

    def residual(self, u: np.ndarray, f: np.ndarray) -> float:
        """相对残差 ‖Ku−f‖/‖f‖"""
        norm = np.linalg.norm(f)
        if norm == 0.0:
            return float(np.linalg.norm(self.K @ u))
        return float(np.linalg.norm(self.K @ u - f) / norm)

    def check_residual(self, u: np.ndarray, f: np.ndarray, tol: float = FemConfig.RESIDUAL_TOL):
        res = self.residual(u, f)
        if res > tol:
            raise NumericalConsistencyError(f"求解残差{res:.3e}超过{tol:.0e}")
        return res

    def restrict(self, v_full: np.ndarray) -> np.ndarray:
        return np.asarray(v_full)[self.free_dofs]

    def expand(self, v_free: np.ndarray) -> np.ndarray:
        """自由自由度向量扩展为全自由度向量（约束处为0）"""
        full = np.zeros(self.lattice.n_dofs)
        full[self.free_dofs] = v_free
        return full

    def dump(self, path: str):
        """以Matrix Market格式导出K"""
        mmwrite(path, self.K, comment="constrained stiffness matrix")
        logger.debug("刚度矩阵已导出: %s", path)


def assemble(lattice: Lattice, state: MemberState) -> StiffnessSystem:
    """组装并分解刚度矩阵"""
    return StiffnessSystem(lattice, assemble_matrix(lattice, state))


def solve(system: StiffnessSystem, f: np.ndarray) -> np.ndarray:
    return system.solve(f)


def compliance(f: np.ndarray, u: np.ndarray) -> float:
    """柔度 J = f·u"""
    return float(np.dot(f, u))


def solve_lattice(lattice: Lattice, state: MemberState,
                  system: Optional[StiffnessSystem] = None):
    """求解点阵荷载工况，返回 (系统, 全自由度位移, 柔度)"""
    system = system or assemble(lattice, state)
    f = system.restrict(lattice.load_vector)
    u = system.solve(f)
    return system, system.expand(u), compliance(f, u)
