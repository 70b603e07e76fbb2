"""
鲁棒统计模块
一阶摄动法计算柔度的均值与标准差及其对设计变量的梯度，并提供蒙特卡洛验证
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Dict, Any

import numpy as np

from config import FieldConfig, get_thread_count
from models import Lattice, MemberState, ComplianceStatistics, GradientPath
from truss_solver import (StiffnessSystem, assemble, compliance, axial_elongations,
                          axial_load_vector)
from random_field import FieldOperator
from errors import InvalidArgumentError, MechanismError, NumericalConsistencyError

logger = logging.getLogger(__name__)

# 逐杆路径每批回代的右端项数
PER_MEMBER_BLOCK = 256


def mean_compliance(system: StiffnessSystem, f: np.ndarray) -> float:
    """J̄ = f·u(s, r̄)，f按自由自由度索引"""
    return compliance(f, system.solve(f))


def compliance_gradient_wrt_r(lattice: Lattice, u_full: np.ndarray, state: MemberState) -> np.ndarray:
    """∂J/∂r_e = −u_e·(∂K_e/∂r_e)·u_e = −A_e·δ_e²/l_e"""
    delta = axial_elongations(lattice, u_full)
    return -state.areas * delta ** 2 / lattice.lengths


def std_dev_compliance(dJ_dr: np.ndarray, operator: FieldOperator):
    """σ_J = √(∂J/∂r · C_r ∂J/∂r)，返回 (σ_J, w)"""
    w = operator.covariance_apply(dJ_dr)
    variance = float(np.dot(dJ_dr, w))
    scale = float(np.dot(np.abs(dJ_dr), np.abs(w)))
    if variance < 0.0:
        if variance < -FieldConfig.NEGATIVE_VARIANCE_TOL * max(scale, 1.0):
            raise NumericalConsistencyError(f"柔度方差为负({variance:.3e})，协方差非半正定")
        variance = 0.0
    return float(np.sqrt(variance)), w


def grad_mean_compliance(lattice: Lattice, u_full: np.ndarray, state: MemberState,
                         dA_ds: np.ndarray) -> np.ndarray:
    """∂J̄/∂s_e = −u_e·(∂K_e/∂s_e)·u_e"""
    delta = axial_elongations(lattice, u_full)
    return -state.youngs_moduli * dA_ds * delta ** 2 / lattice.lengths


def _adjoint_load(lattice: Lattice, system: StiffnessSystem, u_full: np.ndarray,
                  state: MemberState, w: np.ndarray) -> np.ndarray:
    """z = Σ_f w_f·(∂K_f/∂r_f)·u（自由自由度）"""
    delta = axial_elongations(lattice, u_full)
    z_full = axial_load_vector(lattice, w * state.areas / lattice.lengths * delta)
    return system.restrict(z_full)


def grad_std_compliance(lattice: Lattice, system: StiffnessSystem, u_full: np.ndarray,
                        state: MemberState, dA_ds: np.ndarray, w: np.ndarray, std_dev: float,
                        path: GradientPath = GradientPath.ADJOINT) -> np.ndarray:
    """
    ∂σ_J/∂s_e

    adjoint: 解 K y = z 一次，分量为 (1/σ_J)·[2·y·(∂K/∂s_e)u − w_e·u_e·(∂²K_e/∂r_e∂s_e)·u_e]
    per_member: 对每根杆件解 K·∂u/∂s_e = −(∂K/∂s_e)u 后与 z 缩并
    """
    n_e = lattice.n_members
    if std_dev == 0.0:
        logger.warning("σ_J = 0，标准差梯度取为0")
        return np.zeros(n_e)

    delta = axial_elongations(lattice, u_full)
    second = w * dA_ds / lattice.lengths * delta ** 2
    z = _adjoint_load(lattice, system, u_full, state, w)
    coeff = state.youngs_moduli * dA_ds / lattice.lengths

    if path is GradientPath.ADJOINT:
        y_full = system.expand(system.solve(z))
        eta = axial_elongations(lattice, y_full)
        first = 2.0 * coeff * eta * delta
    else:
        first = np.zeros(n_e)
        d = lattice.dimension
        dofs = lattice.member_dofs
        for start in range(0, n_e, PER_MEMBER_BLOCK):
            members = np.arange(start, min(start + PER_MEMBER_BLOCK, n_e))
            rhs = np.zeros((lattice.n_dofs, len(members)))
            c = (coeff * delta)[members][:, None] * lattice.tangents[members]
            cols = np.arange(len(members))[:, None]
            # −(∂K_e/∂s_e)u = c·[t; −t]
            rhs[dofs[members, :d], np.broadcast_to(cols, (len(members), d))] += c
            rhs[dofs[members, d:], np.broadcast_to(cols, (len(members), d))] -= c
            du = system.solve(rhs[system.free_dofs])
            first[members] = -2.0 * (z @ du)
    return (first - second) / std_dev


def compliance_statistics(lattice: Lattice, state: MemberState, operator: FieldOperator,
                          dA_ds: Optional[np.ndarray] = None,
                          system: Optional[StiffnessSystem] = None,
                          path: GradientPath = GradientPath.ADJOINT,
                          need_std_gradient: bool = True) -> ComplianceStatistics:
    """在均值杨氏模量处一次分解，计算全部统计量（dA_ds为None时不计算梯度）"""
    system = system or assemble(lattice, state)
    f = system.restrict(lattice.load_vector)
    u = system.solve(f)
    u_full = system.expand(u)
    mean = compliance(f, u)

    dJ_dr = compliance_gradient_wrt_r(lattice, u_full, state)
    std_dev, w = std_dev_compliance(dJ_dr, operator)

    stats = ComplianceStatistics(mean, std_dev, dJ_dr, w, displacements=u_full)
    if dA_ds is not None:
        stats.grad_mean = grad_mean_compliance(lattice, u_full, state, dA_ds)
        if need_std_gradient:
            stats.grad_std = grad_std_compliance(lattice, system, u_full, state, dA_ds,
                                                 w, std_dev, path)
    return stats


@dataclass
class MonteCarloResult:
    """蒙特卡洛验证结果"""
    mean: float
    std_dev: float
    mean_stderr: float
    std_stderr: float
    n_accepted: int
    n_rejected: int
    samples: np.ndarray = field(repr=False)      # 被拒样本为NaN

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean": self.mean,
            "std_dev": self.std_dev,
            "mean_stderr": self.mean_stderr,
            "std_stderr": self.std_stderr,
            "n_accepted": self.n_accepted,
            "n_rejected": self.n_rejected,
        }


def _run_chunk(lattice: Lattice, areas: np.ndarray, operator: FieldOperator,
               seed: np.random.SeedSequence, count: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    fields = operator.sample(rng, size=count)
    values = np.full(count, np.nan)
    for k in range(count):
        E = fields[k]
        if np.any(E <= 0.0):
            continue
        try:
            system = assemble(lattice, MemberState(E, areas))
        except MechanismError:
            continue
        f = system.restrict(lattice.load_vector)
        values[k] = compliance(f, system.solve(f))
    return values


def monte_carlo_validate(lattice: Lattice, areas: np.ndarray, operator: FieldOperator,
                         n_samples: int, seed: int, threads: Optional[int] = None) -> MonteCarloResult:
    """
    逐样本求解平衡方程的蒙特卡洛统计

    随机流按固定大小分块由SeedSequence派生，结果与线程数无关
    """
    if n_samples < 2:
        raise InvalidArgumentError(f"样本数必须≥2: {n_samples}")
    chunk = FieldConfig.MC_CHUNK_SIZE
    counts = [min(chunk, n_samples - start) for start in range(0, n_samples, chunk)]
    seeds = np.random.SeedSequence(seed).spawn(len(counts))

    with ThreadPoolExecutor(max_workers=get_thread_count(threads)) as pool:
        parts = list(pool.map(lambda args: _run_chunk(lattice, areas, operator, *args),
                              zip(seeds, counts)))
    samples = np.concatenate(parts)
    accepted = samples[~np.isnan(samples)]
    n_rejected = int(n_samples - accepted.size)
    if n_rejected:
        logger.warning("蒙特卡洛: 拒绝%d个样本（E≤0或刚度矩阵非正定）", n_rejected)
    if accepted.size < 2:
        raise NumericalConsistencyError("有效样本不足2个")

    n = accepted.size
    mean = float(accepted.mean())
    std = float(accepted.std(ddof=1))
    return MonteCarloResult(mean, std, std / np.sqrt(n), std / np.sqrt(2.0 * (n - 1)),
                            int(n), n_rejected, samples)
