"""
随机场模块
在伴随点阵上以SPDE离散构造杨氏模量的高斯随机场：质量/扩散矩阵、精度矩阵、采样与协方差作用
"""
import logging
import threading
from abc import ABC, abstractmethod
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.io import mmwrite
from scipy.special import gamma, kv

from config import FemConfig
from models import Lattice, AdjointLattice, RandomFieldSpec, Anisotropy
from lattice_generator import build_adjoint
from errors import InvalidArgumentError, NotSPDError

logger = logging.getLogger(__name__)


def matern_covariance(x, x_prime, sigma: float, nu: float, ell: float):
    """
    Matérn协方差函数

    σ²/(2^{ν−1}Γ(ν))·(κr)^ν·K_ν(κr)，κ = √(2ν)/ℓ，r = ‖x − x'‖；r = 0 时取极限 σ²
    """
    if not (sigma > 0 and nu > 0 and ell > 0):
        raise InvalidArgumentError(f"σ={sigma}, ν={nu}, ℓ={ell}必须为正")
    diff = np.asarray(x, dtype=float) - np.asarray(x_prime, dtype=float)
    r = np.linalg.norm(np.atleast_1d(diff), axis=-1) if diff.ndim else np.abs(diff)
    kr = np.sqrt(2.0 * nu) / ell * np.asarray(r, dtype=float)
    with np.errstate(invalid="ignore"):
        value = sigma ** 2 / (2.0 ** (nu - 1.0) * gamma(nu)) * kr ** nu * kv(nu, kr)
    value = np.where(kr == 0.0, sigma ** 2, value)
    return float(value) if np.ndim(value) == 0 else value


def spde_parameters(spec: RandomFieldSpec, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """在伴随点阵顶点处计算 (κ, τ)"""
    nu = spec.nu
    if nu <= 0:
        raise InvalidArgumentError(f"β={spec.beta}、d={spec.dimension}对应ν={nu}≤0")
    if not spec.sigma > 0:
        raise InvalidArgumentError(f"SPDE参数要求σ>0，实际{spec.sigma}")
    ell = spec.length_scale.evaluate(points)
    if np.any(ell <= 0):
        raise InvalidArgumentError(f"长度尺度在部分顶点处非正（最小{ell.min():.3g}）")
    d = spec.dimension
    kappa = np.sqrt(2.0 * nu) / ell
    tau2 = gamma(nu) / (spec.sigma ** 2 * gamma(nu + d / 2.0) * (4.0 * np.pi) ** (d / 2.0)
                        * kappa ** (2.0 * nu))
    return kappa, np.sqrt(tau2)


def assemble_adjoint_operators(adjoint: AdjointLattice) -> Tuple[np.ndarray, sp.csr_matrix]:
    """组装伴随点阵的集中质量对角 M 与扩散矩阵 A"""
    n = adjoint.n_vertices
    i, j = adjoint.edges[:, 0], adjoint.edges[:, 1]
    h = adjoint.edge_lengths
    mass = np.bincount(i, weights=h / 2.0, minlength=n) + np.bincount(j, weights=h / 2.0, minlength=n)
    inv_h = 1.0 / h
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([inv_h, inv_h, -inv_h, -inv_h])
    diffusion = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return mass, diffusion


def anisotropy_diagonal(anisotropy: Anisotropy, tangents: np.ndarray) -> np.ndarray:
    """各向异性对角 D_ee = d∥·|n·t_e| + d⊥·(1 − |n·t_e|)"""
    if anisotropy.d_par <= 0 or anisotropy.d_perp <= 0:
        raise InvalidArgumentError("各向异性参数必须为正")
    n = np.asarray(anisotropy.direction, dtype=float)
    tangents = np.atleast_2d(tangents)
    if n.shape[0] != tangents.shape[1]:
        raise InvalidArgumentError(f"各向异性方向维数{n.shape[0]}与杆件维数{tangents.shape[1]}不符")
    c = np.clip(np.abs(tangents @ n), 0.0, 1.0)
    return anisotropy.d_par * c + anisotropy.d_perp * (1.0 - c)


def _factorize_spd(matrix: sp.spmatrix, name: str):
    """对称正定稀疏分解，失败时抛出NotSPDError"""
    try:
        lu = splu(sp.csc_matrix(matrix), permc_spec=FemConfig.PERMC_SPEC, diag_pivot_thresh=0.0,
                  options=dict(SymmetricMode=True))
    except RuntimeError as e:
        raise NotSPDError(f"{name}分解失败: {e}") from e
    pivots = lu.U.diagonal()
    if np.any(~(pivots > FemConfig.PIVOT_TOL * np.max(np.abs(pivots)))):
        raise NotSPDError(f"{name}非正定（参数非法或伴随点阵不连通）")
    return lu


class FieldOperator(ABC):
    """杆件杨氏模量的高斯概率分布"""

    def __init__(self, mean: np.ndarray):
        self.mean = np.asarray(mean, dtype=float)

    @property
    def size(self) -> int:
        return self.mean.shape[0]

    @abstractmethod
    def covariance_apply(self, v: np.ndarray) -> np.ndarray:
        """返回 C_r·v"""

    @abstractmethod
    def _sample_perturbation(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """零均值样本 (n_e, count)"""

    @property
    @abstractmethod
    def precision(self) -> Optional[sp.csr_matrix]:
        """精度矩阵 Q_r（确定性场为None）"""

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        """抽取样本；size为None时返回单个向量，否则返回 (size, n_e)"""
        count = 1 if size is None else int(size)
        perturbation = self._sample_perturbation(rng, count)
        samples = self.mean[:, None] + perturbation
        return samples[:, 0] if size is None else samples.T

    def dense_covariance(self) -> np.ndarray:
        """稠密协方差矩阵（仅用于小规模检查）"""
        return self.covariance_apply(np.eye(self.size))


class PrecisionOperator(FieldOperator):
    """SPDE离散得到的稀疏精度矩阵及其分解"""

    def __init__(self, mean: np.ndarray, precision: sp.csr_matrix, mass: np.ndarray,
                 diffusion: sp.csr_matrix, kappa: np.ndarray, tau: np.ndarray, beta: int,
                 noise_scale: Optional[np.ndarray] = None):
        super().__init__(mean)
        self._precision = precision
        self.mass = mass
        self.diffusion = diffusion
        self.kappa = kappa
        self.tau = tau
        self.beta = beta
        # D 的对角（各向同性时为1）
        self.noise_scale = np.ones_like(mass) if noise_scale is None else noise_scale
        self.operator = (sp.diags(kappa ** 2 * mass) + diffusion).tocsc()
        self._lock = threading.Lock()
        self._operator_lu  # 构造时即分解

    def __getstate__(self):
        # SuperLU句柄不可序列化，反序列化后重新分解
        state = self.__dict__.copy()
        state.pop("_operator_lu", None)
        state.pop("_precision_lu", None)
        state.pop("_lock", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    @property
    def precision(self) -> sp.csr_matrix:
        return self._precision

    @cached_property
    def _operator_lu(self):
        return _factorize_spd(self.operator, "SPDE算子 κ²M + A")

    @cached_property
    def _precision_lu(self):
        return _factorize_spd(self._precision, "精度矩阵Q_r")

    def covariance_apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.size:
            raise InvalidArgumentError(f"向量长度{v.shape[0]}与杆件数{self.size}不符")
        if not np.any(v):
            return np.zeros_like(v)
        with self._lock:
            return self._precision_lu.solve(v)

    def _sample_perturbation(self, rng: np.random.Generator, count: int) -> np.ndarray:
        g = np.sqrt(self.mass)[:, None] * rng.standard_normal((self.size, count))
        forcing = g / (self.tau * self.noise_scale)[:, None]
        with self._lock:
            r = self._operator_lu.solve(forcing)
            for _ in range(self.beta - 1):
                r = self._operator_lu.solve(self.mass[:, None] * r)
        return r

    def dump(self, path: str):
        mmwrite(path, self._precision, comment="precision matrix of member Young's moduli")


class DiagonalCovarianceOperator(FieldOperator):
    """不相关场 C_r = σ²I；σ = 0 时为确定性场"""

    def __init__(self, mean: np.ndarray, sigma: float):
        super().__init__(mean)
        self.sigma = float(sigma)

    @property
    def precision(self) -> Optional[sp.csr_matrix]:
        if self.sigma == 0.0:
            return None
        return sp.identity(self.size, format="csr") / self.sigma ** 2

    def covariance_apply(self, v: np.ndarray) -> np.ndarray:
        return self.sigma ** 2 * np.asarray(v, dtype=float)

    def _sample_perturbation(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.sigma == 0.0:
            return np.zeros((self.size, count))
        return self.sigma * rng.standard_normal((self.size, count))


def _matrix_power(matrix: sp.csr_matrix, exponent: int) -> sp.csr_matrix:
    result = sp.identity(matrix.shape[0], format="csr")
    for _ in range(exponent):
        result = result @ matrix
    return result


def stationary_precision(mass: np.ndarray, diffusion: sp.spmatrix, kappa: float, tau: float,
                         beta: int) -> sp.csr_matrix:
    """常参数各向同性精度矩阵 τ²·√M·(κ²I + √M⁻¹A√M⁻¹)^{2β}·√M"""
    sqrt_m = sp.diags(np.sqrt(mass))
    inv_sqrt_m = sp.diags(1.0 / np.sqrt(mass))
    inner = kappa ** 2 * sp.identity(len(mass)) + inv_sqrt_m @ diffusion @ inv_sqrt_m
    Q = tau ** 2 * (sqrt_m @ _matrix_power(inner.tocsr(), 2 * beta) @ sqrt_m)
    Q = sp.csr_matrix(Q)
    return ((Q + Q.T) * 0.5).tocsr()


def general_precision(mass: np.ndarray, diffusion: sp.spmatrix, kappa: np.ndarray,
                      tau: np.ndarray, beta: int,
                      noise_scale: Optional[np.ndarray] = None) -> sp.csr_matrix:
    """一般情形 Q = B⁻ᵀ·T·M'⁻¹·T·B⁻¹，B⁻¹ = L(M⁻¹L)^{β−1}，M' = D⁻¹MD⁻¹"""
    L = (sp.diags(kappa ** 2 * mass) + diffusion).tocsr()
    inv_m = sp.diags(1.0 / mass)
    b_inv = L @ _matrix_power((inv_m @ L).tocsr(), beta - 1)
    D = np.ones_like(mass) if noise_scale is None else noise_scale
    middle = sp.diags(tau ** 2 * D ** 2 / mass)
    Q = sp.csr_matrix(b_inv.T @ middle @ b_inv)
    return ((Q + Q.T) * 0.5).tocsr()


def build_precision(spec: RandomFieldSpec, mass: np.ndarray, diffusion: sp.spmatrix,
                    vertices: np.ndarray, noise_scale: Optional[np.ndarray] = None,
                    stationary_form: bool = False) -> PrecisionOperator:
    """
    构造精度算子

    stationary_form=True 时使用常参数各向同性公式（要求长度尺度为常数且无各向异性）
    """
    mass = np.asarray(mass, dtype=float)
    if np.any(~(mass > 0)):
        raise NotSPDError("集中质量存在非正对角（伴随点阵存在孤立顶点）")
    kappa, tau = spde_parameters(spec, vertices)
    if stationary_form:
        if not spec.length_scale.is_constant or noise_scale is not None:
            raise InvalidArgumentError("常参数公式仅适用于平稳各向同性场")
        Q = stationary_precision(mass, diffusion, float(kappa[0]), float(tau[0]), spec.beta)
    else:
        Q = general_precision(mass, diffusion, kappa, tau, spec.beta, noise_scale)
    mean = np.broadcast_to(spec.mean, (len(mass),)).copy()
    operator = PrecisionOperator(mean, Q, mass, diffusion, kappa, tau, spec.beta, noise_scale)
    logger.debug("精度矩阵: n=%d, nnz=%d, ν=%.2f", len(mass), Q.nnz, spec.nu)
    return operator


def build_field_operator(spec: RandomFieldSpec, lattice: Lattice) -> FieldOperator:
    """按随机场参数为点阵构造概率分布算子"""
    n_e = lattice.n_members
    mean = np.asarray(spec.mean, dtype=float)
    if mean.size not in (1, n_e):
        raise InvalidArgumentError(f"均值长度{mean.size}与杆件数{n_e}不符")
    mean = np.broadcast_to(mean, (n_e,)).copy()
    if np.any(mean <= 0):
        raise InvalidArgumentError("杨氏模量均值必须为正")

    if spec.sigma == 0.0:
        logger.info("σ=0，使用确定性场")
        return DiagonalCovarianceOperator(mean, 0.0)
    if spec.uncorrelated:
        return DiagonalCovarianceOperator(mean, spec.sigma)

    adjoint = build_adjoint(lattice)
    mass, diffusion = assemble_adjoint_operators(adjoint)
    noise_scale = None
    if spec.anisotropy is not None:
        noise_scale = anisotropy_diagonal(spec.anisotropy, lattice.tangents)
    return build_precision(spec, mass, diffusion, adjoint.vertices, noise_scale)


def sample_field(operator: FieldOperator, rng: np.random.Generator) -> np.ndarray:
    return operator.sample(rng)


def covariance_apply(operator: FieldOperator, v: np.ndarray) -> np.ndarray:
    return operator.covariance_apply(v)


def sample_statistics(samples: np.ndarray, centroids: np.ndarray, margin: float) -> dict:
    """
    样本的经验边缘标准差

    interior为距包围盒边界不小于margin的杆件；样本数不足2时不计算
    """
    samples = np.atleast_2d(samples)
    centroids = np.atleast_2d(centroids)
    report = {"n_samples": int(samples.shape[0]), "n_members": int(samples.shape[1])}
    if samples.shape[0] < 2:
        return report
    std = samples.std(axis=0, ddof=1)
    lo, hi = centroids.min(axis=0), centroids.max(axis=0)
    interior = np.all((centroids - lo >= margin) & (hi - centroids >= margin), axis=1)
    report.update({
        "mean": float(samples.mean()),
        "marginal_std": float(std.mean()),
        "n_interior": int(interior.sum()),
        "interior_marginal_std": float(std[interior].mean()) if interior.any() else None,
        "interior_margin": float(margin),
    })
    return report
