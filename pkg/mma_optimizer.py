"""
MMA优化器
移动渐近线法求解体积约束下的鲁棒柔度优化，含归一化与帕累托扫描
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Dict, Optional, Sequence, Tuple

import numpy as np

from config import MMAConfig, get_thread_count
from models import (OptimizationProblem, OptimizationResult, MMASettings, MemberState,
                    DesignState, ComplianceStatistics)
from regularization import (FilterOperator, PenalizationCurve, areas_from_design,
                            volume_gradient, initial_design, build_filter)
from robust_statistics import compliance_statistics
from truss_solver import assemble
from errors import InvalidArgumentError, MechanismError, OptimizationAbortError

logger = logging.getLogger(__name__)

TrialEvaluator = Callable[[np.ndarray], Tuple[float, float]]


@dataclass
class MmaState:
    """MMA迭代状态"""
    x: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    low: np.ndarray
    upp: np.ndarray
    iteration: int = 0
    kkt_residual: float = 0.0
    max_change: float = np.inf
    lower_bound: float = 0.0
    upper_bound: float = 1.0
    # 目标与约束近似的正则系数
    raa0: float = MMAConfig.RAA0
    raa: float = MMAConfig.RAA0
    inner_iterations: int = 0

    @classmethod
    def start(cls, x0: np.ndarray, lower_bound: float = 0.0, upper_bound: float = 1.0) -> "MmaState":
        x0 = np.asarray(x0, dtype=float).copy()
        span = upper_bound - lower_bound
        return cls(x0, x0.copy(), x0.copy(), x0 - span, x0 + span,
                   lower_bound=lower_bound, upper_bound=upper_bound)

    @property
    def span(self) -> float:
        return self.upper_bound - self.lower_bound


def _update_asymptotes(state: MmaState, settings: MMASettings):
    x = state.x
    span = state.span
    if state.iteration < 2:
        state.low = x - settings.asymptote_init * span
        state.upp = x + settings.asymptote_init * span
        return
    # 两步振荡收缩，单调扩张
    trend = (x - state.x1) * (state.x1 - state.x2)
    factor = np.ones_like(x)
    factor[trend > 0] = settings.asymptote_increase
    factor[trend < 0] = settings.asymptote_decrease
    low = x - factor * (state.x1 - state.low)
    upp = x + factor * (state.upp - state.x1)
    near = max(0.01 * span, settings.asymptote_margin)
    state.low = np.clip(low, x - 10.0 * span, x - near)
    state.upp = np.clip(upp, x + near, x + 10.0 * span)


def _approximation(grad: np.ndarray, ux: np.ndarray, xl: np.ndarray, raa: float, span: float):
    """MMA近似系数 (p, q)"""
    pos = np.maximum(grad, 0.0)
    neg = np.maximum(-grad, 0.0)
    reg = 0.001 * (pos + neg) + raa / span
    return (pos + reg) * ux ** 2, (neg + reg) * xl ** 2


class _Subproblem:
    """单约束可分凸子问题及其对偶"""

    def __init__(self, low, upp, alpha, beta, p0, q0, p1, q1, b):
        self.low, self.upp = low, upp
        self.alpha, self.beta = alpha, beta
        self.p0, self.q0, self.p1, self.q1 = p0, q0, p1, q1
        self.b = b

    def design(self, lam: float) -> np.ndarray:
        a = np.sqrt(self.p0 + lam * self.p1)
        b = np.sqrt(self.q0 + lam * self.q1)
        return np.clip((a * self.low + b * self.upp) / (a + b), self.alpha, self.beta)

    def constraint(self, x: np.ndarray) -> float:
        return float(np.sum(self.p1 / (self.upp - x) + self.q1 / (x - self.low)) - self.b)

    def constraint_slope(self, lam: float, x: np.ndarray) -> float:
        """d g̃(x(λ))/dλ"""
        a = np.sqrt(self.p0 + lam * self.p1)
        b = np.sqrt(self.q0 + lam * self.q1)
        da = self.p1 / (2.0 * a)
        db = self.q1 / (2.0 * b)
        dx = (self.upp - self.low) * (a * db - b * da) / (a + b) ** 2
        dx[(x <= self.alpha) | (x >= self.beta)] = 0.0
        dg = self.p1 / (self.upp - x) ** 2 - self.q1 / (x - self.low) ** 2
        return float(np.dot(dg, dx))

    def scale(self, x: np.ndarray) -> float:
        return float(np.sum(self.p1 / (self.upp - x) + self.q1 / (x - self.low)) + abs(self.b))

    def _residual(self, lam: float) -> Tuple[np.ndarray, float, bool]:
        x = self.design(lam)
        value = self.constraint(x)
        if not np.isfinite(value):
            raise OptimizationAbortError(f"MMA对偶求解出现非有限值 (λ={lam})")
        return x, value, abs(value) <= MMAConfig.DUAL_TOLERANCE * self.scale(x)

    def solve(self) -> Tuple[np.ndarray, float]:
        x = self.design(0.0)
        if self.constraint(x) <= 0.0:
            return x, 0.0

        lo, hi = 0.0, 1.0
        while self.constraint(self.design(hi)) > 0.0:
            lo, hi = hi, 2.0 * hi
            if hi > MMAConfig.DUAL_LAMBDA_MAX:
                logger.warning("MMA子问题不可行，乘子截断为%.0e", MMAConfig.DUAL_LAMBDA_MAX)
                return self.design(MMAConfig.DUAL_LAMBDA_MAX), MMAConfig.DUAL_LAMBDA_MAX

        lam = 0.5 * (lo + hi)
        for _ in range(MMAConfig.DUAL_MAX_ITERATIONS):
            x, value, done = self._residual(lam)
            if done:
                return x, lam
            if value > 0.0:
                lo = lam
            else:
                hi = lam
            if hi - lo <= 1e-15 * max(hi, 1.0):
                return self.design(hi), hi
            slope = self.constraint_slope(lam, x)
            step = lam - value / slope if slope < 0.0 else np.nan
            # 牛顿步越出区间时取中点
            lam = step if lo < step < hi else 0.5 * (lo + hi)
        logger.warning("MMA对偶牛顿迭代%d次未收敛，改用二分法 (λ∈[%.6g, %.6g])",
                       MMAConfig.DUAL_MAX_ITERATIONS, lo, hi)
        return self._bisect(lo, hi)

    def _bisect(self, lo: float, hi: float) -> Tuple[np.ndarray, float]:
        for _ in range(MMAConfig.DUAL_BISECTION_STEPS):
            lam = 0.5 * (lo + hi)
            x, value, done = self._residual(lam)
            if done:
                return x, lam
            if value > 0.0:
                lo = lam
            else:
                hi = lam
            # 区间已收缩到机器精度，取可行侧端点
            if hi - lo <= 1e-15 * max(hi, 1.0):
                return self.design(hi), hi
        raise OptimizationAbortError(
            f"MMA对偶子问题二分{MMAConfig.DUAL_BISECTION_STEPS}次仍未收敛 (λ∈[{lo:.6g}, {hi:.6g}])")


def _solve_subproblem(state: MmaState, F: float, grad_F: np.ndarray, g: float, grad_g: np.ndarray,
                      settings: MMASettings) -> Tuple[np.ndarray, float, float]:
    """在当前渐近线与正则系数下求解子问题，返回新设计及目标、约束的近似值"""
    x = state.x
    span = state.span
    alpha = np.maximum.reduce([np.full_like(x, state.lower_bound),
                               state.low + settings.albefa * (x - state.low),
                               x - settings.move_limit * span])
    beta = np.minimum.reduce([np.full_like(x, state.upper_bound),
                              state.upp - settings.albefa * (state.upp - x),
                              x + settings.move_limit * span])

    ux, xl = state.upp - x, x - state.low
    p0, q0 = _approximation(grad_F, ux, xl, state.raa0, span)
    p1, q1 = _approximation(grad_g, ux, xl, state.raa, span)
    b = float(np.sum(p1 / ux + q1 / xl)) - g

    sub = _Subproblem(state.low, state.upp, alpha, beta, p0, q0, p1, q1, b)
    x_new, lam = sub.solve()
    x_new = np.clip(x_new, state.lower_bound, state.upper_bound)
    g_approx = sub.constraint(x_new)
    residual = max(g_approx, 0.0) + abs(lam * g_approx)
    state.kkt_residual = residual / max(sub.scale(x_new), 1e-300)
    if state.kkt_residual > MMAConfig.KKT_TOLERANCE and lam < MMAConfig.DUAL_LAMBDA_MAX:
        logger.warning("MMA子问题KKT残差%.2e超过容限%.0e", state.kkt_residual, MMAConfig.KKT_TOLERANCE)

    F_approx = F + float(np.sum(p0 * (1.0 / (state.upp - x_new) - 1.0 / ux)
                                + q0 * (1.0 / (x_new - state.low) - 1.0 / xl)))
    return x_new, F_approx, g_approx


def _is_conservative(F_new: float, F_approx: float, g_new: float, g_approx: float) -> bool:
    tol = MMAConfig.CONSERVATIVE_TOLERANCE
    return F_new <= F_approx + tol and g_new <= g_approx + tol


def _tighten(state: MmaState, x_new: np.ndarray, F_new: float, F_approx: float,
             g_new: float, g_approx: float):
    """近似低估真实值时增大对应正则系数"""
    x = state.x
    # 正则系数增量δ使近似值在x_new处增加 δ·curvature
    curvature = float(np.sum((x_new - x) ** 2 * (state.upp - state.low)
                             / ((state.upp - x_new) * (x_new - state.low) * state.span)))
    curvature = max(curvature, 1e-12)
    half = 0.5 * MMAConfig.CONSERVATIVE_TOLERANCE
    if F_new > F_approx + half:
        state.raa0 = min(1.1 * (state.raa0 + (F_new - F_approx) / curvature), 10.0 * state.raa0)
    if g_new > g_approx + half:
        state.raa = min(1.1 * (state.raa + (g_new - g_approx) / curvature), 10.0 * state.raa)


def mma_step(state: MmaState, F: float, grad_F: np.ndarray, g: float, grad_g: np.ndarray,
             settings: Optional[MMASettings] = None,
             evaluate_trial: Optional[TrialEvaluator] = None) -> np.ndarray:
    """
    执行一次MMA迭代，更新状态并返回新设计

    给定evaluate_trial(s) -> (F, g)时按保守近似迭代：新设计处近似值低于真实目标或约束，
    则增大正则系数重解子问题，至多settings.inner_iterations次。接受的设计上目标不增且保持可行
    """
    settings = settings or MMASettings()
    grad_F = np.asarray(grad_F, dtype=float)
    grad_g = np.asarray(grad_g, dtype=float)
    values = np.concatenate([[F, g], grad_F, grad_g])
    if not np.all(np.isfinite(values)):
        raise OptimizationAbortError(f"第{state.iteration}次迭代目标或约束出现非有限值")

    _update_asymptotes(state, settings)
    x = state.x
    if evaluate_trial is None:
        state.raa0 = state.raa = settings.raa0
    else:
        n = max(x.size, 1)
        state.raa0 = max(settings.raa0, 0.1 / n * float(np.sum(np.abs(grad_F))) * state.span)
        state.raa = max(settings.raa0, 0.1 / n * float(np.sum(np.abs(grad_g))) * state.span)

    x_new, F_approx, g_approx = _solve_subproblem(state, F, grad_F, g, grad_g, settings)
    state.inner_iterations = 0
    if evaluate_trial is not None:
        while True:
            F_new, g_new = evaluate_trial(x_new)
            if _is_conservative(F_new, F_approx, g_new, g_approx):
                break
            if state.inner_iterations >= settings.inner_iterations:
                logger.warning("第%d次迭代: 内迭代%d次后近似仍非保守 (F=%.6g, F̃=%.6g)",
                               state.iteration + 1, state.inner_iterations, F_new, F_approx)
                break
            _tighten(state, x_new, F_new, F_approx, g_new, g_approx)
            state.inner_iterations += 1
            x_new, F_approx, g_approx = _solve_subproblem(state, F, grad_F, g, grad_g, settings)

    state.max_change = float(np.max(np.abs(x_new - x))) if x.size else 0.0
    state.x2 = state.x1
    state.x1 = x
    state.x = x_new
    state.iteration += 1
    return x_new


@dataclass
class Evaluation:
    """目标与约束的一次评估"""
    F: float
    grad_F: np.ndarray
    g: float
    grad_g: np.ndarray
    design: DesignState
    statistics: ComplianceStatistics
    volume: float


def evaluate(problem: OptimizationProblem, s: np.ndarray,
             j_scale: Optional[float] = None, sigma_scale: Optional[float] = None) -> Evaluation:
    """
    计算 F = (α/J̄*)·J̄ + ((1−α)/σ_J*)·σ_J 与 g = V − V_max 及梯度

    j_scale/sigma_scale缺省时取问题中的 J̄*、σ_J*
    """
    lattice = problem.lattice
    W = problem.filter or build_filter(lattice, 0.0)
    curve = problem.penalty or PenalizationCurve(None)
    design = areas_from_design(s, W, curve, problem.a_min, problem.a_max)
    state = MemberState(problem.precision.mean, design.areas)
    try:
        system = assemble(lattice, state)
    except MechanismError as e:
        logger.error("刚度矩阵分解失败，当前设计: %s", np.array2string(np.asarray(s), threshold=50))
        e.iterate = np.asarray(s).copy()
        raise

    alpha = problem.alpha
    stats = compliance_statistics(lattice, state, problem.precision, design.dA_dfiltered,
                                  system, problem.gradient_path, need_std_gradient=alpha < 1.0)
    j_scale = j_scale if j_scale is not None else problem.j_star
    sigma_scale = sigma_scale if sigma_scale is not None else problem.sigma_star

    F = 0.0
    grad_hat = np.zeros(lattice.n_members)
    if alpha > 0.0:
        if not j_scale:
            raise InvalidArgumentError("α>0时需要J̄*")
        F += alpha / j_scale * stats.mean
        grad_hat += alpha / j_scale * stats.grad_mean
    if alpha < 1.0:
        if not sigma_scale:
            raise InvalidArgumentError("α<1时需要σ_J*")
        F += (1.0 - alpha) / sigma_scale * stats.std_dev
        grad_hat += (1.0 - alpha) / sigma_scale * stats.grad_std

    vol = design.volume(lattice.lengths)
    return Evaluation(F, W.chain(grad_hat), vol - problem.v_max,
                      volume_gradient(lattice, design, W), design, stats, vol)


class RobustOptimizer:
    """鲁棒拓扑优化器"""

    def __init__(self, problem: OptimizationProblem):
        self.problem = problem
        self.settings = problem.settings
        self.history: List[Dict[str, float]] = []
        self.result: Optional[OptimizationResult] = None

    def _scales(self, s0: np.ndarray) -> Tuple[Optional[float], Optional[float]]:
        """目标归一化常数；α∈{0,1}且未给定时取初始设计的值"""
        problem = self.problem
        j_scale, sigma_scale = problem.j_star, problem.sigma_star
        if 0.0 < problem.alpha < 1.0:
            if j_scale is None or sigma_scale is None:
                raise InvalidArgumentError(
                    f"α={problem.alpha}需要归一化常数J̄*与σ_J*（先运行α=1与α=0，或在配置中给出）")
            return j_scale, sigma_scale
        if (problem.alpha == 1.0 and j_scale is None) or (problem.alpha == 0.0 and sigma_scale is None):
            stats = evaluate(problem, s0, 1.0, 1.0).statistics
            if problem.alpha == 1.0:
                j_scale = stats.mean if stats.mean > 0 else 1.0
            else:
                if stats.std_dev == 0.0:
                    logger.warning("初始设计σ_J = 0，归一化常数取1")
                sigma_scale = stats.std_dev if stats.std_dev > 0 else 1.0
        return j_scale, sigma_scale

    def run(self, s0: Optional[np.ndarray] = None, max_iters: Optional[int] = None,
            tol: Optional[float] = None) -> OptimizationResult:
        problem = self.problem
        lattice = problem.lattice
        max_iters = max_iters if max_iters is not None else self.settings.max_iterations
        tol = tol if tol is not None else self.settings.tolerance
        start = time.perf_counter()

        W = problem.filter or build_filter(lattice, 0.0)
        curve = problem.penalty or PenalizationCurve(None)
        if s0 is None:
            s0 = initial_design(lattice, W, curve, problem.a_min, problem.a_max, problem.v_max)
        s = np.clip(np.asarray(s0, dtype=float), 0.0, 1.0)
        j_scale, sigma_scale = self._scales(s)

        state = MmaState.start(s)
        converged = False
        self.history = []
        ev = evaluate(problem, s, j_scale, sigma_scale)
        trial = ev

        def evaluate_trial(x: np.ndarray) -> Tuple[float, float]:
            nonlocal trial
            trial = evaluate(problem, x, j_scale, sigma_scale)
            return trial.F, trial.g

        for iteration in range(1, max_iters + 1):
            s = mma_step(state, ev.F, ev.grad_F, ev.g, ev.grad_g, self.settings, evaluate_trial)
            self.history.append({
                "iteration": iteration,
                "mean_compliance": ev.statistics.mean,
                "std_compliance": ev.statistics.std_dev,
                "objective": ev.F,
                "volume": ev.volume,
                "max_change": state.max_change,
            })
            logger.info("第%d次迭代: J̄=%.6g σ_J=%.6g F=%.6g V=%.6g Δs=%.3e 内迭代%d", iteration,
                        ev.statistics.mean, ev.statistics.std_dev, ev.F, ev.volume, state.max_change,
                        state.inner_iterations)
            # 最后一次试探即为接受的设计
            ev = trial
            if state.max_change < tol:
                converged = True
                break
        else:
            logger.warning("达到最大迭代次数%d，未收敛（最大变化%.3e）", max_iters, state.max_change)

        final = ev
        j_star = problem.j_star if problem.j_star is not None else (
            final.statistics.mean if problem.alpha == 1.0 else None)
        sigma_star = problem.sigma_star if problem.sigma_star is not None else (
            final.statistics.std_dev if problem.alpha == 0.0 else None)

        self.result = OptimizationResult(problem.alpha, final.design, final.statistics, final.volume,
                                         self.history, len(self.history), converged,
                                         time.perf_counter() - start, j_star, sigma_star)
        return self.result

    def print_solution_stats(self):
        """打印求解统计信息"""
        if self.result is None:
            print("❌ 尚未求解")
            return
        r = self.result
        print(f"\n📊 优化结果 (α = {r.alpha}):")
        print(f"   期望柔度 J̄: {r.statistics.mean:.6g}")
        print(f"   柔度标准差 σ_J: {r.statistics.std_dev:.6g}")
        print(f"   体积: {r.volume:.6g} / {self.problem.v_max:.6g}")
        print(f"   迭代次数: {r.iterations}  {'✅ 已收敛' if r.converged else '⚠️ 达到迭代上限'}")


def optimize(problem: OptimizationProblem, s0: Optional[np.ndarray] = None,
             max_iters: Optional[int] = None, tol: Optional[float] = None) -> OptimizationResult:
    return RobustOptimizer(problem).run(s0, max_iters, tol)


@dataclass
class ParetoPoint:
    """帕累托前沿上的一点"""
    alpha: float
    mean: float
    std_dev: float
    volume: float
    iterations: int
    converged: bool
    dominated: bool = False


def _run_alpha(problem: OptimizationProblem) -> OptimizationResult:
    return optimize(problem)


def mark_dominated(points: List[ParetoPoint]) -> List[ParetoPoint]:
    """标记被其他点支配的前沿点"""
    for p in points:
        p.dominated = any(
            q is not p and q.mean <= p.mean and q.std_dev <= p.std_dev
            and (q.mean < p.mean or q.std_dev < p.std_dev)
            for q in points)
    return points


def check_sigma_star(std_result: OptimizationResult,
                     mean_result: Optional[OptimizationResult] = None) -> float:
    """α=0的解作为σ_J*前的检查：须已收敛，且σ_J不超过α=1设计的σ_J"""
    sigma_star = std_result.statistics.std_dev
    if not std_result.converged:
        raise OptimizationAbortError(
            f"α=0在{std_result.iterations}次迭代内未收敛，σ_J* = {sigma_star:.6g}不可作为归一化常数")
    if mean_result is not None:
        limit = mean_result.statistics.std_dev * (1.0 + MMAConfig.FRONT_TOLERANCE)
        if sigma_star > limit:
            raise OptimizationAbortError(
                f"α=0的σ_J = {sigma_star:.6g}大于α=1设计的σ_J = {mean_result.statistics.std_dev:.6g}")
    return sigma_star


def pareto_sweep(problem: OptimizationProblem, alphas: Sequence[float],
                 threads: Optional[int] = None) -> Tuple[List[ParetoPoint], Dict[float, OptimizationResult]]:
    """
    扫描α得到帕累托前沿

    先运行α=1与α=0确定J̄*与σ_J*，其余α并行求解
    """
    alphas = [float(a) for a in alphas]
    if 1.0 not in alphas or 0.0 not in alphas:
        raise InvalidArgumentError("帕累托扫描的α列表必须包含1与0（用于确定归一化常数）")
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise InvalidArgumentError(f"α必须在[0,1]内: {alphas}")

    results: Dict[float, OptimizationResult] = {}
    results[1.0] = optimize(replace(problem, alpha=1.0, j_star=None, sigma_star=None))
    results[0.0] = optimize(replace(problem, alpha=0.0, j_star=None, sigma_star=None))
    j_star = results[1.0].statistics.mean
    sigma_star = check_sigma_star(results[0.0], results[1.0])
    if not sigma_star > 0:
        raise InvalidArgumentError("σ_J* = 0（确定性场），无法进行帕累托扫描")

    rest = sorted({a for a in alphas if 0.0 < a < 1.0}, reverse=True)
    problems = [replace(problem, alpha=a, j_star=j_star, sigma_star=sigma_star) for a in rest]
    workers = min(get_thread_count(threads), max(len(problems), 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(_run_alpha, problems))
    else:
        solved = [_run_alpha(p) for p in problems]
    results.update(zip(rest, solved))

    points = []
    for a in sorted(results, reverse=True):
        r = results[a]
        r.j_star, r.sigma_star = j_star, sigma_star
        points.append(ParetoPoint(a, r.statistics.mean, r.statistics.std_dev, r.volume,
                                  r.iterations, r.converged))
    return mark_dominated(points), results
