"""
鲁棒点阵拓扑优化主程序
读取JSON运行配置，执行优化、随机场采样、蒙特卡洛验证、帕累托扫描与惩罚曲线导出
"""
import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Dict, Any, Optional, List

import numpy as np

from config import (PathConfig, SystemConfig, FieldConfig, MMAConfig, RegularizationConfig,
                    get_thread_count)
from models import (Lattice, RandomFieldSpec, LengthScale, Anisotropy, MMASettings, MemberState,
                    OptimizationProblem, OptimizationResult, GradientPath)
from lattice_generator import LatticeGenerator
from lattice_io import load_lattice, load_member_data, apply_boundary_conditions, selector_counts
from random_field import build_field_operator, sample_statistics, PrecisionOperator
from regularization import build_filter, PenalizationCurve, areas_from_design, initial_design
from robust_statistics import compliance_statistics, monte_carlo_validate
from mma_optimizer import RobustOptimizer, pareto_sweep, check_sigma_star
from truss_solver import assemble
from validators import RunConfigValidator
from visualization import ResultVisualizer
from utils import FileUtils, ConfigUtils
from errors import LatroError, ConfigError, InvalidArgumentError

logger = logging.getLogger(__name__)

# 退出码
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ITERATION_CAP = 2


def resolve_config_path(path: str) -> str:
    """配置路径，不存在时在预设目录中查找"""
    if os.path.exists(path):
        return path
    preset = PathConfig.get_preset_file(path)
    if os.path.exists(preset):
        return preset
    raise ConfigError(f"配置文件不存在: {path}")


def build_field_spec(section: Dict[str, Any], lattice: Lattice) -> RandomFieldSpec:
    """由field节创建随机场参数"""
    dimension = int(section.get("dimension", lattice.dimension))
    mean = np.asarray(section["mean"], dtype=float)
    if "uncorrelated" in section:
        return RandomFieldSpec(mean, float(section["uncorrelated"]), dimension=dimension,
                               uncorrelated=True)

    if "nu" in section:
        beta = RandomFieldSpec.beta_from_nu(float(section["nu"]), dimension)
    else:
        beta = int(section.get("beta", FieldConfig.DEFAULT_BETA))

    ell = section.get("length_scale", 1.0)
    if isinstance(ell, dict):
        length_scale = LengthScale(float(ell["a"]), float(ell.get("b", 0.0)),
                                   ConfigUtils.axis_index(ell.get("axis", 0)))
    else:
        length_scale = LengthScale(float(ell))

    anisotropy = None
    if "anisotropy" in section:
        aniso = section["anisotropy"]
        direction = np.asarray(aniso["direction"], dtype=float)
        direction = direction / np.linalg.norm(direction)
        anisotropy = Anisotropy(tuple(direction.tolist()), float(aniso["d_par"]), float(aniso["d_perp"]))

    return RandomFieldSpec(mean, float(section["sigma"]), beta, length_scale, anisotropy, dimension)


def build_penalty(section: Dict[str, Any], default: Optional[str] = None) -> PenalizationCurve:
    """由regularization节创建惩罚曲线"""
    penalty = section.get("penalty", default)
    if isinstance(penalty, dict):
        return PenalizationCurve([tuple(p) for p in penalty["control_points"]],
                                 section.get("s_star", RegularizationConfig.S_STAR))
    return PenalizationCurve.from_preset(penalty)


class LatticeOptimizationApp:
    """鲁棒点阵拓扑优化主类"""

    def __init__(self, config_path: Optional[str], command: str, seed: Optional[int] = None,
                 threads: Optional[int] = None, output_dir: Optional[str] = None,
                 alphas: Optional[List[float]] = None):
        self.command = command
        self.seed_override = seed
        self.threads = get_thread_count(threads)
        self.alphas_override = alphas
        self.config_path = resolve_config_path(config_path) if config_path else None
        self.config = self.load_config()

        output = self.config.get("output", {})
        self.output_dir = output_dir or output.get("directory", PathConfig.OUTPUT_DIR)
        self.seed = seed if seed is not None else output.get("seed", SystemConfig.RANDOM_SEED)
        self.record_timing = output.get("record_timing", False)
        self.debug_matrices = output.get("debug_matrices", False)
        self.visualizer = ResultVisualizer(self.output_dir, output.get("formats"))
        self.lattice: Optional[Lattice] = None

    def load_config(self) -> Dict[str, Any]:
        """读取并验证配置，失败时抛出ConfigError"""
        if self.config_path is None:
            config, text = {}, None
        else:
            text = FileUtils.read_text_file(self.config_path)
            config = FileUtils.parse_json(text, self.config_path)
        ok, errors = RunConfigValidator(text).validate(config, self.command, self.seed_override,
                                                       self.alphas_override)
        if not ok:
            raise ConfigError("配置验证失败:\n  " + "\n  ".join(errors))
        return config

    def _resolve(self, path: str) -> str:
        if os.path.isabs(path) or self.config_path is None:
            return path
        return os.path.join(os.path.dirname(self.config_path), path)

    def build_lattice(self) -> Lattice:
        section = self.config["lattice"]
        if "file" in section:
            lattice = load_lattice(self._resolve(section["file"]))
        else:
            lattice = LatticeGenerator().generate(section)
        bc = self.config.get("bc")
        if bc:
            counts = selector_counts(lattice, bc)
            logger.info("边界条件选择器命中节点数: %s", counts)
            lattice = apply_boundary_conditions(lattice, bc)
        print(f"点阵: {lattice.n_joints}个节点, {lattice.n_members}根杆件 (d = {lattice.dimension})")
        self.lattice = lattice
        return lattice

    def build_problem(self, alpha: Optional[float] = None) -> OptimizationProblem:
        lattice = self.lattice or self.build_lattice()
        spec = build_field_spec(self.config["field"], lattice)
        operator = build_field_operator(spec, lattice)
        opt = self.config["optimization"]
        reg = self.config.get("regularization", {})

        settings = MMASettings(max_iterations=opt.get("max_iters", MMAConfig.MAX_ITERATIONS),
                               tolerance=opt.get("tol", MMAConfig.TOLERANCE), **opt.get("mma", {}))
        return OptimizationProblem(
            lattice=lattice,
            field_spec=spec,
            precision=operator,
            v_max=float(opt["v_max"]),
            a_max=float(opt["a_max"]),
            alpha=float(alpha if alpha is not None else opt.get("alpha", 1.0)),
            a_min=opt.get("a_min"),
            filter=build_filter(lattice, float(reg.get("filter_radius", 0.0))),
            penalty=build_penalty(reg),
            j_star=opt.get("j_star"),
            sigma_star=opt.get("sigma_star"),
            gradient_path=GradientPath(opt.get("gradient_path", GradientPath.ADJOINT.value)),
            settings=settings,
        )

    def _dump_matrices(self, problem: OptimizationProblem, areas: np.ndarray):
        if not self.debug_matrices:
            return
        system = assemble(problem.lattice, MemberState(problem.precision.mean, areas))
        system.dump(self.visualizer.output_path(PathConfig.STIFFNESS_MTX_FILE))
        if isinstance(problem.precision, PrecisionOperator):
            problem.precision.dump(self.visualizer.output_path(PathConfig.PRECISION_MTX_FILE))

    def _design_summary(self, problem: OptimizationProblem, result: OptimizationResult) -> Dict[str, Any]:
        s_star = problem.penalty.s_star if problem.penalty is not None else RegularizationConfig.S_STAR
        summary = result.summary(self.record_timing)
        summary.update({
            "name": self.config.get("name"),
            "n_joints": problem.lattice.n_joints,
            "n_members": problem.lattice.n_members,
            "v_max": problem.v_max,
            "n_below_s_star": int(np.sum(result.design.filtered < s_star)),
            "n_intermediate": int(np.sum((result.design.penalized > 0.05)
                                         & (result.design.penalized < s_star))),
        })
        return summary

    def normalize(self, problem: OptimizationProblem) -> OptimizationProblem:
        """缺少J̄*或σ_J*时先求解α=1与α=0"""
        j_star, sigma_star = problem.j_star, problem.sigma_star
        mean_result = None
        if j_star is None:
            print("⚠️ 未给出J̄*，先求解α=1")
            mean_result = RobustOptimizer(replace(problem, alpha=1.0, j_star=None, sigma_star=None)).run()
            j_star = mean_result.j_star
        if sigma_star is None:
            print("⚠️ 未给出σ_J*，先求解α=0")
            std_result = RobustOptimizer(replace(problem, alpha=0.0, j_star=None, sigma_star=None)).run()
            sigma_star = check_sigma_star(std_result, mean_result)
        if not sigma_star > 0:
            raise InvalidArgumentError("σ_J* = 0（确定性场），α∈(0,1)的归一化无定义")
        print(f"   J̄* = {j_star:.6g}, σ_J* = {sigma_star:.6g}")
        return replace(problem, j_star=j_star, sigma_star=sigma_star)

    def run_optimize(self) -> int:
        print("=" * 60)
        print("鲁棒拓扑优化")
        print("=" * 60)
        problem = self.build_problem()
        if 0.0 < problem.alpha < 1.0 and (problem.j_star is None or problem.sigma_star is None):
            problem = self.normalize(problem)
        optimizer = RobustOptimizer(problem)
        result = optimizer.run()
        optimizer.print_solution_stats()

        summary = self._design_summary(problem, result)
        self.visualizer.export_result(problem.lattice, result, summary, problem.penalty.s_star)
        self._dump_matrices(problem, result.design.areas)
        self.analyze_result(summary)
        return EXIT_OK if result.converged else EXIT_ITERATION_CAP

    def run_sample_field(self, count: int) -> int:
        print("=" * 60)
        print(f"随机场采样 (N = {count})")
        print("=" * 60)
        if count == 0:
            print("⚠️ 样本数为0，不写出任何文件")
            return EXIT_OK
        lattice = self.build_lattice()
        spec = build_field_spec(self.config["field"], lattice)
        operator = build_field_operator(spec, lattice)
        rng = np.random.default_rng(self.seed)
        samples = operator.sample(rng, size=count)

        centroids = lattice.centroids
        extent = np.ptp(centroids, axis=0)
        extent = extent[extent > 0]
        margin = float(np.min(spec.length_scale.evaluate(centroids)))
        if extent.size:
            margin = min(margin, 0.2 * float(extent.min()))
        stats = sample_statistics(samples, centroids, margin)
        stats.update({"sigma": spec.sigma, "beta": spec.beta, "nu": spec.nu,
                      "dimension": spec.dimension, "seed": self.seed})
        self.visualizer.export_fields(lattice, operator.mean, samples, stats)
        if self.debug_matrices and isinstance(operator, PrecisionOperator):
            operator.dump(self.visualizer.output_path(PathConfig.PRECISION_MTX_FILE))

        print(f"\n📊 样本统计:")
        print(f"   目标标准差 σ: {spec.sigma:.6g}  (ν = {spec.nu:g}, β = {spec.beta})")
        if "marginal_std" in stats:
            print(f"   经验边缘标准差: {stats['marginal_std']:.6g}")
            if stats.get("interior_marginal_std") is not None:
                print(f"   内部({stats['n_interior']}根杆件)经验边缘标准差: "
                      f"{stats['interior_marginal_std']:.6g}")
        print(f"✅ 输出目录: {self.output_dir}")
        return EXIT_OK

    def run_validate(self, count: int, design_path: Optional[str] = None,
                     optimize_first: bool = False) -> int:
        print("=" * 60)
        print(f"蒙特卡洛验证 (N = {count})")
        print("=" * 60)
        problem = self.build_problem()
        lattice = problem.lattice
        W = problem.filter
        curve = problem.penalty
        if design_path:
            s = load_member_data(design_path, "s")
        elif optimize_first:
            s = RobustOptimizer(problem).run().s
        else:
            s = initial_design(lattice, W, curve, problem.a_min, problem.a_max, problem.v_max)
        design = areas_from_design(s, W, curve, problem.a_min, problem.a_max)
        operator = problem.precision

        stats = compliance_statistics(lattice, MemberState(operator.mean, design.areas), operator)
        mc = monte_carlo_validate(lattice, design.areas, operator, count, self.seed, self.threads)

        def relative(a: float, b: float) -> float:
            return abs(a - b) / abs(b) if b != 0 else abs(a - b)

        report = {
            "name": self.config.get("name"),
            "n_samples": count,
            "seed": self.seed,
            "perturbation": {"mean": stats.mean, "std_dev": stats.std_dev},
            "monte_carlo": mc.to_dict(),
            "relative_difference": {"mean": relative(stats.mean, mc.mean),
                                    "std_dev": relative(stats.std_dev, mc.std_dev)},
        }
        self.visualizer.export_validation(report, mc.samples)

        print(f"\n📊 一阶摄动: J̄ = {stats.mean:.6g}, σ_J = {stats.std_dev:.6g}")
        print(f"📊 蒙特卡洛: J̄ = {mc.mean:.6g} ± {mc.mean_stderr:.2g}, "
              f"σ_J = {mc.std_dev:.6g} ± {mc.std_stderr:.2g}")
        print(f"   相对差异: 均值 {report['relative_difference']['mean']:.2%}, "
              f"标准差 {report['relative_difference']['std_dev']:.2%}")
        if mc.n_rejected:
            print(f"⚠️ 拒绝样本数: {mc.n_rejected}")
        return EXIT_OK

    def run_pareto(self) -> int:
        alphas = self.alphas_override or self.config["optimization"]["alphas"]
        print("=" * 60)
        print(f"帕累托扫描 α = {alphas}")
        print("=" * 60)
        problem = self.build_problem(alpha=1.0)
        points, results = pareto_sweep(problem, alphas, self.threads)
        self.visualizer.export_front(points)
        self.visualizer.export_summary({
            "name": self.config.get("name"),
            "j_star": results[1.0].j_star,
            "sigma_star": results[0.0].sigma_star,
            "points": [results[p.alpha].summary(self.record_timing) | {"dominated": p.dominated}
                       for p in points],
        })

        print(f"\n📊 J̄* = {results[1.0].j_star:.6g}, σ_J* = {results[0.0].sigma_star:.6g}")
        print(f"{'α':>6} {'J̄':>12} {'σ_J':>12} {'迭代':>6}")
        for p in points:
            flag = "⚠️" if p.dominated or not p.converged else "✅"
            print(f"{p.alpha:>6.2f} {p.mean:>12.6g} {p.std_dev:>12.6g} {p.iterations:>6} {flag}")
        return EXIT_OK if all(p.converged for p in points) else EXIT_ITERATION_CAP

    def run_penalty_curve(self) -> int:
        reg = self.config.get("regularization", {})
        curve = build_penalty(reg, default="default")
        paths = self.visualizer.export_penalty_curve(curve)
        print(f"✅ 惩罚曲线已导出: {', '.join(paths)}")
        return EXIT_OK

    def analyze_result(self, summary: Dict[str, Any]):
        """打印设计报告"""
        print("\n" + "=" * 50)
        print("结果分析")
        print("=" * 50)
        print(f"\n📊 基本信息:")
        print(f"  配置: {summary.get('name') or self.config_path}")
        print(f"  点阵: {summary['n_joints']}个节点, {summary['n_members']}根杆件")
        print(f"  α = {summary['alpha']}")
        print(f"\n📈 柔度统计:")
        print(f"  期望柔度 J̄: {summary['mean_compliance']:.6g}")
        print(f"  柔度标准差 σ_J: {summary['std_compliance']:.6g}")
        if summary.get("j_star"):
            print(f"  J̄*: {summary['j_star']:.6g}")
        if summary.get("sigma_star"):
            print(f"  σ_J*: {summary['sigma_star']:.6g}")
        print(f"\n⚖️ 体积: {summary['volume']:.6g} / {summary['v_max']:.6g}")
        print(f"  s*以下杆件数: {summary['n_below_s_star']}")
        print(f"  中间密度杆件数: {summary['n_intermediate']}")
        if summary["converged"]:
            print(f"\n✅ 已收敛 ({summary['iterations']}次迭代)")
        else:
            print(f"\n⚠️ 达到迭代上限 ({summary['iterations']}次迭代)")
        print(f"  输出目录: {self.output_dir}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latro", description='随机场杨氏模量下的桁架点阵鲁棒拓扑优化')
    parser.add_argument('--threads', type=int, default=None, help='并行线程数（默认为硬件并行度）')
    parser.add_argument('--output-dir', default=None, help='输出目录（覆盖配置）')
    parser.add_argument('--seed', type=int, default=None, help='随机种子（覆盖配置）')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='日志详细程度')

    sub = parser.add_subparsers(dest='command', required=True)
    p = sub.add_parser('optimize', help='运行鲁棒优化')
    p.add_argument('config', help='配置文件路径或预设名')

    p = sub.add_parser('sample-field', help='采样随机场')
    p.add_argument('config', help='配置文件路径或预设名')
    p.add_argument('-n', '--count', type=int, default=1, help='样本数')

    p = sub.add_parser('validate', help='蒙特卡洛验证一阶摄动统计量')
    p.add_argument('config', help='配置文件路径或预设名')
    p.add_argument('-n', '--count', type=int, default=10000, help='样本数')
    p.add_argument('--design', default=None, help='设计文件（design.json）')
    p.add_argument('--optimize', action='store_true', help='先优化再验证最优设计')

    p = sub.add_parser('pareto', help='帕累托前沿扫描')
    p.add_argument('config', help='配置文件路径或预设名')
    p.add_argument('--alphas', type=float, nargs='+', default=None, help='α列表（需包含0与1）')

    p = sub.add_parser('penalty-curve', help='导出惩罚曲线')
    p.add_argument('config', nargs='?', default=None, help='配置文件路径或预设名')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主函数，返回退出码"""
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    try:
        if getattr(args, 'count', 0) is not None and getattr(args, 'count', 0) < 0:
            raise ConfigError(f"样本数不能为负: {args.count}")
        alphas = getattr(args, 'alphas', None)
        app = LatticeOptimizationApp(args.config, args.command, args.seed, args.threads,
                                     args.output_dir, alphas)
        if args.command == 'optimize':
            return app.run_optimize()
        if args.command == 'sample-field':
            return app.run_sample_field(args.count)
        if args.command == 'validate':
            return app.run_validate(args.count, args.design, args.optimize)
        if args.command == 'pareto':
            return app.run_pareto()
        return app.run_penalty_curve()

    except KeyboardInterrupt:
        print("\n用户中断操作")
        return EXIT_ERROR
    except (LatroError, ValueError) as e:
        print(f"❌ {e}")
        return EXIT_ERROR
    except Exception as e:
        print(f"程序运行出错: {e}")
        import traceback
        traceback.print_exc()
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
