"""
结果可视化和导出功能
优化历史、设计、随机场样本、帕累托前沿与惩罚曲线的CSV/JSON/VTK导出及PNG图表
"""
import logging
from typing import List, Dict, Any, Optional, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.collections import LineCollection
import numpy as np
import pandas as pd
import seaborn as sns

from config import PathConfig, SystemConfig, RegularizationConfig
from models import Lattice, DesignState, OptimizationResult
from lattice_io import save_lattice
from utils import FileUtils, TableUtils

logger = logging.getLogger(__name__)

# 面积直方图的分箱数
HISTOGRAM_BINS = 20
PNG_DPI = 150


def render_vtk(lattice: Lattice, scalars: Dict[str, np.ndarray], title: str = "latro lattice") -> str:
    """VTK旧版ASCII格式：POLYDATA线段与逐杆CELL_DATA标量"""
    positions = lattice.positions
    points = np.zeros((lattice.n_joints, 3))
    points[:, :lattice.dimension] = positions
    conn = lattice.connectivity

    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA",
             f"POINTS {lattice.n_joints} double"]
    lines += [" ".join(f"{x:.12g}" for x in p) for p in points]
    lines.append(f"LINES {lattice.n_members} {3 * lattice.n_members}")
    lines += [f"2 {a} {b}" for a, b in conn]
    if scalars:
        lines.append(f"CELL_DATA {lattice.n_members}")
        for name, values in scalars.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (lattice.n_members,):
                raise ValueError(f"标量{name}长度{values.shape}与杆件数{lattice.n_members}不符")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [f"{v:.12g}" for v in values]
    return "\n".join(lines) + "\n"


def write_vtk(lattice: Lattice, file_path: str, scalars: Dict[str, np.ndarray],
              title: str = "latro lattice") -> str:
    return FileUtils.save_text_file(render_vtk(lattice, scalars, title), file_path)


def area_histogram(design: DesignState, bins: int = HISTOGRAM_BINS,
                   s_star: float = RegularizationConfig.S_STAR) -> pd.DataFrame:
    """惩罚后密度（归一化截面积）的分箱计数，标出s*以下的箱"""
    counts, edges = np.histogram(design.penalized, bins=bins, range=(0.0, 1.0))
    return pd.DataFrame({
        "bin_lower": edges[:-1],
        "bin_upper": edges[1:],
        "count": counts,
        "below_s_star": edges[1:] <= s_star + 1e-12,
    })


class ResultVisualizer:
    """结果可视化器"""

    def __init__(self, output_dir: str = PathConfig.OUTPUT_DIR, formats: Optional[Sequence[str]] = None):
        self.output_dir = output_dir
        self.formats = list(formats) if formats is not None else list(SystemConfig.OUTPUT_FORMATS)
        self.written: List[str] = []

        plt.rcParams['font.sans-serif'] = ['SimHei', 'Arial Unicode MS', 'DejaVu Sans']
        plt.rcParams['axes.unicode_minus'] = False
        sns.set_style("whitegrid")

    def output_path(self, filename: str) -> str:
        FileUtils.ensure_directory(self.output_dir)
        path = PathConfig.get_output_file(self.output_dir, filename)
        self.written.append(path)
        return path

    def _wants(self, fmt: str) -> bool:
        return fmt in self.formats

    def _save_figure(self, fig, filename: str) -> str:
        path = self.output_path(filename)
        fig.savefig(path, dpi=PNG_DPI, bbox_inches='tight')
        plt.close(fig)
        logger.info("图表已保存: %s", path)
        return path

    def export_summary(self, summary: Dict[str, Any], filename: str = PathConfig.SUMMARY_FILE) -> Optional[str]:
        if not self._wants("json"):
            return None
        return FileUtils.save_json(summary, self.output_path(filename))

    def export_history(self, history: List[Dict[str, float]]) -> Optional[str]:
        if not self._wants("csv"):
            return None
        columns = ["iteration", "mean_compliance", "std_compliance", "objective", "volume", "max_change"]
        return TableUtils.save_csv(history, self.output_path(PathConfig.HISTORY_FILE), columns)

    def export_design(self, lattice: Lattice, design: DesignState) -> List[str]:
        """最终设计：带逐杆数据的JSON点阵与VTK"""
        paths = []
        member_data = {"s": design.raw, "filtered": design.filtered,
                       "density": design.penalized, "area": design.areas}
        if self._wants("json"):
            paths.append(save_lattice(lattice, self.output_path(PathConfig.DESIGN_FILE), member_data))
        if self._wants("vtk"):
            paths.append(write_vtk(lattice, self.output_path(PathConfig.DESIGN_VTK_FILE),
                                   {"area": design.areas, "density": design.penalized,
                                    "s": design.raw, "filtered": design.filtered},
                                   "latro design"))
        return paths

    def export_area_histogram(self, design: DesignState, s_star: float = RegularizationConfig.S_STAR,
                              alpha: Optional[float] = None) -> pd.DataFrame:
        table = area_histogram(design, s_star=s_star)
        if self._wants("csv"):
            TableUtils.save_csv(table, self.output_path(PathConfig.HISTOGRAM_FILE))
        if self._wants("png"):
            fig, ax = plt.subplots(figsize=(6, 4))
            sns.histplot(design.penalized, bins=HISTOGRAM_BINS, binrange=(0.0, 1.0), ax=ax)
            ax.axvline(s_star, color="k", linestyle="--", linewidth=1)
            ax.set_xlabel("归一化截面积 s̃")
            ax.set_ylabel("杆件数")
            ax.set_title("截面积分布" + (f" (α = {alpha:g})" if alpha is not None else ""))
            self._save_figure(fig, "area_histogram.png")
        return table

    def plot_lattice_density(self, lattice: Lattice, design: DesignState) -> Optional[str]:
        """二维设计图：线宽与截面积成正比"""
        if not self._wants("png") or lattice.dimension != 2:
            return None
        segments = lattice.positions[lattice.connectivity]
        widths = 0.2 + 3.0 * design.penalized
        fig, ax = plt.subplots(figsize=(8, 8 * np.ptp(lattice.positions[:, 1]) /
                                        max(np.ptp(lattice.positions[:, 0]), 1e-12) + 0.5))
        ax.add_collection(LineCollection(segments, linewidths=widths,
                                         colors=plt.cm.Greys(0.3 + 0.7 * design.penalized)))
        ax.autoscale()
        ax.set_aspect("equal")
        ax.axis("off")
        return self._save_figure(fig, "design.png")

    def export_fields(self, lattice: Lattice, mean: np.ndarray, samples: np.ndarray,
                      statistics: Dict[str, Any]) -> List[str]:
        """随机场样本：CSV（每列一个样本）、VTK标量与经验统计JSON"""
        paths = []
        samples = np.atleast_2d(samples)
        values = {f"c{'xyz'[a]}": lattice.centroids[:, a] for a in range(lattice.dimension)}
        values["mean"] = mean
        values.update({f"sample_{k}": samples[k] for k in range(samples.shape[0])})
        if self._wants("csv"):
            paths.append(TableUtils.save_csv(TableUtils.member_table(values),
                                             self.output_path(PathConfig.FIELDS_CSV_FILE)))
        if self._wants("vtk"):
            scalars = {"mean": mean}
            scalars.update({f"sample_{k}": samples[k] for k in range(samples.shape[0])})
            paths.append(write_vtk(lattice, self.output_path(PathConfig.FIELDS_VTK_FILE), scalars,
                                   "latro random field samples"))
        if self._wants("json"):
            paths.append(FileUtils.save_json(statistics, self.output_path(PathConfig.FIELD_STATS_FILE)))
        if self._wants("png") and lattice.dimension == 2:
            fig, ax = plt.subplots(figsize=(8, 5))
            segments = lattice.positions[lattice.connectivity]
            collection = LineCollection(segments, array=samples[0], cmap="viridis", linewidths=1.5)
            ax.add_collection(collection)
            fig.colorbar(collection, ax=ax, label="E")
            ax.autoscale()
            ax.set_aspect("equal")
            ax.axis("off")
            paths.append(self._save_figure(fig, "field_sample.png"))
        return paths

    def export_validation(self, report: Dict[str, Any], samples: Optional[np.ndarray] = None) -> List[str]:
        paths = []
        if self._wants("json"):
            paths.append(FileUtils.save_json(report, self.output_path(PathConfig.VALIDATION_FILE)))
        if samples is not None and self._wants("csv"):
            paths.append(TableUtils.save_csv({"sample": np.arange(len(samples)), "compliance": samples},
                                             self.output_path(PathConfig.SAMPLES_FILE)))
        return paths

    def export_front(self, points) -> List[str]:
        """帕累托前沿 (α, J̄, σ_J)"""
        paths = []
        table = pd.DataFrame([{
            "alpha": p.alpha, "mean_compliance": p.mean, "std_compliance": p.std_dev,
            "volume": p.volume, "iterations": p.iterations, "converged": p.converged,
            "dominated": p.dominated,
        } for p in points])
        if self._wants("csv"):
            paths.append(TableUtils.save_csv(table, self.output_path(PathConfig.FRONT_FILE)))
        if self._wants("png"):
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.plot(table["mean_compliance"], table["std_compliance"], "o-")
            for _, row in table.iterrows():
                ax.annotate(f"α={row['alpha']:g}", (row["mean_compliance"], row["std_compliance"]),
                            textcoords="offset points", xytext=(4, 4), fontsize=8)
            ax.set_xlabel("期望柔度 J̄")
            ax.set_ylabel("柔度标准差 σ_J")
            ax.set_title("帕累托前沿")
            paths.append(self._save_figure(fig, "pareto_front.png"))
        return paths

    def export_penalty_curve(self, curve, count: int = 201) -> List[str]:
        paths = []
        s, value, slope = curve.sample(count)
        table = pd.DataFrame({"s": s, "penalized": value, "derivative": slope})
        if self._wants("csv"):
            paths.append(TableUtils.save_csv(table, self.output_path(PathConfig.PENALTY_FILE)))
        if self._wants("png"):
            fig, ax = plt.subplots(figsize=(5, 5))
            ax.plot(s, value, label="s̃(ŝ)")
            ax.plot([0, 1], [0, 1], "k:", linewidth=0.8, label="恒等")
            if curve.control_points is not None:
                ax.plot(curve.control_points[:, 0], curve.control_points[:, 1], "s--",
                        color="gray", markersize=4, label="控制点")
            ax.set_xlabel("过滤密度 ŝ")
            ax.set_ylabel("惩罚密度 s̃")
            ax.legend()
            paths.append(self._save_figure(fig, "penalty_curve.png"))
        return paths

    def export_result(self, lattice: Lattice, result: OptimizationResult, summary: Dict[str, Any],
                      s_star: float = RegularizationConfig.S_STAR) -> List[str]:
        """单次优化的全部输出"""
        self.export_history(result.history)
        self.export_summary(summary)
        self.export_design(lattice, result.design)
        self.export_area_histogram(result.design, s_star, result.alpha)
        self.plot_lattice_density(lattice, result.design)
        return list(self.written)
