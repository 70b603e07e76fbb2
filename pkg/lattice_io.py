"""
点阵读写与边界条件
JSON格式的点阵导入导出，以及按坐标谓词选择节点施加约束与荷载
"""
import logging
from typing import Dict, List, Any, Optional

import numpy as np

from models import Lattice
from lattice_generator import make_lattice
from utils import FileUtils, ConfigUtils
from errors import InvalidArgumentError

logger = logging.getLogger(__name__)

# 坐标比较的默认容差
SELECTOR_TOL = 1e-9


def lattice_to_dict(lattice: Lattice, member_data: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, Any]:
    """点阵转为可JSON序列化的字典"""
    data: Dict[str, Any] = {
        "dimension": lattice.dimension,
        "joints": lattice.positions.tolist(),
        "members": lattice.connectivity.tolist(),
        "fixed": [{"joint": j.id, "dofs": sorted(j.fixed_dofs)}
                  for j in lattice.joints if j.fixed_dofs],
        "loads": [{"dof": int(dof), "value": float(value)}
                  for dof, value in sorted(lattice.loads.items())],
    }
    if member_data:
        data["member_data"] = {k: np.asarray(v, dtype=float).tolist() for k, v in member_data.items()}
    return data


def lattice_from_dict(data: Dict[str, Any]) -> Lattice:
    """由字典创建点阵"""
    for key in ("joints", "members"):
        if key not in data:
            raise InvalidArgumentError(f"点阵文件缺少字段: {key}")
    positions = np.asarray(data["joints"], dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    dimension = int(data.get("dimension", positions.shape[1]))
    if positions.shape[1] != dimension:
        raise InvalidArgumentError(f"节点坐标维数{positions.shape[1]}与dimension={dimension}不符")
    fixed = {int(item["joint"]): [int(k) for k in item["dofs"]] for item in data.get("fixed", [])}
    loads: Dict[int, float] = {}
    for item in data.get("loads", []):
        dof = int(item["dof"])
        loads[dof] = loads.get(dof, 0.0) + float(item["value"])
    return make_lattice(positions, data["members"], fixed, loads)


def save_lattice(lattice: Lattice, file_path: str,
                 member_data: Optional[Dict[str, np.ndarray]] = None) -> str:
    return FileUtils.save_json(lattice_to_dict(lattice, member_data), file_path)


def load_lattice(file_path: str) -> Lattice:
    lattice = lattice_from_dict(FileUtils.load_json(file_path))
    logger.info("已读取点阵 %s: %d节点, %d杆件", file_path, lattice.n_joints, lattice.n_members)
    return lattice


def load_member_data(file_path: str, key: str = "s") -> np.ndarray:
    """读取设计文件中的逐杆数据"""
    data = FileUtils.load_json(file_path)
    try:
        return np.asarray(data["member_data"][key], dtype=float)
    except KeyError as e:
        raise InvalidArgumentError(f"文件{file_path}中没有逐杆数据'{key}'") from e


def _angle_in_range(angle: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """角度（度）是否落在[lo, hi]内，允许跨越360°"""
    span = (hi - lo) % 360.0
    if hi - lo >= 360.0:
        return np.ones_like(angle, dtype=bool)
    return (angle - lo) % 360.0 <= span + 1e-9


def select_joints(positions: np.ndarray, selector: Dict[str, Any]) -> np.ndarray:
    """
    按坐标谓词选择节点，各条件取交集

    point: 与给定坐标重合；axis + value: 某坐标等于给定值；
    box: {"min", "max"} 包含；cylinder: {"axis", "center", "radius_range", "angle_range"}
    """
    positions = np.atleast_2d(positions)
    n, d = positions.shape
    tol = float(selector.get("tol", SELECTOR_TOL))
    mask = np.ones(n, dtype=bool)
    used = False

    if "point" in selector:
        point = np.asarray(selector["point"], dtype=float)
        if point.size != d:
            raise InvalidArgumentError(f"point维数{point.size}与点阵维数{d}不符")
        mask &= np.all(np.abs(positions - point) <= tol, axis=1)
        used = True

    if "axis" in selector:
        axis = ConfigUtils.axis_index(selector["axis"])
        if axis >= d:
            raise InvalidArgumentError(f"坐标轴{selector['axis']}超出维数{d}")
        mask &= np.abs(positions[:, axis] - float(selector["value"])) <= tol
        used = True

    if "box" in selector:
        lo = np.asarray(selector["box"]["min"], dtype=float)
        hi = np.asarray(selector["box"]["max"], dtype=float)
        mask &= np.all((positions >= lo - tol) & (positions <= hi + tol), axis=1)
        used = True

    if "cylinder" in selector:
        cyl = selector["cylinder"]
        if d != 3:
            raise InvalidArgumentError("cylinder选择器仅适用于三维点阵")
        axis = ConfigUtils.axis_index(cyl["axis"])
        others = [a for a in range(3) if a != axis]
        rel = positions[:, others] - np.asarray(cyl["center"], dtype=float)
        radius = np.hypot(rel[:, 0], rel[:, 1])
        r0, r1 = cyl["radius_range"]
        mask &= (radius >= r0 - tol) & (radius <= r1 + tol)
        if "angle_range" in cyl:
            angle = np.degrees(np.arctan2(rel[:, 1], rel[:, 0])) % 360.0
            mask &= _angle_in_range(angle, *cyl["angle_range"])
        used = True

    if not used:
        raise InvalidArgumentError(f"选择器缺少条件: {sorted(selector)}")
    return np.flatnonzero(mask)


def apply_boundary_conditions(lattice: Lattice, bc: Dict[str, Any]) -> Lattice:
    """
    按bc节施加约束与荷载

    fixed: [{"selector", "dofs"}]，dofs缺省为全部自由度；
    loads: [{"selector", "force", "distribute"}]，distribute为真时合力均分到所选节点
    """
    d = lattice.dimension
    positions = lattice.positions
    fixed: Dict[int, frozenset] = {}
    for k, item in enumerate(bc.get("fixed", [])):
        joints = select_joints(positions, item["selector"])
        if joints.size == 0:
            raise InvalidArgumentError(f"约束第{k}项的选择器未选中任何节点")
        dofs = frozenset(int(x) for x in item.get("dofs", range(d)))
        if any(x < 0 or x >= d for x in dofs):
            raise InvalidArgumentError(f"约束第{k}项自由度{sorted(dofs)}超出0..{d - 1}")
        for j in joints:
            fixed[int(j)] = fixed.get(int(j), frozenset()) | dofs
        logger.debug("约束第%d项: %d个节点, 自由度%s", k, joints.size, sorted(dofs))

    loads: Dict[int, float] = {}
    for k, item in enumerate(bc.get("loads", [])):
        joints = select_joints(positions, item["selector"])
        if joints.size == 0:
            raise InvalidArgumentError(f"荷载第{k}项的选择器未选中任何节点")
        force = np.asarray(item["force"], dtype=float)
        if force.size != d:
            raise InvalidArgumentError(f"荷载第{k}项力向量维数{force.size}与点阵维数{d}不符")
        if item.get("distribute", False):
            force = force / joints.size
        for j in joints:
            for a in range(d):
                if force[a] != 0.0:
                    dof = int(j) * d + a
                    loads[dof] = loads.get(dof, 0.0) + float(force[a])
        logger.debug("荷载第%d项: %d个节点", k, joints.size)

    return lattice.with_boundary_conditions(fixed, loads)


def selector_counts(lattice: Lattice, bc: Dict[str, Any]) -> List[int]:
    """各约束与荷载选择器选中的节点数"""
    items = list(bc.get("fixed", [])) + list(bc.get("loads", []))
    return [int(select_joints(lattice.positions, item["selector"]).size) for item in items]
