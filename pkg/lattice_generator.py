"""
点阵生成器
生成二维网格、三维BCC、支架及一维链式点阵，并构造伴随（线图）点阵
"""
import logging
from dataclasses import dataclass, field
from typing import List, Dict, Tuple, Optional, Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from models import Joint, Member, Lattice, AdjointLattice, DiagonalMode
from errors import InvalidArgumentError, DegenerateGeometryError

logger = logging.getLogger(__name__)


def member_geometry(positions: np.ndarray, pairs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """计算杆件长度、单位切向量与形心"""
    positions = np.asarray(positions, dtype=float)
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    delta = positions[pairs[:, 1]] - positions[pairs[:, 0]]
    lengths = np.linalg.norm(delta, axis=1)
    degenerate = np.flatnonzero(~(lengths > 0.0))
    if degenerate.size:
        raise DegenerateGeometryError(f"杆件{degenerate[:5].tolist()}端点重合")
    tangents = delta / lengths[:, None]
    centroids = 0.5 * (positions[pairs[:, 0]] + positions[pairs[:, 1]])
    return lengths, tangents, centroids


def compute_member_geometry(lattice: Lattice) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """由节点坐标重新计算点阵的 (l_e, t_e, c_e)"""
    return member_geometry(lattice.positions, lattice.connectivity)


def make_lattice(positions: np.ndarray, pairs: Sequence[Tuple[int, int]],
                 fixed: Optional[Dict[int, Sequence[int]]] = None,
                 loads: Optional[Dict[int, float]] = None) -> Lattice:
    """由坐标数组与杆件端点对创建点阵"""
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    dimension = positions.shape[1]
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    fixed = fixed or {}

    joints = [Joint(i, tuple(float(x) for x in p), frozenset(fixed.get(i, ())))
              for i, p in enumerate(positions)]

    lengths, tangents, centroids = member_geometry(positions, pairs)
    members = [
        Member(e, int(a), int(b), float(lengths[e]),
               tuple(tangents[e].tolist()), tuple(centroids[e].tolist()))
        for e, (a, b) in enumerate(pairs)
    ]
    return Lattice(dimension, joints, members, dict(loads or {}))


def _compact(keys: List[Tuple[int, ...]], pairs: List[Tuple[Tuple[int, ...], Tuple[int, ...]]],
             scale: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """整数键去重后重新编号：返回坐标与杆件端点索引"""
    index: Dict[Tuple[int, ...], int] = {}
    for key in keys:
        if key not in index:
            index[key] = len(index)
    positions = np.array(list(index.keys()), dtype=float) * scale
    conn = np.array([(index[a], index[b]) for a, b in pairs], dtype=int).reshape(-1, 2)
    return positions, conn


def build_grid_lattice(nx: int, ny: int, cell_w: float, cell_h: float,
                       diagonals="double",
                       holes: Optional[List[Tuple[int, int, int, int]]] = None) -> Lattice:
    """
    生成二维规则网格点阵

    holes为按单元编号的矩形窗口 (i0, j0, i1, j1)，窗口内单元不生成杆件
    """
    if nx < 1 or ny < 1:
        raise InvalidArgumentError(f"单元数必须≥1: nx={nx}, ny={ny}")
    if not (cell_w > 0 and cell_h > 0):
        raise InvalidArgumentError(f"单元尺寸必须为正: {cell_w}×{cell_h}")
    mode = DiagonalMode(diagonals) if not isinstance(diagonals, DiagonalMode) else diagonals
    holes = holes or []

    def in_hole(i: int, j: int) -> bool:
        return any(i0 <= i < i1 and j0 <= j < j1 for i0, j0, i1, j1 in holes)

    seen = set()
    pairs = []

    def add(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in seen:
            seen.add(key)
            pairs.append((a, b))

    # 先水平杆、再竖直杆、最后对角杆，保证编号稳定
    kept = [(i, j) for j in range(ny) for i in range(nx) if not in_hole(i, j)]
    for i, j in kept:
        add((i, j), (i + 1, j))
        add((i, j + 1), (i + 1, j + 1))
    for i, j in kept:
        add((i, j), (i, j + 1))
        add((i + 1, j), (i + 1, j + 1))
    if mode is not DiagonalMode.NONE:
        for i, j in kept:
            add((i, j), (i + 1, j + 1))
            if mode is DiagonalMode.DOUBLE:
                add((i + 1, j), (i, j + 1))

    used = sorted({k for pair in pairs for k in pair}, key=lambda k: (k[1], k[0]))
    positions, conn = _compact(used, pairs, np.array([cell_w, cell_h]))
    lattice = make_lattice(positions, conn)
    logger.debug("网格点阵 %dx%d: %d节点 %d杆件", nx, ny, lattice.n_joints, lattice.n_members)
    return lattice


def build_chain_lattice(n: int, spacing: float = 1.0, dimension: int = 1) -> Lattice:
    """生成沿x轴的一维链式点阵（n根杆件）"""
    if n < 1:
        raise InvalidArgumentError(f"杆件数必须≥1: {n}")
    if not spacing > 0:
        raise InvalidArgumentError(f"间距必须为正: {spacing}")
    positions = np.zeros((n + 1, dimension))
    positions[:, 0] = np.arange(n + 1) * spacing
    pairs = [(i, i + 1) for i in range(n)]
    return make_lattice(positions, pairs)


_BCC_CORNERS = [(dx, dy, dz) for dz in (0, 1) for dy in (0, 1) for dx in (0, 1)]


def _bcc_pairs(cells: List[Tuple[int, int, int]], edges: bool):
    """BCC单元的杆件（整数键：角点坐标×2，体心为奇数坐标）"""
    seen = set()
    pairs = []

    def add(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in seen:
            seen.add(key)
            pairs.append(key)

    for i, j, k in cells:
        centre = (2 * i + 1, 2 * j + 1, 2 * k + 1)
        for dx, dy, dz in _BCC_CORNERS:
            add(centre, (2 * (i + dx), 2 * (j + dy), 2 * (k + dz)))
    if edges:
        for i, j, k in cells:
            for dx, dy, dz in _BCC_CORNERS:
                corner = (2 * (i + dx), 2 * (j + dy), 2 * (k + dz))
                # 从每个角点向三个正方向连接单元棱
                if dx == 0:
                    add(corner, (corner[0] + 2, corner[1], corner[2]))
                if dy == 0:
                    add(corner, (corner[0], corner[1] + 2, corner[2]))
                if dz == 0:
                    add(corner, (corner[0], corner[1], corner[2] + 2))
    return pairs


def build_bcc_lattice(nx: int, ny: int, nz: int, cell: float, edges: bool = True,
                      keep_cell: Optional[Callable[[int, int, int], bool]] = None) -> Lattice:
    """生成三维体心立方(BCC)点阵，keep_cell可筛选保留的单元"""
    if min(nx, ny, nz) < 1:
        raise InvalidArgumentError(f"单元数必须≥1: ({nx}, {ny}, {nz})")
    if not cell > 0:
        raise InvalidArgumentError(f"单元边长必须为正: {cell}")

    cells = [(i, j, k) for k in range(nz) for j in range(ny) for i in range(nx)
             if keep_cell is None or keep_cell(i, j, k)]
    if not cells:
        raise InvalidArgumentError("没有保留任何BCC单元")
    pairs = _bcc_pairs(cells, edges)
    used = sorted({key for pair in pairs for key in pair}, key=lambda t: (t[2], t[1], t[0]))
    positions, conn = _compact(used, pairs, np.full(3, cell / 2.0))
    if keep_cell is not None:
        positions, conn = largest_component(positions, conn)
    return make_lattice(positions, conn)


@dataclass
class BracketGeometry:
    """
    板-翼缘支架的组合几何（单位：单元数）

    boxes为保留单元的长方体区域 ((i0,j0,k0), (i1,j1,k1))；
    holes为圆柱孔 (轴向, 圆心两坐标, 半径)，轴向为'x'/'y'/'z'，坐标以长度计
    """
    nx: int
    ny: int
    nz: int
    cell: float
    boxes: List[Tuple[Tuple[int, int, int], Tuple[int, int, int]]] = field(default_factory=list)
    holes: List[Tuple[str, Tuple[float, float], float]] = field(default_factory=list)
    edges: bool = True

    def keep_cell(self, i: int, j: int, k: int) -> bool:
        centre = (np.array([i, j, k], dtype=float) + 0.5) * self.cell
        inside = any(all(lo[a] <= (i, j, k)[a] < hi[a] for a in range(3)) for lo, hi in self.boxes)
        if not inside:
            return False
        for axis, (c0, c1), radius in self.holes:
            others = [a for a in range(3) if a != "xyz".index(axis)]
            if np.hypot(centre[others[0]] - c0, centre[others[1]] - c1) < radius:
                return False
        return True


def default_bracket_geometry(scale: int = 1) -> BracketGeometry:
    """缩小比例的发动机支架：底板 + 竖板，竖板上一个大孔，底板上四个螺栓孔"""
    s = int(scale)
    cell = 5.0
    nx, ny, nz = 16 * s, 10 * s, 9 * s
    base = ((0, 0, 0), (nx, ny, 2 * s))
    web = ((0, 4 * s, 0), (nx, 6 * s, nz))
    L = cell
    holes = [
        ("y", (8 * s * L, 6 * s * L), 2.2 * s * L),
        ("z", (2 * s * L, 2 * s * L), 1.1 * s * L),
        ("z", (14 * s * L, 2 * s * L), 1.1 * s * L),
        ("z", (2 * s * L, 8 * s * L), 1.1 * s * L),
        ("z", (14 * s * L, 8 * s * L), 1.1 * s * L),
    ]
    return BracketGeometry(nx, ny, nz, cell, [base, web], holes)


def build_bracket_lattice(geometry: Optional[BracketGeometry] = None) -> Lattice:
    """按组合几何生成BCC支架点阵，仅保留最大连通部分"""
    geometry = geometry or default_bracket_geometry()
    return build_bcc_lattice(geometry.nx, geometry.ny, geometry.nz, geometry.cell,
                             edges=geometry.edges, keep_cell=geometry.keep_cell)


def largest_component(positions: np.ndarray, pairs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """保留最大连通分量并重新编号"""
    n = positions.shape[0]
    adj = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    n_comp, labels = connected_components(adj, directed=False)
    if n_comp == 1:
        return positions, pairs
    main = np.argmax(np.bincount(labels))
    keep = labels == main
    remap = -np.ones(n, dtype=int)
    remap[keep] = np.arange(keep.sum())
    member_keep = keep[pairs[:, 0]]
    logger.info("去除%d个不连通部分", n_comp - 1)
    return positions[keep], remap[pairs[member_keep]]


def build_adjoint(lattice: Lattice) -> AdjointLattice:
    """构造伴随点阵：每根杆件一个顶点（位于形心），共享节点的杆件之间连边"""
    if lattice.n_members < 1:
        raise InvalidArgumentError("点阵至少需要一根杆件")
    n_e = lattice.n_members
    conn = lattice.connectivity
    rows = conn.ravel()
    cols = np.repeat(np.arange(n_e), 2)
    incidence = sp.csr_matrix((np.ones(2 * n_e), (rows, cols)), shape=(lattice.n_joints, n_e))
    shared = sp.triu(incidence.T @ incidence, k=1).tocoo()
    order = np.lexsort((shared.col, shared.row))
    edges = np.column_stack([shared.row[order], shared.col[order]]).astype(int)

    centroids = lattice.centroids
    h = np.linalg.norm(centroids[edges[:, 1]] - centroids[edges[:, 0]], axis=1) \
        if len(edges) else np.zeros(0)
    bad = np.flatnonzero(~(h > 0.0))
    if bad.size:
        raise DegenerateGeometryError(f"伴随点阵边{edges[bad[0]].tolist()}两端形心重合")
    return AdjointLattice(centroids.copy(), edges.reshape(-1, 2), h)


class LatticeGenerator:
    """按配置生成点阵"""

    GENERATORS = ("grid", "bcc", "bracket", "chain")

    def generate(self, section: Dict) -> Lattice:
        """由配置中的lattice节生成点阵"""
        name = section.get("generator")
        if name == "grid":
            holes = [tuple(h) for h in section.get("holes", [])]
            return build_grid_lattice(section["nx"], section["ny"], section.get("cell_w", 1.0),
                                      section.get("cell_h", 1.0), section.get("diagonals", "double"),
                                      holes)
        if name == "bcc":
            return build_bcc_lattice(section["nx"], section["ny"], section["nz"],
                                     section.get("cell", 1.0), section.get("edges", True))
        if name == "bracket":
            geometry = default_bracket_geometry(section.get("scale", 1))
            geometry.edges = section.get("edges", True)
            return build_bracket_lattice(geometry)
        if name == "chain":
            return build_chain_lattice(section["n"], section.get("spacing", 1.0),
                                       section.get("dimension", 1))
        raise InvalidArgumentError(f"不支持的点阵生成器: {name}")

    def create_verification_lattice(self) -> Lattice:
        """验证算例：4×2个1×0.75单元，双对角，15节点38杆件"""
        return build_grid_lattice(4, 2, 1.0, 0.75, "double")

    def create_tension_strip_lattice(self) -> Lattice:
        """受拉条带：30×20个单位单元，双对角，2450杆件"""
        return build_grid_lattice(30, 20, 1.0, 1.0, "double")

    def create_cantilever_lattice(self) -> Lattice:
        """悬臂：40×20个0.5×0.5单元，861节点3260杆件"""
        return build_grid_lattice(40, 20, 0.5, 0.5, "double")
