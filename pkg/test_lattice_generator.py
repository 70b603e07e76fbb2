"""
点阵生成器单元测试
网格、BCC、链式与支架点阵的规模，杆件几何以及伴随点阵的线图性质
"""
import itertools
import unittest

import numpy as np

from lattice_generator import (LatticeGenerator, build_grid_lattice, build_bcc_lattice,
                               build_chain_lattice, build_adjoint, build_bracket_lattice,
                               default_bracket_geometry, member_geometry, compute_member_geometry,
                               make_lattice)
from errors import InvalidArgumentError, DegenerateGeometryError


def brute_force_bcc_counts(nx: int, ny: int, nz: int, edges: bool = True):
    """按集合枚举BCC点阵的节点与杆件数"""
    joints = set()
    members = set()
    for i, j, k in itertools.product(range(nx), range(ny), range(nz)):
        centre = (2 * i + 1, 2 * j + 1, 2 * k + 1)
        joints.add(centre)
        corners = [(2 * (i + a), 2 * (j + b), 2 * (k + c))
                   for a, b, c in itertools.product((0, 1), repeat=3)]
        for corner in corners:
            joints.add(corner)
            members.add(frozenset((centre, corner)))
        if edges:
            for p, q in itertools.combinations(corners, 2):
                if sum(abs(x - y) for x, y in zip(p, q)) == 2:
                    members.add(frozenset((p, q)))
    return len(joints), len(members)


class TestGridLattice(unittest.TestCase):
    """二维网格点阵测试"""

    def test_verification_counts(self):
        lattice = build_grid_lattice(4, 2, 1.0, 0.75, "double")
        self.assertEqual(lattice.n_joints, 15)
        self.assertEqual(lattice.n_members, 38)

    def test_tension_strip_counts(self):
        self.assertEqual(build_grid_lattice(30, 20, 1.0, 1.0, "double").n_members, 2450)

    def test_cantilever_counts(self):
        lattice = build_grid_lattice(40, 20, 0.5, 0.5, "double")
        self.assertEqual(lattice.n_joints, 861)
        self.assertEqual(lattice.n_members, 3260)

    def test_unit_square_without_diagonals(self):
        lattice = build_grid_lattice(1, 1, 1.0, 1.0, "none")
        self.assertEqual(lattice.n_joints, 4)
        self.assertEqual(lattice.n_members, 4)

    def test_member_count_formula(self):
        for nx, ny in [(1, 1), (3, 2), (5, 4)]:
            base = nx * (ny + 1) + ny * (nx + 1)
            self.assertEqual(build_grid_lattice(nx, ny, 1.0, 1.0, "double").n_members, base + 2 * nx * ny)
            self.assertEqual(build_grid_lattice(nx, ny, 1.0, 1.0, "single").n_members, base + nx * ny)
            self.assertEqual(build_grid_lattice(nx, ny, 1.0, 1.0, "none").n_members, base)

    def test_verification_lengths(self):
        lattice = build_grid_lattice(4, 2, 1.0, 0.75, "double")
        for length in lattice.lengths:
            self.assertTrue(min(abs(length - v) for v in (1.0, 0.75, 1.25)) < 1e-12)

    def test_joint_positions_on_grid(self):
        lattice = build_grid_lattice(4, 2, 1.0, 0.75, "double")
        np.testing.assert_allclose(lattice.positions.min(axis=0), [0.0, 0.0])
        np.testing.assert_allclose(lattice.positions.max(axis=0), [4.0, 1.5])

    def test_hole_removes_cell_diagonals(self):
        full = build_grid_lattice(3, 3, 1.0, 1.0, "double")
        holed = build_grid_lattice(3, 3, 1.0, 1.0, "double", holes=[(1, 1, 2, 2)])
        self.assertEqual(holed.n_joints, full.n_joints)
        self.assertEqual(holed.n_members, full.n_members - 2)

    def test_corner_hole_removes_joint(self):
        holed = build_grid_lattice(3, 3, 1.0, 1.0, "none", holes=[(2, 2, 3, 3)])
        self.assertEqual(holed.n_joints, 15)
        self.assertEqual(holed.n_members, 22)

    def test_invalid_arguments(self):
        with self.assertRaises(InvalidArgumentError):
            build_grid_lattice(0, 2, 1.0, 1.0)
        with self.assertRaises(InvalidArgumentError):
            build_grid_lattice(2, 2, -1.0, 1.0)
        with self.assertRaises(ValueError):
            build_grid_lattice(2, 2, 1.0, 1.0, "triple")


class TestBccLattice(unittest.TestCase):
    """三维BCC点阵测试"""

    def test_single_cell(self):
        lattice = build_bcc_lattice(1, 1, 1, 1.0)
        self.assertEqual(lattice.n_joints, 9)
        self.assertEqual(lattice.n_members, 20)

    def test_single_cell_without_edges(self):
        lattice = build_bcc_lattice(1, 1, 1, 1.0, edges=False)
        self.assertEqual(lattice.n_joints, 9)
        self.assertEqual(lattice.n_members, 8)

    def test_against_enumeration(self):
        for shape in [(2, 1, 1), (2, 2, 1), (3, 2, 2)]:
            for edges in (True, False):
                lattice = build_bcc_lattice(*shape, 1.0, edges=edges)
                self.assertEqual((lattice.n_joints, lattice.n_members),
                                 brute_force_bcc_counts(*shape, edges=edges), f"{shape}, edges={edges}")

    def test_two_cells(self):
        lattice = build_bcc_lattice(2, 1, 1, 1.0)
        self.assertEqual(lattice.n_joints, 14)
        self.assertEqual(lattice.n_members, 36)

    def test_centre_member_length(self):
        lattice = build_bcc_lattice(1, 1, 1, 2.0, edges=False)
        np.testing.assert_allclose(lattice.lengths, np.sqrt(3.0))

    def test_invalid_arguments(self):
        with self.assertRaises(InvalidArgumentError):
            build_bcc_lattice(1, 0, 1, 1.0)
        with self.assertRaises(InvalidArgumentError):
            build_bcc_lattice(1, 1, 1, 0.0)


class TestBracketLattice(unittest.TestCase):
    """支架点阵测试"""

    def test_scaled_bracket(self):
        lattice = build_bracket_lattice(default_bracket_geometry(1))
        self.assertEqual(lattice.dimension, 3)
        self.assertLessEqual(lattice.n_members, 10000)
        self.assertGreater(lattice.n_members, 1000)

    def test_holes_remove_cells(self):
        geometry = default_bracket_geometry(1)
        solid = default_bracket_geometry(1)
        solid.holes = []
        self.assertLess(build_bracket_lattice(geometry).n_members,
                        build_bracket_lattice(solid).n_members)

    def test_keep_cell(self):
        geometry = default_bracket_geometry(1)
        # 螺栓孔中心所在单元被去除，底板角落单元保留
        self.assertFalse(geometry.keep_cell(2, 2, 0))
        self.assertTrue(geometry.keep_cell(0, 0, 0))
        # 底板以上、竖板以外不保留
        self.assertFalse(geometry.keep_cell(0, 0, 5))


class TestChainLattice(unittest.TestCase):

    def test_chain(self):
        lattice = build_chain_lattice(4, 0.5)
        self.assertEqual(lattice.dimension, 1)
        self.assertEqual(lattice.n_members, 4)
        np.testing.assert_allclose(lattice.centroids[:, 0], [0.25, 0.75, 1.25, 1.75])

    def test_chain_in_plane(self):
        lattice = build_chain_lattice(2, 1.0, dimension=2)
        np.testing.assert_allclose(lattice.tangents, [[1.0, 0.0], [1.0, 0.0]])


class TestMemberGeometry(unittest.TestCase):
    """杆件几何测试"""

    def test_planar_member(self):
        lengths, tangents, centroids = member_geometry(np.array([[0.0, 0.0], [3.0, 4.0]]), [(0, 1)])
        self.assertAlmostEqual(lengths[0], 5.0)
        np.testing.assert_allclose(tangents[0], [0.6, 0.8])
        np.testing.assert_allclose(centroids[0], [1.5, 2.0])

    def test_spatial_member(self):
        lengths, tangents, centroids = member_geometry(
            np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), [(0, 1)])
        self.assertAlmostEqual(lengths[0], 1.0)
        np.testing.assert_allclose(tangents[0], [1.0, 0.0, 0.0])
        np.testing.assert_allclose(centroids[0], [0.5, 0.0, 0.0])

    def test_coincident_endpoints(self):
        with self.assertRaises(DegenerateGeometryError):
            member_geometry(np.array([[1.0, 1.0], [1.0, 1.0]]), [(0, 1)])

    def test_stored_geometry_matches_recomputed(self):
        for lattice in (build_grid_lattice(5, 3, 0.7, 1.3, "double"), build_bcc_lattice(2, 2, 1, 1.5)):
            lengths, tangents, centroids = compute_member_geometry(lattice)
            np.testing.assert_allclose(lattice.lengths, lengths, rtol=1e-12)
            np.testing.assert_allclose(np.linalg.norm(lattice.tangents, axis=1), 1.0, rtol=1e-12)
            np.testing.assert_allclose(lattice.centroids, centroids, rtol=1e-12, atol=1e-14)


class TestAdjointLattice(unittest.TestCase):
    """伴随点阵测试"""

    def test_two_member_chain(self):
        adjoint = build_adjoint(build_chain_lattice(2, 1.0))
        self.assertEqual(adjoint.n_vertices, 2)
        np.testing.assert_allclose(adjoint.vertices[:, 0], [0.5, 1.5])
        np.testing.assert_array_equal(adjoint.edges, [[0, 1]])
        np.testing.assert_allclose(adjoint.edge_lengths, [1.0])

    def test_triangle(self):
        lattice = make_lattice(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [(0, 1), (1, 2), (2, 0)])
        adjoint = build_adjoint(lattice)
        self.assertEqual(adjoint.n_vertices, 3)
        self.assertEqual(adjoint.n_edges, 3)

    def test_star(self):
        for k in (3, 4, 6):
            angles = 2.0 * np.pi * np.arange(k) / k
            positions = np.vstack([[0.0, 0.0], np.column_stack([np.cos(angles), np.sin(angles)])])
            lattice = make_lattice(positions, [(0, i + 1) for i in range(k)])
            adjoint = build_adjoint(lattice)
            self.assertEqual(adjoint.n_edges, k * (k - 1) // 2)
            pairs = {tuple(e) for e in adjoint.edges.tolist()}
            self.assertEqual(pairs, set(itertools.combinations(range(k), 2)))

    def test_line_graph_degree_identity(self):
        for lattice in (build_grid_lattice(4, 2, 1.0, 0.75, "double"), build_bcc_lattice(2, 1, 1, 1.0)):
            degrees = lattice.degrees()
            adjoint = build_adjoint(lattice)
            self.assertEqual(adjoint.n_edges, int(np.sum(degrees * (degrees - 1) // 2)))

    def test_edges_share_joint(self):
        lattice = build_grid_lattice(3, 2, 1.0, 1.0, "single")
        adjoint = build_adjoint(lattice)
        conn = lattice.connectivity
        for a, b in adjoint.edges:
            self.assertTrue(set(conn[a]) & set(conn[b]))
        self.assertTrue(np.all(adjoint.edge_lengths > 0.0))


class TestLatticeGenerator(unittest.TestCase):
    """配置驱动的生成器测试"""

    def setUp(self):
        self.generator = LatticeGenerator()

    def test_generate_grid(self):
        lattice = self.generator.generate({"generator": "grid", "nx": 4, "ny": 2,
                                           "cell_w": 1.0, "cell_h": 0.75})
        self.assertEqual(lattice.n_members, 38)

    def test_generate_chain(self):
        lattice = self.generator.generate({"generator": "chain", "n": 3})
        self.assertEqual(lattice.n_members, 3)

    def test_generate_bcc(self):
        lattice = self.generator.generate({"generator": "bcc", "nx": 1, "ny": 1, "nz": 1, "edges": False})
        self.assertEqual(lattice.n_members, 8)

    def test_unknown_generator(self):
        with self.assertRaises(InvalidArgumentError):
            self.generator.generate({"generator": "voronoi"})

    def test_named_lattices(self):
        self.assertEqual(self.generator.create_verification_lattice().n_members, 38)
        self.assertEqual(self.generator.create_tension_strip_lattice().n_members, 2450)
        self.assertEqual(self.generator.create_cantilever_lattice().n_joints, 861)


if __name__ == '__main__':
    unittest.main()
