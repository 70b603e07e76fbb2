"""
数据模型单元测试
节点、杆件、点阵及参数类的构造检查与派生量
"""
import unittest

import numpy as np

from models import (Joint, Member, Lattice, MemberState, LengthScale, Anisotropy, RandomFieldSpec,
                    OptimizationProblem, OptimizationResult, DesignState, ComplianceStatistics,
                    MMASettings, GradientPath)
from lattice_generator import make_lattice, build_grid_lattice
from config import FemConfig, MMAConfig
from errors import InvalidArgumentError, DegenerateGeometryError


class TestJointMember(unittest.TestCase):
    """节点与杆件测试"""

    def test_joint_dimension(self):
        joint = Joint(0, (1.0, 2.0), frozenset({1}))
        self.assertEqual(joint.dimension, 2)
        with self.assertRaises(InvalidArgumentError):
            Joint(0, (0.0, 0.0, 0.0, 0.0))

    def test_joint_fixed_dofs_range(self):
        with self.assertRaises(InvalidArgumentError):
            Joint(3, (0.0, 0.0), frozenset({2}))

    def test_member_same_endpoints(self):
        with self.assertRaises(InvalidArgumentError):
            Member(0, 1, 1, 1.0, (1.0, 0.0), (0.5, 0.0))

    def test_member_zero_length(self):
        with self.assertRaises(DegenerateGeometryError):
            Member(0, 0, 1, 0.0, (1.0, 0.0), (0.0, 0.0))


class TestLattice(unittest.TestCase):
    """点阵测试"""

    def setUp(self):
        # 单位正方形加一根对角杆
        self.positions = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        self.pairs = [(0, 1), (2, 3), (0, 2), (1, 3), (0, 3)]
        self.lattice = make_lattice(self.positions, self.pairs)

    def test_basic_counts(self):
        self.assertEqual(self.lattice.n_joints, 4)
        self.assertEqual(self.lattice.n_members, 5)
        self.assertEqual(self.lattice.n_dofs, 8)
        self.assertAlmostEqual(self.lattice.total_length, 4.0 + np.sqrt(2.0))

    def test_member_dofs_layout(self):
        dofs = self.lattice.member_dofs
        self.assertEqual(dofs.shape, (5, 4))
        np.testing.assert_array_equal(dofs[4], [0, 1, 6, 7])

    def test_degrees(self):
        np.testing.assert_array_equal(self.lattice.degrees(), [3, 2, 2, 3])

    def test_duplicate_member_rejected(self):
        with self.assertRaises(InvalidArgumentError):
            make_lattice(self.positions, self.pairs + [(3, 0)])

    def test_disconnected_rejected(self):
        with self.assertRaises(InvalidArgumentError):
            make_lattice(self.positions, [(0, 1), (2, 3)])

    def test_load_dof_range(self):
        with self.assertRaises(InvalidArgumentError):
            make_lattice(self.positions, self.pairs, loads={8: 1.0})

    def test_with_boundary_conditions(self):
        lattice = self.lattice.with_boundary_conditions({0: frozenset({0, 1}), 2: frozenset({0})},
                                                        {7: -1.0})
        np.testing.assert_array_equal(lattice.fixed_dofs, [0, 1, 4])
        np.testing.assert_array_equal(lattice.free_dofs, [2, 3, 5, 6, 7])
        self.assertEqual(lattice.load_vector[7], -1.0)
        # 原点阵不变
        self.assertEqual(self.lattice.fixed_dofs.size, 0)

        again = lattice.with_boundary_conditions({}, {7: -1.0})
        self.assertEqual(again.loads[7], -2.0)

    def test_geometry_arrays(self):
        np.testing.assert_allclose(self.lattice.lengths[-1], np.sqrt(2.0))
        np.testing.assert_allclose(self.lattice.tangents[-1], [np.sqrt(0.5), np.sqrt(0.5)])
        np.testing.assert_allclose(self.lattice.centroids[-1], [0.5, 0.5])


class TestFieldParameters(unittest.TestCase):
    """随机场参数测试"""

    def test_length_scale_affine(self):
        ell = LengthScale(0.5, 0.475, 1)
        self.assertAlmostEqual(float(ell.evaluate(np.array([[3.0, 20.0]]))[0]), 10.0)
        self.assertFalse(ell.is_constant)

    def test_length_scale_constant(self):
        ell = LengthScale(2.0)
        np.testing.assert_array_equal(ell.evaluate(np.zeros((3, 2))), [2.0, 2.0, 2.0])

    def test_length_scale_axis_out_of_range(self):
        with self.assertRaises(InvalidArgumentError):
            LengthScale(1.0, 0.1, 2).evaluate(np.zeros((2, 2)))

    def test_anisotropy_requires_unit_vector(self):
        Anisotropy((0.0, 1.0), 1.0, 5.0)
        with self.assertRaises(InvalidArgumentError):
            Anisotropy((1.0, 1.0), 1.0, 5.0)
        with self.assertRaises(InvalidArgumentError):
            Anisotropy((0.0, 1.0), 0.0, 5.0)

    def test_nu_from_beta(self):
        self.assertEqual(RandomFieldSpec(100.0, 10.0, beta=1, dimension=1).nu, 1.5)
        self.assertEqual(RandomFieldSpec(100.0, 10.0, beta=1, dimension=2).nu, 1.0)
        self.assertEqual(RandomFieldSpec(100.0, 10.0, beta=2, dimension=3).nu, 2.5)

    def test_beta_from_nu(self):
        self.assertEqual(RandomFieldSpec.beta_from_nu(1.5, 1), 1)
        self.assertEqual(RandomFieldSpec.beta_from_nu(3.0, 2), 2)
        with self.assertRaises(InvalidArgumentError):
            RandomFieldSpec.beta_from_nu(2.0, 2)

    def test_spec_rejects_negative_sigma(self):
        with self.assertRaises(InvalidArgumentError):
            RandomFieldSpec(100.0, -1.0)
        with self.assertRaises(InvalidArgumentError):
            RandomFieldSpec(100.0, 1.0, beta=0)


class TestMemberState(unittest.TestCase):

    def test_shape_mismatch(self):
        with self.assertRaises(InvalidArgumentError):
            MemberState(np.ones(3), np.ones(2))


class TestOptimizationProblem(unittest.TestCase):
    """优化问题测试"""

    def setUp(self):
        self.lattice = build_grid_lattice(4, 2, 1.0, 0.75, "double")
        self.spec = RandomFieldSpec(100.0, 10.0, uncorrelated=True)

    def test_defaults(self):
        problem = OptimizationProblem(self.lattice, self.spec, None, v_max=0.5, a_max=1.0)
        self.assertAlmostEqual(problem.a_min, FemConfig.A_MIN_RATIO)
        self.assertIs(problem.gradient_path, GradientPath.ADJOINT)
        self.assertEqual(problem.settings.max_iterations, MMAConfig.MAX_ITERATIONS)

    def test_alpha_range(self):
        with self.assertRaises(InvalidArgumentError):
            OptimizationProblem(self.lattice, self.spec, None, v_max=0.5, a_max=1.0, alpha=1.5)

    def test_infeasible_volume(self):
        with self.assertRaises(InvalidArgumentError):
            OptimizationProblem(self.lattice, self.spec, None, v_max=1e-6, a_max=1.0)

    def test_normalization_constants_positive(self):
        with self.assertRaises(InvalidArgumentError):
            OptimizationProblem(self.lattice, self.spec, None, v_max=0.5, a_max=1.0, j_star=0.0)

    def test_settings_override(self):
        settings = MMASettings(move_limit=0.1, max_iterations=10)
        problem = OptimizationProblem(self.lattice, self.spec, None, v_max=0.5, a_max=1.0,
                                      settings=settings)
        self.assertEqual(problem.settings.move_limit, 0.1)


class TestOptimizationResult(unittest.TestCase):

    def test_summary_without_timing(self):
        design = DesignState(np.ones(2), np.ones(2), np.ones(2), np.ones(2), np.ones(2))
        stats = ComplianceStatistics(0.5, 0.01, np.zeros(2), np.zeros(2))
        result = OptimizationResult(1.0, design, stats, 2.0, [], 3, True, 1.23, 0.5, None)
        summary = result.summary()
        self.assertNotIn("wall_time", summary)
        self.assertEqual(summary["mean_compliance"], 0.5)
        self.assertEqual(summary["iterations"], 3)
        self.assertIn("wall_time", result.summary(record_timing=True))
        np.testing.assert_array_equal(result.s, np.ones(2))


if __name__ == '__main__':
    unittest.main()
