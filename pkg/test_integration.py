"""
命令行集成测试
通过main()运行各子命令，检查退出码与输出文件
"""
import json
import os
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
import pandas as pd

from config import PathConfig
from main import main, EXIT_OK, EXIT_ERROR, EXIT_ITERATION_CAP

PRESET_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), PathConfig.PRESET_DIR)

VERIFICATION = {
    "lattice": {"generator": "grid", "nx": 4, "ny": 2, "cell_w": 1.0, "cell_h": 0.75, "diagonals": "double"},
    "bc": {
        "fixed": [{"selector": {"axis": "x", "value": 0.0}}],
        "loads": [{"selector": {"point": [4.0, 0.75]}, "force": [1.0, 0.0]}],
    },
    "field": {"mean": 100.0, "uncorrelated": 10.0},
    "optimization": {"alpha": 1.0, "v_max": 0.5, "a_max": 1.0},
    "output": {"seed": 3, "formats": ["csv", "json"]},
}

SMALL_FIELD = {
    "lattice": {"generator": "grid", "nx": 4, "ny": 2, "cell_w": 1.0, "cell_h": 0.75, "diagonals": "double"},
    "field": {"mean": 100.0, "sigma": 10.0, "beta": 1, "length_scale": 1.0},
    "output": {"seed": 11, "formats": ["csv", "json"]},
}


def preset(name):
    return os.path.join(PRESET_DIR, name + ".json")


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.out = os.path.join(self.temp_dir.name, "out")

    def tearDown(self):
        self.temp_dir.cleanup()

    def write_config(self, config, name="run.json"):
        path = os.path.join(self.temp_dir.name, name)
        with open(path, "w", encoding="utf-8") as f:
            if isinstance(config, str):
                f.write(config)
            else:
                json.dump(config, f, indent=2)
        return path

    def run_cli(self, *argv):
        with patch('builtins.print') as mock_print:
            code = main(list(argv))
        self.printed = " ".join(str(c.args[0]) for c in mock_print.call_args_list if c.args)
        return code

    def output_file(self, name, directory=None):
        return os.path.join(directory or self.out, name)


class TestCommands(CliTestCase):
    """各子命令的正常运行"""

    def test_penalty_curve_without_config(self):
        code = self.run_cli("--output-dir", self.out, "penalty-curve")
        self.assertEqual(code, EXIT_OK)
        table = pd.read_csv(self.output_file(PathConfig.PENALTY_FILE))
        self.assertEqual(list(table.columns), ["s", "penalized", "derivative"])
        self.assertEqual(len(table), 201)
        self.assertTrue(np.all(table["penalized"] <= table["s"] + 1e-12))

    def test_optimize_single_bar(self):
        code = self.run_cli("--output-dir", self.out, "optimize", preset("single_bar"))
        self.assertEqual(code, EXIT_OK)
        with open(self.output_file(PathConfig.SUMMARY_FILE), encoding="utf-8") as f:
            summary = json.load(f)
        self.assertAlmostEqual(summary["mean_compliance"], 0.01, places=10)
        self.assertAlmostEqual(summary["std_compliance"], 1e-3, places=10)
        self.assertTrue(summary["converged"])
        self.assertNotIn("wall_time", summary)
        self.assertTrue(os.path.exists(self.output_file(PathConfig.HISTORY_FILE)))
        self.assertTrue(os.path.exists(self.output_file(PathConfig.DESIGN_FILE)))
        self.assertIn("已收敛", self.printed)

    def test_optimize_verification_preset(self):
        code = self.run_cli("--output-dir", self.out, "optimize", preset("verification_a1"))
        self.assertEqual(code, EXIT_OK)
        with open(self.output_file(PathConfig.SUMMARY_FILE), encoding="utf-8") as f:
            summary = json.load(f)
        self.assertTrue(summary["converged"])
        self.assertAlmostEqual(summary["mean_compliance"] / 0.32, 1.0, delta=0.05)

    def test_iteration_cap_exit_code(self):
        config = json.loads(json.dumps(VERIFICATION))
        config["optimization"]["max_iters"] = 1
        code = self.run_cli("--output-dir", self.out, "optimize", self.write_config(config))
        self.assertEqual(code, EXIT_ITERATION_CAP)
        with open(self.output_file(PathConfig.SUMMARY_FILE), encoding="utf-8") as f:
            self.assertFalse(json.load(f)["converged"])

    def test_debug_matrices(self):
        config = json.loads(json.dumps(SMALL_FIELD))
        config["output"]["debug_matrices"] = True
        code = self.run_cli("--output-dir", self.out, "sample-field", self.write_config(config))
        self.assertEqual(code, EXIT_OK)
        with open(self.output_file(PathConfig.PRECISION_MTX_FILE), encoding="utf-8") as f:
            self.assertTrue(f.readline().startswith("%%MatrixMarket"))

        config = json.loads(json.dumps(VERIFICATION))
        config["output"]["debug_matrices"] = True
        config["optimization"]["max_iters"] = 2
        self.run_cli("--output-dir", self.out, "optimize", self.write_config(config))
        self.assertTrue(os.path.exists(self.output_file(PathConfig.STIFFNESS_MTX_FILE)))

    def test_sample_field(self):
        code = self.run_cli("--output-dir", self.out, "sample-field", self.write_config(SMALL_FIELD),
                            "-n", "3")
        self.assertEqual(code, EXIT_OK)
        table = pd.read_csv(self.output_file(PathConfig.FIELDS_CSV_FILE))
        self.assertEqual(len(table), 38)
        self.assertIn("sample_2", table.columns)
        with open(self.output_file(PathConfig.FIELD_STATS_FILE), encoding="utf-8") as f:
            stats = json.load(f)
        self.assertEqual(stats["n_samples"], 3)
        self.assertEqual(stats["seed"], 11)

    def test_sample_field_reproducible(self):
        config = self.write_config(SMALL_FIELD)
        second = os.path.join(self.temp_dir.name, "second")
        self.assertEqual(self.run_cli("--output-dir", self.out, "sample-field", config, "-n", "4"), EXIT_OK)
        self.assertEqual(self.run_cli("--output-dir", second, "sample-field", config, "-n", "4"), EXIT_OK)
        for name in (PathConfig.FIELDS_CSV_FILE, PathConfig.FIELD_STATS_FILE):
            with open(self.output_file(name), "rb") as a, open(self.output_file(name, second), "rb") as b:
                self.assertEqual(a.read(), b.read(), name)

        third = os.path.join(self.temp_dir.name, "third")
        self.run_cli("--output-dir", third, "--seed", "12", "sample-field", config, "-n", "4")
        first = pd.read_csv(self.output_file(PathConfig.FIELDS_CSV_FILE))
        other = pd.read_csv(self.output_file(PathConfig.FIELDS_CSV_FILE, third))
        self.assertFalse(np.allclose(first["sample_0"], other["sample_0"]))

    def test_zero_samples_writes_nothing(self):
        code = self.run_cli("--output-dir", self.out, "sample-field", self.write_config(SMALL_FIELD),
                            "-n", "0")
        self.assertEqual(code, EXIT_OK)
        self.assertFalse(os.path.exists(self.out))

    def test_validate_deterministic_field(self):
        config = self.write_config(dict(VERIFICATION, field={"mean": 100.0, "uncorrelated": 0.0}))
        code = self.run_cli("--threads", "2", "--output-dir", self.out, "validate", config, "-n", "20")
        self.assertEqual(code, EXIT_OK)
        with open(self.output_file(PathConfig.VALIDATION_FILE), encoding="utf-8") as f:
            report = json.load(f)
        self.assertEqual(report["perturbation"]["std_dev"], 0.0)
        self.assertAlmostEqual(report["monte_carlo"]["std_dev"], 0.0, places=12)
        self.assertAlmostEqual(report["relative_difference"]["mean"], 0.0, places=10)
        self.assertEqual(report["monte_carlo"]["n_rejected"], 0)
        self.assertEqual(len(pd.read_csv(self.output_file(PathConfig.SAMPLES_FILE))), 20)


class TestErrors(CliTestCase):
    """错误输入以退出码1结束且不产生输出"""

    def assertFails(self, *argv):
        code = self.run_cli("--output-dir", self.out, *argv)
        self.assertEqual(code, EXIT_ERROR)
        self.assertFalse(os.path.exists(self.out))
        self.assertIn("❌", self.printed)

    def test_missing_config(self):
        self.assertFails("optimize", os.path.join(self.temp_dir.name, "missing.json"))

    def test_unknown_key(self):
        config = json.loads(json.dumps(VERIFICATION))
        config["field"]["colour"] = "red"
        self.assertFails("optimize", self.write_config(config))
        self.assertIn("colour", self.printed)

    def test_json_syntax_error(self):
        self.assertFails("optimize", self.write_config('{"lattice": {"generator": "grid",}'))

    def test_negative_sample_count(self):
        self.assertFails("sample-field", self.write_config(SMALL_FIELD), "-n", "-2")

    def test_pareto_requires_both_extremes(self):
        self.assertFails("pareto", self.write_config(VERIFICATION), "--alphas", "1")

    def test_seed_missing_for_sampling(self):
        config = json.loads(json.dumps(SMALL_FIELD))
        del config["output"]["seed"]
        self.assertFails("sample-field", self.write_config(config))


if __name__ == '__main__':
    unittest.main()
