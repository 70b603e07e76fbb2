"""
运行配置验证器单元测试
"""
import copy
import glob
import json
import os
import unittest
from dataclasses import fields as dataclass_fields

from config import PathConfig
from models import MMASettings
from validators import RunConfigValidator

PRESET_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), PathConfig.PRESET_DIR)

BASE_CONFIG = {
    "lattice": {"generator": "grid", "nx": 4, "ny": 2, "cell_w": 1.0, "cell_h": 0.75},
    "bc": {
        "fixed": [{"selector": {"axis": "x", "value": 0.0}}],
        "loads": [{"selector": {"point": [4.0, 0.75]}, "force": [1.0, 0.0]}],
    },
    "field": {"mean": 100.0, "sigma": 10.0, "beta": 1, "length_scale": 2.0},
    "optimization": {"alpha": 1.0, "v_max": 0.5, "a_max": 1.0},
    "output": {"directory": "results/test", "seed": 1},
}


def load_schema():
    with open(os.path.join(PRESET_DIR, "schema.json"), encoding="utf-8") as f:
        return json.load(f)


class TestSchemaSync(unittest.TestCase):
    """验证器与schema.json保持一致"""

    def setUp(self):
        self.schema = load_schema()

    def test_top_level_keys(self):
        self.assertEqual(set(self.schema["properties"]), set(RunConfigValidator.TOP_LEVEL_KEYS))

    def test_section_keys(self):
        for section, keys in RunConfigValidator.SECTION_KEYS.items():
            with self.subTest(section=section):
                self.assertEqual(set(self.schema["properties"][section]["properties"]), set(keys))

    def test_selector_keys(self):
        selector = self.schema["definitions"]["selector"]["properties"]
        self.assertEqual(set(selector), set(RunConfigValidator.SELECTOR_KEYS))

    def test_mma_keys(self):
        mma = self.schema["properties"]["optimization"]["properties"]["mma"]["properties"]
        expected = {f.name for f in dataclass_fields(MMASettings)} - {"max_iterations", "tolerance"}
        self.assertEqual(set(mma), expected)


class TestPresets(unittest.TestCase):
    """全部预设都能通过验证"""

    def test_presets_validate(self):
        paths = [p for p in glob.glob(os.path.join(PRESET_DIR, "*.json"))
                 if os.path.basename(p) != "schema.json"]
        self.assertGreater(len(paths), 10)
        for path in paths:
            with open(path, encoding="utf-8") as f:
                text = f.read()
            config = json.loads(text)
            commands = ["optimize", "validate"] if "bc" in config else ["sample-field"]
            if "alphas" in config.get("optimization", {}):
                commands.append("pareto")
            for command in commands:
                with self.subTest(preset=os.path.basename(path), command=command):
                    ok, errors = RunConfigValidator(text).validate(config, command)
                    self.assertTrue(ok, errors)


class TestRunConfigValidator(unittest.TestCase):
    """配置验证测试"""

    def setUp(self):
        self.validator = RunConfigValidator()
        self.config = copy.deepcopy(BASE_CONFIG)

    def assertInvalid(self, config, command="optimize", fragment=None):
        ok, errors = self.validator.validate(config, command)
        self.assertFalse(ok)
        if fragment:
            self.assertTrue(any(fragment in e for e in errors), errors)
        return errors

    def test_valid_config(self):
        ok, errors = self.validator.validate(self.config)
        self.assertTrue(ok, errors)

    def test_unknown_key_reports_line(self):
        text = "\n".join([
            "{",
            '  "lattice": {"generator": "chain", "n": 2},',
            '  "bc": {"fixed": [{"selector": {"point": [0.0]}}]},',
            '  "field": {',
            '    "mean": 100.0,',
            '    "sigma": 1.0,',
            '    "colour": 3',
            "  },",
            '  "optimization": {"v_max": 1.0, "a_max": 1.0}',
            "}",
        ])
        ok, errors = RunConfigValidator(text).validate(json.loads(text), "optimize")
        self.assertFalse(ok)
        self.assertEqual(len(errors), 1)
        self.assertTrue(errors[0].startswith("第7行"), errors)
        self.assertIn("colour", errors[0])

    def test_unknown_top_level_key(self):
        self.config["solver"] = {}
        self.assertInvalid(self.config, fragment="solver")

    def test_unknown_command(self):
        self.assertInvalid(self.config, command="export")

    def test_missing_section(self):
        del self.config["bc"]
        self.assertInvalid(self.config, fragment="bc")
        ok, _ = self.validator.validate(self.config, "sample-field")
        self.assertTrue(ok)

    def test_seed_required_for_sampling(self):
        del self.config["output"]["seed"]
        self.assertInvalid(self.config, command="validate", fragment="seed")
        ok, _ = self.validator.validate(self.config, "validate", seed_override=4)
        self.assertTrue(ok)
        ok, _ = self.validator.validate(self.config, "optimize")
        self.assertTrue(ok)

    def test_pareto_requires_alphas(self):
        self.assertInvalid(self.config, command="pareto", fragment="alphas")
        ok, _ = self.validator.validate(self.config, "pareto", alphas_override=[1.0, 0.0])
        self.assertTrue(ok)
        self.config["optimization"]["alphas"] = [1.0, 1.5]
        self.assertInvalid(self.config, command="pareto")

    def test_lattice_checks(self):
        self.config["lattice"]["file"] = "lattice.json"
        self.assertInvalid(self.config)
        del self.config["lattice"]["file"]
        self.config["lattice"]["generator"] = "hexagon"
        self.assertInvalid(self.config, fragment="hexagon")
        self.config["lattice"]["generator"] = "grid"
        self.config["lattice"]["nx"] = 2.5
        self.assertInvalid(self.config, fragment="nx")
        self.config["lattice"]["nx"] = 4
        self.config["lattice"]["diagonals"] = "triple"
        self.assertInvalid(self.config, fragment="diagonals")

    def test_selector_checks(self):
        self.config["bc"]["fixed"][0]["selector"] = {"axis": "x"}
        self.assertInvalid(self.config, fragment="value")
        self.config["bc"]["fixed"][0]["selector"] = {"tol": 0.1}
        self.assertInvalid(self.config)
        self.config["bc"]["fixed"][0]["selector"] = {"cylinder": {"axis": "z", "center": [0.0, 0.0]}}
        self.assertInvalid(self.config, fragment="radius_range")

    def test_field_sigma_xor_uncorrelated(self):
        self.config["field"]["uncorrelated"] = 10.0
        self.assertInvalid(self.config, fragment="uncorrelated")
        del self.config["field"]["uncorrelated"]
        del self.config["field"]["sigma"]
        self.assertInvalid(self.config)

    def test_field_beta_and_nu(self):
        self.config["field"]["nu"] = 1.5
        self.assertInvalid(self.config, fragment="nu")
        del self.config["field"]["beta"]
        ok, errors = self.validator.validate(self.config)
        self.assertTrue(ok, errors)
        self.config["field"]["beta"] = 0
        del self.config["field"]["nu"]
        self.assertInvalid(self.config, fragment="beta")

    def test_field_values(self):
        self.config["field"]["mean"] = [100.0, -1.0]
        self.assertInvalid(self.config, fragment="mean")
        self.config["field"]["mean"] = 100.0
        self.config["field"]["sigma"] = -1.0
        self.assertInvalid(self.config, fragment="sigma")
        self.config["field"]["sigma"] = 1.0
        self.config["field"]["length_scale"] = {"b": 0.1}
        self.assertInvalid(self.config, fragment="length_scale")
        self.config["field"]["length_scale"] = 2.0
        self.config["field"]["anisotropy"] = {"direction": [0.0, 1.0], "d_par": 0.0, "d_perp": 5.0}
        self.assertInvalid(self.config, fragment="d_par")

    def test_regularization_checks(self):
        self.config["regularization"] = {"penalty": "harsh"}
        self.assertInvalid(self.config, fragment="harsh")
        self.config["regularization"] = {"penalty": {"control_points": [[0, 0], [0.5, 0.5]]}}
        self.assertInvalid(self.config, fragment="control_points")
        self.config["regularization"] = {"filter_radius": -1.0}
        self.assertInvalid(self.config, fragment="filter_radius")
        self.config["regularization"] = {"penalty": "mild", "filter_radius": 1.0}
        ok, errors = self.validator.validate(self.config)
        self.assertTrue(ok, errors)

    def test_optimization_checks(self):
        self.config["optimization"]["a_min"] = 2.0
        self.assertInvalid(self.config, fragment="a_min")
        del self.config["optimization"]["a_min"]
        self.config["optimization"]["alpha"] = 1.2
        self.assertInvalid(self.config, fragment="alpha")
        self.config["optimization"]["alpha"] = 0.5
        self.config["optimization"]["gradient_path"] = "finite_difference"
        self.assertInvalid(self.config, fragment="gradient_path")
        self.config["optimization"]["gradient_path"] = "per_member"
        self.config["optimization"]["mma"] = {"move_limit": 0.1, "max_iterations": 3}
        self.assertInvalid(self.config, fragment="max_iterations")
        self.config["optimization"]["mma"] = {"move_limit": 0.1}
        ok, errors = self.validator.validate(self.config)
        self.assertTrue(ok, errors)

    def test_output_checks(self):
        self.config["output"]["formats"] = ["csv", "xlsx"]
        self.assertInvalid(self.config, fragment="formats")
        self.config["output"]["formats"] = ["csv"]
        self.config["output"]["seed"] = -3
        self.assertInvalid(self.config, fragment="seed")
        self.config["output"]["seed"] = 3
        self.config["output"]["debug_matrices"] = "yes"
        self.assertInvalid(self.config, fragment="debug_matrices")

    def test_non_object_config(self):
        ok, errors = self.validator.validate([1, 2, 3])
        self.assertFalse(ok)
        self.assertEqual(len(errors), 1)


if __name__ == '__main__':
    unittest.main()
