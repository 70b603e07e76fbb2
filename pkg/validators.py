#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
统一数据验证逻辑
运行配置的结构、类型与取值范围检查，在任何计算之前执行
"""

from dataclasses import fields as dataclass_fields
from typing import Dict, List, Any, Optional, Tuple, Union

from config import RegularizationConfig, SystemConfig
from models import GradientPath, MMASettings
from utils import ConfigUtils


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_integer(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


class BaseValidator:
    """基础验证器"""

    @staticmethod
    def validate_required_fields(data: Dict[str, Any], required_fields: List[str],
                                 context: str = "数据") -> Tuple[bool, List[str]]:
        """验证必填字段"""
        errors = [f"{context}缺少必填字段: {f}" for f in required_fields if f not in data]
        return len(errors) == 0, errors

    @staticmethod
    def validate_unknown_fields(data: Dict[str, Any], allowed_fields: List[str],
                                context: str = "数据") -> Tuple[bool, List[str]]:
        """验证没有未知字段"""
        errors = [f"{context}包含未知字段: {f}" for f in data if f not in allowed_fields]
        return len(errors) == 0, errors

    @staticmethod
    def validate_value_range(value: Union[int, float], min_val: Optional[float] = None,
                             max_val: Optional[float] = None, field_name: str = "字段",
                             exclusive_min: bool = False) -> Optional[str]:
        """验证数值范围"""
        if not _is_number(value):
            return f"{field_name}必须为数值，实际{type(value).__name__}"
        if min_val is not None:
            if exclusive_min and value <= min_val:
                return f"{field_name}值{value}必须大于{min_val}"
            if value < min_val:
                return f"{field_name}值{value}小于最小值{min_val}"
        if max_val is not None and value > max_val:
            return f"{field_name}值{value}大于最大值{max_val}"
        return None


class RunConfigValidator(BaseValidator):
    """运行配置验证器"""

    TOP_LEVEL_KEYS = ["name", "description", "lattice", "bc", "field",
                      "regularization", "optimization", "output"]

    SECTION_KEYS: Dict[str, List[str]] = {
        "lattice": ["generator", "file", "nx", "ny", "nz", "cell_w", "cell_h", "cell",
                    "diagonals", "holes", "edges", "scale", "n", "spacing", "dimension"],
        "bc": ["fixed", "loads"],
        "field": ["mean", "sigma", "uncorrelated", "beta", "nu", "dimension",
                  "length_scale", "anisotropy"],
        "regularization": ["filter_radius", "penalty", "s_star"],
        "optimization": ["alpha", "alphas", "v_max", "a_max", "a_min", "max_iters", "tol",
                         "j_star", "sigma_star", "gradient_path", "mma"],
        "output": ["directory", "formats", "seed", "debug_matrices", "record_timing"],
    }

    SELECTOR_KEYS = ["point", "axis", "value", "box", "cylinder", "tol"]

    # 各命令的必需节
    COMMAND_SECTIONS: Dict[str, List[str]] = {
        "optimize": ["lattice", "bc", "field", "optimization"],
        "validate": ["lattice", "bc", "field", "optimization"],
        "pareto": ["lattice", "bc", "field", "optimization"],
        "sample-field": ["lattice", "field"],
        "penalty-curve": [],
    }

    SAMPLING_COMMANDS = ("sample-field", "validate")

    GENERATOR_REQUIRED = {
        "grid": ["nx", "ny"],
        "bcc": ["nx", "ny", "nz"],
        "bracket": [],
        "chain": ["n"],
    }

    def __init__(self, text: Optional[str] = None):
        self.text = text
        self.errors: List[str] = []

    def _line(self, section: Optional[str], key: Optional[str]) -> Optional[int]:
        if not self.text:
            return None
        after = 0
        if section:
            after = (ConfigUtils.find_key_line(self.text, section) or 1) - 1
        if key is None:
            return after + 1 if section else None
        return ConfigUtils.find_key_line(self.text, key, after) or (after + 1 if section else None)

    def _error(self, message: str, section: Optional[str] = None, key: Optional[str] = None):
        line = self._line(section, key)
        self.errors.append(f"第{line}行: {message}" if line else message)

    def _check_range(self, data: Dict, section: str, key: str, min_val=None, max_val=None,
                     exclusive_min: bool = False, integer: bool = False):
        if key not in data:
            return
        value = data[key]
        if integer and not _is_integer(value):
            self._error(f"{section}.{key}必须为整数，实际{value!r}", section, key)
            return
        message = self.validate_value_range(value, min_val, max_val, f"{section}.{key}", exclusive_min)
        if message:
            self._error(message, section, key)

    def _check_keys(self, data: Any, allowed: List[str], section: str, context: str) -> bool:
        if not isinstance(data, dict):
            self._error(f"{context}必须为对象", section)
            return False
        _, errors = self.validate_unknown_fields(data, allowed, context)
        for message, key in zip(errors, [k for k in data if k not in allowed]):
            self._error(message, section, key)
        return True

    def validate(self, config: Any, command: str = "optimize",
                 seed_override: Optional[int] = None,
                 alphas_override: Optional[List[float]] = None) -> Tuple[bool, List[str]]:
        """验证运行配置，返回 (是否通过, 错误列表)"""
        self.errors = []
        if command not in self.COMMAND_SECTIONS:
            self._error(f"未知命令: {command}")
            return False, self.errors
        if not self._check_keys(config, self.TOP_LEVEL_KEYS, None, "配置"):
            return False, self.errors

        _, missing = self.validate_required_fields(config, self.COMMAND_SECTIONS[command], "配置")
        for message in missing:
            self._error(message)

        checks = {
            "lattice": self._validate_lattice,
            "bc": self._validate_bc,
            "field": self._validate_field,
            "regularization": self._validate_regularization,
            "optimization": self._validate_optimization,
            "output": self._validate_output,
        }
        for section, check in checks.items():
            if section in config and self._check_keys(config[section], self.SECTION_KEYS[section],
                                                       section, section):
                check(config[section])

        output = config.get("output")
        has_seed = isinstance(output, dict) and "seed" in output
        if command in self.SAMPLING_COMMANDS and seed_override is None and not has_seed:
            self._error(f"{command}命令需要随机种子（output.seed或--seed）", "output")
        optimization = config.get("optimization")
        if command == "pareto" and alphas_override is None and isinstance(optimization, dict):
            if "alphas" not in optimization:
                self._error("pareto命令需要optimization.alphas（或--alphas）", "optimization")
        return len(self.errors) == 0, self.errors

    def _validate_lattice(self, data: Dict):
        has_generator, has_file = "generator" in data, "file" in data
        if has_generator == has_file:
            self._error("lattice必须且只能给出generator或file之一", "lattice")
            return
        if has_file:
            if not isinstance(data["file"], str):
                self._error("lattice.file必须为字符串", "lattice", "file")
            return
        name = data["generator"]
        if name not in self.GENERATOR_REQUIRED:
            self._error(f"未知的点阵生成器: {name}", "lattice", "generator")
            return
        _, missing = self.validate_required_fields(data, self.GENERATOR_REQUIRED[name], "lattice")
        for message in missing:
            self._error(message, "lattice")
        for key in ("nx", "ny", "nz", "n", "scale"):
            self._check_range(data, "lattice", key, 1, integer=True)
        for key in ("cell_w", "cell_h", "cell", "spacing"):
            self._check_range(data, "lattice", key, 0.0, exclusive_min=True)
        self._check_range(data, "lattice", "dimension", 1, 3, integer=True)
        if "diagonals" in data and data["diagonals"] not in ("none", "single", "double"):
            self._error(f"lattice.diagonals必须为none/single/double: {data['diagonals']}",
                        "lattice", "diagonals")
        if "edges" in data and not isinstance(data["edges"], bool):
            self._error("lattice.edges必须为布尔值", "lattice", "edges")
        for hole in data.get("holes", []):
            if not (isinstance(hole, list) and len(hole) == 4 and all(_is_integer(h) for h in hole)):
                self._error(f"lattice.holes每项必须为4个整数 [i0, j0, i1, j1]: {hole}", "lattice", "holes")

    def _validate_selector(self, selector: Any, context: str):
        if not self._check_keys(selector, self.SELECTOR_KEYS, "bc", f"{context}.selector"):
            return
        if not any(k in selector for k in ("point", "axis", "box", "cylinder")):
            self._error(f"{context}.selector缺少条件（point/axis/box/cylinder）", "bc")
        if "axis" in selector and "value" not in selector:
            self._error(f"{context}.selector给出axis时需要value", "bc", "axis")
        if "axis" in selector and selector["axis"] not in ("x", "y", "z", 0, 1, 2):
            self._error(f"{context}.selector.axis非法: {selector['axis']}", "bc", "axis")
        box = selector.get("box")
        if box is not None and not (isinstance(box, dict) and set(box) == {"min", "max"}):
            self._error(f"{context}.selector.box必须包含min与max", "bc", "box")
        cyl = selector.get("cylinder")
        if cyl is not None:
            allowed = ["axis", "center", "radius_range", "angle_range"]
            if self._check_keys(cyl, allowed, "bc", f"{context}.selector.cylinder"):
                for key in ("axis", "center", "radius_range"):
                    if key not in cyl:
                        self._error(f"{context}.selector.cylinder缺少{key}", "bc", "cylinder")

    def _validate_bc(self, data: Dict):
        for name, required in (("fixed", ["selector"]), ("loads", ["selector", "force"])):
            items = data.get(name, [])
            if not isinstance(items, list):
                self._error(f"bc.{name}必须为列表", "bc", name)
                continue
            allowed = ["selector", "dofs"] if name == "fixed" else ["selector", "force", "distribute"]
            for k, item in enumerate(items):
                context = f"bc.{name}[{k}]"
                if not self._check_keys(item, allowed, "bc", context):
                    continue
                _, missing = self.validate_required_fields(item, required, context)
                for message in missing:
                    self._error(message, "bc", name)
                if "selector" in item:
                    self._validate_selector(item["selector"], context)
                if "force" in item and not (isinstance(item["force"], list)
                                            and all(_is_number(x) for x in item["force"])):
                    self._error(f"{context}.force必须为数值列表", "bc", "force")
                if "dofs" in item and not (isinstance(item["dofs"], list)
                                           and all(_is_integer(x) for x in item["dofs"])):
                    self._error(f"{context}.dofs必须为整数列表", "bc", "dofs")

    def _validate_field(self, data: Dict):
        if "mean" not in data:
            self._error("field缺少必填字段: mean", "field")
        else:
            mean = data["mean"]
            values = mean if isinstance(mean, list) else [mean]
            if not all(_is_number(v) and v > 0 for v in values) or not values:
                self._error("field.mean必须为正数或正数列表", "field", "mean")

        if ("sigma" in data) == ("uncorrelated" in data):
            self._error("field必须且只能给出sigma或uncorrelated之一", "field")
        self._check_range(data, "field", "sigma", 0.0)
        self._check_range(data, "field", "uncorrelated", 0.0)
        if "beta" in data and "nu" in data:
            self._error("field.beta与field.nu不能同时给出", "field", "nu")
        self._check_range(data, "field", "beta", 1, integer=True)
        self._check_range(data, "field", "nu", 0.0, exclusive_min=True)
        self._check_range(data, "field", "dimension", 1, 3, integer=True)

        ell = data.get("length_scale")
        if isinstance(ell, dict):
            if self._check_keys(ell, ["a", "b", "axis"], "field", "field.length_scale"):
                if "a" not in ell:
                    self._error("field.length_scale缺少a", "field", "length_scale")
                self._check_range(ell, "field.length_scale", "a", None)
                self._check_range(ell, "field.length_scale", "b", None)
                if "axis" in ell and ell["axis"] not in ("x", "y", "z", 0, 1, 2):
                    self._error(f"field.length_scale.axis非法: {ell['axis']}", "field", "axis")
        elif ell is not None:
            self._check_range(data, "field", "length_scale", 0.0, exclusive_min=True)

        aniso = data.get("anisotropy")
        if aniso is not None and self._check_keys(aniso, ["direction", "d_par", "d_perp"],
                                                  "field", "field.anisotropy"):
            _, missing = self.validate_required_fields(aniso, ["direction", "d_par", "d_perp"],
                                                       "field.anisotropy")
            for message in missing:
                self._error(message, "field", "anisotropy")
            self._check_range(aniso, "field.anisotropy", "d_par", 0.0, exclusive_min=True)
            self._check_range(aniso, "field.anisotropy", "d_perp", 0.0, exclusive_min=True)

    def _validate_regularization(self, data: Dict):
        self._check_range(data, "regularization", "filter_radius", 0.0)
        self._check_range(data, "regularization", "s_star", 0.0, 1.0, exclusive_min=True)
        penalty = data.get("penalty")
        if penalty is None:
            return
        if isinstance(penalty, str):
            presets = list(RegularizationConfig.PENALTY_PRESETS) + ["none"]
            if penalty not in presets:
                self._error(f"未知的惩罚曲线预设: {penalty}（可选{presets}）", "regularization", "penalty")
            return
        if self._check_keys(penalty, ["control_points"], "regularization", "regularization.penalty"):
            points = penalty.get("control_points")
            n_points = RegularizationConfig.SPLINE_DEGREE + 2
            if not (isinstance(points, list) and len(points) == n_points
                    and all(isinstance(p, list) and len(p) == 2 and all(_is_number(x) for x in p)
                            for p in points)):
                self._error(f"regularization.penalty.control_points必须为{n_points}个二维点",
                            "regularization", "control_points")

    def _validate_optimization(self, data: Dict):
        for key in ("v_max", "a_max"):
            if key not in data:
                self._error(f"optimization缺少必填字段: {key}", "optimization")
            self._check_range(data, "optimization", key, 0.0, exclusive_min=True)
        self._check_range(data, "optimization", "alpha", 0.0, 1.0)
        self._check_range(data, "optimization", "a_min", 0.0)
        if _is_number(data.get("a_min")) and _is_number(data.get("a_max")) and data["a_min"] >= data["a_max"]:
            self._error("optimization.a_min必须小于a_max", "optimization", "a_min")
        self._check_range(data, "optimization", "max_iters", 1, integer=True)
        self._check_range(data, "optimization", "tol", 0.0, exclusive_min=True)
        self._check_range(data, "optimization", "j_star", 0.0, exclusive_min=True)
        self._check_range(data, "optimization", "sigma_star", 0.0, exclusive_min=True)
        alphas = data.get("alphas")
        if alphas is not None and not (isinstance(alphas, list) and alphas
                                       and all(_is_number(a) and 0.0 <= a <= 1.0 for a in alphas)):
            self._error("optimization.alphas必须为[0,1]内数值组成的非空列表", "optimization", "alphas")
        path = data.get("gradient_path")
        if path is not None and path not in [p.value for p in GradientPath]:
            self._error(f"optimization.gradient_path非法: {path}", "optimization", "gradient_path")
        mma = data.get("mma")
        if mma is not None:
            allowed = [f.name for f in dataclass_fields(MMASettings)
                       if f.name not in ("max_iterations", "tolerance")]
            if self._check_keys(mma, allowed, "optimization", "optimization.mma"):
                for key in mma:
                    self._check_range(mma, "optimization.mma", key, 0.0, exclusive_min=True)

    def _validate_output(self, data: Dict):
        if "directory" in data and not isinstance(data["directory"], str):
            self._error("output.directory必须为字符串", "output", "directory")
        formats = data.get("formats")
        if formats is not None and not (isinstance(formats, list)
                                        and all(f in SystemConfig.OUTPUT_FORMATS for f in formats)):
            self._error(f"output.formats只能包含{SystemConfig.OUTPUT_FORMATS}", "output", "formats")
        self._check_range(data, "output", "seed", 0, integer=True)
        for key in ("debug_matrices", "record_timing"):
            if key in data and not isinstance(data[key], bool):
                self._error(f"output.{key}必须为布尔值", "output", key)
