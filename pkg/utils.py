#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
公共工具函数
文件读写、表格导出与配置定位等通用工具
"""

import json
import os
import re
from typing import Dict, List, Any, Optional

import numpy as np
import pandas as pd

from errors import ConfigError


def _json_default(obj: Any):
    """numpy类型转为JSON可序列化对象"""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"无法序列化类型 {type(obj).__name__}")


class FileUtils:
    """文件处理工具类"""

    @staticmethod
    def ensure_directory(directory: str) -> None:
        """确保目录存在"""
        if directory:
            os.makedirs(directory, exist_ok=True)

    @staticmethod
    def read_text_file(file_path: str, encoding: str = 'utf-8') -> str:
        """读取文本文件"""
        if not os.path.exists(file_path):
            raise ConfigError(f"文件不存在: {file_path}")
        with open(file_path, 'r', encoding=encoding) as f:
            return f.read()

    @staticmethod
    def parse_json(text: str, source: str = "配置") -> Dict[str, Any]:
        """解析JSON文本，语法错误带行号"""
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{source}JSON语法错误: {e.msg}", line=e.lineno) from e

    @staticmethod
    def load_json(file_path: str, encoding: str = 'utf-8') -> Dict[str, Any]:
        """加载JSON文件"""
        return FileUtils.parse_json(FileUtils.read_text_file(file_path, encoding), file_path)

    @staticmethod
    def save_json(data: Any, file_path: str, encoding: str = 'utf-8', indent: int = 2) -> str:
        """保存JSON文件"""
        FileUtils.ensure_directory(os.path.dirname(file_path))
        with open(file_path, 'w', encoding=encoding) as f:
            json.dump(data, f, ensure_ascii=False, indent=indent, default=_json_default)
            f.write("\n")
        return file_path

    @staticmethod
    def save_text_file(content: str, file_path: str, encoding: str = 'utf-8') -> str:
        """保存文本文件"""
        FileUtils.ensure_directory(os.path.dirname(file_path))
        with open(file_path, 'w', encoding=encoding) as f:
            f.write(content)
        return file_path


class TableUtils:
    """表格导出工具类"""

    @staticmethod
    def save_csv(rows, file_path: str, columns: Optional[List[str]] = None) -> str:
        """保存CSV（行列表或DataFrame）"""
        df = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows, columns=columns)
        FileUtils.ensure_directory(os.path.dirname(file_path))
        df.to_csv(file_path, index=False, float_format="%.12g")
        return file_path

    @staticmethod
    def member_table(values: Dict[str, np.ndarray]) -> pd.DataFrame:
        """以杆件编号为首列的表"""
        n = len(next(iter(values.values()))) if values else 0
        data = {"member_id": np.arange(n)}
        data.update({k: np.asarray(v) for k, v in values.items()})
        return pd.DataFrame(data)


class ConfigUtils:
    """配置定位工具类"""

    @staticmethod
    def find_key_line(text: Optional[str], key: str, after_line: int = 0) -> Optional[int]:
        """查找键首次出现的行号（从1开始）"""
        if not text:
            return None
        pattern = re.compile(r'"' + re.escape(key) + r'"\s*:')
        for number, line in enumerate(text.splitlines(), start=1):
            if number > after_line and pattern.search(line):
                return number
        return None

    @staticmethod
    def axis_index(axis) -> int:
        """坐标轴名（x/y/z）或整数转为索引"""
        if isinstance(axis, str):
            if axis not in ("x", "y", "z"):
                raise ValueError(f"未知坐标轴: {axis}")
            return "xyz".index(axis)
        return int(axis)
