"""Deterministic JSON reports and per-analysis random generators."""
from __future__ import annotations

import json
import math
import zlib

import numpy as np
import sympy as sp

from . import __version__, symcore

SCHEMA = 1


def analysis_rng(seed: int, name: str) -> np.random.Generator:
    """One generator per analysis so single commands and ``all`` agree."""
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def to_plain(value):
    """Convert results to JSON-ready values; expressions become text."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, sp.Basic):
        return symcore.to_text(value)
    if value is None or isinstance(value, str):
        return value
    return str(value)


def _encode(value, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{_string(k)}: {_encode(value[k], indent, level + 1)}" for k in sorted(value)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        items = [pad + _encode(v, indent, level + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return "null"
        text = format(value, ".17g")
        return text if any(ch in text for ch in ".e") else text + ".0"
    if value is None:
        return "null"
    return _string(value)


def _string(s: str) -> str:
    return json.dumps(s, ensure_ascii=False)


def dumps(report: dict) -> str:
    """Sorted keys, floats at 17 significant digits."""
    return _encode(to_plain(report), 2, 0) + "\n"


def envelope(model, seed: int, analyses: dict) -> dict:
    return {
        "schema": SCHEMA,
        "tool": {"name": "mech", "version": __version__},
        "model": {"name": model.name, "sha256": model.sha256},
        "seed": seed,
        "analyses": analyses,
    }
