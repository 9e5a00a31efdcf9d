"""Readers for the markovlens CSV artifacts.

Files carry `# key=value` comment lines before a standard CSV header row.
Numeric metadata (entropy baselines, kernel parameters) is taken from those
comments verbatim; nothing is recomputed here.
"""

from __future__ import annotations

import csv

import numpy as np


class ArtifactError(ValueError):
    """Malformed or unusable input artifact."""


class MissingColumnError(ArtifactError):
    def __init__(self, column: str, path: str):
        super().__init__(f"column {column!r} missing from {path}")
        self.column = column


class EmptyInputError(ArtifactError):
    def __init__(self, path: str):
        super().__init__(f"no data rows in {path}")


def read_artifact(path: str) -> tuple[dict[str, str], dict[str, list[str]]]:
    """Parse (header metadata, column -> raw string values)."""
    meta: dict[str, str] = {}
    rows: list[list[str]] = []
    columns: list[str] | None = None
    with open(path, "r", encoding="utf-8", newline="") as fp:
        for line in fp:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    meta[key.strip()] = value.strip()
                continue
            parsed = next(csv.reader([line]))
            if columns is None:
                columns = parsed
            else:
                rows.append(parsed)
    if columns is None or not rows:
        raise EmptyInputError(path)
    table = {name: [] for name in columns}
    for row in rows:
        for name, value in zip(columns, row):
            table[name].append(value)
    return meta, table


def column(table: dict[str, list[str]], name: str, path: str) -> np.ndarray:
    if name not in table:
        raise MissingColumnError(name, path)
    return np.array([float(v) if v != "" else np.nan for v in table[name]])


def meta_float(meta: dict[str, str], key: str, path: str) -> float:
    if key not in meta:
        raise MissingColumnError(key, path)
    return float(meta[key])
