"""Strict parsers for the three consumed CSV schemas.

Invalid data is rejected before any drawing happens; every error names the
offending column or row so the producing run can be fixed.  These parsers
never modify their inputs and do no computation beyond validation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class SchemaError(ValueError):
    pass


def _read_table(path: Path) -> tuple[list[str], np.ndarray, list[list[str]]]:
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise SchemaError(f"{path}: need a header line and at least one data row")
    header = lines[0].split(",")
    raw = [ln.split(",") for ln in lines[1:]]
    for i, row in enumerate(raw, start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}:{i}: expected {len(header)} columns, found {len(row)}")
    return header, np.array(raw, dtype=object), raw


def _float_column(path, header, raw, name) -> np.ndarray:
    idx = header.index(name)
    try:
        col = np.array([float(r[idx]) for r in raw])
    except ValueError as exc:
        raise SchemaError(f"{path}: column '{name}' holds a non-numeric value: {exc}") from exc
    if not np.all(np.isfinite(col)):
        raise SchemaError(f"{path}: column '{name}' holds non-finite values")
    return col


@dataclass
class PlaneTable:
    a_values: np.ndarray        # sorted unique grid coordinates
    b_values: np.ndarray
    losses: np.ndarray          # (len(a), len(b), n_domains)
    domain_columns: list[str]


def load_plane(path: str | Path) -> PlaneTable:
    """Grid of per-domain losses: columns a,b,loss_domain*..., row-major."""
    path = Path(path)
    header, _, raw = _read_table(path)
    if header[:2] != ["a", "b"]:
        raise SchemaError(f"{path}: first columns must be 'a,b', found {header[:2]}")
    domain_cols = header[2:]
    if not domain_cols or not all(c.startswith("loss_domain") for c in domain_cols):
        bad = next((c for c in domain_cols if not c.startswith("loss_domain")), "<none>")
        raise SchemaError(f"{path}: expected loss_domain* columns, found '{bad}'")
    a = _float_column(path, header, raw, "a")
    b = _float_column(path, header, raw, "b")
    losses = np.column_stack([_float_column(path, header, raw, c) for c in domain_cols])

    a_values = np.unique(a)
    b_values = np.unique(b)
    if a_values.size * b_values.size != len(raw):
        raise SchemaError(f"{path}: rows do not form a complete (a, b) grid")
    # row-major ordering with monotone coordinates
    expect_a = np.repeat(a_values, b_values.size)
    expect_b = np.tile(b_values, a_values.size)
    if not (np.array_equal(a, expect_a) and np.array_equal(b, expect_b)):
        raise SchemaError(f"{path}: grid coordinates are not in row-major monotone order")
    grid = losses.reshape(a_values.size, b_values.size, len(domain_cols))
    return PlaneTable(a_values, b_values, grid, domain_cols)


@dataclass
class PlaneAnnotations:
    anchors: np.ndarray   # (n, 2)
    centroid: np.ndarray  # (2,)


def load_plane_annotations(path: str | Path) -> PlaneAnnotations:
    import json

    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: cannot read plane annotations: {exc}") from exc
    for key in ("anchors", "centroid"):
        if key not in payload:
            raise SchemaError(f"{path}: annotation file missing key '{key}'")
    anchors = np.asarray(payload["anchors"], dtype=float)
    centroid = np.asarray(payload["centroid"], dtype=float)
    if anchors.ndim != 2 or anchors.shape[1] != 2 or centroid.shape != (2,):
        raise SchemaError(f"{path}: anchors must be (n, 2) and centroid (2,)")
    return PlaneAnnotations(anchors, centroid)


@dataclass
class TraceTable:
    steps: np.ndarray
    fractions: np.ndarray  # (n_steps, n_domains)
    domain_columns: list[str]


def load_adamtrace(path: str | Path, tol: float = 1e-6) -> TraceTable:
    """Per-step momentum shares: columns step,domain_0..; rows must sum to 1."""
    path = Path(path)
    header, _, raw = _read_table(path)
    if header[0] != "step":
        raise SchemaError(f"{path}: first column must be 'step', found '{header[0]}'")
    domain_cols = header[1:]
    expected = [f"domain_{d}" for d in range(len(domain_cols))]
    if domain_cols != expected:
        bad = next((c for c, e in zip(domain_cols, expected) if c != e), domain_cols[-1])
        raise SchemaError(f"{path}: unexpected fraction column '{bad}'")
    steps = _float_column(path, header, raw, "step")
    if np.any(np.diff(steps) <= 0):
        raise SchemaError(f"{path}: column 'step' must be strictly increasing")
    fractions = np.column_stack([_float_column(path, header, raw, c) for c in domain_cols])
    if np.any(fractions < -tol) or np.any(fractions > 1 + tol):
        raise SchemaError(f"{path}: fractions outside [0, 1]")
    sums = fractions.sum(axis=1)
    off = np.argmax(np.abs(sums - 1.0))
    if abs(sums[off] - 1.0) > tol:
        raise SchemaError(
            f"{path}: fraction row at step {steps[off]:g} sums to {sums[off]!r}, not 1"
        )
    return TraceTable(steps, fractions, domain_cols)


@dataclass
class SweepTable:
    schemes: list[str]
    k_values: dict[str, np.ndarray]
    target_mean: dict[str, np.ndarray]
    target_sd: dict[str, np.ndarray]


SWEEP_COLUMNS = ["scheme", "k", "n_seeds", "val_mean", "val_sd", "target_mean", "target_sd"]


def load_sweep(path: str | Path) -> SweepTable:
    """Per-(scheme, steps-per-domain) accuracies with spread over seeds."""
    path = Path(path)
    header, _, raw = _read_table(path)
    if header != SWEEP_COLUMNS:
        bad = next((c for c in header if c not in SWEEP_COLUMNS), "<missing>")
        raise SchemaError(f"{path}: unexpected sweep column '{bad}'; need {SWEEP_COLUMNS}")
    k = _float_column(path, header, raw, "k")
    mean = _float_column(path, header, raw, "target_mean")
    sd = _float_column(path, header, raw, "target_sd")
    if np.any(mean < 0) or np.any(mean > 1):
        raise SchemaError(f"{path}: column 'target_mean' outside [0, 1]")
    schemes = [r[0] for r in raw]
    table = SweepTable([], {}, {}, {})
    for i, scheme in enumerate(schemes):
        if scheme not in table.schemes:
            table.schemes.append(scheme)
            table.k_values[scheme] = []
            table.target_mean[scheme] = []
            table.target_sd[scheme] = []
        table.k_values[scheme].append(k[i])
        table.target_mean[scheme].append(mean[i])
        table.target_sd[scheme].append(sd[i])
    for scheme in table.schemes:
        order = np.argsort(table.k_values[scheme])
        table.k_values[scheme] = np.asarray(table.k_values[scheme])[order]
        table.target_mean[scheme] = np.asarray(table.target_mean[scheme])[order]
        table.target_sd[scheme] = np.asarray(table.target_sd[scheme])[order]
    return table
