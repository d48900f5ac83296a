"""CSV ingestion for unit-level survival records.

Two layouts are supported. The ``gpu`` schema carries fixed columns
(unit_id, time, event, row, col, cage, slot, node, optional batch) and
expands the three categorical factors into indicators with the highest level
of each dropped as baseline (cage 3, slot 8, node 4), giving 13 design
columns including the intercept. The ``generic`` schema is driven by a small
JSON descriptor naming the role of each column; covariates are taken
verbatim. Validation failures carry 1-based line numbers (header is line 1).
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .model import SurvivalDataset
from .topology import GridSpec, build_location_map


class DatasetValidationError(ValueError):
    """A record or the file layout failed validation."""


GPU_COLUMNS = ("unit_id", "time", "event", "row", "col", "cage", "slot", "node")
GPU_FACTOR_LEVELS = {"cage": 3, "slot": 8, "node": 4}
# highest level of each factor is the baseline and gets no indicator
GPU_COVARIATE_NAMES = (
    ("intercept",)
    + tuple(f"cage_{k}" for k in range(1, 3))
    + tuple(f"slot_{k}" for k in range(1, 8))
    + tuple(f"node_{k}" for k in range(1, 4))
)


def _read_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise DatasetValidationError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DatasetValidationError(f"{path}: file is empty")
    header = [c.strip() for c in rows[0]]
    return header, rows[1:]


def _cell(row, idx, name, lineno):
    if idx >= len(row) or row[idx].strip() == "":
        raise DatasetValidationError(f"line {lineno}: missing value in column {name!r}")
    return row[idx].strip()


def _parse_float(text, name, lineno):
    try:
        return float(text)
    except ValueError:
        raise DatasetValidationError(
            f"line {lineno}: column {name!r} has non-numeric value {text!r}"
        ) from None


def _parse_int(text, name, lineno):
    value = _parse_float(text, name, lineno)
    if value != int(value):
        raise DatasetValidationError(
            f"line {lineno}: column {name!r} must be an integer, got {text!r}"
        )
    return int(value)


def gpu_design_row(cage, slot, node):
    """Indicator expansion with the highest level of each factor as baseline."""
    row = [1.0]
    row += [1.0 if cage == k else 0.0 for k in range(1, 3)]
    row += [1.0 if slot == k else 0.0 for k in range(1, 8)]
    row += [1.0 if node == k else 0.0 for k in range(1, 4)]
    return row


def load_descriptor(path):
    with open(path) as fh:
        descriptor = json.load(fh)
    for key in ("time", "event", "row", "col"):
        if key not in descriptor:
            raise DatasetValidationError(f"descriptor missing required role {key!r}")
    descriptor.setdefault("covariates", [])
    return descriptor


def _column_indices(header, names, path):
    missing = [n for n in names if n not in header]
    if missing:
        raise DatasetValidationError(f"{path}: missing required columns {missing}")
    return {n: header.index(n) for n in names}


def _apply_batch_filter(header, records, filter_batch, batch_column, path):
    if filter_batch is None:
        return records
    if batch_column not in header:
        raise DatasetValidationError(
            f"{path}: --filter-batch given but no {batch_column!r} column present"
        )
    idx = header.index(batch_column)
    kept = []
    for lineno, row in records:
        if _cell(row, idx, batch_column, lineno) == str(filter_batch):
            kept.append((lineno, row))
    return kept


def load_dataset(path, schema, grid: GridSpec, descriptor=None,
                 filter_batch=None) -> SurvivalDataset:
    """Read a survival CSV into a SurvivalDataset.

    schema: "gpu" or "generic" (the latter requires a descriptor dict or a
    path to the descriptor JSON). filter_batch keeps only records whose
    optional batch column matches.
    """
    header, raw = _read_rows(path)
    records = [(i + 2, row) for i, row in enumerate(raw)]  # header is line 1
    locmap = build_location_map(grid)

    if schema == "gpu":
        allowed = set(GPU_COLUMNS) | {"batch"}
        unexpected = [c for c in header if c not in allowed]
        if unexpected:
            raise DatasetValidationError(f"{path}: unexpected columns {unexpected}")
        idx = _column_indices(header, GPU_COLUMNS, path)
        records = _apply_batch_filter(header, records, filter_batch, "batch", path)
        times, events, rows_x, locs, ids = [], [], [], [], []
        for lineno, row in records:
            unit = _cell(row, idx["unit_id"], "unit_id", lineno)
            t = _parse_float(_cell(row, idx["time"], "time", lineno), "time", lineno)
            if t <= 0:
                raise DatasetValidationError(f"line {lineno}: time must be positive, got {t}")
            ev = _parse_int(_cell(row, idx["event"], "event", lineno), "event", lineno)
            if ev not in (0, 1):
                raise DatasetValidationError(f"line {lineno}: event must be 0 or 1, got {ev}")
            r = _parse_int(_cell(row, idx["row"], "row", lineno), "row", lineno)
            c = _parse_int(_cell(row, idx["col"], "col", lineno), "col", lineno)
            if not 1 <= r <= grid.n_r:
                raise DatasetValidationError(
                    f"line {lineno}: row {r} outside 1..{grid.n_r}")
            if not 1 <= c <= grid.n_c:
                raise DatasetValidationError(
                    f"line {lineno}: col {c} outside 1..{grid.n_c}")
            factors = {}
            for name, n_levels in GPU_FACTOR_LEVELS.items():
                val = _parse_int(_cell(row, idx[name], name, lineno), name, lineno)
                if not 1 <= val <= n_levels:
                    raise DatasetValidationError(
                        f"line {lineno}: {name} {val} outside 1..{n_levels}")
                factors[name] = val
            times.append(t)
            events.append(ev)
            rows_x.append(gpu_design_row(factors["cage"], factors["slot"], factors["node"]))
            locs.append(locmap.location_index(r, c))
            ids.append(unit)
        names = GPU_COVARIATE_NAMES
    elif schema == "generic":
        if descriptor is None:
            raise DatasetValidationError("generic schema requires a column descriptor")
        if isinstance(descriptor, str):
            descriptor = load_descriptor(descriptor)
        covariates = list(descriptor.get("covariates", []))
        roles = ["time", "event", "row", "col"] + covariates
        if descriptor.get("unit_id"):
            roles.append(descriptor["unit_id"])
        wanted = [descriptor.get(r, r) if r in ("time", "event", "row", "col") else r
                  for r in roles]
        idx = _column_indices(header, wanted, path)
        records = _apply_batch_filter(header, records, filter_batch,
                                      descriptor.get("batch", "batch"), path)
        id_col = descriptor.get("unit_id")
        times, events, rows_x, locs, ids = [], [], [], [], []
        for lineno, row in records:
            t = _parse_float(_cell(row, idx[descriptor["time"]], "time", lineno),
                             "time", lineno)
            if t <= 0:
                raise DatasetValidationError(f"line {lineno}: time must be positive, got {t}")
            ev = _parse_int(_cell(row, idx[descriptor["event"]], "event", lineno),
                            "event", lineno)
            if ev not in (0, 1):
                raise DatasetValidationError(f"line {lineno}: event must be 0 or 1, got {ev}")
            r = _parse_int(_cell(row, idx[descriptor["row"]], "row", lineno), "row", lineno)
            c = _parse_int(_cell(row, idx[descriptor["col"]], "col", lineno), "col", lineno)
            if not 1 <= r <= grid.n_r:
                raise DatasetValidationError(f"line {lineno}: row {r} outside 1..{grid.n_r}")
            if not 1 <= c <= grid.n_c:
                raise DatasetValidationError(f"line {lineno}: col {c} outside 1..{grid.n_c}")
            xrow = [1.0] + [_parse_float(_cell(row, idx[name], name, lineno), name, lineno)
                            for name in covariates]
            times.append(t)
            events.append(ev)
            rows_x.append(xrow)
            locs.append(locmap.location_index(r, c))
            ids.append(_cell(row, idx[id_col], id_col, lineno) if id_col else str(lineno - 1))
        names = ("intercept",) + tuple(covariates)
    else:
        raise DatasetValidationError(f"unknown schema {schema!r} (expected gpu or generic)")

    if not times:
        raise DatasetValidationError(f"{path}: no records after filtering")
    seen = {}
    for (lineno, _), unit in zip(records, ids):
        if unit in seen:
            raise DatasetValidationError(
                f"line {lineno}: duplicate unit_id {unit!r} (first seen line {seen[unit]})")
        seen[unit] = lineno

    return SurvivalDataset(
        time=np.asarray(times),
        event=np.asarray(events, dtype=int),
        X=np.asarray(rows_x),
        loc_index=np.asarray(locs, dtype=np.int64),
        covariate_names=names,
        unit_ids=tuple(ids),
    )


def write_dataset(data: SurvivalDataset, grid: GridSpec, path, descriptor_path=None):
    """Write the generic layout (unit_id, time, event, row, col, covariates).

    Returns the column descriptor; when descriptor_path is given it is also
    saved as JSON so the file can be reloaded with schema="generic".
    """
    n_r = grid.n_r
    rows = np.asarray(data.loc_index % n_r + 1, dtype=int)
    cols = np.asarray(data.loc_index // n_r + 1, dtype=int)
    if np.any(cols > grid.n_c):
        raise ValueError("dataset location indices exceed the grid")
    covariates = list(data.covariate_names[1:])
    ids = data.unit_ids if data.unit_ids is not None else tuple(
        str(k + 1) for k in range(data.n))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "time", "event", "row", "col"] + covariates)
        for i in range(data.n):
            writer.writerow(
                [ids[i], repr(float(data.time[i])), int(data.event[i]),
                 int(rows[i]), int(cols[i])]
                + [repr(float(x)) for x in data.X[i, 1:]]
            )
    descriptor = {
        "schema": "generic",
        "time": "time",
        "event": "event",
        "row": "row",
        "col": "col",
        "unit_id": "unit_id",
        "covariates": covariates,
    }
    if descriptor_path is not None:
        with open(descriptor_path, "w") as fh:
            json.dump(descriptor, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return descriptor


def read_column(path, column):
    """One raw CSV column as strings (for stratified summaries such as KM)."""
    header, raw = _read_rows(path)
    if column not in header:
        raise DatasetValidationError(f"{path}: no column named {column!r}")
    idx = header.index(column)
    return [_cell(row, idx, column, i + 2) for i, row in enumerate(raw)]
