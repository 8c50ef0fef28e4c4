# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import io
import json
import logging
import os

import pandas as pd

from ..core.exceptions import DataError
from .artifacts import dumps, file_digest, load_schema

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def table_columns(schema, columns):
    """
    Resolve the column order of a table.

    A field flagged ``repeat`` is a prefix that matches numbered columns
    (``post_1``, ``post_2``...), kept in numeric order.
    """
    resolved = []
    for spec in schema["fields"]:
        name = spec["fieldname"]
        if spec.get("repeat"):
            numbered = [c for c in columns if c.startswith(name) and c[len(name):].isdigit()]
            resolved.extend(sorted(numbered, key=lambda c: int(c[len(name):])))
        elif name in columns:
            resolved.append(name)
        elif spec.get("reqd"):
            raise DataError(f"Table {schema['name']!r} is missing required column {name!r}")
    extra = set(columns) - set(resolved)
    if extra:
        raise DataError(f"Table {schema['name']!r} has undeclared columns {sorted(extra)}")
    return resolved


def _fieldtype(schema, column):
    for spec in schema["fields"]:
        name = spec["fieldname"]
        if name == column or (spec.get("repeat") and column.startswith(name)):
            return spec["fieldtype"]
    return "Data"


def conform(frame, schema):
    """Order and cast the columns of a frame to its schema."""
    columns = table_columns(schema, list(frame.columns))
    out = pd.DataFrame(index=range(len(frame)))
    for column in columns:
        values = frame[column].reset_index(drop=True)
        fieldtype = _fieldtype(schema, column)
        if fieldtype == "Int":
            out[column] = pd.array(values.to_numpy(), dtype="Int64")
        elif fieldtype == "Float":
            out[column] = values.astype(float)
        elif fieldtype == "Check":
            out[column] = values.astype(bool)
        else:
            out[column] = values.map(lambda v: v if pd.isna(v) else str(v))
    return out


def render_csv(frame):
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def parse_csv(text, schema):
    """Parse CSV text with the dtypes declared by the schema."""
    header = pd.read_csv(io.StringIO(text), nrows=0).columns
    columns = table_columns(schema, list(header))
    dtypes = {}
    for column in columns:
        fieldtype = _fieldtype(schema, column)
        dtypes[column] = {"Int": "Int64", "Float": float}.get(fieldtype, str)
    frame = pd.read_csv(io.StringIO(text), dtype=dtypes)
    for column in columns:
        if _fieldtype(schema, column) == "Check":
            frame[column] = frame[column].map({"True": True, "False": False})
    return frame[columns]


def _json_payload(frame, schema):
    records = frame.astype(object).where(frame.notna(), None).to_dict("records")
    return {
        "table": schema["name"],
        "version": schema["version"],
        "columns": list(frame.columns),
        "rows": records,
    }


def emit_tables(tables, directory):
    """
    Write report tables as CSV with a JSON twin.

    Each entry is ``(schema_name, frame)`` or ``(schema_name, frame, stem)``;
    ``stem`` defaults to the schema name. The JSON twin is built from the
    parsed CSV so that re-reading and re-emitting reproduces both files byte
    for byte.

    Args:
        tables (list): Tables to write
        directory (str): Output directory, created when needed

    Returns:
        dict: File name -> sha256 digest; empty when ``tables`` is empty
    """
    digests = {}
    for entry in tables:
        name, frame = entry[0], entry[1]
        stem = entry[2] if len(entry) > 2 else name
        schema = load_schema("tables", name)
        text = render_csv(conform(frame, schema))
        parsed = parse_csv(text, schema)

        os.makedirs(directory, exist_ok=True)
        csv_path = os.path.join(directory, f"{stem}.csv")
        json_path = os.path.join(directory, f"{stem}.json")
        with open(csv_path, "w", newline="") as f:
            f.write(text)
        with open(json_path, "w") as f:
            f.write(dumps(_json_payload(parsed, schema)))
        digests[f"{stem}.csv"] = file_digest(csv_path)
        digests[f"{stem}.json"] = file_digest(json_path)
        logger.debug("Wrote table %s (%d rows) to %s", name, len(frame), csv_path)
    return digests


def read_table(path, name=None):
    """
    Read a table written by emit_tables.

    Args:
        path (str): CSV file
        name (str, optional): Schema name; taken from the JSON twin when omitted

    Returns:
        tuple: (schema name, pandas.DataFrame)
    """
    if not os.path.exists(path):
        raise DataError(f"Table not found: {path}")
    if name is None:
        twin = os.path.splitext(path)[0] + ".json"
        if not os.path.exists(twin):
            raise DataError(f"Cannot tell the schema of {path}: no JSON twin and no name given")
        with open(twin) as f:
            name = json.load(f)["table"]
    schema = load_schema("tables", name)
    with open(path, newline="") as f:
        text = f.read()
    return name, parse_csv(text, schema)
