# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import hashlib
import json
import logging
import math
import os
from functools import lru_cache

import numpy as np

from ..core.exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)

SCHEMA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "schemas")


@lru_cache(maxsize=None)
def load_schema(doctype, name):
    """
    Load a field schema shipped with the package.

    Args:
        doctype (str): ``tables`` or ``artifacts``
        name (str): Schema name

    Returns:
        dict: Schema with ``version``, ``field_order`` and ``fields``
    """
    path = os.path.join(SCHEMA_DIR, doctype, f"{name}.json")
    if not os.path.exists(path):
        raise ConfigError(f"No {doctype} schema named {name!r}")
    with open(path) as f:
        return json.load(f)


def to_builtin(value):
    """Convert numpy scalars and arrays to plain Python; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def dumps(data):
    return json.dumps(to_builtin(data), indent=1, sort_keys=True) + "\n"


def validate_record(data, schema):
    """
    Check required fields and the version of an artifact.

    Raises:
        DataError: If a required field is missing or the version differs
    """
    for spec in schema["fields"]:
        if spec.get("reqd") and data.get(spec["fieldname"]) is None:
            raise DataError(f"{schema['name']}: required field {spec['fieldname']!r} is missing")
    if int(data.get("version", -1)) != int(schema["version"]):
        raise DataError(
            f"{schema['name']}: version {data.get('version')} does not match schema version {schema['version']}"
        )


def file_digest(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def write_artifact(name, data, path):
    """
    Write a versioned JSON artifact.

    Args:
        name (str): Artifact schema name
        data (dict): Artifact body; ``version`` is filled in when absent
        path (str): Destination file

    Returns:
        str: sha256 digest of the written file
    """
    schema = load_schema("artifacts", name)
    record = dict(to_builtin(data))
    record.setdefault("version", schema["version"])
    validate_record(record, schema)

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        f.write(dumps(record))
    logger.debug("Wrote %s artifact to %s", name, path)
    return file_digest(path)


def read_artifact(path, name):
    """
    Read and validate a versioned JSON artifact.

    Raises:
        DataError: If the file is missing, malformed or fails validation
    """
    if not os.path.exists(path):
        raise DataError(f"Artifact not found: {path}")
    try:
        with open(path) as f:
            record = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"Artifact {path} is not valid JSON: {str(e)}")
    validate_record(record, load_schema("artifacts", name))
    return record
