"""Field dumps (<f8 raw + JSON sidecar), JSON summaries and RFC-4180 CSV tables"""
import csv
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '.17g'


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and enums to JSON-native values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if hasattr(value, 'value') and hasattr(value, 'name'):
        return value.value
    return value


def write_json(path, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(_plain(payload), f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def read_json(path) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


FIELD_KINDS = ('u_re', 'u_im', 'A1', 'A2', 'A3', 'v1', 'v2')


def write_field(directory, name: str, array: np.ndarray, field: str, grid: Dict[str, Any]) -> Path:
    """Write ``<name>.f64`` (little-endian float64, row-major) and the ``<name>.json`` sidecar."""
    if field not in FIELD_KINDS:
        raise ValueError(f"Unknown field kind '{field}', expected one of {', '.join(FIELD_KINDS)}")
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    data = np.ascontiguousarray(np.asarray(array, dtype='<f8'))
    raw = directory / f"{name}.f64"
    with open(raw, 'wb') as f:
        f.write(data.tobytes(order='C'))
    write_json(directory / f"{name}.json", {
        'shape': list(data.shape),
        'layout': 'row-major',
        'field': field,
        'grid': grid,
    })
    logger.debug(f"Dumped {name} {data.shape} to {raw}")
    return raw


def read_field(directory, name: str) -> Tuple[np.ndarray, Dict[str, Any]]:
    """The array of ``<name>.f64`` and its sidecar."""
    directory = Path(directory)
    sidecar = read_json(directory / f"{name}.json")
    if sidecar.get('layout') != 'row-major':
        raise ValueError(f"{name}.json: unsupported layout '{sidecar.get('layout')}'")
    data = np.fromfile(directory / f"{name}.f64", dtype='<f8')
    return data.reshape(sidecar['shape']), sidecar


def format_cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """RFC-4180 table with CRLF line ends and round-trip float formatting."""
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\r\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    return path


def read_csv(path):
    with open(path, 'r', encoding='utf-8', newline='') as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]
