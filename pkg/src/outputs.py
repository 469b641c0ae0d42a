"""
CSV and JSON writers. Every file gets a <file>.meta.json sidecar so a run can be
reproduced from its outputs alone.
"""
import csv
import json
import logging
from pathlib import Path

import numpy as np

from src.gateConst import TOOLKIT_VERSION

logger = logging.getLogger(__name__)

# times in seconds; extra columns go after the fixed ones
TRAJECTORY_HEADER = ["t", "F", "G", "A"]
POPULATION_HEADER = ["t", "p0", "p1", "p2", "t_over_tau"]
SWEEP_HEADER = ["scheme", "fwhm_hz", "fidelity", "stderr", "infidelity"]
HISTOGRAM_HEADER = ["count", "occurrences"]
PARITY_HEADER = ["phase_rad", "parity", "shots"]


def jsonable(value):
    """JSON-compatible copy of numpy scalars, arrays and tuples."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def sidecar(path, command, config, seeds=None, threads=1, extra=None):
    meta = {
        "toolkit_version": TOOLKIT_VERSION,
        "command": command,
        "file": Path(path).name,
        "config": config,
        "seeds": seeds or {},
        "threads": int(threads),
    }
    if extra:
        meta.update(extra)
    meta_path = Path(str(path) + ".meta.json")
    meta_path.write_text(json.dumps(jsonable(meta), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return meta_path


def write_csv(path, header, rows, meta=None):
    """
    Write rows under a header line; floats use repr precision.

    Parameters:
    path: output file
    header: column names with SI units
    rows: iterable of row sequences
    meta: keyword arguments for the sidecar (command, config, seeds, threads)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        n = 0
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
            n += 1
    if meta is not None:
        sidecar(path, **meta)
    logger.info("saved %d rows to %s", n, path)
    return path


def write_json(path, payload, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if meta is not None:
        sidecar(path, **meta)
    logger.info("saved %s", path)
    return path


def read_csv(path):
    """Header and string rows of a CSV written by write_csv."""
    with Path(path).open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [row for row in reader]
    return header, rows
