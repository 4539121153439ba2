"""JSON schemas (version 1) and CSV writers.

Every JSON document carries ``"schema"`` and ``"version"`` keys. Complex
matrices are nested lists of ``[re, im]`` pairs. See ``docs/schemas.md``.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ObservableError, SchemaError, ShapeError, ValidationError
from .qudit import DensityMatrix, unitarity_residual
from .randmeas import MomentEstimate, Observable, SettingRecord

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
UNITARY_TOL = 1e-6

STATE = "rmcert.state"
DATASET = "rmcert.dataset"
TOMO = "rmcert.tomo-counts"
ESTIMATE = "rmcert.estimate"
REPORT = "rmcert.report"
UNITARIES = "rmcert.unitaries"


@dataclass(frozen=True, eq=False)
class RandomizedDataset:
    d: int
    observable: Observable
    records: list
    metadata: dict = field(default_factory=dict)

    @property
    def n_settings(self):
        return len(self.records)

    def unitaries(self):
        return np.array([r.U_a for r in self.records]), np.array([r.U_b for r in self.records])

    def correlators(self):
        """Per-record correlator: stored ``x`` if present, else from counts."""
        from .randmeas import x_from_counts

        return np.array([r.x if r.x is not None else x_from_counts(r, self.observable) for r in self.records])


def _cplx_to_json(m):
    m = np.asarray(m, dtype=complex)
    return np.stack([m.real, m.imag], axis=-1).tolist()


def _cplx_from_json(data, where):
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"not a numeric array ({exc})", where) from exc
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise SchemaError("complex entries must be [re, im] pairs", where)
    return arr[..., 0] + 1j * arr[..., 1]


def _header(kind):
    return {"schema": kind, "version": SCHEMA_VERSION}


def _write_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    return path


def read_json(path, kind=None):
    """Parse ``path``; malformed JSON raises :class:`SchemaError` at ``line:col``."""
    path = Path(path)
    text = path.read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from exc
    if kind is not None:
        if not isinstance(obj, dict):
            raise SchemaError("top level must be an object", str(path))
        if obj.get("schema") != kind:
            raise SchemaError(f"expected schema {kind!r}, got {obj.get('schema')!r}", str(path))
        if obj.get("version") != SCHEMA_VERSION:
            raise SchemaError(f"unsupported version {obj.get('version')!r}", str(path))
    return obj


def _require(obj, key, where):
    if key not in obj:
        raise SchemaError(f"missing key {key!r}", where)
    return obj[key]


# states


def save_state(rho, path):
    return _write_json({**_header(STATE), **rho.to_dict()}, path)


def load_state(path):
    obj = read_json(path, STATE)
    try:
        return DensityMatrix.from_dict(obj)
    except KeyError as exc:
        raise SchemaError(f"missing key {exc.args[0]!r}", str(path)) from exc


# randomized datasets


def dataset_to_dict(ds):
    recs = []
    for r in ds.records:
        item = {"U_a": _cplx_to_json(r.U_a), "U_b": _cplx_to_json(r.U_b)}
        if r.counts is not None:
            item["counts"] = np.asarray(r.counts).astype(np.int64).tolist()
        if r.x is not None:
            item["x"] = float(r.x)
        recs.append(item)
    return {
        **_header(DATASET),
        "d": int(ds.d),
        "observable": [float(v) for v in ds.observable.eigenvalues],
        "metadata": ds.metadata,
        "records": recs,
    }


def save_dataset(ds, path):
    return _write_json(dataset_to_dict(ds), path)


def _parse_record(i, item, d):
    where = f"records[{i}]"
    if not isinstance(item, dict):
        raise SchemaError("record must be an object", where)
    us = []
    for key in ("U_a", "U_b"):
        u = _cplx_from_json(_require(item, key, where), f"{where}.{key}")
        if u.shape != (d, d):
            raise ShapeError(f"{where}.{key}: expected {d}x{d} unitary, got {u.shape}")
        res = unitarity_residual(u)
        log.debug("%s.%s unitarity residual %.3e", where, key, res)
        if res > UNITARY_TOL:
            raise ValidationError(f"{where}.{key} is not unitary (residual {res:.3e})", record=i)
        us.append(u)
    counts = item.get("counts")
    if counts is not None:
        c = np.asarray(counts)
        if c.shape != (d, d):
            raise ShapeError(f"{where}.counts: expected {d}x{d}, got shape {c.shape}")
        if not np.issubdtype(c.dtype, np.integer) or np.any(c < 0):
            raise ValidationError(f"{where}.counts must be nonnegative integers", record=i)
        counts = c.astype(np.int64)
    x = item.get("x")
    if counts is None and x is None:
        raise SchemaError("record needs counts or x", where)
    return SettingRecord(us[0], us[1], counts=counts, x=None if x is None else float(x))


def dataset_from_dict(obj):
    d = int(_require(obj, "d", "$"))
    lam = _require(obj, "observable", "$")
    try:
        obs = Observable(d, lam)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ObservableError):
            raise
        raise ObservableError(f"bad observable eigenvalues: {exc}") from exc
    recs = _require(obj, "records", "$")
    if not isinstance(recs, list):
        raise SchemaError("records must be a list", "$.records")
    records = [_parse_record(i, item, d) for i, item in enumerate(recs)]
    return RandomizedDataset(d, obs, records, dict(obj.get("metadata", {})))


def ingest(path):
    """Load and validate a randomized-measurement dataset."""
    ds = dataset_from_dict(read_json(path, DATASET))
    log.info("ingested %d settings (d=%d) from %s", ds.n_settings, ds.d, path)
    return ds


# unitary settings


def save_unitaries(ua, ub, path, metadata=None):
    ua, ub = np.asarray(ua), np.asarray(ub)
    settings = [{"U_a": _cplx_to_json(a), "U_b": _cplx_to_json(b)} for a, b in zip(ua, ub)]
    return _write_json({**_header(UNITARIES), "d": int(ua.shape[-1]), "settings": settings, "metadata": metadata or {}}, path)


def load_unitaries(path):
    """Stacked ``(U_a, U_b)``; each matrix is checked for unitarity."""
    obj = read_json(path, UNITARIES)
    d = int(_require(obj, "d", "$"))
    settings = _require(obj, "settings", "$")
    if not isinstance(settings, list) or not settings:
        raise SchemaError("settings must be a nonempty list", "$.settings")
    ua = np.empty((len(settings), d, d), dtype=complex)
    ub = np.empty_like(ua)
    for i, item in enumerate(settings):
        if not isinstance(item, dict):
            raise SchemaError("setting must be an object", f"settings[{i}]")
        rec = _parse_record(i, {**item, "x": 0.0}, d)
        ua[i], ub[i] = rec.U_a, rec.U_b
    return ua, ub


# tomography counts


def save_tomo_counts(counts, path, metadata=None):
    c = np.asarray(counts).astype(np.int64)
    return _write_json({**_header(TOMO), "d": int(c.shape[2]), "counts": c.tolist(), "metadata": metadata or {}}, path)


def load_tomo_counts(path):
    from .tomography import TomoData

    obj = read_json(path, TOMO)
    d = int(_require(obj, "d", "$"))
    c = np.asarray(_require(obj, "counts", "$"))
    if c.shape != (d + 1, d + 1, d, d):
        raise ShapeError(f"tomography counts must have shape {(d + 1, d + 1, d, d)}, got {c.shape}")
    return TomoData.from_counts(c)


# estimates and reports


def save_estimate(est, path):
    return _write_json({**_header(ESTIMATE), **est.to_dict()}, path)


def load_estimate(path):
    obj = read_json(path, ESTIMATE)
    try:
        return MomentEstimate.from_dict(obj)
    except KeyError as exc:
        raise SchemaError(f"missing key {exc.args[0]!r}", str(path)) from exc


def save_report(report, path):
    return _write_json({**_header(REPORT), **report}, path)


def load_report(path):
    return read_json(path, REPORT)


# CSV


def write_csv(path, header, rows, fmt="%.17g"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt % v if isinstance(v, (float, np.floating)) else v for v in row])
    return path
