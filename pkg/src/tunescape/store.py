"""Persistence of tuning caches and ingestion of external tuner output.

Native cache files are canonical JSON (schema below): keys sorted,
floats in shortest round-trip form, two-space indent, trailing newline.
Writing the same cache twice yields byte-identical files, and
write -> read is the identity.

Native schema (version 1)::

    {
      "schema_version": 1,
      "kernel_name": "...",
      "device_name": "...",
      "space_fingerprint": "..." | null,
      "param_order": ["...", ...],
      "provenance": "native" | "imported",
      "metadata": {"...": "...", ...},
      "records": {
        "<v1,v2,...>": {
          "status": "ok" | "compile_failed" | "runtime_failed"
                    | "invalid" | "timeout",
          "times_ms": [...],          # only when ok and known
          "time_ms": <float>,         # only when ok
          "metric_value": <float>,    # only when ok
          "detail": "..."             # optional diagnostic
        }, ...
      }
    }

The import path understands the cache files written by the external
auto-tuner this package interoperates with: a JSON document whose
``tune_params_keys`` lists the parameter order and whose ``cache`` maps
comma-joined configuration keys to entries carrying a ``time`` field,
numeric (milliseconds) on success or a marker string on failure.
"""

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import CacheFormatError, CacheIOError, SpaceMismatch
from .measure import Observation, Status
from .paramspace import SearchSpaceSpec

SCHEMA_VERSION = 1

# Substring (lower-cased) -> status, checked in order against the marker
# strings external tools store in place of a numeric time.
DEFAULT_FAILURE_MARKERS: tuple[tuple[str, Status], ...] = (
    ("compil", Status.COMPILE_FAILED),
    ("invalid", Status.INVALID),
    ("timeout", Status.TIMEOUT),
    ("timed out", Status.TIMEOUT),
    ("runtime", Status.RUNTIME_FAILED),
)


@dataclass
class TuningCache:
    """All recorded measurements of one kernel on one device."""

    kernel_name: str
    device_name: str
    param_order: tuple[str, ...]
    records: dict[str, Observation] = field(default_factory=dict)
    space_fingerprint: str | None = None
    provenance: str = "native"
    metadata: dict[str, str] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.param_order = tuple(self.param_order)
        if self.provenance not in ("native", "imported"):
            raise CacheFormatError(f"bad provenance {self.provenance!r}")
        arity = len(self.param_order)
        for key in self.records:
            if key.count(",") + 1 != arity:
                raise CacheFormatError(
                    f"record key {key!r} has {key.count(',') + 1} values, "
                    f"param_order has {arity}"
                )

    def ok_records(self) -> dict[str, Observation]:
        return {k: o for k, o in self.records.items() if o.ok}

    def n_failed(self) -> int:
        return sum(1 for o in self.records.values() if not o.ok)


@dataclass(frozen=True)
class DeviceMeta:
    """Sidecar description of a device (vendor, cores, bandwidth, ...)."""

    device_name: str
    vendor: str = ""
    properties: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.device_name:
            raise CacheFormatError("device_name must be non-empty")


def check_space(cache: TuningCache, space: SearchSpaceSpec) -> None:
    """Refuse analysis when a cache does not belong to the given space.

    Caches written by this package carry the space fingerprint; imported
    caches may only have the parameter order to compare.
    """
    if cache.space_fingerprint is not None:
        if cache.space_fingerprint != space.fingerprint():
            raise SpaceMismatch(
                f"cache {cache.kernel_name}/{cache.device_name} was recorded "
                f"for a different space (fingerprint mismatch)"
            )
    elif cache.param_order != space.param_names:
        raise SpaceMismatch(
            f"cache parameter order {list(cache.param_order)} does not match "
            f"space parameters {list(space.param_names)}"
        )


def _validate_float(value: float, what: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise CacheFormatError(f"{what} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise CacheFormatError(f"{what} must be finite, got {value!r}")
    return float(value)


def _observation_to_json(key: str, obs: Observation) -> dict:
    doc: dict[str, Any] = {"status": obs.status.value}
    if obs.ok:
        doc["time_ms"] = _validate_float(obs.time_ms, f"time_ms of {key!r}")
        if obs.times_ms:
            doc["times_ms"] = [
                _validate_float(t, f"times_ms of {key!r}") for t in obs.times_ms
            ]
        if obs.metric_value is not None:
            doc["metric_value"] = _validate_float(
                obs.metric_value, f"metric_value of {key!r}"
            )
    if obs.detail is not None:
        doc["detail"] = obs.detail
    return doc


def _observation_from_json(key: str, doc: Any) -> Observation:
    if not isinstance(doc, dict):
        raise CacheFormatError(f"record {key!r} is not an object")
    try:
        status = Status(doc["status"])
    except KeyError:
        raise CacheFormatError(f"record {key!r} has no status") from None
    except ValueError:
        raise CacheFormatError(
            f"record {key!r} has unknown status {doc['status']!r}"
        ) from None
    if status is Status.OK:
        time_ms = _validate_float(doc.get("time_ms"), f"time_ms of {key!r}")
        times = tuple(
            _validate_float(t, f"times_ms of {key!r}") for t in doc.get("times_ms", [])
        )
        metric = doc.get("metric_value")
        if metric is not None:
            metric = _validate_float(metric, f"metric_value of {key!r}")
        return Observation(status, times, time_ms, metric, doc.get("detail"))
    return Observation(status, detail=doc.get("detail"))


def dumps_cache(cache: TuningCache) -> str:
    """Canonical JSON text of a cache (deterministic byte-for-byte)."""
    records = {k: _observation_to_json(k, o) for k, o in cache.records.items()}
    doc = {
        "schema_version": cache.schema_version,
        "kernel_name": cache.kernel_name,
        "device_name": cache.device_name,
        "space_fingerprint": cache.space_fingerprint,
        "param_order": list(cache.param_order),
        "provenance": cache.provenance,
        "metadata": dict(cache.metadata),
        "records": records,
    }
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_cache(cache: TuningCache, path: str | Path) -> Path:
    """Write atomically (temp file + rename) in canonical form."""
    path = Path(path)
    text = dumps_cache(cache)
    try:
        fd, tmp = tempfile.mkstemp(
            dir=path.parent, prefix=path.name, suffix=".tmp"
        )
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(text)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
    except OSError as e:
        raise CacheIOError(f"cannot write cache {path}: {e}") from None
    return path


def _no_duplicates(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise CacheFormatError(f"duplicate key {key!r}")
        seen[key] = value
    return seen


def loads_cache(text: str) -> TuningCache:
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as e:
        raise CacheFormatError(
            f"invalid JSON at byte offset {e.pos}: {e.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise CacheFormatError("cache document must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise CacheFormatError(
            f"unknown schema version {version!r} (this build reads {SCHEMA_VERSION})"
        )
    for key in ("kernel_name", "device_name", "param_order", "records"):
        if key not in doc:
            raise CacheFormatError(f"cache document lacks {key!r}")
    if not isinstance(doc["records"], dict):
        raise CacheFormatError("'records' must be an object")
    records = {
        key: _observation_from_json(key, value)
        for key, value in doc["records"].items()
    }
    return TuningCache(
        kernel_name=doc["kernel_name"],
        device_name=doc["device_name"],
        param_order=tuple(doc["param_order"]),
        records=records,
        space_fingerprint=doc.get("space_fingerprint"),
        provenance=doc.get("provenance", "native"),
        metadata=dict(doc.get("metadata", {})),
    )


def read_cache(path: str | Path) -> TuningCache:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CacheIOError(f"cannot read cache {path}: {e}") from None
    try:
        return loads_cache(text)
    except CacheFormatError as e:
        raise CacheFormatError(f"{path}: {e}") from None


def _classify_marker(
    marker: str, markers: tuple[tuple[str, Status], ...]
) -> Status:
    lowered = marker.lower()
    for needle, status in markers:
        if needle in lowered:
            return status
    return Status.RUNTIME_FAILED


def import_external_cache(
    path: str | Path,
    expected_space: SearchSpaceSpec | None = None,
    failure_markers: tuple[tuple[str, Status], ...] = DEFAULT_FAILURE_MARKERS,
    device_name: str | None = None,
) -> TuningCache:
    """Ingest a cache file produced by the external auto-tuning tool.

    Numeric ``time`` fields are taken as milliseconds; marker strings
    map to failure statuses through ``failure_markers`` (substring
    match, case-insensitive, first hit wins, unknown markers become
    runtime_failed). With ``expected_space`` every configuration is
    validated against the space, metric values are attached, and the
    resulting cache records the space fingerprint.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CacheIOError(f"cannot read {path}: {e}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CacheFormatError(
            f"{path}: invalid JSON at byte offset {e.pos}: {e.msg}"
        ) from None

    if not isinstance(doc, dict) or "tune_params_keys" not in doc:
        raise CacheFormatError(f"{path}: document lacks 'tune_params_keys'")
    param_order = tuple(doc["tune_params_keys"])
    entries = doc.get("cache")
    if not isinstance(entries, dict):
        raise CacheFormatError(f"{path}: document lacks a 'cache' object")

    if expected_space is not None and param_order != expected_space.param_names:
        raise SpaceMismatch(
            f"{path}: parameter keys {list(param_order)} do not match "
            f"space parameters {list(expected_space.param_names)}"
        )

    records: dict[str, Observation] = {}
    for key, entry in entries.items():
        if key.count(",") + 1 != len(param_order):
            raise CacheFormatError(
                f"{path}: entry key {key!r} has {key.count(',') + 1} values, "
                f"key list has {len(param_order)}"
            )
        if not isinstance(entry, dict) or "time" not in entry:
            raise CacheFormatError(f"{path}: entry {key!r} has no 'time' field")
        time = entry["time"]
        config = None
        if expected_space is not None:
            config = expected_space.config_from_key(key)
            if not expected_space.is_valid(config):
                raise SpaceMismatch(
                    f"{path}: configuration ({key}) is outside the expected space"
                )
        if isinstance(time, str):
            records[key] = Observation(
                _classify_marker(time, failure_markers), detail=time
            )
            continue
        time_ms = _validate_float(time, f"time of {key!r}")
        if time_ms <= 0:
            raise CacheFormatError(
                f"{path}: entry {key!r} has non-positive time {time_ms!r}"
            )
        times = tuple(
            _validate_float(t, f"times of {key!r}")
            for t in entry.get("times", [])
            if isinstance(t, (int, float))
        )
        metric = None
        if expected_space is not None:
            metric = expected_space.metric_value(time_ms, config)
        records[key] = Observation(Status.OK, times, time_ms, metric)

    return TuningCache(
        kernel_name=doc.get("kernel_name", ""),
        device_name=device_name or doc.get("device_name", ""),
        param_order=param_order,
        records=records,
        space_fingerprint=(
            expected_space.fingerprint() if expected_space is not None else None
        ),
        provenance="imported",
        metadata={"source": path.name},
    )


def write_device_meta(meta: DeviceMeta, path: str | Path) -> Path:
    path = Path(path)
    doc = {
        "device_name": meta.device_name,
        "vendor": meta.vendor,
        "properties": dict(meta.properties),
    }
    try:
        path.write_text(
            json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n",
            encoding="utf-8",
        )
    except OSError as e:
        raise CacheIOError(f"cannot write device meta {path}: {e}") from None
    return path


def read_device_meta(path: str | Path) -> DeviceMeta:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise CacheIOError(f"cannot read device meta {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise CacheFormatError(f"{path}: invalid JSON: {e.msg}") from None
    return DeviceMeta(
        device_name=doc.get("device_name", ""),
        vendor=doc.get("vendor", ""),
        properties=doc.get("properties", {}),
    )
