"""Scan-log parsing, validation, and canonical data model.

A scan trace is an ordered sequence of fingerprints, where each fingerprint
is the set of access points (BSSIDs) seen in one active scan, stamped with
a time and a ground-truth position.

Two on-disk formats are supported:

* JSONL (primary): one scan per line, UTF-8, fields ``t`` (integer epoch
  milliseconds), ``lat``, ``lon`` (decimal degrees) and ``aps`` (array of
  MAC strings). Unknown fields are ignored.
* CSV (secondary): header ``t,lat,lon,bssid``, one row per AP sighting,
  RFC-4180 quoting. Rows sharing the same ``t`` form one scan and must
  agree on ``lat``/``lon``. An empty ``bssid`` field contributes no AP,
  which is how a scan that saw nothing is represented.

Parsing re-sequences scans by timestamp; duplicate timestamps are a hard
error because scan order is the substrate of everything downstream.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field

from .geo import GeoPoint

_CANON_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")
_SEPARATORS = str.maketrans("", "", ":-. ")


class ScanLogError(ValueError):
    """Malformed scan-log content. Carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def canonical_ap(value: str) -> str:
    """Canonicalize a BSSID to lowercase colon-separated hex octets.

    Accepts common separator styles (``AA:BB:..``, ``aa-bb-..``,
    ``aabb.cc00.0001``, bare hex). Idempotent on canonical input.
    """
    if not isinstance(value, str):
        raise ValueError(f"BSSID must be a string, got {type(value).__name__}")
    digits = value.strip().lower().translate(_SEPARATORS)
    if len(digits) != 12 or any(c not in "0123456789abcdef" for c in digits):
        raise ValueError(f"not a MAC address: {value!r}")
    return ":".join(digits[i : i + 2] for i in range(0, 12, 2))


def is_canonical_ap(value: str) -> bool:
    return bool(_CANON_RE.match(value))


@dataclass(frozen=True)
class Fingerprint:
    """One active scan: position, timestamp, and the set of APs seen."""

    seq: int
    timestamp_ms: int
    pos: GeoPoint
    aps: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "aps", frozenset(self.aps))


@dataclass(frozen=True)
class ScanTrace:
    """An ordered journey of scans with contiguous seq numbers from 0."""

    trace_id: str
    scans: tuple[Fingerprint, ...]
    speed_hint_kph: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scans", tuple(self.scans))
        if not self.scans:
            raise ValueError("trace must contain at least one scan")
        for i, s in enumerate(self.scans):
            if s.seq != i:
                raise ValueError(f"scan seq {s.seq} at position {i}; must be contiguous from 0")
        ts = [s.timestamp_ms for s in self.scans]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must be strictly increasing")
        if self.speed_hint_kph is not None and not self.speed_hint_kph > 0:
            raise ValueError("speed_hint_kph must be positive")


@dataclass(frozen=True)
class ValidationReport:
    """Counts and data-quality flags for a trace. Report only, never raises."""

    n_scans: int
    n_unique_aps: int
    empty_scan_seqs: tuple[int, ...]
    timestamps_strictly_increasing: bool
    seqs_contiguous: bool

    @property
    def ok(self) -> bool:
        return self.timestamps_strictly_increasing and self.seqs_contiguous

    @property
    def n_empty_scans(self) -> int:
        return len(self.empty_scan_seqs)


def _check_timestamp(raw, line: int) -> int:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ScanLogError(f"timestamp {raw!r} is not a number", line)
    if isinstance(raw, float):
        if not raw.is_integer():
            raise ScanLogError(f"timestamp {raw!r} is not an integer millisecond count", line)
        raw = int(raw)
    return raw


def _check_coord(raw, name: str, lo: float, hi: float, line: int) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ScanLogError(f"{name} {raw!r} is not a number", line)
    v = float(raw)
    if not math.isfinite(v):
        raise ScanLogError(f"{name} is not finite", line)
    if not lo <= v <= hi:
        raise ScanLogError(f"{name} {v} out of range [{lo}, {hi}]", line)
    return v


def _canon_aps(raw_aps, line: int) -> frozenset[str]:
    try:
        return frozenset(canonical_ap(a) for a in raw_aps)
    except ValueError as exc:
        raise ScanLogError(str(exc), line) from exc


def _finish(records: list[tuple[int, float, float, frozenset[str]]], trace_id: str) -> ScanTrace:
    if not records:
        raise ScanLogError("scan log contains no scans")
    records.sort(key=lambda r: r[0])
    dup_ts = [records[i][0] for i in range(len(records) - 1) if records[i][0] == records[i + 1][0]]
    if dup_ts:
        raise ScanLogError(f"duplicate timestamps: {sorted(set(dup_ts))}")
    scans = tuple(
        Fingerprint(seq=i, timestamp_ms=t, pos=GeoPoint(lat, lon), aps=aps)
        for i, (t, lat, lon, aps) in enumerate(records)
    )
    return ScanTrace(trace_id=trace_id, scans=scans)


def _parse_jsonl(text: str, trace_id: str) -> ScanTrace:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScanLogError(f"invalid JSON ({exc.msg})", lineno) from exc
        if not isinstance(obj, dict):
            raise ScanLogError("scan record is not a JSON object", lineno)
        for key in ("t", "lat", "lon", "aps"):
            if key not in obj:
                raise ScanLogError(f"missing field {key!r}", lineno)
        t = _check_timestamp(obj["t"], lineno)
        lat = _check_coord(obj["lat"], "lat", -90.0, 90.0, lineno)
        lon = _check_coord(obj["lon"], "lon", -180.0, 180.0, lineno)
        if not isinstance(obj["aps"], list):
            raise ScanLogError("field 'aps' is not an array", lineno)
        records.append((t, lat, lon, _canon_aps(obj["aps"], lineno)))
    return _finish(records, trace_id)


def _parse_csv(text: str, trace_id: str) -> ScanTrace:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ScanLogError("empty CSV input") from None
    if [h.strip() for h in header] != ["t", "lat", "lon", "bssid"]:
        raise ScanLogError(f"bad CSV header {header!r}, expected t,lat,lon,bssid", 1)

    groups: dict[int, tuple[float, float, set[str]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise ScanLogError(f"expected 4 fields, got {len(row)}", lineno)
        try:
            t = _check_timestamp(float(row[0]), lineno)
        except ValueError:
            raise ScanLogError(f"timestamp {row[0]!r} is not a number", lineno) from None
        try:
            lat = _check_coord(float(row[1]), "lat", -90.0, 90.0, lineno)
            lon = _check_coord(float(row[2]), "lon", -180.0, 180.0, lineno)
        except ScanLogError:
            raise
        except ValueError:
            raise ScanLogError(f"bad coordinate in row {row!r}", lineno) from None
        if t in groups:
            glat, glon, aps = groups[t]
            if (glat, glon) != (lat, lon):
                raise ScanLogError(f"rows with t={t} disagree on position", lineno)
        else:
            aps = set()
            groups[t] = (lat, lon, aps)
        bssid = row[3].strip()
        if bssid:
            try:
                aps.add(canonical_ap(bssid))
            except ValueError as exc:
                raise ScanLogError(str(exc), lineno) from exc
    records = [(t, lat, lon, frozenset(aps)) for t, (lat, lon, aps) in groups.items()]
    return _finish(records, trace_id)


def parse_scan_log(source, format: str = "jsonl", trace_id: str = "trace") -> ScanTrace:
    """Parse a scan log into a validated ScanTrace.

    `source` may be a path, a text or binary file object, raw bytes, or a
    string of file content. MAC addresses are canonicalized, duplicate APs
    within one scan are deduplicated, and scans are re-sequenced by
    timestamp. Raises ScanLogError on malformed content.
    """
    text = _read_text(source)
    if format == "jsonl":
        return _parse_jsonl(text, trace_id)
    if format == "csv":
        return _parse_csv(text, trace_id)
    raise ValueError(f"unknown scan-log format {format!r}")


def _read_text(source) -> str:
    """Read scan-log content from a path, file object, or raw bytes."""
    if isinstance(source, bytes):
        data = source
    elif hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ScanLogError(f"input is not valid UTF-8: {exc}") from exc
    return data


def scan_to_json(scan: Fingerprint) -> str:
    obj = {
        "t": scan.timestamp_ms,
        "lat": scan.pos.lat,
        "lon": scan.pos.lon,
        "aps": sorted(scan.aps),
    }
    return json.dumps(obj, separators=(",", ":"))


def write_scan_log(trace: ScanTrace, target, format: str = "jsonl") -> None:
    """Write a trace in the given format. `target` is a path or text file."""
    if format == "jsonl":
        body = "".join(scan_to_json(s) + "\n" for s in trace.scans)
    elif format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "lat", "lon", "bssid"])
        for s in trace.scans:
            if s.aps:
                for ap in sorted(s.aps):
                    writer.writerow([s.timestamp_ms, s.pos.lat, s.pos.lon, ap])
            else:
                writer.writerow([s.timestamp_ms, s.pos.lat, s.pos.lon, ""])
        body = buf.getvalue()
    else:
        raise ValueError(f"unknown scan-log format {format!r}")
    if hasattr(target, "write"):
        target.write(body)
    else:
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(body)


def validate_trace(trace: ScanTrace) -> ValidationReport:
    """Summarize a trace: counts, empty scans, and invariant checks."""
    ts = [s.timestamp_ms for s in trace.scans]
    return ValidationReport(
        n_scans=len(trace.scans),
        n_unique_aps=len(ap_universe(trace)),
        empty_scan_seqs=tuple(s.seq for s in trace.scans if not s.aps),
        timestamps_strictly_increasing=all(b > a for a, b in zip(ts, ts[1:])),
        seqs_contiguous=all(s.seq == i for i, s in enumerate(trace.scans)),
    )


def ap_universe(trace: ScanTrace) -> set[str]:
    """Union of all AP sets in the trace (the journey's distinct APs)."""
    out: set[str] = set()
    for s in trace.scans:
        out |= s.aps
    return out
