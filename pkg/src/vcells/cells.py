"""Virtual-cell formation: progressive merge of consecutive scans.

A trace is folded left-to-right into cells. The running cell keeps the
unique union of its member scans' APs; a new scan joins the running cell
when it shares at least ``cc * |cell APs|`` of them, otherwise the cell is
flushed and the scan seeds a new one. The final running cell is always
flushed, so the cells cover the whole journey.

The cell condition ``cc`` compares AP counts to AP counts: the threshold
is a fraction of the number of *unique APs* accumulated in the running
cell, not of its scan count. ``cc=0`` therefore yields a single cell per
trace and ``cc=1`` only merges scans that contain every AP seen so far.

Empty scans (a scan that recorded no APs) are measurement dropouts: they
are skipped, never used to break a cell, and belong to no cell.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .geo import GeoPoint, centroid, haversine
from .scanlog import ScanTrace, Fingerprint


def check_cell_condition(cc: float) -> float:
    cc = float(cc)
    if not 0.0 <= cc <= 1.0:
        raise ValueError(f"cell condition {cc} out of range [0, 1]")
    return cc


@dataclass(frozen=True)
class Vcell:
    """A maximal run of merged scans, characterized by its unique AP set.

    ``first_seq``/``last_seq`` is the contiguous scan range covered;
    ``anchor`` is the centroid of the member scan positions.
    ``scan_positions`` and ``scan_sizes`` describe the member (non-empty)
    scans; they exist only on cells built from a trace and are not part of
    the JSON interchange format.
    """

    vcell_id: int
    first_seq: int
    last_seq: int
    aps: frozenset[str]
    anchor: GeoPoint
    scan_positions: tuple[GeoPoint, ...] = ()
    scan_sizes: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "aps", frozenset(self.aps))
        if not self.aps:
            raise ValueError("vcell with empty AP set")
        if self.last_seq < self.first_seq:
            raise ValueError("vcell scan range is empty")

    @property
    def n_scans(self) -> int:
        return len(self.scan_positions)

    @property
    def n_aps(self) -> int:
        return len(self.aps)

    @property
    def diameter_m(self) -> float:
        """Max pairwise distance between member scan positions, meters."""
        pts = self.scan_positions
        if len(pts) < 2:
            return 0.0
        return max(
            haversine(pts[i], pts[j])
            for i in range(len(pts))
            for j in range(i + 1, len(pts))
        )


@dataclass(frozen=True)
class VcellList:
    """Cells of one trace under one cell condition, in formation order.

    ``empty_seqs`` records the skipped empty scans; like the per-cell
    member data it is known only for lists built from a trace.
    """

    trace_id: str
    cc: float
    cells: tuple[Vcell, ...]
    empty_seqs: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "empty_seqs", frozenset(self.empty_seqs))

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def __getitem__(self, i) -> Vcell:
        return self.cells[i]


def form_vcells(trace: ScanTrace, cc: float) -> VcellList:
    """Fold a trace into virtual cells under cell condition ``cc``.

    Raises ValueError if the trace has no non-empty scan.
    """
    cc = check_cell_condition(cc)
    nonempty = [s for s in trace.scans if s.aps]
    if not nonempty:
        raise ValueError("trace has no non-empty scans; nothing to cluster")

    cells: list[Vcell] = []
    curr_aps: set[str] = set()
    curr_scans: list[Fingerprint] = []

    def flush():
        members = tuple(curr_scans)
        cells.append(
            Vcell(
                vcell_id=len(cells),
                first_seq=members[0].seq,
                last_seq=members[-1].seq,
                aps=frozenset(curr_aps),
                anchor=centroid([s.pos for s in members]),
                scan_positions=tuple(s.pos for s in members),
                scan_sizes=tuple(len(s.aps) for s in members),
            )
        )

    for scan in nonempty:
        if not curr_scans:
            curr_aps = set(scan.aps)
            curr_scans = [scan]
            continue
        if len(scan.aps & curr_aps) >= cc * len(curr_aps):
            curr_aps |= scan.aps
            curr_scans.append(scan)
        else:
            flush()
            curr_aps = set(scan.aps)
            curr_scans = [scan]
    flush()
    return VcellList(
        trace_id=trace.trace_id,
        cc=cc,
        cells=tuple(cells),
        empty_seqs=frozenset(s.seq for s in trace.scans if not s.aps),
    )


def assign_scan(vcells: VcellList, seq: int) -> int:
    """The id of the cell whose scan range contains ``seq``.

    Raises ValueError for out-of-range seqs and for empty scans, which
    belong to no cell.
    """
    if seq in vcells.empty_seqs:
        raise ValueError(f"scan {seq} is empty and belongs to no vcell")
    for cell in vcells.cells:
        if cell.first_seq <= seq <= cell.last_seq:
            return cell.vcell_id
    last = vcells.cells[-1].last_seq if vcells.cells else -1
    if 0 <= seq <= last:
        raise ValueError(f"scan {seq} is empty and belongs to no vcell")
    raise ValueError(f"scan {seq} out of range [0, {last}]")


@dataclass(frozen=True)
class CellStats:
    """Aggregate statistics over a cell list."""

    n_cells: int
    ap_counts: tuple[int, ...]
    scan_counts: tuple[int, ...]
    aps_per_fingerprint: float
    diameters_m: tuple[float, ...]


def vcell_stats(vcells: VcellList) -> CellStats:
    """Cell count, per-cell sizes, mean APs per fingerprint, diameters.

    Requires cells that carry their member-scan data (built by
    form_vcells, or rehydrated via attach_members after loading JSON).
    """
    if not vcells.cells:
        raise ValueError("empty vcell list")
    if any(not c.scan_positions for c in vcells.cells):
        raise ValueError(
            "cells lack member-scan data; rebuild from the trace or use attach_members"
        )
    sightings = sum(sum(c.scan_sizes) for c in vcells.cells)
    n_scans = sum(c.n_scans for c in vcells.cells)
    return CellStats(
        n_cells=len(vcells.cells),
        ap_counts=tuple(c.n_aps for c in vcells.cells),
        scan_counts=tuple(c.n_scans for c in vcells.cells),
        aps_per_fingerprint=sightings / n_scans,
        diameters_m=tuple(c.diameter_m for c in vcells.cells),
    )


def attach_members(vcells: VcellList, trace: ScanTrace) -> VcellList:
    """Re-attach member scan positions/sizes to cells loaded from JSON.

    Membership is recomputed from each cell's scan range: the non-empty
    scans of ``trace`` falling inside it.
    """
    cells = []
    for cell in vcells.cells:
        members = [
            s for s in trace.scans if cell.first_seq <= s.seq <= cell.last_seq and s.aps
        ]
        if not members:
            raise ValueError(f"vcell {cell.vcell_id} has no member scans in this trace")
        cells.append(
            Vcell(
                vcell_id=cell.vcell_id,
                first_seq=cell.first_seq,
                last_seq=cell.last_seq,
                aps=cell.aps,
                anchor=cell.anchor,
                scan_positions=tuple(s.pos for s in members),
                scan_sizes=tuple(len(s.aps) for s in members),
            )
        )
    return VcellList(trace_id=vcells.trace_id, cc=vcells.cc, cells=tuple(cells))


def cells_to_json(vcells: VcellList) -> str:
    """Serialize to the JSON interchange format (APs sorted for determinism)."""
    obj = {
        "trace_id": vcells.trace_id,
        "cc": vcells.cc,
        "cells": [
            {
                "vcell_id": c.vcell_id,
                "first_seq": c.first_seq,
                "last_seq": c.last_seq,
                "anchor": {"lat": c.anchor.lat, "lon": c.anchor.lon},
                "aps": sorted(c.aps),
            }
            for c in vcells.cells
        ],
    }
    return json.dumps(obj, indent=2)


def cells_from_json(text: str) -> VcellList:
    """Parse the JSON interchange format produced by cells_to_json."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid cell list JSON: {exc.msg}") from exc
    try:
        cells = tuple(
            Vcell(
                vcell_id=c["vcell_id"],
                first_seq=c["first_seq"],
                last_seq=c["last_seq"],
                aps=frozenset(c["aps"]),
                anchor=GeoPoint(c["anchor"]["lat"], c["anchor"]["lon"]),
            )
            for c in obj["cells"]
        )
        return VcellList(trace_id=obj["trace_id"], cc=check_cell_condition(obj["cc"]), cells=cells)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"cell list JSON missing field: {exc}") from exc


def _coerce_trace(X) -> ScanTrace:
    """Accept a ScanTrace or a bare sequence of AP collections.

    Bare sequences get synthetic timestamps and a fixed position, which is
    enough for clustering when no geometry is needed.
    """
    if isinstance(X, ScanTrace):
        return X
    scans = tuple(
        Fingerprint(seq=i, timestamp_ms=i, pos=GeoPoint(0.0, 0.0), aps=frozenset(aps))
        for i, aps in enumerate(X)
    )
    return ScanTrace(trace_id="memory", scans=scans)


class VcellClusterer(ClusterMixin, BaseEstimator):
    """Sequential scan clusterer with the scikit-learn estimator API.

    Parameters
    ----------
    cc : float, default=0.3
        Cell condition in [0, 1]; fraction of the running cell's unique
        APs a scan must share to be merged into it.

    Attributes
    ----------
    cells_ : VcellList
        The formed cells, in journey order.
    labels_ : ndarray of shape (n_scans,)
        Cell id per input scan; empty scans get -1.
    n_cells_ : int
    """

    def __init__(self, cc: float = 0.3):
        self.cc = cc

    def fit(self, X, y=None):
        """Cluster a ScanTrace (or sequence of AP collections) into cells."""
        trace = _coerce_trace(X)
        self.cells_ = form_vcells(trace, self.cc)
        labels = np.full(len(trace.scans), -1, dtype=int)
        for cell in self.cells_:
            for seq in range(cell.first_seq, cell.last_seq + 1):
                if trace.scans[seq].aps:
                    labels[seq] = cell.vcell_id
        self.labels_ = labels
        self.n_cells_ = len(self.cells_)
        return self
