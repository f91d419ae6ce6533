"""Overlap regions between nearby virtual cells.

Two cells overlap when the fraction of APs they share falls inside a
half-open band [lo, hi). The shared fraction is normalized by the smaller
cell's AP count by default, which keeps the band reachable when adjacent
cells differ greatly in size; Jaccard ("union") and raw shared counts
("absolute") are available as alternative normalizations.

Checking every pair is quadratic, so the search is restricted to cells
within ``window`` positions of each other in formation order (adjacent
cells by default). Overlap records live alongside the cell list; they
never modify it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .cells import Vcell, VcellList

NORMS = ("min", "union", "absolute")


@dataclass(frozen=True)
class OverlapCondition:
    """Half-open shared-fraction band [lo, hi) with 0 <= lo < hi <= 1."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise ValueError(f"overlap condition [{self.lo}, {self.hi}) must satisfy 0 <= lo < hi <= 1")


@dataclass(frozen=True)
class OverlapRecord:
    """Shared APs between cells a < b, with the normalized fraction."""

    a: int
    b: int
    shared: frozenset[str]
    fraction: float

    def __post_init__(self):
        object.__setattr__(self, "shared", frozenset(self.shared))
        if self.a >= self.b:
            raise ValueError("overlap record requires a < b")
        if not self.shared:
            raise ValueError("overlap record with empty shared set")


def overlap_fraction(a: Vcell, b: Vcell, norm: str = "min") -> float:
    """Shared-AP measure between two cells under the given normalization.

    "min": |A∩B| / min(|A|,|B|); "union": |A∩B| / |A∪B| (Jaccard);
    "absolute": the raw shared count.
    """
    if norm not in NORMS:
        raise ValueError(f"unknown overlap norm {norm!r}; expected one of {NORMS}")
    inter = len(a.aps & b.aps)
    if norm == "absolute":
        return float(inter)
    if norm == "union":
        return inter / len(a.aps | b.aps)
    return inter / min(len(a.aps), len(b.aps))


def find_overlaps(
    vcells: VcellList,
    oc: OverlapCondition | tuple[float, float],
    window: int = 1,
    norm: str = "min",
) -> list[OverlapRecord]:
    """All cell pairs within ``window`` of each other whose shared fraction
    falls in [lo, hi), sorted by (a, b).

    ``oc`` may be an OverlapCondition or a bare (lo, hi) pair; bare bounds
    above 1 are only meaningful (and only accepted) for norm="absolute",
    where they are AP counts rather than fractions.
    """
    if isinstance(oc, OverlapCondition):
        lo, hi = oc.lo, oc.hi
    else:
        lo, hi = float(oc[0]), float(oc[1])
        if norm == "absolute":
            if not 0.0 <= lo < hi:
                raise ValueError(f"absolute overlap band [{lo}, {hi}) must satisfy 0 <= lo < hi")
        else:
            OverlapCondition(lo, hi)  # range check
    if window < 1:
        raise ValueError("window must be >= 1")

    cells = vcells.cells
    out: list[OverlapRecord] = []
    for i in range(len(cells)):
        for j in range(i + 1, min(i + window + 1, len(cells))):
            fraction = overlap_fraction(cells[i], cells[j], norm=norm)
            if lo <= fraction < hi:
                shared = cells[i].aps & cells[j].aps
                out.append(
                    OverlapRecord(
                        a=cells[i].vcell_id,
                        b=cells[j].vcell_id,
                        shared=shared,
                        fraction=fraction,
                    )
                )
    out.sort(key=lambda r: (r.a, r.b))
    return out


def overlaps_by_cell(records: list[OverlapRecord]) -> dict[int, list[OverlapRecord]]:
    """Index overlap records by participating cell id (both sides)."""
    out: dict[int, list[OverlapRecord]] = {}
    for rec in records:
        out.setdefault(rec.a, []).append(rec)
        out.setdefault(rec.b, []).append(rec)
    return out


def overlaps_to_json(
    records: list[OverlapRecord], oc: tuple[float, float], window: int
) -> str:
    """Serialize overlap records with the band and window that produced them."""
    obj = {
        "oc": {"lo": float(oc[0]), "hi": float(oc[1])},
        "window": window,
        "overlaps": [
            {"a": r.a, "b": r.b, "fraction": r.fraction, "shared": sorted(r.shared)}
            for r in records
        ],
    }
    return json.dumps(obj, indent=2)


def overlaps_from_json(text: str) -> tuple[list[OverlapRecord], tuple[float, float], int]:
    """Parse overlaps JSON; returns (records, (lo, hi), window)."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid overlaps JSON: {exc.msg}") from exc
    try:
        records = [
            OverlapRecord(
                a=r["a"], b=r["b"], shared=frozenset(r["shared"]), fraction=r["fraction"]
            )
            for r in obj["overlaps"]
        ]
        return records, (obj["oc"]["lo"], obj["oc"]["hi"]), obj["window"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"overlaps JSON missing field: {exc}") from exc
