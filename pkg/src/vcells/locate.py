"""Resolve query fingerprints to cells, via the Bloom index or exact sets.

A query is the deduplicated union of APs from one or a few scans. Every
cell is scored by the fraction of query APs it contains; normalizing by
the query keeps scores comparable across cells of very different sizes.
Ties prefer the smaller cell (a more specific location), then the lower
cell id, so ranking is deterministic.

Because cells form a journey continuum, a best match far from the
previously known cell is suspicious: if some cell near the previous one
scores almost as well, the near cell is returned instead and the estimate
is flagged as corrected. Adjacency is measured in cell-id order, the only
adjacency structure a journey has.

``exact_locate`` answers from the true AP sets instead of filters; it is
the oracle the Bloom path is validated against (Bloom scores can only be
inflated by false positives, never deflated).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .bloom import BloomParams, VcellIndex, build_index
from .cells import VcellList
from .geo import GeoPoint
from .scanlog import canonical_ap

DEFAULT_JUMP_DELTA = 0.1
DEFAULT_ADJACENCY_RADIUS = 2


@dataclass(frozen=True)
class LocationEstimate:
    """A resolved location: winning cell, score, and correction flags.

    ``vcell_id``/``anchor`` are None for a no-fix (no cell matched any
    query AP). ``runner_up`` is the next-best (cell id, score) when the
    ranking had one; corrected estimates carry no runner-up because the
    displaced global winner would outscore them.
    """

    vcell_id: int | None
    anchor: GeoPoint | None
    score: float
    corrected: bool = False
    runner_up: tuple[int, float] | None = None

    def __post_init__(self):
        if self.runner_up is not None and self.score < self.runner_up[1]:
            raise ValueError("estimate score must be >= runner-up score")

    @property
    def is_fix(self) -> bool:
        return self.vcell_id is not None


def as_query(aps: Iterable[str] | Iterable[Iterable[str]]) -> frozenset[str]:
    """Canonicalize query input: an AP collection, or several scans' worth.

    Accepts a flat iterable of MAC strings or an iterable of such
    collections (the union is taken). The result must be non-empty.
    """
    items = list(aps)
    flat: list[str] = []
    for item in items:
        if isinstance(item, str):
            flat.append(item)
        else:
            flat.extend(item)
    query = frozenset(canonical_ap(a) for a in flat)
    if not query:
        raise ValueError("query contains no APs")
    return query


def _ranked_bloom(index: VcellIndex, query: frozenset[str]) -> list[tuple[int, int, float]]:
    # shared params: hash each query AP once, probe every cell at those positions
    all_positions = [index.params.positions(ap) for ap in sorted(query)]
    ranked = []
    for e in index.entries:
        hits = sum(1 for pos in all_positions if e.filter.test_positions(pos))
        ranked.append((e.vcell_id, e.n, hits / len(query)))
    ranked.sort(key=lambda t: (-t[2], t[1], t[0]))
    return ranked


def _ranked_exact(vcells: VcellList, query: frozenset[str]) -> list[tuple[int, int, float]]:
    ranked = [
        (c.vcell_id, c.n_aps, len(query & c.aps) / len(query)) for c in vcells.cells
    ]
    ranked.sort(key=lambda t: (-t[2], t[1], t[0]))
    return ranked


def score_cells(index: VcellIndex, query: Iterable[str]) -> list[tuple[int, float]]:
    """Score every cell against the query, best first.

    Score is the fraction of query APs testing positive in the cell's
    filter; order is (score desc, cell size asc, cell id asc).
    """
    q = as_query(query)
    return [(vid, score) for vid, _, score in _ranked_bloom(index, q)]


def _resolve(
    ranked: list[tuple[int, int, float]],
    anchors: dict[int, GeoPoint],
    prev: int | None,
    jump_delta: float,
    adjacency_radius: int,
) -> LocationEstimate:
    if not 0.0 <= jump_delta <= 1.0:
        raise ValueError(f"jump_delta {jump_delta} out of range [0, 1]")
    if adjacency_radius < 1:
        raise ValueError("adjacency_radius must be >= 1")

    win_id, _, win_score = ranked[0]
    if win_score == 0.0:
        return LocationEstimate(vcell_id=None, anchor=None, score=0.0)

    if prev is not None and abs(win_id - prev) > adjacency_radius:
        near = [t for t in ranked if abs(t[0] - prev) <= adjacency_radius]
        if near and near[0][2] >= win_score - jump_delta:
            near_id, _, near_score = near[0]
            return LocationEstimate(
                vcell_id=near_id,
                anchor=anchors[near_id],
                score=near_score,
                corrected=True,
            )

    runner_up = (ranked[1][0], ranked[1][2]) if len(ranked) > 1 else None
    return LocationEstimate(
        vcell_id=win_id, anchor=anchors[win_id], score=win_score, runner_up=runner_up
    )


def locate(
    index: VcellIndex,
    query: Iterable[str],
    prev: int | None = None,
    jump_delta: float = DEFAULT_JUMP_DELTA,
    adjacency_radius: int = DEFAULT_ADJACENCY_RADIUS,
) -> LocationEstimate:
    """Resolve a query against the Bloom index.

    The best-scoring cell wins unless it sits more than
    ``adjacency_radius`` cells from ``prev`` while some cell within that
    radius scores within ``jump_delta`` of it; then the near cell wins and
    the estimate is marked corrected. All-zero scores yield a no-fix.
    """
    q = as_query(query)
    ranked = _ranked_bloom(index, q)
    anchors = {e.vcell_id: e.anchor for e in index.entries}
    return _resolve(ranked, anchors, prev, jump_delta, adjacency_radius)


def exact_locate(
    vcells: VcellList,
    query: Iterable[str],
    prev: int | None = None,
    jump_delta: float = DEFAULT_JUMP_DELTA,
    adjacency_radius: int = DEFAULT_ADJACENCY_RADIUS,
) -> LocationEstimate:
    """Same contract as locate, but scored on exact AP sets (the oracle)."""
    q = as_query(query)
    ranked = _ranked_exact(vcells, q)
    anchors = {c.vcell_id: c.anchor for c in vcells.cells}
    return _resolve(ranked, anchors, prev, jump_delta, adjacency_radius)


class _LocatorBase(BaseEstimator):
    """Shared predict machinery for the two locators."""

    def _check_fitted(self):
        raise NotImplementedError

    def _locate_one(self, query, prev):
        raise NotImplementedError

    def locate(self, query: Iterable[str], prev: int | None = None) -> LocationEstimate:
        self._check_fitted()
        return self._locate_one(query, prev)

    def predict(self, X: Iterable[Iterable[str]]) -> np.ndarray:
        """Winning cell id per query; -1 marks a no-fix."""
        self._check_fitted()
        out = []
        for q in X:
            est = self._locate_one(q, None)
            out.append(est.vcell_id if est.is_fix else -1)
        return np.asarray(out, dtype=int)


class BloomLocator(_LocatorBase):
    """Bloom-index-backed locator with the scikit-learn estimator API.

    Parameters
    ----------
    target_p : float, default=0.005
        False-positive target used to size the filters at fit time
        (ignored when ``params`` is given).
    params : BloomParams, optional
        Fixed filter geometry overriding target_p.
    jump_delta : float, default=0.1
    adjacency_radius : int, default=2
        Jump-correction thresholds, see :func:`locate`.

    Attributes
    ----------
    index_ : VcellIndex
    """

    def __init__(
        self,
        target_p: float = 0.005,
        params: BloomParams | None = None,
        jump_delta: float = DEFAULT_JUMP_DELTA,
        adjacency_radius: int = DEFAULT_ADJACENCY_RADIUS,
    ):
        self.target_p = target_p
        self.params = params
        self.jump_delta = jump_delta
        self.adjacency_radius = adjacency_radius

    def fit(self, X: VcellList, y=None):
        """Build the per-cell Bloom index from a cell list."""
        if self.params is not None:
            self.index_ = build_index(X, params=self.params)
        else:
            self.index_ = build_index(X, target_p=self.target_p)
        return self

    @classmethod
    def from_index(cls, index: VcellIndex, **kwargs) -> "BloomLocator":
        """Wrap a prebuilt (e.g. deserialized) index."""
        est = cls(**kwargs)
        est.index_ = index
        return est

    def score_cells(self, query: Iterable[str]) -> list[tuple[int, float]]:
        self._check_fitted()
        return score_cells(self.index_, query)

    def _check_fitted(self):
        if not hasattr(self, "index_"):
            raise NotFittedError("BloomLocator is not fitted; call fit first")

    def _locate_one(self, query, prev):
        return locate(
            self.index_,
            query,
            prev=prev,
            jump_delta=self.jump_delta,
            adjacency_radius=self.adjacency_radius,
        )


class ExactLocator(_LocatorBase):
    """Exact-set locator: the brute-force oracle with the same API."""

    def __init__(
        self,
        jump_delta: float = DEFAULT_JUMP_DELTA,
        adjacency_radius: int = DEFAULT_ADJACENCY_RADIUS,
    ):
        self.jump_delta = jump_delta
        self.adjacency_radius = adjacency_radius

    def fit(self, X: VcellList, y=None):
        self.cells_ = X
        return self

    def _check_fitted(self):
        if not hasattr(self, "cells_"):
            raise NotFittedError("ExactLocator is not fitted; call fit first")

    def _locate_one(self, query, prev):
        return exact_locate(
            self.cells_,
            query,
            prev=prev,
            jump_delta=self.jump_delta,
            adjacency_radius=self.adjacency_radius,
        )
