"""Region memory keeping differently-predicted certified balls disjoint.

Each certified input is stored as a closed ball. New regions are compared
against every stored region in insertion order: a center falling inside a
differently-predicted ball has its prediction overridden and its region
shrunk to the largest ball inside both; a mere overlap shrinks the region to
the largest ball clear of the obstacle. Same-prediction overlaps are left
untouched. Boundary contact does not count as overlap, which maximizes the
retained radius and keeps the shrink formulas exact.

L1 regions are stored and persisted; their overlap geometry is handled only
in d = 1, where the interval formulas are exact. A cross-prediction L1
overlap in higher dimension raises ``UnsupportedNormError``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace

__all__ = [
    "CertifiedRegion",
    "MemoryStore",
    "MemoryInvariantError",
    "UnsupportedNormError",
    "intersect",
    "largest_in_subset",
    "largest_out_subset",
    "memory_insert",
    "save_memory",
    "load_memory",
    "audit",
]

NORM_L2 = "l2"
NORM_L1 = "l1"

# Slack used when validating the no-overlap invariant; shrunken radii are
# exact min() formulas, so violations beyond a few ulps indicate real bugs.
_INVARIANT_TOL = 1e-9


class MemoryInvariantError(ValueError):
    """The store would contain overlapping differently-predicted regions."""


class UnsupportedNormError(ValueError):
    """Overlap geometry is not available for this norm/dimension."""


@dataclass(frozen=True)
class CertifiedRegion:
    """Closed ball with a prediction and the smoothing scale that produced it."""
    center: tuple[float, ...]
    radius: float
    prediction: int
    sigma_used: float
    norm: str = NORM_L2

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if self.norm not in (NORM_L2, NORM_L1):
            raise ValueError(f"unknown norm {self.norm!r}")
        if len(self.center) < 1:
            raise ValueError("center must have at least one coordinate")

    @property
    def dim(self) -> int:
        return len(self.center)


def _distance(a: CertifiedRegion, b: CertifiedRegion) -> float:
    if a.norm == NORM_L2:
        return math.dist(a.center, b.center)
    return sum(abs(u - v) for u, v in zip(a.center, b.center))


def _check_compatible(a: CertifiedRegion, b: CertifiedRegion) -> None:
    if a.norm != b.norm:
        raise ValueError(f"norm mismatch: {a.norm!r} vs {b.norm!r}")
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def intersect(a: CertifiedRegion, b: CertifiedRegion) -> bool:
    """Whether two closed balls overlap; tangency does not count."""
    _check_compatible(a, b)
    return _distance(a, b) < a.radius + b.radius


def largest_in_subset(outer: CertifiedRegion, cand: CertifiedRegion) -> float:
    """Radius of the largest ball at cand.center inside both outer and cand.

    Requires cand.center to lie in the outer ball; the answer is
    min(cand.radius, outer.radius - distance).
    """
    _check_compatible(outer, cand)
    d = _distance(outer, cand)
    if d > outer.radius:
        raise ValueError(
            f"candidate center lies outside the outer ball (distance {d} > "
            f"radius {outer.radius})")
    return max(0.0, min(cand.radius, outer.radius - d))


def largest_out_subset(obstacle: CertifiedRegion, cand: CertifiedRegion) -> float:
    """Radius of the largest ball at cand.center inside cand but clear of obstacle.

    Requires cand.center to lie outside the obstacle; the answer is
    min(cand.radius, distance - obstacle.radius).
    """
    _check_compatible(obstacle, cand)
    d = _distance(obstacle, cand)
    if d <= obstacle.radius:
        raise ValueError(
            f"candidate center lies inside the obstacle (distance {d} <= "
            f"radius {obstacle.radius})")
    return max(0.0, min(cand.radius, d - obstacle.radius))


class _GridIndex:
    """Uniform hash grid over centers; returns candidate supersets in order."""

    def __init__(self, cell_size: float = 1.0):
        if cell_size <= 0:
            raise ValueError(f"cell_size must be positive, got {cell_size}")
        self.cell_size = float(cell_size)
        self.cells: dict[tuple[int, ...], list[int]] = {}
        self.max_radius = 0.0

    def _cell(self, center) -> tuple[int, ...]:
        return tuple(int(math.floor(v / self.cell_size)) for v in center)

    def add(self, idx: int, region: CertifiedRegion) -> None:
        self.cells.setdefault(self._cell(region.center), []).append(idx)
        self.max_radius = max(self.max_radius, region.radius)

    def candidates(self, region: CertifiedRegion, n_total: int) -> list[int]:
        reach = region.radius + self.max_radius + self.cell_size
        span = int(math.ceil(reach / self.cell_size))
        base = self._cell(region.center)
        d = len(base)
        if (2 * span + 1) ** d >= n_total:
            return list(range(n_total))
        found: list[int] = []
        for offs in itertools.product(range(-span, span + 1), repeat=d):
            cell = tuple(b + o for b, o in zip(base, offs))
            found.extend(self.cells.get(cell, ()))
        return sorted(found)


class MemoryStore:
    """Ordered region collection; single-writer, cross-prediction disjoint.

    Insertions are strictly serialized because overlap handling is order
    sensitive; reads may run concurrently between insertions. The optional
    grid index only prunes comparisons and never changes results.
    """

    def __init__(self, use_grid: bool = False, cell_size: float = 1.0):
        self.regions: list[CertifiedRegion] = []
        self.insertions = 0
        self.comparisons = 0
        self.overlap_events = 0
        self.adjusted_insertions = 0
        self._grid = _GridIndex(cell_size) if use_grid else None

    def __len__(self) -> int:
        return len(self.regions)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MemoryStore):
            return NotImplemented
        return self.regions == other.regions

    def _append(self, region: CertifiedRegion) -> None:
        if self._grid is not None:
            self._grid.add(len(self.regions), region)
        self.regions.append(region)


def memory_insert(store: MemoryStore, region: CertifiedRegion
                  ) -> tuple[int, CertifiedRegion, bool]:
    """Insert a freshly certified region, shrinking it against the memory.

    Scans stored regions in insertion order. For each differently-predicted
    entry: if the new center lies inside the entry, the prediction is
    overridden to the entry's and the region shrunk to the largest ball
    inside both; otherwise an overlap shrinks the region to the largest ball
    clear of the entry. Returns (final prediction, final region, adjusted).
    """
    if store.regions:
        _check_compatible(store.regions[0], region)
    cand = region
    adjusted = False
    overridden = False
    if store._grid is not None:
        candidate_idx = store._grid.candidates(region, len(store.regions))
    else:
        candidate_idx = range(len(store.regions))
    for idx in candidate_idx:
        entry = store.regions[idx]
        store.comparisons += 1
        if entry.prediction == cand.prediction:
            continue
        d = _distance(entry, cand)
        if d <= entry.radius:
            _require_geometry(cand)
            new_r = max(0.0, min(cand.radius, entry.radius - d))
            if overridden and new_r < cand.radius - _INVARIANT_TOL:
                raise MemoryInvariantError(
                    "a second differently-predicted entry forced shrinking "
                    "after a prediction override; the store invariant is broken")
            cand = replace(cand, radius=new_r, prediction=entry.prediction)
            adjusted = True
            overridden = True
            store.overlap_events += 1
        elif d < entry.radius + cand.radius:
            _require_geometry(cand)
            new_r = max(0.0, min(cand.radius, d - entry.radius))
            if overridden and new_r < cand.radius - _INVARIANT_TOL:
                raise MemoryInvariantError(
                    "a second differently-predicted entry forced shrinking "
                    "after a prediction override; the store invariant is broken")
            cand = replace(cand, radius=new_r)
            adjusted = True
            store.overlap_events += 1
    store._append(cand)
    store.insertions += 1
    if adjusted:
        store.adjusted_insertions += 1
    return cand.prediction, cand, adjusted


def _require_geometry(region: CertifiedRegion) -> None:
    if region.norm == NORM_L1 and region.dim > 1:
        raise UnsupportedNormError(
            "cross-prediction overlap handling for L1 regions is only exact "
            f"in d=1; got an overlapping pair in d={region.dim}")


def _validate_invariant(regions: list[CertifiedRegion]) -> None:
    for i in range(len(regions)):
        for j in range(i + 1, len(regions)):
            a, b = regions[i], regions[j]
            if a.prediction == b.prediction:
                continue
            if _distance(a, b) < a.radius + b.radius - _INVARIANT_TOL:
                raise MemoryInvariantError(
                    f"regions {i} and {j} predict differently but overlap")


def save_memory(store: MemoryStore, path) -> None:
    """Write the store as one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in store.regions:
            fh.write(json.dumps({"center": list(r.center), "radius": r.radius,
                                 "prediction": r.prediction, "sigma": r.sigma_used,
                                 "norm": r.norm}) + "\n")


def load_memory(path, use_grid: bool = False, cell_size: float = 1.0) -> MemoryStore:
    """Read a JSON-lines memory file, re-validating the no-overlap invariant."""
    regions: list[CertifiedRegion] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                region = CertifiedRegion(center=obj["center"], radius=obj["radius"],
                                         prediction=int(obj["prediction"]),
                                         sigma_used=float(obj["sigma"]),
                                         norm=obj["norm"])
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}: bad region on line {lineno}: {exc}") from exc
            if regions:
                _check_compatible(regions[0], region)
            regions.append(region)
    _validate_invariant(regions)
    store = MemoryStore(use_grid=use_grid, cell_size=cell_size)
    for r in regions:
        store._append(r)
    return store


def audit(store: MemoryStore, cert_sample_cost: int = 100_000) -> dict:
    """Overlap and cost report for the current store.

    ``predicted_cost`` evaluates the expected per-insert work
    N*p + (1-p)*(2N + n) at the observed overlap frequency p, where N is the
    store size and n the Monte Carlo cost of one certification.
    """
    n_regions = len(store.regions)
    p = (store.adjusted_insertions / store.insertions) if store.insertions else 0.0
    cost = n_regions * p + (1.0 - p) * (2.0 * n_regions + cert_sample_cost)
    return {
        "overlap_events": store.overlap_events,
        "comparisons": store.comparisons,
        "predicted_cost": cost,
    }
