"""Per-document click statistics and reward samples.

Every recommendation event contributes the displayed document's current CTR
to either the clicked or the non-clicked sample. The samples feed the
density linearizer.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Hashable, Iterable, List, Tuple

import numpy as np

DEFAULT_WINDOW = 10_000


class UndefinedCTRError(ValueError):
    """Raised when the CTR of a never-displayed document is requested."""


class EmptySampleError(ValueError):
    pass


@dataclass
class DocumentStats:
    doc_id: Hashable
    impressions: int = 0
    clicks: int = 0

    def __post_init__(self) -> None:
        if self.impressions < 0 or self.clicks < 0 or self.clicks > self.impressions:
            raise ValueError(
                f"invalid counters for {self.doc_id!r}: "
                f"impressions={self.impressions}, clicks={self.clicks}"
            )


def ctr(stats: DocumentStats) -> float:
    if stats.impressions <= 0:
        raise UndefinedCTRError(f"undefined CTR for {stats.doc_id!r}: zero impressions")
    return stats.clicks / stats.impressions


@dataclass
class RewardSample:
    """Sliding window of CTR values observed at event time."""

    label: str
    window: int = DEFAULT_WINDOW
    rewards: Deque[float] = field(init=False)

    def __post_init__(self) -> None:
        if self.label not in ("clicked", "non-clicked"):
            raise ValueError(f"unknown sample label {self.label!r}")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        self.rewards = deque(maxlen=self.window)

    def add(self, reward: float) -> None:
        self.rewards.append(reward)

    def __len__(self) -> int:
        return len(self.rewards)


class _CTRTable(dict):
    """doc_id -> CTR; unseen documents read as 0.0 without being inserted."""

    def __missing__(self, key):
        return 0.0


class StatsStore:
    """Counters for every document seen plus the two reward samples.

    Not thread-safe; callers serialize mutation.
    """

    def __init__(self, window: int = DEFAULT_WINDOW):
        self.docs: Dict[Hashable, DocumentStats] = {}
        # impressions/clicks mirrored in a flat dict for the greedy hot path
        self._ctr: Dict[Hashable, float] = _CTRTable()
        self.clicked = RewardSample("clicked", window)
        self.nonclicked = RewardSample("non-clicked", window)

    def record_event(self, doc_id: Hashable, clicked: bool) -> DocumentStats:
        stats = self.docs.get(doc_id)
        if stats is None:
            stats = self.docs[doc_id] = DocumentStats(doc_id)
        stats.impressions += 1
        if clicked:
            stats.clicks += 1
        value = stats.clicks / stats.impressions
        self._ctr[doc_id] = value
        if clicked:
            self.clicked.rewards.append(value)
        else:
            self.nonclicked.rewards.append(value)
        return stats

    def set_counts(self, doc_id: Hashable, impressions: int, clicks: int) -> DocumentStats:
        """Install counters directly (warm start); samples are untouched."""
        stats = self.docs[doc_id] = DocumentStats(doc_id, impressions, clicks)
        if impressions:
            self._ctr[doc_id] = clicks / impressions
        else:
            self._ctr.pop(doc_id, None)
        return stats

    def ctr(self, doc_id: Hashable) -> float:
        """CTR of ``doc_id``, 0.0 for documents never displayed."""
        return self._ctr[doc_id]

    def ctr_table(self) -> Dict[Hashable, float]:
        return self._ctr

    def __contains__(self, doc_id: Hashable) -> bool:
        return doc_id in self.docs


@dataclass(frozen=True)
class PointSeries:
    points: Tuple[Tuple[float, float], ...]
    domain: Tuple[float, float]

    def __len__(self) -> int:
        return len(self.points)

    @property
    def s(self) -> List[float]:
        return [p[0] for p in self.points]

    @property
    def p(self) -> List[float]:
        return [p[1] for p in self.points]


def build_point_series(rewards: Iterable[float] | RewardSample) -> PointSeries:
    """Bin rewards into floor(d/2) equal-width intervals over [min, max].

    Intervals are half-open except the last, which is closed. One point per
    non-empty interval, at the interval midpoint, weighted by its share of
    the sample.
    """
    if isinstance(rewards, RewardSample):
        rewards = rewards.rewards
    values = np.fromiter(rewards, dtype=float)
    d = values.size
    if d == 0:
        raise EmptySampleError("empty sample")
    if np.any((values < 0.0) | (values > 1.0)) or not np.all(np.isfinite(values)):
        raise ValueError("rewards must lie in [0, 1]")
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        return PointSeries(((lo, 1.0),), (lo, hi))

    n = max(1, d // 2)
    width = (hi - lo) / n
    idx = np.floor((values - lo) / width).astype(np.int64)
    np.clip(idx, 0, n - 1, out=idx)
    counts = np.bincount(idx, minlength=n)
    edges = lo + width * np.arange(n + 1)
    edges[-1] = hi
    filled = np.flatnonzero(counts)
    mids = 0.5 * (edges[filled] + edges[filled + 1])
    probs = counts[filled] / d
    return PointSeries(tuple(zip(mids.tolist(), probs.tolist())), (lo, hi))
