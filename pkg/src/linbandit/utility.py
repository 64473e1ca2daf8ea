"""Threshold search that turns the two reward densities into an ε value."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import bisect

import numpy as np

from .density import PiecewiseDensity, tail_probabilities, tail_probability

EQ11 = "eq11"
EQ16 = "eq16"
VARIANTS = (EQ11, EQ16)

DEFAULT_GRID_SIZE = 1024
FALLBACK_EPSILON = 0.5
_TIE_TOL = 1e-12


class InsufficientDataError(ValueError):
    """A density is missing; callers fall back to a default ε."""


@dataclass(frozen=True)
class UtilityParams:
    a: float = 1.0
    b: float = 1.0
    variant: str = EQ11

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0):
            raise ValueError("utility weights a and b must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown utility variant {self.variant!r}; expected one of {VARIANTS}")


@dataclass(frozen=True)
class PopulationCounts:
    tcd: int
    tncd: int

    def __post_init__(self) -> None:
        if self.tcd < 0 or self.tncd < 0:
            raise ValueError("population counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tcd + self.tncd


@dataclass(frozen=True)
class TradeoffResult:
    threshold: float
    epsilon: float
    uf_value: float


def utility_value(
    o: float,
    clicked: PiecewiseDensity,
    nonclicked: PiecewiseDensity,
    params: UtilityParams,
    counts: PopulationCounts,
) -> float:
    if not (clicked.normalized and nonclicked.normalized):
        raise ValueError("utility requires normalized densities")
    if counts.n <= 0:
        raise ValueError("population counts must not both be zero")
    t_r = tail_probability(clicked, o)
    t_s = tail_probability(nonclicked, o)
    if params.variant == EQ11:
        return params.a * t_r - params.b * t_s
    n = counts.n
    # unconditional tail as the count-weighted mixture of both conditionals
    t_mix = (counts.tcd * t_r + counts.tncd * t_s) / n
    return t_mix * n * (params.a * t_r + params.b * t_s)


def _roots(density: PiecewiseDensity) -> list[float]:
    out = []
    for seg in density.segments:
        if seg.slope != 0.0:
            r = -seg.intercept / seg.slope
            if seg.x_lo < r < seg.x_hi:
                out.append(r)
    return out


def _line_at(density: PiecewiseDensity, x: float) -> tuple[float, float]:
    """(intercept, slope) of the clamped density around an interior point x."""
    lo, hi = density.domain
    if x < lo or x > hi:
        return 0.0, 0.0
    seg = density.segments[bisect.bisect_right(density._starts, x) - 1]
    if seg.intercept + seg.slope * x <= 0.0:
        return 0.0, 0.0
    return seg.intercept, seg.slope


def crossing_points(
    clicked: PiecewiseDensity, nonclicked: PiecewiseDensity, a: float, b: float
) -> list[float]:
    """Points where a*f_clicked == b*f_nonclicked inside a shared linear piece.

    a*T_r - b*T_s is quadratic between breakpoints and its interior maxima
    sit exactly at these crossings. Rounding to 12 decimals keeps the set
    identical when a and b are scaled together; UF is flat to second order
    there, so the cost is ~1e-24.
    """
    cuts = sorted(
        set(clicked.boundaries()) | set(nonclicked.boundaries())
        | set(_roots(clicked)) | set(_roots(nonclicked))
    )
    out = []
    for u, v in zip(cuts, cuts[1:]):
        m = 0.5 * (u + v)
        ar, br = _line_at(clicked, m)
        as_, bs = _line_at(nonclicked, m)
        c0 = a * ar - b * as_
        c1 = a * br - b * bs
        if c1 != 0.0:
            x = round(-c0 / c1, 12)
            if u < x < v:
                out.append(x)
    return out


def candidate_thresholds(
    clicked: PiecewiseDensity,
    nonclicked: PiecewiseDensity,
    grid_size: int = DEFAULT_GRID_SIZE,
    params: Optional[UtilityParams] = None,
) -> list[float]:
    lo = min(clicked.domain[0], nonclicked.domain[0])
    hi = max(clicked.domain[1], nonclicked.domain[1])
    xs = set(clicked.boundaries()) | set(nonclicked.boundaries())
    # eq16 is non-increasing in o, so only eq11 has interior maxima
    if params is not None and params.variant == EQ11:
        xs.update(crossing_points(clicked, nonclicked, params.a, params.b))
    if grid_size > 1 and hi > lo:
        step = (hi - lo) / (grid_size - 1)
        xs.update(lo + i * step for i in range(grid_size - 1))
        xs.add(hi)
    elif grid_size >= 1:
        xs.add(lo)
    return sorted(xs)


def optimize_threshold(
    clicked: Optional[PiecewiseDensity],
    nonclicked: Optional[PiecewiseDensity],
    params: UtilityParams = UtilityParams(),
    counts: Optional[PopulationCounts] = None,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> TradeoffResult:
    """Maximize the utility over segment boundaries, density crossings and a grid.

    Ties go to the smallest threshold.
    """
    if clicked is None or nonclicked is None:
        raise InsufficientDataError("insufficient data: both densities are required")
    if counts is None:
        counts = PopulationCounts(1, 1)
    if not (clicked.normalized and nonclicked.normalized):
        raise ValueError("utility requires normalized densities")
    if counts.n <= 0:
        raise ValueError("population counts must not both be zero")
    xs = np.array(candidate_thresholds(clicked, nonclicked, grid_size, params))
    t_r = tail_probabilities(clicked, xs)
    t_s = tail_probabilities(nonclicked, xs)
    if params.variant == EQ11:
        uf = params.a * t_r - params.b * t_s
    else:
        t_mix = (counts.tcd * t_r + counts.tncd * t_s) / counts.n
        uf = t_mix * counts.n * (params.a * t_r + params.b * t_s)
    top = uf.max()
    best = int(np.flatnonzero(uf >= top - _TIE_TOL)[0])
    o = float(xs[best])
    return TradeoffResult(o, exploration_rate(o, clicked), float(uf[best]))


def exploration_rate(o: float, clicked: PiecewiseDensity) -> float:
    return tail_probability(clicked, o)
