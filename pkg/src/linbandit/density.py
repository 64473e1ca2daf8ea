"""Piecewise-linear density estimation from discrete reward probabilities.

Points are segmented into linear classes by growing a least-squares fit until
its deviation error crosses a threshold. Adjacent classes are joined by
liaison lines and the whole curve is scaled to unit (clamped) area.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .reward import PointSeries

DEFAULT_THRESHOLD_ERROR = 0.0001

Point = Tuple[float, float]


class DegenerateFitError(ValueError):
    pass


class DegenerateDensityError(ValueError):
    pass


@dataclass(frozen=True)
class Line:
    a: float  # intercept
    b: float  # slope

    def __call__(self, x: float) -> float:
        return self.a + self.b * x


@dataclass(frozen=True)
class LinearClass:
    d: float
    f: float
    a: float
    b: float

    def __post_init__(self) -> None:
        if self.d > self.f:
            raise ValueError(f"class bounds out of order: {self.d} > {self.f}")


@dataclass(frozen=True)
class LiaisonSegment:
    x_lo: float
    x_hi: float
    alpha: float
    beta: float

    @property
    def empty(self) -> bool:
        return self.x_lo == self.x_hi


@dataclass(frozen=True)
class Segment:
    kind: str  # "class" or "liaison"
    x_lo: float
    x_hi: float
    intercept: float
    slope: float


def fit_least_squares(points: Sequence[Point]) -> Line:
    n = len(points)
    if n < 2:
        raise DegenerateFitError("degenerate fit: need at least 2 points")
    mx = sum(s for s, _ in points) / n
    my = sum(p for _, p in points) / n
    sxx = sum((s - mx) ** 2 for s, _ in points)
    if sxx == 0.0:
        raise DegenerateFitError("degenerate fit: fewer than 2 distinct abscissae")
    sxy = sum((s - mx) * (p - my) for s, p in points)
    b = sxy / sxx
    return Line(my - b * mx, b)


def deviation_error(points: Iterable[Point], line: Line) -> float:
    """Sum of squared residuals scaled by 1 / (intercept**2 + 1)."""
    # integer literal keeps Fraction inputs exact
    scale = line.a * line.a + 1
    return sum((line.a + line.b * s - p) ** 2 for s, p in points) / scale


def linearize(
    series: PointSeries | Sequence[Point],
    threshold_error: float = DEFAULT_THRESHOLD_ERROR,
) -> List[LinearClass]:
    """Split ordered points into runs whose line fit stays under the threshold.

    A point that pushes the running fit's deviation error above
    ``threshold_error`` closes the current class (without that point) and
    starts the next one. Leftover points form the final class.
    """
    points = series.points if isinstance(series, PointSeries) else tuple(series)
    if not points:
        raise ValueError("cannot linearize an empty point series")
    xs = [pt[0] for pt in points]
    if any(x0 >= x1 for x0, x1 in zip(xs, xs[1:])):
        raise ValueError("points must be ordered by strictly increasing reward")

    classes: List[LinearClass] = []
    start = 0
    # centered running moments of the working set
    n, mx, my, cxx, cxy, cyy = 0, 0.0, 0.0, 0.0, 0.0, 0.0
    i = 0
    for s, p in points:
        n1 = n + 1
        dx = s - mx
        dy = p - my
        mx1 = mx + dx / n1
        my1 = my + dy / n1
        cxx1 = cxx + dx * (s - mx1)
        ey = p - my1
        cxy1 = cxy + dx * ey
        cyy1 = cyy + dy * ey
        if cxx1 > 0.0:
            b = cxy1 / cxx1
            a = my1 - b * mx1
            if cyy1 - cxy1 * b > threshold_error * (a * a + 1.0):
                classes.append(_close(points[start:i]))
                start = i
                n, mx, my, cxx, cxy, cyy = 1, s, p, 0.0, 0.0, 0.0
                i += 1
                continue
        n, mx, my, cxx, cxy, cyy = n1, mx1, my1, cxx1, cxy1, cyy1
        i += 1
    classes.append(_close(points[start:]))
    return classes


def _close(members: Sequence[Point]) -> LinearClass:
    if len(members) == 1:
        s, p = members[0]
        return LinearClass(s, s, p, 0.0)
    line = fit_least_squares(members)
    return LinearClass(members[0][0], members[-1][0], line.a, line.b)


def connect_classes(classes: Sequence[LinearClass]) -> List[LiaisonSegment]:
    if len(classes) < 2:
        raise ValueError("need at least 2 classes to connect")
    liaisons = []
    for left, right in zip(classes, classes[1:]):
        if left.f > right.d:
            raise ValueError(
                f"classes unordered or overlapping: [{left.d}, {left.f}] then [{right.d}, {right.f}]"
            )
        y0 = left.a + left.b * left.f
        y1 = right.a + right.b * right.d
        if left.f == right.d:
            liaisons.append(LiaisonSegment(left.f, right.d, y0, 0.0))
            continue
        beta = (y1 - y0) / (right.d - left.f)
        liaisons.append(LiaisonSegment(left.f, right.d, y0 - beta * left.f, beta))
    return liaisons


def _clamped_area(a: float, b: float, lo: float, hi: float) -> float:
    """Integral of max(0, a + b*x) over [lo, hi]."""
    if hi <= lo:
        return 0.0
    y0 = a + b * lo
    y1 = a + b * hi
    if y0 >= 0.0 and y1 >= 0.0:
        return 0.5 * (y0 + y1) * (hi - lo)
    if y0 <= 0.0 and y1 <= 0.0:
        return 0.0
    root = -a / b
    if y0 > 0.0:
        return 0.5 * y0 * (root - lo)
    return 0.5 * y1 * (hi - root)


class PiecewiseDensity:
    """Ordered classes and liaisons forming a clamped piecewise-linear curve."""

    def __init__(
        self,
        classes: Sequence[LinearClass],
        liaisons: Sequence[LiaisonSegment],
        normalized: bool = False,
    ):
        if not classes:
            raise ValueError("density needs at least one class")
        if len(liaisons) != len(classes) - 1:
            raise ValueError("expected one liaison between each adjacent class pair")
        self.classes = tuple(classes)
        self.liaisons = tuple(liaisons)
        self.normalized = normalized
        segments: List[Segment] = []
        for i, c in enumerate(self.classes):
            segments.append(Segment("class", c.d, c.f, c.a, c.b))
            if i < len(self.liaisons):
                li = self.liaisons[i]
                segments.append(Segment("liaison", li.x_lo, li.x_hi, li.alpha, li.beta))
        self.segments = tuple(segments)
        self._starts = [seg.x_lo for seg in segments]
        self._areas = [_clamped_area(s.intercept, s.slope, s.x_lo, s.x_hi) for s in segments]
        # suffix[i] = area of segments i..end
        suffix = [0.0] * (len(segments) + 1)
        for i in range(len(segments) - 1, -1, -1):
            suffix[i] = suffix[i + 1] + self._areas[i]
        self._suffix = suffix

    @property
    def domain(self) -> Tuple[float, float]:
        return self.classes[0].d, self.classes[-1].f

    @property
    def area(self) -> float:
        return self._suffix[0]

    def boundaries(self) -> List[float]:
        xs = {seg.x_lo for seg in self.segments} | {seg.x_hi for seg in self.segments}
        return sorted(xs)

    def __call__(self, x: float) -> float:
        return evaluate_density(self, x)

    def to_rows(self) -> List[Tuple[str, float, float, float, float]]:
        return [(s.kind, s.x_lo, s.x_hi, s.intercept, s.slope) for s in self.segments]

    def __repr__(self) -> str:
        lo, hi = self.domain
        return (
            f"PiecewiseDensity(classes={len(self.classes)}, domain=[{lo:.6g}, {hi:.6g}], "
            f"normalized={self.normalized})"
        )


def normalize_density(
    classes: Sequence[LinearClass], liaisons: Sequence[LiaisonSegment] = ()
) -> PiecewiseDensity:
    raw = PiecewiseDensity(classes, liaisons)
    total = raw.area
    if not total > 0.0 or not math.isfinite(total):
        raise DegenerateDensityError(f"degenerate density: clamped area {total!r}")
    scaled_classes = [LinearClass(c.d, c.f, c.a / total, c.b / total) for c in classes]
    scaled_liaisons = [
        LiaisonSegment(li.x_lo, li.x_hi, li.alpha / total, li.beta / total) for li in liaisons
    ]
    return PiecewiseDensity(scaled_classes, scaled_liaisons, normalized=True)


def estimate_density(
    series: PointSeries, threshold_error: float = DEFAULT_THRESHOLD_ERROR
) -> PiecewiseDensity:
    """linearize -> connect -> normalize in one call."""
    classes = linearize(series, threshold_error)
    liaisons = connect_classes(classes) if len(classes) > 1 else []
    return normalize_density(classes, liaisons)


def evaluate_density(density: PiecewiseDensity, x: float) -> float:
    lo, hi = density.domain
    if x < lo or x > hi:
        return 0.0
    seg = density.segments[bisect.bisect_right(density._starts, x) - 1]
    return max(0.0, seg.intercept + seg.slope * x)


def tail_probability(density: PiecewiseDensity, o: float) -> float:
    """Clamped area of the density to the right of ``o``."""
    lo, hi = density.domain
    if o >= hi:
        return 0.0
    if o <= lo:
        total = density.area
    else:
        i = bisect.bisect_right(density._starts, o) - 1
        seg = density.segments[i]
        total = _clamped_area(seg.intercept, seg.slope, o, seg.x_hi) + density._suffix[i + 1]
    return min(1.0, total) if density.normalized else total


def _clamped_area_vec(a, b, lo, hi):
    width = np.maximum(hi - lo, 0.0)
    y0 = a + b * lo
    y1 = a + b * hi
    both = 0.5 * (np.maximum(y0, 0.0) + np.maximum(y1, 0.0)) * width
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.where(b != 0.0, -a / np.where(b != 0.0, b, 1.0), lo)
    left = 0.5 * y0 * (root - lo)
    right = 0.5 * y1 * (hi - root)
    out = np.where(
        (y0 >= 0.0) & (y1 >= 0.0),
        both,
        np.where((y0 <= 0.0) & (y1 <= 0.0), 0.0, np.where(y0 > 0.0, left, right)),
    )
    return np.where(width > 0.0, out, 0.0)


def tail_probabilities(density: PiecewiseDensity, xs) -> np.ndarray:
    """Vectorized ``tail_probability`` over an array of thresholds."""
    xs = np.asarray(xs, dtype=float)
    lo, hi = density.domain
    starts = np.asarray(density._starts)
    ends = np.array([seg.x_hi for seg in density.segments])
    a = np.array([seg.intercept for seg in density.segments])
    b = np.array([seg.slope for seg in density.segments])
    suffix = np.asarray(density._suffix)
    idx = np.clip(np.searchsorted(starts, xs, side="right") - 1, 0, len(starts) - 1)
    o = np.clip(xs, lo, hi)
    partial = _clamped_area_vec(a[idx], b[idx], o, ends[idx])
    total = np.where(xs <= lo, suffix[0], partial + suffix[idx + 1])
    total = np.where(xs >= hi, 0.0, total)
    return np.minimum(total, 1.0) if density.normalized else total


def write_density_csv(density: PiecewiseDensity, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kind", "x_lo", "x_hi", "intercept", "slope"])
        for kind, x_lo, x_hi, a, b in density.to_rows():
            writer.writerow([kind, repr(x_lo), repr(x_hi), repr(a), repr(b)])
