"""Arm-selection strategies.

``LinearizedPolicy`` derives ε from the clicked/non-clicked reward densities
and, following the linearized algorithm literally, uses ε as the probability
of the *greedy* branch. The baselines (fixed ε-greedy, ε-beginning,
ε-decreasing, exponentiated-gradient ε selection) use ε as the exploration
probability.
"""
from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass, field
from typing import Hashable, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from .density import DEFAULT_THRESHOLD_ERROR, DegenerateDensityError, estimate_density
from .reward import DEFAULT_WINDOW, EmptySampleError, RewardSample, StatsStore, build_point_series
from .utility import (
    DEFAULT_GRID_SIZE,
    EQ11,
    FALLBACK_EPSILON,
    InsufficientDataError,
    PopulationCounts,
    TradeoffResult,
    UtilityParams,
    optimize_threshold,
)

KINDS = ("linearized", "egreedy", "ebeginning", "edecreasing", "eg")
LITERAL = "literal"
CONVENTIONAL = "conventional"


class EmptyPoolError(ValueError):
    pass


class Decision(NamedTuple):
    doc_id: Hashable
    exploratory: bool
    epsilon_used: float


@dataclass
class PolicyConfig:
    kind: str = "linearized"
    epsilon: float = 0.1
    epsilon0: float = 1.0
    horizon: int = 1000
    eg_candidates: Tuple[float, ...] = (0.01, 0.05, 0.1, 0.2, 0.5)
    eg_learning_rate: float = 0.1
    eg_floor: float = 0.05
    batch: int = 100
    a: float = 1.0
    b: float = 1.0
    utility_variant: str = EQ11
    grid_size: int = DEFAULT_GRID_SIZE
    fallback_epsilon: float = FALLBACK_EPSILON
    threshold_error: float = DEFAULT_THRESHOLD_ERROR
    window: int = DEFAULT_WINDOW
    branch: str = LITERAL

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {KINDS}")
        for name in ("epsilon", "fallback_epsilon", "eg_floor"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if not self.epsilon0 > 0:
            raise ValueError("epsilon0 must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        self.eg_candidates = tuple(float(e) for e in self.eg_candidates)
        if not self.eg_candidates:
            raise ValueError("eg_candidates must not be empty")
        if any(not 0.0 <= e <= 1.0 for e in self.eg_candidates):
            raise ValueError("eg_candidates must lie in [0, 1]")
        if self.branch not in (LITERAL, CONVENTIONAL):
            raise ValueError(f"branch must be {LITERAL!r} or {CONVENTIONAL!r}")
        # validates a, b and the variant
        self.utility_params()

    def utility_params(self) -> UtilityParams:
        return UtilityParams(self.a, self.b, self.utility_variant)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["eg_candidates"] = list(self.eg_candidates)
        return out


def greedy_select(
    candidates: Iterable[Hashable],
    stats: StatsStore,
    exclude: Optional[set] = None,
    rng: Optional[random.Random] = None,
) -> Hashable:
    """Highest-CTR candidate; unseen documents count as CTR 0.

    Ties are broken uniformly at random with ``rng``.
    """
    table = stats.ctr_table()
    if exclude:
        candidates = [doc for doc in candidates if doc not in exclude]
    elif not isinstance(candidates, (list, tuple)):
        candidates = list(candidates)
    if not candidates:
        raise EmptyPoolError("no candidate left to choose from")
    values = list(map(table.__getitem__, candidates))
    best = max(values)
    if values.count(best) == 1:
        return candidates[values.index(best)]
    if rng is None:
        raise ValueError("a random source is required to break ties")
    ties = [doc for doc, v in zip(candidates, values) if v == best]
    return ties[rng.randrange(len(ties))]


def _uniform(candidates: Sequence[Hashable], rng: random.Random) -> Hashable:
    if not candidates:
        raise EmptyPoolError("empty candidate set")
    return candidates[int(rng.random() * len(candidates))]


def epsilon_greedy_select(
    candidates: Sequence[Hashable], stats: StatsStore, epsilon: float, rng: random.Random
) -> Decision:
    if not candidates:
        raise EmptyPoolError("empty candidate set")
    if rng.random() < epsilon:
        return Decision(_uniform(candidates, rng), True, epsilon)
    return Decision(greedy_select(candidates, stats, rng=rng), False, epsilon)


def exploration_rounds(epsilon: float, horizon: int) -> int:
    # guards against 0.07 * 100 == 7.000000000000001
    return max(0, math.ceil(epsilon * horizon - 1e-9))


def epsilon_beginning_select(
    t: int,
    horizon: int,
    epsilon: float,
    candidates: Sequence[Hashable],
    stats: StatsStore,
    rng: random.Random,
) -> Decision:
    if t < 1:
        raise ValueError("round index starts at 1")
    if t <= exploration_rounds(epsilon, horizon):
        return Decision(_uniform(candidates, rng), True, 1.0)
    return Decision(greedy_select(candidates, stats, rng=rng), False, 0.0)


def epsilon_decreasing_schedule(t: int, epsilon0: float) -> float:
    if t < 1:
        raise ValueError("round index starts at 1")
    if not epsilon0 > 0:
        raise ValueError("epsilon0 must be positive")
    return min(1.0, epsilon0 / t)


@dataclass
class EGState:
    """Probability vector over a finite set of ε values."""

    candidates: Tuple[float, ...]
    learning_rate: float = 0.1
    floor: float = 0.05
    probs: List[float] = field(default_factory=list)
    chosen: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("empty epsilon candidate set")
        if not self.probs:
            k = len(self.candidates)
            self.probs = [1.0 / k] * k

    def sample(self, rng: random.Random) -> float:
        u = rng.random()
        acc = 0.0
        idx = len(self.probs) - 1
        for i, p in enumerate(self.probs):
            acc += p
            if u < acc:
                idx = i
                break
        self.chosen = idx
        return self.candidates[idx]

    def feedback(self, clicked: bool) -> None:
        if self.chosen is None:
            return
        weights = list(self.probs)
        weights[self.chosen] *= math.exp(self.learning_rate * (1.0 if clicked else 0.0))
        total = sum(weights)
        k = len(weights)
        self.probs = [(1.0 - self.floor) * w / total + self.floor / k for w in weights]
        self.chosen = None


def eg_adaptive_step(state: EGState, clicked: Optional[bool], rng: random.Random) -> Tuple[float, EGState]:
    """Apply feedback for the previous pick (if any), then draw the next ε."""
    if clicked is not None:
        state.feedback(clicked)
    return state.sample(rng), state


def compute_tradeoff(
    clicked: RewardSample | Sequence[float],
    nonclicked: RewardSample | Sequence[float],
    params: UtilityParams = UtilityParams(),
    threshold_error: float = DEFAULT_THRESHOLD_ERROR,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> TradeoffResult:
    """Linearize both samples and optimize the threshold.

    Raises InsufficientDataError when either density cannot be built.
    """
    try:
        clicked_density = estimate_density(build_point_series(clicked), threshold_error)
        nonclicked_density = estimate_density(build_point_series(nonclicked), threshold_error)
    except (EmptySampleError, DegenerateDensityError) as exc:
        raise InsufficientDataError(f"insufficient data: {exc}") from exc
    counts = PopulationCounts(len(clicked), len(nonclicked))
    return optimize_threshold(clicked_density, nonclicked_density, params, counts, grid_size)


def _tradeoff_epsilon(
    clicked, nonclicked, params: UtilityParams, threshold_error: float, grid_size: int, fallback: float
) -> Tuple[float, Optional[TradeoffResult]]:
    try:
        result = compute_tradeoff(clicked, nonclicked, params, threshold_error, grid_size)
    except InsufficientDataError:
        return fallback, None
    return result.epsilon, result


def linearized_select_batch(
    n: int,
    clicked_sample: RewardSample | Sequence[float],
    nonclicked_sample: RewardSample | Sequence[float],
    candidates: Sequence[Hashable],
    stats: StatsStore,
    rng: random.Random,
    params: UtilityParams = UtilityParams(),
    threshold_error: float = DEFAULT_THRESHOLD_ERROR,
    grid_size: int = DEFAULT_GRID_SIZE,
    fallback_epsilon: float = FALLBACK_EPSILON,
    branch: str = LITERAL,
    epsilon: Optional[float] = None,
) -> List[Hashable]:
    """Recommend ``n`` distinct documents.

    With the literal branch a draw q <= ε takes the best remaining document
    by CTR, otherwise a uniformly random remaining one. ``epsilon`` overrides
    the derived value.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    pool = list(dict.fromkeys(candidates))
    if len(pool) < n:
        raise EmptyPoolError(f"need {n} candidates, have {len(pool)}")
    if n == 0:
        return []
    if epsilon is None:
        epsilon, _ = _tradeoff_epsilon(
            clicked_sample, nonclicked_sample, params, threshold_error, grid_size, fallback_epsilon
        )
    chosen: List[Hashable] = []
    taken: set = set()
    for _ in range(n):
        q = rng.random()
        take_greedy = q <= epsilon if branch == LITERAL else q > epsilon
        if take_greedy:
            doc = greedy_select(pool, stats, exclude=taken, rng=rng)
        else:
            remaining = [d for d in pool if d not in taken]
            doc = remaining[rng.randrange(len(remaining))]
        chosen.append(doc)
        taken.add(doc)
    return chosen


class Policy:
    """One bandit state: click statistics, RNG and a round counter."""

    kind = "base"

    def __init__(self, config: PolicyConfig, rng: random.Random):
        self.config = config
        self.rng = rng
        self.stats = StatsStore(config.window)
        self.t = 0

    def select(self, candidates: Sequence[Hashable]) -> Decision:
        self.t += 1
        return self._select(candidates)

    def _select(self, candidates: Sequence[Hashable]) -> Decision:
        raise NotImplementedError

    def update(self, doc_id: Hashable, clicked: bool) -> None:
        self.stats.record_event(doc_id, clicked)


class EpsilonGreedyPolicy(Policy):
    kind = "egreedy"

    def select(self, candidates):
        # inlined epsilon_greedy_select; this is the simulation hot path
        self.t += 1
        eps = self.config.epsilon
        rng = self.rng
        if not candidates:
            raise EmptyPoolError("empty candidate set")
        if rng.random() < eps:
            return Decision(candidates[int(rng.random() * len(candidates))], True, eps)
        return Decision(greedy_select(candidates, self.stats, rng=rng), False, eps)


class EpsilonBeginningPolicy(Policy):
    kind = "ebeginning"

    def _select(self, candidates):
        cfg = self.config
        return epsilon_beginning_select(self.t, cfg.horizon, cfg.epsilon, candidates, self.stats, self.rng)


class EpsilonDecreasingPolicy(Policy):
    kind = "edecreasing"

    def _select(self, candidates):
        eps = epsilon_decreasing_schedule(self.t, self.config.epsilon0)
        return epsilon_greedy_select(candidates, self.stats, eps, self.rng)


class EGPolicy(Policy):
    kind = "eg"

    def __init__(self, config, rng):
        super().__init__(config, rng)
        self.eg = EGState(config.eg_candidates, config.eg_learning_rate, config.eg_floor)

    def _select(self, candidates):
        eps, _ = eg_adaptive_step(self.eg, None, self.rng)
        return epsilon_greedy_select(candidates, self.stats, eps, self.rng)

    def update(self, doc_id, clicked):
        super().update(doc_id, clicked)
        self.eg.feedback(clicked)


class LinearizedPolicy(Policy):
    kind = "linearized"

    def __init__(self, config, rng):
        super().__init__(config, rng)
        self.epsilon = config.fallback_epsilon
        self.tradeoff: Optional[TradeoffResult] = None
        self.refresh_rounds: List[int] = []
        self._params = config.utility_params()

    def refresh(self) -> float:
        cfg = self.config
        self.epsilon, self.tradeoff = _tradeoff_epsilon(
            self.stats.clicked,
            self.stats.nonclicked,
            self._params,
            cfg.threshold_error,
            cfg.grid_size,
            cfg.fallback_epsilon,
        )
        self.refresh_rounds.append(self.t)
        return self.epsilon

    def _select(self, candidates):
        if (self.t - 1) % self.config.batch == 0:
            self.refresh()
        eps = self.epsilon
        q = self.rng.random()
        take_greedy = q <= eps if self.config.branch == LITERAL else q > eps
        if take_greedy:
            return Decision(greedy_select(candidates, self.stats, rng=self.rng), False, eps)
        return Decision(_uniform(candidates, self.rng), True, eps)


_POLICIES = {
    cls.kind: cls
    for cls in (LinearizedPolicy, EpsilonGreedyPolicy, EpsilonBeginningPolicy, EpsilonDecreasingPolicy, EGPolicy)
}


def make_policy(config: PolicyConfig, rng: random.Random | int | None = None) -> Policy:
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    return _POLICIES[config.kind](config, rng)


def refresh_and_select(policy: Policy, candidates: Sequence[Hashable]) -> Decision:
    return policy.select(candidates)
