"""Offline evaluation: event logs, synthetic streams, replay and simulation."""
from __future__ import annotations

import csv
import json
import math
import os
import random
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Hashable, Iterable, Iterator, List, NamedTuple, Optional, Protocol, Sequence, Tuple

from .policies import Decision, Policy, PolicyConfig, make_policy
from .situation import DEFAULT_SIMILARITY_FLOOR, OntologySet, Situation, SituationStore, default_ontologies


class LogFormatError(ValueError):
    pass


class EventRecord(NamedTuple):
    t: int
    situation: Optional[Situation]
    candidates: Tuple[str, ...]
    displayed: str
    clicked: bool

    def validate(self) -> "EventRecord":
        if self.t < 1:
            raise ValueError("round index must be >= 1")
        if not self.candidates:
            raise ValueError("candidate list must not be empty")
        if self.displayed not in self.candidates:
            raise ValueError(f"displayed {self.displayed!r} not among candidates")
        return self

    def to_json(self) -> str:
        sit = self.situation
        obj = {
            "t": self.t,
            "location": sit.location if sit else None,
            "time": sit.time if sit else None,
            "social": sit.social if sit else None,
            "candidates": list(self.candidates),
            "displayed": self.displayed,
            "clicked": int(self.clicked),
        }
        return json.dumps(obj, separators=(",", ":"))


def _parse_record(line: str, lineno: int) -> EventRecord:
    def fail(field_name: str, why: str) -> LogFormatError:
        return LogFormatError(f"line {lineno}: field '{field_name}': {why}")

    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise LogFormatError(f"line {lineno}: expected a JSON object")

    t = obj.get("t")
    if not isinstance(t, int) or isinstance(t, bool) or t < 1:
        raise fail("t", "expected an integer >= 1")
    dims = [obj.get(k) for k in ("location", "time", "social")]
    if all(d is None for d in dims):
        situation = None
    else:
        for name, value in zip(("location", "time", "social"), dims):
            if not isinstance(value, str) or not value:
                raise fail(name, "expected a concept id string")
        situation = Situation(*dims)
    candidates = obj.get("candidates")
    if (
        not isinstance(candidates, list)
        or not candidates
        or not all(isinstance(c, str) for c in candidates)
    ):
        raise fail("candidates", "expected a non-empty list of strings")
    displayed = obj.get("displayed")
    if not isinstance(displayed, str):
        raise fail("displayed", "expected a string")
    if displayed not in candidates:
        raise fail("displayed", f"{displayed!r} is not among the candidates")
    clicked = obj.get("clicked")
    if clicked not in (0, 1) or isinstance(clicked, float):
        raise fail("clicked", "expected 0 or 1")
    return EventRecord(t, situation, tuple(candidates), displayed, bool(clicked))


def load_event_log(path: str | os.PathLike) -> Iterator[EventRecord]:
    """Stream records from a line-delimited JSON log."""
    last_t = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = _parse_record(line, lineno)
            if record.t <= last_t:
                raise LogFormatError(f"line {lineno}: field 't': {record.t} does not increase past {last_t}")
            last_t = record.t
            yield record


def write_log(records: Iterable[EventRecord], path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        for record in records:
            fh.write(record.to_json())
            fh.write("\n")


@dataclass
class SyntheticConfig:
    docs: int = 20
    ctr_low: float = 0.02
    ctr_high: float = 0.3
    arrival_rate: Optional[float] = None  # expected arrivals per round; None keeps the pool size steady
    lifetime: int = 5000
    rounds: int = 10_000
    candidates: int = 10
    situations: int = 1

    def __post_init__(self) -> None:
        if self.docs < 1:
            raise ValueError("docs must be >= 1")
        if not 0.0 <= self.ctr_low <= self.ctr_high <= 1.0:
            raise ValueError("latent CTR bounds must satisfy 0 <= ctr_low <= ctr_high <= 1")
        if self.lifetime < 1:
            raise ValueError("lifetime must be >= 1")
        if self.arrival_rate is not None and self.arrival_rate < 0:
            raise ValueError("arrival_rate must be non-negative")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if self.candidates < 1:
            raise ValueError("candidates must be >= 1")
        if self.situations < 0:
            raise ValueError("situations must be >= 0")

    @property
    def rate(self) -> float:
        return self.docs / self.lifetime if self.arrival_rate is None else self.arrival_rate

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "SyntheticConfig":
        with open(path) as fh:
            data = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown synthetic config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class SyntheticStream:
    records: List[EventRecord]
    latent: Dict[str, float]
    arrivals: Dict[str, int]
    uniforms: List[float]  # per-round draw shared by logged and simulated clicks
    best_latent: List[float]  # latent CTR of the best candidate each round
    config: SyntheticConfig
    seed: int

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def generate_synthetic_log(
    config: SyntheticConfig, seed: int, ontologies: Optional[OntologySet] = None
) -> SyntheticStream:
    """Documents arrive and expire; a uniform logger picks the display."""
    rng = random.Random(seed)
    situations: List[Optional[Situation]] = [None]
    if config.situations > 0:
        onto = ontologies or default_ontologies()
        leaves = [o.leaves() for o in onto]
        situations = [Situation(*(lv[rng.randrange(len(lv))] for lv in leaves)) for _ in range(config.situations)]

    latent: Dict[str, float] = {}
    arrivals: Dict[str, int] = {}
    live: List[str] = []

    def arrive(t_arrival: int) -> None:
        doc = f"d{len(latent):05d}"
        latent[doc] = rng.uniform(config.ctr_low, config.ctr_high)
        arrivals[doc] = t_arrival
        live.append(doc)

    # stagger the initial pool so expiries do not all coincide
    for _ in range(config.docs):
        arrive(1 - rng.randrange(config.lifetime))

    rate = config.rate
    whole, frac = int(rate), rate - int(rate)
    rand = rng.random
    lifetime = config.lifetime
    records: List[EventRecord] = []
    uniforms: List[float] = []
    best: List[float] = []
    next_expiry = min(arrivals.values()) + lifetime
    for t in range(1, config.rounds + 1):
        for _ in range(whole + (rand() < frac)):
            arrive(t)
        if t >= next_expiry:
            live[:] = [d for d in live if t - arrivals[d] < lifetime]
            if not live:
                arrive(t)
            next_expiry = min(arrivals[d] for d in live) + lifetime
        m = len(live)
        k = min(config.candidates, m)
        # partial Fisher-Yates driven by float draws
        pool = live[:]
        for i in range(k):
            j = i + int(rand() * (m - i))
            pool[i], pool[j] = pool[j], pool[i]
        candidates = tuple(pool[:k])
        situation = situations[int(rand() * len(situations))]
        displayed = candidates[int(rand() * k)]
        u = rand()
        uniforms.append(u)
        best.append(max(latent[d] for d in candidates))
        records.append(EventRecord(t, situation, candidates, displayed, u < latent[displayed]))
    return SyntheticStream(records, latent, arrivals, uniforms, best, config, seed)


class Agent(Protocol):
    def select(self, situation: Optional[Situation], candidates: Sequence[Hashable]) -> Decision: ...

    def update(self, doc_id: Hashable, clicked: bool) -> None: ...


class ContextualAgent:
    """Routes each round to the policy state of the closest past situation."""

    def __init__(
        self,
        config: PolicyConfig,
        seed: int,
        ontologies: Optional[OntologySet] = None,
        similarity_floor: float = DEFAULT_SIMILARITY_FLOOR,
    ):
        self.config = config
        self.seed = seed
        self._master = random.Random(seed)
        self.store = SituationStore(ontologies or default_ontologies(), self._new_state, similarity_floor)
        self._default: Optional[Policy] = None
        self._last: Optional[Policy] = None

    def _new_state(self) -> Policy:
        return make_policy(self.config, random.Random(self._master.getrandbits(64)))

    def state_for(self, situation: Optional[Situation]) -> Policy:
        if situation is None:
            if self._default is None:
                self._default = self._new_state()
            return self._default
        return self.store.state_for(situation)

    def select(self, situation, candidates):
        if situation is None and self._default is not None:
            state = self._last = self._default
        else:
            state = self._last = self.state_for(situation)
        return state.select(candidates)

    def update(self, doc_id, clicked):
        if self._last is None:
            raise RuntimeError("update() called before select()")
        self._last.update(doc_id, clicked)


@dataclass
class RunReport:
    mode: str  # "replay" or "simulate"
    seed: Optional[int]
    policy: dict
    rounds: List[int] = field(default_factory=list)
    cumulative_ctr: List[Optional[float]] = field(default_factory=list)
    epsilon: List[float] = field(default_factory=list)
    evaluated: List[int] = field(default_factory=list)
    evaluated_rounds: int = 0
    clicks: int = 0
    final_ctr: Optional[float] = None
    no_overlap: bool = False
    oracle_ctr: Optional[float] = None
    oracle_expected_ctr: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        return cls(**data)


def replay_evaluate(agent: Agent, log: Iterable[EventRecord], seed: Optional[int] = None, policy: Optional[dict] = None) -> RunReport:
    """Rejection replay: only rounds where the pick matches the log count."""
    report = RunReport("replay", seed, policy or {})
    evaluated = clicks = 0
    for record in log:
        decision = agent.select(record.situation, record.candidates)
        hit = decision.doc_id == record.displayed
        if hit:
            agent.update(record.displayed, record.clicked)
            evaluated += 1
            clicks += record.clicked
        report.rounds.append(record.t)
        report.cumulative_ctr.append(clicks / evaluated if evaluated else None)
        report.epsilon.append(decision.epsilon_used)
        report.evaluated.append(int(hit))
    report.evaluated_rounds = evaluated
    report.clicks = clicks
    if evaluated:
        report.final_ctr = clicks / evaluated
    else:
        report.no_overlap = True
    return report


def simulate_evaluate(
    agent: Agent, stream: SyntheticStream, policy: Optional[dict] = None, keep_series: bool = True
) -> RunReport:
    """Every round counts; clicks are drawn from the latent CTR of the pick."""
    report = RunReport("simulate", stream.seed, policy or {})
    latent = stream.latent
    select = agent.select
    update = agent.update
    clicks = oracle_clicks = 0
    oracle_expected = 0.0
    rounds, cum, eps, ev = report.rounds, report.cumulative_ctr, report.epsilon, report.evaluated
    n = 0
    for record, u, best in zip(stream.records, stream.uniforms, stream.best_latent):
        decision = select(record.situation, record.candidates)
        clicked = u < latent[decision.doc_id]
        update(decision.doc_id, clicked)
        n += 1
        clicks += clicked
        oracle_expected += best
        oracle_clicks += u < best
        if keep_series:
            rounds.append(record.t)
            cum.append(clicks / n)
            eps.append(decision.epsilon_used)
            ev.append(1)
    report.evaluated_rounds = n
    report.clicks = clicks
    if n:
        report.final_ctr = clicks / n
        report.oracle_ctr = oracle_clicks / n
        report.oracle_expected_ctr = oracle_expected / n
    else:
        report.no_overlap = True
    return report


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_report(report: RunReport, path: str | os.PathLike, fmt: str = "csv") -> None:
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["round", "cumulative_ctr", "epsilon", "evaluated"])
            for row in zip(report.rounds, report.cumulative_ctr, report.epsilon, report.evaluated):
                t, c, e, ev = row
                writer.writerow([t, _fmt(c), _fmt(e), ev])
    elif fmt == "json":
        with open(path, "w") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def read_report_json(path: str | os.PathLike) -> RunReport:
    with open(path) as fh:
        return RunReport.from_dict(json.load(fh))


def mean_ctr(reports: Sequence[RunReport]) -> float:
    values = [r.final_ctr for r in reports if r.final_ctr is not None]
    return math.fsum(values) / len(values) if values else float("nan")
