"""Ontology-backed user situations and situation-partitioned bandit state."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

DIMENSIONS = ("location", "time", "social")
DEFAULT_SIMILARITY_FLOOR = 2.4


class UnknownConceptError(KeyError):
    pass


class Ontology:
    """Single-parent concept taxonomy. Root depth is 1."""

    def __init__(self, parents: Mapping[str, Optional[str]], name: str = ""):
        self.name = name
        self.parent: Dict[str, Optional[str]] = dict(parents)
        roots = [c for c, p in self.parent.items() if p is None]
        if len(roots) != 1:
            raise ValueError(f"ontology {name!r} must have exactly one root, found {len(roots)}")
        self.root = roots[0]
        for child, parent in self.parent.items():
            if parent is not None and parent not in self.parent:
                raise ValueError(f"ontology {name!r}: parent {parent!r} of {child!r} is undefined")
        self.depth: Dict[str, int] = {}
        for concept in self.parent:
            self._resolve_depth(concept)
        self._sim_cache: Dict[Tuple[str, str], float] = {}

    def _resolve_depth(self, concept: str) -> int:
        chain = []
        node: Optional[str] = concept
        seen = set()
        while node is not None and node not in self.depth:
            if node in seen:
                raise ValueError(f"ontology {self.name!r} has a cycle through {node!r}")
            seen.add(node)
            chain.append(node)
            node = self.parent[node]
        base = 0 if node is None else self.depth[node]
        for offset, n in enumerate(reversed(chain), start=1):
            self.depth[n] = base + offset
        return self.depth[concept]

    def __contains__(self, concept: str) -> bool:
        return concept in self.parent

    def __len__(self) -> int:
        return len(self.parent)

    def concepts(self) -> List[str]:
        return list(self.parent)

    def leaves(self) -> List[str]:
        inner = {p for p in self.parent.values() if p is not None}
        return [c for c in self.parent if c not in inner]

    def ancestors(self, concept: str) -> List[str]:
        """``concept`` followed by its ancestors up to the root."""
        self._check(concept)
        out = []
        node: Optional[str] = concept
        while node is not None:
            out.append(node)
            node = self.parent[node]
        return out

    def _check(self, concept: str) -> None:
        if concept not in self.parent:
            raise UnknownConceptError(f"unknown concept {concept!r} in ontology {self.name!r}")

    @classmethod
    def from_file(cls, path: str | os.PathLike, name: str = "") -> "Ontology":
        parents: Dict[str, Optional[str]] = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n").rstrip("\r")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                fields = line.split("\t")
                if len(fields) != 2 or not fields[0]:
                    raise ValueError(f"{path}:{lineno}: expected 'child<TAB>parent'")
                child, parent = fields
                if child in parents:
                    raise ValueError(f"{path}:{lineno}: duplicate concept {child!r}")
                parents[child] = None if parent == "-" else parent
        return cls(parents, name=name or os.path.splitext(os.path.basename(path))[0])

    def to_lines(self) -> List[str]:
        return [f"{c}\t{'-' if p is None else p}" for c, p in self.parent.items()]


def lcs(ontology: Ontology, x: str, y: str) -> str:
    ancestors_x = set(ontology.ancestors(x))
    for node in ontology.ancestors(y):
        if node in ancestors_x:
            return node
    raise AssertionError("single-rooted ontology always has a common ancestor")


def wu_palmer_sim(ontology: Ontology, x: str, y: str) -> float:
    key = (x, y) if x <= y else (y, x)
    cached = ontology._sim_cache.get(key)
    if cached is not None:
        return cached
    common = lcs(ontology, x, y)
    value = 2.0 * ontology.depth[common] / (ontology.depth[x] + ontology.depth[y])
    ontology._sim_cache[key] = value
    return value


@dataclass(frozen=True)
class Situation:
    location: str
    time: str
    social: str

    def as_tuple(self) -> Tuple[str, str, str]:
        return (self.location, self.time, self.social)


class OntologySet:
    """One ontology per situation dimension."""

    def __init__(self, location: Ontology, time: Ontology, social: Ontology):
        self.location = location
        self.time = time
        self.social = social

    def __iter__(self):
        return iter((self.location, self.time, self.social))

    def validate(self, situation: Situation) -> None:
        for onto, concept, dim in zip(self, situation.as_tuple(), DIMENSIONS):
            if concept not in onto:
                raise UnknownConceptError(f"unknown {dim} concept {concept!r}")

    def similarity(self, a: Situation, b: Situation) -> float:
        """Sum of per-dimension Wu-Palmer similarities, unit weights."""
        return (
            wu_palmer_sim(self.location, a.location, b.location)
            + wu_palmer_sim(self.time, a.time, b.time)
            + wu_palmer_sim(self.social, a.social, b.social)
        )

    @classmethod
    def from_dir(cls, directory: str | os.PathLike) -> "OntologySet":
        return cls(
            *(Ontology.from_file(os.path.join(directory, f"{dim}.tsv"), name=dim) for dim in DIMENSIONS)
        )

    def write_dir(self, directory: str | os.PathLike) -> None:
        os.makedirs(directory, exist_ok=True)
        for dim, onto in zip(DIMENSIONS, self):
            with open(os.path.join(directory, f"{dim}.tsv"), "w") as fh:
                fh.write("\n".join(onto.to_lines()) + "\n")


def default_ontologies() -> OntologySet:
    location = Ontology(
        {
            "anywhere": None,
            "home": "anywhere",
            "work": "anywhere",
            "public": "anywhere",
            "office": "work",
            "client_site": "work",
            "restaurant": "public",
            "transport": "public",
            "living_room": "home",
        },
        name="location",
    )
    time = Ontology(
        {
            "anytime": None,
            "workday": "anytime",
            "weekend": "anytime",
            "workday_morning": "workday",
            "workday_lunch": "workday",
            "workday_evening": "workday",
            "weekend_day": "weekend",
            "weekend_night": "weekend",
        },
        name="time",
    )
    social = Ontology(
        {
            "anyone": None,
            "professional": "anyone",
            "private": "anyone",
            "colleague": "professional",
            "client": "professional",
            "manager": "professional",
            "family": "private",
            "friend": "private",
            "alone": "private",
        },
        name="social",
    )
    return OntologySet(location, time, social)


class SituationStore:
    """Past situations, each owning one policy state.

    Single writer; not safe for concurrent mutation.
    """

    def __init__(
        self,
        ontologies: OntologySet,
        factory: Callable[[], Any],
        similarity_floor: float = DEFAULT_SIMILARITY_FLOOR,
    ):
        self.ontologies = ontologies
        self.factory = factory
        self.similarity_floor = similarity_floor
        self.entries: List[Tuple[Situation, Any]] = []
        self._exact: Dict[Situation, Any] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def retrieve(self, current: Situation) -> Tuple[Optional[Situation], float]:
        best: Optional[Situation] = None
        best_score = float("-inf")
        for situation, _ in self.entries:
            score = self.ontologies.similarity(current, situation)
            if score >= best_score:  # later entries win ties
                best, best_score = situation, score
        if best is None:
            return None, 0.0
        return best, best_score

    def state_for(self, current: Situation) -> Any:
        state = self._exact.get(current)
        if state is not None and self.similarity_floor <= 3.0:
            return state
        best, score = self.retrieve(current)
        if best is not None and score >= self.similarity_floor:
            return self._state_of(best)
        self.ontologies.validate(current)
        state = self.factory()
        self.entries.append((current, state))
        self._exact.setdefault(current, state)
        return state

    def _state_of(self, situation: Situation) -> Any:
        for stored, state in reversed(self.entries):
            if stored == situation:
                return state
        raise KeyError(situation)


def retrieve_situation(store: SituationStore, current: Situation) -> Tuple[Optional[Situation], float]:
    return store.retrieve(current)


def situation_state(store: SituationStore, current: Situation, similarity_floor: Optional[float] = None) -> Any:
    if similarity_floor is not None and similarity_floor != store.similarity_floor:
        store.similarity_floor = similarity_floor
    return store.state_for(current)
