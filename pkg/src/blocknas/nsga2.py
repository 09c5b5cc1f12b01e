"""Bi-objective NSGA-II over genomes, minimizing (surrogate loss, cost).

Per generation: binary tournament on (rank, crowding), uniform per-slot
crossover, per-slot mutation by uniform resampling, then environmental
selection of the population size from parents plus offspring. An external
archive keeps every rank-0 point ever seen, so the reported front never
forgets an incumbent; the result front is the maximal non-dominated subset of
that archive.

Determinism: one PCG64 stream drives sampling/variation in a fixed draw order,
all ties break lexicographically on the genome, and the numeric kernels never
consume randomness. Identical inputs and seed give identical results,
including the history trace.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, _kernels
from .costs import CostEvaluator, CostVector
from .errors import ConfigurationError, ProtocolError, TransportError
from .library import BlockLibrary
from .space import ModelGenome, SearchSpace, random_genome

CHECKPOINT_FORMAT = "blocknas-checkpoint"
CHECKPOINT_VERSION = 1


def dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """Strict bi-objective dominance for minimization."""
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def non_dominated_sort(points: Sequence[tuple[float, float]]) -> list[list[int]]:
    """Group point indices into fronts by non-domination rank (rank 0 first)."""
    if not points:
        return []
    loss = np.array([p[0] for p in points], dtype=np.float64)
    cost = np.array([p[1] for p in points], dtype=np.float64)
    ranks = _kernels.nds_ranks(loss, cost)
    fronts: list[list[int]] = [[] for _ in range(int(ranks.max()) + 1)]
    for i, r in enumerate(ranks):
        fronts[int(r)].append(i)
    return fronts


def crowding_distance(points: Sequence[tuple[float, float]]) -> list[float]:
    """NSGA-II crowding: boundary points get +inf, interior points sum the
    normalized neighbor gaps per objective; a zero-range objective adds 0."""
    n = len(points)
    dist = [0.0] * n
    for obj in (0, 1):
        vals = [p[obj] for p in points]
        order = sorted(range(n), key=lambda i: (vals[i], i))
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        vmin, vmax = vals[order[0]], vals[order[-1]]
        if vmax == vmin:
            continue
        for k in range(1, n - 1):
            i = order[k]
            if dist[i] != math.inf:
                dist[i] += (vals[order[k + 1]] - vals[order[k - 1]]) / (vmax - vmin)
    return dist


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 100
    steps: int = 50
    mutation_prob: float | None = None  # default 1/num_slots, resolved at run time
    crossover_prob: float = 0.9
    rng_seed: int = 0
    cost_kind: str = "macs"

    def validate(self) -> None:
        if self.population_size < 2 or self.population_size % 2 != 0:
            raise ConfigurationError(
                f"population_size must be a positive even number, got {self.population_size}"
            )
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")
        if self.mutation_prob is not None and not (0.0 <= self.mutation_prob <= 1.0):
            raise ConfigurationError(f"mutation_prob must be in [0, 1], got {self.mutation_prob}")
        if not (0.0 <= self.crossover_prob <= 1.0):
            raise ConfigurationError(f"crossover_prob must be in [0, 1], got {self.crossover_prob}")
        if self.cost_kind not in ("macs", "latency"):
            raise ConfigurationError(f"cost_kind must be macs or latency, got {self.cost_kind!r}")


@dataclass
class EvaluatedGenome:
    genome: ModelGenome
    surrogate: float
    cost: CostVector
    cost_value: float  # the scalar objective actually optimized
    rank: int = 0
    crowding: float = 0.0


@dataclass
class SearchResult:
    front: list[EvaluatedGenome]
    history: list[dict]
    config_echo: dict
    total_cost_queries: int

    def front_points(self) -> list[tuple[float, float]]:
        return [(m.surrogate, m.cost_value) for m in self.front]


def _member_to_doc(m: EvaluatedGenome) -> dict:
    return {
        "choices": list(m.genome.choices),
        "surrogate": m.surrogate,
        "macs": m.cost.macs,
        "params": m.cost.params,
        "latency_us": m.cost.latency_us,
    }


def _member_from_doc(doc: dict, cost_kind: str) -> EvaluatedGenome:
    cv = CostVector(macs=int(doc["macs"]), params=int(doc["params"]),
                    latency_us=doc["latency_us"])
    value = float(cv.macs) if cost_kind == "macs" else float(cv.latency_us)
    return EvaluatedGenome(
        genome=ModelGenome(choices=tuple(doc["choices"])),
        surrogate=float(doc["surrogate"]),
        cost=cv,
        cost_value=value,
    )


def result_to_dict(
    result: SearchResult,
    view_space: SearchSpace,
    base_space: SearchSpace | None = None,
) -> dict:
    """JSON form of a search result. Choices are reported as indices into the
    original (base) space so filtered and unfiltered runs name models the same
    way; option_ids make provenance explicit."""
    base = base_space or view_space
    base_index = {}
    for slot in base.slots:
        for j, o in enumerate(slot.options):
            base_index[(slot.slot_index, o.option_id)] = j
    front_docs = []
    for m in result.front:
        option_ids = [
            view_space.slots[i].options[c].option_id for i, c in enumerate(m.genome.choices)
        ]
        front_docs.append({
            "choices": [base_index[(i, oid)] for i, oid in enumerate(option_ids)],
            "option_ids": option_ids,
            "surrogate": m.surrogate,
            "macs": m.cost.macs,
            "params": m.cost.params,
            "latency_us": m.cost.latency_us,
        })
    return {
        "format": "blocknas-search-result",
        "format_version": 1,
        "tool_version": __version__,
        "config": result.config_echo,
        "front": front_docs,
        "history": result.history,
        "total_cost_queries": result.total_cost_queries,
    }


class _SearchState:
    def __init__(self):
        self.rng: np.random.Generator = np.random.default_rng(0)
        self.generation = 0
        self.population: list[EvaluatedGenome] = []
        self.archive: dict[tuple[int, ...], EvaluatedGenome] = {}
        self.history: list[dict] = []
        self.pending: list[ModelGenome] = []


def _checkpoint_doc(state: _SearchState, config_echo: dict) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "format_version": CHECKPOINT_VERSION,
        "tool_version": __version__,
        "config": config_echo,
        "generation": state.generation,
        "rng_state": state.rng.bit_generator.state,
        "population": [_member_to_doc(m) for m in state.population],
        "archive": [_member_to_doc(m) for m in state.archive.values()],
        "history": state.history,
        "pending": [list(g.choices) for g in state.pending],
    }


def load_checkpoint(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("format_version") != CHECKPOINT_VERSION:
        raise ConfigurationError(f"{path} is not a recognized checkpoint file")
    return doc


def _rank_and_crowd(members: list[EvaluatedGenome]) -> None:
    pts = [(m.surrogate, m.cost_value) for m in members]
    fronts = non_dominated_sort(pts)
    for rank, front in enumerate(fronts):
        dists = crowding_distance([pts[i] for i in front])
        for i, d in zip(front, dists):
            members[i].rank = rank
            members[i].crowding = d


def _selection_key(m: EvaluatedGenome):
    return (m.rank, -m.crowding, m.genome.choices)


def _make_offspring(
    population: list[EvaluatedGenome],
    space: SearchSpace,
    rng: np.random.Generator,
    crossover_prob: float,
    mutation_prob: float,
) -> list[ModelGenome]:
    e = len(population)
    num_slots = space.num_slots
    option_counts = space.option_counts()

    pairs = rng.integers(0, e, size=(e, 2))
    parents = []
    for a, b in pairs:
        x, y = population[int(a)], population[int(b)]
        parents.append(x if _selection_key(x) <= _selection_key(y) else y)

    offspring: list[ModelGenome] = []
    for i in range(0, e, 2):
        c1 = list(parents[i].genome.choices)
        c2 = list(parents[i + 1].genome.choices)
        if rng.random() < crossover_prob:
            swap = rng.random(num_slots) < 0.5
            for s in range(num_slots):
                if swap[s]:
                    c1[s], c2[s] = c2[s], c1[s]
        for child in (c1, c2):
            mutate = rng.random(num_slots) < mutation_prob
            for s in range(num_slots):
                if mutate[s]:
                    child[s] = int(rng.integers(0, option_counts[s]))
        offspring.append(ModelGenome(choices=tuple(c1)))
        offspring.append(ModelGenome(choices=tuple(c2)))
    return offspring


def _archive_front(archive: dict[tuple[int, ...], EvaluatedGenome]) -> list[EvaluatedGenome]:
    members = list(archive.values())
    loss = np.array([m.surrogate for m in members], dtype=np.float64)
    cost = np.array([m.cost_value for m in members], dtype=np.float64)
    mask = _kernels.pareto_mask(loss, cost)
    front = [m for m, keep in zip(members, mask) if keep]
    front.sort(key=lambda m: (m.cost_value, m.surrogate, m.genome.choices))
    pts = [(m.surrogate, m.cost_value) for m in front]
    dists = crowding_distance(pts) if front else []
    for m, d in zip(front, dists):
        m.rank = 0
        m.crowding = d
    # belt-and-braces: the reported front must never contain a dominated pair
    for i, a in enumerate(pts):
        for b in pts:
            if a is not b and dominates(b, a):
                raise AssertionError("internal error: archive front contains a dominated point")
    return front


def evolve(
    space: SearchSpace,
    library: BlockLibrary,
    evaluator: CostEvaluator,
    config: SearchConfig,
    checkpoint_path: str | Path | None = None,
    resume_doc: dict | None = None,
) -> SearchResult:
    """Run the full generation loop and return the archive's Pareto front.

    On a measurement failure the current state is written to checkpoint_path
    (when given) before the error propagates; passing the loaded checkpoint as
    resume_doc continues the run to a result identical to an uninterrupted one.
    """
    config.validate()
    if evaluator.cost_kind != config.cost_kind:
        raise ConfigurationError(
            f"evaluator cost_kind {evaluator.cost_kind!r} does not match config {config.cost_kind!r}"
        )
    num_slots = space.num_slots
    if num_slots == 0:
        raise ConfigurationError("cannot search an empty space")
    mutation_prob = config.mutation_prob if config.mutation_prob is not None else 1.0 / num_slots

    config_echo = {
        "population_size": config.population_size,
        "steps": config.steps,
        "mutation_prob": mutation_prob,
        "crossover_prob": config.crossover_prob,
        "rng_seed": config.rng_seed,
        "cost_kind": config.cost_kind,
        "space_name": space.name,
    }

    state = _SearchState()
    if resume_doc is not None:
        for key in ("population_size", "steps", "crossover_prob", "rng_seed", "cost_kind"):
            if resume_doc["config"].get(key) != config_echo[key]:
                raise ConfigurationError(
                    f"checkpoint config mismatch on {key}: "
                    f"{resume_doc['config'].get(key)!r} vs {config_echo[key]!r}"
                )
        state.rng = np.random.default_rng(0)
        rng_state = resume_doc["rng_state"]
        # JSON round-trips the nested state dict; restore verbatim
        state.rng.bit_generator.state = rng_state
        state.generation = int(resume_doc["generation"])
        state.population = [_member_from_doc(d, config.cost_kind) for d in resume_doc["population"]]
        for d in resume_doc["archive"]:
            m = _member_from_doc(d, config.cost_kind)
            state.archive[m.genome.choices] = m
        state.history = list(resume_doc["history"])
        state.pending = [ModelGenome(choices=tuple(c)) for c in resume_doc["pending"]]
        if state.population:
            _rank_and_crowd(state.population)
    else:
        state.rng = np.random.default_rng(config.rng_seed)
        state.pending = [random_genome(space, state.rng) for _ in range(config.population_size)]
        state.generation = 0

    def evaluate_pending() -> list[EvaluatedGenome]:
        try:
            evals = evaluator.evaluate_many(state.pending)
        except (TransportError, ProtocolError):
            if checkpoint_path is not None:
                doc = _checkpoint_doc(state, config_echo)
                Path(checkpoint_path).write_text(json.dumps(doc) + "\n", encoding="utf-8")
            raise
        members = []
        for g, (surrogate, cv) in zip(state.pending, evals):
            members.append(EvaluatedGenome(
                genome=g,
                surrogate=surrogate,
                cost=cv,
                cost_value=evaluator.cost_scalar(cv),
            ))
        return members

    def update_archive(pool: list[EvaluatedGenome]) -> None:
        for m in pool:
            if m.rank == 0 and m.genome.choices not in state.archive:
                state.archive[m.genome.choices] = m
        best_surrogate = min(m.surrogate for m in state.archive.values())
        best_cost = min(m.cost_value for m in state.archive.values())
        state.history.append({
            "generation": state.generation,
            "best_surrogate": best_surrogate,
            "best_cost": best_cost,
        })

    while True:
        if state.pending:
            fresh = evaluate_pending()
            state.pending = []
            if state.generation == 0:
                state.population = fresh
                _rank_and_crowd(state.population)
                update_archive(state.population)
            else:
                combined = state.population + fresh
                _rank_and_crowd(combined)
                order = sorted(range(len(combined)), key=lambda i: _selection_key(combined[i]))
                state.population = [combined[i] for i in order[: config.population_size]]
                update_archive(combined)
        if state.generation >= config.steps:
            break
        state.generation += 1
        state.pending = _make_offspring(
            state.population, space, state.rng, config.crossover_prob, mutation_prob
        )

    front = _archive_front(state.archive)
    return SearchResult(
        front=front,
        history=state.history,
        config_echo=config_echo,
        total_cost_queries=evaluator.query_count,
    )
