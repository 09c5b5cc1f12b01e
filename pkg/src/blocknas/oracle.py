"""Brute-force ground truth for desk-scale spaces.

Evaluates every genome, extracts the maximal non-dominated set (all ties
included), and scores fronts with the exact 2-D hypervolume. The reference
point convention is 1.1 times the per-objective maxima over the evaluated set,
echoed in the result so ratios stay comparable across runs.
"""

from __future__ import annotations

import numpy as np

from . import __version__, _kernels
from .costs import CostEvaluator
from .errors import CardinalityBoundError, ReferencePointError
from .library import BlockLibrary
from .nsga2 import EvaluatedGenome, SearchResult, crowding_distance, dominates
from .space import ModelGenome, SearchSpace, cardinality

ORACLE_BOUND = 1_000_000


def hypervolume(points: list[tuple[float, float]], reference_point: tuple[float, float]) -> float:
    """Exact dominated area of a non-dominated 2-D front up to the reference.

    Sorted-staircase sum; every point must dominate the reference point.
    """
    ref_x, ref_y = reference_point
    uniq = sorted(set(points))
    for p in uniq:
        if not dominates(p, (ref_x, ref_y)):
            raise ReferencePointError(
                f"front point {p} does not dominate the reference point {reference_point}"
            )
    for i, a in enumerate(uniq):
        for b in uniq[i + 1:]:
            if dominates(a, b) or dominates(b, a):
                raise ReferencePointError(f"front is not non-dominated: {a} vs {b}")
    total = 0.0
    for i, (x, y) in enumerate(uniq):
        next_x = uniq[i + 1][0] if i + 1 < len(uniq) else ref_x
        total += (next_x - x) * (ref_y - y)
    return total


class OracleResult:
    def __init__(
        self,
        true_front: list[EvaluatedGenome],
        evaluated_count: int,
        hv: float,
        reference_point: tuple[float, float],
        cost_kind: str,
        space_name: str,
        total_cost_queries: int,
    ):
        self.true_front = true_front
        self.evaluated_count = evaluated_count
        self.hypervolume = hv
        self.reference_point = reference_point
        self.cost_kind = cost_kind
        self.space_name = space_name
        self.total_cost_queries = total_cost_queries

    def front_points(self) -> list[tuple[float, float]]:
        return [(m.surrogate, m.cost_value) for m in self.true_front]

    def as_search_result(self) -> SearchResult:
        return SearchResult(
            front=self.true_front,
            history=[],
            config_echo={"cost_kind": self.cost_kind, "space_name": self.space_name,
                         "oracle": True},
            total_cost_queries=self.total_cost_queries,
        )


def _all_choice_rows(space: SearchSpace) -> np.ndarray:
    """(G, N) matrix of every genome in lexicographic choice order."""
    counts = space.option_counts()
    grids = np.meshgrid(*[np.arange(m, dtype=np.int64) for m in counts], indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def exhaustive_front(
    space: SearchSpace,
    library: BlockLibrary,
    evaluator: CostEvaluator,
    bound: int = ORACLE_BOUND,
) -> OracleResult:
    """Evaluate every genome and return the maximal non-dominated set.

    Refuses spaces above `bound` genomes; the oracle exists to verify the
    search at desk scale, not to replace it.
    """
    card = cardinality(space)
    if card > bound:
        raise CardinalityBoundError(
            f"space cardinality {card} exceeds oracle bound {bound}"
        )
    choices = _all_choice_rows(space)
    loss, cost = evaluator.bulk_objectives(choices)

    mask = _kernels.pareto_mask(loss, cost)
    front_idx = np.flatnonzero(mask)
    front_genomes = [ModelGenome(choices=tuple(int(c) for c in choices[i])) for i in front_idx]
    evals = evaluator.evaluate_many(front_genomes)

    members = []
    for i, genome, (surrogate, cv) in zip(front_idx, front_genomes, evals):
        members.append(EvaluatedGenome(
            genome=genome,
            surrogate=float(loss[i]),
            cost=cv,
            cost_value=float(cost[i]),
            rank=0,
        ))
    members.sort(key=lambda m: (m.cost_value, m.surrogate, m.genome.choices))
    pts = [(m.surrogate, m.cost_value) for m in members]
    for m, d in zip(members, crowding_distance(pts) if members else []):
        m.crowding = d

    ref = (1.1 * float(loss.max()), 1.1 * float(cost.max()))
    hv = hypervolume(pts, ref)
    return OracleResult(
        true_front=members,
        evaluated_count=int(card),
        hv=hv,
        reference_point=ref,
        cost_kind=evaluator.cost_kind,
        space_name=space.name,
        total_cost_queries=evaluator.query_count,
    )


def oracle_result_to_dict(result: OracleResult, view_space: SearchSpace,
                          base_space: SearchSpace | None = None) -> dict:
    from .nsga2 import result_to_dict

    doc = result_to_dict(result.as_search_result(), view_space, base_space)
    doc["format"] = "blocknas-oracle-result"
    doc["tool_version"] = __version__
    doc["evaluated_count"] = result.evaluated_count
    doc["hypervolume"] = result.hypervolume
    doc["reference_point"] = list(result.reference_point)
    return doc
