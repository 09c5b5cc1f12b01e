"""Per-slot pruning of cost-inefficient block options (monotone staircase rule).

Within each slot, every option gets a cost ratio against the slot's mothernet
block. An option is discarded when some option with no worse loss is more than
a factor (1+D) cheaper, or matches that slack exactly while being strictly
better on loss. At D=0 this is exactly per-slot Pareto dominance filtering in
(mse, cost_ratio); growing D trades front fidelity for a smaller space. Exact
ties on both axes always survive together.

The rule is deterministic, order-free, idempotent, and monotone in D, and a
discarded option always has a retained witness with no worse loss at less than
1/(1+D) of its cost, which is why the filtered space keeps the full front.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ConfigurationError
from .library import BkdRecord, BlockLibrary, build_library
from .space import BlockSlot, SearchSpace


@dataclass(frozen=True)
class FilterConfig:
    threshold_d: float = 0.0
    cost_kind: str = "macs"

    def __post_init__(self):
        if self.threshold_d < 0:
            raise ConfigurationError(f"threshold_d must be >= 0, got {self.threshold_d}")
        if self.cost_kind not in ("macs", "latency"):
            raise ConfigurationError(f"cost_kind must be macs or latency, got {self.cost_kind!r}")


@dataclass(frozen=True)
class DiscardedOption:
    option_id: str
    mse_loss: float
    cost_ratio: float
    binding_competitor: str


@dataclass(frozen=True)
class SlotFilterResult:
    slot_index: int
    retained: tuple[str, ...]
    discarded: tuple[DiscardedOption, ...]
    # (option_id, mse, cost_ratio, retained) scatter tuples for external plotting
    scatter: tuple[tuple[str, float, float, bool], ...]


@dataclass(frozen=True)
class FilterReport:
    threshold_d: float
    cost_kind: str
    slots: tuple[SlotFilterResult, ...]

    @property
    def total_retained(self) -> int:
        return sum(len(s.retained) for s in self.slots)

    @property
    def total_discarded(self) -> int:
        return sum(len(s.discarded) for s in self.slots)

    def to_dict(self) -> dict:
        return {
            "threshold_d": self.threshold_d,
            "cost_kind": self.cost_kind,
            "total_retained": self.total_retained,
            "total_discarded": self.total_discarded,
            "slots": [
                {
                    "slot_index": s.slot_index,
                    "retained": list(s.retained),
                    "discarded": [
                        {
                            "option_id": d.option_id,
                            "mse_loss": d.mse_loss,
                            "cost_ratio": d.cost_ratio,
                            "binding_competitor": d.binding_competitor,
                        }
                        for d in s.discarded
                    ],
                    "scatter": [
                        {"option_id": oid, "mse_loss": mse, "cost_ratio": cr, "retained": kept}
                        for oid, mse, cr, kept in s.scatter
                    ],
                }
                for s in self.slots
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self) -> str:
        lines = [f"BKD filter  D={self.threshold_d}  cost={self.cost_kind}"]
        for s in self.slots:
            lines.append(
                f"  slot {s.slot_index}: retained {len(s.retained)}, discarded {len(s.discarded)}"
            )
            for d in s.discarded:
                lines.append(
                    f"    - {d.option_id}  mse={d.mse_loss:.6g}  cost_ratio={d.cost_ratio:.6g}"
                    f"  (beaten by {d.binding_competitor})"
                )
        lines.append(f"  total: {self.total_retained} retained / {self.total_discarded} discarded")
        return "\n".join(lines) + "\n"


def _record_cost(record: BkdRecord, cost_kind: str) -> float:
    if cost_kind == "macs":
        return float(record.cost_macs)
    if record.cost_latency_us is None:
        raise ConfigurationError(
            f"record (slot {record.slot_index}, option '{record.option_id}') has no latency; "
            "run `library measure` before filtering on latency"
        )
    return record.cost_latency_us


def cost_ratio(record: BkdRecord, mothernet_record: BkdRecord, cost_kind: str = "macs") -> float:
    """Option cost relative to the slot's mothernet block in the chosen kind."""
    mother_cost = _record_cost(mothernet_record, cost_kind)
    if mother_cost == 0:
        raise ConfigurationError(
            f"mothernet cost is zero in slot {mothernet_record.slot_index}; space is invalid"
        )
    return _record_cost(record, cost_kind) / mother_cost


def staircase_discards(
    points: list[tuple[float, float]],
    threshold_d: float,
) -> list[int | None]:
    """Core staircase rule over (mse, cost_ratio) points.

    Returns, per point, the index of its binding competitor (the cheapest
    option that beats it, ties broken toward lower mse then lower index), or
    None when the point is retained. A point falls when some point with no
    worse mse is at least a factor (1+D) cheaper, strictly so on at least one
    of the two comparisons; at D=0 that is exactly Pareto dominance.
    """
    slack = 1.0 + threshold_d
    killers: list[int | None] = []
    for idx, (mse, cr) in enumerate(points):
        killer: tuple[float, float, int] | None = None
        for jdx, (mse2, cr2) in enumerate(points):
            if jdx == idx:
                continue
            if mse2 <= mse and cr >= slack * cr2 and (mse2 < mse or cr > slack * cr2):
                cand = (cr2, mse2, jdx)
                if killer is None or cand < killer:
                    killer = cand
        killers.append(None if killer is None else killer[2])
    return killers


def _filter_slot(
    slot: BlockSlot,
    library: BlockLibrary,
    config: FilterConfig,
) -> SlotFilterResult:
    option_ids = library.slot_option_ids[slot.slot_index]
    mother = library.record(slot.slot_index, slot.options[0].option_id)
    entries = []
    for oid in option_ids:
        rec = library.record(slot.slot_index, oid)
        entries.append((oid, rec.mse_loss, cost_ratio(rec, mother, config.cost_kind)))

    killers = staircase_discards([(mse, cr) for _, mse, cr in entries], config.threshold_d)
    retained: list[str] = []
    discarded: list[DiscardedOption] = []
    scatter: list[tuple[str, float, float, bool]] = []
    for idx, (oid, mse, cr) in enumerate(entries):
        killer = None if idx == 0 else killers[idx]  # the mothernet always stays
        if killer is None:
            retained.append(oid)
            scatter.append((oid, mse, cr, True))
        else:
            discarded.append(DiscardedOption(
                option_id=oid,
                mse_loss=mse,
                cost_ratio=cr,
                binding_competitor=entries[killer][0],
            ))
            scatter.append((oid, mse, cr, False))
    return SlotFilterResult(
        slot_index=slot.slot_index,
        retained=tuple(retained),
        discarded=tuple(discarded),
        scatter=tuple(scatter),
    )


def filter_library(
    library: BlockLibrary,
    space: SearchSpace,
    config: FilterConfig,
) -> tuple[BlockLibrary, FilterReport]:
    """Drop per-slot options that are cost-inefficient at their loss level.

    Returns a filtered library (re-validated against the reduced view) and a
    report naming every discard with its binding competitor.
    """
    slot_results = tuple(_filter_slot(slot, library, config) for slot in space.slots)
    report = FilterReport(threshold_d=config.threshold_d, cost_kind=config.cost_kind, slots=slot_results)

    kept_records = []
    for s in slot_results:
        for oid in s.retained:
            kept_records.append(library.records[(s.slot_index, oid)])
    meta = dict(library.meta)
    meta["filtered_with_d"] = config.threshold_d
    meta["filter_cost_kind"] = config.cost_kind
    filtered = build_library(space, kept_records, meta)
    return filtered, report


def filtered_cardinality(report: FilterReport, space: SearchSpace) -> int:
    """Exact genome count of the filtered space (product of retained counts)."""
    total = 1
    for s in report.slots:
        total *= len(s.retained)
    return total


def reduced_space(space: SearchSpace, library: BlockLibrary) -> SearchSpace:
    """Space view restricted to the options the library covers, order preserved.

    For an unfiltered library this is the space itself.
    """
    slots = []
    for slot in space.slots:
        present = set(library.slot_option_ids[slot.slot_index])
        options = tuple(o for o in slot.options if o.option_id in present)
        slots.append(BlockSlot(
            slot_index=slot.slot_index,
            in_channels=slot.in_channels,
            out_channels=slot.out_channels,
            in_resolution=slot.in_resolution,
            stride=slot.stride,
            options=options,
        ))
    return SearchSpace(
        name=space.name,
        stem_cost_macs=space.stem_cost_macs,
        head_cost_macs=space.head_cost_macs,
        slots=tuple(slots),
    )
