"""Block-level search space: slots, options, genomes, enumeration.

A space is an ordered list of block slots cut out of a mothernet. Every slot
carries the candidate replacement options for that position; option index 0 is
always the mothernet's own block, so the baseline network stays representable
no matter how hard the library gets filtered.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from .errors import CardinalityBoundError, SpaceFormatError, SpaceValidationError

LAYER_TYPES = ("depthwise_inverted_bottleneck", "grouped_inverted_bottleneck")
ACTIVATIONS = ("relu", "swish")
KERNELS = (3, 5)
EXPANSIONS = (2, 3, 4, 6)
DEPTHS = (1, 2, 3, 4, 6, 8)
CHANNEL_SCALES = (0.5, 1.0)

# Guard against accidentally materializing a production-scale space in memory.
MATERIALIZE_BOUND = 10_000_000


@dataclass(frozen=True)
class BlockOption:
    """One candidate replacement block, parameterized enough for MAC counting.

    channel_scale applies to the internal expanded channels only; the output
    channel count is fixed by the slot so teacher/student feature maps match.
    """

    option_id: str
    layer_type: str
    kernel: int
    expansion: int
    depth: int
    activation: str
    channel_scale: float


@dataclass(frozen=True)
class BlockSlot:
    """A fixed position in the mothernet with its replacement candidates.

    All options share the slot's I/O contract (channels, resolution, stride);
    those fields therefore live here, not on the option.
    """

    slot_index: int
    in_channels: int
    out_channels: int
    in_resolution: tuple[int, int]
    stride: int
    options: tuple[BlockOption, ...]

    @property
    def out_resolution(self) -> tuple[int, int]:
        # Same-padding convention: ceil division by stride.
        h, w = self.in_resolution
        return (-(-h // self.stride), -(-w // self.stride))

    @property
    def mothernet_option(self) -> BlockOption:
        return self.options[0]


@dataclass(frozen=True)
class SearchSpace:
    name: str
    stem_cost_macs: int
    head_cost_macs: int
    slots: tuple[BlockSlot, ...]

    @property
    def num_slots(self) -> int:
        return len(self.slots)

    def option_counts(self) -> tuple[int, ...]:
        return tuple(len(s.options) for s in self.slots)


@dataclass(frozen=True)
class ModelGenome:
    """One candidate network: a chosen option index per slot."""

    choices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(int(c) for c in self.choices))


def mothernet_genome(space: SearchSpace) -> ModelGenome:
    return ModelGenome(choices=(0,) * space.num_slots)


def validate_space(space: SearchSpace) -> list[str]:
    """Check every space invariant; returns violation messages (empty = valid).

    Violations are data, not failures: callers that require a valid space go
    through require_valid().
    """
    violations: list[str] = []
    if space.stem_cost_macs < 0:
        violations.append(f"stem_cost_macs must be non-negative, got {space.stem_cost_macs}")
    if space.head_cost_macs < 0:
        violations.append(f"head_cost_macs must be non-negative, got {space.head_cost_macs}")

    for i, slot in enumerate(space.slots):
        where = f"slots[{i}]"
        if slot.slot_index != i:
            violations.append(f"{where}: slot_index={slot.slot_index} does not match position {i}")
        if slot.in_channels < 1:
            violations.append(f"{where}: in_channels must be positive, got {slot.in_channels}")
        if slot.out_channels < 1:
            violations.append(f"{where}: out_channels must be positive, got {slot.out_channels}")
        if slot.in_resolution[0] < 1 or slot.in_resolution[1] < 1:
            violations.append(f"{where}: in_resolution must be positive, got {slot.in_resolution}")
        if slot.stride not in (1, 2):
            violations.append(f"{where}: stride must be 1 or 2, got {slot.stride}")
        if not slot.options:
            violations.append(f"{where}: options list is empty")

        seen_ids: set[str] = set()
        for j, opt in enumerate(slot.options):
            at = f"{where}.options[{j}]"
            if not opt.option_id:
                violations.append(f"{at}: option_id must be non-empty")
            elif opt.option_id in seen_ids:
                violations.append(f"{at}: duplicate option_id '{opt.option_id}'")
            else:
                seen_ids.add(opt.option_id)
            if opt.layer_type not in LAYER_TYPES:
                violations.append(f"{at}: layer_type must be one of {LAYER_TYPES}, got '{opt.layer_type}'")
            if opt.kernel not in KERNELS:
                violations.append(f"{at}: kernel must be one of {KERNELS}, got {opt.kernel}")
            if opt.expansion not in EXPANSIONS:
                violations.append(f"{at}: expansion must be one of {EXPANSIONS}, got {opt.expansion}")
            if opt.depth not in DEPTHS:
                violations.append(f"{at}: depth must be one of {DEPTHS}, got {opt.depth}")
            if opt.activation not in ACTIVATIONS:
                violations.append(f"{at}: activation must be one of {ACTIVATIONS}, got '{opt.activation}'")
            if opt.channel_scale not in CHANNEL_SCALES:
                violations.append(f"{at}: channel_scale must be one of {CHANNEL_SCALES}, got {opt.channel_scale}")

        if i > 0:
            prev = space.slots[i - 1]
            if slot.in_channels != prev.out_channels:
                violations.append(
                    f"{where}: in_channels={slot.in_channels} breaks chaining with "
                    f"slots[{i - 1}].out_channels={prev.out_channels}"
                )
            if tuple(slot.in_resolution) != prev.out_resolution:
                violations.append(
                    f"{where}: in_resolution={tuple(slot.in_resolution)} breaks chaining with "
                    f"slots[{i - 1}] output resolution {prev.out_resolution}"
                )
    return violations


def require_valid(space: SearchSpace) -> SearchSpace:
    violations = validate_space(space)
    if violations:
        raise SpaceValidationError(violations)
    return space


def cardinality(space: SearchSpace) -> int:
    """Exact number of distinct genomes (arbitrary-precision product)."""
    total = 1
    for slot in space.slots:
        total *= len(slot.options)
    return total


def enumerate_genomes(space: SearchSpace, limit: int | None = None) -> Iterator[ModelGenome]:
    """Stream genomes in lexicographic choice order, each exactly once."""
    stream = itertools.product(*(range(len(s.options)) for s in space.slots))
    if limit is not None:
        stream = itertools.islice(stream, limit)
    for choices in stream:
        yield ModelGenome(choices=choices)


def all_genomes(space: SearchSpace, bound: int = MATERIALIZE_BOUND) -> list[ModelGenome]:
    """Materialize the full genome list; refuses spaces larger than `bound`.

    The refusal signals misuse of the brute-force path, which only makes sense
    at desk scale.
    """
    card = cardinality(space)
    if card > bound:
        raise CardinalityBoundError(
            f"space cardinality {card} exceeds materialization bound {bound}"
        )
    return list(enumerate_genomes(space))


def random_genome(space: SearchSpace, rng: np.random.Generator | int) -> ModelGenome:
    """Sample uniformly and independently per slot; deterministic given rng state."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    choices = tuple(int(rng.integers(0, len(s.options))) for s in space.slots)
    return ModelGenome(choices=choices)


def genome_is_valid(genome: ModelGenome, space: SearchSpace) -> bool:
    if len(genome.choices) != space.num_slots:
        return False
    return all(0 <= c < len(s.options) for c, s in zip(genome.choices, space.slots))


# ---------------------------------------------------------------------------
# JSON space file

_TOP_KEYS = {"name", "stem_cost_macs", "head_cost_macs", "slots"}
_SLOT_KEYS = {"in_channels", "out_channels", "in_resolution", "stride", "options"}
_OPTION_KEYS = {"option_id", "layer_type", "kernel", "expansion", "depth", "activation", "channel_scale"}


def _expect(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise SpaceFormatError(f"{path}: {message}")


def _expect_int(value: Any, path: str) -> int:
    _expect(isinstance(value, int) and not isinstance(value, bool), path, f"expected integer, got {value!r}")
    return value


def _expect_str(value: Any, path: str) -> str:
    _expect(isinstance(value, str), path, f"expected string, got {value!r}")
    return value


def _expect_number(value: Any, path: str) -> float:
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool), path, f"expected number, got {value!r}")
    return float(value)


def _expect_keys(obj: dict, required: set[str], path: str) -> None:
    _expect(isinstance(obj, dict), path, f"expected object, got {type(obj).__name__}")
    missing = required - obj.keys()
    _expect(not missing, path, f"missing keys {sorted(missing)}")
    unknown = obj.keys() - required
    _expect(not unknown, path, f"unknown keys {sorted(unknown)}")


def space_from_dict(doc: dict) -> SearchSpace:
    _expect_keys(doc, _TOP_KEYS, "$")
    name = _expect_str(doc["name"], "$.name")
    stem = _expect_int(doc["stem_cost_macs"], "$.stem_cost_macs")
    head = _expect_int(doc["head_cost_macs"], "$.head_cost_macs")
    _expect(isinstance(doc["slots"], list), "$.slots", "expected array")

    slots = []
    for i, slot_doc in enumerate(doc["slots"]):
        path = f"$.slots[{i}]"
        _expect_keys(slot_doc, _SLOT_KEYS, path)
        res = slot_doc["in_resolution"]
        _expect(
            isinstance(res, list) and len(res) == 2,
            f"{path}.in_resolution",
            f"expected [H, W] pair, got {res!r}",
        )
        in_resolution = (_expect_int(res[0], f"{path}.in_resolution[0]"),
                         _expect_int(res[1], f"{path}.in_resolution[1]"))
        _expect(isinstance(slot_doc["options"], list), f"{path}.options", "expected array")
        options = []
        for j, opt_doc in enumerate(slot_doc["options"]):
            opath = f"{path}.options[{j}]"
            _expect_keys(opt_doc, _OPTION_KEYS, opath)
            options.append(BlockOption(
                option_id=_expect_str(opt_doc["option_id"], f"{opath}.option_id"),
                layer_type=_expect_str(opt_doc["layer_type"], f"{opath}.layer_type"),
                kernel=_expect_int(opt_doc["kernel"], f"{opath}.kernel"),
                expansion=_expect_int(opt_doc["expansion"], f"{opath}.expansion"),
                depth=_expect_int(opt_doc["depth"], f"{opath}.depth"),
                activation=_expect_str(opt_doc["activation"], f"{opath}.activation"),
                channel_scale=_expect_number(opt_doc["channel_scale"], f"{opath}.channel_scale"),
            ))
        slots.append(BlockSlot(
            slot_index=i,
            in_channels=_expect_int(slot_doc["in_channels"], f"{path}.in_channels"),
            out_channels=_expect_int(slot_doc["out_channels"], f"{path}.out_channels"),
            in_resolution=in_resolution,
            stride=_expect_int(slot_doc["stride"], f"{path}.stride"),
            options=tuple(options),
        ))
    return SearchSpace(name=name, stem_cost_macs=stem, head_cost_macs=head, slots=tuple(slots))


def space_to_dict(space: SearchSpace) -> dict:
    return {
        "name": space.name,
        "stem_cost_macs": space.stem_cost_macs,
        "head_cost_macs": space.head_cost_macs,
        "slots": [
            {
                "in_channels": s.in_channels,
                "out_channels": s.out_channels,
                "in_resolution": list(s.in_resolution),
                "stride": s.stride,
                "options": [
                    {
                        "option_id": o.option_id,
                        "layer_type": o.layer_type,
                        "kernel": o.kernel,
                        "expansion": o.expansion,
                        "depth": o.depth,
                        "activation": o.activation,
                        "channel_scale": o.channel_scale,
                    }
                    for o in s.options
                ],
            }
            for s in space.slots
        ],
    }


def load_space(path: str | Path) -> SearchSpace:
    """Parse a UTF-8 JSON space file; schema violations raise path-qualified errors."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpaceFormatError(f"$: not valid JSON ({exc})") from exc
    return space_from_dict(doc)


def save_space(space: SearchSpace, path: str | Path) -> None:
    Path(path).write_text(json.dumps(space_to_dict(space), indent=2) + "\n", encoding="utf-8")


def option_index_map(base: SearchSpace, view: SearchSpace) -> tuple[tuple[int, ...], ...]:
    """Per-slot mapping from view option index to the base space's option index.

    Used when a search runs over a filtered view but the measurement wire
    protocol addresses options by their position in the original space file.
    """
    if base.num_slots != view.num_slots:
        raise SpaceValidationError([f"view has {view.num_slots} slots, base has {base.num_slots}"])
    mapping = []
    for i, (bslot, vslot) in enumerate(zip(base.slots, view.slots)):
        by_id = {o.option_id: j for j, o in enumerate(bslot.options)}
        row = []
        for o in vslot.options:
            if o.option_id not in by_id:
                raise SpaceValidationError([f"slots[{i}]: option '{o.option_id}' not present in base space"])
            row.append(by_id[o.option_id])
        mapping.append(tuple(row))
    return tuple(mapping)
