"""Block library: per-(slot, option) distillation loss and cost records.

File format (the contract with any library producer, including the reference
trainer): UTF-8 JSON Lines. Line 1 is a header object with at least
{"space_name": ..., "format_version": 1}; every following line is one record
with keys slot_index, option_id, mse_loss, cost_macs, cost_latency_us
(nullable), trained_epochs. A filtered library flags itself with a
"filtered_with_d" header field and only needs to cover the retained options.

The library stores scalar losses only; distilled weights stay with whatever
trained them. That keeps this engine entirely tensor-free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import LibraryFormatError, LibraryValidationError
from .space import ModelGenome, SearchSpace

FORMAT_VERSION = 1


@dataclass(frozen=True)
class BkdRecord:
    slot_index: int
    option_id: str
    mse_loss: float
    cost_macs: int
    cost_latency_us: float | None
    trained_epochs: float


@dataclass(frozen=True)
class SynthProfile:
    """Coefficients of the synthetic distillation-loss law.

    mse = alpha/depth + beta/expansion + gamma*[kernel==3] + delta*[scale==1/2]
          + uniform(0, noise), clamped at zero. Deeper and wider options fit
    better while costing more MACs, which is exactly the tension the filter
    and the search have to navigate.
    """

    alpha: float = 0.2
    beta: float = 0.1
    gamma: float = 0.02
    delta: float = 0.05
    noise: float = 0.01

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SynthProfile":
        unknown = set(doc) - {"alpha", "beta", "gamma", "delta", "noise"}
        if unknown:
            raise LibraryFormatError(f"unknown synth profile keys {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in doc.items()})

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
                "delta": self.delta, "noise": self.noise}


@dataclass(frozen=True)
class BlockLibrary:
    """Validated record set bound to the option order of its space.

    slot_option_ids reflects the coverage actually present: the full space for
    a fresh library, the retained subsets for a filtered one. Immutable after
    construction; lookups are read-only and thread-safe.
    """

    space_name: str
    slot_option_ids: tuple[tuple[str, ...], ...]
    records: Mapping[tuple[int, str], BkdRecord]
    meta: Mapping[str, Any]

    def record(self, slot_index: int, option_id: str) -> BkdRecord:
        try:
            return self.records[(slot_index, option_id)]
        except KeyError:
            raise LibraryValidationError(
                f"no record for (slot {slot_index}, option '{option_id}')"
            ) from None

    def mse(self, slot_index: int, option_id: str) -> float:
        return self.record(slot_index, option_id).mse_loss

    def option_id_at(self, slot_index: int, option_index: int) -> str:
        return self.slot_option_ids[slot_index][option_index]

    @property
    def is_filtered(self) -> bool:
        return "filtered_with_d" in self.meta


def surrogate_loss(genome: ModelGenome, library: BlockLibrary) -> float:
    """Model quality proxy: the sum of the chosen blocks' distillation MSEs.

    Summed in slot order so the value is reproducible bit-for-bit.
    """
    total = 0.0
    for slot_index, choice in enumerate(genome.choices):
        option_id = library.slot_option_ids[slot_index][choice]
        total += library.record(slot_index, option_id).mse_loss
    return total


def _validate_records(
    space: SearchSpace,
    space_name: str,
    records: list[BkdRecord],
    filtered: bool,
) -> tuple[tuple[tuple[str, ...], ...], dict[tuple[int, str], BkdRecord]]:
    if space_name != space.name:
        raise LibraryValidationError(
            f"consistency error: library space_name '{space_name}' does not match space '{space.name}'"
        )
    by_key: dict[tuple[int, str], BkdRecord] = {}
    for rec in records:
        key = (rec.slot_index, rec.option_id)
        if key in by_key:
            raise LibraryValidationError(
                f"coverage error: duplicate record for (slot {rec.slot_index}, option '{rec.option_id}')"
            )
        if not (0 <= rec.slot_index < space.num_slots):
            raise LibraryValidationError(
                f"coverage error: extra record for unknown slot {rec.slot_index}"
            )
        slot = space.slots[rec.slot_index]
        known = {o.option_id for o in slot.options}
        if rec.option_id not in known:
            raise LibraryValidationError(
                f"coverage error: extra record for (slot {rec.slot_index}, option '{rec.option_id}')"
            )
        if rec.mse_loss < 0:
            raise LibraryValidationError(
                f"consistency error: negative mse_loss {rec.mse_loss} at "
                f"(slot {rec.slot_index}, option '{rec.option_id}')"
            )
        if rec.cost_macs <= 0:
            raise LibraryValidationError(
                f"consistency error: cost_macs must be positive, got {rec.cost_macs} at "
                f"(slot {rec.slot_index}, option '{rec.option_id}')"
            )
        if rec.cost_latency_us is not None and rec.cost_latency_us <= 0:
            raise LibraryValidationError(
                f"consistency error: cost_latency_us must be positive, got {rec.cost_latency_us} at "
                f"(slot {rec.slot_index}, option '{rec.option_id}')"
            )
        if rec.trained_epochs < 0:
            raise LibraryValidationError(
                f"consistency error: trained_epochs must be non-negative at "
                f"(slot {rec.slot_index}, option '{rec.option_id}')"
            )
        if rec.option_id == slot.options[0].option_id and rec.mse_loss != 0.0:
            raise LibraryValidationError(
                f"consistency error: mothernet option '{rec.option_id}' in slot {rec.slot_index} "
                f"must have mse_loss 0.0, got {rec.mse_loss}"
            )
        by_key[key] = rec

    slot_option_ids: list[tuple[str, ...]] = []
    for slot in space.slots:
        present = tuple(o.option_id for o in slot.options if (slot.slot_index, o.option_id) in by_key)
        if not filtered:
            missing = [o.option_id for o in slot.options if (slot.slot_index, o.option_id) not in by_key]
            if missing:
                raise LibraryValidationError(
                    f"coverage error: missing record for (slot {slot.slot_index}, option '{missing[0]}')"
                )
        else:
            mother = slot.options[0].option_id
            if (slot.slot_index, mother) not in by_key:
                raise LibraryValidationError(
                    f"coverage error: filtered library lost the mothernet option "
                    f"(slot {slot.slot_index}, option '{mother}')"
                )
        slot_option_ids.append(present)
    return tuple(slot_option_ids), by_key


def build_library(
    space: SearchSpace,
    records: list[BkdRecord],
    meta: Mapping[str, Any] | None = None,
) -> BlockLibrary:
    """Assemble and validate a library from in-memory records."""
    meta = dict(meta or {})
    filtered = "filtered_with_d" in meta
    slot_option_ids, by_key = _validate_records(space, meta.get("space_name", space.name), records, filtered)
    meta.setdefault("space_name", space.name)
    return BlockLibrary(
        space_name=space.name,
        slot_option_ids=slot_option_ids,
        records=by_key,
        meta=meta,
    )


def synth_library(space: SearchSpace, profile: SynthProfile, rng_seed: int) -> BlockLibrary:
    """Generate a deterministic synthetic library for the given space.

    The mothernet option is forced to zero loss; block MACs come from the
    analytic counter; latency is left unmeasured. Noise draws happen in
    (slot, option) order so a fixed seed yields a byte-identical file.
    """
    from .costs import macs_of_block  # local import: costs depends on this module

    rng = np.random.default_rng(int(rng_seed))
    records: list[BkdRecord] = []
    for slot in space.slots:
        for j, opt in enumerate(slot.options):
            noise = float(rng.uniform(0.0, profile.noise)) if profile.noise > 0 else 0.0
            if j == 0:
                mse = 0.0
            else:
                mse = (
                    profile.alpha / opt.depth
                    + profile.beta / opt.expansion
                    + (profile.gamma if opt.kernel == 3 else 0.0)
                    + (profile.delta if opt.channel_scale == 0.5 else 0.0)
                    + noise
                )
                mse = max(mse, 0.0)
            records.append(BkdRecord(
                slot_index=slot.slot_index,
                option_id=opt.option_id,
                mse_loss=mse,
                cost_macs=macs_of_block(slot, opt),
                cost_latency_us=None,
                trained_epochs=0.0 if j == 0 else 1.0,
            ))
    meta = {
        "space_name": space.name,
        "format_version": FORMAT_VERSION,
        "synth_profile": profile.to_dict(),
        "synth_seed": int(rng_seed),
    }
    return build_library(space, records, meta)


# ---------------------------------------------------------------------------
# JSON Lines I/O

_RECORD_KEYS = {"slot_index", "option_id", "mse_loss", "cost_macs", "cost_latency_us", "trained_epochs"}


def _parse_record(doc: dict, line_no: int) -> BkdRecord:
    missing = _RECORD_KEYS - doc.keys()
    if missing:
        raise LibraryFormatError(f"line {line_no}: record missing keys {sorted(missing)}")
    try:
        slot_index = int(doc["slot_index"])
        option_id = str(doc["option_id"])
        mse_loss = float(doc["mse_loss"])
        cost_macs = int(doc["cost_macs"])
        latency = doc["cost_latency_us"]
        cost_latency_us = None if latency is None else float(latency)
        trained_epochs = float(doc["trained_epochs"])
    except (TypeError, ValueError) as exc:
        raise LibraryFormatError(f"line {line_no}: malformed record field ({exc})") from exc
    return BkdRecord(
        slot_index=slot_index,
        option_id=option_id,
        mse_loss=mse_loss,
        cost_macs=cost_macs,
        cost_latency_us=cost_latency_us,
        trained_epochs=trained_epochs,
    )


def loads_library(text: str, space: SearchSpace) -> BlockLibrary:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise LibraryFormatError("empty library file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise LibraryFormatError(f"line 1: header is not valid JSON ({exc})") from exc
    if not isinstance(header, dict) or "space_name" not in header:
        raise LibraryFormatError("line 1: header must be an object with a space_name key")
    if header.get("format_version") != FORMAT_VERSION:
        raise LibraryFormatError(
            f"line 1: unsupported format_version {header.get('format_version')!r}"
        )
    records = []
    for line_no, line in enumerate(lines[1:], start=2):
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LibraryFormatError(f"line {line_no}: not valid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise LibraryFormatError(f"line {line_no}: expected a record object")
        records.append(_parse_record(doc, line_no))
    filtered = "filtered_with_d" in header
    slot_option_ids, by_key = _validate_records(space, str(header["space_name"]), records, filtered)
    return BlockLibrary(
        space_name=str(header["space_name"]),
        slot_option_ids=slot_option_ids,
        records=by_key,
        meta=dict(header),
    )


def load_library(path: str | Path, space: SearchSpace) -> BlockLibrary:
    """Load and validate a JSONL library against its space."""
    return loads_library(Path(path).read_text(encoding="utf-8"), space)


def dumps_library(library: BlockLibrary, extra_meta: Mapping[str, Any] | None = None) -> str:
    header = {"space_name": library.space_name, "format_version": FORMAT_VERSION}
    for k, v in library.meta.items():
        if k not in header:
            header[k] = v
    for k, v in (extra_meta or {}).items():
        header[k] = v
    out = [json.dumps(header)]
    for slot_index, option_ids in enumerate(library.slot_option_ids):
        for option_id in option_ids:
            rec = library.records[(slot_index, option_id)]
            out.append(json.dumps({
                "slot_index": rec.slot_index,
                "option_id": rec.option_id,
                "mse_loss": rec.mse_loss,
                "cost_macs": rec.cost_macs,
                "cost_latency_us": rec.cost_latency_us,
                "trained_epochs": rec.trained_epochs,
            }))
    return "\n".join(out) + "\n"


def save_library(library: BlockLibrary, path: str | Path, extra_meta: Mapping[str, Any] | None = None) -> None:
    Path(path).write_text(dumps_library(library, extra_meta), encoding="utf-8")


def with_latencies(
    library: BlockLibrary,
    latencies: Mapping[tuple[int, str], float],
    base_us: float,
) -> BlockLibrary:
    """New library with per-block measured latencies and the stem+head base."""
    records = {}
    for key, rec in library.records.items():
        if key not in latencies:
            raise LibraryValidationError(
                f"coverage error: no measured latency for (slot {key[0]}, option '{key[1]}')"
            )
        records[key] = BkdRecord(
            slot_index=rec.slot_index,
            option_id=rec.option_id,
            mse_loss=rec.mse_loss,
            cost_macs=rec.cost_macs,
            cost_latency_us=float(latencies[key]),
            trained_epochs=rec.trained_epochs,
        )
    meta = dict(library.meta)
    meta["measured_base_us"] = float(base_us)
    return BlockLibrary(
        space_name=library.space_name,
        slot_option_ids=library.slot_option_ids,
        records=records,
        meta=meta,
    )
