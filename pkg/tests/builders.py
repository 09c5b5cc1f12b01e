"""Shared space/library builders and independent brute-force oracles."""

from __future__ import annotations

import itertools

from blocknas.library import BkdRecord, build_library
from blocknas.space import BlockOption, BlockSlot, SearchSpace

DW = "depthwise_inverted_bottleneck"
GR = "grouped_inverted_bottleneck"


def opt(option_id, layer_type=DW, kernel=3, expansion=3, depth=2, activation="relu", channel_scale=1.0):
    return BlockOption(
        option_id=option_id,
        layer_type=layer_type,
        kernel=kernel,
        expansion=expansion,
        depth=depth,
        activation=activation,
        channel_scale=channel_scale,
    )


def chain_space(name, dims, options_per_slot, stem=1000, head=500):
    """dims: list of (in_ch, out_ch, (H, W), stride); options_per_slot: one
    option tuple shared by all slots, or a list with one tuple per slot."""
    slots = []
    for i, (ci, co, res, stride) in enumerate(dims):
        options = options_per_slot[i] if isinstance(options_per_slot, list) else options_per_slot
        slots.append(BlockSlot(
            slot_index=i, in_channels=ci, out_channels=co,
            in_resolution=res, stride=stride, options=tuple(options),
        ))
    return SearchSpace(name=name, stem_cost_macs=stem, head_cost_macs=head, slots=tuple(slots))


def options8():
    """The canonical 8-option mix: a mothernet plus front-worthy and clearly
    dominated variants, so filtering has real work to do."""
    return (
        opt("mother"),
        opt("slim", kernel=3, expansion=2, depth=1, channel_scale=0.5),
        opt("deep5", kernel=5, expansion=4, depth=3),
        opt("gmid", layer_type=GR, kernel=3, expansion=4, depth=2, activation="swish"),
        opt("wide1", kernel=3, expansion=6, depth=1),
        opt("lean2", kernel=3, expansion=2, depth=2),
        opt("mswish", kernel=3, expansion=3, depth=2, activation="swish"),
        opt("heavy", layer_type=GR, kernel=5, expansion=6, depth=4, activation="swish", channel_scale=0.5),
    )


def small_space_2x4(name="small2x4"):
    options = (opt("mother"), opt("slim", kernel=3, expansion=2, depth=1, channel_scale=0.5),
               opt("deep5", kernel=5, expansion=4, depth=3), opt("lean2", kernel=3, expansion=2, depth=2))
    dims = [(8, 16, (16, 16), 2), (16, 24, (8, 8), 1)]
    return chain_space(name, dims, options, stem=2000, head=1000)


def medium_space(name="medium5x8"):
    dims = [
        (16, 24, (32, 32), 2),
        (24, 32, (16, 16), 2),
        (32, 48, (8, 8), 1),
        (48, 64, (8, 8), 2),
        (64, 96, (4, 4), 1),
    ]
    return chain_space(name, dims, options8(), stem=20000, head=10000)


def donna_classification_options():
    """192 options per slot: 2 layer types x k in {3,5} x e in {2,3,4} x
    d in {1..4} x 2 activations x 2 channel scales."""
    combos = itertools.product(
        (DW, GR), (3, 5), (2, 3, 4), (1, 2, 3, 4), ("relu", "swish"), (1.0, 0.5)
    )
    options = []
    for i, (lt, k, e, d, a, cs) in enumerate(combos):
        options.append(opt(f"c{i:03d}", layer_type=lt, kernel=k, expansion=e,
                           depth=d, activation=a, channel_scale=cs))
    assert len(options) == 192
    return tuple(options)


def space_of_shape(name, num_slots, options, base_channels=8, res=32):
    """Chained space with num_slots copies of the given option tuple."""
    dims = []
    ch = base_channels
    h = res
    for i in range(num_slots):
        stride = 2 if i % 2 == 0 and h >= 4 else 1
        dims.append((ch, ch + 8, (h, h), stride))
        ch += 8
        h = -(-h // stride)
    return chain_space(name, dims, options)


def handmade_library(space, per_slot_values, latencies=None, meta=None):
    """Library with explicit (option_id -> mse) maps per slot; option 0 must be 0."""
    records = []
    from blocknas.costs import macs_of_block

    for slot in space.slots:
        values = per_slot_values[slot.slot_index]
        for o in slot.options:
            lat = None
            if latencies is not None:
                lat = latencies[slot.slot_index][o.option_id]
            records.append(BkdRecord(
                slot_index=slot.slot_index,
                option_id=o.option_id,
                mse_loss=values[o.option_id],
                cost_macs=macs_of_block(slot, o),
                cost_latency_us=lat,
                trained_epochs=1.0,
            ))
    return build_library(space, records, meta)


def random_slot_library(rng, num_options=12):
    """One-slot space with uniformly random (mse, macs) records for the
    non-mothernet options; the per-slot filter's stress input."""
    import numpy as np

    from blocknas.library import build_library

    options = [opt("mother")] + [
        opt(f"o{i}", depth=int(rng.choice([1, 2, 3, 4])), kernel=int(rng.choice([3, 5])))
        for i in range(num_options - 1)
    ]
    space = chain_space("rand", [(8, 8, (8, 8), 1)], tuple(options))
    records = [BkdRecord(0, "mother", 0.0, 1000, None, 1.0)]
    for o in options[1:]:
        records.append(BkdRecord(0, o.option_id,
                                 float(np.round(rng.uniform(0, 0.5), 3)),
                                 int(rng.integers(100, 3000)), None, 1.0))
    return space, build_library(space, records)


def brute_force_front_mask(points):
    """O(n^2) pairwise maximal non-dominated mask; the independent oracle the
    fast sweep is checked against."""
    n = len(points)
    mask = [True] * n
    for i in range(n):
        li, ci = points[i]
        for j in range(n):
            if i == j:
                continue
            lj, cj = points[j]
            if lj <= li and cj <= ci and (lj < li or cj < ci):
                mask[i] = False
                break
    return mask


def brute_force_pareto_indices(points):
    return [i for i, keep in enumerate(brute_force_front_mask(points)) if keep]
