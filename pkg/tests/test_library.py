import json

import pytest

from blocknas.costs import macs_of_block
from blocknas.errors import LibraryFormatError, LibraryValidationError
from blocknas.library import (
    SynthProfile,
    dumps_library,
    load_library,
    loads_library,
    save_library,
    surrogate_loss,
    synth_library,
)
from blocknas.space import ModelGenome

from builders import chain_space, handmade_library, opt, small_space_2x4


def space_2x3():
    options = (opt("mother"), opt("b", depth=1), opt("c", kernel=5))
    return chain_space("lib2x3", [(8, 16, (8, 8), 1), (16, 16, (8, 8), 1)], options)


def test_synth_determinism_byte_identical():
    space = small_space_2x4()
    a = dumps_library(synth_library(space, SynthProfile(), rng_seed=9))
    b = dumps_library(synth_library(space, SynthProfile(), rng_seed=9))
    assert a == b


def test_synth_degenerate_profile_all_zero():
    space = small_space_2x4()
    profile = SynthProfile(alpha=0, beta=0, gamma=0, delta=0, noise=0)
    library = synth_library(space, profile, rng_seed=1)
    assert all(rec.mse_loss == 0.0 for rec in library.records.values())


def test_synth_channel_scale_penalty_orders_twins():
    options = (opt("mother"),
               opt("full", expansion=4, depth=2, channel_scale=1.0),
               opt("half", expansion=4, depth=2, channel_scale=0.5))
    space = chain_space("twins", [(8, 8, (8, 8), 1)], options)
    profile = SynthProfile(alpha=0.2, beta=0.1, gamma=0.02, delta=0.1, noise=0.0)
    library = synth_library(space, profile, rng_seed=1)
    assert library.mse(0, "half") >= library.mse(0, "full")
    assert library.mse(0, "half") - library.mse(0, "full") == pytest.approx(0.1)


def test_synth_mothernet_zero_and_costs_match_counter():
    space = small_space_2x4()
    library = synth_library(space, SynthProfile(), rng_seed=2)
    for slot in space.slots:
        assert library.mse(slot.slot_index, slot.options[0].option_id) == 0.0
        for o in slot.options:
            assert library.record(slot.slot_index, o.option_id).cost_macs == macs_of_block(slot, o)


def test_roundtrip_identity(tmp_path):
    space = small_space_2x4()
    library = synth_library(space, SynthProfile(), rng_seed=3)
    path = tmp_path / "lib.jsonl"
    save_library(library, path)
    again = load_library(path, space)
    assert again.records == library.records
    assert dumps_library(again) == dumps_library(library)


def test_full_coverage_2x3(tmp_path):
    space = space_2x3()
    library = synth_library(space, SynthProfile(), rng_seed=0)
    assert len(library.records) == 6
    path = tmp_path / "lib.jsonl"
    save_library(library, path)
    assert len(load_library(path, space).records) == 6


def test_missing_record_names_slot_and_option(tmp_path):
    space = space_2x3()
    text = dumps_library(synth_library(space, SynthProfile(), rng_seed=0))
    lines = text.splitlines()
    victim = next(i for i, ln in enumerate(lines)
                  if '"slot_index": 1' in ln and '"option_id": "b"' in ln)
    del lines[victim]
    with pytest.raises(LibraryValidationError, match=r"slot 1, option 'b'"):
        loads_library("\n".join(lines), space)


def test_negative_mse_is_consistency_error():
    space = space_2x3()
    text = dumps_library(synth_library(space, SynthProfile(), rng_seed=0))
    text = text.replace('"mse_loss": 0.0,', '"mse_loss": -0.1,', 1)
    with pytest.raises(LibraryValidationError, match="consistency error"):
        loads_library(text, space)


def test_nonzero_mothernet_mse_rejected():
    space = space_2x3()
    lines = dumps_library(synth_library(space, SynthProfile(), rng_seed=0)).splitlines()
    doc = json.loads(lines[1])
    assert doc["option_id"] == "mother"
    doc["mse_loss"] = 0.25
    lines[1] = json.dumps(doc)
    with pytest.raises(LibraryValidationError, match="mothernet"):
        loads_library("\n".join(lines), space)


def test_space_name_mismatch():
    space = space_2x3()
    text = dumps_library(synth_library(space, SynthProfile(), rng_seed=0))
    text = text.replace('"space_name": "lib2x3"', '"space_name": "other"')
    with pytest.raises(LibraryValidationError, match="space_name"):
        loads_library(text, space)


def test_duplicate_and_extra_records():
    space = space_2x3()
    text = dumps_library(synth_library(space, SynthProfile(), rng_seed=0))
    lines = text.splitlines()
    with pytest.raises(LibraryValidationError, match="duplicate"):
        loads_library("\n".join(lines + [lines[1]]), space)
    alien = json.loads(lines[1])
    alien["option_id"] = "ghost"
    with pytest.raises(LibraryValidationError, match="extra record"):
        loads_library("\n".join(lines + [json.dumps(alien)]), space)


def test_header_errors():
    space = space_2x3()
    with pytest.raises(LibraryFormatError, match="empty"):
        loads_library("", space)
    with pytest.raises(LibraryFormatError, match="header"):
        loads_library('["not","an","object"]', space)
    with pytest.raises(LibraryFormatError, match="format_version"):
        loads_library('{"space_name": "lib2x3", "format_version": 99}', space)


def test_surrogate_sum_example():
    values = [
        {"mother": 0.0, "a1": 0.05},
        {"mother": 0.0, "a1": 0.07},
        {"mother": 0.0, "a1": 0.03},
    ]
    options = (opt("mother"), opt("a1", depth=1))
    space = chain_space("sum3", [(8, 8, (8, 8), 1)] * 3, options)
    library = handmade_library(space, values)
    total = surrogate_loss(ModelGenome((1, 1, 1)), library)
    assert abs(total - 0.15) < 1e-15
    assert surrogate_loss(ModelGenome((0, 0, 0)), library) == 0.0


def test_surrogate_monotone_under_single_swap():
    space = small_space_2x4()
    library = synth_library(space, SynthProfile(), rng_seed=8)
    genome = ModelGenome((1, 1))
    base = surrogate_loss(genome, library)
    for slot in space.slots:
        current = library.mse(slot.slot_index, slot.options[1].option_id)
        for j, o in enumerate(slot.options):
            other = library.mse(slot.slot_index, o.option_id)
            if other > current:
                swapped = list(genome.choices)
                swapped[slot.slot_index] = j
                assert surrogate_loss(ModelGenome(tuple(swapped)), library) > base


def test_missing_record_guard_on_corrupted_state():
    space = space_2x3()
    library = synth_library(space, SynthProfile(), rng_seed=0)
    object.__setattr__(library, "records", dict(list(library.records.items())[:-1]))
    with pytest.raises(LibraryValidationError, match="no record"):
        surrogate_loss(ModelGenome((2, 2)), library)
