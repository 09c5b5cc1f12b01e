"""Command-line pipeline: space validation, library synthesis and measurement,
filtering, search, oracle, Pareto analytics, and the mock measurement service.

Every subcommand validates its inputs, writes outputs atomically, never
mutates an input file, and exits nonzero with a one-line machine-parsable
reason. Exit codes: 0 success, 2 validation error, 3 transport error,
4 infeasible/bound error.

Configuration precedence: flags > config file (--config) > environment
(BLOCKNAS_ENDPOINT, measurement URL only) > built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from ._ioutils import atomic_write_text
from .costs import (
    CompositionalTableProvider,
    CostEvaluator,
    MeasurementClient,
    ServiceProvider,
)
from .errors import (
    BlockNasError,
    BudgetInfeasibleError,
    CardinalityBoundError,
    ConfigurationError,
    LibraryFormatError,
    LibraryValidationError,
    ProtocolError,
    SpaceFormatError,
    SpaceValidationError,
    TransportError,
)
from .filtering import FilterConfig, filter_library, filtered_cardinality, reduced_space
from .library import (
    SynthProfile,
    dumps_library,
    load_library,
    synth_library,
    with_latencies,
)
from .mock_device import MockDeviceConfig, serve_mock_device
from .nsga2 import SearchConfig, evolve, load_checkpoint, result_to_dict
from .oracle import ORACLE_BOUND, exhaustive_front, oracle_result_to_dict
from .pareto import estimate_search_cost, export_front, select_by_budget
from .space import (
    cardinality,
    load_space,
    option_index_map,
    require_valid,
    validate_space,
)

EXIT_OK = 0
EXIT_FALLBACK = 1
EXIT_VALIDATION = 2
EXIT_TRANSPORT = 3
EXIT_INFEASIBLE = 4

_ERROR_KINDS = [
    ((BudgetInfeasibleError, CardinalityBoundError), "infeasible", EXIT_INFEASIBLE),
    ((TransportError,), "transport", EXIT_TRANSPORT),
    ((ProtocolError,), "protocol", EXIT_TRANSPORT),
    (
        (
            SpaceFormatError,
            SpaceValidationError,
            LibraryFormatError,
            LibraryValidationError,
            ConfigurationError,
        ),
        "validation",
        EXIT_VALIDATION,
    ),
]


def _error_exit(exc: Exception) -> int:
    for classes, kind, code in _ERROR_KINDS:
        if isinstance(exc, classes):
            print(f"error: {kind}: {exc}", file=sys.stderr)
            return code
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, PermissionError, json.JSONDecodeError)):
        print(f"error: validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"error: internal: {exc}", file=sys.stderr)
    return EXIT_FALLBACK


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    return doc


def _resolve_endpoint(args, config_doc: dict) -> str:
    endpoint = getattr(args, "endpoint", None) or config_doc.get("endpoint") \
        or os.environ.get("BLOCKNAS_ENDPOINT")
    if not endpoint:
        raise ConfigurationError(
            "no measurement endpoint: pass --endpoint, set it in --config, or export BLOCKNAS_ENDPOINT"
        )
    return endpoint


def _load_valid_space(path: str):
    return require_valid(load_space(path))


# ---------------------------------------------------------------------------
# subcommands


def cmd_space_validate(args) -> int:
    space = load_space(args.space)
    violations = validate_space(space)
    if violations:
        for v in violations:
            print(f"violation: {v}")
        print(f"error: validation: space '{space.name}' has {len(violations)} violation(s)",
              file=sys.stderr)
        return EXIT_VALIDATION
    print(f"ok: space '{space.name}' is valid "
          f"({space.num_slots} slots, cardinality {cardinality(space)})")
    return EXIT_OK


def cmd_library_synth(args) -> int:
    config_doc = _load_config_file(args.config)
    space = _load_valid_space(args.space)
    profile = SynthProfile()
    profile_doc = config_doc.get("synth_profile", {})
    if args.profile:
        profile_doc = json.loads(Path(args.profile).read_text(encoding="utf-8"))
    if profile_doc:
        profile = SynthProfile.from_dict(profile_doc)
    library = synth_library(space, profile, args.seed)
    atomic_write_text(args.output, dumps_library(library, {"tool_version": __version__}))
    print(f"ok: wrote {len(library.records)} records to {args.output}")
    return EXIT_OK


def cmd_library_validate(args) -> int:
    space = _load_valid_space(args.space)
    library = load_library(args.library, space)
    kind = "filtered" if library.is_filtered else "complete"
    print(f"ok: {kind} library for space '{library.space_name}' "
          f"({len(library.records)} records)")
    return EXIT_OK


def cmd_library_measure(args) -> int:
    config_doc = _load_config_file(args.config)
    space = _load_valid_space(args.space)
    library = load_library(args.library, space)
    endpoint = _resolve_endpoint(args, config_doc)
    client = MeasurementClient(endpoint, window=args.window)

    base = client.measure(f"{space.name}@base", [])
    index_by_id = {
        (slot.slot_index, opt.option_id): j
        for slot in space.slots
        for j, opt in enumerate(slot.options)
    }
    keys = list(library.records.keys())
    items = [
        (f"{space.name}@slot/{slot_index}", [index_by_id[(slot_index, option_id)]])
        for slot_index, option_id in keys
    ]
    raw = client.measure_items(items)
    # block-as-model responses include the base overhead once; exact on the grid
    latencies = {key: value - base for key, value in zip(keys, raw)}
    measured = with_latencies(library, latencies, base)
    atomic_write_text(args.output, dumps_library(measured, {
        "tool_version": __version__,
        "measured_endpoint": endpoint,
    }))
    print(f"ok: measured {len(keys)} blocks (base {base} us) -> {args.output}")
    return EXIT_OK


def cmd_filter(args) -> int:
    space = _load_valid_space(args.space)
    library = load_library(args.library, space)
    config = FilterConfig(threshold_d=args.d, cost_kind=args.cost)
    filtered, report = filter_library(library, space, config)
    atomic_write_text(args.output, dumps_library(filtered, {"tool_version": __version__}))
    if args.report:
        doc = {"tool_version": __version__,
               "config": {"threshold_d": args.d, "cost_kind": args.cost, "space_name": space.name}}
        doc.update(report.to_dict())
        atomic_write_text(args.report, json.dumps(doc, indent=2) + "\n")
    sys.stdout.write(report.to_table())
    print(f"ok: filtered cardinality {filtered_cardinality(report, space)} "
          f"(was {cardinality(space)}) -> {args.output}")
    return EXIT_OK


def _build_evaluator(args, space, view, library, config_doc):
    provider_info: dict = {"provider": "analytic-macs"}
    provider = None
    if args.cost == "latency":
        if args.provider == "table":
            provider = CompositionalTableProvider.from_library(library, view)
            provider_info = {"provider": "compositional-table",
                             "stem_head_us": provider.stem_head_us}
        else:
            endpoint = _resolve_endpoint(args, config_doc)
            client = MeasurementClient(endpoint, window=args.window)
            provider = ServiceProvider(
                client, space.name, wire_index=option_index_map(space, view)
            )
            provider_info = {"provider": "measured-service", "endpoint": endpoint}
    evaluator = CostEvaluator(view, library, cost_kind=args.cost, latency_provider=provider)
    return evaluator, provider_info


def cmd_search(args) -> int:
    config_doc = _load_config_file(args.config)
    space = _load_valid_space(args.space)
    library = load_library(args.library, space)
    view = reduced_space(space, library)
    evaluator, provider_info = _build_evaluator(args, space, view, library, config_doc)

    config = SearchConfig(
        population_size=args.pop,
        steps=args.steps,
        mutation_prob=args.mutation,
        crossover_prob=args.crossover,
        rng_seed=args.seed,
        cost_kind=args.cost,
    )
    checkpoint_path = args.checkpoint or (args.output + ".ckpt")
    resume_doc = load_checkpoint(args.resume) if args.resume else None
    try:
        result = evolve(view, library, evaluator, config,
                        checkpoint_path=checkpoint_path, resume_doc=resume_doc)
    except (TransportError, ProtocolError) as exc:
        print(f"checkpoint: {checkpoint_path}", file=sys.stderr)
        raise exc
    result.config_echo.update(provider_info)
    if library.is_filtered:
        result.config_echo["filtered_with_d"] = library.meta["filtered_with_d"]
    doc = result_to_dict(result, view, space)
    atomic_write_text(args.output, json.dumps(doc, indent=2) + "\n")
    print(f"ok: front size {len(result.front)}, "
          f"{result.total_cost_queries} cost queries -> {args.output}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    config_doc = _load_config_file(args.config)
    space = _load_valid_space(args.space)
    library = load_library(args.library, space)
    view = reduced_space(space, library)
    evaluator, provider_info = _build_evaluator(args, space, view, library, config_doc)
    result = exhaustive_front(view, library, evaluator, bound=args.bound)
    doc = oracle_result_to_dict(result, view, space)
    doc["config"].update(provider_info)
    atomic_write_text(args.output, json.dumps(doc, indent=2) + "\n")
    print(f"ok: evaluated {result.evaluated_count} genomes, front size {len(result.true_front)}, "
          f"hypervolume {result.hypervolume:.9g} -> {args.output}")
    return EXIT_OK


def cmd_pareto_select(args) -> int:
    result = json.loads(Path(args.result).read_text(encoding="utf-8"))
    entry = select_by_budget(result, args.budget, args.cost)
    print(json.dumps(entry))
    latency = entry.get("latency_us")
    if latency is not None:
        # tables in this field report milliseconds; microseconds stay internal
        print(f"selected: surrogate={entry['surrogate']:.6g} latency={latency / 1000.0:.6g} ms")
    else:
        print(f"selected: surrogate={entry['surrogate']:.6g} macs={entry['macs']}")
    return EXIT_OK


def cmd_pareto_export(args) -> int:
    result = json.loads(Path(args.result).read_text(encoding="utf-8"))
    content = export_front(result, args.format)
    atomic_write_text(args.output, content)
    print(f"ok: exported {len(result.get('front', []))} rows -> {args.output}")
    return EXIT_OK


def cmd_cost_report(args) -> int:
    estimate = estimate_search_cost(args.predictor, args.models, args.epochs, args.bkd)
    print(f"rendered: {estimate.rendered}")
    total = estimate.total_epochs
    print(f"total_epochs: {int(total) if total == int(total) else total}")
    return EXIT_OK


def cmd_serve_mock_device(args) -> int:
    spaces = [_load_valid_space(p) for p in args.space]
    config = MockDeviceConfig(
        port=args.port,
        seed=args.seed,
        base_us=args.base,
        fusion_us=args.fusion,
        macs_to_us=args.macs_to_us,
        per_block_overhead_us=args.block_overhead,
        swish_adder_us=args.swish_adder,
        noise_us=args.noise,
    )
    server = serve_mock_device(config, spaces)
    print(json.dumps({"event": "listening", "endpoint": server.endpoint}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blocknas",
        description="Block-level hardware-aware NAS pipeline",
    )
    parser.add_argument("--version", action="version", version=f"blocknas {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_space = sub.add_parser("space", help="search-space tools")
    space_sub = p_space.add_subparsers(dest="space_command", required=True)
    p = space_sub.add_parser("validate", help="check a space file against every invariant")
    p.add_argument("space")
    p.set_defaults(func=cmd_space_validate)

    p_lib = sub.add_parser("library", help="block-library tools")
    lib_sub = p_lib.add_subparsers(dest="library_command", required=True)

    p = lib_sub.add_parser("synth", help="generate a synthetic library")
    p.add_argument("space")
    p.add_argument("--profile", help="JSON file with synth-law coefficients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON config file (defaults below flags)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_library_synth)

    p = lib_sub.add_parser("validate", help="validate a library against its space")
    p.add_argument("library")
    p.add_argument("--space", required=True)
    p.set_defaults(func=cmd_library_validate)

    p = lib_sub.add_parser("measure", help="fill per-block latencies from a measurement endpoint")
    p.add_argument("library")
    p.add_argument("--space", required=True)
    p.add_argument("--endpoint")
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--config")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_library_measure)

    p = sub.add_parser("filter", help="drop cost-inefficient options per slot")
    p.add_argument("library")
    p.add_argument("--space", required=True)
    p.add_argument("--d", type=float, default=0.0, help="relative cost slack D")
    p.add_argument("--cost", choices=["macs", "latency"], default="macs")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--report", help="write the JSON filter report here")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("search", help="NSGA-II search for the Pareto front")
    p.add_argument("library")
    p.add_argument("--space", required=True)
    p.add_argument("--pop", type=int, default=100)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--mutation", type=float, default=None,
                   help="per-slot mutation probability (default 1/num_slots)")
    p.add_argument("--crossover", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cost", choices=["macs", "latency"], default="macs")
    p.add_argument("--provider", choices=["service", "table"], default="service",
                   help="latency source: measurement service or compositional table")
    p.add_argument("--endpoint")
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--config")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--resume", help="continue from a checkpoint file")
    p.add_argument("--checkpoint", help="checkpoint path (default: OUTPUT.ckpt)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("oracle", help="exhaustive front for desk-scale spaces")
    p.add_argument("library")
    p.add_argument("--space", required=True)
    p.add_argument("--bound", type=int, default=ORACLE_BOUND)
    p.add_argument("--cost", choices=["macs", "latency"], default="macs")
    p.add_argument("--provider", choices=["service", "table"], default="service")
    p.add_argument("--endpoint")
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--config")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_oracle)

    p_pareto = sub.add_parser("pareto", help="front analytics")
    pareto_sub = p_pareto.add_subparsers(dest="pareto_command", required=True)

    p = pareto_sub.add_parser("select", help="pick the best model within a cost budget")
    p.add_argument("result")
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--cost", default="latency_us",
                   help="cost field: latency_us or macs")
    p.set_defaults(func=cmd_pareto_select)

    p = pareto_sub.add_parser("export", help="export the front as CSV or JSON")
    p.add_argument("result")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_pareto_export)

    p_cost = sub.add_parser("cost", help="search-cost accounting")
    cost_sub = p_cost.add_subparsers(dest="cost_command", required=True)
    p = cost_sub.add_parser("report", help="epoch totals in the A + B x C style")
    p.add_argument("--predictor", type=float, default=0.0)
    p.add_argument("--models", type=float, default=0.0)
    p.add_argument("--epochs", type=float, default=0.0)
    p.add_argument("--bkd", type=float, default=0.0)
    p.set_defaults(func=cmd_cost_report)

    p = sub.add_parser("serve-mock-device", help="run the mock measurement service")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fusion", type=float, default=0.0)
    p.add_argument("--base", type=float, default=200.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--macs-to-us", type=float, default=2e-4)
    p.add_argument("--block-overhead", type=float, default=15.0)
    p.add_argument("--swish-adder", type=float, default=2.0)
    p.add_argument("--space", action="append", required=True,
                   help="space file to register (repeatable)")
    p.set_defaults(func=cmd_serve_mock_device)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BlockNasError as exc:
        return _error_exit(exc)
    except (FileNotFoundError, IsADirectoryError, PermissionError, json.JSONDecodeError) as exc:
        return _error_exit(exc)


if __name__ == "__main__":
    sys.exit(main())
