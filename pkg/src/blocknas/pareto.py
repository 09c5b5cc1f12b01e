"""Post-search analytics: budget selection, front export, epoch accounting.

These functions operate on the serialized result form (the JSON document a
search or oracle run writes), because that file is the interface between the
search stage and whatever consumes the front.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

from . import __version__
from .errors import BudgetInfeasibleError, ConfigurationError


def _cost_field(cost_kind: str) -> str:
    kind = cost_kind.lower()
    if kind in ("macs",):
        return "macs"
    if kind in ("latency", "latency_us"):
        return "latency_us"
    raise ConfigurationError(f"unknown cost kind {cost_kind!r}")


def _front_entries(result: Mapping[str, Any]) -> list[dict]:
    front = result.get("front")
    if not front:
        raise ConfigurationError("result has an empty front")
    return list(front)


def _entry_cost(entry: Mapping[str, Any], field: str) -> float:
    value = entry.get(field)
    if value is None:
        raise ConfigurationError(
            f"front entry has no {field} value; was the search run with that cost kind?"
        )
    return float(value)


def select_by_budget(result: Mapping[str, Any], budget: float, cost_kind: str) -> dict:
    """Lowest-surrogate front member with cost within budget.

    Budget units match the stored field: microseconds for latency_us, raw MACs
    for macs. Infeasible budgets raise, reporting the cheapest front cost.
    """
    field = _cost_field(cost_kind)
    entries = _front_entries(result)
    feasible = [e for e in entries if _entry_cost(e, field) <= budget]
    if not feasible:
        cheapest = min(_entry_cost(e, field) for e in entries)
        raise BudgetInfeasibleError(
            f"no front member within budget {budget} {field}; cheapest is {cheapest}",
            cheapest_cost=cheapest,
        )
    feasible.sort(key=lambda e: (float(e["surrogate"]), _entry_cost(e, field), e["choices"]))
    return dict(feasible[0])


def _fmt_float(x: float) -> str:
    return format(float(x), ".9g")


def _sorted_front(result: Mapping[str, Any]) -> tuple[list[dict], str]:
    cost_kind = result.get("config", {}).get("cost_kind", "macs")
    field = _cost_field(cost_kind)
    entries = _front_entries(result)
    entries.sort(key=lambda e: (_entry_cost(e, field), float(e["surrogate"]), e["choices"]))
    return entries, field


def export_front(result: Mapping[str, Any], fmt: str = "csv") -> str:
    """Serialize the front, rows sorted by cost ascending; byte-stable."""
    entries, _ = _sorted_front(result)
    if fmt == "csv":
        config = json.dumps(result.get("config", {}), sort_keys=True, separators=(",", ":"))
        lines = [
            f"# tool_version={__version__}",
            f"# config={config}",
            "choices,surrogate,macs,latency_us",
        ]
        for e in entries:
            choices = "|".join(str(c) for c in e["choices"])
            latency = "" if e.get("latency_us") is None else _fmt_float(e["latency_us"])
            lines.append(f"{choices},{_fmt_float(e['surrogate'])},{int(e['macs'])},{latency}")
        return "\n".join(lines) + "\n"
    if fmt == "json":
        doc = {
            "tool_version": __version__,
            "config": result.get("config", {}),
            "front": entries,
        }
        return json.dumps(doc, indent=2) + "\n"
    raise ConfigurationError(f"unknown export format {fmt!r}")


def parse_front_csv(text: str) -> list[dict]:
    """Inverse of the CSV export (comment lines ignored)."""
    rows = []
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines or lines[0] != "choices,surrogate,macs,latency_us":
        raise ConfigurationError("not a front CSV: missing canonical header")
    for ln in lines[1:]:
        choices_s, surrogate_s, macs_s, latency_s = ln.split(",")
        rows.append({
            "choices": [int(c) for c in choices_s.split("|")],
            "surrogate": float(surrogate_s),
            "macs": int(macs_s),
            "latency_us": None if latency_s == "" else float(latency_s),
        })
    return rows


@dataclass(frozen=True)
class SearchCostEstimate:
    total_epochs: float
    rendered: str


def _fmt_epochs(x: float) -> str:
    if float(x) == int(x):
        return str(int(x))
    return format(float(x), "g")


def estimate_search_cost(
    num_predictor_epochs: float,
    num_finetune_models: float,
    epochs_per_finetune: float,
    bkd_epochs: float = 0.0,
) -> SearchCostEstimate:
    """Total epoch bookkeeping in the literature's "A + B x C" style.

    Block-library epochs render symbolically ("1e"); the numeric total treats
    them as the supplied number. A predictor-free configuration simply passes
    zero predictor epochs.
    """
    for name, v in (
        ("num_predictor_epochs", num_predictor_epochs),
        ("num_finetune_models", num_finetune_models),
        ("epochs_per_finetune", epochs_per_finetune),
        ("bkd_epochs", bkd_epochs),
    ):
        if v < 0:
            raise ConfigurationError(f"{name} must be non-negative, got {v}")
    total = num_predictor_epochs + num_finetune_models * epochs_per_finetune + bkd_epochs
    parts = []
    if num_predictor_epochs > 0:
        parts.append(_fmt_epochs(num_predictor_epochs))
    if num_finetune_models * epochs_per_finetune > 0:
        if num_finetune_models == 1:
            parts.append(_fmt_epochs(epochs_per_finetune))
        else:
            parts.append(f"{_fmt_epochs(num_finetune_models)} x {_fmt_epochs(epochs_per_finetune)}")
    if bkd_epochs > 0:
        parts.append(f"{_fmt_epochs(bkd_epochs)}e")
    rendered = " + ".join(parts) if parts else "0"
    return SearchCostEstimate(total_epochs=float(total), rendered=rendered)
