"""Analytic block costs (MACs, params) and scenario-aware latency providers.

MAC counting follows standard inverted-bottleneck arithmetic: per cell an
expand 1x1, a kxk spatial conv (depthwise or grouped, G=2), and a project 1x1.
The first cell runs at the slot's stride from in_channels; cells 2..depth run
at stride 1 from out_channels. Counts use Python integers, so GMAC-scale and
beyond cannot overflow.

Latency comes from one of two provider kinds: a compositional table that sums
per-block figures plus a stem+head constant, or a measurement service queried
over HTTP for whole models. The two disagree exactly when the device fuses
adjacent blocks, which is the effect the search must be able to see.
"""

from __future__ import annotations

import http.client
import itertools
import json
import socket
import threading
import time
import urllib.parse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ConfigurationError, ProtocolError, TransportError
from .library import BlockLibrary, surrogate_loss
from .space import BlockOption, BlockSlot, ModelGenome, SearchSpace

GROUPS = 2  # group count for the grouped inverted bottleneck variant


@dataclass(frozen=True)
class CostVector:
    macs: int
    params: int
    latency_us: float | None = None


def expanded_channels(in_channels: int, option: BlockOption) -> int:
    """Internal expanded width: round(expansion * channel_scale * in_channels).

    channel_scale is 1/2 or 1, so the only fractional case is the half scale;
    ties round half-up via integer arithmetic.
    """
    if option.channel_scale == 1.0:
        return option.expansion * in_channels
    return (option.expansion * in_channels + 1) // 2


def pointwise_macs(h: int, w: int, cin: int, cout: int) -> int:
    return h * w * cin * cout


def spatial_macs(h_out: int, w_out: int, ce: int, kernel: int, layer_type: str) -> int:
    if layer_type == "depthwise_inverted_bottleneck":
        return h_out * w_out * ce * kernel * kernel
    return h_out * w_out * (kernel * kernel * ce * ce) // GROUPS


def _spatial_params(ce: int, kernel: int, layer_type: str) -> int:
    if layer_type == "depthwise_inverted_bottleneck":
        return kernel * kernel * ce
    return (kernel * kernel * ce * ce) // GROUPS


def _cells(slot: BlockSlot, option: BlockOption):
    """Per-cell geometry: (cin, h_in, w_in, stride, h_out, w_out)."""
    h_in, w_in = slot.in_resolution
    h_out, w_out = slot.out_resolution
    yield slot.in_channels, h_in, w_in, slot.stride, h_out, w_out
    for _ in range(option.depth - 1):
        yield slot.out_channels, h_out, w_out, 1, h_out, w_out


def macs_of_block(slot: BlockSlot, option: BlockOption) -> int:
    total = 0
    for cin, h_in, w_in, _stride, h_out, w_out in _cells(slot, option):
        ce = expanded_channels(cin, option)
        total += pointwise_macs(h_in, w_in, cin, ce)
        total += spatial_macs(h_out, w_out, ce, option.kernel, option.layer_type)
        total += pointwise_macs(h_out, w_out, ce, slot.out_channels)
    return total


def params_of_block(slot: BlockSlot, option: BlockOption) -> int:
    """Weight counts with the analogous per-cell formulas (conv weights only)."""
    total = 0
    for cin, _h_in, _w_in, _stride, _h_out, _w_out in _cells(slot, option):
        ce = expanded_channels(cin, option)
        total += cin * ce
        total += _spatial_params(ce, option.kernel, option.layer_type)
        total += ce * slot.out_channels
    return total


def macs_of_model(genome: ModelGenome, space: SearchSpace) -> CostVector:
    """Stem + chosen blocks + head MACs; params cover the blocks (stem/head
    MAC budgets are opaque scalars in the space file and carry no param info)."""
    macs = space.stem_cost_macs + space.head_cost_macs
    params = 0
    for slot, choice in zip(space.slots, genome.choices):
        option = slot.options[choice]
        macs += macs_of_block(slot, option)
        params += params_of_block(slot, option)
    return CostVector(macs=macs, params=params)


def measure_latency(genome: ModelGenome, provider) -> float:
    """Whole-model latency in microseconds from any provider kind."""
    return provider.measure(genome)


# ---------------------------------------------------------------------------
# Measurement client (wire protocol)


class MeasurementClient:
    """HTTP client for the measurement protocol.

    POST {endpoint}/v1/measure with {"request_id", "space_name", "choices"};
    expects {"request_id", "latency_us", "energy_mj", "cycles"}. Responses are
    matched to requests by request_id. Connection failures retry up to
    `retries` attempts with exponential backoff, then raise TransportError.
    Up to `window` requests may be in flight concurrently; each worker keeps a
    persistent keep-alive connection, so throughput does not pay a TCP
    handshake per model.
    """

    def __init__(
        self,
        endpoint: str,
        window: int = 8,
        retries: int = 3,
        backoff_s: float = 0.1,
        timeout_s: float = 10.0,
    ):
        if retries < 1:
            raise ConfigurationError("retries must be >= 1")
        self.endpoint = endpoint.rstrip("/")
        parts = urllib.parse.urlsplit(self.endpoint)
        if parts.scheme != "http" or not parts.hostname:
            raise ConfigurationError(f"endpoint must be an http:// URL, got {endpoint!r}")
        self._host = parts.hostname
        self._port = parts.port or 80
        self._path_prefix = parts.path.rstrip("/")
        self.window = max(1, int(window))
        self.retries = retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self.request_count = 0  # requests that reached the wire (incl. retries)
        self._ids = itertools.count()
        self._local = threading.local()
        self._pool: ThreadPoolExecutor | None = None
        self._lock = threading.Lock()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def _connection(self) -> http.client.HTTPConnection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = http.client.HTTPConnection(self._host, self._port, timeout=self.timeout_s)
            self._local.conn = conn
        return conn

    def _drop_connection(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None

    def _roundtrip(self, method: str, path: str, body: bytes | None) -> tuple[int, bytes]:
        conn = self._connection()
        try:
            conn.request(method, self._path_prefix + path, body=body,
                         headers={"Content-Type": "application/json"})
            resp = conn.getresponse()
            payload = resp.read()
            return resp.status, payload
        except (http.client.HTTPException, ConnectionError, socket.timeout, OSError):
            self._drop_connection()
            raise

    def health(self) -> bool:
        try:
            status, payload = self._roundtrip("GET", "/v1/health", None)
            return status == 200 and json.loads(payload.decode("utf-8")).get("status") == "ok"
        except (http.client.HTTPException, OSError, ValueError):
            return False

    def measure(self, space_name: str, choices: Sequence[int]) -> float:
        with self._lock:
            request_id = f"req-{next(self._ids):08d}"
        body = json.dumps(
            {"request_id": request_id, "space_name": space_name, "choices": [int(c) for c in choices]}
        ).encode("utf-8")
        last_exc: Exception | None = None
        for attempt in range(self.retries):
            if attempt > 0:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            with self._lock:
                self.request_count += 1
            try:
                status, payload = self._roundtrip("POST", "/v1/measure", body)
            except (http.client.HTTPException, ConnectionError, socket.timeout, OSError) as exc:
                last_exc = exc
                continue
            if status == 400:
                try:
                    reason = json.loads(payload.decode("utf-8")).get("error", "")
                except ValueError:
                    reason = payload[:200].decode("utf-8", "replace")
                raise ProtocolError(f"measurement service rejected request: {reason}")
            if status != 200:
                last_exc = ProtocolError(f"unexpected HTTP status {status}")
                continue  # 5xx and friends: transient
            try:
                doc = json.loads(payload.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise ProtocolError(f"measurement response is not JSON: {payload[:200]!r}") from exc
            if doc.get("request_id") != request_id:
                raise ProtocolError(
                    f"response id {doc.get('request_id')!r} does not match request {request_id!r}"
                )
            latency = doc.get("latency_us")
            if not isinstance(latency, (int, float)) or isinstance(latency, bool):
                raise ProtocolError(f"latency_us missing or non-numeric in {payload[:200]!r}")
            return float(latency)
        raise TransportError(
            f"measurement endpoint {self.endpoint} unreachable after {self.retries} attempts: {last_exc}"
        )

    def measure_many(self, space_name: str, choices_list: Sequence[Sequence[int]]) -> list[float]:
        """Measure a batch; results align with the input order regardless of
        completion order (matched by position, ids verified per request)."""
        return self.measure_items([(space_name, c) for c in choices_list])

    def measure_items(self, items: Sequence[tuple[str, Sequence[int]]]) -> list[float]:
        """Batch variant over (space_name, choices) pairs, e.g. block slices."""
        if not items:
            return []
        if self.window == 1 or len(items) == 1:
            return [self.measure(name, c) for name, c in items]
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.window)
        futures = [self._pool.submit(self.measure, name, c) for name, c in items]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Latency providers


class CompositionalTableProvider:
    """Sums per-block latencies plus a stem+head figure.

    This is the lookup-table estimate: cheap, but blind to whole-model effects
    such as block fusion, so it can mis-rank models relative to the device.
    """

    def __init__(self, space: SearchSpace, table: dict[tuple[int, str], float], stem_head_us: float):
        self.space = space
        self.stem_head_us = float(stem_head_us)
        self._table = dict(table)
        self._cache: dict[tuple[int, ...], float] = {}
        for slot in space.slots:
            for opt in slot.options:
                if (slot.slot_index, opt.option_id) not in self._table:
                    raise ConfigurationError(
                        f"no measured latency for slot {slot.slot_index} option '{opt.option_id}'; "
                        "run `library measure` first"
                    )
        self.query_count = 0

    @classmethod
    def from_library(cls, library: BlockLibrary, space: SearchSpace) -> "CompositionalTableProvider":
        base = library.meta.get("measured_base_us")
        if base is None:
            raise ConfigurationError(
                "library carries no measured_base_us header; run `library measure` first"
            )
        table: dict[tuple[int, str], float] = {}
        for (slot_index, option_id), rec in library.records.items():
            if rec.cost_latency_us is None:
                raise ConfigurationError(
                    f"record (slot {slot_index}, option '{option_id}') has no latency; "
                    "run `library measure` first"
                )
            table[(slot_index, option_id)] = rec.cost_latency_us
        return cls(space=space, table=table, stem_head_us=float(base))

    def measure(self, genome: ModelGenome) -> float:
        key = genome.choices
        if key in self._cache:
            return self._cache[key]
        total = self.stem_head_us
        for slot, choice in zip(self.space.slots, genome.choices):
            total += self._table[(slot.slot_index, slot.options[choice].option_id)]
        self._cache[key] = total
        self.query_count += 1
        return total

    def measure_many(self, genomes: Sequence[ModelGenome]) -> list[float]:
        return [self.measure(g) for g in genomes]


class ServiceProvider:
    """Whole-model latency from a measurement endpoint (hardware in the loop).

    Results are cached per genome within a run: repeated queries for the same
    genome cost exactly one wire request. When the search runs over a filtered
    view, `wire_index` maps view option indices back to the original space the
    service was configured with.
    """

    def __init__(
        self,
        client: MeasurementClient,
        space_name: str,
        wire_index: Sequence[Sequence[int]] | None = None,
    ):
        self.client = client
        self.space_name = space_name
        self.wire_index = [tuple(row) for row in wire_index] if wire_index is not None else None
        self._cache: dict[tuple[int, ...], float] = {}
        self.query_count = 0

    def _wire_choices(self, genome: ModelGenome) -> list[int]:
        if self.wire_index is None:
            return list(genome.choices)
        return [self.wire_index[i][c] for i, c in enumerate(genome.choices)]

    def measure(self, genome: ModelGenome) -> float:
        key = genome.choices
        if key in self._cache:
            return self._cache[key]
        value = self.client.measure(self.space_name, self._wire_choices(genome))
        self._cache[key] = value
        self.query_count += 1
        return value

    def measure_many(self, genomes: Sequence[ModelGenome]) -> list[float]:
        pending: list[ModelGenome] = []
        seen: set[tuple[int, ...]] = set()
        for g in genomes:
            if g.choices not in self._cache and g.choices not in seen:
                seen.add(g.choices)
                pending.append(g)
        if pending:
            values = self.client.measure_many(self.space_name, [self._wire_choices(g) for g in pending])
            for g, v in zip(pending, values):
                self._cache[g.choices] = v
                self.query_count += 1
        return [self._cache[g.choices] for g in genomes]


# ---------------------------------------------------------------------------
# Evaluator shared by search and oracle


class CostEvaluator:
    """Computes (surrogate loss, CostVector) per genome with per-run caching.

    cost_kind selects the scalar objective: analytic MACs, or latency from the
    configured provider. Query accounting counts cache misses.
    """

    def __init__(
        self,
        space: SearchSpace,
        library: BlockLibrary,
        cost_kind: str = "macs",
        latency_provider=None,
    ):
        if cost_kind not in ("macs", "latency"):
            raise ConfigurationError(f"cost_kind must be macs or latency, got {cost_kind!r}")
        if cost_kind == "latency" and latency_provider is None:
            raise ConfigurationError("cost_kind=latency requires a latency provider")
        self.space = space
        self.library = library
        self.cost_kind = cost_kind
        self.provider = latency_provider
        self._cache: dict[tuple[int, ...], tuple[float, CostVector]] = {}
        self.query_count = 0

        n = space.num_slots
        mmax = max(space.option_counts()) if n else 0
        self._mse_table = np.zeros((n, mmax), dtype=np.float64)
        self._macs_table = np.zeros((n, mmax), dtype=np.int64)
        self._params_table = np.zeros((n, mmax), dtype=np.int64)
        for i, slot in enumerate(space.slots):
            for j, opt in enumerate(slot.options):
                self._mse_table[i, j] = library.mse(i, opt.option_id)
                self._macs_table[i, j] = macs_of_block(slot, opt)
                self._params_table[i, j] = params_of_block(slot, opt)
        self._base_macs = space.stem_cost_macs + space.head_cost_macs
        # int64 guard: the bulk kernel must not overflow on any genome
        worst = self._base_macs + int(self._macs_table.max(axis=1).sum()) if n else self._base_macs
        if worst >= 2 ** 62:
            raise ConfigurationError("model MACs too large for bulk evaluation kernels")

    def cost_scalar(self, cv: CostVector) -> float:
        if self.cost_kind == "macs":
            return float(cv.macs)
        assert cv.latency_us is not None
        return cv.latency_us

    def evaluate_many(self, genomes: Sequence[ModelGenome]) -> list[tuple[float, CostVector]]:
        pending: list[ModelGenome] = []
        seen: set[tuple[int, ...]] = set()
        for g in genomes:
            if g.choices not in self._cache and g.choices not in seen:
                seen.add(g.choices)
                pending.append(g)
        if pending:
            choices = np.array([g.choices for g in pending], dtype=np.int64)
            loss, macs = _kernels.eval_batch(choices, self._mse_table, self._macs_table, self._base_macs)
            slot_idx = np.arange(self.space.num_slots)[None, :]
            params = self._params_table[slot_idx, choices].sum(axis=1)
            latencies: list[float | None]
            if self.cost_kind == "latency":
                latencies = list(self.provider.measure_many(pending))
            else:
                latencies = [None] * len(pending)
            for idx, g in enumerate(pending):
                cv = CostVector(macs=int(macs[idx]), params=int(params[idx]), latency_us=latencies[idx])
                self._cache[g.choices] = (float(loss[idx]), cv)
                self.query_count += 1
        return [self._cache[g.choices] for g in genomes]

    def evaluate(self, genome: ModelGenome) -> tuple[float, CostVector]:
        return self.evaluate_many([genome])[0]

    def bulk_objectives(self, choices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(loss, cost) arrays for a (G, N) choices matrix, bypassing per-genome
        objects; used by the exhaustive oracle. Values match evaluate_many
        bit-for-bit (same kernel, same provider)."""
        choices = np.ascontiguousarray(choices, dtype=np.int64)
        loss, macs = _kernels.eval_batch(choices, self._mse_table, self._macs_table, self._base_macs)
        if self.cost_kind == "macs":
            cost = macs.astype(np.float64)
        else:
            genomes = [ModelGenome(choices=tuple(int(c) for c in row)) for row in choices]
            cost = np.array(self.provider.measure_many(genomes), dtype=np.float64)
        self.query_count += choices.shape[0]
        return loss, cost

    def surrogate_check(self, genome: ModelGenome) -> float:
        """Independent scalar recomputation (guards stale evaluations)."""
        return surrogate_loss(genome, self.library)
