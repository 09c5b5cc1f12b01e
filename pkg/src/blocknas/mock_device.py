"""Mock hardware measurement service speaking the device-farm wire protocol.

Protocol (what a real adapter must implement):
    POST /v1/measure   {"request_id": str, "space_name": str, "choices": [int]}
        -> 200 {"request_id": str, "latency_us": number, "energy_mj": null,
                "cycles": null}
        -> 400 {"error": str} on malformed requests
    GET  /v1/health    -> {"status": "ok"}

Latency model: base + sum of per-block latencies - fusion * (number of
adjacent same-layer-type block pairs) + optional seeded noise. A block's
latency is affine in its MACs (a * macs + b) plus a fixed per-cell adder for
swish activations. The fusion discount is what makes whole-model latency
deliberately non-additive: a per-block lookup table systematically
over-estimates models with fusable neighborhoods.

All latencies are quantized to a 2^-20 us grid. Sums and differences of grid
multiples are exact in float64, so "compositional minus measured equals fusion
times adjacency count" holds as exact arithmetic, not approximately.

Space addressing: the service is configured with space files and resolves
"NAME" to the whole model, "NAME@slot/3" to the single-block model of slot 3
(choices carry exactly one index), and "NAME@base" to the zero-block model
(empty choices), which returns the base latency alone. The slice forms are how
per-block latencies are measured through the unchanged wire protocol.

Determinism: noise is seeded per request from (service seed, space_name,
choices), so concurrent connections cannot perturb results.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Sequence

from .costs import macs_of_block
from .errors import ConfigurationError
from .space import BlockSlot, SearchSpace

LATENCY_GRID_US = 2.0 ** -20


def snap_to_grid(value_us: float) -> float:
    """Quantize to the 2^-20 us grid that keeps float sums exact."""
    return round(value_us / LATENCY_GRID_US) * LATENCY_GRID_US


@dataclass(frozen=True)
class MockDeviceConfig:
    port: int = 0  # 0 picks an ephemeral port
    host: str = "127.0.0.1"
    seed: int = 0
    base_us: float = 200.0
    fusion_us: float = 0.0
    macs_to_us: float = 2e-4  # a: microseconds per MAC
    per_block_overhead_us: float = 15.0  # b: fixed cost per block
    swish_adder_us: float = 2.0  # per cell, swish only
    noise_us: float = 0.0  # uniform [0, noise_us); default off for reproducibility

    def effective(self) -> "MockDeviceConfig":
        """Grid-snapped copy; the snapped values are the published formula."""
        return MockDeviceConfig(
            port=self.port,
            host=self.host,
            seed=self.seed,
            base_us=snap_to_grid(self.base_us),
            fusion_us=snap_to_grid(self.fusion_us),
            macs_to_us=self.macs_to_us,
            per_block_overhead_us=self.per_block_overhead_us,
            swish_adder_us=self.swish_adder_us,
            noise_us=self.noise_us,
        )


class MockDeviceModel:
    """Pure latency model behind the HTTP front; usable directly in tests."""

    def __init__(self, config: MockDeviceConfig, spaces: Sequence[SearchSpace]):
        self.config = config.effective()
        self.spaces = {s.name: s for s in spaces}
        if len(self.spaces) != len(spaces):
            raise ConfigurationError("duplicate space names registered with the mock device")
        # registration-time table keeps the per-request path allocation-light
        self._block_lat: dict[tuple[str, int, int], float] = {}
        for space in spaces:
            for slot in space.slots:
                for j, option in enumerate(slot.options):
                    raw = (
                        self.config.macs_to_us * macs_of_block(slot, option)
                        + self.config.per_block_overhead_us
                        + (self.config.swish_adder_us * option.depth
                           if option.activation == "swish" else 0.0)
                    )
                    self._block_lat[(space.name, slot.slot_index, j)] = snap_to_grid(raw)

    def block_latency_us(self, slot: BlockSlot, option_index: int) -> float:
        option = slot.options[option_index]
        raw = (
            self.config.macs_to_us * macs_of_block(slot, option)
            + self.config.per_block_overhead_us
            + (self.config.swish_adder_us * option.depth if option.activation == "swish" else 0.0)
        )
        return snap_to_grid(raw)

    def _noise(self, space_name: str, choices: Sequence[int]) -> float:
        if self.config.noise_us <= 0:
            return 0.0
        key = f"{self.config.seed}|{space_name}|{','.join(str(c) for c in choices)}"
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        u = int.from_bytes(digest[:8], "big") / 2 ** 64
        return snap_to_grid(u * self.config.noise_us)

    def _resolve(self, space_name: str) -> tuple[SearchSpace, list[BlockSlot]]:
        name, sep, suffix = space_name.partition("@")
        if name not in self.spaces:
            raise ValueError(f"unknown space '{name}'")
        space = self.spaces[name]
        if not sep:
            return space, list(space.slots)
        if suffix == "base":
            return space, []
        if suffix.startswith("slot/"):
            try:
                idx = int(suffix[len("slot/"):])
            except ValueError:
                raise ValueError(f"bad slot slice '{space_name}'") from None
            if not (0 <= idx < space.num_slots):
                raise ValueError(f"slot {idx} out of range for space '{name}'")
            return space, [space.slots[idx]]
        raise ValueError(f"bad space address '{space_name}'")

    def latency_us(self, space_name: str, choices: Sequence[int]) -> float:
        space, slots = self._resolve(space_name)
        if len(choices) != len(slots):
            raise ValueError(
                f"choices length {len(choices)} does not match {len(slots)} slots of '{space_name}'"
            )
        chosen = []
        for slot, c in zip(slots, choices):
            if not (0 <= c < len(slot.options)):
                raise ValueError(f"choice {c} out of range for slot {slot.slot_index}")
            chosen.append((slot, c))
        total = self.config.base_us
        for slot, c in chosen:
            total += self._block_lat[(space.name, slot.slot_index, c)]
        if self.config.fusion_us > 0.0:
            adjacencies = 0
            for (s1, c1), (s2, c2) in zip(chosen, chosen[1:]):
                if s1.options[c1].layer_type == s2.options[c2].layer_type:
                    adjacencies += 1
            total -= self.config.fusion_us * adjacencies
        total += self._noise(space_name, choices)
        return total


class MockDeviceServer:
    """Threaded HTTP server wrapping MockDeviceModel; concurrent-safe."""

    def __init__(self, config: MockDeviceConfig, spaces: Sequence[SearchSpace]):
        self.model = MockDeviceModel(config, spaces)
        self.measure_requests = 0
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):  # keep test output clean
                pass

            def _send(self, code: int, doc: dict) -> None:
                body = json.dumps(doc).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/v1/health":
                    self._send(200, {"status": "ok"})
                elif self.path == "/v1/config":
                    cfg = server.model.config
                    self._send(200, {
                        "seed": cfg.seed,
                        "base_us": cfg.base_us,
                        "fusion_us": cfg.fusion_us,
                        "macs_to_us": cfg.macs_to_us,
                        "per_block_overhead_us": cfg.per_block_overhead_us,
                        "swish_adder_us": cfg.swish_adder_us,
                        "noise_us": cfg.noise_us,
                        "spaces": sorted(server.model.spaces),
                    })
                elif self.path == "/v1/stats":
                    with server._lock:
                        count = server.measure_requests
                    self._send(200, {"measure_requests": count})
                else:
                    self._send(404, {"error": f"unknown path {self.path}"})

            def do_POST(self):
                if self.path != "/v1/measure":
                    self._send(404, {"error": f"unknown path {self.path}"})
                    return
                with server._lock:
                    server.measure_requests += 1
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    doc = json.loads(self.rfile.read(length).decode("utf-8"))
                except (ValueError, UnicodeDecodeError) as exc:
                    self._send(400, {"error": f"request body is not valid JSON: {exc}"})
                    return
                if not isinstance(doc, dict):
                    self._send(400, {"error": "request body must be a JSON object"})
                    return
                request_id = doc.get("request_id")
                space_name = doc.get("space_name")
                choices = doc.get("choices")
                if not isinstance(request_id, str):
                    self._send(400, {"error": "request_id must be a string"})
                    return
                if not isinstance(space_name, str):
                    self._send(400, {"error": "space_name must be a string"})
                    return
                if not isinstance(choices, list) or not all(
                    isinstance(c, int) and not isinstance(c, bool) for c in choices
                ):
                    self._send(400, {"error": "choices must be an array of integers"})
                    return
                try:
                    latency = server.model.latency_us(space_name, choices)
                except ValueError as exc:
                    self._send(400, {"error": str(exc)})
                    return
                self._send(200, {
                    "request_id": request_id,
                    "latency_us": latency,
                    "energy_mj": None,
                    "cycles": None,
                })

        self._httpd = ThreadingHTTPServer((config.host, config.port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        host = self._httpd.server_address[0]
        return f"http://{host}:{self.port}"

    def start(self) -> "MockDeviceServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MockDeviceServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.shutdown()


def serve_mock_device(config: MockDeviceConfig, spaces: Sequence[SearchSpace]) -> MockDeviceServer:
    """Build a server bound to config.port; call .start() or .serve_forever()."""
    return MockDeviceServer(config, spaces)
