import json
import socket
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from blocknas.costs import (
    CompositionalTableProvider,
    CostEvaluator,
    MeasurementClient,
    ServiceProvider,
    macs_of_model,
    measure_latency,
)
from blocknas.errors import ProtocolError, TransportError
from blocknas.library import SynthProfile, synth_library, with_latencies
from blocknas.mock_device import (
    LATENCY_GRID_US,
    MockDeviceConfig,
    MockDeviceModel,
    serve_mock_device,
    snap_to_grid,
)
from blocknas.space import ModelGenome, enumerate_genomes

from builders import GR, chain_space, medium_space, opt, small_space_2x4


@pytest.fixture()
def server():
    space = small_space_2x4()
    cfg = MockDeviceConfig(seed=3, base_us=200.0, fusion_us=2.5)
    with serve_mock_device(cfg, [space]) as srv:
        yield srv, space


def client_for(srv, **kw):
    kw.setdefault("backoff_s", 0.01)
    return MeasurementClient(srv.endpoint, **kw)


def test_health_and_config(server):
    srv, _ = server
    client = client_for(srv)
    assert client.health()
    client.close()


def test_measure_roundtrip_and_determinism(server):
    srv, space = server
    client = client_for(srv)
    a = client.measure(space.name, [1, 2])
    b = client.measure(space.name, [1, 2])
    assert a == b
    model = MockDeviceModel(MockDeviceConfig(seed=3, base_us=200.0, fusion_us=2.5), [space])
    assert a == model.latency_us(space.name, [1, 2])
    client.close()


def test_zero_block_model_returns_base(server):
    srv, space = server
    client = client_for(srv)
    assert client.measure(f"{space.name}@base", []) == snap_to_grid(200.0)
    client.close()


def test_malformed_requests_rejected_with_400(server):
    srv, space = server
    client = client_for(srv)
    with pytest.raises(ProtocolError, match="unknown space"):
        client.measure("nope", [0, 0])
    with pytest.raises(ProtocolError, match="choices length"):
        client.measure(space.name, [0])
    with pytest.raises(ProtocolError, match="out of range"):
        client.measure(space.name, [0, 99])
    client.close()

    import http.client

    conn = http.client.HTTPConnection("127.0.0.1", srv.port, timeout=5)
    conn.request("POST", "/v1/measure", body=b"{not json",
                 headers={"Content-Type": "application/json"})
    resp = conn.getresponse()
    assert resp.status == 400
    assert "error" in json.loads(resp.read())
    conn.request("POST", "/v1/measure", body=json.dumps({"request_id": 5, "space_name": "x", "choices": []}).encode(),
                 headers={"Content-Type": "application/json"})
    resp = conn.getresponse()
    assert resp.status == 400
    conn.close()


def test_response_carries_protocol_fields(server):
    srv, space = server
    import http.client

    conn = http.client.HTTPConnection("127.0.0.1", srv.port, timeout=5)
    body = json.dumps({"request_id": "abc", "space_name": space.name, "choices": [0, 0]})
    conn.request("POST", "/v1/measure", body=body.encode(),
                 headers={"Content-Type": "application/json"})
    doc = json.loads(conn.getresponse().read())
    assert doc["request_id"] == "abc"
    assert isinstance(doc["latency_us"], float)
    assert doc["energy_mj"] is None and doc["cycles"] is None
    conn.close()


def test_swish_adder_is_two_us_per_cell():
    space = medium_space()
    model = MockDeviceModel(MockDeviceConfig(seed=0), [space])
    slot = space.slots[0]
    i_mother = 0
    i_swish = [o.option_id for o in slot.options].index("mswish")
    assert macs_of_model(ModelGenome((i_mother,) * 5), space).macs  # sanity
    lat_relu = model.block_latency_us(slot, i_mother)
    lat_swish = model.block_latency_us(slot, i_swish)
    depth = slot.options[i_swish].depth
    assert lat_swish - lat_relu == snap_to_grid(2.0 * depth)


def test_fusion_discount_exact_per_adjacency():
    options = (opt("dw"), opt("gw", layer_type=GR))
    space = chain_space("fuse", [(8, 8, (8, 8), 1)] * 3, options)
    fused = MockDeviceModel(MockDeviceConfig(seed=0, fusion_us=2.5), [space])
    plain = MockDeviceModel(MockDeviceConfig(seed=0, fusion_us=0.0), [space])
    for choices, adjacencies in [((0, 0, 0), 2), ((0, 0, 1), 1), ((0, 1, 0), 0), ((1, 1, 1), 2)]:
        delta = plain.latency_us("fuse", choices) - fused.latency_us("fuse", choices)
        assert delta == snap_to_grid(2.5) * adjacencies


def test_zero_fusion_recovers_additivity():
    # with fusion off and noise off, the service equals the compositional sum
    space = small_space_2x4()
    cfg = MockDeviceConfig(seed=7, base_us=150.0, fusion_us=0.0)
    model = MockDeviceModel(cfg, [space])
    for g in enumerate_genomes(space):
        total = model.config.base_us
        for slot, c in zip(space.slots, g.choices):
            total += model.block_latency_us(slot, c)
        assert model.latency_us(space.name, list(g.choices)) == total


def test_noise_is_seeded_and_request_stable():
    space = small_space_2x4()
    noisy = MockDeviceModel(MockDeviceConfig(seed=5, noise_us=3.0), [space])
    a = noisy.latency_us(space.name, [1, 1])
    assert a == noisy.latency_us(space.name, [1, 1])
    other_seed = MockDeviceModel(MockDeviceConfig(seed=6, noise_us=3.0), [space])
    assert a != other_seed.latency_us(space.name, [1, 1])
    quiet = MockDeviceModel(MockDeviceConfig(seed=5, noise_us=0.0), [space])
    assert a != quiet.latency_us(space.name, [1, 1])


def test_latency_values_sit_on_grid(server):
    srv, space = server
    client = client_for(srv)
    value = client.measure(space.name, [3, 3])
    assert value == round(value / LATENCY_GRID_US) * LATENCY_GRID_US
    client.close()


def test_transport_error_after_retries():
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()  # nothing listens here now
    client = MeasurementClient(f"http://127.0.0.1:{port}", retries=3, backoff_s=0.01)
    t0 = time.perf_counter()
    with pytest.raises(TransportError, match="after 3 attempts"):
        client.measure("x", [0])
    assert time.perf_counter() - t0 >= 0.01 + 0.02  # exponential backoff happened
    assert client.request_count == 3
    client.close()


def test_request_id_mismatch_raises_protocol_error():
    class RogueHandler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def do_POST(self):
            body = json.dumps({"request_id": "wrong", "latency_us": 1.0,
                               "energy_mj": None, "cycles": None}).encode()
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    httpd = HTTPServer(("127.0.0.1", 0), RogueHandler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    try:
        client = MeasurementClient(f"http://127.0.0.1:{httpd.server_address[1]}", backoff_s=0.01)
        with pytest.raises(ProtocolError, match="does not match"):
            client.measure("x", [0])
        client.close()
    finally:
        httpd.shutdown()
        httpd.server_close()


def test_latency_cache_one_wire_request_per_genome(server):
    srv, space = server
    client = client_for(srv)
    provider = ServiceProvider(client, space.name)
    g = ModelGenome((1, 2))
    before = srv.measure_requests
    measure_latency(g, provider)
    measure_latency(g, provider)
    provider.measure_many([g, g, g])
    assert srv.measure_requests - before == 1
    assert provider.query_count == 1
    client.close()


def test_concurrent_window_matches_sequential(server):
    srv, space = server
    genomes = [ModelGenome(c) for c in [(0, 0), (1, 1), (2, 2), (3, 3), (1, 3), (3, 1)]]
    seq_client = client_for(srv, window=1)
    seq = ServiceProvider(seq_client, space.name).measure_many(genomes)
    par_client = client_for(srv, window=8)
    par = ServiceProvider(par_client, space.name).measure_many(genomes)
    assert seq == par
    seq_client.close()
    par_client.close()


def test_block_slice_measurement_and_compositional_provider(server):
    srv, space = server
    client = client_for(srv)
    library = synth_library(space, SynthProfile(), rng_seed=1)
    base = client.measure(f"{space.name}@base", [])
    latencies = {}
    for slot in space.slots:
        for j, o in enumerate(slot.options):
            raw = client.measure(f"{space.name}@slot/{slot.slot_index}", [j])
            latencies[(slot.slot_index, o.option_id)] = raw - base
    measured = with_latencies(library, latencies, base)
    provider = CompositionalTableProvider.from_library(measured, space)

    # per-block table entries match the model's published block formula
    model = MockDeviceModel(MockDeviceConfig(seed=3, base_us=200.0, fusion_us=2.5), [space])
    for slot in space.slots:
        for j, o in enumerate(slot.options):
            assert latencies[(slot.slot_index, o.option_id)] == model.block_latency_us(slot, j)

    # compositional = stem/head + block sums; fusion makes the service cheaper
    # by exactly fusion * adjacencies
    service = ServiceProvider(client, space.name)
    fusion = model.config.fusion_us
    for g in [ModelGenome((0, 0)), ModelGenome((1, 2)), ModelGenome((3, 3))]:
        comp = provider.measure(g)
        svc = service.measure(g)
        lt = [space.slots[i].options[c].layer_type for i, c in enumerate(g.choices)]
        adj = sum(1 for a, b in zip(lt, lt[1:]) if a == b)
        assert comp - svc == fusion * adj
    client.close()


def test_compositional_example_sum():
    options = (opt("mother"),)
    space = chain_space("sum", [(8, 8, (8, 8), 1)] * 2, options)
    table = {(0, "mother"): 10.0, (1, "mother"): 20.0}
    provider = CompositionalTableProvider(space, table, stem_head_us=10.0)
    # stem 5 + head 5 folded into one stem_head figure per the provider contract
    assert provider.measure(ModelGenome((0, 0))) == 40.0


def test_evaluator_latency_kind(server):
    srv, space = server
    client = client_for(srv)
    library = synth_library(space, SynthProfile(), rng_seed=1)
    provider = ServiceProvider(client, space.name)
    ev = CostEvaluator(space, library, "latency", latency_provider=provider)
    surrogate, cv = ev.evaluate(ModelGenome((1, 1)))
    assert cv.latency_us == client.measure(space.name, [1, 1])
    assert cv.latency_us is not None and cv.macs > 0
    client.close()
