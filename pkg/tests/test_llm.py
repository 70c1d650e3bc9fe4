import json
import os
import subprocess
import sys
import threading

import httpx
import pytest

from conftest import GOLDEN
from layoutforge.config import Config, RetryPolicy, config_from_dict, load_config
from layoutforge.errors import (
    CassetteMiss,
    CorruptCassette,
    NoStructureFound,
    RateLimited,
    TransportError,
    UnbalancedStructure,
    UnboundPlaceholder,
)
from layoutforge.llm import wire
from layoutforge.llm.gateway import (
    Cassette,
    DecodeParams,
    Gateway,
    LiveBackend,
    OracleRequest,
    RecordBackend,
    ReplayBackend,
    cassette_load,
    cassette_persist,
    complete,
    make_gateway,
)
from layoutforge.llm.jsonx import extract_json
from layoutforge.llm.templates import TEMPLATE_IDS, VERBATIM_IDS, get_template, render_prompt

# -- extract_json ---------------------------------------------------------------------


def test_fenced():
    assert extract_json('```json\n{"score": 87}\n```') == {"score": 87}


def test_prose():
    assert extract_json('Sure! {"a": 1} hope that helps') == {"a": 1}


def test_unbalanced():
    with pytest.raises(UnbalancedStructure):
        extract_json('{"a": ')


def test_nothing():
    with pytest.raises(NoStructureFound):
        extract_json("no json here")


def test_skips_non_json_braces_in_prose():
    assert extract_json('Layout: desk {length: 3px;} then [1, 2]') == [1, 2]


def test_braces_inside_strings():
    assert extract_json('x {"a": "}{", "b": [1]} y') == {"a": "}{", "b": [1]}


def test_invalid_outer_does_not_return_inner():
    with pytest.raises(NoStructureFound):
        extract_json('{"a": {"b": 1}, oops}')


def test_trailing_garbage_inside_structure():
    with pytest.raises(NoStructureFound):
        extract_json('{"a": 1 garbage}')


# -- templates ------------------------------------------------------------------------


def test_template_ids():
    assert set(VERBATIM_IDS) < set(TEMPLATE_IDS) and len(TEMPLATE_IDS) == 8
    for tid in TEMPLATE_IDS:
        assert get_template(tid).placeholders


def test_lifting_space_sentence():
    t = get_template("lifting")
    bindings = {k: "x" for k in t.placeholders} | {"max_length": 256}
    assert "The space is 256px long" in render_prompt("lifting", bindings)


def test_unbound():
    t = get_template("lifting")
    bindings = {k: "x" for k in t.placeholders if k != "bev_layout"}
    with pytest.raises(UnboundPlaceholder) as info:
        render_prompt("lifting", bindings)
    assert info.value.name == "bev_layout"


def test_render_deterministic_and_no_escaping():
    t = get_template("simple_reward")
    bindings = {k: "{max_length} & <tag> \\n" for k in t.placeholders}
    a, b = render_prompt("simple_reward", bindings), render_prompt("simple_reward", bindings)
    assert a == b
    assert "{max_length} & <tag> \\n" in a


def test_verbatim_templates_have_anchors():
    assert "lifting a 2D layout to a 3D layout" in get_template("lifting").body
    assert "four judgments correspond" in get_template("quant_eval").body
    assert "three judgments correspond" in get_template("spatial_eval").body


def test_goldens_exist():
    assert sorted(p.stem for p in GOLDEN.glob("*.txt")) == sorted(VERBATIM_IDS)


# -- requests & cassettes -----------------------------------------------------------------

def req(prompt="hello", role="bev_generator", seed=0, temperature=1.0, image=None):
    return OracleRequest(role, prompt, image, DecodeParams(temperature, 4096, seed))


def test_image_iff_spatial():
    with pytest.raises(ValueError):
        OracleRequest("spatial_evaluator", "x")
    with pytest.raises(ValueError):
        OracleRequest("quant_evaluator", "x", b"png")
    with pytest.raises(ValueError):
        OracleRequest("painter", "x")
    OracleRequest("spatial_evaluator", "x", b"png")


def test_digest_sensitivity():
    base = req()
    assert base.digest() == req().digest()
    assert base.digest() != req(seed=1).digest()
    assert base.digest() != req(temperature=0.0).digest()
    assert base.digest() != req(role="descriptor").digest()
    img = req(role="spatial_evaluator", image=b"a").digest()
    assert img != req(role="spatial_evaluator", image=b"b").digest()


def test_digest_stable_across_processes():
    code = ("from layoutforge.llm.gateway import OracleRequest, DecodeParams;"
            "print(OracleRequest('layout_lifter', 'p\\u00e9', None, DecodeParams(0.0, 10, 3)).digest())")
    env = dict(os.environ, PYTHONHASHSEED="123")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == OracleRequest("layout_lifter", "pé", None, DecodeParams(0.0, 10, 3)).digest()


def test_cassette_round_trip(tmp_path):
    c = Cassette()
    for i in range(3):
        c.put(req(f"p{i}").digest(), f"response {i} ✓\n\ttabs")
    path = tmp_path / "c.cas"
    cassette_persist(c, path)
    assert cassette_load(path) == c
    first = path.read_bytes()
    cassette_persist(cassette_load(path), path)
    assert path.read_bytes() == first
    digests = [ln.split(b"\t")[0] for ln in first.splitlines()]
    assert digests == sorted(digests)


def test_cassette_truncated(tmp_path):
    c = Cassette({req("a").digest(): "x", req("b").digest(): "y"})
    data = c.dumps()
    with pytest.raises(CorruptCassette) as info:
        Cassette.loads(data[:-5])
    assert info.value.offset == data.index(b"\n") + 1
    with pytest.raises(CorruptCassette):
        Cassette.loads(b"zz\tAAAA\n")
    with pytest.raises(CorruptCassette):
        Cassette.loads(data + data)


def test_cassette_append_only():
    c = Cassette()
    c.put("a" * 64, "one")
    c.put("a" * 64, "one")
    with pytest.raises(Exception):
        c.put("a" * 64, "two")


def test_replay_and_miss():
    r = req("lift me", role="layout_lifter", temperature=0.0)
    backend = ReplayBackend(Cassette({r.digest(): "stored é"}))
    assert complete(r, backend) == "stored é"
    with pytest.raises(CassetteMiss):
        complete(req("unseen"), backend)


# -- live & record --------------------------------------------------------------------------

class FakeEndpoint:
    def __init__(self, statuses=()):
        self.statuses = list(statuses)
        self.calls = 0
        self.bodies = []
        self.headers = []
        self.lock = threading.Lock()

    def __call__(self, request: httpx.Request) -> httpx.Response:
        with self.lock:
            self.calls += 1
            status = self.statuses.pop(0) if self.statuses else 200
        self.bodies.append(json.loads(request.content))
        self.headers.append(request.headers)
        if status != 200:
            return httpx.Response(status, text="nope")
        prompt, _ = wire.request_prompt(self.bodies[-1])
        return httpx.Response(200, json=wire.chat_response("echo: " + prompt))

    def client(self):
        return httpx.Client(transport=httpx.MockTransport(self))


def fast_config(**kw):
    return Config(retry=RetryPolicy(max_retries=3, backoff_base=0.01, timeout=5), **kw)


def test_live_call_and_wire_format(monkeypatch):
    monkeypatch.setenv("LAYOUTFORGE_API_KEY", "sk-test")
    ep = FakeEndpoint()
    backend = LiveBackend(fast_config(), ep.client(), sleep=lambda s: None)
    png = b"\x89PNG..."
    assert backend.complete(req("look", role="spatial_evaluator", image=png)) == "echo: look"
    body = ep.bodies[0]
    assert body["model"] == "gpt-4o" and body["seed"] == 0
    assert wire.request_prompt(body) == ("look", png)
    assert ep.headers[0]["authorization"] == "Bearer sk-test"


def test_key_only_from_named_env(monkeypatch):
    monkeypatch.delenv("LAYOUTFORGE_API_KEY", raising=False)
    monkeypatch.setenv("OTHER_KEY", "sk-other")
    ep = FakeEndpoint()
    LiveBackend(fast_config(api_key_env="OTHER_KEY"), ep.client()).complete(req())
    assert ep.headers[0]["authorization"] == "Bearer sk-other"
    with pytest.raises(ValueError):
        config_from_dict({"api_key": "sk-inline"})


def test_retries_then_success():
    ep = FakeEndpoint([500, 429, 200])
    sleeps = []
    backend = LiveBackend(fast_config(), ep.client(), sleep=sleeps.append)
    assert backend.complete(req("x")) == "echo: x"
    assert ep.calls == 3
    assert sleeps == [0.01, 0.02]


def test_rate_limited_after_retries():
    ep = FakeEndpoint([429] * 10)
    backend = LiveBackend(fast_config(), ep.client(), sleep=lambda s: None)
    with pytest.raises(RateLimited):
        backend.complete(req())
    assert ep.calls == 4


def test_server_error_after_retries():
    ep = FakeEndpoint([503] * 10)
    with pytest.raises(TransportError):
        LiveBackend(fast_config(), ep.client(), sleep=lambda s: None).complete(req())


def test_client_error_not_retried():
    ep = FakeEndpoint([400])
    with pytest.raises(TransportError):
        LiveBackend(fast_config(), ep.client(), sleep=lambda s: None).complete(req())
    assert ep.calls == 1


def test_transport_failure():
    def boom(request):
        raise httpx.ConnectError("down")

    client = httpx.Client(transport=httpx.MockTransport(boom))
    with pytest.raises(TransportError):
        LiveBackend(fast_config(), client, sleep=lambda s: None).complete(req())


def test_record_twice_single_network_call(tmp_path):
    ep = FakeEndpoint()
    path = tmp_path / "rec.cas"
    gw = make_gateway("record", fast_config(), path, ep.client())
    r = req("same")
    assert gw.complete(r) == gw.complete(r) == "echo: same"
    assert ep.calls == 1
    assert gw.calls["bev_generator"] == 2
    replay = make_gateway("replay", fast_config(), path)
    assert replay.complete(r) == "echo: same"


def test_record_persists_each_call(tmp_path):
    ep = FakeEndpoint()
    path = tmp_path / "rec.cas"
    backend = RecordBackend(LiveBackend(fast_config(), ep.client()), Cassette(), path)
    backend.complete(req("a"))
    backend.complete(req("b"))
    assert len(Cassette.load(path)) == 2


def test_in_flight_cap():
    active, peak = [0], [0]
    lock = threading.Lock()
    gate = threading.Event()

    def handler(request):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        gate.wait(0.05)
        with lock:
            active[0] -= 1
        return httpx.Response(200, json=wire.chat_response("ok"))

    backend = LiveBackend(fast_config(max_in_flight=2), httpx.Client(transport=httpx.MockTransport(handler)))
    threads = [threading.Thread(target=backend.complete, args=(req(str(i)),)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] <= 2


def test_gateway_decode_uses_role_config():
    gw = Gateway(ReplayBackend(Cassette()), Config(seed=9))
    assert gw.decode("bev_generator") == DecodeParams(1.0, 4096, 9)
    assert gw.decode("quant_evaluator", 2) == DecodeParams(0.0, 4096, 2)


def test_make_gateway_modes(tmp_path):
    with pytest.raises(ValueError):
        make_gateway("replay", Config(), None)
    with pytest.raises(ValueError):
        make_gateway("psychic", Config(), None)


def test_load_config_search_order(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert load_config() == Config()
    (tmp_path / "layoutforge.config").write_text(json.dumps({"max_iters": 5, "roles": {"descriptor": {"model": "m"}}}))
    cfg = load_config()
    assert cfg.max_iters == 5 and cfg.role("descriptor").model == "m"
    explicit = tmp_path / "other.json"
    explicit.write_text(json.dumps({"max_iters": 1}))
    assert load_config(explicit).max_iters == 1
