import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import httpx
import pytest

from faithcheck.gateway import (
    ChatClient,
    ExhaustedRetries,
    FatalStatus,
    GenerationParams,
    MissingCredentials,
    RemoteClientConfig,
    RequestTimeout,
)
from faithcheck.gateway.remote import completion_response

KEY = "FAITHCHECK_TEST_KEY"


def scripted(statuses, content="ok"):
    """Transport returning the given statuses in order, then 200s; records requests."""
    seen = []

    def handler(request):
        seen.append(request)
        status = statuses[len(seen) - 1] if len(seen) <= len(statuses) else 200
        if status == "timeout":
            raise httpx.ReadTimeout("slow", request=request)
        if status == 200:
            return completion_response(content)
        return httpx.Response(status, json={"error": "x"})

    return httpx.MockTransport(handler), seen


def client(transport, max_retries=3, **kw):
    cfg = RemoteClientConfig(base_url="https://api.example.test/v1", api_key_env=KEY, model_name="m",
                             max_retries=max_retries, backoff_base=0.5, **kw)
    sleeps = []
    return ChatClient(cfg, transport=transport, sleep=sleeps.append), sleeps


@pytest.fixture(autouse=True)
def api_key(monkeypatch):
    monkeypatch.setenv(KEY, "secret")


def test_two_failures_then_success():
    t, seen = scripted([500, 429])
    c, sleeps = client(t, max_retries=3)
    assert c.complete("hi", GenerationParams()) == "ok"
    assert len(seen) == 3 and c.attempts == 3
    assert len(sleeps) == 2
    # full jitter: attempt n waits in [0, base * 2**(n-1)]
    assert 0 <= sleeps[0] <= 0.5 and 0 <= sleeps[1] <= 1.0


def test_always_failing_exhausts():
    t, seen = scripted([503] * 10)
    c, _ = client(t, max_retries=2)
    with pytest.raises(ExhaustedRetries) as e:
        c.complete("hi", GenerationParams())
    assert len(seen) == 3
    assert e.value.attempts == 3 and e.value.last_status == 503


def test_timeouts_raise_timeout():
    t, seen = scripted(["timeout"] * 5)
    c, _ = client(t, max_retries=1)
    with pytest.raises(RequestTimeout):
        c.complete("hi", GenerationParams())
    assert len(seen) == 2


def test_client_error_is_fatal():
    t, seen = scripted([400])
    c, _ = client(t)
    with pytest.raises(FatalStatus) as e:
        c.complete("hi", GenerationParams())
    assert e.value.status == 400 and len(seen) == 1


def test_missing_key_makes_no_request(monkeypatch):
    monkeypatch.delenv(KEY)
    t, seen = scripted([])
    c, _ = client(t)
    with pytest.raises(MissingCredentials):
        c.complete("hi", GenerationParams())
    assert seen == []


def test_wire_format():
    t, seen = scripted([])
    c, _ = client(t)
    c.complete("question", GenerationParams(temperature=0.6, max_new_tokens=9, seed=4, stop_sequences=("</a>",)))
    req = seen[0]
    assert req.url.path.endswith("/chat/completions")
    assert req.headers["authorization"] == "Bearer secret"
    body = json.loads(req.content)
    assert body == {"model": "m", "messages": [{"role": "user", "content": "question"}], "temperature": 0.6,
                    "max_tokens": 9, "seed": 4, "stop": ["</a>"]}


def test_concurrency_bound():
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.02)
        with lock:
            state["now"] -= 1
        return completion_response("ok")

    c, _ = client(httpx.MockTransport(handler), max_concurrency=2)
    with ThreadPoolExecutor(8) as pool:
        list(pool.map(lambda i: c.complete(str(i), GenerationParams()), range(16)))
    assert state["peak"] <= 2


@pytest.mark.parametrize("bad", [dict(max_retries=-1), dict(max_concurrency=0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        RemoteClientConfig(**bad)


def test_offline_endpoints_need_no_key(monkeypatch):
    monkeypatch.delenv(KEY)
    c = ChatClient(RemoteClientConfig(base_url="mock://judge", api_key_env=KEY, model_name="j"))
    out = json.loads(c.complete("anything", GenerationParams()))
    assert set(out) == {"readability", "helpfulness", "informativeness"}
