import json
from pathlib import Path

import httpx
import pytest

from biomech.errors import UpstreamError, UpstreamTimeoutError
from biomech.external import ExternalConfig, build_request_body, external_complete

GOLDEN = Path(__file__).parent / "golden"


def completion(text: str) -> dict:
    return {"choices": [{"message": {"role": "model", "content": text}}]}


def make_client(handler) -> httpx.Client:
    return httpx.Client(transport=httpx.MockTransport(handler))


def config(**kw):
    defaults = dict(base_url="http://testserver", max_retries=2, timeout_s=1.0)
    defaults.update(kw)
    return ExternalConfig(**defaults)


class TestRequestBody:
    def test_matches_golden_file(self):
        prompt = ("<start_of_turn>user\n<motion_start><motion_17><motion_3><motion_42>"
                  "<motion_end> What is this person doing?\n<start_of_turn>model\n")
        body = build_request_body(prompt, "biomech-adapter")
        assert body.encode() == (GOLDEN / "external_request.json").read_bytes()

    def test_single_user_message(self):
        body = json.loads(build_request_body("hello", "m"))
        assert body["messages"] == [{"role": "user", "content": "hello"}]


class TestCompletion:
    def test_passthrough(self):
        def handler(request):
            assert request.url.path == "/v1/chat/completions"
            payload = json.loads(request.content)
            assert payload["messages"][0]["role"] == "user"
            return httpx.Response(200, json=completion("Stroke"))

        out = external_complete(config(), "prompt", client=make_client(handler))
        assert out == "Stroke"

    def test_api_key_in_authorization_header(self):
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json=completion("ok"))

        external_complete(config(api_key="sekrit"), "p", client=make_client(handler))
        assert seen["auth"] == "Bearer sekrit"

    def test_404_raises_with_status(self):
        client = make_client(lambda request: httpx.Response(404, json={"error": "no"}))
        with pytest.raises(UpstreamError) as err:
            external_complete(config(), "p", client=client, sleep=lambda s: None)
        assert err.value.status == 404

    def test_5xx_retried_then_succeeds(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] < 3:
                return httpx.Response(503, json={"error": "busy"})
            return httpx.Response(200, json=completion("recovered"))

        sleeps = []
        out = external_complete(config(), "p", client=make_client(handler),
                                sleep=sleeps.append)
        assert out == "recovered"
        assert calls["n"] == 3
        assert sleeps == [0.5, 1.0]  # exponential backoff, base 0.5, factor 2

    def test_5xx_exhausted_raises_final_status(self):
        client = make_client(lambda request: httpx.Response(502, json={}))
        with pytest.raises(UpstreamError) as err:
            external_complete(config(), "p", client=client, sleep=lambda s: None)
        assert err.value.status == 502

    def test_timeout_raises_timeout_error(self):
        def handler(request):
            raise httpx.ReadTimeout("slow")

        with pytest.raises(UpstreamTimeoutError):
            external_complete(config(), "p", client=make_client(handler),
                              sleep=lambda s: None)

    def test_transport_error_retried(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] == 1:
                raise httpx.ConnectError("refused")
            return httpx.Response(200, json=completion("after retry"))

        out = external_complete(config(), "p", client=make_client(handler),
                                sleep=lambda s: None)
        assert out == "after retry"

    def test_malformed_payload(self):
        client = make_client(lambda request: httpx.Response(200, json={"choices": []}))
        with pytest.raises(UpstreamError):
            external_complete(config(), "p", client=client, sleep=lambda s: None)
