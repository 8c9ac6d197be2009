"""Client for an external chat-completions-style endpoint serving the
fine-tuned model. The request body layout is golden-file tested, so it is
serialized canonically (sorted keys, no whitespace)."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import httpx

from .errors import UpstreamError, UpstreamTimeoutError

BACKOFF_BASE_S = 0.5
BACKOFF_FACTOR = 2.0


@dataclass(frozen=True)
class ExternalConfig:
    base_url: str
    api_key: str | None = None
    model: str = "biomech-adapter"
    timeout_s: float = 30.0
    max_retries: int = 3


def build_request_body(prompt: str, model: str) -> str:
    """Canonical JSON body: the formatted prompt as a single user message."""
    return json.dumps(
        {
            "messages": [{"role": "user", "content": prompt}],
            "model": model,
            "temperature": 0,
        },
        sort_keys=True,
        separators=(",", ":"),
    )


def external_complete(config: ExternalConfig, formatted_prompt: str, *,
                      client: httpx.Client | None = None, sleep=time.sleep) -> str:
    """POST the prompt; return the first choice's message content.

    Retries transport failures and 5xx responses with exponential backoff
    (base 0.5 s, factor 2) up to max_retries. The API key goes into the
    Authorization header and is never logged or echoed in errors.
    """
    url = config.base_url.rstrip("/") + "/v1/chat/completions"
    headers = {"content-type": "application/json"}
    if config.api_key:
        headers["authorization"] = f"Bearer {config.api_key}"
    body = build_request_body(formatted_prompt, config.model)

    own_client = client is None
    client = client or httpx.Client(timeout=config.timeout_s)
    last_status: int | None = None
    last_timeout = False
    try:
        for attempt in range(config.max_retries + 1):
            try:
                resp = client.post(url, content=body, headers=headers,
                                   timeout=config.timeout_s)
            except httpx.TimeoutException:
                last_timeout = True
                last_status = None
            except httpx.TransportError:
                last_timeout = False
                last_status = None
            else:
                if 200 <= resp.status_code < 300:
                    payload = resp.json()
                    try:
                        return payload["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, TypeError) as exc:
                        raise UpstreamError("malformed completion payload",
                                            status=resp.status_code) from exc
                last_status = resp.status_code
                last_timeout = False
                if resp.status_code < 500:
                    raise UpstreamError(f"endpoint returned {resp.status_code}",
                                        status=resp.status_code)
            if attempt < config.max_retries:
                sleep(BACKOFF_BASE_S * BACKOFF_FACTOR ** attempt)
        if last_timeout:
            raise UpstreamTimeoutError(f"timed out after {config.max_retries + 1} attempts")
        raise UpstreamError(
            f"upstream failed after {config.max_retries + 1} attempts"
            + (f" (last status {last_status})" if last_status else ""),
            status=last_status)
    finally:
        if own_client:
            client.close()
