"""Prompt construction, verdict parsing, and critic backends.

A critic receives one rendered plot plus an instruction prompt and must
answer through the tag protocol: `<answer> 1 </answer>` for a reasonable
forecast, `<answer> 2 </answer>` for an unreasonable one. Backends are
either a real multimodal HTTP endpoint (chat-style JSON with one text part
and one base64 image part) or a scripted mock for offline, reproducible runs.
"""

from __future__ import annotations

import base64
import collections
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import (
    BackendError,
    ConfigError,
    ParameterError,
    TransientBackendError,
    UnparseableVerdictError,
)
from .metrics import REASONABLE, UNREASONABLE

# The two-option answer block every prompt ends with, verbatim.
ANSWER_OPTIONS = (
    "<answer> 1 </answer> — The forecast is reasonable.\n"
    "<answer> 2 </answer> — The forecast is unreasonable."
)

_POINT_BODY = (
    "You are shown an image of historical data (in black) and a forecast (in blue). "
    "Based on the historical trend, assess whether the forecast is reasonable. "
    "A reasonable forecast should generally follow the same direction and capture "
    "any seasonal trends if there are any.\n"
    "\n"
    "Please provide a brief explanation (1–2 sentences) justifying your decision. "
    "Then present your final answer using one of the following options, wrapped in "
    "<answer> tags:\n"
    "\n" + ANSWER_OPTIONS
)

_HOLIDAY_BODY = (
    "You are shown an image of historical data (in black) and a forecast (in blue). "
    "Based on the historical trend, assess whether the forecast is reasonable.\n"
    "\n"
    "A reasonable forecast should generally follow the same direction and capture "
    "any seasonal trends if there are any. Note, there is a holiday at "
    "t={hist_holiday_t} in the historical and a second holiday at time "
    "t={fcst_holiday_t} in the forecast that may affect the demand.\n"
    "\n"
    "Please provide a brief explanation (1–2 sentences) justifying your decision. "
    "Then present your final answer using one of the following options, wrapped in "
    "<answer> tags:\n"
    "\n" + ANSWER_OPTIONS
)

_PROBABILISTIC_BODY = (
    "You are shown an image of historical data (in black) and a forecast (in blue). "
    "Your task is to assess whether the forecast appears visually reasonable.\n"
    "\n"
    "A reasonable forecast should generally follow the same direction as the "
    "historical trend and reflect any clear seasonal patterns, if present.\n"
    "\n"
    "IMPORTANT: Only label a forecast as unreasonable if there is an obvious and "
    "significant mismatch — for example, if the forecast goes in the opposite "
    "direction of the trend, ignores strong seasonal patterns, or shows extreme "
    "jumps that are not supported by the historical data.\n"
    "\n"
    "Minor deviations or slight over/underestimates are acceptable and should "
    "still be considered reasonable.\n"
    "\n"
    "Please provide a brief explanation (1–2 sentences) justifying your decision. "
    "Then present your final answer using one of the following options, wrapped in "
    "<answer> tags:\n"
    "\n" + ANSWER_OPTIONS + "\n"
    "\n"
    "If you find the forecast unreasonable, clearly explain what makes it "
    "obviously inconsistent."
)


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    required_params: tuple[str, ...] = ()

    def __post_init__(self):
        if ANSWER_OPTIONS not in self.body:
            raise ConfigError(
                f"template {self.template_id!r} lacks the verbatim answer-option block"
            )


TEMPLATES = {
    t.template_id: t
    for t in (
        PromptTemplate("point-synthetic", _POINT_BODY),
        PromptTemplate(
            "holiday", _HOLIDAY_BODY, ("hist_holiday_t", "fcst_holiday_t")
        ),
        PromptTemplate("probabilistic-m5", _PROBABILISTIC_BODY),
    )
}


def format_timestamp(value: float) -> str:
    """Timestamps are reported to the critic with 3 significant digits."""
    return f"{value:.3g}"


def build_prompt(template: PromptTemplate | str, **params) -> str:
    """Fill a template's placeholders; numeric values get 3 significant
    digits. Unused parameters are ignored; missing ones are an error."""
    if isinstance(template, str):
        if template not in TEMPLATES:
            raise ParameterError(f"unknown template {template!r}")
        template = TEMPLATES[template]
    rendered = {
        k: format_timestamp(v) if isinstance(v, (int, float)) else str(v)
        for k, v in params.items()
    }
    missing = [p for p in template.required_params if p not in rendered]
    if missing:
        raise ParameterError(f"missing template parameters: {missing}")
    return template.body.format(**rendered)


@dataclass(frozen=True)
class Verdict:
    label: str
    rationale: str
    raw: str
    latency_ms: int = 0
    backend_id: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "rationale": self.rationale,
            "raw": self.raw,
            "latency_ms": self.latency_ms,
            "backend_id": self.backend_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        return cls(
            label=d["label"],
            rationale=d.get("rationale", ""),
            raw=d.get("raw", ""),
            latency_ms=int(d.get("latency_ms", 0)),
            backend_id=d.get("backend_id", ""),
        )


_TAG_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)

_LABEL_BY_TOKEN = {"1": REASONABLE, "2": UNREASONABLE}


def parse_verdict(raw: str, latency_ms: int = 0, backend_id: str = "") -> Verdict:
    """Parse the last `<answer> N </answer>` tag (N in {1, 2}, arbitrary
    internal whitespace). Anything else is an unparseable-verdict error; the
    label is never inferred from the surrounding prose."""
    matches = list(_TAG_RE.finditer(raw))
    if not matches:
        raise UnparseableVerdictError(raw)
    token = matches[-1].group(1).strip()
    label = _LABEL_BY_TOKEN.get(token)
    if label is None:
        raise UnparseableVerdictError(raw)
    rationale = _TAG_RE.sub("", raw).strip()
    return Verdict(
        label=label,
        rationale=rationale,
        raw=raw,
        latency_ms=latency_ms,
        backend_id=backend_id,
    )


def verdict_response(label: str) -> str:
    """The canonical scripted response carrying the given label."""
    token = {REASONABLE: "1", UNREASONABLE: "2"}.get(label)
    if token is None:
        raise ParameterError(f"unknown label {label!r}")
    return f"<answer> {token} </answer>"


@dataclass
class BackendConfig:
    endpoint: str = ""
    model: str = ""
    auth_env: str = "FORECAST_AUDIT_API_KEY"
    timeout_s: float = 60.0
    max_retries: int = 3
    max_parallel: int = 4
    # Decoding parameters passed through to the request body untouched.
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.max_parallel < 1:
            raise ConfigError(f"max_parallel must be >= 1, got {self.max_parallel}")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")


_TRANSIENT_STATUS = {408, 409, 429}


class HttpBackend:
    """Chat-style multimodal endpoint: one text part, one base64 PNG part."""

    def __init__(self, config: BackendConfig):
        if not config.endpoint or not config.model:
            raise ConfigError("HTTP backend needs both an endpoint and a model id")
        self.config = config
        self.id = config.model
        self.max_retries = config.max_retries

    def _auth_key(self) -> str:
        key = os.environ.get(self.config.auth_env, "")
        if not key:
            raise ConfigError(
                f"API key environment variable {self.config.auth_env!r} is not set"
            )
        return key

    def submit(self, image_png: bytes, prompt: str, case_id: str | None = None) -> str:
        headers = {"Authorization": f"Bearer {self._auth_key()}"}
        image_b64 = base64.b64encode(image_png).decode("ascii")
        payload = {
            "model": self.config.model,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "text", "text": prompt},
                        {
                            "type": "image_url",
                            "image_url": {"url": f"data:image/png;base64,{image_b64}"},
                        },
                    ],
                }
            ],
            **self.config.extra,
        }
        try:
            resp = requests.post(
                self.config.endpoint,
                json=payload,
                headers=headers,
                timeout=self.config.timeout_s,
            )
        except requests.RequestException as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        if resp.status_code in _TRANSIENT_STATUS or resp.status_code >= 500:
            raise TransientBackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code != 200:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected response shape: {exc}") from exc


class ScriptedBackend:
    """Deterministic offline critic driven by case_id -> response mappings.

    A case may map to a sequence of responses, consumed one per call (the
    last one sticks). The wildcard case_id "*" supplies a default. Call
    bookkeeping (per-case call counts, peak concurrency) is exposed so tests
    can observe the retry and bounded-parallelism contracts.
    """

    def __init__(self, responses=None, default: str | None = None, backend_id: str = "mock"):
        self.id = backend_id
        self.max_retries = 3
        self._responses = {}
        for case_id, resp in (responses or {}).items():
            seq = [resp] if isinstance(resp, str) else list(resp)
            self._responses[str(case_id)] = collections.deque(seq)
        self._default = default
        self._lock = threading.Lock()
        self.calls: list[str] = []
        self._in_flight = 0
        self.peak_in_flight = 0
        self.submit_hook = None  # optional callable, runs inside submit

    @classmethod
    def from_jsonl(cls, path, backend_id: str = "mock") -> "ScriptedBackend":
        """Load a script file of {"case_id": ..., "response": ...} lines.

        Repeated case_ids queue up successive responses; case_id "*" sets the
        default used for unknown cases.
        """
        responses: dict[str, list[str]] = {}
        default = None
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            cid = str(row["case_id"])
            if cid == "*":
                default = row["response"]
            else:
                responses.setdefault(cid, []).append(row["response"])
        return cls(responses, default=default, backend_id=backend_id)

    def submit(self, image_png: bytes, prompt: str, case_id: str | None = None) -> str:
        with self._lock:
            self._in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
            self.calls.append(str(case_id))
        try:
            if self.submit_hook is not None:
                self.submit_hook(case_id)
            with self._lock:
                queue = self._responses.get(str(case_id))
                if queue:
                    return queue.popleft() if len(queue) > 1 else queue[0]
                if self._default is not None:
                    return self._default
            raise BackendError(f"no scripted response for case {case_id!r}")
        finally:
            with self._lock:
                self._in_flight -= 1


def write_script(path, responses: dict, default: str | None = None) -> None:
    """Write a ScriptedBackend JSONL script file."""
    with open(path, "w") as fh:
        if default is not None:
            fh.write(json.dumps({"case_id": "*", "response": default}) + "\n")
        for case_id, resp in responses.items():
            seq = [resp] if isinstance(resp, str) else list(resp)
            for r in seq:
                fh.write(json.dumps({"case_id": str(case_id), "response": r}) + "\n")


def critique(
    backend,
    image_png: bytes,
    prompt: str,
    case_id: str | None = None,
    backoff_s: float = 0.25,
    sleep=time.sleep,
) -> Verdict:
    """One verdict for one case.

    Transient transport failures are retried up to the backend's max_retries
    with exponential backoff; an unparseable response is retried exactly once
    and then surfaced as an error for the caller to record against the case.
    """
    max_retries = getattr(backend, "max_retries", 3)
    transport_failures = 0
    parse_failures = 0
    while True:
        start = time.perf_counter()
        try:
            raw = backend.submit(image_png, prompt, case_id=case_id)
        except TransientBackendError as exc:
            transport_failures += 1
            if transport_failures > max_retries:
                raise BackendError(
                    f"giving up after {transport_failures} transport failures: {exc}"
                ) from exc
            sleep(backoff_s * 2 ** (transport_failures - 1))
            continue
        latency_ms = int((time.perf_counter() - start) * 1000)
        try:
            return parse_verdict(raw, latency_ms=latency_ms, backend_id=backend.id)
        except UnparseableVerdictError:
            parse_failures += 1
            if parse_failures > 1:
                raise
