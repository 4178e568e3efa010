import pytest

from forecast_audit.critic import (
    ANSWER_OPTIONS,
    BackendConfig,
    HttpBackend,
    ScriptedBackend,
    TEMPLATES,
    build_prompt,
    critique,
    parse_verdict,
    verdict_response,
    write_script,
)
from forecast_audit.errors import (
    BackendError,
    ConfigError,
    ParameterError,
    TransientBackendError,
    UnparseableVerdictError,
)
from forecast_audit.metrics import REASONABLE, UNREASONABLE

PNG = b"\x89PNG fake"


class TestTemplates:
    def test_all_templates_carry_answer_block(self):
        for template in TEMPLATES.values():
            assert ANSWER_OPTIONS in template.body

    def test_point_template_wording(self):
        out = build_prompt(TEMPLATES["point-synthetic"])
        assert "assess whether the forecast is reasonable" in out

    def test_holiday_placeholders(self):
        out = build_prompt(
            TEMPLATES["holiday"], hist_holiday_t=0.321, fcst_holiday_t=8.47
        )
        assert "t=0.321" in out
        assert "t=8.47" in out
        assert "there is a holiday" in out

    def test_probabilistic_wording(self):
        out = build_prompt(TEMPLATES["probabilistic-m5"])
        assert "obvious and significant mismatch" in out

    def test_three_significant_digits(self):
        out = build_prompt(
            TEMPLATES["holiday"], hist_holiday_t=0.32149, fcst_holiday_t=9.8213
        )
        assert "t=0.321" in out
        assert "t=9.82" in out

    def test_missing_placeholder(self):
        with pytest.raises(ParameterError):
            build_prompt(TEMPLATES["holiday"], hist_holiday_t=1.0)

    def test_unused_placeholder_ignored(self):
        base = build_prompt(TEMPLATES["point-synthetic"])
        extra = build_prompt(TEMPLATES["point-synthetic"], hist_holiday_t=1.0)
        assert base == extra

    def test_rest_of_template_untouched(self):
        out = build_prompt(
            TEMPLATES["holiday"], hist_holiday_t=0.321, fcst_holiday_t=8.47
        )
        expected = TEMPLATES["holiday"].body.format(
            hist_holiday_t="0.321", fcst_holiday_t="8.47"
        )
        assert out == expected

    def test_unknown_template_name(self):
        with pytest.raises(ParameterError):
            build_prompt("nope")


class TestParseVerdict:
    def test_basic_unreasonable(self):
        v = parse_verdict("The trend flips direction. <answer> 2 </answer>")
        assert v.label == UNREASONABLE

    def test_basic_reasonable(self):
        assert parse_verdict("<answer>1</answer>").label == REASONABLE

    def test_last_tag_wins(self):
        v = parse_verdict("<answer>1</answer> then <answer> 2 </answer>")
        assert v.label == UNREASONABLE

    def test_whitespace_and_newlines(self):
        v = parse_verdict("thinking...\n<answer>\n\t 1 \n</answer>\ndone")
        assert v.label == REASONABLE

    def test_no_tag(self):
        with pytest.raises(UnparseableVerdictError) as err:
            parse_verdict("I think it is fine.")
        assert err.value.raw == "I think it is fine."

    def test_bad_token(self):
        with pytest.raises(UnparseableVerdictError):
            parse_verdict("<answer> 3 </answer>")

    def test_empty_tag(self):
        with pytest.raises(UnparseableVerdictError):
            parse_verdict("<answer></answer>")

    def test_rationale_strips_tags(self):
        v = parse_verdict("Looks fine to me. <answer> 1 </answer>")
        assert v.rationale == "Looks fine to me."
        assert v.raw == "Looks fine to me. <answer> 1 </answer>"

    def test_pure_function(self):
        raw = "ok <answer> 2 </answer>"
        assert parse_verdict(raw) == parse_verdict(raw)

    def test_label_never_from_prose(self):
        # the prose says reasonable, the tag says unreasonable: tag wins
        v = parse_verdict("The forecast is reasonable. <answer> 2 </answer>")
        assert v.label == UNREASONABLE


class TestVerdictResponse:
    @pytest.mark.parametrize("label", [REASONABLE, UNREASONABLE])
    def test_round_trip(self, label):
        assert parse_verdict(verdict_response(label)).label == label

    def test_unknown_label(self):
        with pytest.raises(ParameterError):
            verdict_response("maybe")


class TestScriptedBackend:
    def test_mapping_and_default(self):
        backend = ScriptedBackend({"a": "<answer>1</answer>"}, default="<answer>2</answer>")
        assert backend.submit(PNG, "p", case_id="a") == "<answer>1</answer>"
        assert backend.submit(PNG, "p", case_id="zzz") == "<answer>2</answer>"

    def test_sequence_consumed_then_sticky(self):
        backend = ScriptedBackend({"a": ["first", "second"]})
        assert backend.submit(PNG, "p", case_id="a") == "first"
        assert backend.submit(PNG, "p", case_id="a") == "second"
        assert backend.submit(PNG, "p", case_id="a") == "second"

    def test_missing_case_raises(self):
        backend = ScriptedBackend({})
        with pytest.raises(BackendError):
            backend.submit(PNG, "p", case_id="missing")

    def test_from_jsonl(self, tmp_path):
        path = tmp_path / "script.jsonl"
        write_script(
            path,
            {"a": ["no tag here", "<answer> 1 </answer>"]},
            default="<answer> 2 </answer>",
        )
        backend = ScriptedBackend.from_jsonl(path)
        assert backend.submit(PNG, "p", case_id="a") == "no tag here"
        assert backend.submit(PNG, "p", case_id="a") == "<answer> 1 </answer>"
        assert backend.submit(PNG, "p", case_id="other") == "<answer> 2 </answer>"


class TestCritique:
    def test_always_reasonable(self):
        backend = ScriptedBackend({}, default=verdict_response(REASONABLE))
        for case in ("x", "y", "z"):
            v = critique(backend, PNG, "prompt", case_id=case)
            assert v.label == REASONABLE
            assert v.backend_id == "mock"

    def test_unparseable_then_valid_retries_once(self):
        backend = ScriptedBackend({"c": ["no tag", "<answer> 1 </answer>"]})
        v = critique(backend, PNG, "prompt", case_id="c")
        assert v.label == REASONABLE
        assert backend.calls.count("c") == 2

    def test_two_unparseables_surface(self):
        backend = ScriptedBackend({"c": ["nope", "still nope"]})
        with pytest.raises(UnparseableVerdictError):
            critique(backend, PNG, "prompt", case_id="c")
        assert backend.calls.count("c") == 2

    def test_transient_failures_retry_with_backoff(self):
        class Flaky:
            id = "flaky"
            max_retries = 3

            def __init__(self):
                self.n = 0

            def submit(self, image, prompt, case_id=None):
                self.n += 1
                if self.n <= 2:
                    raise TransientBackendError("boom")
                return "<answer> 2 </answer>"

        sleeps = []
        backend = Flaky()
        v = critique(backend, PNG, "p", case_id="c", sleep=sleeps.append)
        assert v.label == UNREASONABLE
        assert backend.n == 3
        assert sleeps == [0.25, 0.5]  # exponential backoff

    def test_exhausted_retries(self):
        class Dead:
            id = "dead"
            max_retries = 2

            def submit(self, image, prompt, case_id=None):
                raise TransientBackendError("down")

        with pytest.raises(BackendError):
            critique(Dead(), PNG, "p", case_id="c", sleep=lambda s: None)


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("not json")
        return self._payload


class TestHttpBackend:
    def make(self, monkeypatch):
        monkeypatch.setenv("TEST_CRITIC_KEY", "sekrit")
        return HttpBackend(
            BackendConfig(
                endpoint="https://critic.example/v1/chat",
                model="critic-1",
                auth_env="TEST_CRITIC_KEY",
            )
        )

    def test_needs_endpoint_and_model(self):
        with pytest.raises(ConfigError):
            HttpBackend(BackendConfig())

    def test_missing_auth(self, monkeypatch):
        monkeypatch.delenv("TEST_CRITIC_KEY", raising=False)
        backend = HttpBackend(
            BackendConfig(endpoint="https://x", model="m", auth_env="TEST_CRITIC_KEY")
        )
        with pytest.raises(ConfigError):
            backend.submit(PNG, "p")

    def test_payload_shape(self, monkeypatch):
        backend = self.make(monkeypatch)
        captured = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            captured.update(url=url, json=json, headers=headers, timeout=timeout)
            return FakeResponse(
                payload={"choices": [{"message": {"content": "<answer>1</answer>"}}]}
            )

        monkeypatch.setattr("forecast_audit.critic.requests.post", fake_post)
        out = backend.submit(PNG, "hello", case_id="c")
        assert out == "<answer>1</answer>"
        assert captured["url"] == "https://critic.example/v1/chat"
        assert captured["headers"]["Authorization"] == "Bearer sekrit"
        content = captured["json"]["messages"][0]["content"]
        assert content[0] == {"type": "text", "text": "hello"}
        assert content[1]["type"] == "image_url"
        assert content[1]["image_url"]["url"].startswith("data:image/png;base64,")
        assert captured["json"]["model"] == "critic-1"

    def test_5xx_transient(self, monkeypatch):
        backend = self.make(monkeypatch)
        monkeypatch.setattr(
            "forecast_audit.critic.requests.post",
            lambda *a, **k: FakeResponse(status_code=503, text="unavailable"),
        )
        with pytest.raises(TransientBackendError):
            backend.submit(PNG, "p")

    def test_4xx_permanent(self, monkeypatch):
        backend = self.make(monkeypatch)
        monkeypatch.setattr(
            "forecast_audit.critic.requests.post",
            lambda *a, **k: FakeResponse(status_code=400, text="bad request"),
        )
        with pytest.raises(BackendError) as err:
            backend.submit(PNG, "p")
        assert not isinstance(err.value, TransientBackendError)

    def test_bad_response_shape(self, monkeypatch):
        backend = self.make(monkeypatch)
        monkeypatch.setattr(
            "forecast_audit.critic.requests.post",
            lambda *a, **k: FakeResponse(payload={"unexpected": True}),
        )
        with pytest.raises(BackendError):
            backend.submit(PNG, "p")

    def test_extra_decoding_params_passed_through(self, monkeypatch):
        monkeypatch.setenv("TEST_CRITIC_KEY", "sekrit")
        backend = HttpBackend(
            BackendConfig(
                endpoint="https://x", model="m", auth_env="TEST_CRITIC_KEY",
                extra={"temperature": 0.2},
            )
        )
        captured = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            captured.update(json=json)
            return FakeResponse(
                payload={"choices": [{"message": {"content": "<answer>1</answer>"}}]}
            )

        monkeypatch.setattr("forecast_audit.critic.requests.post", fake_post)
        backend.submit(PNG, "p")
        assert captured["json"]["temperature"] == 0.2


class TestBackendConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            BackendConfig(max_parallel=0)
        with pytest.raises(ConfigError):
            BackendConfig(max_retries=-1)
