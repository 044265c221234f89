import hashlib
import json

import pytest

from plainbayes import elicitation
from plainbayes.elicitation import (
    FixtureStore,
    LlmConfig,
    call_llm,
    elicit_model,
    elicit_prior,
    packaged_fixtures_dir,
    render_model_prompt,
    render_prior_prompt,
)
from plainbayes.errors import (
    ElicitationError,
    ElicitationFailed,
    EmptyInput,
    FixtureMiss,
    HttpError,
    LlmProtocolError,
    LlmTimeout,
    MissingApiKey,
)
from plainbayes.spec_schema import DistributionSpec


def replay_cfg(directory) -> LlmConfig:
    return LlmConfig(mode="replay", fixtures_dir=directory)


@pytest.fixture()
def shipped() -> LlmConfig:
    return replay_cfg(packaged_fixtures_dir())


@pytest.fixture()
def beliefs() -> dict:
    from importlib import resources

    path = resources.files("plainbayes") / "resources" / "examples" / "linear_regression_beliefs.json"
    return json.loads(path.read_text(encoding="utf-8"))


@pytest.fixture()
def description() -> str:
    from importlib import resources

    path = resources.files("plainbayes") / "resources" / "examples" / "linear_regression_description.txt"
    return path.read_text(encoding="utf-8")


class TestRendering:
    def test_prior_prompt_contains_belief_marker(self, beliefs):
        prompt = render_prior_prompt("beta", beliefs["beta"])
        assert "USER BELIEF for 'beta'" in prompt
        assert beliefs["beta"] in prompt

    def test_prior_prompt_contains_vocabulary(self):
        prompt = render_prior_prompt("alpha", "x")
        assert 'Available distributions: "Normal", "HalfNormal", "Uniform", "Exponential".' in prompt

    def test_prior_prompt_empty_inputs(self):
        with pytest.raises(EmptyInput):
            render_prior_prompt("", "x")
        with pytest.raises(EmptyInput):
            render_prior_prompt("alpha", "   ")

    def test_model_prompt_contains_contract(self, description):
        prompt = render_model_prompt(description)
        assert '"formula": A string representing the mean' in prompt
        assert f"---\n{description}\n---" in prompt

    def test_model_prompt_empty(self):
        with pytest.raises(EmptyInput):
            render_model_prompt("")

    def test_rendering_is_deterministic(self, description):
        assert render_model_prompt(description) == render_model_prompt(description)

    def test_fixture_key_is_sha256_of_prompt_bytes(self):
        prompt = render_prior_prompt("a", "b")
        assert FixtureStore.key_for(prompt) == hashlib.sha256(prompt.encode()).hexdigest()


class TestConfig:
    def test_live_requires_endpoint(self):
        with pytest.raises(ElicitationError):
            LlmConfig(mode="live")

    def test_replay_requires_fixtures(self):
        with pytest.raises(ElicitationError):
            LlmConfig(mode="replay", fixtures_dir=None)

    def test_unknown_mode(self):
        with pytest.raises(ElicitationError):
            LlmConfig(mode="cached", fixtures_dir=".")


class TestReplay:
    def test_round_trip_store(self, tmp_path):
        store = FixtureStore(tmp_path)
        store.put("hello", "world", "test-model")
        assert store.get("hello") == "world"
        payload = json.loads(store.path_for("hello").read_text())
        assert payload["prompt_hash"] == FixtureStore.key_for("hello")
        assert payload["metadata"]["model_name"] == "test-model"

    def test_miss(self, tmp_path):
        with pytest.raises(FixtureMiss):
            call_llm("unseen prompt", replay_cfg(tmp_path))

    def test_shipped_prior_fixtures(self, shipped, beliefs):
        spec = elicit_prior("beta", beliefs["beta"], shipped)
        assert spec == DistributionSpec("Normal", {"mu": 2.0, "sigma": 1.0})
        spec = elicit_prior("sigma", beliefs["sigma"], shipped)
        assert spec == DistributionSpec("HalfNormal", {"sigma": 15.0})
        spec = elicit_prior("alpha", beliefs["alpha"], shipped)
        assert spec == DistributionSpec("Normal", {"mu": 0.0, "sigma": 12.5})

    def test_shipped_model_fixture(self, shipped, description):
        spec = elicit_model(description, shipped)
        assert list(spec.priors) == ["alpha", "beta", "sigma"]
        assert spec.priors["alpha"] == DistributionSpec("Uniform", {"lower": -25.0, "upper": 25.0})
        assert spec.priors["beta"] == DistributionSpec("Exponential", {"lam": 0.5})
        assert spec.priors["sigma"] == DistributionSpec("HalfNormal", {"sigma": 15.0})
        assert spec.likelihood.formula_source == "alpha + beta * X"

    def test_fenced_fixture_parses(self, tmp_path):
        store = FixtureStore(tmp_path)
        prompt = render_prior_prompt("beta", "fenced test belief")
        store.put(prompt, '```json\n{"distribution":"Exponential","params":{"rate":0.5}}\n```', "m")
        spec = elicit_prior("beta", "fenced test belief", replay_cfg(tmp_path))
        assert spec == DistributionSpec("Exponential", {"lam": 0.5})

    def test_prose_fixture_exhausts_retries(self, tmp_path):
        store = FixtureStore(tmp_path)
        prompt = render_prior_prompt("beta", "prose test belief")
        store.put(prompt, "I think a Normal prior would be lovely.", "m")
        with pytest.raises(ElicitationFailed):
            elicit_prior("beta", "prose test belief", replay_cfg(tmp_path))

    def test_retry_prompt_has_its_own_fixture(self, tmp_path):
        store = FixtureStore(tmp_path)
        prompt = render_prior_prompt("beta", "retry belief")
        bad = '{"distribution":"Cauchy","params":{"x0":0}}'
        store.put(prompt, bad, "m")
        retry_prompt = (
            prompt
            + "\nPrevious response was invalid: unknown distribution 'Cauchy'. "
            + "Respond with only the JSON object."
        )
        store.put(retry_prompt, '{"distribution":"Normal","params":{"mu":0,"sigma":1}}', "m")
        spec = elicit_prior("beta", "retry belief", replay_cfg(tmp_path))
        assert spec == DistributionSpec("Normal", {"mu": 0.0, "sigma": 1.0})

    def test_model_fixture_missing_likelihood_fails(self, tmp_path):
        store = FixtureStore(tmp_path)
        store.put(render_model_prompt("desc"), '{"priors": {}}', "m")
        with pytest.raises(ElicitationFailed):
            elicit_model("desc", replay_cfg(tmp_path))


class _FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text or (json.dumps(payload) if payload is not None else "")

    def json(self):
        if self._payload is None:
            raise ValueError("not json")
        return self._payload


def _chat_payload(text):
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


class TestLiveTransport:
    LIVE = dict(mode="live", endpoint_url="https://chat.example/v1", model_name="m1")

    def test_missing_api_key_before_any_network(self, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)

        def explode(*a, **k):  # any transport use would be a bug
            raise AssertionError("network should not be touched")

        monkeypatch.setattr(elicitation.requests, "post", explode)
        with pytest.raises(MissingApiKey):
            call_llm("p", LlmConfig(**self.LIVE))

    def test_live_extracts_first_candidate(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "k-123")
        captured = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            captured.update(url=url, body=json, headers=headers, timeout=timeout)
            return _FakeResponse(payload=_chat_payload("hello"))

        monkeypatch.setattr(elicitation.requests, "post", fake_post)
        out = call_llm("the prompt", LlmConfig(**self.LIVE, temperature=0.25))
        assert out == "hello"
        assert captured["body"] == {
            "model": "m1",
            "messages": [{"role": "user", "content": "the prompt"}],
            "temperature": 0.25,
        }
        assert captured["headers"]["Authorization"] == "Bearer k-123"

    def test_http_error_excerpt_has_no_key(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "sk-super-secret")
        monkeypatch.setattr(
            elicitation.requests, "post",
            lambda *a, **k: _FakeResponse(status_code=503, text="upstream unavailable"),
        )
        with pytest.raises(HttpError) as err:
            call_llm("p", LlmConfig(**self.LIVE))
        assert err.value.status == 503
        assert "sk-super-secret" not in str(err.value)

    def test_timeout(self, monkeypatch):
        import requests as requests_module

        monkeypatch.setenv("LLM_API_KEY", "k")

        def raise_timeout(*a, **k):
            raise requests_module.Timeout()

        monkeypatch.setattr(elicitation.requests, "post", raise_timeout)
        with pytest.raises(LlmTimeout):
            call_llm("p", LlmConfig(**self.LIVE, timeout=0.01))

    def test_unexpected_shape(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "k")
        monkeypatch.setattr(
            elicitation.requests, "post", lambda *a, **k: _FakeResponse(payload={"data": []})
        )
        with pytest.raises(LlmProtocolError):
            call_llm("p", LlmConfig(**self.LIVE))

    def test_custom_pointer(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "k")
        payload = {"candidates": [{"content": {"parts": [{"text": "alt-shape"}]}}]}
        monkeypatch.setattr(elicitation.requests, "post", lambda *a, **k: _FakeResponse(payload=payload))
        cfg = LlmConfig(**self.LIVE, response_text_pointer="/candidates/0/content/parts/0/text")
        assert call_llm("p", cfg) == "alt-shape"

    def test_record_mode_persists_fixture(self, monkeypatch, tmp_path):
        monkeypatch.setenv("LLM_API_KEY", "key-abc")
        monkeypatch.setattr(
            elicitation.requests, "post", lambda *a, **k: _FakeResponse(payload=_chat_payload("rec"))
        )
        cfg = LlmConfig(**{**self.LIVE, "mode": "record"}, fixtures_dir=tmp_path)
        assert call_llm("record me", cfg) == "rec"
        # replay now works offline, and nothing on disk contains the key
        replayed = call_llm("record me", replay_cfg(tmp_path))
        assert replayed == "rec"
        for f in tmp_path.glob("*.json"):
            assert "key-abc" not in f.read_text()
