import base64
import threading
import time

import pytest

from mindmodal.gateway import (
    AuthError,
    GatewayConfig,
    OpenAIGateway,
    OracleGateway,
    QueryContext,
    ScriptedGateway,
    TransportError,
    UniformGateway,
    build_request_body,
    make_mock_gateway,
    parse_label,
)
from mindmodal.prompts import (
    AUDIO_FEATURES,
    EEG_IMAGE,
    ClassLabel,
    ModalityDescriptor,
    TaskSpec,
    build_zero_shot,
)

DEPRESSION2 = TaskSpec("depression", (ClassLabel(0, "healthy", "healthy"), ClassLabel(1, "MDD", "MDD")))
EMOTION3 = TaskSpec(
    "emotion",
    (ClassLabel(0, "neutral", "neutral"), ClassLabel(1, "happy", "happy"),
     ClassLabel(2, "sad", "sad")),
)

PNG = b"\x89PNG\r\n\x1a\nfake"


def sample_prompt():
    mods = [
        ModalityDescriptor(EEG_IMAGE, "scalp electrodes", "scalp map image", PNG),
        ModalityDescriptor(AUDIO_FEATURES, "a microphone", "summary text", "MFCC mean: 1.0"),
    ]
    return build_zero_shot(mods, DEPRESSION2)


def ctx(sample_id="s01", true_label=1, task=DEPRESSION2, trial_seed=0):
    return QueryContext(sample_id=sample_id, true_label=true_label, task=task,
                        trial_seed=trial_seed)


class TestParseLabel:
    def test_bare_int(self):
        v = parse_label("1", DEPRESSION2)
        assert v.label == 1 and v.explanation == "" and not v.is_invalid

    def test_bare_int_with_whitespace(self):
        assert parse_label("  0\n", DEPRESSION2).label == 0

    def test_out_of_range_bare_int_is_invalid(self):
        assert parse_label("7", DEPRESSION2).is_invalid

    def test_embedded_int(self):
        v = parse_label("The answer is 1.", DEPRESSION2)
        assert v.label == 1
        assert v.explanation == "The answer is ."

    def test_first_in_range_int_wins(self):
        assert parse_label("5 is wrong, 1 is right", DEPRESSION2).label == 1

    def test_decimal_not_an_int_token(self):
        assert parse_label("confidence 0.93", DEPRESSION2).is_invalid

    def test_class_name_match(self):
        v = parse_label("The person is likely sad.", EMOTION3)
        assert v.label == 2

    def test_class_name_case_insensitive(self):
        assert parse_label("HEALTHY", DEPRESSION2).label == 0

    def test_ambiguous_names_invalid(self):
        v = parse_label("happy or sad", EMOTION3)
        assert v.is_invalid and v.label is None

    def test_no_match_invalid(self):
        v = parse_label("I cannot tell.", DEPRESSION2)
        assert v.is_invalid and v.explanation == "I cannot tell."

    def test_name_inside_word_does_not_match(self):
        assert parse_label("unhealthyish", DEPRESSION2).is_invalid


class TestRequestBody:
    def test_shape(self):
        config = GatewayConfig()
        body = build_request_body(sample_prompt(), config)
        assert body["model"] == config.model
        assert body["temperature"] == 0.0
        assert body["max_tokens"] == 512
        assert len(body["messages"]) == 1
        assert body["messages"][0]["role"] == "user"

    def test_parts_order_and_kinds(self):
        body = build_request_body(sample_prompt(), GatewayConfig())
        content = body["messages"][0]["content"]
        kinds = [c["type"] for c in content]
        # role play, eeg sentence, image, feature sentence+payload, task, rule
        assert kinds == ["text", "text", "image_url", "text", "text", "text"]

    def test_image_round_trips_bytes(self):
        body = build_request_body(sample_prompt(), GatewayConfig())
        url = body["messages"][0]["content"][2]["image_url"]["url"]
        prefix = "data:image/png;base64,"
        assert url.startswith(prefix)
        assert base64.b64decode(url[len(prefix):]) == PNG

    def test_oversized_image_rejected(self):
        big = bytes(16 * 1024 * 1024)  # >20 MB after base64
        mods = [ModalityDescriptor(EEG_IMAGE, "electrodes", "image", big)]
        with pytest.raises(ValueError, match="base64"):
            build_request_body(build_zero_shot(mods, DEPRESSION2), GatewayConfig())


def ok_response(text="1"):
    return 200, {"choices": [{"message": {"content": text}}]}


class FakeTransport:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = []

    def __call__(self, url, headers, body, timeout):
        self.calls.append((url, headers, body, timeout))
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


class TestOpenAIGateway:
    def gateway(self, transport, monkeypatch, **cfg):
        monkeypatch.setenv("OPENAI_API_KEY", "sk-test")
        sleeps = []
        gw = OpenAIGateway(GatewayConfig(**cfg), transport=transport,
                           sleep=sleeps.append)
        return gw, sleeps

    def test_success_first_try(self, monkeypatch):
        transport = FakeTransport([ok_response("0")])
        gw, sleeps = self.gateway(transport, monkeypatch)
        assert gw.send(sample_prompt()) == "0"
        assert sleeps == []

    def test_retries_on_429_then_succeeds(self, monkeypatch):
        transport = FakeTransport([(429, {}), (503, {}), ok_response("1")])
        gw, sleeps = self.gateway(transport, monkeypatch)
        assert gw.send(sample_prompt()) == "1"
        assert len(transport.calls) == 3
        # exponential backoff with jitter: base*1 then base*2, each + up to half
        assert 2.0 <= sleeps[0] <= 3.0
        assert 4.0 <= sleeps[1] <= 6.0

    def test_exhausted_retries_raise_transport_error(self, monkeypatch):
        transport = FakeTransport([(500, {})] * 3)
        gw, _ = self.gateway(transport, monkeypatch)
        with pytest.raises(TransportError, match="exhausted 3 attempts"):
            gw.send(sample_prompt())

    def test_connection_errors_retried(self, monkeypatch):
        transport = FakeTransport([OSError("refused"), ok_response("1")])
        gw, _ = self.gateway(transport, monkeypatch)
        assert gw.send(sample_prompt()) == "1"

    def test_auth_error_on_401_not_retried(self, monkeypatch):
        transport = FakeTransport([(401, {})])
        gw, _ = self.gateway(transport, monkeypatch)
        with pytest.raises(AuthError):
            gw.send(sample_prompt())
        assert len(transport.calls) == 1

    def test_missing_key_is_auth_error(self, monkeypatch):
        monkeypatch.delenv("OPENAI_API_KEY", raising=False)
        gw = OpenAIGateway(GatewayConfig(), transport=FakeTransport([]))
        with pytest.raises(AuthError, match="OPENAI_API_KEY"):
            gw.send(sample_prompt())

    def test_malformed_response_is_transport_error(self, monkeypatch):
        transport = FakeTransport([(200, {"nope": True})])
        gw, _ = self.gateway(transport, monkeypatch)
        with pytest.raises(TransportError, match="malformed"):
            gw.send(sample_prompt())

    def test_request_bytes_intact(self, monkeypatch):
        transport = FakeTransport([ok_response()])
        gw, _ = self.gateway(transport, monkeypatch)
        prompt = sample_prompt()
        gw.send(prompt)
        _, headers, body, _ = transport.calls[0]
        assert headers["Authorization"] == "Bearer sk-test"
        assert body == build_request_body(prompt, gw.config)

    def test_request_log_called(self, monkeypatch):
        monkeypatch.setenv("OPENAI_API_KEY", "sk-test")
        entries = []
        gw = OpenAIGateway(GatewayConfig(), transport=FakeTransport([ok_response()]),
                           request_log=entries.append)
        gw.send(sample_prompt())
        assert len(entries) == 1 and entries[0]["status"] == 200

    def test_in_flight_limit_respected(self, monkeypatch):
        monkeypatch.setenv("OPENAI_API_KEY", "sk-test")
        active = 0
        peak = 0
        lock = threading.Lock()

        def transport(url, headers, body, timeout):
            nonlocal active, peak
            with lock:
                active += 1
                peak = max(peak, active)
            time.sleep(0.02)
            with lock:
                active -= 1
            return ok_response()

        gw = OpenAIGateway(GatewayConfig(max_in_flight=2), transport=transport,
                           sleep=lambda s: None)
        prompt = sample_prompt()
        threads = [threading.Thread(target=gw.send, args=(prompt,)) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert peak <= 2


class TestMocks:
    def test_oracle_answers_true_label(self):
        gw = OracleGateway()
        assert gw.respond(sample_prompt(), ctx(true_label=1)) == "1"
        assert gw.respond(sample_prompt(), ctx(true_label=0)) == "0"
        assert gw.calls == 2

    def test_uniform_in_range_and_deterministic(self):
        prompt = sample_prompt()
        a = UniformGateway(seed=7)
        b = UniformGateway(seed=7)
        for i in range(20):
            context = ctx(sample_id=f"s{i:02d}", task=EMOTION3, trial_seed=3)
            ra = a.respond(prompt, context)
            assert ra == b.respond(prompt, context)
            assert 0 <= int(ra) < 3

    def test_uniform_order_independent(self):
        prompt = sample_prompt()
        contexts = [ctx(sample_id=f"s{i}", task=EMOTION3) for i in range(10)]
        forward = [UniformGateway(seed=1).respond(prompt, c) for c in contexts]
        backward = [UniformGateway(seed=1).respond(prompt, c) for c in reversed(contexts)]
        assert forward == backward[::-1]

    def test_uniform_seed_changes_draws(self):
        prompt = sample_prompt()
        contexts = [ctx(sample_id=f"s{i}", task=EMOTION3) for i in range(30)]
        a = [UniformGateway(seed=1).respond(prompt, c) for c in contexts]
        b = [UniformGateway(seed=2).respond(prompt, c) for c in contexts]
        assert a != b

    def test_scripted_replay_and_exhaustion(self):
        gw = ScriptedGateway(["0", "banana", "1"])
        prompt = sample_prompt()
        assert gw.respond(prompt, ctx()) == "0"
        assert gw.respond(prompt, ctx()) == "banana"
        assert gw.respond(prompt, ctx()) == "1"
        with pytest.raises(RuntimeError, match="exhausted"):
            gw.respond(prompt, ctx())

    def test_scripted_parse_ladder(self):
        gw = ScriptedGateway(["0", "banana", "1"])
        prompt = sample_prompt()
        labels = [parse_label(gw.respond(prompt, ctx()), DEPRESSION2).label for _ in range(3)]
        assert labels == [0, None, 1]

    def test_factory(self):
        assert isinstance(make_mock_gateway("oracle"), OracleGateway)
        assert isinstance(make_mock_gateway("uniform", seed=3), UniformGateway)
        assert isinstance(make_mock_gateway("scripted", replies=["1"]), ScriptedGateway)
        with pytest.raises(ValueError):
            make_mock_gateway("psychic")


class TestConfig:
    def test_negative_temperature_rejected(self):
        with pytest.raises(ValueError):
            GatewayConfig(temperature=-1.0)

    def test_zero_in_flight_rejected(self):
        with pytest.raises(ValueError):
            GatewayConfig(max_in_flight=0)
