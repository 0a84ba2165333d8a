import json
import random

import pytest
from fastapi.testclient import TestClient

from dialogue_forge.service import create_app, load_registry, RegistryError
from dialogue_forge.session import SystemConfig, build_system_agent
from dialogue_forge.service import run_stages_with_override
from dialogue_forge.core import BeliefState, act_from_json

DEFAULT_SELECTIONS = {"nlu": "pattern", "dst": "rule", "policy": "rule", "nlg": "template"}


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(load_registry()))


def new_session(client, selections=None, pack="synthetic"):
    response = client.post(
        "/sessions", json={"selections": selections or DEFAULT_SELECTIONS, "pack": pack}
    )
    assert response.status_code == 200
    return response.json()["id"]


# --- registry --------------------------------------------------------------------

def test_registry_lists_stages_options_and_packs(client):
    body = client.get("/registry").json()
    assert body["packs"] == ["synthetic"]
    for stage in ("nlu", "dst", "policy", "nlg"):
        assert len(body["stages"][stage]) >= 1
    assert {"name": "none", "config": {}} in body["stages"]["nlu"]
    assert "schemas" in body
    assert body["schemas"]["nlg"]["type"] == "string"


def test_registry_file_round_trip(tmp_path):
    source = load_registry()
    copy_path = tmp_path / "registry.json"
    copy_path.write_text(
        json.dumps({"packs": source.packs, "stages": source.stages})
    )
    reloaded = load_registry(copy_path)
    assert reloaded.packs == source.packs
    assert reloaded.stages == source.stages


def test_registry_unknown_implementation_fails_at_load(tmp_path):
    bad = {
        "packs": {"synthetic": "builtin"},
        "stages": {
            "nlu": [{"name": "bert-large"}],
            "dst": [{"name": "rule"}],
            "policy": [{"name": "rule"}],
            "nlg": [{"name": "template"}],
        },
    }
    path = tmp_path / "registry.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(RegistryError, match="bert-large"):
        load_registry(path)


def test_registry_env_variable(tmp_path, monkeypatch):
    path = tmp_path / "registry.json"
    path.write_text(json.dumps({
        "packs": {"synthetic": "builtin"},
        "stages": {
            "nlu": [{"name": "pattern"}],
            "dst": [{"name": "rule"}],
            "policy": [{"name": "rule"}],
            "nlg": [{"name": "template"}],
        },
    }))
    monkeypatch.setenv("DIALOGUE_FORGE_REGISTRY", str(path))
    registry = load_registry()
    assert [o["name"] for o in registry.stages["nlu"]] == ["pattern"]


# --- session lifecycle --------------------------------------------------------------

def test_create_session_returns_unique_ids(client):
    first = new_session(client)
    second = new_session(client)
    assert first != second


def test_create_session_rejects_bad_selection(client):
    response = client.post(
        "/sessions",
        json={"selections": {**DEFAULT_SELECTIONS, "nlg": "gpt"}, "pack": "synthetic"},
    )
    assert response.status_code == 400
    body = response.json()
    assert body["code"] == "invalid_selection"
    assert body["field_path"] == "nlg"


def test_create_session_rejects_unknown_pack(client):
    response = client.post(
        "/sessions", json={"selections": DEFAULT_SELECTIONS, "pack": "citypack"}
    )
    assert response.status_code == 400
    assert response.json()["field_path"] == "pack"


def test_rule_policy_requires_tracker(client):
    response = client.post(
        "/sessions",
        json={"selections": {**DEFAULT_SELECTIONS, "dst": "none"}, "pack": "synthetic"},
    )
    assert response.status_code == 400
    assert response.json()["field_path"] == "dst"


def test_turn_returns_full_stage_trace(client):
    sid = new_session(client)
    response = client.post(
        f"/sessions/{sid}/turns",
        json={"utterance": "I want a hotel with area north."},
    )
    trace = response.json()
    assert trace["nlu_acts"] == ["Inform-Hotel-Area-north"]
    assert trace["belief"]["active_domain"] == "Hotel"
    assert trace["belief"]["domains"]["Hotel"]["constraints"] == {"Area": "north"}
    assert trace["policy_acts"]
    assert isinstance(trace["response"], str)
    assert trace["overridden_stage"] is None


def test_empty_utterance_greet_fallback(client):
    sid = new_session(client)
    trace = client.post(f"/sessions/{sid}/turns", json={"utterance": ""}).json()
    assert trace["nlu_acts"] == []
    assert trace["policy_acts"] == ["Greet-none-none-none"]
    assert trace["response"] == "Hello! How can I help you?"


def test_identical_session_and_utterance_identical_trace(client):
    utterance = "What is the phone number of the hotel?"
    traces = []
    for _ in range(2):
        sid = new_session(client)
        client.post(f"/sessions/{sid}/turns",
                    json={"utterance": "I want a hotel with area north."})
        traces.append(
            client.post(f"/sessions/{sid}/turns", json={"utterance": utterance}).json()
        )
    assert traces[0] == traces[1]


def test_actless_system_rejects_utterance(client):
    sid = new_session(client, {"nlu": "none", "dst": "rule", "policy": "rule",
                               "nlg": "template"})
    response = client.post(f"/sessions/{sid}/turns", json={"utterance": "hello"})
    assert response.status_code == 400
    assert response.json()["code"] == "type_mismatch"


def test_unknown_session_404(client):
    assert client.post("/sessions/zzz/turns", json={"utterance": "x"}).status_code == 404
    assert client.get("/sessions/zzz/history").status_code == 404


def test_history_ordering_and_close(client):
    sid = new_session(client)
    client.post(f"/sessions/{sid}/turns", json={"utterance": "I want a hotel with area north."})
    client.post(f"/sessions/{sid}/turns", json={"utterance": "What is the phone number of the hotel?"})
    history = client.get(f"/sessions/{sid}/history").json()
    assert [t["turn_index"] for t in history["turns"]] == [0, 1]
    assert history["status"] == "awaiting_user"
    assert client.delete(f"/sessions/{sid}").json()["status"] == "closed"
    # closed sessions stay readable but reject new turns
    assert client.get(f"/sessions/{sid}/history").status_code == 200
    response = client.post(f"/sessions/{sid}/turns", json={"utterance": "hi"})
    assert response.status_code == 409


# --- override ------------------------------------------------------------------------

def test_override_requires_a_turn(client):
    sid = new_session(client)
    response = client.post(
        f"/sessions/{sid}/turns/last/override",
        json={"stage": "nlu", "output": []},
    )
    assert response.status_code == 409
    assert response.json()["code"] == "no_turn_to_correct"


def test_override_validates_output_schema(client):
    sid = new_session(client)
    client.post(f"/sessions/{sid}/turns", json={"utterance": "hello"})
    response = client.post(
        f"/sessions/{sid}/turns/last/override",
        json={"stage": "nlu", "output": ["NotAnIntent-Hotel-Area-north"]},
    )
    assert response.status_code == 400
    body = response.json()
    assert body["code"] == "schema_validation"
    assert body["field_path"] == "output[0]"
    response = client.post(
        f"/sessions/{sid}/turns/last/override",
        json={"stage": "dst", "output": {"domains": "no"}},
    )
    assert response.status_code == 400
    assert response.json()["field_path"] == "output.domains"


def test_override_nlu_redirects_domain(client):
    sid = new_session(client)
    client.post(f"/sessions/{sid}/turns",
                json={"utterance": "What is the phone number of the restaurant?"})
    trace = client.post(
        f"/sessions/{sid}/turns/last/override",
        json={"stage": "nlu", "output": ["Request-Hotel-Phone-?"]},
    ).json()
    assert trace["overridden_stage"] == "nlu"
    assert trace["nlu_acts"] == ["Request-Hotel-Phone-?"]
    assert all("Hotel" in act for act in trace["policy_acts"])
    assert "hotel" in trace["response"]
    history = client.get(f"/sessions/{sid}/history").json()
    assert history["turns"][-1]["overridden_stage"] == "nlu"


def test_override_nlg_changes_only_response(client):
    sid = new_session(client)
    before = client.post(
        f"/sessions/{sid}/turns",
        json={"utterance": "I want a hotel with area north."},
    ).json()
    after = client.post(
        f"/sessions/{sid}/turns/last/override",
        json={"stage": "nlg", "output": "Noted, keep going."},
    ).json()
    assert after["response"] == "Noted, keep going."
    assert after["policy_acts"] == before["policy_acts"]
    assert after["nlu_acts"] == before["nlu_acts"]
    assert after["belief"] == before["belief"]


def test_next_turn_proceeds_from_overridden_state(client):
    sid = new_session(client)
    client.post(f"/sessions/{sid}/turns",
                json={"utterance": "What is the phone number of the restaurant?"})
    client.post(
        f"/sessions/{sid}/turns/last/override",
        json={"stage": "nlu", "output": ["Inform-Hotel-Area-north"]},
    )
    trace = client.post(
        f"/sessions/{sid}/turns",
        json={"utterance": "What is the phone number of the hotel?"},
    ).json()
    # the corrected constraint persists into the next turn's belief
    assert trace["belief"]["domains"]["Hotel"]["constraints"] == {"Area": "north"}
    assert any(act.startswith("Inform-Hotel-Phone-") for act in trace["policy_acts"])


def fresh_replay_oracle(pack_path, prefix, observation, stage, corrected):
    """Build an identical agent, replay the prefix, then run the final turn
    with the corrected output substituted directly."""
    agent = build_system_agent(pack_path, SystemConfig())
    agent.init_session()
    for utterance in prefix:
        agent.respond(utterance)
    if stage == "nlu" or stage == "policy":
        corrected_value = [act_from_json(a) for a in corrected]
    elif stage == "dst":
        corrected_value = BeliefState.from_dict(corrected)
    else:
        corrected_value = corrected
    trace = run_stages_with_override(agent, observation, stage, corrected_value)
    return trace.to_dict()


UTTERANCE_POOL = [
    "I want a hotel with area north.",
    "I want a hotel with parking yes.",
    "What is the phone number of the hotel?",
    "What is the postcode of the hotel?",
    "I want a restaurant with food type italian.",
    "What is the address of the restaurant?",
    "Hello!",
]


def test_override_equals_fresh_replay_on_scripted_sessions(client, pack_path):
    rng = random.Random(2718)
    for _ in range(12):
        prefix = [rng.choice(UTTERANCE_POOL) for _ in range(rng.randint(0, 3))]
        observation = rng.choice(UTTERANCE_POOL)
        stage = rng.choice(["nlu", "dst", "policy", "nlg"])
        if stage == "nlu":
            corrected = ["Request-Hotel-Phone-?"]
        elif stage == "policy":
            corrected = ["Inform-Hotel-Area-north"]
        elif stage == "dst":
            corrected = {
                "active_domain": "Hotel",
                "domains": {"Hotel": {"constraints": {"Area": "south"},
                                      "requested": ["Post"], "recommended": False}},
            }
        else:
            corrected = "Manually corrected response."

        sid = new_session(client)
        for utterance in prefix:
            client.post(f"/sessions/{sid}/turns", json={"utterance": utterance})
        client.post(f"/sessions/{sid}/turns", json={"utterance": observation})
        got = client.post(
            f"/sessions/{sid}/turns/last/override",
            json={"stage": stage, "output": corrected},
        ).json()
        expected = fresh_replay_oracle(pack_path, prefix, observation, stage, corrected)
        got.pop("turn_index")
        assert got == expected
