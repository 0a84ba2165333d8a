"""HTTP service for interactive system debugging.

A browser client assembles a system from the component registry, converses
with it turn by turn, inspects every stage output, and can correct the most
recent turn's output at any stage; the turn is then rerun from its pre-turn
state snapshot with the correction substituted and all downstream stages
recomputed.

Endpoints (JSON bodies, UTF-8):

*   ``GET  /registry``
*   ``POST /sessions``                         body: stage selections + pack
*   ``POST /sessions/{id}/turns``              body: ``{"utterance": ...}``
*   ``POST /sessions/{id}/turns/last/override``  body: ``{"stage", "output"}``
*   ``GET  /sessions/{id}/history``
*   ``DELETE /sessions/{id}``

Errors carry ``{"code", "message", "field_path"?}``.
"""

from __future__ import annotations

import json
import os
import random
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, RedirectResponse
from fastapi.staticfiles import StaticFiles

from .core import BeliefState, DialogueAct, MalformedActError, act_from_json
from .ontology import bundled_pack_path, load_domain_pack
from .pipeline import (
    NoiseConfig,
    NoisyNLU,
    PatternNLU,
    PipelineAgent,
    RuleDST,
    RulePolicy,
    SlotWithholdingPolicy,
    StageTrace,
    TemplateNLG,
    load_template_table,
    standard_confusion_targets,
)

ENV_REGISTRY = "DIALOGUE_FORGE_REGISTRY"

STAGES = ("nlu", "dst", "policy", "nlg")

STAGE_OUTPUT_SCHEMAS: dict[str, Any] = {
    "nlu": {
        "type": "array",
        "items": {
            "oneOf": [
                {"type": "string", "pattern": "^[^-]+-[^-]+-[^-]+-.+$"},
                {"type": "array", "minItems": 4, "maxItems": 4, "items": {"type": "string"}},
            ]
        },
        "description": "dialogue acts, each 'Intent-Domain-Slot-Value' or a 4-element array",
    },
    "dst": {
        "type": "object",
        "required": ["active_domain", "domains"],
        "properties": {
            "active_domain": {"type": ["string", "null"]},
            "domains": {
                "type": "object",
                "additionalProperties": {
                    "type": "object",
                    "properties": {
                        "constraints": {"type": "object", "additionalProperties": {"type": "string"}},
                        "requested": {"type": "array", "items": {"type": "string"}},
                        "recommended": {"type": "boolean"},
                    },
                },
            },
        },
        "description": "belief state: per-domain constraints and requested slots",
    },
    "policy": {"$ref": "#/nlu"},
    "nlg": {"type": "string", "description": "the system response utterance"},
}


class RegistryError(ValueError):
    """The component registry file is invalid."""


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, field_path: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field_path = field_path

    def body(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"code": self.code, "message": self.message}
        if self.field_path is not None:
            payload["field_path"] = self.field_path
        return payload


_KNOWN_IMPLEMENTATIONS = {
    "nlu": ("pattern", "noisy-pattern", "none"),
    "dst": ("rule", "none"),
    "policy": ("rule",),
    "nlg": ("template", "none"),
}


@dataclass
class ComponentRegistry:
    """Available stage implementations and dataset packs, from a config file."""

    packs: dict[str, str]
    stages: dict[str, list[dict[str, Any]]]
    loaded_packs: dict[str, tuple] = field(default_factory=dict)

    def stage_option(self, stage: str, name: str) -> dict[str, Any] | None:
        for option in self.stages.get(stage, []):
            if option["name"] == name:
                return option
        return None

    def view(self) -> dict[str, Any]:
        return {
            "packs": sorted(self.packs),
            "stages": {
                stage: [
                    {"name": o["name"], "config": o.get("config", {})}
                    for o in options
                ]
                for stage, options in self.stages.items()
            },
            "schemas": STAGE_OUTPUT_SCHEMAS,
        }


def default_registry_path() -> Path:
    from importlib import resources

    return Path(resources.files("dialogue_forge").joinpath("data", "registry.json"))


def load_registry(path: str | Path | None = None) -> ComponentRegistry:
    """Load and validate the registry; every pack is opened and every stage
    implementation name checked, so a bad file fails at startup."""
    if path is None:
        path = os.environ.get(ENV_REGISTRY) or default_registry_path()
    path = Path(path)
    if not path.is_file():
        raise RegistryError(f"registry file {path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RegistryError(f"registry file {path} is not valid JSON: {exc}") from exc

    packs = {}
    for name, location in dict(raw.get("packs", {})).items():
        packs[name] = str(location)
    if not packs:
        raise RegistryError("registry declares no dataset packs")

    stages: dict[str, list[dict[str, Any]]] = {}
    for stage in STAGES:
        options = raw.get("stages", {}).get(stage, [])
        if not options:
            raise RegistryError(f"registry declares no options for stage {stage!r}")
        for option in options:
            name = option.get("name")
            if name not in _KNOWN_IMPLEMENTATIONS[stage]:
                raise RegistryError(
                    f"unknown implementation {name!r} for stage {stage!r}"
                )
        stages[stage] = [dict(o) for o in options]

    registry = ComponentRegistry(packs=packs, stages=stages)
    for name, location in packs.items():
        pack_dir = bundled_pack_path() if location == "builtin" else Path(location)
        try:
            schemas, db = load_domain_pack(pack_dir)
            templates = load_template_table(pack_dir, db.schemas)
        except Exception as exc:
            raise RegistryError(f"pack {name!r} failed to load: {exc}") from exc
        registry.loaded_packs[name] = (schemas, db, templates, str(pack_dir))
    return registry


def _build_agent(registry: ComponentRegistry, selections: Mapping[str, str], pack: str) -> PipelineAgent:
    if pack not in registry.loaded_packs:
        raise ApiError(400, "invalid_selection", f"unknown pack {pack!r}", "pack")
    schemas, db, templates, _ = registry.loaded_packs[pack]

    chosen: dict[str, dict[str, Any]] = {}
    for stage in STAGES:
        name = selections.get(stage)
        if name is None:
            raise ApiError(400, "invalid_selection", f"no selection for stage {stage!r}", stage)
        option = registry.stage_option(stage, name)
        if option is None:
            raise ApiError(
                400,
                "invalid_selection",
                f"{name!r} is not an available {stage} implementation",
                stage,
            )
        chosen[stage] = option

    if chosen["policy"]["name"] == "rule" and chosen["dst"]["name"] == "none":
        raise ApiError(
            400,
            "invalid_selection",
            "the rule policy needs a belief state; select the rule tracker",
            "dst",
        )

    nlu_name = chosen["nlu"]["name"]
    if nlu_name == "none":
        nlu = None
    else:
        nlu = PatternNLU(templates, speaker_side="user")
        if nlu_name == "noisy-pattern":
            config = chosen["nlu"].get("config", {})
            noise = NoiseConfig.from_dict(config)
            if not noise.domain_targets and not noise.slot_targets:
                domain_targets, slot_targets = standard_confusion_targets(db.schemas)
                noise = NoiseConfig(
                    domain_confusion_rate=noise.domain_confusion_rate,
                    slot_confusion_rate=noise.slot_confusion_rate,
                    drop_rate=noise.drop_rate,
                    domain_targets=domain_targets,
                    slot_targets=slot_targets,
                )
            nlu = NoisyNLU(nlu, noise, random.Random(config.get("seed", 0)))

    dst = RuleDST(db.schemas) if chosen["dst"]["name"] == "rule" else None

    policy = RulePolicy(db)
    withhold = chosen["policy"].get("config", {}).get("withhold_slots", [])
    if withhold:
        policy = SlotWithholdingPolicy(policy, withhold)

    nlg = TemplateNLG(templates, side="system") if chosen["nlg"]["name"] == "template" else None
    return PipelineAgent(nlu, dst, policy, nlg, name="sys")


STATUS_AWAITING_USER = "awaiting_user"
STATUS_AWAITING_CORRECTION = "awaiting_correction"
STATUS_CLOSED = "closed"


@dataclass
class LiveSession:
    id: str
    agent: PipelineAgent
    selections: dict[str, str]
    pack: str
    status: str = STATUS_AWAITING_USER
    history: list[dict[str, Any]] = field(default_factory=list)
    snapshots: list[Any] = field(default_factory=list)  # pre-turn, by turn index
    lock: threading.Lock = field(default_factory=threading.Lock)


def _parse_acts_payload(payload: Any, stage: str) -> list[DialogueAct]:
    if not isinstance(payload, list):
        raise ApiError(
            400, "schema_validation", f"{stage} output must be an array of acts", "output"
        )
    acts = []
    for i, item in enumerate(payload):
        try:
            acts.append(act_from_json(item))
        except MalformedActError as exc:
            raise ApiError(400, "schema_validation", str(exc), f"output[{i}]")
    return acts


def _parse_belief_payload(payload: Any) -> BeliefState:
    if not isinstance(payload, dict):
        raise ApiError(400, "schema_validation", "belief state must be an object", "output")
    if "domains" not in payload:
        raise ApiError(400, "schema_validation", "belief state needs 'domains'", "output.domains")
    active = payload.get("active_domain")
    if active is not None and not isinstance(active, str):
        raise ApiError(
            400, "schema_validation", "active_domain must be a string or null",
            "output.active_domain",
        )
    domains = payload["domains"]
    if not isinstance(domains, dict):
        raise ApiError(400, "schema_validation", "'domains' must be an object", "output.domains")
    for d, belief in domains.items():
        if not isinstance(belief, dict):
            raise ApiError(
                400, "schema_validation", f"domain {d!r} must be an object",
                f"output.domains.{d}",
            )
        constraints = belief.get("constraints", {})
        if not isinstance(constraints, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in constraints.items()
        ):
            raise ApiError(
                400, "schema_validation", "constraints must map slot to value",
                f"output.domains.{d}.constraints",
            )
        requested = belief.get("requested", [])
        if not isinstance(requested, list) or not all(isinstance(s, str) for s in requested):
            raise ApiError(
                400, "schema_validation", "requested must be a list of slot names",
                f"output.domains.{d}.requested",
            )
    return BeliefState.from_dict(payload)


def run_stages_with_override(
    agent: PipelineAgent,
    observation: str,
    stage: str | None = None,
    corrected: Any = None,
) -> StageTrace:
    """Run the agent's stage sequence, substituting ``corrected`` for the
    named stage's output and recomputing everything downstream.

    With ``stage=None`` this is exactly a normal response.  A substituted
    stage contributes only its declared output; its internal bookkeeping
    (such as the policy clearing answered requests) is skipped, which is
    also how the fresh-replay oracle behaves.
    """
    if agent.nlu is not None:
        nlu_acts: list[DialogueAct] | None = agent.nlu.parse(observation)
    else:
        nlu_acts = None
    if stage == "nlu":
        nlu_acts = corrected
    acts_in = nlu_acts if nlu_acts is not None else []

    belief = None
    if agent.dst is not None:
        agent.state = agent.dst.update(agent.state, acts_in)
        if stage == "dst":
            agent.state = corrected.clone()
        belief = agent.state.clone()
        policy_input: Any = agent.state
    else:
        policy_input = acts_in

    if stage == "policy":
        acts_out = list(corrected)
    else:
        result = agent.policy.respond(policy_input)
        if isinstance(result, tuple):
            acts_out, new_state = result
            if new_state is not None and agent.dst is not None:
                agent.state = new_state
        else:
            acts_out = result

    if agent.nlg is not None:
        utterance = corrected if stage == "nlg" else agent.nlg.generate(acts_out)
    else:
        utterance = None

    return StageTrace(
        observation=observation,
        nlu_acts=None if agent.nlu is None else list(acts_in),
        belief=belief,
        policy_acts=list(acts_out),
        utterance=utterance,
        overridden_stage=stage,
    )


class DebugService:
    """Session bookkeeping behind the HTTP endpoints."""

    def __init__(self, registry: ComponentRegistry):
        self.registry = registry
        self.sessions: dict[str, LiveSession] = {}
        self._lock = threading.Lock()

    def list_registry(self) -> dict[str, Any]:
        return self.registry.view()

    def create_session(self, selections: Mapping[str, str], pack: str) -> LiveSession:
        agent = _build_agent(self.registry, selections, pack)
        agent.init_session()
        session = LiveSession(
            id=uuid.uuid4().hex[:12],
            agent=agent,
            selections=dict(selections),
            pack=pack,
        )
        with self._lock:
            self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> LiveSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return session

    def post_user_turn(self, session_id: str, utterance: str) -> dict[str, Any]:
        session = self.get(session_id)
        with session.lock:
            if session.status == STATUS_CLOSED:
                raise ApiError(409, "wrong_status", "the session is closed")
            if session.agent.nlu is None:
                raise ApiError(
                    400,
                    "type_mismatch",
                    "this system has no understanding stage and cannot accept utterances",
                )
            snapshot = session.agent.state_snapshot()
            trace = run_stages_with_override(session.agent, utterance)
            session.snapshots.append(snapshot)
            entry = {"turn_index": len(session.history), **trace.to_dict()}
            session.history.append(entry)
            return entry

    def override_stage(self, session_id: str, stage: str, output: Any) -> dict[str, Any]:
        session = self.get(session_id)
        with session.lock:
            if session.status == STATUS_CLOSED:
                raise ApiError(409, "wrong_status", "the session is closed")
            if not session.history:
                raise ApiError(409, "no_turn_to_correct", "no turn has happened yet")
            if stage not in STAGES:
                raise ApiError(400, "schema_validation", f"unknown stage {stage!r}", "stage")
            agent = session.agent
            present = {
                "nlu": agent.nlu is not None,
                "dst": agent.dst is not None,
                "policy": True,
                "nlg": agent.nlg is not None,
            }
            if not present[stage]:
                raise ApiError(
                    400, "schema_validation",
                    f"this system has no {stage} stage to correct", "stage",
                )
            if stage in ("nlu", "policy"):
                corrected: Any = _parse_acts_payload(output, stage)
            elif stage == "dst":
                corrected = _parse_belief_payload(output)
            else:
                if not isinstance(output, str):
                    raise ApiError(
                        400, "schema_validation", "nlg output must be a string", "output"
                    )
                corrected = output

            observation = session.history[-1]["observation"]
            agent.state_restore(session.snapshots[-1])
            trace = run_stages_with_override(agent, observation, stage, corrected)
            entry = {"turn_index": len(session.history) - 1, **trace.to_dict()}
            session.history[-1] = entry
            return entry

    def get_history(self, session_id: str) -> dict[str, Any]:
        session = self.get(session_id)
        return {
            "id": session.id,
            "status": session.status,
            "pack": session.pack,
            "selections": session.selections,
            "turns": list(session.history),
        }

    def close(self, session_id: str) -> dict[str, Any]:
        session = self.get(session_id)
        with session.lock:
            session.status = STATUS_CLOSED
        return {"id": session.id, "status": session.status}


def create_app(
    registry: ComponentRegistry | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    registry = registry or load_registry()
    service = DebugService(registry)
    app = FastAPI(title="dialogue-forge debug service")
    app.state.service = service

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.get("/registry")
    def get_registry():
        return service.list_registry()

    @app.post("/sessions")
    async def post_sessions(request: Request):
        body = await request.json()
        selections = body.get("selections")
        if not isinstance(selections, dict):
            raise ApiError(400, "schema_validation", "'selections' object required", "selections")
        pack = body.get("pack")
        if not isinstance(pack, str):
            raise ApiError(400, "schema_validation", "'pack' name required", "pack")
        session = service.create_session(selections, pack)
        return {"id": session.id, "status": session.status}

    @app.post("/sessions/{session_id}/turns")
    async def post_turn(session_id: str, request: Request):
        body = await request.json()
        utterance = body.get("utterance")
        if not isinstance(utterance, str):
            raise ApiError(400, "schema_validation", "'utterance' string required", "utterance")
        return service.post_user_turn(session_id, utterance)

    @app.post("/sessions/{session_id}/turns/last/override")
    async def post_override(session_id: str, request: Request):
        body = await request.json()
        stage = body.get("stage")
        if not isinstance(stage, str):
            raise ApiError(400, "schema_validation", "'stage' name required", "stage")
        if "output" not in body:
            raise ApiError(400, "schema_validation", "'output' required", "output")
        return service.override_stage(session_id, stage, body["output"])

    @app.get("/sessions/{session_id}/history")
    def get_history(session_id: str):
        return service.get_history(session_id)

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        return service.close(session_id)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/")
        def root():
            return RedirectResponse(url="/ui/")

    else:

        @app.get("/")
        def root():
            return {
                "service": "dialogue-forge debug service",
                "ui": "not built; see README for building the frontend",
                "endpoints": ["/registry", "/sessions"],
            }

    return app
