"""Pipeline stages and the agent that composes them.

The four stage kinds are understanding (utterance to acts), state tracking
(acts folded into a belief state), policy (state or acts to response acts),
and generation (acts to an utterance).  The template generator and the
pattern parser are exact inverses of each other, so a noiseless simulation is
a closed loop; misunderstandings enter only through an explicit corruption
wrapper that carries its own random generator.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .core import NONE_FIELD, BeliefState, DialogueAct
from .ontology import Database, DomainSchema, query

USER_SIDE = "user"
SYSTEM_SIDE = "system"


class MissingTemplateError(KeyError):
    """No phrase template exists for an act's (side, intent, domain, slot)."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnosis."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class TemplateTable:
    """Phrase templates keyed by (side, intent, domain, slot).

    Each template is a literal phrase with an optional ``{value}``
    placeholder.  Distinct keys map to distinct phrases, which makes the
    generator injective and the parser its exact inverse.
    """

    def __init__(self, tables: Mapping[str, Any]):
        self._tables = {side: tables.get(side, {}) for side in (USER_SIDE, SYSTEM_SIDE)}
        self._patterns: dict[str, list[tuple[re.Pattern, str, str, str, bool]]] = {}
        self._check_unambiguous()

    def _check_unambiguous(self) -> None:
        for side, intents in self._tables.items():
            seen: dict[str, tuple] = {}
            for intent, domains in intents.items():
                for domain, slots in domains.items():
                    for slot, text in slots.items():
                        key = text.replace("{value}", "\x00")
                        if key in seen and seen[key] != (intent, domain, slot):
                            raise ValueError(
                                f"{side} template {text!r} is used by both "
                                f"{seen[key]} and {(intent, domain, slot)}"
                            )
                        seen[key] = (intent, domain, slot)

    def lookup(self, side: str, intent: str, domain: str, slot: str) -> str:
        try:
            return self._tables[side][intent][domain][slot]
        except KeyError:
            raise MissingTemplateError(f"({side}, {intent}, {domain}, {slot})")

    def patterns(self, side: str) -> list[tuple[re.Pattern, str, str, str, bool]]:
        if side not in self._patterns:
            compiled = []
            for intent, domains in self._tables[side].items():
                for domain, slots in domains.items():
                    for slot, text in slots.items():
                        has_value = "{value}" in text
                        if has_value:
                            head, tail = text.split("{value}", 1)
                            pattern = re.escape(head) + "(?P<value>.+?)" + re.escape(tail)
                        else:
                            pattern = re.escape(text)
                        compiled.append(
                            (re.compile(pattern), intent, domain, slot, has_value)
                        )
            self._patterns[side] = compiled
        return self._patterns[side]


def validate_template_coverage(
    table: "TemplateTable", schemas: Mapping[str, DomainSchema]
) -> None:
    """Every act the pipeline can emit needs a phrase; a hole in the table is
    a pack-authoring mistake and fails at load time, not mid-dialogue."""
    for side in (USER_SIDE, SYSTEM_SIDE):
        table.lookup(side, "Greet", "none", "none")
        table.lookup(side, "Bye", "none", "none")
    for domain, schema in schemas.items():
        table.lookup(SYSTEM_SIDE, "NoOffer", domain, "none")
        for slot in schema.all_slots():
            table.lookup(USER_SIDE, "Inform", domain, slot)
            table.lookup(USER_SIDE, "Request", domain, slot)
            table.lookup(SYSTEM_SIDE, "Inform", domain, slot)
            table.lookup(SYSTEM_SIDE, "Recommend", domain, slot)


def load_template_table(
    pack_path: str | Path, schemas: Mapping[str, DomainSchema] | None = None
) -> TemplateTable:
    path = Path(pack_path) / "templates.json"
    if not path.is_file():
        raise FileNotFoundError(f"no templates.json under {pack_path}")
    table = TemplateTable(json.loads(path.read_text(encoding="utf-8")))
    if schemas is not None:
        validate_template_coverage(table, schemas)
    return table


PHRASE_SEPARATOR = "; "


def template_nlg(table: TemplateTable, acts: Sequence[DialogueAct], side: str) -> str:
    """Render acts to a phrase per act, joined by ``"; "``.

    Injective on valid act lists: distinct act lists give distinct strings.
    """
    if not acts:
        raise ValueError("cannot generate an utterance from an empty act list")
    phrases = []
    for act in acts:
        template = table.lookup(side, act.intent, act.domain, act.slot)
        phrases.append(template.replace("{value}", act.value))
    return PHRASE_SEPARATOR.join(phrases)


def pattern_nlu(table: TemplateTable, utterance: str, side: str) -> list[DialogueAct]:
    """Exact inverse of :func:`template_nlg` on its image.

    ``side`` names the speaker whose templates produced the utterance.
    Unrecognized segments contribute no acts; that silence is itself a
    diagnosable understanding failure, not an error.
    """
    acts: list[DialogueAct] = []
    if not utterance:
        return acts
    for segment in utterance.split(PHRASE_SEPARATOR):
        for pattern, intent, domain, slot, has_value in table.patterns(side):
            m = pattern.fullmatch(segment)
            if not m:
                continue
            if has_value:
                value = m.group("value")
            elif intent == "Request":
                value = "?"
            else:
                value = NONE_FIELD
            try:
                acts.append(DialogueAct(intent, domain, slot, value))
            except ValueError:
                continue
            break
    return acts


@dataclass(frozen=True)
class NoiseConfig:
    """Controlled corruption rates with per-domain and per-slot confusion
    targets.  All-zero rates leave acts untouched."""

    domain_confusion_rate: float = 0.0
    slot_confusion_rate: float = 0.0
    drop_rate: float = 0.0
    domain_targets: dict[str, tuple[str, ...]] = field(default_factory=dict)
    slot_targets: dict[str, dict[str, tuple[str, ...]]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, rate in (
            ("domain_confusion_rate", self.domain_confusion_rate),
            ("slot_confusion_rate", self.slot_confusion_rate),
            ("drop_rate", self.drop_rate),
        ):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {rate}")

    def validate_against(self, schemas: Mapping[str, DomainSchema]) -> None:
        for domain, targets in self.domain_targets.items():
            for t in targets:
                if t not in schemas:
                    raise ValueError(f"confusion target {t!r} is not a pack domain")
        for domain, slots in self.slot_targets.items():
            schema = schemas.get(domain)
            if schema is None:
                raise ValueError(f"slot confusion table names unknown domain {domain!r}")
            known = set(schema.all_slots())
            for slot, targets in slots.items():
                for t in targets:
                    if t not in known:
                        raise ValueError(
                            f"slot confusion target {domain}.{t} is not a pack slot"
                        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "domain_confusion_rate": self.domain_confusion_rate,
            "slot_confusion_rate": self.slot_confusion_rate,
            "drop_rate": self.drop_rate,
            "domain_targets": {d: list(v) for d, v in self.domain_targets.items()},
            "slot_targets": {
                d: {s: list(v) for s, v in slots.items()}
                for d, slots in self.slot_targets.items()
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "NoiseConfig":
        return cls(
            domain_confusion_rate=float(data.get("domain_confusion_rate", 0.0)),
            slot_confusion_rate=float(data.get("slot_confusion_rate", 0.0)),
            drop_rate=float(data.get("drop_rate", 0.0)),
            domain_targets={
                d: tuple(v) for d, v in dict(data.get("domain_targets", {})).items()
            },
            slot_targets={
                d: {s: tuple(v) for s, v in slots.items()}
                for d, slots in dict(data.get("slot_targets", {})).items()
            },
        )


def standard_confusion_targets(
    schemas: Mapping[str, DomainSchema],
) -> tuple[dict[str, tuple[str, ...]], dict[str, dict[str, tuple[str, ...]]]]:
    """Default confusion tables: every other domain, and every other slot of
    the same kind within the domain."""
    domain_targets = {
        d: tuple(o for o in schemas if o != d) for d in schemas
    }
    slot_targets: dict[str, dict[str, tuple[str, ...]]] = {}
    for d, schema in schemas.items():
        per_slot: dict[str, tuple[str, ...]] = {}
        informables = list(schema.informable_slots)
        requestables = list(schema.requestable_slots)
        for s in informables:
            per_slot[s] = tuple(o for o in informables if o != s)
        for s in requestables:
            per_slot[s] = tuple(o for o in requestables if o != s)
        slot_targets[d] = per_slot
    return domain_targets, slot_targets


def corrupt_acts(
    acts: Sequence[DialogueAct], noise: NoiseConfig, rng: random.Random
) -> list[DialogueAct]:
    """Independently per act: drop it, else confuse its domain, else confuse
    its slot, at the configured rates.  Acts whose domain or slot has no
    confusion target pass through unchanged."""
    out: list[DialogueAct] = []
    for act in acts:
        if rng.random() < noise.drop_rate:
            continue
        domain_targets = noise.domain_targets.get(act.domain, ())
        if rng.random() < noise.domain_confusion_rate and domain_targets:
            new_domain = domain_targets[rng.randrange(len(domain_targets))]
            out.append(DialogueAct(act.intent, new_domain, act.slot, act.value))
            continue
        slot_targets = noise.slot_targets.get(act.domain, {}).get(act.slot, ())
        if rng.random() < noise.slot_confusion_rate and slot_targets:
            new_slot = slot_targets[rng.randrange(len(slot_targets))]
            out.append(DialogueAct(act.intent, act.domain, new_slot, act.value))
            continue
        out.append(act)
    return out


def dst_update(
    state: BeliefState,
    user_acts: Sequence[DialogueAct],
    schemas: Mapping[str, DomainSchema],
) -> BeliefState:
    """Fold user acts into a fresh belief state copy.

    Inform sets a constraint (last write wins) and clears any pending request
    for the same slot; Request records a requested slot unless the slot is
    already constrained (constraints win, keeping the two sets disjoint).
    Acts naming unknown domains or slots are skipped so that a misparse
    degrades the dialogue instead of crashing it.  Greet and Bye leave the
    state untouched.  The input state is never mutated.
    """
    new = state.clone()
    for act in user_acts:
        if act.intent in ("Greet", "Bye"):
            continue
        schema = schemas.get(act.domain)
        if schema is None:
            continue
        if act.intent == "Inform":
            if act.slot not in schema.informable_slots:
                continue
            if act.value == NONE_FIELD:
                continue
            belief = new.domain(act.domain)
            belief.constraints[act.slot] = act.value
            if act.slot in belief.requested:
                belief.requested.remove(act.slot)
            new.active_domain = act.domain
        elif act.intent == "Request":
            if act.slot not in schema.all_slots():
                continue
            belief = new.domain(act.domain)
            if act.slot not in belief.constraints and act.slot not in belief.requested:
                belief.requested.append(act.slot)
            new.active_domain = act.domain
    return new


GREET_ACT = DialogueAct("Greet", NONE_FIELD)
BYE_ACT = DialogueAct("Bye", NONE_FIELD)


def rule_policy(
    state: BeliefState, db: Database
) -> tuple[list[DialogueAct], BeliefState]:
    """Answer the active domain from the database.

    With no active domain the reply is a greeting.  If nothing matches the
    tracked constraints the reply is a no-offer announcement.  Otherwise the
    first matching entity (database file order) supplies the values: the
    first time requests are answered for a domain the reply opens with a
    recommendation of the entity's key slot, followed by one inform per
    requested slot.  Answered requests are cleared in the returned state.
    With constraints but no pending requests the policy greets until a
    request arrives, or acknowledges the recommended entity if one exists.
    The policy only commits to an entity while answering requests, so every
    emitted value is consistent with the constraints known at that moment.
    """
    new = state.clone()
    domain = new.active_domain
    if domain is None or domain not in db.schemas:
        return [GREET_ACT], new
    belief = new.domain(domain)
    matches = query(db, domain, belief.constraints)
    if not matches:
        return [DialogueAct("NoOffer", domain)], new
    entity = matches[0]
    key_slot = db.schemas[domain].key_slot
    answerable = [s for s in belief.requested if s in entity]
    if answerable:
        acts: list[DialogueAct] = []
        to_inform = answerable
        if not belief.recommended:
            acts.append(DialogueAct("Recommend", domain, key_slot, entity[key_slot]))
            belief.recommended = True
            # the recommendation already names the entity, so a key-slot
            # request is answered by it, not informed twice
            to_inform = [s for s in answerable if s != key_slot]
        acts.extend(DialogueAct("Inform", domain, s, entity[s]) for s in to_inform)
        belief.requested = [s for s in belief.requested if s not in answerable]
        return acts, new
    if belief.recommended:
        return [DialogueAct("Inform", domain, key_slot, entity[key_slot])], new
    return [GREET_ACT], new


class PatternNLU:
    """Template-inverse understanding stage."""

    def __init__(self, table: TemplateTable, speaker_side: str):
        self.table = table
        self.speaker_side = speaker_side

    def parse(self, utterance: str, context: Sequence[str] = ()) -> list[DialogueAct]:
        return pattern_nlu(self.table, utterance, self.speaker_side)


class NoisyNLU:
    """Corruption wrapper around another understanding stage.

    The wrapped stage stays deterministic; all randomness lives in the
    generator handed to this wrapper.
    """

    def __init__(self, inner, noise: NoiseConfig, rng: random.Random):
        self.inner = inner
        self.noise = noise
        self.rng = rng

    def parse(self, utterance: str, context: Sequence[str] = ()) -> list[DialogueAct]:
        return corrupt_acts(self.inner.parse(utterance, context), self.noise, self.rng)


class RuleDST:
    """Stateless wrapper over :func:`dst_update`; tracks skipped acts for
    debugging."""

    def __init__(self, schemas: Mapping[str, DomainSchema]):
        self.schemas = dict(schemas)
        self.skipped_acts = 0

    def update(self, state: BeliefState, acts: Sequence[DialogueAct]) -> BeliefState:
        for act in acts:
            schema = self.schemas.get(act.domain)
            if act.intent in ("Inform", "Request") and (
                schema is None
                or (act.intent == "Inform" and act.slot not in schema.informable_slots)
                or (act.intent == "Request" and act.slot not in schema.all_slots())
            ):
                self.skipped_acts += 1
        return dst_update(state, acts, self.schemas)


class RulePolicy:
    """Stateless wrapper over :func:`rule_policy`."""

    def __init__(self, db: Database):
        self.db = db

    def respond(self, state: BeliefState) -> tuple[list[DialogueAct], BeliefState]:
        return rule_policy(state, self.db)


class SlotWithholdingPolicy:
    """Diagnostic wrapper that suppresses informs for chosen slots.

    Useful for reproducing known failure shapes: the wrapped system never
    answers the withheld slots, so dialogues needing them loop until the
    turn ceiling.
    """

    def __init__(self, inner, withheld_slots: Sequence[str]):
        self.inner = inner
        self.withheld = set(withheld_slots)

    def respond(self, state: BeliefState) -> tuple[list[DialogueAct], BeliefState]:
        acts, new_state = self.inner.respond(state)
        kept = [
            a
            for a in acts
            if not (a.intent == "Inform" and a.slot in self.withheld)
        ]
        return (kept or [GREET_ACT]), new_state


class TemplateNLG:
    """Template-based generation stage."""

    def __init__(self, table: TemplateTable, side: str):
        self.table = table
        self.side = side

    def generate(self, acts: Sequence[DialogueAct]) -> str:
        return template_nlg(self.table, acts, self.side)


@dataclass
class StageTrace:
    """Every intermediate output of one agent response, for display and
    debugging.  Stages the agent does not have are recorded as ``None``."""

    observation: Any
    nlu_acts: list[DialogueAct] | None
    belief: BeliefState | None
    policy_acts: list[DialogueAct]
    utterance: str | None
    overridden_stage: str | None = None

    @property
    def output(self) -> Any:
        return self.utterance if self.utterance is not None else self.policy_acts

    def to_dict(self) -> dict[str, Any]:
        from .core import acts_to_json

        return {
            "observation": self.observation
            if isinstance(self.observation, (str, type(None)))
            else acts_to_json(self.observation),
            "nlu_acts": None if self.nlu_acts is None else acts_to_json(self.nlu_acts),
            "belief": None if self.belief is None else self.belief.to_dict(),
            "policy_acts": acts_to_json(self.policy_acts),
            "response": self.utterance,
            "overridden_stage": self.overridden_stage,
        }


class PipelineAgent:
    """A speaker assembled from optional understanding, optional tracking,
    a policy, and optional generation.

    With no understanding stage the agent consumes act lists directly; with
    no generation stage it emits act lists.  A system agent keeps a belief
    state; a user agent's state lives inside its policy.
    """

    def __init__(self, nlu, dst, policy, nlg, name: str):
        self.nlu = nlu
        self.dst = dst
        self.policy = policy
        self.nlg = nlg
        self.name = name
        self.state = BeliefState() if dst is not None else None

    def init_session(self, **kwargs) -> None:
        if self.dst is not None:
            self.state = BeliefState()
        if hasattr(self.policy, "init_session"):
            self.policy.init_session(**kwargs)

    def observe(self, observation) -> list[DialogueAct]:
        """The agent's perception of an utterance, without responding or
        changing state."""
        if self.nlu is not None:
            return self.nlu.parse(observation)
        return list(observation)

    def respond(self, observation) -> tuple[Any, StageTrace]:
        if self.nlu is not None:
            if not isinstance(observation, str):
                raise TypeError(
                    f"agent {self.name!r} has an understanding stage and expects "
                    "an utterance string"
                )
            try:
                acts_in = self.nlu.parse(observation)
            except Exception as exc:  # pragma: no cover - defensive
                raise StageError("nlu", exc) from exc
            nlu_acts = list(acts_in)
        else:
            if isinstance(observation, str):
                raise TypeError(
                    f"agent {self.name!r} has no understanding stage and expects "
                    "a dialogue act list"
                )
            from .core import act_from_json

            acts_in = [
                a if isinstance(a, DialogueAct) else act_from_json(a)
                for a in observation
            ]
            nlu_acts = None

        if self.dst is not None:
            try:
                self.state = self.dst.update(self.state, acts_in)
            except Exception as exc:
                raise StageError("dst", exc) from exc
            policy_input = self.state
            # The trace shows the tracker's output, not the policy's later
            # bookkeeping, so a corrected belief can be fed back to the policy.
            belief_snapshot = self.state.clone()
        else:
            policy_input = acts_in
            belief_snapshot = None

        try:
            result = self.policy.respond(policy_input)
        except Exception as exc:
            raise StageError("policy", exc) from exc
        if isinstance(result, tuple):
            acts_out, new_state = result
            if new_state is not None and self.dst is not None:
                self.state = new_state
        else:
            acts_out = result

        if self.nlg is not None:
            try:
                utterance = self.nlg.generate(acts_out)
            except Exception as exc:
                raise StageError("nlg", exc) from exc
        else:
            utterance = None

        trace = StageTrace(
            observation=observation,
            nlu_acts=nlu_acts,
            belief=belief_snapshot,
            policy_acts=list(acts_out),
            utterance=utterance,
        )
        return trace.output, trace

    def state_snapshot(self) -> Any:
        if self.dst is not None:
            return ("belief", self.state.clone())
        if hasattr(self.policy, "snapshot"):
            return ("policy", self.policy.snapshot())
        return ("none", None)

    def state_restore(self, snapshot: Any) -> None:
        kind, payload = snapshot
        if kind == "belief":
            self.state = payload.clone()
        elif kind == "policy":
            self.policy.restore(payload)
