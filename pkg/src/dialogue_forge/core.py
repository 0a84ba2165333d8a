"""Dialogue-act algebra, belief state, and conversation log records.

Every other part of the toolkit (pipeline stages, the user simulator, the
session driver, the analyzer, the debugging service) exchanges these types.
Acts have a canonical hyphen-joined text encoding ``Intent-Domain-Slot-Value``
used in files and reports; structured documents may also carry an act as a
four-element array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

INTENTS = ("Inform", "Request", "Recommend", "NoOffer", "Greet", "Bye")
USER_INTENTS = ("Inform", "Request", "Bye")

NONE_FIELD = "none"
REQUEST_VALUE = "?"

OUTCOME_SUCCESS = "success"
OUTCOME_MAX_TURNS = "failure_max_turns"
OUTCOME_OTHER = "failure_other"
OUTCOMES = (OUTCOME_SUCCESS, OUTCOME_MAX_TURNS, OUTCOME_OTHER)

# "-" is the act-string separator; ";" separates phrases in generated
# utterances.  Neither may appear inside an act field or both codecs break.
_FORBIDDEN_CHARS = ("-", ";", "\n")


class MalformedActError(ValueError):
    """An act string or act construction violates the encoding rules."""


@dataclass(frozen=True, slots=True)
class DialogueAct:
    """One intent-domain-slot-value unit of meaning.

    ``value`` is ``"?"`` for requests and ``"none"`` for valueless acts
    (greetings, goodbyes, no-offer announcements).
    """

    intent: str
    domain: str
    slot: str = NONE_FIELD
    value: str = NONE_FIELD

    def __post_init__(self) -> None:
        if self.intent not in INTENTS:
            raise MalformedActError(f"unknown intent {self.intent!r}")
        for name, part in (
            ("domain", self.domain),
            ("slot", self.slot),
            ("value", self.value),
        ):
            if not part:
                raise MalformedActError(
                    f"{name} must be a non-empty string (use {NONE_FIELD!r})"
                )
            for ch in _FORBIDDEN_CHARS:
                if ch in part:
                    raise MalformedActError(
                        f"{name} {part!r} contains reserved character {ch!r}"
                    )
        if self.intent == "Request" and self.value != REQUEST_VALUE:
            raise MalformedActError("Request acts must carry the value '?'")
        if self.intent != "Request" and self.value == REQUEST_VALUE:
            raise MalformedActError("the value '?' is reserved for Request acts")
        if self.intent in ("Greet", "Bye") and (
            self.slot != NONE_FIELD or self.value != NONE_FIELD
        ):
            raise MalformedActError(f"{self.intent} acts carry no slot or value")


def parse_act_string(s: str) -> DialogueAct:
    """Decode a hyphen-joined act string such as ``Request-Hotel-Post-?``.

    Splits on at most the first three separators; missing slot/value segments
    default to ``"none"``.
    """
    if not s:
        raise MalformedActError("empty act string")
    parts = s.split("-", 3)
    if len(parts) < 2:
        raise MalformedActError(
            f"act string {s!r} must contain at least an intent and a domain"
        )
    intent, domain = parts[0], parts[1]
    slot = parts[2] if len(parts) > 2 else NONE_FIELD
    value = parts[3] if len(parts) > 3 else NONE_FIELD
    return DialogueAct(intent, domain, slot, value)


def format_act_string(act: DialogueAct) -> str:
    """Encode an act in the canonical four-segment hyphen form."""
    return "-".join((act.intent, act.domain, act.slot, act.value))


def act_to_json(act: DialogueAct) -> str:
    return format_act_string(act)


def act_from_json(value: Any) -> DialogueAct:
    """Accept either the hyphen string or a four-element array."""
    if isinstance(value, str):
        return parse_act_string(value)
    if isinstance(value, (list, tuple)) and len(value) == 4:
        return DialogueAct(*[str(p) for p in value])
    raise MalformedActError(f"cannot interpret {value!r} as a dialogue act")


def acts_from_json(values: Iterable[Any]) -> list[DialogueAct]:
    return [act_from_json(v) for v in values]


def acts_to_json(acts: Sequence[DialogueAct]) -> list[str]:
    return [format_act_string(a) for a in acts]


@dataclass
class DomainBelief:
    """What the system believes about one domain: constraints the user stated
    and slots the user asked for.  ``recommended`` records whether an entity
    has already been pitched for the domain."""

    constraints: dict[str, str] = field(default_factory=dict)
    requested: list[str] = field(default_factory=list)
    recommended: bool = False

    def clone(self) -> "DomainBelief":
        return DomainBelief(
            constraints=dict(self.constraints),
            requested=list(self.requested),
            recommended=self.recommended,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "constraints": dict(self.constraints),
            "requested": list(self.requested),
            "recommended": self.recommended,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DomainBelief":
        return cls(
            constraints=dict(data.get("constraints", {})),
            requested=list(data.get("requested", [])),
            recommended=bool(data.get("recommended", False)),
        )


@dataclass
class BeliefState:
    """Per-domain constraints and requested slots, plus the active domain.

    Treated as a value: state updates return fresh copies and never mutate
    their input, so snapshots can be shared freely.
    """

    domains: dict[str, DomainBelief] = field(default_factory=dict)
    active_domain: str | None = None

    def domain(self, name: str) -> DomainBelief:
        """Get-or-create the record for ``name`` (mutates this instance)."""
        if name not in self.domains:
            self.domains[name] = DomainBelief()
        return self.domains[name]

    def clone(self) -> "BeliefState":
        return BeliefState(
            domains={d: b.clone() for d, b in self.domains.items()},
            active_domain=self.active_domain,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "active_domain": self.active_domain,
            "domains": {d: b.to_dict() for d, b in self.domains.items()},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BeliefState":
        return cls(
            domains={
                d: DomainBelief.from_dict(b)
                for d, b in dict(data.get("domains", {})).items()
            },
            active_domain=data.get("active_domain"),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BeliefState):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass
class Turn:
    """One utterance with its semantic bookkeeping.

    ``true_acts`` are the acts the speaker's policy emitted before generation;
    ``parsed_acts`` are what the listener's understanding stage made of the
    utterance.  ``belief_snapshot`` is recorded on system turns only and holds
    the state the policy acted on.
    """

    speaker: str
    utterance: str
    true_acts: list[DialogueAct]
    turn_index: int
    parsed_acts: list[DialogueAct] | None = None
    belief_snapshot: BeliefState | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "speaker": self.speaker,
            "utterance": self.utterance,
            "true_acts": acts_to_json(self.true_acts),
            "parsed_acts": None
            if self.parsed_acts is None
            else acts_to_json(self.parsed_acts),
            "belief": None
            if self.belief_snapshot is None
            else self.belief_snapshot.to_dict(),
            "turn_index": self.turn_index,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Turn":
        return cls(
            speaker=data["speaker"],
            utterance=data["utterance"],
            true_acts=acts_from_json(data["true_acts"]),
            parsed_acts=None
            if data.get("parsed_acts") is None
            else acts_from_json(data["parsed_acts"]),
            belief_snapshot=None
            if data.get("belief") is None
            else BeliefState.from_dict(data["belief"]),
            turn_index=int(data["turn_index"]),
        )


@dataclass
class DialogueLog:
    """A finished simulated dialogue: the goal it pursued, every turn, how it
    ended, and the seed that reproduces it."""

    goal: Any  # ontology.UserGoal; typed loosely to avoid a circular import
    turns: list[Turn]
    outcome: str
    seed: int
    evaluation: Any = None  # session.EvaluationResult, attached at termination

    def user_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.speaker == "user"]

    def system_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.speaker == "system"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "goal": self.goal.to_dict(),
            "turns": [t.to_dict() for t in self.turns],
            "outcome": self.outcome,
            "seed": self.seed,
            "evaluation": None if self.evaluation is None else self.evaluation.to_dict(),
        }

