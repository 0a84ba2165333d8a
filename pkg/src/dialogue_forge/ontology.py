"""Domain packs: declarative schemas, the entity database, and goal sampling.

A domain pack is a directory holding ``schema.json`` (array of domain schema
records), ``database.json`` (domain name to entity array), and
``templates.json`` (phrase templates used by the language stages).  A
synthetic four-domain pack ships with the package for desk-scale simulation.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

WILDCARD = "dontcare"

Entity = dict[str, str]


class SchemaViolationError(ValueError):
    """A pack file contradicts its own schema declarations."""


class UnknownDomainError(KeyError):
    pass


class UnknownSlotError(KeyError):
    pass


class UnsatisfiableDependencyError(RuntimeError):
    """No entity in the dependent domain carries the copied slot value."""


@dataclass(frozen=True)
class DomainSchema:
    """Declares a domain's constrainable slots (with finite vocabularies),
    its requestable slots, and the slot that identifies an entity."""

    name: str
    informable_slots: dict[str, tuple[str, ...]]
    requestable_slots: tuple[str, ...]
    key_slot: str

    def all_slots(self) -> tuple[str, ...]:
        seen = dict.fromkeys(list(self.informable_slots) + list(self.requestable_slots))
        return tuple(seen)


@dataclass(frozen=True)
class Database:
    """Entities per domain, in file order, plus the schemas they satisfy."""

    entities: dict[str, tuple[Entity, ...]]
    schemas: dict[str, DomainSchema]

    def domains(self) -> tuple[str, ...]:
        return tuple(self.schemas)


def _validate_schema(raw: Mapping[str, Any]) -> DomainSchema:
    name = raw.get("name")
    if not name or not isinstance(name, str):
        raise SchemaViolationError(f"schema record without a domain name: {raw!r}")
    informable = raw.get("informable_slots")
    if not isinstance(informable, dict) or not informable:
        raise SchemaViolationError(f"domain {name}: informable_slots must be a non-empty mapping")
    vocab: dict[str, tuple[str, ...]] = {}
    for slot, values in informable.items():
        if not isinstance(values, list) or not values:
            raise SchemaViolationError(
                f"domain {name}: slot {slot} needs a non-empty value vocabulary"
            )
        vocab[slot] = tuple(str(v) for v in values)
    requestable = tuple(raw.get("requestable_slots", []))
    if not requestable:
        raise SchemaViolationError(f"domain {name}: requestable_slots must be non-empty")
    key_slot = raw.get("key_slot")
    if key_slot not in requestable and key_slot not in vocab:
        raise SchemaViolationError(
            f"domain {name}: key_slot {key_slot!r} is not a declared slot"
        )
    return DomainSchema(
        name=name,
        informable_slots=vocab,
        requestable_slots=requestable,
        key_slot=key_slot,
    )


def _validate_entity(schema: DomainSchema, entity: Mapping[str, Any], index: int) -> Entity:
    domain = schema.name
    declared = set(schema.all_slots())
    got = set(entity)
    missing = declared - got
    if missing:
        raise SchemaViolationError(
            f"domain {domain}: entity #{index} missing slots {sorted(missing)}"
        )
    extra = got - declared
    if extra:
        raise SchemaViolationError(
            f"domain {domain}: entity #{index} has undeclared slots {sorted(extra)}"
        )
    clean: Entity = {}
    for slot, value in entity.items():
        value = str(value)
        if "-" in value or ";" in value:
            raise SchemaViolationError(
                f"domain {domain}: entity #{index} slot {slot} value {value!r} "
                "contains a reserved character"
            )
        if slot in schema.informable_slots and value not in schema.informable_slots[slot]:
            raise SchemaViolationError(
                f"domain {domain}: entity #{index} slot {slot} value {value!r} "
                "is outside the declared vocabulary"
            )
        clean[slot] = value
    return clean


def load_domain_pack(path: str | Path) -> tuple[list[DomainSchema], Database]:
    """Load and validate a pack directory; deterministic and order-preserving."""
    pack_dir = Path(path)
    schema_file = pack_dir / "schema.json"
    db_file = pack_dir / "database.json"
    if not schema_file.is_file():
        raise FileNotFoundError(f"no schema.json under {pack_dir}")
    if not db_file.is_file():
        raise FileNotFoundError(f"no database.json under {pack_dir}")

    raw_schemas = json.loads(schema_file.read_text(encoding="utf-8"))
    if not isinstance(raw_schemas, list):
        raise SchemaViolationError("schema.json must hold an array of domain records")
    schemas = [_validate_schema(r) for r in raw_schemas]
    by_name = {s.name: s for s in schemas}
    if len(by_name) != len(schemas):
        raise SchemaViolationError("duplicate domain names in schema.json")

    raw_db = json.loads(db_file.read_text(encoding="utf-8"))
    entities: dict[str, tuple[Entity, ...]] = {}
    for domain, rows in raw_db.items():
        schema = by_name.get(domain)
        if schema is None:
            raise SchemaViolationError(f"database.json lists unknown domain {domain}")
        validated = tuple(
            _validate_entity(schema, row, i) for i, row in enumerate(rows)
        )
        keys = [e[schema.key_slot] for e in validated]
        if len(set(keys)) != len(keys):
            raise SchemaViolationError(f"domain {domain}: duplicate {schema.key_slot} values")
        entities[domain] = validated
    for domain in by_name:
        if not entities.get(domain):
            raise SchemaViolationError(f"domain {domain} has no entities")
    return schemas, Database(entities=entities, schemas=by_name)


def bundled_pack_path() -> Path:
    """Filesystem location of the synthetic pack shipped with the package."""
    return Path(resources.files("dialogue_forge").joinpath("data", "synthetic_pack"))


def query(db: Database, domain: str, constraints: Mapping[str, str]) -> list[Entity]:
    """All entities of ``domain`` matching every constraint by string
    equality; the value ``dontcare`` matches anything.  Result order is
    database file order."""
    if domain not in db.schemas:
        raise UnknownDomainError(domain)
    schema = db.schemas[domain]
    for slot in constraints:
        if slot not in schema.informable_slots:
            raise UnknownSlotError(f"{domain}.{slot}")
    result = []
    for entity in db.entities[domain]:
        if all(v == WILDCARD or entity[s] == v for s, v in constraints.items()):
            result.append(entity)
    return result


@dataclass(frozen=True)
class SubGoal:
    domain: str
    constraints: dict[str, str]
    requests: tuple[str, ...]
    dependency: tuple[str, str] | None = None  # (source domain, shared slot)

    def to_dict(self) -> dict[str, Any]:
        return {
            "domain": self.domain,
            "constraints": dict(self.constraints),
            "requests": list(self.requests),
            "dependency": list(self.dependency) if self.dependency else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SubGoal":
        dep = data.get("dependency")
        return cls(
            domain=data["domain"],
            constraints=dict(data["constraints"]),
            requests=tuple(data["requests"]),
            dependency=tuple(dep) if dep else None,
        )


@dataclass(frozen=True)
class UserGoal:
    """An ordered list of per-domain sub-goals: constraints to state and
    slots to ask about, with optional cross-domain copied constraints."""

    sub_goals: tuple[SubGoal, ...]

    def domains(self) -> tuple[str, ...]:
        return tuple(sg.domain for sg in self.sub_goals)

    def sub_goal(self, domain: str) -> SubGoal | None:
        for sg in self.sub_goals:
            if sg.domain == domain:
                return sg
        return None

    def request_pairs(self) -> list[tuple[str, str]]:
        return [(sg.domain, s) for sg in self.sub_goals for s in sg.requests]

    def to_dict(self) -> dict[str, Any]:
        return {"sub_goals": [sg.to_dict() for sg in self.sub_goals]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "UserGoal":
        return cls(sub_goals=tuple(SubGoal.from_dict(s) for s in data["sub_goals"]))


@dataclass(frozen=True)
class GoalConfig:
    min_domains: int = 1
    max_domains: int = 3
    min_constraints: int = 1
    max_constraints: int = 3
    min_requests: int = 1
    max_requests: int = 3
    dependency_probability: float = 0.6

    def to_dict(self) -> dict[str, Any]:
        return {
            "min_domains": self.min_domains,
            "max_domains": self.max_domains,
            "min_constraints": self.min_constraints,
            "max_constraints": self.max_constraints,
            "min_requests": self.min_requests,
            "max_requests": self.max_requests,
            "dependency_probability": self.dependency_probability,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GoalConfig":
        return cls(**{k: data[k] for k in cls().to_dict() if k in data})


_DEPENDENCY_RETRIES = 8


def _sample_sub_goal(
    schema: DomainSchema,
    entity: Entity,
    rng: random.Random,
    config: GoalConfig,
    forced_constraints: dict[str, str] | None = None,
    dependency: tuple[str, str] | None = None,
) -> SubGoal:
    informables = list(schema.informable_slots)
    forced = dict(forced_constraints or {})
    free = [s for s in informables if s not in forced]
    lo = max(config.min_constraints, len(forced))
    hi = min(config.max_constraints, len(informables))
    count = rng.randint(min(lo, hi), hi)
    chosen = rng.sample(free, max(0, count - len(forced)))
    constraints = dict(forced)
    for slot in chosen:
        constraints[slot] = entity[slot]
    eligible = [s for s in schema.requestable_slots if s not in constraints]
    r_hi = min(config.max_requests, len(eligible))
    r_lo = min(config.min_requests, r_hi)
    requests = tuple(rng.sample(eligible, rng.randint(r_lo, r_hi)))
    return SubGoal(
        domain=schema.name,
        constraints=constraints,
        requests=requests,
        dependency=dependency,
    )


def generate_goal(
    schemas: Sequence[DomainSchema],
    db: Database,
    rng: random.Random,
    config: GoalConfig | None = None,
) -> UserGoal:
    """Sample a satisfiable multi-domain goal.

    Construction is entity-first: each sub-goal's constraints are read off a
    concrete database entity, so a matching entity always exists.  With
    ``dependency_probability`` a later sub-goal copies one shared-slot value
    from an earlier sub-goal's entity, and its own entity is re-sampled among
    the matches so satisfiability is preserved.
    """
    config = config or GoalConfig()
    domains = [s.name for s in schemas]
    for d in domains:
        if not db.entities.get(d):
            raise ValueError(f"domain {d} has no entities to sample from")
    k = rng.randint(config.min_domains, min(config.max_domains, len(domains)))
    chosen = rng.sample(domains, k)

    dep_target = -1
    dep_source = -1
    if k >= 2 and rng.random() < config.dependency_probability:
        dep_target = rng.randrange(1, k)
        dep_source = rng.randrange(0, dep_target)

    sub_goals: list[SubGoal] = []
    chosen_entities: list[Entity] = []
    for i, domain in enumerate(chosen):
        schema = db.schemas[domain]
        if i == dep_target:
            source_schema = db.schemas[chosen[dep_source]]
            shared = [
                s for s in source_schema.informable_slots if s in schema.informable_slots
            ]
            entity, sub = None, None
            for attempt in range(_DEPENDENCY_RETRIES):
                if not shared:
                    break
                slot = shared[rng.randrange(len(shared))]
                value = chosen_entities[dep_source][slot]
                matches = [e for e in db.entities[domain] if e[slot] == value]
                if matches:
                    entity = matches[rng.randrange(len(matches))]
                    sub = _sample_sub_goal(
                        schema,
                        entity,
                        rng,
                        config,
                        forced_constraints={slot: value},
                        dependency=(chosen[dep_source], slot),
                    )
                    break
            if sub is None:
                if shared:
                    raise UnsatisfiableDependencyError(
                        f"no entity in {domain} shares a {shared!r} value with "
                        f"{chosen[dep_source]}"
                    )
                entity = db.entities[domain][rng.randrange(len(db.entities[domain]))]
                sub = _sample_sub_goal(schema, entity, rng, config)
        else:
            entity = db.entities[domain][rng.randrange(len(db.entities[domain]))]
            sub = _sample_sub_goal(schema, entity, rng, config)
        sub_goals.append(sub)
        chosen_entities.append(entity)
    return UserGoal(sub_goals=tuple(sub_goals))
