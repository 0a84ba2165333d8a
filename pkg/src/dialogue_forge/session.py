"""Two-agent conversation driving, evaluation, and seeded batch simulation.

A session alternates a user simulator and a system, user first, logging every
turn with its full stage trace.  The evaluator scores a finished dialogue:
task success (every goal request answered with a value consistent with an
entity matching the goal constraints, before the turn ceiling), inform
precision/recall/F1 over requested slots, and a shaped reward.  The batch
runner reproduces a whole corpus bit-exactly from a base seed, and keeps the
goal sequence a function of the user configuration and seeds alone so that
two different systems can be compared on identical goals.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .core import (
    OUTCOME_MAX_TURNS,
    OUTCOME_OTHER,
    OUTCOME_SUCCESS,
    DialogueLog,
    Turn,
)
from .ontology import (
    Database,
    GoalConfig,
    UserGoal,
    generate_goal,
    load_domain_pack,
    query,
)
from .pipeline import (
    NoiseConfig,
    NoisyNLU,
    PatternNLU,
    PipelineAgent,
    RuleDST,
    RulePolicy,
    SlotWithholdingPolicy,
    TemplateNLG,
    load_template_table,
    standard_confusion_targets,
)
from .simulator import DEFAULT_MAX_ACTS_PER_TURN, AgendaUserPolicy

DEFAULT_MAX_TURNS = 20


class SessionTerminatedError(RuntimeError):
    """next_turn was called on a finished session."""


class CorpusParseError(ValueError):
    def __init__(self, path: str, line_number: int, cause: Exception):
        super().__init__(f"{path}:{line_number}: {cause}")
        self.line_number = line_number


@dataclass(frozen=True)
class EvaluationResult:
    success: bool
    inform_precision: float
    inform_recall: float
    inform_f1: float
    turn_count: int
    reward_total: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "success": self.success,
            "inform_precision": self.inform_precision,
            "inform_recall": self.inform_recall,
            "inform_f1": self.inform_f1,
            "turn_count": self.turn_count,
            "reward_total": self.reward_total,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvaluationResult":
        return cls(
            success=bool(data["success"]),
            inform_precision=float(data["inform_precision"]),
            inform_recall=float(data["inform_recall"]),
            inform_f1=float(data["inform_f1"]),
            turn_count=int(data["turn_count"]),
            reward_total=float(data["reward_total"]),
        )


def candidate_values(db: Database, goal: UserGoal) -> dict[tuple[str, str], set[str]]:
    """For each goal-requested (domain, slot), the values consistent with an
    entity matching all of that domain's goal constraints."""
    values: dict[tuple[str, str], set[str]] = {}
    for sub in goal.sub_goals:
        matches = query(db, sub.domain, sub.constraints)
        for slot in sub.requests:
            values[(sub.domain, slot)] = {e[slot] for e in matches if slot in e}
    return values


def evaluate_success(log: DialogueLog, db: Database) -> bool:
    """True iff every goal request was answered with a consistent value and
    the user said goodbye before the turn ceiling."""
    bye = any(a.intent == "Bye" for t in log.user_turns() for a in t.true_acts)
    if not bye:
        return False
    candidates = candidate_values(db, log.goal)
    answered: set[tuple[str, str]] = set()
    for turn in log.system_turns():
        for act in turn.true_acts:
            if act.intent in ("Inform", "Recommend"):
                pair = (act.domain, act.slot)
                if pair in candidates and act.value in candidates[pair]:
                    answered.add(pair)
    return answered == set(candidates)


def inform_f1(log: DialogueLog, db: Database) -> tuple[float, float, float]:
    """Precision, recall, and F1 of requested-slot informs.

    Correct informs and recommendations of requested slots count toward
    recall.  Informs with a wrong value (even of a requested slot) or of
    slots nobody asked for count against precision; recommendations are
    entity pitches, not answers, and are never penalized.  Degenerate
    denominators follow the usual conventions: precision is 1 when nothing
    counts against it, recall is 1 when nothing was requested, and F1 is 0
    when precision and recall are both 0.
    """
    requested = set(log.goal.request_pairs())
    candidates = candidate_values(db, log.goal)

    correct: set[tuple[str, str]] = set()
    wrong: set[tuple[str, str]] = set()
    for turn in log.system_turns():
        for act in turn.true_acts:
            pair = (act.domain, act.slot)
            if act.intent == "Recommend":
                if pair in requested and act.value in candidates.get(pair, set()):
                    correct.add(pair)
                continue
            if act.intent != "Inform":
                continue
            if pair in requested:
                if act.value in candidates.get(pair, set()):
                    correct.add(pair)
                else:
                    wrong.add(pair)
            else:
                wrong.add(pair)
    hit = len(correct & requested)
    denominator = hit + len(wrong)
    precision = 1.0 if denominator == 0 else hit / denominator
    recall = 1.0 if not requested else hit / len(requested)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


class Evaluator:
    """Scores finished dialogues against the pack database.

    Mirrors the demo-loop interface: after the session terminates,
    ``task_success()`` and ``inform_F1()`` report the last evaluation.
    """

    def __init__(self, db: Database):
        self.db = db
        self.last: EvaluationResult | None = None

    def evaluate(self, log: DialogueLog, max_turns: int) -> EvaluationResult:
        success = evaluate_success(log, self.db)
        precision, recall, f1 = inform_f1(log, self.db)
        turns = len(log.user_turns())
        bonus = 2 * max_turns if success else -max_turns
        result = EvaluationResult(
            success=success,
            inform_precision=precision,
            inform_recall=recall,
            inform_f1=f1,
            turn_count=turns,
            reward_total=float(-turns + bonus),
        )
        self.last = result
        return result

    def task_success(self) -> bool:
        if self.last is None:
            raise RuntimeError("no dialogue has been evaluated yet")
        return self.last.success

    def inform_F1(self) -> float:
        if self.last is None:
            raise RuntimeError("no dialogue has been evaluated yet")
        return self.last.inform_f1


class BiSession:
    """Drives one conversation between a system agent and a user agent.

    The user speaks first: the first ``next_turn`` call passes the empty
    utterance.  The session ends when the user says goodbye or when the
    user-turn ceiling is hit, in which case the system does not reply.  The
    per-call reward is -1, with ``2 * max_turns`` added on a successful
    ending and ``-max_turns`` on a failed one.
    """

    def __init__(
        self,
        sys_agent: PipelineAgent,
        user_agent: PipelineAgent,
        evaluator: Evaluator,
        max_turns: int = DEFAULT_MAX_TURNS,
        seed: int = 0,
    ):
        self.sys_agent = sys_agent
        self.user_agent = user_agent
        self.evaluator = evaluator
        self.max_turns = max_turns
        self.seed = seed
        self.init_session()

    def init_session(self) -> None:
        self.sys_agent.init_session()
        self.user_agent.init_session()
        self.turns: list[Turn] = []
        self.user_turn_count = 0
        self.terminated = False
        self.log: DialogueLog | None = None
        self._open_system_turn: Turn | None = None

    def _goal(self) -> UserGoal:
        return self.user_agent.policy.goal

    def next_turn(self, last_sys_output) -> tuple[Any, Any, bool, float]:
        if self.terminated:
            raise SessionTerminatedError("the session is over")

        user_out, user_trace = self.user_agent.respond(last_sys_output)
        if self._open_system_turn is not None:
            self._open_system_turn.parsed_acts = user_trace.nlu_acts
            self._open_system_turn = None
        user_turn = Turn(
            speaker="user",
            utterance=user_out if isinstance(user_out, str) else "",
            true_acts=list(user_trace.policy_acts),
            turn_index=len(self.turns),
        )
        self.turns.append(user_turn)
        self.user_turn_count += 1

        bye = any(a.intent == "Bye" for a in user_trace.policy_acts)
        if bye or self.user_turn_count >= self.max_turns:
            # Terminal turn: the system perceives the utterance but does not
            # reply, so understanding statistics still cover it.
            user_turn.parsed_acts = self.sys_agent.observe(user_out)
            self.terminated = True
            outcome = OUTCOME_MAX_TURNS if not bye else OUTCOME_SUCCESS
            log = DialogueLog(
                goal=self._goal(), turns=self.turns, outcome=outcome, seed=self.seed
            )
            evaluation = self.evaluator.evaluate(log, self.max_turns)
            if bye and not evaluation.success:
                log.outcome = OUTCOME_OTHER
            log.evaluation = evaluation
            self.log = log
            reward = -1.0 + (2 * self.max_turns if evaluation.success else -self.max_turns)
            return "", user_out, True, reward

        sys_out, sys_trace = self.sys_agent.respond(user_out)
        user_turn.parsed_acts = sys_trace.nlu_acts
        sys_turn = Turn(
            speaker="system",
            utterance=sys_out if isinstance(sys_out, str) else "",
            true_acts=list(sys_trace.policy_acts),
            turn_index=len(self.turns),
            belief_snapshot=sys_trace.belief,
        )
        self.turns.append(sys_turn)
        self._open_system_turn = sys_turn
        return sys_out, user_out, False, -1.0


@dataclass(frozen=True)
class SystemConfig:
    """Which implementation fills each system stage, plus optional noise on
    the understanding stage and optional withheld slots on the policy."""

    nlu: str = "pattern"
    dst: str = "rule"
    policy: str = "rule"
    nlg: str = "template"
    noise: NoiseConfig | None = None
    withhold_slots: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "nlu": self.nlu,
            "dst": self.dst,
            "policy": self.policy,
            "nlg": self.nlg,
            "noise": None if self.noise is None else self.noise.to_dict(),
            "withhold_slots": list(self.withhold_slots),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SystemConfig":
        noise = data.get("noise")
        return cls(
            nlu=data.get("nlu", "pattern"),
            dst=data.get("dst", "rule"),
            policy=data.get("policy", "rule"),
            nlg=data.get("nlg", "template"),
            noise=None if noise is None else NoiseConfig.from_dict(noise),
            withhold_slots=tuple(data.get("withhold_slots", [])),
        )


@dataclass(frozen=True)
class UserConfig:
    """Goal sampling ranges and the simulator's acts-per-turn cap."""

    goal: GoalConfig = field(default_factory=GoalConfig)
    max_acts_per_turn: int = DEFAULT_MAX_ACTS_PER_TURN

    def to_dict(self) -> dict[str, Any]:
        return {"goal": self.goal.to_dict(), "max_acts_per_turn": self.max_acts_per_turn}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "UserConfig":
        return cls(
            goal=GoalConfig.from_dict(data.get("goal", {})),
            max_acts_per_turn=int(data.get("max_acts_per_turn", DEFAULT_MAX_ACTS_PER_TURN)),
        )


class _PackCache:
    """Per-process cache so worker processes load a pack once."""

    def __init__(self):
        self._cache: dict[str, tuple] = {}

    def get(self, pack_path: str):
        if pack_path not in self._cache:
            schemas, db = load_domain_pack(pack_path)
            templates = load_template_table(pack_path, db.schemas)
            self._cache[pack_path] = (schemas, db, templates)
        return self._cache[pack_path]


_PACKS = _PackCache()


def build_system_agent(
    pack_path: str | Path, config: SystemConfig, noise_rng: random.Random | None = None
) -> PipelineAgent:
    schemas, db, templates = _PACKS.get(str(pack_path))
    schema_map = db.schemas

    if config.nlu == "pattern":
        nlu = PatternNLU(templates, speaker_side="user")
    elif config.nlu == "none":
        nlu = None
    else:
        raise ValueError(f"unknown system nlu implementation {config.nlu!r}")
    if nlu is not None and config.noise is not None:
        noise = config.noise
        if not noise.domain_targets and not noise.slot_targets:
            domain_targets, slot_targets = standard_confusion_targets(schema_map)
            noise = NoiseConfig(
                domain_confusion_rate=noise.domain_confusion_rate,
                slot_confusion_rate=noise.slot_confusion_rate,
                drop_rate=noise.drop_rate,
                domain_targets=domain_targets,
                slot_targets=slot_targets,
            )
        noise.validate_against(schema_map)
        nlu = NoisyNLU(nlu, noise, noise_rng or random.Random(0))

    if config.dst == "rule":
        dst = RuleDST(schema_map)
    elif config.dst == "none":
        dst = None
    else:
        raise ValueError(f"unknown system dst implementation {config.dst!r}")

    if config.policy == "rule":
        policy = RulePolicy(db)
    else:
        raise ValueError(f"unknown system policy implementation {config.policy!r}")
    if config.withhold_slots:
        policy = SlotWithholdingPolicy(policy, config.withhold_slots)

    if config.nlg == "template":
        nlg = TemplateNLG(templates, side="system")
    elif config.nlg == "none":
        nlg = None
    else:
        raise ValueError(f"unknown system nlg implementation {config.nlg!r}")

    return PipelineAgent(nlu, dst, policy, nlg, name="sys")


def build_user_agent(
    pack_path: str | Path, goal: UserGoal, config: UserConfig
) -> PipelineAgent:
    """The simulator: understanding and generation around an agenda policy,
    with no tracking stage (parsed acts flow straight to the policy)."""
    _, _, templates = _PACKS.get(str(pack_path))
    return PipelineAgent(
        nlu=PatternNLU(templates, speaker_side="system"),
        dst=None,
        policy=AgendaUserPolicy(goal, max_acts_per_turn=config.max_acts_per_turn),
        nlg=TemplateNLG(templates, side="user"),
        name="user",
    )


def run_dialogue(
    pack_path: str | Path,
    goal: UserGoal,
    system_config: SystemConfig,
    user_config: UserConfig,
    seed: int,
    max_turns: int = DEFAULT_MAX_TURNS,
) -> DialogueLog:
    """Simulate a single dialogue for a fixed goal and seed."""
    _, db, _ = _PACKS.get(str(pack_path))
    noise_rng = random.Random(f"noise:{seed}")
    sys_agent = build_system_agent(pack_path, system_config, noise_rng)
    user_agent = build_user_agent(pack_path, goal, user_config)
    session = BiSession(
        sys_agent, user_agent, Evaluator(db), max_turns=max_turns, seed=seed
    )
    sys_utt: Any = ""
    while True:
        sys_utt, _user_utt, over, _reward = session.next_turn(sys_utt)
        if over:
            break
    return session.log


def _run_episode_dict(
    pack_path: str,
    system_config: dict,
    user_config: dict,
    seed: int,
    max_turns: int,
) -> dict[str, Any]:
    """Process-pool friendly episode runner returning a serialized log."""
    sys_cfg = SystemConfig.from_dict(system_config)
    user_cfg = UserConfig.from_dict(user_config)
    schemas, db, _ = _PACKS.get(pack_path)
    goal_rng = random.Random(f"goal:{seed}")
    goal = generate_goal(schemas, db, goal_rng, user_cfg.goal)
    try:
        log = run_dialogue(pack_path, goal, sys_cfg, user_cfg, seed, max_turns)
        return log.to_dict()
    except Exception as exc:
        return {
            "goal": goal.to_dict(),
            "turns": [],
            "outcome": OUTCOME_OTHER,
            "seed": seed,
            "evaluation": None,
            "error": str(exc),
        }


@dataclass
class DialogueCorpus:
    """An ordered batch of simulated dialogues plus the context needed to
    re-analyze them (pack path, configurations, seeds)."""

    logs: list[DialogueLog]
    pack_path: str
    base_seed: int
    system_config: dict[str, Any]
    user_config: dict[str, Any]
    max_turns: int = DEFAULT_MAX_TURNS

    def seeds(self) -> list[int]:
        return [log.seed for log in self.logs]

    def to_lines(self) -> list[str]:
        lines = []
        for i, log in enumerate(self.logs):
            record = {
                "episode": i,
                "pack": self.pack_path,
                "base_seed": self.base_seed,
                "max_turns": self.max_turns,
                "system_config": self.system_config,
                "user_config": self.user_config,
                **log.to_dict(),
            }
            lines.append(json.dumps(record, sort_keys=True, ensure_ascii=False))
        return lines

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DialogueCorpus":
        text = Path(path).read_text(encoding="utf-8")
        logs: list[DialogueLog] = []
        meta: dict[str, Any] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                log = DialogueLog(
                    goal=UserGoal.from_dict(record["goal"]),
                    turns=[Turn.from_dict(t) for t in record["turns"]],
                    outcome=record["outcome"],
                    seed=int(record["seed"]),
                    evaluation=None
                    if record.get("evaluation") is None
                    else EvaluationResult.from_dict(record["evaluation"]),
                )
            except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
                raise CorpusParseError(str(path), number, exc) from exc
            logs.append(log)
            if not meta:
                meta = {
                    "pack": record.get("pack", ""),
                    "base_seed": record.get("base_seed", 0),
                    "max_turns": record.get("max_turns", DEFAULT_MAX_TURNS),
                    "system_config": record.get("system_config", {}),
                    "user_config": record.get("user_config", {}),
                }
        return cls(
            logs=logs,
            pack_path=meta.get("pack", ""),
            base_seed=int(meta.get("base_seed", 0)),
            system_config=meta.get("system_config", {}),
            user_config=meta.get("user_config", {}),
            max_turns=int(meta.get("max_turns", DEFAULT_MAX_TURNS)),
        )


def run_episodes(
    pack_path: str | Path,
    system_config: SystemConfig,
    user_config: UserConfig,
    episodes: int,
    base_seed: int,
    max_turns: int = DEFAULT_MAX_TURNS,
    workers: int = 1,
) -> DialogueCorpus:
    """Simulate ``episodes`` dialogues; episode ``i`` is seeded with
    ``base_seed + i``.

    The goal for an episode depends only on the user configuration and the
    seed, never on the system, so corpora generated for different systems
    under the same base seed share their goal sequence.  Episodes that raise
    are recorded as failures without aborting the batch.  The corpus is
    ordered by episode index regardless of worker scheduling.
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    pack = str(pack_path)
    sys_dict = system_config.to_dict()
    user_dict = user_config.to_dict()
    seeds = [base_seed + i for i in range(episodes)]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            dicts = list(
                pool.map(
                    _run_episode_dict,
                    [pack] * episodes,
                    [sys_dict] * episodes,
                    [user_dict] * episodes,
                    seeds,
                    [max_turns] * episodes,
                    chunksize=max(1, episodes // (workers * 4) or 1),
                )
            )
    else:
        dicts = [
            _run_episode_dict(pack, sys_dict, user_dict, seed, max_turns)
            for seed in seeds
        ]

    logs = []
    for record in dicts:
        logs.append(
            DialogueLog(
                goal=UserGoal.from_dict(record["goal"]),
                turns=[Turn.from_dict(t) for t in record["turns"]],
                outcome=record["outcome"],
                seed=int(record["seed"]),
                evaluation=None
                if record.get("evaluation") is None
                else EvaluationResult.from_dict(record["evaluation"]),
            )
        )
    return DialogueCorpus(
        logs=logs,
        pack_path=pack,
        base_seed=base_seed,
        system_config=sys_dict,
        user_config=user_dict,
        max_turns=max_turns,
    )
