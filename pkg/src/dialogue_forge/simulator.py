"""Agenda-driven user simulation with goal fulfillment tracking.

The user keeps a stack of pending acts built from a goal.  System responses
edit the stack: answers remove pending requests, wrong constraint values
trigger corrective restatements, a no-offer makes the user restate the
domain's constraints, and a system question is answered from the goal.  When
the stack runs dry but the goal is unfinished, the user repeats the oldest
unanswered request, which is what produces dialogue loops against a system
that cannot answer it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .core import NONE_FIELD, DialogueAct
from .ontology import UserGoal, WILDCARD

BYE_ACT = DialogueAct("Bye", NONE_FIELD)

DEFAULT_MAX_ACTS_PER_TURN = 2


@dataclass
class Agenda:
    """Stack of pending user acts; the end of the list is the top."""

    stack: list[DialogueAct] = field(default_factory=list)
    max_acts_per_turn: int = DEFAULT_MAX_ACTS_PER_TURN

    def clone(self) -> "Agenda":
        return Agenda(stack=list(self.stack), max_acts_per_turn=self.max_acts_per_turn)

    def push(self, act: DialogueAct) -> None:
        """Push unless the identical act is already pending."""
        if act not in self.stack:
            self.stack.append(act)

    def remove(self, act: DialogueAct) -> None:
        if act in self.stack:
            self.stack.remove(act)

    def pop_turn(self) -> list[DialogueAct]:
        acts = []
        while self.stack and len(acts) < self.max_acts_per_turn:
            acts.append(self.stack.pop())
        return acts

    def __len__(self) -> int:
        return len(self.stack)


@dataclass
class GoalState:
    """The goal plus what has happened to it so far.

    ``fulfilled`` maps each requested (domain, slot) to the value the system
    supplied, or ``None`` while pending.  ``acknowledged`` tracks constraints
    the system has echoed back correctly.
    """

    goal: UserGoal
    fulfilled: dict[tuple[str, str], str | None] = field(default_factory=dict)
    acknowledged: dict[tuple[str, str], bool] = field(default_factory=dict)

    def clone(self) -> "GoalState":
        return GoalState(
            goal=self.goal,
            fulfilled=dict(self.fulfilled),
            acknowledged=dict(self.acknowledged),
        )

    def is_complete(self) -> bool:
        return all(v is not None for v in self.fulfilled.values())

    def pending_requests(self) -> list[tuple[str, str]]:
        """Unanswered requests in goal order."""
        return [pair for pair in self.goal.request_pairs() if self.fulfilled[pair] is None]

    def constraint_value(self, domain: str, slot: str) -> str | None:
        sub = self.goal.sub_goal(domain)
        if sub is None:
            return None
        return sub.constraints.get(slot)


def agenda_init(goal: UserGoal, max_acts_per_turn: int = DEFAULT_MAX_ACTS_PER_TURN) -> tuple[Agenda, GoalState]:
    """Build the initial stack so pops yield, per sub-goal in order, all of
    its constraint informs (in generation order) followed by its requests."""
    pop_order: list[DialogueAct] = []
    for sub in goal.sub_goals:
        for slot, value in sub.constraints.items():
            pop_order.append(DialogueAct("Inform", sub.domain, slot, value))
        for slot in sub.requests:
            pop_order.append(DialogueAct("Request", sub.domain, slot, "?"))
    agenda = Agenda(stack=list(reversed(pop_order)), max_acts_per_turn=max_acts_per_turn)
    state = GoalState(
        goal=goal,
        fulfilled={pair: None for pair in goal.request_pairs()},
        acknowledged={
            (sub.domain, slot): False
            for sub in goal.sub_goals
            for slot in sub.constraints
        },
    )
    return agenda, state


def agenda_update(
    agenda: Agenda, goal_state: GoalState, system_acts: Sequence[DialogueAct]
) -> tuple[Agenda, GoalState]:
    """Apply one system turn to the agenda and goal bookkeeping.

    Returns fresh copies; the inputs are not mutated.
    """
    new_agenda = agenda.clone()
    new_state = goal_state.clone()
    for act in system_acts:
        if act.intent in ("Inform", "Recommend"):
            pair = (act.domain, act.slot)
            if pair in new_state.fulfilled and new_state.fulfilled[pair] is None:
                new_state.fulfilled[pair] = act.value
                new_agenda.remove(DialogueAct("Request", act.domain, act.slot, "?"))
                continue
            goal_value = new_state.constraint_value(act.domain, act.slot)
            if goal_value is not None:
                if act.value == goal_value:
                    new_state.acknowledged[pair] = True
                else:
                    new_agenda.push(
                        DialogueAct("Inform", act.domain, act.slot, goal_value)
                    )
        elif act.intent == "Request":
            goal_value = new_state.constraint_value(act.domain, act.slot)
            value = goal_value if goal_value is not None else WILDCARD
            new_agenda.push(DialogueAct("Inform", act.domain, act.slot, value))
        elif act.intent == "NoOffer":
            sub = new_state.goal.sub_goal(act.domain)
            if sub is not None:
                # The system lost the constraints; restate them, first first.
                for slot, value in reversed(list(sub.constraints.items())):
                    new_agenda.push(DialogueAct("Inform", act.domain, slot, value))
    return new_agenda, new_state


def user_respond(
    agenda: Agenda, goal_state: GoalState, system_acts: Sequence[DialogueAct]
) -> tuple[list[DialogueAct], bool, Agenda, GoalState]:
    """One user turn: digest the system acts, then speak.

    Emits a goodbye (and signals the session is over) once every request is
    answered and nothing is pending.  If the stack is empty but the goal is
    not complete, the oldest unanswered request is re-pushed and spoken,
    which is the repetition behaviour behind dialogue loops.
    """
    new_agenda, new_state = agenda_update(agenda, goal_state, system_acts)
    if new_state.is_complete() and len(new_agenda) == 0:
        return [BYE_ACT], True, new_agenda, new_state
    if len(new_agenda) == 0:
        domain, slot = new_state.pending_requests()[0]
        new_agenda.push(DialogueAct("Request", domain, slot, "?"))
    acts = new_agenda.pop_turn()
    return acts, False, new_agenda, new_state


class AgendaUserPolicy:
    """User policy stage: consumes system acts, produces user acts.

    State (agenda and goal bookkeeping) is internal, so a pipeline agent
    built from this policy needs no tracking stage.
    """

    def __init__(self, goal: UserGoal, max_acts_per_turn: int = DEFAULT_MAX_ACTS_PER_TURN):
        self.goal = goal
        self.max_acts_per_turn = max_acts_per_turn
        self.init_session()

    def init_session(self, goal: UserGoal | None = None, **_: object) -> None:
        if goal is not None:
            self.goal = goal
        self.agenda, self.goal_state = agenda_init(self.goal, self.max_acts_per_turn)
        self.session_over = False

    def respond(self, system_acts: Sequence[DialogueAct]) -> tuple[list[DialogueAct], None]:
        acts, over, self.agenda, self.goal_state = user_respond(
            self.agenda, self.goal_state, system_acts
        )
        self.session_over = over
        return acts, None

    def snapshot(self) -> dict:
        return {
            "agenda": self.agenda.clone(),
            "goal_state": self.goal_state.clone(),
            "session_over": self.session_over,
        }

    def restore(self, snap: dict) -> None:
        self.agenda = snap["agenda"].clone()
        self.goal_state = snap["goal_state"].clone()
        self.session_over = snap["session_over"]
