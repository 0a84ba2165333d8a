import random

from hypothesis import given, settings, strategies as st

from dialogue_forge.core import DialogueAct
from dialogue_forge.ontology import SubGoal, UserGoal, generate_goal
from dialogue_forge.simulator import (
    AgendaUserPolicy,
    agenda_init,
    agenda_update,
    user_respond,
)

HOTEL_GOAL = UserGoal(
    sub_goals=(
        SubGoal(domain="Hotel", constraints={"Area": "north"}, requests=("Phone",)),
    )
)

TWO_DOMAIN_GOAL = UserGoal(
    sub_goals=(
        SubGoal(domain="Hotel", constraints={"Area": "north", "Stars": "4"},
                requests=("Phone", "Post")),
        SubGoal(domain="Restaurant", constraints={"Food": "italian"}, requests=("Addr",)),
    )
)


def drain(agenda):
    acts = []
    while len(agenda):
        acts.extend(agenda.pop_turn())
    return acts


def test_init_pop_order_single_domain():
    agenda, _ = agenda_init(HOTEL_GOAL)
    assert drain(agenda) == [
        DialogueAct("Inform", "Hotel", "Area", "north"),
        DialogueAct("Request", "Hotel", "Phone", "?"),
    ]


def test_init_first_domain_pops_before_second():
    agenda, _ = agenda_init(TWO_DOMAIN_GOAL)
    acts = drain(agenda)
    domains = [a.domain for a in acts]
    assert domains == sorted(domains, key=lambda d: ("Hotel", "Restaurant").index(d))
    assert acts[0] == DialogueAct("Inform", "Hotel", "Area", "north")
    assert acts[2].intent == "Request"


def test_init_stack_size_counting_oracle(schemas, db):
    for seed in range(40):
        goal = generate_goal(schemas, db, random.Random(seed))
        agenda, state = agenda_init(goal)
        expected = sum(
            len(sg.constraints) + len(sg.requests) for sg in goal.sub_goals
        )
        assert len(agenda) == expected
        assert len(state.fulfilled) == sum(len(sg.requests) for sg in goal.sub_goals)


def test_fulfillment_removes_pending_request():
    agenda, state = agenda_init(HOTEL_GOAL)
    new_agenda, new_state = agenda_update(
        agenda, state, [DialogueAct("Inform", "Hotel", "Phone", "123")]
    )
    assert new_state.fulfilled[("Hotel", "Phone")] == "123"
    assert DialogueAct("Request", "Hotel", "Phone", "?") not in new_agenda.stack
    # inputs are not mutated
    assert state.fulfilled[("Hotel", "Phone")] is None
    assert DialogueAct("Request", "Hotel", "Phone", "?") in agenda.stack


def test_recommend_fulfills_requested_name():
    goal = UserGoal(sub_goals=(
        SubGoal(domain="Hotel", constraints={"Area": "north"}, requests=("Name",)),
    ))
    agenda, state = agenda_init(goal)
    _, new_state = agenda_update(
        agenda, state, [DialogueAct("Recommend", "Hotel", "Name", "Arbury Lodge")]
    )
    assert new_state.fulfilled[("Hotel", "Name")] == "Arbury Lodge"


def test_wrong_constraint_value_triggers_corrective_reinform():
    agenda, state = agenda_init(HOTEL_GOAL)
    new_agenda, new_state = agenda_update(
        agenda, state, [DialogueAct("Inform", "Hotel", "Area", "south")]
    )
    assert new_agenda.stack[-1] == DialogueAct("Inform", "Hotel", "Area", "north")
    assert not new_state.acknowledged[("Hotel", "Area")]


def test_correct_echo_is_acknowledged_not_repushed():
    agenda, state = agenda_init(HOTEL_GOAL)
    drained = agenda.clone()
    drained.stack.clear()
    new_agenda, new_state = agenda_update(
        drained, state, [DialogueAct("Inform", "Hotel", "Area", "north")]
    )
    assert new_state.acknowledged[("Hotel", "Area")]
    assert len(new_agenda) == 0


def test_system_request_answered_from_goal_else_dontcare():
    agenda, state = agenda_init(HOTEL_GOAL)
    new_agenda, _ = agenda_update(
        agenda, state, [DialogueAct("Request", "Hotel", "Area", "?")]
    )
    # the answer is already pending from initialization, so no duplicate
    assert new_agenda.stack.count(DialogueAct("Inform", "Hotel", "Area", "north")) == 1
    new_agenda, _ = agenda_update(
        agenda, state, [DialogueAct("Request", "Hotel", "Price", "?")]
    )
    assert new_agenda.stack[-1] == DialogueAct("Inform", "Hotel", "Price", "dontcare")


def test_no_offer_restates_all_constraints():
    agenda, state = agenda_init(TWO_DOMAIN_GOAL)
    drained = agenda.clone()
    drained.stack.clear()
    new_agenda, _ = agenda_update(drained, state, [DialogueAct("NoOffer", "Hotel")])
    assert new_agenda.pop_turn() == [
        DialogueAct("Inform", "Hotel", "Area", "north"),
        DialogueAct("Inform", "Hotel", "Stars", "4"),
    ]


def agenda_oracle(goal, system_turns):
    """Naive replay of the update rules over a sequence of system turns."""
    stack = []
    for sg in reversed(goal.sub_goals):
        for slot in reversed(sg.requests):
            stack.append(DialogueAct("Request", sg.domain, slot, "?"))
        for slot, value in reversed(list(sg.constraints.items())):
            stack.append(DialogueAct("Inform", sg.domain, slot, value))
    fulfilled = {(sg.domain, s): None for sg in goal.sub_goals for s in sg.requests}

    def constraint_of(domain, slot):
        for sg in goal.sub_goals:
            if sg.domain == domain:
                return sg.constraints.get(slot)
        return None

    for turn in system_turns:
        for act in turn:
            if act.intent in ("Inform", "Recommend"):
                pair = (act.domain, act.slot)
                if pair in fulfilled and fulfilled[pair] is None:
                    fulfilled[pair] = act.value
                    req = DialogueAct("Request", act.domain, act.slot, "?")
                    if req in stack:
                        stack.remove(req)
                    continue
                goal_value = constraint_of(act.domain, act.slot)
                if goal_value is not None and act.value != goal_value:
                    fix = DialogueAct("Inform", act.domain, act.slot, goal_value)
                    if fix not in stack:
                        stack.append(fix)
            elif act.intent == "Request":
                goal_value = constraint_of(act.domain, act.slot) or "dontcare"
                answer = DialogueAct("Inform", act.domain, act.slot, goal_value)
                if answer not in stack:
                    stack.append(answer)
            elif act.intent == "NoOffer":
                for sg in goal.sub_goals:
                    if sg.domain == act.domain:
                        for slot, value in reversed(list(sg.constraints.items())):
                            fix = DialogueAct("Inform", act.domain, slot, value)
                            if fix not in stack:
                                stack.append(fix)
    return stack, fulfilled


def random_system_acts(rng, db, size):
    acts = []
    for _ in range(size):
        domain = rng.choice(sorted(db.schemas))
        schema = db.schemas[domain]
        kind = rng.random()
        if kind < 0.4:
            slot = rng.choice(schema.all_slots())
            entity = rng.choice(db.entities[domain])
            acts.append(DialogueAct("Inform", domain, slot, entity[slot]))
        elif kind < 0.6:
            entity = rng.choice(db.entities[domain])
            acts.append(DialogueAct("Recommend", domain, schema.key_slot,
                                    entity[schema.key_slot]))
        elif kind < 0.8:
            acts.append(DialogueAct("Request", domain,
                                    rng.choice(sorted(schema.informable_slots)), "?"))
        else:
            acts.append(DialogueAct("NoOffer", domain))
    return acts


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_update_matches_replay_oracle(data, schemas, db):
    seed = data.draw(st.integers(0, 100_000))
    rng = random.Random(seed)
    goal = generate_goal(schemas, db, rng)
    system_turns = [
        random_system_acts(rng, db, rng.randint(1, 3))
        for _ in range(rng.randint(1, 6))
    ]
    agenda, state = agenda_init(goal)
    for turn in system_turns:
        agenda, state = agenda_update(agenda, state, turn)
    oracle_stack, oracle_fulfilled = agenda_oracle(goal, system_turns)
    assert agenda.stack == oracle_stack
    assert state.fulfilled == oracle_fulfilled


def test_first_turn_pops_two_initial_acts():
    agenda, state = agenda_init(TWO_DOMAIN_GOAL)
    acts, over, agenda, state = user_respond(agenda, state, [])
    assert not over
    assert acts == [
        DialogueAct("Inform", "Hotel", "Area", "north"),
        DialogueAct("Inform", "Hotel", "Stars", "4"),
    ]


def test_complete_goal_says_bye():
    agenda, state = agenda_init(HOTEL_GOAL)
    acts, over, agenda, state = user_respond(agenda, state, [])
    assert acts == [
        DialogueAct("Inform", "Hotel", "Area", "north"),
        DialogueAct("Request", "Hotel", "Phone", "?"),
    ]
    acts, over, agenda, state = user_respond(
        agenda, state, [DialogueAct("Inform", "Hotel", "Phone", "123")]
    )
    assert over
    assert acts == [DialogueAct("Bye", "none")]


def test_unanswered_request_is_repeated_forever():
    agenda, state = agenda_init(HOTEL_GOAL)
    acts, _, agenda, state = user_respond(agenda, state, [])
    for _ in range(10):
        acts, over, agenda, state = user_respond(
            agenda, state, [DialogueAct("Greet", "none")]
        )
        assert not over
        assert acts == [DialogueAct("Request", "Hotel", "Phone", "?")]


def test_oldest_unfulfilled_request_is_repeated():
    goal = UserGoal(sub_goals=(
        SubGoal(domain="Hotel", constraints={"Area": "north"},
                requests=("Phone", "Post")),
    ))
    agenda, state = agenda_init(goal)
    acts, _, agenda, state = user_respond(agenda, state, [])
    acts, _, agenda, state = user_respond(agenda, state, [])
    # Post got answered, Phone did not; the user falls back to Phone
    acts, _, agenda, state = user_respond(
        agenda, state, [DialogueAct("Inform", "Hotel", "Post", "CB11AA")]
    )
    assert acts == [DialogueAct("Request", "Hotel", "Phone", "?")]


def test_agenda_never_holds_fulfilled_request(schemas, db):
    rng = random.Random(11)
    for _ in range(30):
        goal = generate_goal(schemas, db, rng)
        agenda, state = agenda_init(goal)
        for _ in range(rng.randint(1, 8)):
            acts, over, agenda, state = user_respond(
                agenda, state, random_system_acts(rng, db, rng.randint(0, 3))
            )
            for act in agenda.stack:
                if act.intent == "Request":
                    assert state.fulfilled[(act.domain, act.slot)] is None
            if over:
                break


def test_user_respond_deterministic(schemas, db):
    goal = generate_goal(schemas, db, random.Random(2))
    runs = []
    for _ in range(2):
        agenda, state = agenda_init(goal)
        emitted = []
        sys_acts = []
        for _ in range(6):
            acts, over, agenda, state = user_respond(agenda, state, sys_acts)
            emitted.append(acts)
            sys_acts = [DialogueAct("Greet", "none")]
        runs.append(emitted)
    assert runs[0] == runs[1]


def test_policy_stage_wrapper_tracks_session_over():
    policy = AgendaUserPolicy(HOTEL_GOAL)
    acts, _ = policy.respond([])
    assert not policy.session_over
    acts, _ = policy.respond([DialogueAct("Inform", "Hotel", "Phone", "123")])
    assert policy.session_over
    assert acts == [DialogueAct("Bye", "none")]
    snap_policy = AgendaUserPolicy(HOTEL_GOAL)
    snap = snap_policy.snapshot()
    snap_policy.respond([])
    snap_policy.restore(snap)
    assert len(snap_policy.agenda) == 2
