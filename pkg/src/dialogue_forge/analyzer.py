"""Corpus statistics: metrics, confusion tables, act audits, loop causes.

All tables keep raw counts as the source of truth; percentage shares are
derived at render time.  Documented denominators: confusion shares are per
true-act occurrence; invalid/redundant shares are per inform of the same
intent-domain-slot pattern; missing shares are per dialogue that requested
the slot; loop-cause shares are per looped dialogue.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .core import DialogueAct, DialogueLog, OUTCOME_MAX_TURNS, format_act_string
from .ontology import Database, query
from .session import DialogueCorpus, evaluate_success

DEFAULT_LOOP_WINDOW = 3


class EmptyCorpusError(ValueError):
    pass


class CorpusMismatchError(ValueError):
    """Compared corpora were not generated under matching seeds/episodes."""


def _pattern(act: DialogueAct) -> str:
    """Intent-domain-slot display form used by audit tables."""
    return f"{act.intent}-{act.domain}-{act.slot}"


def align_acts(
    true_acts: Sequence[DialogueAct], parsed_acts: Sequence[DialogueAct]
) -> list[tuple[DialogueAct, DialogueAct | None]]:
    """Pair each true act with the parse that most plausibly came from it.

    Primary key is (intent, slot); leftovers pair positionally in order of
    appearance.  True acts left without a partner count as dropped.  Parsed
    acts without a partner are hallucinations and appear in no row.
    """
    used = [False] * len(parsed_acts)
    pairs: list[tuple[DialogueAct, DialogueAct | None]] = []
    unmatched: list[int] = []
    for i, t in enumerate(true_acts):
        hit = None
        for j, p in enumerate(parsed_acts):
            if not used[j] and (p.intent, p.slot) == (t.intent, t.slot):
                hit = j
                break
        if hit is None:
            unmatched.append(i)
            pairs.append((t, None))
        else:
            used[hit] = True
            pairs.append((t, parsed_acts[hit]))
    remaining = [j for j, u in enumerate(used) if not u]
    for i, j in zip(unmatched, remaining):
        pairs[i] = (true_acts[i], parsed_acts[j])
    return pairs


def _confusion_from_turns(
    turns: Iterable[tuple[Sequence[DialogueAct], Sequence[DialogueAct] | None]],
) -> dict[str, dict[str, Any]]:
    table: dict[str, dict[str, Any]] = {}
    for true_acts, parsed_acts in turns:
        if parsed_acts is None:
            continue
        for true_act, parsed in align_acts(true_acts, parsed_acts):
            key = format_act_string(true_act)
            row = table.setdefault(
                key, {"total": 0, "correct": 0, "dropped": 0, "confusions": {}}
            )
            row["total"] += 1
            if parsed is None:
                row["dropped"] += 1
            elif parsed == true_act:
                row["correct"] += 1
            else:
                parsed_key = format_act_string(parsed)
                row["confusions"][parsed_key] = row["confusions"].get(parsed_key, 0) + 1
    return table


def nlu_confusion(corpus: DialogueCorpus) -> dict[str, dict[str, Any]]:
    """How the system heard each user act: correct, confused-with, dropped."""
    return _confusion_from_turns(
        (t.true_acts, t.parsed_acts) for log in corpus.logs for t in log.user_turns()
    )


def nlg_confusion(corpus: DialogueCorpus) -> dict[str, dict[str, Any]]:
    """How the user perceived each system act after generation."""
    return _confusion_from_turns(
        (t.true_acts, t.parsed_acts) for log in corpus.logs for t in log.system_turns()
    )


def misparse_share(table: Mapping[str, Mapping[str, Any]]) -> float:
    """Share of contentful true acts (everything except greetings and
    goodbyes, which carry no domain or slot to confuse) that were not heard
    exactly."""
    total = 0
    bad = 0
    for key, row in table.items():
        intent = key.split("-", 1)[0]
        if intent in ("Greet", "Bye"):
            continue
        total += row["total"]
        bad += row["total"] - row["correct"]
    return bad / total if total else 0.0


def audit_system_acts(
    corpus: DialogueCorpus, db: Database
) -> dict[str, Any]:
    """Classify every system inform/recommend as valid, invalid, or redundant,
    and tally goal requests that were never informed at all.

    Invalid: no entity matching the dialogue's goal constraints for the
    domain carries the stated value (domains outside the goal are checked
    against the whole domain).  Redundant: an identical (domain, slot, value)
    was already informed earlier in the dialogue.  Precedence when both
    apply: invalid, then redundant, then valid, so the three buckets
    partition the informs.
    """
    invalid: dict[str, dict[str, int]] = {}
    redundant: dict[str, dict[str, int]] = {}
    pattern_totals: dict[str, int] = {}
    missing: dict[str, dict[str, int]] = {}
    totals = {"informs": 0, "valid": 0, "invalid": 0, "redundant": 0}

    for log in corpus.logs:
        goal_constraints = {sub.domain: sub.constraints for sub in log.goal.sub_goals}
        match_cache: dict[str, list[dict[str, str]]] = {}

        def matches_for(domain: str) -> list[dict[str, str]]:
            if domain not in match_cache:
                constraints = goal_constraints.get(domain, {})
                try:
                    match_cache[domain] = query(db, domain, constraints)
                except KeyError:
                    match_cache[domain] = []
            return match_cache[domain]

        seen: set[tuple[str, str, str]] = set()
        informed_pairs: set[tuple[str, str]] = set()
        for turn in log.system_turns():
            for act in turn.true_acts:
                if act.intent not in ("Inform", "Recommend"):
                    continue
                pattern = _pattern(act)
                pattern_totals[pattern] = pattern_totals.get(pattern, 0) + 1
                totals["informs"] += 1
                informed_pairs.add((act.domain, act.slot))
                triple = (act.domain, act.slot, act.value)
                consistent = any(
                    e.get(act.slot) == act.value for e in matches_for(act.domain)
                )
                if not consistent:
                    bucket = invalid.setdefault(pattern, {"count": 0})
                    bucket["count"] += 1
                    totals["invalid"] += 1
                elif triple in seen:
                    bucket = redundant.setdefault(pattern, {"count": 0})
                    bucket["count"] += 1
                    totals["redundant"] += 1
                else:
                    totals["valid"] += 1
                seen.add(triple)

        for sub in log.goal.sub_goals:
            for slot in sub.requests:
                pattern = f"Inform-{sub.domain}-{slot}"
                row = missing.setdefault(pattern, {"count": 0, "dialogues": 0})
                row["dialogues"] += 1
                if (sub.domain, slot) not in informed_pairs:
                    row["count"] += 1

    for table in (invalid, redundant):
        for pattern, row in table.items():
            row["informs"] = pattern_totals.get(pattern, 0)
    missing = {p: r for p, r in missing.items() if r["count"] > 0}
    return {
        "invalid": invalid,
        "redundant": redundant,
        "missing": missing,
        "totals": totals,
    }


def loop_causes(
    corpus: DialogueCorpus, window: int = DEFAULT_LOOP_WINDOW
) -> dict[str, Any]:
    """Attribute turn-ceiling failures to the request the user kept repeating.

    A dialogue loops when its final ``window`` user turns all contain one
    identical request act; that act is the cause.  Ceiling failures without
    such a repeat are tallied as ``other``.
    """
    causes: dict[str, int] = {}
    other = 0
    looped_logs: list[tuple[DialogueLog, DialogueAct]] = []
    for log in corpus.logs:
        if log.outcome != OUTCOME_MAX_TURNS:
            continue
        user_turns = log.user_turns()
        cause = None
        if len(user_turns) >= window:
            tail = user_turns[-window:]
            for act in tail[-1].true_acts:
                if act.intent != "Request":
                    continue
                if all(act in t.true_acts for t in tail[:-1]):
                    cause = act
                    break
        if cause is None:
            other += 1
        else:
            key = format_act_string(cause)
            causes[key] = causes.get(key, 0) + 1
            looped_logs.append((log, cause))

    domain_dialogues: dict[str, int] = {}
    domain_loops: dict[str, int] = {}
    for log in corpus.logs:
        for d in log.goal.domains():
            domain_dialogues[d] = domain_dialogues.get(d, 0) + 1
    for log, cause in looped_logs:
        domain_loops[cause.domain] = domain_loops.get(cause.domain, 0) + 1
    per_domain = {
        d: {
            "dialogues": domain_dialogues[d],
            "looped": domain_loops.get(d, 0),
        }
        for d in sorted(domain_dialogues)
    }
    return {
        "looped": sum(causes.values()),
        "other": other,
        "causes": causes,
        "per_domain": per_domain,
    }


def _domain_success(log: DialogueLog, db: Database, domain: str) -> bool:
    """All of one sub-goal's requests answered with consistent values."""
    sub = log.goal.sub_goal(domain)
    if sub is None:
        return False
    matches = query(db, domain, sub.constraints)
    wanted = {(domain, s): {e[s] for e in matches if s in e} for s in sub.requests}
    answered: set[tuple[str, str]] = set()
    for turn in log.system_turns():
        for act in turn.true_acts:
            if act.intent in ("Inform", "Recommend"):
                pair = (act.domain, act.slot)
                if pair in wanted and act.value in wanted[pair]:
                    answered.add(pair)
    return answered == set(wanted)


def _domain_inform_f1(log: DialogueLog, db: Database, domain: str) -> float:
    sub = log.goal.sub_goal(domain)
    if sub is None:
        return 0.0
    matches = query(db, domain, sub.constraints)
    requested = {(domain, s) for s in sub.requests}
    values = {(domain, s): {e[s] for e in matches if s in e} for s in sub.requests}
    correct: set[tuple[str, str]] = set()
    wrong: set[tuple[str, str]] = set()
    for turn in log.system_turns():
        for act in turn.true_acts:
            if act.domain != domain:
                continue
            pair = (act.domain, act.slot)
            if act.intent == "Recommend":
                if pair in requested and act.value in values.get(pair, set()):
                    correct.add(pair)
                continue
            if act.intent != "Inform":
                continue
            if pair in requested:
                if act.value in values.get(pair, set()):
                    correct.add(pair)
                else:
                    wrong.add(pair)
            else:
                wrong.add(pair)
    hit = len(correct)
    precision = 1.0 if hit + len(wrong) == 0 else hit / (hit + len(wrong))
    recall = 1.0 if not requested else hit / len(requested)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class AnalysisReport:
    """Everything the renderer needs, with counts as ground truth."""

    episode_count: int
    pack: str
    seeds: dict[str, Any]
    overall: dict[str, float]
    per_domain: dict[str, dict[str, float]]
    nlu_confusion: dict[str, dict[str, Any]]
    system_act_audit: dict[str, Any]
    nlg_confusion: dict[str, dict[str, Any]]
    loop_causes: dict[str, Any]

    def nlu_misparse_share(self) -> float:
        return misparse_share(self.nlu_confusion)

    def nlg_misparse_share(self) -> float:
        return misparse_share(self.nlg_confusion)

    def to_dict(self) -> dict[str, Any]:
        return {
            "episode_count": self.episode_count,
            "pack": self.pack,
            "seeds": self.seeds,
            "overall": self.overall,
            "per_domain": self.per_domain,
            "nlu_confusion": self.nlu_confusion,
            "system_act_audit": self.system_act_audit,
            "nlg_confusion": self.nlg_confusion,
            "loop_causes": self.loop_causes,
            "derived": {
                "nlu_misparse_share": self.nlu_misparse_share(),
                "nlg_misparse_share": self.nlg_misparse_share(),
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AnalysisReport":
        return cls(
            episode_count=int(data["episode_count"]),
            pack=data.get("pack", ""),
            seeds=dict(data["seeds"]),
            overall=dict(data["overall"]),
            per_domain={d: dict(v) for d, v in data["per_domain"].items()},
            nlu_confusion={k: dict(v) for k, v in data["nlu_confusion"].items()},
            system_act_audit=dict(data["system_act_audit"]),
            nlg_confusion={k: dict(v) for k, v in data["nlg_confusion"].items()},
            loop_causes=dict(data["loop_causes"]),
        )


def seed_fingerprint(seeds: Sequence[int]) -> str:
    digest = hashlib.sha256(",".join(str(s) for s in seeds).encode()).hexdigest()
    return digest[:16]


def analyze(corpus: DialogueCorpus, db: Database) -> AnalysisReport:
    """Compute the full report for one corpus.  Pure: equal corpora (same
    file) produce equal reports."""
    if not corpus.logs:
        raise EmptyCorpusError("cannot analyze an empty corpus")

    from .session import inform_f1 as _inform_f1

    successes = 0
    f1_sum = 0.0
    turn_sum = 0
    domain_stats: dict[str, dict[str, float]] = {}
    for log in corpus.logs:
        success = evaluate_success(log, db)
        _, _, f1 = _inform_f1(log, db)
        turns = len(log.user_turns())
        successes += int(success)
        f1_sum += f1
        turn_sum += turns
        for d in log.goal.domains():
            stats = domain_stats.setdefault(
                d, {"episodes": 0, "successes": 0, "f1_sum": 0.0, "turn_sum": 0}
            )
            stats["episodes"] += 1
            stats["successes"] += int(_domain_success(log, db, d))
            stats["f1_sum"] += _domain_inform_f1(log, db, d)
            stats["turn_sum"] += turns

    n = len(corpus.logs)
    overall = {
        "success_rate": successes / n,
        "inform_f1": f1_sum / n,
        "avg_turns": turn_sum / n,
    }
    per_domain = {
        d: {
            "episodes": int(s["episodes"]),
            "success_rate": s["successes"] / s["episodes"],
            "inform_f1": s["f1_sum"] / s["episodes"],
            "avg_turns": s["turn_sum"] / s["episodes"],
        }
        for d, s in sorted(domain_stats.items())
    }

    seeds = corpus.seeds()
    return AnalysisReport(
        episode_count=n,
        pack=corpus.pack_path,
        seeds={
            "count": len(seeds),
            "first": seeds[0] if seeds else None,
            "fingerprint": seed_fingerprint(seeds),
        },
        overall=overall,
        per_domain=per_domain,
        nlu_confusion=nlu_confusion(corpus),
        system_act_audit=audit_system_acts(corpus, db),
        nlg_confusion=nlg_confusion(corpus),
        loop_causes=loop_causes(corpus),
    )


def compare(
    reports: Sequence[AnalysisReport], labels: Sequence[str]
) -> dict[str, Any]:
    """Side-by-side metrics for systems evaluated on the same goal sequence.

    Refuses corpora whose episode counts or seed fingerprints differ, since
    their metrics would not be comparable.  Deltas are against the first
    report.
    """
    if len(reports) < 2:
        raise ValueError("comparison needs at least two reports")
    if len(labels) != len(reports):
        raise ValueError("one label per report required")
    reference = reports[0]
    for r in reports[1:]:
        if (
            r.episode_count != reference.episode_count
            or r.seeds.get("fingerprint") != reference.seeds.get("fingerprint")
        ):
            raise CorpusMismatchError(
                "corpora were generated with different seeds or episode counts"
            )

    metrics = ("success_rate", "inform_f1", "avg_turns")
    overall = {label: dict(r.overall) for label, r in zip(labels, reports)}
    deltas = {
        m: {label: r.overall[m] - reference.overall[m] for label, r in zip(labels, reports)}
        for m in metrics
    }
    domains = sorted({d for r in reports for d in r.per_domain})
    per_domain: dict[str, Any] = {}
    for d in domains:
        per_domain[d] = {}
        for label, r in zip(labels, reports):
            stats = r.per_domain.get(d)
            per_domain[d][label] = None if stats is None else dict(stats)
    return {
        "labels": list(labels),
        "episode_count": reference.episode_count,
        "seeds": dict(reference.seeds),
        "overall": overall,
        "deltas": deltas,
        "per_domain": per_domain,
    }
