"""Assemble, simulate, diagnose, and interactively debug task-oriented
dialogue systems built from pipeline components."""

from .core import (
    BeliefState,
    DialogueAct,
    DialogueLog,
    MalformedActError,
    Turn,
    format_act_string,
    parse_act_string,
)
from .ontology import (
    Database,
    DomainSchema,
    GoalConfig,
    UserGoal,
    bundled_pack_path,
    generate_goal,
    load_domain_pack,
    query,
)
from .pipeline import (
    NoiseConfig,
    PatternNLU,
    PipelineAgent,
    RuleDST,
    RulePolicy,
    TemplateNLG,
    corrupt_acts,
    load_template_table,
)
from .session import (
    BiSession,
    DialogueCorpus,
    EvaluationResult,
    Evaluator,
    SystemConfig,
    UserConfig,
    evaluate_success,
    inform_f1,
    run_episodes,
)
from .simulator import AgendaUserPolicy
from .analyzer import AnalysisReport, analyze, compare

__version__ = "0.1.0"
