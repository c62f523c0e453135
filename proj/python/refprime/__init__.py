"""Referential-priming experiment harness.

Thin wrapper over the C++ core: stimulus/template generation, deterministic
mock sessions, answer coding, and Bayesian mixed-effects logistic regression
with HMC.
"""

from refprime._core import (
    ConfigError,
    ParseFailure,
    ValidationFailure,
    __version__,
    assign_temperatures,
    canonical_model,
    code_referent,
    condition_proportions,
    fit_records,
    generate_templates,
    levene_test,
    mock_cohort_records,
    p_map,
    parse_answer,
    render_persona_prompt,
    rhat_and_ess,
)

__all__ = [
    "ConfigError",
    "ParseFailure",
    "ValidationFailure",
    "__version__",
    "assign_temperatures",
    "canonical_model",
    "code_referent",
    "condition_proportions",
    "fit_records",
    "generate_templates",
    "levene_test",
    "mock_cohort_records",
    "p_map",
    "parse_answer",
    "render_persona_prompt",
    "rhat_and_ess",
]
