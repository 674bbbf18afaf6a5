"""Exact and sample-based distributional Retrace on tabular MDPs."""
from __future__ import annotations

__version__ = "0.1.0"

from .mdp import (  # noqa: E402
    Policy,
    TabularMDP,
    TraceConfig,
    Trajectory,
    counterexample_mdp,
    chain3_mdp,
    make_random_mdp,
    mix_policy,
    uniform_policy,
)
from .measures import DiracMixture, dirac, lp_distance, wasserstein  # noqa: E402
from .operators import (  # noqa: E402
    apply_backup,
    bellman_backup,
    contraction_rate,
    make_operator,
    retrace_decompose,
    value_retrace_backup,
)

__all__ = [
    "__version__",
    "Policy",
    "TabularMDP",
    "TraceConfig",
    "Trajectory",
    "DiracMixture",
    "apply_backup",
    "bellman_backup",
    "chain3_mdp",
    "contraction_rate",
    "counterexample_mdp",
    "dirac",
    "lp_distance",
    "make_operator",
    "make_random_mdp",
    "mix_policy",
    "retrace_decompose",
    "uniform_policy",
    "value_retrace_backup",
    "wasserstein",
]
