"""Online UE-to-BS association under heterogeneous handover delays."""

from ldaho.net_model import (
    BsConfig,
    DelayModel,
    ScenarioTrace,
    UeConfig,
    capacity,
    f_value,
    g_gradient,
    g_value,
    sinr_linear,
    switching_cost,
)
from ldaho.lda import LdaParams, LdaState, derive_params, lda_step, run_lda

__version__ = "0.1.0"

__all__ = [
    "BsConfig",
    "DelayModel",
    "LdaParams",
    "LdaState",
    "ScenarioTrace",
    "UeConfig",
    "capacity",
    "derive_params",
    "f_value",
    "g_gradient",
    "g_value",
    "lda_step",
    "run_lda",
    "sinr_linear",
    "switching_cost",
]
