"""Membership-leakage auditing and hardening for model explanations.

A numpy/scipy toolkit that quantifies how much membership information
post-hoc explanations leak (via an explanation-only shadow-model attack and
a TPR-at-low-FPR leakage score) and hardens explanation methods against
that leakage with parameter search and clip/mask/noise transforms,
reporting privacy-utility Pareto fronts.
"""

__version__ = "0.1.0"

from . import attack, data, hardening, nn, pipeline, reporting, sensitivity, zoo  # noqa: E402,F401
from .explain import Explainer  # noqa: E402,F401

__all__ = [
    "Explainer",
    "__version__",
    "attack",
    "data",
    "hardening",
    "nn",
    "pipeline",
    "reporting",
    "sensitivity",
    "zoo",
]
