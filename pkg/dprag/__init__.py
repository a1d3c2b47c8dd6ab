# dprag/__init__.py
"""Differentially private retrieval-augmented generation by token-level voting."""

from __future__ import annotations

from dprag.accountant import CompositionPlan, max_compositions
from dprag.engine import Algorithm, GenerationTrace, HaltReason, RunConfig, run
from dprag.errors import DpRagError
from dprag.mechanisms import PrivacyBudget, TokenHistogram, limited_domain_top1

__all__ = [
    "Algorithm",
    "CompositionPlan",
    "DpRagError",
    "GenerationTrace",
    "HaltReason",
    "PrivacyBudget",
    "RunConfig",
    "TokenHistogram",
    "limited_domain_top1",
    "max_compositions",
    "run",
]
