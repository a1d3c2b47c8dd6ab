# dprag/accountant.py
"""
How many private token releases a total budget affords, and the run-time
ledger that counts them down.

The maximum is the larger of the sequential and the advanced composition
counts. Advanced composition uses the bound

    sqrt(2 T ln(1/δ')) ε₀ + T ε₀ (e^ε₀ − 1) <= ε_total,   T δ₀ <= δ_total / 2

with δ' = δ_total / 2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Tuple

import numpy as np

from dprag.errors import BudgetExhaustedError, InfeasibleBudgetError
from dprag.mechanisms import PrivacyBudget

logger = logging.getLogger(__name__)

SCAN_CAP = 1_000_000


class CompositionRule(str, Enum):
    SEQUENTIAL = "sequential"
    ADVANCED = "advanced"


class LedgerEventKind(str, Enum):
    PRIVATE_VOTE = "private_vote"
    SPARSE_PASS = "sparse_pass"


@dataclass(frozen=True)
class CompositionPlan:
    per_token: PrivacyBudget
    total: PrivacyBudget
    max_steps: int
    rule_used: CompositionRule

    def csv_row(self) -> str:
        return ",".join(
            [
                repr(self.per_token.epsilon),
                repr(self.per_token.delta),
                repr(self.total.epsilon),
                repr(self.total.delta),
                self.rule_used.value,
                str(self.max_steps),
            ]
        )


@dataclass(frozen=True)
class LedgerEvent:
    step_index: int
    kind: LedgerEventKind


@dataclass
class PrivacyLedger:
    plan: CompositionPlan
    remaining: int
    events: List[LedgerEvent] = field(default_factory=list)

    @property
    def private_votes(self) -> int:
        return sum(1 for e in self.events if e.kind is LedgerEventKind.PRIVATE_VOTE)


# Composition bounds -----------------------------------------------------------


def _expm1(eps0: float) -> float:
    # e^ε₀ overflows a double above ε₀ ≈ 709.78; the bound is then infinite.
    try:
        return math.expm1(eps0)
    except OverflowError:
        return math.inf


def advanced_epsilon(per_token: PrivacyBudget, steps: int, total_delta: float) -> float:
    if steps == 0:
        return 0.0
    eps0 = per_token.epsilon
    delta_prime = total_delta / 2
    return math.sqrt(2 * steps * math.log(1 / delta_prime)) * eps0 + steps * eps0 * _expm1(eps0)


def composition_cost(
    per_token: PrivacyBudget,
    steps: int,
    rule: CompositionRule,
    total_delta: float,
) -> Tuple[float, float]:
    """(ε, δ) spent by ``steps`` compositions under ``rule``."""
    if rule is CompositionRule.SEQUENTIAL:
        return steps * per_token.epsilon, steps * per_token.delta
    # The δ' half of the total is the price of the advanced bound itself.
    return advanced_epsilon(per_token, steps, total_delta), steps * per_token.delta + total_delta / 2


def sequential_max(per_token: PrivacyBudget, total: PrivacyBudget) -> int:
    steps = math.floor(total.epsilon / per_token.epsilon)
    if per_token.delta > 0:
        steps = min(steps, math.floor(total.delta / per_token.delta))
    # Keep the count consistent with re-multiplying in floating point.
    while steps > 0 and (steps * per_token.epsilon > total.epsilon or steps * per_token.delta > total.delta):
        steps -= 1
    return max(0, int(steps))


def advanced_max(per_token: PrivacyBudget, total: PrivacyBudget) -> int:
    if total.delta <= 0:
        return 0
    cap = SCAN_CAP
    if per_token.delta > 0:
        cap = min(cap, math.floor((total.delta / 2) / per_token.delta))
        while cap > 0 and cap * per_token.delta > total.delta / 2:
            cap -= 1
    if cap < 1:
        return 0

    steps = np.arange(1, cap + 1, dtype=np.float64)
    eps0 = per_token.epsilon
    bound = np.sqrt(2 * steps * math.log(2 / total.delta)) * eps0 + steps * eps0 * _expm1(eps0)
    violations = np.flatnonzero(bound > total.epsilon)
    return int(violations[0]) if violations.size else cap


def max_compositions(per_token: PrivacyBudget, total: PrivacyBudget) -> CompositionPlan:
    sequential = sequential_max(per_token, total)
    advanced = advanced_max(per_token, total)
    if sequential == 0 and advanced == 0:
        raise InfeasibleBudgetError(
            f"infeasible budget: per-token (ε={per_token.epsilon}, δ={per_token.delta}) "
            f"does not fit total (ε={total.epsilon}, δ={total.delta})"
        )
    if advanced > sequential:
        plan = CompositionPlan(per_token, total, advanced, CompositionRule.ADVANCED)
    else:
        plan = CompositionPlan(per_token, total, sequential, CompositionRule.SEQUENTIAL)
    logger.debug("composition plan: %s steps via %s", plan.max_steps, plan.rule_used.value)
    return plan


# Ledger -----------------------------------------------------------------------


def open_ledger(plan: CompositionPlan) -> PrivacyLedger:
    return PrivacyLedger(plan=plan, remaining=plan.max_steps)


def ledger_consume(ledger: PrivacyLedger, step_index: int) -> PrivacyLedger:
    if ledger.remaining < 1:
        raise BudgetExhaustedError(f"privacy budget exhausted at step {step_index}")
    ledger.remaining -= 1
    ledger.events.append(LedgerEvent(step_index, LedgerEventKind.PRIVATE_VOTE))
    return ledger


def ledger_record_pass(ledger: PrivacyLedger, step_index: int) -> PrivacyLedger:
    ledger.events.append(LedgerEvent(step_index, LedgerEventKind.SPARSE_PASS))
    return ledger
