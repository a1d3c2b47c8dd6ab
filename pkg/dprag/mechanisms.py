# dprag/mechanisms.py
"""
Differential-privacy primitives: noise samplers, the LimitedDomain private
top-1 selector and the AboveThreshold gate.

Every sampler consumes exactly one uniform draw per noise value from the
caller's ``numpy.random.Generator``, so outputs are pure functions of
(inputs, seed).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from dprag.errors import ContractViolationError, InvalidArgumentError

# Noisy scores are compared on this grid; equal grid values go to the lower token id.
SCORE_RESOLUTION = 1e-3


# Types ------------------------------------------------------------------------


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not self.epsilon > 0 or math.isinf(self.epsilon):
            raise InvalidArgumentError(f"epsilon must be positive and finite, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise InvalidArgumentError(f"delta must lie in [0, 1), got {self.delta}")

    def halve_epsilon(self) -> "PrivacyBudget":
        return PrivacyBudget(self.epsilon / 2, self.delta)


@dataclass(frozen=True)
class TokenHistogram:
    counts: Mapping[int, int]
    voter_count: int

    def __post_init__(self) -> None:
        if any(c < 0 for c in self.counts.values()):
            raise InvalidArgumentError("histogram counts must be non-negative")
        if sum(self.counts.values()) != self.voter_count:
            raise InvalidArgumentError("histogram counts must sum to voter_count")

    @classmethod
    def from_votes(cls, token_ids: Iterable[int]) -> "TokenHistogram":
        votes = list(token_ids)
        return cls(counts=dict(Counter(votes)), voter_count=len(votes))

    def count(self, token_id: int) -> int:
        return int(self.counts.get(token_id, 0))

    def ranked(self) -> List[Tuple[int, int]]:
        """Positive bins by descending count, ascending token id on ties."""
        return sorted(
            ((t, c) for t, c in self.counts.items() if c > 0),
            key=lambda item: (-item[1], item[0]),
        )


@dataclass(frozen=True)
class LimitedDomainConfig:
    k_bar: int
    budget: PrivacyBudget
    vocab_size: Optional[int] = None

    def __post_init__(self) -> None:
        if self.k_bar < 1:
            raise InvalidArgumentError(f"k_bar must be >= 1, got {self.k_bar}")
        if self.budget.delta <= 0:
            raise InvalidArgumentError("LimitedDomain requires delta > 0")


@dataclass(frozen=True)
class LimitedDomainSelection:
    token: Optional[int]
    cutoff: float
    candidates: Tuple[int, ...]


class Verdict(str, Enum):
    ABOVE = "above"
    BELOW = "below"


@dataclass
class NoisyThresholdState:
    tau: float
    tau_hat: float
    epsilon_lap: float
    consumed: bool = field(default=False)


# Samplers ---------------------------------------------------------------------


def _check_scale(scale: float) -> None:
    if not scale > 0:
        raise InvalidArgumentError(f"noise scale must be positive, got {scale}")


def _open_uniform(rng: np.random.Generator) -> float:
    # random() lives in [0, 1); both transforms diverge at 0.
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return float(u)


def laplace_inverse_cdf(u: float, scale: float) -> float:
    _check_scale(scale)
    centred = u - 0.5
    return -scale * math.copysign(1.0, centred) * math.log(1 - 2 * abs(centred)) if centred else 0.0


def gumbel_inverse_cdf(u: float, scale: float) -> float:
    _check_scale(scale)
    return -scale * math.log(-math.log(u))


def sample_laplace(scale: float, rng: np.random.Generator) -> float:
    _check_scale(scale)
    return laplace_inverse_cdf(_open_uniform(rng), scale)


def sample_gumbel(scale: float, rng: np.random.Generator) -> float:
    _check_scale(scale)
    return gumbel_inverse_cdf(_open_uniform(rng), scale)


# LimitedDomain ----------------------------------------------------------------


def limited_domain_cutoff(ranked: List[Tuple[int, int]], cfg: LimitedDomainConfig) -> float:
    """h_bot = h_(k̄+1) + 1 + ceil(ln(min(k̄, |V| - k̄) / δ) / ε)."""
    h_next = ranked[cfg.k_bar][1] if len(ranked) > cfg.k_bar else 0
    breadth = cfg.k_bar if cfg.vocab_size is None else min(cfg.k_bar, cfg.vocab_size - cfg.k_bar)
    breadth = max(1, breadth)
    eps, delta = cfg.budget.epsilon, cfg.budget.delta
    return h_next + 1 + math.ceil(math.log(breadth / delta) / eps)


def _grid_score(value: float) -> int:
    return round(value / SCORE_RESOLUTION)


def limited_domain_select(
    hist: TokenHistogram,
    cfg: LimitedDomainConfig,
    rng: np.random.Generator,
) -> LimitedDomainSelection:
    if hist.voter_count < 1 or not hist.counts:
        raise InvalidArgumentError("LimitedDomain needs a non-empty histogram")
    if cfg.budget.delta <= 0:
        raise InvalidArgumentError("LimitedDomain requires delta > 0")

    ranked = hist.ranked()
    candidates = ranked[: cfg.k_bar]
    cutoff = limited_domain_cutoff(ranked, cfg)
    scale = 1.0 / cfg.budget.epsilon

    # Noise order: candidates in ranked order, then the bottom candidate.
    best_token: Optional[int] = None
    best_score: Optional[int] = None
    for token_id, count in candidates:
        score = _grid_score(count + sample_gumbel(scale, rng))
        if best_score is None or score > best_score or (score == best_score and token_id < best_token):
            best_token, best_score = token_id, score
    if _grid_score(cutoff + sample_gumbel(scale, rng)) > best_score:
        best_token = None

    return LimitedDomainSelection(
        token=best_token,
        cutoff=float(cutoff),
        candidates=tuple(t for t, _ in candidates),
    )


def limited_domain_top1(
    hist: TokenHistogram,
    cfg: LimitedDomainConfig,
    rng: np.random.Generator,
) -> Optional[int]:
    """Private arg-max over the top-k̄ bins; ``None`` means the bottom candidate won (halt)."""
    return limited_domain_select(hist, cfg, rng).token


# AboveThreshold ---------------------------------------------------------------


def above_threshold_init(tau: float, epsilon_lap: float, rng: np.random.Generator) -> NoisyThresholdState:
    if not epsilon_lap > 0:
        raise InvalidArgumentError(f"epsilon_lap must be positive, got {epsilon_lap}")
    return NoisyThresholdState(
        tau=tau,
        tau_hat=tau + sample_laplace(2.0 / epsilon_lap, rng),
        epsilon_lap=epsilon_lap,
    )


def above_threshold_query(count: int, state: NoisyThresholdState, rng: np.random.Generator) -> Verdict:
    """
    Below iff count + Lap(4/ε) <= tau_hat. A Below verdict consumes the state;
    the caller must re-init before the next query.
    """
    if state.consumed:
        raise ContractViolationError("threshold state already consumed; re-initialise it first")
    if count < 0:
        raise InvalidArgumentError(f"count must be non-negative, got {count}")
    noisy = count + sample_laplace(4.0 / state.epsilon_lap, rng)
    if noisy <= state.tau_hat:
        state.consumed = True
        return Verdict.BELOW
    return Verdict.ABOVE


def histogram_counts(hist: TokenHistogram) -> Dict[int, int]:
    """Plain dict copy with sorted keys, for traces."""
    return {t: int(hist.counts[t]) for t in sorted(hist.counts)}
