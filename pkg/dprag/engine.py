# dprag/engine.py
"""
Generation loops: Non-RAG, VoteRAG, DPVoteRAG and DPSparseVoteRAG.

Each loop returns the answer text and a full ``GenerationTrace``. Within a
step all generator calls are gathered before any noise is drawn, and the
noise order is fixed: SVT query noise, then LimitedDomain noise, then the
threshold refresh.
"""

from __future__ import annotations

import asyncio
import hashlib
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dprag import settings
from dprag.accountant import (
    PrivacyLedger,
    ledger_consume,
    ledger_record_pass,
    max_compositions,
    open_ledger,
)
from dprag.errors import InvalidArgumentError
from dprag.generation import GenerationContext, Generator, Token
from dprag.mechanisms import (
    LimitedDomainConfig,
    PrivacyBudget,
    TokenHistogram,
    Verdict,
    above_threshold_init,
    above_threshold_query,
    histogram_counts,
    limited_domain_select,
)
from dprag.retrieval import Retriever, partition, subset_documents
from dprag.seeding import run_streams

logger = logging.getLogger(__name__)


# Types ------------------------------------------------------------------------


class Algorithm(str, Enum):
    NON_RAG = "non_rag"
    VOTE_RAG = "vote_rag"
    DP_VOTE_RAG = "dp_vote_rag"
    DP_SPARSE_VOTE_RAG = "dp_sparse_vote_rag"

    @property
    def is_private(self) -> bool:
        return self in (Algorithm.DP_VOTE_RAG, Algorithm.DP_SPARSE_VOTE_RAG)


class StepVerdict(str, Enum):
    SPARSE_PASS = "sparse_pass"
    PRIVATE_VOTE = "private_vote"
    NOT_APPLICABLE = "n/a"


class HaltReason(str, Enum):
    EOS = "eos"
    NULL_TOKEN = "null_token"
    BUDGET_EXHAUSTED = "budget_exhausted"
    CAP_REACHED = "cap_reached"


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, use_enum_values=False)

    algorithm: Algorithm = Algorithm.DP_SPARSE_VOTE_RAG
    m: int = Field(default=20, ge=1)
    k: int = Field(default=1, ge=1)
    epsilon_token: float = Field(default=2.0, gt=0)
    delta_token: float = Field(default=settings.DEFAULT_DELTA_TOKEN, ge=0, lt=1)
    epsilon_total: float = Field(default=10.0, gt=0)
    delta_total: float = Field(default=settings.DEFAULT_DELTA_TOTAL, ge=0, lt=1)
    tau: Optional[float] = None
    t_max_cap: int = Field(default=settings.DEFAULT_T_MAX_CAP, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _delta_for_limited_domain(self) -> "RunConfig":
        if self.algorithm.is_private and self.delta_token <= 0:
            raise ValueError("private algorithms need delta_token > 0")
        return self

    @property
    def per_token(self) -> PrivacyBudget:
        return PrivacyBudget(self.epsilon_token, self.delta_token)

    @property
    def total(self) -> PrivacyBudget:
        return PrivacyBudget(self.epsilon_total, self.delta_total)

    @property
    def threshold(self) -> float:
        return self.m / 2 if self.tau is None else self.tau

    @property
    def k_bar(self) -> int:
        return self.m

    def config_hash(self) -> str:
        payload = self.model_dump_json(exclude={"seed"})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


class StepRecord(BaseModel):
    index: int
    voter_tokens: Optional[List[int]] = None
    non_rag_token: Optional[int] = None
    histogram: Optional[Dict[int, int]] = None
    verdict: StepVerdict = StepVerdict.NOT_APPLICABLE
    noisy_threshold: Optional[float] = None
    cutoff: Optional[float] = None
    emitted_token: Optional[int] = None
    budget_remaining_after: Optional[int] = None


class GenerationTrace(BaseModel):
    algorithm: Algorithm
    question: str
    seed: Optional[int] = None
    retrieved: List[str] = Field(default_factory=list)
    partition: List[List[str]] = Field(default_factory=list)
    max_private_votes: Optional[int] = None
    steps: List[StepRecord] = Field(default_factory=list)
    final_answer: List[str] = Field(default_factory=list)
    halt_reason: Optional[HaltReason] = None
    vocabulary_additions: List[str] = Field(default_factory=list)

    @property
    def private_votes(self) -> int:
        return sum(1 for s in self.steps if s.verdict is StepVerdict.PRIVATE_VOTE)

    @property
    def answer_text(self) -> str:
        return " ".join(self.final_answer)


RunOutcome = Tuple[str, GenerationTrace]


# Private helpers --------------------------------------------------------------


async def _gather_tokens(generator: Generator, contexts: Sequence[GenerationContext]) -> List[Token]:
    return list(await asyncio.gather(*(generator.next_token(c) for c in contexts)))


def _voter_contexts(
    question: str,
    shards: Sequence[Tuple],
    prefix: Sequence[Token],
) -> List[GenerationContext]:
    return [GenerationContext(question=question, documents=docs, prefix=tuple(prefix)) for docs in shards]


def _retrieve_shards(
    question: str,
    index: Retriever,
    m: int,
    k: int,
    rng: np.random.Generator,
    trace: GenerationTrace,
) -> List[Tuple]:
    result = index.search(question, m * k)
    voters = partition(result, m, k, rng)
    trace.retrieved = list(result.ranked)
    trace.partition = [list(s) for s in voters.subsets]
    return [subset_documents(index, s) for s in voters.subsets]


def _finish(trace: GenerationTrace, emitted: List[Token], reason: HaltReason, generator: Generator, vocab_mark: int) -> RunOutcome:
    trace.final_answer = [t.surface for t in emitted if t.id != generator.vocabulary.eos.id]
    trace.halt_reason = reason
    trace.vocabulary_additions = generator.vocabulary.surfaces_since(vocab_mark)
    logger.debug("%s halted (%s) after %d steps", trace.algorithm.value, reason.value, len(trace.steps))
    return trace.answer_text, trace


def _plurality(tokens: Sequence[Token]) -> Tuple[Token, TokenHistogram]:
    hist = TokenHistogram.from_votes(t.id for t in tokens)
    winner_id = hist.ranked()[0][0]
    return next(t for t in tokens if t.id == winner_id), hist


# Public API -------------------------------------------------------------------


async def run_non_rag(question: str, generator: Generator, cap: int = settings.DEFAULT_T_MAX_CAP) -> RunOutcome:
    """Greedy decode with an empty document list until EOS or ``cap`` tokens."""
    trace = GenerationTrace(algorithm=Algorithm.NON_RAG, question=question)
    mark = len(generator.vocabulary)
    emitted: List[Token] = []
    while True:
        token = await generator.next_token(GenerationContext(question=question, prefix=tuple(emitted)))
        emitted.append(token)
        trace.steps.append(StepRecord(index=len(trace.steps), emitted_token=token.id))
        if token.id == generator.vocabulary.eos.id:
            return _finish(trace, emitted, HaltReason.EOS, generator, mark)
        if len(emitted) >= cap:
            return _finish(trace, emitted, HaltReason.CAP_REACHED, generator, mark)


async def run_vote_rag(
    question: str,
    index: Retriever,
    generator: Generator,
    m: int,
    k: int,
    rng: np.random.Generator,
    cap: int = settings.DEFAULT_T_MAX_CAP,
) -> RunOutcome:
    """Non-private plurality vote over m voters; ties go to the lowest token id."""
    trace = GenerationTrace(algorithm=Algorithm.VOTE_RAG, question=question)
    mark = len(generator.vocabulary)
    streams = run_streams(rng)
    shards = _retrieve_shards(question, index, m, k, streams.partition, trace)

    emitted: List[Token] = []
    while True:
        votes = await _gather_tokens(generator, _voter_contexts(question, shards, emitted))
        token, hist = _plurality(votes)
        emitted.append(token)
        trace.steps.append(
            StepRecord(
                index=len(trace.steps),
                voter_tokens=[v.id for v in votes],
                histogram=histogram_counts(hist),
                emitted_token=token.id,
            )
        )
        if token.id == generator.vocabulary.eos.id:
            return _finish(trace, emitted, HaltReason.EOS, generator, mark)
        if len(emitted) >= cap:
            return _finish(trace, emitted, HaltReason.CAP_REACHED, generator, mark)


async def run_dp_vote_rag(
    question: str,
    index: Retriever,
    generator: Generator,
    cfg: RunConfig,
    rng: np.random.Generator,
) -> RunOutcome:
    """Every token is a LimitedDomain vote at (ε_token, δ_token); at most T_max tokens."""
    plan = max_compositions(cfg.per_token, cfg.total)
    ledger = open_ledger(plan)
    trace = GenerationTrace(algorithm=Algorithm.DP_VOTE_RAG, question=question, seed=cfg.seed, max_private_votes=plan.max_steps)
    mark = len(generator.vocabulary)
    streams = run_streams(rng)
    shards = _retrieve_shards(question, index, cfg.m, cfg.k, streams.partition, trace)

    emitted: List[Token] = []
    while True:
        step = len(trace.steps)
        votes = await _gather_tokens(generator, _voter_contexts(question, shards, emitted))
        hist = TokenHistogram.from_votes(v.id for v in votes)
        selection = limited_domain_select(
            hist,
            LimitedDomainConfig(cfg.k_bar, cfg.per_token, vocab_size=len(generator.vocabulary)),
            streams.selection,
        )
        ledger_consume(ledger, step)
        trace.steps.append(
            StepRecord(
                index=step,
                voter_tokens=[v.id for v in votes],
                histogram=histogram_counts(hist),
                verdict=StepVerdict.PRIVATE_VOTE,
                cutoff=selection.cutoff,
                emitted_token=selection.token,
                budget_remaining_after=ledger.remaining,
            )
        )
        if selection.token is None:
            return _finish(trace, emitted, HaltReason.NULL_TOKEN, generator, mark)
        token = generator.vocabulary.token(selection.token)
        emitted.append(token)
        if token.id == generator.vocabulary.eos.id:
            return _finish(trace, emitted, HaltReason.EOS, generator, mark)
        if ledger.remaining == 0:
            return _finish(trace, emitted, HaltReason.BUDGET_EXHAUSTED, generator, mark)


async def run_dp_sparse_vote_rag(
    question: str,
    index: Retriever,
    generator: Generator,
    cfg: RunConfig,
    rng: np.random.Generator,
) -> RunOutcome:
    """
    Tokens the voters agree on with the non-RAG generator pass the SVT gate for
    free; only Below verdicts spend a private vote at (ε_token/2, δ_token).
    """
    plan = max_compositions(cfg.per_token, cfg.total)
    ledger: PrivacyLedger = open_ledger(plan)
    vote_budget = cfg.per_token.halve_epsilon()
    epsilon_lap = cfg.epsilon_token / 2
    trace = GenerationTrace(algorithm=Algorithm.DP_SPARSE_VOTE_RAG, question=question, seed=cfg.seed, max_private_votes=plan.max_steps)
    mark = len(generator.vocabulary)
    streams = run_streams(rng)
    shards = _retrieve_shards(question, index, cfg.m, cfg.k, streams.partition, trace)
    state = above_threshold_init(cfg.threshold, epsilon_lap, streams.svt)

    emitted: List[Token] = []
    while True:
        step = len(trace.steps)
        contexts = [GenerationContext(question=question, prefix=tuple(emitted))]
        contexts += _voter_contexts(question, shards, emitted)
        non_rag, *votes = await _gather_tokens(generator, contexts)
        hist = TokenHistogram.from_votes(v.id for v in votes)
        record = StepRecord(
            index=step,
            voter_tokens=[v.id for v in votes],
            non_rag_token=non_rag.id,
            histogram=histogram_counts(hist),
            noisy_threshold=state.tau_hat,
        )

        verdict = above_threshold_query(hist.count(non_rag.id), state, streams.svt)
        if verdict is Verdict.ABOVE:
            ledger_record_pass(ledger, step)
            record.verdict = StepVerdict.SPARSE_PASS
            chosen: Optional[int] = non_rag.id
        else:
            selection = limited_domain_select(
                hist,
                LimitedDomainConfig(cfg.k_bar, vote_budget, vocab_size=len(generator.vocabulary)),
                streams.selection,
            )
            ledger_consume(ledger, step)
            # Refreshed even when the budget just ran out.
            state = above_threshold_init(cfg.threshold, epsilon_lap, streams.svt)
            record.verdict = StepVerdict.PRIVATE_VOTE
            record.cutoff = selection.cutoff
            chosen = selection.token

        record.emitted_token = chosen
        record.budget_remaining_after = ledger.remaining
        trace.steps.append(record)

        if chosen is None:
            return _finish(trace, emitted, HaltReason.NULL_TOKEN, generator, mark)
        token = generator.vocabulary.token(chosen)
        emitted.append(token)
        if token.id == generator.vocabulary.eos.id:
            return _finish(trace, emitted, HaltReason.EOS, generator, mark)
        if ledger.remaining == 0:
            return _finish(trace, emitted, HaltReason.BUDGET_EXHAUSTED, generator, mark)
        if len(emitted) >= cfg.t_max_cap:
            return _finish(trace, emitted, HaltReason.CAP_REACHED, generator, mark)


async def run(
    question: str,
    index: Optional[Retriever],
    generator: Generator,
    cfg: RunConfig,
    rng: np.random.Generator,
) -> RunOutcome:
    if cfg.algorithm is Algorithm.NON_RAG:
        answer, trace = await run_non_rag(question, generator, cfg.t_max_cap)
        trace.seed = cfg.seed
        return answer, trace
    if index is None:
        raise InvalidArgumentError(f"{cfg.algorithm.value} needs a corpus index")
    if cfg.algorithm is Algorithm.VOTE_RAG:
        answer, trace = await run_vote_rag(question, index, generator, cfg.m, cfg.k, rng, cfg.t_max_cap)
        trace.seed = cfg.seed
        return answer, trace
    if cfg.algorithm is Algorithm.DP_VOTE_RAG:
        return await run_dp_vote_rag(question, index, generator, cfg, rng)
    return await run_dp_sparse_vote_rag(question, index, generator, cfg, rng)


def write_trace(trace: GenerationTrace, cfg: RunConfig, output_dir: Union[str, Path]) -> Path:
    """One JSON document per run, named by config hash and seed."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    question_hash = hashlib.sha256(trace.question.encode("utf-8")).hexdigest()[:8]
    path = out / f"{cfg.config_hash()}-{question_hash}-{cfg.seed}.json"
    path.write_text(trace.model_dump_json(indent=2), encoding="utf-8")
    return path
