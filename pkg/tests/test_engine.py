# tests/test_engine.py
import json

import numpy as np
import pytest

from dprag import synthetic
from dprag.engine import (
    Algorithm,
    HaltReason,
    RunConfig,
    StepVerdict,
    run,
    run_dp_sparse_vote_rag,
    run_dp_vote_rag,
    run_non_rag,
    run_vote_rag,
    write_trace,
)
from dprag.errors import InvalidArgumentError
from dprag.evaluation import match_accuracy
from dprag.generation import ScriptedGenerator, Vocabulary
from dprag.retrieval import Document, TfidfIndex
from dprag.seeding import run_rng

NOISELESS = dict(epsilon_token=1e6, epsilon_total=1e7, delta_total=1e-4)


def _cfg(algorithm, m, **kwargs):
    return RunConfig(algorithm=algorithm, m=m, k=kwargs.pop("k", 1), **kwargs)


def _three_voters(said):
    """Three one-document voters; voter j answers ``said[j]`` and then stops."""
    docs = [Document(f"v{j}", f"voter {j} note") for j in range(3)]
    gen = ScriptedGenerator(vocabulary=Vocabulary(["a", "b", "c", "alpha", "beta"]))
    for doc, word in zip(docs, said):
        gen.program_answer("q", (doc,), [word])
    return TfidfIndex(docs), gen


# --- non-RAG ---
@pytest.mark.asyncio
async def test_non_rag_answers_and_halts_on_eos():
    gen = ScriptedGenerator()
    gen.program_answer("q", (), ["a"])
    answer, trace = await run_non_rag("q", gen)
    assert answer == "a"
    assert trace.halt_reason is HaltReason.EOS
    assert len(trace.steps) == 2


@pytest.mark.asyncio
async def test_non_rag_stops_at_cap():
    gen = ScriptedGenerator()
    gen.program_answer("q", (), ["a", "b", "c", "d"], end=False)
    answer, trace = await run_non_rag("q", gen, cap=3)
    assert answer == "a b c"
    assert trace.halt_reason is HaltReason.CAP_REACHED


@pytest.mark.asyncio
async def test_non_rag_is_deterministic():
    gen = ScriptedGenerator()
    gen.program_answer("q", (), ["x", "y"])
    _, first = await run_non_rag("q", gen)
    _, second = await run_non_rag("q", gen)
    assert first.model_dump() == second.model_dump()


# --- VoteRAG ---
@pytest.mark.asyncio
async def test_vote_rag_unanimous(gatsby):
    scenario, index = gatsby
    answer, trace = await run_vote_rag(scenario.question, index, scenario.generator, 3, 1, run_rng(0))
    assert answer == "the great gatsby is a novel"
    assert trace.halt_reason is HaltReason.EOS
    assert len(trace.retrieved) == 3
    assert all(len(s) == 1 for s in trace.partition)


@pytest.mark.asyncio
async def test_vote_rag_majority_wins():
    index, gen = _three_voters(["alpha", "alpha", "beta"])
    answer, trace = await run_vote_rag("q", index, gen, 3, 1, run_rng(1))
    assert answer == "alpha"
    assert trace.steps[0].histogram == {gen.vocabulary.lookup("alpha").id: 2, gen.vocabulary.lookup("beta").id: 1}


@pytest.mark.asyncio
async def test_vote_rag_tie_goes_to_lowest_token_id():
    index, gen = _three_voters(["c", "b", "a"])
    answer, _ = await run_vote_rag("q", index, gen, 3, 1, run_rng(2))
    assert answer == "a"


@pytest.mark.asyncio
async def test_run_requires_index_for_rag_algorithms():
    gen = ScriptedGenerator()
    with pytest.raises(InvalidArgumentError):
        await run("q", None, gen, _cfg(Algorithm.VOTE_RAG, 3), run_rng(0))
    answer, trace = await run("q", None, gen, _cfg(Algorithm.NON_RAG, 3, seed=4), run_rng(4))
    assert answer == ""
    assert trace.seed == 4


# --- noiseless limit ---
@pytest.mark.asyncio
async def test_dp_vote_matches_vote_rag_when_noiseless():
    for i, scenario in enumerate(synthetic.voting_scenarios(50, m=7, seed=3)):
        index = TfidfIndex(scenario.corpus)
        expected, _ = await run_vote_rag(scenario.question, index, scenario.generator, 7, 1, run_rng(i))
        cfg = _cfg(Algorithm.DP_VOTE_RAG, 7, seed=i, **NOISELESS)
        answer, trace = await run_dp_vote_rag(scenario.question, index, scenario.generator, cfg, run_rng(i))
        assert answer == expected, scenario.question
        assert trace.max_private_votes == 10
        assert trace.halt_reason is HaltReason.EOS


# --- ledger soundness ---
@pytest.mark.asyncio
async def test_private_votes_never_exceed_budget():
    scenarios = synthetic.voting_scenarios(50, m=7, seed=4)
    indexes = [TfidfIndex(s.corpus) for s in scenarios]
    rng = np.random.default_rng(2025)
    exhausted = 0
    for run_id in range(1000):
        i = run_id % len(scenarios)
        eps_token = float(rng.uniform(0.2, 5.0))
        cfg = _cfg(
            Algorithm.DP_SPARSE_VOTE_RAG,
            7,
            epsilon_token=eps_token,
            epsilon_total=float(rng.uniform(eps_token, 15.0)),
            t_max_cap=20,
            seed=run_id,
        )
        _, trace = await run_dp_sparse_vote_rag(scenarios[i].question, indexes[i], scenarios[i].generator, cfg, run_rng(run_id))

        assert trace.private_votes <= trace.max_private_votes
        remaining = [s.budget_remaining_after for s in trace.steps]
        assert remaining == sorted(remaining, reverse=True)
        if trace.halt_reason is HaltReason.BUDGET_EXHAUSTED:
            exhausted += 1
            assert trace.steps[-1].budget_remaining_after == 0
    assert exhausted > 0


# --- Gatsby ---
GATSBY_BUDGET = dict(epsilon_token=1.0, delta_token=1e-5, epsilon_total=5.0, delta_total=1e-4)


@pytest.mark.asyncio
async def test_gatsby_dp_vote_runs_out_before_novel(gatsby):
    scenario, index = gatsby
    for seed in range(20):
        cfg = _cfg(Algorithm.DP_VOTE_RAG, 100, seed=seed, **GATSBY_BUDGET)
        _, trace = await run_dp_vote_rag(scenario.question, index, scenario.generator, cfg, run_rng(seed))
        assert trace.max_private_votes == 5
        assert len(trace.final_answer) <= 5
        assert "novel" not in trace.final_answer


@pytest.mark.asyncio
async def test_gatsby_dp_sparse_reaches_novel(gatsby):
    scenario, index = gatsby
    hits = 0
    for seed in range(50):
        cfg = _cfg(Algorithm.DP_SPARSE_VOTE_RAG, 100, seed=seed, **GATSBY_BUDGET)
        _, trace = await run_dp_sparse_vote_rag(scenario.question, index, scenario.generator, cfg, run_rng(seed))
        hits += "novel" in trace.final_answer
    assert hits >= 45


@pytest.mark.asyncio
async def test_gatsby_noiseless_needs_one_private_vote(gatsby):
    scenario, index = gatsby
    cfg = _cfg(Algorithm.DP_SPARSE_VOTE_RAG, 100, seed=0, **NOISELESS)
    answer, trace = await run_dp_sparse_vote_rag(scenario.question, index, scenario.generator, cfg, run_rng(0))
    assert "novel" in answer
    assert trace.private_votes == 1
    private = [s.index for s in trace.steps if s.verdict is StepVerdict.PRIVATE_VOTE]
    assert private == [5]
    assert trace.halt_reason is HaltReason.EOS


@pytest.mark.asyncio
async def test_agreeing_non_rag_spends_nothing():
    scenario = synthetic.gatsby_scenario(m=20)
    scenario.generator.program_answer(scenario.question, (), synthetic.GATSBY_ANSWER)
    index = TfidfIndex(scenario.corpus)
    cfg = _cfg(Algorithm.DP_SPARSE_VOTE_RAG, 20, seed=1, **NOISELESS)
    answer, trace = await run_dp_sparse_vote_rag(scenario.question, index, scenario.generator, cfg, run_rng(1))
    assert answer == "the great gatsby is a novel"
    assert trace.private_votes == 0
    assert all(s.verdict is StepVerdict.SPARSE_PASS for s in trace.steps)


@pytest.mark.asyncio
async def test_single_private_vote_then_budget_exhausted():
    docs = [Document(f"d{i:02d}", f"entry {i}") for i in range(50)]
    gen = ScriptedGenerator(fallback="x")
    for doc in docs:
        gen.program_answer("q", (doc,), ["novel"])
    index = TfidfIndex(docs)
    for seed in range(10):
        cfg = _cfg(Algorithm.DP_SPARSE_VOTE_RAG, 50, epsilon_token=5.0, delta_token=1e-5, epsilon_total=5.0, delta_total=1e-4, seed=seed)
        answer, trace = await run_dp_sparse_vote_rag("q", index, gen, cfg, run_rng(seed))
        assert trace.max_private_votes == 1
        assert answer == "novel"
        assert trace.halt_reason is HaltReason.BUDGET_EXHAUSTED
        assert trace.steps[-1].budget_remaining_after == 0


# --- utility ---
@pytest.mark.asyncio
async def test_sparse_vote_outlasts_dense_vote_on_predictable_answers():
    budget = dict(epsilon_token=2.0, epsilon_total=10.0)
    dense, sparse = [], []
    for i, scenario in enumerate(synthetic.predictable_scenarios(20, m=20, length=20, knowledge_tokens=4)):
        index = TfidfIndex(scenario.corpus)
        _, t_dense = await run_dp_vote_rag(scenario.question, index, scenario.generator, _cfg(Algorithm.DP_VOTE_RAG, 20, seed=i, **budget), run_rng(i))
        _, t_sparse = await run_dp_sparse_vote_rag(scenario.question, index, scenario.generator, _cfg(Algorithm.DP_SPARSE_VOTE_RAG, 20, seed=i, **budget), run_rng(i))
        dense.append(len(t_dense.final_answer))
        sparse.append(len(t_sparse.final_answer))
    assert np.mean(sparse) >= 2 * np.mean(dense)


@pytest.mark.asyncio
async def test_more_relevant_documents_help():
    async def accuracy(relevant):
        scenario = synthetic.relevant_documents_scenario(relevant, m=20)
        index = TfidfIndex(scenario.corpus)
        scores = []
        for seed in range(10):
            cfg = _cfg(Algorithm.DP_SPARSE_VOTE_RAG, 20, epsilon_token=2.0, epsilon_total=10.0, seed=seed)
            answer, _ = await run(scenario.question, index, scenario.generator, cfg, run_rng(seed))
            scores.append(match_accuracy(answer, scenario.answers))
        return float(np.mean(scores))

    assert await accuracy(20) > await accuracy(2)


@pytest.mark.asyncio
async def test_more_voters_do_not_hurt_at_unit_epsilon_token(gatsby):
    # ε_token = 1: s 10 voliči ⊥ obvykle vyhraje, s 50 ne
    scenario, index = gatsby
    budget = dict(epsilon_token=1.0, delta_token=1e-5, epsilon_total=10.0, delta_total=1e-4)

    async def outcomes(algorithm, m):
        hits, lengths = 0, []
        for seed in range(20):
            cfg = _cfg(algorithm, m, seed=seed, **budget)
            answer, trace = await run(scenario.question, index, scenario.generator, cfg, run_rng(seed))
            hits += "novel" in answer
            lengths.append(len(trace.final_answer))
        return hits, float(np.mean(lengths))

    for algorithm in (Algorithm.DP_VOTE_RAG, Algorithm.DP_SPARSE_VOTE_RAG):
        few_hits, few_len = await outcomes(algorithm, 10)
        many_hits, many_len = await outcomes(algorithm, 50)
        assert many_hits >= few_hits, algorithm
        assert many_len >= few_len, algorithm
        assert many_hits >= 15, algorithm


# --- traces ---
@pytest.mark.asyncio
async def test_trace_replays_and_is_written(gatsby, tmp_path):
    scenario, index = gatsby
    cfg = _cfg(Algorithm.DP_SPARSE_VOTE_RAG, 10, seed=7, **GATSBY_BUDGET)
    _, first = await run(scenario.question, index, scenario.generator, cfg, run_rng(7))
    _, second = await run(scenario.question, index, scenario.generator, cfg, run_rng(7))
    assert first.model_dump() == second.model_dump()

    path = write_trace(first, cfg, tmp_path)
    assert path.name.startswith(cfg.config_hash()) and path.name.endswith("-7.json")
    stored = json.loads(path.read_text(encoding="utf-8"))
    assert stored["algorithm"] == "dp_sparse_vote_rag"
    assert stored["max_private_votes"] == 5
    assert len(stored["steps"]) == len(first.steps)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(algorithm=Algorithm.DP_VOTE_RAG, delta_token=0.0)
    assert RunConfig(algorithm=Algorithm.VOTE_RAG, delta_token=0.0).threshold == 10
    assert RunConfig(m=8, tau=3.0).threshold == 3.0
    assert RunConfig(seed=1).config_hash() == RunConfig(seed=2).config_hash()
