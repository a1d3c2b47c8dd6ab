# dprag/experiment.py
"""
QA sweep runner: every (algorithm, ε_total, ε_token, m) cell over every
question and repetition, aggregated into one CSV row per cell.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from dprag.config import CliConfig, build_generator, load_config, load_index
from dprag.engine import Algorithm, RunConfig, run, write_trace
from dprag.errors import DataError
from dprag.evaluation import QaExample, load_questions, match_accuracy
from dprag.generation import Generator
from dprag.retrieval import Retriever
from dprag.seeding import question_seed, run_rng

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "algorithm",
    "epsilon_total",
    "epsilon_token",
    "m",
    "k",
    "tau",
    "accuracy_mean",
    "accuracy_std",
    "mean_tokens",
    "mean_private_votes",
    "error_count",
]


@dataclass(frozen=True)
class SweepCell:
    algorithm: Algorithm
    m: Optional[int] = None
    epsilon_total: Optional[float] = None
    epsilon_token: Optional[float] = None


@dataclass(frozen=True)
class QuestionOutcome:
    index: int
    repetition: int
    accuracy: int
    tokens: int
    private_votes: int
    failed: bool


def sweep_cells(cfg: CliConfig) -> List[SweepCell]:
    """Private algorithms span the full grid; VoteRAG spans m only; NonRag is one cell."""
    cells: List[SweepCell] = []
    for algorithm in cfg.sweep.algorithms:
        if algorithm is Algorithm.NON_RAG:
            cells.append(SweepCell(algorithm))
        elif algorithm is Algorithm.VOTE_RAG:
            cells.extend(SweepCell(algorithm, m=m) for m in cfg.sweep.ms)
        else:
            cells.extend(
                SweepCell(algorithm, m=m, epsilon_total=eps_total, epsilon_token=eps_token)
                for eps_total in cfg.sweep.epsilon_totals
                for eps_token in cfg.sweep.epsilon_tokens
                for m in cfg.sweep.ms
            )
    return cells


def cell_run_config(cfg: CliConfig, cell: SweepCell, seed: int) -> RunConfig:
    overrides = {"algorithm": cell.algorithm, "seed": seed}
    if cell.m is not None:
        overrides["m"] = cell.m
    if cell.epsilon_total is not None:
        overrides["epsilon_total"] = cell.epsilon_total
    if cell.epsilon_token is not None:
        overrides["epsilon_token"] = cell.epsilon_token
    return cfg.run_config(**overrides)


async def _run_question(
    cell: SweepCell,
    cfg: CliConfig,
    index: Optional[Retriever],
    generator: Generator,
    example: QaExample,
    question_index: int,
    repetition: int,
    trace_dir: Path,
    semaphore: asyncio.Semaphore,
) -> QuestionOutcome:
    seed = question_seed(cfg.seed, question_index, repetition)
    async with semaphore:
        try:
            run_cfg = cell_run_config(cfg, cell, seed)
            answer, trace = await run(example.question, index, generator, run_cfg, run_rng(seed))
        except Exception as exc:
            logger.warning("%s question %d rep %d failed: %s", cell.algorithm.value, question_index, repetition, exc)
            return QuestionOutcome(question_index, repetition, 0, 0, 0, failed=True)
    write_trace(trace, run_cfg, trace_dir)
    return QuestionOutcome(
        index=question_index,
        repetition=repetition,
        accuracy=match_accuracy(answer, example.answers),
        tokens=len(trace.final_answer),
        private_votes=trace.private_votes,
        failed=False,
    )


def _aggregate(cell: SweepCell, cfg: CliConfig, outcomes: Sequence[QuestionOutcome]) -> dict:
    outcomes = sorted(outcomes, key=lambda o: (o.repetition, o.index))
    per_rep = [
        float(np.mean([o.accuracy for o in outcomes if o.repetition == rep]))
        for rep in range(cfg.sweep.repetitions)
    ]
    m = cell.m
    tau = None
    if cell.algorithm is Algorithm.DP_SPARSE_VOTE_RAG:
        tau = cfg.tau if cfg.tau is not None else m / 2
    return {
        "algorithm": cell.algorithm.value,
        "epsilon_total": cell.epsilon_total,
        "epsilon_token": cell.epsilon_token,
        "m": m,
        "k": cfg.k if cell.algorithm is not Algorithm.NON_RAG else None,
        "tau": tau,
        "accuracy_mean": float(np.mean(per_rep)),
        "accuracy_std": float(np.std(per_rep, ddof=0)),
        "mean_tokens": float(np.mean([o.tokens for o in outcomes])),
        "mean_private_votes": float(np.mean([o.private_votes for o in outcomes])),
        "error_count": sum(1 for o in outcomes if o.failed),
    }


async def run_sweep(
    cfg: CliConfig,
    questions: Sequence[QaExample],
    index: Optional[Retriever],
    generator: Generator,
) -> pd.DataFrame:
    semaphore = asyncio.Semaphore(cfg.jobs)
    trace_dir = Path(cfg.output_dir) / "traces"
    rows = []
    for cell in tqdm(sweep_cells(cfg), desc="cells", unit="cell"):
        outcomes = await asyncio.gather(
            *(
                _run_question(cell, cfg, index, generator, example, qi, rep, trace_dir, semaphore)
                for rep in range(cfg.sweep.repetitions)
                for qi, example in enumerate(questions)
            )
        )
        row = _aggregate(cell, cfg, outcomes)
        logger.info("%s m=%s eps=%s/%s: accuracy %.3f", row["algorithm"], row["m"], row["epsilon_token"], row["epsilon_total"], row["accuracy_mean"])
        rows.append(row)
    results = pd.DataFrame(rows, columns=RESULT_COLUMNS)
    # Nullable ints so that blank cells do not turn m into 20.0.
    for column in ("m", "k", "error_count"):
        results[column] = results[column].astype("Int64")
    return results


def write_results(results: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    results.to_csv(path, index=False, lineterminator="\n")
    return path


def best_per_budget(results: pd.DataFrame) -> pd.DataFrame:
    """For every (algorithm, ε_total), the cell with the highest mean accuracy over m and ε_token."""
    private = results.dropna(subset=["epsilon_total"])
    if private.empty:
        return private.reset_index(drop=True)
    ordered = private.sort_values(
        ["algorithm", "epsilon_total", "accuracy_mean", "epsilon_token", "m"],
        ascending=[True, True, False, True, True],
        kind="mergesort",
    )
    return ordered.groupby(["algorithm", "epsilon_total"], sort=True).head(1).reset_index(drop=True)


async def run_experiment_async(cfg: CliConfig) -> pd.DataFrame:
    if cfg.questions_path is None:
        raise DataError("questions_path is required for a QA sweep")
    questions = load_questions(cfg.questions_path)
    if not questions:
        raise DataError(f"{cfg.questions_path}: no questions")
    needs_corpus = any(a is not Algorithm.NON_RAG for a in cfg.sweep.algorithms)
    if needs_corpus and cfg.corpus_path is None:
        raise DataError("corpus_path is required for retrieval-augmented algorithms")

    index = load_index(cfg) if needs_corpus else None
    generator = build_generator(cfg.generator, index.documents if index is not None else None)
    try:
        return await run_sweep(cfg, questions, index, generator)
    finally:
        aclose = getattr(generator, "aclose", None)
        if aclose is not None:
            await aclose()


def run_experiment(config: Union[CliConfig, str, Path]) -> Path:
    """Run the configured sweep and write ``results.csv`` into the output directory."""
    cfg = config if isinstance(config, CliConfig) else load_config(config)
    results = asyncio.run(run_experiment_async(cfg))
    path = write_results(results, Path(cfg.output_dir) / "results.csv")
    failed = int(results["error_count"].sum())
    if failed:
        logger.warning("sweep finished with %d failed runs: %s", failed, path)
    else:
        logger.info("sweep finished: %s", path)
    return path
