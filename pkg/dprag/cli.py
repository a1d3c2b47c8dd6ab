# dprag/cli.py
"""
Command line: ``python -m dprag {accountant,generate,eval-qa,eval-mia}``.

stdout carries results only; logs and progress go to stderr.
Exit codes: 0 ok, 2 usage, 3 infeasible budget, 4 data, 5 backend.
"""

from __future__ import annotations

import argparse
import asyncio
import hashlib
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from dprag import settings
from dprag.accountant import max_compositions
from dprag.config import CliConfig, build_generator, load_config, load_index
from dprag.engine import Algorithm, GenerationTrace, run, write_trace
from dprag.errors import DataError, DpRagError
from dprag.evaluation import evaluate_mia, load_mia_examples, write_roc
from dprag.experiment import best_per_budget, run_experiment_async, write_results
from dprag.generation import Generator
from dprag.mechanisms import PrivacyBudget
from dprag.seeding import derive_seed, run_rng

logger = logging.getLogger("dprag.cli")


# Flag parsing -----------------------------------------------------------------


def _algorithm(value: str) -> Algorithm:
    try:
        return Algorithm(value.replace("-", "_"))
    except ValueError:
        choices = ", ".join(a.value.replace("_", "-") for a in Algorithm)
        raise argparse.ArgumentTypeError(f"unknown algorithm {value!r} (choose from {choices})")


def _comma_list(cast: Callable[[str], Any]) -> Callable[[str], List[Any]]:
    def parse(value: str) -> List[Any]:
        try:
            return [cast(v.strip()) for v in value.split(",") if v.strip()]
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise argparse.ArgumentTypeError(f"bad list {value!r}: {exc}")

    return parse


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default=settings.LOG_LEVEL, help="stderr log level")
    common.add_argument("--jobs", type=int, default=None, help="bound on concurrent runs")
    common.add_argument("--seed", type=int, default=None, help="base 64-bit seed")
    return common


def _run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="TOML config file")
    parser.add_argument("--corpus", dest="corpus_path", default=None)
    parser.add_argument("--algorithm", type=_algorithm, default=None)
    parser.add_argument("--m", type=int, default=None)
    parser.add_argument("--k", type=int, default=None)
    parser.add_argument("--tau", type=float, default=None)
    parser.add_argument("--epsilon-token", type=float, default=None)
    parser.add_argument("--delta-token", type=float, default=None)
    parser.add_argument("--epsilon-total", type=float, default=None)
    parser.add_argument("--delta-total", type=float, default=None)
    parser.add_argument("--t-max-cap", type=int, default=None)
    parser.add_argument("--output-dir", default=None)
    parser.add_argument("--scripted-table", default=None, help="use a scripted generator table")
    parser.add_argument("--ngram-train", default=None, help="train an n-gram generator on this text file")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="dprag", description="Differentially private retrieval-augmented generation")
    sub = parser.add_subparsers(dest="command", required=True)

    acc = sub.add_parser("accountant", parents=[common], help="maximum number of private votes for a budget")
    acc.add_argument("--epsilon-token", type=float, required=True)
    acc.add_argument("--delta-token", type=float, default=settings.DEFAULT_DELTA_TOKEN)
    acc.add_argument("--epsilon-total", type=float, required=True)
    acc.add_argument("--delta-total", type=float, default=settings.DEFAULT_DELTA_TOTAL)
    acc.set_defaults(handler=cmd_accountant)

    gen = sub.add_parser("generate", parents=[common], help="answer one question")
    _run_flags(gen)
    gen.add_argument("--question", required=True)
    gen.set_defaults(handler=cmd_generate)

    qa = sub.add_parser("eval-qa", parents=[common], help="match-accuracy sweep over a question set")
    _run_flags(qa)
    qa.add_argument("--questions", dest="questions_path", default=None)
    qa.add_argument("--algorithms", type=_comma_list(_algorithm), default=None)
    qa.add_argument("--epsilon-totals", type=_comma_list(float), default=None)
    qa.add_argument("--epsilon-tokens", type=_comma_list(float), default=None)
    qa.add_argument("--ms", type=_comma_list(int), default=None)
    qa.add_argument("--repetitions", type=int, default=None)
    qa.add_argument("--best", action="store_true", help="also write the best cell per ε_total")
    qa.set_defaults(handler=cmd_eval_qa)

    mia = sub.add_parser("eval-mia", parents=[common], help="S2MIA ROC/AUC against the configured system")
    _run_flags(mia)
    mia.add_argument("--in", dest="in_path", required=True, help="JSONL of member documents")
    mia.add_argument("--out", dest="out_path", required=True, help="JSONL of non-member documents")
    mia.set_defaults(handler=cmd_eval_mia)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    names = [
        "corpus_path", "questions_path", "algorithm", "m", "k", "tau",
        "epsilon_token", "delta_token", "epsilon_total", "delta_total",
        "t_max_cap", "output_dir", "seed", "jobs",
    ]
    out = {name: getattr(args, name, None) for name in names}
    for name in ("algorithms", "epsilon_totals", "epsilon_tokens", "ms", "repetitions"):
        out[f"sweep.{name}"] = getattr(args, name, None)
    if out["algorithm"] is not None:
        out["algorithm"] = out["algorithm"].value
    if out["sweep.algorithms"] is not None:
        out["sweep.algorithms"] = [a.value for a in out["sweep.algorithms"]]
    if out["output_dir"] is not None:
        out["output_dir"] = str(out["output_dir"])
    if args.scripted_table is not None:
        out["generator"] = {"kind": "scripted", "table_path": args.scripted_table}
    elif args.ngram_train is not None:
        out["generator"] = {"kind": "ngram", "train_path": args.ngram_train}
    return out


def _load(args: argparse.Namespace) -> CliConfig:
    return load_config(args.config, _overrides(args))


# Commands ---------------------------------------------------------------------


def cmd_accountant(args: argparse.Namespace) -> int:
    plan = max_compositions(
        PrivacyBudget(args.epsilon_token, args.delta_token),
        PrivacyBudget(args.epsilon_total, args.delta_total),
    )
    print(plan.csv_row())
    return 0


async def _close(generator: Generator) -> None:
    aclose = getattr(generator, "aclose", None)
    if aclose is not None:
        await aclose()


async def _generate_once(cfg: CliConfig, question: str) -> tuple[str, GenerationTrace]:
    run_cfg = cfg.run_config()
    if run_cfg.algorithm is Algorithm.NON_RAG:
        if cfg.corpus_path is not None:
            logger.warning("non-rag ignores the corpus (%s)", cfg.corpus_path)
        index = None
    else:
        index = load_index(cfg)
        if index is None:
            raise DataError(f"{run_cfg.algorithm.value} needs --corpus or corpus_path")
    generator = build_generator(cfg.generator, index.documents if index is not None else None)
    try:
        answer, trace = await run(question, index, generator, run_cfg, run_rng(run_cfg.seed))
    finally:
        await _close(generator)
    path = write_trace(trace, run_cfg, cfg.output_dir)
    logger.info("trace written to %s", path)
    return answer, trace


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    answer, _ = asyncio.run(_generate_once(cfg, args.question))
    print(answer)
    return 0


def cmd_eval_qa(args: argparse.Namespace) -> int:
    cfg = _load(args)
    results = asyncio.run(run_experiment_async(cfg))
    out_dir = Path(cfg.output_dir)
    path = write_results(results, out_dir / "results.csv")
    print(path)
    if args.best:
        print(write_results(best_per_budget(results), out_dir / "best.csv"))
    return 0


def _question_key(query: str) -> int:
    return int(hashlib.sha256(query.encode("utf-8")).hexdigest()[:16], 16)


async def _evaluate_mia(cfg: CliConfig, in_path: str, out_path: str) -> float:
    in_examples = load_mia_examples(in_path)
    out_examples = load_mia_examples(out_path)
    if not in_examples or not out_examples:
        raise DataError("both --in and --out must hold at least one example")
    index = load_index(cfg) if cfg.algorithm is not Algorithm.NON_RAG else None
    if cfg.algorithm is not Algorithm.NON_RAG and index is None:
        raise DataError(f"{cfg.algorithm.value} needs --corpus or corpus_path")
    generator = build_generator(cfg.generator, index.documents if index is not None else None)

    async def system(query: str) -> str:
        seed = derive_seed(cfg.seed, _question_key(query))
        run_cfg = cfg.run_config(seed=seed)
        answer, _ = await run(query, index, generator, run_cfg, run_rng(seed))
        return answer

    try:
        curve = await evaluate_mia(in_examples, out_examples, system, jobs=cfg.jobs)
    finally:
        await _close(generator)
    write_roc(curve, Path(cfg.output_dir) / "roc.csv")
    return curve.auc


def cmd_eval_mia(args: argparse.Namespace) -> int:
    cfg = _load(args)
    auc_value = asyncio.run(_evaluate_mia(cfg, args.in_path, args.out_path))
    print(f"auc,{auc_value:.6f}")
    return 0


# Entry point ------------------------------------------------------------------


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is when a record is emitted."""

    def __init__(self) -> None:
        super().__init__(sys.stderr)

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value) -> None:
        pass


def configure_logging(level: str) -> None:
    """Attach one stderr handler to the ``dprag`` logger; root handlers stay untouched."""
    package_logger = logging.getLogger("dprag")
    package_logger.setLevel(level.upper())
    for handler in [h for h in package_logger.handlers if isinstance(h, _StderrHandler)]:
        package_logger.removeHandler(handler)
    handler = _StderrHandler()
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    package_logger.addHandler(handler)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging(args.log_level)
    except ValueError:
        parser.error(f"unknown log level {args.log_level!r}")
    try:
        return args.handler(args)
    except DpRagError as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
