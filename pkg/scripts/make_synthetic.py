# scripts/make_synthetic.py
"""
Write the desk-scale data bundle: a trivia QA set, a ChatDoctor-style MIA
split, the Gatsby scripted table and a config.toml that ties them together.

    python -m scripts.make_synthetic --out data/
"""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence

from dprag import synthetic
from dprag.retrieval import write_corpus

logger = logging.getLogger("scripts.make_synthetic")


def _write_jsonl(path: Path, rows: Iterable[dict]) -> Path:
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
    return path


def write_bundle(out_dir: Path, seed: int = 0, n_questions: int = 20, n_chat_docs: int = 300) -> Dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: Dict[str, Path] = {}

    docs, questions = synthetic.trivia_corpus(n_questions=n_questions, docs_per_question=4, seed=seed)
    paths["corpus"] = out_dir / "trivia_corpus.jsonl"
    write_corpus(paths["corpus"], docs)
    paths["questions"] = _write_jsonl(out_dir / "trivia_questions.jsonl", questions)

    paths["public"] = out_dir / "public.txt"
    paths["public"].write_text("\n".join(synthetic.public_texts()) + "\n", encoding="utf-8")

    # Members are indexed, non-members are the held-out third.
    chat = synthetic.chatdoctor_corpus(n_chat_docs, seed=seed)
    indexed, held_out = chat[: 2 * n_chat_docs // 3], chat[2 * n_chat_docs // 3 :]
    paths["chat_corpus"] = out_dir / "chat_corpus.jsonl"
    write_corpus(paths["chat_corpus"], indexed)
    paths["mia_in"] = _write_jsonl(out_dir / "mia_in.jsonl", synthetic.membership_rows(indexed[: len(held_out)], "in"))
    paths["mia_out"] = _write_jsonl(out_dir / "mia_out.jsonl", synthetic.membership_rows(held_out, "out"))

    gatsby = synthetic.gatsby_scenario(m=100)
    paths["gatsby_corpus"] = out_dir / "gatsby_corpus.jsonl"
    write_corpus(paths["gatsby_corpus"], gatsby.corpus)
    paths["gatsby_table"] = out_dir / "gatsby_table.json"
    gatsby.generator.save(paths["gatsby_table"])

    paths["config"] = out_dir / "config.toml"
    paths["config"].write_text(
        "\n".join(
            [
                f'corpus_path = "{paths["corpus"].as_posix()}"',
                f'questions_path = "{paths["questions"].as_posix()}"',
                'algorithm = "dp_sparse_vote_rag"',
                "m = 4",
                f"seed = {seed}",
                f'output_dir = "{(out_dir / "runs").as_posix()}"',
                "",
                "[generator]",
                'kind = "ngram"',
                f'train_path = "{paths["public"].as_posix()}"',
                "",
                "[sweep]",
                'algorithms = ["non_rag", "vote_rag", "dp_vote_rag", "dp_sparse_vote_rag"]',
                "epsilon_totals = [5.0, 10.0, 20.0]",
                "epsilon_tokens = [1.0, 2.0]",
                "ms = [4]",
                "repetitions = 3",
                "",
            ]
        ),
        encoding="utf-8",
    )
    logger.info("wrote %d files to %s", len(paths), out_dir)
    return paths


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Generate the synthetic data bundle")
    parser.add_argument("--out", type=Path, default=Path("data"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--questions", type=int, default=20)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    for name, path in write_bundle(args.out, seed=args.seed, n_questions=args.questions).items():
        print(f"{name},{path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
