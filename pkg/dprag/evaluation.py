# dprag/evaluation.py
"""
Utility and empirical-privacy metrics: match accuracy, BLEU precision, the
S²MIA membership score and ROC/AUC.
"""

from __future__ import annotations

import asyncio
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Awaitable, Callable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.metrics import auc, roc_curve

from dprag.errors import DataError, InvalidArgumentError
from dprag.retrieval import Document

logger = logging.getLogger(__name__)

MIA_DELIMITER = "###"
BLEU_MAX_ORDER = 4

_PUNCTUATION = re.compile(r"[^\w\s]")
_WHITESPACE = re.compile(r"\s+")

# The system under attack: question in, answer text out.
RagSystem = Callable[[str], Awaitable[str]]


# Types ------------------------------------------------------------------------


@dataclass(frozen=True)
class QaExample:
    question: str
    answers: Tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.answers:
            raise InvalidArgumentError(f"question {self.question!r} has no answers")


class Membership(str, Enum):
    IN = "in"
    OUT = "out"


@dataclass(frozen=True)
class MiaExample:
    doc: Document
    query_part: str
    ground_truth_answer: str
    membership: Membership


@dataclass(frozen=True)
class RocCurve:
    points: Tuple[Tuple[float, float], ...]
    auc: float


# Text metrics -----------------------------------------------------------------


def normalize_text(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return _WHITESPACE.sub(" ", _PUNCTUATION.sub(" ", text.lower())).strip()


def match_accuracy(prediction: str, answers: Sequence[str]) -> int:
    if not answers:
        raise InvalidArgumentError("answers must be non-empty")
    normalized = normalize_text(prediction)
    if not normalized:
        return 0
    for answer in answers:
        target = normalize_text(answer)
        if target and target in normalized:
            return 1
    return 0


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_precision(candidate: str, reference: str) -> float:
    """
    Mean of the modified n-gram precisions for n = 1..min(4, len(candidate)).

    No unigram match scores 0; a higher order with no match counts as
    1 / (total + 1).
    """
    cand = normalize_text(candidate).split()
    ref = normalize_text(reference).split()
    if not cand:
        return 0.0

    precisions: List[float] = []
    for n in range(1, min(BLEU_MAX_ORDER, len(cand)) + 1):
        cand_counts = _ngrams(cand, n)
        ref_counts = _ngrams(ref, n)
        matches = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        total = sum(cand_counts.values())
        if matches == 0:
            if n == 1:
                return 0.0
            precisions.append(1.0 / (total + 1))
        else:
            precisions.append(matches / total)
    return float(np.mean(precisions))


# Membership inference ---------------------------------------------------------


def split_mia_document(doc: Document, membership: Membership, delimiter: str = MIA_DELIMITER) -> MiaExample:
    if delimiter not in doc.text:
        raise DataError(f"document {doc.doc_id!r} has no {delimiter!r} delimiter")
    query, answer = doc.text.split(delimiter, 1)
    return MiaExample(doc=doc, query_part=query.strip(), ground_truth_answer=answer.strip(), membership=membership)


async def s2mia_score(example: MiaExample, system: RagSystem) -> float:
    """BLEU precision of the system's answer to the query half against the true answer half."""
    try:
        answer = await system(example.query_part)
    except Exception as exc:
        exc.add_note(f"while scoring MIA example {example.doc.doc_id!r}")
        raise
    return bleu_precision(answer, example.ground_truth_answer)


def roc_auc(in_scores: Sequence[float], out_scores: Sequence[float]) -> RocCurve:
    """Members are positives; equal scores form one threshold."""
    if not in_scores or not out_scores:
        raise InvalidArgumentError("both score lists must be non-empty")
    labels = np.concatenate([np.ones(len(in_scores)), np.zeros(len(out_scores))])
    scores = np.concatenate([np.asarray(in_scores, dtype=float), np.asarray(out_scores, dtype=float)])
    fpr, tpr, _ = roc_curve(labels, scores, drop_intermediate=False)
    return RocCurve(
        points=tuple((float(f), float(t)) for f, t in zip(fpr, tpr)),
        auc=float(auc(fpr, tpr)),
    )


async def evaluate_mia(
    in_examples: Sequence[MiaExample],
    out_examples: Sequence[MiaExample],
    system: RagSystem,
    jobs: int = 4,
) -> RocCurve:
    semaphore = asyncio.Semaphore(jobs)

    async def _score(example: MiaExample) -> float:
        async with semaphore:
            return await s2mia_score(example, system)

    in_scores = await asyncio.gather(*(_score(e) for e in in_examples))
    out_scores = await asyncio.gather(*(_score(e) for e in out_examples))
    curve = roc_auc(list(in_scores), list(out_scores))
    logger.info("S2MIA over %d in / %d out examples: AUC %.4f", len(in_examples), len(out_examples), curve.auc)
    return curve


def write_roc(curve: RocCurve, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(curve.points, columns=["fpr", "tpr"]).to_csv(path, index=False)
    return path


# Data loading -----------------------------------------------------------------


def _read_jsonl(path: Union[str, Path]) -> List[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON ({exc})") from exc
    return rows


def load_questions(path: Union[str, Path]) -> List[QaExample]:
    """JSONL with fields question, answers (array)."""
    examples = []
    for row in _read_jsonl(path):
        try:
            examples.append(QaExample(question=str(row["question"]), answers=tuple(str(a) for a in row["answers"])))
        except (KeyError, TypeError, InvalidArgumentError) as exc:
            raise DataError(f"{path}: malformed question row {row!r} ({exc})") from exc
    return examples


def load_mia_examples(path: Union[str, Path], delimiter: str = MIA_DELIMITER) -> List[MiaExample]:
    """JSONL with fields doc_id, text, membership ("in" / "out")."""
    examples = []
    for row in _read_jsonl(path):
        try:
            doc = Document(doc_id=str(row["doc_id"]), text=str(row["text"]), owner_id=str(row.get("owner_id", row["doc_id"])))
            membership = Membership(str(row["membership"]).lower())
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: malformed MIA row ({exc})") from exc
        examples.append(split_mia_document(doc, membership, delimiter))
    return examples
