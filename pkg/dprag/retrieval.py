# dprag/retrieval.py
"""
Corpus handling, TF-IDF retrieval of the m·k most relevant documents, and the
uniformly random partition of the retrieved list into m voter shards.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Protocol, Sequence, Tuple, Union

import numpy as np
from sklearn.feature_extraction.text import CountVectorizer

from dprag.errors import DataError, InsufficientCorpusError, InvalidArgumentError

logger = logging.getLogger(__name__)

TOKEN_PATTERN = r"(?u)\b\w+\b"


# Types ------------------------------------------------------------------------


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    owner_id: str = ""


@dataclass(frozen=True)
class RetrievalResult:
    ranked: Tuple[str, ...]
    scores: Tuple[float, ...]


@dataclass(frozen=True)
class VoterPartition:
    subsets: Tuple[Tuple[str, ...], ...]

    @property
    def m(self) -> int:
        return len(self.subsets)


class Retriever(Protocol):
    def document(self, doc_id: str) -> Document: ...

    def search(self, question: str, count: int) -> RetrievalResult: ...


# Corpus I/O -------------------------------------------------------------------


def load_corpus(path: Union[str, Path]) -> List[Document]:
    """Read JSONL with fields doc_id, text, owner_id."""
    docs: List[Document] = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                doc = Document(doc_id=str(row["doc_id"]), text=str(row["text"]), owner_id=str(row.get("owner_id", row["doc_id"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{line_no}: malformed corpus line ({exc})") from exc
            if doc.doc_id in seen:
                raise DataError(f"{path}:{line_no}: duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
            docs.append(doc)
    return docs


def write_corpus(path: Union[str, Path], docs: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(json.dumps({"doc_id": doc.doc_id, "text": doc.text, "owner_id": doc.owner_id}, ensure_ascii=False) + "\n")


# TF-IDF index -----------------------------------------------------------------


class TfidfIndex:
    """
    Raw term frequency times idf = ln(N / (1 + df)) + 1, L2-normalised rows,
    cosine similarity against the question vector.
    """

    def __init__(self, documents: Sequence[Document]) -> None:
        if not documents:
            raise InvalidArgumentError("cannot index an empty corpus")
        ids = [d.doc_id for d in documents]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("doc_id values must be unique within a corpus")

        self.documents = list(documents)
        self._by_id = {d.doc_id: d for d in self.documents}
        self._vectorizer = CountVectorizer(lowercase=True, token_pattern=TOKEN_PATTERN)
        try:
            tf = self._vectorizer.fit_transform(d.text for d in self.documents)
        except ValueError as exc:
            # CountVectorizer refuses corpora without a single word.
            raise InvalidArgumentError(f"corpus has no indexable words: {exc}") from exc

        n_docs = tf.shape[0]
        df = np.asarray((tf > 0).sum(axis=0)).ravel()
        self.idf = np.log(n_docs / (1.0 + df)) + 1.0
        self.vectors = self._normalise(tf.multiply(self.idf).tocsr())
        logger.debug("indexed %d documents over %d terms", n_docs, len(self.idf))

    @staticmethod
    def _normalise(matrix):
        norms = np.sqrt(np.asarray(matrix.multiply(matrix).sum(axis=1)).ravel())
        norms[norms == 0] = 1.0
        return matrix.multiply(1.0 / norms[:, None]).tocsr()

    def __len__(self) -> int:
        return len(self.documents)

    def document(self, doc_id: str) -> Document:
        return self._by_id[doc_id]

    def vectorize(self, text: str):
        tf = self._vectorizer.transform([text])
        return self._normalise(tf.multiply(self.idf).tocsr())

    def search(self, question: str, count: int) -> RetrievalResult:
        if count < 1:
            raise InvalidArgumentError(f"count must be positive, got {count}")
        if count > len(self.documents):
            raise InsufficientCorpusError(
                f"need {count} documents but the corpus holds only {len(self.documents)}"
            )
        scores = np.asarray((self.vectors @ self.vectorize(question).T).todense()).ravel()
        order = sorted(
            range(len(self.documents)),
            key=lambda i: (-round(float(scores[i]), 12), self.documents[i].doc_id),
        )[:count]
        return RetrievalResult(
            ranked=tuple(self.documents[i].doc_id for i in order),
            scores=tuple(round(float(scores[i]), 12) for i in order),
        )


def index_corpus(corpus: Sequence[Document]) -> TfidfIndex:
    return TfidfIndex(corpus)


def retrieve(index: Retriever, question: str, count: int) -> RetrievalResult:
    return index.search(question, count)


# Partition --------------------------------------------------------------------


def partition(result: RetrievalResult, m: int, k: int, rng: np.random.Generator) -> VoterPartition:
    """Uniform random permutation of the ranked list, then consecutive k-blocks."""
    if m < 1 or k < 1:
        raise InvalidArgumentError(f"m and k must be positive, got m={m}, k={k}")
    if len(result.ranked) != m * k:
        raise InvalidArgumentError(f"expected {m * k} retrieved documents, got {len(result.ranked)}")
    permuted = [result.ranked[i] for i in rng.permutation(m * k)]
    return VoterPartition(subsets=tuple(tuple(permuted[i * k : (i + 1) * k]) for i in range(m)))


def subset_documents(index: Retriever, subset: Sequence[str]) -> Tuple[Document, ...]:
    return tuple(index.document(doc_id) for doc_id in subset)
