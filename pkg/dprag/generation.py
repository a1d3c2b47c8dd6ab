# dprag/generation.py
"""
The generator abstraction y_t = LLM(x, docs, y_<t) and the in-process
generators: a scripted lookup table (tests, worked examples) and a word-level
n-gram model (desk-scale experiments). The HTTP generator lives in
``dprag.remote``.

All generators decode greedily and return exactly one token per call.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple, Union

from dprag.errors import ContextOverflowError, DataError, InvalidArgumentError
from dprag.retrieval import Document

logger = logging.getLogger(__name__)

EOS_SURFACE = "</s>"
DEFAULT_TEMPLATE = "{documents}\nQuestion: {question}\nAnswer: {prefix}"


# Types ------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    id: int
    surface: str


class Vocabulary:
    """Surface <-> id map. EOS is id 0; other ids follow first sight."""

    def __init__(self, surfaces: Iterable[str] = (), frozen: bool = False) -> None:
        self._tokens: List[Token] = [Token(0, EOS_SURFACE)]
        self._ids: Dict[str, int] = {EOS_SURFACE: 0}
        self.frozen = False
        for surface in surfaces:
            self.add(surface)
        self.frozen = frozen

    @property
    def eos(self) -> Token:
        return self._tokens[0]

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, surface: object) -> bool:
        return surface in self._ids

    def add(self, surface: str) -> Token:
        if surface in self._ids:
            return self._tokens[self._ids[surface]]
        if self.frozen:
            raise KeyError(surface)
        token = Token(len(self._tokens), surface)
        self._tokens.append(token)
        self._ids[surface] = token.id
        return token

    def lookup(self, surface: str) -> Token:
        return self._tokens[self._ids[surface]]

    def token(self, token_id: int) -> Token:
        return self._tokens[token_id]

    def surfaces_since(self, size: int) -> List[str]:
        return [t.surface for t in self._tokens[size:]]


@dataclass(frozen=True)
class GenerationContext:
    question: str
    documents: Tuple[Document, ...] = ()
    prefix: Tuple[Token, ...] = ()

    @property
    def prefix_surfaces(self) -> Tuple[str, ...]:
        return tuple(t.surface for t in self.prefix)


@dataclass(frozen=True)
class PromptRendering:
    template: str = DEFAULT_TEMPLATE

    def render_parts(self, question: str, documents: Sequence[Document], prefix: Sequence[str]) -> str:
        return self.template.format(
            documents="\n".join(d.text for d in documents),
            question=question,
            prefix=" ".join(prefix),
        )

    def render(self, ctx: GenerationContext) -> str:
        return self.render_parts(ctx.question, ctx.documents, ctx.prefix_surfaces)


class Generator(Protocol):
    vocabulary: Vocabulary

    async def next_token(self, ctx: GenerationContext) -> Token: ...


def tokenize(text: str) -> List[str]:
    """Word-level, lowercased, whitespace-delimited."""
    return text.lower().split()


def context_key(rendered: str) -> str:
    return hashlib.sha256(rendered.encode("utf-8")).hexdigest()


def fit_context(ctx: GenerationContext, rendering: PromptRendering, window: Optional[int]) -> GenerationContext:
    """Drop the oldest documents until the rendered prompt fits ``window`` words."""
    if window is None:
        return ctx
    fitted = ctx
    while len(rendering.render(fitted).split()) > window:
        if not fitted.documents:
            raise ContextOverflowError(
                f"question and prefix alone need more than {window} words of context"
            )
        fitted = replace(fitted, documents=fitted.documents[1:])
    if fitted is not ctx:
        logger.debug("dropped %d documents to fit a %d-word window", len(ctx.documents) - len(fitted.documents), window)
    return fitted


# Scripted generator -----------------------------------------------------------


class ScriptedGenerator:
    """Lookup table from the hash of the rendered prompt to one surface form."""

    def __init__(
        self,
        vocabulary: Optional[Vocabulary] = None,
        fallback: str = EOS_SURFACE,
        rendering: Optional[PromptRendering] = None,
        entries: Optional[Dict[str, str]] = None,
    ) -> None:
        self.vocabulary = vocabulary if vocabulary is not None else Vocabulary()
        self.rendering = rendering or PromptRendering()
        self.fallback = self.vocabulary.add(fallback)
        self.entries: Dict[str, str] = {}
        for key, surface in (entries or {}).items():
            self.vocabulary.add(surface)
            self.entries[key] = surface

    def program(
        self,
        question: str,
        documents: Sequence[Document],
        prefix: Sequence[str],
        surface: str,
    ) -> None:
        self.vocabulary.add(surface)
        self.entries[context_key(self.rendering.render_parts(question, documents, prefix))] = surface

    def program_answer(
        self,
        question: str,
        documents: Sequence[Document],
        tokens: Sequence[str],
        end: bool = True,
    ) -> None:
        """Program every step of ``tokens`` (followed by EOS when ``end``)."""
        sequence = list(tokens) + ([EOS_SURFACE] if end else [])
        for i, surface in enumerate(sequence):
            self.program(question, documents, sequence[:i], surface)

    async def next_token(self, ctx: GenerationContext) -> Token:
        surface = self.entries.get(context_key(self.rendering.render(ctx)))
        return self.fallback if surface is None else self.vocabulary.lookup(surface)

    def save(self, path: Union[str, Path]) -> None:
        payload = {"fallback": self.fallback.surface, "entries": dict(sorted(self.entries.items()))}
        Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path], vocabulary: Optional[Vocabulary] = None) -> "ScriptedGenerator":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(vocabulary=vocabulary, fallback=payload.get("fallback", EOS_SURFACE), entries=payload["entries"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}: malformed scripted table ({exc})") from exc


# N-gram generator -------------------------------------------------------------

NGramCounts = Dict[int, Dict[Tuple[str, ...], Counter]]


def _count_ngrams(sequences: Iterable[Sequence[str]], order: int) -> NGramCounts:
    counts: NGramCounts = defaultdict(lambda: defaultdict(Counter))
    for seq in sequences:
        for i, word in enumerate(seq):
            for h in range(0, min(order - 1, i) + 1):
                counts[h][tuple(seq[i - h : i])][word] += 1
    return counts


@dataclass
class NGramGenerator:
    """
    Add-α smoothed word n-gram model over (documents ⊕ question ⊕ prefix).

    The documents in the context contribute their own n-gram counts, weighted
    by ``context_weight``, on top of the training counts; this is what makes
    voters with different shards disagree. Prediction backs off from the
    longest history carrying any mass down to the unigram.
    """

    order: int
    alpha: float
    vocabulary: Vocabulary
    counts: NGramCounts
    context_weight: float = 5.0
    window: Optional[int] = None
    rendering: PromptRendering = field(default_factory=PromptRendering)

    def __post_init__(self) -> None:
        self._context_counts = lru_cache(maxsize=4096)(self._build_context_counts)

    def _build_context_counts(self, documents: Tuple[Document, ...]) -> NGramCounts:
        sequences = [tokenize(d.text) + [EOS_SURFACE] for d in documents]
        for seq in sequences:
            for word in seq:
                self.vocabulary.add(word)
        return _count_ngrams(sequences, self.order)

    def history(self, ctx: GenerationContext) -> Tuple[str, ...]:
        if self.order == 1:
            return ()
        words: List[str] = list(ctx.prefix_surfaces)
        need = self.order - 1
        if len(words) < need:
            words = tokenize(ctx.question) + words
        if len(words) < need:
            words = [w for d in ctx.documents for w in tokenize(d.text)] + words
        return tuple(words[-need:])

    def conditional(self, ctx: GenerationContext) -> Dict[str, float]:
        """Smoothed probabilities of the observed continuations at the backed-off history."""
        ctx = fit_context(ctx, self.rendering, self.window)
        context_counts = self._context_counts(ctx.documents)
        tail = self.history(ctx)
        for h in range(len(tail), -1, -1):
            hist = tail[len(tail) - h :]
            combined: Counter = Counter(self.counts.get(h, {}).get(hist, Counter()))
            for word, c in context_counts.get(h, {}).get(hist, Counter()).items():
                combined[word] += self.context_weight * c
            if combined:
                total = sum(combined.values())
                denominator = total + self.alpha * len(self.vocabulary)
                return {w: (c + self.alpha) / denominator for w, c in combined.items()}
        return {}

    async def next_token(self, ctx: GenerationContext) -> Token:
        probs = self.conditional(ctx)
        if not probs:
            return self.vocabulary.eos
        best = min(probs, key=lambda w: (-probs[w], self.vocabulary.lookup(w).id))
        return self.vocabulary.lookup(best)


def train_ngram(
    corpus_texts: Sequence[str],
    order: int = 3,
    alpha: float = 0.1,
    vocabulary: Optional[Vocabulary] = None,
    context_weight: float = 5.0,
    window: Optional[int] = None,
) -> NGramGenerator:
    if order < 1:
        raise InvalidArgumentError(f"order must be >= 1, got {order}")
    if not alpha > 0:
        raise InvalidArgumentError(f"alpha must be positive, got {alpha}")
    sequences = [tokenize(t) + [EOS_SURFACE] for t in corpus_texts if tokenize(t)]
    if not sequences:
        raise InvalidArgumentError("cannot train an n-gram model on an empty corpus")

    vocab = vocabulary if vocabulary is not None else Vocabulary()
    for seq in sequences:
        for word in seq:
            vocab.add(word)
    counts = _count_ngrams(sequences, order)
    logger.info("trained %d-gram model on %d texts, %d words", order, len(sequences), len(vocab))
    return NGramGenerator(
        order=order,
        alpha=alpha,
        vocabulary=vocab,
        counts=counts,
        context_weight=context_weight,
        window=window,
    )
