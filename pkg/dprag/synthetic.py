# dprag/synthetic.py
"""
Desk-scale stand-ins for the corpora: scripted scenarios that encode a known
answer for every voter, and template corpora for the n-gram generator.

Every builder is deterministic in its seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from dprag.errors import InvalidArgumentError
from dprag.generation import ScriptedGenerator, Vocabulary
from dprag.retrieval import Document

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"]
_VOWELS = ["a", "e", "i", "o", "u"]

GATSBY_QUESTION = "What is The Great Gatsby?"
GATSBY_ANSWER = ["the", "great", "gatsby", "is", "a", "novel"]


@dataclass
class Scenario:
    question: str
    corpus: List[Document]
    generator: ScriptedGenerator
    answers: List[str]


# Word pools -------------------------------------------------------------------


def pseudo_words(count: int, rng: np.random.Generator, syllables: int = 3) -> List[str]:
    """Distinct made-up words; none of them is an English word the templates use."""
    words: List[str] = []
    seen = set()
    while len(words) < count:
        word = "".join(str(rng.choice(_ONSETS)) + str(rng.choice(_VOWELS)) for _ in range(syllables)) + "x"
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


# Scripted scenarios -----------------------------------------------------------


def gatsby_scenario(m: int = 100) -> Scenario:
    """
    The worked example: every voter's document says the book is a novel, while
    the model without documents only gets as far as "the great gatsby is a".
    """
    generator = ScriptedGenerator(vocabulary=Vocabulary())
    corpus = [
        Document(
            doc_id=f"gatsby-{i:03d}",
            text=f"The Great Gatsby is a novel by F. Scott Fitzgerald, review {i}.",
            owner_id=f"reader-{i:03d}",
        )
        for i in range(m)
    ]
    for doc in corpus:
        generator.program_answer(GATSBY_QUESTION, (doc,), GATSBY_ANSWER)
    generator.program_answer(GATSBY_QUESTION, (), GATSBY_ANSWER[:-1], end=False)
    return Scenario(GATSBY_QUESTION, corpus, generator, answers=["novel"])


def plurality_scenario(
    index: int,
    m: int,
    rng: np.random.Generator,
    max_dissent: int,
    length: int,
) -> Scenario:
    """
    Voters follow one reference answer except for at most ``max_dissent``
    of them per step, who say something else; the plurality is never tied.
    """
    words = pseudo_words(length + 3 * max_dissent + 1, rng, syllables=2)
    answer, others = words[:length], words[length:]
    question = f"question {index} about {answer[0]}"
    corpus = [Document(doc_id=f"q{index:03d}-d{j:02d}", text=f"{question} source {j} {' '.join(answer)}") for j in range(m)]

    generator = ScriptedGenerator(vocabulary=Vocabulary())
    sequence = answer + [generator.vocabulary.eos.surface]
    for step, reference in enumerate(sequence):
        dissenters = set(rng.choice(m, size=int(rng.integers(0, max_dissent + 1)), replace=False).tolist())
        for j, doc in enumerate(corpus):
            surface = str(rng.choice(others)) if j in dissenters else reference
            generator.program(question, (doc,), sequence[:step], surface)
    return Scenario(question, corpus, generator, answers=[" ".join(answer)])


def voting_scenarios(count: int = 50, m: int = 7, seed: int = 0) -> List[Scenario]:
    """Scenarios whose per-step plurality has at least m - 3 votes."""
    rng = np.random.default_rng(seed)
    return [
        plurality_scenario(i, m, rng, max_dissent=min(3, (m - 1) // 2), length=int(rng.integers(1, 7)))
        for i in range(count)
    ]


def predictable_scenarios(
    count: int = 20,
    m: int = 20,
    length: int = 20,
    knowledge_tokens: int = 4,
    seed: int = 0,
) -> List[Scenario]:
    """
    Answers whose first ``length - knowledge_tokens`` words the model knows
    without documents; only the trailing knowledge words need the voters.
    """
    rng = np.random.default_rng(seed)
    scenarios = []
    for i in range(count):
        answer = pseudo_words(length, rng)
        question = f"tell me about topic {i}"
        corpus = [Document(doc_id=f"t{i:03d}-d{j:02d}", text=f"topic {i} note {j}: {' '.join(answer)}") for j in range(m)]
        generator = ScriptedGenerator(vocabulary=Vocabulary())
        for doc in corpus:
            generator.program_answer(question, (doc,), answer)
        generator.program_answer(question, (), answer[: length - knowledge_tokens], end=False)
        scenarios.append(Scenario(question, corpus, generator, answers=[" ".join(answer[-knowledge_tokens:])]))
    return scenarios


def relevant_documents_scenario(relevant: int, m: int = 20, seed: int = 0) -> Scenario:
    """
    One question, ``relevant`` documents that hold its answer and enough
    distractors that the top m retrieved documents always include them all.
    """
    if not 0 <= relevant <= m:
        raise InvalidArgumentError(f"relevant must be in [0, {m}], got {relevant}")
    rng = np.random.default_rng(seed)
    country, capital, *topics = pseudo_words(2 + 2 * (2 * m - relevant), rng)
    question = f"what is the capital of {country}"

    corpus = [
        Document(doc_id=f"rel-{i:02d}", text=f"the capital of {country} is {capital}")
        for i in range(relevant)
    ]
    corpus += [
        Document(doc_id=f"dis-{i:02d}", text=f"the river {topics[2 * i]} flows near {topics[2 * i + 1]}")
        for i in range(2 * m - relevant)
    ]

    generator = ScriptedGenerator(vocabulary=Vocabulary())
    generator.program_answer(question, (), ["unknown"])
    for doc in corpus:
        said = capital if doc.doc_id.startswith("rel-") else doc.text.split()[2]
        generator.program_answer(question, (doc,), [said])
    return Scenario(question, corpus, generator, answers=[capital])


# Template corpora -------------------------------------------------------------


def chatdoctor_corpus(n_docs: int = 200, seed: int = 0) -> List[Document]:
    """
    "query ### answer" patient dialogues; each answer is eight words drawn from
    a pool that no public text contains.
    """
    rng = np.random.default_rng(seed)
    symptoms = pseudo_words(300, rng)
    remedies = pseudo_words(300, rng)
    docs = []
    for i in range(n_docs):
        s = rng.choice(symptoms, size=6, replace=False)
        r = rng.choice(remedies, size=8, replace=False)
        text = f"patient reports {s[0]} {s[1]} {s[2]} with {s[3]} {s[4]} {s[5]} ### {' '.join(r)}"
        docs.append(Document(doc_id=f"chat-{i:04d}", text=text, owner_id=f"patient-{i:04d}"))
    return docs


def public_texts() -> List[str]:
    return [
        "patient reports pain with fever ### rest and drink plenty of fluids",
        "patient reports cough with fatigue ### see a doctor if it gets worse",
        "patient reports headache with nausea ### rest in a dark quiet room",
        "doctor says rest and drink plenty of water every day",
        "most symptoms go away with rest and fluids",
    ]


def trivia_corpus(n_questions: int = 10, docs_per_question: int = 4, seed: int = 0) -> Tuple[List[Document], List[dict]]:
    """Capital-city facts, ``docs_per_question`` copies each, plus the QA rows."""
    rng = np.random.default_rng(seed)
    names = pseudo_words(2 * n_questions, rng)
    docs: List[Document] = []
    questions = []
    for i in range(n_questions):
        country, capital = names[2 * i], names[2 * i + 1]
        for j in range(docs_per_question):
            docs.append(Document(doc_id=f"fact-{i:03d}-{j}", text=f"the capital of {country} is {capital}", owner_id=f"editor-{j}"))
        questions.append({"question": f"what is the capital of {country}", "answers": [capital]})
    return docs, questions


def membership_rows(docs: Sequence[Document], membership: str) -> List[dict]:
    return [{"doc_id": d.doc_id, "text": d.text, "membership": membership} for d in docs]
