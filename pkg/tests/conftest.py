# tests/conftest.py
import os, sys
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
import json

import pytest
import respx

from dprag import synthetic
from dprag.retrieval import TfidfIndex, write_corpus

COMPLETION_BASE = "https://llm.test/v1"


# --- Základní env pro testy ---
@pytest.fixture(autouse=True)
def test_env(monkeypatch):
    monkeypatch.setenv("DPRAG_API_KEY", "sk-test")
    monkeypatch.setenv("DPRAG_LOG_LEVEL", "WARNING")
    yield


# --- respx router pro mocking completion endpointu ---
@pytest.fixture
def completion_mock():
    with respx.mock(base_url=COMPLETION_BASE, assert_all_called=False) as router:
        yield router


# --- Scénáře ---
@pytest.fixture
def gatsby():
    scenario = synthetic.gatsby_scenario(m=100)
    return scenario, TfidfIndex(scenario.corpus)


@pytest.fixture
def trivia_files(tmp_path):
    """Corpus, question set and n-gram training text for CLI runs."""
    docs, questions = synthetic.trivia_corpus(n_questions=3, docs_per_question=4, seed=7)
    corpus_path = tmp_path / "corpus.jsonl"
    write_corpus(corpus_path, docs)
    questions_path = tmp_path / "questions.jsonl"
    questions_path.write_text("".join(json.dumps(q) + "\n" for q in questions), encoding="utf-8")
    train_path = tmp_path / "public.txt"
    train_path.write_text("\n".join(synthetic.public_texts()) + "\n", encoding="utf-8")
    return {"corpus": corpus_path, "questions": questions_path, "train": train_path, "questions_rows": questions}


@pytest.fixture
def gatsby_files(tmp_path):
    """Gatsby corpus and scripted table on disk."""
    scenario = synthetic.gatsby_scenario(m=20)
    corpus_path = tmp_path / "gatsby.jsonl"
    write_corpus(corpus_path, scenario.corpus)
    table_path = tmp_path / "gatsby-table.json"
    scenario.generator.save(table_path)
    return {"corpus": corpus_path, "table": table_path, "question": scenario.question}
