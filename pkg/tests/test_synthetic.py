# tests/test_synthetic.py
import numpy as np
import pytest

from dprag import synthetic
from dprag.errors import InvalidArgumentError
from dprag.evaluation import MIA_DELIMITER


def test_pseudo_words_are_distinct_and_seeded():
    a = synthetic.pseudo_words(50, np.random.default_rng(1))
    b = synthetic.pseudo_words(50, np.random.default_rng(1))
    assert a == b
    assert len(set(a)) == 50
    assert all(w.endswith("x") for w in a)


def test_gatsby_scenario_shape():
    scenario = synthetic.gatsby_scenario(m=5)
    assert len(scenario.corpus) == 5
    assert len({d.doc_id for d in scenario.corpus}) == 5
    assert scenario.answers == ["novel"]
    assert "novel" in scenario.generator.vocabulary


def test_voting_scenarios_are_deterministic():
    first = synthetic.voting_scenarios(5, m=7, seed=9)
    second = synthetic.voting_scenarios(5, m=7, seed=9)
    assert [s.question for s in first] == [s.question for s in second]
    assert [s.generator.entries for s in first] == [s.generator.entries for s in second]
    assert all(len(s.corpus) == 7 for s in first)


def test_predictable_scenarios_answers_are_the_tail():
    scenario = synthetic.predictable_scenarios(1, m=4, length=6, knowledge_tokens=2)[0]
    assert len(scenario.answers[0].split()) == 2
    assert scenario.corpus[0].text.endswith(scenario.answers[0])


def test_relevant_documents_bounds():
    scenario = synthetic.relevant_documents_scenario(3, m=10)
    assert sum(d.doc_id.startswith("rel-") for d in scenario.corpus) == 3
    assert len(scenario.corpus) == 20
    # bez relevantních dokumentů: 2m distraktorů, každý s vlastními slovy
    distractors = synthetic.relevant_documents_scenario(0, m=10).corpus
    assert len(distractors) == 20
    assert len({d.text for d in distractors}) == 20
    with pytest.raises(InvalidArgumentError):
        synthetic.relevant_documents_scenario(11, m=10)


def test_chatdoctor_and_trivia_corpora():
    docs = synthetic.chatdoctor_corpus(10, seed=2)
    assert all(MIA_DELIMITER in d.text for d in docs)
    assert docs == synthetic.chatdoctor_corpus(10, seed=2)

    facts, questions = synthetic.trivia_corpus(n_questions=4, docs_per_question=3)
    assert len(facts) == 12 and len(questions) == 4
    assert questions[0]["answers"][0] in facts[0].text

    rows = synthetic.membership_rows(docs[:2], "out")
    assert [r["membership"] for r in rows] == ["out", "out"]
