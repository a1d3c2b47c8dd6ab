# tests/test_config.py
import json

import pytest

from dprag.config import (
    NGramSettings,
    ScriptedSettings,
    build_generator,
    load_config,
    load_index,
    load_texts,
)
from dprag.engine import Algorithm
from dprag.errors import DataError, InvalidArgumentError
from dprag.generation import NGramGenerator, ScriptedGenerator
from dprag.retrieval import Document


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_toml_with_dotted_overrides(gatsby_files, tmp_path):
    config = _write(
        tmp_path / "c.toml",
        f'algorithm = "dp_vote_rag"\nm = 7\n[generator]\nkind = "scripted"\ntable_path = "{gatsby_files["table"].as_posix()}"\n'
        "[sweep]\nms = [5]\n",
    )
    cfg = load_config(config, {"m": 9, "k": None, "sweep.ms": [3, 4], "sweep.repetitions": 2})
    assert cfg.algorithm is Algorithm.DP_VOTE_RAG
    assert (cfg.m, cfg.k) == (9, 1)
    assert cfg.sweep.ms == [3, 4] and cfg.sweep.repetitions == 2
    assert isinstance(cfg.generator, ScriptedSettings)

    run_cfg = cfg.run_config(seed=3)
    assert (run_cfg.m, run_cfg.seed) == (9, 3)


def test_config_errors(tmp_path):
    with pytest.raises(DataError):
        load_config(tmp_path / "missing.toml")
    with pytest.raises(InvalidArgumentError, match="invalid TOML"):
        load_config(_write(tmp_path / "bad.toml", "m = ["))
    with pytest.raises(InvalidArgumentError, match="no generator"):
        load_config(_write(tmp_path / "empty.toml", "m = 3\n"))
    with pytest.raises(DataError, match="train_path"):
        load_config(None, {"generator": {"kind": "ngram", "train_path": str(tmp_path / "nope.txt")}})


def test_missing_input_files_are_data_errors(gatsby_files, tmp_path):
    generator = {"kind": "scripted", "table_path": str(gatsby_files["table"])}
    for key in ("corpus_path", "questions_path"):
        with pytest.raises(DataError, match=key) as err:
            load_config(None, {"generator": generator, key: str(tmp_path / "missing.jsonl")})
        assert err.value.exit_code == 4


def test_unknown_keys_are_rejected(gatsby_files):
    with pytest.raises(InvalidArgumentError):
        load_config(None, {"colour": "blue", "generator": {"kind": "scripted", "table_path": str(gatsby_files["table"])}})


def test_run_config_validation_surfaces_as_invalid_argument(gatsby_files):
    cfg = load_config(None, {"generator": {"kind": "scripted", "table_path": str(gatsby_files["table"])}})
    with pytest.raises(InvalidArgumentError):
        cfg.run_config(algorithm=Algorithm.DP_SPARSE_VOTE_RAG, delta_token=0.0)


def test_load_texts_plain_and_jsonl(tmp_path):
    assert load_texts(_write(tmp_path / "t.txt", "one line\n\ntwo line\n")) == ["one line", "two line"]
    rows = _write(tmp_path / "t.jsonl", json.dumps({"text": "hello"}) + "\n")
    assert load_texts(rows) == ["hello"]
    with pytest.raises(DataError):
        load_texts(_write(tmp_path / "bad.jsonl", json.dumps({"body": "x"}) + "\n"))


def test_build_generators(gatsby_files, trivia_files):
    scripted = build_generator(ScriptedSettings(table_path=gatsby_files["table"]))
    assert isinstance(scripted, ScriptedGenerator)
    assert "novel" in scripted.vocabulary

    corpus = [Document("d1", "zebra quokka")]
    ngram = build_generator(NGramSettings(train_path=trivia_files["train"], order=2), corpus)
    assert isinstance(ngram, NGramGenerator)
    assert ngram.order == 2
    assert "quokka" in ngram.vocabulary


def test_load_index(trivia_files, tmp_path, gatsby_files):
    generator = {"kind": "scripted", "table_path": str(gatsby_files["table"])}
    assert load_index(load_config(None, {"generator": generator})) is None

    index = load_index(load_config(None, {"generator": generator, "corpus_path": str(trivia_files["corpus"])}))
    assert len(index) == 12

    empty = _write(tmp_path / "empty.jsonl", "\n")
    with pytest.raises(DataError):
        load_index(load_config(None, {"generator": generator, "corpus_path": str(empty)}))
