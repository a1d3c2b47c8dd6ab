# dprag/config.py
"""
CLI / experiment configuration: a TOML file validated by pydantic, with flag
overrides applied on top (flags win).
"""

from __future__ import annotations

import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, FilePath, ValidationError

from dprag import settings
from dprag.engine import Algorithm, RunConfig
from dprag.errors import DataError, InvalidArgumentError
from dprag.generation import Generator, ScriptedGenerator, Vocabulary, tokenize, train_ngram
from dprag.remote import RemoteGenerator
from dprag.retrieval import Document, TfidfIndex, index_corpus, load_corpus

logger = logging.getLogger(__name__)


# Generator settings -----------------------------------------------------------


class ScriptedSettings(BaseModel):
    kind: Literal["scripted"] = "scripted"
    table_path: FilePath


class NGramSettings(BaseModel):
    kind: Literal["ngram"] = "ngram"
    train_path: FilePath
    order: int = Field(default=3, ge=1)
    alpha: float = Field(default=0.1, gt=0)
    context_weight: float = Field(default=5.0, ge=0)
    window: Optional[int] = Field(default=None, ge=1)


class RemoteSettings(BaseModel):
    kind: Literal["remote"] = "remote"
    endpoint: str
    model: str
    api_key_env: str = settings.API_KEY_ENV
    timeout: float = Field(default=settings.REMOTE_TIMEOUT, gt=0)
    retries: int = Field(default=settings.REMOTE_RETRIES, ge=0)
    max_in_flight: int = Field(default=settings.REMOTE_MAX_IN_FLIGHT, ge=1)
    window: Optional[int] = Field(default=None, ge=1)


GeneratorSettings = Annotated[
    Union[ScriptedSettings, NGramSettings, RemoteSettings],
    Field(discriminator="kind"),
]


class SweepSettings(BaseModel):
    algorithms: List[Algorithm] = Field(default_factory=lambda: [Algorithm.DP_SPARSE_VOTE_RAG])
    epsilon_totals: List[float] = Field(default_factory=lambda: [10.0])
    epsilon_tokens: List[float] = Field(default_factory=lambda: [2.0])
    ms: List[int] = Field(default_factory=lambda: [20])
    repetitions: int = Field(default=3, ge=1)


class CliConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    corpus_path: Optional[FilePath] = None
    questions_path: Optional[FilePath] = None
    algorithm: Algorithm = Algorithm.DP_SPARSE_VOTE_RAG
    m: int = Field(default=20, ge=1)
    k: int = Field(default=1, ge=1)
    tau: Optional[float] = None
    epsilon_token: float = Field(default=2.0, gt=0)
    delta_token: float = Field(default=settings.DEFAULT_DELTA_TOKEN, ge=0, lt=1)
    epsilon_total: float = Field(default=10.0, gt=0)
    delta_total: float = Field(default=settings.DEFAULT_DELTA_TOTAL, ge=0, lt=1)
    t_max_cap: int = Field(default=settings.DEFAULT_T_MAX_CAP, ge=1)
    generator: GeneratorSettings
    seed: int = Field(default=0, ge=0, lt=2**64)
    output_dir: Path = Path("runs")
    jobs: int = Field(default=4, ge=1)
    sweep: SweepSettings = Field(default_factory=SweepSettings)

    def run_config(self, **overrides: Any) -> RunConfig:
        values = dict(
            algorithm=self.algorithm,
            m=self.m,
            k=self.k,
            tau=self.tau,
            epsilon_token=self.epsilon_token,
            delta_token=self.delta_token,
            epsilon_total=self.epsilon_total,
            delta_total=self.delta_total,
            t_max_cap=self.t_max_cap,
            seed=self.seed,
        )
        values.update(overrides)
        try:
            return RunConfig(**values)
        except ValidationError as exc:
            raise InvalidArgumentError(str(exc)) from exc


# Loading ----------------------------------------------------------------------


def _apply_overrides(raw: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Dotted keys (``sweep.ms``) address nested tables; ``None`` means "not given"."""
    merged = json.loads(json.dumps(raw))
    for key, value in overrides.items():
        if value is None:
            continue
        target = merged
        *parents, leaf = key.split(".")
        for part in parents:
            target = target.setdefault(part, {})
        target[leaf] = value
    return merged


def load_config(path: Optional[Union[str, Path]], overrides: Optional[Dict[str, Any]] = None) -> CliConfig:
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                raw = tomllib.load(f)
        except FileNotFoundError as exc:
            raise DataError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise InvalidArgumentError(f"{path}: invalid TOML ({exc})") from exc

    merged = _apply_overrides(raw, overrides or {})
    if "generator" not in merged:
        raise InvalidArgumentError("no generator configured (set [generator] in the config file)")
    try:
        return CliConfig.model_validate(merged)
    except ValidationError as exc:
        missing = [err for err in exc.errors() if err["type"] == "path_not_file"]
        if missing:
            where = ", ".join(".".join(str(p) for p in err["loc"]) + "=" + str(err["input"]) for err in missing)
            raise DataError(f"input file not found: {where}") from exc
        raise InvalidArgumentError(f"invalid configuration:\n{exc}") from exc


def load_texts(path: Union[str, Path]) -> List[str]:
    """Training texts: JSONL rows with a ``text`` field, or one text per line."""
    path = Path(path)
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if path.suffix != ".jsonl":
        return lines
    try:
        return [str(json.loads(line)["text"]) for line in lines]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed training text ({exc})") from exc


# Builders ---------------------------------------------------------------------


def build_generator(gen: Union[ScriptedSettings, NGramSettings, RemoteSettings], corpus: Optional[List[Document]] = None) -> Generator:
    """
    Build the configured generator. For the n-gram model, corpus words are
    registered up front so that the vocabulary does not grow while
    concurrent runs are in flight.
    """
    if isinstance(gen, ScriptedSettings):
        return ScriptedGenerator.load(gen.table_path)
    if isinstance(gen, NGramSettings):
        model = train_ngram(
            load_texts(gen.train_path),
            order=gen.order,
            alpha=gen.alpha,
            context_weight=gen.context_weight,
            window=gen.window,
        )
        for doc in corpus or ():
            for word in tokenize(doc.text):
                model.vocabulary.add(word)
        return model
    return RemoteGenerator(
        endpoint=gen.endpoint,
        model=gen.model,
        vocabulary=Vocabulary(),
        api_key_env=gen.api_key_env,
        timeout=gen.timeout,
        retries=gen.retries,
        max_in_flight=gen.max_in_flight,
        window=gen.window,
    )


def load_index(cfg: CliConfig) -> Optional[TfidfIndex]:
    if cfg.corpus_path is None:
        return None
    corpus = load_corpus(cfg.corpus_path)
    if not corpus:
        raise DataError(f"{cfg.corpus_path}: corpus is empty")
    return index_corpus(corpus)
