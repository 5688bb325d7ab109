from __future__ import annotations

from pathlib import Path
from types import SimpleNamespace

import pytest

from schema_linker import (
    CachingClient,
    RunConfig,
    SchemaRepository,
    TranscriptCache,
    ingest_dataset,
    run_generation,
    run_linking,
)
from schema_linker.harness import _read_jsonl

from toy_corpus import ScriptedBackend, write_corpus

ALL_MODES = ["mode1", "mode2", "mode3", "mode4", "mode5", "mode6", "mode7"]


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("corpus")
    write_corpus(root)
    return root


@pytest.fixture(scope="session")
def dataset_path(corpus_dir: Path) -> Path:
    return corpus_dir / "dataset.json"


@pytest.fixture(scope="session")
def schema_root(corpus_dir: Path) -> Path:
    return corpus_dir / "schemas"


@pytest.fixture(scope="session")
def repo(schema_root: Path) -> SchemaRepository:
    return SchemaRepository(schema_root)


@pytest.fixture(scope="session")
def retail_schema(repo: SchemaRepository):
    return repo.schema("retail")


@pytest.fixture(scope="session")
def retail_graph(repo: SchemaRepository):
    return repo.graph("retail")


@pytest.fixture(scope="session")
def questions(dataset_path: Path, schema_root: Path):
    loaded, diagnostics = ingest_dataset(dataset_path, schema_root)
    assert not diagnostics
    return loaded


@pytest.fixture(scope="session")
def mode_runs(tmp_path_factory, questions, repo):
    """Memoized record-mode linking run per mode over the toy corpus.

    workers=1 keeps the scripted backend's request log in question order so
    tests can assert on prompt contents deterministically.
    """
    base = tmp_path_factory.mktemp("mode_runs")
    built: dict[str, SimpleNamespace] = {}

    def get(mode: str) -> SimpleNamespace:
        if mode not in built:
            cache_path = base / f"cache_{mode}.jsonl"
            out_path = base / f"link_{mode}.jsonl"
            backend = ScriptedBackend()
            client = CachingClient(
                TranscriptCache(cache_path), backend=backend, mode="record"
            )
            config = RunConfig(
                mode=mode, cache_path=cache_path, cache_mode="record", workers=1
            )
            outcome = run_linking(questions, config, repo, out_path, client=client)
            built[mode] = SimpleNamespace(
                mode=mode,
                cache_path=cache_path,
                link_path=out_path,
                outcome=outcome,
                backend=backend,
                client=client,
                rows={row["question_id"]: row for row in _read_jsonl(out_path)},
            )
        return built[mode]

    return get


@pytest.fixture(scope="session")
def golden_pipeline(tmp_path_factory, questions, repo):
    """Full link + generate run (mode7, scripted replies) with its own cache."""
    base = tmp_path_factory.mktemp("golden")
    cache_path = base / "cache.jsonl"
    backend = ScriptedBackend()
    client = CachingClient(TranscriptCache(cache_path), backend=backend, mode="record")
    config = RunConfig(
        mode="mode7", cache_path=cache_path, cache_mode="record", workers=1
    )
    link_path = base / "link.jsonl"
    link_outcome = run_linking(questions, config, repo, link_path, client=client)
    gen_outcome = run_generation(link_path, config, client=client)
    return SimpleNamespace(
        dir=base,
        config=config,
        client=client,
        backend=backend,
        cache_path=cache_path,
        link_path=link_path,
        gen_path=gen_outcome.path,
        link_outcome=link_outcome,
        gen_outcome=gen_outcome,
    )
