"""Batch orchestration: dataset ingestion, linking and generation runs,
evaluation reports, and the mode sweep.

Run outputs are append-only JSON-lines files keyed by question_id, so an
interrupted run resumes by skipping rows already present. Reports are
regenerated deterministically from run outputs: rows are sorted, floats are
formatted, and no timestamps are written.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

from .errors import (
    EmptyInputError,
    GoldExecutionError,
    LinkerError,
    NoSchemasFoundError,
    ParseError,
)
from .llm import (
    DEFAULT_MODEL,
    CacheMode,
    CachingClient,
    HttpCompletionClient,
    LlmEndpointOracle,
    LlmPathOracle,
    TranscriptCache,
    render_sql_gen_prompt,
)
from .metrics import EvalRecord, aggregate, execution_match, make_eval_record
from .pathfinder import MODE_LABELS, MODE_PRESETS, canonical_mode_name, link, preset
from .schema_model import (
    Schema,
    SchemaGraph,
    augment_sparse_graph,
    build_graph,
    ingest_schema_document,
    ingest_sqlite,
)
from .sql_analysis import (
    extract_tables,
    render_filtered_schema,
    render_join_path,
    render_schema,
)

log = logging.getLogger(__name__)


class RunStage(str, Enum):
    LINK_ONLY = "link_only"
    LINK_AND_GENERATE = "link_and_generate"
    EVALUATE = "evaluate"


@dataclass(frozen=True)
class Question:
    question_id: str
    db_id: str
    text: str
    evidence: str | None = None
    gold_sql: str = ""
    difficulty: str = "unknown"


@dataclass(frozen=True)
class RunConfig:
    mode: str = "mode7"
    linker_model: str = DEFAULT_MODEL
    generator_model: str | None = None
    temperatures: tuple[float, float] = (0.2, 0.3)
    cache_path: Path | None = None
    cache_mode: str = "replay"
    run_stage: RunStage = RunStage.LINK_ONLY
    baseline: bool = False
    workers: int = 4
    api_url: str | None = None
    api_key: str | None = None

    def build_client(self) -> CachingClient:
        if self.cache_path is None:
            raise ValueError("cache_path is required to build a client")
        cache = TranscriptCache(self.cache_path)
        backend = None
        if CacheMode(self.cache_mode) is CacheMode.RECORD:
            backend = HttpCompletionClient(self.api_url, self.api_key)
        return CachingClient(cache, backend=backend, mode=self.cache_mode)


class SchemaRepository:
    """Loads and caches schemas and their augmented graphs by database id.

    A database directory supplies either ``<db_id>.sqlite`` or, failing
    that, ``schema.json``; the SQLite file wins when both exist.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()
        self._schemas: dict[str, Schema] = {}
        self._graphs: dict[str, SchemaGraph] = {}

    def database_path(self, db_id: str) -> Path | None:
        path = self.root / db_id / f"{db_id}.sqlite"
        return path if path.is_file() else None

    def document_path(self, db_id: str) -> Path | None:
        path = self.root / db_id / "schema.json"
        return path if path.is_file() else None

    def has(self, db_id: str) -> bool:
        return self.database_path(db_id) is not None or self.document_path(db_id) is not None

    def schema(self, db_id: str) -> Schema:
        with self._lock:
            cached = self._schemas.get(db_id)
        if cached is not None:
            return cached
        database = self.database_path(db_id)
        if database is not None:
            loaded = ingest_sqlite(database)
        else:
            document = self.document_path(db_id)
            if document is None:
                raise FileNotFoundError(
                    f"no schema source for database {db_id!r} under {self.root}"
                )
            loaded = ingest_schema_document(document)
        with self._lock:
            self._schemas.setdefault(db_id, loaded)
            return self._schemas[db_id]

    def graph(self, db_id: str) -> SchemaGraph:
        with self._lock:
            cached = self._graphs.get(db_id)
        if cached is not None:
            return cached
        schema = self.schema(db_id)
        built = augment_sparse_graph(build_graph(schema), schema)
        with self._lock:
            self._graphs.setdefault(db_id, built)
            return self._graphs[db_id]


def ingest_dataset(
    path: str | Path,
    schema_root: str | Path,
    *,
    require_gold_sql: bool = False,
) -> tuple[list[Question], list[str]]:
    """Load a dataset JSON array, skipping rows whose database is missing.

    Returns the questions plus a diagnostic line per skipped row. Rows with
    malformed or missing required fields fail the whole ingest; a dataset
    whose databases are all missing is a NO_SCHEMAS_FOUND error.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset file: {path}")
    try:
        rows = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(rows, list):
        raise ParseError(f"{path}: dataset must be a JSON array of question rows")

    repo = SchemaRepository(schema_root)
    questions: list[Question] = []
    diagnostics: list[str] = []
    found_any_schema = False
    for i, row in enumerate(rows):
        where = f"{path.name}[{i}]"
        if not isinstance(row, dict):
            raise ParseError(f"{where}: row must be a JSON object")
        for field_name in ("question_id", "db_id", "question"):
            if field_name not in row:
                raise ParseError(f"{where}: missing field {field_name!r}")
        question_id = str(row["question_id"])
        db_id = str(row["db_id"])
        gold_sql = row.get("SQL") or ""
        if require_gold_sql and not gold_sql:
            raise ParseError(f"{where} (question_id={question_id}): missing field 'SQL'")
        if not repo.has(db_id):
            diagnostics.append(f"{where}: skipped; no schema source for database {db_id!r}")
            continue
        found_any_schema = True
        evidence = row.get("evidence")
        questions.append(
            Question(
                question_id=question_id,
                db_id=db_id,
                text=str(row["question"]),
                evidence=str(evidence) if evidence else None,
                gold_sql=str(gold_sql),
                difficulty=str(row.get("difficulty") or "unknown"),
            )
        )
    if rows and not found_any_schema:
        raise NoSchemasFoundError(
            f"no schemas found under {schema_root} for any dataset row"
        )
    for message in diagnostics:
        log.warning("%s", message)
    return questions, diagnostics


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    rows = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{line_no}: unreadable run output: {exc.msg}") from exc
    return rows


@dataclass(frozen=True)
class RunOutcome:
    path: Path
    completed: int
    skipped: int
    failed: int


def _error_payload(exc: Exception) -> dict:
    return {"code": getattr(exc, "code", "ERROR"), "message": str(exc)}


def run_linking(
    questions: Sequence[Question],
    config: RunConfig,
    repo: SchemaRepository,
    out_path: str | Path,
    client: CachingClient | None = None,
) -> RunOutcome:
    """Link every question, appending one JSON row each to out_path.

    Rows already present (by question_id) are skipped, which makes an
    interrupted run resumable. Per-question failures are recorded inline
    and do not stop the run.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    client = client if client is not None else config.build_client()
    link_temperature = config.temperatures[0]
    endpoint_oracle = LlmEndpointOracle(client, config.linker_model, link_temperature)
    path_oracle = LlmPathOracle(client, config.linker_model, link_temperature)
    mode_name = canonical_mode_name(config.mode)
    mode = preset(mode_name)

    existing = {row["question_id"] for row in _read_jsonl(out_path)}
    todo = [q for q in questions if q.question_id not in existing]

    def work(question: Question) -> dict:
        schema = repo.schema(question.db_id)
        graph = repo.graph(question.db_id)
        result = link(
            question.text,
            schema,
            graph,
            mode,
            endpoint_oracle,
            path_oracle,
            evidence=question.evidence,
        )
        row = {
            "question_id": question.question_id,
            "db_id": question.db_id,
            "question": question.text,
            "evidence": question.evidence,
            "difficulty": question.difficulty,
            "mode": mode_name,
            "sources": list(result.sources),
            "destinations": list(result.destinations),
            "paths": [list(path.tables) for path in result.candidates.paths],
            "union_tables": sorted(result.candidates.union_tables, key=str.casefold),
            "chosen_tables": sorted(result.chosen_tables, key=str.casefold),
            "chosen_path_id": result.chosen_path_id,
            "selection_rule": result.selection_rule,
            "degraded": result.degraded,
            "warnings": list(result.warnings),
            "filtered_schema": render_filtered_schema(
                schema, result.chosen_tables, result.induced_fk_edges
            ),
            "join_path": render_join_path(result),
            "full_schema": render_schema(schema),
            "error": None,
        }
        usage = client.pop_usage()
        if usage:
            row["token_usage"] = usage
        return row

    failed = 0
    write_lock = threading.Lock()
    with out_path.open("a", encoding="utf-8") as sink:
        with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
            futures = {pool.submit(work, question): question for question in todo}
            for future in as_completed(futures):
                question = futures[future]
                try:
                    row = future.result()
                except Exception as exc:  # recorded inline; the run continues
                    failed += 1
                    log.warning("question %s failed: %s", question.question_id, exc)
                    row = {
                        "question_id": question.question_id,
                        "db_id": question.db_id,
                        "question": question.text,
                        "evidence": question.evidence,
                        "difficulty": question.difficulty,
                        "mode": mode_name,
                        "error": _error_payload(exc),
                    }
                with write_lock:
                    sink.write(json.dumps(row, ensure_ascii=True, sort_keys=True) + "\n")
                    sink.flush()
    return RunOutcome(
        path=out_path,
        completed=len(todo) - failed,
        skipped=len(questions) - len(todo),
        failed=failed,
    )


_SQL_FENCE_RE = re.compile(r"```(?:sql)?[ \t]*\n?(.*?)```", re.DOTALL | re.IGNORECASE)
_SQL_STATEMENT_RE = re.compile(r"\b(?:SELECT|WITH)\b.*?(?=;|\Z)", re.DOTALL | re.IGNORECASE)


def extract_sql_reply(reply: str) -> str | None:
    """Pull the query out of a generation reply.

    The first non-empty fenced code block wins; otherwise the longest
    SELECT- or WITH-prefixed statement is taken.
    """
    for match in _SQL_FENCE_RE.finditer(reply):
        block = match.group(1).strip()
        if block:
            return block
    statements = [match.group().strip() for match in _SQL_STATEMENT_RE.finditer(reply)]
    statements = [s for s in statements if s]
    if not statements:
        return None
    return max(statements, key=len)


def run_generation(
    link_output: str | Path,
    config: RunConfig,
    client: CachingClient | None = None,
    out_path: str | Path | None = None,
) -> RunOutcome:
    """Generate SQL for every linked row, carrying the link fields forward.

    Renders the join-path prompt from the row's filtered schema, or the
    baseline prompt from the full schema when config.baseline is set.
    """
    link_output = Path(link_output)
    rows = _read_jsonl(link_output)
    if not rows:
        raise EmptyInputError(f"no rows in {link_output}")
    if out_path is None:
        out_path = link_output.with_name(link_output.stem + "_generated.jsonl")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    client = client if client is not None else config.build_client()
    generator_model = config.generator_model or config.linker_model
    generation_temperature = config.temperatures[1]

    existing = {row["question_id"] for row in _read_jsonl(out_path)}
    todo = [row for row in rows if row["question_id"] not in existing]

    def work(row: dict) -> dict:
        out = dict(row)
        if row.get("error"):
            out["predicted_sql"] = None
            out["generation_error"] = {
                "code": "GENERATION_FAILED",
                "message": "linking failed upstream",
            }
            return out
        schema_text = row["full_schema"] if config.baseline else row["filtered_schema"]
        request = render_sql_gen_prompt(
            row["question"],
            schema_text,
            join_path_text=None if config.baseline else row["join_path"],
            evidence=row.get("evidence"),
            baseline=config.baseline,
            model_name=generator_model,
            temperature=generation_temperature,
        )
        reply = client.complete(request)
        sql = extract_sql_reply(reply)
        out["predicted_sql"] = sql
        out["generation_error"] = (
            None
            if sql
            else {"code": "GENERATION_FAILED", "message": "no SQL found in reply"}
        )
        return out

    failed = 0
    write_lock = threading.Lock()
    with out_path.open("a", encoding="utf-8") as sink:
        with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
            futures = {pool.submit(work, row): row for row in todo}
            for future in as_completed(futures):
                source_row = futures[future]
                try:
                    row = future.result()
                except Exception as exc:
                    log.warning(
                        "generation for %s failed: %s", source_row["question_id"], exc
                    )
                    row = dict(source_row)
                    row["predicted_sql"] = None
                    row["generation_error"] = _error_payload(exc)
                if row.get("generation_error"):
                    failed += 1
                with write_lock:
                    sink.write(json.dumps(row, ensure_ascii=True, sort_keys=True) + "\n")
                    sink.flush()
    return RunOutcome(
        path=out_path,
        completed=len(todo) - failed,
        skipped=len(rows) - len(todo),
        failed=failed,
    )


@dataclass(frozen=True)
class EvaluationReport:
    summary_path: Path
    per_question_path: Path
    summary: dict


def _question_sort_key(question_id: str) -> tuple:
    return (0, int(question_id)) if question_id.isdigit() else (1, question_id)


def _format_float(value: float) -> str:
    return f"{value:.6f}"


def _set_cell(names) -> str:
    return "|".join(sorted(names, key=str.casefold))


CSV_COLUMNS = [
    "question_id",
    "db_id",
    "difficulty",
    "gold_tables",
    "predicted_tables",
    "precision",
    "recall",
    "f1",
    "f6",
    "exact_match",
    "exec_match",
]


def run_evaluation(
    run_output: str | Path,
    questions: Sequence[Question],
    repo: SchemaRepository,
    *,
    check_execution: bool = False,
    report_dir: str | Path,
) -> EvaluationReport:
    """Score a run against gold SQL and write summary.json + per_question.csv.

    Gold table sets come from extracting table references out of each gold
    query. Questions whose gold SQL cannot be parsed are excluded from the
    schema aggregates and reported separately, as are gold queries that fail
    to execute when execution checking is on. Report output is byte-stable
    for a given run output.
    """
    run_output = Path(run_output)
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    rows = {row["question_id"]: row for row in _read_jsonl(run_output)}

    records: list[EvalRecord] = []
    extraction_failures: list[dict] = []
    gold_execution_failures: list[dict] = []
    missing_rows: list[str] = []
    ordered = sorted(questions, key=lambda q: _question_sort_key(q.question_id))
    for question in ordered:
        row = rows.get(question.question_id)
        if row is None:
            missing_rows.append(question.question_id)
            continue
        schema = repo.schema(question.db_id)
        try:
            gold = extract_tables(question.gold_sql, schema)
        except ParseError as exc:
            extraction_failures.append(
                {"question_id": question.question_id, "reason": str(exc)}
            )
            continue
        predicted = row.get("chosen_tables") or []
        exec_flag: bool | None = None
        predicted_sql = row.get("predicted_sql")
        if check_execution and predicted_sql:
            database = repo.database_path(question.db_id)
            if database is None:
                gold_execution_failures.append(
                    {
                        "question_id": question.question_id,
                        "reason": f"no SQLite database for {question.db_id!r}",
                    }
                )
            else:
                try:
                    exec_flag = execution_match(
                        predicted_sql, question.gold_sql, database
                    )
                except GoldExecutionError as exc:
                    gold_execution_failures.append(
                        {"question_id": question.question_id, "reason": str(exc)}
                    )
        records.append(
            make_eval_record(
                question.question_id,
                gold.tables,
                predicted,
                difficulty=question.difficulty,
                db_id=question.db_id,
                exec_match=exec_flag,
            )
        )

    if not records:
        raise EmptyInputError("no evaluable rows; nothing to report")
    summary = aggregate(records)
    summary["rows_evaluated"] = len(records)
    summary["extraction_failures"] = {
        "count": len(extraction_failures),
        "rows": extraction_failures,
    }
    summary["gold_execution_failures"] = {
        "count": len(gold_execution_failures),
        "rows": gold_execution_failures,
    }
    summary["missing_rows"] = {"count": len(missing_rows), "question_ids": missing_rows}

    summary_path = report_dir / "summary.json"
    summary_path.write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    per_question_path = report_dir / "per_question.csv"
    with per_question_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for record in records:
            writer.writerow(
                [
                    record.question_id,
                    record.db_id,
                    record.difficulty,
                    _set_cell(record.gold_tables),
                    _set_cell(record.predicted_tables),
                    _format_float(record.metrics.precision),
                    _format_float(record.metrics.recall),
                    _format_float(record.metrics.f1),
                    _format_float(record.metrics.f6),
                    "true" if record.metrics.exact_match else "false",
                    "" if record.exec_match is None else str(record.exec_match).lower(),
                ]
            )
    return EvaluationReport(
        summary_path=summary_path, per_question_path=per_question_path, summary=summary
    )


GRID_COLUMNS = ["mode", "label", "count", "exact_match_rate", "precision", "recall", "f1", "f6"]


def run_sweep(
    questions: Sequence[Question],
    base_config: RunConfig,
    repo: SchemaRepository,
    out_dir: str | Path,
    modes: Sequence[str] | None = None,
    client: CachingClient | None = None,
) -> dict:
    """Run linking plus schema-level evaluation for each mode.

    Writes per-mode link outputs and reports under out_dir, then a
    grid.csv/grid.json comparing schema metrics across modes.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mode_names = [canonical_mode_name(m) for m in (modes or list(MODE_PRESETS))]
    client = client if client is not None else base_config.build_client()

    grid_rows = []
    for mode_name in mode_names:
        config = replace(base_config, mode=mode_name)
        link_path = out_dir / f"link_{mode_name}.jsonl"
        run_linking(questions, config, repo, link_path, client=client)
        report = run_evaluation(
            link_path,
            questions,
            repo,
            check_execution=False,
            report_dir=out_dir / mode_name,
        )
        overall = report.summary["overall"]
        grid_rows.append(
            {
                "mode": mode_name,
                "label": MODE_LABELS[mode_name],
                "count": overall["count"],
                "exact_match_rate": overall["exact_match_rate"],
                "precision": overall["precision"],
                "recall": overall["recall"],
                "f1": overall["f1"],
                "f6": overall["f6"],
            }
        )

    grid_json = out_dir / "grid.json"
    grid_json.write_text(
        json.dumps(grid_rows, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    grid_csv = out_dir / "grid.csv"
    with grid_csv.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(GRID_COLUMNS)
        for row in grid_rows:
            writer.writerow(
                [
                    row["mode"],
                    row["label"],
                    row["count"],
                    _format_float(row["exact_match_rate"]),
                    _format_float(row["precision"]),
                    _format_float(row["recall"]),
                    _format_float(row["f1"]),
                    _format_float(row["f6"]),
                ]
            )
    return {"grid_csv": grid_csv, "grid_json": grid_json, "rows": grid_rows}
