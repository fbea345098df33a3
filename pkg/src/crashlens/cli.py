"""Pipeline orchestration: ingest -> index -> enhance -> eval -> report.

Each stage is a subcommand driven by one YAML config file. Outputs land under
a per-run directory with a machine-readable ledger that accounts for every
input report; all emitted files are deterministic for a pinned run_id.

Exit codes: 0 success (including partial-with-ledger), 1 usage error,
2 environment error, 3 systemic pipeline error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import yaml

from .enhance import (
    AgentBudget,
    EnhancedReport,
    EnhancementError,
    enhance_agentic,
    enhance_direct,
    render_page,
)
from .ingest import CrashReport, ReportParseError, extract_stack_traces, filter_verdict, load_corpus
from .jindex import MethodId, index_project
from .llm import ChatClient, ChatParams, ClientError, Transcript, http_endpoint
from .metrics import (
    accuracy,
    audit_enhanced,
    audit_raw_description,
    bm25_rank,
    codebleu,
    match_localization,
    mean_codebleu,
    method_documents,
    topn_recall,
)
from .repo import CheckoutError, GitClient, GroundTruthError, ResolutionError, extract_ground_truth, resolve_snapshot
from .store import GraphStore, StoreLoadError, load as load_store, save as save_store, store_hash

logger = logging.getLogger("crashlens")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ENV = 2
EXIT_PIPELINE = 3


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    base_url: str = ""
    name: str = "gpt-4o-mini-2024-07-18"
    credential_env: str = "CRASHLENS_API_KEY"
    temperature: float = 0.0
    max_output_tokens: int = 4096
    context_budget: int = 128_000


@dataclass
class AgentConfig:
    max_steps: int = 12
    stall_steps: int = 2
    max_method_bytes: int = 20_000


@dataclass
class EvalConfig:
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    top_n: list[int] = field(default_factory=lambda: [1, 3, 5])
    codebleu_weights: list[float] = field(default_factory=lambda: [0.25, 0.25, 0.25, 0.25])


@dataclass
class TranscriptConfig:
    mode: str = "replay"
    dir: str = "transcripts"


@dataclass
class PricingConfig:
    prompt_per_million: float = 0.15
    completion_per_million: float = 0.60


@dataclass
class RunConfig:
    corpus: Path
    repos_root: Path
    output_dir: Path
    projects: dict[str, str]
    run_id: str
    trace_index: int = 0
    branch: str = "main"
    parallelism: int = 1
    exclude_dirs: list[str] = field(default_factory=list)
    model: ModelConfig = field(default_factory=ModelConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    transcripts: TranscriptConfig = field(default_factory=TranscriptConfig)
    pricing: PricingConfig = field(default_factory=PricingConfig)

    @property
    def run_dir(self) -> Path:
        return self.output_dir / self.run_id

    def transcript_path(self, report_id: str, mode: str) -> Path:
        return Path(self.transcripts.dir) / f"{report_id}.{mode}.jsonl"

    def chat_params(self) -> ChatParams:
        return ChatParams(
            model=self.model.name,
            temperature=self.model.temperature,
            max_output_tokens=self.model.max_output_tokens,
        )

    def agent_budget(self) -> AgentBudget:
        return AgentBudget(
            max_steps=self.agent.max_steps,
            stall_steps=self.agent.stall_steps,
            max_method_bytes=self.agent.max_method_bytes,
            token_budget=self.model.context_budget,
        )


def _build_section(cls, data: dict, name: str):
    known = set(cls.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {', '.join(sorted(unknown))}")
    return cls(**data)


_TOP_KEYS = {
    "corpus", "repos_root", "output_dir", "projects", "run_id", "trace_index",
    "branch", "parallelism", "exclude_dirs", "model", "agent", "eval",
    "transcripts", "pricing",
}


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for required in ("corpus", "repos_root", "output_dir", "projects"):
        if required not in data:
            raise ConfigError(f"config missing required key: {required}")
    base = path.parent

    def respath(value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else (base / p)

    config = RunConfig(
        corpus=respath(str(data["corpus"])),
        repos_root=respath(str(data["repos_root"])),
        output_dir=respath(str(data["output_dir"])),
        projects={str(k): str(v) for k, v in dict(data["projects"]).items()},
        run_id=str(data.get("run_id") or datetime.now(timezone.utc).strftime("run-%Y%m%dT%H%M%SZ")),
        trace_index=int(data.get("trace_index", 0)),
        branch=str(data.get("branch", "main")),
        parallelism=int(data.get("parallelism", 1)),
        exclude_dirs=[str(d) for d in data.get("exclude_dirs", [])],
        model=_build_section(ModelConfig, dict(data.get("model", {})), "model"),
        agent=_build_section(AgentConfig, dict(data.get("agent", {})), "agent"),
        eval=_build_section(EvalConfig, dict(data.get("eval", {})), "eval"),
        transcripts=_build_section(TranscriptConfig, dict(data.get("transcripts", {})), "transcripts"),
        pricing=_build_section(PricingConfig, dict(data.get("pricing", {})), "pricing"),
    )
    tdir = Path(config.transcripts.dir)
    if not tdir.is_absolute():
        config.transcripts.dir = str(base / tdir)

    if not 0.0 <= config.model.temperature <= 2.0:
        raise ConfigError("model.temperature out of range [0, 2]")
    if config.model.max_output_tokens <= 0 or config.model.context_budget <= 0:
        raise ConfigError("model token settings must be positive")
    if config.agent.max_steps < 0 or config.agent.stall_steps < 1 or config.agent.max_method_bytes <= 0:
        raise ConfigError("agent budget settings out of range")
    if config.eval.bm25_k1 <= 0 or not 0.0 <= config.eval.bm25_b <= 1.0:
        raise ConfigError("bm25 parameters out of range (k1>0, 0<=b<=1)")
    if not config.eval.top_n or any(n < 1 for n in config.eval.top_n):
        raise ConfigError("eval.top_n entries must be >= 1")
    if len(config.eval.codebleu_weights) != 4 or any(w < 0 for w in config.eval.codebleu_weights):
        raise ConfigError("eval.codebleu_weights must be four non-negative numbers")
    if abs(sum(config.eval.codebleu_weights) - 1.0) > 1e-9:
        raise ConfigError("eval.codebleu_weights must sum to 1")
    if config.transcripts.mode not in ("record", "replay"):
        raise ConfigError("transcripts.mode must be record or replay")
    if config.parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    if config.trace_index < 0:
        raise ConfigError("trace_index must be >= 0")
    return config


# ---------------------------------------------------------------------------
# Ledger


def _ledger_path(config: RunConfig) -> Path:
    return config.run_dir / "ledger.json"


def _load_ledger(config: RunConfig) -> dict:
    path = _ledger_path(config)
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return {
        "run_id": config.run_id,
        "run_metadata": {
            "history": "first-parent",
            "call_resolution": "name+arity over-approximation (no type inference)",
            "first_trace_only": config.trace_index == 0,
        },
        "reports": {},
    }


def _save_ledger(config: RunConfig, ledger: dict) -> None:
    path = _ledger_path(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(ledger, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _ledger_mark(ledger: dict, report_id: str, stage: str, status: str, **extra) -> None:
    entry = ledger["reports"].setdefault(report_id, {})
    entry[stage] = {"status": status, **extra}


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(config: RunConfig) -> int:
    if not config.corpus.exists():
        logger.error("corpus not readable: %s", config.corpus)
        return EXIT_ENV
    ledger = _load_ledger(config)
    manifest: dict = {"reports": [], "drop_counts": {}, "total": 0, "retained": 0}
    drop_counts: dict[str, int] = {}
    try:
        records = list(load_corpus(config.corpus))
    except ReportParseError as exc:
        logger.error("corpus record failed to parse: %s", exc)
        return EXIT_ENV
    seen_ids: dict[str, int] = {}
    for report in records:
        manifest["total"] += 1
        if report.id in seen_ids:
            seen_ids[report.id] += 1
            _ledger_mark(
                ledger,
                f"{report.id}#duplicate-{seen_ids[report.id]}",
                "ingest",
                "failed",
                reason="duplicate id",
            )
            manifest["reports"].append(
                {"id": report.id, "system": report.system, "passed": False,
                 "filters": {}, "trace_count": 0, "duplicate": True}
            )
            continue
        seen_ids[report.id] = 1
        verdict = filter_verdict(report)
        passed = all(verdict.values())
        traces = extract_stack_traces(report.description)
        manifest["reports"].append(
            {
                "id": report.id,
                "system": report.system,
                "passed": passed,
                "filters": verdict,
                "trace_count": len(traces),
            }
        )
        if passed:
            manifest["retained"] += 1
            _ledger_mark(ledger, report.id, "ingest", "retained")
        else:
            failed = sorted(k for k, ok in verdict.items() if not ok)
            for key in failed:
                drop_counts[key] = drop_counts.get(key, 0) + 1
            _ledger_mark(ledger, report.id, "ingest", "skipped", reason="filtered:" + ",".join(failed))
    manifest["drop_counts"] = dict(sorted(drop_counts.items()))
    manifest["reports"].sort(key=lambda r: r["id"])
    _write_json(config.run_dir / "manifest.json", manifest)
    _save_ledger(config, ledger)
    print(
        f"ingest: {manifest['retained']}/{manifest['total']} retained; "
        + "; ".join(f"{k}={v}" for k, v in manifest["drop_counts"].items())
    )
    return EXIT_OK


def _load_manifest(config: RunConfig) -> dict:
    path = config.run_dir / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"manifest missing (run `crashlens ingest` first): {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def _retained_reports(config: RunConfig) -> list[CrashReport]:
    manifest = _load_manifest(config)
    retained_ids = {r["id"] for r in manifest["reports"] if r["passed"]}
    return sorted(
        (r for r in load_corpus(config.corpus) if r.id in retained_ids), key=lambda r: r.id
    )


# ---------------------------------------------------------------------------
# index


def cmd_index(config: RunConfig, only_ids: list[str] | None = None) -> int:
    try:
        reports = _retained_reports(config)
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return EXIT_ENV
    if only_ids:
        reports = [r for r in reports if r.id in set(only_ids)]
    ledger = _load_ledger(config)
    processed = 0
    for report in reports:
        repo_name = config.projects.get(report.system)
        if repo_name is None:
            _ledger_mark(ledger, report.id, "index", "skipped", reason="no project mapping")
            continue
        repo_path = config.repos_root / repo_name
        if not (repo_path / ".git").exists():
            _ledger_mark(ledger, report.id, "index", "skipped", reason="clone missing")
            continue
        store_dir = config.run_dir / "stores" / report.id
        try:
            git = GitClient(repo_path)
            snapshot = resolve_snapshot(git.log(config.branch), report.created_at, report.id)
            meta_path = store_dir / "meta"
            if meta_path.exists():
                existing = dict(
                    line.partition("=")[::2]
                    for line in meta_path.read_text(encoding="utf-8").splitlines()
                    if line
                )
                if existing.get("snapshot") == snapshot.commit_id:
                    # Unchanged snapshot: keep the store and the prior ledger entry.
                    if "index" not in ledger["reports"].get(report.id, {}):
                        _ledger_mark(
                            ledger, report.id, "index", "processed", snapshot=snapshot.commit_id
                        )
                    processed += 1
                    continue
            git.checkout(snapshot.commit_id)
            graph = index_project(repo_path, exclude=tuple(config.exclude_dirs))
            save_store(
                GraphStore(graph=graph, meta={"snapshot": snapshot.commit_id}), store_dir
            )
            gt_data = None
            if report.fix_commit:
                patch = git.diff(report.fix_commit)
                git.checkout(git.parent(report.fix_commit))
                gt = extract_ground_truth(repo_path, patch, report.id, report.fix_commit)
                gt_data = {
                    "report_id": gt.report_id,
                    "fix_commit": gt.fix_commit,
                    "modified_methods": sorted(m.key() for m in gt.modified_methods),
                    "pseudo_methods": sorted(gt.pseudo_methods),
                    "post_fix_bodies": {
                        mid.key(): body for mid, body in sorted(gt.post_fix_bodies.items())
                    },
                    "patch_text": gt.patch_text,
                }
                _write_json(config.run_dir / "ground_truth" / f"{report.id}.json", gt_data)
            _ledger_mark(
                ledger, report.id, "index", "processed",
                snapshot=snapshot.commit_id,
                ground_truth_methods=len(gt_data["modified_methods"]) if gt_data else 0,
            )
            processed += 1
        except (CheckoutError, ResolutionError, GroundTruthError, StoreLoadError) as exc:
            _ledger_mark(ledger, report.id, "index", "failed", reason=str(exc))
            logger.warning("index failed for %s: %s", report.id, exc)
    _save_ledger(config, ledger)
    print(f"index: {processed}/{len(reports)} reports indexed")
    if reports and processed == 0:
        return EXIT_PIPELINE
    return EXIT_OK


# ---------------------------------------------------------------------------
# enhance


def _usage_and_cost(transcript: Transcript, pricing: PricingConfig) -> dict:
    prompt_tokens = sum(ex.usage.get("prompt_tokens", 0) for ex in transcript.exchanges)
    completion_tokens = sum(ex.usage.get("completion_tokens", 0) for ex in transcript.exchanges)
    cost = (
        prompt_tokens * pricing.prompt_per_million
        + completion_tokens * pricing.completion_per_million
    ) / 1_000_000
    return {
        "prompt_tokens": prompt_tokens,
        "completion_tokens": completion_tokens,
        "completions": len(transcript.exchanges),
        "cost_usd": round(cost, 6),
    }


def estimate_cost(prompt_tokens: int, completion_tokens: int, pricing: PricingConfig) -> float:
    return (
        prompt_tokens * pricing.prompt_per_million
        + completion_tokens * pricing.completion_per_million
    ) / 1_000_000


def _enhance_one(
    config: RunConfig, report: CrashReport, mode: str, client: ChatClient | None = None
) -> tuple[str, dict]:
    """Returns (status, ledger extras); writes the enhanced document on success.

    A caller-provided client (tests, fixture recording) takes precedence over
    the configured transcript mode.
    """
    store_dir = config.run_dir / "stores" / report.id
    if not store_dir.exists():
        return "skipped", {"reason": "store missing"}
    store = load_store(store_dir)
    traces = extract_stack_traces(report.description)
    trace = None
    if traces:
        trace = traces[min(config.trace_index, len(traces) - 1)]
    if client is not None:
        transcript = client.transcript
    elif config.transcripts.mode == "replay":
        transcript_path = config.transcript_path(report.id, mode)
        if not transcript_path.exists():
            return "skipped", {"reason": "transcript missing"}
        transcript = Transcript.replay(transcript_path)
        client = ChatClient(transcript=transcript)
    else:
        transcript_path = config.transcript_path(report.id, mode)
        transcript_path.parent.mkdir(parents=True, exist_ok=True)
        if transcript_path.exists():
            transcript_path.unlink()
        transcript = Transcript.recording(transcript_path)
        endpoint = http_endpoint(config.model.base_url, config.model.credential_env)
        client = ChatClient(transcript=transcript, endpoint=endpoint)
    params = config.chat_params()
    if mode == "direct":
        enhanced = enhance_direct(
            report, trace, store, client, params, context_budget=config.model.context_budget
        )
        extras: dict = {}
    else:
        if trace is None:
            return "skipped", {"reason": "no stack trace"}
        enhanced, outcome = enhance_agentic(
            report, trace, store, client, config.agent_budget(), params,
            context_budget=config.model.context_budget,
        )
        extras = {"termination": outcome.termination, "agent_completions": outcome.completions}
    out_path = config.run_dir / "enhanced" / mode / f"{report.id}.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(enhanced.to_document(), encoding="utf-8")
    extras["usage"] = _usage_and_cost(transcript, config.pricing)
    return "processed", extras


def cmd_enhance(config: RunConfig, mode: str) -> int:
    if mode not in ("direct", "agentic"):
        logger.error("unknown mode %r", mode)
        return EXIT_USAGE
    try:
        reports = _retained_reports(config)
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return EXIT_ENV
    if config.transcripts.mode == "record" and not config.model.base_url:
        logger.error("record mode needs model.base_url")
        return EXIT_PIPELINE
    ledger = _load_ledger(config)

    def work(report: CrashReport):
        try:
            return report.id, _enhance_one(config, report, mode)
        except ClientError as exc:
            return report.id, ("systemic", {"reason": str(exc)})
        except (EnhancementError, StoreLoadError) as exc:
            return report.id, ("failed", {"reason": str(exc)})

    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(work, reports))
    else:
        results = [work(r) for r in reports]

    systemic = False
    processed = 0
    for report_id, (status, extras) in sorted(results):
        if status == "systemic":
            systemic = True
            status = "failed"
        if status == "processed":
            processed += 1
        _ledger_mark(ledger, report_id, f"enhance_{mode}", status, **extras)
    _save_ledger(config, ledger)
    print(f"enhance[{mode}]: {processed}/{len(reports)} reports enhanced")
    if systemic:
        return EXIT_PIPELINE
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _load_enhanced(config: RunConfig, mode: str) -> dict[str, EnhancedReport]:
    out: dict[str, EnhancedReport] = {}
    directory = config.run_dir / "enhanced" / mode
    if not directory.exists():
        return out
    for path in sorted(directory.glob("*.json")):
        out[path.stem] = EnhancedReport.from_document(path.read_text(encoding="utf-8"))
    return out


def _load_ground_truths(config: RunConfig) -> dict[str, dict]:
    out: dict[str, dict] = {}
    directory = config.run_dir / "ground_truth"
    if not directory.exists():
        return out
    for path in sorted(directory.glob("*.json")):
        out[path.stem] = json.loads(path.read_text(encoding="utf-8"))
    return out


def _format_cell(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.2f}"


def _render_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip()]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def _write_table(path: Path, headers: list[str], rows: list[list[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.with_suffix(".txt").write_text(_render_table(headers, rows), encoding="utf-8")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    writer.writerows(rows)
    path.with_suffix(".csv").write_text(buf.getvalue(), encoding="utf-8")


def cmd_eval(config: RunConfig) -> int:
    try:
        reports = _retained_reports(config)
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return EXIT_ENV
    ledger = _load_ledger(config)
    ground_truths = _load_ground_truths(config)
    enhanced = {mode: _load_enhanced(config, mode) for mode in ("direct", "agentic")}
    systems = sorted({r.system for r in reports})
    eval_dir = config.run_dir / "eval"

    gt_sets: dict[str, set[MethodId]] = {
        rid: {MethodId.from_key(k) for k in data["modified_methods"]}
        for rid, data in ground_truths.items()
    }
    scorable = [r for r in reports if gt_sets.get(r.id)]

    # Localization accuracy for both pipelines.
    loc_results: dict[str, dict[str, list]] = {"direct": {}, "agentic": {}}
    for mode in ("direct", "agentic"):
        for report in scorable:
            doc = enhanced[mode].get(report.id)
            if doc is None:
                continue
            result = match_localization(doc.problem_location, gt_sets[report.id], report.id)
            loc_results[mode].setdefault(report.system, []).append(result)

    # DevCR BM25 rankings over each report's snapshot store.
    rankings = []
    bm25_gts: dict[str, set[MethodId]] = {}
    for report in scorable:
        store_dir = config.run_dir / "stores" / report.id
        if not store_dir.exists():
            continue
        store = load_store(store_dir)
        documents = method_documents(store.graph.nodes)
        query = f"{report.title}\n{report.description}"
        rankings.append(
            (report.system, bm25_rank(query, documents, config.eval.bm25_k1, config.eval.bm25_b, report.id))
        )
        bm25_gts[report.id] = gt_sets[report.id]

    headers = ["System", "Direct", "Agentic"] + [f"DevCR@{n}" for n in config.eval.top_n]
    rows = []
    overall: dict[str, list] = {"direct": [], "agentic": []}
    for system in systems:
        row = [system]
        for mode in ("direct", "agentic"):
            results = loc_results[mode].get(system, [])
            overall[mode].extend(results)
            row.append(_format_cell(accuracy(results) if results else None))
        system_rankings = [rk for s, rk in rankings if s == system]
        for n in config.eval.top_n:
            cell = topn_recall(system_rankings, bm25_gts, n) if system_rankings else None
            row.append(_format_cell(cell))
        rows.append(row)
    avg_row = ["Average"]
    for mode in ("direct", "agentic"):
        avg_row.append(_format_cell(accuracy(overall[mode]) if overall[mode] else None))
    all_rankings = [rk for _, rk in rankings]
    for n in config.eval.top_n:
        avg_row.append(_format_cell(topn_recall(all_rankings, bm25_gts, n) if all_rankings else None))
    rows.append(avg_row)
    _write_table(eval_dir / "localization", headers, rows)

    # CodeBLEU over localized reports: per report, max across modified methods'
    # post-fix bodies (aggregation choice recorded in metadata).
    cb_tables: dict[str, dict[str, float]] = {}
    for mode in ("direct", "agentic"):
        by_system: dict[str, list[float]] = {s: [] for s in systems}
        for system, results in loc_results[mode].items():
            for result in results:
                if not result.matched:
                    continue
                doc = enhanced[mode][result.report_id]
                bodies = ground_truths[result.report_id].get("post_fix_bodies", {})
                if not bodies:
                    by_system[system].append(0.0)
                    continue
                best = max(
                    codebleu(
                        doc.possible_fix, body, tuple(config.eval.codebleu_weights)
                    ).combined
                    for body in bodies.values()
                )
                by_system[system].append(best)
        cb_tables[mode] = mean_codebleu(by_system)
    cb_rows = []
    for system in systems + ["Overall Average"]:
        cb_rows.append(
            [
                system,
                _format_cell(cb_tables["direct"].get(system) if enhanced["direct"] else None),
                _format_cell(cb_tables["agentic"].get(system) if enhanced["agentic"] else None),
            ]
        )
    _write_table(eval_dir / "codebleu", ["System", "Direct", "Agentic"], cb_rows)

    # Field-presence audit: heuristic over raw reports, structural over enhanced.
    audit_rows = []
    for report in reports:
        vector = audit_raw_description(f"{report.title}\n{report.description}")
        audit_rows.append([report.id, "raw"] + [str(vector[a]).lower() for a in ("steps", "root_cause", "component", "fix")])
        for mode in ("direct", "agentic"):
            doc = enhanced[mode].get(report.id)
            if doc is None:
                continue
            vec = audit_enhanced(
                {
                    "steps_to_reproduce": doc.steps_to_reproduce,
                    "root_cause": doc.root_cause,
                    "problem_location": doc.problem_location,
                    "repair_suggestion": doc.repair_suggestion,
                    "possible_fix": doc.possible_fix,
                }
            )
            audit_rows.append([report.id, mode] + [str(vec[a]).lower() for a in ("steps", "root_cause", "component", "fix")])
    _write_table(
        eval_dir / "audit",
        ["report_id", "kind", "steps", "root_cause", "component", "fix"],
        audit_rows,
    )

    _write_json(
        eval_dir / "metadata.json",
        {
            "codebleu_aggregation": "max over modified methods' post-fix bodies, localized reports only",
            "bm25": {"k1": config.eval.bm25_k1, "b": config.eval.bm25_b},
            "top_n": config.eval.top_n,
            "localization_normalization": "parameter lists stripped; anonymous-class suffixes stripped",
            "not_computed": sorted(
                mode for mode in ("direct", "agentic") if not enhanced[mode]
            ),
        },
    )
    for report in reports:
        _ledger_mark(ledger, report.id, "eval", "processed")
    _save_ledger(config, ledger)
    print(f"eval: tables written to {eval_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report rendering


def cmd_report(config: RunConfig) -> int:
    try:
        reports = {r.id: r for r in _retained_reports(config)}
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return EXIT_ENV
    count = 0
    for mode in ("direct", "agentic"):
        for report_id, doc in _load_enhanced(config, mode).items():
            report = reports.get(report_id)
            if report is None:
                continue
            page = render_page(report, doc)
            out = config.run_dir / "reports" / mode / f"{report_id}.md"
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(page, encoding="utf-8")
            count += 1
    print(f"report: {count} pages rendered")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="crashlens",
        description="Crash-report enhancement pipeline and evaluation harness.",
    )
    parser.add_argument("--config", required=True, help="path to the run config (YAML)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="filter the corpus and write the manifest")
    index_p = sub.add_parser("index", help="resolve snapshots, build stores and ground truth")
    index_p.add_argument("--report", action="append", dest="reports", default=None)
    enhance_p = sub.add_parser("enhance", help="produce enhanced reports")
    enhance_p.add_argument("--mode", choices=["direct", "agentic"], required=True)
    sub.add_parser("eval", help="score enhanced reports against ground truth")
    sub.add_parser("report", help="render human-readable report pages")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_USAGE

    if args.command == "ingest":
        return cmd_ingest(config)
    if args.command == "index":
        return cmd_index(config, args.reports)
    if args.command == "enhance":
        return cmd_enhance(config, args.mode)
    if args.command == "eval":
        return cmd_eval(config)
    if args.command == "report":
        return cmd_report(config)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
