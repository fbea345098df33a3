"""The two enhancement pipelines.

Direct: one completion over the original report, its stack trace, and the
bodies of the trace-referenced methods (suffix-preserving truncation keeps
the frames closest to the thrown exception). Agentic: an iterative loop that
starts at the topmost mapped frame and requests call-graph neighbors one
method per step, maintaining an interaction history and a candidate set,
then generates the same structured report from everything it analyzed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from importlib import resources

from .ingest import CrashReport, StackTrace
from .jindex import MethodId, MethodNode, map_frame
from .llm import (
    ChatClient,
    ChatParams,
    DEFAULT_CONTEXT_BUDGET,
    StructuredOutputError,
    estimate_tokens,
    parse_structured,
)
from .metrics import normalize_location
from .store import GraphStore

logger = logging.getLogger(__name__)

__all__ = [
    "REPORT_FIELDS",
    "SENTINEL",
    "EnhancedReport",
    "EnhancementError",
    "AgentBudget",
    "HistoryEntry",
    "InteractionHistory",
    "CandidateSet",
    "AgentOutcome",
    "TruncationResult",
    "select_frame_methods",
    "truncate_for_budget",
    "enhance_direct",
    "agent_step",
    "run_agent",
    "enhance_agentic",
    "render_page",
]

REPORT_FIELDS = (
    "root_cause",
    "steps_to_reproduce",
    "problem_location",
    "repair_suggestion",
    "possible_fix",
)
SENTINEL = "unknown"

_DOCUMENT_KEYS = ("report_id", "provenance") + REPORT_FIELDS + ("evidence",)


class EnhancementError(RuntimeError):
    pass


def _template(name: str) -> str:
    return resources.files(__package__).joinpath("templates", name).read_text(encoding="utf-8")


@dataclass
class EnhancedReport:
    report_id: str
    provenance: str  # direct | agentic
    root_cause: str
    steps_to_reproduce: list[str]
    problem_location: list[str]
    repair_suggestion: str
    possible_fix: str
    evidence: list[str]  # MethodId keys of every method consulted

    def to_document(self) -> str:
        data = {key: getattr(self, key) for key in _DOCUMENT_KEYS}
        return json.dumps(data, indent=2, ensure_ascii=False) + "\n"

    @staticmethod
    def from_document(text: str) -> "EnhancedReport":
        data = json.loads(text)
        return EnhancedReport(**{key: data[key] for key in _DOCUMENT_KEYS})

    def validate(self) -> None:
        """Schema totality: every diagnostic field present and non-empty."""
        for key in ("root_cause", "repair_suggestion", "possible_fix"):
            value = getattr(self, key)
            if not isinstance(value, str) or not value.strip():
                raise EnhancementError(f"field {key} empty in report {self.report_id}")
        for key in ("steps_to_reproduce", "problem_location"):
            value = getattr(self, key)
            if not isinstance(value, list) or not value or not all(
                isinstance(v, str) and v.strip() for v in value
            ):
                raise EnhancementError(f"field {key} empty in report {self.report_id}")
        for location in self.problem_location:
            if normalize_location(location) is None:
                raise EnhancementError(
                    f"problem_location entry not a method identity: {location!r}"
                )
        if self.provenance not in ("direct", "agentic"):
            raise EnhancementError(f"unknown provenance {self.provenance!r}")


# ---------------------------------------------------------------------------
# Frame-method selection and budget truncation


def select_frame_methods(
    trace: StackTrace, store: GraphStore, diagnostics: dict | None = None
) -> list[MethodNode]:
    """Map frames to indexed methods, first occurrence per method, stack order."""
    seen: set[MethodId] = set()
    out: list[MethodNode] = []
    unmapped = 0
    for frame in trace.frames:
        mid = map_frame(frame, store.graph)
        if mid is None:
            unmapped += 1
            continue
        if mid in seen:
            continue
        seen.add(mid)
        node = store.lookup(mid)
        if node is not None:
            out.append(node)
    if diagnostics is not None:
        diagnostics["unmapped_frames"] = diagnostics.get("unmapped_frames", 0) + unmapped
    return out


@dataclass
class TruncationResult:
    methods: list[MethodNode]
    dropped: int = 0
    tail_truncated: bool = False


def truncate_for_budget(
    methods: list[MethodNode],
    budget_tokens: int,
    overhead_tokens: int = 0,
    estimator=estimate_tokens,
) -> TruncationResult:
    """Keep the maximal prefix of the topmost-first list whose estimated
    tokens (bodies plus fixed prompt overhead) fit the budget. Dropping
    happens from the tail, i.e. the frames farthest from the thrown
    exception. If even the topmost method does not fit, its body is
    tail-truncated to fit and the result is flagged."""
    available = budget_tokens - overhead_tokens
    kept: list[MethodNode] = []
    total = 0
    for node in methods:
        cost = estimator(node.body_text)
        if total + cost > available:
            break
        total += cost
        kept.append(node)
    if kept or not methods:
        return TruncationResult(methods=kept, dropped=len(methods) - len(kept))
    head = methods[0]
    keep_bytes = max(available, 0) * 4
    truncated = replace(head, body_text=head.body_text.encode("utf-8")[:keep_bytes].decode("utf-8", errors="ignore"))
    return TruncationResult(methods=[truncated], dropped=len(methods) - 1, tail_truncated=True)


# ---------------------------------------------------------------------------
# Prompt rendering


def _render_trace(trace: StackTrace | None) -> str:
    if trace is None or not trace.frames:
        return "(no stack trace extracted)"
    return trace.to_text()


def _render_methods(methods: list[MethodNode]) -> str:
    if not methods:
        return "(no method bodies available)"
    blocks = []
    for i, node in enumerate(methods, 1):
        head = f"[{i}] {node.id.location()} ({node.id.file_path}, lines {node.span[0]}-{node.span[1]})"
        blocks.append(f"{head}\n```java\n{node.body_text}\n```")
    return "\n\n".join(blocks)


def _report_prompt(
    report: CrashReport,
    trace: StackTrace | None,
    methods: list[MethodNode],
    history_summary: str | None,
) -> str:
    template = _template("report_prompt.txt")
    if history_summary:
        history_clause = ", plus the interaction history of an execution-path analysis"
        history_section = f"\n### Execution analysis history\n{history_summary}\n"
    else:
        history_clause = ""
        history_section = ""
    return template.format(
        report_id=report.id,
        title=report.title,
        description=report.description.rstrip(),
        stack_trace=_render_trace(trace),
        method_context=_render_methods(methods),
        history_clause=history_clause,
        history_section=history_section,
    )


def _structured_reply(
    client: ChatClient, prompt: str, params: ChatParams, required: list[str],
    allow_retry: bool = True,
) -> tuple[dict, int]:
    """One completion plus at most one reformat retry; returns (doc, completions)."""
    messages = [{"role": "user", "content": prompt}]
    response = client.complete(messages, params)
    try:
        return parse_structured(response, required), 1
    except StructuredOutputError as first:
        if not allow_retry:
            raise EnhancementError(f"structured output failed: {first}") from first
        retry_messages = messages + [
            {"role": "assistant", "content": response},
            {
                "role": "user",
                "content": "Your reply was not a single valid JSON object with the required "
                "fields. Reply again with exactly one JSON object in the requested format.",
            },
        ]
        retry = client.complete(retry_messages, params)
        try:
            return parse_structured(retry, required), 2
        except StructuredOutputError as second:
            raise EnhancementError(f"structured output failed after retry: {second}") from first


def _coerce_report(report_id: str, provenance: str, doc: dict, evidence: list[MethodId],
                   fallback_locations: list[str]) -> EnhancedReport:
    def text_field(name: str) -> str:
        value = doc.get(name)
        if isinstance(value, list):
            value = "\n".join(str(v) for v in value)
        value = str(value).strip() if value is not None else ""
        return value or SENTINEL

    def list_field(name: str) -> list[str]:
        value = doc.get(name)
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list):
            return [SENTINEL]
        cleaned = [str(v).strip() for v in value if str(v).strip()]
        return cleaned or [SENTINEL]

    locations = [
        loc for loc in list_field("problem_location") if normalize_location(loc) is not None
    ]
    if not locations:
        locations = [loc for loc in fallback_locations if normalize_location(loc) is not None]
    if not locations:
        locations = [f"{SENTINEL}#{SENTINEL}"]

    enhanced = EnhancedReport(
        report_id=report_id,
        provenance=provenance,
        root_cause=text_field("root_cause"),
        steps_to_reproduce=list_field("steps_to_reproduce"),
        problem_location=locations,
        repair_suggestion=text_field("repair_suggestion"),
        possible_fix=text_field("possible_fix"),
        evidence=sorted(m.key() for m in evidence),
    )
    enhanced.validate()
    return enhanced


def enhance_direct(
    report: CrashReport,
    trace: StackTrace | None,
    store: GraphStore,
    client: ChatClient,
    params: ChatParams,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
) -> EnhancedReport:
    """Single-shot enhancement: one completion over report, trace, and the
    stack-trace methods that fit the context budget."""
    methods = select_frame_methods(trace, store) if trace is not None else []
    overhead = estimate_tokens(_report_prompt(report, trace, [], None))
    budget = context_budget - params.max_output_tokens
    trunc = truncate_for_budget(methods, budget, overhead_tokens=overhead)
    prompt = _report_prompt(report, trace, trunc.methods, None)
    doc, _ = _structured_reply(client, prompt, params, list(REPORT_FIELDS))
    return _coerce_report(
        report.id,
        "direct",
        doc,
        evidence=[m.id for m in trunc.methods],
        fallback_locations=[m.id.location() for m in trunc.methods],
    )


# ---------------------------------------------------------------------------
# Agentic pipeline


@dataclass
class AgentBudget:
    max_steps: int = 12
    max_method_bytes: int = 20_000
    token_budget: int = DEFAULT_CONTEXT_BUDGET
    stall_steps: int = 2

    def __post_init__(self) -> None:
        if self.max_steps < 0 or self.max_method_bytes <= 0 or self.token_budget <= 0:
            raise ValueError("agent budget values must be positive")


@dataclass
class HistoryEntry:
    step: int
    action: str  # retrieve | reason | conclude
    method: str | None
    note: str


@dataclass
class InteractionHistory:
    entries: list[HistoryEntry] = field(default_factory=list)

    def add(self, action: str, method: str | None, note: str) -> HistoryEntry:
        if self.entries and self.entries[-1].action == "conclude":
            raise EnhancementError("history already concluded")
        entry = HistoryEntry(step=len(self.entries) + 1, action=action, method=method, note=note)
        self.entries.append(entry)
        return entry

    def render(self) -> str:
        if not self.entries:
            return "(none yet)"
        lines = []
        for e in self.entries:
            target = f" {e.method}" if e.method else ""
            lines.append(f"{e.step}. [{e.action}]{target} {e.note}".rstrip())
        return "\n".join(lines)


@dataclass
class CandidateSet:
    entries: list[tuple[str, str]] = field(default_factory=list)

    def update(self, location: str, note: str) -> bool:
        for i, (existing, old_note) in enumerate(self.entries):
            if existing == location:
                if old_note == note:
                    return False
                self.entries[i] = (location, note)
                return True
        self.entries.append((location, note))
        return True

    def render(self) -> str:
        if not self.entries:
            return "(empty)"
        return "\n".join(f"- {loc}: {note}" for loc, note in self.entries)


@dataclass
class _AgentState:
    trace: StackTrace
    store: GraphStore
    history: InteractionHistory
    candidates: CandidateSet
    visited: list[MethodId]
    frame_methods: list[MethodId]
    completions: int = 0
    stalled_steps: int = 0
    concluded: bool = False
    budget: AgentBudget = field(default_factory=AgentBudget)

    @property
    def current(self) -> MethodId:
        return self.visited[-1]

    def unvisited_frontier(self) -> list[MethodId]:
        seen = set(self.visited)
        frontier: set[MethodId] = set()
        for mid in self.visited:
            frontier.update(self.store.neighbors(mid, "both"))
        frontier.update(self.frame_methods)
        return sorted(frontier - seen)


def _clip_body(node: MethodNode, budget: AgentBudget) -> str:
    body = node.body_text
    if len(body.encode("utf-8")) > budget.max_method_bytes:
        return body.encode("utf-8")[: budget.max_method_bytes].decode("utf-8", errors="ignore")
    return body


def _analyzer_prompt(state: _AgentState) -> str:
    store = state.store
    current = state.current
    node = store.lookup(current)
    seen = set(state.visited)
    callers = [m.location() for m in store.neighbors(current, "callers") if m not in seen]
    callees = [m.location() for m in store.neighbors(current, "callees") if m not in seen]
    frames = [m.location() for m in state.frame_methods if m not in seen]
    return _template("analyzer_prompt.txt").format(
        stack_trace=_render_trace(state.trace),
        history=state.history.render(),
        candidates=state.candidates.render(),
        current_method=current.location(),
        current_body=f"```java\n{_clip_body(node, state.budget)}\n```" if node else "(unavailable)",
        caller_menu=", ".join(callers) or "(none)",
        callee_menu=", ".join(callees) or "(none)",
        frame_menu=", ".join(frames) or "(none)",
    )


def _resolve_request(state: _AgentState, requested: str) -> tuple[MethodId | None, str]:
    """Resolve a requested method against neighbors and frame methods, falling
    back to a whole-index exact-name search (top 3, lexicographic)."""
    store = state.store
    allowed = set(state.unvisited_frontier()) | set(state.visited)
    norm = normalize_location(requested)
    if norm is not None:
        exact = store.find_by_location(f"{norm[0]}#{norm[1]}")
        in_menu = [m for m in exact if m in allowed]
        if in_menu:
            return in_menu[0], "neighbor"
        if exact:
            return exact[0], "index"
    simple = norm[1] if norm is not None else requested.strip()
    by_name = store.find_by_name(simple, limit=3)
    if by_name:
        return by_name[0], "name-search"
    return None, "not-found"


def agent_step(
    state: _AgentState, client: ChatClient, params: ChatParams, allow_retry: bool = True
) -> None:
    """One completion round: retrieve, update candidates, or conclude.

    Malformed replies get one reformat retry (when the step budget has room);
    both completions count against the budget. Requests for visited methods
    are rejected and logged.
    """
    prompt = _analyzer_prompt(state)
    try:
        doc, completions = _structured_reply(
            client, prompt, params, ["action"], allow_retry=allow_retry
        )
    except EnhancementError as exc:
        state.completions += 2 if allow_retry else 1
        state.history.add("reason", None, f"malformed analyzer reply dropped ({exc})")
        state.stalled_steps += 1
        return
    state.completions += completions

    action = str(doc.get("action", "")).strip()
    if action == "conclude":
        root_cause = str(doc.get("root_cause", "")).strip() or SENTINEL
        state.history.add("conclude", None, root_cause)
        state.concluded = True
        return
    if action == "retrieve":
        requested = str(doc.get("method", "")).strip()
        target, how = _resolve_request(state, requested)
        if target is None:
            state.history.add("reason", None, f"requested method not found: {requested}")
            state.stalled_steps += 1
            return
        if target in set(state.visited):
            state.history.add("reason", target.key(), "request rejected: method already visited")
            state.stalled_steps += 1
            return
        state.store.lookup(target)
        state.visited.append(target)
        reason = str(doc.get("reason", "")).strip()
        note = f"retrieved via {how}" + (f": {reason}" if reason else "")
        state.history.add("retrieve", target.key(), note)
        state.stalled_steps = 0
        return
    if action == "update_candidates":
        changed = False
        for entry in doc.get("candidates", []) or []:
            if not isinstance(entry, dict):
                continue
            location = str(entry.get("method", "")).strip()
            if normalize_location(location) is None:
                continue
            changed |= state.candidates.update(location, str(entry.get("note", "")).strip())
        note = str(doc.get("note", "")).strip() or "updated candidate set"
        state.history.add("reason", None, note)
        state.stalled_steps = 0 if changed else state.stalled_steps + 1
        return
    state.history.add("reason", None, f"unrecognized action {action!r}")
    state.stalled_steps += 1


@dataclass
class AgentOutcome:
    analyzed: list[MethodId]
    history: InteractionHistory
    candidates: CandidateSet
    termination: str  # concluded | frontier_exhausted | budget_exhausted | stalled | no_mapped_frames
    completions: int


def run_agent(
    report: CrashReport,
    trace: StackTrace,
    store: GraphStore,
    client: ChatClient,
    budget: AgentBudget,
    params: ChatParams,
) -> AgentOutcome:
    """Iterate agent steps from the topmost mapped frame until the agent
    concludes, the reachable frontier is exhausted, the step budget runs out,
    or consecutive unproductive steps hit the stall rule."""
    history = InteractionHistory()
    candidates = CandidateSet()
    frame_mids: list[MethodId] = []
    seen: set[MethodId] = set()
    for frame in trace.frames:
        mid = map_frame(frame, store.graph)
        if mid is not None and mid not in seen:
            seen.add(mid)
            frame_mids.append(mid)
    if not frame_mids:
        return AgentOutcome([], history, candidates, "no_mapped_frames", 0)

    state = _AgentState(
        trace=trace,
        store=store,
        history=history,
        candidates=candidates,
        visited=[frame_mids[0]],
        frame_methods=frame_mids,
        budget=budget,
    )
    store.lookup(state.current)

    termination: str | None = None
    while termination is None:
        if state.concluded:
            termination = "concluded"
        elif not state.unvisited_frontier() and state.stalled_steps >= 1:
            termination = "frontier_exhausted"
        elif state.stalled_steps >= budget.stall_steps:
            termination = "stalled"
        elif state.completions >= budget.max_steps:
            termination = "budget_exhausted"
        else:
            remaining = budget.max_steps - state.completions
            agent_step(state, client, params, allow_retry=remaining >= 2)

    return AgentOutcome(
        analyzed=list(state.visited),
        history=history,
        candidates=candidates,
        termination=termination,
        completions=state.completions,
    )


def _history_summary(outcome: AgentOutcome) -> str:
    parts = [outcome.history.render()]
    if outcome.candidates.entries:
        parts.append("Candidate suspects:\n" + outcome.candidates.render())
    parts.append(f"Termination: {outcome.termination}")
    return "\n".join(parts)


def enhance_agentic(
    report: CrashReport,
    trace: StackTrace,
    store: GraphStore,
    client: ChatClient,
    budget: AgentBudget,
    params: ChatParams,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
) -> tuple[EnhancedReport, AgentOutcome]:
    """Agentic enhancement: traversal first, then one report completion over
    the analyzed methods and the interaction history."""
    outcome = run_agent(report, trace, store, client, budget, params)
    nodes = [store.lookup(mid) for mid in outcome.analyzed]
    methods = [n for n in nodes if n is not None]
    summary = _history_summary(outcome)
    overhead = estimate_tokens(_report_prompt(report, trace, [], summary))
    trunc = truncate_for_budget(methods, context_budget - params.max_output_tokens, overhead)
    prompt = _report_prompt(report, trace, trunc.methods, summary)
    doc, _ = _structured_reply(client, prompt, params, list(REPORT_FIELDS))
    enhanced = _coerce_report(
        report.id,
        "agentic",
        doc,
        evidence=outcome.analyzed,
        fallback_locations=[m.location() for m in outcome.analyzed],
    )
    return enhanced, outcome


# ---------------------------------------------------------------------------
# Human-readable rendering


def render_page(report: CrashReport, enhanced: EnhancedReport) -> str:
    """Markdown page mirroring the enhanced-report layout."""
    steps = "\n".join(f"{i}. {s}" for i, s in enumerate(enhanced.steps_to_reproduce, 1))
    locations = "\n".join(f"- `{loc}`" for loc in enhanced.problem_location)
    evidence = "\n".join(f"- `{key}`" for key in enhanced.evidence) or "- (none)"
    return (
        f"# {report.id}: {report.title}\n\n"
        f"*Enhanced by the {enhanced.provenance} pipeline.*\n\n"
        f"## Original description\n\n```\n{report.description.rstrip()}\n```\n\n"
        f"## Root Cause\n\n{enhanced.root_cause}\n\n"
        f"## Steps To Reproduce\n\n{steps}\n\n"
        f"## Problem Location\n\n{locations}\n\n"
        f"## Repair Suggestion\n\n{enhanced.repair_suggestion}\n\n"
        f"## Possible Fix\n\n```java\n{enhanced.possible_fix}\n```\n\n"
        f"## Evidence (methods consulted)\n\n{evidence}\n"
    )
