"""Scoring: method-level localization, BM25 retrieval baseline, CodeBLEU
similarity between suggested and developer fixes, and field-presence audits.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import jast
from .javalex import JAVA_KEYWORDS, JavaLexError, tokenize
from .jindex import MethodId, MethodNode

__all__ = [
    "LocalizationResult",
    "RankedList",
    "CodeBleuScore",
    "EvaluationError",
    "normalize_location",
    "match_localization",
    "accuracy",
    "code_tokens",
    "split_identifiers",
    "method_documents",
    "bm25_term_score",
    "bm25_rank",
    "topn_recall",
    "codebleu",
    "mean_codebleu",
    "audit_raw_description",
    "audit_enhanced",
    "AUDIT_ATTRIBUTES",
]


class EvaluationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Problem-location matching

_ANON_RE = re.compile(r"\$\d[^.#]*")
_PARAMS_RE = re.compile(r"\(.*\)\s*$")


def _normalize_pair(class_fqn: str, method_name: str) -> tuple[str, str]:
    return _ANON_RE.sub("", class_fqn), method_name


def normalize_location(location: str) -> tuple[str, str] | None:
    """Parse a predicted location string into (class_fqn, method_name).

    Accepts `a.b.C#m`, `a.b.C.m`, and trailing parameter lists, which are
    stripped (ground-truth matching ignores overload qualification).
    Anonymous-class suffixes (`$1`) are stripped from the class part.
    """
    s = _PARAMS_RE.sub("", location.strip())
    if not s:
        return None
    if "#" in s:
        class_fqn, _, method = s.partition("#")
    elif "." in s:
        class_fqn, _, method = s.rpartition(".")
    else:
        return None
    class_fqn = class_fqn.strip()
    method = method.strip()
    if not class_fqn or not method:
        return None
    if not re.fullmatch(r"[\w$.]+", class_fqn) or not re.fullmatch(r"[\w$<>]+", method):
        return None
    return _normalize_pair(class_fqn, method)


@dataclass
class LocalizationResult:
    report_id: str
    predicted: list[str]
    ground_truth: set[MethodId]
    matched: bool
    matched_on: MethodId | None
    skipped_predictions: int = 0


def match_localization(
    predicted: list[str], ground_truth: set[MethodId], report_id: str = ""
) -> LocalizationResult:
    """First prediction whose normalized (class, method) hits the ground truth wins."""
    gt_by_norm: dict[tuple[str, str], MethodId] = {}
    for mid in sorted(ground_truth):
        gt_by_norm.setdefault(_normalize_pair(mid.class_fqn, mid.method_name), mid)
    skipped = 0
    for location in predicted:
        norm = normalize_location(location)
        if norm is None:
            skipped += 1
            continue
        hit = gt_by_norm.get(norm)
        if hit is not None:
            return LocalizationResult(
                report_id=report_id,
                predicted=list(predicted),
                ground_truth=set(ground_truth),
                matched=True,
                matched_on=hit,
                skipped_predictions=skipped,
            )
    return LocalizationResult(
        report_id=report_id,
        predicted=list(predicted),
        ground_truth=set(ground_truth),
        matched=False,
        matched_on=None,
        skipped_predictions=skipped,
    )


def accuracy(results: list[LocalizationResult]) -> float:
    """Percentage of reports with a localization match."""
    if not results:
        raise EvaluationError("accuracy over an empty result list")
    matched = sum(1 for r in results if r.matched)
    return 100.0 * matched / len(results)


# ---------------------------------------------------------------------------
# BM25 retrieval baseline

_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


def split_identifiers(token: str) -> list[str]:
    parts: list[str] = []
    for chunk in token.replace("_", " ").split():
        parts.extend(p for p in _CAMEL_RE.split(chunk) if p)
    return parts


def code_tokens(text: str) -> list[str]:
    """BM25 tokenization: camelCase/underscore split, lowercased, alphanumeric."""
    out: list[str] = []
    for raw in re.findall(r"[A-Za-z0-9_]+", text):
        for part in split_identifiers(raw):
            part = part.lower()
            if part.isalnum():
                out.append(part)
    return out


def method_documents(nodes: Mapping[MethodId, MethodNode]) -> dict[MethodId, str]:
    """Retrieval documents: method body plus its identifiers."""
    return {
        mid: f"{node.body_text}\n{mid.class_fqn} {mid.method_name}"
        for mid, node in nodes.items()
    }


@dataclass
class RankedList:
    query_report_id: str
    ranked: list[tuple[MethodId, float]]

    def top(self, n: int) -> list[MethodId]:
        return [mid for mid, _ in self.ranked[:n]]


def bm25_term_score(tf: int, df: int, n_docs: int, dl: int, avgdl: float, k1: float, b: float) -> float:
    """Okapi BM25 contribution of one term occurrence count within one document."""
    if tf <= 0 or df <= 0:
        return 0.0
    idf = math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)
    denom = tf + k1 * (1.0 - b + b * (dl / avgdl if avgdl > 0 else 0.0))
    return idf * tf * (k1 + 1.0) / denom


def bm25_rank(
    query: str,
    documents: Mapping[MethodId, str],
    k1: float = 1.2,
    b: float = 0.75,
    query_report_id: str = "",
) -> RankedList:
    """Full BM25 ranking of `documents` for `query`; ties break lexicographically."""
    if not documents:
        raise EvaluationError("bm25 over an empty corpus")
    doc_terms = {mid: Counter(code_tokens(text)) for mid, text in documents.items()}
    doc_lens = {mid: sum(c.values()) for mid, c in doc_terms.items()}
    n_docs = len(doc_terms)
    avgdl = sum(doc_lens.values()) / n_docs
    query_terms = set(code_tokens(query))
    df = {
        term: sum(1 for c in doc_terms.values() if term in c)
        for term in query_terms
    }
    scored: list[tuple[MethodId, float]] = []
    for mid in sorted(doc_terms):
        score = 0.0
        for term in query_terms:
            score += bm25_term_score(
                doc_terms[mid].get(term, 0), df[term], n_docs, doc_lens[mid], avgdl, k1, b
            )
        scored.append((mid, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return RankedList(query_report_id=query_report_id, ranked=scored)


def _gt_norms(ground_truth: Iterable[MethodId]) -> set[tuple[str, str]]:
    return {_normalize_pair(m.class_fqn, m.method_name) for m in ground_truth}


def topn_recall(
    rankings: list[RankedList],
    ground_truths: Mapping[str, set[MethodId]],
    n: int,
) -> float:
    """Percentage of reports with a ground-truth method in the top n."""
    if n < 1:
        raise EvaluationError("topn_recall needs n >= 1")
    if not rankings:
        raise EvaluationError("topn_recall over an empty ranking list")
    hits = 0
    for ranking in rankings:
        gt = _gt_norms(ground_truths.get(ranking.query_report_id, set()))
        top = {
            _normalize_pair(mid.class_fqn, mid.method_name) for mid in ranking.top(n)
        }
        if gt & top:
            hits += 1
    return 100.0 * hits / len(rankings)


# ---------------------------------------------------------------------------
# CodeBLEU

KEYWORD_WEIGHT = 4.0
_FALLBACK_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def _metric_tokens(text: str) -> list[str]:
    try:
        return [t.text for t in tokenize(text)]
    except JavaLexError:
        return _FALLBACK_TOKEN_RE.findall(text)


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _token_weight(token: str) -> float:
    return KEYWORD_WEIGHT if token in JAVA_KEYWORDS else 1.0


def _ngram_weight(gram: tuple[str, ...]) -> float:
    return sum(_token_weight(t) for t in gram)


def _smoothed_bleu(hyp: list[str], ref: list[str], weighted: bool) -> float:
    """4-gram precision, geometric mean; add-one smoothing on orders 2..4,
    standard brevity penalty. Zero unigram precision means zero BLEU."""
    if not hyp or not ref:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        hyp_counts = _ngram_counts(hyp, n)
        ref_counts = _ngram_counts(ref, n)
        if weighted:
            matches = sum(
                _ngram_weight(g) * min(c, ref_counts.get(g, 0)) for g, c in hyp_counts.items()
            )
            total = sum(_ngram_weight(g) * c for g, c in hyp_counts.items())
        else:
            matches = float(sum(min(c, ref_counts.get(g, 0)) for g, c in hyp_counts.items()))
            total = float(sum(hyp_counts.values()))
        if n == 1:
            if matches == 0:
                return 0.0
            precision = matches / total
        else:
            precision = (matches + 1.0) / (total + 1.0)
        log_sum += math.log(precision)
    brevity = 1.0 if len(hyp) >= len(ref) else math.exp(1.0 - len(ref) / len(hyp))
    return brevity * math.exp(log_sum / 4.0)


def _syntax_match(hyp: str, ref: str) -> tuple[float | None, list[str]]:
    flags: list[str] = []
    try:
        ref_sexps = Counter(jast.subtree_sexps(jast.parse_snippet(ref)))
    except jast.SnippetParseError:
        return None, ["reference_unparseable"]
    try:
        hyp_sexps = Counter(jast.subtree_sexps(jast.parse_snippet(hyp)))
    except jast.SnippetParseError:
        return 0.0, ["hypothesis_unparseable"]
    total = sum(ref_sexps.values())
    matched = sum(min(c, hyp_sexps.get(s, 0)) for s, c in ref_sexps.items())
    return matched / total, flags


def _dataflow_match(hyp: str, ref: str) -> tuple[float | None, list[str]]:
    try:
        ref_edges = Counter(jast.dataflow_edges(jast.parse_snippet(ref)))
    except jast.SnippetParseError:
        return None, ["reference_unparseable"]
    if not ref_edges:
        return None, ["reference_has_no_dataflow"]
    try:
        hyp_edges = Counter(jast.dataflow_edges(jast.parse_snippet(hyp)))
    except jast.SnippetParseError:
        return 0.0, ["hypothesis_unparseable"]
    total = sum(ref_edges.values())
    matched = sum(min(c, hyp_edges.get(e, 0)) for e, c in ref_edges.items())
    return matched / total, []


@dataclass
class CodeBleuScore:
    ngram: float
    weighted_ngram: float
    syntax: float | None
    dataflow: float | None
    combined: float
    weights: tuple[float, float, float, float]
    flags: list[str] = field(default_factory=list)


def codebleu(
    hypothesis: str,
    reference: str,
    weights: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25),
) -> CodeBleuScore:
    """Composite code similarity: smoothed 4-gram precision, keyword-weighted
    n-gram (Java keywords weigh 4), syntax subtree match, and def-use dataflow
    match. Components the reference cannot support (unparseable, or no
    dataflow edges) are dropped and the remaining weights renormalized.
    An empty hypothesis scores 0 on every component.
    """
    flags: list[str] = []
    hyp_tokens = _metric_tokens(hypothesis)
    ref_tokens = _metric_tokens(reference)
    if not hyp_tokens:
        return CodeBleuScore(0.0, 0.0, 0.0, 0.0, 0.0, weights, ["empty_hypothesis"])
    if not ref_tokens:
        return CodeBleuScore(0.0, 0.0, 0.0, 0.0, 0.0, weights, ["empty_reference"])

    ngram = _smoothed_bleu(hyp_tokens, ref_tokens, weighted=False)
    weighted_ngram = _smoothed_bleu(hyp_tokens, ref_tokens, weighted=True)
    syntax, syn_flags = _syntax_match(hypothesis, reference)
    flags.extend(syn_flags)
    dataflow, df_flags = _dataflow_match(hypothesis, reference)
    flags.extend(f for f in df_flags if f not in flags)

    present: list[tuple[float, float]] = [(weights[0], ngram), (weights[1], weighted_ngram)]
    if syntax is not None:
        present.append((weights[2], syntax))
    if dataflow is not None:
        present.append((weights[3], dataflow))
    weight_sum = sum(w for w, _ in present)
    combined = sum(w * c for w, c in present) / weight_sum if weight_sum else 0.0
    return CodeBleuScore(
        ngram=ngram,
        weighted_ngram=weighted_ngram,
        syntax=syntax,
        dataflow=dataflow,
        combined=combined,
        weights=weights,
        flags=sorted(set(flags)),
    )


def mean_codebleu(scores_by_system: Mapping[str, list[float]]) -> dict[str, float]:
    """Per-system mean (percent) over localized reports plus the pooled
    overall average; systems with no localized reports report 0.00."""
    table: dict[str, float] = {}
    pooled: list[float] = []
    for system in sorted(scores_by_system):
        scores = scores_by_system[system]
        table[system] = 100.0 * sum(scores) / len(scores) if scores else 0.0
        pooled.extend(scores)
    table["Overall Average"] = 100.0 * sum(pooled) / len(pooled) if pooled else 0.0
    return table


# ---------------------------------------------------------------------------
# Field-presence audit

AUDIT_ATTRIBUTES = ("steps", "root_cause", "component", "fix")

_TRACE_LINE_RE = re.compile(
    r"^\s*(at\s+\S|\.\.\.\s*\d+\s+more|Caused by:|\d{4}-\d{2}-\d{2}[ T]\d{2}:"
    r"|[\w$.\[\]]*(?:Exception|Error)[\w$]*(:|\s*$))"
)
_STEPS_RE = re.compile(
    r"(?im)(^|\b)(steps?\s+to\s+reproduce|to\s+reproduce|repro\s+steps?|how\s+to\s+reproduce)\b|^\s*\d+[.)]\s+\w"
)
_ROOT_CAUSE_RE = re.compile(
    r"(?i)\b(root\s+cause|because|due\s+to|caused\s+by|the\s+(cause|reason|problem)\s+is"
    r"|turns\s+out|results\s+from|race\s+condition|leak|never\s+\w+(ed|s)\b)"
)
_COMPONENT_CAMEL_RE = re.compile(r"\b[A-Z][a-z0-9]+(?:[A-Z][a-z0-9]*)+\b")
_COMPONENT_FILE_RE = re.compile(r"\b[\w$]+\.java\b")
_COMPONENT_FQN_RE = re.compile(r"\b[a-z][\w]*(?:\.[a-z][\w]*)+\.[A-Z][\w$]*\b")
_COMPONENT_METHOD_RE = re.compile(r"\b[a-z][A-Za-z0-9]+\(\)")
_FIX_RE = re.compile(
    r"(?i)(?:\b(?:should\s+(?:be|add|call|check|use|guard|initialize|not|have|throw|interrupt|switch|close|validate|move|route|bump|make)"
    r"|we\s+(?:can|could|should)|proposed\s+fix|suggested\s+fix|work(?:s|ed)?\s*-?\s*around|patch"
    r"|fix\s+(?:is|would|could)|fix(?:es|ed)?\s+(?:it|this|the)|fixed\s+by|needs?\s+to\s+be)\b"
    r"|fix\s*:)"
)


def _strip_trace_lines(text: str) -> str:
    kept = [line for line in text.splitlines() if not _TRACE_LINE_RE.match(line)]
    return "\n".join(kept)


def _mentions_component(text: str) -> bool:
    if _COMPONENT_FILE_RE.search(text) or _COMPONENT_FQN_RE.search(text):
        return True
    if _COMPONENT_METHOD_RE.search(text):
        return True
    for token in _COMPONENT_CAMEL_RE.findall(text):
        if "Exception" not in token and "Error" not in token:
            return True
    return False


def audit_raw_description(text: str) -> dict[str, bool]:
    """Keyword-heuristic presence vector over a developer-written description.

    Stack-trace lines are stripped first so a bare trace does not count as a
    component mention or a root-cause statement. This is a documented
    heuristic, not a reproduction of manual annotation.
    """
    prose = _strip_trace_lines(text)
    return {
        "steps": bool(_STEPS_RE.search(prose)),
        "root_cause": bool(_ROOT_CAUSE_RE.search(prose)),
        "component": _mentions_component(prose),
        "fix": bool(_FIX_RE.search(prose)),
    }


SENTINEL = "unknown"


def audit_enhanced(fields: Mapping[str, object]) -> dict[str, bool]:
    """Structural presence vector for an enhanced report's diagnostic fields."""

    def filled(value: object) -> bool:
        if isinstance(value, str):
            return bool(value.strip()) and value.strip().lower() != SENTINEL
        if isinstance(value, (list, tuple)):
            return any(filled(v) for v in value)
        return value is not None

    return {
        "steps": filled(fields.get("steps_to_reproduce")),
        "root_cause": filled(fields.get("root_cause")),
        "component": filled(fields.get("problem_location")),
        "fix": filled(fields.get("possible_fix")) or filled(fields.get("repair_suggestion")),
    }
