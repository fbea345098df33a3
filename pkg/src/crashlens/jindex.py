"""Java source indexing and static call-graph construction.

A token-stream scanner (no type inference, no bytecode) extracts method and
constructor declarations with their full bodies and the invocation sites
inside them. Call edges are resolved by callee name and arity, narrowed by a
receiver-type hint, then same-class, then same-package preference; when
several candidates survive, edges go to all of them. Constructor sites
require the created type's simple name to match. Anonymous, lambda, and
local-class bodies fold into the enclosing indexed method.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .ingest import StackFrame
from .javalex import (
    Comment,
    JavaLexError,
    MODIFIER_KEYWORDS,
    PRIMITIVE_TYPES,
    Token,
    tokenize_with_comments,
)

logger = logging.getLogger(__name__)

__all__ = [
    "MethodId",
    "MethodNode",
    "InvocationSite",
    "FileParse",
    "CallGraph",
    "parse_file",
    "build_call_graph",
    "index_project",
    "map_frame",
]


@dataclass(frozen=True, order=True)
class MethodId:
    class_fqn: str
    method_name: str
    arity: int
    file_path: str

    @property
    def simple_class_name(self) -> str:
        tail = self.class_fqn.rsplit(".", 1)[-1]
        return tail.rsplit("$", 1)[-1]

    @property
    def package(self) -> str:
        prefix = self.class_fqn.rsplit(".", 1)
        return prefix[0] if len(prefix) == 2 else ""

    def location(self) -> str:
        """Human-facing identity string: class_fqn#method_name."""
        return f"{self.class_fqn}#{self.method_name}"

    def key(self) -> str:
        """Full stable identity, unique within one snapshot index."""
        return f"{self.class_fqn}#{self.method_name}/{self.arity}@{self.file_path}"

    @staticmethod
    def from_key(key: str) -> "MethodId":
        head, _, file_path = key.partition("@")
        ident, _, arity = head.partition("/")
        class_fqn, _, method_name = ident.partition("#")
        return MethodId(class_fqn, method_name, int(arity), file_path)


@dataclass
class MethodNode:
    id: MethodId
    body_text: str
    span: tuple[int, int]
    doc_text: str | None = None


@dataclass(frozen=True)
class InvocationSite:
    caller: MethodId
    callee_name: str
    arg_count: int
    receiver_hint: str | None
    line: int
    is_constructor: bool = False
    same_class_only: bool = False  # this(...) constructor chaining


@dataclass
class FileParse:
    path: str
    methods: list[MethodNode] = field(default_factory=list)
    sites: list[InvocationSite] = field(default_factory=list)
    varargs: set[MethodId] = field(default_factory=set)
    tallies: dict[str, int] = field(default_factory=dict)
    failed: bool = False
    error: str | None = None


@dataclass
class CallGraph:
    nodes: dict[MethodId, MethodNode]
    edges: tuple[tuple[MethodId, MethodId], ...]
    tallies: dict[str, int] = field(default_factory=dict)

    @property
    def edge_set(self) -> set[tuple[MethodId, MethodId]]:
        return set(self.edges)

    def callees(self, mid: MethodId) -> list[MethodId]:
        return sorted({v for (u, v) in self.edges if u == mid})

    def callers(self, mid: MethodId) -> list[MethodId]:
        return sorted({u for (u, v) in self.edges if v == mid})


class _ScanError(ValueError):
    pass


_TYPE_KEYWORDS = ("class", "interface", "enum")
_ANGLE_OK = frozenset([".", ",", "?", "extends", "super", "&", "[", "]", "@"])


class _Scanner:
    """Single-file declaration/invocation scanner over the token stream."""

    def __init__(self, path: str, source: str, toks: list[Token], comments: list[Comment]):
        self.path = path
        self.lines = source.splitlines()
        self.toks = toks
        self.comments = comments
        self.n = len(toks)
        self.package = ""
        self.methods: list[MethodNode] = []
        self.sites: list[InvocationSite] = []
        self.varargs: set[MethodId] = set()
        self.tallies: dict[str, int] = {}

    def tally(self, name: str, inc: int = 1) -> None:
        self.tallies[name] = self.tallies.get(name, 0) + inc

    # -- token helpers ------------------------------------------------------

    def tok(self, i: int) -> Token:
        if i >= self.n:
            raise _ScanError("unexpected end of file")
        return self.toks[i]

    def text(self, i: int) -> str:
        return self.tok(i).text

    def match_brace(self, i: int) -> int:
        """Index of the '}' matching the '{' at i."""
        depth = 0
        while i < self.n:
            t = self.toks[i].text
            if t == "{":
                depth += 1
            elif t == "}":
                depth -= 1
                if depth == 0:
                    return i
            i += 1
        raise _ScanError("unbalanced braces")

    def match_paren(self, i: int) -> int:
        """Index of the ')' matching the '(' at i; tolerates nested braces/brackets."""
        depth = 0
        while i < self.n:
            t = self.toks[i].text
            if t in "([{":
                depth += 1
            elif t in ")]}":
                depth -= 1
                if depth == 0:
                    if t != ")":
                        raise _ScanError("mismatched bracket")
                    return i
            i += 1
        raise _ScanError("unbalanced parentheses")

    def match_angles(self, i: int) -> int | None:
        """Index just past a type-argument list opening at i, or None if it does not parse as one."""
        depth = 0
        while i < self.n:
            t = self.toks[i]
            if t.text == "<":
                depth += 1
            elif t.text in (">", ">>", ">>>"):
                depth -= len(t.text)
                if depth <= 0:
                    return i + 1 if depth == 0 else None
            elif t.kind in ("ident",) or t.text in _ANGLE_OK or t.text in PRIMITIVE_TYPES:
                pass
            else:
                return None
            i += 1
        return None

    def skip_annotation(self, i: int) -> int:
        """i at '@'. Skip '@qualified.Name' and optional balanced argument list."""
        i += 1
        if self.text(i) == "interface":
            return i  # annotation type declaration, caller handles
        if self.tok(i).kind not in ("ident", "keyword"):
            raise _ScanError("malformed annotation")
        i += 1
        while i < self.n and self.text(i) == "." :
            i += 2
        if i < self.n and self.text(i) == "(":
            i = self.match_paren(i) + 1
        return i

    def skip_type(self, i: int) -> int:
        t = self.tok(i)
        if t.text in PRIMITIVE_TYPES:
            i += 1
        elif t.kind == "ident":
            i += 1
            while i + 1 < self.n and self.text(i) == "." and self.tok(i + 1).kind in ("ident", "keyword"):
                i += 2
        else:
            raise _ScanError(f"expected type, got {t.text!r} at line {t.line}")
        if i < self.n and self.text(i) == "<":
            closed = self.match_angles(i)
            if closed is None:
                raise _ScanError(f"malformed type arguments at line {self.tok(i).line}")
            i = closed
        while i + 1 < self.n and self.text(i) == "[" and self.text(i + 1) == "]":
            i += 2
        return i

    # -- file structure ------------------------------------------------------

    def run(self) -> None:
        i = 0
        if i < self.n and self.text(i) == "package":
            j = i + 1
            parts = []
            while self.text(j) != ";":
                if self.tok(j).kind == "ident":
                    parts.append(self.text(j))
                j += 1
            self.package = ".".join(parts)
            i = j + 1
        while i < self.n:
            if self.text(i) == "import":
                while self.text(i) != ";":
                    i += 1
                i += 1
                continue
            i = self.scan_type_decl(i, outer=None)

    def scan_type_decl(self, i: int, outer: str | None) -> int:
        """Scan one top-level or nested type declaration starting at its first modifier/annotation."""
        while i < self.n:
            t = self.tok(i)
            if t.text == "@":
                nxt = self.skip_annotation(i)
                if self.text(nxt) == "interface":
                    i = nxt  # @interface Foo
                    break
                i = nxt
            elif t.text in MODIFIER_KEYWORDS or t.text == "sealed":
                i += 1
            elif t.text in _TYPE_KEYWORDS or t.text == "interface":
                break
            elif t.text == "record" and i + 1 < self.n and self.tok(i + 1).kind == "ident":
                break
            elif t.text == ";":
                return i + 1
            else:
                raise _ScanError(f"expected type declaration, got {t.text!r} at line {t.line}")
        kind = self.text(i)
        name = self.text(i + 1)
        i += 2
        fqn = f"{outer}${name}" if outer else (f"{self.package}.{name}" if self.package else name)
        # Header: type params, record components, extends/implements lists.
        while self.text(i) != "{":
            t = self.text(i)
            if t == "<":
                closed = self.match_angles(i)
                if closed is None:
                    raise _ScanError(f"malformed type parameters at line {self.tok(i).line}")
                i = closed
            elif t == "(":
                i = self.match_paren(i) + 1
            else:
                i += 1
        if kind == "enum":
            return self.scan_enum_body(i, fqn, name)
        return self.scan_type_body(i, fqn, name)

    def body_end(self, open_idx: int) -> int:
        """Matching '}' for a type body; on unbalanced input scan to EOF so
        members declared before the breakage are still recovered."""
        try:
            return self.match_brace(open_idx)
        except _ScanError:
            return self.n

    def scan_enum_body(self, i: int, fqn: str, simple: str) -> int:
        """i at '{'. Skip the constants section, then scan members."""
        end = self.body_end(i)
        i += 1
        while i < end:
            t = self.text(i)
            if t == "@":
                i = self.skip_annotation(i)
            elif t == ",":
                i += 1
            elif t == ";":
                i += 1
                break
            elif t == "}":
                break
            elif self.tok(i).kind == "ident":
                i += 1
                if i < end and self.text(i) == "(":
                    close = self.match_paren(i)
                    self.tally("enum_constant_sites", self.count_call_shapes(i + 1, close))
                    i = close + 1
                if i < end and self.text(i) == "{":
                    body_end = self.match_brace(i)
                    self.tally("enum_body_members_skipped")
                    i = body_end + 1
            else:
                raise _ScanError(f"unexpected token {t!r} in enum constants at line {self.tok(i).line}")
        while i < end:
            i = self.scan_member(i, fqn, simple)
        return end + 1

    def scan_type_body(self, i: int, fqn: str, simple: str) -> int:
        end = self.body_end(i)
        i += 1
        while i < end:
            i = self.scan_member(i, fqn, simple)
        return end + 1

    def scan_member(self, i: int, fqn: str, simple: str) -> int:
        start = i
        while i < self.n:
            t = self.tok(i)
            if t.text == "}":
                return i + 1
            if t.text == ";":
                return i + 1
            if t.text == "@":
                nxt = self.skip_annotation(i)
                if self.text(nxt) == "interface":
                    return self.scan_type_decl(start, outer=fqn)
                i = nxt
                continue
            if t.text in MODIFIER_KEYWORDS or t.text in ("sealed",):
                i += 1
                continue
            if t.text == "non":  # non-sealed lexes as ident/punct run; tolerate
                i += 1
                continue
            if t.text == "<":
                closed = self.match_angles(i)
                if closed is None:
                    raise _ScanError(f"malformed type parameters at line {t.line}")
                i = closed
                continue
            break
        t = self.tok(i)
        if t.text in _TYPE_KEYWORDS or t.text == "interface" or (
            t.text == "record" and i + 1 < self.n and self.tok(i + 1).kind == "ident"
        ):
            return self.scan_type_decl(start, outer=fqn)
        if t.text == "{":
            # Static or instance initializer block: sites are not attributed
            # to any method node, only tallied.
            block_end = self.match_brace(i)
            self.tally("initializer_sites", self.count_call_shapes(i + 1, block_end))
            return block_end + 1
        if t.kind == "ident" and t.text == simple and self.text(i + 1) == "(":
            return self.finish_callable(start, i, fqn, simple, "<init>")
        type_end = self.skip_type(i)
        name_tok = self.tok(type_end)
        if name_tok.kind != "ident":
            raise _ScanError(f"expected member name at line {name_tok.line}")
        if self.text(type_end + 1) == "(":
            return self.finish_callable(start, type_end, fqn, simple, name_tok.text)
        # Field declaration: skip to the terminating ';' at this nesting level.
        j = type_end
        depth = 0
        init_lo = None
        while j < self.n:
            tj = self.text(j)
            if tj in "([{":
                depth += 1
            elif tj in ")]}":
                depth -= 1
            elif tj == "=" and depth == 0 and init_lo is None:
                init_lo = j
            elif tj == ";" and depth == 0:
                break
            j += 1
        if init_lo is not None:
            self.tally("initializer_sites", self.count_call_shapes(init_lo, j))
        return j + 1

    def finish_callable(self, start: int, name_idx: int, fqn: str, simple: str, method_name: str) -> int:
        params_close = self.match_paren(name_idx + 1)
        arity, is_varargs = self.count_params(name_idx + 1, params_close)
        mid = MethodId(class_fqn=fqn, method_name=method_name, arity=arity, file_path=self.path)
        i = params_close + 1
        while i < self.n and self.text(i) not in ("{", ";"):
            if self.text(i) == "(":  # annotations in throws clause etc.
                i = self.match_paren(i) + 1
            elif self.text(i) == "<":
                closed = self.match_angles(i)
                i = closed if closed is not None else i + 1
            else:
                i += 1
        if i >= self.n:
            raise _ScanError(f"unterminated declaration of {method_name} at line {self.tok(name_idx).line}")
        if self.text(i) == "{":
            body_end = self.match_brace(i)
            end_idx = body_end
        else:
            end_idx = i  # abstract/interface method or annotation member
        start_line = self.tok(start).line
        end_line = self.tok(end_idx).line
        body_text = "\n".join(self.lines[start_line - 1 : end_line])
        node = MethodNode(
            id=mid,
            body_text=body_text,
            span=(start_line, end_line),
            doc_text=self.doc_before(start_line),
        )
        self.methods.append(node)
        if is_varargs:
            self.varargs.add(mid)
        if self.text(i) == "{":
            self.scan_sites(i + 1, end_idx, mid, simple)
        return end_idx + 1

    def count_params(self, open_idx: int, close_idx: int) -> tuple[int, bool]:
        if close_idx == open_idx + 1:
            return 0, False
        count = 1
        is_varargs = False
        depth = 1
        i = open_idx + 1
        while i < close_idx:
            t = self.text(i)
            if t in "([{":
                depth += 1
            elif t in ")]}":
                depth -= 1
            elif t == "<" and depth == 1:
                closed = self.match_angles(i)
                if closed is not None and closed <= close_idx:
                    i = closed
                    continue
            elif t == "," and depth == 1:
                count += 1
            elif t == "...":
                is_varargs = True
            i += 1
        return count, is_varargs

    def count_call_shapes(self, lo: int, hi: int) -> int:
        """Count `ident (` shapes in a skipped region (diagnostic tally only)."""
        count = 0
        for j in range(lo, min(hi, self.n - 1)):
            if self.toks[j].kind == "ident" and self.text(j + 1) == "(":
                count += 1
        return count

    # -- invocation sites ----------------------------------------------------

    _DECL_PREV = frozenset([">", "]"])

    def scan_sites(self, lo: int, hi: int, caller: MethodId, simple: str) -> None:
        i = lo
        while i < hi:
            t = self.toks[i]
            nxt = self.text(i + 1) if i + 1 < hi else ""
            if t.kind == "keyword" and t.text in ("this", "super") and nxt == "(":
                close = self.match_paren(i + 1)
                argc = self.count_args(i + 1, close)
                if t.text == "this":
                    self.sites.append(
                        InvocationSite(
                            caller=caller,
                            callee_name="<init>",
                            arg_count=argc,
                            receiver_hint=simple,
                            line=t.line,
                            is_constructor=True,
                            same_class_only=True,
                        )
                    )
                else:
                    self.tally("super_constructor_calls")
                i += 2
                continue
            if t.kind == "ident" and nxt == "<":
                # Generic constructor call: new Type<...>(...) (incl. diamond).
                closed = self.match_angles(i + 1)
                if closed is not None and closed < hi and self.text(closed) == "(":
                    before = self.toks[self.chain_start(i) - 1] if self.chain_start(i) > 0 else None
                    if before is not None and before.text == "new":
                        argc = self.count_args(closed, self.match_paren(closed))
                        self.sites.append(
                            InvocationSite(
                                caller=caller,
                                callee_name="<init>",
                                arg_count=argc,
                                receiver_hint=t.text,
                                line=t.line,
                                is_constructor=True,
                            )
                        )
                    i = closed
                    continue
            if t.kind != "ident" or nxt != "(":
                i += 1
                continue
            prev = self.toks[i - 1] if i > 0 else None
            site = self.classify_site(i, prev, caller)
            if site is not None:
                self.sites.append(site)
            i += 1

    def classify_site(self, i: int, prev: Token | None, caller: MethodId) -> InvocationSite | None:
        t = self.toks[i]
        close = self.match_paren(i + 1)
        argc = self.count_args(i + 1, close)
        chain_head = self.chain_start(i)
        before_chain = self.toks[chain_head - 1] if chain_head > 0 else None
        if before_chain is not None and before_chain.text == "@":
            return None  # annotation
        if before_chain is not None and before_chain.text == "new":
            return InvocationSite(
                caller=caller,
                callee_name="<init>",
                arg_count=argc,
                receiver_hint=t.text,
                line=t.line,
                is_constructor=True,
            )
        if prev is None:
            return None
        if prev.text == ".":
            qualifier = self.toks[i - 2] if i >= 2 else None
            hint = None
            if (
                qualifier is not None
                and qualifier.kind == "ident"
                and qualifier.text[:1].isupper()
            ):
                hint = qualifier.text
            return InvocationSite(caller, t.text, argc, hint, t.line)
        if prev.kind == "ident" or prev.text in self._DECL_PREV:
            return None  # declaration shape (or generic-method call, tallied elsewhere)
        if prev.kind == "keyword" and prev.text in PRIMITIVE_TYPES:
            return None
        return InvocationSite(caller, t.text, argc, None, t.line)

    def chain_start(self, i: int) -> int:
        """Walk back over a dotted identifier chain ending at token i."""
        while i >= 2 and self.text(i - 1) == "." and self.toks[i - 2].kind == "ident":
            i -= 2
        return i

    def count_args(self, open_idx: int, close_idx: int) -> int:
        if close_idx == open_idx + 1:
            return 0
        count = 1
        depth = 1
        i = open_idx + 1
        while i < close_idx:
            t = self.text(i)
            if t in "([{":
                depth += 1
            elif t in ")]}":
                depth -= 1
            elif t == "<" and (self.toks[i - 1].kind == "ident" or self.text(i - 1) == "."):
                closed = self.match_angles(i)
                if (
                    closed is not None
                    and closed <= close_idx
                    and self.text(closed) in ("(", ".", "::", ")", ",")
                ):
                    i = closed
                    continue
            elif t == "," and depth == 1:
                count += 1
            i += 1
        return count

    def doc_before(self, start_line: int) -> str | None:
        best = None
        for c in self.comments:
            if c.is_javadoc and c.end_line < start_line:
                if best is None or c.end_line > best.end_line:
                    best = c
        if best is None:
            return None
        between = self.lines[best.end_line : start_line - 1]
        if any(line.strip() for line in between):
            return None
        return best.text


def parse_file(path: str, source: str) -> FileParse:
    """Scan one Java source file into method declarations and invocation sites.

    Lex failures skip the file; structural scan failures keep whatever
    declarations were recovered before the failure point.
    """
    result = FileParse(path=path)
    try:
        toks, comments = tokenize_with_comments(source)
    except JavaLexError as exc:
        logger.warning("skipping %s: %s", path, exc)
        result.failed = True
        result.error = str(exc)
        return result
    scanner = _Scanner(path, source, toks, comments)
    try:
        scanner.run()
    except (_ScanError, IndexError) as exc:
        logger.warning("partial parse of %s: %s", path, exc)
        result.failed = True
        result.error = str(exc)
    result.methods = scanner.methods
    result.sites = scanner.sites
    result.varargs = scanner.varargs
    result.tallies = scanner.tallies
    return result


def _arity_compatible(mid: MethodId, argc: int, varargs: set[MethodId]) -> bool:
    if mid.arity == argc:
        return True
    return mid in varargs and argc >= mid.arity - 1


def build_call_graph(parses: list[FileParse]) -> CallGraph:
    """Merge per-file parses into a deterministic call graph.

    Nodes include every declaration, isolated or not. Sites whose callee
    cannot be resolved are dropped and tallied.
    """
    nodes: dict[MethodId, MethodNode] = {}
    varargs: set[MethodId] = set()
    tallies: dict[str, int] = {}

    def tally(name: str, inc: int = 1) -> None:
        tallies[name] = tallies.get(name, 0) + inc

    for fp in sorted(parses, key=lambda f: f.path):
        for name, count in fp.tallies.items():
            tally(name, count)
        if fp.failed:
            tally("files_failed")
        for m in fp.methods:
            if m.id in nodes:
                tally("overload_collisions")
                continue
            nodes[m.id] = m
        varargs.update(fp.varargs)

    by_name: dict[str, list[MethodId]] = {}
    for mid in sorted(nodes):
        by_name.setdefault(mid.method_name, []).append(mid)

    edges: set[tuple[MethodId, MethodId]] = set()
    for fp in sorted(parses, key=lambda f: f.path):
        for site in fp.sites:
            if site.caller not in nodes:
                tally("sites_without_caller_node")
                continue
            candidates = [
                mid
                for mid in by_name.get(site.callee_name, [])
                if _arity_compatible(mid, site.arg_count, varargs)
            ]
            if site.is_constructor:
                want = site.receiver_hint
                candidates = [m for m in candidates if m.simple_class_name == want]
                if site.same_class_only:
                    candidates = [m for m in candidates if m.class_fqn == site.caller.class_fqn]
            else:
                if site.receiver_hint:
                    narrowed = [m for m in candidates if m.simple_class_name == site.receiver_hint]
                    if narrowed:
                        candidates = narrowed
                if len(candidates) > 1:
                    same_class = [m for m in candidates if m.class_fqn == site.caller.class_fqn]
                    if same_class:
                        candidates = same_class
                if len(candidates) > 1:
                    same_pkg = [m for m in candidates if m.package == site.caller.package]
                    if same_pkg:
                        candidates = same_pkg
            if not candidates:
                tally("unresolved_sites")
                continue
            for target in candidates:
                edges.add((site.caller, target))

    return CallGraph(
        nodes={mid: nodes[mid] for mid in sorted(nodes)},
        edges=tuple(sorted(edges)),
        tallies=tallies,
    )


def index_project(root: str | Path, exclude: tuple[str, ...] = ()) -> CallGraph:
    """Parse every .java file under root (sorted walk) and build the graph."""
    root = Path(root)
    parses = []
    for path in sorted(root.rglob("*.java")):
        rel = path.relative_to(root).as_posix()
        if any(rel.startswith(prefix) for prefix in exclude):
            continue
        source = path.read_bytes().decode("utf-8", errors="replace")
        parses.append(parse_file(rel, source))
    return build_call_graph(parses)


_ANON_SEGMENT_RE = re.compile(r"\$\d.*$")


def _normalize_anonymous(fqn: str) -> str:
    return _ANON_SEGMENT_RE.sub("", fqn)


def map_frame(frame: StackFrame, graph: CallGraph) -> MethodId | None:
    """Map one stack frame to its indexed method.

    Prefers a span-containing match in the frame's file, then any
    (class_fqn, method_name) match, then the same with anonymous-class
    suffixes stripped from the frame's class. Absent when nothing matches.
    """
    exact = [
        mid
        for mid in graph.nodes
        if mid.class_fqn == frame.class_fqn and mid.method_name == frame.method_name
    ]
    if exact:
        in_span = [
            mid
            for mid in exact
            if Path(mid.file_path).name == frame.file_name
            and graph.nodes[mid].span[0] <= frame.line <= graph.nodes[mid].span[1]
        ]
        if in_span:
            return sorted(in_span)[0]
        return sorted(exact)[0]
    wanted = _normalize_anonymous(frame.class_fqn)
    if wanted != frame.class_fqn:
        relaxed = [
            mid
            for mid in graph.nodes
            if _normalize_anonymous(mid.class_fqn) == wanted
            and mid.method_name == frame.method_name
        ]
        if relaxed:
            return sorted(relaxed)[0]
    return None
