from pathlib import Path

import pytest

from crashlens.ingest import StackFrame
from crashlens.jindex import (
    CallGraph,
    MethodId,
    build_call_graph,
    index_project,
    map_frame,
    parse_file,
)

PROJ = Path(__file__).parent / "fixtures" / "javaproj"


def mid(cls: str, name: str, arity: int, file: str) -> MethodId:
    return MethodId(class_fqn=cls, method_name=name, arity=arity, file_path=file)


ENGINE = "src/com/acme/core/Engine.java"
PARTS = "src/com/acme/core/Parts.java"
TEXT = "src/com/acme/util/Text.java"
FORMAT = "src/com/acme/util/Format.java"
GRID = "src/com/acme/util/Grid.java"
PRINTER = "src/com/acme/io/Printer.java"
CHANNEL = "src/com/acme/io/Channel.java"
SOCKET = "src/com/acme/io/Socket.java"
APP = "src/com/acme/app/App.java"
WORKER = "src/com/acme/app/Worker.java"
JOBS = "src/com/acme/app/Jobs.java"


def oracle_nodes() -> set[MethodId]:
    return {
        mid("com.acme.core.Engine", "start", 0, ENGINE),
        mid("com.acme.core.Engine", "init", 0, ENGINE),
        mid("com.acme.core.Engine", "run", 1, ENGINE),
        mid("com.acme.core.Engine", "step", 0, ENGINE),
        mid("com.acme.core.Engine", "helperOverload", 1, ENGINE),
        mid("com.acme.core.Engine", "helperOverload", 2, ENGINE),
        mid("com.acme.core.Parts", "<init>", 0, PARTS),
        mid("com.acme.core.Parts", "reset", 0, PARTS),
        mid("com.acme.util.Text", "clean", 1, TEXT),
        mid("com.acme.util.Text", "trim", 1, TEXT),
        mid("com.acme.util.Format", "render", 1, FORMAT),
        mid("com.acme.util.Grid", "<init>", 0, GRID),
        mid("com.acme.util.Grid", "seed", 1, GRID),
        mid("com.acme.io.Printer", "render", 1, PRINTER),
        mid("com.acme.io.Channel", "send", 1, CHANNEL),
        mid("com.acme.io.Channel", "sendAll", 1, CHANNEL),
        mid("com.acme.io.Socket", "send", 1, SOCKET),
        mid("com.acme.io.Socket", "write", 1, SOCKET),
        mid("com.acme.app.App", "main", 1, APP),
        mid("com.acme.app.App", "<init>", 0, APP),
        mid("com.acme.app.App", "print", 1, APP),
        mid("com.acme.app.Worker$Task", "execute", 0, WORKER),
        mid("com.acme.app.Worker", "dispatch", 0, WORKER),
        mid("com.acme.app.Worker", "log", 2, WORKER),
        mid("com.acme.app.Worker", "defaultPool", 0, WORKER),
        mid("com.acme.app.Jobs", "<init>", 0, JOBS),
        mid("com.acme.app.Jobs", "<init>", 1, JOBS),
        mid("com.acme.app.Jobs", "wrap", 0, JOBS),
        mid("com.acme.app.Jobs", "tick", 0, JOBS),
    }


def oracle_edges() -> set[tuple[MethodId, MethodId]]:
    e = mid("com.acme.core.Engine", "start", 0, ENGINE)
    pairs = [
        (e, mid("com.acme.core.Engine", "init", 0, ENGINE)),
        (e, mid("com.acme.core.Engine", "run", 1, ENGINE)),
        (mid("com.acme.core.Engine", "init", 0, ENGINE), mid("com.acme.util.Text", "clean", 1, TEXT)),
        (mid("com.acme.core.Engine", "run", 1, ENGINE), mid("com.acme.core.Engine", "run", 1, ENGINE)),
        (mid("com.acme.core.Engine", "run", 1, ENGINE), mid("com.acme.core.Engine", "step", 0, ENGINE)),
        (mid("com.acme.core.Engine", "step", 0, ENGINE), mid("com.acme.core.Engine", "helperOverload", 1, ENGINE)),
        (mid("com.acme.core.Engine", "step", 0, ENGINE), mid("com.acme.core.Engine", "helperOverload", 2, ENGINE)),
        (mid("com.acme.core.Parts", "<init>", 0, PARTS), mid("com.acme.core.Parts", "reset", 0, PARTS)),
        (mid("com.acme.util.Text", "clean", 1, TEXT), mid("com.acme.util.Text", "trim", 1, TEXT)),
        (mid("com.acme.app.App", "main", 1, APP), mid("com.acme.core.Engine", "start", 0, ENGINE)),
        (mid("com.acme.app.App", "main", 1, APP), mid("com.acme.app.App", "<init>", 0, APP)),
        (mid("com.acme.app.App", "main", 1, APP), mid("com.acme.app.App", "print", 1, APP)),
        (mid("com.acme.app.App", "print", 1, APP), mid("com.acme.util.Format", "render", 1, FORMAT)),
        (mid("com.acme.app.App", "print", 1, APP), mid("com.acme.io.Printer", "render", 1, PRINTER)),
        (mid("com.acme.app.Worker$Task", "execute", 0, WORKER), mid("com.acme.util.Text", "clean", 1, TEXT)),
        (mid("com.acme.app.Worker", "dispatch", 0, WORKER), mid("com.acme.app.Worker$Task", "execute", 0, WORKER)),
        (mid("com.acme.app.Worker", "dispatch", 0, WORKER), mid("com.acme.app.Worker", "log", 2, WORKER)),
        (mid("com.acme.app.Jobs", "<init>", 0, JOBS), mid("com.acme.app.Jobs", "<init>", 1, JOBS)),
        (mid("com.acme.app.Jobs", "wrap", 0, JOBS), mid("com.acme.app.Jobs", "tick", 0, JOBS)),
        (mid("com.acme.io.Channel", "sendAll", 1, CHANNEL), mid("com.acme.io.Channel", "send", 1, CHANNEL)),
        (mid("com.acme.io.Socket", "send", 1, SOCKET), mid("com.acme.io.Socket", "write", 1, SOCKET)),
        (mid("com.acme.util.Grid", "<init>", 0, GRID), mid("com.acme.util.Grid", "seed", 1, GRID)),
    ]
    return set(pairs)


@pytest.fixture(scope="module")
def graph() -> CallGraph:
    return index_project(PROJ)


# ---------------------------------------------------------------------------
# parse_file


def test_minimal_class_one_method_no_sites():
    fp = parse_file("A.java", "package p;\nclass A {\n  void m() {\n    int x = 1;\n  }\n}\n")
    assert [m.id for m in fp.methods] == [mid("p.A", "m", 0, "A.java")]
    assert fp.sites == []
    assert not fp.failed


def test_constructor_calling_static_helper_site():
    src = (
        "package p;\n"
        "class Provider {\n"
        "  Provider() {\n"
        "    Util.install(this);\n"
        "  }\n"
        "}\n"
    )
    fp = parse_file("Provider.java", src)
    (site,) = fp.sites
    assert site.caller.method_name == "<init>"
    assert site.callee_name == "install"
    assert site.arg_count == 1
    assert site.receiver_hint == "Util"


def test_parse_failure_keeps_recovered_declarations():
    src = "package p;\nclass B {\n  void ok() { }\n  void bad( {\n}\n"
    fp = parse_file("B.java", src)
    assert fp.failed
    assert [m.id.method_name for m in fp.methods] == ["ok"]


def test_spans_and_doc_text():
    fp = parse_file(
        "T.java",
        "package p;\n"
        "class T {\n"
        "  /** Adds. */\n"
        "  int add(int a, int b) {\n"
        "    return a + b;\n"
        "  }\n"
        "}\n",
    )
    (m,) = fp.methods
    assert m.span == (4, 6)
    assert m.doc_text == "/** Adds. */"
    assert "return a + b;" in m.body_text


# ---------------------------------------------------------------------------
# build_call_graph against the hand-enumerated oracle


def test_call_graph_nodes_match_oracle(graph):
    assert set(graph.nodes) == oracle_nodes()


def test_call_graph_edges_match_oracle(graph):
    assert graph.edge_set == oracle_edges()


def test_call_graph_tallies(graph):
    assert graph.tallies["files_failed"] == 1
    assert graph.tallies["overload_collisions"] == 1
    # s.trim(), new Engine(), new Task(), new Runnable(), new HashMap<..>(),
    # msg.toString(), target.put(...)
    assert graph.tallies["unresolved_sites"] == 7
    # Engine's field initializer plus Worker's static block.
    assert graph.tallies["initializer_sites"] == 2


def test_intra_class_and_recursion_edges():
    src = "class A {\n  void a() { b(); }\n  void b() { }\n  void f() { f(); }\n}\n"
    g = build_call_graph([parse_file("A.java", src)])
    a = mid("A", "a", 0, "A.java")
    b = mid("A", "b", 0, "A.java")
    f = mid("A", "f", 0, "A.java")
    assert g.edge_set == {(a, b), (f, f)}


def test_endpoint_closure_and_determinism(graph):
    for u, v in graph.edges:
        assert u in graph.nodes and v in graph.nodes
    again = index_project(PROJ)
    assert list(again.nodes) == list(graph.nodes)
    assert again.edges == graph.edges


def test_removing_any_file_never_aborts():
    paths = sorted(PROJ.rglob("*.java"))
    for removed in paths:
        parses = []
        for p in paths:
            if p == removed:
                continue
            rel = p.relative_to(PROJ).as_posix()
            parses.append(parse_file(rel, p.read_text(encoding="utf-8")))
        g = build_call_graph(parses)
        assert set(g.nodes) <= oracle_nodes()


# ---------------------------------------------------------------------------
# map_frame


def frame(cls, name, file, line) -> StackFrame:
    return StackFrame(class_fqn=cls, method_name=name, file_name=file, line=line)


def test_map_frame_span_match(graph):
    node = graph.nodes[mid("com.acme.util.Text", "clean", 1, TEXT)]
    f = frame("com.acme.util.Text", "clean", "Text.java", node.span[0] + 1)
    assert map_frame(f, graph) == node.id


def test_map_frame_out_of_repo_absent(graph):
    f = frame("java.lang.Thread", "run", "Thread.java", 748)
    assert map_frame(f, graph) is None


def test_map_frame_fallback_ignores_line(graph):
    f = frame("com.acme.core.Engine", "run", "Engine.java", 9999)
    assert map_frame(f, graph) == mid("com.acme.core.Engine", "run", 1, ENGINE)


def test_map_frame_anonymous_class_normalization(graph):
    f = frame("com.acme.app.Jobs$1", "tick", "Jobs.java", 18)
    assert map_frame(f, graph) == mid("com.acme.app.Jobs", "tick", 0, JOBS)


def test_map_frame_lookup_table_oracle(graph):
    # Every indexed method maps back to itself from a frame aimed at its span.
    table = {}
    for node_id, node in graph.nodes.items():
        f = frame(node_id.class_fqn, node_id.method_name, Path(node_id.file_path).name, node.span[0])
        table[f] = map_frame(f, graph)
    for f, got in table.items():
        assert got is not None
        assert got.class_fqn == f.class_fqn
        assert got.method_name == f.method_name
