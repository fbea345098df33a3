"""Queryable on-disk store for one snapshot's call graph and method bodies.

Layout: `graph.idx` holds node and edge records (one per line, tab separated),
`bodies.dat` is a byte blob addressed by offsets from the index, and `meta`
records the format version, snapshot commit, and builder version. Content is
emitted in lexicographic MethodId order, so rebuilding an unchanged snapshot
produces byte-identical files.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .jindex import CallGraph, MethodId, MethodNode

FORMAT_VERSION = "1"

__all__ = ["GraphStore", "StoreError", "StoreLoadError", "FORMAT_VERSION", "save", "load", "store_hash"]


class StoreError(KeyError):
    pass


class StoreLoadError(ValueError):
    pass


@dataclass
class GraphStore:
    graph: CallGraph
    meta: dict[str, str] = field(default_factory=dict)
    cache_enabled: bool = True
    visit_log: list[MethodId] = field(default_factory=list)
    _neighbor_cache: dict[tuple[MethodId, str], list[MethodId]] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def body_index(self) -> dict[MethodId, MethodNode]:
        return self.graph.nodes

    def lookup(self, mid: MethodId) -> MethodNode | None:
        with self._lock:
            self.visit_log.append(mid)
        return self.graph.nodes.get(mid)

    def neighbors(self, mid: MethodId, direction: str = "both") -> list[MethodId]:
        if direction not in ("callers", "callees", "both"):
            raise ValueError(f"unknown direction {direction!r}")
        if mid not in self.graph.nodes:
            raise StoreError(f"method not indexed: {mid.key()}")
        cache_key = (mid, direction)
        if self.cache_enabled and cache_key in self._neighbor_cache:
            return list(self._neighbor_cache[cache_key])
        out: set[MethodId] = set()
        for u, v in self.graph.edges:
            if direction in ("callees", "both") and u == mid:
                out.add(v)
            if direction in ("callers", "both") and v == mid:
                out.add(u)
        result = sorted(out)
        if self.cache_enabled:
            self._neighbor_cache[cache_key] = result
        return list(result)

    def find_by_name(self, method_name: str, limit: int = 3) -> list[MethodId]:
        """Whole-index exact-name search, first `limit` ids in lexicographic order."""
        hits = [mid for mid in self.graph.nodes if mid.method_name == method_name]
        return sorted(hits)[:limit]

    def find_by_location(self, location: str) -> list[MethodId]:
        """Ids matching a 'class_fqn#method_name' identity string."""
        class_fqn, _, method_name = location.partition("#")
        return sorted(
            mid
            for mid in self.graph.nodes
            if mid.class_fqn == class_fqn and mid.method_name == method_name
        )


def save(store: GraphStore, path: str | Path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    blob = bytearray()
    node_lines: list[str] = []
    for mid in sorted(store.graph.nodes):
        node = store.graph.nodes[mid]
        body = node.body_text.encode("utf-8")
        body_off = len(blob)
        blob.extend(body)
        if node.doc_text is not None:
            doc = node.doc_text.encode("utf-8")
            doc_off = len(blob)
            doc_len = len(doc)
            blob.extend(doc)
        else:
            doc_off = -1
            doc_len = 0
        node_lines.append(
            "N\t{key}\t{s}\t{e}\t{bo}\t{bl}\t{do}\t{dl}".format(
                key=mid.key(),
                s=node.span[0],
                e=node.span[1],
                bo=body_off,
                bl=len(body),
                do=doc_off,
                dl=doc_len,
            )
        )
    edge_lines = [f"E\t{u.key()}\t{v.key()}" for u, v in sorted(store.graph.edges)]
    (root / "graph.idx").write_bytes(("\n".join(node_lines + edge_lines) + "\n").encode("utf-8"))
    (root / "bodies.dat").write_bytes(bytes(blob))
    meta = dict(store.meta)
    meta.setdefault("format_version", FORMAT_VERSION)
    meta.setdefault("tool", f"crashlens-{__version__}")
    meta["nodes"] = str(len(store.graph.nodes))
    meta["edges"] = str(len(store.graph.edges))
    meta_text = "".join(f"{k}={meta[k]}\n" for k in sorted(meta))
    (root / "meta").write_bytes(meta_text.encode("utf-8"))


def load(path: str | Path) -> GraphStore:
    root = Path(path)
    meta_path = root / "meta"
    if not meta_path.exists():
        raise StoreLoadError(f"not a graph store (missing meta): {root}")
    meta: dict[str, str] = {}
    for line in meta_path.read_bytes().decode("utf-8").splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            meta[key] = value
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise StoreLoadError(
            f"unsupported store format: expected version {FORMAT_VERSION}, found {version!r}"
        )
    blob = (root / "bodies.dat").read_bytes()
    nodes: dict[MethodId, MethodNode] = {}
    edges: list[tuple[MethodId, MethodId]] = []
    for line in (root / "graph.idx").read_bytes().decode("utf-8").splitlines():
        if not line:
            continue
        parts = line.split("\t")
        try:
            if parts[0] == "N":
                _, key, s, e, bo, bl, do, dl = parts
                mid = MethodId.from_key(key)
                body_off, body_len = int(bo), int(bl)
                doc_off, doc_len = int(do), int(dl)
                if body_off + body_len > len(blob) or doc_off + doc_len > len(blob):
                    raise StoreLoadError(f"bodies.dat truncated for {key}")
                body = blob[body_off : body_off + body_len].decode("utf-8")
                doc = (
                    blob[doc_off : doc_off + doc_len].decode("utf-8") if doc_off >= 0 else None
                )
                nodes[mid] = MethodNode(id=mid, body_text=body, span=(int(s), int(e)), doc_text=doc)
            elif parts[0] == "E":
                _, u, v = parts
                edges.append((MethodId.from_key(u), MethodId.from_key(v)))
            else:
                raise StoreLoadError(f"unknown record type {parts[0]!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, StoreLoadError):
                raise
            raise StoreLoadError(f"corrupt graph.idx record: {line[:80]!r}") from exc
    if len(nodes) != int(meta.get("nodes", -1)) or len(edges) != int(meta.get("edges", -1)):
        raise StoreLoadError(
            f"record counts do not match meta: {len(nodes)} nodes / {len(edges)} edges"
        )
    for u, v in edges:
        if u not in nodes or v not in nodes:
            raise StoreLoadError(f"edge endpoint not in node set: {u.key()} -> {v.key()}")
    graph = CallGraph(nodes={mid: nodes[mid] for mid in sorted(nodes)}, edges=tuple(sorted(edges)))
    return GraphStore(graph=graph, meta=meta)


def store_hash(path: str | Path) -> str:
    """Stable content hash of a store directory."""
    root = Path(path)
    digest = hashlib.sha256()
    for name in ("graph.idx", "bodies.dat", "meta"):
        digest.update(name.encode())
        digest.update((root / name).read_bytes())
    return digest.hexdigest()
