"""Repository snapshot handling and ground-truth extraction.

Resolves the commit just before a crash report's creation time, checks out
snapshots through an external git client, and derives the developer-fix
ground truth (the set of methods the fixing commit modified) by intersecting
unified-diff hunks with pre-fix method spans.
"""

from __future__ import annotations

import logging
import re
import subprocess
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .jindex import MethodId, parse_file

logger = logging.getLogger(__name__)

__all__ = [
    "CommitInfo",
    "SnapshotRef",
    "GroundTruth",
    "ResolutionError",
    "CheckoutError",
    "GroundTruthError",
    "GitClient",
    "resolve_snapshot",
    "parse_unified_diff",
    "extract_ground_truth",
]


class ResolutionError(ValueError):
    pass


class CheckoutError(RuntimeError):
    pass


class GroundTruthError(ValueError):
    pass


@dataclass(frozen=True)
class CommitInfo:
    commit_id: str
    commit_time: datetime


@dataclass(frozen=True)
class SnapshotRef:
    commit_id: str
    resolved_for: str
    commit_time: datetime


@dataclass
class GroundTruth:
    report_id: str
    fix_commit: str
    modified_methods: set[MethodId]
    patch_text: str
    pseudo_methods: list[str] = field(default_factory=list)
    post_fix_bodies: dict[MethodId, str] = field(default_factory=dict)
    skipped_predictions: int = 0


def resolve_snapshot(history: list[CommitInfo], created_at: datetime, report_id: str) -> SnapshotRef:
    """Pick the commit with maximal commit_time strictly before created_at.

    `history` is in log order (newest first); among equal commit times the
    entry seen first (topologically later) wins.
    """
    best: CommitInfo | None = None
    for entry in history:
        if entry.commit_time >= created_at:
            continue
        if best is None or entry.commit_time > best.commit_time:
            best = entry
    if best is None:
        raise ResolutionError(
            f"no commit precedes {created_at.isoformat()} for report {report_id}"
        )
    return SnapshotRef(commit_id=best.commit_id, resolved_for=report_id, commit_time=best.commit_time)


class GitClient:
    """Thin subprocess boundary over a local git clone: log, checkout, diff."""

    def __init__(self, workdir: str | Path):
        self.workdir = Path(workdir)

    def _git(self, *args: str) -> str:
        proc = subprocess.run(
            ["git", "-C", str(self.workdir), *args],
            capture_output=True,
            text=True,
            env={"LC_ALL": "C", "PATH": "/usr/bin:/bin:/usr/local/bin", "HOME": "/tmp"},
        )
        if proc.returncode != 0:
            raise CheckoutError(f"git {' '.join(args)} failed: {proc.stderr.strip()}")
        return proc.stdout

    def log(self, branch: str = "HEAD", first_parent: bool = True) -> list[CommitInfo]:
        args = ["log", "--format=%H %cI", branch]
        if first_parent:
            args.insert(1, "--first-parent")
        out = self._git(*args)
        history = []
        for line in out.splitlines():
            commit_id, _, stamp = line.partition(" ")
            history.append(
                CommitInfo(commit_id=commit_id, commit_time=datetime.fromisoformat(stamp))
            )
        return history

    def checkout(self, commit_id: str) -> Path:
        self._git("checkout", "--detach", "--quiet", commit_id)
        return self.workdir

    def current_commit(self) -> str:
        return self._git("rev-parse", "HEAD").strip()

    def tree_hash(self) -> str:
        return self._git("rev-parse", "HEAD^{tree}").strip()

    def diff(self, commit_id: str) -> str:
        """Unified diff of the commit against its first parent, rename detection on."""
        return self._git("show", commit_id, "--format=", "--unified=3", "-M", "--no-color")

    def parent(self, commit_id: str) -> str:
        return self._git("rev-parse", f"{commit_id}^").strip()


# ---------------------------------------------------------------------------
# Unified diff handling


@dataclass
class Hunk:
    old_start: int
    old_len: int
    new_start: int
    new_len: int
    lines: list[str] = field(default_factory=list)

    @property
    def is_pure_insertion(self) -> bool:
        return not any(line.startswith("-") for line in self.lines)


@dataclass
class FileDiff:
    old_path: str | None
    new_path: str | None
    hunks: list[Hunk] = field(default_factory=list)
    renamed: bool = False


_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


def parse_unified_diff(text: str) -> list[FileDiff]:
    diffs: list[FileDiff] = []
    current: FileDiff | None = None
    hunk: Hunk | None = None
    for line in text.splitlines():
        if line.startswith("diff --git "):
            current = FileDiff(old_path=None, new_path=None)
            diffs.append(current)
            hunk = None
            continue
        if line.startswith("--- ") and (current is None or current.hunks):
            # Bare diff without git headers (or the next file of one).
            current = FileDiff(old_path=None, new_path=None)
            diffs.append(current)
        if current is None:
            continue
        if line.startswith("rename from "):
            current.old_path = line[len("rename from "):]
            current.renamed = True
            continue
        if line.startswith("rename to "):
            current.new_path = line[len("rename to "):]
            continue
        if line.startswith("--- "):
            path = line[4:].split("\t")[0]
            current.old_path = None if path == "/dev/null" else _strip_prefix(path)
            continue
        if line.startswith("+++ "):
            path = line[4:].split("\t")[0]
            current.new_path = None if path == "/dev/null" else _strip_prefix(path)
            continue
        m = _HUNK_RE.match(line)
        if m:
            hunk = Hunk(
                old_start=int(m.group(1)),
                old_len=int(m.group(2) or "1"),
                new_start=int(m.group(3)),
                new_len=int(m.group(4) or "1"),
            )
            current.hunks.append(hunk)
            continue
        if hunk is not None and (line[:1] in (" ", "+", "-") or line.startswith("\\")):
            hunk.lines.append(line)
    return diffs


def _strip_prefix(path: str) -> str:
    if path.startswith(("a/", "b/")):
        return path[2:]
    return path


def apply_patch(old_text: str, hunks: list[Hunk], path: str) -> str:
    """Apply hunks with zero fuzz; context mismatches raise GroundTruthError."""
    old_lines = old_text.splitlines()
    out: list[str] = []
    pos = 0  # 0-based index into old_lines
    for hunk in hunks:
        start = hunk.old_start - 1 if hunk.old_len else hunk.old_start
        if start < pos:
            raise GroundTruthError(f"overlapping hunks in {path}")
        out.extend(old_lines[pos:start])
        pos = start
        for line in hunk.lines:
            if line.startswith("\\"):
                continue
            tag, content = line[:1], line[1:]
            if tag == " ":
                if pos >= len(old_lines) or old_lines[pos] != content:
                    raise GroundTruthError(
                        f"patch does not apply at {path}:{pos + 1} (context mismatch)"
                    )
                out.append(content)
                pos += 1
            elif tag == "-":
                if pos >= len(old_lines) or old_lines[pos] != content:
                    raise GroundTruthError(
                        f"patch does not apply at {path}:{pos + 1} (delete mismatch)"
                    )
                pos += 1
            elif tag == "+":
                out.append(content)
    out.extend(old_lines[pos:])
    return "\n".join(out) + ("\n" if old_text.endswith("\n") or not old_text else "")


def _changed_pre_lines(hunk: Hunk) -> tuple[set[int], int | None]:
    """Pre-image lines touched by deletions, plus the insertion anchor for a
    pure-insertion hunk (the pre-image line just before the inserted run)."""
    changed: set[int] = set()
    anchor: int | None = None
    ol = hunk.old_start
    for line in hunk.lines:
        tag = line[:1]
        if tag == " ":
            ol += 1
        elif tag == "-":
            changed.add(ol)
            ol += 1
        elif tag == "+" and hunk.is_pure_insertion and anchor is None:
            anchor = ol - 1
    return changed, anchor


def extract_ground_truth(
    snapshot_tree: str | Path,
    patch_text: str,
    report_id: str,
    fix_commit: str,
) -> GroundTruth:
    """Derive the developer-fix method set from a unified diff.

    A method is modified when its pre-image span intersects a deleted line, or
    contains the insertion anchor of a pure-insertion hunk. Hunks that land
    outside every parsed method (including brand-new files) attribute to a
    flagged file-level pseudo-method instead. Non-Java files are ignored.
    """
    root = Path(snapshot_tree)
    modified: set[MethodId] = set()
    pseudo: list[str] = []
    post_bodies: dict[MethodId, str] = {}

    for fd in parse_unified_diff(patch_text):
        path = fd.old_path or fd.new_path
        if path is None or not str(path).endswith(".java"):
            continue
        if fd.old_path is None:
            # Brand-new file: nothing existed at the snapshot.
            pseudo.append(f"{fd.new_path}::<file>")
            continue
        source_path = root / fd.old_path
        if not source_path.exists():
            raise GroundTruthError(f"patched file missing from snapshot: {fd.old_path}")
        old_text = source_path.read_bytes().decode("utf-8", errors="replace")
        new_text = apply_patch(old_text, fd.hunks, fd.old_path)

        parsed = parse_file(fd.old_path, old_text)
        methods = parsed.methods
        file_changed: set[MethodId] = set()
        unattributed = False
        for hunk in fd.hunks:
            changed, anchor = _changed_pre_lines(hunk)
            hit = False
            for node in methods:
                lo, hi = node.span
                if any(lo <= line <= hi for line in changed) or (
                    anchor is not None and lo <= anchor <= hi
                ):
                    file_changed.add(node.id)
                    hit = True
            if not hit and (changed or anchor is not None):
                unattributed = True
        if not methods and fd.hunks:
            unattributed = True
        if unattributed:
            pseudo.append(f"{fd.old_path}::<file>")
        modified.update(file_changed)

        if file_changed:
            post_parsed = parse_file(fd.new_path or fd.old_path, new_text)
            by_exact = {
                (m.id.class_fqn, m.id.method_name, m.id.arity): m for m in post_parsed.methods
            }
            by_name: dict[tuple[str, str], list] = {}
            for m in post_parsed.methods:
                by_name.setdefault((m.id.class_fqn, m.id.method_name), []).append(m)
            for mid in file_changed:
                node = by_exact.get((mid.class_fqn, mid.method_name, mid.arity))
                if node is None:
                    candidates = sorted(
                        by_name.get((mid.class_fqn, mid.method_name), []), key=lambda m: m.id
                    )
                    node = candidates[0] if candidates else None
                if node is not None:
                    post_bodies[mid] = node.body_text
                else:
                    logger.info("no post-fix body recovered for %s", mid.key())

    return GroundTruth(
        report_id=report_id,
        fix_commit=fix_commit,
        modified_methods=modified,
        patch_text=patch_text,
        pseudo_methods=pseudo,
        post_fix_bodies=post_bodies,
    )
