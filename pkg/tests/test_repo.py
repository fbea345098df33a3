import difflib
import random
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from crashlens.jindex import MethodId
from crashlens.repo import (
    CheckoutError,
    CommitInfo,
    GitClient,
    GroundTruthError,
    ResolutionError,
    apply_patch,
    extract_ground_truth,
    parse_unified_diff,
    resolve_snapshot,
)

from fixture_repos import build_zookeeper_mini

UTC = timezone.utc


def ts(t: int) -> datetime:
    return datetime(2015, 1, 1, tzinfo=UTC) + timedelta(days=t)


def commits(*times: int) -> list[CommitInfo]:
    # Log order: newest first.
    entries = [CommitInfo(commit_id=f"c{t}", commit_time=ts(t)) for t in times]
    return sorted(entries, key=lambda c: c.commit_time, reverse=True)


# ---------------------------------------------------------------------------
# resolve_snapshot


def test_resolve_max_below():
    ref = resolve_snapshot(commits(10, 20, 30), ts(25), "R-1")
    assert ref.commit_id == "c20"
    assert ref.resolved_for == "R-1"


def test_resolve_nothing_precedes():
    with pytest.raises(ResolutionError):
        resolve_snapshot(commits(10, 20), ts(5), "R-1")


def test_resolve_strictly_before():
    ref = resolve_snapshot(commits(10, 20), ts(20), "R-1")
    assert ref.commit_id == "c10"


def test_resolve_tie_prefers_topologically_later():
    older = CommitInfo("old", ts(10))
    newer = CommitInfo("new", ts(10))
    # Log order newest-first: "new" listed before "old".
    ref = resolve_snapshot([newer, older], ts(11), "R-1")
    assert ref.commit_id == "new"


def test_resolve_matches_linear_scan_oracle():
    rng = random.Random(13)
    for _ in range(50):
        n = rng.randint(1, 100)
        times = [rng.randint(0, 60) for _ in range(n)]
        history = [CommitInfo(f"c{i}", ts(t)) for i, t in enumerate(times)]
        history.sort(key=lambda c: c.commit_time, reverse=True)
        created = ts(rng.randint(0, 70))
        eligible = [c for c in history if c.commit_time < created]
        if not eligible:
            with pytest.raises(ResolutionError):
                resolve_snapshot(history, created, "R")
            continue
        best_time = max(c.commit_time for c in eligible)
        expected = next(c for c in history if c.commit_time == best_time and c.commit_time < created)
        got = resolve_snapshot(history, created, "R")
        assert got.commit_id == expected.commit_id
        assert got.commit_time < created


# ---------------------------------------------------------------------------
# GitClient + checkout on a real fixture repo


@pytest.fixture(scope="module")
def zk(tmp_path_factory):
    return build_zookeeper_mini(tmp_path_factory.mktemp("repos"))


def test_log_is_newest_first(zk):
    client = GitClient(zk["repo"])
    history = client.log("main")
    assert [c.commit_id for c in history] == [zk["fix"], zk["c2"], zk["c1"]]
    assert history[0].commit_time > history[-1].commit_time


def test_checkout_idempotent_tree_hash(zk):
    client = GitClient(zk["repo"])
    client.checkout(zk["c2"])
    first = client.tree_hash()
    client.checkout(zk["c2"])
    assert client.tree_hash() == first
    assert client.current_commit() == zk["c2"]


def test_checkout_unknown_commit(zk):
    client = GitClient(zk["repo"])
    with pytest.raises(CheckoutError):
        client.checkout("0" * 40)


def test_checkout_contents_match_per_commit_oracle(zk):
    client = GitClient(zk["repo"])
    provider = Path(zk["repo"]) / "src/org/apache/zookeeper/server/auth/X509AuthenticationProvider.java"
    quorum = Path(zk["repo"]) / "src/org/apache/zookeeper/server/quorum/QuorumConfig.java"
    client.checkout(zk["c1"])
    assert "keyStoreLocation == null" not in provider.read_text()
    assert not quorum.exists()
    client.checkout(zk["c2"])
    assert quorum.exists()
    client.checkout(zk["fix"])
    assert "keyStoreLocation == null" in provider.read_text()


def test_snapshot_resolution_on_fixture_repo(zk):
    client = GitClient(zk["repo"])
    created = datetime(2016, 9, 15, tzinfo=UTC)
    ref = resolve_snapshot(client.log("main"), created, "ZOOKEEPER-2581")
    assert ref.commit_id == zk["c2"]


# ---------------------------------------------------------------------------
# Ground truth extraction


def make_diff(rel: str, old: str, new: str) -> str:
    return "".join(
        difflib.unified_diff(
            old.splitlines(keepends=True),
            new.splitlines(keepends=True),
            fromfile=f"a/{rel}",
            tofile=f"b/{rel}",
        )
    )


BASE = """\
package p;

public class Calc {
    public int add(int a, int b) {
        int sum = a + b;
        return sum;
    }

    public int mul(int a, int b) {
        return a * b;
    }
}
"""


def write_tree(tmp_path, rel: str, text: str) -> Path:
    path = tmp_path / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return tmp_path


def test_single_hunk_single_method(tmp_path):
    new = BASE.replace("int sum = a + b;", "int sum = b + a;")
    tree = write_tree(tmp_path, "p/Calc.java", BASE)
    gt = extract_ground_truth(tree, make_diff("p/Calc.java", BASE, new), "R-1", "f" * 40)
    assert gt.modified_methods == {MethodId("p.Calc", "add", 2, "p/Calc.java")}
    assert gt.pseudo_methods == []
    assert "int sum = b + a;" in gt.post_fix_bodies[MethodId("p.Calc", "add", 2, "p/Calc.java")]


def test_insertion_only_new_method_is_pseudo(tmp_path):
    new = BASE.replace(
        "\n    public int mul",
        "\n    public int sub(int a, int b) {\n        return a - b;\n    }\n\n    public int mul",
    )
    tree = write_tree(tmp_path, "p/Calc.java", BASE)
    gt = extract_ground_truth(tree, make_diff("p/Calc.java", BASE, new), "R-2", "f" * 40)
    assert gt.modified_methods == set()
    assert gt.pseudo_methods == ["p/Calc.java::<file>"]


def test_patch_not_applying_raises(tmp_path):
    new = BASE.replace("int sum = a + b;", "int sum = b + a;")
    diff = make_diff("p/Calc.java", BASE, new)
    tree = write_tree(tmp_path, "p/Calc.java", BASE.replace("a + b", "a+b"))
    with pytest.raises(GroundTruthError):
        extract_ground_truth(tree, diff, "R-3", "f" * 40)


def test_non_java_files_ignored(tmp_path):
    diff = make_diff("README.md", "hello\n", "goodbye\n")
    gt = extract_ground_truth(tmp_path, diff, "R-4", "f" * 40)
    assert gt.modified_methods == set()
    assert gt.pseudo_methods == []


def test_rename_followed_via_headers(tmp_path):
    new = BASE.replace("return a * b;", "return b * a;")
    body = make_diff("p/Calc.java", BASE, new)
    # Synthesize git-style rename headers around the hunks.
    hunks = body.split("\n", 2)[2]
    diff = (
        "diff --git a/p/Calc.java b/p/CalcRenamed.java\n"
        "similarity index 90%\n"
        "rename from p/Calc.java\n"
        "rename to p/CalcRenamed.java\n"
        "--- a/p/Calc.java\n"
        "+++ b/p/CalcRenamed.java\n" + hunks
    )
    tree = write_tree(tmp_path, "p/Calc.java", BASE)
    gt = extract_ground_truth(tree, diff, "R-5", "f" * 40)
    assert gt.modified_methods == {MethodId("p.Calc", "mul", 2, "p/Calc.java")}


def _synthetic_cases() -> list[tuple[str, str, set[str]]]:
    """(old→new edit description) with the hand-built expected method-name sets."""
    cases = []
    cases.append((BASE, BASE.replace("return sum;", "return sum + 0;"), {"add"}))
    cases.append((BASE, BASE.replace("return a * b;", "return a * b * 1;"), {"mul"}))
    cases.append(
        (
            BASE,
            BASE.replace("int sum = a + b;", "int sum = a + b;\n        sum += 0;"),
            {"add"},
        )
    )
    cases.append(
        (
            BASE,
            BASE.replace("return a * b;", "int p = a * b;\n        return p;"),
            {"mul"},
        )
    )
    cases.append((BASE, BASE + "", set()))
    cases.append(
        (
            BASE,
            BASE.replace("public int add", "public int addAll").replace(
                "int sum = a + b;", "int sum = a + b + 1;"
            ),
            {"add"},
        )
    )
    cases.append(
        (
            BASE,
            BASE.replace("int sum = a + b;", "int total = a + b;").replace(
                "return sum;", "return total;"
            ).replace("return a * b;", "return b * a;"),
            {"add", "mul"},
        )
    )
    # Field insertion anchors at the class-declaration line: pseudo, not a method.
    cases.append((BASE, BASE.replace("public class Calc {", "public class Calc {\n    private int calls;"), set()))
    cases.append((BASE, BASE, set()))
    cases.append(
        (
            BASE,
            BASE.replace("    public int mul(int a, int b) {\n        return a * b;\n    }\n", ""),
            {"mul"},
        )
    )
    return cases


def test_ten_synthetic_diffs_match_hand_oracle(tmp_path):
    for i, (old, new, expected_names) in enumerate(_synthetic_cases()):
        tree = write_tree(tmp_path / f"case{i}", "p/Calc.java", old)
        diff = make_diff("p/Calc.java", old, new)
        gt = extract_ground_truth(tree, diff, f"R-{i}", "f" * 40)
        assert {m.method_name for m in gt.modified_methods} == expected_names, f"case {i}"


def test_ground_truth_stable_across_runs(tmp_path):
    new = BASE.replace("return sum;", "return 0;")
    tree = write_tree(tmp_path, "p/Calc.java", BASE)
    diff = make_diff("p/Calc.java", BASE, new)
    first = extract_ground_truth(tree, diff, "R", "f" * 40)
    second = extract_ground_truth(tree, diff, "R", "f" * 40)
    assert first.modified_methods == second.modified_methods
    assert first.post_fix_bodies == second.post_fix_bodies


def test_fixture_fix_commit_ground_truth(zk):
    client = GitClient(zk["repo"])
    patch = client.diff(zk["fix"])
    client.checkout(client.parent(zk["fix"]))
    gt = extract_ground_truth(zk["repo"], patch, "ZOOKEEPER-2581", zk["fix"])
    assert gt.modified_methods == {
        MethodId(
            "org.apache.zookeeper.server.auth.X509AuthenticationProvider",
            "<init>",
            0,
            "src/org/apache/zookeeper/server/auth/X509AuthenticationProvider.java",
        )
    }
    (mid,) = gt.modified_methods
    assert "keyStoreLocation == null" in gt.post_fix_bodies[mid]


def test_apply_patch_round_trip():
    new = BASE.replace("int sum = a + b;", "int check = a;\n        int sum = a + b;")
    diff = make_diff("p/Calc.java", BASE, new)
    fd = parse_unified_diff(diff)[0]
    assert apply_patch(BASE, fd.hunks, "p/Calc.java") == new
