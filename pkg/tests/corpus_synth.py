"""Deterministic synthetic corpus builder mirroring the studied systems' report counts."""

from __future__ import annotations

SYSTEM_COUNTS = {
    "AMQ": 35,
    "HADOOP": 38,
    "HDFS": 73,
    "MAPREDUCE": 65,
    "YARN": 117,
    "HIVE": 120,
    "STORM": 36,
    "ZOOKEEPER": 8,
}

_PRIORITIES = ["Major", "Critical", "Blocker"]


def _trace_snippet(system: str, idx: int) -> str:
    cls = f"org.apache.{system.lower()}.core.Worker"
    return (
        f"java.lang.IllegalStateException: task {idx} aborted\n"
        f"\tat {cls}.process(Worker.java:{40 + idx % 50})\n"
        f"\tat {cls}.run(Worker.java:{20 + idx % 10})\n"
    )


def make_record(system: str, idx: int) -> dict:
    year = 2010 + (idx % 14)
    return {
        "id": f"{system}-{1000 + idx}",
        "title": f"{system} worker crashes while processing task {idx}",
        "description": (
            f"While running job {idx} the worker died with the trace below.\n\n"
            + _trace_snippet(system, idx)
        ),
        "created_at": f"{year}-03-{(idx % 27) + 1:02d}T12:00:00Z",
        "priority": _PRIORITIES[idx % 3],
        "status": "Fixed" if idx % 2 else "Resolved",
        "fix_commit": f"cafe{idx:036d}"[:40],
    }


def full_corpus() -> list[dict]:
    """492 records, per-system counts matching the studied dataset overview."""
    records = []
    for system, count in SYSTEM_COUNTS.items():
        seq = 0
        for i in range(count):
            records.append(make_record(system, seq))
            seq += 1
    return records
