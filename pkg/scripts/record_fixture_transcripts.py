#!/usr/bin/env python3
"""Regenerate the bundled pipeline fixtures: corpus.jsonl plus recorded
direct/agentic transcripts for every crashing fixture report.

Run from the repository root after changing fixture repos, prompt templates,
or the scripted replies:

    python3 scripts/record_fixture_transcripts.py
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))
sys.path.insert(0, str(ROOT / "src"))

from crashlens.cli import RunConfig, cmd_index, cmd_ingest, load_config, _enhance_one
from crashlens.llm import ChatClient, Transcript

from fixture_repos import build_all
from scripted_model import (
    QUEUE_AGENT_ACTIONS,
    QUEUE_REPORT_DOC,
    QUEUE_REPORT_DOC_DIRECT,
    ZK_AGENT_ACTIONS,
    ZK_REPORT_DOC,
    ZK_REPORT_DOC_DIRECT,
    ScriptedModel,
)

FIXTURE_DIR = ROOT / "tests" / "fixtures" / "pipeline"

ZK_TRACE_TEXT = (
    "org.apache.zookeeper.common.X509Exception$KeyManagerException: java.lang.NullPointerException\n"
    "\tat org.apache.zookeeper.common.X509Util.createKeyManager(X509Util.java:6)\n"
    "\tat org.apache.zookeeper.server.auth.X509AuthenticationProvider.<init>(X509AuthenticationProvider.java:16)\n"
    "\tat org.apache.zookeeper.server.ServerCnxnFactory.configureSecure(ServerCnxnFactory.java:9)\n"
)

QUEUE_TRACE_TEXT = (
    "java.lang.ArrayIndexOutOfBoundsException: -1\n"
    "\tat org.example.queue.RingBuffer.take(RingBuffer.java:15)\n"
    "\tat org.example.queue.Worker.poll(Worker.java:7)\n"
)


def corpus_records(shas: dict[str, dict[str, str]]) -> list[dict]:
    return [
        {
            "id": "ZOOKEEPER-2581",
            "title": "Not handled NullPointerException while creating key manager and trustManager",
            "description": (
                "Setting the secure client port crashes the server on startup. "
                "The log shows:\n\n" + ZK_TRACE_TEXT
            ),
            "created_at": "2016-09-15T08:00:00Z",
            "priority": "Major",
            "status": "Resolved",
            "fix_commit": shas["zookeeper-mini"]["fix"],
        },
        {
            "id": "QUEUE-7",
            "title": "ArrayIndexOutOfBoundsException when polling an empty worker queue",
            "description": (
                "Polling a worker before anything was offered kills the consumer "
                "thread:\n\n" + QUEUE_TRACE_TEXT
            ),
            "created_at": "2018-03-15T12:30:00Z",
            "priority": "Critical",
            "status": "Fixed",
            "fix_commit": shas["queuelib"]["fix"],
        },
        {
            "id": "ZOOKEEPER-2600",
            "title": "Typo in the admin guide snapshot section",
            "description": (
                "The section about snapshots spells 'snapshout'. Trivial doc fix, "
                "no crash involved, but filed from the same triage pass as:\n\n" + ZK_TRACE_TEXT
            ),
            "created_at": "2016-10-01T08:00:00Z",
            "priority": "Minor",
            "status": "Resolved",
            "fix_commit": shas["zookeeper-mini"]["fix"],
        },
    ]


SCRIPTS = {
    ("ZOOKEEPER-2581", "direct"): ([], ZK_REPORT_DOC_DIRECT),
    ("ZOOKEEPER-2581", "agentic"): (ZK_AGENT_ACTIONS, ZK_REPORT_DOC),
    ("QUEUE-7", "direct"): ([], QUEUE_REPORT_DOC_DIRECT),
    ("QUEUE-7", "agentic"): (QUEUE_AGENT_ACTIONS, QUEUE_REPORT_DOC),
}


def write_config(tmp: Path, repos_root: Path, transcripts_dir: Path) -> Path:
    config = {
        "corpus": str(FIXTURE_DIR / "corpus.jsonl"),
        "repos_root": str(repos_root),
        "output_dir": str(tmp / "out"),
        "run_id": "record",
        "projects": {"ZOOKEEPER": "zookeeper-mini", "QUEUE": "queuelib"},
        "transcripts": {"mode": "replay", "dir": str(transcripts_dir)},
    }
    path = tmp / "config.yaml"
    path.write_text(json.dumps(config), encoding="utf-8")  # JSON is valid YAML
    return path


def main() -> int:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    transcripts_dir = FIXTURE_DIR / "transcripts"
    transcripts_dir.mkdir(exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp_str:
        tmp = Path(tmp_str)
        shas = build_all(tmp / "repos")
        records = corpus_records(shas)
        (FIXTURE_DIR / "corpus.jsonl").write_text(
            "".join(json.dumps(r, sort_keys=True) + "\n" for r in records), encoding="utf-8"
        )
        (FIXTURE_DIR / "commits.json").write_text(
            json.dumps(
                {name: {k: v for k, v in info.items() if k != "repo"} for name, info in shas.items()},
                indent=2,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        config = load_config(write_config(tmp, tmp / "repos", transcripts_dir))
        assert cmd_ingest(config) == 0
        assert cmd_index(config) == 0

        from crashlens.ingest import load_corpus

        reports = {r.id: r for r in load_corpus(config.corpus)}
        for (report_id, mode), (actions, doc) in sorted(SCRIPTS.items()):
            path = transcripts_dir / f"{report_id}.{mode}.jsonl"
            if path.exists():
                path.unlink()
            client = ChatClient(
                transcript=Transcript.recording(path),
                endpoint=ScriptedModel(actions, doc),
            )
            status, extras = _enhance_one(config, reports[report_id], mode, client=client)
            assert status == "processed", (report_id, mode, extras)
            print(f"recorded {path.name}: {extras['usage']['completions']} exchanges")
    print("fixtures written to", FIXTURE_DIR)
    return 0


if __name__ == "__main__":
    sys.exit(main())
