"""Reference estimators speaking the harness file protocol.

Run as ``python -m scmbench.estimators {oracle,zero,fail} <workdir>``.  Each
reads ``queries.jsonl`` from the work directory and writes ``estimates.jsonl``
with one ``{"id": ..., "estimate": ...}`` object per line.

* ``oracle`` copies ground truths from the ``ground_truth.jsonl`` sidecar,
  which the harness writes only when asked to expose it.
* ``zero`` answers 0 for every query.
* ``fail`` exits with status 1 without writing anything.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def _write(workdir: Path, estimates: dict) -> None:
    lines = [json.dumps({"id": qid, "estimate": val}) for qid, val in estimates.items()]
    (workdir / "estimates.jsonl").write_text("".join(line + "\n" for line in lines))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m scmbench.estimators")
    parser.add_argument("method", choices=["oracle", "zero", "fail"])
    parser.add_argument("workdir", type=Path)
    args = parser.parse_args(argv)
    if args.method == "fail":
        print("estimator failure requested", file=sys.stderr)
        return 1
    queries = _read_jsonl(args.workdir / "queries.jsonl")
    if args.method == "zero":
        _write(args.workdir, {q["id"]: 0.0 for q in queries})
        return 0
    truth = {d["id"]: d["ground_truth"] for d in _read_jsonl(args.workdir / "ground_truth.jsonl")}
    _write(args.workdir, {q["id"]: truth[q["id"]] for q in queries})
    return 0


if __name__ == "__main__":
    sys.exit(main())
