"""Acceptance criteria 1-10, run through the ``report`` command.

The suite runs the full report twice: once timed (criterion 10 budget and
per-criterion runtimes) and once more to compare the JSON bytes. Each test
prints one pass/fail line; the lines are repeated in the terminal summary.
"""

import json
import os
import time

import pytest

from ccgeo.cli import run

JOBS = os.cpu_count() or 1
SEED = 0
RUNTIME_LIMITS = {1: 30.0, 3: 120.0}
REPORT_LIMIT = 600.0


@pytest.fixture(scope="module")
def full_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("report") / "first.json"
    timings = {}
    start = time.perf_counter()
    status = run(["report", "--seed", str(SEED), "--jobs", str(JOBS), "--out", str(out)], timings=timings)
    elapsed = time.perf_counter() - start
    doc = json.loads(out.read_text())
    by_id = {c["id"]: c for c in doc["result"]["criteria"]}
    return {"status": status, "elapsed": elapsed, "timings": timings, "path": out, "criteria": by_id}


def _describe(criterion) -> str:
    failed = [c["name"] for c in criterion["checks"] if not c["passed"]]
    return "all checks passed" if not failed else "failed: " + "; ".join(failed)


def _report_line(log, cid, passed, text):
    line = f"criterion {cid:>2}: {'PASS' if passed else 'FAIL'}  {text}"
    print(line)
    log.append(line)


@pytest.mark.parametrize("cid", range(1, 10))
def test_criterion(full_report, acceptance_log, cid):
    crit = full_report["criteria"][cid]
    limit = RUNTIME_LIMITS.get(cid)
    seconds = full_report["timings"][cid]
    within = limit is None or seconds < limit
    text = f"{crit['title']}: {_describe(crit)}"
    if limit is not None:
        text += f" (runtime {seconds:.1f} s, limit {limit:.0f} s)"
    _report_line(acceptance_log, cid, crit["passed"] and within, text)
    assert crit["passed"], _describe(crit)
    assert within, f"runtime {seconds:.1f} s exceeds {limit} s"


def test_criterion_10_runtime_and_determinism(full_report, acceptance_log, tmp_path):
    second = tmp_path / "second.json"
    status = run(["report", "--seed", str(SEED), "--jobs", str(JOBS), "--out", str(second)])
    identical = second.read_bytes() == full_report["path"].read_bytes()
    fast = full_report["elapsed"] < REPORT_LIMIT
    ok = identical and fast and status == full_report["status"] == 0
    _report_line(acceptance_log, 10,
                 ok, f"full report in {full_report['elapsed']:.1f} s on {JOBS} worker(s), byte-identical rerun: {identical}")
    assert full_report["status"] == 0 and status == 0
    assert fast, f"report took {full_report['elapsed']:.1f} s"
    assert identical
