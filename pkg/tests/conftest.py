import os
from pathlib import Path

import pytest

from _synth import tiny_bert

_acceptance_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    key = (number, title)
    if report.when == "setup" and report.skipped:
        _acceptance_results.setdefault(key, []).append("SKIP")
    elif report.when == "call":
        state = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        _acceptance_results.setdefault(key, []).append(state)
    elif report.failed:
        _acceptance_results.setdefault(key, []).append("FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), states in sorted(_acceptance_results.items()):
        if "FAIL" in states:
            verdict = "FAIL"
        elif all(s == "SKIP" for s in states):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"[{verdict}] {number:>2}. {title}")


@pytest.fixture(scope="session")
def bert_dir(tmp_path_factory):
    return tiny_bert(tmp_path_factory.mktemp("tinybert"))


@pytest.fixture
def write_rows(tmp_path):
    """Write (text, label) rows to a dataset file and return its path."""

    def _write(rows, name="data.csv"):
        import csv
        import json

        path = tmp_path / name
        suffix = path.suffix
        with path.open("w", encoding="utf-8", newline="") as fh:
            if suffix == ".jsonl":
                for i, (text, label) in enumerate(rows):
                    fh.write(json.dumps({"id": str(i), "text": text, "label": label}, ensure_ascii=False) + "\n")
            else:
                writer = csv.writer(fh, delimiter="\t" if suffix == ".tsv" else ",", lineterminator="\n")
                writer.writerow(["id", "text", "label"])
                for i, (text, label) in enumerate(rows):
                    writer.writerow([str(i), text, label])
        return path

    return _write


def external_path(env: str) -> Path | None:
    value = os.environ.get(env)
    return Path(value) if value and Path(value).exists() else None
