"""Histograms, confusion matrices, shares, and the report file envelope."""

import io
import json
import threading

import pytest

from ctxlens.errors import InsufficientData
from ctxlens.probe import ProbeResult
from ctxlens.reporting import (
    REPORT_SCHEMA,
    ConfusionMatrix,
    Histogram,
    aggregate_share,
    append_jsonl,
    read_report,
    write_report,
    write_text,
)


def resolved(length):
    return ProbeResult(kind="mcl", resolved_length=length, trace=(), grid_points=(32,), threshold=0.2)


class TestHistogram:
    def test_from_values(self):
        h = Histogram.from_values([48, 32, 32, 96, 32])
        assert h.points == (32, 48, 96)
        assert h.counts == (3, 1, 1)
        assert h.total == 5

    def test_from_pairs_sorts(self):
        h = Histogram.from_pairs([(96, 2), (32, 5)])
        assert h.points == (32, 96)
        assert h.counts == (5, 2)

    def test_csv_format(self):
        h = Histogram.from_values([32, 32, 48])
        assert h.to_csv() == "ell,count\n32,2\n48,1\n"

    def test_validation(self):
        with pytest.raises(InsufficientData):
            Histogram(points=(1, 2), counts=(1,))
        with pytest.raises(InsufficientData):
            Histogram(points=(1,), counts=(-1,))


class TestConfusionMatrix:
    def test_from_labels(self):
        pairs = [(True, True), (True, False), (False, False), (False, True), (True, True)]
        cm = ConfusionMatrix.from_labels(pairs)
        assert cm.to_dict() == {"tp": 2, "fp": 1, "tn": 1, "fn": 1}
        assert cm.total == 5
        assert cm.accuracy == pytest.approx(0.6, abs=1e-12)
        assert cm.tpr == pytest.approx(2 / 3, abs=1e-12)
        assert cm.fpr == pytest.approx(0.5, abs=1e-12)

    def test_degenerate_rates_raise(self):
        cm = ConfusionMatrix.from_labels([(True, True)])
        with pytest.raises(InsufficientData):
            cm.fpr
        cm2 = ConfusionMatrix.from_labels([(False, False)])
        with pytest.raises(InsufficientData):
            cm2.tpr
        with pytest.raises(InsufficientData):
            ConfusionMatrix.from_labels([]).accuracy


class TestAggregateShare:
    def test_exact_ratio(self):
        results = [resolved(32)] * 8 + [resolved(200)] * 2
        assert aggregate_share(results, 32) == 0.8
        assert aggregate_share(results, 96) == 0.8
        assert aggregate_share(results, 200) == 1.0
        assert aggregate_share(results, 31) == 0.0

    def test_accepts_plain_integers(self):
        assert aggregate_share([32, 32, 64, 128], 64) == 0.75

    def test_monotone_in_cutoff(self):
        lengths = [32, 48, 48, 64, 208]
        shares = [aggregate_share(lengths, c) for c in (31, 32, 48, 64, 208)]
        assert shares == sorted(shares)

    def test_unresolved_rejected(self):
        bad = ProbeResult(kind="mcl", resolved_length=None, trace=(), grid_points=(32,), threshold=0.2)
        with pytest.raises(InsufficientData):
            aggregate_share([resolved(32), bad], 32)

    def test_empty_rejected(self):
        with pytest.raises(InsufficientData):
            aggregate_share([], 32)


class TestReportFiles:
    def test_round_trip_and_schema(self, tmp_path):
        path = tmp_path / "out" / "report.json"
        write_report(path, {"answer": 42})
        data = read_report(path)
        assert data["answer"] == 42
        assert data["schema"] == REPORT_SCHEMA

    def test_wrong_schema_rejected(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_text(json.dumps({"schema": "other/9"}))
        with pytest.raises(InsufficientData):
            read_report(path)

    def test_stable_serialization(self, tmp_path):
        payload = {"b": 1, "a": {"z": 2, "y": 3}}
        p1 = write_report(tmp_path / "r1.json", payload)
        p2 = write_report(tmp_path / "r2.json", payload)
        assert p1.read_bytes() == p2.read_bytes()

    def test_no_temp_files_left_behind(self, tmp_path):
        write_report(tmp_path / "r.json", {"k": 1})
        write_text(tmp_path / "t.csv", "ell,count\n")
        leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
        assert leftovers == []

    def test_concurrent_writers_produce_valid_files(self, tmp_path):
        paths = [tmp_path / f"r{i}.json" for i in range(8)]
        threads = [
            threading.Thread(target=write_report, args=(p, {"i": i}))
            for i, p in enumerate(paths)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for i, p in enumerate(paths):
            assert read_report(p)["i"] == i

    def test_append_jsonl_lines_are_self_contained(self):
        buf = io.StringIO()
        for i in range(3):
            append_jsonl(buf, {"i": i})
        lines = buf.getvalue().splitlines()
        assert len(lines) == 3
        assert [json.loads(line)["i"] for line in lines] == [0, 1, 2]
