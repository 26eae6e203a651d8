import csv
import json

import numpy as np
import pytest

from hprnn.config import DatasetSpec
from hprnn.errors import DataError
from hprnn.modes import PBEntry, PBTable, PredictionTrace, RecognitionRecord, RecognitionTrace
from hprnn.net_core import ObservationSequence, SequenceLabel
from hprnn.reports import (
    LEDGER_NAME,
    SEQUENCE_HEADER,
    load_ledger,
    read_dataset,
    read_pb_table,
    read_sequence,
    record_run,
    sequence_filename,
    write_cost_curve,
    write_csv,
    write_dataset,
    write_pb_table,
    write_prediction_traces,
    write_recognition_traces,
    write_sequence,
)
from hprnn.trajectories import make_dataset


def _rows(path):
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


def test_write_csv_always_writes_the_header(tmp_path):
    path = write_csv(tmp_path / "empty.csv", ["epoch", "cost"], [])
    assert _rows(path) == [["epoch", "cost"]]


def test_cost_curve_rows(tmp_path):
    path = write_cost_curve(tmp_path / "cost_curve.csv", [2.5, 0.1])
    assert _rows(path) == [["epoch", "cost"], ["1", "2.5"], ["2", "0.1"]]


def test_sequence_files_round_trip_exactly(tmp_path):
    dataset = make_dataset(DatasetSpec(repeats=2))
    files = write_dataset(tmp_path, dataset)
    assert files[0].name == "cosine_yellow_00.csv"
    assert _rows(files[0])[0] == SEQUENCE_HEADER
    loaded = read_dataset(tmp_path)
    assert len(loaded) == len(dataset)
    by_name = {seq.label.name: seq for seq in loaded}
    for seq in dataset:
        np.testing.assert_array_equal(by_name[seq.label.name].frames, seq.frames)
        assert by_name[seq.label.name].label == seq.label


def test_sequence_filename():
    assert sequence_filename(SequenceLabel("square", "green", 3)) == "square_green_03.csv"


def test_read_sequence_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(DataError, match="header"):
        read_sequence(bad)
    with pytest.raises(DataError):
        read_sequence(tmp_path / "missing.csv")
    with pytest.raises(DataError):
        read_dataset(tmp_path / "nowhere")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(DataError):
        read_dataset(empty)


def test_write_sequence_requires_four_components(tmp_path):
    with pytest.raises(DataError):
        write_sequence(tmp_path / "x.csv", ObservationSequence(np.zeros((3, 2))))


def test_pb_table_round_trip(tmp_path):
    table = PBTable([
        PBEntry(SequenceLabel("cosine", "yellow", 0), np.array([0.1]), np.array([-0.3])),
        PBEntry(SequenceLabel("square", "green", 4), np.array([1.25]), np.array([2.0])),
    ])
    path = write_pb_table(tmp_path / "pb_table.csv", table, 1, 1)
    rows = _rows(path)
    assert rows[0] == ["label", "shape", "color", "repeat", "rho_d_0", "rho_v_0", "pb_d_0", "pb_v_0"]
    assert len(rows) == 3
    loaded = read_pb_table(path)
    np.testing.assert_array_equal(loaded.activations(), table.activations())
    assert [e.label for e in loaded.entries] == [e.label for e in table.entries]


def test_read_pb_table_rejects_other_files(tmp_path):
    path = write_cost_curve(tmp_path / "cost_curve.csv", [1.0])
    with pytest.raises(DataError):
        read_pb_table(path)


def test_trace_reports(tmp_path):
    trace = RecognitionTrace(
        [RecognitionRecord(1, 0.5, np.array([0.1]), np.array([0.2]))], label="cosine-yellow", sequence="s"
    )
    path = write_recognition_traces(tmp_path / "recognition_trace.csv", [trace], 1, 1)
    rows = _rows(path)
    assert rows[0][:3] == ["sequence", "epoch", "cost"]
    assert rows[1][:3] == ["s", "1", "0.5"]

    truth = np.zeros((3, 4))
    prediction = PredictionTrace("s", truth + 0.5, truth)
    path = write_prediction_traces(tmp_path / "prediction_trace.csv", [prediction], 4)
    rows = _rows(path)
    assert rows[0][:3] == ["sequence", "step", "out_0"]
    assert rows[0][-1] == "sq_err_3"
    assert len(rows) == 4
    assert rows[1][-1] == "0.25"


def test_empty_trace_reports_are_header_only(tmp_path):
    path = write_prediction_traces(tmp_path / "prediction_trace.csv", [], 4)
    assert len(_rows(path)) == 1


def test_record_run_appends_to_the_ledger(tmp_path):
    assert load_ledger(tmp_path) == {"entries": []}
    for seed in (1, 2):
        record_run(tmp_path, "fig4", "test", seed, {"seed": seed}, {"t": 1.0}, [tmp_path / "pb_table.csv"])
    ledger = json.loads((tmp_path / LEDGER_NAME).read_text(encoding="utf-8"))
    assert [entry["seed"] for entry in ledger["entries"]] == [1, 2]
    assert ledger["entries"][0]["actions"] == [{"file": "pb_table.csv", "type": "write"}]
    assert ledger["entries"][0]["experiment"] == "fig4"


def test_read_pb_table_rejects_repeated_labels(tmp_path):
    path = tmp_path / "pb_table.csv"
    path.write_text(
        "label,shape,color,repeat,rho_d_0,rho_v_0,pb_d_0,pb_v_0\n"
        "cosine-yellow-00,cosine,yellow,0,0.1,0.2,0.1,0.2\n"
        "cosine-yellow-00,cosine,yellow,0,0.3,0.4,0.3,0.4\n",
        encoding="utf-8",
    )
    with pytest.raises(DataError, match="more than once"):
        read_pb_table(path)
