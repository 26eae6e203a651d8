"""CSV/JSON artifacts, sequence files and the per-directory run ledger."""

from __future__ import annotations

import csv
import datetime
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

from .errors import DataError
from .modes import PBEntry, PBTable, PredictionTrace, RecognitionTrace
from .net_core import ObservationSequence, SequenceLabel


logger = logging.getLogger(__name__)

LEDGER_NAME = "MANIFEST.json"
SEQUENCE_HEADER = ["t_index", "in0", "in1", "in2", "in3", "shape", "color", "repeat"]


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
    """Write rows with a fixed header; the header is written even with no rows."""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(header), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: _cell(value) for key, value in row.items()})
    atomic_write_text(path, buffer.getvalue())
    logger.info("wrote %s", path)
    return path


def write_json(path: Path, data: Any) -> Path:
    atomic_write_text(path, json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + "\n")
    logger.info("wrote %s", path)
    return path


def vector_columns(prefix: str, size: int) -> List[str]:
    return [f"{prefix}_{i}" for i in range(size)]


def vector_cells(prefix: str, values: np.ndarray) -> Dict[str, float]:
    return {f"{prefix}_{i}": float(v) for i, v in enumerate(np.ravel(values))}


# Sequence files

def sequence_filename(label: SequenceLabel) -> str:
    return f"{label.shape}_{label.color}_{label.repeat:02d}.csv"


def write_sequence(path: Path, seq: ObservationSequence) -> Path:
    if seq.frames.shape[1] != 4:
        raise DataError(f"sequence files hold 4-component frames, got {seq.frames.shape[1]}")
    label = seq.label or SequenceLabel("sequence", "unlabelled", 0)
    rows = [
        {
            "t_index": t,
            **{f"in{k}": frame[k] for k in range(4)},
            "shape": label.shape,
            "color": label.color,
            "repeat": label.repeat,
        }
        for t, frame in enumerate(seq.frames)
    ]
    return write_csv(path, SEQUENCE_HEADER, rows)


def write_dataset(directory: Path, dataset: Sequence[ObservationSequence]) -> List[Path]:
    return [
        write_sequence(directory / sequence_filename(seq.label or SequenceLabel("sequence", "unlabelled", i)), seq)
        for i, seq in enumerate(dataset)
    ]


def read_sequence(path: Path) -> ObservationSequence:
    if not path.exists():
        raise DataError(f"sequence file not found: {path}")
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or list(reader.fieldnames) != SEQUENCE_HEADER:
            raise DataError(f"{path}: expected header {','.join(SEQUENCE_HEADER)}")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: sequence file has no frames")
    try:
        rows.sort(key=lambda row: int(row["t_index"]))
        frames = np.array([[float(row[f"in{k}"]) for k in range(4)] for row in rows])
        first = rows[0]
        label = SequenceLabel(first["shape"], first["color"], int(first["repeat"]))
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed sequence row ({exc})") from exc
    return ObservationSequence(frames, label)


def read_dataset(source: Path) -> List[ObservationSequence]:
    """A single sequence file, or every ``*.csv`` in a directory sorted by name."""
    if source.is_file():
        return [read_sequence(source)]
    if not source.is_dir():
        raise DataError(f"no sequence data at {source}")
    files = sorted(p for p in source.glob("*.csv"))
    if not files:
        raise DataError(f"no sequence files (*.csv) in {source}")
    return [read_sequence(p) for p in files]


# Run ledger

def load_ledger(directory: Path) -> Dict[str, Any]:
    path = directory / LEDGER_NAME
    if not path.exists():
        return {"entries": []}
    return json.loads(path.read_text(encoding="utf-8"))


def record_run(
    directory: Path,
    experiment: str,
    source: str,
    seed: int,
    config: Dict[str, Any],
    thresholds: Dict[str, Any],
    files: Sequence[Path],
) -> Dict[str, Any]:
    ledger = load_ledger(directory)
    entry = {
        "experiment": experiment,
        "source": source,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": seed,
        "config": config,
        "thresholds": thresholds,
        "actions": [{"file": Path(f).name, "type": "write"} for f in files],
    }
    ledger.setdefault("entries", []).append(entry)
    write_json(directory / LEDGER_NAME, ledger)
    return entry


# Mode artifacts

def write_cost_curve(path: Path, curve: Sequence[float]) -> Path:
    return write_csv(path, ["epoch", "cost"], ({"epoch": e, "cost": c} for e, c in enumerate(curve, start=1)))


def pb_table_header(n_pb_d: int, n_pb_v: int) -> List[str]:
    return (
        ["label", "shape", "color", "repeat"]
        + vector_columns("rho_d", n_pb_d)
        + vector_columns("rho_v", n_pb_v)
        + vector_columns("pb_d", n_pb_d)
        + vector_columns("pb_v", n_pb_v)
    )


def write_pb_table(path: Path, table: PBTable, n_pb_d: int, n_pb_v: int) -> Path:
    rows = (
        {
            "label": entry.label.name,
            "shape": entry.label.shape,
            "color": entry.label.color,
            "repeat": entry.label.repeat,
            **vector_cells("rho_d", entry.rho_d),
            **vector_cells("rho_v", entry.rho_v),
            **vector_cells("pb_d", entry.pb_d),
            **vector_cells("pb_v", entry.pb_v),
        }
        for entry in table.entries
    )
    return write_csv(path, pb_table_header(n_pb_d, n_pb_v), rows)


def read_pb_table(path: Path) -> PBTable:
    if not path.exists():
        raise DataError(f"PB table not found: {path}")
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        fields = list(reader.fieldnames or [])
        rho_d_cols = [f for f in fields if f.startswith("rho_d_")]
        rho_v_cols = [f for f in fields if f.startswith("rho_v_")]
        if not rho_d_cols or not rho_v_cols:
            raise DataError(f"{path}: not a PB table (missing rho_d_*/rho_v_* columns)")
        try:
            entries = [
                PBEntry(
                    SequenceLabel(row["shape"], row["color"], int(row["repeat"])),
                    np.array([float(row[c]) for c in rho_d_cols]),
                    np.array([float(row[c]) for c in rho_v_cols]),
                )
                for row in reader
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: malformed PB table row ({exc})") from exc
    return PBTable(entries)


def write_recognition_traces(path: Path, traces: Sequence[RecognitionTrace], n_pb_d: int, n_pb_v: int) -> Path:
    header = (
        ["sequence", "epoch", "cost"]
        + vector_columns("rho_d", n_pb_d)
        + vector_columns("rho_v", n_pb_v)
        + vector_columns("pb_d", n_pb_d)
        + vector_columns("pb_v", n_pb_v)
    )
    rows = (
        {
            "sequence": trace.sequence,
            "epoch": record.epoch,
            "cost": record.cost,
            **vector_cells("rho_d", record.rho_d),
            **vector_cells("rho_v", record.rho_v),
            **vector_cells("pb_d", record.pb_d),
            **vector_cells("pb_v", record.pb_v),
        }
        for trace in traces
        for record in trace.records
    )
    return write_csv(path, header, rows)


def write_prediction_traces(path: Path, traces: Sequence[PredictionTrace], n_output: int) -> Path:
    header = (
        ["sequence", "step"]
        + vector_columns("out", n_output)
        + vector_columns("true", n_output)
        + vector_columns("sq_err", n_output)
    )
    rows = (
        {
            "sequence": trace.sequence,
            "step": step,
            **vector_cells("out", trace.generated[step]),
            **vector_cells("true", trace.truth[step]),
            **vector_cells("sq_err", errors),
        }
        for trace in traces
        for step, errors in enumerate(trace.squared_errors())
    )
    return write_csv(path, header, rows)
