import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np
from pydantic import ValidationError

from . import settings
from .config import (
    EXPERIMENT_NAMES,
    DatasetSpec,
    ExperimentConfig,
    apply_overrides,
    load_experiment_config,
    resolve_experiment,
)
from .errors import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_USAGE,
    ConfigurationError,
    DataError,
    HPRNNError,
    UsageError,
)
from .experiments import STREAM_DATA, STREAM_INIT, STREAM_SHUFFLE, derive_seed, reproduce_experiment
from .gradients import gradient_check
from .modes import PBTable, PredictionTrace, predict, recognize, train
from .net_core import init_network
from .persistence import load_state, save_state
from .reports import (
    read_dataset,
    read_pb_table,
    write_cost_curve,
    write_dataset,
    write_pb_table,
    write_prediction_traces,
    write_recognition_traces,
)
from .trajectories import make_dataset


logger = logging.getLogger(__name__)

GRADCHECK_SEEDS = range(10)


def _write_json_stdout(data: Any, compact: bool = False) -> None:
    text = json.dumps(data, ensure_ascii=False, separators=(",", ":") if compact else None, indent=None if compact else 2)
    sys.stdout.write(text + "\n")


def _base_config(config: str | None) -> ExperimentConfig:
    return load_experiment_config(config) if config else ExperimentConfig()


def cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = apply_overrides(_base_config(args.config), seed=args.seed, speed_factor=args.speed_factor,
                          noise_sigma=args.noise_sigma)
    update: Dict[str, Any] = {"seed": derive_seed(cfg.seed, STREAM_DATA)}
    if args.shapes:
        update["shapes"] = args.shapes
    if args.colors:
        update["colors"] = args.colors
    if args.repeats is not None:
        update["repeats"] = args.repeats
    try:
        spec = DatasetSpec.model_validate({**cfg.data.model_dump(), **update})
    except ValidationError as exc:
        raise ConfigurationError(f"invalid dataset options ({exc.errors()[0].get('msg')})") from exc
    dataset = make_dataset(spec)
    files = write_dataset(Path(args.out), dataset)
    _write_json_stdout({"wrote": [str(f) for f in files], "sequences": len(files)}, compact=True)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = apply_overrides(_base_config(args.config), seed=args.seed, epochs=args.epochs)
    dataset = read_dataset(Path(args.data))
    out = Path(args.out)
    state = init_network(cfg.network, derive_seed(cfg.seed, STREAM_INIT))
    train_cfg = cfg.train.model_copy(update={"seed": derive_seed(cfg.seed, STREAM_SHUFFLE)})
    trained, table, curve = train(state, dataset, train_cfg)
    save_state(trained, out / "state.npz")
    write_pb_table(out / "pb_table.csv", table, cfg.network.n_pb_d, cfg.network.n_pb_v)
    write_cost_curve(out / "cost_curve.csv", curve)
    _write_json_stdout({"epochs": len(curve), "final_cost": curve[-1], "state": str(out / "state.npz")})
    return EXIT_OK


def cmd_recognize(args: argparse.Namespace) -> int:
    state = load_state(args.state)
    table = read_pb_table(Path(args.pb_table)) if args.pb_table else None
    sequences = read_dataset(Path(args.data))
    gamma = args.gamma
    traces = [recognize(state, seq, args.window, args.epochs, table, gamma) for seq in sequences]
    out = Path(args.out)
    write_recognition_traces(out / "recognition_trace.csv", traces, state.config.n_pb_d, state.config.n_pb_v)
    results = []
    for trace in traces:
        rho_d, rho_v = trace.final_rho if len(trace) else (state.rho_d, state.rho_v)
        results.append({
            "sequence": trace.sequence,
            "label": trace.label,
            "rho_d": [float(v) for v in rho_d],
            "rho_v": [float(v) for v in rho_v],
            "final_cost": trace.records[-1].cost if len(trace) else None,
        })
    _write_json_stdout({"recognized": results})
    return EXIT_OK


def _pb_for(label_name: str, table: PBTable | None, rho_d: Sequence[float] | None, rho_v: Sequence[float] | None):
    if table is None:
        return np.asarray(rho_d, dtype=np.float64), np.asarray(rho_v, dtype=np.float64)
    for entry in table.entries:
        if entry.label.name == label_name:
            return entry.rho_d, entry.rho_v
    raise DataError(f"no PB entry for sequence '{label_name}' in the PB table")


def cmd_predict(args: argparse.Namespace) -> int:
    if args.pb_table is None and (args.rho_d is None or args.rho_v is None):
        raise UsageError("predict needs --pb-table or both --rho-d and --rho-v")
    state = load_state(args.state)
    table = read_pb_table(Path(args.pb_table)) if args.pb_table else None
    traces: List[PredictionTrace] = []
    for seq in read_dataset(Path(args.data)):
        steps = len(seq) - 1 if args.steps is None else args.steps
        if steps >= len(seq):
            raise DataError(f"{seq.label.name}: steps={steps} needs {steps + 1} observed frames, got {len(seq)}")
        rho_d, rho_v = _pb_for(seq.label.name, table, args.rho_d, args.rho_v)
        generated = predict(state, rho_d, rho_v, seq.frames[0], steps)
        traces.append(PredictionTrace(seq.label.name, generated.frames, seq.frames[: steps + 1]))
    out = Path(args.out)
    write_prediction_traces(out / "prediction_trace.csv", traces, state.config.n_output)
    _write_json_stdout({
        "predicted": [
            {"sequence": t.sequence, "unit_mse": [float(v) for v in t.per_unit_mse()]} for t in traces
        ]
    })
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    seeds = GRADCHECK_SEEDS if args.seed is None else [args.seed]
    results = [gradient_check(seed, tolerance=args.tolerance) for seed in seeds]
    worst = max(result.max_error for result in results)
    passed = all(result.passed for result in results)
    _write_json_stdout({
        "max_relative_error": worst,
        "tolerance": args.tolerance,
        "passed": passed,
        "seeds": {str(r.seed): r.max_error for r in results},
    })
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_reproduce(args: argparse.Namespace) -> int:
    name = args.experiment
    cfg = load_experiment_config(args.config) if args.config else resolve_experiment(name)
    if cfg.name != name:
        cfg = cfg.model_copy(update={"name": name})
    cfg = apply_overrides(cfg, seed=args.seed, epochs=args.epochs, speed_factor=args.speed_factor,
                          noise_sigma=args.noise_sigma, output_dir=args.out)
    report = reproduce_experiment(name, cfg)
    _write_json_stdout(report.summary())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_list(compact: bool = False, output: str | None = None) -> int:
    path = settings.CATALOG_PATH
    if path.exists():
        catalog = json.loads(path.read_text(encoding="utf-8"))
    else:
        catalog = [{"name": name} for name in EXPERIMENT_NAMES]
    if output:
        Path(output).write_text(json.dumps(catalog, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        _write_json_stdout({"wrote": output}, compact=True)
        return EXIT_OK
    _write_json_stdout(catalog, compact)
    return EXIT_OK


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="Experiment manifest (experiment.yaml) or folder containing one")
    p.add_argument("--seed", type=int, help="Master seed; every random stream is derived from it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hprnn",
        description="Horizontal-product RNN with parametric biases: data, training, recognition, prediction.",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_gen = sub.add_parser(
        "gen-data",
        help="Generate a synthetic observation dataset as CSV (one file per sequence)",
        description=(
            "Generate noisy observations of the presenter's movements.\n\n"
            "Examples:\n"
            "  python manage.py gen-data --out data/train --seed 42\n"
            "  python manage.py gen-data --out data/circle --shapes circle --repeats 1\n"
        ),
        formatter_class=argparse.RawTextHelpFormatter,
    )
    p_gen.add_argument("--out", required=True, help="Directory for the sequence files")
    _add_overrides(p_gen)
    p_gen.add_argument("--shapes", nargs="+", help="Shapes to draw (cosine, square, circle)")
    p_gen.add_argument("--colors", nargs="+", help="Object colours (yellow, green)")
    p_gen.add_argument("--repeats", type=int, help="Noisy repeats per shape and colour")
    p_gen.add_argument("--speed-factor", type=float, help="Observed movement speed multiplier")
    p_gen.add_argument("--noise-sigma", type=float, help="Image-plane noise standard deviation")

    p_train = sub.add_parser(
        "train",
        help="Train a network on a directory of sequence files",
        description=(
            "Learning mode: shared weights plus one PB pair per sequence.\n\n"
            "Examples:\n"
            "  python manage.py train --data data/train --out runs/train --epochs 5000\n"
        ),
        formatter_class=argparse.RawTextHelpFormatter,
    )
    p_train.add_argument("--data", required=True, help="Sequence file or directory")
    p_train.add_argument("--out", required=True, help="Output directory (state.npz, pb_table.csv, cost_curve.csv)")
    _add_overrides(p_train)
    p_train.add_argument("--epochs", type=int, help="Maximum training epochs")

    p_rec = sub.add_parser(
        "recognize",
        help="Recognize sequences with frozen weights (PB values only are fitted)",
        description=(
            "Recognition mode.\n\n"
            "Examples:\n"
            "  python manage.py recognize --state runs/train/state.npz --data data/test \\\n"
            "      --pb-table runs/train/pb_table.csv --out runs/recognize\n"
        ),
        formatter_class=argparse.RawTextHelpFormatter,
    )
    p_rec.add_argument("--state", required=True, help="Saved network state (.npz)")
    p_rec.add_argument("--data", required=True, help="Sequence file or directory")
    p_rec.add_argument("--out", required=True, help="Output directory (recognition_trace.csv)")
    p_rec.add_argument("--pb-table", help="Training PB table; enables nearest-centroid labels")
    p_rec.add_argument("--window", type=int, help="Use only the last N frames (default: whole sequence)")
    p_rec.add_argument("--epochs", type=int, default=3000, help="Recognition epochs (default: 3000)")
    p_rec.add_argument("--gamma", type=float, help="PB update rate (default: network gamma_recognition)")

    p_pred = sub.add_parser(
        "predict",
        help="Closed-loop prediction from PB values and each sequence's first frame",
        description=(
            "Prediction mode.\n\n"
            "Examples:\n"
            "  python manage.py predict --state runs/train/state.npz --data data/train \\\n"
            "      --pb-table runs/train/pb_table.csv --out runs/predict\n"
            "  python manage.py predict --state state.npz --data seq.csv --rho-d 0.4 --rho-v -1.2 --out runs/p\n"
        ),
        formatter_class=argparse.RawTextHelpFormatter,
    )
    p_pred.add_argument("--state", required=True, help="Saved network state (.npz)")
    p_pred.add_argument("--data", required=True, help="Sequence file or directory (first frame and ground truth)")
    p_pred.add_argument("--out", required=True, help="Output directory (prediction_trace.csv)")
    p_pred.add_argument("--pb-table", help="Take each sequence's PB values from this table")
    p_pred.add_argument("--rho-d", type=float, nargs="+", help="Dorsal PB internal values")
    p_pred.add_argument("--rho-v", type=float, nargs="+", help="Ventral PB internal values")
    p_pred.add_argument("--steps", type=int, help="Steps to generate (default: sequence length - 1)")

    p_grad = sub.add_parser(
        "gradcheck",
        help="Compare BPTT gradients with central finite differences",
        description=(
            "Gradient check on random small networks; exit 0 iff the max relative error <= tolerance.\n\n"
            "Examples:\n"
            "  python manage.py gradcheck\n"
            "  python manage.py gradcheck --seed 7\n"
        ),
        formatter_class=argparse.RawTextHelpFormatter,
    )
    p_grad.add_argument("--seed", type=int, help="Single seed (default: seeds 0-9)")
    p_grad.add_argument("--tolerance", type=float, default=1e-4, help="Maximum relative error (default: 1e-4)")

    p_rep = sub.add_parser(
        "reproduce",
        help="Run one experiment end to end and write its report artifacts",
        description=(
            "Reproduce an experiment; exit 1 when a hard acceptance check fails.\n\n"
            "Examples:\n"
            "  python manage.py reproduce --experiment fig4\n"
            "  python manage.py reproduce --experiment fig8 --speed-factor 3 --seed 7 --out runs/fast\n"
            "  python manage.py reproduce --experiment fig6 --config experiments/fig6/experiment.yaml --epochs 200\n"
        ),
        formatter_class=argparse.RawTextHelpFormatter,
    )
    p_rep.add_argument("--experiment", required=True, choices=EXPERIMENT_NAMES, help="Experiment name")
    _add_overrides(p_rep)
    p_rep.add_argument("--out", help="Output directory (default: $HPRNN_OUTPUT_DIR/<experiment>)")
    p_rep.add_argument("--epochs", type=int, help="Maximum training epochs")
    p_rep.add_argument("--speed-factor", type=float, help="Observed movement speed multiplier")
    p_rep.add_argument("--noise-sigma", type=float, help="Image-plane noise standard deviation")

    p_list = sub.add_parser(
        "list",
        help="List available experiments (JSON)",
        description=(
            "List the experiments in experiments/catalog.json (JSON).\n\n"
            "Examples:\n"
            "  python manage.py list\n"
            "  python manage.py list --compact\n"
            "  python manage.py list --output catalog_dump.json\n"
        ),
        formatter_class=argparse.RawTextHelpFormatter,
    )
    p_list.add_argument("--compact", action="store_true", help="Emit minified JSON (better for pipes)")
    p_list.add_argument("--output", help="Write JSON to file instead of stdout")
    return parser


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "recognize": cmd_recognize,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
    "reproduce": cmd_reproduce,
}


def main(argv: Sequence[str] | None = None) -> int:
    settings.configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        if args.cmd == "list":
            return cmd_list(compact=args.compact, output=args.output)
        return COMMANDS[args.cmd](args)
    except HPRNNError as exc:
        sys.stderr.write(f"[hprnn] {type(exc).__name__}: {exc}\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
