"""Command-line entry point: ``primgraph <verb> [options]``.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .evaluation import evaluate_shapes
from .geometry import obj_text, voxelize
from .metrics import ShapeSet
from .model.pipeline import ModelLoadError, PrimitiveGraphModel
from .nn.checkpoint import CheckpointError
from .synthdata.dataset import DatasetError, generate_dataset, read_dataset, write_dataset
from .synthdata.templates import TEMPLATES, get_template

log = logging.getLogger("primgraph")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def thread_count() -> int:
    raw = os.environ.get("PRIMGRAPH_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise UsageError(f"PRIMGRAPH_THREADS must be an integer, got {raw!r}") from exc
    if value < 1:
        raise UsageError("PRIMGRAPH_THREADS must be at least 1")
    return value


# ---------------------------------------------------------------------------
# shape files
# ---------------------------------------------------------------------------
def read_predictions(path) -> dict[str, ShapeSet]:
    """JSONL file of ``{"id": ..., "primitives": [[label, 9 params], ...]}`` records."""
    from .geometry import Primitive
    out: dict[str, ShapeSet] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            rows = rec["primitives"]
            prims = [Primitive(np.array(r[1:], dtype=np.float64)) for r in rows]
            out[str(rec["id"])] = ShapeSet(prims, [int(r[0]) for r in rows])
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}:{lineno}: bad prediction record: {exc}") from exc
    return out


def prediction_record(sample_id: str, shape: ShapeSet) -> str:
    labels = shape.labels or [0] * len(shape)
    rows = [[int(label)] + [float(v) for v in p.params] for p, label in zip(shape.primitives, labels)]
    return json.dumps({"id": sample_id, "primitives": rows})


def export_shape(shape: ShapeSet, fmt: str, path, label_names: dict[int, str] | None = None) -> None:
    if fmt == "obj":
        text = obj_text(shape.primitives, shape.labels, label_names)
    elif fmt == "vox":
        text = voxelize(shape.primitives).to_text()
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise RuntimeError(f"cannot write {path}: {exc}") from exc


def _label_names(category: str) -> dict[int, str] | None:
    try:
        return get_template(category).label_names
    except KeyError:
        return None


def _find_sample(samples, sample_id):
    for s in samples:
        if s.id == sample_id:
            return s
    raise RuntimeError(f"sample {sample_id!r} not found in dataset")


def _parse_range(text: str | None, n: int) -> slice:
    if not text:
        return slice(0, n)
    try:
        a, b = text.split(":")
        return slice(int(a) if a else 0, int(b) if b else n)
    except ValueError as exc:
        raise UsageError(f"--range expects START:STOP, got {text!r}") from exc


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------
def cmd_gen_data(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    samples = generate_dataset(args.template, args.count, seed=args.seed, views_per_object=args.views)
    write_dataset(samples, args.out)
    print(f"wrote {len(samples)} {args.template} samples to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .training import ConfigError, TrainSchedule, build_model, train_stage1, train_stage2

    if args.stage == "reasoning" and not args.init:
        raise UsageError("train --stage reasoning needs --init pointing at the stage-1 (proposal) checkpoint")
    try:
        schedule = TrainSchedule.load(args.config) if args.config else TrainSchedule.desk()
    except (OSError, ConfigError) as exc:
        raise UsageError(f"bad --config: {exc}") from exc
    samples = read_dataset(args.data)
    if not samples:
        raise RuntimeError(f"dataset {args.data} is empty")
    losses: dict[str, list[float]] = {}
    progress = (lambda e, v: print(f"epoch {e}: loss {v:.6f}", flush=True))
    if args.stage == "proposal":
        model = build_model(samples, schedule, agnostic=args.agnostic)
        result = train_stage1(model, samples, schedule, progress)
        losses = {"loss": result.epoch_losses, "count_loss": result.epoch_count_losses}
        model.save(args.out, prefixes=("proposal.",))
    else:
        if not Path(args.init).exists():
            raise UsageError(f"stage-1 checkpoint {args.init} does not exist")
        model = PrimitiveGraphModel.load(args.init, seed=schedule.seed)
        if "proposal" not in model.loaded_stages:
            raise RuntimeError(f"{args.init} holds no proposal.* parameters")
        result = train_stage2(model, samples, schedule, progress=progress)
        losses = {"loss": result.epoch_losses}
        model.save(args.out)
    if args.losses:
        Path(args.losses).write_text(json.dumps(losses, indent=2))
    print(f"saved {args.stage} checkpoint to {args.out}")
    return EXIT_OK


def _predict_all(model: PrimitiveGraphModel, samples, threads: int) -> list[ShapeSet]:
    chunk = 16
    batches = [samples[k:k + chunk] for k in range(0, len(samples), chunk)]

    def run(batch):
        return model.predict_batch([s.depth for s in batch])

    if threads <= 1 or len(batches) == 1:
        results = [run(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, batches))
    return [shape for batch in results for shape in batch]


def cmd_eval(args) -> int:
    if bool(args.ckpt) == bool(args.pred):
        raise UsageError("eval needs exactly one of --ckpt or --pred")
    samples = read_dataset(args.data)
    samples = samples[_parse_range(args.range, len(samples))]
    if not samples:
        raise RuntimeError("no samples selected for evaluation")
    gts = [ShapeSet(s.primitives, s.labels) for s in samples]
    if args.ckpt:
        model = PrimitiveGraphModel.load(args.ckpt)
        if model.loaded_stages != {"proposal", "reasoning"}:
            raise RuntimeError(f"{args.ckpt} does not hold both stages")
        preds = _predict_all(model, samples, thread_count())
        if args.save_pred:
            Path(args.save_pred).write_text(
                "".join(prediction_record(s.id, p) + "\n" for s, p in zip(samples, preds)))
    else:
        table = read_predictions(args.pred)
        missing = [s.id for s in samples if s.id not in table]
        if missing:
            raise RuntimeError(f"prediction file lacks {len(missing)} sample(s), first {missing[0]}")
        preds = [table[s.id] for s in samples]
    report = evaluate_shapes(preds, gts)
    text = json.dumps(report.to_json(), indent=2)
    Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_predict(args) -> int:
    samples = read_dataset(args.data)
    sample = _find_sample(samples, args.sample)
    model = PrimitiveGraphModel.load(args.ckpt)
    shape = model.predict(sample.depth)
    if shape.warning:
        print(f"warning: {shape.warning}", file=sys.stderr)
    export_shape(shape, args.export, args.out, _label_names(sample.category))
    print(f"{len(shape)} primitives written to {args.out}")
    return EXIT_OK


def cmd_export(args) -> int:
    if bool(args.data) == bool(args.pred):
        raise UsageError("export needs exactly one of --data or --pred")
    names = None
    if args.data:
        sample = _find_sample(read_dataset(args.data), args.sample)
        shape = ShapeSet(sample.primitives, sample.labels)
        names = _label_names(sample.category)
    else:
        table = read_predictions(args.pred)
        if args.sample not in table:
            raise RuntimeError(f"sample {args.sample!r} not in {args.pred}")
        shape = table[args.sample]
    export_shape(shape, args.format, args.out, names)
    print(f"{len(shape)} primitives written to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .selfcheck import CHECKS, GRAD_TOLERANCE, run_checks

    modules = [args.module] if args.module else list(CHECKS)
    worst: dict[str, float] = {}
    for name, seed, err in run_checks(modules, range(args.seeds)):
        worst[name] = max(worst.get(name, 0.0), err)
    failed = 0
    for name, err in worst.items():
        ok = err < GRAD_TOLERANCE
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:28s} max rel err {err:.3e}")
    print(f"{len(worst) - failed}/{len(worst)} checks passed (tolerance {GRAD_TOLERANCE:g}, {args.seeds} seeds)")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="primgraph", description="Primitive-based shape abstraction from depth images.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset",
                       description="Generate part-labeled synthetic objects, render depth views and write a dataset directory.")
    p.add_argument("--template", choices=sorted(TEMPLATES), default="chair", help="object template (default: chair)")
    p.add_argument("--count", type=int, required=True, help="number of samples (views) to generate")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--views", type=int, default=5, help="views per object (default: 5)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one stage",
                       description="Train the proposal network (stage 1) or the reasoning network (stage 2, proposal frozen).")
    p.add_argument("--stage", choices=("proposal", "reasoning"), required=True, help="which stage to train")
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--config", help="key = value schedule file (default: desk schedule)")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--init", help="stage-1 checkpoint (required for --stage reasoning)")
    p.add_argument("--agnostic", action="store_true", help="semantic-agnostic mode (single part class); stage 1 only")
    p.add_argument("--losses", help="write per-epoch mean losses to this JSON file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate predictions on a dataset",
                       description="Compute HErr, TAcc, TRec and voxel IoU for a checkpoint or a prediction file.")
    p.add_argument("--data", required=True, help="dataset directory with ground truth")
    p.add_argument("--ckpt", help="two-stage checkpoint to run")
    p.add_argument("--pred", help="JSONL prediction file ({id, primitives: [[label, 9 params], ...]})")
    p.add_argument("--range", help="evaluate samples START:STOP in index order (default: all)")
    p.add_argument("--save-pred", help="with --ckpt, also write predictions as JSONL")
    p.add_argument("--out", required=True, help="output report JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict one sample and export it",
                       description="Run the full model on one dataset sample and export the predicted shape.")
    p.add_argument("--sample", required=True, help="sample id")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--ckpt", required=True, help="two-stage checkpoint")
    p.add_argument("--export", choices=("obj", "vox"), default="obj", help="output format (default: obj)")
    p.add_argument("--out", required=True, help="output path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export", help="export a ground-truth or predicted shape",
                       description="Export a shape from a dataset (ground truth) or a prediction file as OBJ or voxel text.")
    p.add_argument("--sample", required=True, help="sample id")
    p.add_argument("--data", help="dataset directory (export ground truth)")
    p.add_argument("--pred", help="JSONL prediction file (export a prediction)")
    p.add_argument("--format", choices=("obj", "vox"), default="obj", help="output format (default: obj)")
    p.add_argument("--out", required=True, help="output path")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("gradcheck", help="run finite-difference gradient checks",
                       description="Compare analytic and central-difference gradients in float64.")
    p.add_argument("--module", choices=("nn", "model", "training"), help="restrict to one module (default: all)")
    p.add_argument("--seeds", type=int, default=10, help="number of random seeds per check (default: 10)")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verb is None:
            raise UsageError(parser.format_help())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, ValueError, OSError, DatasetError, CheckpointError, ModelLoadError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())
