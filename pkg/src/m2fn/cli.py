"""Command-line entry point: ``m2fn <verb> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure
(non-finite loss), 4 nothing to plot.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_NOTHING = 0, 1, 2, 3, 4

log = logging.getLogger("m2fn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, config=True):
    if config:
        p.add_argument("--config", help="run config file (key = value lines)")
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", choices=("tiny", "full"))
    p.add_argument("--loss", choices=("wmse", "kld", "emd"))
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="m2fn", description="multi-step modality fusion for image assessment")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic click-log dataset")
    _common(p, config=False)
    p.add_argument("--n-instances", type=int, default=2000)
    p.add_argument("--image-size", type=int)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    p = sub.add_parser("aggregate", help="aggregate click logs to CTR instances")
    p.add_argument("input", help="click log (.csv with header or .jsonl)")
    p.add_argument("--min-impressions", type=int, default=100)
    p.add_argument("--image-dir", default="")
    p.add_argument("--out", required=True, help="aggregated .jsonl path")

    for verb, helptext in (("train", "train a model"), ("ablate", "run an ablation grid")):
        p = sub.add_parser(verb, help=helptext)
        _common(p)
        p.add_argument("--train", dest="train_path")
        p.add_argument("--test", dest="test_path")
        p.add_argument("--image-dir")
        p.add_argument("--epochs", type=int)
        if verb == "ablate":
            p.add_argument("--grid", choices=("modules", "masks"), default="modules")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(p)
    p.add_argument("checkpoint")
    p.add_argument("data", help="aggregated .jsonl")
    p.add_argument("--image-dir")

    p = sub.add_parser("gradcam", help="Grad-CAM heatmap for one instance")
    _common(p)
    p.add_argument("checkpoint")
    p.add_argument("data", help="aggregated .jsonl")
    p.add_argument("--image-dir")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--layer", default="block1")
    p.add_argument("--target", type=int)

    p = sub.add_parser("plot", help="render an epoch log, ablation table or heatmap")
    p.add_argument("--epoch-log")
    p.add_argument("--table")
    p.add_argument("--heatmap", help=".npz written by the gradcam verb")
    p.add_argument("--out", required=True)
    return parser


def _run_config(args):
    from .harness.config import RunConfig, load_run_config, full_scale

    run = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    if args.scale == "full" and run.model.backbone_scale != "full":
        run = full_scale(run)
    elif args.scale == "tiny":
        run = run.with_model(backbone_scale="tiny")
    if args.loss:
        mode = "regression" if args.loss == "wmse" else "distribution"
        run = replace(run, loss=args.loss, model=run.model.with_changes(output_mode=mode))
    for key in ("seed", "train_path", "test_path", "image_dir", "epochs"):
        v = getattr(args, key, None)
        if v is not None:
            run = replace(run, **{key: v})
    if args.out:
        run = replace(run, out_dir=args.out)
    return run


def cmd_synth(args):
    from .data.aggregate import aggregate_logs
    from .data.io import save_image, write_click_log
    from .data.synthetic import generate_synthetic_dataset

    out = Path(args.out or "synthetic")
    size = args.image_size or (224 if args.scale == "full" else 32)
    data = generate_synthetic_dataset(args.seed or 0, args.n_instances, size)
    (out / "images").mkdir(parents=True, exist_ok=True)
    for inst in data:
        path = out / "images" / f"{inst.image_id}.png"
        if not path.exists():
            save_image(path, inst.image.pixels)
    n = write_click_log(out / f"clicks.{args.format}", (r for s in data for r in s.records))
    with open(out / "truth.jsonl", "w") as f:
        for inst in data:
            f.write(json.dumps({"image_id": inst.image_id, "attributes": inst.attributes,
                                "probability": inst.probability, "background": inst.image.background,
                                "text_position": inst.image.text_position,
                                "sprite": inst.image.has_sprite}) + "\n")
    print(f"wrote {len(data)} instances, {n} exposure records to {out}")
    return EXIT_OK


def cmd_aggregate(args):
    from .data.aggregate import aggregate_logs, totals
    from .data.io import read_click_log, write_aggregated

    instances = aggregate_logs(read_click_log(args.input), args.min_impressions)
    write_aggregated(args.out, instances, args.image_dir or None)
    m, mc = totals(instances)
    print(f"{len(instances)} instances ({m} impressions, {mc} clicks) -> {args.out}")
    return EXIT_OK


def cmd_train(args):
    from .harness.config import format_run_config
    from .harness.pipeline import prepare_from_files
    from .harness.train import evaluate_model, train

    run = _run_config(args)
    prepared = prepare_from_files(run)
    result = train(run, prepared.train, extra=prepared.extra)
    out = Path(run.out_dir)
    (out / "run.cfg").write_text(format_run_config(run))
    if prepared.test is not None and len(prepared.test) >= 2:
        report = evaluate_model(result.model, prepared.test)
        (out / "test_report.json").write_text(report.to_json())
        print(f"test {report.to_json()}")
    print(f"best epoch {result.best_epoch}; checkpoint {result.checkpoint}")
    return EXIT_OK


def cmd_eval(args):
    from .harness.checkpoint import load_state
    from .harness.pipeline import prepare_eval_data
    from .harness.train import evaluate_checkpoint

    run = _run_config(args)
    _, _, extra = load_state(args.checkpoint)
    data = prepare_eval_data(args.data, extra, run)
    report = evaluate_checkpoint(args.checkpoint, data)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "report.json").write_text(report.to_json())
    print(report.to_json())
    return EXIT_OK


def cmd_ablate(args):
    from .harness.ablation import BLOCK_MASK_GRID, MODULE_GRID, format_table, run_ablation_grid, write_table
    from .harness.pipeline import prepare_from_files

    run = _run_config(args)
    prepared = prepare_from_files(run)
    if prepared.test is None:
        raise ValueError("ablation needs a test split")
    grid = MODULE_GRID if args.grid == "modules" else BLOCK_MASK_GRID
    rows = run_ablation_grid(run, grid, prepared.train, prepared.test)
    Path(run.out_dir).mkdir(parents=True, exist_ok=True)
    write_table(rows, Path(run.out_dir) / "ablation.jsonl")
    print(format_table(rows))
    return EXIT_OK


def cmd_gradcam(args):
    from .harness.checkpoint import load_checkpoint
    from .harness.gradcam import gradcam
    from .harness.pipeline import prepare_eval_data
    from .harness.plots import plot_heatmap

    run = _run_config(args)
    model, extra = load_checkpoint(args.checkpoint)
    data = prepare_eval_data(args.data, extra, run)
    if not 0 <= args.index < len(data):
        raise UsageError(f"--index must be in [0, {len(data)})")
    i = args.index
    aux = data.aux[i] if model.config.use_aux else None
    hm = gradcam(model, data.images[i], aux, args.layer, args.target)
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pixels = np.clip(np.rint((data.images[i].numpy().transpose(1, 2, 0) + 0.5) * 255), 0, 255).astype(np.uint8)
    np.savez(out / f"gradcam_{args.layer}.npz", values=hm.values, image=pixels,
             layer_name=hm.layer_name, target=str(hm.target))
    paths = plot_heatmap(hm, pixels, out)
    print(f"heatmap {hm.values.shape} for {hm.layer_name} -> {paths[0]}")
    return EXIT_OK


def cmd_plot(args):
    from .harness.ablation import AblationRow
    from .harness.gradcam import Heatmap
    from .harness.plots import NothingToPlot, plot_ablation, plot_epoch_log, plot_heatmap
    from .harness.train import read_epoch_log
    from .objectives import MetricReport

    paths = []
    if args.epoch_log:
        paths += plot_epoch_log(read_epoch_log(args.epoch_log), args.out)
    if args.table:
        rows = []
        for line in Path(args.table).read_text().splitlines():
            if line.strip():
                d = json.loads(line)
                rep = MetricReport.from_dict(d["report"]) if d.get("report") else None
                rows.append(AblationRow(d["name"], d.get("config", {}), rep, d.get("error")))
        paths += plot_ablation(rows, args.out)
    if args.heatmap:
        z = np.load(args.heatmap)
        target = str(z["target"])
        hm = Heatmap(z["values"], str(z["layer_name"]), int(target) if target.isdigit() else target)
        paths += plot_heatmap(hm, z["image"], args.out)
    if not paths:
        raise NothingToPlot("nothing to plot")
    for p in paths:
        print(p)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "aggregate": cmd_aggregate, "train": cmd_train, "eval": cmd_eval,
            "ablate": cmd_ablate, "gradcam": cmd_gradcam, "plot": cmd_plot}


def main(argv=None) -> int:
    from .data.schema import MalformedRecord
    from .harness.checkpoint import CheckpointError
    from .harness.plots import NothingToPlot
    from .harness.train import NumericFailure

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except UsageError as e:
        print(f"m2fn: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailure as e:
        print(f"m2fn: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except NothingToPlot as e:
        print(f"m2fn: {e}", file=sys.stderr)
        return EXIT_NOTHING
    except (MalformedRecord, CheckpointError, FileNotFoundError, ValueError, KeyError, OSError) as e:
        print(f"m2fn: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
