"""Command-line front-end for the localization pipeline.

Subcommands mirror the processing stages (synth, train, infer, fuse,
localize, eval), `pipeline` chains them end to end, and `smooth-demo`
prints target distributions for given frame counts and temperatures.

All randomness flows from one seed; each consuming stage derives its own
sub-seed, so stages rerun in isolation reproduce the pipeline bit for bit.
`--threads` only controls worker counts; outputs are identical for any
value.  Log verbosity comes from the DGL_LOG environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, io, plots
from .classifier import infer, load_model, save_model, train
from .dataset import SyntheticSpec, generate_synthetic, random_prototypes
from .domain import (
    FrameLabelTimeline,
    PipelineConfig,
    Prediction,
    SceneProbabilityMatrix,
    ValidationError,
    frame_labels_from_annotations,
)
from .evaluation import Metrics, evaluate, per_class_results
from .fusion import fuse_scenes
from .localization import eliminate_overlaps, filtered_signals, localize_scene
from .parallel import parallel_map
from .smoothing import density_guided_smooth

log = logging.getLogger(__name__)

# sub-seed tags, one per randomness-consuming stage
SEED_TAG_PROTOTYPES = 0
SEED_TAG_SYNTH = 1
SEED_TAG_TRAIN = 2


def _sub_seed(seed: int, tag: int) -> int:
    return int(
        np.random.SeedSequence([seed, tag]).generate_state(1, np.uint64)[0]
    )


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = io.read_config(args.config) if args.config else PipelineConfig()
    flag_to_field = {
        "seed": "seed",
        "beta": "beta",
        "tau": "tau",
        "omax": "o_max",
        "fps": "fps",
        "epsilon": "epsilon",
        "target": "target_mode",
        "feature_dim": "feature_dim",
        "epochs": "epochs",
    }
    overrides = {}
    for flag, field in flag_to_field.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    return config.with_overrides(**overrides) if overrides else config


def _scene_lengths(
    records, t_c: int
) -> dict[int, int]:
    """Scene length implied by the last window: max start + t_c."""
    lengths: dict[int, int] = {}
    for r in records:
        end = r.start_frame + t_c
        if end > lengths.get(r.scene_id, 0):
            lengths[r.scene_id] = end
    return lengths


def _timelines_from_annotations(
    annotations, scene_lengths: dict[int, int]
) -> dict[int, FrameLabelTimeline]:
    by_scene: dict[int, list] = {sid: [] for sid in scene_lengths}
    for ev in annotations:
        if ev.scene_id not in by_scene:
            raise ValidationError(
                f"annotation for scene {ev.scene_id} has no feature records"
            )
        by_scene[ev.scene_id].append(ev)
    return {
        sid: frame_labels_from_annotations(events, scene_lengths[sid])
        for sid, events in by_scene.items()
    }


# ---------------------------------------------------------------------------
# stage helpers shared by the individual subcommands and `pipeline`


def _run_synth(config: PipelineConfig, args, out_dir: Path):
    proto_rng = np.random.default_rng([config.seed, SEED_TAG_PROTOTYPES])
    prototypes = random_prototypes(
        config.n_classes, config.feature_dim, proto_rng
    )
    spec = SyntheticSpec(
        n_scenes=args.scenes,
        scene_len=args.frames,
        n_views=args.views,
        prototypes=prototypes,
        noise_sigma=args.noise,
        event_len_range=tuple(args.event_len),
        seed=_sub_seed(config.seed, SEED_TAG_SYNTH),
        boundary_ramp=args.ramp,
    )
    records, annotations, timelines = generate_synthetic(spec, config)
    out_dir.mkdir(parents=True, exist_ok=True)
    io.write_feature_store(
        out_dir / "features.bin",
        records,
        config.feature_dim,
        config.segment_len,
    )
    io.write_annotations(out_dir / "annotations.csv", annotations)
    return records, annotations, timelines


def _run_train(config: PipelineConfig, records, timelines, model_path: Path):
    rng = np.random.default_rng([config.seed, SEED_TAG_TRAIN])
    params, report = train(records, timelines, config, rng)
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model_path, params)
    return params, report


def _localize_all(
    matrices, config: PipelineConfig, eop: bool, threads: int
):
    """Filtered signals and (optionally suppressed) predictions per scene."""

    def run(matrix: SceneProbabilityMatrix):
        signals = filtered_signals(matrix, config)
        preds = localize_scene(matrix, config, signals)
        if eop:
            preds = eliminate_overlaps(preds, config.o_max)
        return signals, preds

    return parallel_map(run, list(matrices), threads)


def _write_signals(out_dir: Path, scene_id: int, signals) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"# scene {scene_id}: filtered per-class signals, p_0..p_{{n-1}}"]
    for row in signals:
        lines.append(",".join(repr(float(v)) for v in row))
    (out_dir / io.scene_matrix_filename(scene_id)).write_text(
        "\n".join(lines) + "\n", encoding="utf-8"
    )


def _metrics_lines(result, m: Metrics) -> list[str]:
    return [
        f"tp={result.tp}",
        f"fp={result.fp}",
        f"fn={result.fn}",
        f"precision={m.precision:.6f}",
        f"recall={m.recall:.6f}",
        f"f1={m.f1:.6f}",
    ]


def _write_report(
    report_dir: Path, result, m: Metrics, per_class
) -> None:
    report_dir.mkdir(parents=True, exist_ok=True)
    io.atomic_write_text(
        report_dir / "metrics.txt", "\n".join(_metrics_lines(result, m)) + "\n"
    )
    rows = ["# class_id,tp,fp,fn,precision,recall,f1"]
    for c, (res, cm) in sorted(per_class.items()):
        rows.append(
            f"{c},{res.tp},{res.fp},{res.fn},"
            f"{cm.precision:.6f},{cm.recall:.6f},{cm.f1:.6f}"
        )
    io.atomic_write_text(report_dir / "per_class.csv", "\n".join(rows) + "\n")
    plots.plot_metrics_bars(
        {c: cm for c, (_, cm) in per_class.items()},
        report_dir / "figures" / "metrics_per_class.png",
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    config = _load_config(args)
    _run_synth(config, args, Path(args.out))
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    header, records = io.read_feature_store(args.features)
    config = config.with_overrides(
        feature_dim=header.n_f, segment_len=header.t_c
    )
    annotations = io.read_annotations(args.annotations, config.n_classes)
    timelines = _timelines_from_annotations(
        annotations, _scene_lengths(records, config.segment_len)
    )
    _, report = _run_train(config, records, timelines, Path(args.out))
    last = report.epochs[-1]
    print(f"epochs={len(report.epochs)}")
    print(f"final_loss={last.mean_loss:.6f}")
    print(f"final_accuracy={last.accuracy:.6f}")
    return 0


def cmd_infer(args) -> int:
    config = _load_config(args)
    header, records = io.read_feature_store(args.features)
    params = load_model(args.model)
    if params.dims[0] != header.n_f:
        raise ValidationError(
            f"model expects {params.dims[0]} features, store has {header.n_f}"
        )
    probs = infer(params, records, threads=args.threads)
    io.write_segment_probs(args.out, probs)
    return 0


def cmd_fuse(args) -> int:
    config = _load_config(args)
    segs = io.read_segment_probs(args.probs, config.n_classes)
    matrices = fuse_scenes(segs, config.segment_len, threads=args.threads)
    io.write_scene_matrices(args.out, matrices)
    return 0


def cmd_localize(args) -> int:
    config = _load_config(args)
    matrices = io.read_scene_matrices(args.scenes)
    results = _localize_all(matrices, config, not args.no_eop, args.threads)
    preds: list[Prediction] = []
    for matrix, (signals, scene_preds) in zip(matrices, results):
        preds.extend(scene_preds)
        if args.emit_signals:
            _write_signals(Path(args.emit_signals), matrix.scene_id, signals)
        if args.plot:
            plots.plot_scene_signals(
                matrix.scene_id,
                signals,
                config.tau,
                Path(args.plot) / f"scene_{matrix.scene_id:06d}.png",
                scene_preds,
            )
    io.write_predictions(args.out, preds)
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    annotations = io.read_annotations(args.annotations, config.n_classes)
    preds = io.read_predictions(args.predictions, config.n_classes)
    result, m = evaluate(annotations, preds, config.fps, config.tolerance_s)
    for line in _metrics_lines(result, m):
        print(line)
    per_class = per_class_results(
        annotations, preds, config.fps, config.tolerance_s
    )
    if args.per_class:
        print("# class_id,tp,fp,fn,precision,recall,f1")
        for c, (res, cm) in sorted(per_class.items()):
            print(
                f"{c},{res.tp},{res.fp},{res.fn},"
                f"{cm.precision:.6f},{cm.recall:.6f},{cm.f1:.6f}"
            )
    if args.report:
        _write_report(Path(args.report), result, m, per_class)
    return 0


def cmd_pipeline(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    records, annotations, timelines = _run_synth(config, args, out)
    timings["synth"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    params, _ = _run_train(config, records, timelines, out / "model.bin")
    timings["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    probs = infer(params, records, threads=args.threads)
    io.write_segment_probs(out / "segment_probs.csv", probs)
    timings["infer"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    scene_lens = _scene_lengths(records, config.segment_len)
    matrices = fuse_scenes(
        probs, config.segment_len, scene_lens, threads=args.threads
    )
    io.write_scene_matrices(out / "scenes", matrices)
    timings["fuse"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    results = _localize_all(matrices, config, not args.no_eop, args.threads)
    preds: list[Prediction] = []
    for matrix, (signals, scene_preds) in zip(matrices, results):
        preds.extend(scene_preds)
        if args.emit_signals:
            _write_signals(out / "signals", matrix.scene_id, signals)
        plots.plot_scene_signals(
            matrix.scene_id,
            signals,
            config.tau,
            out / "report" / "figures" / f"scene_{matrix.scene_id:06d}.png",
            scene_preds,
        )
    io.write_predictions(out / "predictions.csv", preds)
    timings["localize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    result, m = evaluate(annotations, preds, config.fps, config.tolerance_s)
    per_class = per_class_results(
        annotations, preds, config.fps, config.tolerance_s
    )
    _write_report(out / "report", result, m, per_class)
    timings["eval"] = time.perf_counter() - t0

    manifest = {
        "command": "pipeline",
        "seed": config.seed,
        "config": dataclasses.asdict(config),
        "synth": {
            "scenes": args.scenes,
            "frames": args.frames,
            "views": args.views,
            "noise": args.noise,
            "event_len": list(args.event_len),
            "ramp": args.ramp,
        },
        "outputs": sorted(
            str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()
        ),
        "versions": {
            "dgloc": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "timings_s": timings,
    }
    io.atomic_write_text(
        out / "manifest.json",
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )
    for line in _metrics_lines(result, m):
        print(line)
    return 0


def _parse_counts(text: str) -> list[int]:
    try:
        counts = [int(t) for t in text.split(",")]
    except ValueError:
        raise ValidationError(f"bad counts {text!r}") from None
    if not counts or any(c < 0 for c in counts):
        raise ValidationError(f"counts must be non-negative, got {text!r}")
    return counts


def cmd_smooth_demo(args) -> int:
    config = _load_config(args)
    counts_list = [_parse_counts(t) for t in args.counts]
    width = len(counts_list[0])
    if any(len(c) != width for c in counts_list):
        raise ValidationError("all --counts must have the same length")
    betas = (
        [float(b) for b in args.betas.split(",")]
        if args.betas
        else [config.beta]
    )
    lines = []
    probs_grid = []
    for counts in counts_list:
        row = []
        for beta in betas:
            probs = density_guided_smooth(np.array(counts), beta)
            row.append(probs)
            lines.append(
                f"# counts={','.join(str(v) for v in counts)} beta={beta:g}"
            )
            lines.append(",".join(f"{p:.6f}" for p in probs))
        probs_grid.append(row)
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        io.atomic_write_text(args.out, text)
    if args.plot:
        plots.plot_smoothing_bars(counts_list, betas, probs_grid, args.plot)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="master random seed")
    common.add_argument(
        "--threads", type=int, default=1, help="worker threads (default 1)"
    )
    common.add_argument("--beta", type=float, help="smoothing temperature")
    common.add_argument("--tau", type=float, help="peak threshold")
    common.add_argument("--omax", type=float, help="max allowed IoU overlap")
    common.add_argument("--fps", type=float, help="frames per second")
    common.add_argument(
        "--epsilon", type=float, help="classic smoothing weight"
    )
    common.add_argument(
        "--target",
        choices=("density", "classic"),
        help="training target mode",
    )
    common.add_argument("--feature-dim", type=int, help="feature vector size")
    common.add_argument("--epochs", type=int, help="training epochs")

    parser = argparse.ArgumentParser(
        prog="dgloc",
        description="Temporal action localization pipeline on segment features.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_synth_flags(p):
        p.add_argument("--scenes", type=int, default=5)
        p.add_argument("--frames", type=int, default=9000)
        p.add_argument("--views", type=int, default=3)
        p.add_argument("--noise", type=float, default=0.1)
        p.add_argument(
            "--event-len",
            type=lambda t: [int(v) for v in t.split(",")],
            default=[250, 350],
            metavar="MIN,MAX",
        )
        p.add_argument(
            "--ramp",
            type=int,
            default=0,
            help="boundary ramp length in frames (0 = sharp switches)",
        )

    p = sub.add_parser("synth", parents=[common], help="generate synthetic data")
    add_synth_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train the classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="segment probabilities")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="segment probs csv")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("fuse", parents=[common], help="fuse into frame signals")
    p.add_argument("--probs", required=True, help="segment probs csv")
    p.add_argument("--out", required=True, help="scene matrix directory")
    p.set_defaults(fn=cmd_fuse)

    p = sub.add_parser("localize", parents=[common], help="detect events")
    p.add_argument("--scenes", required=True, help="scene matrix directory")
    p.add_argument("--out", required=True, help="predictions csv")
    p.add_argument("--no-eop", action="store_true", help="skip overlap removal")
    p.add_argument("--emit-signals", help="directory for filtered signals")
    p.add_argument("--plot", help="directory for signal figures")
    p.set_defaults(fn=cmd_localize)

    p = sub.add_parser("eval", parents=[common], help="score predictions")
    p.add_argument("--annotations", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--per-class", action="store_true")
    p.add_argument("--report", help="directory for report files and figures")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser(
        "pipeline", parents=[common], help="synth through eval in one run"
    )
    add_synth_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-eop", action="store_true", help="skip overlap removal")
    p.add_argument("--emit-signals", action="store_true")
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser(
        "smooth-demo", parents=[common], help="print target distributions"
    )
    p.add_argument(
        "--counts",
        action="append",
        required=True,
        help="comma-separated frame counts, repeatable",
    )
    p.add_argument("--betas", help="comma-separated temperatures")
    p.add_argument("--out", help="also write the rows to this file")
    p.add_argument("--plot", help="render a bar-chart grid to this file")
    p.set_defaults(fn=cmd_smooth_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("DGL_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - map anything else to exit 1
        log.exception("unhandled failure")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
