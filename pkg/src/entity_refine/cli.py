"""Command-line entry points: run, eval, synth-bench, viz.

Exit codes: 0 success, 1 usage/config error, 2 provider failure, 3 I/O.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .backend import (BackendError, ExternalProvider, NoiseSpec, OracleProvider,
                      PrecomputedProvider, SceneSpec, random_scene)
from .config import ConfigError, PipelineConfig
from .evaluation import (EvalError, average_precision, read_ndjson, write_ndjson)
from .masks import MaskError
from .pipeline import ABLATIONS, PipelineSession, Variant
from .report import entity_map_to_image, synth_bench, write_report
from . import viz as vizmod

EXIT_OK, EXIT_USAGE, EXIT_PROVIDER, EXIT_IO = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


_TUNABLES = [
    ("theta-o", "theta_o", float), ("gamma-o", "gamma_o", float),
    ("n-t", "n_t", float), ("grid-coarse", "grid_coarse", int),
    ("grid-fine", "grid_fine", int), ("delta", "delta", float),
    ("tau", "tau", float), ("top-k", "top_k", int),
    ("merge-threshold", "merge_threshold", float),
    ("containment-gamma", "containment_gamma", float), ("rho", "rho", float),
    ("coverage-fraction", "coverage_fraction", float),
    ("containment-frac", "containment_frac", float),
    ("min-region-px", "min_region_px", int), ("min-gain-px", "min_gain_px", int),
    ("felz-scale", "felz_scale", float), ("felz-sigma", "felz_sigma", float),
    ("felz-min-size", "felz_min_size", int),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--provider",
                        help="oracle | dir:<path> | exec:<command>")
    parser.add_argument("--seed", type=int, default=None)
    for flag, _, typ in _TUNABLES:
        parser.add_argument(f"--{flag}", type=typ, default=None,
                            help=argparse.SUPPRESS)


def _build_config(args) -> PipelineConfig:
    try:
        config = (PipelineConfig.from_file(args.config) if args.config
                  else PipelineConfig())
        overrides = {dest: getattr(args, dest.replace("-", "_"))
                     for _, dest, _ in _TUNABLES}
        if args.provider is not None:
            overrides["provider"] = args.provider
        if args.seed is not None:
            overrides["seed"] = args.seed
        return config.override(**overrides)
    except (ConfigError, OSError) as exc:
        raise CliError(f"config: {exc}", EXIT_USAGE) from exc


def _make_provider(config: PipelineConfig, args):
    spec = config.provider
    try:
        if spec == "oracle":
            if getattr(args, "scene", None):
                scene = SceneSpec.from_json(Path(args.scene).read_text())
            else:
                scene = random_scene(config.seed, noise=NoiseSpec(seed=config.seed))
            return OracleProvider(scene)
        if spec.startswith("dir:"):
            return PrecomputedProvider(spec[4:])
        if spec.startswith("exec:"):
            image = getattr(args, "image", None)
            if not image:
                raise CliError("exec provider requires --image", EXIT_USAGE)
            return ExternalProvider(spec[5:], image)
    except FileNotFoundError as exc:
        raise CliError(str(exc), EXIT_IO) from exc
    except (BackendError, MaskError) as exc:
        raise CliError(f"provider: {exc}", EXIT_PROVIDER) from exc
    raise CliError(f"unknown provider {spec!r}", EXIT_USAGE)


# -- subcommands ----------------------------------------------------------

def cmd_run(args) -> int:
    config = _build_config(args)
    provider = _make_provider(config, args)
    variant = Variant(mmg=not args.no_mmg, emr=not args.no_emr,
                      usr=not args.no_usr)
    session = PipelineSession(provider, config)
    try:
        out = session.run(variant)
    except BackendError as exc:
        raise CliError(f"provider failure: {exc}", EXIT_PROVIDER) from exc
    image_id = args.image_id or (Path(args.scene).stem if args.scene
                                 else f"seed-{config.seed}")
    try:
        write_ndjson(args.output, [entity_map_to_image(out.final, image_id)],
                     with_scores=True)
        if args.dump_stages:
            dump = Path(args.dump_stages)
            dump.mkdir(parents=True, exist_ok=True)
            from .masks import EntityMap
            stage1 = EntityMap.build(out.stage1, provider.height, provider.width,
                                     require_disjoint=False)
            write_ndjson(dump / "stage1.ndjson",
                         [entity_map_to_image(stage1, image_id)], True)
            write_ndjson(dump / "after_emr.ndjson",
                         [entity_map_to_image(out.after_emr, image_id)], True)
            write_ndjson(dump / "final.ndjson",
                         [entity_map_to_image(out.final, image_id)], True)
    except OSError as exc:
        raise CliError(f"cannot write output: {exc}", EXIT_IO) from exc
    finally:
        if hasattr(provider, "close"):
            provider.close()
    print(f"wrote {len(out.final)} masks to {args.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        preds = read_ndjson(args.pred)
        gts = read_ndjson(args.gt)
    except (OSError, json.JSONDecodeError, MaskError) as exc:
        raise CliError(f"cannot read inputs: {exc}", EXIT_IO) from exc
    try:
        result = average_precision(preds, gts)
    except EvalError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    print(f"ap\t{result.ap:.4f}")
    print(f"ap50\t{result.ap50:.4f}")
    print(f"ap75\t{result.ap75:.4f}")
    if args.out:
        Path(args.out).write_text(json.dumps(result.to_dict(), indent=2))
    if args.figure:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        ts = [t for t, _ in result.per_threshold]
        aps = [v for _, v in result.per_threshold]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(ts, aps, marker="o")
        ax.set_xlabel("IoU threshold")
        ax.set_ylabel("AP")
        ax.set_ylim(0, 1.05)
        fig.tight_layout()
        fig.savefig(args.figure, dpi=120)
        plt.close(fig)
    return EXIT_OK


def cmd_synth_bench(args) -> int:
    config = _build_config(args)
    noise = NoiseSpec(args.jitter, args.score_noise, args.dropout,
                      config.seed)
    variants = ABLATIONS if args.all_variants else (
        Variant(False, False, False), Variant(True, True, True))
    results = synth_bench(args.scenes, noise, config, variants=variants,
                          scene_size=(args.size, args.size),
                          base_seed=config.seed)
    table, figure = write_report(results, args.out_dir)
    print(table.read_text(), end="")
    print(f"report: {table} {figure}")
    return EXIT_OK


def cmd_viz(args) -> int:
    try:
        preds = read_ndjson(args.pred)
    except (OSError, json.JSONDecodeError, MaskError) as exc:
        raise CliError(f"cannot read predictions: {exc}", EXIT_IO) from exc
    if not preds:
        raise CliError("prediction file is empty", EXIT_USAGE)
    im = preds[0]
    if args.scene:
        scene = SceneSpec.from_json(Path(args.scene).read_text())
        image = OracleProvider(scene).image()
    elif args.image:
        image = np.asarray(Image.open(args.image).convert("RGB")) / 255.0
    else:
        raise CliError("viz needs --image or --scene", EXIT_USAGE)
    from .masks import EntityMap
    em = EntityMap.build(im.masks, im.height, im.width, require_disjoint=False)
    if image.shape[:2] != (im.height, im.width):
        raise CliError("image size does not match predictions", EXIT_USAGE)
    out = Path(args.output)
    vizmod.save_png(vizmod.overlay(em, image), out)
    labels_path = out.with_name(out.stem + "_labels.png")
    vizmod.save_png(vizmod.label_image(em), labels_path)
    print(f"wrote {out} and {labels_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entity-refine",
        description="Training-free entity-level refinement of promptable-"
                    "segmenter masks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the refinement pipeline")
    _add_config_flags(p_run)
    p_run.add_argument("--scene", help="scene JSON for the oracle provider")
    p_run.add_argument("--image", help="image path (exec provider)")
    p_run.add_argument("--image-id", default=None)
    p_run.add_argument("-o", "--output", default="predictions.ndjson")
    p_run.add_argument("--dump-stages", default=None,
                       help="directory for per-stage mask dumps")
    p_run.add_argument("--no-mmg", action="store_true")
    p_run.add_argument("--no-emr", action="store_true")
    p_run.add_argument("--no-usr", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score predictions against ground truth")
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--gt", required=True)
    p_eval.add_argument("--out", default=None, help="JSON report path")
    p_eval.add_argument("--figure", default=None, help="AP-vs-threshold PNG")
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser("synth-bench", help="synthetic benchmark table")
    _add_config_flags(p_bench)
    p_bench.add_argument("--scenes", type=int, default=20)
    p_bench.add_argument("--jitter", type=int, default=2)
    p_bench.add_argument("--score-noise", type=float, default=0.05)
    p_bench.add_argument("--dropout", type=float, default=0.3)
    p_bench.add_argument("--size", type=int, default=96)
    p_bench.add_argument("--all-variants", action="store_true",
                         help="include single-module-disabled variants")
    p_bench.add_argument("--out-dir", default="bench-report")
    p_bench.set_defaults(func=cmd_synth_bench)

    p_viz = sub.add_parser("viz", help="render overlay and label map PNGs")
    p_viz.add_argument("--pred", required=True)
    p_viz.add_argument("--image", default=None)
    p_viz.add_argument("--scene", default=None)
    p_viz.add_argument("-o", "--output", default="overlay.png")
    p_viz.set_defaults(func=cmd_viz)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except BackendError as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
