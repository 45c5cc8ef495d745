"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import imageio, pipeline
from .config import load_config, load_manifest
from .errors import DataError
from .losses import LossWeights

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON or TOML pipeline config")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. growth.segment_length=4 (repeatable)")
    p.add_argument("--seed", type=int, dest="master_seed", help="master seed")


def _config(args, **extra):
    overrides = {k: v for k, v in extra.items() if v is not None}
    if getattr(args, "master_seed", None) is not None:
        overrides["master_seed"] = args.master_seed
    return load_config(args.config, overrides, args.sets)


def _print_json(obj) -> None:
    sys.stdout.write(pipeline.dump_json(obj))


def _cmd_gen(args):
    resize = None
    if args.resize:
        try:
            w, h = (int(v) for v in args.resize.lower().split("x"))
        except ValueError:
            raise UsageError(f"--resize expects WxH, got {args.resize!r}") from None
        resize = [w, h]
    cfg = _config(
        args,
        masks_per_dataset=args.masks_per_dataset,
        erosion_iterations=args.erosion_iterations,
        attractor_count=args.attractor_count,
        resize=resize,
    )
    manifests = [load_manifest(m) for m in args.manifest]
    run_log = pipeline.cmd_gen(manifests, cfg, args.out, timings=args.timings)
    print(f"wrote {len(run_log['items'])} masks to {args.out}")


def _cmd_augment(args):
    cfg = _config(args)
    manifests = [load_manifest(m) for m in args.manifest]
    run_log = pipeline.cmd_augment(manifests, args.mixers, cfg, args.out)
    print(f"wrote {len(run_log['items'])} images to {args.out}")


def _cmd_eval(args):
    cfg = _config(args, thin_threshold_tau=args.tau, binarize_threshold=args.threshold)
    report = pipeline.cmd_eval(
        args.pred, args.gt, args.roi, cfg, args.report, overlay_dir=args.overlay, thin=args.thin
    )
    means = report.means()
    print(" ".join(f"{k}={'NA' if v is None else f'{v:.6f}'}" for k, v in means.items()))


def _cmd_distance(args):
    _print_json(pipeline.cmd_distance(args.features, args.out))


def _cmd_ttest(args):
    _print_json(pipeline.cmd_ttest(args.a, args.b, args.column))


def _cmd_losses(args):
    arrays = {}
    for key in ("gen", "real", "d_real", "d_fake_paired", "d_fake_unpaired", "seg_pred", "seg_gt"):
        path = getattr(args, key)
        if path is not None:
            arrays[key] = imageio.read_array(path)
    if not arrays and not args.multiscale:
        raise UsageError("no loss inputs given")
    weights = LossWeights(args.lambda_l1, args.lambda_adv, args.lambda_1, args.lambda_gp)
    result = pipeline.cmd_losses(
        arrays,
        gp_paired=args.gp_paired,
        gp_unpaired=args.gp_unpaired,
        weights=weights,
        convention="as_printed" if args.as_printed else "nll",
        multiscale=[imageio.read_array(p) for p in args.multiscale],
    )
    _print_json(result)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vesselaug", description="Synthetic vessel masks, style augmentation and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate synthetic vessel masks")
    p.add_argument("manifest", nargs="+", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--masks-per-dataset", type=int)
    p.add_argument("--erosion-iterations", type=int)
    p.add_argument("--attractor-count", type=int)
    p.add_argument("--resize", metavar="WxH")
    p.add_argument("--timings", action="store_true", help="record per-item seconds in the run log")
    _add_config_args(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("augment", help="style-augment dataset images")
    p.add_argument("manifest", nargs="+", type=Path)
    p.add_argument("--mixers", required=True, help="directory of mixing images, or 'self'")
    p.add_argument("--out", type=Path, required=True)
    _add_config_args(p)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("pred", type=Path)
    p.add_argument("gt", type=Path)
    p.add_argument("--roi", type=Path, help="directory of field-of-view masks")
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--overlay", type=Path, help="write TP/FP/FN overlays here")
    p.add_argument("--thin", action="store_true", help="add thin/thick vessel DSC")
    p.add_argument("--tau", type=float, help="thin/thick radius threshold in pixels")
    p.add_argument("--threshold", type=float, help="binarization threshold on v/255")
    _add_config_args(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("distance", help="mean distance between domain feature centers")
    p.add_argument("features", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=_cmd_distance)

    p = sub.add_parser("ttest", help="paired t-test between two score files")
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)
    p.add_argument("--column", default="dsc", help="metric column when the inputs are eval reports")
    p.set_defaults(func=_cmd_ttest)

    p = sub.add_parser("losses", help="evaluate loss terms on stored arrays")
    for key in ("gen", "real", "d_real", "d_fake_paired", "d_fake_unpaired", "seg_pred", "seg_gt"):
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=Path)
    p.add_argument("--multiscale", type=Path, action="append", default=[], help="per-scale score map (repeatable)")
    p.add_argument("--gp-paired", type=float, default=0.0)
    p.add_argument("--gp-unpaired", type=float, default=0.0)
    defaults = LossWeights()
    p.add_argument("--lambda-l1", type=float, default=defaults.lambda_l1)
    p.add_argument("--lambda-adv", type=float, default=defaults.lambda_adv)
    p.add_argument("--lambda-1", type=float, default=defaults.lambda_1)
    p.add_argument("--lambda-gp", type=float, default=defaults.lambda_gp)
    p.add_argument("--as-printed", action="store_true", help="flip the sign of the generator adversarial and paired fake terms")
    p.set_defaults(func=_cmd_losses)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
