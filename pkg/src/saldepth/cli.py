"""Command-line entry point: gen-toy, train, eval, predict.

Exit codes: 0 success, 1 runtime failure, 2 bad flags or config. Runs are
reproducible from the printed effective configuration plus the seed.
"""

from __future__ import annotations

import argparse
import logging
import sys
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .config import Ablation, Backbone, LossWeights, ToyDatasetSpec, TrainingConfig
from .data import generate_toy_dataset
from .metrics import EVAL_CSV_HEADER, evaluate_dataset, write_eval_csv
from .trainer import NonFiniteLossError, TrainState, infer, train

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

IMAGE_EXTS = (".png", ".jpg", ".jpeg")


class ConfigFileError(Exception):
    pass


# keys accepted in a run-config file, with their defaults mirroring
# TrainingConfig (which defaults to the published hyperparameters)
_CONFIG_KEYS = {
    "rgb_root": "",
    "rgbd_root": "",
    "lambda_s": 1.75,
    "lambda_d": 1.0,
    "lambda_init": 0.2,
    "lambda_adv_s": 0.002,
    "lambda_adv_d": 0.001,
    "lr_generator": 1e-4,
    "lr_discriminator": 5e-5,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "batch_size": 4,
    "steps": 10000,
    "input_size": 256,
    "backbone": "vgg19",
    "pretrained_weights": "",
    "seed": 0,
    "ablation": "FULL",
    "checkpoint_dir": "runs/default",
    "checkpoint_every": 1000,
    "detach_refinement_query": False,
    "patch_grid": -1,
    "torch_threads": 0,
}


def _coerce(key: str, raw: str):
    default = _CONFIG_KEYS[key]
    if isinstance(default, bool):
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigFileError(f"config key {key!r}: expected a boolean, got {raw!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def parse_config_file(path) -> dict:
    """Strict flat key=value parser; unknown keys are fatal."""
    values = dict(_CONFIG_KEYS)
    path = Path(path)
    if not path.exists():
        raise ConfigFileError(f"config file not found: {path}")
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigFileError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigFileError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _coerce(key, raw.strip())
        except (ValueError, ConfigFileError) as exc:
            raise ConfigFileError(f"{path}:{lineno}: {exc}") from exc
    return values


def config_from_values(values: dict) -> TrainingConfig:
    return TrainingConfig(
        loss_weights=LossWeights(
            lambda_s=values["lambda_s"], lambda_d=values["lambda_d"],
            lambda_init=values["lambda_init"], lambda_adv_s=values["lambda_adv_s"],
            lambda_adv_d=values["lambda_adv_d"]),
        lr_generator=values["lr_generator"],
        lr_discriminator=values["lr_discriminator"],
        adam_betas=(values["adam_beta1"], values["adam_beta2"]),
        batch_size=values["batch_size"],
        steps=values["steps"],
        input_size=values["input_size"],
        backbone=Backbone(values["backbone"]),
        pretrained_weights=(Path(values["pretrained_weights"])
                            if values["pretrained_weights"] else None),
        seed=values["seed"],
        ablation=Ablation.parse(values["ablation"]),
        checkpoint_dir=Path(values["checkpoint_dir"]),
        checkpoint_every=values["checkpoint_every"],
        detach_refinement_query=values["detach_refinement_query"],
        patch_grid=None if values["patch_grid"] < 0 else values["patch_grid"],
        torch_threads=values["torch_threads"],
    )


def _print_effective_config(values: dict) -> None:
    print("effective configuration:")
    for key in sorted(values):
        print(f"  {key} = {values[key]}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_toy(args) -> int:
    if args.n_rgb <= 0 or args.n_rgbd <= 0:
        print("gen-toy: --n-rgb and --n-rgbd must be positive", file=sys.stderr)
        return EXIT_USAGE
    spec = ToyDatasetSpec(n_rgb=args.n_rgb, n_rgbd=args.n_rgbd,
                          image_size=args.size,
                          shapes_per_image=(args.shapes_min, args.shapes_max),
                          seed=args.seed)
    try:
        spec.validate()
    except ValueError as exc:
        print(f"gen-toy: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        summary = generate_toy_dataset(spec, args.out)
    except OSError as exc:
        print(f"gen-toy: generation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"wrote {summary['n_rgb']} rgb + {summary['n_rgbd']} rgbd samples "
          f"({summary['image_size']}x{summary['image_size']}) under {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        values = parse_config_file(args.config)
    except ConfigFileError as exc:
        print(f"train: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.rgb_root:
        values["rgb_root"] = args.rgb_root
    if args.rgbd_root:
        values["rgbd_root"] = args.rgbd_root
    if args.ablation:
        values["ablation"] = args.ablation
    if args.steps is not None:
        values["steps"] = args.steps
    if args.seed is not None:
        values["seed"] = args.seed
    if args.checkpoint_dir:
        values["checkpoint_dir"] = args.checkpoint_dir
    if args.tiny:
        values["backbone"] = "tiny"
        if values["input_size"] == _CONFIG_KEYS["input_size"]:
            values["input_size"] = 64

    if not values["rgb_root"] or not values["rgbd_root"]:
        print("train: rgb_root and rgbd_root must be set (config file or flags)",
              file=sys.stderr)
        return EXIT_USAGE

    try:
        config = config_from_values(values)
    except ValueError as exc:
        print(f"train: {exc}", file=sys.stderr)
        return EXIT_USAGE

    _print_effective_config(values)
    try:
        final_path, records = train(config, values["rgb_root"], values["rgbd_root"],
                                    resume_from=args.resume,
                                    progress_every=args.progress_every)
    except NonFiniteLossError as exc:
        print(f"train: aborted: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:
        print(f"train: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"finished {len(records)} step(s); final checkpoint: {final_path}")
    return EXIT_OK


def _predict_dir(state: TrainState, inputs: list[Path], out_dir: Path) -> int:
    """Write one 8-bit grayscale map per readable input; returns count."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for path in inputs:
        try:
            img = Image.open(path).convert("RGB")
        except OSError as exc:
            log.warning("skipping unreadable image %s: %s", path, exc)
            continue
        rgb = np.asarray(img, dtype=np.float32).transpose(2, 0, 1) / 255.0
        pred = infer(rgb, state)
        Image.fromarray((pred * 255).round().astype(np.uint8), mode="L").save(
            out_dir / (path.stem + ".png"))
        written += 1
    return written


def _collect_images(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_EXTS)
    return [path]


def cmd_eval(args) -> int:
    if bool(args.pred) == bool(args.checkpoint):
        print("eval: provide either --pred/--gt or --checkpoint/--data",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.pred:
            if not args.gt:
                print("eval: --pred requires --gt", file=sys.stderr)
                return EXIT_USAGE
            pred_dir, gt_dir = Path(args.pred), Path(args.gt)
            name = args.name or pred_dir.name
        else:
            if not args.data:
                print("eval: --checkpoint requires --data", file=sys.stderr)
                return EXIT_USAGE
            data_root = Path(args.data)
            gt_dir = data_root / "gt"
            state = TrainState.load(args.checkpoint)
            out_dir = Path(args.out) if args.out else Path(
                tempfile.mkdtemp(prefix="saldepth_eval_"))
            images = _collect_images(data_root / "images")
            n = _predict_dir(state, images, out_dir)
            if n == 0:
                print("eval: no images could be predicted", file=sys.stderr)
                return EXIT_FAILURE
            pred_dir = out_dir
            name = args.name or data_root.name
        result = evaluate_dataset(pred_dir, gt_dir)
    except (ValueError, OSError) as exc:
        print(f"eval: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(EVAL_CSV_HEADER)
    print(result.csv_row(name))
    if args.csv:
        write_eval_csv(args.csv, name, result)
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        state = TrainState.load(args.checkpoint)
    except Exception as exc:
        print(f"predict: cannot load checkpoint: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    inputs = _collect_images(Path(args.input))
    if not inputs:
        print(f"predict: no images found at {args.input}", file=sys.stderr)
        return EXIT_FAILURE
    written = _predict_dir(state, inputs, Path(args.out))
    if written == 0:
        print("predict: all inputs failed", file=sys.stderr)
        return EXIT_FAILURE
    print(f"wrote {written} saliency map(s) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saldepth",
        description="Semi-supervised RGB-D salient object detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-toy", help="generate the synthetic toy dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-rgb", type=int, default=8)
    p.add_argument("--n-rgbd", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shapes-min", type=int, default=1)
    p.add_argument("--shapes-max", type=int, default=3)
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("train", help="train a model from a run-config file")
    p.add_argument("--config", required=True, help="key=value run-config file")
    p.add_argument("--ablation", choices=[a.value for a in Ablation])
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tiny", action="store_true",
                   help="tiny backbone preset (64x64 unless input_size is set)")
    p.add_argument("--rgb-root")
    p.add_argument("--rgbd-root")
    p.add_argument("--checkpoint-dir")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--progress-every", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score saliency maps with MAE/F/S/E")
    p.add_argument("--pred", help="directory of prediction maps")
    p.add_argument("--gt", help="directory of ground-truth masks")
    p.add_argument("--checkpoint", help="run inference with this checkpoint first")
    p.add_argument("--data", help="dataset root with images/ and gt/")
    p.add_argument("--out", help="where checkpoint-mode predictions are written")
    p.add_argument("--csv", help="append the result row to this CSV file")
    p.add_argument("--name", help="dataset name for the CSV row")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="RGB-only saliency inference")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="an image or a directory")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
