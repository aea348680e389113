"""Command line entry points: train one fold, score one fold."""

from __future__ import annotations

import argparse
import logging
import sys

from .data import GROUP_MATCH, GROUP_POI, GROUP_RANDOM, PatchDataset, TrainerDataError
from .networks import NETWORKS
from .predict import predict_fold, write_scores_csv
from .train import TrainConfig, load_checkpoint, train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuroqc-train",
        description="Train and apply 3D patch classifiers for reconstruction QC.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit one cross-validation fold")
    p.add_argument("--data", required=True, help=".nqcd patch dataset")
    p.add_argument("--folds", required=True, help="folds JSON")
    p.add_argument("--fold", required=True, type=int, help="test fold to hold out")
    p.add_argument("--net", default="vgg11_3d", choices=sorted(NETWORKS))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument(
        "--no-random-controls",
        action="store_true",
        help="train on divergence/match pairs only",
    )
    p.add_argument(
        "--val-fraction",
        type=float,
        default=0.1,
        help="training neurons held out for checkpoint selection",
    )

    p = sub.add_parser("predict", help="score a test fold to CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", required=True)
    p.add_argument("--fold", required=True, type=int)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="scores CSV path")
    p.add_argument(
        "--include-random-controls",
        action="store_true",
        help="also score random-control records",
    )
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "train":
            from .data import read_folds

            _, assignment = read_folds(args.folds)
            cfg = TrainConfig(
                net=args.net,
                max_epochs=args.epochs,
                seed=args.seed,
                val_fraction=args.val_fraction,
                randoms_per_batch=0 if args.no_random_controls else 5,
            )
            data = PatchDataset(args.data)
            result = train(data, assignment, args.fold, cfg, out_dir=args.out)
            logging.info(
                "best epoch %d (val AUC %.4f) -> %s",
                result.best_epoch, result.best_val_auc, args.out,
            )
        else:
            from .data import read_folds

            _, assignment = read_folds(args.folds)
            data = PatchDataset(args.data)
            model, _meta = load_checkpoint(args.checkpoint)
            groups = (GROUP_POI, GROUP_MATCH)
            if args.include_random_controls:
                groups = groups + (GROUP_RANDOM,)
            rows = predict_fold(model, data, assignment, args.fold, groups=groups)
            write_scores_csv(rows, args.out)
            logging.info("%d scores -> %s", len(rows), args.out)
    except TrainerDataError as exc:
        logging.error("%s", exc)
        return 2
    except ValueError as exc:
        logging.error("%s", exc)
        return 1
    except OSError as exc:
        logging.error("%s", exc)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
