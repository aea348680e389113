"""Command-line surface for the reconstruction QC pipeline.

Machine-readable outputs go only to files named by flags; everything a
human reads goes to standard error. Exit codes: 0 success, 1 usage
error, 2 data error, 3 I/O error. All randomness flows from explicit
`--seed` flags, so every subcommand is reproducible bit for bit.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .corpus import CorpusManifest, generate_corpus_dir
from .dataset import (
    append_dataset,
    build_pairs,
    build_pool,
    export_dataset,
    split_folds,
)
from .errors import DataError, NeuroQcError
from .matching import DEFAULT_THRESHOLD, MatchConfig
from .metrics import evaluate_csv
from .poi import PoiLabelSet, label_pois, sample_controls
from .swc import load_swc
from .synthetic import SynthParams
from .volume import PATCH_SIZE, load_volume

logger = logging.getLogger("neuroqc")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _split_key(key: str) -> tuple[int, str]:
    """'12/wrong_1' -> (12, 'wrong_1')."""
    try:
        nid, label = key.split("/", 1)
        return int(nid), label
    except ValueError:
        raise DataError(f"malformed reconstruction key '{key}'")


def _parse_ids(text: str) -> list[int]:
    """Comma list with ranges: '1-4,9' -> [1, 2, 3, 4, 9]."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError(f"empty id range '{part}'")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("no neuron ids given")
    return out


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"dims must be 'nx,ny,nz', got '{text}'")
    return tuple(parts)


# -- subcommand handlers ---------------------------------------------------


def _cmd_validate(args) -> int:
    rc = 0
    for path in args.files:
        try:
            r = load_swc(path)
        except NeuroQcError as exc:
            logger.error("%s: %s", path, exc)
            rc = 2
            continue
        logger.info(
            "%s: OK (%d points, %d roots)", path, len(r), len(r.roots)
        )
    return rc


def _cmd_label(args) -> int:
    wrong = load_swc(
        args.wrong, neuron_id=args.neuron_id, label=Path(args.wrong).stem
    )
    correct = load_swc(
        args.correct, neuron_id=args.neuron_id, label=Path(args.correct).stem
    )
    cfg = MatchConfig(threshold=args.threshold)
    labels = label_pois(wrong, correct, cfg, workers=args.workers)
    labels.write_json(args.out)
    logger.info(
        "%d POIs (threshold %g) -> %s", len(labels), args.threshold, args.out
    )
    return 0


def _cmd_crop(args) -> int:
    labels = PoiLabelSet.read_json(args.labels)
    w_nid, w_label = _split_key(labels.wrong)
    c_nid, c_label = _split_key(labels.correct)
    wrong = load_swc(args.wrong, neuron_id=w_nid, label=w_label)
    correct = load_swc(args.correct, neuron_id=c_nid, label=c_label)
    vol = load_volume(args.volume)
    records = build_pairs(
        [labels],
        {labels.wrong: wrong, labels.correct: correct},
        {wrong.neuron_id: vol},
        size=args.size,
    )
    writer = append_dataset if args.append else export_dataset
    writer(records, args.out, dim=args.size)
    logger.info(
        "%d records (%d pairs) %s %s",
        len(records), len(records) // 2,
        "appended to" if args.append else "written to", args.out,
    )
    return 0


def _cmd_pool(args) -> int:
    man = CorpusManifest.load(args.corpus)
    recons = [man.load_correct(n) for n in man.neurons]
    exclude = set()
    for n in man.neurons:
        key = f"{n.neuron_id}/correct"
        for w in n.wrong:
            for _, control_id, _ in man.load_truth(w).pairs():
                exclude.add((key, control_id))
    refs = sample_controls(recons, args.n, exclude=exclude, seed=args.seed)
    records = build_pool(
        refs, {r.key: r for r in recons}, man.load_volumes(), size=args.size
    )
    writer = append_dataset if args.append else export_dataset
    writer(records, args.out, dim=args.size)
    logger.info(
        "%d control candidates (%d excluded) -> %s",
        len(records), len(exclude), args.out,
    )
    return 0


def _cmd_split(args) -> int:
    if args.ids:
        ids = _parse_ids(args.ids)
    else:
        ids = CorpusManifest.load(args.corpus).neuron_ids()
    folds = split_folds(ids, k=args.k, seed=args.seed)
    folds.write_json(args.out)
    logger.info(
        "%d neurons into %d folds %s -> %s",
        len(ids), args.k, folds.sizes(), args.out,
    )
    return 0


def _cmd_synth(args) -> int:
    params = SynthParams(
        dims=_parse_dims(args.dims),
        spacing=args.spacing,
        n_points=args.points,
        noise_std=args.noise_std,
        seed=args.seed,
    )
    man = generate_corpus_dir(
        args.out,
        args.neurons,
        params,
        threshold=args.threshold,
        group_size=args.group,
        errors_per_wrong=args.errors,
        wrong_min=args.wrong_min,
        wrong_max=args.wrong_max,
    )
    n_wrong = sum(len(n.wrong) for n in man.neurons)
    logger.info(
        "corpus at %s: %d neurons, %d wrong reconstructions, %d volumes",
        args.out, len(man.neurons), n_wrong, len(man.volumes),
    )
    return 0


def _cmd_eval(args) -> int:
    rep = evaluate_csv(args.scores, threshold=args.threshold)
    print(rep.render(), file=sys.stderr)
    if args.out:
        rep.write_json(args.out)
        logger.info("report -> %s", args.out)
    return 0


# -- parser wiring ---------------------------------------------------------


def _parser() -> _Parser:
    p = _Parser(
        prog="neuroqc",
        description="Locate and learn from the points where neuron "
        "reconstructions go wrong.",
    )
    p.add_argument(
        "-v", "--verbose", action="store_true", help="debug logging"
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", help="lint SWC reconstruction files")
    sp.add_argument("files", nargs="+", help="SWC files to check")
    sp.set_defaults(func=_cmd_validate)

    sp = sub.add_parser(
        "label", help="locate points of interest in a wrong reconstruction"
    )
    sp.add_argument("--wrong", required=True)
    sp.add_argument("--correct", required=True)
    sp.add_argument("--out", required=True, help="labelset JSON output")
    sp.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    sp.add_argument("--neuron-id", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=_cmd_label)

    sp = sub.add_parser(
        "crop", help="cut labeled patch pairs into a .nqcd dataset"
    )
    sp.add_argument("--labels", required=True, help="labelset JSON")
    sp.add_argument("--wrong", required=True, help="wrong SWC")
    sp.add_argument("--correct", required=True, help="correct SWC")
    sp.add_argument("--volume", required=True, help="volume sidecar/raw/tiff")
    sp.add_argument("--out", required=True, help=".nqcd output")
    sp.add_argument("--append", action="store_true")
    sp.add_argument("--size", type=int, default=PATCH_SIZE)
    sp.set_defaults(func=_cmd_crop)

    sp = sub.add_parser(
        "pool", help="sample random control patches from correct reconstructions"
    )
    sp.add_argument("--corpus", required=True, help="corpus manifest")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--out", required=True, help=".nqcd output")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--append", action="store_true")
    sp.add_argument("--size", type=int, default=PATCH_SIZE)
    sp.set_defaults(func=_cmd_pool)

    sp = sub.add_parser("split", help="assign neurons to cross-validation folds")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--ids", help="neuron ids, e.g. '1-40' or '3,5,9'")
    g.add_argument("--corpus", help="corpus manifest to take ids from")
    sp.add_argument("--out", required=True, help="folds JSON output")
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_split)

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    sp.add_argument("--neurons", type=int, required=True)
    sp.add_argument("--out", required=True, help="corpus directory")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--dims", default="160,160,160")
    sp.add_argument("--spacing", type=float, default=5.0)
    sp.add_argument("--points", type=int, default=220)
    sp.add_argument("--noise-std", type=float, default=12.0)
    sp.add_argument("--group", type=int, default=4,
                    help="neurons sharing one rendered volume")
    sp.add_argument("--errors", type=int, default=2,
                    help="injected errors per wrong reconstruction")
    sp.add_argument("--wrong-min", type=int, default=1)
    sp.add_argument("--wrong-max", type=int, default=2)
    sp.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    sp.set_defaults(func=_cmd_synth)

    sp = sub.add_parser("eval", help="score-table metrics report")
    sp.add_argument("--scores", required=True, help="scores CSV")
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--out", help="report JSON output")
    sp.set_defaults(func=_cmd_eval)

    return p


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except NeuroQcError as exc:
        logger.error("%s", exc)
        return 2
    except ValueError as exc:
        logger.error("bad parameter: %s", exc)
        return 1
    except OSError as exc:
        logger.error("%s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
