"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical
failure. Set ``LATENT_ALIGN_LOG`` (DEBUG/INFO/WARNING/ERROR) to control log
verbosity; logs go to stderr, results to stdout, machine-readable artifacts
to the paths given via ``--out``. Every command that draws random numbers
takes an explicit ``--seed`` and is byte-reproducible for fixed inputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import harness, stitching, store, transform, zeroshot
from .errors import DataError, NumericalError

logger = logging.getLogger(__name__)


class _UsageError(Exception):
    def __init__(self, message: str, parser: argparse.ArgumentParser):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would sys.exit(2); we want exit 1
        raise _UsageError(message, self)


def _configure_logging() -> None:
    level_name = os.environ.get("LATENT_ALIGN_LOG", "WARNING").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _print_table(rows: list[tuple[str, object]]) -> None:
    width = max(len(key) for key, _ in rows)
    for key, value in rows:
        print(f"{key.ljust(width)}  {value}")


def _read_id_file(path: str) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def _rows_for_ids(space: store.EmbeddingSpace, ids: list[str], what: str) -> np.ndarray:
    index = space.row_index()
    try:
        return np.array([index[sid] for sid in ids], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"{what}: id {exc.args[0]!r} not in space '{space.name}'") from None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_gen_synthetic(args: argparse.Namespace) -> int:
    spec = harness.SyntheticSpec(
        n_samples=args.n_samples,
        source_dim=args.source_dim,
        target_dim=args.target_dim,
        n_classes=args.classes,
        separation=args.separation,
        map_kind=args.map_kind,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    source, target, labels, correspondence = harness.gen_synthetic(spec)
    train_rows, test_rows = harness.split_indices(
        spec.n_samples, args.train_fraction, spec.seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store.save_space(source, out / "source.npy")
    store.save_space(target, out / "target.npy")
    store.save_labels(labels, out / "labels.csv")
    store.save_correspondence(correspondence, out / "correspondence.csv")
    train_ids = [source.sample_ids[i] for i in train_rows.tolist()]
    test_ids = [source.sample_ids[i] for i in test_rows.tolist()]
    train_id_set = set(train_ids)
    store.save_correspondence(
        [p for p in correspondence if p[0] in train_id_set], out / "anchors_pool.csv"
    )
    (out / "train_ids.txt").write_text("".join(s + "\n" for s in train_ids), encoding="utf-8")
    (out / "test_ids.txt").write_text("".join(s + "\n" for s in test_ids), encoding="utf-8")
    split = {"train": train_rows.tolist(), "test": test_rows.tolist()}
    manifest = store.DatasetManifest(
        spaces={"source": out / "source.npy", "target": out / "target.npy"},
        labels={"task": out / "labels.csv"},
        anchors=out / "correspondence.csv",
        split={"source": split, "target": dict(split)},
    )
    store.save_manifest(manifest, out / "manifest.json")
    _print_table([
        ("samples", spec.n_samples),
        ("source dim", spec.source_dim),
        ("target dim", spec.target_dim),
        ("classes", spec.n_classes),
        ("map kind", spec.map_kind),
        ("noise sigma", spec.noise_sigma),
        ("train rows", len(train_rows)),
        ("test rows", len(test_rows)),
        ("out", out),
    ])
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    source = store.load_space(args.source)
    target = store.load_space(args.target)
    if args.anchors:
        id_pairs = store.load_correspondence(args.anchors)
        src_index, tgt_index = source.row_index(), target.row_index()
        pairs = []
        for src_id, tgt_id in id_pairs:
            if src_id not in src_index or tgt_id not in tgt_index:
                raise DataError(f"anchor pair ({src_id!r}, {tgt_id!r}) not found in spaces")
            pairs.append((src_index[src_id], tgt_index[tgt_id]))
        anchors = store.AnchorSet(
            source_space=source.name, target_space=target.name, pairs=pairs,
        )
    else:
        if args.seed is None:
            raise _UsageError("--anchor-count requires --seed", args.parser)
        if args.correspondence:
            correspondence = store.load_correspondence(args.correspondence)
        else:
            correspondence = store.correspondence_from_shared_ids(source, target)
        anchors = store.sample_anchors(
            source, target, correspondence, args.anchor_count, args.seed
        )
    opts = transform.AffineFitOptions(
        max_steps=args.max_steps,
        learning_rate=args.learning_rate,
        tolerance=args.tolerance,
        init=args.init,
    )
    fitted = transform.fit_alignment(source, target, anchors, args.kind, opts)
    transform.save_transform(fitted, args.out)
    _print_table([
        ("kind", fitted.kind.value),
        ("anchors", fitted.fit_info.anchor_count),
        ("seed", fitted.fit_info.seed),
        ("padded dim", fitted.padded_dim),
        ("objective", f"{fitted.fit_info.objective:.6e}"),
        ("orthogonality", f"{transform.orthogonality_deviation(fitted.R):.3e}"),
        ("out", args.out),
    ])
    return 0


def _cmd_translate(args: argparse.Namespace) -> int:
    fitted = transform.load_transform(args.transform)
    space = store.load_space(args.input)
    translated = transform.translate_rows(fitted, space.data)
    out = Path(args.out)
    store.save_space(
        store.EmbeddingSpace(name=out.stem, data=translated, sample_ids=space.sample_ids),
        out,
    )
    _print_table([
        ("rows", translated.shape[0]),
        ("dim", f"{space.dim} -> {translated.shape[1]}"),
        ("out", out),
    ])
    return 0


def _cmd_train_probe(args: argparse.Namespace) -> int:
    space = store.load_space(args.space)
    labels = store.load_labels(args.labels)
    train_rows = _rows_for_ids(space, _read_id_file(args.train_ids), "train ids")
    probe = stitching.train_probe(
        space,
        labels,
        train_rows,
        stitching.ProbeHyperparams(
            c_reg=args.c_reg,
            max_epochs=args.max_epochs,
            seed=args.seed,
            batch_size=args.batch_size,
        ),
    )
    stitching.save_probe(probe, args.out)
    _print_table([
        ("space", space.name),
        ("classes", len(probe.class_names)),
        ("train rows", len(train_rows)),
        ("training accuracy", f"{probe.training_accuracy:.4f}"),
        ("out", args.out),
    ])
    return 0


def _report_to_stdout(report: stitching.StitchReport) -> None:
    _print_table([
        ("source", report.source_space),
        ("target", report.target_space),
        ("kind", report.kind),
        ("anchors", report.anchor_count),
        ("seed", report.seed if report.seed is not None else "-"),
        ("auroc", str(report.auroc)),
        ("accuracy", str(report.accuracy)),
    ])


def _cmd_stitch_eval(args: argparse.Namespace) -> int:
    source = store.load_space(args.source)
    probe = stitching.load_probe(args.probe)
    labels = store.load_labels(args.labels)
    test_rows = _rows_for_ids(source, _read_id_file(args.test_ids), "test ids")
    if args.transform:
        fitted = transform.load_transform(args.transform)
        report = stitching.stitch_evaluate(source, fitted, probe, labels, test_rows)
    else:
        report = stitching.upper_bound_evaluate(source, probe, labels, test_rows)
    _report_to_stdout(report)
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.__dict__, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return 0


def _cmd_zero_shot(args: argparse.Namespace) -> int:
    images = store.load_space(args.images)
    bank = zeroshot.load_prompt_bank(args.bank)
    y = None
    if args.labels:
        labels = store.load_labels(args.labels)
        if args.test_ids:
            rows = _rows_for_ids(images, _read_id_file(args.test_ids), "test ids")
            images = store.EmbeddingSpace(
                name=images.name,
                data=images.data[rows],
                sample_ids=[images.sample_ids[i] for i in rows.tolist()],
            )
        y = labels.aligned_with(images)
    if args.multimodal:
        result = zeroshot.zero_shot_multimodal(images, bank, labels=y)
        method = "multimodal"
    else:
        if not args.transform:
            raise _UsageError("zero-shot needs --transform unless --multimodal", args.parser)
        fitted = transform.load_transform(args.transform)
        result = zeroshot.zero_shot_unimodal(images, fitted, bank, labels=y)
        method = "unimodal"
    from .metrics import accuracy as accuracy_metric

    rows_out: list[tuple[str, object]] = [
        ("method", method),
        ("rows", result.scores.shape[0]),
        ("classes", ", ".join(bank.class_names)),
    ]
    doc: dict = {"method": method, "n_rows": int(result.scores.shape[0])}
    if y is not None:
        acc = accuracy_metric(result.predictions, y)
        rows_out += [("auroc", str(result.auroc)), ("accuracy", str(acc))]
        doc.update({"auroc": result.auroc, "accuracy": acc})
    pred_counts = {
        bank.class_names[i]: int((result.predictions == i).sum())
        for i in range(bank.n_classes)
    }
    rows_out.append(("predictions", ", ".join(f"{k}={v}" for k, v in pred_counts.items())))
    doc["prediction_counts"] = pred_counts
    _print_table(rows_out)
    if args.out:
        Path(args.out).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = harness.ExperimentConfig.from_json(args.config)
    if args.out:
        config.output = args.out
    if args.plot:
        config.plot = True
    report = harness.run_experiment(config, n_workers=args.jobs)
    failed = [r for r in report.runs if r.status != "ok"]
    _print_table([
        ("mode", report.mode),
        ("runs", len(report.runs)),
        ("failed cells", len(failed)),
        ("out", config.output or "-"),
    ])
    for key in sorted(report.cells.keys()):
        source, target, task, kind, count = key
        auroc_summary = report.cells[key]["auroc"]
        print(
            f"  {source}->{target} {kind:14s} K={count:<6d} "
            f"auroc {auroc_summary.mean:.4f} +/- {auroc_summary.std:.4f}"
        )
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if path.is_dir() and transform.is_transform_dir(path):
        fitted = transform.load_transform(path)
        eye = np.eye(fitted.padded_dim)
        _print_table([
            ("type", "alignment transform"),
            ("kind", fitted.kind.value),
            ("source dim", fitted.source_dim),
            ("target dim", fitted.target_dim),
            ("padded dim", fitted.padded_dim),
            ("anchors", fitted.fit_info.anchor_count),
            ("seed", fitted.fit_info.seed),
            ("objective", str(fitted.fit_info.objective)),
            ("max |R - I|", f"{np.max(np.abs(fitted.R - eye)):.3e}"),
            ("max |b|", f"{np.max(np.abs(fitted.b)):.3e}"),
            ("orthogonality", f"{transform.orthogonality_deviation(fitted.R):.3e}"),
        ])
    elif path.is_dir() and stitching.is_probe_dir(path):
        probe = stitching.load_probe(path)
        _print_table([
            ("type", "linear probe"),
            ("trained on", probe.trained_on),
            ("dim", probe.dim),
            ("classes", ", ".join(probe.class_names)),
            ("c_reg", probe.hyperparams.c_reg),
            ("max epochs", probe.hyperparams.max_epochs),
            ("seed", probe.hyperparams.seed),
            ("training accuracy", str(probe.training_accuracy)),
        ])
    elif path.suffix == ".npy":
        space = store.load_space(path)
        _print_table([
            ("type", "embedding space"),
            ("name", space.name),
            ("rows", space.n_samples),
            ("dim", space.dim),
            ("finite", "yes"),
            ("ids", f"{len(space.sample_ids)} unique"),
            ("mean norm", f"{np.mean(np.linalg.norm(space.data, axis=1)):.4f}"),
        ])
    elif path.suffix == ".json":
        manifest = store.load_manifest(path)
        _print_table([
            ("type", "dataset manifest"),
            ("spaces", ", ".join(sorted(manifest.spaces.keys()))),
            ("labels", ", ".join(sorted(manifest.labels.keys()))),
            ("anchors", manifest.anchors or "-"),
            ("splits", ", ".join(
                f"{k} ({len(v.get('train', []))}/{len(v.get('test', []))})"
                for k, v in sorted(manifest.split.items())
            ) or "-"),
        ])
    else:
        raise DataError(f"cannot inspect {path}: unknown artifact type")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(
        prog="latent-align",
        description="Semantic alignment of latent spaces: fit anchor-based "
        "transforms, stitch models, run zero-shot classification.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("gen-synthetic", help="generate a synthetic benchmark dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-samples", type=int, default=5000)
    p.add_argument("--source-dim", type=int, default=64)
    p.add_argument("--target-dim", type=int, default=64)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--map-kind", choices=harness.MAP_KINDS, default="orthogonal")
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("fit", help="fit an alignment transform on anchors")
    p.add_argument("--source", required=True, help="source space .npy")
    p.add_argument("--target", required=True, help="target space .npy")
    p.add_argument(
        "--kind", required=True,
        choices=[k.value for k in transform.TransformKind],
    )
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--anchors", help="explicit anchor pairs CSV (source_id,target_id)")
    group.add_argument("--anchor-count", type=int, help="sample this many anchors")
    p.add_argument("--correspondence", help="correspondence CSV to sample from")
    p.add_argument("--seed", type=int, help="anchor sampling seed")
    p.add_argument("--max-steps", type=int, default=2000)
    p.add_argument("--learning-rate", type=float, default=1e-2)
    p.add_argument("--tolerance", type=float, default=1e-7)
    p.add_argument(
        "--init", choices=[i.value for i in transform.AffineInit],
        default=transform.AffineInit.FROM_LINEAR.value,
    )
    p.add_argument("--out", required=True, help="output transform directory")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("translate", help="translate a space through a transform")
    p.add_argument("--transform", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_translate)

    p = sub.add_parser("train-probe", help="train a linear probe on a space")
    p.add_argument("--space", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--train-ids", required=True, help="file with one sample_id per line")
    p.add_argument("--c-reg", type=float, default=1.0)
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output probe directory")
    p.set_defaults(func=_cmd_train_probe)

    p = sub.add_parser("stitch-eval", help="evaluate stitched (or direct) decoding")
    p.add_argument("--source", required=True)
    p.add_argument("--transform", help="omit to evaluate the probe directly (upper bound)")
    p.add_argument("--probe", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--test-ids", required=True)
    p.add_argument("--out", help="write the report as JSON")
    p.set_defaults(func=_cmd_stitch_eval)

    p = sub.add_parser("zero-shot", help="zero-shot classification against a prompt bank")
    p.add_argument("--images", required=True)
    p.add_argument("--bank", required=True, help="prompt bank JSON")
    p.add_argument("--transform", help="cross-modal transform (unimodal method)")
    p.add_argument("--multimodal", action="store_true", help="score without a transform")
    p.add_argument("--labels")
    p.add_argument("--test-ids")
    p.add_argument("--out", help="write metrics as JSON")
    p.set_defaults(func=_cmd_zero_shot)

    p = sub.add_parser("sweep", help="run a config-driven experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--plot", action="store_true", help="emit an SVG of the sweep")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("inspect", help="print metadata of a space/transform/probe/manifest")
    p.add_argument("path")
    p.set_defaults(func=_cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    args.parser = parser
    try:
        return args.func(args)
    except _UsageError as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        logger.error("%s", exc)
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        logger.error("%s", exc)
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
