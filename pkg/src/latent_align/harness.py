"""Experiment orchestration: anchor sweeps, group matrices, zero-shot runs.

All three runners share the same shape: build (or load) embedding spaces,
train the probes they need, then evaluate a grid of independent cells
(kind x anchor_count x seed x pair) on a bounded thread pool. A failing
cell is recorded with a failure marker instead of aborting the sweep, and
records are sorted before aggregation so output bytes never depend on
completion order.

Desk-scale synthetic latent spaces stand in for credentialed datasets:
Gaussian class clusters with centers on a sphere, pushed through a planted
map (orthogonal / affine / random-nonlinear) plus noise.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DataError
from .metrics import MetricSummary, accuracy, summarize
from .stitching import (
    LinearProbe,
    ProbeHyperparams,
    StitchReport,
    stitch_evaluate,
    train_probe,
    upper_bound_evaluate,
)
from .store import (
    EmbeddingSpace,
    LabelSet,
    correspondence_from_shared_ids,
    load_correspondence,
    load_labels,
    load_manifest,
    load_space,
    sample_anchors,
)
from .transform import TransformKind, fit_alignment
from .zeroshot import build_prompt_bank, zero_shot_multimodal, zero_shot_unimodal

logger = logging.getLogger(__name__)

MODES = ("anchor-sweep", "group-matrix", "zero-shot")


# ---------------------------------------------------------------------------
# Synthetic latent spaces
# ---------------------------------------------------------------------------

MAP_KINDS = ("orthogonal", "affine", "random-nonlinear")


@dataclass
class SyntheticSpec:
    """Recipe for a desk-scale source/target latent-space pair."""

    n_samples: int = 5000
    source_dim: int = 64
    target_dim: int = 64
    n_classes: int = 2
    separation: float = 3.0
    map_kind: str = "orthogonal"
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_samples, self.source_dim, self.target_dim, self.n_classes) < 1:
            raise DataError("synthetic spec sizes must be positive")
        if self.n_classes < 2:
            raise DataError("synthetic spec needs at least 2 classes")
        if self.target_dim < self.source_dim:
            raise DataError("synthetic target_dim must be >= source_dim (zero-padding only)")
        if self.separation < 0 or self.noise_sigma < 0:
            raise DataError("separation and noise_sigma must be >= 0")
        if self.map_kind not in MAP_KINDS:
            raise DataError(f"map_kind must be one of {MAP_KINDS}, got {self.map_kind!r}")


def _sample_ids(n: int) -> list[str]:
    return [f"sample_{i:06d}" for i in range(n)]


def _balanced_labels(n: int, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.repeat(np.arange(n_classes), int(np.ceil(n / n_classes)))[:n]
    rng.shuffle(labels)
    return labels


def _cluster_matrix(
    n: int, dim: int, n_classes: int, separation: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gaussian clusters around centers on a sphere of radius ``separation``."""
    centers = rng.normal(size=(n_classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= separation
    labels = _balanced_labels(n, n_classes, rng)
    data = centers[labels] + rng.normal(size=(n, dim))
    return data, labels, centers


def _random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


def gen_synthetic(
    spec: SyntheticSpec,
) -> tuple[EmbeddingSpace, EmbeddingSpace, LabelSet, list[tuple[str, str]]]:
    """Generate a paired source/target benchmark with identity correspondence."""
    rng = np.random.default_rng(spec.seed)
    source_data, labels, _ = _cluster_matrix(
        spec.n_samples, spec.source_dim, spec.n_classes, spec.separation, rng
    )
    d = spec.source_dim
    if spec.map_kind == "orthogonal":
        target_data = source_data @ _random_orthogonal(d, rng)
    elif spec.map_kind == "affine":
        planted_r = rng.normal(size=(d, d)) / np.sqrt(d)
        planted_b = rng.normal(size=d)
        target_data = source_data @ planted_r + planted_b
    else:  # random-nonlinear
        target_data = np.tanh(source_data @ (rng.normal(size=(d, d)) / np.sqrt(d)))
    if spec.noise_sigma > 0:
        target_data = target_data + spec.noise_sigma * rng.normal(size=target_data.shape)
    if spec.target_dim > d:
        padded = np.zeros((spec.n_samples, spec.target_dim))
        padded[:, :d] = target_data
        target_data = padded

    ids = _sample_ids(spec.n_samples)
    source = EmbeddingSpace(name="source", data=source_data, sample_ids=ids)
    target = EmbeddingSpace(name="target", data=target_data, sample_ids=list(ids))
    label_set = LabelSet(
        sample_ids=list(ids),
        labels=labels,
        class_names=[f"class_{i}" for i in range(spec.n_classes)],
    )
    correspondence = [(sid, sid) for sid in ids]
    return source, target, label_set, correspondence


@dataclass
class FamilyMemberSpec:
    name: str
    group: str
    noise_sigma: float = 0.5


def gen_space_family(
    members: Sequence[FamilyMemberSpec],
    n_samples: int = 5000,
    dim: int = 64,
    n_classes: int = 2,
    separation: float = 3.0,
    seed: int = 0,
) -> tuple[dict[str, EmbeddingSpace], LabelSet, list[tuple[str, str]]]:
    """Several views of one latent structure, each rotated and noised.

    All members share the class clusters; each gets its own random
    orthogonal basis and per-space noise level, so any two members are
    approximately orthogonally related with noise on both sides.
    """
    if not members:
        raise DataError("space family needs at least one member")
    names = [m.name for m in members]
    if len(set(names)) != len(names):
        raise DataError("space family member names must be unique")
    rng = np.random.default_rng(seed)
    base, labels, _ = _cluster_matrix(n_samples, dim, n_classes, separation, rng)
    ids = _sample_ids(n_samples)
    spaces = {}
    for member in members:
        rotated = base @ _random_orthogonal(dim, rng)
        if member.noise_sigma > 0:
            rotated = rotated + member.noise_sigma * rng.normal(size=rotated.shape)
        spaces[member.name] = EmbeddingSpace(
            name=member.name, data=rotated, sample_ids=list(ids)
        )
    label_set = LabelSet(
        sample_ids=list(ids),
        labels=labels,
        class_names=[f"class_{i}" for i in range(n_classes)],
    )
    return spaces, label_set, [(sid, sid) for sid in ids]


@dataclass
class CrossModalSpec:
    """Recipe for a synthetic image/text pair plus class prompt embeddings."""

    n_samples: int = 4000
    text_dim: int = 64
    image_dim: int = 64
    n_classes: int = 2
    separation: float = 3.0
    noise_sigma: float = 0.05
    prompts_per_class: int = 10
    prompt_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_classes < 2 or self.prompts_per_class < 1:
            raise DataError("cross-modal spec needs >= 2 classes and >= 1 prompt per class")
        if self.image_dim < self.text_dim:
            raise DataError("cross-modal image_dim must be >= text_dim")


def gen_cross_modal(
    spec: CrossModalSpec,
) -> tuple[EmbeddingSpace, EmbeddingSpace, LabelSet, list[tuple[str, str]], dict[str, np.ndarray]]:
    """Synthetic image space, text space, and per-class prompt embeddings.

    The text space holds the class clusters; the image space is an
    orthogonally rotated, noised copy (padded if wider). Prompts are drawn
    near each class center in the raw text space.
    """
    rng = np.random.default_rng(spec.seed)
    text_data, labels, centers = _cluster_matrix(
        spec.n_samples, spec.text_dim, spec.n_classes, spec.separation, rng
    )
    image_data = text_data @ _random_orthogonal(spec.text_dim, rng)
    if spec.noise_sigma > 0:
        image_data = image_data + spec.noise_sigma * rng.normal(size=image_data.shape)
    if spec.image_dim > spec.text_dim:
        padded = np.zeros((spec.n_samples, spec.image_dim))
        padded[:, : spec.text_dim] = image_data
        image_data = padded

    ids = _sample_ids(spec.n_samples)
    image_space = EmbeddingSpace(name="image", data=image_data, sample_ids=ids)
    text_space = EmbeddingSpace(name="text", data=text_data, sample_ids=list(ids))
    class_names = [f"class_{i}" for i in range(spec.n_classes)]
    label_set = LabelSet(sample_ids=list(ids), labels=labels, class_names=class_names)
    prompts = {
        name: centers[i] + spec.prompt_sigma * rng.normal(size=(spec.prompts_per_class, spec.text_dim))
        for i, name in enumerate(class_names)
    }
    correspondence = [(sid, sid) for sid in ids]
    return image_space, text_space, label_set, correspondence, prompts


def split_indices(
    n_rows: int, train_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic disjoint train/test row indices (sorted)."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_rows)
    n_train = int(round(n_rows * train_fraction))
    if n_train < 1 or n_train >= n_rows:
        raise DataError(f"split leaves an empty partition (n={n_rows}, fraction={train_fraction})")
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Declarative description of one experiment grid."""

    mode: str
    kinds: list[str]
    anchor_counts: list[int]
    seeds: list[int]
    train_fraction: float = 0.8
    probe: ProbeHyperparams = field(default_factory=ProbeHyperparams)
    synthetic: dict | None = None
    manifest: str | None = None
    source: str | None = None
    target: str | None = None
    task: str | None = None
    groups: dict[str, list[str]] | None = None
    prompt_bank: str | None = None
    output: str | None = None
    plot: bool = False

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise DataError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.seeds:
            raise DataError("config needs a non-empty seeds list")
        if not self.anchor_counts or any(c < 1 for c in self.anchor_counts):
            raise DataError("anchor_counts must be positive")
        if not self.kinds:
            raise DataError("config needs a non-empty kinds list")
        for kind in self.kinds:
            try:
                TransformKind(kind)
            except ValueError:
                valid = ", ".join(k.value for k in TransformKind)
                raise DataError(f"unknown transform kind {kind!r} (valid: {valid})") from None
        if self.synthetic is None and self.manifest is None:
            raise DataError("config needs either a 'synthetic' block or a 'manifest' path")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        probe_doc = doc.get("probe", {})
        return cls(
            mode=doc.get("mode", "anchor-sweep"),
            kinds=list(doc.get("kinds", [k.value for k in TransformKind])),
            anchor_counts=[int(c) for c in doc.get("anchor_counts", [16, 64, 256, 1024])],
            seeds=[int(s) for s in doc.get("seeds", [0, 1, 2])],
            train_fraction=float(doc.get("train_fraction", 0.8)),
            probe=ProbeHyperparams(
                c_reg=float(probe_doc.get("c_reg", 1.0)),
                max_epochs=int(probe_doc.get("max_epochs", 300)),
                seed=int(probe_doc.get("seed", 0)),
                batch_size=int(probe_doc.get("batch_size", 256)),
            ),
            synthetic=doc.get("synthetic"),
            manifest=doc.get("manifest"),
            source=doc.get("source"),
            target=doc.get("target"),
            task=doc.get("task"),
            groups=doc.get("groups"),
            prompt_bank=doc.get("prompt_bank"),
            output=doc.get("output"),
            plot=bool(doc.get("plot", False)),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: cannot parse config ({exc})") from None
        config = cls.from_dict(doc)
        if config.manifest is not None:
            config.manifest = str((path.parent / config.manifest).resolve())
        if config.prompt_bank is not None:
            config.prompt_bank = str((path.parent / config.prompt_bank).resolve())
        return config


def desk_benchmark_config(
    n_classes: int = 2, noise_sigma: float = 0.05, max_epochs: int = 300
) -> ExperimentConfig:
    """The default desk-scale anchor-sweep benchmark."""
    return ExperimentConfig(
        mode="anchor-sweep",
        kinds=["affine", "linear", "l-ortho", "ortho", "naive"],
        anchor_counts=[16, 64, 256, 1024],
        seeds=[0, 1, 2],
        synthetic={
            "n_samples": 5000,
            "source_dim": 64,
            "target_dim": 64,
            "n_classes": n_classes,
            "separation": 3.0,
            "map_kind": "orthogonal",
            "noise_sigma": noise_sigma,
            "seed": 100,
        },
        probe=ProbeHyperparams(max_epochs=max_epochs),
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "section", "source", "target", "task", "kind",
    "anchor_count", "seed", "auroc", "accuracy", "status",
)


@dataclass
class RunRecord:
    """One evaluated grid cell run (or its failure marker)."""

    section: str
    source: str
    target: str
    task: str
    kind: str
    anchor_count: int
    seed: int | None
    auroc: float | None
    accuracy: float | None
    status: str = "ok"

    def sort_key(self) -> tuple:
        return (
            self.section, self.source, self.target, self.task, self.kind,
            self.anchor_count, -1 if self.seed is None else self.seed,
        )

    def csv_row(self) -> list[str]:
        def cell(value) -> str:
            return "" if value is None else str(value)

        return [
            self.section, self.source, self.target, self.task, self.kind,
            str(self.anchor_count), cell(self.seed), cell(self.auroc),
            cell(self.accuracy), self.status,
        ]


@dataclass
class ExperimentReport:
    """Per-run records plus seed-aggregated cells and baselines."""

    mode: str
    runs: list[RunRecord]
    cells: dict[tuple, dict[str, MetricSummary]]
    baselines: dict

    def alignment_run_count(self) -> int:
        return sum(1 for r in self.runs if r.section == "alignment")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for record in self.runs:
                writer.writerow(record.csv_row())

    def aggregates(self) -> dict:
        cell_list = []
        for key in sorted(self.cells.keys()):
            entry = dict(zip(("source", "target", "task", "kind", "anchor_count"), key))
            entry.update({name: s.as_dict() for name, s in self.cells[key].items()})
            cell_list.append(entry)
        return {"mode": self.mode, "cells": cell_list, "baselines": self.baselines}

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.aggregates(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def write(self, directory: str | Path, plot: bool = False) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.write_csv(directory / "report.csv")
        self.write_json(directory / "report.json")
        if plot and self.mode == "anchor-sweep":
            plot_anchor_sweep(self, directory / "anchor_sweep.svg")


def _aggregate_cells(records: list[RunRecord]) -> dict[tuple, dict[str, MetricSummary]]:
    grouped: dict[tuple, list[RunRecord]] = {}
    for record in records:
        if record.status != "ok":
            continue
        key = (record.source, record.target, record.task, record.kind, record.anchor_count)
        grouped.setdefault(key, []).append(record)
    return {
        key: {
            "auroc": summarize([r.auroc for r in group]),
            "accuracy": summarize([r.accuracy for r in group]),
        }
        for key, group in grouped.items()
    }


def _run_jobs(
    jobs: list[Callable[[], list[RunRecord]]], n_workers: int
) -> list[RunRecord]:
    """Execute cell jobs on a bounded pool; order of results is canonical."""
    records: list[RunRecord] = []
    if n_workers <= 1:
        for job in jobs:
            records.extend(job())
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            for result in pool.map(lambda job: job(), jobs):
                records.extend(result)
    records.sort(key=RunRecord.sort_key)
    return records


def _failure_record(template: RunRecord, exc: Exception) -> RunRecord:
    logger.warning("cell %s failed: %s", template.sort_key(), exc)
    return replace(
        template, auroc=None, accuracy=None,
        status=f"failed: {type(exc).__name__}: {exc}",
    )


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def _load_manifest_pair(
    config: ExperimentConfig,
) -> tuple[EmbeddingSpace, EmbeddingSpace, LabelSet, list[tuple[str, str]], np.ndarray, np.ndarray]:
    manifest = load_manifest(config.manifest)
    if not config.source or not config.target or not config.task:
        raise DataError("manifest mode needs 'source', 'target', and 'task' names")
    for name in (config.source, config.target):
        if name not in manifest.spaces:
            raise DataError(f"manifest has no space named {name!r}")
    if config.task not in manifest.labels:
        raise DataError(f"manifest has no label task named {config.task!r}")
    source = load_space(manifest.spaces[config.source], name=config.source)
    target = load_space(manifest.spaces[config.target], name=config.target)
    labels = load_labels(manifest.labels[config.task])
    if manifest.anchors is not None:
        correspondence = load_correspondence(manifest.anchors)
    else:
        correspondence = correspondence_from_shared_ids(source, target)
    split = manifest.split.get(config.source)
    if split is None:
        raise DataError(f"manifest has no split for space {config.source!r}")
    return (
        source, target, labels, correspondence,
        np.asarray(split["train"], dtype=np.int64),
        np.asarray(split["test"], dtype=np.int64),
    )


def _train_correspondence(
    correspondence: list[tuple[str, str]],
    source: EmbeddingSpace,
    train_rows: np.ndarray,
) -> list[tuple[str, str]]:
    """Restrict a correspondence to pairs whose source row is in training."""
    train_ids = {source.sample_ids[i] for i in train_rows.tolist()}
    pool = [pair for pair in correspondence if pair[0] in train_ids]
    if not pool:
        raise DataError("no correspondence pairs fall inside the training split")
    return pool


def run_anchor_sweep(
    config: ExperimentConfig, n_workers: int = 1
) -> ExperimentReport:
    """Stitch one source/target pair across kinds, anchor counts, and seeds."""
    if config.mode != "anchor-sweep":
        raise DataError(f"run_anchor_sweep needs mode 'anchor-sweep', got {config.mode!r}")
    if config.synthetic is not None:
        spec = SyntheticSpec(**config.synthetic)
        source, target, labels, correspondence = gen_synthetic(spec)
        train_rows, test_rows = split_indices(
            spec.n_samples, config.train_fraction, spec.seed
        )
    else:
        source, target, labels, correspondence, train_rows, test_rows = (
            _load_manifest_pair(config)
        )
    task = config.task or "task"
    anchor_pool = _train_correspondence(correspondence, source, train_rows)
    for count in config.anchor_counts:
        if count > len(anchor_pool):
            raise DataError(
                f"anchor count {count} exceeds the {len(anchor_pool)}-pair training pool"
            )

    target_probe = train_probe(target, labels, train_rows, config.probe)
    source_probe = train_probe(source, labels, train_rows, config.probe)
    sub = upper_bound_evaluate(source, source_probe, labels, test_rows)
    tub = upper_bound_evaluate(target, target_probe, labels, test_rows)

    def make_job(kind: str, count: int, seed: int) -> Callable[[], list[RunRecord]]:
        template = RunRecord(
            section="alignment", source=source.name, target=target.name,
            task=task, kind=kind, anchor_count=count, seed=seed,
            auroc=None, accuracy=None,
        )

        def job() -> list[RunRecord]:
            try:
                anchors = sample_anchors(source, target, anchor_pool, count, seed)
                fitted = fit_alignment(source, target, anchors, kind)
                report = stitch_evaluate(source, fitted, target_probe, labels, test_rows)
                return [replace(template, auroc=report.auroc, accuracy=report.accuracy)]
            except Exception as exc:  # cell isolation: sweep must continue
                return [_failure_record(template, exc)]

        return job

    jobs = [
        make_job(kind, count, seed)
        for kind in config.kinds
        for count in config.anchor_counts
        for seed in config.seeds
    ]
    records = _run_jobs(jobs, n_workers)

    # upper bounds are kind/anchor-independent: computed once, repeated per count
    for count in config.anchor_counts:
        records.append(RunRecord(
            section="baseline", source=source.name, target=target.name, task=task,
            kind="upper-bound-source", anchor_count=count, seed=None,
            auroc=sub.auroc, accuracy=sub.accuracy,
        ))
        records.append(RunRecord(
            section="baseline", source=source.name, target=target.name, task=task,
            kind="upper-bound-target", anchor_count=count, seed=None,
            auroc=tub.auroc, accuracy=tub.accuracy,
        ))
    records.sort(key=RunRecord.sort_key)

    cells = _aggregate_cells(records)
    baselines = {
        "source_upper_bound": {"auroc": sub.auroc, "accuracy": sub.accuracy},
        "target_upper_bound": {"auroc": tub.auroc, "accuracy": tub.accuracy},
        "naive": {
            str(count): {
                name: summary.as_dict()
                for name, summary in cells.get(
                    (source.name, target.name, task, "naive", count), {}
                ).items()
            }
            for count in config.anchor_counts
            if "naive" in config.kinds
        },
    }
    report = ExperimentReport(
        mode=config.mode, runs=records, cells=cells, baselines=baselines
    )
    if config.output:
        report.write(config.output, plot=config.plot)
    return report


def _parse_family(config: ExperimentConfig) -> tuple[dict[str, EmbeddingSpace], LabelSet, list, dict[str, list[str]], np.ndarray, np.ndarray]:
    if config.synthetic is not None:
        doc = dict(config.synthetic)
        member_docs = doc.pop("spaces", None)
        if not member_docs:
            raise DataError("group-matrix synthetic block needs a 'spaces' list")
        members = [
            FamilyMemberSpec(
                name=m["name"], group=m["group"],
                noise_sigma=float(m.get("noise_sigma", 0.5)),
            )
            for m in member_docs
        ]
        spaces, labels, correspondence = gen_space_family(members, **doc)
        groups: dict[str, list[str]] = {}
        for member in members:
            groups.setdefault(member.group, []).append(member.name)
        train_rows, test_rows = split_indices(
            labels.labels.shape[0], config.train_fraction, int(doc.get("seed", 0))
        )
    else:
        manifest = load_manifest(config.manifest)
        if not config.groups or not config.task:
            raise DataError("manifest group-matrix mode needs 'groups' and 'task'")
        groups = config.groups
        spaces = {}
        for group_spaces in groups.values():
            for name in group_spaces:
                if name not in manifest.spaces:
                    raise DataError(f"manifest has no space named {name!r}")
                spaces[name] = load_space(manifest.spaces[name], name=name)
        labels = load_labels(manifest.labels[config.task])
        first = next(iter(spaces.values()))
        split = manifest.split.get(first.name)
        if split is None:
            raise DataError(f"manifest has no split for space {first.name!r}")
        train_rows = np.asarray(split["train"], dtype=np.int64)
        test_rows = np.asarray(split["test"], dtype=np.int64)
        correspondence = None
    if len(groups) < 2:
        raise DataError("group matrix needs at least 2 groups")
    return spaces, labels, correspondence, groups, train_rows, test_rows


def run_group_matrix(config: ExperimentConfig, n_workers: int = 1) -> ExperimentReport:
    """Evaluate stitching across and within groups of spaces (with SUB/TUB)."""
    if config.mode != "group-matrix":
        raise DataError(f"run_group_matrix needs mode 'group-matrix', got {config.mode!r}")
    spaces, labels, correspondence, groups, train_rows, test_rows = _parse_family(config)
    task = config.task or "task"
    kind = config.kinds[0]
    count = config.anchor_counts[0]

    probes: dict[str, LinearProbe] = {}
    own: dict[str, StitchReport] = {}
    for name, space in sorted(spaces.items()):
        probes[name] = train_probe(space, labels, train_rows, config.probe)
        own[name] = upper_bound_evaluate(space, probes[name], labels, test_rows)

    def pair_correspondence(src: EmbeddingSpace, tgt: EmbeddingSpace) -> list:
        pairs = correspondence or correspondence_from_shared_ids(src, tgt)
        return _train_correspondence(pairs, src, train_rows)

    def make_job(src_name: str, tgt_name: str, seed: int) -> Callable[[], list[RunRecord]]:
        template = RunRecord(
            section="alignment", source=src_name, target=tgt_name, task=task,
            kind=kind, anchor_count=count, seed=seed, auroc=None, accuracy=None,
        )

        def job() -> list[RunRecord]:
            try:
                src, tgt = spaces[src_name], spaces[tgt_name]
                anchors = sample_anchors(src, tgt, pair_correspondence(src, tgt), count, seed)
                fitted = fit_alignment(src, tgt, anchors, kind)
                report = stitch_evaluate(src, fitted, probes[tgt_name], labels, test_rows)
                return [replace(template, auroc=report.auroc, accuracy=report.accuracy)]
            except Exception as exc:
                return [_failure_record(template, exc)]

        return job

    names = sorted(spaces.keys())
    jobs = [
        make_job(src, tgt, seed)
        for src in names for tgt in names for seed in config.seeds
    ]
    records = _run_jobs(jobs, n_workers)
    for name in names:
        records.append(RunRecord(
            section="baseline", source=name, target=name, task=task,
            kind="upper-bound", anchor_count=count, seed=None,
            auroc=own[name].auroc, accuracy=own[name].accuracy,
        ))
    records.sort(key=RunRecord.sort_key)
    cells = _aggregate_cells(records)

    group_cells = []
    group_names = sorted(groups.keys())
    for src_group in group_names:
        for tgt_group in group_names:
            values = [
                r.auroc for r in records
                if r.section == "alignment" and r.status == "ok"
                and r.source in groups[src_group] and r.target in groups[tgt_group]
            ]
            sub = float(np.mean([own[s].auroc for s in groups[src_group]]))
            tub = float(np.mean([own[t].auroc for t in groups[tgt_group]]))
            entry = {
                "source_group": src_group,
                "target_group": tgt_group,
                "sub": sub,
                "tub": tub,
                "alignment": summarize(values).as_dict() if values else None,
                "delta_pct_vs_sub": (
                    100.0 * (float(np.mean(values)) - sub) / sub if values else None
                ),
            }
            group_cells.append(entry)
    baselines = {
        "upper_bounds": {name: {"auroc": own[name].auroc, "accuracy": own[name].accuracy}
                         for name in names},
        "group_matrix": group_cells,
    }
    report = ExperimentReport(mode=config.mode, runs=records, cells=cells, baselines=baselines)
    if config.output:
        report.write(config.output)
    return report


def run_zeroshot_benchmark(config: ExperimentConfig, n_workers: int = 1) -> ExperimentReport:
    """Unimodal zero-shot (per transform kind) against the multimodal baseline."""
    if config.mode != "zero-shot":
        raise DataError(f"run_zeroshot_benchmark needs mode 'zero-shot', got {config.mode!r}")
    if config.synthetic is None:
        raise DataError("zero-shot benchmark currently requires a 'synthetic' block")
    spec = CrossModalSpec(**config.synthetic)
    image_space, text_space, labels, correspondence, prompts = gen_cross_modal(spec)
    bank = build_prompt_bank(prompts)
    train_rows, test_rows = split_indices(spec.n_samples, config.train_fraction, spec.seed)
    anchor_pool = _train_correspondence(correspondence, image_space, train_rows)
    task = config.task or "task"
    count = config.anchor_counts[0]
    y = labels.aligned_with(image_space)

    image_test = EmbeddingSpace(
        name=image_space.name,
        data=image_space.data[test_rows],
        sample_ids=[image_space.sample_ids[i] for i in test_rows.tolist()],
    )
    y_test = y[test_rows]

    def make_job(kind: str, seed: int) -> Callable[[], list[RunRecord]]:
        template = RunRecord(
            section="zero-shot", source=image_space.name, target=text_space.name,
            task=task, kind=kind, anchor_count=count, seed=seed,
            auroc=None, accuracy=None,
        )

        def job() -> list[RunRecord]:
            try:
                anchors = sample_anchors(image_space, text_space, anchor_pool, count, seed)
                fitted = fit_alignment(image_space, text_space, anchors, kind)
                result = zero_shot_unimodal(image_test, fitted, bank, labels=y_test)
                return [replace(
                    template, auroc=result.auroc,
                    accuracy=accuracy(result.predictions, y_test),
                )]
            except Exception as exc:
                return [_failure_record(template, exc)]

        return job

    jobs = [make_job(kind, seed) for kind in config.kinds for seed in config.seeds]
    records = _run_jobs(jobs, n_workers)

    baselines: dict = {}
    if image_space.dim == bank.dim:
        mm = zero_shot_multimodal(image_test, bank, labels=y_test)
        mm_acc = accuracy(mm.predictions, y_test)
        records.append(RunRecord(
            section="baseline", source=image_space.name, target=text_space.name,
            task=task, kind="multimodal", anchor_count=0, seed=None,
            auroc=mm.auroc, accuracy=mm_acc,
        ))
        baselines["multimodal"] = {"auroc": mm.auroc, "accuracy": mm_acc}
    records.sort(key=RunRecord.sort_key)
    cells = _aggregate_cells(records)
    report = ExperimentReport(mode=config.mode, runs=records, cells=cells, baselines=baselines)
    if config.output:
        report.write(config.output)
    return report


def run_experiment(config: ExperimentConfig, n_workers: int = 1) -> ExperimentReport:
    runner = {
        "anchor-sweep": run_anchor_sweep,
        "group-matrix": run_group_matrix,
        "zero-shot": run_zeroshot_benchmark,
    }[config.mode]
    return runner(config, n_workers=n_workers)


# ---------------------------------------------------------------------------
# Plotting
# ---------------------------------------------------------------------------

def plot_anchor_sweep(report: ExperimentReport, path: str | Path) -> None:
    """Emit a reproducible SVG of AUROC vs anchor count per transform kind."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_kind: dict[str, list[tuple[int, MetricSummary]]] = {}
    for (source, target, task, kind, count), metric in sorted(report.cells.items()):
        by_kind.setdefault(kind, []).append((count, metric["auroc"]))

    with matplotlib.rc_context({"svg.hashsalt": "latent-align"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for kind in sorted(by_kind.keys()):
            points = sorted(by_kind[kind])
            counts = [p[0] for p in points]
            means = [p[1].mean for p in points]
            stds = [p[1].std for p in points]
            ax.errorbar(counts, means, yerr=stds, marker="o", capsize=3, label=kind)
        tub = report.baselines.get("target_upper_bound", {}).get("auroc")
        if tub is not None:
            ax.axhline(tub, linestyle="--", color="gray", label="upper bound")
        ax.set_xscale("log", base=2)
        ax.set_xlabel("anchors")
        ax.set_ylabel("AUROC")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
