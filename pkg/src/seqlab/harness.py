"""Experiment orchestration: config schema, the ablation grid, reports.

A single JSON config drives everything.  The gold train/dev subsets and
the teacher depend only on ``data_seed``; the per-run seeds vary student
weight initialization, batch scheduling, and the choice of the silver
subset, jointly, via labelled sub-seeds.  Grid cells are independent and
can run in parallel worker processes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .corpus import (
    Dataset,
    DatasetSplit,
    dedup,
    downsample,
    generate_synthetic,
    load_conll,
    make_dataset,
)
from .distill import (
    DistillConfig,
    SilverExample,
    evaluate_student,
    generate_silver,
    read_silver,
    train_student,
    write_silver,
)
from .errors import ConfigError
from .formats import SentinelScheme, TagSet, make_pair
from .seeding import derive_seed
from .student import StudentConfig
from .teacher import TeacherTrainConfig, train_teacher


@dataclass(frozen=True)
class SyntheticSpec:
    grammar_seed: int = 7
    n_train: int = 2000
    n_dev: int = 300
    n_test: int = 300
    tag_count: int = 4
    lexicon_size: int = 60
    max_filler_len: int = 3
    carrier_rate: float = 0.15


@dataclass(frozen=True)
class DataSpec:
    synthetic: SyntheticSpec | None = None
    train_path: str | None = None
    dev_path: str | None = None
    test_path: str | None = None
    dedup: bool = False
    dedup_priority: tuple[str, str, str] = ("test", "dev", "train")

    def __post_init__(self):
        paths = (self.train_path, self.dev_path, self.test_path)
        if self.synthetic is None and any(p is None for p in paths):
            raise ConfigError("data needs either a synthetic spec or all three paths")


@dataclass(frozen=True)
class GoldSpec:
    train_size: int = 100
    dev_size: int = 50


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSpec = field(default_factory=lambda: DataSpec(synthetic=SyntheticSpec()))
    gold: GoldSpec = field(default_factory=GoldSpec)
    silver_sizes: tuple[int, ...] = (0, 250, 500)
    lambda_kl: tuple[float, ...] = (0.0, 1.0)
    tau: float = 10.0
    beam_k: int = 1
    temper_student: bool = False
    seeds: tuple[int, ...] = (1, 2, 3)
    data_seed: int = 13
    sentinel_pattern: str = "<extra_id_{k}>"
    teacher: TeacherTrainConfig = field(default_factory=TeacherTrainConfig)
    student: StudentConfig = field(default_factory=StudentConfig)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(s < 0 for s in self.silver_sizes):
            raise ConfigError("silver sizes must be >= 0")

    def scheme(self) -> SentinelScheme:
        return SentinelScheme(self.sentinel_pattern)

    # -- JSON round trip ------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        def build(dc_type, sub: dict, path: str):
            names = {f.name for f in dataclasses.fields(dc_type)}
            unknown = set(sub) - names
            if unknown:
                raise ConfigError(f"unknown {path} keys: {sorted(unknown)}")
            return dc_type(**sub)

        doc = dict(doc)
        kwargs = {}
        if "data" in doc:
            data = dict(doc.pop("data"))
            if "synthetic" in data and data["synthetic"] is not None:
                data["synthetic"] = build(SyntheticSpec, data["synthetic"], "data.synthetic")
            if "dedup_priority" in data:
                data["dedup_priority"] = tuple(data["dedup_priority"])
            kwargs["data"] = build(DataSpec, data, "data")
        if "gold" in doc:
            kwargs["gold"] = build(GoldSpec, doc.pop("gold"), "gold")
        if "teacher" in doc:
            kwargs["teacher"] = build(TeacherTrainConfig, doc.pop("teacher"), "teacher")
        if "student" in doc:
            kwargs["student"] = build(StudentConfig, doc.pop("student"), "student")
        for name in ("silver_sizes", "lambda_kl", "seeds"):
            if name in doc:
                kwargs[name] = tuple(doc.pop(name))
        for name in ("tau", "beam_k", "temper_student", "data_seed", "sentinel_pattern"):
            if name in doc:
                kwargs[name] = doc.pop(name)
        if doc:
            raise ConfigError(f"unknown config keys: {sorted(doc)}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


@dataclass
class RunRecord:
    """One grid cell: per-seed test evaluations plus their aggregates."""

    config_fingerprint: str
    silver_size: int
    lambda_kl: float
    per_seed: list[dict]
    mean_f1: float
    std_f1: float
    mean_perfect: float
    std_perfect: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))


def aggregate_cell(
    fingerprint: str, silver_size: int, lambda_kl: float, per_seed: list[dict]
) -> RunRecord:
    f1s = np.array([r["f1"] for r in per_seed])
    perfects = np.array([r["perfect"] for r in per_seed])
    return RunRecord(
        config_fingerprint=fingerprint,
        silver_size=silver_size,
        lambda_kl=lambda_kl,
        per_seed=per_seed,
        mean_f1=float(f1s.mean()),
        std_f1=float(f1s.std()),
        mean_perfect=float(perfects.mean()),
        std_perfect=float(perfects.std()),
    )


# ---------------------------------------------------------------------------
# Data and teacher assembly
# ---------------------------------------------------------------------------


def load_dataset(spec: DataSpec) -> Dataset:
    if spec.synthetic is not None:
        s = spec.synthetic
        dataset = generate_synthetic(
            s.grammar_seed,
            (s.n_train, s.n_dev, s.n_test),
            s.tag_count,
            lexicon_size=s.lexicon_size,
            max_filler_len=s.max_filler_len,
            carrier_rate=s.carrier_rate,
        )
    else:
        dataset = make_dataset(
            load_conll(spec.train_path, "train"),
            load_conll(spec.dev_path, "dev"),
            load_conll(spec.test_path, "test"),
        )
    if spec.dedup:
        dataset = dedup(dataset, spec.dedup_priority)
    return dataset


def gold_and_pool(
    config: ExperimentConfig, dataset: Dataset
) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
    """(gold train, gold dev, silver pool) under the data seed."""
    gold_train, pool = downsample(
        dataset.train, config.gold.train_size, derive_seed(config.data_seed, "gold-train")
    )
    gold_dev, _ = downsample(
        dataset.dev, config.gold.dev_size, derive_seed(config.data_seed, "gold-dev")
    )
    return gold_train, gold_dev, pool


def fit_teacher(
    config: ExperimentConfig,
    gold_train: DatasetSplit,
    gold_dev: DatasetSplit,
    tag_set: TagSet,
    pool: DatasetSplit | None = None,
):
    """Labels are seen from the gold split only; the pool contributes
    unlabeled token sequences for the teacher's denoising stage."""
    scheme = config.scheme()
    to_pairs = lambda split: [
        make_pair(s.tokens, s.gold_tags, scheme) for s in split
    ]
    unlabeled = [s.tokens for s in gold_train]
    if pool is not None:
        unlabeled += [s.tokens for s in pool]
    teacher_cfg = replace(config.teacher, seed=derive_seed(config.data_seed, "teacher"))
    return train_teacher(
        to_pairs(gold_train), to_pairs(gold_dev), tag_set, teacher_cfg, scheme,
        unlabeled_texts=unlabeled,
    )


# ---------------------------------------------------------------------------
# Grid execution
# ---------------------------------------------------------------------------


def sample_silver(
    pool_examples: Sequence[SilverExample], size: int, seed: int
) -> list[SilverExample]:
    """Uniform subset of the decoded pool, chosen by id under the seed."""
    if size > len(pool_examples):
        raise ConfigError(
            f"silver size {size} exceeds the pool of {len(pool_examples)}"
        )
    if size == 0:
        return []
    by_id = {ex.id: ex for ex in pool_examples}
    rng = np.random.default_rng(seed)
    chosen = rng.choice(np.array(sorted(by_id), dtype=object), size=size, replace=False)
    return [by_id[i] for i in sorted(chosen)]


def run_cell_seed(
    config: ExperimentConfig,
    gold_train: DatasetSplit,
    gold_dev: DatasetSplit,
    test: DatasetSplit,
    tag_set: TagSet,
    pool_examples: Sequence[SilverExample],
    silver_size: int,
    lambda_kl: float,
    seed: int,
) -> dict:
    silver = sample_silver(pool_examples, silver_size, derive_seed(seed, "silver"))
    student_cfg = replace(config.student, seed=derive_seed(seed, "student"))
    distill_cfg = DistillConfig(
        lambda_kl=lambda_kl, tau=config.tau, temper_student=config.temper_student
    )
    model, report = train_student(
        list(gold_train), silver, student_cfg, distill_cfg, list(gold_dev), tag_set
    )
    test_report = evaluate_student(model, list(test))
    return {
        "seed": seed,
        "f1": test_report.f1,
        "precision": test_report.precision,
        "recall": test_report.recall,
        "perfect": test_report.perfect,
        "best_epoch": report.best_epoch,
        "best_dev_f1": report.best_dev_f1,
        "epochs_run": report.epochs_run,
    }


def _cell_worker(args: tuple) -> tuple[int, float, list[dict]]:
    config_doc, out_dir, silver_size, lambda_kl = args
    config = ExperimentConfig.from_dict(config_doc)
    dataset = load_dataset(config.data)
    gold_train, gold_dev, _ = gold_and_pool(config, dataset)
    pool_examples = read_silver(os.path.join(out_dir, "silver_pool.jsonl"))
    per_seed = [
        run_cell_seed(
            config, gold_train, gold_dev, dataset.test, dataset.tag_set,
            pool_examples, silver_size, lambda_kl, seed,
        )
        for seed in config.seeds
    ]
    return silver_size, lambda_kl, per_seed


def run_experiment(
    config: ExperimentConfig, out_dir: str, jobs: int = 1
) -> list[RunRecord]:
    """Train one teacher on the gold split, decode the pool once, then run
    every (silver size, lambda, seed) student and write RunRecords."""
    os.makedirs(out_dir, exist_ok=True)
    runs_dir = os.path.join(out_dir, "runs")
    os.makedirs(runs_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(config.canonical_json())

    dataset = load_dataset(config.data)
    gold_train, gold_dev, pool = gold_and_pool(config, dataset)
    teacher, teacher_report = fit_teacher(config, gold_train, gold_dev, dataset.tag_set, pool)
    teacher.save(os.path.join(out_dir, "teacher"))
    with open(os.path.join(out_dir, "teacher_report.json"), "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(teacher_report), fh, sort_keys=True)

    silver_path = os.path.join(out_dir, "silver_pool.jsonl")
    pool_needed = max(config.silver_sizes, default=0)
    pool_examples: list[SilverExample] = []
    if pool_needed > 0:
        if pool_needed > len(pool):
            raise ConfigError(
                f"largest silver size {pool_needed} exceeds the pool of {len(pool)}"
            )
        pool_examples = generate_silver(
            teacher, list(pool), dataset.tag_set, config.scheme()
        )
    write_silver(silver_path, pool_examples)

    cells = [(ss, lk) for ss in config.silver_sizes for lk in config.lambda_kl]
    fingerprint = config.fingerprint()
    records: list[RunRecord] = []
    if jobs > 1:
        worker_args = [(config.to_dict(), out_dir, ss, lk) for ss, lk in cells]
        with ProcessPoolExecutor(max_workers=jobs) as pool_exec:
            results = list(pool_exec.map(_cell_worker, worker_args))
    else:
        results = []
        for ss, lk in cells:
            per_seed = [
                run_cell_seed(
                    config, gold_train, gold_dev, dataset.test, dataset.tag_set,
                    pool_examples, ss, lk, seed,
                )
                for seed in config.seeds
            ]
            results.append((ss, lk, per_seed))
    for ss, lk, per_seed in results:
        record = aggregate_cell(fingerprint, ss, lk, per_seed)
        records.append(record)
        path = os.path.join(runs_dir, f"cell_silver{ss}_lambda{lk:g}.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(record.to_json())
    return records


def load_records(out_dir: str) -> list[RunRecord]:
    runs_dir = os.path.join(out_dir, "runs")
    records = []
    for name in sorted(os.listdir(runs_dir)):
        if not name.endswith(".json"):
            continue
        with open(os.path.join(runs_dir, name), encoding="utf-8") as fh:
            records.append(RunRecord.from_json(fh.read()))
    return records


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------


def render_report(records: Sequence[RunRecord]) -> str:
    """Aligned text table over grid cells."""
    header = f"{'silver':>8} {'lambda':>8} {'mean F1':>10} {'std':>8} {'Perfect':>10} {'std':>8} {'seeds':>6}"
    lines = [header, "-" * len(header)]
    for rec in sorted(records, key=lambda r: (r.silver_size, r.lambda_kl)):
        lines.append(
            f"{rec.silver_size:>8d} {rec.lambda_kl:>8g} {rec.mean_f1:>10.4f} "
            f"{rec.std_f1:>8.4f} {rec.mean_perfect:>10.4f} {rec.std_perfect:>8.4f} "
            f"{len(rec.per_seed):>6d}"
        )
    return "\n".join(lines)


def write_report_csv(records: Sequence[RunRecord], path: str) -> None:
    """One row per (silver size, lambda) for external plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("silver_size,lambda_kl,mean_f1,std_f1,mean_perfect,std_perfect\n")
        for rec in sorted(records, key=lambda r: (r.silver_size, r.lambda_kl)):
            fh.write(
                f"{rec.silver_size},{rec.lambda_kl:g},{rec.mean_f1!r},"
                f"{rec.std_f1!r},{rec.mean_perfect!r},{rec.std_perfect!r}\n"
            )
