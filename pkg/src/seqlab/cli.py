"""Command-line front door.

Every subcommand is a thin wrapper over library functions; on failure it
exits nonzero with one machine-readable JSON error document on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import harness
from .corpus import load_conll, save_conll, stats
from .decoder import BeamConfig, beam_decode, score_rows_to_jsonable
from .distill import (
    DistillConfig,
    evaluate_student,
    generate_silver,
    read_silver,
    train_student,
    write_silver,
)
from .errors import ConfigError, SeqlabError
from .formats import TagSet, sbio_to_spans
from .harness import ExperimentConfig
from .metrics import micro_f1, render_eval_table
from .seeding import derive_seed
from .teacher import ToyTeacher


def _load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        raise ConfigError("this subcommand requires --config")
    return ExperimentConfig.from_file(path)


def _apply_seed_override(config: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    if seed is None:
        return config
    return dataclasses.replace(config, data_seed=seed, seeds=(seed,))


def _need_out(args) -> str:
    if not args.out:
        raise ConfigError("this subcommand requires --out")
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _teacher_tag_set(teacher: ToyTeacher) -> TagSet:
    if teacher.labels is None:
        raise ConfigError("teacher artifact carries no label inventory")
    return TagSet(teacher.labels)


def _write_dataset(dataset, out: str) -> None:
    for split in dataset.splits():
        save_conll(split, os.path.join(out, f"{split.name}.conll"))
    with open(os.path.join(out, "stats.json"), "w", encoding="utf-8") as fh:
        json.dump(stats(dataset), fh, sort_keys=True)


def cmd_ingest(args) -> int:
    config = _load_config(args.config)
    if config.data.synthetic is not None:
        raise ConfigError("ingest expects file paths in the data section; use synth")
    out = _need_out(args)
    _write_dataset(harness.load_dataset(config.data), out)
    return 0


def cmd_synth(args) -> int:
    config = _apply_seed_override(_load_config(args.config), args.seed)
    if config.data.synthetic is None:
        raise ConfigError("synth expects a data.synthetic section")
    out = _need_out(args)
    _write_dataset(harness.load_dataset(config.data), out)
    return 0


def cmd_train_teacher(args) -> int:
    config = _apply_seed_override(_load_config(args.config), args.seed)
    out = _need_out(args)
    dataset = harness.load_dataset(config.data)
    gold_train, gold_dev, pool = harness.gold_and_pool(config, dataset)
    teacher, report = harness.fit_teacher(config, gold_train, gold_dev, dataset.tag_set, pool)
    teacher.save(os.path.join(out, "teacher"))
    save_conll(gold_train, os.path.join(out, "gold_train.conll"))
    save_conll(gold_dev, os.path.join(out, "gold_dev.conll"))
    save_conll(pool, os.path.join(out, "pool.conll"))
    with open(os.path.join(out, "teacher_report.json"), "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(report), fh, sort_keys=True)
    print(f"best dev F1 {report.best_dev_f1:.4f} at epoch {report.best_epoch}")
    return 0


def cmd_decode(args) -> int:
    config = _load_config(args.config)
    teacher = ToyTeacher.load(args.teacher)
    tag_set = _teacher_tag_set(teacher)
    split = load_conll(args.input)
    beam = BeamConfig(k=args.beam if args.beam else config.beam_k)
    with open(args.output, "w", encoding="utf-8") as fh:
        for sent in split:
            result = beam_decode(teacher, sent.tokens, tag_set, beam, config.scheme())
            doc = {
                "id": sent.id,
                "tokens": list(sent.tokens),
                "tags": list(result.sequences[0]),
                "scores": score_rows_to_jsonable(result.score_matrices[0]),
                "tag_order": list(result.tag_order),
            }
            fh.write(json.dumps(doc, ensure_ascii=False))
            fh.write("\n")
    return 0


def cmd_silver(args) -> int:
    config = _load_config(args.config)
    teacher = ToyTeacher.load(args.teacher)
    tag_set = _teacher_tag_set(teacher)
    split = load_conll(args.input)
    examples = generate_silver(teacher, list(split), tag_set, config.scheme())
    write_silver(args.output, examples)
    return 0


def cmd_distill(args) -> int:
    config = _apply_seed_override(_load_config(args.config), args.seed)
    out = _need_out(args)
    gold = list(load_conll(args.gold))
    dev = list(load_conll(args.dev))
    silver = read_silver(args.silver) if args.silver else []
    dataset = harness.load_dataset(config.data)
    lambda_kl = config.lambda_kl[0] if args.lambda_kl is None else args.lambda_kl
    distill_cfg = DistillConfig(
        lambda_kl=lambda_kl, tau=config.tau, temper_student=config.temper_student
    )
    student_cfg = dataclasses.replace(
        config.student, seed=derive_seed(config.seeds[0], "student")
    )
    model, report = train_student(
        gold, silver, student_cfg, distill_cfg, dev, dataset.tag_set
    )
    model.save(os.path.join(out, "student"))
    with open(os.path.join(out, "student_report.json"), "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(report), fh, sort_keys=True)
    test_report = evaluate_student(model, list(dataset.test))
    with open(os.path.join(out, "test_eval.json"), "w", encoding="utf-8") as fh:
        fh.write(test_report.to_json())
    print(f"test F1 {test_report.f1:.4f}, Perfect {test_report.perfect:.4f}")
    return 0


def cmd_eval(args) -> int:
    gold = load_conll(args.gold)
    pred = load_conll(args.pred)
    if len(gold) != len(pred):
        raise ConfigError("gold and prediction files differ in sentence count")
    # Files are aligned positionally; ids are file-local.
    gold_spans = {s.id: sbio_to_spans(s.gold_tags) for s in gold}
    pred_spans = {g.id: sbio_to_spans(p.gold_tags) for g, p in zip(gold, pred)}
    report = micro_f1(gold_spans, pred_spans)
    print(render_eval_table(report))
    print(report.to_json())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    return 0


def cmd_experiment(args) -> int:
    config = _apply_seed_override(_load_config(args.config), args.seed)
    out = _need_out(args)
    records = harness.run_experiment(config, out, jobs=args.jobs)
    print(harness.render_report(records))
    return 0


def cmd_report(args) -> int:
    records = harness.load_records(args.records)
    print(harness.render_report(records))
    if args.csv:
        harness.write_report_csv(records, args.csv)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqlab",
        description="Sequence labelling with scored constrained decoding and distillation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seeds")
        if out:
            p.add_argument("--out", help="output directory")

    p = sub.add_parser("ingest", help="normalize CoNLL datasets named in the config")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate the synthetic corpus from the config")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-teacher", help="downsample gold and fit the toy teacher")
    common(p)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("decode", help="decode a CoNLL file with a saved teacher")
    common(p, out=False)
    p.add_argument("--teacher", required=True, help="teacher artifact prefix")
    p.add_argument("--input", required=True, help="CoNLL file to decode")
    p.add_argument("--output", required=True, help="JSONL decode results")
    p.add_argument("--beam", type=int, default=None, help="beam width override")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("silver", help="teacher-annotate a CoNLL file (width-1)")
    common(p, out=False)
    p.add_argument("--teacher", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="silver cache JSONL")
    p.set_defaults(func=cmd_silver)

    p = sub.add_parser("distill", help="train the student from gold + silver cache")
    common(p)
    p.add_argument("--gold", required=True, help="gold training CoNLL")
    p.add_argument("--dev", required=True, help="dev CoNLL for checkpointing")
    p.add_argument("--silver", default=None, help="silver cache JSONL")
    p.add_argument("--lambda-kl", type=float, default=None, dest="lambda_kl")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("eval", help="span micro-F1 of a prediction CoNLL vs gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run the full ablation grid")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel grid cells")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="render RunRecords as a table and CSV")
    p.add_argument("--records", required=True, help="experiment output directory")
    p.add_argument("--csv", default=None, help="also write a plot CSV here")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SeqlabError, OSError) as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
