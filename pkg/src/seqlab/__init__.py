"""seqlab: sequence labelling with scored constrained decoding and
teacher-student distillation on a from-scratch numpy autodiff core."""

from .corpus import (
    Dataset,
    DatasetSplit,
    Sentence,
    SplitSpec,
    dedup,
    derive_tag_set,
    downsample,
    generate_synthetic,
    load_conll,
    make_dataset,
    save_conll,
    stats,
)
from .decoder import (
    BeamConfig,
    DecodeResult,
    beam_decode,
    exhaustive_decode,
    greedy_decode,
    step_distribution,
)
from .distill import (
    DistillConfig,
    SilverExample,
    TrainReport,
    distill_loss,
    evaluate_student,
    generate_silver,
    read_silver,
    train_student,
    write_silver,
)
from .formats import (
    DEFAULT_SCHEME,
    INSIDE,
    OUTSIDE,
    VARIANT_CLOSED,
    VARIANT_OPEN,
    FormattedPair,
    SentinelScheme,
    Span,
    TagSet,
    bio_to_sbio,
    count_valid_sequences,
    encode_input,
    encode_target,
    make_pair,
    parse_output,
    sbio_to_bio,
    sbio_to_spans,
    spans_to_sbio,
    valid_next_tags,
    validate_sbio,
)
from .harness import ExperimentConfig, RunRecord, run_experiment
from .metrics import EvalReport, micro_f1, perfect
from .scorer import ExternalScorer, Scorer, TableScorer, loopback_scorer
from .student import StudentConfig, StudentModel, StudentOutput
from .teacher import TeacherTrainConfig, ToyTeacher, train_teacher

__version__ = "0.1.0"
