"""Distill the toy teacher into the BiLSTM tagger: gold-only versus
pseudo-labels versus full knowledge distillation.

Run: python demos/04_distillation.py   (about a minute)
"""

from seqlab import generate_synthetic, make_pair
from seqlab.distill import DistillConfig, evaluate_student, generate_silver, train_student
from seqlab.student import StudentConfig
from seqlab.teacher import TeacherTrainConfig, train_teacher

ds = generate_synthetic(21, (400, 60, 60), 2, lexicon_size=40)
gold = list(ds.train)[:40]
pool = list(ds.train)[40:240]

teacher_cfg = TeacherTrainConfig(
    epochs=40, patience=40, embedding_dim=24, encoder_hidden=24, decoder_hidden=24,
    batch_size=8, seed=3, n_sentinels=16, learning_rate=2e-3,
    unk_dropout=0.2, dropout=0.2, pretrain_epochs=15,
)
pairs = [make_pair(s.tokens, s.gold_tags) for s in gold]
dev_pairs = [make_pair(s.tokens, s.gold_tags) for s in ds.dev]
unlabeled = [s.tokens for s in gold] + [s.tokens for s in pool]
teacher, tr = train_teacher(pairs, dev_pairs, ds.tag_set, teacher_cfg,
                            unlabeled_texts=unlabeled)
print(f"teacher dev F1: {tr.best_dev_f1:.3f}")

# Width-1 decoding yields hard pseudo-labels AND the per-step score rows
# the KL term consumes; lambda_kl switches the KD term on and off.
silver = generate_silver(teacher, pool, ds.tag_set)

student_cfg = StudentConfig(
    word_emb_dim=16, char_emb_dim=6, char_hidden=6, word_hidden=16,
    epochs=20, patience=20, batch_size=8, seed=1, learning_rate=2e-3,
)
for name, silver_set, lam in [
    ("gold only          ", [], 0.0),
    ("pseudo-labels only ", silver, 0.0),
    ("full distillation  ", silver, 1.0),
]:
    model, _ = train_student(gold, silver_set, student_cfg,
                             DistillConfig(lambda_kl=lam, tau=10.0),
                             list(ds.dev), ds.tag_set)
    report = evaluate_student(model, list(ds.test))
    print(f"{name} test F1 {report.f1:.3f}  Perfect {report.perfect:.3f}")
