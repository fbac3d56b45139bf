"""Train the toy encoder-decoder on a small synthetic corpus and use it as
a scorer for width-1 decoding.

Run: python demos/03_toy_teacher.py   (about half a minute)
"""

import numpy as np

from seqlab import generate_synthetic, make_pair
from seqlab.decoder import greedy_decode, step_distribution
from seqlab.teacher import TeacherTrainConfig, train_teacher

ds = generate_synthetic(5, (300, 60, 60), 3, lexicon_size=30)
train_pairs = [make_pair(s.tokens, s.gold_tags) for s in ds.train]
dev_pairs = [make_pair(s.tokens, s.gold_tags) for s in ds.dev]

config = TeacherTrainConfig(
    epochs=40, patience=40, embedding_dim=32, encoder_hidden=32, decoder_hidden=32,
    batch_size=8, seed=0, learning_rate=2e-3, unk_dropout=0.2, dropout=0.2,
    pretrain_epochs=15, n_sentinels=20,
)
unlabeled = [s.tokens for s in ds.train]
teacher, report = train_teacher(train_pairs, dev_pairs, ds.tag_set, config,
                                unlabeled_texts=unlabeled)
print(f"initial loss {report.initial_loss:.2f}, "
      f"after epoch 1 {report.epoch_losses[0]:.2f}, "
      f"best dev F1 {report.best_dev_f1:.3f} at epoch {report.best_epoch}")

sent = ds.test.sentences[0]
tags, matrix = greedy_decode(teacher, sent.tokens, ds.tag_set)
print("\ntokens:", sent.tokens)
print("gold:  ", sent.gold_tags)
print("pred:  ", tags)
print("per-step teacher distributions (tau=10):")
for i, row in enumerate(matrix):
    probs = step_distribution(row, tau=10.0)
    print(f"  step {i}: " + "  ".join(
        f"{t}={p:.2f}" for t, p in zip(ds.tag_set.full, probs)))
