"""Desk-scale neural abstractive summarization toolkit.

Four summarization models (LSTM+attention baseline, pointer-generator,
pointer-generator+coverage, transformer) built on a minimal reverse-mode
autodiff core, plus ROUGE evaluation, beam-search decoding, Adagrad
training, and a summarize-then-classify fake-news pipeline.
"""

__version__ = "0.1.0"
