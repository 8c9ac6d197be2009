"""Desk-scale gait analysis pipeline.

Synthesizes a labeled gait cohort, tokenizes trials with a trainable
vector-quantized autoencoder, builds a multimodal question/answer dataset,
trains gradient-boosted baselines over token histograms, evaluates them, and
serves an interactive chat API over tokenized trials.
"""

__version__ = "0.1.0"
