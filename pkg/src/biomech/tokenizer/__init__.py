"""Vector-quantized motion tokenizer."""

from .config import PROFILES, TokenizerConfig, profile_config
from .model import (
    Codebook,
    LossBreakdown,
    TokenizerModel,
    TokenSequence,
    Trainer,
    codebook_stats,
    decode,
    ema_update,
    encode,
    evaluate_rmse,
    fit,
    fit_from_matrices,
    load_model,
    model_fingerprint,
    pad_to_multiple,
    quantize,
    read_token_corpus,
    reconstruct_matrix,
    save_model,
    serialize_model,
    ste_surrogate_loss,
    tokenize_trial,
    write_token_corpus,
)

__all__ = [
    "PROFILES", "TokenizerConfig", "profile_config",
    "Codebook", "LossBreakdown", "TokenizerModel", "TokenSequence", "Trainer",
    "codebook_stats", "decode", "ema_update", "encode", "evaluate_rmse",
    "fit", "fit_from_matrices", "load_model", "model_fingerprint",
    "pad_to_multiple", "quantize", "read_token_corpus", "reconstruct_matrix",
    "save_model", "serialize_model", "ste_surrogate_loss", "tokenize_trial",
    "write_token_corpus",
]
