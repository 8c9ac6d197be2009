"""Participant-level train/test splitting shared by the tokenizer and dataset builder."""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, EmptyInputError


def split_participants(participant_ids, ratio: float = 0.9,
                       seed: int = 0) -> tuple[set[str], set[str]]:
    """Deterministically split whole participants into train/test sets.

    |train| = round(ratio * n). Input order does not matter: ids are sorted
    before shuffling under the seed.
    """
    ids = list(participant_ids)
    if not ids:
        raise EmptyInputError("no participant ids to split")
    if len(set(ids)) != len(ids):
        raise ContractViolation("participant ids must be unique")
    if not 0.0 < ratio < 1.0:
        raise ContractViolation("split ratio must lie strictly between 0 and 1")
    ordered = sorted(ids)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x59]))
    rng.shuffle(ordered)
    n_train = int(round(ratio * len(ordered)))
    return set(ordered[:n_train]), set(ordered[n_train:])
