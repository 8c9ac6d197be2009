"""Vector-quantized motion tokenizer: model, training loop, serialization.

The encoder maps an (L, 34) joint-angle window to L/l latent vectors of
dimension D; each latent snaps to its nearest codebook entry; the mirrored
decoder reconstructs the window. Training couples reconstruction MSE with a
commitment term, routes gradients through the bottleneck with the
straight-through estimator, and learns the codebook by EMA with dead-code
resetting.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import backend
from ..errors import ContractViolation, EmptyInputError, TrainingDivergenceError
from ..motion import (
    ChannelMask,
    N_JOINTS,
    Trajectory,
    apply_channel_mask,
    strip_to_joint_matrix,
)
from ..splits import split_participants
from .config import TokenizerConfig
from .nn import Adam, Sequential, build_decoder, build_encoder

_MAGIC = b"BMTOK001"
_EMA_EPS = 1e-5


@dataclass
class Codebook:
    codes: np.ndarray  # (K, D)
    ema_cluster_count: np.ndarray  # (K,)
    ema_cluster_sum: np.ndarray  # (K, D)

    def __post_init__(self):
        if not np.all(np.isfinite(self.codes)):
            raise ContractViolation("codebook contains non-finite values")
        if np.any(self.ema_cluster_count < 0):
            raise ContractViolation("EMA cluster counts must be non-negative")

    @property
    def size(self) -> int:
        return self.codes.shape[0]


@dataclass(frozen=True)
class TokenSequence:
    """Ordered codebook indices for one trial."""

    trial_id: str
    tokens: tuple[int, ...]
    source_frames: int

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))


@dataclass
class TokenizerModel:
    config: TokenizerConfig
    encoder: Sequential
    decoder: Sequential
    codebook: Codebook
    norm_mean: np.ndarray  # (34,)
    norm_std: np.ndarray  # (34,)
    mask: ChannelMask = field(default_factory=ChannelMask)

    def normalize(self, joints: np.ndarray) -> np.ndarray:
        return (joints - self.norm_mean) / self.norm_std

    def denormalize(self, joints: np.ndarray) -> np.ndarray:
        return joints * self.norm_std + self.norm_mean

    def parameters(self):
        return ([("enc." + n, p, g) for n, p, g in self.encoder.parameters()]
                + [("dec." + n, p, g) for n, p, g in self.decoder.parameters()])


def new_model(config: TokenizerConfig, norm_mean: np.ndarray, norm_std: np.ndarray,
              mask: ChannelMask | None = None) -> TokenizerModel:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7E]))
    encoder = build_encoder(config.in_channels, config.code_dim_d, config.depth, rng)
    decoder = build_decoder(config.code_dim_d, config.in_channels, config.depth, rng)
    codes = rng.normal(0.0, 0.1, (config.codebook_size_k, config.code_dim_d))
    codebook = Codebook(codes=codes, ema_cluster_count=np.ones(config.codebook_size_k),
                        ema_cluster_sum=codes.copy())
    return TokenizerModel(config=config, encoder=encoder, decoder=decoder, codebook=codebook,
                          norm_mean=np.asarray(norm_mean, dtype=np.float64),
                          norm_std=np.asarray(norm_std, dtype=np.float64),
                          mask=mask or ChannelMask())


# ---------------------------------------------------------------------------
# Core operations


def encode(model: TokenizerModel, window: np.ndarray) -> np.ndarray:
    """Encode an (L, 34) window into (L/l, D) latents. L must be divisible by l."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[1] != model.config.in_channels:
        raise ContractViolation(f"expected (L, {model.config.in_channels}) window, got {window.shape}")
    if window.shape[0] == 0:
        raise EmptyInputError("empty window")
    if window.shape[0] % model.config.downsample_l != 0:
        raise ContractViolation(
            f"window length {window.shape[0]} not divisible by l={model.config.downsample_l}")
    x = model.normalize(window).T[None, :, :]  # (1, C, L)
    z, _ = model.encoder.forward(x)
    return z[0].T.copy()  # (L/l, D)


def quantize(codebook: Codebook, latents: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Snap latents to nearest codes. Returns (indices, quantized, commit_loss)."""
    latents = np.asarray(latents, dtype=np.float64)
    if latents.size == 0:
        raise EmptyInputError("empty latents")
    if latents.ndim != 2 or latents.shape[1] != codebook.codes.shape[1]:
        raise ContractViolation(f"latent dim {latents.shape} does not match codebook D={codebook.codes.shape[1]}")
    idx = backend.assign_codes(latents, codebook.codes)
    quantized = codebook.codes[idx]
    commit_loss = float(np.mean((latents - quantized) ** 2))
    return idx, quantized, commit_loss


def decode(model: TokenizerModel, quantized: np.ndarray) -> np.ndarray:
    """Decode (T, D) quantized latents back to (T*l, 34) joint angles in radians."""
    quantized = np.asarray(quantized, dtype=np.float64)
    if quantized.ndim != 2 or quantized.shape[1] != model.config.code_dim_d:
        raise ContractViolation(f"expected (T, {model.config.code_dim_d}) latents, got {quantized.shape}")
    x = quantized.T[None, :, :]
    y, _ = model.decoder.forward(x)
    return model.denormalize(y[0].T)


def reconstruct_matrix(model: TokenizerModel, joints: np.ndarray) -> np.ndarray:
    """Round-trip an (L, 34) matrix through the bottleneck; output matches L."""
    length = joints.shape[0]
    padded = pad_to_multiple(joints, model.config.downsample_l)
    latents = encode(model, padded)
    _, quantized, _ = quantize(model.codebook, latents)
    return decode(model, quantized)[:length]


def pad_to_multiple(joints: np.ndarray, multiple: int) -> np.ndarray:
    """Pad at the end by edge replication to a length multiple of `multiple`."""
    length = joints.shape[0]
    remainder = length % multiple
    if remainder == 0:
        return joints
    pad = multiple - remainder
    return np.concatenate([joints, np.repeat(joints[-1:], pad, axis=0)], axis=0)


def tokenize_trial(model: TokenizerModel, traj: Trajectory) -> TokenSequence:
    """Convert a trial into its motion-token sequence (ceil(frames / l) tokens)."""
    if traj.n_frames == 0:
        raise EmptyInputError("empty trajectory")
    joints = strip_to_joint_matrix(apply_channel_mask(traj, model.mask))
    padded = pad_to_multiple(joints, model.config.downsample_l)
    latents = encode(model, padded)
    idx, _, _ = quantize(model.codebook, latents)
    return TokenSequence(trial_id=traj.trial_id, tokens=tuple(int(i) for i in idx),
                         source_frames=traj.n_frames)


def codebook_stats(token_corpus, k: int) -> tuple[np.ndarray, float, float]:
    """Usage counts, entropy (bits) over used codes, and perplexity = 2**entropy."""
    flat: list[int] = []
    for item in token_corpus:
        flat.extend(item.tokens if isinstance(item, TokenSequence) else item)
    if not flat:
        raise EmptyInputError("empty token corpus")
    counts = np.bincount(np.asarray(flat, dtype=np.int64), minlength=k).astype(np.float64)
    p = counts / counts.sum()
    used = p > 0
    entropy_bits = float(-np.sum(p[used] * np.log2(p[used])))
    return counts, entropy_bits, float(2.0 ** entropy_bits)


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class LossBreakdown:
    recon: float
    commit: float
    total: float


def _forward_backward(model: TokenizerModel, batch: np.ndarray, *, compute_grads: bool = True):
    """One training pass over a (N, L, 34) batch of raw windows.

    Returns (losses, z_flat, idx, frozen) where frozen captures the
    quantization offsets for the straight-through surrogate (see
    `ste_surrogate_loss`).
    """
    cfg = model.config
    xn = model.normalize(batch).transpose(0, 2, 1)  # (N, C, L)
    z_map, enc_caches = model.encoder.forward(xn)
    n, d, t = z_map.shape
    z_flat = z_map.transpose(0, 2, 1).reshape(-1, d)
    idx, zq_flat, commit = quantize(model.codebook, z_flat)
    zq_map = zq_flat.reshape(n, t, d).transpose(0, 2, 1)
    xhat, dec_caches = model.decoder.forward(zq_map)
    recon = float(np.mean((xhat - xn) ** 2))
    total = recon + cfg.beta_commit * commit
    losses = LossBreakdown(recon=recon, commit=commit, total=total)
    frozen = (zq_flat - z_flat, zq_flat)

    if compute_grads:
        model.encoder.zero_grad()
        model.decoder.zero_grad()
        dxhat = 2.0 * (xhat - xn) / xhat.size
        dzq_map = model.decoder.backward(dxhat, dec_caches)
        # Straight-through: the quantization step is treated as identity.
        dz_flat = dzq_map.transpose(0, 2, 1).reshape(-1, d).copy()
        dz_flat += cfg.beta_commit * 2.0 * (z_flat - zq_flat) / z_flat.size
        dz_map = dz_flat.reshape(n, t, d).transpose(0, 2, 1)
        model.encoder.backward(dz_map, enc_caches)
    return losses, z_flat, idx, frozen


def ste_surrogate_loss(model: TokenizerModel, batch: np.ndarray,
                       frozen: tuple[np.ndarray, np.ndarray]) -> float:
    """Loss that the backward pass differentiates, with quantization realized
    as the frozen offset captured at the evaluation point.

    The hard assignment is piecewise constant, so its true derivative is zero
    almost everywhere; the straight-through estimator instead differentiates
    z + stop_gradient(e - z). Freezing (e - z) and the commitment targets e at
    the base point makes that surrogate an ordinary differentiable function of
    the parameters, suitable for finite-difference checks.
    """
    cfg = model.config
    offset, targets = frozen
    xn = model.normalize(batch).transpose(0, 2, 1)
    z_map, _ = model.encoder.forward(xn)
    n, d, t = z_map.shape
    z_flat = z_map.transpose(0, 2, 1).reshape(-1, d)
    dec_in = (z_flat + offset).reshape(n, t, d).transpose(0, 2, 1)
    xhat, _ = model.decoder.forward(dec_in)
    recon = float(np.mean((xhat - xn) ** 2))
    commit = float(np.mean((z_flat - targets) ** 2))
    return recon + cfg.beta_commit * commit


def ema_update(codebook: Codebook, z_flat: np.ndarray, idx: np.ndarray, decay: float) -> None:
    """EMA codebook learning: N_k <- g*N_k + (1-g)*n_k, m_k likewise, e_k = m_k / max(N_k, eps)."""
    k = codebook.size
    counts = np.bincount(idx, minlength=k).astype(np.float64)
    onehot = np.zeros((len(idx), k))
    onehot[np.arange(len(idx)), idx] = 1.0
    sums = onehot.T @ z_flat
    codebook.ema_cluster_count = decay * codebook.ema_cluster_count + (1.0 - decay) * counts
    codebook.ema_cluster_sum = decay * codebook.ema_cluster_sum + (1.0 - decay) * sums
    codebook.codes = codebook.ema_cluster_sum / np.maximum(codebook.ema_cluster_count, _EMA_EPS)[:, None]


class Trainer:
    """Owns the optimizer state, usage window, and dead-code resetting."""

    def __init__(self, model: TokenizerModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self.opt = Adam(model.parameters(), lr=model.config.learning_rate)
        cfg = model.config
        self.usage_buffer = np.zeros((cfg.reset_window_steps, cfg.codebook_size_k))
        self.usage_total = np.zeros(cfg.codebook_size_k)
        self.step_count = 0
        self.curve: list[LossBreakdown] = []

    def train_step(self, batch: np.ndarray) -> LossBreakdown:
        if batch.size == 0:
            raise EmptyInputError("empty training batch")
        cfg = self.model.config
        losses, z_flat, idx, _ = _forward_backward(self.model, batch)
        if not np.isfinite(losses.total):
            raise TrainingDivergenceError(self.step_count)
        self.opt.step()
        ema_update(self.model.codebook, z_flat, idx, cfg.ema_decay)
        self._track_usage_and_reset(z_flat, idx)
        self.step_count += 1
        self.curve.append(losses)
        return losses

    def _track_usage_and_reset(self, z_flat: np.ndarray, idx: np.ndarray) -> None:
        cfg = self.model.config
        counts = np.bincount(idx, minlength=cfg.codebook_size_k).astype(np.float64)
        slot = self.step_count % cfg.reset_window_steps
        self.usage_total += counts - self.usage_buffer[slot]
        self.usage_buffer[slot] = counts
        if self.step_count + 1 < cfg.reset_window_steps:
            return
        dead = np.flatnonzero(self.usage_total < cfg.reset_threshold)
        if dead.size == 0:
            return
        cb = self.model.codebook
        picks = self.rng.integers(0, z_flat.shape[0], size=dead.size)
        cb.codes[dead] = z_flat[picks]
        cb.ema_cluster_count[dead] = 1.0
        cb.ema_cluster_sum[dead] = cb.codes[dead]
        # Grace period: credit one use so a fresh code is not re-reset on the
        # very next step.
        self.usage_buffer[slot, dead] += 1.0
        self.usage_total[dead] += 1.0


def _window_batch(matrices: list[np.ndarray], rng: np.random.Generator,
                  batch_size: int, window: int) -> np.ndarray:
    batch = np.empty((batch_size, window, matrices[0].shape[1]))
    trial_ids = rng.integers(0, len(matrices), size=batch_size)
    for i, ti in enumerate(trial_ids):
        mat = matrices[ti]
        start = int(rng.integers(0, mat.shape[0] - window + 1))
        batch[i] = mat[start:start + window]
    return batch


def normalization_stats(matrices: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean/std over training matrices; degenerate channels get std 1."""
    stacked = np.concatenate(matrices, axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    degenerate = std < 1e-8
    std[degenerate] = 1.0
    mean[degenerate] = 0.0
    return mean, std


def fit_from_matrices(train_mats: list[np.ndarray], config: TokenizerConfig,
                      mask: ChannelMask | None = None,
                      log_every: int | None = None) -> tuple[TokenizerModel, list[LossBreakdown]]:
    """Train a tokenizer on pre-stripped (L, 34) training matrices."""
    eligible = [m for m in train_mats if m.shape[0] >= config.window_frames]
    if not eligible:
        raise EmptyInputError(f"no training trials with >= {config.window_frames} frames")
    mean, std = normalization_stats(eligible)
    model = new_model(config, mean, std, mask=mask)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5A]))

    # Seed the codebook from real encoder outputs so early assignments spread.
    init_batch = _window_batch(eligible, rng, min(config.batch_size, 8), config.window_frames)
    xn = model.normalize(init_batch).transpose(0, 2, 1)
    z0, _ = model.encoder.forward(xn)
    z0_flat = z0.transpose(0, 2, 1).reshape(-1, config.code_dim_d)
    picks = rng.integers(0, z0_flat.shape[0], size=config.codebook_size_k)
    model.codebook.codes = z0_flat[picks].copy()
    model.codebook.ema_cluster_count = np.ones(config.codebook_size_k)
    model.codebook.ema_cluster_sum = model.codebook.codes.copy()

    trainer = Trainer(model, rng)
    for step in range(config.train_steps):
        batch = _window_batch(eligible, rng, config.batch_size, config.window_frames)
        losses = trainer.train_step(batch)
        if log_every and (step + 1) % log_every == 0:
            print(f"step {step + 1}/{config.train_steps} "
                  f"recon={losses.recon:.5f} commit={losses.commit:.5f}")
    return model, trainer.curve


def fit(trial_dir: Path, config: TokenizerConfig, *, split_seed: int | None = None,
        mask: ChannelMask | None = None,
        log_every: int | None = None) -> tuple[TokenizerModel, list[LossBreakdown]]:
    """Train on all trials under `trial_dir`, excluding validation participants.

    The participant-level split uses the same deterministic rule as the
    dataset builder so the tokenizer never sees held-out participants.
    """
    from ..motion import read_trial

    paths = sorted(Path(trial_dir).glob("*/*.json"))
    if not paths:
        raise EmptyInputError(f"no trial files under {trial_dir}")
    trials = [read_trial(p) for p in paths]
    ids = sorted({t.participant_id for t in trials})
    train_ids, _ = split_participants(ids, 0.9, split_seed if split_seed is not None else config.seed)
    mask = mask or ChannelMask()
    train_mats = [strip_to_joint_matrix(apply_channel_mask(t, mask))
                  for t in trials if t.participant_id in train_ids]
    return fit_from_matrices(train_mats, config, mask=mask, log_every=log_every)


def evaluate_rmse(model: TokenizerModel, trials: list[Trajectory]) -> tuple[float, np.ndarray]:
    """Pooled per-joint reconstruction RMSE (degrees) over whole trials."""
    if not trials:
        raise EmptyInputError("no trials to evaluate")
    sq_sum = np.zeros(N_JOINTS)
    n_frames = 0
    for traj in trials:
        joints = strip_to_joint_matrix(apply_channel_mask(traj, model.mask))
        recon = reconstruct_matrix(model, joints)
        sq_sum += ((joints - recon) ** 2).sum(axis=0)
        n_frames += joints.shape[0]
    per_joint = np.degrees(np.sqrt(sq_sum / n_frames))
    return float(per_joint.mean()), per_joint


# ---------------------------------------------------------------------------
# Serialization (deterministic byte layout: magic, JSON header, raw arrays)


def _config_to_dict(cfg: TokenizerConfig) -> dict:
    return {k: getattr(cfg, k) for k in TokenizerConfig.__dataclass_fields__}


def serialize_model(model: TokenizerModel) -> bytes:
    arrays: list[tuple[str, np.ndarray]] = [
        ("norm_mean", model.norm_mean),
        ("norm_std", model.norm_std),
        ("codebook.codes", model.codebook.codes),
        ("codebook.ema_count", model.codebook.ema_cluster_count),
        ("codebook.ema_sum", model.codebook.ema_cluster_sum),
    ]
    arrays.extend((name, p) for name, p, _ in model.parameters())
    header = {
        "format_version": 1,
        "config": _config_to_dict(model.config),
        "mask_channels": sorted(model.mask.zeroed_channels),
        "arrays": [[name, str(a.dtype), list(a.shape)] for name, a in arrays],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<Q", len(header_bytes))
    blob += header_bytes
    for _, a in arrays:
        blob += np.ascontiguousarray(a, dtype=np.float64).tobytes()
    return bytes(blob)


def deserialize_model(data: bytes) -> TokenizerModel:
    if data[:8] != _MAGIC:
        raise ContractViolation("not a tokenizer model file")
    header_len = struct.unpack("<Q", data[8:16])[0]
    header = json.loads(data[16:16 + header_len])
    if header["format_version"] != 1:
        raise ContractViolation(f"unsupported model format version {header['format_version']}")
    config = TokenizerConfig(**header["config"])
    mask = ChannelMask(frozenset(header["mask_channels"]))

    offset = 16 + header_len
    loaded: dict[str, np.ndarray] = {}
    for name, dtype, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
        offset += arr.nbytes
        loaded[name] = arr

    model = new_model(config, loaded["norm_mean"], loaded["norm_std"], mask=mask)
    model.codebook = Codebook(codes=loaded["codebook.codes"],
                              ema_cluster_count=loaded["codebook.ema_count"],
                              ema_cluster_sum=loaded["codebook.ema_sum"])
    for name, p, _ in model.parameters():
        p[...] = loaded[name]
    return model


def save_model(model: TokenizerModel, path: Path) -> str:
    """Write the model; returns its fingerprint (sha256 of the bytes)."""
    data = serialize_model(model)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_model(path: Path) -> TokenizerModel:
    return deserialize_model(Path(path).read_bytes())


def model_fingerprint(model: TokenizerModel) -> str:
    return hashlib.sha256(serialize_model(model)).hexdigest()


# ---------------------------------------------------------------------------
# Token corpus I/O (newline-delimited JSON)


def write_token_corpus(sequences: list[TokenSequence], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for seq in sequences:
            fh.write(json.dumps({"trial_id": seq.trial_id, "tokens": list(seq.tokens),
                                 "source_frames": seq.source_frames}) + "\n")


def read_token_corpus(path: Path) -> list[TokenSequence]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(TokenSequence(trial_id=d["trial_id"], tokens=tuple(d["tokens"]),
                                         source_frames=d["source_frames"]))
    return out
