"""Multi-track GAN with a shared latent trunk and per-track generator heads.

One discriminator scores flattened rolls.  Training alternates discriminator
and generator updates with logistic loss (non-saturating for the generator),
checkpoints on a fixed cadence, and is a pure function of its config seed.

Also hosts the oracle models used to validate attack power: a generator with
a memorization dial and a discriminator with a controllable member margin.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import nn
from .errors import ConfigError, DivergenceError, FormatError
from .pianoroll import Dataset, Pianoroll, PianorollShape, flatten

CHECKPOINT_MAGIC = b"GANC"
CHECKPOINT_VERSION = 1

TRUNK_WIDTH = 128
DISC_WIDTH = 128


@dataclass
class ComposerGan:
    """Shared latent -> trunk feature -> one logit head per track, plus a
    discriminator over flattened rolls."""

    latent_dim: int
    shape: PianorollShape
    trunk: nn.Mlp
    heads: list[nn.Mlp]
    discriminator: nn.Mlp

    def __post_init__(self):
        if len(self.heads) != self.shape.tracks:
            raise ConfigError("need one head per track")
        if self.trunk.in_dim != self.latent_dim:
            raise ConfigError("trunk input must match latent_dim")
        for head in self.heads:
            if head.in_dim != self.trunk.out_dim:
                raise ConfigError("head input must match trunk output")
            if head.out_dim != self.shape.cells_per_track:
                raise ConfigError("head output must match cells per track")
        if self.discriminator.in_dim != self.shape.cells:
            raise ConfigError("discriminator input must match cell count")
        if self.discriminator.out_dim != 1:
            raise ConfigError("discriminator must output a single logit")

    def generator_params(self) -> list[np.ndarray]:
        params = nn.mlp_params(self.trunk)
        for head in self.heads:
            params.extend(nn.mlp_params(head))
        return params

    def all_params(self) -> list[np.ndarray]:
        return self.generator_params() + nn.mlp_params(self.discriminator)


def build_gan(shape: PianorollShape, latent_dim: int, seed) -> ComposerGan:
    """Seeded construction; init order is trunk, heads in track order, then
    discriminator, so identical seeds give identical weights."""
    if latent_dim < 1:
        raise ConfigError("latent_dim must be >= 1")
    rng = np.random.default_rng(seed)
    trunk = nn.glorot_init([latent_dim, TRUNK_WIDTH], ["relu"], rng)
    heads = [
        nn.glorot_init([TRUNK_WIDTH, shape.cells_per_track], ["linear"], rng)
        for _ in range(shape.tracks)
    ]
    disc = nn.glorot_init([shape.cells, DISC_WIDTH, 1], ["relu", "linear"], rng)
    return ComposerGan(latent_dim, shape, trunk, heads, disc)


def _generator_logits(gan: ComposerGan, z: np.ndarray) -> tuple[np.ndarray, list]:
    """Concatenated per-track logits (track-major) plus caches for backward."""
    h, trunk_cache = nn.forward(gan.trunk, z)
    logits = np.empty(gan.shape.cells)
    head_caches = []
    cpt = gan.shape.cells_per_track
    for t, head in enumerate(gan.heads):
        out, cache = nn.forward(head, h)
        logits[t * cpt : (t + 1) * cpt] = out
        head_caches.append(cache)
    return logits, [trunk_cache, head_caches]


def g_sample(gan: ComposerGan, z: np.ndarray) -> Pianoroll:
    """Deterministic sample for a latent vector: cells are 1 where the head
    logit is strictly positive."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (gan.latent_dim,):
        raise ConfigError(f"latent vector must have length {gan.latent_dim}")
    logits, _ = _generator_logits(gan, z)
    cells = (logits > 0.0).astype(np.uint8).reshape(gan.shape.dims())
    return Pianoroll(gan.shape, cells)


def d_score(gan: ComposerGan, roll: Pianoroll) -> float:
    """Raw discriminator logit; larger means more training-set-like."""
    if roll.shape != gan.shape:
        raise ConfigError("roll shape does not match the model")
    out, _ = nn.forward(gan.discriminator, flatten(roll))
    return float(out[0])


@dataclass(frozen=True)
class TrainConfig:
    iterations: int
    batch_size: int
    latent_dim: int
    lr: float
    seed: int
    checkpoint_every: int
    d_steps_per_g_step: int = 1

    def __post_init__(self):
        for name in ("iterations", "batch_size", "latent_dim", "checkpoint_every",
                     "d_steps_per_g_step"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.lr <= 0.0:
            raise ConfigError("lr must be positive")
        if self.iterations % self.checkpoint_every != 0:
            raise ConfigError("checkpoint_every must divide iterations")


@dataclass
class Checkpoint:
    iteration: int
    gan: ComposerGan


def _snapshot(iteration: int, gan: ComposerGan) -> Checkpoint:
    return Checkpoint(iteration, copy.deepcopy(gan))


def _accumulate(total: list[np.ndarray], grads: list[np.ndarray], scale: float) -> None:
    # grads are freshly allocated per sample, so scale them in place
    for acc, g in zip(total, grads):
        g *= scale
        acc += g


def _disc_step_grads(
    gan: ComposerGan, x: np.ndarray, target: int, acc: list[np.ndarray], scale: float
) -> float:
    logit, cache = nn.forward(gan.discriminator, x)
    loss, dlogit = nn.bce_logits_loss(logit[0], target)
    grads, _ = nn.backward(gan.discriminator, cache, np.array([dlogit]))
    _accumulate(acc, nn.grads_to_list(grads), scale)
    return loss


def _gen_step_grads(
    gan: ComposerGan, z: np.ndarray, acc: list[np.ndarray], scale: float
) -> float:
    """Non-saturating generator loss through sigmoid head outputs.

    The discriminator sees the continuous sigmoid roll here so gradients can
    flow back into the generator; its own parameters are left untouched.
    """
    logits, (trunk_cache, head_caches) = _generator_logits(gan, z)
    cont = nn.sigmoid(logits)
    d_out, d_cache = nn.forward(gan.discriminator, cont)
    loss, dlogit = nn.bce_logits_loss(d_out[0], 1)
    _, dx = nn.backward(gan.discriminator, d_cache, np.array([dlogit]))
    dlogits = dx * cont * (1.0 - cont)

    cpt = gan.shape.cells_per_track
    trunk_out_grad = np.zeros(gan.trunk.out_dim)
    head_grads = []
    for t, head in enumerate(gan.heads):
        hg, dh = nn.backward(head, head_caches[t], dlogits[t * cpt : (t + 1) * cpt])
        head_grads.append(hg)
        trunk_out_grad += dh
    trunk_grads, _ = nn.backward(gan.trunk, trunk_cache, trunk_out_grad)

    flat = nn.grads_to_list(trunk_grads)
    for hg in head_grads:
        flat.extend(nn.grads_to_list(hg))
    _accumulate(acc, flat, scale)
    return loss


def train(
    train_set: Dataset,
    config: TrainConfig,
    checkpoint_sink: Callable[[Checkpoint], None] | None = None,
) -> list[Checkpoint]:
    """Alternating D/G training with a checkpoint every ``checkpoint_every``
    iterations.  Fully determined by config.seed.

    The discriminator trains on real rolls (target 1) and binarized generator
    samples (target 0); gradient accumulation is sequential in sample order.
    Non-finite losses raise DivergenceError carrying the last good checkpoint.
    """
    if len(train_set) < config.batch_size:
        raise ConfigError("training set smaller than batch size")
    init_ss, loop_ss = np.random.SeedSequence(config.seed).spawn(2)
    gan = build_gan(train_set.shape, config.latent_dim, init_ss)
    rng = np.random.default_rng(loop_ss)

    X = np.stack([flatten(r) for r in train_set.rolls])
    n = len(train_set)
    g_params = gan.generator_params()
    d_params = nn.mlp_params(gan.discriminator)
    g_state = nn.AdamState.for_params(g_params, lr=config.lr)
    d_state = nn.AdamState.for_params(d_params, lr=config.lr)

    checkpoints: list[Checkpoint] = []
    last_good: Checkpoint | None = None
    inv_batch = 1.0 / config.batch_size

    for it in range(1, config.iterations + 1):
        d_loss = 0.0
        for _ in range(config.d_steps_per_g_step):
            real_idx = rng.choice(n, size=config.batch_size, replace=False)
            z_batch = rng.standard_normal((config.batch_size, config.latent_dim))
            d_acc = [np.zeros_like(p) for p in d_params]
            d_loss = 0.0
            for i in real_idx:
                d_loss += _disc_step_grads(gan, X[i], 1, d_acc, inv_batch)
            for z in z_batch:
                fake = (_generator_logits(gan, z)[0] > 0.0).astype(np.float64)
                d_loss += _disc_step_grads(gan, fake, 0, d_acc, inv_batch)
            nn.adam_step(d_params, d_acc, d_state)

        z_batch = rng.standard_normal((config.batch_size, config.latent_dim))
        g_acc = [np.zeros_like(p) for p in g_params]
        g_loss = 0.0
        for z in z_batch:
            g_loss += _gen_step_grads(gan, z, g_acc, inv_batch)
        nn.adam_step(g_params, g_acc, g_state)

        if not (np.isfinite(d_loss) and np.isfinite(g_loss)):
            raise DivergenceError(
                f"divergence at iteration {it}", last_checkpoint=last_good
            )

        if it % config.checkpoint_every == 0:
            ckpt = _snapshot(it, gan)
            checkpoints.append(ckpt)
            last_good = ckpt
            if checkpoint_sink is not None:
                checkpoint_sink(ckpt)

    return checkpoints


# ---------------------------------------------------------------------------
# Oracle models: ground-truth leaky/non-leaky stand-ins for attack validation.
# ---------------------------------------------------------------------------


@dataclass
class OracleGenerator:
    """Generator with a memorization dial.

    With probability ``memorization_rate`` a draw returns a uniformly chosen
    training roll whose cells are independently flipped with probability
    ``flip_noise``; otherwise it returns a fresh population sample.
    """

    memorization_rate: float
    flip_noise: float
    training_rolls: Dataset
    population_sampler: Callable[[int], Pianoroll]

    def __post_init__(self):
        if not 0.0 <= self.memorization_rate <= 1.0:
            raise ConfigError("memorization_rate must be in [0, 1]")
        if not 0.0 <= self.flip_noise <= 1.0:
            raise ConfigError("flip_noise must be in [0, 1]")


def oracle_generate(oracle: OracleGenerator, seed) -> Pianoroll:
    rng = np.random.default_rng(seed)
    memorize = rng.random() < oracle.memorization_rate
    pop_seed = int(rng.integers(2**63))
    if not memorize:
        return oracle.population_sampler(pop_seed)
    roll = oracle.training_rolls.rolls[int(rng.integers(len(oracle.training_rolls)))]
    cells = roll.cells
    if oracle.flip_noise > 0.0:
        flips = rng.random(cells.shape) < oracle.flip_noise
        cells = np.where(flips, 1 - cells, cells).astype(np.uint8)
    return Pianoroll(roll.shape, cells.copy())


@dataclass
class OracleDiscriminator:
    """Scores margin*1[member] + Gaussian(0, score_noise) per query."""

    margin: float
    score_noise: float
    member_ids: frozenset[int]

    def __post_init__(self):
        if not np.isfinite(self.margin) or not np.isfinite(self.score_noise):
            raise ConfigError("margin and score_noise must be finite")
        if self.score_noise < 0.0:
            raise ConfigError("score_noise must be >= 0")


def oracle_d_score(oracle: OracleDiscriminator, record_id: int, seed) -> float:
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, oracle.score_noise) if oracle.score_noise > 0.0 else 0.0
    base = oracle.margin if record_id in oracle.member_ids else 0.0
    return float(base + noise)


# ---------------------------------------------------------------------------
# Checkpoint file format: magic "GANC", u32 version, u64 iteration, then a
# u32-length-prefixed UTF-8 JSON architecture descriptor, u32 tensor count,
# and per tensor u32 rank, u32 dims[], f32 little-endian data.
# ---------------------------------------------------------------------------


def _descriptor(gan: ComposerGan) -> dict:
    return {
        "latent_dim": gan.latent_dim,
        "shape": {
            "tracks": gan.shape.tracks,
            "bars": gan.shape.bars,
            "steps_per_bar": gan.shape.steps_per_bar,
            "pitches": gan.shape.pitches,
            "base_midi_pitch": gan.shape.base_midi_pitch,
        },
        "trunk": gan.trunk.dims(),
        "heads": [head.dims() for head in gan.heads],
        "discriminator": gan.discriminator.dims(),
    }


def _mlp_from_dims(dims: list[int], tensors: list[np.ndarray], family: str) -> nn.Mlp:
    """Rebuild an Mlp from a dims chain; activations follow the fixed family
    convention (hidden layers relu, trunk output relu, logit outputs linear)."""
    n_layers = len(dims) - 1
    layers = []
    for i in range(n_layers):
        weights = tensors[2 * i]
        bias = tensors[2 * i + 1]
        if weights.shape != (dims[i + 1], dims[i]) or bias.shape != (dims[i + 1],):
            raise FormatError("architecture mismatch: tensor dims disagree with descriptor")
        if family == "trunk":
            act = "relu"
        else:
            act = "relu" if i < n_layers - 1 else "linear"
        layers.append(nn.DenseLayer(weights, bias, act))
    return nn.Mlp(layers)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    desc = json.dumps(_descriptor(ckpt.gan), sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors = ckpt.gan.all_params()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", ckpt.iteration))
        fh.write(struct.pack("<I", len(desc)))
        fh.write(desc)
        fh.write(struct.pack("<I", len(tensors)))
        for tensor in tensors:
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(tensor.astype("<f4").tobytes())


class _Reader:
    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.off = 0
        self.path = path

    def take(self, count: int) -> bytes:
        if self.off + count > len(self.blob):
            raise FormatError(f"truncated checkpoint {self.path}")
        out = self.blob[self.off : self.off + count]
        self.off += count
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Load a checkpoint, rebuilding the model from its descriptor.

    Distinct FormatErrors cover bad magic, unsupported version, truncation,
    trailing bytes, and descriptor/tensor architecture mismatches.
    """
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic in {path}")
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version} in {path}")
    iteration = r.u64()
    desc_len = r.u32()
    try:
        desc = json.loads(r.take(desc_len).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"bad checkpoint descriptor in {path}: {exc}") from exc
    try:
        shape = PianorollShape(**desc["shape"])
        latent_dim = int(desc["latent_dim"])
        trunk_dims = [int(d) for d in desc["trunk"]]
        head_dims = [[int(d) for d in h] for h in desc["heads"]]
        disc_dims = [int(d) for d in desc["discriminator"]]
    except (KeyError, TypeError, ConfigError) as exc:
        raise FormatError(f"bad checkpoint descriptor in {path}: {exc}") from exc

    expected_tensors = 2 * (
        (len(trunk_dims) - 1)
        + sum(len(h) - 1 for h in head_dims)
        + (len(disc_dims) - 1)
    )
    count = r.u32()
    if count != expected_tensors:
        raise FormatError(
            f"architecture mismatch: descriptor implies {expected_tensors} tensors, file has {count}"
        )
    tensors = []
    for _ in range(count):
        rank = r.u32()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(r.take(4 * size), dtype="<f4").astype(np.float64)
        tensors.append(data.reshape(dims))
    if r.off != len(r.blob):
        raise FormatError(f"trailing data in checkpoint {path}")

    pos = 0

    def take_mlp(dims: list[int], family: str) -> nn.Mlp:
        nonlocal pos
        n = 2 * (len(dims) - 1)
        mlp = _mlp_from_dims(dims, tensors[pos : pos + n], family)
        pos += n
        return mlp

    trunk = take_mlp(trunk_dims, "trunk")
    heads = [take_mlp(h, "head") for h in head_dims]
    disc = take_mlp(disc_dims, "disc")
    try:
        gan = ComposerGan(latent_dim, shape, trunk, heads, disc)
    except ConfigError as exc:
        raise FormatError(f"architecture mismatch: {exc}") from exc
    return Checkpoint(iteration, gan)
