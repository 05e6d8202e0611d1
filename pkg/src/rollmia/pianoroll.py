"""Pianoroll data model: synthetic generation, splitting, and binary file I/O.

A pianoroll is a binary tensor indexed (track, bar, step, pitch); a dataset is
an ordered list of same-shaped rolls with stable integer ids.  Everything here
is a pure function of its seed, so identical calls reproduce identical bytes.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

DATASET_MAGIC = b"PRD1"
DATASET_VERSION = 1

MAX_CELLS = 2**24  # desk-scale bound on tracks*bars*steps*pitches


@dataclass(frozen=True)
class PianorollShape:
    """Dimensions of one multi-track pianoroll."""

    tracks: int
    bars: int
    steps_per_bar: int
    pitches: int
    base_midi_pitch: int = 24

    def __post_init__(self):
        for name in ("tracks", "bars", "steps_per_bar", "pitches"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.cells > MAX_CELLS:
            raise ConfigError(
                f"total cells {self.cells} exceeds desk-scale bound {MAX_CELLS}"
            )

    @property
    def cells(self) -> int:
        return self.tracks * self.bars * self.steps_per_bar * self.pitches

    @property
    def cells_per_track(self) -> int:
        return self.bars * self.steps_per_bar * self.pitches

    def dims(self) -> tuple[int, int, int, int]:
        return (self.tracks, self.bars, self.steps_per_bar, self.pitches)


@dataclass
class Pianoroll:
    """One binary multi-track record; ``cells`` is uint8 of 0/1, indexed
    (track, bar, step, pitch)."""

    shape: PianorollShape
    cells: np.ndarray

    def __post_init__(self):
        if self.cells.shape != self.shape.dims():
            raise ConfigError(
                f"cells shape {self.cells.shape} does not match {self.shape.dims()}"
            )
        if self.cells.dtype != np.uint8:
            self.cells = self.cells.astype(np.uint8)
        hi = int(self.cells.max(initial=0))
        if hi > 1:
            raise ConfigError("pianoroll cells must be binary")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pianoroll):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.cells, other.cells)


@dataclass
class Dataset:
    """Ordered collection of same-shaped rolls with unique integer ids."""

    shape: PianorollShape
    rolls: list[Pianoroll]
    ids: list[int]

    def __post_init__(self):
        if not self.rolls:
            raise ConfigError("empty dataset")
        if len(self.ids) != len(self.rolls):
            raise ConfigError("ids/rolls length mismatch")
        if len(set(self.ids)) != len(self.ids):
            raise ConfigError("dataset ids must be unique")
        for roll in self.rolls:
            if roll.shape != self.shape:
                raise ConfigError("all rolls must share the dataset shape")

    def __len__(self) -> int:
        return len(self.rolls)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.ids == other.ids
            and all(a == b for a, b in zip(self.rolls, other.rolls))
        )


@dataclass(frozen=True)
class SplitSpec:
    """Train/test partition rule: train gets floor(train_fraction * n) rolls,
    the remainder goes to test."""

    train_fraction: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")


@dataclass(frozen=True)
class StyleParams:
    """Knobs for the synthetic generator.

    rhythm_period: steps between hits on the rhythm track.
    ornament_prob: per-cell chance of an extra on-bit (texture/entropy).
    transpose: semitone shift applied to tracks copied from track 0
        (wraps around the pitch axis).
    """

    rhythm_period: int = 4
    ornament_prob: float = 0.02
    transpose: int = 12

    def __post_init__(self):
        if self.rhythm_period < 1:
            raise ConfigError("rhythm_period must be >= 1")
        if not 0.0 <= self.ornament_prob <= 1.0:
            raise ConfigError("ornament_prob must be in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "StyleParams":
        known = {"rhythm_period", "ornament_prob", "transpose"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown style keys: {sorted(unknown)}")
        return cls(**data)


def _pitch_indices_for_class(shape: PianorollShape, pitch_class: int) -> np.ndarray:
    """All pitch indices whose MIDI pitch falls in the given class."""
    idx = np.arange(shape.pitches)
    return idx[(shape.base_midi_pitch + idx) % 12 == pitch_class]


def _synth_roll(rng: np.random.Generator, shape: PianorollShape, style: StyleParams) -> Pianoroll:
    tracks, bars, steps, pitches = shape.dims()
    total_steps = bars * steps
    cells = np.zeros(shape.dims(), dtype=np.uint8)

    root = int(rng.integers(12))
    # second chord a fourth or fifth above the root
    shift = int(rng.choice([5, 7]))
    thirds = [int(rng.choice([3, 4])), int(rng.choice([3, 4]))]
    chords = [
        [root % 12, (root + thirds[0]) % 12, (root + 7) % 12],
        [(root + shift) % 12, (root + shift + thirds[1]) % 12, (root + shift + 7) % 12],
    ]
    octave = int(rng.integers(max(1, pitches // 12)))

    # track 0: chord tones held at every step, chord change at the halfway point
    chord_track = np.zeros((bars, steps, pitches), dtype=np.uint8)
    flat_steps = chord_track.reshape(total_steps, pitches)
    half = total_steps // 2
    for s in range(total_steps):
        chord = chords[0] if s < max(half, 1) else chords[1]
        for pc in chord:
            candidates = _pitch_indices_for_class(shape, pc)
            register = candidates[candidates >= 12 * octave]
            pick = register[0] if register.size else candidates[0]
            flat_steps[s, pick] = 1
    cells[0] = chord_track

    if tracks >= 2:
        # track 1: periodic rhythm on the lowest pitch of the root class
        phase = int(rng.integers(style.rhythm_period))
        rhythm = np.zeros((total_steps, pitches), dtype=np.uint8)
        low = _pitch_indices_for_class(shape, root)[0]
        rhythm[phase::style.rhythm_period, low] = 1
        cells[1] = rhythm.reshape(bars, steps, pitches)

    for t in range(2, tracks):
        cells[t] = np.roll(chord_track, style.transpose, axis=-1)

    if style.ornament_prob > 0.0:
        ornaments = rng.random(cells.shape) < style.ornament_prob
        cells = np.where(ornaments, np.uint8(1), cells)

    return Pianoroll(shape, cells)


def synth_generate(
    seed: int,
    count: int,
    shape: PianorollShape,
    style: StyleParams | None = None,
) -> Dataset:
    """Generate ``count`` rolls with learnable tonal structure.

    Each roll draws a root pitch class, a two-chord progression on track 0 and
    a periodic rhythm on track 1; further tracks copy track 0 transposed.
    Roll i depends only on (seed, i, shape, style), so prefixes agree across
    different counts.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    if shape.pitches < 12:
        raise ConfigError("pitch range too small for pitch classes")
    style = style or StyleParams()
    rolls = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        rolls.append(_synth_roll(rng, shape, style))
    return Dataset(shape, rolls, list(range(count)))


def synth_sampler(shape: PianorollShape, style: StyleParams | None = None):
    """Seeded single-roll sampler over the synthetic population; used as the
    population source for oracle generators and one-off draws."""
    if shape.pitches < 12:
        raise ConfigError("pitch range too small for pitch classes")
    style = style or StyleParams()

    def sample(seed) -> Pianoroll:
        return _synth_roll(np.random.default_rng(seed), shape, style)

    return sample


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Uniform random partition into (train, test); ids keep their provenance.

    Train size is floor(train_fraction * n); indices are selected by a seeded
    permutation and kept in ascending order on both sides.
    """
    n = len(dataset)
    if n < 2:
        raise ConfigError("dataset must have at least 2 rolls to split")
    train_size = math.floor(spec.train_fraction * n)
    if train_size < 1 or n - train_size < 1:
        raise ConfigError("degenerate split")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    train_idx = np.sort(perm[:train_size])
    test_idx = np.sort(perm[train_size:])

    def take(indices: np.ndarray) -> Dataset:
        return Dataset(
            dataset.shape,
            [dataset.rolls[i] for i in indices],
            [dataset.ids[i] for i in indices],
        )

    return take(train_idx), take(test_idx)


def flatten(roll: Pianoroll) -> np.ndarray:
    """Row-major (track, bar, step, pitch) vectorization as float64 of 0.0/1.0."""
    return roll.cells.astype(np.float64).ravel()


def unflatten(values: np.ndarray, shape: PianorollShape) -> Pianoroll:
    """Inverse of :func:`flatten` for binary vectors of the right length."""
    values = np.asarray(values)
    if values.size != shape.cells:
        raise ConfigError(f"expected {shape.cells} values, got {values.size}")
    return Pianoroll(shape, values.reshape(shape.dims()).astype(np.uint8))


def pitch_class_profile(roll: Pianoroll, track: int, bar: int, step: int) -> np.ndarray:
    """Count active cells at (track, bar, step) per pitch class (12-vector).

    Class of pitch index p is (base_midi_pitch + p) mod 12.
    """
    tracks, bars, steps, _ = roll.shape.dims()
    if not (0 <= track < tracks and 0 <= bar < bars and 0 <= step < steps):
        raise IndexError(f"index ({track}, {bar}, {step}) out of range")
    column = roll.cells[track, bar, step]
    profile = np.zeros(12, dtype=np.float64)
    active = np.nonzero(column)[0]
    for p in active:
        profile[(roll.shape.base_midi_pitch + int(p)) % 12] += 1.0
    return profile


# ---------------------------------------------------------------------------
# File format: magic "PRD1", u32 version, u32 count, u32 tracks, u32 bars,
# u32 steps_per_bar, u32 pitches, i32 base_midi_pitch (all little-endian),
# then per roll ceil(cells/8) bytes, bit-packed MSB-first in row-major
# (track, bar, step, pitch) order.  Sidecar <file>.meta.json holds ids/style.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIIIIIIi")


def _sidecar_path(path: Path) -> Path:
    return path.parent / (path.name + ".meta.json")


def write_dataset(dataset: Dataset, path: str | Path, style: StyleParams | None = None) -> None:
    """Write the bit-packed dataset file plus its ids sidecar."""
    path = Path(path)
    shape = dataset.shape
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                DATASET_MAGIC,
                DATASET_VERSION,
                len(dataset),
                shape.tracks,
                shape.bars,
                shape.steps_per_bar,
                shape.pitches,
                shape.base_midi_pitch,
            )
        )
        for roll in dataset.rolls:
            fh.write(np.packbits(roll.cells.ravel(), bitorder="big").tobytes())
    meta: dict = {"ids": list(dataset.ids)}
    if style is not None:
        meta["style"] = style.to_dict()
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def read_dataset(path: str | Path) -> Dataset:
    """Read a dataset file written by :func:`write_dataset`.

    Raises :class:`FormatError` with a distinct message for bad magic,
    unsupported version, empty datasets, truncation, and trailing bytes.
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"truncated dataset header in {path}")
    magic, version, count, tracks, bars, steps, pitches, base = _HEADER.unpack_from(blob)
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad magic {magic!r} in {path}")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version} in {path}")
    if count == 0:
        raise FormatError(f"empty dataset in {path}")
    try:
        shape = PianorollShape(tracks, bars, steps, pitches, base)
    except ConfigError as exc:
        raise FormatError(f"bad dataset header in {path}: {exc}") from exc
    roll_bytes = (shape.cells + 7) // 8
    expected = _HEADER.size + count * roll_bytes
    if len(blob) < expected:
        raise FormatError(f"truncated dataset in {path}")
    if len(blob) > expected:
        raise FormatError(f"trailing data in {path}")
    rolls = []
    offset = _HEADER.size
    for _ in range(count):
        packed = np.frombuffer(blob, dtype=np.uint8, count=roll_bytes, offset=offset)
        bits = np.unpackbits(packed, count=shape.cells, bitorder="big")
        rolls.append(Pianoroll(shape, bits.reshape(shape.dims())))
        offset += roll_bytes

    ids = list(range(count))
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        try:
            meta = json.loads(sidecar.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad sidecar json for {path}: {exc}") from exc
        raw_ids = meta.get("ids")
        if raw_ids is not None:
            if len(raw_ids) != count:
                raise FormatError(f"sidecar ids count mismatch for {path}")
            ids = [int(i) for i in raw_ids]
    return Dataset(shape, rolls, ids)
