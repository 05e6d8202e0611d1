"""Black-box Monte Carlo membership inference.

A candidate's score is the fraction of generated samples (drawn from a fixed
stash) lying within distance epsilon of it.  Per trial, M train and M test
records compete for the top-M set; single-record accuracy is the train
fraction of that set, and the set-level decision labels whichever side
contributed more records.  Both are averaged over repeated trials so the
set-level answer is a frequency rather than a one-shot 0/1 outcome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError
from .pianoroll import Dataset, Pianoroll, PianorollShape, flatten, pitch_class_profile

EUCLIDEAN = "euclidean_raw"
TONAL = "tonal_centroid"
METRICS = (EUCLIDEAN, TONAL)

# CSV/CLI short names for the distance metrics
METRIC_LABELS = {EUCLIDEAN: "euclidean", TONAL: "tonal"}
METRIC_FROM_LABEL = {v: k for k, v in METRIC_LABELS.items()}


@dataclass(frozen=True)
class EpsilonHeuristic:
    """Threshold rule: lower median, or the value at ascending rank
    ceil(q * K) for percentile(q)."""

    kind: str
    q: float | None = None

    def __post_init__(self):
        if self.kind not in ("median", "percentile"):
            raise ConfigError(f"unknown heuristic kind {self.kind!r}")
        if self.kind == "percentile":
            if self.q is None or not 0.0 < self.q < 1.0:
                raise ConfigError("percentile heuristic needs q in (0, 1)")
        elif self.q is not None:
            raise ConfigError("median heuristic takes no q")

    @classmethod
    def median(cls) -> "EpsilonHeuristic":
        return cls("median")

    @classmethod
    def percentile(cls, q: float) -> "EpsilonHeuristic":
        return cls("percentile", q)

    @classmethod
    def parse(cls, text: str) -> "EpsilonHeuristic":
        """Parse "median" or "p:Q" (e.g. "p:0.001")."""
        if text == "median":
            return cls.median()
        if text.startswith("p:"):
            try:
                return cls.percentile(float(text[2:]))
            except ValueError as exc:
                raise ConfigError(f"bad percentile in {text!r}") from exc
        raise ConfigError(f"unknown heuristic {text!r}")

    def label(self) -> str:
        if self.kind == "median":
            return "median"
        return f"p:{self.q:g}"


# the named presets: 1%, 0.1%, 0.01% of observed distances
PERCENT_1 = EpsilonHeuristic.percentile(0.01)
PERCENT_01 = EpsilonHeuristic.percentile(0.001)
PERCENT_001 = EpsilonHeuristic.percentile(0.0001)


@dataclass
class Stash:
    """Fixed pool of pre-generated rolls reused across candidates."""

    rolls: list[Pianoroll]
    provenance: str
    seed: int

    def __post_init__(self):
        if not self.rolls:
            raise ConfigError("stash must be non-empty")
        shape = self.rolls[0].shape
        for roll in self.rolls:
            if roll.shape != shape:
                raise ConfigError("all stash rolls must share a shape")

    @property
    def shape(self) -> PianorollShape:
        return self.rolls[0].shape

    def __len__(self) -> int:
        return len(self.rolls)


@dataclass(frozen=True)
class McConfig:
    stash_size: int
    n_per_query: int
    heuristic: EpsilonHeuristic
    metric: str
    subset_size: int
    trials: int
    seed: int

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.stash_size < 1 or self.n_per_query < 1:
            raise ConfigError("stash_size and n_per_query must be >= 1")
        if self.n_per_query > self.stash_size:
            raise ConfigError("n_per_query cannot exceed stash_size")
        if self.subset_size < 1:
            raise ConfigError("subset_size must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")


@dataclass
class McTrial:
    epsilon: float
    train_selected: int
    test_selected: int
    single_accuracy: float
    set_correct: bool


@dataclass
class McResult:
    single_mi_accuracy: float
    set_mi_correct_fraction: float
    trials: list[McTrial] = field(default_factory=list)


def build_stash(sample_fn: Callable[[int], Pianoroll], size: int, seed: int) -> Stash:
    """Draw ``size`` samples from a seeded generator function.

    Per-sample seeds are derived from ``seed`` so the stash is reproducible
    regardless of how sample_fn consumes its own randomness.
    """
    if size < 1:
        raise ConfigError("stash size must be >= 1")
    child_seeds = np.random.SeedSequence(seed).generate_state(size, np.uint64)
    rolls = [sample_fn(int(s)) for s in child_seeds]
    return Stash(rolls, provenance="sample_fn", seed=seed)


# ---------------------------------------------------------------------------
# Distance metrics
# ---------------------------------------------------------------------------


def _tonal_basis() -> np.ndarray:
    """6x12 transform from a normalized pitch-class profile to the tonal
    centroid: three circles (fifths, minor thirds, major thirds) with radii
    1, 1, 0.5 at angular steps 7pi/6, 3pi/2, 2pi/3 per semitone."""
    j = np.arange(12)
    basis = np.empty((6, 12))
    for row, (radius, angle) in enumerate(
        [(1.0, 7.0 * math.pi / 6.0), (1.0, 3.0 * math.pi / 2.0), (0.5, 2.0 * math.pi / 3.0)]
    ):
        basis[2 * row] = radius * np.sin(j * angle)
        basis[2 * row + 1] = radius * np.cos(j * angle)
    return basis


_TONAL_BASIS = _tonal_basis()


def step_centroid(profile: np.ndarray) -> np.ndarray:
    """6-D tonal centroid of one pitch-class profile; empty profiles map to
    the zero centroid."""
    total = profile.sum()
    if total == 0.0:
        return np.zeros(6)
    return _TONAL_BASIS @ (profile / total)


def _tonal_features(roll: Pianoroll) -> np.ndarray:
    """Per-step centroids, shape (tracks*bars*steps, 6)."""
    tracks, bars, steps, _ = roll.shape.dims()
    base = roll.shape.base_midi_pitch
    # counts per pitch class for every (track, bar, step) at once
    classes = (base + np.arange(roll.shape.pitches)) % 12
    counts = np.zeros((tracks * bars * steps, 12))
    cells = roll.cells.reshape(tracks * bars * steps, roll.shape.pitches)
    for cls in range(12):
        counts[:, cls] = cells[:, classes == cls].sum(axis=1)
    totals = counts.sum(axis=1, keepdims=True)
    safe = np.where(totals > 0.0, totals, 1.0)
    normalized = np.where(totals > 0.0, counts / safe, 0.0)
    return normalized @ _TONAL_BASIS.T


def roll_features(metric: str, roll: Pianoroll) -> np.ndarray:
    if metric == EUCLIDEAN:
        return flatten(roll)
    if metric == TONAL:
        return _tonal_features(roll)
    raise ConfigError(f"unknown metric {metric!r}")


def features_distance(metric: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance between one candidate feature and a stack of features.

    ``b`` may be a single feature or a leading-axis stack; returns a scalar
    array or a vector accordingly.
    """
    if metric == EUCLIDEAN:
        return np.linalg.norm(b - a, axis=-1)
    # tonal: mean over steps of per-step centroid distances
    return np.linalg.norm(b - a, axis=-1).mean(axis=-1)


def distance(metric: str, a: Pianoroll, b: Pianoroll) -> float:
    """Distance between two rolls under the chosen metric."""
    if a.shape != b.shape:
        raise ConfigError("rolls must share a shape")
    return float(features_distance(metric, roll_features(metric, a), roll_features(metric, b)))


def epsilon_from_heuristic(distances: Sequence[float], heuristic: EpsilonHeuristic) -> float:
    """Select the threshold from observed distances.

    median: lower median (rank (K+1)//2).  percentile(q): ascending rank
    max(1, ceil(q*K)).  The result is always a member of the input multiset.
    """
    values = np.sort(np.asarray(distances, dtype=np.float64))
    k = values.size
    if k == 0:
        raise ConfigError("cannot pick epsilon from an empty distance set")
    if heuristic.kind == "median":
        rank = (k + 1) // 2
    else:
        rank = max(1, math.ceil(heuristic.q * k))
    return float(values[rank - 1])


def _drawn_indices(seed, stash_size: int, n: int) -> np.ndarray:
    return np.random.default_rng(seed).choice(stash_size, size=n, replace=False)


def mc_score(
    candidate: Pianoroll, stash: Stash, config: McConfig, epsilon: float, seed
) -> float:
    """Fraction of n seeded stash draws within ``epsilon`` of the candidate."""
    if epsilon < 0.0:
        raise ConfigError("epsilon must be >= 0")
    if config.n_per_query > len(stash):
        raise ConfigError("n_per_query exceeds stash size")
    idx = _drawn_indices(seed, len(stash), config.n_per_query)
    cand = roll_features(config.metric, candidate)
    feats = np.stack([roll_features(config.metric, stash.rolls[i]) for i in idx])
    dists = features_distance(config.metric, cand, feats)
    return float(np.mean(dists <= epsilon))


@dataclass
class _Candidate:
    record_id: int
    origin: int  # 0 = train, 1 = test
    mean_distance: float
    distances: np.ndarray
    seed: object


def run_mc_trials(
    train_rolls: Dataset, test_rolls: Dataset, stash: Stash, config: McConfig
) -> McResult:
    """Run R trials of the distance-threshold attack and aggregate.

    Per trial: draw M records from each side, pool every candidate-to-
    drawn-stash distance, pick epsilon by the configured heuristic, score all
    2M candidates, and select the top M by (score desc, mean distance asc,
    id asc).  Deterministic in (stash seed, config seed).
    """
    m = config.subset_size
    if len(train_rolls) < m or len(test_rolls) < m:
        raise ConfigError("need at least subset_size records on each side")
    if config.n_per_query > len(stash):
        raise ConfigError("n_per_query exceeds stash size")
    if train_rolls.shape != test_rolls.shape or train_rolls.shape != stash.shape:
        raise ConfigError("train, test, and stash must share a shape")

    stash_feats = np.stack([roll_features(config.metric, r) for r in stash.rolls])
    train_feats = [roll_features(config.metric, r) for r in train_rolls.rolls]
    test_feats = [roll_features(config.metric, r) for r in test_rolls.rolls]

    trials: list[McTrial] = []
    trial_seeds = np.random.SeedSequence(config.seed).spawn(config.trials)
    for trial_ss in trial_seeds:
        record_ss, candidate_root = trial_ss.spawn(2)
        rng = np.random.default_rng(record_ss)
        train_idx = rng.choice(len(train_rolls), size=m, replace=False)
        test_idx = rng.choice(len(test_rolls), size=m, replace=False)
        cand_seeds = candidate_root.spawn(2 * m)

        candidates: list[_Candidate] = []
        pool: list[np.ndarray] = []
        for pos, (origin, ds_idx, feats, dataset) in enumerate(
            [(0, train_idx, train_feats, train_rolls), (1, test_idx, test_feats, test_rolls)]
        ):
            for j, i in enumerate(ds_idx):
                seed = cand_seeds[pos * m + j]
                drawn = _drawn_indices(seed, len(stash), config.n_per_query)
                dists = features_distance(
                    config.metric, feats[i], stash_feats[drawn]
                )
                pool.append(dists)
                candidates.append(
                    _Candidate(dataset.ids[i], origin, float(dists.mean()), dists, seed)
                )

        epsilon = epsilon_from_heuristic(np.concatenate(pool), config.heuristic)
        scored = [
            (float(np.mean(c.distances <= epsilon)), c) for c in candidates
        ]
        order = sorted(
            scored,
            key=lambda sc: (-sc[0], sc[1].mean_distance, sc[1].record_id, sc[1].origin),
        )
        selected = [c for _, c in order[:m]]
        train_sel = sum(1 for c in selected if c.origin == 0)
        test_sel = m - train_sel
        trials.append(
            McTrial(
                epsilon=epsilon,
                train_selected=train_sel,
                test_selected=test_sel,
                single_accuracy=train_sel / m,
                set_correct=train_sel > test_sel,
            )
        )

    single = float(np.mean([t.single_accuracy for t in trials]))
    set_fraction = float(np.mean([1.0 if t.set_correct else 0.0 for t in trials]))
    return McResult(single, set_fraction, trials)


def single_mi(
    train_rolls: Dataset, test_rolls: Dataset, stash: Stash, config: McConfig
) -> float:
    """Mean over trials of the train fraction in the selected top-M set."""
    return run_mc_trials(train_rolls, test_rolls, stash, config).single_mi_accuracy


def set_mi(
    train_rolls: Dataset, test_rolls: Dataset, stash: Stash, config: McConfig
) -> float:
    """Fraction of trials whose majority-vote set label is correct; ties count
    as incorrect."""
    return run_mc_trials(train_rolls, test_rolls, stash, config).set_mi_correct_fraction
