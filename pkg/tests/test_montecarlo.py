import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rollmia import (
    ConfigError,
    Dataset,
    EpsilonHeuristic,
    McConfig,
    OracleGenerator,
    PianorollShape,
    Pianoroll,
    Stash,
    build_stash,
    distance,
    epsilon_from_heuristic,
    mc_score,
    oracle_generate,
    run_mc_trials,
    set_mi,
    single_mi,
    synth_generate,
    synth_sampler,
)
from rollmia.montecarlo import EUCLIDEAN, TONAL, step_centroid

from conftest import make_roll

SHAPE = PianorollShape(2, 1, 8, 12)


# --- epsilon heuristics ------------------------------------------------------


def test_median_odd():
    assert epsilon_from_heuristic([1, 2, 3, 4, 5], EpsilonHeuristic.median()) == 3.0


def test_median_even_is_lower():
    assert epsilon_from_heuristic([1, 2, 3, 4], EpsilonHeuristic.median()) == 2.0


def test_percentile_rank():
    values = list(range(1, 1001))
    assert epsilon_from_heuristic(values, EpsilonHeuristic.percentile(0.01)) == 10.0
    assert epsilon_from_heuristic(values, EpsilonHeuristic.percentile(0.001)) == 1.0
    assert epsilon_from_heuristic(values, EpsilonHeuristic.percentile(0.999)) == 999.0


def test_percentile_rank_at_least_one():
    assert epsilon_from_heuristic([5.0, 7.0], EpsilonHeuristic.percentile(0.0001)) == 5.0


def test_epsilon_empty_error():
    with pytest.raises(ConfigError):
        epsilon_from_heuristic([], EpsilonHeuristic.median())


def sort_oracle(values, heuristic):
    ordered = sorted(values)
    k = len(ordered)
    if heuristic.kind == "median":
        rank = (k + 1) // 2
    else:
        rank = max(1, math.ceil(heuristic.q * k))
    return ordered[rank - 1]


@settings(max_examples=150, deadline=None)
@given(
    values=st.lists(st.floats(min_value=0.0, max_value=1e6), min_size=1, max_size=300),
    q=st.one_of(st.none(), st.floats(min_value=1e-4, max_value=0.9999)),
)
def test_heuristics_match_sort_oracle(values, q):
    heuristic = EpsilonHeuristic.median() if q is None else EpsilonHeuristic.percentile(q)
    result = epsilon_from_heuristic(values, heuristic)
    assert result == sort_oracle(values, heuristic)
    assert result in values


def test_heuristic_parse_and_label():
    assert EpsilonHeuristic.parse("median") == EpsilonHeuristic.median()
    assert EpsilonHeuristic.parse("p:0.001") == EpsilonHeuristic.percentile(0.001)
    assert EpsilonHeuristic.percentile(0.01).label() == "p:0.01"
    assert EpsilonHeuristic.median().label() == "median"
    with pytest.raises(ConfigError):
        EpsilonHeuristic.parse("p:2.0")
    with pytest.raises(ConfigError):
        EpsilonHeuristic.parse("weird")


# --- distances ---------------------------------------------------------------


def test_distance_identity(small_population):
    roll = small_population.rolls[0]
    assert distance(EUCLIDEAN, roll, roll) == 0.0
    assert distance(TONAL, roll, roll) == 0.0


def test_distance_single_cell():
    a = make_roll(SHAPE)
    b = make_roll(SHAPE, [(0, 0, 0, 0)])
    assert distance(EUCLIDEAN, a, b) == 1.0


def test_distance_is_sqrt_hamming(small_population):
    a, b = small_population.rolls[0], small_population.rolls[1]
    hamming = int(np.sum(a.cells != b.cells))
    assert math.isclose(distance(EUCLIDEAN, a, b), math.sqrt(hamming))


def test_distance_symmetry_and_nonnegativity(small_population):
    rolls = small_population.rolls[:6]
    for metric in (EUCLIDEAN, TONAL):
        for a in rolls:
            for b in rolls:
                d_ab = distance(metric, a, b)
                assert d_ab >= 0.0
                assert d_ab == distance(metric, b, a)


def test_distance_triangle_inequality_euclidean(small_population):
    rolls = small_population.rolls[:6]
    for a in rolls:
        for b in rolls:
            for c in rolls:
                assert distance(EUCLIDEAN, a, c) <= distance(EUCLIDEAN, a, b) + distance(
                    EUCLIDEAN, b, c
                ) + 1e-12


def test_distance_shape_mismatch():
    a = make_roll(SHAPE)
    b = make_roll(PianorollShape(1, 1, 8, 12))
    with pytest.raises(ConfigError):
        distance(EUCLIDEAN, a, b)


def triad_roll(classes):
    # base_midi_pitch 24 is a multiple of 12, so pitch index == pitch class
    return make_roll(PianorollShape(1, 1, 1, 12), [(0, 0, 0, c) for c in classes])


def test_tonal_triads_circle_of_fifths():
    c_major = triad_roll([0, 4, 7])
    a_minor = triad_roll([9, 0, 4])
    fs_major = triad_roll([6, 10, 1])
    assert distance(TONAL, c_major, a_minor) < distance(TONAL, c_major, fs_major)


def test_tonal_centroid_reference_values():
    # independently computed from the three-circle basis
    onehot = np.zeros(12)
    onehot[0] = 1.0
    expected = np.array([
        1.0 * math.sin(0.0), 1.0 * math.cos(0.0),
        1.0 * math.sin(0.0), 1.0 * math.cos(0.0),
        0.5 * math.sin(0.0), 0.5 * math.cos(0.0),
    ])
    assert np.allclose(step_centroid(onehot), expected)
    onehot7 = np.zeros(12)
    onehot7[7] = 1.0  # a fifth up: 7 * 7pi/6 on the fifths circle
    got = step_centroid(onehot7)
    assert np.allclose(
        got[:2], [math.sin(7 * 7 * math.pi / 6), math.cos(7 * 7 * math.pi / 6)]
    )


def test_tonal_empty_step_is_zero_centroid():
    assert not step_centroid(np.zeros(12)).any()
    a = make_roll(SHAPE)
    b = make_roll(SHAPE)
    assert distance(TONAL, a, b) == 0.0


# --- stash and scores --------------------------------------------------------


def test_build_stash_size_and_determinism(desk_shape):
    sampler = synth_sampler(desk_shape)
    a = build_stash(sampler, 100, seed=5)
    b = build_stash(sampler, 100, seed=5)
    assert len(a) == 100
    assert all(x == y for x, y in zip(a.rolls, b.rolls))
    c = build_stash(sampler, 100, seed=6)
    assert any(x != y for x, y in zip(a.rolls, c.rolls))


def test_build_stash_from_memorizing_oracle():
    train = synth_generate(3, 20, SHAPE)
    oracle = OracleGenerator(1.0, 0.0, train, synth_sampler(SHAPE))
    stash = build_stash(lambda s: oracle_generate(oracle, s), 50, seed=1)
    for roll in stash.rolls:
        assert any(roll == r for r in train.rolls)


def hamming_stash(candidate, hammings):
    """Stash whose rolls sit at the given hamming distances from candidate."""
    rolls = []
    flat_len = candidate.shape.cells
    for h, start in zip(hammings, range(0, 10_000, max(hammings) + 1)):
        cells = candidate.cells.copy().ravel()
        for k in range(h):
            idx = (start + k) % flat_len
            cells[idx] ^= 1
        rolls.append(Pianoroll(candidate.shape, cells.reshape(candidate.shape.dims())))
    return Stash(rolls, provenance="test", seed=0)


def mc_config(**kw):
    defaults = dict(
        stash_size=4,
        n_per_query=4,
        heuristic=EpsilonHeuristic.median(),
        metric=EUCLIDEAN,
        subset_size=1,
        trials=1,
        seed=0,
    )
    defaults.update(kw)
    return McConfig(**defaults)


def test_mc_score_counts_within_epsilon():
    candidate = make_roll(SHAPE, [(0, 0, 0, 0)])
    stash = hamming_stash(candidate, [1, 4, 9, 16])  # dists 1, 2, 3, 4
    config = mc_config()
    assert mc_score(candidate, stash, config, epsilon=2.5, seed=0) == 0.5
    assert mc_score(candidate, stash, config, epsilon=0.0, seed=0) == 0.0
    assert mc_score(candidate, stash, config, epsilon=4.0, seed=0) == 1.0


def test_mc_score_epsilon_zero_self_in_stash():
    candidate = make_roll(SHAPE, [(0, 0, 0, 0)])
    stash = hamming_stash(candidate, [0, 3, 5])
    config = mc_config(stash_size=3, n_per_query=3)
    assert mc_score(candidate, stash, config, epsilon=0.0, seed=1) == pytest.approx(1 / 3)


def test_mc_score_draw_semantics():
    # drawn indices are default_rng(seed).choice(len(stash), n, replace=False)
    candidate = make_roll(SHAPE)
    stash = hamming_stash(make_roll(SHAPE, [(0, 0, 0, 0)]), [1, 2, 3, 4, 5, 6])
    config = mc_config(stash_size=6, n_per_query=3)
    seed = 99
    idx = np.random.default_rng(seed).choice(6, size=3, replace=False)
    dists = [distance(EUCLIDEAN, candidate, stash.rolls[i]) for i in idx]
    eps = sorted(dists)[1]
    expected = np.mean([d <= eps for d in dists])
    assert mc_score(candidate, stash, config, eps, seed) == expected


def test_mc_score_rejects_overlong_draw():
    candidate = make_roll(SHAPE)
    stash = hamming_stash(candidate, [1, 2])
    with pytest.raises(ConfigError):
        mc_score(candidate, stash, mc_config(stash_size=2, n_per_query=3), 1.0, 0)
    with pytest.raises(ConfigError):
        mc_score(candidate, stash, mc_config(stash_size=2, n_per_query=2), -1.0, 0)


def test_mc_score_monotone_in_epsilon():
    rng = np.random.default_rng(0)
    sampler = synth_sampler(SHAPE)
    stash = build_stash(sampler, 30, seed=2)
    config = mc_config(stash_size=30, n_per_query=10)
    for case in range(50):
        candidate = sampler(1000 + case)
        eps_grid = np.sort(rng.uniform(0.0, 12.0, size=6))
        scores = [mc_score(candidate, stash, config, e, seed=case) for e in eps_grid]
        assert all(a <= b for a, b in zip(scores, scores[1:]))
        n = config.n_per_query
        for s in scores:
            assert math.isclose(round(s * n), s * n, abs_tol=1e-12)


# --- single / set MI ---------------------------------------------------------


def id_blocks(population, train_count, test_count):
    train = Dataset(
        population.shape, population.rolls[:train_count], list(range(train_count))
    )
    test = Dataset(
        population.shape,
        population.rolls[train_count : train_count + test_count],
        list(range(1000, 1000 + test_count)),
    )
    return train, test


def test_single_mi_m1_perfect_separation():
    base = make_roll(SHAPE, [(0, 0, 0, 0)])
    far = hamming_stash(base, [100]).rolls[0]
    train = Dataset(SHAPE, [base], [0])
    test = Dataset(SHAPE, [far], [1])
    stash = Stash([base] * 4, provenance="test", seed=0)
    config = mc_config(stash_size=4, n_per_query=4, subset_size=1, trials=3)
    assert single_mi(train, test, stash, config) == 1.0


def test_set_mi_majority_rule_three_train_one_test():
    population = synth_generate(17, 40, SHAPE)
    rolls = population.rolls
    train_rolls, test_rolls = rolls[:4], rolls[4:8]
    # memorize 3 train rolls and 1 test roll; everything else stays far
    memorized = train_rolls[:3] + [test_rolls[0]]
    assert all(a != b for i, a in enumerate(memorized) for b in memorized[i + 1:])
    train = Dataset(SHAPE, train_rolls, [0, 1, 2, 3])
    test = Dataset(SHAPE, test_rolls, [10, 11, 12, 13])
    stash = Stash(memorized * 50, provenance="test", seed=0)
    config = mc_config(
        stash_size=200,
        n_per_query=200,
        heuristic=EpsilonHeuristic.percentile(0.0001),
        subset_size=4,
        trials=2,
    )
    result = run_mc_trials(train, test, stash, config)
    for trial in result.trials:
        assert trial.epsilon == 0.0
        assert (trial.train_selected, trial.test_selected) == (3, 1)
        assert trial.set_correct
        assert trial.single_accuracy == 0.75
    assert result.set_mi_correct_fraction == 1.0


def test_set_mi_tie_counts_incorrect():
    population = synth_generate(23, 8, SHAPE)
    rolls = population.rolls
    train = Dataset(SHAPE, rolls[:4], [0, 1, 2, 3])
    test = Dataset(SHAPE, rolls[4:8], [10, 11, 12, 13])
    # memorize 2 from each side -> selected set always ties 2:2
    memorized = rolls[:2] + rolls[4:6]
    stash = Stash(memorized * 50, provenance="test", seed=0)
    config = mc_config(
        stash_size=200,
        n_per_query=200,
        heuristic=EpsilonHeuristic.percentile(0.0001),
        subset_size=4,
        trials=2,
    )
    result = run_mc_trials(train, test, stash, config)
    for trial in result.trials:
        assert (trial.train_selected, trial.test_selected) == (2, 2)
        assert not trial.set_correct
    assert result.set_mi_correct_fraction == 0.0


def test_equal_scores_fall_back_to_mean_distance(small_population):
    # a threshold above every distance makes all scores 1.0, so selection
    # reduces to the mean-distance tiebreak
    train, test = id_blocks(small_population, 30, 30)
    stash = build_stash(synth_sampler(small_population.shape), 40, seed=6)
    config = mc_config(
        stash_size=40,
        n_per_query=40,
        heuristic=EpsilonHeuristic.percentile(0.99999),
        subset_size=30,
        trials=1,
        seed=13,
    )
    result = run_mc_trials(train, test, stash, config)
    trial = result.trials[0]
    assert trial.train_selected + trial.test_selected == 30
    # reproduce the expected selection: every candidate drew the whole stash
    from rollmia.montecarlo import EUCLIDEAN as METRIC, roll_features, features_distance

    stash_feats = np.stack([roll_features(METRIC, r) for r in stash.rolls])
    mean_dists = []
    for origin, ds in ((0, train), (1, test)):
        for rid, roll in zip(ds.ids, ds.rolls):
            d = features_distance(METRIC, roll_features(METRIC, roll), stash_feats)
            mean_dists.append((float(np.mean(d)), rid, origin))
    expected_train = sum(1 for _, _, origin in sorted(mean_dists)[:30] if origin == 0)
    assert trial.train_selected == expected_train


def test_run_mc_trials_deterministic(small_population):
    train, test = id_blocks(small_population, 60, 60)
    sampler = synth_sampler(small_population.shape)
    stash = build_stash(sampler, 80, seed=3)
    config = mc_config(
        stash_size=80, n_per_query=30, subset_size=20, trials=4, seed=11
    )
    a = run_mc_trials(train, test, stash, config)
    b = run_mc_trials(train, test, stash, config)
    assert a.single_mi_accuracy == b.single_mi_accuracy
    assert a.set_mi_correct_fraction == b.set_mi_correct_fraction
    assert [t.epsilon for t in a.trials] == [t.epsilon for t in b.trials]
    assert single_mi(train, test, stash, config) == a.single_mi_accuracy
    assert set_mi(train, test, stash, config) == a.set_mi_correct_fraction


def test_run_mc_trials_preconditions(small_population):
    train, test = id_blocks(small_population, 10, 10)
    stash = build_stash(synth_sampler(small_population.shape), 20, seed=0)
    with pytest.raises(ConfigError, match="subset_size"):
        run_mc_trials(train, test, stash, mc_config(stash_size=20, n_per_query=5, subset_size=11, trials=1))
    other = synth_generate(0, 12, SHAPE)
    with pytest.raises(ConfigError, match="shape"):
        run_mc_trials(other, other, stash, mc_config(stash_size=20, n_per_query=5, subset_size=2, trials=1))


def test_mc_config_validation():
    with pytest.raises(ConfigError):
        mc_config(stash_size=4, n_per_query=5)
    with pytest.raises(ConfigError):
        mc_config(subset_size=0)
    with pytest.raises(ConfigError):
        mc_config(trials=0)
    with pytest.raises(ConfigError):
        McConfig(4, 4, EpsilonHeuristic.median(), "cosine", 1, 1, 0)


def test_memorizing_oracle_controls(small_population):
    shape = small_population.shape
    train, test = id_blocks(small_population, 60, 120)
    oracle = OracleGenerator(1.0, 0.0, train, synth_sampler(shape))
    stash = build_stash(lambda s: oracle_generate(oracle, s), 600, seed=21)
    config = McConfig(
        stash_size=600,
        n_per_query=300,
        heuristic=EpsilonHeuristic.percentile(0.0001),
        metric=EUCLIDEAN,
        subset_size=40,
        trials=10,
        seed=5,
    )
    result = run_mc_trials(train, test, stash, config)
    assert result.single_mi_accuracy >= 0.9
    assert result.set_mi_correct_fraction == 1.0


def null_setup(small_population):
    shape = small_population.shape
    first = Dataset(shape, small_population.rolls[:150], list(range(150)))
    last = Dataset(shape, small_population.rolls[150:300], list(range(1000, 1150)))
    oracle = OracleGenerator(0.0, 0.0, first, synth_sampler(shape))
    stash = build_stash(lambda s: oracle_generate(oracle, s), 400, seed=22)
    return first, last, stash


def null_config(seed, trials):
    # odd subset size: majority votes cannot tie
    return McConfig(
        stash_size=400,
        n_per_query=200,
        heuristic=EpsilonHeuristic.median(),
        metric=EUCLIDEAN,
        subset_size=51,
        trials=trials,
        seed=seed,
    )


def test_population_stash_single_mi_is_null(small_population):
    # a population-only stash carries no membership signal; averaging both
    # role assignments cancels the finite-dataset artifact
    first, last, stash = null_setup(small_population)
    accs = []
    for seed in (0, 1):
        accs.append(run_mc_trials(first, last, stash, null_config(seed, 10)).single_mi_accuracy)
        accs.append(run_mc_trials(last, first, stash, null_config(seed, 10)).single_mi_accuracy)
    assert abs(np.mean(accs) - 0.5) < 0.04


def test_population_stash_set_mi_envelope(small_population):
    # 20 coin-flip trials stay inside the binomial 95 percent envelope
    first, last, stash = null_setup(small_population)
    result = run_mc_trials(first, last, stash, null_config(4, 20))
    assert 0.25 <= result.set_mi_correct_fraction <= 0.75
