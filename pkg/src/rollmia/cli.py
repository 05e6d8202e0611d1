"""Command-line interface.

Exit codes: 0 success, 2 configuration/validation error, 3 data/format error,
4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, DivergenceError, FormatError
from .gan import (
    Checkpoint,
    OracleDiscriminator,
    OracleGenerator,
    TrainConfig,
    d_score,
    load_checkpoint,
    oracle_d_score,
    oracle_generate,
    save_checkpoint,
    train,
)
from .harness import (
    MC_HEADER,
    WB_HEADER,
    mc_csv_line,
    wb_csv_line,
    McRow,
    checkpoint_sampler,
    load_experiment_config,
    report_from_dir,
    run_experiment,
)
from .metrics import compute_metrics
from .montecarlo import (
    EpsilonHeuristic,
    McConfig,
    METRIC_FROM_LABEL,
    METRIC_LABELS,
    build_stash,
    run_mc_trials,
)
from .pianoroll import (
    PianorollShape,
    SplitSpec,
    StyleParams,
    read_dataset,
    split,
    synth_generate,
    synth_sampler,
    write_dataset,
)
from .whitebox import run_whitebox


def _parse_oracle(text: str, expected: tuple[str, ...]) -> dict[str, float]:
    """Parse "k=v,k=v" oracle descriptors, e.g. "p=1,sigma=0" or
    "margin=1,tau=0.1"."""
    values: dict[str, float] = {}
    for part in text.split(","):
        if "=" not in part:
            raise ConfigError(f"bad oracle spec {text!r}")
        key, _, raw = part.partition("=")
        key = key.strip()
        if key not in expected:
            raise ConfigError(f"oracle spec {text!r}: unknown key {key!r}")
        try:
            values[key] = float(raw)
        except ValueError as exc:
            raise ConfigError(f"oracle spec {text!r}: bad value for {key!r}") from exc
    missing = set(expected) - set(values)
    if missing:
        raise ConfigError(f"oracle spec {text!r}: missing {sorted(missing)}")
    return values


def cmd_dataset_gen(args) -> int:
    shape = PianorollShape(
        tracks=args.tracks,
        bars=args.bars,
        steps_per_bar=args.steps,
        pitches=args.pitches,
        base_midi_pitch=args.base_pitch,
    )
    dataset = synth_generate(args.seed, args.count, shape)
    write_dataset(dataset, args.out, style=StyleParams())
    print(f"wrote {len(dataset)} rolls to {args.out}")
    return 0


def cmd_split(args) -> int:
    dataset = read_dataset(args.input)
    train_set, test_set = split(dataset, SplitSpec(args.fraction, args.seed))
    write_dataset(train_set, args.train)
    write_dataset(test_set, args.test)
    print(f"split {len(dataset)} -> train {len(train_set)} / test {len(test_set)}")
    return 0


def cmd_train(args) -> int:
    try:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
    if data.get("schema_version") != 1:
        raise ConfigError("train config needs schema_version 1")
    try:
        dataset = read_dataset(data["dataset"]["path"])
        t = data["train"]
        config = TrainConfig(
            iterations=int(t["iterations"]),
            batch_size=int(t["batch_size"]),
            latent_dim=int(t["latent_dim"]),
            lr=float(t["lr"]),
            seed=int(t["seed"]),
            checkpoint_every=int(t["checkpoint_every"]),
            d_steps_per_g_step=int(t.get("d_steps_per_g_step", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def sink(ckpt: Checkpoint) -> None:
        path = out_dir / f"checkpoint_{ckpt.iteration:06d}.ganc"
        save_checkpoint(ckpt, path)
        print(f"checkpoint {ckpt.iteration} -> {path}")

    checkpoints = train(dataset, config, checkpoint_sink=sink)
    print(f"trained {config.iterations} iterations, {len(checkpoints)} checkpoints")
    return 0


def _load_attack_inputs(args):
    train_set = read_dataset(args.train)
    test_set = read_dataset(args.test)
    if args.oracle is None and args.checkpoint is None:
        raise ConfigError("need --checkpoint or --oracle")
    return train_set, test_set


def cmd_attack_wb(args) -> int:
    train_set, test_set = _load_attack_inputs(args)
    if args.oracle is not None:
        spec = _parse_oracle(args.oracle, ("margin", "tau"))
        oracle = OracleDiscriminator(
            margin=spec["margin"],
            score_noise=spec["tau"],
            member_ids=frozenset(train_set.ids),
        )
        scorer = lambda rid, _roll: oracle_d_score(oracle, rid, (args.seed, rid))
        iteration = 0
    else:
        ckpt = load_checkpoint(args.checkpoint)
        if ckpt.gan.shape != train_set.shape:
            raise FormatError("architecture mismatch: checkpoint shape differs from dataset")
        scorer = lambda _rid, roll: d_score(ckpt.gan, roll)
        iteration = ckpt.iteration
    result = run_whitebox(scorer, train_set, test_set)
    row = compute_metrics(result.confusion, iteration)
    Path(args.out).write_text(WB_HEADER + "\n" + wb_csv_line(row) + "\n", encoding="utf-8")
    print(f"white-box success rate {row.success_rate:.3f} -> {args.out}")
    return 0


def cmd_attack_mc(args) -> int:
    train_set, test_set = _load_attack_inputs(args)
    config = McConfig(
        stash_size=args.stash,
        n_per_query=args.n,
        heuristic=EpsilonHeuristic.parse(args.heuristic),
        metric=METRIC_FROM_LABEL[args.metric],
        subset_size=args.subset,
        trials=args.trials,
        seed=args.seed,
    )
    if args.oracle is not None:
        spec = _parse_oracle(args.oracle, ("p", "sigma"))
        oracle = OracleGenerator(
            memorization_rate=spec["p"],
            flip_noise=spec["sigma"],
            training_rolls=train_set,
            population_sampler=synth_sampler(train_set.shape),
        )
        sample_fn = lambda seed: oracle_generate(oracle, seed)
        provenance = f"oracle:p={spec['p']:g},sigma={spec['sigma']:g}"
        iteration = 0
    else:
        ckpt = load_checkpoint(args.checkpoint)
        if ckpt.gan.shape != train_set.shape:
            raise FormatError("architecture mismatch: checkpoint shape differs from dataset")
        sample_fn = checkpoint_sampler(ckpt.gan)
        provenance = f"checkpoint:{ckpt.iteration}"
        iteration = ckpt.iteration
    stash = build_stash(sample_fn, config.stash_size, seed=config.seed)
    stash.provenance = provenance
    result = run_mc_trials(train_set, test_set, stash, config)
    row = McRow(
        iteration=iteration,
        single_mi_accuracy=result.single_mi_accuracy,
        set_mi_accuracy=result.set_mi_correct_fraction,
        heuristic=config.heuristic.label(),
        metric=METRIC_LABELS[config.metric],
        trials=config.trials,
    )
    Path(args.out).write_text(MC_HEADER + "\n" + mc_csv_line(row) + "\n", encoding="utf-8")
    print(
        f"mc single {row.single_mi_accuracy:.3f} / set {row.set_mi_accuracy:.3f} -> {args.out}"
    )
    return 0


def cmd_experiment_run(args) -> int:
    config = load_experiment_config(args.config)
    manifest = run_experiment(config, force=args.force)
    print(f"experiment '{config.label}' complete -> {config.output_dir}")
    print(f"config hash {manifest['config_hash']}")
    return 0


def cmd_report(args) -> int:
    sys.stdout.write(report_from_dir(args.in_dir, args.format))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rollmia",
        description="Membership-inference audit toolkit for pianoroll GANs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_dataset = sub.add_parser("dataset", help="dataset utilities")
    dataset_sub = p_dataset.add_subparsers(dest="dataset_command", required=True)
    p_gen = dataset_sub.add_parser("gen", help="generate a synthetic dataset")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--count", type=int, required=True)
    p_gen.add_argument("--tracks", type=int, default=2)
    p_gen.add_argument("--bars", type=int, default=1)
    p_gen.add_argument("--steps", type=int, default=16)
    p_gen.add_argument("--pitches", type=int, default=24)
    p_gen.add_argument("--base-pitch", type=int, default=24)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.set_defaults(func=cmd_dataset_gen)

    p_split = sub.add_parser("split", help="split a dataset into train/test")
    p_split.add_argument("--in", dest="input", required=True)
    p_split.add_argument("--fraction", type=float, required=True)
    p_split.add_argument("--seed", type=int, required=True)
    p_split.add_argument("--train", required=True)
    p_split.add_argument("--test", required=True)
    p_split.set_defaults(func=cmd_split)

    p_train = sub.add_parser("train", help="train a GAN on a dataset")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out-dir", required=True)
    p_train.set_defaults(func=cmd_train)

    p_attack = sub.add_parser("attack", help="run a membership-inference attack")
    attack_sub = p_attack.add_subparsers(dest="attack_command", required=True)

    p_wb = attack_sub.add_parser("wb", help="white-box discriminator attack")
    p_wb.add_argument("--checkpoint")
    p_wb.add_argument("--oracle", help='oracle discriminator, e.g. "margin=1,tau=0.1"')
    p_wb.add_argument("--train", required=True)
    p_wb.add_argument("--test", required=True)
    p_wb.add_argument("--seed", type=int, default=0, help="seed for oracle score noise")
    p_wb.add_argument("--out", required=True)
    p_wb.set_defaults(func=cmd_attack_wb)

    p_mc = attack_sub.add_parser("mc", help="Monte Carlo distance attack")
    p_mc.add_argument("--checkpoint")
    p_mc.add_argument("--oracle", help='oracle generator, e.g. "p=1,sigma=0"')
    p_mc.add_argument("--train", required=True)
    p_mc.add_argument("--test", required=True)
    p_mc.add_argument("--heuristic", default="median", help="median or p:Q")
    p_mc.add_argument("--metric", choices=sorted(METRIC_FROM_LABEL), default="euclidean")
    p_mc.add_argument("--stash", type=int, required=True)
    p_mc.add_argument("--n", type=int, required=True)
    p_mc.add_argument("--subset", type=int, required=True)
    p_mc.add_argument("--trials", type=int, required=True)
    p_mc.add_argument("--seed", type=int, required=True)
    p_mc.add_argument("--out", required=True)
    p_mc.set_defaults(func=cmd_attack_mc)

    p_exp = sub.add_parser("experiment", help="full experiment pipeline")
    exp_sub = p_exp.add_subparsers(dest="experiment_command", required=True)
    p_run = exp_sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--force", action="store_true", help="overwrite a non-empty output dir")
    p_run.set_defaults(func=cmd_experiment_run)

    p_report = sub.add_parser("report", help="re-render report tables from a run dir")
    p_report.add_argument("--in-dir", required=True)
    p_report.add_argument("--format", choices=("csv", "md"), default="md")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
