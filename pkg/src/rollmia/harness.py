"""Experiment orchestration: dataset -> split -> train -> attacks -> reports.

A run is driven by one JSON config and leaves behind CSV tables, a Markdown
report, and a manifest recording every seed and format version, so identical
configs reproduce identical bytes on the same platform.
"""

from __future__ import annotations

import hashlib
import json
import platform
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError
from .gan import (
    CHECKPOINT_VERSION,
    Checkpoint,
    ComposerGan,
    TrainConfig,
    d_score,
    g_sample,
    save_checkpoint,
    train,
)
from .metrics import MetricsRow, compute_metrics
from .montecarlo import (
    EpsilonHeuristic,
    McConfig,
    METRIC_FROM_LABEL,
    METRIC_LABELS,
    build_stash,
    run_mc_trials,
)
from .pianoroll import (
    DATASET_VERSION,
    Dataset,
    PianorollShape,
    SplitSpec,
    StyleParams,
    read_dataset,
    split,
    synth_generate,
    write_dataset,
)
from .whitebox import run_whitebox

CONFIG_SCHEMA_VERSION = 1
LABELS = ("default", "overfitted", "custom")


@dataclass(frozen=True)
class SyntheticSpec:
    count: int
    shape: PianorollShape
    seed: int
    style: StyleParams = StyleParams()

    def __post_init__(self):
        if self.count < 2:
            raise ConfigError("synthetic count must be >= 2 to allow a split")


@dataclass
class ExperimentConfig:
    label: str
    split: SplitSpec
    train: TrainConfig
    output_dir: Path
    synthetic: SyntheticSpec | None = None
    dataset_path: Path | None = None
    whitebox: bool = True
    mc: list[McConfig] = field(default_factory=list)

    def __post_init__(self):
        if self.label not in LABELS:
            raise ConfigError(f"label must be one of {LABELS}")
        if (self.synthetic is None) == (self.dataset_path is None):
            raise ConfigError("config needs exactly one of synthetic params or a dataset path")
        if self.label == "default" and self.split.train_fraction != 0.5:
            raise ConfigError("label 'default' requires train_fraction 0.5")
        if self.label == "overfitted" and self.split.train_fraction != 0.1:
            raise ConfigError("label 'overfitted' requires train_fraction 0.1")
        if not self.whitebox and not self.mc:
            raise ConfigError("at least one attack must be enabled")


def _shape_from_dict(d: dict) -> PianorollShape:
    return PianorollShape(
        tracks=int(d["tracks"]),
        bars=int(d["bars"]),
        steps_per_bar=int(d["steps_per_bar"]),
        pitches=int(d["pitches"]),
        base_midi_pitch=int(d.get("base_midi_pitch", 24)),
    )


def _mc_from_dict(d: dict) -> McConfig:
    metric_label = d.get("metric", "euclidean")
    if metric_label not in METRIC_FROM_LABEL:
        raise ConfigError(f"unknown mc metric {metric_label!r}")
    return McConfig(
        stash_size=int(d["stash_size"]),
        n_per_query=int(d["n_per_query"]),
        heuristic=EpsilonHeuristic.parse(d.get("heuristic", "median")),
        metric=METRIC_FROM_LABEL[metric_label],
        subset_size=int(d["subset_size"]),
        trials=int(d["trials"]),
        seed=int(d["seed"]),
    )


def parse_experiment_config(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from decoded JSON, with schema checking."""
    try:
        version = data["schema_version"]
    except KeyError as exc:
        raise ConfigError("config missing schema_version") from exc
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version}")
    try:
        dataset = data["dataset"]
        synthetic = None
        dataset_path = None
        if "synthetic" in dataset:
            s = dataset["synthetic"]
            synthetic = SyntheticSpec(
                count=int(s["count"]),
                shape=_shape_from_dict(s),
                seed=int(s["seed"]),
                style=StyleParams.from_dict(s.get("style", {})),
            )
        elif "path" in dataset:
            dataset_path = Path(dataset["path"])
        else:
            raise ConfigError("dataset must give 'synthetic' params or a 'path'")
        split_spec = SplitSpec(
            train_fraction=float(data["split"]["train_fraction"]),
            seed=int(data["split"]["seed"]),
        )
        t = data["train"]
        train_config = TrainConfig(
            iterations=int(t["iterations"]),
            batch_size=int(t["batch_size"]),
            latent_dim=int(t["latent_dim"]),
            lr=float(t["lr"]),
            seed=int(t["seed"]),
            checkpoint_every=int(t["checkpoint_every"]),
            d_steps_per_g_step=int(t.get("d_steps_per_g_step", 1)),
        )
        attacks = data.get("attacks", {})
        mc_configs = [_mc_from_dict(m) for m in attacks.get("mc", [])]
        config = ExperimentConfig(
            label=data.get("label", "custom"),
            split=split_spec,
            train=train_config,
            output_dir=Path(data["output_dir"]),
            synthetic=synthetic,
            dataset_path=dataset_path,
            whitebox=bool(attacks.get("whitebox", True)),
            mc=mc_configs,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad experiment config: {exc}") from exc
    if base_dir is not None and config.dataset_path is not None and not config.dataset_path.is_absolute():
        config.dataset_path = base_dir / config.dataset_path
    return config


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_experiment_config(data)


def config_echo(config: ExperimentConfig) -> dict:
    """Normalized JSON form of a config; hashed into the manifest."""
    if config.synthetic is not None:
        shape = config.synthetic.shape
        dataset = {
            "synthetic": {
                "count": config.synthetic.count,
                "tracks": shape.tracks,
                "bars": shape.bars,
                "steps_per_bar": shape.steps_per_bar,
                "pitches": shape.pitches,
                "base_midi_pitch": shape.base_midi_pitch,
                "seed": config.synthetic.seed,
                "style": config.synthetic.style.to_dict(),
            }
        }
    else:
        dataset = {"path": str(config.dataset_path)}
    return {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "label": config.label,
        "dataset": dataset,
        "split": {"train_fraction": config.split.train_fraction, "seed": config.split.seed},
        "train": {
            "iterations": config.train.iterations,
            "batch_size": config.train.batch_size,
            "latent_dim": config.train.latent_dim,
            "lr": config.train.lr,
            "seed": config.train.seed,
            "checkpoint_every": config.train.checkpoint_every,
            "d_steps_per_g_step": config.train.d_steps_per_g_step,
        },
        "attacks": {
            "whitebox": config.whitebox,
            "mc": [
                {
                    "stash_size": m.stash_size,
                    "n_per_query": m.n_per_query,
                    "heuristic": m.heuristic.label(),
                    "metric": METRIC_LABELS[m.metric],
                    "subset_size": m.subset_size,
                    "trials": m.trials,
                    "seed": m.seed,
                }
                for m in config.mc
            ],
        },
        "output_dir": str(config.output_dir),
    }


def _canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(_canonical_json(config_echo(config)).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Report tables
# ---------------------------------------------------------------------------

WB_HEADER = "iterations,success_rate,accuracy,precision,recall,fpr,f1"
MC_HEADER = "epochs,single_mi_accuracy,set_mi_accuracy,heuristic,metric,trials"


@dataclass(frozen=True)
class McRow:
    iteration: int
    single_mi_accuracy: float
    set_mi_accuracy: float
    heuristic: str
    metric: str
    trials: int


@dataclass
class ReportTable:
    kind: str  # "whitebox" | "montecarlo"
    rows: list
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("whitebox", "montecarlo"):
            raise ConfigError(f"unknown table kind {self.kind!r}")


def wb_csv_line(row: MetricsRow) -> str:
    return (
        f"{row.iteration},{row.success_rate:.3f},{row.accuracy:.3f},"
        f"{row.precision:.3f},{row.recall:.3f},{row.fpr:.3f},{row.f1:.3f}"
    )


def mc_csv_line(row: McRow) -> str:
    return (
        f"{row.iteration},{row.single_mi_accuracy:.3f},{row.set_mi_accuracy:.3f},"
        f"{row.heuristic},{row.metric},{row.trials}"
    )


def _write_text(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _md_table(header: str, lines: list[str]) -> list[str]:
    cols = header.split(",")
    out = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for line in lines:
        out.append("| " + " | ".join(line.split(",")) + " |")
    return out


def emit_reports(tables: list[ReportTable], output_dir: str | Path) -> list[Path]:
    """Write wb_metrics.csv / mc_metrics.csv / success_vs_iteration.csv and
    report.md for the given tables; returns the written paths."""
    if not tables:
        raise ConfigError("no tables to report")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    wb_tables = [t for t in tables if t.kind == "whitebox"]
    mc_tables = [t for t in tables if t.kind == "montecarlo"]
    for table in tables:
        if not table.rows:
            raise ConfigError("no rows")

    md: list[str] = ["# Attack report", ""]
    provenance = tables[0].provenance
    for key in sorted(provenance):
        md.append(f"- {key}: {provenance[key]}")
    if provenance:
        md.append("")

    wb_lines: list[str] = []
    if wb_tables:
        for table in wb_tables:
            wb_lines.extend(wb_csv_line(r) for r in table.rows)
        path = output_dir / "wb_metrics.csv"
        _write_text(path, [WB_HEADER] + wb_lines)
        written.append(path)
        md += ["## White-box discriminator attack", ""]
        md += _md_table(WB_HEADER, wb_lines)
        degenerate = [r.iteration for t in wb_tables for r in t.rows if r.degenerate]
        if degenerate:
            md += ["", f"Degenerate (0/0) metrics reported as 0.0 at iterations: {degenerate}"]
        md.append("")

    mc_lines: list[str] = []
    if mc_tables:
        for table in mc_tables:
            mc_lines.extend(mc_csv_line(r) for r in table.rows)
        path = output_dir / "mc_metrics.csv"
        _write_text(path, [MC_HEADER] + mc_lines)
        written.append(path)
        md += ["## Monte Carlo attack", ""]
        md += _md_table(MC_HEADER, mc_lines)
        md.append("")

    # success-vs-iteration series (one row per checkpoint)
    series_header = ["iterations"]
    series: dict[int, list[str]] = {}
    if wb_tables:
        series_header.append("whitebox_success_rate")
        for row in wb_tables[0].rows:
            series.setdefault(row.iteration, []).append(f"{row.success_rate:.3f}")
    if mc_tables:
        series_header.append("single_mi_accuracy")
        first_mc = mc_tables[0].rows
        # keep only the first MC config's series when several are configured
        seen: set[int] = set()
        for row in first_mc:
            if row.iteration in seen:
                continue
            seen.add(row.iteration)
            series.setdefault(row.iteration, []).append(f"{row.single_mi_accuracy:.3f}")
    series_lines = [
        ",".join([str(it)] + vals) for it, vals in sorted(series.items())
    ]
    path = output_dir / "success_vs_iteration.csv"
    _write_text(path, [",".join(series_header)] + series_lines)
    written.append(path)

    report_path = output_dir / "report.md"
    _write_text(report_path, md)
    written.append(report_path)
    return written


def report_from_dir(in_dir: str | Path, fmt: str) -> str:
    """Re-render the tables found in a finished run directory."""
    in_dir = Path(in_dir)
    if fmt not in ("csv", "md"):
        raise ConfigError("format must be csv or md")
    sections = []
    for name, title in (("wb_metrics.csv", "White-box discriminator attack"),
                        ("mc_metrics.csv", "Monte Carlo attack")):
        path = in_dir / name
        if not path.exists():
            continue
        lines = path.read_text(encoding="utf-8").strip().splitlines()
        if fmt == "csv":
            sections.append("\n".join(lines))
        else:
            sections.append("\n".join([f"## {title}", ""] + _md_table(lines[0], lines[1:])))
    if not sections:
        raise ConfigError(f"no report tables found in {in_dir}")
    return "\n\n".join(sections) + "\n"


# ---------------------------------------------------------------------------
# Experiment pipeline
# ---------------------------------------------------------------------------


def _platform_info() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "system": platform.system(),
        "machine": platform.machine(),
    }


def whitebox_row(gan: ComposerGan, iteration: int, train_set: Dataset, test_set: Dataset) -> MetricsRow:
    result = run_whitebox(lambda _rid, roll: d_score(gan, roll), train_set, test_set)
    return compute_metrics(result.confusion, iteration)


def checkpoint_sampler(gan: ComposerGan):
    """Seeded latent draw -> binarized generator sample."""

    def sample(seed: int):
        z = np.random.default_rng(seed).standard_normal(gan.latent_dim)
        return g_sample(gan, z)

    return sample


def mc_row(
    gan: ComposerGan,
    iteration: int,
    train_set: Dataset,
    test_set: Dataset,
    mc_config: McConfig,
) -> McRow:
    stash = build_stash(
        checkpoint_sampler(gan), mc_config.stash_size, seed=(mc_config.seed, iteration)
    )
    stash.provenance = f"checkpoint:{iteration}"
    result = run_mc_trials(train_set, test_set, stash, mc_config)
    return McRow(
        iteration=iteration,
        single_mi_accuracy=result.single_mi_accuracy,
        set_mi_accuracy=result.set_mi_correct_fraction,
        heuristic=mc_config.heuristic.label(),
        metric=METRIC_LABELS[mc_config.metric],
        trials=mc_config.trials,
    )


def run_experiment(config: ExperimentConfig, force: bool = False) -> dict:
    """Run the full pipeline and return the manifest dict.

    Partial outputs plus a manifest naming the failed stage are left behind
    when a stage raises; the exception propagates to the caller.
    """
    out = config.output_dir
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ConfigError(
                f"output directory {out} is not empty (pass force to overwrite)"
            )
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)

    manifest: dict = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "label": config.label,
        "config": config_echo(config),
        "config_hash": config_hash(config),
        "format_versions": {
            "dataset": DATASET_VERSION,
            "checkpoint": CHECKPOINT_VERSION,
            "config_schema": CONFIG_SCHEMA_VERSION,
        },
        "platform": _platform_info(),
        "toolkit_version": __version__,
        "stages": {},
        "outputs": [],
    }

    def finish_stage(name: str) -> None:
        manifest["stages"][name] = "ok"

    def fail(name: str, exc: Exception) -> None:
        manifest["stages"][name] = "failed"
        manifest["failed_stage"] = name
        manifest["error"] = str(exc)
        _write_manifest(out, manifest)

    try:
        stage = "dataset"
        if config.synthetic is not None:
            dataset = synth_generate(
                config.synthetic.seed,
                config.synthetic.count,
                config.synthetic.shape,
                config.synthetic.style,
            )
            write_dataset(dataset, out / "dataset.prd", style=config.synthetic.style)
            manifest["outputs"].append("dataset.prd")
        else:
            dataset = read_dataset(config.dataset_path)
        finish_stage(stage)

        stage = "split"
        train_set, test_set = split(dataset, config.split)
        write_dataset(train_set, out / "train.prd")
        write_dataset(test_set, out / "test.prd")
        manifest["outputs"] += ["train.prd", "test.prd"]
        finish_stage(stage)

        stage = "train"
        ckpt_dir = out / "checkpoints"
        ckpt_dir.mkdir(exist_ok=True)

        def sink(ckpt: Checkpoint) -> None:
            save_checkpoint(ckpt, ckpt_dir / f"checkpoint_{ckpt.iteration:06d}.ganc")

        checkpoints = train(train_set, config.train, checkpoint_sink=sink)
        manifest["outputs"].append("checkpoints/")
        finish_stage(stage)

        stage = "attacks"
        wb_rows: list[MetricsRow] = []
        mc_rows: list[McRow] = []
        for ckpt in checkpoints:
            if config.whitebox:
                wb_rows.append(whitebox_row(ckpt.gan, ckpt.iteration, train_set, test_set))
            for mc_config in config.mc:
                mc_rows.append(mc_row(ckpt.gan, ckpt.iteration, train_set, test_set, mc_config))
        finish_stage(stage)

        stage = "reports"
        provenance = {
            "label": config.label,
            "config_hash": config_hash(config),
            "dataset_seed": (
                config.synthetic.seed if config.synthetic is not None else str(config.dataset_path)
            ),
            "split_seed": config.split.seed,
            "train_seed": config.train.seed,
        }
        tables = []
        if wb_rows:
            tables.append(ReportTable("whitebox", wb_rows, provenance))
        if mc_rows:
            tables.append(ReportTable("montecarlo", mc_rows, provenance))
        written = emit_reports(tables, out)
        manifest["outputs"] += [p.name for p in written]
        finish_stage(stage)
    except Exception as exc:
        fail(stage, exc)
        raise

    _write_manifest(out, manifest)
    return manifest


def _write_manifest(out: Path, manifest: dict) -> None:
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
