"""Command-line entry points: dataset generation, relevancy extraction,
training, evaluation, and PLY export.

Every command writes a run manifest into its output directory, so any
artifact tree can be regenerated from the manifest alone.  Exit codes:
0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import functools
import json
import os
import sys
import tempfile
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import click
import numpy as np
import torch

from . import data as data_mod
from .errors import ConfigError, FormatError
from .eval import eval_ovssc, eval_vool, make_splits, write_report
from .network import model_from_checkpoint, load_checkpoint
from .relevancy import NoiseConfig, OracleRelevancyProvider, RmapFileProvider, write_rmap
from .scene import Description, SceneConfig, SpatialRelation
from .tasks import (
    DEFAULT_EMPTY_THRESHOLD,
    ovssc_infer,
    prob_volume_to_ply,
    relevancy_volume,
    semantic_grid_to_ply,
    vool_infer,
    write_ply,
)
from .train import TrainConfig, train as run_train
from .voxel import GridSpec


def _version() -> str:
    try:
        return metadata.version("semscene")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _apply_thread_cap() -> None:
    cap = os.environ.get("SEMABS_THREADS")
    if cap:
        try:
            n = int(cap)
        except ValueError:
            raise ConfigError(f"SEMABS_THREADS must be an integer, got {cap!r}")
        if n < 1:
            raise ConfigError("SEMABS_THREADS must be >= 1")
        torch.set_num_threads(n)


def _write_manifest(out_dir: Path, command: str, config_path, seed, extra=None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": str(config_path) if config_path else None,
        "seed": seed,
        "version": _version(),
        "output": str(out_dir),
    }
    if extra:
        manifest.update(extra)
    _atomic_write_text(
        out_dir / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n"
    )


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_json_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")


def command_errors(fn):
    """Map exceptions to the exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            _apply_thread_cap()
            return fn(*args, **kwargs)
        except (ConfigError, FormatError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except click.ClickException:
            raise
        except Exception as exc:  # runtime failure
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _provider(kind: str, rmap_dir, seed: int, noise_max: float | None = None):
    if kind == "oracle":
        noise = NoiseConfig() if noise_max is None else replace(NoiseConfig(), noise_max=noise_max)
        return OracleRelevancyProvider(noise=noise, seed=seed)
    if rmap_dir is None:
        raise ConfigError("--rmap-dir is required with --provider rmap")
    return RmapFileProvider(rmap_dir)


@click.group()
@click.version_option(_version(), prog_name="semscene")
def main() -> None:
    """Relevancy-driven scene completion and hidden-object localization."""


# ---------------------------------------------------------------------------
# gen


@main.command("gen")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--count", type=int, required=True, help="Number of scene views.")
@command_errors
def cmd_gen(config_path, seed, out, count):
    """Generate scenes, rendered views and ground-truth label grids."""
    if count < 1:
        raise ConfigError("--count must be >= 1")
    cfg = _load_json_config(config_path)
    scene_cfg = SceneConfig(**cfg.get("scene", {})) if "scene" in cfg else None
    spec = GridSpec.default(int(cfg.get("grid_resolution", 32)))
    descs = int(cfg.get("descriptions_per_view", 6))
    records = data_mod.make_dataset(seed, count, scene_cfg, spec, descs)
    out_dir = Path(out)
    views_dir = out_dir / "views"
    views_dir.mkdir(parents=True, exist_ok=True)
    for record in records:
        # build in a temp dir, then rename: a crashed run never leaves a
        # half-written view behind
        tmp = Path(tempfile.mkdtemp(dir=views_dir, prefix=".tmp_"))
        try:
            data_mod.save_view_record(tmp, record, spec)
            os.replace(tmp, views_dir / record.view.view_id)
        except BaseException:
            import shutil

            shutil.rmtree(tmp, ignore_errors=True)
            raise
    _write_manifest(out_dir, "gen", config_path, seed, {"count": count})
    click.echo(f"wrote {count} views to {out_dir}")


# ---------------------------------------------------------------------------
# relevancy


@main.command("relevancy")
@click.option("--dataset", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--provider", type=click.Choice(["oracle", "rmap"]), default="oracle", show_default=True)
@click.option("--rmap-dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--noise", type=float, default=None, help="Oracle noise-floor ceiling.")
@command_errors
def cmd_relevancy(dataset, out, provider, rmap_dir, seed, noise):
    """Write one RMAP file per view, covering every label the tasks need."""
    records = data_mod.load_dataset(dataset)
    prov = _provider(provider, rmap_dir, seed, noise)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for record in records:
        view = record.view
        labels = set(view.class_labels())
        for d in record.descriptions:
            labels.add(d.description.target_label)
            labels.add(d.description.ref_label)
        ordered = sorted(view.task_label(label) for label in labels)
        maps = prov.relevancy(view, ordered)
        tmp = out_dir / f".{view.view_id}.rmap.tmp"
        write_rmap(tmp, maps)
        os.replace(tmp, out_dir / f"{view.view_id}.rmap")
    _write_manifest(out_dir, "relevancy", None, seed, {"provider": provider})
    click.echo(f"wrote {len(records)} RMAP files to {out_dir}")


# ---------------------------------------------------------------------------
# train


@main.command("train")
@click.option("--task", type=click.Choice(["ovssc", "vool"]), required=True)
@click.option("--dataset", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@click.option("--epochs", type=int, default=None, help="Overrides the config epochs.")
@click.option("--provider", type=click.Choice(["oracle", "rmap"]), default="oracle", show_default=True)
@click.option("--rmap-dir", type=click.Path(exists=True, file_okay=False), default=None)
@command_errors
def cmd_train(task, dataset, out, config_path, resume, seed, epochs, provider, rmap_dir):
    """Train one task; writes checkpoints and an ndjson metrics log."""
    raw = _load_json_config(config_path)
    raw["task"] = task
    if seed is not None:
        raw["seed"] = seed
    if epochs is not None:
        raw["epochs"] = epochs
    try:
        cfg = TrainConfig.from_json({**TrainConfig(task=task).to_json(), **raw})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad training config: {exc}")
    records = data_mod.load_dataset(dataset, cfg.grid())
    prov = _provider(provider, rmap_dir, cfg.seed)
    out_dir = Path(out)
    _write_manifest(out_dir, "train", config_path, cfg.seed, {"task": task, "dataset": str(dataset)})
    result = run_train(records, cfg, prov, out_dir=out_dir, resume=resume)
    click.echo(
        f"trained {result.step} steps; final loss "
        f"{result.metrics[-1]['loss']:.4f}" if result.metrics else "no steps run"
    )


# ---------------------------------------------------------------------------
# eval


@main.command("eval")
@click.option("--task", type=click.Choice(["ovssc", "vool"]), required=True)
@click.option(
    "--split",
    type=click.Choice(["train", "novel_room", "novel_synonym", "novel_class"]),
    default="novel_room",
    show_default=True,
)
@click.option("--checkpoint", type=click.Path(dir_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--threshold", type=float, default=DEFAULT_EMPTY_THRESHOLD, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Split-generation seed.")
@click.option("--train-count", type=int, default=12, show_default=True)
@click.option("--eval-count", type=int, default=8, show_default=True)
@click.option("--provider", type=click.Choice(["oracle", "rmap"]), default="oracle", show_default=True)
@click.option("--rmap-dir", type=click.Path(exists=True, file_okay=False), default=None)
@command_errors
def cmd_eval(task, split, checkpoint, out, threshold, seed, train_count, eval_count, provider, rmap_dir):
    """Evaluate a checkpoint on a deterministically generated split."""
    if not Path(checkpoint).is_file():
        raise ConfigError(f"checkpoint {checkpoint} does not exist")
    ckpt = load_checkpoint(checkpoint)
    model = model_from_checkpoint(ckpt).eval_mode()
    spec = GridSpec.default()
    splits = make_splits(seed, train_count, eval_count, spec)
    records = splits.named()[split]
    prov = _provider(provider, rmap_dir, seed)
    if task == "ovssc":
        report = eval_ovssc(records, model, prov, spec, empty_threshold=threshold, split=split)
        mean = report.mean_iou
    else:
        report = eval_vool(records, model, prov, spec, empty_threshold=threshold, split=split)
        mean = report.mean_iou
    out_dir = Path(out)
    write_report(out_dir, report)
    _write_manifest(out_dir, "eval", None, seed, {"task": task, "split": split, "checkpoint": str(checkpoint)})
    click.echo(f"{task} {split} mean IoU {mean:.4f}")


# ---------------------------------------------------------------------------
# export


@main.command("export")
@click.option("--what", type=click.Choice(["semantic", "vool", "relevancy-cloud"]), required=True)
@click.option("--format", "fmt", type=click.Choice(["ply"]), default="ply", show_default=True)
@click.option("--dataset", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--view", "view_id", default=None, help="View id (default: first view).")
@click.option("--checkpoint", type=click.Path(dir_okay=False), default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--threshold", type=float, default=DEFAULT_EMPTY_THRESHOLD, show_default=True)
@click.option("--label", default=None, help="Class label for relevancy-cloud export.")
@click.option("--target", default=None, help="Target label for vool export.")
@click.option("--relation", type=click.Choice([r.value for r in SpatialRelation]), default=None)
@click.option("--ref", default=None, help="Reference label for vool export.")
@click.option("--provider", type=click.Choice(["oracle", "rmap"]), default="oracle", show_default=True)
@click.option("--rmap-dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@command_errors
def cmd_export(what, fmt, dataset, view_id, checkpoint, out, threshold, label, target, relation, ref, provider, rmap_dir, seed):
    """Export inference results or relevancy clouds as ASCII PLY."""
    records = data_mod.load_dataset(dataset)
    by_id = {r.view.view_id: r for r in records}
    if view_id is None:
        view_id = records[0].view.view_id
    if view_id not in by_id:
        raise ConfigError(f"view {view_id!r} not in dataset")
    view = by_id[view_id].view
    prov = _provider(provider, rmap_dir, seed)
    spec = GridSpec.default()
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    if what == "relevancy-cloud":
        if label is None:
            raise ConfigError("--label is required for relevancy-cloud export")
        from .geometry import filter_bounds
        from .relevancy import project_relevancy

        (rmap,) = prov.relevancy(view, [view.task_label(label)])
        cloud = filter_bounds(
            project_relevancy(rmap, view.depth, view.intrinsics, view.pose), spec
        )
        write_ply(out_path, cloud.positions, cloud.features[:, 0])
        count = len(cloud)
    else:
        if checkpoint is None or not Path(checkpoint).is_file():
            raise ConfigError("--checkpoint is required and must exist")
        model = model_from_checkpoint(load_checkpoint(checkpoint)).eval_mode()
        if what == "semantic":
            labels = [view.task_label(c) for c in view.class_labels()]
            result = ovssc_infer(view, labels, prov, model, spec, empty_threshold=threshold)
            count = semantic_grid_to_ply(out_path, result.semantic)
        else:
            if not (target and relation and ref):
                raise ConfigError("--target, --relation and --ref are required for vool export")
            desc = Description(
                view.task_label(target), SpatialRelation(relation), view.task_label(ref)
            )
            result = vool_infer(view, desc, prov, model, spec, empty_threshold=threshold)
            count = prob_volume_to_ply(out_path, result.prob, threshold)
    click.echo(f"wrote {count} vertices to {out_path}")


if __name__ == "__main__":
    main()
