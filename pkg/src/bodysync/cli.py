"""Command-line entry points: dataset generation, training, sync
evaluation, speaker identification, and plotting.

Exit codes: 0 success, 1 runtime error, 2 usage/config error.  Config files
are flat ``key = value`` text mirroring SyncConfig field names; command-line
flags override file values.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, SyncConfig, validate_config
from .checkpoint import load_checkpoint, load_model_from_checkpoint, save_checkpoint
from .manifest import load_manifest
from . import evaluation, synthetic, training


def read_config_file(path) -> dict:
    """Parse a flat key = value config file into a dict of typed values."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError([f"{path}:{lineno}: expected 'key = value'"])
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(value)
    return out


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def build_config(config_path, overrides: dict) -> SyncConfig:
    fields = read_config_file(config_path) if config_path else {}
    fields.update({k: v for k, v in overrides.items() if v is not None})
    return validate_config(SyncConfig.from_dict(fields))


@click.group()
def main():
    """Gesture-speech synchronisation toolkit."""


def _fail(msg: str, code: int = 1):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


@main.command()
@click.option("--out", type=click.Path(), required=True)
@click.option("--clips", type=int, default=10, show_default=True)
@click.option("--duration", type=float, default=10.0, show_default=True)
@click.option("--mode", type=click.Choice(["correlated", "uncorrelated"]), default="correlated")
@click.option("--offset", type=int, default=0, show_default=True,
              help="injected audio-video offset in frames, |offset| <= 50")
@click.option("--sparsity", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default=None,
              help="pin every clip to one split instead of the 80/10/10 assignment")
def gen(out, clips, duration, mode, offset, sparsity, seed, split):
    """Generate a synthetic dataset and its manifest."""
    if abs(offset) > synthetic.MAX_OFFSET:
        raise click.UsageError(f"|offset| must be <= {synthetic.MAX_OFFSET}")
    try:
        manifest = synthetic.generate_dataset(
            out, clips, duration_s=duration, mode=mode, injected_offset_frames=offset,
            gesture_sparsity=sparsity, seed=seed, split=split)
    except synthetic.SyntheticError as e:
        raise click.UsageError(str(e))
    click.echo(f"wrote {clips} clips, manifest: {manifest}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--train-manifest", type=click.Path(), required=True)
@click.option("--val-manifest", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), required=True, help="checkpoint output path")
@click.option("--log", "log_path", type=click.Path(), default=None,
              help="training log (JSON lines); defaults to <out>.log.jsonl")
@click.option("--epochs", type=int, default=None, help="override max_epochs")
@click.option("--lr", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--augment/--no-augment", default=False)
def train(config_path, train_manifest, val_manifest, out, log_path, epochs, lr, seed, augment):
    """Train a sync model from manifests."""
    for p in (train_manifest, val_manifest):
        if not Path(p).exists():
            _fail(f"manifest not found: {p}", code=2)
    try:
        cfg = build_config(config_path, {"max_epochs": epochs, "lr": lr, "seed": seed})
    except ConfigError as e:
        _fail(str(e), code=2)
    log_path = log_path or f"{out}.log.jsonl"
    try:
        train_recs = load_manifest(train_manifest, min_frames=cfg.window_T)
        val_recs = load_manifest(val_manifest, min_frames=cfg.window_T)
        train_recs = [r for r in train_recs if r.split == "train"] or train_recs
        val_recs = [r for r in val_recs if r.split == "val"] or val_recs
        ckpt = training.train(cfg, train_recs, val_recs, log_path=log_path,
                              augment=augment, quiet=False)
        save_checkpoint(out, ckpt)
    except Exception as e:
        _fail(str(e))
    click.echo(f"checkpoint: {out} (best val loss {ckpt.best_val_loss:.4f} "
               f"at epoch {ckpt.epoch}); log: {log_path}")


def _load_eval_clips(checkpoint, manifest, split="test"):
    ckpt = load_checkpoint(checkpoint)
    model = load_model_from_checkpoint(ckpt)
    records = load_manifest(manifest, min_frames=ckpt.config.window_T)
    records = [r for r in records if r.split == split] or records
    clips = [training.load_clip(r, ckpt.config) for r in records]
    return ckpt, model, clips


@main.command("eval-sync")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--protocol", type=click.Choice(["lip", "gesture"]), required=True)
@click.option("--frames", "-F", "f_list", type=int, multiple=True,
              help="averaging windows; defaults to the protocol's standard list")
@click.option("--out", type=click.Path(), default=None, help="per-clip results (JSON lines)")
def eval_sync(checkpoint, manifest, protocol, f_list, out):
    """Offset-prediction accuracy under the lip or gesture protocol."""
    proto = evaluation.get_protocol(protocol)
    f_list = tuple(f_list) or proto.averaging_windows
    try:
        ckpt, model, clips = _load_eval_clips(checkpoint, manifest)
        rows = []
        summary = {}
        for F in f_list:
            acc, results = evaluation.sync_accuracy(clips, model, ckpt.config, proto, F)
            summary[F] = acc
            rows.extend(results)
    except Exception as e:
        _fail(str(e))
    if out:
        with open(out, "w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row, sort_keys=True) + "\n")
    click.echo(f"protocol={protocol}  chance={proto.chance_accuracy:.1f}%")
    click.echo("F:        " + "  ".join(f"{F:>6d}" for F in f_list))
    click.echo("accuracy: " + "  ".join(f"{summary[F]:5.1f}%" for F in f_list))


@main.command("who-speaks")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--negatives", type=int, default=1, show_default=True)
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
def who_speaks(checkpoint, manifest, negatives, trials, seed):
    """Identify the speaker among distractor speech streams."""
    if negatives not in (1, 3, 5):
        click.echo(f"warning: {negatives} negatives is outside the standard "
                   "settings (1, 3, 5)", err=True)
    try:
        ckpt, model, clips = _load_eval_clips(checkpoint, manifest)
        acc = evaluation.who_is_speaking_accuracy(
            clips, model, ckpt.config, negatives,
            np.random.default_rng(seed), n_trials=trials)
    except Exception as e:
        _fail(str(e))
    chance = 100.0 / (negatives + 1)
    click.echo(f"{negatives}-negative accuracy: {acc:.1f}%  (chance {chance:.1f}%)")


@main.command()
@click.option("--log", "log_path", type=click.Path(exists=True), default=None,
              help="training log to plot as loss vs step")
@click.option("--attention", "attention_path", type=click.Path(exists=True), default=None,
              help="exported attention tensor to plot as per-keypoint mean attention")
@click.option("--out", type=click.Path(), required=True, help="output image path")
def plot(log_path, attention_path, out):
    """Plot a training log or an attention export."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if log_path is None and attention_path is None:
        raise click.UsageError("provide --log or --attention")
    fig, ax = plt.subplots(figsize=(7, 4))
    if log_path:
        steps, losses = [], []
        with open(log_path, "r", encoding="utf-8") as f:
            for line in f:
                rec = json.loads(line)
                if "loss" in rec and "step" in rec:
                    steps.append(rec["step"])
                    losses.append(rec["loss"])
        if not steps:
            _fail(f"{log_path}: no loss records to plot")
        ax.plot(steps, losses, lw=0.8)
        ax.set_xlabel("step")
        ax.set_ylabel("training loss")
    else:
        attn = np.load(attention_path)
        if attn.size == 0:
            _fail(f"{attention_path}: empty attention tensor")
        # mean received attention per keypoint over layers, heads, time, queries
        ax.bar(np.arange(attn.shape[-1]), attn.mean(axis=(0, 1, 2, 3)))
        ax.set_xlabel("keypoint")
        ax.set_ylabel("mean attention")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
