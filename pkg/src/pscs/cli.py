"""Command-line entry points: preprocess, train, index, search, eval."""

import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import engine as eng
from . import evaluate as ev
from .model import AblationConfig, HyperParams


@click.group()
def main():
    """Path-based semantic code search over annotated functions."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="training pairs, JSON lines of {id, code, docstring}")
@click.option("--test", "test_path", type=click.Path(exists=True), default=None,
              help="held-out pairs preprocessed with the training vocabularies")
@click.option("--asts", "asts_path", type=click.Path(exists=True), default=None,
              help="serialized ASTs (JSON lines) overriding the built-in parser")
@click.option("--test-asts", "test_asts_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--min-count", default=2, show_default=True,
              help="minimum token frequency kept in the word vocabulary")
@click.option("--word-vocab-size", default=30000, show_default=True)
@click.option("--node-vocab-size", default=500, show_default=True)
@click.option("--max-height", default=8, show_default=True, help="path height limit")
@click.option("--max-width", default=3, show_default=True, help="path width limit")
@click.option("--cap", default=500, show_default=True, help="stored paths per snippet")
@click.option("--seed", default=0, show_default=True)
def preprocess(input_path, test_path, asts_path, test_asts_path, out_dir,
               min_count, word_vocab_size, node_vocab_size, max_height,
               max_width, cap, seed):
    """Parse functions, extract paths, build vocabularies, write path files."""
    eng.preprocess_dataset(
        input_path, out_dir, test_path=test_path, asts_path=asts_path,
        test_asts_path=test_asts_path, min_count=min_count,
        word_max_size=word_vocab_size, node_max_size=node_vocab_size,
        max_height=max_height, max_width=max_width, cap=cap, seed=seed,
        log=click.echo)


def _hp_overrides(lr, batch, paths_per_snippet, dropout):
    hp = HyperParams()
    overrides = {}
    if lr is not None:
        overrides["lr"] = lr
    if batch is not None:
        overrides["batch"] = batch
    if paths_per_snippet is not None:
        overrides["paths_per_snippet"] = paths_per_snippet
    if dropout is not None:
        overrides["dropout"] = dropout
    return hp.replace(**overrides) if overrides else hp


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--epochs", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--ablation", default="", help="comma-separated ablation flags")
@click.option("--lr", type=float, default=None, help="learning rate [default: 1e-4]")
@click.option("--batch", type=int, default=None, help="batch size [default: 64]")
@click.option("--paths-per-snippet", type=int, default=None,
              help="paths sampled per snippet per epoch [default: 100]")
@click.option("--dropout", type=float, default=None, help="[default: 0.25]")
@click.option("--patience", default=5, show_default=True,
              help="early-stop patience on validation MRR")
@click.option("--valid-fraction", default=0.05, show_default=True)
@click.option("--checkpoint-every", default=0, show_default=True)
def train(data_dir, out_dir, epochs, seed, ablation, lr, batch,
          paths_per_snippet, dropout, patience, valid_fraction, checkpoint_every):
    """Train the dual encoder; writes model.pscs and metrics.jsonl."""
    hp = _hp_overrides(lr, batch, paths_per_snippet, dropout)
    config = eng.TrainConfig(epochs=epochs, seed=seed, patience=patience,
                             valid_fraction=valid_fraction,
                             checkpoint_every=checkpoint_every, hp=hp,
                             ablation=AblationConfig.from_flags(ablation))
    dataset = eng.load_dataset(data_dir, hp)
    click.echo(f"loaded {len(dataset.train)} training snippets "
               f"({len(dataset.test)} test)")
    eng.train(config, dataset, out_dir=out_dir, log=click.echo)


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--split", type=click.Choice(["auto", "train", "test"]),
              default="auto", show_default=True,
              help="which path file to index; auto prefers test")
def index(data_dir, ckpt_path, out_path, split):
    """Offline-encode a corpus into a search index file."""
    params, hp, ablation = eng.checkpoint_load(ckpt_path)
    dataset = eng.load_dataset(data_dir, hp)
    if split == "train":
        snippets = dataset.train
    elif split == "test":
        snippets = dataset.test
    else:
        snippets = dataset.test or dataset.train
    if not snippets:
        raise click.ClickException(f"no snippets for split {split!r} in {data_dir}")
    idx = eng.build_index(snippets, params, hp, ablation,
                          word_vocab=dataset.word_vocab, log=click.echo)
    eng.index_save(out_path, idx)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--k", default=10, show_default=True)
@click.option("--query", default=None, help="one-shot query; omit for a prompt loop")
def search(index_path, ckpt_path, k, query):
    """Retrieve the top-k snippets for a natural-language query."""
    params, hp, ablation = eng.checkpoint_load(ckpt_path)
    idx = eng.index_load(index_path)

    def run_one(text):
        try:
            result = eng.search(text, idx, params, hp, ablation, k=k)
        except ValueError as exc:
            click.echo(f"error: {exc}", err=True)
            return
        for rank, (sid, score) in enumerate(result.hits, 1):
            preview = idx.meta.get(sid, "")
            click.echo(f"{rank:>3d}  {score:+.4f}  {sid}  {preview}")

    if query is not None:
        run_one(query)
        return
    click.echo("enter one query per line (ctrl-d to quit)")
    for line in sys.stdin:
        line = line.strip()
        if line:
            run_one(line)


@main.command(name="eval")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--k", "ks", default="1,10", show_default=True,
              help="comma-separated SuccessRate cutoffs")
@click.option("--ablation", default=None,
              help="expected ablation flags; must match the checkpoint")
@click.option("--by-length", is_flag=True, help="add the query-length breakdown")
@click.option("--out", "report_path", type=click.Path(), default=None,
              help="also write the JSON report here")
def evaluate(data_dir, ckpt_path, ks, ablation, by_length, report_path):
    """Evaluate a checkpoint over the held-out pool; prints the metric table."""
    params, hp, ckpt_ablation = eng.checkpoint_load(ckpt_path)
    if ablation is not None:
        wanted = AblationConfig.from_flags(ablation)
        if wanted != ckpt_ablation:
            raise click.ClickException(
                f"checkpoint was trained with ablation {ckpt_ablation}, not {wanted}")
    dataset = eng.load_dataset(data_dir, hp)
    pool = dataset.test or dataset.train
    if not pool:
        raise click.ClickException("no snippets to evaluate")
    k_values = tuple(int(x) for x in ks.split(","))
    report = ev.evaluate_checkpoint(
        pool, params, hp, ks=k_values, ablation=ckpt_ablation,
        length_buckets=ev.DEFAULT_LENGTH_BUCKETS if by_length else None)
    click.echo(report.table())
    if report_path:
        Path(report_path).write_text(report.to_json(), encoding="utf-8")
        click.echo(f"report written to {report_path}")
    problem = report.check_invariants()
    if problem is not None:
        click.echo(f"report invariant violated: {problem}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
