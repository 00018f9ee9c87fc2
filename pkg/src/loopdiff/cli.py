"""Command line entry points.

Exit codes: 0 success, 1 runtime failure (including "nothing
extracted"), 2 malformed inputs or configuration.
"""

import dataclasses
import json
import pathlib
import sys
import time

import click

from .checkpoint import load_params
from .codec import decode_loop_lenient
from .diffusion import DiffusionConfig, generate
from .errors import ConfigError, LoopdiffError, ParseError, VersionMismatch
from .extract import extract_corpus, hash_index_from_report
from .loopfiles import load_dataset, save_dataset
from .midi_io import render_midi
from .model import Denoiser, DenoiserConfig
from .priors import prior_from_doc
from .split import assign_splits, load_index, write_assignment
from .tasks import TaskSpec, preset_for, run_task
from .training import TrainConfig, train_loop
from .vocab import build_vocabulary

MIDI_SUFFIXES = {".mid", ".midi"}


@click.group()
def main():
    """Loop extraction, model training, and prior-driven generation."""


@main.command("extract")
@click.argument("input_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_file", required=True, type=click.Path(),
              help="Dataset file (.jsonl for text, anything else packed).")
@click.option("--analysis-dir", type=click.Path(file_okay=False), default=None,
              help="Directory of {stem}.analysis.json beat sidecars.")
@click.option("--n-slots", default=128, show_default=True)
@click.option("--tag", default="other", show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="Accepted for interface uniformity; extraction is "
                   "deterministic.")
def cmd_extract(input_dir, out_file, analysis_dir, n_slots, tag, seed):
    """Extract loops from every MIDI file under INPUT_DIR."""
    vocab = build_vocabulary()
    root = pathlib.Path(input_dir)
    paths = sorted(p for p in root.iterdir()
                   if p.suffix.lower() in MIDI_SUFFIXES)
    loops, report = extract_corpus(paths, vocab, n_slots,
                                   analysis_dir=analysis_dir, tag=tag)
    save_dataset(out_file, loops, vocab)
    with open(str(out_file) + ".report.json", "w", encoding="utf-8") as f:
        json.dump(report, f, indent=1, sort_keys=True)
        f.write("\n")
    index = hash_index_from_report(report)
    with open(str(out_file) + ".index.jsonl", "w", encoding="utf-8") as f:
        for h in sorted(index):
            f.write(json.dumps({"hash": h, "tracks": index[h]}) + "\n")
    click.echo(f"files={report['files']} accepted={report['accepted_files']} "
               f"loops={report['loops']}")
    if not loops:
        sys.exit(1)


@main.command("split")
@click.argument("index_file", type=click.Path())
@click.option("--out", "out_file", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
def cmd_split(index_file, out_file, seed):
    """Assign every hash in INDEX_FILE to train/eval/test."""
    try:
        index = load_index(index_file)
    except (OSError, ParseError) as e:
        click.echo(f"malformed index: {e}", err=True)
        sys.exit(2)
    assignment, report = assign_splits(index, seed=seed)
    write_assignment(out_file, assignment, report)
    click.echo(" ".join(f"{s}={report.counts[s]}" for s in report.counts))
    for w in report.warnings:
        click.echo(f"warning: {w}", err=True)


def _config_section(doc: dict, key: str, allowed) -> dict:
    section = doc.get(key, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config section {key!r} must be an object")
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown config key "
                          f"{key}.{sorted(unknown)[0]}")
    return section


def load_train_config(path, vocab):
    """Strict JSON config; unknown keys are errors, not warnings."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - {"schema", "model", "train", "diffusion"}
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]}")
    if doc.get("schema") != "loopdiff-train/1":
        raise ConfigError(f"unsupported config schema {doc.get('schema')!r}; "
                          "expected 'loopdiff-train/1'")

    model_keys = ("preset", "layers", "heads", "hidden", "ff", "n_slots",
                  "time_dim")
    model = dict(_config_section(doc, "model", model_keys))
    preset = model.pop("preset", None)
    if preset == "desk":
        base = DenoiserConfig.desk(vocab, n_slots=model.pop("n_slots", 32))
    elif preset == "full":
        base = DenoiserConfig.full(vocab, n_slots=model.pop("n_slots", 128))
    elif preset is None:
        base = DenoiserConfig(vocab_version=vocab.version)
    else:
        raise ConfigError(f"unknown model preset {preset!r}")
    model_cfg = dataclasses.replace(base, **model)

    train = _config_section(doc, "train", (
        "lr", "decay", "batch_size", "epochs", "beta1", "beta2", "eps",
        "clip", "seed"))
    tcfg = TrainConfig(**train)

    diff = _config_section(doc, "diffusion", ("K", "T", "top_p", "seed"))
    diff_cfg = DiffusionConfig(**diff)
    return model_cfg, tcfg, diff_cfg


@main.command("train")
@click.argument("dataset_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_file", required=True, type=click.Path(),
              help="Checkpoint path; metrics land next to it.")
@click.option("--resume", "resume_from", type=click.Path(exists=True),
              default=None, help="Continue from this checkpoint.")
@click.option("--checkpoint-every", default=0, show_default=True)
@click.option("--max-steps", default=None, type=int)
@click.option("--seed", default=None, type=int,
              help="Overrides train.seed from the config file.")
@click.option("--log-every", default=50, show_default=True)
def cmd_train(dataset_file, config_file, out_file, resume_from,
              checkpoint_every, max_steps, seed, log_every):
    """Train a denoiser on DATASET_FILE as configured by CONFIG_FILE."""
    vocab = build_vocabulary()
    try:
        model_cfg, tcfg, diff_cfg = load_train_config(config_file, vocab)
        if seed is not None:
            tcfg = dataclasses.replace(tcfg, seed=seed)
        dataset = load_dataset(dataset_file, vocab)
    except (ConfigError, ParseError, VersionMismatch, TypeError,
            ValueError) as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(2)

    def progress(rec):
        if rec["step"] % log_every == 0 or rec["step"] == 1:
            click.echo(f"step={rec['step']} epoch={rec['epoch']} "
                       f"loss={rec['loss']:.4f} lr={rec['lr']:.2e}")

    try:
        _, _, metrics = train_loop(
            dataset, model_cfg, tcfg, diff_cfg, vocab,
            log_path=str(out_file) + ".metrics.jsonl",
            checkpoint_path=out_file, checkpoint_every=checkpoint_every,
            resume_from=resume_from, max_steps=max_steps, progress=progress)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(2)
    if metrics:
        click.echo(f"final step={metrics[-1]['step']} "
                   f"loss={metrics[-1]['loss']:.4f}")
    click.echo(f"checkpoint written to {out_file}")


def _write_outputs(out_prefix, fmt, tok, vocab, echo):
    sample, skipped = decode_loop_lenient(tok, vocab)
    written = []
    if fmt in ("midi", "both"):
        midi_path = str(out_prefix) + ".mid"
        with open(midi_path, "wb") as f:
            f.write(render_midi(sample))
        written.append(midi_path)
    if fmt in ("tokens", "both"):
        tok_path = str(out_prefix) + ".tokens.json"
        with open(tok_path, "w", encoding="utf-8") as f:
            json.dump({"tokens": tok.tokens.tolist(),
                       "tempo_bpm": sample.tempo_bpm, "tag": sample.tag,
                       "skipped_slots": skipped, "echo": echo},
                      f, indent=1, sort_keys=True)
            f.write("\n")
        written.append(tok_path)
    return written


def _generate_local(checkpoint, prior_path, task_path, T, top_p, seed,
                    out_prefix, fmt):
    vocab = build_vocabulary()
    params, config, _, _ = load_params(checkpoint, vocab.version)
    model_cfg = DenoiserConfig.from_dict(config)
    denoiser = Denoiser(params, model_cfg, vocab)

    task_dict = None
    prior = None
    if task_path is not None:
        with open(task_path, "r", encoding="utf-8") as f:
            task_dict = json.load(f)
        spec = TaskSpec.from_dict(task_dict)
        preset = preset_for(spec.kind)
        T = T if T is not None else preset["T"]
        top_p = top_p if top_p is not None else preset["top_p"]
    else:
        with open(prior_path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        prior = prior_from_doc(doc, vocab)
        embedded = doc.get("task_spec")
        if embedded is not None and embedded.get("kind") == "variation":
            task_dict = embedded
    base = DiffusionConfig()
    T = T if T is not None else base.T
    top_p = top_p if top_p is not None else base.top_p
    cfg = DiffusionConfig(T=T, top_p=top_p, seed=seed)

    if task_dict is not None:
        tok = run_task(TaskSpec.from_dict(task_dict), denoiser, cfg, vocab,
                       model_cfg.n_slots)
    else:
        tok = generate(denoiser, prior, cfg, vocab, n_slots=model_cfg.n_slots)

    echo = {"T": T, "top_p": top_p, "seed": seed,
            "checkpoint": str(checkpoint)}
    written = _write_outputs(out_prefix, fmt, tok, vocab, echo)
    click.echo(f"T={T} top_p={top_p} seed={seed}")
    for path in written:
        click.echo(f"wrote {path}")


def _generate_remote(server, prior_path, task_path, T, top_p, seed,
                     out_prefix, fmt, timeout):
    import httpx

    body = {"seed": seed, "output": fmt}
    if T is not None:
        body["T"] = T
    if top_p is not None:
        body["top_p"] = top_p
    if task_path is not None:
        with open(task_path, "r", encoding="utf-8") as f:
            body["task"] = json.load(f)
    else:
        with open(prior_path, "r", encoding="utf-8") as f:
            body["prior"] = json.load(f)

    with httpx.Client(base_url=server, timeout=30.0) as client:
        r = client.post("/generate", json=body)
        if r.status_code != 200:
            click.echo(f"server rejected request: {r.text}", err=True)
            sys.exit(2 if r.status_code == 400 else 1)
        job_id = r.json()["job_id"]
        deadline = time.monotonic() + timeout
        while True:
            rec = client.get(f"/jobs/{job_id}").json()
            if rec["status"] in ("done", "failed"):
                break
            if time.monotonic() > deadline:
                click.echo("timed out waiting for the job", err=True)
                sys.exit(1)
            time.sleep(0.2)
        if rec["status"] == "failed":
            click.echo(f"generation failed: {rec['error']}", err=True)
            sys.exit(1)
        echo = rec["echo"]
        written = []
        if fmt in ("midi", "both"):
            midi = client.get(f"/jobs/{job_id}/result.mid")
            midi_path = str(out_prefix) + ".mid"
            with open(midi_path, "wb") as f:
                f.write(midi.content)
            written.append(midi_path)
        if fmt in ("tokens", "both"):
            res = client.get(f"/jobs/{job_id}/result.json").json()
            tok_path = str(out_prefix) + ".tokens.json"
            with open(tok_path, "w", encoding="utf-8") as f:
                json.dump({"tokens": res["tokens"],
                           "tempo_bpm": res["tempo_bpm"], "tag": res["tag"],
                           "skipped_slots": res["skipped_slots"],
                           "echo": echo}, f, indent=1, sort_keys=True)
                f.write("\n")
            written.append(tok_path)
    click.echo(f"T={echo['T']} top_p={echo['top_p']} seed={echo['seed']}")
    for path in written:
        click.echo(f"wrote {path}")


@main.command("generate")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Checkpoint for local generation.")
@click.option("--server", default=None,
              help="Base URL of a running service; generation happens there.")
@click.option("--prior", "prior_path",
              type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--task", "task_path",
              type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("-T", "--steps", "T", default=None, type=int)
@click.option("--top-p", default=None, type=float)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_prefix", required=True, type=click.Path())
@click.option("--format", "fmt", default="both", show_default=True,
              type=click.Choice(["tokens", "midi", "both"]))
@click.option("--timeout", default=600.0, show_default=True,
              help="Seconds to wait for a remote job.")
def cmd_generate(checkpoint, server, prior_path, task_path, T, top_p, seed,
                 out_prefix, fmt, timeout):
    """Generate one loop from a prior document or a task file."""
    if (prior_path is None) == (task_path is None):
        click.echo("give exactly one of --prior and --task", err=True)
        sys.exit(2)
    if (checkpoint is None) == (server is None):
        click.echo("give exactly one of --checkpoint and --server", err=True)
        sys.exit(2)
    if T is not None and T < 1:
        click.echo("-T must be at least 1", err=True)
        sys.exit(2)
    if top_p is not None and not 0.0 < top_p <= 1.0:
        click.echo("--top-p must lie in (0, 1]", err=True)
        sys.exit(2)
    try:
        if server is not None:
            _generate_remote(server, prior_path, task_path, T, top_p, seed,
                             out_prefix, fmt, timeout)
        else:
            _generate_local(checkpoint, prior_path, task_path, T, top_p,
                            seed, out_prefix, fmt)
    except (ConfigError, ParseError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    except LoopdiffError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@main.command("serve")
@click.option("--checkpoint", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--workers", default=None, type=int,
              help="Generation worker threads; default min(4, cores).")
@click.option("--seed", default=0, show_default=True,
              help="Accepted for interface uniformity; jobs carry their "
                   "own seeds.")
def cmd_serve(checkpoint, host, port, workers, seed):
    """Serve generation over HTTP from one checkpoint."""
    import uvicorn

    from .service import create_app

    try:
        app = create_app(checkpoint, workers=workers)
    except LoopdiffError as e:
        click.echo(f"cannot load checkpoint: {e}", err=True)
        sys.exit(1)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
