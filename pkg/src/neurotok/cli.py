"""Batch command-line interface.

Every subcommand takes ``--config`` (JSON with optional "model", "train",
"pretrain" and "preprocess" sections) and ``--seed``; flags override the
file.  Training commands read a directory written by ``preprocess`` via
``--data``, or fall back to the built-in synthetic corpus.  JSON is written
with sorted keys and histories as JSON lines so repeated runs are
byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import MalformedConfig, NeurotokError
from .har import PRETRAIN_DEFAULTS, Pretrainer, corpus_scores, pretrain
from .importance import WEIGHTS, sample_mask, score_patches
from .metrics import mask_report
from .nets import ModelConfig
from .optim import TrainConfig, rng_stream
from .patching import patchify
from .preprocess import PreprocessConfig, run_pipeline
from .signal_io import Recording, load_recording, save_recording
from .synth import generate_recording, make_corpus
from .tokenizer import Tokenizer, codebook_report, reconstruction_report, rvq_depth_sweep, train_tokenizer

SECTIONS = ("model", "train", "pretrain", "preprocess")
METRICS = ("neural", "clean", "complexity", "irreg", "mobility")


# config and io helpers

def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise MalformedConfig(f"config file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedConfig(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict) or set(cfg) - set(SECTIONS):
        raise MalformedConfig(f"config must be an object with sections {SECTIONS}")
    return cfg


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise MalformedConfig(f"config section {name!r} must be an object")
    return dict(sec)


def model_config(cfg: dict, args) -> ModelConfig:
    sec = _section(cfg, "model")
    if args.seed is not None:
        sec["seed"] = args.seed
    return ModelConfig.from_dict(sec)


def train_config(cfg: dict, args, name: str = "train") -> TrainConfig:
    sec = {**(PRETRAIN_DEFAULTS if name == "pretrain" else {}), **_section(cfg, name)}
    if args.seed is not None:
        sec["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        sec["epochs"] = args.epochs
        sec["warmup_epochs"] = min(sec.get("warmup_epochs", TrainConfig.warmup_epochs), args.epochs)
    return TrainConfig.from_dict(sec)


def write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_jsonl(path, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def load_corpus(args, mcfg: ModelConfig) -> tuple[np.ndarray, float]:
    """(S, C, A, P) patches and their sample rate, from ``--data`` or the synthetic corpus."""
    if args.data is None:
        c = make_corpus(seed=args.seed if args.seed is not None else mcfg.seed)
        return c["patches"], float(c["sample_rate_hz"])
    root = Path(args.data)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedConfig(f"{root} is not a preprocess output directory: {exc}") from None
    grids = [patchify(load_recording(root / f), mcfg.patch_len).data for f in manifest["files"]]
    if not grids:
        raise MalformedConfig(f"{root} holds no kept segments")
    return np.stack(grids).astype(np.float64), float(manifest["sample_rate_hz"])


def _parse_band(text: str) -> tuple[float, float]:
    try:
        low, high = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must look like low:high, got {text!r}") from None
    return low, high


# subcommands

def cmd_preprocess(args, cfg):
    sec = _section(cfg, "preprocess")
    if "band" in sec:
        sec["band"] = tuple(sec["band"])
    flags = {"band": args.band, "notch_hz": args.notch, "resample_hz": args.resample, "window_s": args.window,
             "amp_thresh_uv": args.amp_thresh, "trim_s": args.trim}
    sec.update({k: v for k, v in flags.items() if v is not None})
    try:
        pcfg = PreprocessConfig(**sec)
    except TypeError as exc:
        raise MalformedConfig(f"bad preprocess section: {exc}") from None
    rec = load_recording(args.input, sample_rate_hz=args.rate)
    segments, counts = run_pipeline(rec, pcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, seg in enumerate(segments):
        name = f"segment_{i:04d}.bin"
        save_recording(Recording(seg.data.astype(np.float32), seg.sample_rate_hz, list(rec.channel_labels)), out / name)
        files.append(name)
    write_json(out / "manifest.json", {**counts, "files": files, "sample_rate_hz": pcfg.resample_hz,
                                       "channels": rec.samples.shape[0], "starts": [int(s.start) for s in segments],
                                       "config": {**pcfg.__dict__, "band": list(pcfg.band)}})


def cmd_gen_synth(args, cfg):
    seed = args.seed if args.seed is not None else 7
    rec, coords = generate_recording(seed, args.minutes, args.channels, args.spike_density)
    out = Path(args.out)
    save_recording(rec, out)
    write_json(out.with_suffix(".json"), {
        "seed": seed, "minutes": args.minutes, "channels": args.channels, "spike_density": args.spike_density,
        "sample_rate_hz": rec.sample_rate_hz, "patch_seconds": 1.0, "informative": [list(c) for c in coords]})


def cmd_train_tokenizer(args, cfg):
    mcfg, tcfg = model_config(cfg, args), train_config(cfg, args)
    patches, _ = load_corpus(args, mcfg)
    tok, history = train_tokenizer(patches, mcfg, tcfg)
    out = Path(args.out)
    tok.save(out / "checkpoint", {"train": tcfg.to_dict()})
    write_jsonl(out / "history.jsonl", history)


def cmd_pretrain(args, cfg):
    tok = Tokenizer.load(args.tokenizer)
    tcfg = train_config(cfg, args, "pretrain")
    patches, rate = load_corpus(args, tok.cfg)
    model, history = pretrain(patches, tok, tcfg, rate)
    out = Path(args.out)
    model.save(out / "checkpoint", {"pretrain": tcfg.to_dict()})
    write_jsonl(out / "history.jsonl", history)
    # teacher forcing vs greedy inference on one fixed uniform mask per sample
    x = patches.reshape(patches.shape[0], -1, patches.shape[-1])
    codes = tok.tokenize(x).codes
    rng = rng_stream(tcfg.seed, "diagnostic")
    mask = np.stack([sample_mask(np.zeros(x.shape[1]), tok.cfg.mask_ratio, 0.0, rng).as_bool(x.shape[1])
                     for _ in range(len(x))])
    write_json(out / "diagnostics.json", {"ar_vs_teacher_disagreement": model.inference_gap(x, codes, mask)})


def cmd_score(args, cfg):
    mcfg = model_config(cfg, args)
    patches, rate = load_corpus(args, mcfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "channel", "index"] + [f"raw_{m}" for m in METRICS]
                   + [f"norm_{m}" for m in METRICS] + ["aggregate"])
        for s, sample in enumerate(patches):
            imap = score_patches(sample, rate, WEIGHTS)
            c_n, a_n = sample.shape[:2]
            for c in range(c_n):
                for a in range(a_n):
                    i = c * a_n + a
                    w.writerow([s, c, a] + [repr(float(imap.raw[m].ravel()[i])) for m in METRICS]
                               + [repr(float(imap.normalized[m].ravel()[i])) for m in METRICS]
                               + [repr(float(imap.score.ravel()[i]))])


def cmd_reconstruct(args, cfg):
    tok = Tokenizer.load(args.tokenizer)
    patches, _ = load_corpus(args, tok.cfg)
    write_json(args.out, reconstruction_report(tok, patches))


def cmd_analyze_codebook(args, cfg):
    tok = Tokenizer.load(args.tokenizer)
    patches, _ = load_corpus(args, tok.cfg)
    write_json(args.out, codebook_report(tok, patches))


def cmd_mask_report(args, cfg):
    mcfg, tcfg = model_config(cfg, args), train_config(cfg, args, "pretrain")
    patches, rate = load_corpus(args, mcfg)
    scores = corpus_scores(patches, rate)
    rng = rng_stream(tcfg.seed, "masking")
    rows = []
    for _ in range(args.draws):
        for s in scores:
            rows.append(mask_report(s, sample_mask(s, mcfg.mask_ratio, args.weight, rng, tcfg.tau)))
    summary = {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
    write_json(args.out, {"weight": args.weight, "draws": args.draws, "samples": len(scores), **summary})


def cmd_depth_sweep(args, cfg):
    mcfg, tcfg = model_config(cfg, args), train_config(cfg, args)
    patches, _ = load_corpus(args, mcfg)
    depths = [int(d) for d in args.depths.split(",")]
    write_json(args.out, {"rows": rvq_depth_sweep(patches, depths, mcfg, tcfg)})


# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neurotok", description="Dual-domain RVQ tokenization and masked pre-training.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, data=True, epochs=False):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="overrides every seed in the config")
        if data:
            sp.add_argument("--data", help="directory written by 'preprocess' (default: synthetic corpus)")
        if epochs:
            sp.add_argument("--epochs", type=int, help="overrides the configured epoch count")
        sp.set_defaults(fn=fn)
        return sp

    sp = add("preprocess", cmd_preprocess, "filter, resample, window, reject and normalize a recording", data=False)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--rate", type=float, help="sample rate for CSV input")
    sp.add_argument("--band", type=_parse_band, help="band-pass edges low:high in Hz (default 0.3:75)")
    sp.add_argument("--notch", type=float, help="notch centre in Hz (default 60)")
    sp.add_argument("--resample", type=float, help="target rate in Hz (default 200)")
    sp.add_argument("--window", type=float, help="window length in s (default 30)")
    sp.add_argument("--amp-thresh", type=float, help="rejection threshold in uV (default 100)")
    sp.add_argument("--trim", type=float, help="seconds trimmed from each end (default 60)")

    sp = add("gen-synth", cmd_gen_synth, "write a synthetic recording and its informative-patch sidecar", data=False)
    sp.add_argument("--minutes", type=float, default=5.0)
    sp.add_argument("--channels", type=int, default=4)
    sp.add_argument("--spike-density", type=float, default=0.05)
    sp.add_argument("--out", required=True, help="recording path; the sidecar gets a .json suffix")

    sp = add("train-tokenizer", cmd_train_tokenizer, "train the dual-domain RVQ tokenizer", epochs=True)
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("pretrain", cmd_pretrain, "masked hierarchical pre-training on frozen tokens", epochs=True)
    sp.add_argument("--tokenizer", required=True, help="tokenizer checkpoint directory")
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("score", cmd_score, "per-patch importance table (CSV)")
    sp.add_argument("--out", required=True)

    for name, fn, text in (("reconstruct", cmd_reconstruct, "reconstruction fidelity (JSON)"),
                           ("analyze-codebook", cmd_analyze_codebook, "codebook utilisation (JSON)")):
        sp = add(name, fn, text)
        sp.add_argument("--tokenizer", required=True, help="tokenizer checkpoint directory")
        sp.add_argument("--out", required=True)

    sp = add("mask-report", cmd_mask_report, "importance of masked vs visible patches (JSON)")
    sp.add_argument("--weight", type=float, default=0.7, help="curriculum weight w")
    sp.add_argument("--draws", type=int, default=100, help="masks drawn per sample")
    sp.add_argument("--out", required=True)

    sp = add("depth-sweep", cmd_depth_sweep, "reconstruction error per RVQ depth (JSON)", epochs=True)
    sp.add_argument("--depths", default="1,2,3")
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args, load_config(args.config))
    except MalformedConfig as exc:
        print(f"error: {exc.name}: {exc}", file=sys.stderr)
        return 2
    except NeurotokError as exc:
        print(f"error: {exc.name}: {exc}", file=sys.stderr)
        return 1
    return 0
