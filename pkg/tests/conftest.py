"""Shared fixtures: a tiny model config, the synthetic corpus, and cached training runs."""

from __future__ import annotations

import numpy as np
import pytest

from neurotok.nets import ModelConfig
from neurotok.optim import TrainConfig
from neurotok.synth import make_corpus


TINY = dict(embed_dim=8, encoder_layers=1, heads=2, ffn_dim=16, decoder_layers=1, patch_len=40,
            rvq_layers=2, codebook_size=5, code_dim=4, max_tokens=16, seed=3)


@pytest.fixture
def tiny_cfg() -> ModelConfig:
    return ModelConfig(**TINY)


def param_grad_error(loss_fn, params: dict, names, rng: np.random.Generator, coords: int = 12,
                     eps: float = 1e-5, numeric_fn=None, zero_tol: float = 1e-7) -> dict[str, float]:
    """Relative error of analytic vs central-difference gradients, per parameter.

    ``loss_fn()`` rebuilds the scalar loss from the current parameter values.
    Up to ``coords`` randomly chosen entries of each named parameter are
    perturbed; the error for an entry is |a - n| / (|a| + |n| + 1e-8).
    ``numeric_fn``, if given, is differenced instead of ``loss_fn``; it must
    agree with ``loss_fn`` in value (used to check surrogate gradients).

    Entries where both gradients sit below the finite-difference noise floor
    (``zero_tol`` times the loss magnitude) are structural zeros, such as the
    attention key bias under softmax shift invariance; they count as exact
    agreement and are tallied under the ``"_zeros"`` key.
    """
    numeric_fn = numeric_fn or loss_fn
    for p in params.values():
        p.grad = None
    base = loss_fn()
    base.backward()
    floor = zero_tol * max(1.0, abs(float(base.data)))
    out, zeros = {}, 0
    for name in names:
        p = params[name]
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        pick = rng.choice(flat.size, size=min(coords, flat.size), replace=False)
        worst = 0.0
        for i in pick:
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(numeric_fn().data)
            flat[i] = orig - eps
            lo = float(numeric_fn().data)
            flat[i] = orig
            num = (hi - lo) / (2 * eps)
            a = analytic.reshape(-1)[i]
            if abs(a) < floor and abs(num) < floor:
                zeros += 1
                continue
            worst = max(worst, abs(a - num) / (abs(a) + abs(num) + 1e-8))
        out[name] = worst
    out["_zeros"] = zeros
    for p in params.values():
        p.grad = None
    return out


def perturb(params: dict, rng: np.random.Generator, scale: float = 0.3):
    """Move every parameter to a random nearby point (zero-initialised heads included)."""
    for p in params.values():
        p.data = p.data + scale * rng.normal(size=p.shape)


@pytest.fixture(scope="session")
def corpus():
    return make_corpus(7)


@pytest.fixture(scope="session")
def depth_runs(corpus):
    """Desk-config tokenizers trained for 500 steps at depths 1, 2 and 3 (seed 7)."""
    from neurotok.tokenizer import train_tokenizer

    runs = {}
    for depth in (1, 2, 3):
        runs[depth] = train_tokenizer(corpus["patches"], ModelConfig(rvq_layers=depth), TrainConfig())
    return runs


@pytest.fixture(scope="session")
def pretrain_run(corpus, depth_runs):
    """500-step HAR pre-training on codes from the depth-3 tokenizer."""
    from neurotok.har import pretrain, pretrain_config

    tok, _ = depth_runs[3]
    return pretrain(corpus["patches"], tok, pretrain_config())


CLI_CONFIG = {
    "model": {"embed_dim": 16, "encoder_layers": 1, "heads": 2, "ffn_dim": 32, "decoder_layers": 1,
              "rvq_layers": 2, "codebook_size": 8, "code_dim": 4, "max_tokens": 32},
    "train": {"epochs": 2, "warmup_epochs": 1, "batch_size": 16},
    "pretrain": {"epochs": 2, "warmup_epochs": 1, "batch_size": 16},
    "preprocess": {"trim_s": 30.0},
}


def run_cli_suite(root, config_path) -> dict[str, list]:
    """Run every subcommand once into ``root``; returns {subcommand: [output files]}."""
    from neurotok.cli import main

    cfg = ["--config", str(config_path), "--seed", "11"]
    root.mkdir(parents=True, exist_ok=True)
    steps = {
        "gen-synth": (["gen-synth", "--minutes", "2", "--channels", "2", "--out", str(root / "rec.bin"), "--seed", "11"],
                      ["rec.bin", "rec.json"]),
        "preprocess": (["preprocess", "--in", str(root / "rec.bin"), "--out", str(root / "pre"), "--config", str(config_path)],
                       ["pre/manifest.json", "pre/segment_0000.bin"]),
        "train-tokenizer": (["train-tokenizer", *cfg, "--out", str(root / "tok")],
                            ["tok/history.jsonl", "tok/checkpoint/manifest.json", "tok/checkpoint/tensors.bin"]),
        "pretrain": (["pretrain", *cfg, "--tokenizer", str(root / "tok/checkpoint"), "--out", str(root / "har")],
                     ["har/history.jsonl", "har/diagnostics.json", "har/checkpoint/tensors.bin"]),
        "score": (["score", *cfg, "--data", str(root / "pre"), "--out", str(root / "score.csv")], ["score.csv"]),
        "reconstruct": (["reconstruct", *cfg, "--tokenizer", str(root / "tok/checkpoint"), "--out", str(root / "recon.json")],
                        ["recon.json"]),
        "analyze-codebook": (["analyze-codebook", *cfg, "--tokenizer", str(root / "tok/checkpoint"),
                              "--out", str(root / "codebook.json")], ["codebook.json"]),
        "mask-report": (["mask-report", *cfg, "--draws", "5", "--out", str(root / "mask.json")], ["mask.json"]),
        "depth-sweep": (["depth-sweep", *cfg, "--depths", "1,2", "--epochs", "1", "--out", str(root / "depth.json")],
                        ["depth.json"]),
    }
    outputs = {}
    for name, (argv, files) in steps.items():
        code = main(argv)
        assert code == 0, f"{name} exited with {code}"
        outputs[name] = files
    return outputs


@pytest.fixture(scope="session")
def cli_runs(tmp_path_factory):
    """Two independent runs of the full CLI surface with the same seed and config."""
    import json

    base = tmp_path_factory.mktemp("cli")
    config = base / "config.json"
    config.write_text(json.dumps(CLI_CONFIG))
    first = run_cli_suite(base / "a", config)
    run_cli_suite(base / "b", config)
    return base / "a", base / "b", first


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion that ran."""
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
