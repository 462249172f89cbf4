"""Dual-domain RVQ tokenization and hierarchical masked pre-training for multi-channel neural signals."""

from .errors import NeurotokError
from .har import Pretrainer, autoregressive_infer, har_loss, independent_loss, predict_layer, pretrain
from .importance import curriculum_weight, sample_mask, score_patches
from .metrics import codebook_stats, mask_report, recon_metrics
from .nets import ModelConfig
from .optim import TrainConfig
from .patching import PatchGrid, patchify, unpatchify
from .preprocess import PreprocessConfig, run_pipeline
from .rvq import Codebook, RvqStack, dequantize, ema_update, quantize
from .signal_io import Recording, load_recording, save_recording
from .spectral import dft, idft
from .synth import generate_recording, make_corpus
from .tokenizer import Tokenizer, rvq_depth_sweep, train_tokenizer

__version__ = "0.1.0"

__all__ = [
    "Codebook", "ModelConfig", "NeurotokError", "PatchGrid", "PreprocessConfig", "Pretrainer", "Recording",
    "RvqStack", "TrainConfig", "Tokenizer", "autoregressive_infer", "codebook_stats", "curriculum_weight",
    "dequantize", "dft", "ema_update", "generate_recording", "har_loss", "idft", "independent_loss",
    "load_recording", "make_corpus", "mask_report", "patchify", "predict_layer", "pretrain", "quantize",
    "recon_metrics", "run_pipeline", "rvq_depth_sweep", "sample_mask", "save_recording", "score_patches",
    "train_tokenizer", "unpatchify",
]
