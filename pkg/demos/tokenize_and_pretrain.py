"""Train a small tokenizer, inspect its codes, then run a short masked pre-training.

Uses a reduced model so the whole script finishes in a minute or two.

    python3 demos/tokenize_and_pretrain.py
"""

from neurotok.har import pretrain, pretrain_config
from neurotok.nets import ModelConfig
from neurotok.optim import TrainConfig
from neurotok.synth import make_corpus
from neurotok.tokenizer import codebook_report, reconstruction_report, train_tokenizer

corpus = make_corpus(7, n_samples=32)
patches = corpus["patches"]
model = ModelConfig(embed_dim=32, encoder_layers=1, heads=2, ffn_dim=64, decoder_layers=1,
                    rvq_layers=2, codebook_size=16, code_dim=8)

tok, history = train_tokenizer(patches, model, TrainConfig(epochs=4, warmup_epochs=1, batch_size=8))
for row in history:
    print(f"epoch {row['epoch']}: total {row['l_total']:.3f}  time {row['l_time']:.3f}")

for domain, layers in codebook_report(tok, patches).items():
    for i, layer in enumerate(layers, 1):
        print(f"{domain} layer {i}: entropy {layer['normalized_entropy']:.2f}, unused {layer['unused_count']}")

for target, m in reconstruction_report(tok, patches).items():
    print(f"{target}: mse {m['mse']:.4f}  r {m['pearson_r']:.3f}")

har, hist = pretrain(patches, tok, pretrain_config(epochs=3, warmup_epochs=1, batch_size=8))
last = hist[-1]
print("pre-training, last epoch:", {k: round(v, 3) for k, v in last.items() if k.startswith(("l_har", "acc_"))})
