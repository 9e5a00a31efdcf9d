#!/usr/bin/env python3
"""Weight tying decides where training lands when p + q > 1.

Two identical single-layer models train on the same chain (p=0.5, q=0.8,
switching factor 1.3). The tied model tends to settle on the unigram plateau
(marginal entropy, a true local minimum); the untied one escapes the saddle
and reaches the bigram loss (entropy rate). Expect a few minutes of runtime.
"""

from markovlens import MarkovKernel, ModelConfig, TrainConfig, entropy_rate, marginal_entropy, train

kernel = MarkovKernel.binary(0.5, 0.8)
print(f"{kernel.label()}: bigram loss {entropy_rate(kernel):.4f}, "
      f"unigram loss {marginal_entropy(kernel):.4f}\n")

for tied in (True, False):
    model = ModelConfig(embed_dim=8, attn_dim=8, ff_dim=32, context_len=64,
                        n_layers=1, vocab_size=2, tied=tied)
    config = TrainConfig(kernel=kernel, model=model, batch_size=64,
                         iterations=1500, lr=1e-3, seed=0,
                         eval_every=250, eval_batches=20)
    record = train(config, keep_params=False)
    print(f"tied={tied}:")
    for it, test_loss, _ in record.loss_curve:
        bar = "#" * int(max(0.0, test_loss - 0.60) * 400)
        print(f"  iter {it:5d}  test {test_loss:.4f}  {bar}")
    print(f"  -> classified {record.classification}, "
          f"mean prediction at zero-token positions: {record.final_pred_zero:.4f}")
    print(f"     (kernel would predict {kernel.p}, unigram would predict "
          f"{kernel.p / (kernel.p + kernel.q):.4f})\n")
