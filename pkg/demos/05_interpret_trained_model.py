#!/usr/bin/env python3
"""What a converged single-layer model actually computes.

Train at (p, q) = (0.2, 0.3), where runs reliably reach the bigram minimum,
then inspect the weights: the attention contribution is negligible against
the skip connection, the positional encodings are nearly constant, and the
embedding/FF weights are close to a sign-pattern rank-one family. Plugging
the fitted scalars into the closed-form logit formula reproduces the model's
own two predicted probabilities, which sit near the kernel entries p and
1 - q.
"""

from markovlens import MarkovKernel, ModelConfig, TrainConfig, interpret, train
from markovlens.markov import sample_batch

kernel = MarkovKernel.binary(0.2, 0.3)
model = ModelConfig(embed_dim=4, attn_dim=4, ff_dim=16, context_len=64,
                    n_layers=1, vocab_size=2, tied=True)
config = TrainConfig(kernel=kernel, model=model, batch_size=64,
                     iterations=1500, lr=1e-3, seed=1,
                     eval_every=500, eval_batches=20)
print("training a tied single-layer model at (0.2, 0.3)...")
record = train(config)
print(f"final test loss {record.final_test_loss:.4f} -> {record.classification}\n")

probe = sample_batch(kernel, 16, model.context_len, seed=123)
report = interpret(record.params, probe)
fit = report.rank1
print(f"attention contribution / output norm : {report.attention_ratio:.4f}")
print(f"positional spread (max dev / mean)   : {report.positional_spread:.4f}")
print(f"sign vector v                        : {fit.sign_vector.astype(int)}")
print(f"embedding scale e                    : {fit.emb_scale:+.4f}")
print(f"positional scale p                   : {fit.pos_scale:+.4f}")
print(f"FF scale w1                          : {fit.ff_scale:+.4f}")
print(f"FF positive rows beta                : {fit.positive_count} of {model.ff_dim}")
print(f"bias b                               : {fit.bias:+.4f}")
print()
print(f"formula logits  (token 1, token 0)   : {report.formula_logits[0]:+.4f}, "
      f"{report.formula_logits[1]:+.4f}")
print(f"formula probs   (token 1, token 0)   : {report.formula_probs[0]:.3f}, "
      f"{report.formula_probs[1]:.3f}")
print(f"kernel targets  (1-q, p)             : {1 - kernel.q:.3f}, {kernel.p:.3f}")
print(f"model's own mean predictions         : {record.final_pred_one:.3f}, "
      f"{record.final_pred_zero:.3f}")
