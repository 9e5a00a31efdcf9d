"""Losses and exact reverse-mode gradients for the Markov next-token task.

Two evaluation modes share one hand-written backward pass:

- empirical: mean cross-entropy over a batch of sampled (N+1)-token sequences,
  the model consuming the first N tokens;
- exact: the population loss, obtained by enumerating every length-N input
  sequence with its probability and scoring each position against the true
  conditional law of the next symbol. Only S**N sequences are visited because
  the target enters through its conditional expectation.

Gradients differentiate the enumeration-weighted loss directly (the sequence
probabilities are constants), so stationarity claims about the population loss
can be checked to floating-point accuracy. A dense Hessian is available for
small parameter counts via central differences of the exact gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .markov import MarkovKernel, entropy_rate, enumerate_all
from .model import ForwardTrace, ParamSet, _merge_heads, _split_heads, forward

HESSIAN_DIM_LIMIT = 512
FD_GRAD_STEP = 1e-5
FD_HESSIAN_STEP = 1e-4


# -- losses ------------------------------------------------------------------

def _binary_position_losses(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Stable -[t ln f + (1-t) ln(1-f)] with f = sigmoid(logits); t may be soft."""
    return np.logaddexp(0.0, logits) - targets * logits


def _softmax_position_losses(logits: np.ndarray, target_probs: np.ndarray) -> np.ndarray:
    """Cross entropy -sum_j t_j ln softmax(logits)_j with a soft target row."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1))
    return lse - (target_probs * shifted).sum(axis=-1)


def empirical_loss(params: ParamSet, batch: np.ndarray) -> float:
    """Mean next-token cross entropy; batch rows carry N+1 tokens, the model
    consumes the first N."""
    batch = np.asarray(batch, dtype=np.int64)
    if batch.ndim != 2 or batch.shape[0] < 1:
        raise ValueError("batch must be a nonempty (B, N+1) token array")
    if batch.shape[1] < 2:
        raise ValueError("sequences need at least 2 tokens (input + target)")
    inputs, targets = batch[:, :-1], batch[:, 1:]
    trace = forward(params, inputs)
    if params.config.is_binary:
        losses = _binary_position_losses(trace.logits, targets.astype(np.float64))
    else:
        onehot = np.eye(params.config.vocab_size)[targets]
        losses = _softmax_position_losses(trace.logits, onehot)
    return float(losses.mean())


def per_sequence_losses(params: ParamSet, batch: np.ndarray) -> np.ndarray:
    """Per-sequence mean cross entropy, for Monte-Carlo error bars."""
    batch = np.asarray(batch, dtype=np.int64)
    inputs, targets = batch[:, :-1], batch[:, 1:]
    trace = forward(params, inputs)
    if params.config.is_binary:
        losses = _binary_position_losses(trace.logits, targets.astype(np.float64))
    else:
        onehot = np.eye(params.config.vocab_size)[targets]
        losses = _softmax_position_losses(trace.logits, onehot)
    return losses.mean(axis=1)


def _exact_forward(params: ParamSet, kernel: MarkovKernel, horizon: int):
    if kernel.n_states != params.config.vocab_size:
        raise ValueError("kernel state count does not match the model vocabulary")
    tokens, weights = enumerate_all(kernel, horizon)
    trace = forward(params, tokens)
    cond = kernel.matrix[tokens]  # (K, N, S) true law of the next symbol
    return tokens, weights, trace, cond


def exact_population_loss(
    params: ParamSet, kernel: MarkovKernel, horizon: int
) -> float:
    """Exact expected loss over the chain, by enumeration."""
    _, weights, trace, cond = _exact_forward(params, kernel, horizon)
    if params.config.is_binary:
        losses = _binary_position_losses(trace.logits, cond[:, :, 1])
    else:
        losses = _softmax_position_losses(trace.logits, cond)
    return float(weights @ losses.mean(axis=1))


def loss_kl_decomposition(
    params: ParamSet, kernel: MarkovKernel, horizon: int
) -> tuple[float, float]:
    """Split the exact loss into (average positional KL to the kernel, entropy
    rate); the two add back to exact_population_loss."""
    _, weights, trace, cond = _exact_forward(params, kernel, horizon)
    if params.config.is_binary:
        ce = _binary_position_losses(trace.logits, cond[:, :, 1])
        t = cond[:, :, 1]
        cond_entropy = -(
            np.where(t > 0, t * np.log(t), 0.0)
            + np.where(t < 1, (1 - t) * np.log(1 - t), 0.0)
        )
    else:
        ce = _softmax_position_losses(trace.logits, cond)
        cond_entropy = -np.where(cond > 0, cond * np.log(cond), 0.0).sum(axis=-1)
    kl = ce - cond_entropy
    avg_kl = float(weights @ kl.mean(axis=1))
    return avg_kl, entropy_rate(kernel)


# -- backward pass -------------------------------------------------------------

def backprop_from_logit_grads(
    params: ParamSet, trace: ForwardTrace, dlogits: np.ndarray
) -> np.ndarray:
    """Backpropagate given dL/dlogits; returns the flat gradient vector.

    dlogits has shape (B, T) for binary heads and (B, T, S) otherwise. Under
    weight tying the embedding slot accumulates both the embedding-role and
    head-role contributions.
    """
    config = params.config
    grads = ParamSet(config)  # zero-initialized, same layout
    tokens = trace.tokens
    b, t = tokens.shape
    z_final = trace.layers[-1].z if config.n_layers else trace.x0

    if config.is_binary:
        dz = dlogits[:, :, None] * params.head[None, None, :]
        dhead = np.einsum("bt,btd->d", dlogits, z_final)
        dbias = dlogits.sum()
        grads.bias[...] += dbias
    else:
        dz = dlogits @ params.head
        dhead = np.einsum("bts,btd->sd", dlogits, z_final)
        grads.bias[...] += dlogits.sum(axis=(0, 1))
    if config.tied:
        grads.emb[...] += dhead
    else:
        grads.head[...] += dhead

    scale = 1.0 / np.sqrt(config.embed_dim)
    for layer in range(config.n_layers - 1, -1, -1):
        lt = trace.layers[layer]
        w_o, w_1, w_2 = (params.layer(layer, n) for n in ("W_O", "W_1", "W_2"))
        w_q, w_k, w_v = (params.layer(layer, n) for n in ("W_Q", "W_K", "W_V"))

        # FF block: z = y + relu(y W_1^T) W_2^T
        relu = np.maximum(lt.pre_act, 0.0)
        dpre = (dz @ w_2) * (lt.pre_act > 0.0)
        grads.layer(layer, "W_2")[...] += np.einsum("btd,btr->dr", dz, relu)
        grads.layer(layer, "W_1")[...] += np.einsum("btr,btd->rd", dpre, lt.y)
        dy = dz + dpre @ w_1

        # attention output: y = x_in + ctx W_O^T
        grads.layer(layer, "W_O")[...] += np.einsum("btd,btm->dm", dy, lt.ctx)
        dctx = _split_heads(dy @ w_o, config.n_heads)
        dx = dy.copy()

        # context: ctx = att @ v
        datt = dctx @ lt.v.swapaxes(-1, -2)
        dv = lt.att.swapaxes(-1, -2) @ dctx
        # softmax rows (masked entries carry att = 0, hence zero gradient)
        dscores = lt.att * (datt - (datt * lt.att).sum(axis=-1, keepdims=True))
        dscores *= scale
        dq = dscores @ lt.k
        dk = dscores.swapaxes(-1, -2) @ lt.q

        dq_m, dk_m, dv_m = (_merge_heads(g) for g in (dq, dk, dv))
        grads.layer(layer, "W_Q")[...] += np.einsum("btm,btd->md", dq_m, lt.x_in)
        grads.layer(layer, "W_K")[...] += np.einsum("btm,btd->md", dk_m, lt.x_in)
        grads.layer(layer, "W_V")[...] += np.einsum("btm,btd->md", dv_m, lt.x_in)
        dx += dq_m @ w_q + dk_m @ w_k + dv_m @ w_v
        dz = dx

    # embedding layer
    if config.is_binary:
        grads.emb[...] += np.einsum("bt,btd->d", tokens.astype(np.float64), dz)
    else:
        demb = np.zeros_like(grads.emb)
        np.add.at(demb, tokens.reshape(-1), dz.reshape(-1, config.embed_dim))
        grads.emb[...] += demb
    grads.pos[:t] += dz.sum(axis=0)
    return grads.flatten()


def loss_and_grad_batch(params: ParamSet, batch: np.ndarray) -> tuple[float, np.ndarray]:
    """Empirical loss and its gradient in one pass."""
    batch = np.asarray(batch, dtype=np.int64)
    inputs, targets = batch[:, :-1], batch[:, 1:]
    b, n = inputs.shape
    trace = forward(params, inputs)
    if params.config.is_binary:
        t = targets.astype(np.float64)
        loss = float(_binary_position_losses(trace.logits, t).mean())
        dlogits = (trace.preds - t) / (b * n)
    else:
        onehot = np.eye(params.config.vocab_size)[targets]
        loss = float(_softmax_position_losses(trace.logits, onehot).mean())
        dlogits = (trace.preds - onehot) / (b * n)
    return loss, backprop_from_logit_grads(params, trace, dlogits)


def loss_and_grad_exact(
    params: ParamSet, kernel: MarkovKernel, horizon: int
) -> tuple[float, np.ndarray]:
    """Exact population loss and gradient via enumeration."""
    _, weights, trace, cond = _exact_forward(params, kernel, horizon)
    n = horizon
    if params.config.is_binary:
        t = cond[:, :, 1]
        loss = float(weights @ _binary_position_losses(trace.logits, t).mean(axis=1))
        dlogits = weights[:, None] * (trace.preds - t) / n
    else:
        loss = float(weights @ _softmax_position_losses(trace.logits, cond).mean(axis=1))
        dlogits = weights[:, None, None] * (trace.preds - cond) / n
    return loss, backprop_from_logit_grads(params, trace, dlogits)


def backward(
    params: ParamSet,
    batch: np.ndarray | None = None,
    kernel: MarkovKernel | None = None,
    horizon: int | None = None,
) -> np.ndarray:
    """Gradient of the empirical loss (batch given) or the exact population
    loss (kernel and horizon given)."""
    if batch is not None:
        return loss_and_grad_batch(params, batch)[1]
    if kernel is None or horizon is None:
        raise ValueError("provide either a batch or (kernel, horizon)")
    return loss_and_grad_exact(params, kernel, horizon)[1]


# -- finite differences --------------------------------------------------------

def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, step: float = FD_GRAD_STEP
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        x[i] += step
        hi = f(x)
        x[i] -= 2.0 * step
        lo = f(x)
        x[i] += step
        grad[i] = (hi - lo) / (2.0 * step)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> float:
    """max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


# -- Hessian --------------------------------------------------------------------

@dataclass
class HessianReport:
    matrix: np.ndarray  # dense symmetric (D, D)
    eigenvalues: np.ndarray  # ascending
    block_map: dict[str, list[int]]  # flat offsets of bias/head/emb slots
    asymmetry: float  # max |H - H^T| before symmetrization

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    def alpha_indices(self) -> list[int]:
        """Flat indices of the head-block coordinates, ordered (bias, head
        [, emb]); tied models alias the head onto the embedding slot."""
        idx = list(range(self.block_map["bias"][0], self.block_map["bias"][1]))
        if "head" in self.block_map:
            idx += list(range(self.block_map["head"][0], self.block_map["head"][1]))
        idx += list(range(self.block_map["emb"][0], self.block_map["emb"][1]))
        return idx

    def alpha_block(self) -> np.ndarray:
        sel = np.array(self.alpha_indices())
        return self.matrix[np.ix_(sel, sel)]

    def max_off_block(self) -> float:
        """Largest |entry| outside the head-block rows/columns."""
        mask = np.ones(self.matrix.shape[0], dtype=bool)
        mask[self.alpha_indices()] = False
        rest = self.matrix[np.ix_(mask, mask)]
        cross = self.matrix[np.ix_(mask, ~mask)]
        vals = [0.0]
        if rest.size:
            vals.append(float(np.abs(rest).max()))
        if cross.size:
            vals.append(float(np.abs(cross).max()))
        return max(vals)


def numerical_hessian(
    params: ParamSet,
    kernel: MarkovKernel,
    horizon: int,
    step: float = FD_HESSIAN_STEP,
) -> HessianReport:
    """Dense Hessian of the exact population loss, by central differences of
    the exact gradient, symmetrized before the eigensolve."""
    dim = params.dim
    if dim > HESSIAN_DIM_LIMIT:
        raise ValueError(f"parameter dimension {dim} exceeds {HESSIAN_DIM_LIMIT}")
    base = params.flatten()
    cols = np.empty((dim, dim))
    work = base.copy()
    for j in range(dim):
        work[j] = base[j] + step
        g_hi = loss_and_grad_exact(params.with_flat(work), kernel, horizon)[1]
        work[j] = base[j] - step
        g_lo = loss_and_grad_exact(params.with_flat(work), kernel, horizon)[1]
        work[j] = base[j]
        cols[:, j] = (g_hi - g_lo) / (2.0 * step)
    asymmetry = float(np.abs(cols - cols.T).max())
    sym = 0.5 * (cols + cols.T)
    eigs = np.linalg.eigvalsh(sym)
    offsets = params.offsets()
    block = {"bias": offsets["bias"], "emb": offsets["emb"]}
    if "head" in offsets:
        block["head"] = offsets["head"]
    return HessianReport(matrix=sym, eigenvalues=eigs, block_map=block, asymmetry=asymmetry)
