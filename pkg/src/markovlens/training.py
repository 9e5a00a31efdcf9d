"""Online AdamW training on freshly sampled chains, with convergence
classification against the entropy baselines.

Each iteration draws a brand-new batch of (N+1)-token chains whose seed is a
stable 64-bit mix of the run seed and the iteration index, so runs are
bit-reproducible and no batch ever repeats. Test loss is estimated on held-out
batches from a disjoint seed stream. A finished run is classified `bigram`
when its final test loss sits within a band around the entropy rate, `unigram`
when it sits within a band around the stationary-distribution entropy, and
`neither` otherwise.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .grad import loss_and_grad_batch, per_sequence_losses
from .markov import MarkovKernel, entropy_rate, marginal_entropy, sample_batch
from .model import ModelConfig, ParamSet, init_params

Classification = Literal["bigram", "unigram", "neither"]

BIGRAM_TOL = 0.01
UNIGRAM_TOL = 0.01
PROBE_POSITIONS = 100


def mix_seed(*parts: int) -> int:
    """Stable splitmix64-style hash of integers onto a 64-bit seed."""
    acc = 0x9E3779B97F4A7C15
    for part in parts:
        acc = (acc ^ (int(part) & 0xFFFFFFFFFFFFFFFF)) * 0xBF58476D1CE4E5B9 % 2**64
        acc = (acc ^ (acc >> 27)) * 0x94D049BB133111EB % 2**64
        acc ^= acc >> 31
    return acc


@dataclass(frozen=True)
class TrainConfig:
    kernel: MarkovKernel
    model: ModelConfig
    batch_size: int = 64
    iterations: int = 2000
    lr: float = 1e-3
    weight_decay: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.95)
    schedule: Literal["cosine", "constant"] = "cosine"
    seed: int = 0
    eval_every: int = 100
    eval_batches: int = 20

    def __post_init__(self) -> None:
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.kernel.n_states != self.model.vocab_size:
            raise ValueError("kernel states and model vocabulary must agree")

    def to_dict(self) -> dict:
        return {
            "kernel": {
                "p": self.kernel.p,
                "q": self.kernel.q,
                "states": self.kernel.n_states,
            },
            "model": self.model.to_dict(),
            "batch_size": self.batch_size,
            "iterations": self.iterations,
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "betas": list(self.betas),
            "schedule": self.schedule,
            "seed": self.seed,
            "eval_every": self.eval_every,
            "eval_batches": self.eval_batches,
        }


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "AdamWState":
        return cls(m=np.zeros(dim), v=np.zeros(dim))


def cosine_lr(base_lr: float, t: int, total: int) -> float:
    """lr * (1 + cos(pi * t / total)) / 2 for t = 0..total-1."""
    return base_lr * (1.0 + math.cos(math.pi * t / total)) / 2.0


def adamw_step(
    flat: np.ndarray,
    grads: np.ndarray,
    state: AdamWState,
    lr_t: float,
    betas: tuple[float, float] = (0.9, 0.95),
    weight_decay: float = 1e-3,
    eps: float = 1e-8,
) -> None:
    """One decoupled-weight-decay Adam update, in place on the flat vector."""
    if grads.shape != flat.shape or state.m.shape != flat.shape:
        raise ValueError("gradient/state shape mismatch")
    b1, b2 = betas
    state.step += 1
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1**state.step)
    v_hat = state.v / (1.0 - b2**state.step)
    flat -= lr_t * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * flat)


@dataclass
class RunRecord:
    config: TrainConfig
    loss_curve: list[tuple[int, float, float]]  # (iteration, test_loss, train_loss)
    final_test_loss: float
    final_pred_zero: float | None
    final_pred_one: float | None
    probe_pred_zero: list[float] = field(default_factory=list)
    probe_pred_one: list[float] = field(default_factory=list)
    classification: Classification = "neither"
    unigram_plateau: bool = False
    failed: bool = False
    wall_time: float | None = None
    params: ParamSet | None = None

    def to_dict(self, include_wall_time: bool = False) -> dict:
        return {
            "config": self.config.to_dict(),
            "loss_curve": [[it, te, tr] for it, te, tr in self.loss_curve],
            "final_test_loss": self.final_test_loss,
            "final_pred_zero": self.final_pred_zero,
            "final_pred_one": self.final_pred_one,
            "probe_pred_zero": self.probe_pred_zero,
            "probe_pred_one": self.probe_pred_one,
            "classification": self.classification,
            "unigram_plateau": self.unigram_plateau,
            "failed": self.failed,
            # wall time is environment noise; keep the key, drop the value, so
            # identical seeds give byte-identical files
            "wall_time": self.wall_time if include_wall_time else None,
        }


def classify_convergence(
    final_loss: float,
    kernel: MarkovKernel,
    bigram_tol: float = BIGRAM_TOL,
    unigram_tol: float = UNIGRAM_TOL,
) -> Classification:
    """bigram if the loss sits in the entropy-rate band, else unigram if it
    sits in the marginal-entropy band, else neither."""
    if abs(final_loss - entropy_rate(kernel)) <= bigram_tol:
        return "bigram"
    if abs(final_loss - marginal_entropy(kernel)) <= unigram_tol:
        return "unigram"
    return "neither"


def _eval_test_loss(params: ParamSet, config: TrainConfig, tag: int) -> float:
    n = config.model.context_len
    count = config.eval_batches * config.batch_size
    batch = sample_batch(config.kernel, count, n + 1, mix_seed(config.seed, 0xE7A1, tag))
    return float(per_sequence_losses(params, batch).mean())


def _probe_predictions(params: ParamSet, config: TrainConfig):
    """Mean prediction of 'next symbol is 1' at fixed probe positions whose
    current token is 0 (and 1), on a held-out batch. Binary models only."""
    if not config.model.is_binary:
        return None, None, [], []
    from .model import forward

    n = config.model.context_len
    batch = sample_batch(config.kernel, 4 * PROBE_POSITIONS, n, mix_seed(config.seed, 0xBEEF))
    trace = forward(params, batch)
    preds = trace.preds
    flat_tokens = batch.reshape(-1)
    flat_preds = preds.reshape(-1)
    zero_idx = np.flatnonzero(flat_tokens == 0)[:PROBE_POSITIONS]
    one_idx = np.flatnonzero(flat_tokens == 1)[:PROBE_POSITIONS]
    probe_zero = flat_preds[zero_idx].tolist()
    probe_one = flat_preds[one_idx].tolist()
    mean_zero = float(np.mean(probe_zero)) if probe_zero else None
    mean_one = float(np.mean(probe_one)) if probe_one else None
    return mean_zero, mean_one, probe_zero, probe_one


def _detect_unigram_plateau(
    curve: list[tuple[int, float, float]], kernel: MarkovKernel, band: float = 0.02
) -> bool:
    """True when the test-loss curve visits the marginal-entropy band and
    later descends clearly below it."""
    h_pi = marginal_entropy(kernel)
    seen_plateau = False
    for _, test_loss, _ in curve:
        if abs(test_loss - h_pi) <= band:
            seen_plateau = True
        elif seen_plateau and test_loss < h_pi - 2 * band:
            return True
    return False


def train(config: TrainConfig, keep_params: bool = True) -> RunRecord:
    """Run online AdamW training and classify the outcome."""
    start = time.perf_counter()
    params = init_params(config.model, mix_seed(config.seed, 0x1417))
    state = AdamWState.zeros(params.dim)
    n = config.model.context_len
    curve: list[tuple[int, float, float]] = []
    failed = False

    for it in range(config.iterations):
        batch = sample_batch(
            config.kernel, config.batch_size, n + 1, mix_seed(config.seed, 1, it)
        )
        train_loss, grads = loss_and_grad_batch(params, batch)
        if not np.isfinite(train_loss):
            failed = True
            break
        if config.schedule == "cosine":
            lr_t = cosine_lr(config.lr, it, config.iterations)
        else:
            lr_t = config.lr
        adamw_step(
            params.flat, grads, state, lr_t, betas=config.betas,
            weight_decay=config.weight_decay,
        )
        if it % config.eval_every == 0 or it == config.iterations - 1:
            test_loss = _eval_test_loss(params, config, it)
            curve.append((it, test_loss, train_loss))
            if not np.isfinite(test_loss):
                failed = True
                break

    final_test = curve[-1][1] if curve else float("nan")
    mean_zero, mean_one, probe_zero, probe_one = (
        _probe_predictions(params, config) if not failed else (None, None, [], [])
    )
    record = RunRecord(
        config=config,
        loss_curve=curve,
        final_test_loss=final_test,
        final_pred_zero=mean_zero,
        final_pred_one=mean_one,
        probe_pred_zero=probe_zero,
        probe_pred_one=probe_one,
        classification="neither" if failed else classify_convergence(final_test, config.kernel),
        unigram_plateau=_detect_unigram_plateau(curve, config.kernel),
        failed=failed,
        wall_time=time.perf_counter() - start,
        params=params if keep_params else None,
    )
    return record


def _train_for_pool(config: TrainConfig) -> RunRecord:
    return train(config, keep_params=False)


def run_many(configs: list[TrainConfig], jobs: int | None = None) -> list[RunRecord]:
    """Train several configurations, optionally in parallel processes; the
    result order always matches the input order."""
    if jobs is not None and jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_train_for_pool, configs))
    return [train(c, keep_params=False) for c in configs]


@dataclass
class SweepRow:
    p: float
    q: float
    tied: bool
    seed: int
    final_loss: float
    final_pred_zero: float | None
    final_pred_one: float | None
    classification: str
    failed: bool


def sweep_pq(
    grid: list[tuple[float, float]],
    tied: bool,
    seeds: list[int],
    base: TrainConfig,
    jobs: int | None = None,
) -> tuple[list[SweepRow], dict[tuple[float, float], float]]:
    """Train |seeds| runs per (p, q) cell and average the prediction at
    zero-token positions; failed runs are excluded from the mean."""
    configs = []
    for p, q in grid:
        for seed in seeds:
            kernel = MarkovKernel.binary(p, q)
            model = replace(base.model, tied=tied)
            configs.append(
                replace(base, kernel=kernel, model=model, seed=mix_seed(base.seed, seed))
            )
    records = run_many(configs, jobs=jobs)
    rows: list[SweepRow] = []
    cell_means: dict[tuple[float, float], float] = {}
    i = 0
    for p, q in grid:
        preds = []
        for seed in seeds:
            rec = records[i]
            i += 1
            rows.append(
                SweepRow(
                    p=p, q=q, tied=tied, seed=seed,
                    final_loss=rec.final_test_loss,
                    final_pred_zero=rec.final_pred_zero,
                    final_pred_one=rec.final_pred_one,
                    classification=rec.classification,
                    failed=rec.failed,
                )
            )
            if not rec.failed and rec.final_pred_zero is not None:
                preds.append(rec.final_pred_zero)
        cell_means[(p, q)] = float(np.mean(preds)) if preds else float("nan")
    return rows, cell_means


def depth_experiment(
    layer_counts: list[int],
    kernel: MarkovKernel,
    tied: bool,
    seeds: list[int],
    base: TrainConfig,
    jobs: int | None = None,
) -> dict[int, list[RunRecord]]:
    """Train per depth, recording classification and whether the curve paused
    at the marginal-entropy plateau before descending."""
    out: dict[int, list[RunRecord]] = {}
    for layers in layer_counts:
        model = replace(base.model, n_layers=layers, tied=tied)
        configs = [
            replace(base, model=model, seed=mix_seed(base.seed, layers, s)) for s in seeds
        ]
        out[layers] = run_many(configs, jobs=jobs)
    return out
