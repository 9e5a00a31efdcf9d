"""Curvature analysis at the constant-prediction (unigram) point and
interpretation of trained single-layer weights.

At the unigram point the Hessian of the exact loss is zero outside the head
coordinates. The surviving block over (bias, head[, embedding]) has a closed
form driven by the positional encodings and the switching factor p + q:

    tied:    pi0*pi1 * [[1, u^T], [u, V]],
             V = sum_n p_n p_n^T / N + 2(p+q-1) I
    untied:  pi0*pi1 * [[1, u^T, 0], [u, V', (p+q-1) I], [0, (p+q-1) I, 0]],
             V' = sum_n p_n p_n^T / N

with u the mean positional encoding. Positive definiteness of the tied block
reduces, through the Schur complement, to 2(p+q-1) I + Cov({p_n}) > 0, so the
sign of p + q - 1 decides local minimum versus degenerate threshold, and the
untied block is always indefinite: pairing a head step -t*v with an embedding
step +v buys curvature t^2 v^T V' v - 2t(p+q-1)|v|^2 < 0 for small t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grad import loss_and_grad_exact, numerical_hessian
from .markov import MarkovKernel, stationary
from .model import ParamSet, forward, sigmoid

CURVATURE_FD_STEP = 1e-4


@dataclass
class AlphaHessian:
    matrix: np.ndarray  # (1+d, 1+d) tied or (1+2d, 1+2d) untied
    u: np.ndarray  # mean positional encoding
    second_moment: np.ndarray  # V (tied) or V' (untied)
    scale: float  # pi0 * pi1
    tied: bool

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def analytic_alpha_hessian(
    pos_encodings: np.ndarray, p: float, q: float, tied: bool
) -> AlphaHessian:
    """Closed-form head-block Hessian at the unigram point, in coordinates
    (bias, head) when tied and (bias, head, embedding) otherwise."""
    pos = np.asarray(pos_encodings, dtype=np.float64)
    n, d = pos.shape
    pi0, pi1 = stationary(MarkovKernel.binary(p, q))
    scale = float(pi0 * pi1)
    u = pos.mean(axis=0)
    vprime = pos.T @ pos / n
    c = p + q - 1.0
    if tied:
        v = vprime + 2.0 * c * np.eye(d)
        mat = np.zeros((1 + d, 1 + d))
        mat[0, 0] = 1.0
        mat[0, 1:] = u
        mat[1:, 0] = u
        mat[1:, 1:] = v
        return AlphaHessian(scale * mat, u, v, scale, tied=True)
    mat = np.zeros((1 + 2 * d, 1 + 2 * d))
    mat[0, 0] = 1.0
    mat[0, 1 : 1 + d] = u
    mat[1 : 1 + d, 0] = u
    mat[1 : 1 + d, 1 : 1 + d] = vprime
    cross = c * np.eye(d)
    mat[1 : 1 + d, 1 + d :] = cross
    mat[1 + d :, 1 : 1 + d] = cross
    return AlphaHessian(scale * mat, u, vprime, scale, tied=False)


def schur_gap(pos_encodings: np.ndarray, p: float, q: float) -> np.ndarray:
    """Schur complement V - u u^T = 2(p+q-1) I + Cov({p_n}) of the tied block;
    its minimum eigenvalue decides positive definiteness."""
    pos = np.asarray(pos_encodings, dtype=np.float64)
    n, d = pos.shape
    u = pos.mean(axis=0)
    centered = pos - u
    cov = centered.T @ centered / n
    return 2.0 * (p + q - 1.0) * np.eye(d) + cov


def directional_curvature(
    params: ParamSet,
    kernel: MarkovKernel,
    horizon: int,
    direction: np.ndarray,
    step: float = CURVATURE_FD_STEP,
) -> float:
    """Rayleigh quotient d^T H d / |d|^2 of the exact loss along `direction`,
    via a central difference of the exact gradient."""
    direction = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        raise ValueError("direction must be nonzero")
    unit = direction / norm
    base = params.flatten()
    g_hi = loss_and_grad_exact(params.with_flat(base + step * unit), kernel, horizon)[1]
    g_lo = loss_and_grad_exact(params.with_flat(base - step * unit), kernel, horizon)[1]
    return float(unit @ (g_hi - g_lo) / (2.0 * step))


def head_embedding_direction(params: ParamSet, v2: np.ndarray, t: float) -> np.ndarray:
    """Flat direction with head entries -t*v2 and embedding entries +v2."""
    if params.config.tied:
        raise ValueError("the head/embedding split needs an untied parameter set")
    delta = np.zeros(params.dim)
    slices = params.slices()
    delta[slices["head"]] = -t * v2
    delta[slices["emb"]] = v2
    return delta


def find_negative_curvature(
    params: ParamSet,
    kernel: MarkovKernel,
    horizon: int,
    t_start: float = 0.1,
    t_floor: float = 1e-4,
) -> tuple[np.ndarray, float]:
    """Unit direction of negative curvature at the untied unigram point.

    Tries the constructive head-vs-embedding family first (shrinking the
    mixing weight t until the measured curvature goes negative), then falls
    back to the minimum eigenvector of the dense numerical Hessian. Raises
    RuntimeError when no direction with negative curvature is found.
    """
    if params.config.tied:
        raise ValueError("negative-curvature search needs an untied parameter set")
    if not kernel.is_binary:
        raise ValueError("the constructive family is defined for binary kernels")
    if kernel.switching_factor <= 1.0:
        raise ValueError("the constructive family needs switching factor p + q > 1")

    pos = params.pos
    centered = pos - pos.mean(axis=0)
    cov = centered.T @ centered / pos.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    v2 = eigvecs[:, 0]  # least-covariance direction maximizes the negative term

    t = t_start
    while t >= t_floor:
        delta = head_embedding_direction(params, v2, t)
        unit = delta / np.linalg.norm(delta)
        curvature = directional_curvature(params, kernel, horizon, unit)
        if curvature < 0.0:
            return unit, curvature
        t *= 0.5

    report = numerical_hessian(params, kernel, horizon)
    curvature = report.min_eigenvalue
    if curvature < 0.0:
        vec = np.linalg.eigh(report.matrix)[1][:, 0]
        return vec, curvature
    raise RuntimeError("no direction of negative curvature found")


# -- interpretation of trained weights ------------------------------------------

@dataclass
class Rank1Fit:
    sign_vector: np.ndarray  # entries in {-1, +1}, length d
    emb_scale: float  # e
    pos_scale: float  # p
    ff_scale: float  # w1
    bias: float  # b
    positive_count: int  # beta, number of +1 rows in the FF sign factor

    def to_dict(self) -> dict:
        return {
            "sign_vector": self.sign_vector.astype(int).tolist(),
            "emb_scale": self.emb_scale,
            "pos_scale": self.pos_scale,
            "ff_scale": self.ff_scale,
            "bias": self.bias,
            "positive_count": self.positive_count,
        }


@dataclass
class InterpretationReport:
    attention_ratio: float
    positional_spread: float
    rank1: Rank1Fit
    formula_logits: tuple[float, float]  # (x_n = 1, x_n = 0)
    formula_probs: tuple[float, float]
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "attention_ratio": self.attention_ratio,
            "positional_spread": self.positional_spread,
            "rank1_fit": self.rank1.to_dict(),
            "formula_logits": list(self.formula_logits),
            "formula_probs": list(self.formula_probs),
            "degenerate": self.degenerate,
        }


def rank1_formula_logits(
    emb_scale: float,
    pos_scale: float,
    ff_scale: float,
    bias: float,
    positive_count: int,
    d: int,
    r: int,
) -> tuple[float, float]:
    """Skip-plus-rank-one-FF prediction logits for current token 1 and 0:

    logit(x) = e*d*(e*x + p) * (1 + w1^2*d*((2*beta - r)*x + r - beta)) + b
    """

    def logit(x: int) -> float:
        gain = 1.0 + ff_scale**2 * d * ((2 * positive_count - r) * x + r - positive_count)
        return emb_scale * d * (emb_scale * x + pos_scale) * gain + bias

    return logit(1), logit(0)


def _top_singular_rank1(mat: np.ndarray, iters: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Leading left/right singular directions of `mat` by power iteration."""
    left = np.zeros(mat.shape[0])
    right = np.ones(mat.shape[1]) / math.sqrt(mat.shape[1])
    for _ in range(iters):
        nxt = mat @ right
        ln = np.linalg.norm(nxt)
        if ln == 0.0:
            break
        left = nxt / ln
        right_next = mat.T @ left
        rn = np.linalg.norm(right_next)
        if rn == 0.0:
            break
        right = right_next / rn
    return left, right


def interpret(params: ParamSet, probe_batch: np.ndarray) -> InterpretationReport:
    """Summarize a trained binary single-layer model: attention contribution,
    positional homogeneity, the sign/scale rank-one fit of its weights, and the
    resulting closed-form prediction logits."""
    config = params.config
    if not config.is_binary or config.n_layers != 1:
        raise ValueError("interpretation targets binary single-layer models")
    probe = np.asarray(probe_batch, dtype=np.int64)
    if probe.ndim == 1:
        probe = probe[None, :]
    trace = forward(params, probe)
    lt = trace.layers[0]
    contribution = lt.y - lt.x_in
    y_norms = np.linalg.norm(lt.y, axis=-1)
    c_norms = np.linalg.norm(contribution, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(y_norms > 0, c_norms / y_norms, 0.0)
    attention_ratio = float(ratios.mean())

    pos = params.pos
    mean_pos = pos.mean(axis=0)
    deviations = np.linalg.norm(pos - mean_pos, axis=1)
    base = np.linalg.norm(mean_pos)
    if base > 1e-12:
        positional_spread = float(deviations.max() / base)
    else:
        positional_spread = 0.0 if deviations.max() <= 1e-12 else float("inf")

    emb = params.emb
    degenerate = bool(np.linalg.norm(emb) < 1e-12)
    v_sign = np.where(emb >= 0.0, 1.0, -1.0)
    emb_scale = float(np.abs(emb).mean())
    d = config.embed_dim
    pos_scale = float((pos @ v_sign).mean() / d)

    w1 = params.layer(0, "W_1")
    r = config.ff_dim
    left, right = _top_singular_rank1(w1)
    if right @ v_sign < 0.0:
        left, right = -left, -right
    w_sign = np.where(left >= 0.0, 1.0, -1.0)
    ff_scale = float(w1.ravel() @ np.outer(w_sign, v_sign).ravel() / (r * d))
    if ff_scale < 0.0:
        w_sign = -w_sign
        ff_scale = -ff_scale
    beta = int((w_sign > 0).sum())
    bias = float(params.bias[()])

    fit = Rank1Fit(v_sign, emb_scale, pos_scale, ff_scale, bias, beta)
    logits = rank1_formula_logits(emb_scale, pos_scale, ff_scale, bias, beta, d, r)
    probs = (float(sigmoid(np.array(logits[0]))), float(sigmoid(np.array(logits[1]))))
    return InterpretationReport(
        attention_ratio=attention_ratio,
        positional_spread=positional_spread,
        rank1=fit,
        formula_logits=logits,
        formula_probs=probs,
        degenerate=degenerate,
    )
