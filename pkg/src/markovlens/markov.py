"""First-order Markov kernels: stationary laws, entropy quantities in nats,
seeded sampling, and exact enumeration of sequence probabilities.

Two kernel families are supported:
- binary P(p, q): flips 0->1 with probability p and 1->0 with probability q;
- symmetric S-state P(p, S): stays put with probability 1-p and moves to each
  of the other S-1 states with probability p/(S-1).

All logarithms are natural, so every entropy here is in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

ROW_SUM_TOL = 1e-12

# Hard cap on exact enumeration: S**N state sequences.
ENUMERATION_LIMIT = 2**24


class EnumerationTooLarge(ValueError):
    """Raised when S**N exceeds the exact-enumeration guard."""


@dataclass(frozen=True)
class MarkovKernel:
    """Transition kernel of a first-order chain, binary or symmetric.

    Use the `binary` / `symmetric` constructors; `q is None` marks the
    symmetric variant.
    """

    p: float
    q: float | None = None
    n_states: int = 2

    def __post_init__(self) -> None:
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.q is not None:
            if not 0.0 < self.q < 1.0:
                raise ValueError(f"q must lie in (0, 1), got {self.q}")
            if self.n_states != 2:
                raise ValueError("binary kernel requires n_states == 2")
        elif self.n_states < 2:
            raise ValueError(f"need at least 2 states, got {self.n_states}")
        rows = self.matrix.sum(axis=1)
        assert np.all(np.abs(rows - 1.0) <= ROW_SUM_TOL)

    @classmethod
    def binary(cls, p: float, q: float) -> "MarkovKernel":
        return cls(p=p, q=q, n_states=2)

    @classmethod
    def symmetric(cls, p: float, n_states: int) -> "MarkovKernel":
        return cls(p=p, q=None, n_states=n_states)

    @property
    def is_binary(self) -> bool:
        return self.q is not None

    @property
    def matrix(self) -> np.ndarray:
        """Row-stochastic transition matrix, shape (S, S)."""
        if self.is_binary:
            return np.array([[1.0 - self.p, self.p], [self.q, 1.0 - self.q]])
        s = self.n_states
        off = self.p / (s - 1)
        mat = np.full((s, s), off)
        np.fill_diagonal(mat, 1.0 - self.p)
        return mat

    @property
    def switching_factor(self) -> float:
        """p + q for binary kernels; the threshold quantity for local minima."""
        if not self.is_binary:
            raise ValueError("switching factor is defined for binary kernels")
        return self.p + self.q

    def label(self) -> str:
        if self.is_binary:
            return f"binary(p={self.p:.9g}, q={self.q:.9g})"
        return f"symmetric(p={self.p:.9g}, S={self.n_states})"


def binary_entropy(p: float) -> float:
    """h(p) = -p ln p - (1-p) ln(1-p) in nats."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"binary entropy needs p in (0, 1), got {p}")
    return -p * math.log(p) - (1.0 - p) * math.log(1.0 - p)


def stationary(kernel: MarkovKernel) -> np.ndarray:
    """Stationary distribution: (q, p)/(p+q) for binary, uniform for symmetric."""
    if kernel.is_binary:
        return np.array([kernel.q, kernel.p]) / (kernel.p + kernel.q)
    return np.full(kernel.n_states, 1.0 / kernel.n_states)


def entropy_rate(kernel: MarkovKernel) -> float:
    """Per-symbol conditional entropy H(x_{n+1} | x_n) in nats."""
    if kernel.is_binary:
        p, q = kernel.p, kernel.q
        return (q * binary_entropy(p) + p * binary_entropy(q)) / (p + q)
    return binary_entropy(kernel.p) + kernel.p * math.log(kernel.n_states - 1)


def marginal_entropy(kernel: MarkovKernel) -> float:
    """Entropy H(pi) of the stationary distribution in nats."""
    pi = stationary(kernel)
    return float(-(pi * np.log(pi)).sum())


def mutual_info_gap(kernel: MarkovKernel) -> float:
    """I(x_n; x_{n+1}) = H(pi) - H(x_{n+1}|x_n); zero iff consecutive symbols
    are independent (binary: p + q = 1)."""
    return marginal_entropy(kernel) - entropy_rate(kernel)


def kernel_row(kernel: MarkovKernel, state: int) -> np.ndarray:
    """Conditional law P(x_{n+1} = . | x_n = state)."""
    if not 0 <= state < kernel.n_states:
        raise ValueError(f"state {state} out of range for {kernel.n_states} states")
    return kernel.matrix[state]


def _generator(seed: int) -> np.random.Generator:
    # Philox is counter-based, so streams are identical across platforms.
    return np.random.Generator(np.random.Philox(key=seed))


def sample_batch(kernel: MarkovKernel, count: int, length: int, seed: int) -> np.ndarray:
    """Sample `count` chains of `length` tokens, x_1 drawn from the stationary law.

    Deterministic for a given seed. Returns an int64 array of shape (count, length).
    """
    if length < 1 or count < 1:
        raise ValueError("count and length must be >= 1")
    rng = _generator(seed)
    s = kernel.n_states
    u = rng.random((count, length))
    cum_pi = np.cumsum(stationary(kernel))
    cum_rows = np.cumsum(kernel.matrix, axis=1)
    x = np.empty((count, length), dtype=np.int64)
    x[:, 0] = np.minimum(np.searchsorted(cum_pi, u[:, 0], side="right"), s - 1)
    for n in range(1, length):
        nxt = (u[:, n : n + 1] > cum_rows[x[:, n - 1]]).sum(axis=1)
        x[:, n] = np.minimum(nxt, s - 1)
    return x


def sample_sequence(kernel: MarkovKernel, length: int, seed: int) -> np.ndarray:
    """Single stationary chain of `length` tokens; see sample_batch."""
    return sample_batch(kernel, 1, length, seed)[0]


def enumerate_all(kernel: MarkovKernel, length: int) -> tuple[np.ndarray, np.ndarray]:
    """All S**length sequences with their exact probabilities.

    Returns (tokens, probs) with tokens of shape (S**length, length) in
    lexicographic order and probs summing to 1. Probability of a sequence is
    pi(x_1) * prod_n P(x_n -> x_{n+1}).
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    s = kernel.n_states
    total = s**length
    if total > ENUMERATION_LIMIT:
        raise EnumerationTooLarge(
            f"S**N = {s}**{length} exceeds the enumeration guard {ENUMERATION_LIMIT}"
        )
    idx = np.arange(total)
    tokens = np.empty((total, length), dtype=np.int64)
    for n in range(length - 1, -1, -1):
        tokens[:, n] = idx % s
        idx //= s
    probs = stationary(kernel)[tokens[:, 0]].copy()
    mat = kernel.matrix
    for n in range(length - 1):
        probs *= mat[tokens[:, n], tokens[:, n + 1]]
    return tokens, probs


def enumerate_weighted_sequences(
    kernel: MarkovKernel, length: int
) -> Iterator[tuple[np.ndarray, float]]:
    """Stream of (sequence, probability) pairs over all S**length sequences."""
    tokens, probs = enumerate_all(kernel, length)
    for row, w in zip(tokens, probs):
        yield row, float(w)
