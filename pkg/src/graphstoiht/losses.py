"""Block-partitioned losses and the contraction-factor calculators.

Rows of the design are split into ``n`` contiguous blocks ``B_1..B_n``.  The
block losses are averages over the block's rows, so the plain mean of the
``n`` block losses (and gradients) is the full loss (and gradient).

Least squares::

    f_i(x) = ||A_B x - y_B||^2 / (2 b_i)

Logistic with ridge term::

    f_i(x) = mean_j log(1 + exp(-y_j a_j.x)) + lam/2 ||x||^2
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FULL = -1
MU_THRESHOLD = 243 / 250


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class Instance:
    """Design ``A`` (m x p), targets ``y`` and optionally the truth and noise."""

    A: np.ndarray
    y: np.ndarray
    x_star: np.ndarray | None = None
    noise: np.ndarray | None = None
    classification: bool = False

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if A.shape[0] != len(y):
            raise LossError(f"design has {A.shape[0]} rows but y has {len(y)} entries")
        if self.x_star is not None:
            xs = np.asarray(self.x_star, dtype=np.float64).reshape(-1)
            if len(xs) != A.shape[1]:
                raise LossError(f"x_star length {len(xs)} != {A.shape[1]} columns")
            object.__setattr__(self, "x_star", xs)
        if self.noise is not None:
            eps = np.asarray(self.noise, dtype=np.float64).reshape(-1)
            if len(eps) != len(y):
                raise LossError("noise length differs from y")
            object.__setattr__(self, "noise", eps)
        if self.classification and not np.all(np.abs(y) == 1):
            bad = int(np.flatnonzero(np.abs(y) != 1)[0])
            raise LossError(f"label {y[bad]!r} at row {bad} is not +1 or -1")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint row blocks covering ``range(m)``."""

    blocks: tuple

    @classmethod
    def contiguous(cls, m: int, block_size: int) -> "BlockPartition":
        """``max(1, m // block_size)`` contiguous blocks whose sizes differ by at most one."""
        if block_size < 1 or m < 1:
            raise LossError(f"need m >= 1 and block_size >= 1, got {m}, {block_size}")
        n = max(1, m // block_size)
        return cls(tuple(np.array_split(np.arange(m), n)))

    @classmethod
    def single(cls, m: int) -> "BlockPartition":
        return cls((np.arange(m),))

    @property
    def n(self) -> int:
        return len(self.blocks)

    @property
    def m(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def b(self) -> float:
        return self.m / self.n

    def rows(self, block: int) -> np.ndarray:
        if block == FULL:
            return np.arange(self.m)
        if not 0 <= block < self.n:
            raise LossError(f"block {block} out of range for {self.n} blocks")
        return self.blocks[block]

    def row_weights(self) -> np.ndarray:
        """Per-row weight ``1 / (n b_i)``; sums to one over all rows."""
        w = np.empty(self.m)
        for rows in self.blocks:
            w[rows] = 1.0 / (self.n * len(rows))
        return w


def _block_data(inst: Instance, part: BlockPartition, block: int):
    if part.m != inst.m:
        raise LossError(f"partition covers {part.m} rows, instance has {inst.m}")
    if block == FULL:
        return inst.A, inst.y, part.row_weights()
    rows = part.rows(block)
    return inst.A[rows], inst.y[rows], np.full(len(rows), 1.0 / len(rows))


def lsq_value_grad(inst: Instance, part: BlockPartition, block: int, x: np.ndarray):
    """Least-squares block loss and gradient; ``block=FULL`` gives the block average."""
    A, y, w = _block_data(inst, part, block)
    r = A @ x - y
    return 0.5 * float(np.dot(w, r * r)), A.T @ (w * r)


@dataclass(frozen=True)
class LogisticParams:
    lam: float = 0.0
    nu: float = 1.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise LossError(f"lambda must be nonnegative, got {self.lam}")
        if not self.nu >= 1:
            raise LossError(f"nu must be at least 1, got {self.nu}")


def _sigmoid(z):
    # 1 / (1 + exp(-z)) without overflow
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def logistic_value_grad(inst: Instance, part: BlockPartition, block: int,
                        x: np.ndarray, params: LogisticParams):
    A, y, w = _block_data(inst, part, block)
    if not np.all(np.abs(y) == 1):
        raise LossError("logistic loss needs labels in {-1, +1}")
    margin = y * (A @ x)
    value = float(np.dot(w, np.logaddexp(0.0, -margin)))
    coef = -y * _sigmoid(-margin)
    grad = A.T @ (w * coef)
    if params.lam:
        value += 0.5 * params.lam * float(np.dot(x, x))
        grad = grad + params.lam * x
    return value, grad


def theta_max(inst: Instance, part: BlockPartition, block: int,
              max_iters: int = 1000, rtol: float = 1e-9) -> float:
    """Largest eigenvalue of ``A_B^T A_B`` by power iteration from the all-ones vector."""
    A = inst.A[part.rows(block)]
    v = np.ones(A.shape[1]) / math.sqrt(A.shape[1])
    lam = 0.0
    for _ in range(max_iters):
        w = A.T @ (A @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= rtol * new:
            return new
        lam = new
    return lam


def logistic_condition(params: LogisticParams, theta: float, m: int, n: int):
    """Inverse condition number ``mu`` of the stochastic logistic problem and whether it clears 243/250."""
    spread = n * (1 + params.nu) * theta / (4 * m)
    denom = params.lam + spread
    if denom == 0:
        raise LossError("lambda and theta_max are both zero")
    mu = params.lam / denom
    return mu, mu >= MU_THRESHOLD


@dataclass(frozen=True)
class ContractionQuery:
    """Strong convexity ``alpha``, smoothness ``beta`` and projection factors."""

    alpha: float
    beta: float
    c_H: float = 1.0
    c_T: float = 1.0
    eta: float | None = None
    tau: float | None = None

    def __post_init__(self):
        # alpha = 0 is allowed so the limit form can be evaluated at mu = 0
        if not (0 <= self.alpha <= self.beta and self.beta > 0):
            raise LossError(f"need 0 <= alpha <= beta, beta > 0, got {self.alpha}, {self.beta}")
        if not 0 < self.c_H <= 1:
            raise LossError(f"c_H must lie in (0, 1], got {self.c_H}")
        if not self.c_T >= 1:
            raise LossError(f"c_T must be at least 1, got {self.c_T}")

    @classmethod
    def from_delta(cls, delta: float, **kw) -> "ContractionQuery":
        """Least-squares constants ``alpha = 1 - delta``, ``beta = 1 + delta``."""
        return cls(1.0 - delta, 1.0 + delta, **kw)

    @classmethod
    def from_mu(cls, mu: float, **kw) -> "ContractionQuery":
        return cls(mu, 1.0, **kw)

    @property
    def mu(self) -> float:
        return self.alpha / self.beta

    @property
    def delta(self) -> float:
        return (self.beta - self.alpha) / (self.beta + self.alpha)

    @property
    def alpha0(self) -> float:
        a, b, t = self.alpha, self.beta, self._tau()
        return self.c_H * a * t - math.sqrt(max(a * b * t * t - 2 * a * t + 1, 0.0))

    @property
    def beta0(self) -> float:
        return (1 + self.c_H) * self._tau()

    def best_tau(self) -> float:
        """Maximizer of ``alpha0`` over ``tau``."""
        a, b, c = self.alpha, self.beta, self.c_H
        if b == a * c * c:
            return 2.0 / b
        return (1 + c * math.sqrt((b - a) / (b - c * c * a))) / b

    def _tau(self) -> float:
        if self.tau is None:
            raise LossError("tau is not set")
        return self.tau


def contraction_factor(q: ContractionQuery, variant: str = "general") -> float:
    c = 1.0 + q.c_T
    if variant == "general":
        bound = 2.0 / q.beta
        for name, v in (("eta", q.eta), ("tau", q.tau)):
            if v is None or not 0 < v < bound:
                raise LossError(f"{name}={v} must lie in (0, 2/beta) = (0, {bound})")
        a, b, eta = q.alpha, q.beta, q.eta
        step = math.sqrt(max(a * b * eta * eta - 2 * a * eta + 1, 0.0))
        return c * (step + math.sqrt(max(1.0 - q.alpha0 ** 2, 0.0)))
    if variant == "limit":
        mu = q.mu
        return c * (1 + 2 * math.sqrt(mu)) * math.sqrt(1 - mu)
    d = q.delta
    if variant == "table1_batch":
        return c * (math.sqrt(d) + 2 * math.sqrt(1 - d)) * math.sqrt(d)
    if variant == "table1_sto":
        return c * (math.sqrt(2 / (1 + d)) + 2 * math.sqrt(2 * (1 - d)) / (1 + d)) * math.sqrt(d)
    raise LossError(f"unknown variant {variant!r}")
