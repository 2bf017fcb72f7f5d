"""Iterative hard thresholding family.

One loop covers four methods, picked by two switches:

==================  =============  ==========
method              projection     batching
==================  =============  ==========
GraphStoIHT         graph          stochastic
GraphIHT            graph          full
StoIHT              top_s          stochastic
IHT                 top_s          full
==================  =============  ==========

Each iteration takes the gradient of one block (or all rows), keeps its head
projection (graph mode) or all of it (top-s mode), steps, and projects the
result with the tail projection (graph mode) or onto the ``s`` largest
entries.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, WgmParams
from .losses import (FULL, BlockPartition, Instance, LogisticParams, LossError,
                     logistic_value_grad, lsq_value_grad)
from .projections import (ProjectionConfig, head_projection, tail_projection,
                          top_s_projection)

ARMIJO = "armijo"

METHODS = {
    ("graph", "stochastic"): "GraphStoIHT",
    ("graph", "full"): "GraphIHT",
    ("top_s", "stochastic"): "StoIHT",
    ("top_s", "full"): "IHT",
}


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Method switches, step size and stopping rules.

    ``gradient_scale`` controls how a block gradient becomes a step
    direction: ``"sum"`` multiplies the (row-averaged) block gradient by the
    block size, giving ``A_B^T (A_B x - y_B)``, which is what a unit step
    size expects when the design columns have unit expected norm.
    ``"mean"`` uses the averaged gradient as is.  ``None`` picks ``"sum"``
    for least squares and ``"mean"`` for the logistic loss.
    """

    wgm: WgmParams
    projection: str = "graph"
    batching: str = "stochastic"
    learning_rate: float | str = 1.0
    block_size: int = 1
    max_epochs: int = 500
    residual_tol: float = 1e-7
    seed: int = 0
    head_config: ProjectionConfig | None = None
    tail_config: ProjectionConfig | None = None
    iid_sampling: bool = False
    gradient_scale: str | None = None
    divergence_bound: float = 1e3
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    armijo_eta0: float = 1.0
    armijo_max_iters: int = 20
    record_supports: bool = False
    # stop once the best residual has not improved by stall_rtol over this
    # many epochs; 0 disables.  Useful with noise, where the residual rule
    # can never fire.
    stall_epochs: int = 0
    stall_rtol: float = 0.01

    def __post_init__(self):
        if (self.projection, self.batching) not in METHODS:
            raise SolverError(f"unknown method ({self.projection}, {self.batching})")
        lr = self.learning_rate
        if isinstance(lr, str):
            if lr != ARMIJO:
                raise SolverError(f"learning_rate must be positive or {ARMIJO!r}, got {lr!r}")
        elif not lr > 0:
            raise SolverError(f"learning_rate must be positive, got {lr}")
        if self.block_size < 1 or self.max_epochs < 1:
            raise SolverError("block_size and max_epochs must be positive")
        if not self.residual_tol >= 0:
            raise SolverError("residual_tol must be nonnegative")
        if self.gradient_scale not in (None, "sum", "mean"):
            raise SolverError(f"gradient_scale must be 'sum' or 'mean', got {self.gradient_scale!r}")

    @property
    def method(self) -> str:
        return METHODS[(self.projection, self.batching)]


@dataclass
class SolveTrace:
    """What happened during one solve.

    ``errors`` and ``residuals`` hold one value per epoch, measured after
    the epoch's last iteration.  ``iter_errors`` has one entry per iteration.
    """

    final_x: np.ndarray
    errors: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    iter_errors: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    supports: list = field(default_factory=list)
    epochs_run: int = 0
    iterations: int = 0
    termination: str = "epoch_cap"

    @property
    def final_error(self) -> float:
        return self.errors[-1] if self.errors else float("nan")


def armijo_line_search(f, x, grad, d, shrink: float = 0.5, slope: float = 1e-4,
                       eta0: float = 1.0, max_iters: int = 20) -> float:
    """Largest ``eta0 * shrink**k`` giving sufficient decrease along ``d``.

    ``f`` maps a point to the objective value.  Falls back to
    ``eta0 * shrink**max_iters`` when no trial step qualifies.
    """
    if not 0 < shrink < 1 or not 0 < slope < 1 or not eta0 > 0 or max_iters < 1:
        raise SolverError("bad line-search parameters")
    gd = float(np.dot(grad, d))
    if not gd < 0:
        raise SolverError(f"not a descent direction: <grad, d> = {gd}")
    fx = f(x)
    eta = eta0
    for _ in range(max_iters):
        if f(x + eta * d) <= fx + slope * eta * gd:
            return eta
        eta *= shrink
    return eta


def _loss_fn(loss: str, inst: Instance, part: BlockPartition, params):
    if loss == "lsq":
        return lambda block, x: lsq_value_grad(inst, part, block, x)
    if loss == "logistic":
        params = params or LogisticParams()
        return lambda block, x: logistic_value_grad(inst, part, block, x, params)
    raise SolverError(f"unknown loss {loss!r}")


def default_projection_configs(config: SolverConfig, p: int):
    head = config.head_config or ProjectionConfig.head(p, config.wgm)
    tail = config.tail_config or ProjectionConfig.tail(config.wgm)
    return head, tail


def solve(inst: Instance, loss: str, config: SolverConfig, graph: Graph | None = None,
          logistic: LogisticParams | None = None) -> SolveTrace:
    """Run one method from ``x = 0`` until the residual or epoch rule fires."""
    if config.projection == "graph":
        if graph is None:
            raise SolverError("graph projection needs a graph")
        if graph.num_nodes != inst.p:
            raise SolverError(f"graph has {graph.num_nodes} nodes, design has {inst.p} columns")
    if config.batching == "stochastic":
        if config.block_size > inst.m:
            raise SolverError(f"block size {config.block_size} exceeds m={inst.m}")
        part = BlockPartition.contiguous(inst.m, config.block_size)
    else:
        part = BlockPartition.single(inst.m)
    fn = _loss_fn(loss, inst, part, logistic)
    scale_mode = config.gradient_scale or ("sum" if loss == "lsq" else "mean")
    head_cfg, tail_cfg = default_projection_configs(config, inst.p)
    s = config.wgm.s
    # the residual rule is only meaningful for the linear model
    use_residual = loss == "lsq"

    rng = np.random.default_rng(config.seed)
    x = np.zeros(inst.p)
    trace = SolveTrace(final_x=x)
    n = part.n

    def error(v):
        return float(np.linalg.norm(v - inst.x_star)) if inst.x_star is not None else float("nan")

    for epoch in range(config.max_epochs):
        if config.iid_sampling:
            order = rng.integers(n, size=n)
        else:
            order = rng.permutation(n)
        stop = None
        for i in order:
            block = FULL if config.batching == "full" else int(i)
            _, grad = fn(block, x)
            step = grad * len(part.rows(block)) if scale_mode == "sum" else grad
            if config.projection == "graph":
                direction = head_projection(step, graph, head_cfg).vector
            else:
                direction = step
            if config.learning_rate == ARMIJO:
                if not np.any(direction):
                    eta = 0.0
                else:
                    eta = armijo_line_search(
                        lambda v: fn(block, v)[0], x, grad, -direction,
                        config.armijo_shrink, config.armijo_slope,
                        config.armijo_eta0, config.armijo_max_iters)
            else:
                eta = config.learning_rate
            z = x - eta * direction
            if config.projection == "graph":
                proj = tail_projection(z, graph, tail_cfg)
            else:
                proj = top_s_projection(z, s)
            x = proj.vector
            trace.iterations += 1
            trace.step_sizes.append(eta)
            trace.iter_errors.append(error(x))
            if config.record_supports:
                trace.supports.append(proj.support)
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) >= config.divergence_bound:
                stop = "diverged"
                break
            if use_residual and np.linalg.norm(inst.A @ x - inst.y) <= config.residual_tol:
                stop = "converged"
                break
        trace.epochs_run = epoch + 1
        trace.errors.append(error(x))
        trace.residuals.append(float(np.linalg.norm(inst.A @ x - inst.y)))
        k = config.stall_epochs
        if not stop and use_residual and k and len(trace.residuals) > k:
            before = min(trace.residuals[:-k])
            if min(trace.residuals[-k:]) > (1 - config.stall_rtol) * before:
                stop = "stalled"
        if stop:
            trace.termination = stop
            break
    trace.final_x = x
    return trace
