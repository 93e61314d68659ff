"""Federated learning side on strongly convex tasks.

Ridge regression is the reference task: its smoothness and strong-convexity
constants and optimal loss are exact, so the convergence bound can be checked
to floating-point precision. L2-regularized logistic regression is supported
with a bounded (not tight) smoothness constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_REG = 1e-3


@dataclass(frozen=True)
class DeviceData:
    X: np.ndarray
    y: np.ndarray

    @property
    def beta(self) -> int:
        return int(self.X.shape[0])


@dataclass(frozen=True)
class Task:
    """Loss family and data; ``reg`` is the L2 coefficient applied to every sample loss."""

    kind: str
    data: tuple
    reg: float

    def __post_init__(self):
        if self.kind not in ("ridge", "logistic"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.reg < 0:
            raise ValueError("reg must be >= 0")

    @property
    def betas(self) -> np.ndarray:
        return np.array([d.beta for d in self.data])

    @property
    def dim(self) -> int:
        return int(self.data[0].X.shape[1])

    def stacked(self) -> DeviceData:
        return DeviceData(
            X=np.concatenate([d.X for d in self.data]), y=np.concatenate([d.y for d in self.data])
        )


@dataclass(frozen=True)
class LearnerConstants:
    L: float
    mu: float
    F_star: float
    w_star: np.ndarray
    rho: float = float("nan")


def split_counts(factors, total: int) -> list[int]:
    """Largest-remainder split of ``total`` proportional to ``factors``; every share >= 1."""
    factors = np.asarray(factors, dtype=float)
    n = len(factors)
    if total < n:
        raise ValueError(f"need at least one sample per device ({total} < {n})")
    # one guaranteed sample each, the rest split proportionally
    exact = factors / factors.sum() * total
    counts = np.maximum(np.floor(exact).astype(int), 1)
    while counts.sum() > total:
        counts[np.argmax(counts)] -= 1
    remainder = exact - np.floor(exact)
    for i in sorted(range(n), key=lambda i: (-remainder[i], i))[: total - counts.sum()]:
        counts[i] += 1
    return [int(c) for c in counts]


def partition_data(
    rng: np.random.Generator,
    num_devices: int,
    total_samples: int,
    dim: int,
    kind: str = "ridge",
    noise: float = 0.5,
):
    """Imbalanced IID split: device n gets a share c_n / sum(c) with c_n ~ U[1, 10].

    Features are standard normal; labels come from one ground-truth linear model
    (plus Gaussian noise for ridge, Bernoulli-logistic for classification).
    Returns ``(datasets, w_true)``.
    """
    factors = rng.uniform(1.0, 10.0, size=num_devices)
    counts = split_counts(factors, total_samples)
    w_true = rng.standard_normal(dim)
    X = rng.standard_normal((total_samples, dim))
    z = X @ w_true
    if kind == "ridge":
        y = z + noise * rng.standard_normal(total_samples)
    elif kind == "logistic":
        y = np.where(rng.random(total_samples) < 1.0 / (1.0 + np.exp(-z)), 1.0, -1.0)
    else:
        raise ValueError(f"unknown task kind {kind!r}")
    bounds = np.cumsum([0] + counts)
    data = tuple(DeviceData(X=X[a:b], y=y[a:b]) for a, b in zip(bounds[:-1], bounds[1:]))
    return data, w_true


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sample_losses(task: Task, w, data: DeviceData) -> np.ndarray:
    z = data.X @ w
    if task.kind == "ridge":
        base = 0.5 * (z - data.y) ** 2
    else:
        base = np.logaddexp(0.0, -data.y * z)
    return base + 0.5 * task.reg * float(w @ w)


def sample_gradients(task: Task, w, data: DeviceData) -> np.ndarray:
    """Per-sample gradients, shape (beta, dim)."""
    z = data.X @ w
    if task.kind == "ridge":
        coef = z - data.y
    else:
        coef = -data.y * _sigmoid(-data.y * z)
    return data.X * coef[:, None] + task.reg * w[None, :]


def local_loss(task: Task, w, data: DeviceData) -> float:
    return float(np.mean(sample_losses(task, w, data)))


def global_loss(task: Task, w) -> float:
    total = sum(float(np.sum(sample_losses(task, w, d))) for d in task.data)
    return total / float(task.betas.sum())


def local_gradient(task: Task, w, data: DeviceData) -> np.ndarray:
    z = data.X @ w
    if task.kind == "ridge":
        coef = z - data.y
    else:
        coef = -data.y * _sigmoid(-data.y * z)
    return data.X.T @ coef / data.beta + task.reg * w


def global_gradient(task: Task, w) -> np.ndarray:
    betas = task.betas
    return sum(b * local_gradient(task, w, d) for b, d in zip(betas, task.data)) / betas.sum()


def local_update(task: Task, w, data: DeviceData, lr: float) -> np.ndarray:
    """One full-batch gradient step on the device's data."""
    if lr <= 0:
        raise ValueError("learning rate must be > 0")
    return w - lr * local_gradient(task, w, data)


def aggregate(local_models, betas, mask, previous=None):
    """Data-size-weighted average over participating devices.

    With no participant the ``previous`` global model is returned unchanged.
    """
    mask = np.asarray(mask, dtype=bool)
    betas = np.asarray(betas, dtype=float)
    if not mask.any():
        if previous is None:
            raise ValueError("no participant and no previous model to carry over")
        return np.array(previous, dtype=float, copy=True)
    weights = betas[mask]
    stacked = np.stack([np.asarray(m, dtype=float) for m, ok in zip(local_models, mask) if ok])
    return weights @ stacked / weights.sum()


def fedavg_round(task: Task, w, mask, lr: float) -> np.ndarray:
    """Local step on every participant followed by aggregation."""
    mask = np.asarray(mask, dtype=bool)
    local = [local_update(task, w, d, lr) if ok else None for d, ok in zip(task.data, mask)]
    return aggregate(local, task.betas, mask, previous=w)


def _logistic_optimum(task: Task, stacked: DeviceData, w0=None, tol=1e-13, max_iter=100):
    """Damped Newton on the (strongly convex) regularized logistic loss."""
    w = np.zeros(task.dim) if w0 is None else np.array(w0, dtype=float)
    M = stacked.X.shape[0]
    for _ in range(max_iter):
        z = stacked.X @ w
        s = _sigmoid(-stacked.y * z)
        grad = stacked.X.T @ (-stacked.y * s) / M + task.reg * w
        if np.linalg.norm(grad) < tol:
            break
        hess = (stacked.X.T * (s * (1 - s))) @ stacked.X / M + task.reg * np.eye(task.dim)
        step = np.linalg.solve(hess, grad)
        f0 = global_loss(task, w)
        t = 1.0
        while global_loss(task, w - t * step) > f0 - 0.25 * t * (grad @ step) and t > 1e-12:
            t *= 0.5
        w = w - t * step
    return w


def learner_constants(task: Task) -> LearnerConstants:
    """Smoothness, strong convexity and optimum of the global loss.

    ``rho`` is left unset; it is certified along a trajectory by :func:`certify_rho`.
    """
    if task.reg < MIN_REG:
        raise ValueError(f"reg must be >= {MIN_REG} for a usable strong-convexity constant")
    stacked = task.stacked()
    M = stacked.X.shape[0]
    gram = stacked.X.T @ stacked.X / M
    eig = np.linalg.eigvalsh(gram)
    if task.kind == "ridge":
        L = float(eig[-1] + task.reg)
        mu = float(eig[0] + task.reg)
        w_star = np.linalg.solve(gram + task.reg * np.eye(task.dim), stacked.X.T @ stacked.y / M)
    else:
        L = float(eig[-1] / 4.0 + task.reg)
        mu = float(task.reg)
        w_star = _logistic_optimum(task, stacked)
    return LearnerConstants(L=L, mu=mu, F_star=global_loss(task, w_star), w_star=w_star)


def gradient_ratio(task: Task, w) -> float:
    """max_i ||grad l_i(w)||^2 / ||grad F(w)||^2 at one model."""
    g = global_gradient(task, w)
    denom = float(g @ g)
    top = max(float(np.max(np.sum(sample_gradients(task, w, d) ** 2, axis=1))) for d in task.data)
    if denom == 0.0:
        return float("inf") if top > 0 else 0.0
    return top / denom


def certify_rho(task: Task, models) -> float:
    """Smallest rho for which the per-sample gradient assumption holds on every model given."""
    return max(gradient_ratio(task, w) for w in models)


def convergence_bound(grad_sq, masks, betas, constants: LearnerConstants, delta1: float) -> np.ndarray:
    """Upper bound on F(w^(t+1)) - F* for t = 0..T.

    ``grad_sq[i-1]`` is ||grad F(w^(i))||^2 and ``masks[i-1]`` the participation
    mask of round i, for i = 1..T. The selection term is summed directly.
    """
    grad_sq = np.asarray(grad_sq, dtype=float)
    masks = np.asarray(masks, dtype=float).reshape(len(grad_sq), -1)
    betas = np.asarray(betas, dtype=float)
    q = 1.0 - constants.mu / constants.L
    missing = (betas[None, :] * (1.0 - masks)).sum(axis=1)
    per_round = 2.0 * constants.rho / constants.L * grad_sq / betas.sum() * missing
    T = len(grad_sq)
    out = np.empty(T + 1)
    for t in range(T + 1):
        acc = 0.0
        for i in range(1, t + 1):
            acc += q ** (t - i) * per_round[i - 1]
        out[t] = q**t * delta1 + acc
    return out
