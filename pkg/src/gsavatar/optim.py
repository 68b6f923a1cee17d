"""First-order optimization utilities used by every fitting stage."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Adam:
    """Adam on a flat parameter vector."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Return the parameter update (to be added) for this gradient."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        return -self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class FitReport:
    """Outcome of one optimization stage."""

    losses: list[float] = field(default_factory=list)
    best_loss: float = float("inf")
    iterations: int = 0
    converged: bool = False
    warnings: list[str] = field(default_factory=list)

    @property
    def best_so_far(self) -> list[float]:
        out, best = [], float("inf")
        for value in self.losses:
            best = min(best, value)
            out.append(best)
        return out


def minimize(
    loss_and_grad,
    x0: np.ndarray,
    lr: float,
    max_iter: int,
    patience: int = 100,
    tol: float = 1e-6,
) -> tuple[np.ndarray, FitReport]:
    """Adam descent with best-so-far tracking and early stopping.

    `loss_and_grad(x) -> (loss, grad)`. Stops when the best loss has not
    improved by more than `tol` over `patience` iterations. Returns the best
    parameters seen.
    """
    x = np.array(x0, dtype=np.float64)
    opt = Adam(x.size, lr)
    report = FitReport()
    best_x = x.copy()
    since_improve = 0
    for it in range(max_iter):
        loss, grad = loss_and_grad(x)
        report.losses.append(float(loss))
        report.iterations = it + 1
        if loss < report.best_loss - tol:
            since_improve = 0
        else:
            since_improve += 1
        if loss < report.best_loss:
            report.best_loss = float(loss)
            best_x = x.copy()
        if since_improve >= patience:
            report.converged = True
            break
        x = x + opt.step(np.asarray(grad, dtype=np.float64).ravel()).reshape(x.shape)
    if not report.converged:
        report.warnings.append("iteration cap reached before convergence")
    return best_x, report


def finite_difference(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += step
        xm.flat[i] -= step
        grad.flat[i] = (f(xp) - f(xm)) / (2.0 * step)
    return grad


def relative_gradient_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Scale-free gradient agreement: |a - n|_inf / max(|a|_inf, |n|_inf, 1e-12)."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    denom = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-12)
    return float(np.abs(a - n).max() / denom)
