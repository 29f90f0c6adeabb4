"""Riemannian Adam over mixed Euclidean and hyperboloid-constrained
parameters, with step-decay learning-rate scheduling.

Euclidean tensors get textbook Adam.  Manifold tensors (rows are points)
get: Euclidean gradient -> Riemannian gradient, first moment in the tangent
space (parallel-transported to each new point), a frame-invariant scalar
second moment <g, g>_L per row, and the update applied through the
exponential map so the iterate never leaves the hyperboloid.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from lorentzgen import geometry as geo
from lorentzgen.autodiff import Tensor, riemannian_grad


class NumericalAbort(RuntimeError):
    """Raised when training hits a NaN; carries where it happened."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class StepLR:
    """Multiply the learning rate by gamma every ``step_size`` optimizer steps.

    With 0-based step indices, steps 0 .. step_size-1 run at the base rate
    and the step with index ``step_size`` is the first decayed one.
    """

    def __init__(self, step_size: int, gamma: float = 0.5):
        if step_size < 1:
            raise ValueError("step_size must be at least 1")
        self.step_size = step_size
        self.gamma = gamma

    def factor(self, step_index: int) -> float:
        return self.gamma ** (step_index // self.step_size)


class RiemannianAdam:
    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        scheduler: Optional[StepLR] = None,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.scheduler = scheduler
        self.steps_done = 0
        self._m: dict[int, np.ndarray] = {}
        self._u: dict[int, np.ndarray] = {}

    @property
    def current_lr(self) -> float:
        factor = self.scheduler.factor(self.steps_done) if self.scheduler else 1.0
        return self.lr * factor

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        lr_t = self.current_lr
        self.steps_done += 1
        t = self.steps_done
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NumericalAbort(f"non-finite gradient in parameter {p.name!r}", step=t)
            if p.manifold is None:
                self._euclidean_step(p, g, lr_t, bc1, bc2)
            else:
                self._manifold_step(p, g, lr_t, bc1, bc2)

    def _euclidean_step(self, p: Tensor, g: np.ndarray, lr_t: float, bc1: float, bc2: float) -> None:
        key = id(p)
        m = self._m.setdefault(key, np.zeros_like(p.data))
        u = self._u.setdefault(key, np.zeros_like(p.data))
        m[...] = self.beta1 * m + (1.0 - self.beta1) * g
        u[...] = self.beta2 * u + (1.0 - self.beta2) * g * g
        p.data = p.data - lr_t * (m / bc1) / (np.sqrt(u / bc2) + self.eps)

    def _manifold_step(self, p: Tensor, g: np.ndarray, lr_t: float, bc1: float, bc2: float) -> None:
        k = p.manifold.k
        shape = p.data.shape
        pts = p.data.reshape(-1, shape[-1])
        grads = g.reshape(-1, shape[-1])
        key = id(p)
        m = self._m.setdefault(key, np.zeros_like(pts))
        u = self._u.setdefault(key, np.zeros((pts.shape[0], 1)))

        rg = riemannian_grad(pts, grads, k)
        m[...] = self.beta1 * m + (1.0 - self.beta1) * rg
        gg = np.maximum(geo.minkowski_inner(rg, rg), 0.0)[:, None]
        u[...] = self.beta2 * u + (1.0 - self.beta2) * gg

        step_vec = -lr_t * (m / bc1) / (np.sqrt(u / bc2) + self.eps)
        new_pts = geo.exp_map_arr(pts, step_vec, k)
        # transport the first moment to the new point; re-project to kill
        # the accumulated rounding drift off the tangent space
        m[...] = geo.project_tangent(new_pts, geo.transport_arr(pts, new_pts, m, k), k)
        p.data = new_pts.reshape(shape)

    def momentum_of(self, p: Tensor) -> Optional[np.ndarray]:
        return self._m.get(id(p))
