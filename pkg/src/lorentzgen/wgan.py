"""Adversarial training on the hyperboloid with a geodesic gradient penalty.

Generator and critic are stacks of hyperbolic linear layers; the critic
ends in a one-output centroid-distance head.  The penalty enforces
unit-Lorentz-norm Riemannian critic gradients at points sampled uniformly
along the geodesic between generated and data points.  The input gradient
of the critic is assembled from forward-mode tangents (one per ambient
coordinate), which keeps the whole penalty an ordinary reverse-mode graph
in the critic parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from lorentzgen import autodiff as ad
from lorentzgen import geometry as geo
from lorentzgen import layers as ly
from lorentzgen.autodiff import Tensor, backward, constant
from lorentzgen.geometry import Curvature, DEFAULT_CURVATURE
from lorentzgen.optim import NumericalAbort, RiemannianAdam


@dataclass
class GanConfig:
    latent_dim: int
    hidden_dim: int
    depth_gen: int
    depth_critic: int
    output_dim: int
    gp_weight: float = 10.0
    n_critic: int = 5
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    batch_size: int = 128
    epochs: int = 20
    seed: int = 0
    dropout: float = 0.0
    log_scale_init: float = 0.0  # range-scale init; raise when the data
    # radius exceeds the unit reach of freshly initialized layers

    def __post_init__(self) -> None:
        dims = (self.latent_dim, self.hidden_dim, self.depth_gen, self.depth_critic, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError("all dimensions and depths must be >= 1")
        if self.gp_weight < 0:
            raise ValueError("gradient penalty weight must be nonnegative")


class LayerStack:
    """A chain of hyperbolic linear layers L^{d0} -> ... -> L^{dn}."""

    def __init__(self, dims, curvature, *, dropout=0.0, fused=True, log_scale_init=0.0, rng=None, name="stack"):
        self.layers = [
            ly.LorentzLinear(
                dims[i], dims[i + 1], curvature,
                dropout=dropout, fused=fused, log_scale_init=log_scale_init, rng=rng, name=f"{name}.{i}",
            )
            for i in range(len(dims) - 1)
        ]

    def forward(self, x: Tensor, *, train: bool = False, rng=None) -> Tensor:
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def named_parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.named_parameters()]


class Critic:
    """Hyperbolic linear stack followed by a scalar centroid-distance head.

    Built from compositional (non-fused) layers: the gradient penalty
    differentiates the critic's input gradient, which requires every op on
    the score path to carry a forward-mode rule.
    """

    def __init__(self, in_dim, hidden_dim, depth, curvature, *, dropout=0.0, log_scale_init=0.0, rng=None, name="critic"):
        dims = [in_dim] + [hidden_dim] * depth
        self.stack = LayerStack(
            dims, curvature, dropout=dropout, fused=False, log_scale_init=log_scale_init, rng=rng, name=f"{name}.stack"
        )
        self.head = ly.CentroidDistance(hidden_dim, 1, curvature, fused=False, rng=rng, name=f"{name}.head")

    def score(self, x: Tensor, *, train: bool = False, rng=None) -> Tensor:
        return self.head.forward(self.stack.forward(x, train=train, rng=rng))

    def named_parameters(self) -> list[Tensor]:
        return self.stack.named_parameters() + self.head.named_parameters()


@dataclass
class GanModel:
    generator: LayerStack
    critic: Critic
    curvature: Curvature

    def named_parameters(self) -> list[Tensor]:
        return self.generator.named_parameters() + self.critic.named_parameters()


def build_gan(config: GanConfig, curvature: Curvature = DEFAULT_CURVATURE, rng=None) -> GanModel:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    gen_dims = [config.latent_dim] + [config.hidden_dim] * (config.depth_gen - 1) + [config.output_dim]
    generator = LayerStack(
        gen_dims, curvature,
        dropout=config.dropout, log_scale_init=config.log_scale_init, rng=rng, name="generator",
    )
    critic = Critic(
        config.output_dim, config.hidden_dim, config.depth_critic, curvature,
        dropout=config.dropout, log_scale_init=config.log_scale_init, rng=rng, name="critic",
    )
    return GanModel(generator, critic, curvature)


def sample_noise(batch: int, latent_dim: int, rng: np.random.Generator, curvature: Curvature) -> np.ndarray:
    """Wrapped normal at the origin with identity covariance."""
    return geo.wrapped_normal_arr(rng, batch, geo.origin(latent_dim, curvature.k), np.ones(latent_dim), curvature.k)


def riemannian_grad_rows(euclid_grad: Tensor, at_points: np.ndarray, curvature: Curvature) -> Tensor:
    """Graph version of the Euclidean-to-Riemannian gradient conversion.

    ``at_points`` are constants (the interpolated batch); the gradient rows
    stay differentiable in whatever parameters they came from.
    """
    x = constant(at_points)
    h = ad.lorentz_metric(euclid_grad)
    ip = ad.lorentz_inner_rows(x, h)
    return ad.add(h, ad.mul_cols(x, ad.scale(ip, -curvature.k)))


def input_gradient(score_fn: Callable[[Tensor], Tensor], points: np.ndarray) -> Tensor:
    """Euclidean gradient of a scalar-per-row score at fixed input points.

    One forward-mode tangent per ambient coordinate, stacked columnwise.
    The result is a graph expression, so training can differentiate it with
    respect to the score function's parameters.
    """
    x = constant(points)
    out = score_fn(x)
    if out.data.shape != (points.shape[0], 1):
        raise ad.ShapeError(f"score must be (B, 1), got {out.data.shape}")
    cols = []
    zeros = None
    for j in range(points.shape[1]):
        seed = np.zeros_like(points)
        seed[:, j] = 1.0
        tangent = ad.jvp(out, x, seed)
        if tangent is None:
            zeros = zeros if zeros is not None else constant(np.zeros((points.shape[0], 1)))
            tangent = zeros
        cols.append(tangent)
    return ad.hstack(cols)


def gradient_penalty(
    score_fn: Callable[[Tensor], Tensor],
    real: np.ndarray,
    fake: np.ndarray,
    rng: np.random.Generator,
    curvature: Curvature = DEFAULT_CURVATURE,
) -> Tensor:
    """mean((||grad D(x_hat)||_L - 1)^2) at geodesic interpolants.

    x_hat = geodesic(fake -> real) at a uniform parameter per pair; the
    interpolant is treated as a constant sample.  Coincident pairs simply
    yield the common point.
    """
    if real.shape != fake.shape:
        raise ValueError(f"real and fake batches must match, got {real.shape} vs {fake.shape}")
    t = rng.uniform(size=(real.shape[0], 1))
    x_hat = geo.exp_map_arr(fake, t * geo.log_map_arr(fake, real, curvature.k), curvature.k)
    egrad = input_gradient(score_fn, x_hat)
    rgrad = riemannian_grad_rows(egrad, x_hat, curvature)
    nrm = ad.sqrt(ad.clamp_min(ad.lorentz_inner_rows(rgrad, rgrad), 0.0))
    return ad.mean_all(ad.square(ad.add_const(nrm, -1.0)))


def critic_loss(
    critic_score: Callable[[Tensor], Tensor],
    real: np.ndarray,
    fake: np.ndarray,
    gp_weight: float,
    rng: np.random.Generator,
    curvature: Curvature = DEFAULT_CURVATURE,
) -> tuple[Tensor, Tensor]:
    """Wasserstein critic objective with gradient penalty; returns (loss, penalty)."""
    d_fake = ad.mean_all(critic_score(constant(fake)))
    d_real = ad.mean_all(critic_score(constant(real)))
    base = ad.sub(d_fake, d_real)
    penalty = gradient_penalty(critic_score, real, fake, rng, curvature)
    return ad.add(base, ad.scale(penalty, gp_weight)), penalty


def generator_loss(critic_score_of_fake: Tensor) -> Tensor:
    """Generator minimizes the negated mean critic score of its samples."""
    return ad.scale(ad.mean_all(critic_score_of_fake), -1.0)


@dataclass
class TrainHistory:
    columns: tuple = ("step", "epoch", "critic_loss", "penalty", "gen_loss")
    rows: list = field(default_factory=list)

    def append(self, step, epoch, critic_loss, penalty, gen_loss):
        self.rows.append((step, epoch, critic_loss, penalty, gen_loss))


def train_gan(
    config: GanConfig,
    data: np.ndarray,
    curvature: Curvature = DEFAULT_CURVATURE,
    *,
    epoch_callback: Optional[Callable[[int, GanModel], None]] = None,
) -> tuple[GanModel, TrainHistory]:
    """WGAN-GP loop: ``n_critic`` critic updates per generator update.

    Fully deterministic under ``config.seed``.  A non-finite loss aborts
    with the offending step index recorded on the exception.
    """
    rng = np.random.default_rng(config.seed)
    model = build_gan(config, curvature, rng)
    opt_c = RiemannianAdam(model.critic.named_parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    opt_g = RiemannianAdam(model.generator.named_parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    history = TrainHistory()

    def score_train(x: Tensor) -> Tensor:
        return model.critic.score(x, train=True, rng=rng)

    step = 0
    since_gen = 0
    for epoch in range(config.epochs):
        order = rng.permutation(data.shape[0])
        for lo in range(0, data.shape[0] - config.batch_size + 1, config.batch_size):
            real = data[order[lo : lo + config.batch_size]]
            noise = sample_noise(config.batch_size, config.latent_dim, rng, curvature)
            fake = model.generator.forward(constant(noise), train=True, rng=rng).data

            opt_c.zero_grad()
            opt_g.zero_grad()
            loss_c, penalty = critic_loss(score_train, real, fake, config.gp_weight, rng, curvature)
            if not np.isfinite(loss_c.data):
                raise NumericalAbort(f"critic loss is non-finite at step {step}", step=step)
            backward(loss_c)
            opt_c.step()

            gen_loss_val = np.nan
            since_gen += 1
            if since_gen == config.n_critic:
                since_gen = 0
                opt_c.zero_grad()
                opt_g.zero_grad()
                noise2 = sample_noise(config.batch_size, config.latent_dim, rng, curvature)
                fake_t = model.generator.forward(constant(noise2), train=True, rng=rng)
                loss_g = generator_loss(score_train(fake_t))
                if not np.isfinite(loss_g.data):
                    raise NumericalAbort(f"generator loss is non-finite at step {step}", step=step)
                backward(loss_g)
                opt_g.step()
                gen_loss_val = float(loss_g.data)

            history.append(step, epoch, float(loss_c.data), float(penalty.data), gen_loss_val)
            step += 1
        if epoch_callback is not None:
            epoch_callback(epoch, model)
    return model, history


# ---------------------------------------------------------------------------
# evaluation and toy data
# ---------------------------------------------------------------------------


def pairwise_distance(a: np.ndarray, b: np.ndarray, k: float) -> np.ndarray:
    signs = np.ones(a.shape[1])
    signs[0] = -1.0
    inner = (a * signs) @ b.T
    return np.arccosh(np.maximum(k * inner, 1.0)) / np.sqrt(-k)


def energy_distance(a: np.ndarray, b: np.ndarray, k: float) -> float:
    """2 E d(A,B) - E d(A,A') - E d(B,B') under the geodesic metric."""
    dab = pairwise_distance(a, b, k).mean()
    daa = pairwise_distance(a, a, k).mean()
    dbb = pairwise_distance(b, b, k).mean()
    return float(2.0 * dab - daa - dbb)


def toy2d(name: str, count: int, rng: np.random.Generator) -> np.ndarray:
    """2-D toy densities with coordinates scaled into [-1, 1]."""
    if name == "checkerboard":
        x1 = rng.uniform(-2.0, 2.0, size=count)
        x2 = rng.uniform(0.0, 1.0, size=count) - 2.0 * rng.integers(0, 2, size=count) + np.floor(x1) % 2
        pts = 2.0 * np.stack([x1, x2], axis=1)
    elif name == "8gaussians":
        angles = rng.integers(0, 8, size=count) * (np.pi / 4.0)
        centers = 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        pts = centers + 0.2 * rng.standard_normal((count, 2))
    elif name == "two-moons":
        half = rng.integers(0, 2, size=count)
        theta = rng.uniform(0.0, np.pi, size=count)
        x = np.where(half == 0, np.cos(theta), 1.0 - np.cos(theta))
        y = np.where(half == 0, np.sin(theta), 0.5 - np.sin(theta))
        pts = np.stack([x, y], axis=1) + 0.08 * rng.standard_normal((count, 2))
    else:
        raise ValueError(f"unknown toy density {name!r}")
    return pts / np.abs(pts).max()


def lift_toy_points(points2d: np.ndarray, curvature: Curvature = DEFAULT_CURVATURE) -> np.ndarray:
    """Map scaled 2-D samples onto the manifold through exp at the origin."""
    return geo.from_tangent0(points2d, curvature.k)


def generate_points(model: GanModel, count: int, rng: np.random.Generator, latent_dim: int) -> np.ndarray:
    noise = sample_noise(count, latent_dim, rng, model.curvature)
    return model.generator.forward(constant(noise)).data
