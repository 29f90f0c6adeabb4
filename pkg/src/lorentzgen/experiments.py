"""Experiment drivers behind the command-line interface.

Each function is pure given its arguments (seeded generators only) and
returns plain data structures; the CLI layer owns file layout and I/O.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from lorentzgen import autodiff as ad
from lorentzgen import geometry as geo
from lorentzgen import layers as ly
from lorentzgen import wgan
from lorentzgen.autodiff import Tensor, backward, constant, fd_check, parameter
from lorentzgen.geometry import Curvature, DEFAULT_CURVATURE
from lorentzgen.optim import NumericalAbort, RiemannianAdam


# ---------------------------------------------------------------------------
# geometry / autodiff property selftest
# ---------------------------------------------------------------------------


@dataclass
class PropertyResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def run_selftest(seed: int = 0, cases: int = 10_000, time_bias: float = 0.0) -> list[PropertyResult]:
    """Randomized property suite for the geometric core and the gradients.

    ``time_bias`` perturbs constructed time coordinates and exists so tests
    can verify that a broken invariant is actually caught.
    """
    rng = np.random.default_rng(seed)
    k = -1.0
    results: list[PropertyResult] = []

    def record(name, err, tol):
        results.append(PropertyResult(name, float(err), tol))

    def closure_err(pts):
        scale = np.maximum(1.0, (pts**2).sum(-1))
        return (geo.manifold_error(pts, k) / scale).max()

    pts = geo.lift(rng.uniform(-10, 10, size=(cases, 6)), k)
    if time_bias:
        pts = pts.copy()
        pts[:, 0] += time_bias
    record("hyperboloid closure (lift)", closure_err(pts), 1e-9)

    x = geo.random_points(rng, cases, 5, k, 1.5)
    tangents = rng.standard_normal((cases, 6))
    v = geo.project_tangent(x, tangents, k)
    norms = np.sqrt(np.maximum(geo.minkowski_inner(v, v), 0.0))[:, None]
    v = v * np.minimum(1.0, 5.0 / np.maximum(norms, 1e-12))
    exp_pts = geo.exp_map_arr(x, v, k)
    record("hyperboloid closure (exp map)", closure_err(exp_pts), 1e-9)

    w = geo.log_map_arr(x, exp_pts, k)
    nv = np.maximum(1.0, np.sqrt(np.maximum(geo.minkowski_inner(v, v), 0.0)))
    record("exp/log roundtrip", (np.linalg.norm(w - v, axis=-1) / nv).max(), 1e-6)

    y = geo.random_points(rng, cases, 5, k, 1.5)
    u2 = geo.project_tangent(x, rng.standard_normal((cases, 6)), k)
    pv = geo.transport_arr(x, y, v, k)
    pu = geo.transport_arr(x, y, u2, k)
    before = geo.minkowski_inner(v, u2)
    after = geo.minkowski_inner(pv, pu)
    record("parallel transport isometry", (np.abs(before - after) / np.maximum(1.0, np.abs(before))).max(), 1e-8)

    z = geo.random_points(rng, cases, 5, k, 1.5)
    slack = geo.lorentz_distance(x, y, k) + geo.lorentz_distance(y, z, k) - geo.lorentz_distance(x, z, k)
    record("triangle inequality", max(0.0, float(-slack.min())), 1e-9)

    t = rng.uniform(size=(cases, 1))
    gp = geo.exp_map_arr(x, t * geo.log_map_arr(x, y, k), k)
    speed_err = np.abs(geo.lorentz_distance(x, gp, k) - t[:, 0] * geo.lorentz_distance(x, y, k))
    record("geodesic speed", speed_err.max(), 1e-6)

    a = geo.random_points(rng, cases, 3, k, 2.0)
    b = geo.random_points(rng, cases, 4, k, 2.0)
    cat = geo.direct_concat_arr([a, b], k)
    record("hyperboloid closure (direct concat)", closure_err(cat), 1e-9)
    sa, sb = geo.direct_split_arr(cat, [3, 4], k)
    exact = max(np.abs(sa - a).max(), np.abs(sb - b).max())
    record("direct split inverts concat (exact)", exact, 0.0)

    tcat = geo.tangent_concat_arr([a, b], k)
    ta, tb = geo.tangent_split_arr(tcat, [3, 4], k)
    record("tangent split inverts concat", max(np.abs(ta - a).max(), np.abs(tb - b).max()), 1e-6)

    weights = rng.uniform(0.1, 1.0, size=8)
    cents = np.stack([geo.centroid_arr(geo.random_points(rng, 8, 4, k), weights, k) for _ in range(200)])
    record("hyperboloid closure (centroid)", closure_err(cents), 1e-9)

    # gradient spot checks against central differences
    grad_rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for _ in range(5):
        layer = ly.LorentzLinear(4, 3, rng=grad_rng)
        xs = parameter(geo.random_points(grad_rng, 2, 4, k), "x")
        probe = grad_rng.standard_normal((2, 4))
        worst = max(worst, fd_check(lambda: ad.sum_all(ad.mul_const(layer.forward(xs), probe)), layer.named_parameters() + [xs]))
    record("layer gradients vs finite differences", worst, 1e-4)

    head = ly.CentroidDistance(3, 2, rng=grad_rng)
    xs = parameter(geo.random_points(grad_rng, 2, 3, k), "x")
    probe = grad_rng.standard_normal((2, 2))
    record(
        "distance-head gradients vs finite differences",
        fd_check(lambda: ad.sum_all(ad.mul_const(head.forward(xs), probe)), [head.centroids, xs]),
        1e-4,
    )
    return results


# ---------------------------------------------------------------------------
# concatenation gradient surface (two 1-d inputs, K = -1)
# ---------------------------------------------------------------------------


@dataclass
class GradSurface:
    xs: np.ndarray  # grid axis
    panels: dict  # (method, component) -> (len, len) matrix of d out / d x_s


def _lift_column(col: Tensor) -> Tensor:
    time = ad.sqrt(ad.add_const(ad.square(col), 1.0))
    return ad.hstack([time, col])


def concat_grad_surface(extent: float = 100.0, points: int = 401, chunk: int = 40_000) -> GradSurface:
    """d z_component / d x_s for both concatenations over the 2-d grid."""
    axis = np.linspace(-extent, extent, points)
    xg, yg = np.meshgrid(axis, axis, indexing="ij")
    flat_x = xg.reshape(-1, 1)
    flat_y = yg.reshape(-1, 1)
    builders = {
        "direct": lambda px, py: ly.direct_concat_rows([px, py], DEFAULT_CURVATURE),
        "tangent": lambda px, py: ly.tangent_concat_rows([px, py], DEFAULT_CURVATURE),
    }
    panels = {
        (m, comp): np.empty(flat_x.shape[0]) for m in builders for comp in ("time", "s0", "s1")
    }
    for lo in range(0, flat_x.shape[0], chunk):
        xs_val = flat_x[lo : lo + chunk]
        ys_val = flat_y[lo : lo + chunk]
        for method, build in builders.items():
            for j, comp in enumerate(("time", "s0", "s1")):
                xs_t = parameter(xs_val.copy(), "xs")
                z = build(_lift_column(xs_t), _lift_column(constant(ys_val)))
                backward(ad.sum_all(ad.cols(z, j, j + 1)))
                panels[(method, comp)][lo : lo + xs_val.shape[0]] = xs_t.grad[:, 0]
    shaped = {key: arr.reshape(points, points) for key, arr in panels.items()}
    return GradSurface(axis, shaped)


def direct_concat_jacobian_bound(rng: np.random.Generator, samples: int, max_dim: int = 16) -> float:
    """Max |Jacobian entry| of the direct concatenation over random inputs.

    Uses reverse mode per output coordinate on batched random dimension
    pairs; the theoretical bound is 1.
    """
    worst = 0.0
    groups = 20
    per_group = samples // groups
    for _ in range(groups):
        na = int(rng.integers(1, max_dim))
        nb = int(rng.integers(1, max_dim))
        a_val = geo.random_points(rng, per_group, na, -1.0, spread=rng.uniform(0.5, 30.0))
        b_val = geo.random_points(rng, per_group, nb, -1.0, spread=rng.uniform(0.5, 30.0))
        for j in range(na + nb + 1):
            a = parameter(a_val.copy(), "a")
            b = parameter(b_val.copy(), "b")
            z = ly.direct_concat_rows([a, b], DEFAULT_CURVATURE)
            backward(ad.sum_all(ad.cols(z, j, j + 1)))
            # entries w.r.t. the spatial coordinates of either input
            worst = max(worst, float(np.abs(a.grad[:, 1:]).max()), float(np.abs(b.grad[:, 1:]).max()))
    return worst


# ---------------------------------------------------------------------------
# depth study: stacked blocks of two parallel layers + concat + merge
# ---------------------------------------------------------------------------


@dataclass
class DepthBlock:
    left: ly.LorentzLinear
    right: ly.LorentzLinear
    merge: ly.LorentzLinear

    def layers(self):
        return (self.left, self.right, self.merge)


class DepthNet:
    """L blocks: x -> [HLinear(x), HLinear(x)] -> concat -> HLinear -> x'."""

    def __init__(self, width: int, depth: int, concat: str, curvature=DEFAULT_CURVATURE, rng=None):
        if concat not in ("direct", "tangent"):
            raise ValueError(f"unknown concatenation {concat!r}")
        self.concat = concat
        self.curvature = curvature
        self.blocks = [
            DepthBlock(
                ly.LorentzLinear(width, width, curvature, rng=rng, name=f"block{i}.left"),
                ly.LorentzLinear(width, width, curvature, rng=rng, name=f"block{i}.right"),
                ly.LorentzLinear(2 * width, width, curvature, rng=rng, name=f"block{i}.merge"),
            )
            for i in range(depth)
        ]

    def named_parameters(self) -> list[Tensor]:
        return [p for blk in self.blocks for lay in blk.layers() for p in lay.named_parameters()]

    def forward(self, x: Tensor) -> Tensor:
        cat = ly.direct_concat_rows if self.concat == "direct" else ly.tangent_concat_rows
        for blk in self.blocks:
            x = blk.merge.forward(cat([blk.left.forward(x), blk.right.forward(x)], self.curvature))
        return x


@dataclass
class DepthTrace:
    concat: str
    grad_norms: np.ndarray  # (steps_recorded, depth): per-block mean layer gradient norm
    losses: np.ndarray
    nan_events: int
    aborted_at: Optional[int]


def _block_grad_norms(net: DepthNet) -> np.ndarray:
    out = np.empty(len(net.blocks))
    for i, blk in enumerate(net.blocks):
        layer_norms = []
        for lay in blk.layers():
            total = 0.0
            for p in lay.named_parameters():
                if p.grad is not None:
                    total += float((p.grad**2).sum())
            layer_norms.append(np.sqrt(total))
        out[i] = float(np.mean(layer_norms))
    return out


def depth_study(
    concat: str,
    width: int = 64,
    depth: int = 64,
    steps: int = 100,
    batch: int = 32,
    lr: float = 1e-4,
    seed: int = 0,
) -> DepthTrace:
    """Fit wrapped-normal targets through the block stack, recording the
    per-block average gradient norm of the three layers at every step."""
    k = -1.0
    rng = np.random.default_rng(seed)
    net = DepthNet(width, depth, concat, rng=np.random.default_rng(seed + 1))
    opt = RiemannianAdam(net.named_parameters(), lr=lr, betas=(0.0, 0.9))
    target_mean = geo.from_tangent0(np.ones(width), k)
    norms = np.full((steps, depth), np.nan)
    losses = np.full(steps, np.nan)
    nan_events = 0
    aborted_at = None
    for step in range(steps):
        x0 = geo.wrapped_normal_arr(rng, batch, geo.origin(width, k), np.ones(width), k)
        target = geo.wrapped_normal_arr(rng, batch, target_mean, 3.0 * np.ones(width), k)
        opt.zero_grad()
        out = net.forward(constant(x0))
        inner = ad.lorentz_inner_rows(out, constant(target))
        loss = ad.mean_all(ad.add_const(ad.scale(inner, -2.0), 2.0 / k))
        if not np.isfinite(loss.data):
            nan_events += 1
            aborted_at = step
            break
        backward(loss)
        losses[step] = float(loss.data)
        norms[step] = _block_grad_norms(net)
        if not np.all(np.isfinite(norms[step])):
            nan_events += 1
            aborted_at = step
            break
        try:
            opt.step()
        except NumericalAbort:
            nan_events += 1
            aborted_at = step
            break
    return DepthTrace(concat, norms, losses, nan_events, aborted_at)


# ---------------------------------------------------------------------------
# distance deviation under concatenation with a shared block
# ---------------------------------------------------------------------------


@dataclass
class DeviationSample:
    scenario: str
    dim: int
    direct: np.ndarray
    tangent: np.ndarray


def concat_distance_deviation(
    scenario: str, dim: int, samples: int, rng: np.random.Generator, k: float = -1.0
) -> DeviationSample:
    """|d(cat(x,c), cat(y,c)) - d(x, y)| for both concatenations."""
    if scenario == "spatial-normal":
        x, y, c = (geo.lift(rng.standard_normal((samples, dim)), k) for _ in range(3))
    elif scenario == "wrapped-normal":
        o = geo.origin(dim, k)
        x, y, c = (geo.wrapped_normal_arr(rng, samples, o, np.ones(dim), k) for _ in range(3))
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    base = geo.lorentz_distance(x, y, k)
    d_direct = np.abs(
        geo.lorentz_distance(geo.direct_concat_arr([x, c], k), geo.direct_concat_arr([y, c], k), k) - base
    )
    d_tangent = np.abs(
        geo.lorentz_distance(geo.tangent_concat_arr([x, c], k), geo.tangent_concat_arr([y, c], k), k) - base
    )
    return DeviationSample(scenario, dim, d_direct, d_tangent)


# ---------------------------------------------------------------------------
# toy 2-d adversarial training
# ---------------------------------------------------------------------------


@dataclass
class ToyRunResult:
    history: wgan.TrainHistory
    energy_by_epoch: list[float]
    final_samples_tangent: np.ndarray
    data_tangent: np.ndarray
    model: wgan.GanModel


def toy2d_run(
    density: str,
    seed: int,
    epochs: int = 20,
    train_count: int = 5000,
    eval_count: int = 2048,
    log_scale_init: float = 1.0,  # data spatial radius is ~1.9; unit-scale layers cannot reach it
    epoch_callback: Optional[Callable[[int, wgan.GanModel], None]] = None,
) -> ToyRunResult:
    """Train the 2-d toy configuration and track the energy distance.

    The generator emits L^3 points, so the 2-d samples are zero-padded to
    three spatial coordinates before the exp-at-origin lift.
    """
    data_rng = np.random.default_rng(seed)
    raw = wgan.toy2d(density, train_count + eval_count, data_rng)
    padded = np.concatenate([raw, np.zeros((raw.shape[0], 1))], axis=1)
    lifted = wgan.lift_toy_points(padded)
    train_pts, heldout = lifted[:train_count], lifted[train_count:]

    config = wgan.GanConfig(
        latent_dim=256,
        hidden_dim=128,
        depth_gen=3,
        depth_critic=3,
        output_dim=3,
        gp_weight=10.0,
        n_critic=5,
        lr=1e-4,
        beta1=0.0,
        beta2=0.9,
        batch_size=128,
        epochs=epochs,
        seed=seed,
        dropout=0.0,
        log_scale_init=log_scale_init,
    )
    energy: list[float] = []
    eval_rng_seed = seed + 1

    def on_epoch(epoch: int, model: wgan.GanModel) -> None:
        gen = wgan.generate_points(model, eval_count, np.random.default_rng(eval_rng_seed), config.latent_dim)
        energy.append(wgan.energy_distance(gen, heldout, -1.0))
        if epoch_callback is not None:
            epoch_callback(epoch, model)

    model, history = wgan.train_gan(config, train_pts, epoch_callback=on_epoch)
    final = wgan.generate_points(model, eval_count, np.random.default_rng(eval_rng_seed), config.latent_dim)
    return ToyRunResult(
        history=history,
        energy_by_epoch=energy,
        final_samples_tangent=geo.to_tangent0(final, -1.0),
        data_tangent=geo.to_tangent0(heldout, -1.0),
        model=model,
    )
