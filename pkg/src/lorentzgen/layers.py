"""Hyperbolic neural layers on the Lorentz model, built on the autodiff core.

All layers keep their outputs on the hyperboloid by construction: the
linear layer rebuilds the time coordinate from the spatial norm, the
centroid renormalizes, and the embedding path goes through exp at the
origin.  Batches are (B, n+1) matrices of ambient coordinates.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from lorentzgen import autodiff as ad
from lorentzgen import geometry as geo
from lorentzgen.autodiff import Tensor, constant, parameter
from lorentzgen.geometry import Curvature, DEFAULT_CURVATURE, LorentzPoint

DEGENERATE_DIRECTION_EPS = 1e-12
CENTROID_NORM_GUARD = 1e-30


def origin_rows(count: int, n: int, curvature: Curvature) -> Tensor:
    return constant(np.broadcast_to(geo.origin(n, curvature.k), (count, n + 1)).copy())


def lorentz_normalize_rows(u: Tensor, curvature: Curvature) -> Tensor:
    """Scale each row onto the hyperboloid: u / (sqrt(-K) |  ||u||_L  |)."""
    q = ad.lorentz_inner_rows(u, u)  # negative for timelike rows
    denom = ad.sqrt(ad.clamp_min(ad.scale(q, -1.0), CENTROID_NORM_GUARD))
    ones = constant(np.ones(denom.data.shape))
    return ad.mul_cols(u, ad.div(ones, ad.scale(denom, np.sqrt(-curvature.k))))


def lorentz_centroid_rows(
    points: Tensor, weights: Optional[Tensor], curvature: Curvature, fused: bool = True
) -> Tensor:
    """Weighted centroid of the rows of ``points``; unit weights when None."""
    if fused:
        return ad.lorentz_centroid_op(points, weights, curvature.k, CENTROID_NORM_GUARD)
    if weights is None:
        u = ad.sum_axis0(points)
    else:
        u = ad.matmul(weights, points)
    return lorentz_normalize_rows(u, curvature)


def e2h_rows(t: Tensor, curvature: Curvature, fused: bool = True) -> Tensor:
    """Row-wise Euclidean-to-hyperbolic map exp_o([0, t])."""
    if fused:
        return ad.e2h_op(t, curvature.k)
    root_mk = np.sqrt(-curvature.k)
    phi = ad.scale(ad.rownorm(t), root_mk)
    time = ad.scale(ad.cosh(phi), 1.0 / root_mk)
    spatial = ad.mul_cols(t, ad.sinhc(phi))
    return ad.hstack([time, spatial])


def log0_rows(x: Tensor, curvature: Curvature) -> Tensor:
    """Row-wise spatial part of the log map at the origin.

    For on-manifold rows, acosh(sqrt(-K) x_t) / (sqrt(-K) ||x_s||) equals
    asinh(a)/a with a = sqrt(-K) ||x_s||, which is smooth through the
    origin (the map is the identity there to first order).
    """
    n1 = x.data.shape[1]
    root_mk = np.sqrt(-curvature.k)
    xs = ad.cols(x, 1, n1)
    factor = ad.asinhc(ad.scale(ad.rownorm(xs), root_mk))
    return ad.mul_cols(xs, factor)


def direct_concat_rows(parts: Sequence[Tensor], curvature: Curvature, fused: bool = True) -> Tensor:
    """Lorentz direct concatenation of batched points (spatial copy, time rebuilt)."""
    if len(parts) < 2:
        raise ValueError("need at least two points to concatenate")
    if fused and len(parts) == 2:
        return ad.direct_concat2_op(parts[0], parts[1], curvature.k)
    acc = ad.square(ad.cols(parts[0], 0, 1))
    for p in parts[1:]:
        acc = ad.add(acc, ad.square(ad.cols(p, 0, 1)))
    time = ad.sqrt(ad.add_const(acc, (len(parts) - 1) / curvature.k))
    spatials = [ad.cols(p, 1, p.data.shape[1]) for p in parts]
    return ad.hstack([time] + spatials)


def direct_split_rows(x: Tensor, dims: Sequence[int], curvature: Curvature) -> list[Tensor]:
    if sum(dims) != x.data.shape[1] - 1:
        raise ValueError("split dimensions must sum to the spatial dimension")
    out, j = [], 1
    for d in dims:
        spatial = ad.cols(x, j, j + d)
        time = ad.sqrt(ad.add_const(ad.sum_axis1(ad.square(spatial)), -1.0 / curvature.k))
        out.append(ad.hstack([time, spatial]))
        j += d
    return out


def tangent_concat_rows(parts: Sequence[Tensor], curvature: Curvature) -> Tensor:
    """Concatenation through the origin's tangent space; stability baseline."""
    if len(parts) < 2:
        raise ValueError("need at least two points to concatenate")
    tangents = [log0_rows(p, curvature) for p in parts]
    return e2h_rows(ad.hstack(tangents), curvature)


def tangent_split_rows(x: Tensor, dims: Sequence[int], curvature: Curvature) -> list[Tensor]:
    if sum(dims) != x.data.shape[1] - 1:
        raise ValueError("split dimensions must sum to the spatial dimension")
    tan = log0_rows(x, curvature)
    out, j = [], 0
    for d in dims:
        out.append(e2h_rows(ad.cols(tan, j, j + d), curvature))
        j += d
    return out


class LorentzLinear:
    """Fully hyperbolic linear layer L^n -> L^m.

    Spatial output h = lambda * sigmoid(v.x + b') / ||W tau(x) + b|| * (W tau(x) + b),
    time rebuilt as sqrt(||h||^2 - 1/K).  lambda is kept positive by storing
    its log.  Dropout, when enabled, acts on the pre-normalization product
    so the output stays on the manifold.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        curvature: Curvature = DEFAULT_CURVATURE,
        *,
        activation: str = "identity",
        use_bias: bool = True,
        dropout: float = 0.0,
        fused: bool = True,
        log_scale_init: float = 0.0,
        rng: Optional[np.random.Generator] = None,
        name: str = "hlinear",
    ):
        if activation not in ("identity", "relu"):
            raise ValueError(f"unsupported activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.curvature = curvature
        self.activation = activation
        self.use_bias = use_bias
        self.dropout = dropout
        self.fused = fused
        self.name = name
        std = 1.0 / np.sqrt(in_dim + 1)
        self.weight = parameter(rng.standard_normal((out_dim, in_dim + 1)) * std, f"{name}.weight")
        self.v = parameter(rng.standard_normal(in_dim + 1) * std, f"{name}.v")
        self.bias = parameter(np.zeros(out_dim), f"{name}.bias") if use_bias else None
        self.bias_scalar = parameter(np.zeros(1), f"{name}.bias_scalar") if use_bias else None
        self.log_scale = parameter(np.asarray(float(log_scale_init)), f"{name}.log_scale")

    def named_parameters(self) -> list[Tensor]:
        params = [self.weight, self.v, self.log_scale]
        if self.use_bias:
            params += [self.bias, self.bias_scalar]
        return params

    def _dropout_mask(self, batch: int, train: bool, rng) -> Optional[np.ndarray]:
        if not train or self.dropout <= 0.0:
            return None
        if rng is None:
            raise ValueError("dropout requires an rng during training")
        return (rng.random((batch, self.out_dim)) >= self.dropout) / (1.0 - self.dropout)

    def forward(self, x: Tensor, *, train: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.in_dim + 1:
            raise ad.ShapeError(f"{self.name}: expected (B, {self.in_dim + 1}), got {x.data.shape}")
        mask = self._dropout_mask(x.data.shape[0], train, rng)
        if self.fused:
            try:
                return ad.lorentz_linear_op(
                    x, self.weight, self.v, self.bias, self.bias_scalar, self.log_scale,
                    self.curvature.k, use_relu=(self.activation == "relu"), dropout_mask=mask,
                    degenerate_eps=DEGENERATE_DIRECTION_EPS,
                )
            except FloatingPointError as exc:
                raise FloatingPointError(f"{self.name}: {exc}") from None
        u = ad.relu(x) if self.activation == "relu" else x
        z = ad.matmul(u, ad.transpose(self.weight))
        if self.use_bias:
            z = ad.add_bias(z, self.bias)
        if mask is not None:
            z = ad.mul_const(z, mask)
        s = ad.matmul(x, ad.reshape(self.v, (self.in_dim + 1, 1)))
        if self.use_bias:
            s = ad.add_bias(s, self.bias_scalar)
        gain = ad.mul_scalar(ad.exp(self.log_scale), ad.sigmoid(s))
        r = ad.rownorm(z)
        if float(r.data.min()) < DEGENERATE_DIRECTION_EPS:
            raise FloatingPointError(f"{self.name}: degenerate direction, ||W tau(x) + b|| < {DEGENERATE_DIRECTION_EPS}")
        h = ad.mul_cols(z, ad.div(gain, r))
        time = ad.sqrt(ad.add_const(ad.square(gain), -1.0 / self.curvature.k))
        return ad.hstack([time, h])


class CentroidDistance:
    """Distance head L^n -> R^m: entries are distances to trainable centroids."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        curvature: Curvature = DEFAULT_CURVATURE,
        *,
        fused: bool = True,
        rng: Optional[np.random.Generator] = None,
        name: str = "hcdist",
    ):
        rng = rng if rng is not None else np.random.default_rng()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.curvature = curvature
        self.fused = fused
        self.name = name
        pts = geo.wrapped_normal_arr(rng, out_dim, geo.origin(in_dim, curvature.k), np.ones(in_dim), curvature.k)
        self.centroids = parameter(pts, f"{name}.centroids", manifold=curvature)

    def named_parameters(self) -> list[Tensor]:
        return [self.centroids]

    def forward(self, x: Tensor, *, train: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.in_dim + 1:
            raise ad.ShapeError(f"{self.name}: expected (B, {self.in_dim + 1}), got {x.data.shape}")
        if self.fused:
            return ad.hcdist_op(x, self.centroids, self.curvature.k)
        inner = ad.matmul(ad.lorentz_metric(x), ad.transpose(self.centroids))
        arg = ad.scale(inner, self.curvature.k)
        return ad.scale(ad.acosh(arg), 1.0 / np.sqrt(-self.curvature.k))


class LorentzEmbedding:
    """Euclidean features to the manifold through a trainable matrix and exp_o."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        curvature: Curvature = DEFAULT_CURVATURE,
        *,
        rng: Optional[np.random.Generator] = None,
        name: str = "hembed",
    ):
        rng = rng if rng is not None else np.random.default_rng()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.curvature = curvature
        self.name = name
        std = 1.0 / np.sqrt(in_dim)
        self.weight = parameter(rng.standard_normal((in_dim, out_dim)) * std, f"{name}.weight")

    def named_parameters(self) -> list[Tensor]:
        return [self.weight]

    def forward(self, x: Tensor, *, train: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.in_dim:
            raise ad.ShapeError(f"{self.name}: expected (B, {self.in_dim}), got {x.data.shape}")
        return e2h_rows(ad.matmul(x, self.weight), self.curvature)


class LorentzGCN:
    """Graph convolution: transform node features, then centroid-aggregate
    each node's neighborhood (self-loop included by default).

    Aggregation iterates each node's neighbor list in order, so relabeling a
    graph while preserving the per-node list order permutes the outputs
    bit-identically.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        curvature: Curvature = DEFAULT_CURVATURE,
        *,
        add_self_loops: bool = True,
        dropout: float = 0.0,
        fused: bool = True,
        rng: Optional[np.random.Generator] = None,
        name: str = "hgcn",
    ):
        self.linear = LorentzLinear(
            in_dim, out_dim, curvature, dropout=dropout, fused=fused, rng=rng, name=f"{name}.linear"
        )
        self.curvature = curvature
        self.add_self_loops = add_self_loops
        self.name = name

    def named_parameters(self) -> list[Tensor]:
        return self.linear.named_parameters()

    def forward(
        self,
        x: Tensor,
        neighbors: Sequence[Sequence[int]],
        *,
        train: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        h = self.linear.forward(x, train=train, rng=rng)
        rows = []
        for v, nbrs in enumerate(neighbors):
            idx = ([v] if self.add_self_loops else []) + list(nbrs)
            if not idx:
                raise ValueError(f"{self.name}: node {v} has no neighbors and no self-loop")
            gathered = ad.take_rows(h, np.asarray(idx))
            rows.append(lorentz_centroid_rows(gathered, None, self.curvature, fused=self.linear.fused))
        return ad.vstack(rows)


@dataclass
class WrappedNormalSpec:
    """Mean point and diagonal covariance of a wrapped normal distribution."""

    mean: LorentzPoint
    diag_cov: np.ndarray

    def __post_init__(self) -> None:
        self.diag_cov = np.asarray(self.diag_cov, dtype=np.float64)
        if self.diag_cov.shape != (self.mean.n,) or np.any(self.diag_cov <= 0):
            raise ValueError("diag_cov must be positive with one entry per spatial dimension")


def wrapped_normal_sample(spec: WrappedNormalSpec, rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """Draw Gaussian tangents at the origin, transport to the mean, exp there."""
    return geo.wrapped_normal_arr(rng, count, spec.mean.coords, spec.diag_cov, spec.mean.curvature.k)


def hcent_aggregate(points: Tensor, weights: Optional[Tensor], curvature: Curvature) -> Tensor:
    """Differentiable centroid aggregation (unit weights when None)."""
    return lorentz_centroid_rows(points, weights, curvature)


# ---------------------------------------------------------------------------
# weight serialization: versioned header + little-endian f64 buffers
# ---------------------------------------------------------------------------

WEIGHTS_MAGIC = b"LZW1"
WEIGHTS_VERSION = 1


def save_weights(path, params: Sequence[Tensor], curvature: Curvature) -> None:
    entries = []
    for p in params:
        if p.name is None:
            raise ValueError("only named parameters can be serialized")
        entries.append({"name": p.name, "shape": list(p.data.shape), "manifold": p.manifold is not None})
    header = json.dumps(
        {"version": WEIGHTS_VERSION, "curvature": curvature.k, "entries": entries},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for p in params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_weights(path, params: Sequence[Tensor]) -> None:
    """Load buffers into ``params`` in order, validating the manifest.

    Shapes must match exactly; manifold-constrained tensors are checked
    against the hyperboloid invariant after loading.
    """
    with open(path, "rb") as fh:
        if fh.read(4) != WEIGHTS_MAGIC:
            raise ValueError("not a weights file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        if header["version"] != WEIGHTS_VERSION:
            raise ValueError(f"unsupported weights version {header['version']}")
        entries = header["entries"]
        if len(entries) != len(params):
            raise ValueError(f"weights file has {len(entries)} tensors, expected {len(params)}")
        k = header["curvature"]
        for entry, p in zip(entries, params):
            shape = tuple(entry["shape"])
            if entry["name"] != p.name or shape != p.data.shape:
                raise ValueError(f"manifest mismatch for {p.name}: file has {entry['name']} {shape}")
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError("weights file truncated")
            arr = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
            if entry["manifold"]:
                err = geo.manifold_error(arr, k)
                if np.max(err / np.maximum(1.0, (arr**2).sum(-1))) > 1e-8:
                    raise ValueError(f"{p.name}: loaded points violate the manifold invariant")
            p.data = arr
