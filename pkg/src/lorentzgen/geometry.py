"""Lorentz (hyperboloid) model of hyperbolic space.

Points live on the upper sheet of the hyperboloid embedded in Minkowski
space with signature (-, +, ..., +): every x with time component x[0] > 0
satisfies <x, x>_L = 1/K for a fixed curvature K < 0.

Two API levels are provided.  The array functions at module level operate
on raw float64 ndarrays whose last axis holds the ambient coordinates
(time first), so a batch of points is simply an (N, n+1) matrix.  The
``LorentzPoint`` / ``TangentVector`` wrappers validate the manifold and
tangency invariants and are the convenient single-point interface.

All arithmetic is float64.  acosh arguments are clamped to >= 1 and
denominators are guarded at 1e-15; the exponential map switches to a
second-order series below EXP_SERIES_CUTOFF to avoid 0/0 at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MANIFOLD_TOL = 1e-9
TANGENT_TOL = 1e-8
DIV_GUARD = 1e-15
EXP_SERIES_CUTOFF = 1e-6


@dataclass(frozen=True)
class Curvature:
    """Constant negative curvature of the manifold (units 1/length^2)."""

    k: float

    def __post_init__(self) -> None:
        if not (self.k < 0.0) or not np.isfinite(self.k):
            raise ValueError(f"curvature must be finite and strictly negative, got {self.k}")

    @property
    def radius(self) -> float:
        """1/sqrt(-K), the length scale of the space."""
        return 1.0 / np.sqrt(-self.k)


DEFAULT_CURVATURE = Curvature(-1.0)


# ---------------------------------------------------------------------------
# array-level operations (rows are points, time coordinate first)
# ---------------------------------------------------------------------------


def minkowski_inner(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """<x, y>_L = -x_t y_t + x_s . y_s over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    if x.shape[-1] < 2:
        raise ValueError("points need at least two ambient coordinates")
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def lift(spatial: np.ndarray, k: float) -> np.ndarray:
    """Attach the time coordinate sqrt(||s||^2 - 1/K) to spatial rows."""
    spatial = np.atleast_1d(np.asarray(spatial, dtype=np.float64))
    sq = np.sum(spatial * spatial, axis=-1, keepdims=True)
    time = np.sqrt(sq - 1.0 / k)
    return np.concatenate([time, spatial], axis=-1)


def origin(n: int, k: float) -> np.ndarray:
    """The hyperbolic origin (1/sqrt(-K), 0, ..., 0) in L^n."""
    o = np.zeros(n + 1)
    o[0] = 1.0 / np.sqrt(-k)
    return o


def manifold_error(x: np.ndarray, k: float) -> np.ndarray:
    """|K <x,x>_L - 1|, zero for points exactly on the hyperboloid."""
    return np.abs(k * minkowski_inner(x, x) - 1.0)


def _chord_sq(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # ||x - y||_L^2, computed from the difference vector.  This equals
    # 2/K - 2<x,y>_L for on-manifold points but is exact at x == y, where
    # the inner-product form leaves acosh-amplified rounding noise.
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return np.maximum(minkowski_inner(d, d), 0.0)


def lorentz_distance(x: np.ndarray, y: np.ndarray, k: float) -> np.ndarray:
    """Geodesic distance (1/sqrt(-K)) acosh(K <x,y>_L), clamped at 1."""
    arg = 1.0 + (-k / 2.0) * _chord_sq(x, y)
    return np.arccosh(arg) / np.sqrt(-k)


def squared_lorentz_dist(x: np.ndarray, y: np.ndarray, k: float) -> np.ndarray:
    """Squared Lorentzian distance 2/K - 2 <x,y>_L (nonnegative)."""
    return _chord_sq(x, y)


def project_tangent(x: np.ndarray, h: np.ndarray, k: float) -> np.ndarray:
    """Orthogonal projection of ambient h onto the tangent space at x.

    proj_x(h) = h - K <x,h>_L x, which satisfies <x, proj>_L = 0.
    """
    return h - k * minkowski_inner(x, h)[..., None] * x


def _lnorm(v: np.ndarray) -> np.ndarray:
    # Lorentz norm of spacelike vectors; tiny negative inner products from
    # rounding are clamped so the result stays real.
    return np.sqrt(np.maximum(minkowski_inner(v, v), 0.0))


def exp_map_arr(x: np.ndarray, v: np.ndarray, k: float) -> np.ndarray:
    """exp_x(v) = cosh(phi) x + sinh(phi) v / phi with phi = sqrt(-K) ||v||_L."""
    phi = (np.sqrt(-k) * _lnorm(v))[..., None]
    small = phi < EXP_SERIES_CUTOFF
    safe_phi = np.where(small, 1.0, phi)
    coshp = np.where(small, 1.0 + phi * phi / 2.0, np.cosh(safe_phi))
    sinhc = np.where(small, 1.0 + phi * phi / 6.0, np.sinh(safe_phi) / safe_phi)
    out = coshp * x + sinhc * v
    return _relift(out, k)


def log_map_arr(x: np.ndarray, y: np.ndarray, k: float) -> np.ndarray:
    """log_x(y), the tangent vector at x whose exp reaches y."""
    psi = (1.0 + (-k / 2.0) * _chord_sq(x, y))[..., None]
    delta = y - psi * x
    # ||y - psi x||_L^2 = (psi^2 - 1)/(-K) algebraically; avoids cancellation.
    nrm = np.sqrt(np.maximum((psi * psi - 1.0) / (-k), 0.0))
    factor = np.arccosh(psi) / (np.sqrt(-k) * np.maximum(nrm, DIV_GUARD))
    return np.where(nrm > DIV_GUARD, factor * delta, np.zeros_like(delta))


def transport_arr(x: np.ndarray, y: np.ndarray, v: np.ndarray, k: float) -> np.ndarray:
    """Parallel transport of v from T_x to T_y along the connecting geodesic.

    PT(v) = v + <y,v>_L / (-1/K - <x,y>_L) (x + y); preserves <.,.>_L.
    """
    coef = minkowski_inner(y, v) / (-1.0 / k - minkowski_inner(x, y))
    return v + coef[..., None] * (x + y)


def geodesic_arr(x: np.ndarray, y: np.ndarray, t: float, k: float) -> np.ndarray:
    """Point at parameter t in [0, 1] on the geodesic from x to y."""
    return exp_map_arr(x, t * log_map_arr(x, y, k), k)


def _relift(ambient: np.ndarray, k: float) -> np.ndarray:
    # Recompute the time coordinate from the spatial part so returned points
    # satisfy the hyperboloid constraint by construction instead of by
    # cancellation.
    return lift(ambient[..., 1:], k)


def from_tangent0(spatial_tangent: np.ndarray, k: float) -> np.ndarray:
    """exp at the origin of the tangent vector [0, t] (the Euclidean lift).

    Maps a Euclidean row t in R^n to the hyperboloid; the zero vector goes
    to the origin.
    """
    t = np.atleast_1d(np.asarray(spatial_tangent, dtype=np.float64))
    nrm = np.linalg.norm(t, axis=-1, keepdims=True)
    phi = np.sqrt(-k) * nrm
    small = phi < EXP_SERIES_CUTOFF
    safe_phi = np.where(small, 1.0, phi)
    coshp = np.where(small, 1.0 + phi * phi / 2.0, np.cosh(safe_phi))
    sinhc = np.where(small, 1.0 + phi * phi / 6.0, np.sinh(safe_phi) / safe_phi)
    return _relift(np.concatenate([coshp / np.sqrt(-k), sinhc * t], axis=-1), k)


def to_tangent0(x: np.ndarray, k: float) -> np.ndarray:
    """Spatial part of log at the origin (inverse of from_tangent0)."""
    x = np.asarray(x, dtype=np.float64)
    xs = x[..., 1:]
    nrm = np.linalg.norm(xs, axis=-1, keepdims=True)
    psi = np.maximum(np.sqrt(-k) * x[..., 0:1], 1.0)
    factor = np.arccosh(psi) / (np.sqrt(-k) * np.maximum(nrm, DIV_GUARD))
    return np.where(nrm > DIV_GUARD, factor * xs, np.zeros_like(xs))


def direct_concat_arr(parts: list[np.ndarray], k: float) -> np.ndarray:
    """Concatenate spatial blocks, recomputing a single time coordinate.

    time = sqrt(sum_i x_{i,t}^2 + (N-1)/K); the result is on the manifold
    because the defining identity telescopes.
    """
    if len(parts) < 2:
        raise ValueError("need at least two points to concatenate")
    times2 = sum(p[..., 0:1] ** 2 for p in parts)
    time = np.sqrt(times2 + (len(parts) - 1) / k)
    return np.concatenate([time] + [p[..., 1:] for p in parts], axis=-1)


def direct_split_arr(x: np.ndarray, dims: list[int], k: float) -> list[np.ndarray]:
    """Partition the spatial block and re-lift each piece."""
    _check_split_dims(x, dims)
    out, j = [], 1
    for d in dims:
        out.append(lift(x[..., j : j + d], k))
        j += d
    return out


def tangent_concat_arr(parts: list[np.ndarray], k: float) -> np.ndarray:
    """Concatenation through the origin's tangent space (log/cat/exp)."""
    if len(parts) < 2:
        raise ValueError("need at least two points to concatenate")
    tans = [to_tangent0(p, k) for p in parts]
    return from_tangent0(np.concatenate(tans, axis=-1), k)


def tangent_split_arr(x: np.ndarray, dims: list[int], k: float) -> list[np.ndarray]:
    """Split in the origin's tangent space (log/slice/exp)."""
    _check_split_dims(x, dims)
    tan = to_tangent0(x, k)
    out, j = [], 0
    for d in dims:
        out.append(from_tangent0(tan[..., j : j + d], k))
        j += d
    return out


def _check_split_dims(x: np.ndarray, dims: list[int]) -> None:
    if any(d < 1 for d in dims):
        raise ValueError("split dimensions must be positive")
    n = x.shape[-1] - 1
    if sum(dims) != n:
        raise ValueError(f"split dimensions sum to {sum(dims)}, expected {n}")


def centroid_arr(points: np.ndarray, weights: np.ndarray, k: float) -> np.ndarray:
    """Weighted Lorentzian centroid of the rows of ``points``.

    mu = sum_i w_i x_i / (sqrt(-K) |  ||sum_i w_i x_i||_L  |); minimizes the
    weighted squared Lorentzian distance and lies on the manifold.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights < 0):
        raise ValueError("centroid weights must be nonnegative")
    if not np.sum(weights) > 0:
        raise ValueError("centroid weights must not all be zero")
    u = weights @ points
    denom = np.sqrt(-k) * np.sqrt(np.maximum(-minkowski_inner(u, u), DIV_GUARD))
    return _relift(u / denom, k)


def wrapped_normal_arr(
    rng: np.random.Generator,
    count: int,
    mean: np.ndarray,
    diag_cov: np.ndarray,
    k: float,
) -> np.ndarray:
    """Sample ``count`` points from the wrapped normal centered at ``mean``.

    Draw v ~ N(0, diag_cov) in the origin's tangent space, parallel
    transport to the mean, then apply the exponential map there.
    """
    n = mean.shape[-1] - 1
    std = np.sqrt(np.asarray(diag_cov, dtype=np.float64))
    v = np.zeros((count, n + 1))
    v[:, 1:] = rng.standard_normal((count, n)) * std
    o = origin(n, k)
    u = transport_arr(o, mean, v, k)
    return exp_map_arr(np.broadcast_to(mean, u.shape), u, k)


def random_points(rng: np.random.Generator, count: int, n: int, k: float, spread: float = 1.0) -> np.ndarray:
    """Lift Gaussian spatial components; convenient test-point generator."""
    return lift(rng.standard_normal((count, n)) * spread, k)


# ---------------------------------------------------------------------------
# validated single-point wrappers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LorentzPoint:
    """A point on the hyperboloid; the time coordinate is always the lift
    of the stored spatial part, so the manifold constraint holds by
    construction."""

    coords: np.ndarray = field(repr=False)
    curvature: Curvature

    @classmethod
    def from_spatial(cls, spatial: np.ndarray, curvature: Curvature = DEFAULT_CURVATURE) -> "LorentzPoint":
        coords = lift(np.asarray(spatial, dtype=np.float64).ravel(), curvature.k)
        return cls(coords, curvature)

    @classmethod
    def from_coords(cls, coords: np.ndarray, curvature: Curvature = DEFAULT_CURVATURE) -> "LorentzPoint":
        """Validate ambient coordinates, then store the relifted point."""
        coords = np.asarray(coords, dtype=np.float64).ravel()
        if coords[0] <= 0:
            raise ValueError("time coordinate must be positive (upper sheet)")
        err = manifold_error(coords, curvature.k)
        if err > MANIFOLD_TOL * max(1.0, float(np.dot(coords, coords))):
            raise ValueError(f"point is off the hyperboloid (|K<x,x> - 1| = {err:.3e})")
        return cls.from_spatial(coords[1:], curvature)

    @classmethod
    def origin(cls, n: int, curvature: Curvature = DEFAULT_CURVATURE) -> "LorentzPoint":
        return cls.from_spatial(np.zeros(n), curvature)

    @property
    def time(self) -> float:
        return float(self.coords[0])

    @property
    def spatial(self) -> np.ndarray:
        return self.coords[1:]

    @property
    def n(self) -> int:
        return self.coords.shape[0] - 1


@dataclass(frozen=True)
class TangentVector:
    """An element of the tangent space at ``base``; Lorentz-orthogonal to
    its base point and spacelike."""

    base: LorentzPoint
    components: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        comps = np.asarray(self.components, dtype=np.float64).ravel()
        object.__setattr__(self, "components", comps)
        if comps.shape != self.base.coords.shape:
            raise ValueError("tangent components must match the base dimension")
        ip = float(minkowski_inner(self.base.coords, comps))
        scale = max(1.0, float(np.linalg.norm(comps)) * float(np.linalg.norm(self.base.coords)))
        if abs(ip) > TANGENT_TOL * scale:
            raise ValueError(f"vector is not tangent at its base (<x,v>_L = {ip:.3e})")

    @classmethod
    def project(cls, base: LorentzPoint, ambient: np.ndarray) -> "TangentVector":
        """Build by projecting an arbitrary ambient vector onto T_base."""
        comps = project_tangent(base.coords, np.asarray(ambient, dtype=np.float64).ravel(), base.curvature.k)
        return cls(base, comps)

    @property
    def norm(self) -> float:
        return float(_lnorm(self.components))


def _same_space(x: LorentzPoint, y: LorentzPoint) -> None:
    if x.curvature != y.curvature:
        raise ValueError("points have mismatched curvature")
    if x.n != y.n:
        raise ValueError(f"dimension mismatch: {x.n} vs {y.n}")


def lorentz_inner(x: np.ndarray, y: np.ndarray) -> float:
    """Lorentz inner product of two raw ambient vectors."""
    return float(minkowski_inner(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)))


def distance(x: LorentzPoint, y: LorentzPoint) -> float:
    _same_space(x, y)
    return float(lorentz_distance(x.coords, y.coords, x.curvature.k))


def squared_lorentz_distance(x: LorentzPoint, y: LorentzPoint) -> float:
    _same_space(x, y)
    return float(squared_lorentz_dist(x.coords, y.coords, x.curvature.k))


def lift_spatial(spatial: np.ndarray, curvature: Curvature = DEFAULT_CURVATURE) -> LorentzPoint:
    return LorentzPoint.from_spatial(spatial, curvature)


def exp_map(x: LorentzPoint, v: TangentVector) -> LorentzPoint:
    if v.base is not x and not np.array_equal(v.base.coords, x.coords):
        raise ValueError("tangent vector is based at a different point")
    out = exp_map_arr(x.coords, v.components, x.curvature.k)
    return LorentzPoint(out, x.curvature)


def log_map(x: LorentzPoint, y: LorentzPoint) -> TangentVector:
    _same_space(x, y)
    comps = log_map_arr(x.coords, y.coords, x.curvature.k)
    return TangentVector(x, comps)


def parallel_transport(x: LorentzPoint, y: LorentzPoint, v: TangentVector) -> TangentVector:
    _same_space(x, y)
    if v.base is not x and not np.array_equal(v.base.coords, x.coords):
        raise ValueError("tangent vector is based at a different point")
    comps = transport_arr(x.coords, y.coords, v.components, x.curvature.k)
    return TangentVector(y, comps)


def geodesic_point(x: LorentzPoint, y: LorentzPoint, t: float) -> LorentzPoint:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"geodesic parameter must lie in [0, 1], got {t}")
    _same_space(x, y)
    return LorentzPoint(geodesic_arr(x.coords, y.coords, t, x.curvature.k), x.curvature)


def e2h(t: np.ndarray, curvature: Curvature = DEFAULT_CURVATURE) -> LorentzPoint:
    """Map a Euclidean vector onto the manifold via exp at the origin."""
    return LorentzPoint(from_tangent0(np.asarray(t, dtype=np.float64).ravel(), curvature.k), curvature)


def _common_curvature(points: list[LorentzPoint]) -> Curvature:
    kc = points[0].curvature
    if any(p.curvature != kc for p in points):
        raise ValueError("points have mismatched curvature")
    return kc


def direct_concat(points: list[LorentzPoint]) -> LorentzPoint:
    kc = _common_curvature(points)
    return LorentzPoint(direct_concat_arr([p.coords for p in points], kc.k), kc)


def direct_split(x: LorentzPoint, dims: list[int]) -> list[LorentzPoint]:
    return [LorentzPoint(c, x.curvature) for c in direct_split_arr(x.coords, dims, x.curvature.k)]


def tangent_concat(points: list[LorentzPoint]) -> LorentzPoint:
    kc = _common_curvature(points)
    return LorentzPoint(tangent_concat_arr([p.coords for p in points], kc.k), kc)


def tangent_split(x: LorentzPoint, dims: list[int]) -> list[LorentzPoint]:
    return [LorentzPoint(c, x.curvature) for c in tangent_split_arr(x.coords, dims, x.curvature.k)]


def centroid(points: list[LorentzPoint], weights: np.ndarray) -> LorentzPoint:
    kc = _common_curvature(points)
    stacked = np.stack([p.coords for p in points])
    return LorentzPoint(centroid_arr(stacked, weights, kc.k), kc)
