"""Chart-based Riemannian models, vector fields and the model catalog.

Every callable on a model or field is vectorised over leading axes: a point
array of shape ``(..., n)`` yields metric values of shape ``(..., n, n)`` and
metric derivatives of shape ``(..., n, n, n)`` where the *last* axis is the
differentiation index, i.e. ``metric_dx(x)[..., i, j, k] = d h_ij / d x^k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import ChartDomainError, DegenerateFlagError, InputError

ArrayFn = Callable[[np.ndarray], np.ndarray]

S3_BOUNDARY_MARGIN = 1e-6
# projective radius at which the sphere chart is cut off (angle ~1e-4 from the equator)
SPHERE_CHART_RADIUS = 1e4
CURVATURE_STEP = 1e-4


def _always_valid(x: np.ndarray) -> np.ndarray:
    return np.ones(np.shape(x)[:-1], dtype=bool)


@dataclass(frozen=True)
class RiemannianModel:
    """A single-chart Riemannian metric with analytic first derivatives."""

    dim: int
    metric: ArrayFn
    metric_dx: ArrayFn
    tag: str
    params: dict = field(default_factory=dict)
    validity: ArrayFn = _always_valid
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None

    def is_valid(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.validity(x)) and np.all(np.isfinite(x)))

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise InputError(f"expected {self.dim} coordinates, got shape {x.shape}")
        if not self.is_valid(x):
            raise ChartDomainError(f"point {x} outside the {self.tag} chart")
        return x

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.sampler is None:
            return rng.normal(size=(count, self.dim))
        return self.sampler(rng, count)

    def inner(self, x, u, v) -> float:
        return float(np.asarray(u) @ self.metric(np.asarray(x, float)) @ np.asarray(v))

    def norm(self, x, u) -> float:
        return float(np.sqrt(self.inner(x, u, u)))


@dataclass(frozen=True)
class VectorFieldModel:
    """A vector field ``W^i(x)`` with analytic partials ``dW^i/dx^j`` (last axis)."""

    components: ArrayFn
    components_dx: ArrayFn
    name: str = "W"

    def __call__(self, x) -> np.ndarray:
        return self.components(np.asarray(x, dtype=float))


def lower(model: RiemannianModel, field_: VectorFieldModel, x) -> np.ndarray:
    """Covariant components ``W_i = h_ij W^j``."""
    x = np.asarray(x, dtype=float)
    return np.einsum("...ij,...j->...i", model.metric(x), field_.components(x))


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

def euclidean(n: int) -> RiemannianModel:
    if n < 1:
        raise InputError("dimension must be positive")

    def metric(x):
        return np.broadcast_to(np.eye(n), np.shape(x)[:-1] + (n, n)).copy()

    def metric_dx(x):
        return np.zeros(np.shape(x)[:-1] + (n, n, n))

    return RiemannianModel(n, metric, metric_dx, "euclidean", {"n": n})


def cylinder() -> RiemannianModel:
    """Flat cylinder in coordinates (theta, k)."""
    model = euclidean(2)

    def sampler(rng, count):
        return np.column_stack([rng.uniform(0, 2 * np.pi, count), rng.uniform(-5, 5, count)])

    return RiemannianModel(2, model.metric, model.metric_dx, "cylinder", {}, sampler=sampler)


def torus() -> RiemannianModel:
    """Flat torus in angular coordinates (theta1, theta2)."""
    model = euclidean(2)

    def sampler(rng, count):
        return rng.uniform(0, 2 * np.pi, size=(count, 2))

    return RiemannianModel(2, model.metric, model.metric_dx, "torus", {}, sampler=sampler)


def sphere_projective(m: int, K: float = 1.0, hemisphere: str = "east") -> RiemannianModel:
    """Round metric of curvature ``K`` on S^(2m-1) in projective coordinates.

    ``h_ij = (delta_ij / (1+|x|^2) - x_i x_j / (1+|x|^2)^2) / K``. The eastern
    and western charts induce the same components; the flag only records
    which hemisphere the coordinates parametrise.
    """
    if m < 1:
        raise InputError("m must be >= 1")
    if not K > 0:
        raise InputError("K must be positive")
    if hemisphere not in ("east", "west"):
        raise InputError("hemisphere must be 'east' or 'west'")
    n = 2 * m - 1
    eye = np.eye(n)

    def metric(x):
        x = np.asarray(x, dtype=float)
        s = 1.0 + np.sum(x * x, axis=-1)[..., None, None]
        return (eye / s - x[..., :, None] * x[..., None, :] / s**2) / K

    def metric_dx(x):
        x = np.asarray(x, dtype=float)
        s = 1.0 + np.sum(x * x, axis=-1)[..., None, None, None]
        xi = x[..., :, None, None]
        xj = x[..., None, :, None]
        xk = x[..., None, None, :]
        d_ij = eye[:, :, None]
        d_ik = eye[:, None, :]
        d_jk = eye[None, :, :]
        return (-2 * xk * d_ij / s**2 - (d_ik * xj + d_jk * xi) / s**2
                + 4 * xi * xj * xk / s**3) / K

    def sampler(rng, count):
        # uniform in the ball of radius 1.5 (well inside the hemisphere)
        v = rng.normal(size=(count, n))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        r = 1.5 * rng.uniform(size=(count, 1)) ** (1.0 / n)
        return v * r

    def validity(x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        return np.isfinite(r2) & (r2 < SPHERE_CHART_RADIUS**2)

    return RiemannianModel(n, metric, metric_dx, "sphere_projective",
                           {"m": m, "K": float(K), "hemisphere": hemisphere},
                           validity=validity, sampler=sampler)


def s3_chart() -> RiemannianModel:
    """Unit S^3 in coordinates (u1, u2, u3): ``cos^2 u3 du1^2 + sin^2 u3 du2^2 + du3^2``."""

    def metric(u):
        u = np.asarray(u, dtype=float)
        c2 = np.cos(u[..., 2]) ** 2
        out = np.zeros(u.shape[:-1] + (3, 3))
        out[..., 0, 0] = c2
        out[..., 1, 1] = 1.0 - c2
        out[..., 2, 2] = 1.0
        return out

    def metric_dx(u):
        u = np.asarray(u, dtype=float)
        d = -np.sin(2.0 * u[..., 2])  # d(cos^2)/du3
        out = np.zeros(u.shape[:-1] + (3, 3, 3))
        out[..., 0, 0, 2] = d
        out[..., 1, 1, 2] = -d
        return out

    def validity(u):
        u3 = np.asarray(u)[..., 2]
        return (u3 > S3_BOUNDARY_MARGIN) & (u3 < np.pi / 2 - S3_BOUNDARY_MARGIN)

    def sampler(rng, count):
        return np.column_stack([
            rng.uniform(0, 2 * np.pi, count),
            rng.uniform(0, 2 * np.pi, count),
            rng.uniform(0.1, np.pi / 2 - 0.1, count),
        ])

    return RiemannianModel(3, metric, metric_dx, "s3_chart", {}, validity=validity, sampler=sampler)


def constant_field(C) -> VectorFieldModel:
    C = np.asarray(C, dtype=float)
    n = C.size

    def comp(x):
        return np.broadcast_to(C, np.shape(x)[:-1] + (n,)).copy()

    def comp_dx(x):
        return np.zeros(np.shape(x)[:-1] + (n, n))

    return VectorFieldModel(comp, comp_dx, name=f"constant{tuple(C)}")


def cylinder_field() -> VectorFieldModel:
    """The rotation field d/dtheta."""
    f = constant_field([1.0, 0.0])
    return VectorFieldModel(f.components, f.components_dx, "cylinder_rotation")


def torus_field() -> VectorFieldModel:
    """(d/dtheta1 + d/dtheta2) / sqrt(2)."""
    f = constant_field(np.array([1.0, 1.0]) / np.sqrt(2.0))
    return VectorFieldModel(f.components, f.components_dx, "torus_diagonal")


def s3_field() -> VectorFieldModel:
    """The Hopf field d/du1 + d/du2."""
    f = constant_field([1.0, 1.0, 0.0])
    return VectorFieldModel(f.components, f.components_dx, "s3_hopf")


# ---------------------------------------------------------------------------
# Levi-Civita machinery
# ---------------------------------------------------------------------------

def christoffel(model: RiemannianModel, x) -> np.ndarray:
    """Christoffel symbols ``gamma[..., i, j, k]`` (upper index first)."""
    x = model.check_point(x)
    return _christoffel_raw(model, x)


def _christoffel_raw(model: RiemannianModel, x: np.ndarray) -> np.ndarray:
    h = model.metric(x)
    dh = model.metric_dx(x)  # dh[..., s, j, k] = d_k h_sj
    # first kind: gamma_{s j k} = (d_k h_sj + d_j h_sk - d_s h_jk) / 2
    first = 0.5 * (dh + np.swapaxes(dh, -1, -2) - np.moveaxis(dh, -1, -3))
    first = 0.5 * (first + np.swapaxes(first, -1, -2))
    hinv = np.linalg.inv(h)
    return np.einsum("...is,...sjk->...ijk", hinv, first)


def covariant_derivative(model: RiemannianModel, field_: VectorFieldModel, x) -> np.ndarray:
    """Matrix ``M[..., i, j] = W_{i||j} = d_j W_i - W_r gamma^r_ij``."""
    x = model.check_point(x)
    h = model.metric(x)
    dh = model.metric_dx(x)
    W = field_.components(x)
    dW = field_.components_dx(x)
    W_low = np.einsum("...ij,...j->...i", h, W)
    dW_low = np.einsum("...ikj,...k->...ij", dh, W) + np.einsum("...ik,...kj->...ij", h, dW)
    gam = _christoffel_raw(model, x)
    return dW_low - np.einsum("...r,...rij->...ij", W_low, gam)


@dataclass(frozen=True)
class KillingReport:
    max_killing_residual: float
    max_unit_residual: float
    max_parallel_residual: float
    sample_points: np.ndarray


def killing_report(model: RiemannianModel, field_: VectorFieldModel, points) -> KillingReport:
    """Maxima over ``points`` of ``|(W_i||j + W_j||i)/2|``, ``|h(W,W) - 1|`` and ``|W_i||j|``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise InputError("killing_report needs at least one point")
    M = covariant_derivative(model, field_, pts)
    sym = 0.5 * (M + np.swapaxes(M, -1, -2))
    W = field_.components(pts)
    unit = np.einsum("...i,...ij,...j->...", W, model.metric(pts), W)
    return KillingReport(
        max_killing_residual=float(np.max(np.abs(sym))),
        max_unit_residual=float(np.max(np.abs(unit - 1.0))),
        max_parallel_residual=float(np.max(np.abs(M))),
        sample_points=pts,
    )


def integral_curve_geodesic_residual(model: RiemannianModel, field_: VectorFieldModel, points) -> float:
    """Max of ``|dW^i/dx^j W^j + gamma^i_jk W^j W^k|``: the geodesic equation
    evaluated along integral curves of ``W``."""
    pts = np.atleast_2d(model.check_point(points))
    W = field_.components(pts)
    acc = np.einsum("...ij,...j->...i", field_.components_dx(pts), W)
    acc += np.einsum("...ijk,...j,...k->...i", _christoffel_raw(model, pts), W, W)
    return float(np.max(np.abs(acc)))


def riemann_tensor(model: RiemannianModel, x, step: float = CURVATURE_STEP) -> np.ndarray:
    """``R[i, j, k, l]`` with ``R(d_k, d_l) d_j = R^i_jkl d_i``.

    Christoffel x-derivatives by central differences, step ``step * (1 + |x|)``.
    """
    x = model.check_point(x)
    n = model.dim
    hstep = step * (1.0 + np.linalg.norm(x))
    offsets = np.concatenate([np.eye(n), -np.eye(n)]) * hstep
    stencil = x[None, :] + offsets
    if not model.is_valid(stencil):
        raise ChartDomainError("curvature stencil leaves the chart")
    gam_s = _christoffel_raw(model, stencil)
    dgam = np.moveaxis((gam_s[:n] - gam_s[n:]) / (2 * hstep), 0, -1)  # [i,j,k,m] = d_m gamma^i_jk
    gam = _christoffel_raw(model, x)
    # R^i_jkl = d_k G^i_lj - d_l G^i_kj + G^i_kr G^r_lj - G^i_lr G^r_kj
    term = np.einsum("iljk->ijkl", dgam)
    quad = np.einsum("ikr,rlj->ijkl", gam, gam)
    R = term + quad
    return R - np.swapaxes(R, -1, -2)


def sectional_curvature(model: RiemannianModel, x, u, v, step: float = CURVATURE_STEP) -> float:
    """``<R(u,v)v, u> / (|u|^2 |v|^2 - <u,v>^2)``."""
    x = model.check_point(x)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    h = model.metric(x)
    uu, vv, uv = u @ h @ u, v @ h @ v, u @ h @ v
    denom = uu * vv - uv**2
    if denom < 1e-12 * max(uu * vv, 1e-300) or denom < 1e-12:
        raise DegenerateFlagError("degenerate plane for sectional curvature")
    R = riemann_tensor(model, x, step)
    Ruvv = np.einsum("ijkl,j,k,l->i", R, v, u, v)
    return float(Ruvv @ h @ u / denom)


def metric_compatibility_residual(model: RiemannianModel, x) -> float:
    """Max of ``|h_ij||k|`` computed from the analytic derivatives."""
    x = model.check_point(x)
    h = model.metric(x)
    dh = model.metric_dx(x)
    gam = _christoffel_raw(model, x)
    cov = dh - np.einsum("...rik,...rj->...ijk", gam, h) - np.einsum("...rjk,...ir->...ijk", gam, h)
    return float(np.max(np.abs(cov)))


def finite_difference_consistency(fn: ArrayFn, fn_dx: ArrayFn, x, step: float = 1e-6) -> float:
    """Relative max deviation between ``fn_dx`` and central differences of ``fn``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        cols.append((fn(x + e) - fn(x - e)) / (2 * step))
    fd = np.stack(cols, axis=-1)
    an = fn_dx(x)
    scale = max(1.0, float(np.max(np.abs(an))))
    return float(np.max(np.abs(fd - an)) / scale)


CATALOG_TAGS: Sequence[str] = ("euclidean", "sphere_projective", "s3_chart", "cylinder", "torus")
