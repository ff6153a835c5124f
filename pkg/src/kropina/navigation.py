"""Zermelo navigation under a critical (unit-length) wind.

Navigation data ``(h, W)`` with ``h(W, W) = 1`` and a conformal exponent ``k``
map to Kropina data ``a = e^{-k} h``, ``b = 2 e^{-k} W_flat``; the inverse
map uses ``k = log(4 / b^2)``. Both directions carry analytic first
derivatives through the chain rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import ChartDomainError, InputError, OutsideConicDomainError, ValidationError
from .riemannian import ArrayFn, RiemannianModel, VectorFieldModel

UNIT_WIND_TOL = 1e-6
N_VALIDATION_POINTS = 16
VALIDATION_SEED = 20240101


@dataclass(frozen=True)
class ScalarField:
    """Scalar function with its gradient (vectorised over leading axes)."""

    value: ArrayFn
    value_dx: ArrayFn

    @classmethod
    def constant(cls, c: float, dim: int) -> "ScalarField":
        c = float(c)
        return cls(lambda x: np.full(np.shape(x)[:-1], c),
                   lambda x: np.zeros(np.shape(x)[:-1] + (dim,)))


@dataclass(frozen=True)
class KropinaData:
    """Riemannian metric ``a_ij(x)`` and 1-form ``b_i(x)`` with partials.

    ``a_dx[..., i, j, k] = d_k a_ij`` and ``b_dx[..., i, k] = d_k b_i``.
    """

    dim: int
    a: ArrayFn
    a_dx: ArrayFn
    b: ArrayFn
    b_dx: ArrayFn
    validity: Callable[[np.ndarray], np.ndarray]
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    spec: Optional[dict] = None
    fused: Optional[Callable[[np.ndarray], tuple]] = field(default=None, repr=False, compare=False)

    def fields(self, x) -> tuple:
        """``(a, a_dx, b, b_dx)`` at ``x``, in one pass when a fused evaluator exists."""
        if self.fused is not None:
            return self.fused(x)
        return self.a(x), self.a_dx(x), self.b(x), self.b_dx(x)

    def is_valid(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.validity(x)) and np.all(np.isfinite(x)))

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise InputError(f"expected {self.dim} coordinates, got shape {x.shape}")
        if not self.is_valid(x):
            raise ChartDomainError(f"point {x} outside the chart")
        return x

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.sampler is None:
            return rng.normal(size=(count, self.dim))
        return self.sampler(rng, count)

    def b_squared(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        b = self.b(x)
        return np.einsum("...i,...i->...", b, np.linalg.solve(self.a(x), b[..., None])[..., 0])

    @classmethod
    def constant(cls, a, b) -> "KropinaData":
        """Constant-coefficient data (a Minkowski-type conic norm on R^n)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        n = b.size
        if a.shape != (n, n):
            raise InputError("a must be n x n with n = len(b)")
        if np.max(np.abs(a - a.T)) > 1e-12:
            raise InputError("a must be symmetric")
        return cls(
            dim=n,
            a=lambda x: np.broadcast_to(a, np.shape(x)[:-1] + (n, n)).copy(),
            a_dx=lambda x: np.zeros(np.shape(x)[:-1] + (n, n, n)),
            b=lambda x: np.broadcast_to(b, np.shape(x)[:-1] + (n,)).copy(),
            b_dx=lambda x: np.zeros(np.shape(x)[:-1] + (n, n)),
            validity=lambda x: np.ones(np.shape(x)[:-1], dtype=bool),
            spec={"a": a.tolist(), "b": b.tolist()},
        )


@dataclass(frozen=True)
class NavigationData:
    """Riemannian sea ``h``, critical wind ``W`` and conformal exponent ``k``.

    Construction validates ``|h(W, W) - 1| <= 1e-6`` on seeded chart samples.
    """

    model: RiemannianModel
    wind: VectorFieldModel
    k: Optional[ScalarField] = None
    spec: Optional[dict] = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.k is None:
            object.__setattr__(self, "k", ScalarField.constant(0.0, self.model.dim))
        if self.validate:
            rng = np.random.default_rng(VALIDATION_SEED)
            pts = self.model.sample_points(rng, N_VALIDATION_POINTS)
            dev = np.max(np.abs(self.unit_residual(pts)))
            if not dev <= UNIT_WIND_TOL:
                raise ValidationError(f"wind is not h-unit: max |h(W,W)-1| = {dev:.3g}")

    @property
    def dim(self) -> int:
        return self.model.dim

    def unit_residual(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        W = self.wind.components(x)
        return np.einsum("...i,...ij,...j->...", W, self.model.metric(x), W) - 1.0

    def wind_lower(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.einsum("...ij,...j->...i", self.model.metric(x), self.wind.components(x))


def nav_to_kropina(nav: NavigationData) -> KropinaData:
    """``a_ij = e^{-k} h_ij``, ``b_i = 2 e^{-k} W_i``."""
    model, wind, k = nav.model, nav.wind, nav.k

    def a(x):
        return np.exp(-k.value(x))[..., None, None] * model.metric(x)

    def a_dx(x):
        ek = np.exp(-k.value(x))[..., None, None, None]
        dk = k.value_dx(x)[..., None, None, :]
        return ek * (model.metric_dx(x) - model.metric(x)[..., None] * dk)

    def W_low(x):
        return np.einsum("...ij,...j->...i", model.metric(x), wind.components(x))

    def W_low_dx(x):
        return (np.einsum("...ijk,...j->...ik", model.metric_dx(x), wind.components(x))
                + np.einsum("...ij,...jk->...ik", model.metric(x), wind.components_dx(x)))

    def b(x):
        return 2.0 * np.exp(-k.value(x))[..., None] * W_low(x)

    def b_dx(x):
        ek = np.exp(-k.value(x))[..., None, None]
        dk = k.value_dx(x)[..., None, :]
        return 2.0 * ek * (W_low_dx(x) - W_low(x)[..., None] * dk)

    def fused(x):
        h, dh = model.metric(x), model.metric_dx(x)
        W, dW = wind.components(x), wind.components_dx(x)
        ek = np.exp(-k.value(x))
        dk = k.value_dx(x)
        Wl = np.einsum("...ij,...j->...i", h, W)
        dWl = np.einsum("...ijk,...j->...ik", dh, W) + np.einsum("...ij,...jk->...ik", h, dW)
        a_ = ek[..., None, None] * h
        da_ = ek[..., None, None, None] * (dh - h[..., None] * dk[..., None, None, :])
        b_ = 2.0 * ek[..., None] * Wl
        db_ = 2.0 * ek[..., None, None] * (dWl - Wl[..., None] * dk[..., None, :])
        return a_, da_, b_, db_

    return KropinaData(model.dim, a, a_dx, b, b_dx, model.validity, model.sampler, spec=nav.spec,
                       fused=fused)


def kropina_to_nav(kd: KropinaData, n_check: int = N_VALIDATION_POINTS) -> NavigationData:
    """``k = log(4/b^2)``, ``h = e^k a``, ``W_i = e^k b_i / 2`` (so ``W^i = a^{ij} b_j / 2``)."""
    rng = np.random.default_rng(VALIDATION_SEED)
    pts = kd.sample_points(rng, n_check)
    if not np.all(kd.b_squared(pts) > 0):
        raise ValidationError("b^2 must be positive on the chart")

    def pieces(x):
        x = np.asarray(x, dtype=float)
        a = kd.a(x)
        ainv = np.linalg.inv(a)
        b = kd.b(x)
        bsq = np.einsum("...i,...ij,...j->...", b, ainv, b)
        if np.any(bsq <= 0):
            raise ValidationError("b^2 must be positive")
        da = kd.a_dx(x)
        dainv = -np.einsum("...ir,...rsk,...sj->...ijk", ainv, da, ainv)
        db = kd.b_dx(x)
        dbsq = (np.einsum("...ijk,...i,...j->...k", dainv, b, b)
                + 2.0 * np.einsum("...ij,...i,...jk->...k", ainv, b, db))
        return a, ainv, b, bsq, da, dainv, db, dbsq

    def k_val(x):
        _, _, _, bsq, *_ = pieces(x)
        return np.log(4.0 / bsq)

    def k_dx(x):
        *_, bsq, _, _, _, dbsq = pieces(x)
        return -dbsq / bsq[..., None]

    def metric(x):
        a, _, _, bsq, *_ = pieces(x)
        return (4.0 / bsq)[..., None, None] * a

    def metric_dx(x):
        a, _, _, bsq, da, _, _, dbsq = pieces(x)
        ek = (4.0 / bsq)[..., None, None, None]
        dk = (-dbsq / bsq[..., None])[..., None, None, :]
        return ek * (da + a[..., None] * dk)

    def W(x):
        _, ainv, b, *_ = pieces(x)
        return 0.5 * np.einsum("...ij,...j->...i", ainv, b)

    def W_dx(x):
        _, ainv, b, _, _, dainv, db, _ = pieces(x)
        return 0.5 * (np.einsum("...ijk,...j->...ik", dainv, b) + np.einsum("...ij,...jk->...ik", ainv, db))

    model = RiemannianModel(kd.dim, metric, metric_dx, "from_kropina", {},
                            validity=kd.validity, sampler=kd.sampler)
    return NavigationData(model, VectorFieldModel(W, W_dx, "from_kropina"),
                          k=ScalarField(k_val, k_dx), spec=kd.spec)


def with_conformal_exponent(nav: NavigationData, k: float) -> NavigationData:
    """Same ``(h, W)`` with a different constant exponent ``k``."""
    return NavigationData(nav.model, nav.wind, ScalarField.constant(k, nav.dim),
                          spec=None if nav.spec is None else {**nav.spec, "k": float(k)},
                          validate=False)


def nav_F(nav: NavigationData, x, y) -> float:
    """Travel-time norm ``|y|_h^2 / (2 h(y, W))``.

    Raises:
        OutsideConicDomainError: if ``h(y, W) <= 0``.
    """
    x = nav.model.check_point(x)
    y = np.asarray(y, dtype=float)
    h = nav.model.metric(x)
    hyW = y @ h @ nav.wind.components(x)
    if not hyW > 0:
        raise OutsideConicDomainError(f"h(y, W) = {hyW:.3g} <= 0")
    return float((y @ h @ y) / (2.0 * hyW))


def navigation_residual(nav: NavigationData, x, y) -> float:
    """``| |y/F - W|_h - 1 |`` for the defining navigation equation."""
    x = np.asarray(x, dtype=float)
    F = nav_F(nav, x, y)
    d = np.asarray(y, dtype=float) / F - nav.wind.components(x)
    return abs(float(np.sqrt(d @ nav.model.metric(x) @ d)) - 1.0)


def indicatrix_point(nav: NavigationData, x, u) -> np.ndarray:
    """``y = W + u`` for an h-unit ``u``; raises if ``y`` is not admissible."""
    x = nav.model.check_point(x)
    u = np.asarray(u, dtype=float)
    y = nav.wind.components(x) + u
    if not (y @ nav.model.metric(x) @ nav.wind.components(x)) > 1e-12:
        raise OutsideConicDomainError("W + u is not in the conic domain")
    return y


def indicatrix_samples(nav: NavigationData, x, count: int, rng: Optional[np.random.Generator] = None,
                       seed: int = 0) -> np.ndarray:
    """``count`` points on ``{F(x, .) = 1}`` built as ``W + u`` with ``|u|_h = 1``.

    Directions ``u`` come from an h-orthonormal frame applied to Gaussian
    samples; the single excluded direction ``u = -W`` is rejected.
    """
    if count < 1:
        raise InputError("count must be >= 1")
    x = nav.model.check_point(x)
    rng = np.random.default_rng(seed) if rng is None else rng
    h = nav.model.metric(x)
    W = nav.wind.components(x)
    L = np.linalg.cholesky(h)
    Linv_T = np.linalg.inv(L).T  # columns form an h-orthonormal basis
    out = []
    while len(out) < count:
        z = rng.normal(size=nav.dim)
        z /= np.linalg.norm(z)
        u = Linv_T @ z
        y = W + u
        if (y @ h @ W) > 1e-8:
            out.append(y)
    return np.array(out)
