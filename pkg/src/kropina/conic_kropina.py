"""Conic Finsler evaluation engine.

A :class:`ConicMetric` supplies ``F``, the fundamental tensor ``g_ij`` and
its x-derivatives in closed form. Everything above that (spray, nonlinear
and Berwald connections, Berwald h-curvature, flag curvature) is generic
and shared by :class:`KropinaMetric` and the quadratic Riemannian generator
:class:`QuadraticMetric`, which serves as the sanity harness for the
curvature pipeline.

Array conventions (single point unless stated):

* ``G[i]`` spray coefficients, ``N[i, j] = dG^i/dy^j``
* ``Gamma[i, j, k] = d^2 G^i / dy^j dy^k``
* ``R[j, i, k, l]`` Berwald h-curvature ``R_j^i_kl``
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import BoundaryProximityError, DegenerateFlagError, InputError, OutsideConicDomainError
from .linalg_core import cholesky_pd
from .navigation import KropinaData
from .riemannian import RiemannianModel

DOMAIN_EPS = 1e-10
CURVATURE_MARGIN = 1e-6


@dataclass(frozen=True)
class FDConfig:
    """Finite-difference steps: ``h_y |y|`` in y (scale-free, so results are
    exactly compatible with the homogeneity of ``F``) and ``h_x (1 + |x|)`` in x.

    ``richardson`` switches every central difference to the fourth-order
    extrapolation ``(4 D_h - D_2h) / 3``.
    """

    h_y: float = 1e-3
    h_x: float = 3e-4
    richardson: bool = True
    margin: float = CURVATURE_MARGIN


def central_partial(fn: Callable, x: np.ndarray, y: np.ndarray, wrt: str, h: float,
                    richardson: bool = False) -> np.ndarray:
    """Central difference of ``fn(x, y)`` in ``x`` or ``y``; new axis appended last.

    ``fn`` must be vectorised over leading axes, which lets derivatives nest:
    the whole stencil of an inner derivative is evaluated in one call.
    """
    n = x.shape[-1]
    eye = np.eye(n)
    if richardson:
        offs = np.concatenate([eye, -eye, 2 * eye, -2 * eye]) * h
    else:
        offs = np.concatenate([eye, -eye]) * h
    if wrt == "y":
        ys = y[..., None, :] + offs
        xs = np.broadcast_to(x[..., None, :], ys.shape)
    elif wrt == "x":
        xs = x[..., None, :] + offs
        ys = np.broadcast_to(y[..., None, :], xs.shape)
    else:
        raise ValueError("wrt must be 'x' or 'y'")
    vals = fn(xs, ys)  # (..., S, out...)
    axis = x.ndim - 1
    vals = np.moveaxis(vals, axis, -1)  # (..., out..., S)
    d1 = (vals[..., :n] - vals[..., n:2 * n]) / (2 * h)
    if not richardson:
        return d1
    d2 = (vals[..., 2 * n:3 * n] - vals[..., 3 * n:]) / (4 * h)
    return (4.0 * d1 - d2) / 3.0


def _spray_from(g, dg, y):
    t1 = np.einsum("...ljm,...j,...m->...l", dg, y, y)
    t2 = np.einsum("...jkl,...j,...k->...l", dg, y, y)
    rhs = 0.25 * (2.0 * t1 - t2)
    return np.linalg.solve(g, rhs[..., None])[..., 0]


class ConicMetric:
    """Interface of a conic Finsler metric with closed-form ``g`` and ``dg/dx``."""

    dim: int
    fd: FDConfig

    # -- to be provided by subclasses (vectorised, unchecked) ----------------
    def valid_points(self, x) -> np.ndarray:
        raise NotImplementedError

    def domain_ratio(self, x, y) -> np.ndarray:
        """Scale-free admissibility measure; the domain is ``ratio > 0``."""
        raise NotImplementedError

    def _F(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def _g(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def _g_dx(self, x, y) -> np.ndarray:
        """``[..., i, j, k] = d g_ij / d x^k`` at fixed ``y``."""
        raise NotImplementedError

    def _dF_dy(self, x, y) -> np.ndarray:
        g = self._g(x, y)
        return np.einsum("...ij,...j->...i", g, y) / self._F(x, y)[..., None]

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    # -- checked public surface ----------------------------------------------
    def _check(self, x, y, margin: float = DOMAIN_EPS):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape[-1] != self.dim or y.shape[-1] != self.dim:
            raise InputError(f"expected {self.dim}-vectors")
        if not np.all(self.valid_points(x)):
            from .exceptions import ChartDomainError
            raise ChartDomainError(f"point {x} outside the chart")
        ratio = self.domain_ratio(x, y)
        if not np.all(ratio > DOMAIN_EPS):
            raise OutsideConicDomainError("tangent vector outside the conic domain")
        if not np.all(ratio > margin):
            raise BoundaryProximityError(
                f"tangent vector within the margin {margin:g} of the cone boundary")
        return x, y

    def contains(self, x, y) -> bool:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return bool(np.all(self.valid_points(x)) and np.all(self.domain_ratio(x, y) > DOMAIN_EPS))

    def F(self, x, y):
        x, y = self._check(x, y)
        out = self._F(x, y)
        return float(out) if out.ndim == 0 else out

    def fundamental_tensor(self, x, y) -> np.ndarray:
        x, y = self._check(x, y)
        return self._g(x, y)

    def fundamental_tensor_dx(self, x, y) -> np.ndarray:
        x, y = self._check(x, y)
        return self._g_dx(x, y)

    def dF_dy(self, x, y) -> np.ndarray:
        x, y = self._check(x, y)
        return self._dF_dy(x, y)

    # -- spray ---------------------------------------------------------------
    def _spray_gamma(self, x, y) -> np.ndarray:
        """``G^i = (1/2) gamma^i_jk y^j y^k`` with ``gamma`` formed from ``g(x, y)``
        at fixed ``y``; written as ``g^{il}(2 d_m g_lj y^j y^m - d_l g_jk y^j y^k)/4``."""
        return _spray_from(self._g(x, y), self._g_dx(x, y), y)

    def _spray(self, x, y) -> np.ndarray:
        """Spray used by curvature and geodesics; subclasses may supply a faster equivalent."""
        return self._spray_gamma(x, y)

    def _spray_and_ratio(self, x, y):
        return self._spray(x, y), self.domain_ratio(x, y)

    def _spray_guarded(self, x, y) -> np.ndarray:
        if not np.all(self.domain_ratio(x, y) > self.fd.margin):
            raise BoundaryProximityError("finite-difference stencil leaves the conic domain")
        if not np.all(self.valid_points(x)):
            raise BoundaryProximityError("finite-difference stencil leaves the chart")
        return self._spray(x, y)

    def steps(self, x, y):
        return (self.fd.h_x * (1.0 + float(np.linalg.norm(x))),
                self.fd.h_y * float(np.linalg.norm(y)))


class KropinaMetric(ConicMetric):
    """``F = alpha^2 / beta`` on the cone ``beta = b_i y^i > 0``."""

    def __init__(self, data: KropinaData, fd: FDConfig = FDConfig()):
        self.data = data
        self.dim = data.dim
        self.fd = fd

    def valid_points(self, x):
        return self.data.validity(np.asarray(x, dtype=float))

    def sample_points(self, rng, count):
        return self.data.sample_points(rng, count)

    def _parts(self, x, y):
        return self._parts_from(self.data.a(x), self.data.b(x), y)

    @staticmethod
    def _parts_from(a, b, y):
        a0 = np.einsum("...ij,...j->...i", a, y)
        alpha2 = np.einsum("...i,...i->...", a0, y)
        beta = np.einsum("...i,...i->...", b, y)
        return a, b, a0, alpha2, beta

    def domain_ratio(self, x, y):
        """``beta / |y|_a``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        _, _, _, alpha2, beta = self._parts(x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(alpha2 > 0, beta / np.sqrt(np.maximum(alpha2, 1e-300)), -np.inf)

    def alpha_beta(self, x, y):
        x, y = self._check(x, y)
        _, _, _, alpha2, beta = self._parts(x, y)
        return np.sqrt(alpha2), beta

    def _F(self, x, y):
        _, _, _, alpha2, beta = self._parts(x, y)
        return alpha2 / beta

    def _dF_dy(self, x, y):
        _, b, a0, alpha2, beta = self._parts(x, y)
        return 2.0 * a0 / beta[..., None] - (alpha2 / beta**2)[..., None] * b

    @staticmethod
    def _outer(u, v):
        return u[..., :, None] * v[..., None, :]

    def _g(self, x, y):
        return self._g_from(self._parts(x, y))

    def _g_from(self, parts):
        a, b, a0, al2, be = parts
        al2 = al2[..., None, None]
        be = be[..., None, None]
        o = self._outer
        return (2 * al2 / be**2 * a + 3 * al2**2 / be**4 * o(b, b)
                - 4 * al2 / be**3 * (o(a0, b) + o(b, a0)) + 4 / be**2 * o(a0, a0))

    def _g_dx(self, x, y):
        return self._g_dx_from(self._parts(x, y), self.data.a_dx(x), self.data.b_dx(x), y)

    def _g_dx_from(self, parts, da, db, y):
        """``d g / dx`` from precomputed ``_parts`` and ``da[..., i, j, k]``, ``db[..., i, k]``."""
        a, b, a0, al2, be = parts
        # directional pieces, derivative index last
        dal2 = np.einsum("...ijk,...i,...j->...k", da, y, y)
        dbe = np.einsum("...ik,...i->...k", db, y)
        da0 = np.einsum("...ijk,...j->...ik", da, y)

        al2 = al2[..., None]
        be = be[..., None]
        c1, dc1 = 2 * al2 / be**2, 2 * dal2 / be**2 - 4 * al2 * dbe / be**3
        c2, dc2 = 3 * al2**2 / be**4, 6 * al2 * dal2 / be**4 - 12 * al2**2 * dbe / be**5
        c3, dc3 = -4 * al2 / be**3, -4 * dal2 / be**3 + 12 * al2 * dbe / be**4
        c4, dc4 = 4 / be**2, -8 * dbe / be**3

        def E(c):  # coefficient (..., k) -> (..., 1, 1, k)
            return c[..., None, None, :]

        bb = b[..., :, None] * b[..., None, :]
        ab = a0[..., :, None] * b[..., None, :]
        ab = ab + np.swapaxes(ab, -1, -2)
        aa = a0[..., :, None] * a0[..., None, :]
        d_bb = db[..., :, None, :] * b[..., None, :, None]
        d_bb = d_bb + np.swapaxes(d_bb, -2, -3)
        d_ab = da0[..., :, None, :] * b[..., None, :, None] + a0[..., :, None, None] * db[..., None, :, :]
        d_ab = d_ab + np.swapaxes(d_ab, -2, -3)
        d_aa = da0[..., :, None, :] * a0[..., None, :, None]
        d_aa = d_aa + np.swapaxes(d_aa, -2, -3)

        return (E(dc1) * a[..., None] + E(c1) * da
                + E(dc2) * bb[..., None] + E(c2) * d_bb
                + E(dc3) * ab[..., None] + E(c3) * d_ab
                + E(dc4) * aa[..., None] + E(c4) * d_aa)


    def _spray(self, x, y):
        return self._spray_and_ratio(x, y)[0]

    def _spray_and_ratio(self, x, y):
        """Spray and ``domain_ratio`` from one evaluation of ``a, b`` and their partials.

        Uses ``G = g^{-1}(D (F^2)_y - d_x F^2) / 4`` with ``D = y^m d/dx^m`` and
        ``F^2 = A^2 / B^2`` (``A = alpha^2``, ``B = beta``), expanded by hand so
        the full ``dg/dx`` tensor is never formed. Equal to the gamma route.
        """
        a, da, b, db = self.data.fields(x)
        parts = self._parts_from(a, b, y)
        _, _, a0, A, B = parts
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ratio = np.where(A > 0, B / np.sqrt(np.maximum(A, 1e-300)), -np.inf)
            dA = np.einsum("...ijl,...i,...j->...l", da, y, y)       # d_l A
            dB = np.einsum("...il,...i->...l", db, y)                # d_l B
            DA = np.einsum("...l,...l->...", dA, y)
            DB = np.einsum("...l,...l->...", dB, y)
            Da0 = np.einsum("...ljm,...j,...m->...l", da, y, y)
            Db = np.einsum("...lm,...m->...l", db, y)
            A_, B_, DA_, DB_ = (v[..., None] for v in (A, B, DA, DB))
            dF2 = 2 * A_ * dA / B_**2 - 2 * A_**2 * dB / B_**3
            D_Fy = (4 * (DA_ * a0 + A_ * Da0) / B_**2 - 8 * A_ * a0 * DB_ / B_**3
                    - (4 * A_ * DA_ * b + 2 * A_**2 * Db) / B_**3 + 6 * A_**2 * b * DB_ / B_**4)
            rhs = 0.25 * (D_Fy - dF2)
            G = np.linalg.solve(self._g_from(parts), rhs[..., None])[..., 0]
        return G, ratio


class QuadraticMetric(ConicMetric):
    """Riemannian generator ``F^2 = h_ij y^i y^j``; the domain is ``y != 0``."""

    def __init__(self, model: RiemannianModel, fd: FDConfig = FDConfig()):
        self.model = model
        self.dim = model.dim
        self.fd = fd

    def valid_points(self, x):
        return self.model.validity(np.asarray(x, dtype=float))

    def sample_points(self, rng, count):
        return self.model.sample_points(rng, count)

    def domain_ratio(self, x, y):
        y = np.asarray(y, dtype=float)
        return np.where(np.linalg.norm(y, axis=-1) > 0, np.inf, -np.inf)

    def _F(self, x, y):
        return np.sqrt(np.einsum("...i,...ij,...j->...", y, self.model.metric(x), y))

    def _g(self, x, y):
        return np.broadcast_to(self.model.metric(x), np.shape(y)[:-1] + (self.dim, self.dim))

    def _g_dx(self, x, y):
        return np.broadcast_to(self.model.metric_dx(x), np.shape(y)[:-1] + (self.dim,) * 3)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def domain_contains(metric: ConicMetric, x, y) -> bool:
    return metric.contains(x, y)


def F_eval(metric: ConicMetric, x, y):
    return metric.F(x, y)


def fundamental_tensor(metric: ConicMetric, x, y) -> np.ndarray:
    return metric.fundamental_tensor(x, y)


def spray(metric: ConicMetric, x, y) -> np.ndarray:
    """Spray coefficients through the Christoffel (gamma) route."""
    x, y = metric._check(x, y)
    return metric._spray_gamma(x, y)


def spray_energy(metric: ConicMetric, x, y) -> np.ndarray:
    """Spray coefficients ``g^{il}(y^m (F^2)_{y^l x^m} - (F^2)_{x^l}) / 4``.

    The x-derivatives are central differences of the scalar ``F^2`` alone, so
    this route shares nothing with :func:`spray` except ``g`` itself.
    """
    x, y = metric._check(x, y, metric.fd.margin)
    hx, hy = metric.steps(x, y)
    r = metric.fd.richardson

    def F2(xs, ys):
        if not np.all(metric.domain_ratio(xs, ys) > metric.fd.margin):
            raise BoundaryProximityError("finite-difference stencil leaves the conic domain")
        return metric._F(xs, ys) ** 2

    dF2_dx = central_partial(F2, x, y, "x", hx, r)

    def dF2_dy(xs, ys):
        return central_partial(F2, xs, ys, "y", hy, r)

    mixed = central_partial(dF2_dy, x, y, "x", hx, r)  # [l, m] = d_x^m d_y^l F^2
    rhs = 0.25 * (mixed @ y - dF2_dx)
    return np.linalg.solve(metric._g(x, y), rhs)


@dataclass(frozen=True)
class CurvatureTensors:
    G: np.ndarray
    N: np.ndarray
    Gamma: np.ndarray
    R: np.ndarray
    x: np.ndarray = field(repr=False, default=None)
    y: np.ndarray = field(repr=False, default=None)

    def flag_operator(self) -> np.ndarray:
        """``R_0^i_0l = y^j y^k R_j^i_kl`` as an ``[i, l]`` matrix."""
        return np.einsum("jikl,j,k->il", self.R, self.y, self.y)


def curvature_tensors(metric: ConicMetric, x, y) -> CurvatureTensors:
    """Spray, nonlinear connection, Berwald connection and h-curvature at ``(x, y)``.

    ``N`` and ``Gamma`` are central y-differences of the closed-form spray;
    the h-curvature adds x- and y-differences of ``Gamma``::

        R_j^i_kl = dGamma^i_jk/dx^l - N^m_l dGamma^i_jk/dy^m + Gamma^r_jk Gamma^i_rl - (k <-> l)

    Raises:
        BoundaryProximityError: when any stencil point leaves the cone (with
            the configured margin) or the chart.
    """
    x, y = metric._check(x, y, metric.fd.margin)
    hx, hy = metric.steps(x, y)
    r = metric.fd.richardson
    Gf = metric._spray_guarded

    def Nf(xs, ys):
        return central_partial(Gf, xs, ys, "y", hy, r)

    def Gammaf(xs, ys):
        return central_partial(Nf, xs, ys, "y", hy, r)

    G = Gf(x, y)
    N = Nf(x, y)
    Gamma = Gammaf(x, y)
    Gamma = 0.5 * (Gamma + np.swapaxes(Gamma, -1, -2))
    dx_Gamma = central_partial(Gammaf, x, y, "x", hx, r)  # [i, j, k, l]
    dy_Gamma = central_partial(Gammaf, x, y, "y", hy, r)  # [i, j, k, m]
    dx_Gamma = 0.5 * (dx_Gamma + np.swapaxes(dx_Gamma, 1, 2))
    dy_Gamma = 0.5 * (dy_Gamma + np.swapaxes(dy_Gamma, 1, 2))

    delta = dx_Gamma - np.einsum("ijkm,ml->ijkl", dy_Gamma, N)
    A = np.einsum("ijkl->jikl", delta) + np.einsum("rjk,irl->jikl", Gamma, Gamma)
    R = A - np.swapaxes(A, 2, 3)
    return CurvatureTensors(G=G, N=N, Gamma=Gamma, R=R, x=x, y=y)


@dataclass(frozen=True)
class FlagFrame:
    """Flagpole ``y`` (admissible) and transverse edge ``X`` at ``x``."""

    x: np.ndarray
    y: np.ndarray
    X: np.ndarray

    def derived(self, metric: ConicMetric):
        """``(l_i, l^i, h^i_l)``: ``l_i = dF/dy^i``, ``l^i = y^i/F``, ``h = delta - l^i l_l``."""
        F = metric.F(self.x, self.y)
        l_low = metric.dF_dy(self.x, self.y)
        l_up = np.asarray(self.y, float) / F
        return l_low, l_up, np.eye(metric.dim) - np.outer(l_up, l_low)


def flag_curvature(metric: ConicMetric, frame: FlagFrame, tensors: CurvatureTensors = None) -> float:
    """``g_ir R_h^r_jk y^h X^i y^j X^k / (g(y,y) g(X,X) - g(y,X)^2)``, i.e.
    ``g(X, R_y X)`` over the flag area with ``R_y = R_0^._0.``."""
    x, y = metric._check(frame.x, frame.y, metric.fd.margin)
    X = np.asarray(frame.X, dtype=float)
    g = metric._g(x, y)
    yy, XX, yX = y @ g @ y, X @ g @ X, y @ g @ X
    denom = yy * XX - yX**2
    if not denom > 1e-10 * max(yy * XX, 1e-300):
        raise DegenerateFlagError("transverse edge is (nearly) parallel to the flagpole")
    if tensors is None:
        tensors = curvature_tensors(metric, x, y)
    # The quotient depends only on the flag span{y, X}. Using the g-orthogonal
    # edge keeps it exactly invariant under X -> X + mu y despite FD noise in R_y y.
    Xp = X - (yX / yy) * y
    num = (g @ Xp) @ tensors.flag_operator() @ Xp
    return float(num / (yy * (Xp @ g @ Xp)))


def scalar_flag_residual(metric: ConicMetric, x, y, K: float,
                         tensors: CurvatureTensors = None) -> float:
    """Max-norm of ``R_0^i_0l - K F^2 h^i_l``."""
    lhs, rhs = scalar_flag_sides(metric, x, y, K, tensors)
    return float(np.max(np.abs(lhs - rhs)))


def scalar_flag_sides(metric: ConicMetric, x, y, K: float, tensors: CurvatureTensors = None):
    """Both sides ``(R_0^i_0l, K F^2 h^i_l)`` of the scalar-flag-curvature identity."""
    x, y = metric._check(x, y, metric.fd.margin)
    if tensors is None:
        tensors = curvature_tensors(metric, x, y)
    F = metric._F(x, y)
    l_low = metric._dF_dy(x, y)
    hproj = np.eye(metric.dim) - np.outer(y / F, l_low)
    return tensors.flag_operator(), K * F**2 * hproj


def riemann_curvature_from_spray(metric: ConicMetric, x, y) -> np.ndarray:
    """Riemann curvature ``R^i_k`` from the spray alone::

        2 dG^i/dx^k - y^j d^2G^i/dx^j dy^k + 2 G^j d^2G^i/dy^j dy^k - dG^i/dy^j dG^j/dy^k

    Needs only second derivatives of ``G``; used to cross-check the
    Berwald-tensor route (the two agree as ``R^i_k = R_0^i_0k``).
    """
    x, y = metric._check(x, y, metric.fd.margin)
    hx, hy = metric.steps(x, y)
    r = metric.fd.richardson
    Gf = metric._spray_guarded

    def Nf(xs, ys):
        return central_partial(Gf, xs, ys, "y", hy, r)

    G = Gf(x, y)
    N = Nf(x, y)
    Gamma = central_partial(Nf, x, y, "y", hy, r)
    dGdx = central_partial(Gf, x, y, "x", hx, r)  # [i, k]
    dNdx = central_partial(Nf, x, y, "x", hx, r)  # [i, k, j] = d_x^j d_y^k G^i
    return (2 * dGdx - np.einsum("ikj,j->ik", dNdx, y)
            + 2 * np.einsum("j,ijk->ik", G, Gamma) - N @ N)


def hamel_residual(metric: ConicMetric, x, y) -> float:
    """``max_j |F_{x^r y^j} y^r - F_{x^j}|`` by central differences of ``F``."""
    x, y = metric._check(x, y, metric.fd.margin)
    hx, hy = metric.steps(x, y)
    r = metric.fd.richardson

    def Ff(xs, ys):
        if not np.all(metric.domain_ratio(xs, ys) > metric.fd.margin):
            raise BoundaryProximityError("finite-difference stencil leaves the conic domain")
        return metric._F(xs, ys)

    dFdx = central_partial(Ff, x, y, "x", hx, r)

    def dFdy(xs, ys):
        return central_partial(Ff, xs, ys, "y", hy, r)

    mixed = central_partial(dFdy, x, y, "x", hx, r)  # [j, r] = d_x^r d_y^j F
    return float(np.max(np.abs(mixed @ y - dFdx)))


def sample_admissible(metric: ConicMetric, x, rng: np.random.Generator, cos_margin: float = 0.1,
                      max_tries: int = 10_000) -> np.ndarray:
    """Gaussian direction at ``x`` with ``domain_ratio >= cos_margin * |b|_a``
    (for Kropina data: the a-angle to the cone boundary is bounded below)."""
    from .exceptions import SamplingError

    x = np.asarray(x, dtype=float)
    scale = 1.0
    if isinstance(metric, KropinaMetric):
        scale = float(np.sqrt(metric.data.b_squared(x)))
    for _ in range(max_tries):
        y = rng.normal(size=metric.dim)
        if metric.domain_ratio(x, y) > cos_margin * scale:
            return y
    raise SamplingError(f"no admissible direction found in {max_tries} tries")


def positivity_check(metric: ConicMetric, x, y) -> bool:
    """Cholesky test of the fundamental tensor at one admissible sample."""
    return cholesky_pd(metric.fundamental_tensor(x, y)).is_pd
