"""Constructors and verifiers for constant-flag-curvature Kropina structures.

Covers the unit Killing families on E^n and S^(2m-1), the CC checker, the
moduli normal forms, conic-isometry verification and projective flatness.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .conic_kropina import (
    FDConfig,
    FlagFrame,
    KropinaMetric,
    curvature_tensors,
    flag_curvature,
    hamel_residual,
    sample_admissible,
)
from .exceptions import BoundaryProximityError, InputError, SamplingError, ValidationError
from .linalg_core import (
    J2,
    SkewNormalForm,
    as_skew,
    random_orthogonal,
    rotation_to_first_axis,
    skew_normal_form,
)
from .navigation import KropinaData, NavigationData, kropina_to_nav, nav_to_kropina
from .riemannian import (
    RiemannianModel,
    VectorFieldModel,
    constant_field,
    covariant_derivative,
    euclidean,
    killing_report,
    sectional_curvature,
    sphere_projective,
)

PARAM_TOL = 1e-10
CONSTANT_CURVATURE_TAGS = ("euclidean", "sphere_projective", "s3_chart", "cylinder", "torus")


# ---------------------------------------------------------------------------
# Killing families
# ---------------------------------------------------------------------------

def euclidean_killing(C) -> VectorFieldModel:
    """Constant unit field ``W^i = C^i`` on E^n."""
    C = np.asarray(C, dtype=float)
    if C.ndim != 1 or C.size < 1:
        raise InputError("C must be a vector")
    if abs(np.linalg.norm(C) - 1.0) > 1e-12:
        raise ValidationError(f"C must have unit length, |C| = {np.linalg.norm(C):.6g}")
    return constant_field(C)


@dataclass(frozen=True)
class SphereKillingParams:
    """Skew ``Q`` and vector ``C`` for a unit Killing field on S^(2m-1) of curvature ``K``.

    Valid parameters satisfy ``Q^T Q + C C^T = K I``, ``Q^T C = 0`` and
    ``C.C = K``; equivalently ``Omega^T Omega = K I``.
    """

    m: int
    K: float
    Q: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        n = 2 * self.m - 1
        if self.m < 2:
            raise ValidationError("m must be >= 2")
        if not self.K > 0:
            raise ValidationError("K must be positive")
        Q = np.asarray(self.Q, dtype=float)
        C = np.asarray(self.C, dtype=float)
        if Q.shape != (n, n) or C.shape != (n,):
            raise ValidationError(f"Q must be {n}x{n} and C of length {n}")
        try:
            Q = as_skew(Q, "Q")
        except InputError as exc:
            raise ValidationError(str(exc)) from exc
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "C", C)
        res = self.residuals()
        names = {
            "QtQ_plus_CCt": "Q_jr Q^j_s + C_r C_s = K delta_rs",
            "QtC": "Q_jr C^j = 0",
            "CdotC": "C.C = K",
        }
        for key, label in names.items():
            if res[key] > PARAM_TOL * max(1.0, self.K):
                raise ValidationError(f"violated identity {label} (residual {res[key]:.3g})")

    @property
    def n(self) -> int:
        return 2 * self.m - 1

    def residuals(self) -> dict:
        Q, C, K = self.Q, self.C, self.K
        return {
            "QtQ_plus_CCt": float(np.max(np.abs(Q.T @ Q + np.outer(C, C) - K * np.eye(self.n)))),
            "QtC": float(np.max(np.abs(Q.T @ C))),
            "CdotC": float(abs(C @ C - K)),
        }

    @property
    def Omega(self) -> np.ndarray:
        """``[[0, C^T], [-C, -Q]]``."""
        n = self.n
        out = np.zeros((n + 1, n + 1))
        out[0, 1:] = self.C
        out[1:, 0] = -self.C
        out[1:, 1:] = -self.Q
        return out

    @classmethod
    def from_omega(cls, Omega, K: float) -> "SphereKillingParams":
        Omega = as_skew(Omega, "Omega")
        m = Omega.shape[0] // 2
        return cls(m=m, K=K, Q=-Omega[1:, 1:], C=Omega[0, 1:].copy())

    @classmethod
    def seed(cls, m: int, K: float = 1.0) -> "SphereKillingParams":
        """Canonical ``C = sqrt(K) e_1``, ``Q = sqrt(K) (0 + J + ... + J)``."""
        n = 2 * m - 1
        s = np.sqrt(K)
        Q = np.zeros((n, n))
        for r in range(m - 1):
            Q[1 + 2 * r:3 + 2 * r, 1 + 2 * r:3 + 2 * r] = J2
        C = np.zeros(n)
        C[0] = 1.0
        return cls(m=m, K=K, Q=s * Q, C=s * C)

    def conjugate(self, g: np.ndarray) -> "SphereKillingParams":
        """Parameters of the pushed-forward field: ``Omega -> g^T Omega g``."""
        return SphereKillingParams.from_omega(g.T @ self.Omega @ g, self.K)

    def to_dict(self) -> dict:
        return {"m": self.m, "K": self.K, "Q": self.Q.tolist(), "C": self.C.tolist()}


def random_sphere_params(m: int, K: float, rng: np.random.Generator) -> SphereKillingParams:
    """Seed parameters conjugated by a Haar-random element of O(2m)."""
    return SphereKillingParams.seed(m, K).conjugate(random_orthogonal(2 * m, rng))


def _sphere_field(Q: np.ndarray, C: np.ndarray, sign: float) -> VectorFieldModel:
    # W = Q x + s C + s (x.C) x ; s = +1 east, -1 west
    def comp(x):
        x = np.asarray(x, dtype=float)
        xc = np.einsum("...j,j->...", x, C)
        return np.einsum("ij,...j->...i", Q, x) + sign * (C + xc[..., None] * x)

    def comp_dx(x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        xc = np.einsum("...j,j->...", x, C)
        return Q + sign * (np.einsum("...i,j->...ij", x, C) + xc[..., None, None] * np.eye(n))

    return VectorFieldModel(comp, comp_dx, name="sphere_killing" if sign > 0 else "sphere_killing_west")


def sphere_killing(params: SphereKillingParams) -> VectorFieldModel:
    """Eastern-chart field ``W^i = Q^i_r x^r + C^i + (x.C) x^i``."""
    return _sphere_field(params.Q, params.C, +1.0)


def western_killing(params: SphereKillingParams) -> VectorFieldModel:
    """Western-chart extension ``W = Q x - C - (x.C) x``."""
    return _sphere_field(params.Q, params.C, -1.0)


def western_extension(params: SphereKillingParams, x) -> np.ndarray:
    return western_killing(params)(x)


def sphere_killing_lowered(params: SphereKillingParams, x) -> np.ndarray:
    """Closed form ``W_i = (Q_ir x^r + C_i) / (K (1 + x.x))``."""
    x = np.asarray(x, dtype=float)
    s = 1.0 + np.sum(x * x, axis=-1)
    return (np.einsum("ij,...j->...i", params.Q, x) + params.C) / (params.K * s)[..., None]


def sphere_covariant_closed_form(params: SphereKillingParams, x) -> np.ndarray:
    """Closed form of ``W_{i||j}`` for the eastern sphere field::

        ((1+x.x) Q_ij + x_i P_j - x_j P_i) / (K (1+x.x)^2),  P = Q x + C
    """
    x = np.asarray(x, dtype=float)
    s = 1.0 + x @ x
    P = params.Q @ x + params.C
    return (s * params.Q + np.outer(x, P) - np.outer(P, x)) / (params.K * s**2)


def sphere_navigation(params: SphereKillingParams, hemisphere: str = "east", k: float = 0.0) -> NavigationData:
    from .navigation import ScalarField

    model = sphere_projective(params.m, params.K, hemisphere)
    fieldm = sphere_killing(params) if hemisphere == "east" else western_killing(params)
    spec = {"tag": "sphere_projective", "m": params.m, "K": params.K, "hemisphere": hemisphere,
            "Q": params.Q.tolist(), "C": params.C.tolist(), "k": float(k)}
    return NavigationData(model, fieldm, ScalarField.constant(k, model.dim), spec=spec)


def euclidean_navigation(C, k: float = 0.0) -> NavigationData:
    from .navigation import ScalarField

    C = np.asarray(C, dtype=float)
    model = euclidean(C.size)
    spec = {"tag": "euclidean", "n": int(C.size), "C": C.tolist(), "k": float(k)}
    return NavigationData(model, euclidean_killing(C), ScalarField.constant(k, C.size), spec=spec)


# ---------------------------------------------------------------------------
# CC check
# ---------------------------------------------------------------------------

@dataclass
class CCReport:
    K: float
    killing_residual: float
    unit_residual: float
    sectional_max_dev: float
    flag_curvature_max_dev: float
    flag_curvature_values: list
    cc_declared: bool
    confirmed: bool
    seed: int
    n_samples: int
    tolerances: dict

    def to_dict(self) -> dict:
        return {
            "check": "cc",
            "residuals": {
                "killing": self.killing_residual,
                "unit": self.unit_residual,
                "sectional_curvature_max_dev": self.sectional_max_dev,
                "flag_curvature_max_dev": self.flag_curvature_max_dev,
            },
            "decision": self.confirmed,
            "cc_declared": self.cc_declared,
            "K": self.K,
            "seed": self.seed,
            "n_samples": self.n_samples,
            "tolerances": dict(self.tolerances),
        }


CC_TOLERANCES = {"killing": 1e-8, "sectional": 1e-4, "flag": 1e-3}


def sample_flags(metric: KropinaMetric, rng: np.random.Generator, count: int,
                 cos_margin: float = 0.1, max_tries: int = 10_000):
    """``count`` admissible flags ``(x, y, X)`` with stencil room inside the cone."""
    out = []
    tries = 0
    while len(out) < count:
        if tries >= max_tries:
            raise SamplingError(f"found only {len(out)} admissible flags in {max_tries} tries")
        tries += 1
        x = metric.sample_points(rng, 1)[0]
        try:
            y = sample_admissible(metric, x, rng, cos_margin, max_tries=100)
        except SamplingError:
            continue
        X = rng.normal(size=metric.dim)
        out.append(FlagFrame(x, y, X))
    return out


def cc_check(nav: NavigationData, K: float, n_samples: int = 20, seed: int = 0,
             tolerances: Optional[dict] = None, fd: FDConfig = FDConfig()) -> CCReport:
    """Numerical CC verdict for navigation data.

    CC is declared when the wind is Killing and unit (residual < 1e-8) and
    the sea has sectional curvature ``K`` (max deviation < 1e-4); the flag
    curvature of the induced Kropina metric is then expected to equal ``K``
    within 1e-3, which ``confirmed`` records.
    """
    tol = {**CC_TOLERANCES, **(tolerances or {})}
    rng = np.random.default_rng(seed)
    model = nav.model
    pts = model.sample_points(rng, n_samples)
    rep = killing_report(model, nav.wind, pts)

    sec_dev = 0.0
    for x in pts:
        u, v = rng.normal(size=(2, model.dim))
        sec_dev = max(sec_dev, abs(sectional_curvature(model, x, u, v) - K))

    metric = KropinaMetric(nav_to_kropina(nav), fd)
    flags = sample_flags(metric, rng, n_samples)
    values = []
    for fr in flags:
        try:
            values.append(flag_curvature(metric, fr))
        except BoundaryProximityError:
            continue
    if not values:
        raise SamplingError("no flag admitted a curvature stencil")
    flag_dev = float(max(abs(v - K) for v in values))

    declared = bool(max(rep.max_killing_residual, rep.max_unit_residual) < tol["killing"]
                    and sec_dev < tol["sectional"])
    return CCReport(
        K=float(K),
        killing_residual=rep.max_killing_residual,
        unit_residual=rep.max_unit_residual,
        sectional_max_dev=float(sec_dev),
        flag_curvature_max_dev=flag_dev,
        flag_curvature_values=[float(v) for v in values],
        cc_declared=declared,
        confirmed=bool(declared and flag_dev < tol["flag"]),
        seed=seed,
        n_samples=n_samples,
        tolerances=tol,
    )


# ---------------------------------------------------------------------------
# Moduli
# ---------------------------------------------------------------------------

def moduli_normal_form(params: SphereKillingParams) -> SkewNormalForm:
    return skew_normal_form(params.Omega)


def euclidean_moduli_normal_form(C) -> tuple:
    """Rotate a unit ``C`` onto ``e_1``; returns ``(R @ C, R)`` with ``R`` in SO(n)."""
    C = np.asarray(C, dtype=float)
    euclidean_killing(C)  # validation
    R = rotation_to_first_axis(C)
    return R @ C, R


# ---------------------------------------------------------------------------
# Conic isometries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IsometryWitness:
    """Coordinate map ``phi`` with Jacobian ``jac[i, j] = d phi^i / d x^j`` and
    the conformal exponent ``tau(x)`` claimed to relate the Kropina data."""

    phi: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    tau: Callable[[np.ndarray], float]

    @classmethod
    def linear(cls, A, shift=None, tau: float = 0.0) -> "IsometryWitness":
        A = np.asarray(A, dtype=float)
        c = np.zeros(A.shape[0]) if shift is None else np.asarray(shift, dtype=float)
        return cls(lambda x: A @ np.asarray(x, float) + c, lambda x: A, lambda x: float(tau))


@dataclass
class IsometryCheck:
    isometry: bool
    residuals: dict
    conditions: dict

    def to_dict(self) -> dict:
        return {"check": "conic_isometry", "residuals": dict(self.residuals),
                "decision": self.isometry, "conditions": dict(self.conditions)}


def conic_isometry_check(witness: IsometryWitness, kd1: KropinaData, kd2: KropinaData, samples,
                         rng: Optional[np.random.Generator] = None, n_directions: int = 8,
                         tol: float = 1e-8) -> IsometryCheck:
    """Verify the three equivalent conic-isometry conditions at sample points.

    (i) ``F_2(phi(x), D phi y) = F_1(x, y)`` on admissible ``y`` and the cone
    maps into the cone; (ii) ``phi^* a_2 = e^tau a_1``, ``phi^* b_2 = e^tau b_1``
    with ``tau = log(b_2^2(phi x) / b_1^2(x))``; (iii) ``phi^* h_2 = h_1`` and
    ``phi_* W_1 = W_2``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    nav1 = kropina_to_nav(kd1)
    nav2 = kropina_to_nav(kd2)
    m1 = KropinaMetric(kd1)
    m2 = KropinaMetric(kd2)

    r_F = r_cone = r_a = r_b = r_tau = r_h = r_W = 0.0
    for x in pts:
        J = np.asarray(witness.jac(x), dtype=float)
        if abs(np.linalg.det(J)) < 1e-12:
            raise InputError("witness Jacobian is singular")
        px = np.asarray(witness.phi(x), dtype=float)
        # (i)
        for _ in range(n_directions):
            y = sample_admissible(m1, x, rng, cos_margin=0.01)
            Y = J @ y
            if not m2.contains(px, Y):
                r_cone = max(r_cone, 1.0)
                r_F = np.inf
                continue
            F1 = m1.F(x, y)
            r_F = max(r_F, abs(m2.F(px, Y) - F1) / F1)
        # (ii)
        tau = float(witness.tau(x))
        e = np.exp(tau)
        a1, a2 = kd1.a(x), kd2.a(px)
        b1, b2 = kd1.b(x), kd2.b(px)
        r_a = max(r_a, float(np.max(np.abs(J.T @ a2 @ J - e * a1))) / float(np.max(np.abs(a1))))
        r_b = max(r_b, float(np.max(np.abs(J.T @ b2 - e * b1))) / float(np.max(np.abs(b1))))
        r_tau = max(r_tau, abs(tau - float(np.log(kd2.b_squared(px) / kd1.b_squared(x)))))
        # (iii)
        h1, h2 = nav1.model.metric(x), nav2.model.metric(px)
        r_h = max(r_h, float(np.max(np.abs(J.T @ h2 @ J - h1))) / float(np.max(np.abs(h1))))
        r_W = max(r_W, float(np.max(np.abs(J @ nav1.wind(x) - nav2.wind(px)))))

    residuals = {"F_pullback": float(r_F), "cone_map": float(r_cone), "alpha_pullback": r_a,
                 "beta_pullback": r_b, "tau": r_tau, "h_pullback": r_h, "W_pushforward": r_W}
    conditions = {
        "i_conic_isometry": bool(r_F < tol and r_cone == 0.0),
        "ii_alpha_beta": bool(max(r_a, r_b, r_tau) < tol),
        "iii_navigation": bool(max(r_h, r_W) < tol),
    }
    return IsometryCheck(all(conditions.values()), residuals, conditions)


def _rotation2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# Projective flatness
# ---------------------------------------------------------------------------

@dataclass
class ProjectiveFlatnessReport:
    parallel_residual: float
    killing_residual: float
    riemann_proj_flat: Optional[bool]
    s_condition_residual: float
    hamel_residual: float
    hamel_residuals: list
    decision: Optional[bool]
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    n_samples: int = 0

    def to_dict(self) -> dict:
        return {
            "check": "projective_flatness",
            "residuals": {
                "parallel": self.parallel_residual,
                "killing": self.killing_residual,
                "s_condition": self.s_condition_residual,
                "hamel_max": self.hamel_residual,
            },
            "riemann_projectively_flat": self.riemann_proj_flat,
            "decision": self.decision,
            "seed": self.seed,
            "n_samples": self.n_samples,
            "tolerances": dict(self.tolerances),
        }


PF_TOLERANCES = {"parallel": 1e-8, "hamel": 1e-6}


def _s_condition(model: RiemannianModel, wind: VectorFieldModel, x) -> float:
    """``max |S_ij - (W_i S_j - W_j S_i)|`` with ``S_ij`` the skew part of
    ``W_i||j`` and ``S_i = W^r S_ri``."""
    M = covariant_derivative(model, wind, x)
    S = 0.5 * (M - M.T)
    W = wind(x)
    W_low = model.metric(x) @ W
    S_vec = W @ S
    return float(np.max(np.abs(S - (np.outer(W_low, S_vec) - np.outer(S_vec, W_low)))))


def projective_flatness_decision(nav: NavigationData, n_samples: int = 20, seed: int = 0,
                                 tolerances: Optional[dict] = None,
                                 fd: FDConfig = FDConfig()) -> ProjectiveFlatnessReport:
    """Decide projective flatness of the induced Kropina metric.

    The decision is "W parallel and base projectively flat". Projective
    flatness of the base is known only for the constant-curvature catalog
    models; otherwise ``riemann_proj_flat`` and ``decision`` are ``None``.
    Hamel residuals of the Kropina metric are reported alongside.
    """
    tol = {**PF_TOLERANCES, **(tolerances or {})}
    rng = np.random.default_rng(seed)
    model = nav.model
    pts = model.sample_points(rng, n_samples)
    rep = killing_report(model, nav.wind, pts)
    s_res = max(_s_condition(model, nav.wind, x) for x in pts)

    metric = KropinaMetric(nav_to_kropina(nav), fd)
    hamel = []
    for x in pts:
        y = sample_admissible(metric, x, rng)
        hamel.append(hamel_residual(metric, x, y))

    proj_flat = True if model.tag in CONSTANT_CURVATURE_TAGS else None
    parallel = rep.max_parallel_residual
    decision = None if proj_flat is None else bool(parallel < tol["parallel"] and proj_flat)
    return ProjectiveFlatnessReport(
        parallel_residual=parallel,
        killing_residual=rep.max_killing_residual,
        riemann_proj_flat=proj_flat,
        s_condition_residual=s_res,
        hamel_residual=float(max(hamel)),
        hamel_residuals=[float(h) for h in hamel],
        decision=decision,
        tolerances=tol,
        seed=seed,
        n_samples=n_samples,
    )


def report_json(report) -> str:
    return json.dumps(report.to_dict(), sort_keys=True)
