import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kropina.classify import (
    SphereKillingParams,
    euclidean_navigation,
    random_sphere_params,
    sample_flags,
    sphere_navigation,
)
from kropina.conic_kropina import (
    FDConfig,
    FlagFrame,
    KropinaMetric,
    QuadraticMetric,
    central_partial,
    curvature_tensors,
    domain_contains,
    F_eval,
    flag_curvature,
    fundamental_tensor,
    hamel_residual,
    positivity_check,
    riemann_curvature_from_spray,
    sample_admissible,
    scalar_flag_residual,
    scalar_flag_sides,
    spray,
    spray_energy,
)
from kropina.exceptions import BoundaryProximityError, DegenerateFlagError, OutsideConicDomainError
from kropina.navigation import KropinaData, NavigationData, nav_F, nav_to_kropina
from kropina.riemannian import (
    cylinder,
    cylinder_field,
    euclidean,
    s3_chart,
    s3_field,
    sphere_projective,
    torus,
    torus_field,
)
from oracles import kropina_F, numeric_hessian


def kropina(nav, fd=FDConfig()):
    return KropinaMetric(nav_to_kropina(nav), fd)


E2 = kropina(euclidean_navigation([1.0, 0.0]))
SPHERE = kropina(sphere_navigation(SphereKillingParams.seed(2, 1.0)))
SPHERE4 = kropina(sphere_navigation(SphereKillingParams.seed(2, 4.0)))
CYL = kropina(NavigationData(cylinder(), cylinder_field()))
TORUS = kropina(NavigationData(torus(), torus_field()))
S3 = kropina(NavigationData(s3_chart(), s3_field()))

CATALOG = {
    "E2": E2,
    "E3": kropina(euclidean_navigation([0.0, 0.6, 0.8])),
    "cylinder": CYL,
    "torus": TORUS,
    "s3": S3,
    "sphere_K1": SPHERE,
    "sphere_K4": SPHERE4,
    "sphere_m3": kropina(sphere_navigation(random_sphere_params(3, 2.0, np.random.default_rng(0)))),
    "sphere_west": kropina(sphere_navigation(SphereKillingParams.seed(2, 1.0), "west")),
}


def admissible_pairs(metric, count, seed, cos_margin=0.1):
    rng = np.random.default_rng(seed)
    xs = metric.sample_points(rng, count)
    return [(x, sample_admissible(metric, x, rng, cos_margin)) for x in xs]


class TestDomainAndF:
    def test_e2_domain(self):
        assert domain_contains(E2, [0.0, 0.0], [1.0, 5.0])
        assert not domain_contains(E2, [0.0, 0.0], [-1.0, 0.0])
        assert not domain_contains(E2, [0.0, 0.0], [0.0, 1.0])

    def test_s3_boundary_direction(self):
        # at u3 = pi/4 the cone is v1 + v2 > 0
        x = [0.1, 0.2, np.pi / 4]
        assert not domain_contains(S3, x, [1.0, -1.0, 3.0])
        assert domain_contains(S3, x, [1.0, -0.5, 3.0])

    @pytest.mark.parametrize("y,F", [([1.0, 1.0], 1.0), ([2.0, 2.0], 2.0), ([1.0, 0.0], 0.5)])
    def test_e2_values(self, y, F):
        assert F_eval(E2, [0.0, 0.0], y) == pytest.approx(F, rel=1e-15)

    def test_outside_domain_raises(self):
        with pytest.raises(OutsideConicDomainError):
            F_eval(E2, [0.0, 0.0], [-1.0, 1.0])

    @pytest.mark.parametrize("name", list(CATALOG))
    def test_matches_navigation_formula(self, name):
        metric = CATALOG[name]
        from kropina.navigation import kropina_to_nav
        nav = kropina_to_nav(metric.data)
        for x, y in admissible_pairs(metric, 20, 1):
            assert metric.F(x, y) == pytest.approx(nav_F(nav, x, y), rel=1e-12)

    @given(st.floats(0.01, 100.0), st.integers(0, 2**32 - 1))
    def test_positive_homogeneity(self, lam, seed):
        (x, y), = admissible_pairs(SPHERE, 1, seed)
        assert SPHERE.F(x, lam * y) == pytest.approx(lam * SPHERE.F(x, y), rel=1e-12)


class TestFundamentalTensor:
    def test_e2_contracts_to_F2(self):
        y = np.array([1.0, 1.0])
        g = fundamental_tensor(E2, [0.0, 0.0], y)
        assert y @ g @ y == pytest.approx(1.0, rel=1e-14)

    def test_matches_numeric_hessian_oracle(self):
        a = np.array([[2.0, 0.3], [0.3, 1.0]])
        b = np.array([1.0, 0.5])
        metric = KropinaMetric(KropinaData.constant(a, b))
        for y in ([1.0, 0.2], [0.4, 1.0], [2.0, -1.0]):
            y = np.array(y)
            H = 0.5 * numeric_hessian(lambda v: kropina_F(a, b, v) ** 2, y, h=1e-4)
            g = metric.fundamental_tensor(np.zeros(2), y)
            np.testing.assert_allclose(g, H, rtol=1e-6)

    @pytest.mark.parametrize("name", list(CATALOG))
    def test_hessian_oracle_on_catalog(self, name):
        metric = CATALOG[name]
        for x, y in admissible_pairs(metric, 5, 2, cos_margin=0.3):
            H = 0.5 * numeric_hessian(lambda v: float(metric._F(x, v)) ** 2, y, h=1e-4 * np.linalg.norm(y))
            g = metric.fundamental_tensor(x, y)
            np.testing.assert_allclose(g, H, rtol=1e-5, atol=1e-5 * np.abs(g).max())

    @pytest.mark.parametrize("name", list(CATALOG))
    def test_euler_relations(self, name):
        metric = CATALOG[name]
        for x, y in admissible_pairs(metric, 30, 3):
            F = metric.F(x, y)
            g = metric.fundamental_tensor(x, y)
            l_low = metric.dF_dy(x, y)
            assert y @ l_low == pytest.approx(F, rel=1e-9)
            np.testing.assert_allclose(g @ y, F * l_low, rtol=1e-9, atol=1e-9 * np.abs(g @ y).max())
            assert y @ g @ y == pytest.approx(F**2, rel=1e-9)

    @pytest.mark.parametrize("lam", [2.0, 7.0, 10.0])
    def test_zero_homogeneity(self, lam):
        for x, y in admissible_pairs(SPHERE, 10, 4):
            np.testing.assert_allclose(SPHERE.fundamental_tensor(x, lam * y),
                                       SPHERE.fundamental_tensor(x, y), rtol=1e-9, atol=1e-12)

    @pytest.mark.parametrize("name", list(CATALOG))
    def test_positive_definite(self, name):
        metric = CATALOG[name]
        assert all(positivity_check(metric, x, y) for x, y in admissible_pairs(metric, 200, 5, 0.01))

    @pytest.mark.parametrize("name", ["sphere_K1", "s3", "sphere_m3"])
    def test_g_dx_matches_finite_differences(self, name):
        metric = CATALOG[name]
        for x, y in admissible_pairs(metric, 5, 6, cos_margin=0.3):
            fd = central_partial(metric._g, x, y, "x", 1e-4, richardson=True)
            an = metric.fundamental_tensor_dx(x, y)
            np.testing.assert_allclose(an, fd, atol=1e-7 * max(1.0, np.abs(an).max()))


class TestSpray:
    @pytest.mark.parametrize("name", list(CATALOG))
    def test_gamma_route_equals_energy_route(self, name):
        metric = CATALOG[name]
        for x, y in admissible_pairs(metric, 10, 7):
            Gg = spray(metric, x, y)
            Ge = spray_energy(metric, x, y)
            scale = max(np.abs(Gg).max(), 1e-12 * np.linalg.norm(y) ** 2, 1e-300)
            assert np.abs(Gg - Ge).max() <= 1e-5 * scale + 1e-12

    @pytest.mark.parametrize("name", list(CATALOG))
    def test_fast_spray_equals_gamma_route(self, name):
        metric = CATALOG[name]
        for x, y in admissible_pairs(metric, 10, 8):
            np.testing.assert_allclose(metric._spray(x, y), metric._spray_gamma(x, y),
                                       rtol=1e-10, atol=1e-12 * np.linalg.norm(y) ** 2)

    def test_flat_spray_vanishes(self):
        for metric in (E2, CYL, TORUS):
            for x, y in admissible_pairs(metric, 5, 9):
                assert np.abs(spray(metric, x, y)).max() < 1e-14

    @pytest.mark.parametrize("lam", [2.0, 10.0])
    def test_two_homogeneous(self, lam):
        for x, y in admissible_pairs(SPHERE, 10, 10):
            np.testing.assert_allclose(spray(SPHERE, x, lam * y), lam**2 * spray(SPHERE, x, y), rtol=1e-8)

    def test_riemannian_generator_spray_is_christoffel(self):
        from kropina.riemannian import christoffel
        model = sphere_projective(2, 2.0)
        Q = QuadraticMetric(model)
        x, y = np.array([0.3, -0.5, 0.2]), np.array([1.0, 0.4, -0.7])
        expected = 0.5 * np.einsum("ijk,j,k->i", christoffel(model, x), y, y)
        np.testing.assert_allclose(spray(Q, x, y), expected, rtol=1e-12)


class TestCurvatureTensors:
    def test_euclidean_vanishes(self):
        for x, y in admissible_pairs(E2, 3, 11):
            T = curvature_tensors(E2, x, y)
            assert np.abs(T.R).max() < 1e-6
            assert np.abs(T.G).max() < 1e-12

    @pytest.mark.parametrize("name", ["sphere_K1", "s3"])
    def test_internal_consistency(self, name):
        metric = CATALOG[name]
        for x, y in admissible_pairs(metric, 3, 12):
            T = curvature_tensors(metric, x, y)
            scale = np.abs(T.Gamma).max() * np.linalg.norm(y)
            assert np.array_equal(T.Gamma, np.swapaxes(T.Gamma, 1, 2))
            assert np.abs(T.N - T.Gamma @ y).max() < 1e-5 * scale
            assert np.abs(T.G - 0.5 * np.einsum("ijk,j,k->i", T.Gamma, y, y)).max() < 1e-5 * scale * np.linalg.norm(y)
            assert np.abs(T.R + np.swapaxes(T.R, 2, 3)).max() < 1e-12

    def test_sphere_tensor_nonzero(self):
        (x, y), = admissible_pairs(SPHERE, 1, 13)
        assert np.abs(curvature_tensors(SPHERE, x, y).R).max() > 0.1

    @pytest.mark.parametrize("name", ["sphere_K1", "sphere_K4", "s3"])
    def test_berwald_route_matches_spray_route(self, name):
        metric = CATALOG[name]
        for x, y in admissible_pairs(metric, 3, 14):
            Ry = curvature_tensors(metric, x, y).flag_operator()
            Rs = riemann_curvature_from_spray(metric, x, y)
            assert np.abs(Ry - Rs).max() < 1e-4 * max(1.0, np.abs(Ry).max())

    def test_boundary_proximity(self):
        y = np.array([1e-7, 1.0])  # beta / alpha ~ 2e-7 < margin
        with pytest.raises(BoundaryProximityError):
            curvature_tensors(E2, np.zeros(2), y)

    def test_stencil_exit_reported(self):
        # beta/alpha = 1e-4 clears the margin, but the y-stencil (h_y ~ 2e-3) crosses beta = 0
        with pytest.raises(BoundaryProximityError):
            curvature_tensors(SPHERE, np.zeros(3), np.array([1e-4, 1.0, 0.0]))


class TestFlagCurvature:
    def test_euclidean_zero(self):
        for fr in sample_flags(E2, np.random.default_rng(15), 10):
            assert flag_curvature(E2, fr) == pytest.approx(0.0, abs=1e-5)

    @pytest.mark.parametrize("metric,K", [(SPHERE, 1.0), (SPHERE4, 4.0)])
    def test_sphere_constant(self, metric, K):
        for fr in sample_flags(metric, np.random.default_rng(16), 10):
            assert flag_curvature(metric, fr) == pytest.approx(K, abs=1e-3 * K)

    def test_s3_is_one(self):
        for fr in sample_flags(S3, np.random.default_rng(17), 5):
            assert flag_curvature(S3, fr) == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("metric", [CYL, TORUS])
    def test_flat_surfaces_zero(self, metric):
        for fr in sample_flags(metric, np.random.default_rng(18), 5):
            assert flag_curvature(metric, fr) == pytest.approx(0.0, abs=1e-5)

    def test_transverse_shear_invariance(self):
        for fr in sample_flags(SPHERE, np.random.default_rng(19), 3):
            T = curvature_tensors(SPHERE, fr.x, fr.y)
            base = flag_curvature(SPHERE, fr, T)
            for mu in (0.7, -3.0):
                sheared = FlagFrame(fr.x, fr.y, 2.5 * fr.X + mu * fr.y)
                assert flag_curvature(SPHERE, sheared, T) == pytest.approx(base, abs=1e-12)

    def test_dyadic_flagpole_rescaling_is_exact(self):
        # y-steps are relative to |y|, so a power-of-two rescaling reproduces every stencil bit for bit
        for fr in sample_flags(SPHERE, np.random.default_rng(20), 2):
            base = flag_curvature(SPHERE, fr)
            for lam in (0.25, 2.0, 8.0):
                assert flag_curvature(SPHERE, FlagFrame(fr.x, lam * fr.y, fr.X)) == base

    def test_flagpole_rescaling_within_fd_noise(self):
        # for general lambda only rounding in the nested differences differs
        for fr in sample_flags(SPHERE, np.random.default_rng(21), 3):
            base = flag_curvature(SPHERE, fr)
            for lam in (3.0, 0.3, 10.0):
                assert flag_curvature(SPHERE, FlagFrame(fr.x, lam * fr.y, fr.X)) == pytest.approx(base, abs=2e-5)

    def test_degenerate_flag(self):
        x, y = admissible_pairs(SPHERE, 1, 20)[0]
        with pytest.raises(DegenerateFlagError):
            flag_curvature(SPHERE, FlagFrame(x, y, 2.0 * y))

    @pytest.mark.parametrize("K", [1.0, 4.0])
    def test_riemannian_sanity_harness_sign(self, K):
        Q = QuadraticMetric(sphere_projective(2, K))
        rng = np.random.default_rng(21)
        for x in Q.sample_points(rng, 5):
            y, X = rng.normal(size=(2, 3))
            assert flag_curvature(Q, FlagFrame(x, y, X)) == pytest.approx(K, abs=1e-4)

    def test_flag_frame_derived_quantities(self):
        x, y = admissible_pairs(SPHERE, 1, 22)[0]
        l_low, l_up, h = FlagFrame(x, y, np.ones(3)).derived(SPHERE)
        assert l_low @ l_up == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(h @ y, 0.0, atol=1e-12)


class TestScalarFlag:
    def test_euclidean(self):
        for x, y in admissible_pairs(E2, 5, 23):
            assert scalar_flag_residual(E2, x, y, 0.0) < 1e-5

    def test_sphere_true_and_wrong_K(self):
        for x, y in admissible_pairs(SPHERE, 5, 24):
            T = curvature_tensors(SPHERE, x, y)
            _, rhs = scalar_flag_sides(SPHERE, x, y, 1.0, T)
            assert scalar_flag_residual(SPHERE, x, y, 1.0, T) < 1e-3 * np.abs(rhs).max()
            _, rhs2 = scalar_flag_sides(SPHERE, x, y, 2.0, T)
            assert scalar_flag_residual(SPHERE, x, y, 2.0, T) > 0.1 * np.abs(rhs2).max()


class TestHamel:
    @pytest.mark.parametrize("metric", [E2, CYL, TORUS])
    def test_flat_is_projectively_flat(self, metric):
        for x, y in admissible_pairs(metric, 20, 25):
            assert hamel_residual(metric, x, y) < 1e-6

    def test_sphere_not_projectively_flat(self):
        vals = [hamel_residual(SPHERE, x, y) for x, y in admissible_pairs(SPHERE, 20, 26)]
        assert max(vals) > 1e-2

    def test_riemannian_sphere_projective_chart_is_flat(self):
        # Beltrami: the round metric in the projective chart has straight geodesics
        Q = QuadraticMetric(sphere_projective(2, 1.0))
        rng = np.random.default_rng(27)
        for x in Q.sample_points(rng, 5):
            assert hamel_residual(Q, x, rng.normal(size=3)) < 1e-6


def test_fd_config_defaults():
    fd = FDConfig()
    assert (fd.h_y, fd.h_x, fd.richardson) == (1e-3, 3e-4, True)
