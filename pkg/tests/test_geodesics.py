import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kropina.classify import SphereKillingParams, euclidean_navigation, sphere_navigation
from kropina.conic_kropina import KropinaMetric
from kropina.exceptions import InputError
from kropina.geodesics import (
    COMPLETED,
    LEFT_CHART,
    LEFT_DOMAIN,
    f_length,
    integrate,
    samples_to_csv,
)
from kropina.navigation import NavigationData, nav_to_kropina
from kropina.riemannian import cylinder, cylinder_field


def flat_metric(C=(1.0, 0.0)):
    return KropinaMetric(nav_to_kropina(euclidean_navigation(np.asarray(C, dtype=float))))


class Walled(KropinaMetric):
    """Flat Kropina metric whose cone is cut off beyond the wall ``x1 = 1``."""

    def domain_ratio(self, x, y):
        x = np.asarray(x, dtype=float)
        return np.minimum(super().domain_ratio(x, y), 1.0 - x[..., 0])

    def _spray_and_ratio(self, x, y):
        G, ratio = super()._spray_and_ratio(x, y)
        return G, min(ratio, 1.0 - float(np.asarray(x)[0]))


def slow_sphere_start(nav, x, theta):
    """Velocity ``W + u`` with ``|u|_h = 1`` tilted ``theta`` away from ``-W``; ``F = 1/(2 h(y, W))``."""
    h, W = nav.model.metric(x), nav.wind(x)
    e = np.zeros_like(W)
    e[1] = 1.0
    e -= (e @ h @ W) * W
    e /= np.sqrt(e @ h @ e)
    return W + (-np.cos(theta) * W + np.sin(theta) * e)


class TestStraightLines:
    def test_downwind_ray(self):
        res = integrate(flat_metric(), [0.0, 0.0], [1.0, 0.0], 2.0, 1e-2)
        assert res.status == COMPLETED
        np.testing.assert_allclose(res.x[:, 1], 0.0, atol=1e-12)
        np.testing.assert_allclose(res.x[:, 0], res.t, rtol=1e-10)

    def test_diagonal_line(self):
        res = integrate(flat_metric(), [0.0, 0.0], [1.0, 1.0], 2.0, 1e-2)
        d = res.x - res.x[0]
        cross = d[:, 0] - d[:, 1]
        assert np.max(np.abs(cross)) < 1e-6
        assert res.f_drift < 1e-12

    @given(st.floats(-1.4, 1.4), st.floats(0.2, 3.0))
    @settings(max_examples=15)
    def test_collinear_for_any_admissible_direction(self, angle, speed):
        y0 = speed * np.array([np.cos(angle), np.sin(angle)])
        res = integrate(flat_metric(), [0.3, -0.2], y0, 1.0, 5e-2)
        d = res.x - res.x[0]
        cross = d[:, 0] * y0[1] - d[:, 1] * y0[0]
        assert np.max(np.abs(cross)) < 1e-6 * max(1.0, np.max(np.abs(d)))


class TestConservation:
    def test_cylinder_follows_wind(self):
        kd = nav_to_kropina(NavigationData(cylinder(), cylinder_field()))
        res = integrate(KropinaMetric(kd), [0.0, 1.5], [1.0, 0.0], 2 * np.pi, 1e-2)
        np.testing.assert_allclose(res.x[:, 1], 1.5, atol=1e-12)
        np.testing.assert_allclose(res.f_values, res.f_values[0], rtol=1e-12)
        assert res.x[-1, 0] == pytest.approx(2 * np.pi, rel=1e-10)

    def test_sphere_drift_short(self):
        nav = sphere_navigation(SphereKillingParams.seed(2, 1.0))
        x0 = np.array([0.1, -0.2, 0.05])
        res = integrate(KropinaMetric(nav_to_kropina(nav)), x0, slow_sphere_start(nav, x0, 0.5), 1.0, 1e-2)
        assert res.status == COMPLETED and res.f_drift < 1e-8

    def test_fast_sphere_geodesic_leaves_chart(self):
        nav = sphere_navigation(SphereKillingParams.seed(2, 1.0))
        kd = nav_to_kropina(nav)
        x0 = np.zeros(3)
        y0 = 40.0 * nav.wind(x0)
        res = integrate(KropinaMetric(kd), x0, y0, 5.0, 1e-2)
        assert res.status == LEFT_CHART and res.t_exit < 5.0
        assert all(kd.is_valid(x) for x in res.x)


class TestGuard:
    def test_left_domain_bisection(self):
        m = Walled(nav_to_kropina(euclidean_navigation(np.array([1.0, 0.0]))))
        res = integrate(m, [0.0, 0.0], [1.0, 0.0], 3.0, 0.1)
        assert res.status == LEFT_DOMAIN
        assert res.t_exit == pytest.approx(1.0, abs=1e-7)
        assert res.status_label().startswith("left_domain(")
        assert all(m.contains(x, y) for x, y in zip(res.x, res.y))
        assert np.all(res.f_values > 0)

    def test_rejects_upwind(self):
        with pytest.raises(InputError):
            integrate(flat_metric(), [0.0, 0.0], [-1.0, 0.0], 1.0, 0.1)

    @pytest.mark.parametrize("t_max,dt", [(1.0, 0.0), (0.0, 0.1), (1.0, -1.0)])
    def test_rejects_bad_steps(self, t_max, dt):
        with pytest.raises(InputError):
            integrate(flat_metric(), [0.0, 0.0], [1.0, 0.0], t_max, dt)

    def test_rejects_wrong_shape(self):
        with pytest.raises(InputError):
            integrate(flat_metric(), [0.0, 0.0, 0.0], [1.0, 0.0], 1.0, 0.1)

    def test_partial_last_step(self):
        res = integrate(flat_metric(), [0.0, 0.0], [1.0, 0.0], 0.25, 0.1)
        assert res.t[-1] == pytest.approx(0.25, abs=1e-15) and res.t.size == 4


class TestFLength:
    def test_downwind_unit_time(self):
        m = flat_metric()
        samples = [(t, [2.0 * t, 0.0], [2.0, 0.0]) for t in np.linspace(0, 1, 11)]
        assert f_length(m, samples) == pytest.approx(1.0, abs=1e-14)

    def test_half_speed(self):
        m = flat_metric()
        samples = [(t, [t, 0.0], [1.0, 0.0]) for t in np.linspace(0, 1, 11)]
        assert f_length(m, samples) == pytest.approx(0.5, abs=1e-14)

    def test_additivity(self):
        m = flat_metric()
        ts = np.linspace(0, 1, 21)
        rows = [(t, [2 * t, np.sin(t)], [2.0, np.cos(t)]) for t in ts]
        whole = f_length(m, rows)
        assert abs(whole - f_length(m, rows[:11]) - f_length(m, rows[10:])) < 1e-12

    def test_corner_allowed(self):
        m = flat_metric()
        rows = [(0.0, [0, 0], [1.0, 1.0]), (1.0, [1, 1], [1.0, 1.0]),
                (1.0, [1, 1], [1.0, -1.0]), (2.0, [2, 0], [1.0, -1.0])]
        assert f_length(m, rows) == pytest.approx(2.0)  # F((1,+-1)) = 2/2

    def test_reparametrisation(self):
        m = flat_metric()
        t = np.linspace(0, 1, 2001)
        path = lambda s: np.array([s + s**2, 0.3 * s])
        vel = lambda s: np.array([1 + 2 * s, 0.3])
        slow = [(ti, path(ti), vel(ti)) for ti in t]
        fast = [(ti / 2, path(ti), 2 * vel(ti)) for ti in t]
        a, b = f_length(m, slow), f_length(m, fast)
        assert abs(a - b) < 1e-10 * abs(a)

    def test_inadmissible_sample(self):
        with pytest.raises(InputError):
            f_length(flat_metric(), [(0.0, [0, 0], [1.0, 0.0]), (1.0, [1, 0], [-1.0, 0.0])])

    def test_decreasing_time(self):
        with pytest.raises(InputError):
            f_length(flat_metric(), [(1.0, [0, 0], [1.0, 0.0]), (0.0, [1, 0], [1.0, 0.0])])

    def test_matches_integrator_length(self):
        res = integrate(flat_metric(), [0.0, 0.0], [2.0, 0.0], 1.0, 0.1)
        assert res.f_length == pytest.approx(f_length(flat_metric(), res.samples), abs=1e-15)
        assert res.f_length == pytest.approx(1.0, abs=1e-12)


class TestCSV:
    def test_header_and_precision(self):
        res = integrate(flat_metric(), [0.0, 0.0], [1.0, 1.0 / 3.0], 0.2, 0.1)
        lines = res.to_csv().splitlines()
        assert lines[0] == "t,x1,x2,y1,y2,F"
        assert len(lines) == 1 + res.t.size
        back = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        np.testing.assert_array_equal(back[:, 3:5], res.y)
        np.testing.assert_array_equal(back[:, 5], res.f_values)

    def test_standalone_writer(self):
        text = samples_to_csv([0.0], [[1.0]], [[0.1]], [5.0])
        assert text == "t,x1,y1,F\n0,1,0.10000000000000001,5\n"
