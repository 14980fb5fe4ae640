"""Tests for the radial / covering / chordal Loewner flow solvers.

Oracles: closed-form constant-driver solutions (radial slit with tip law
4x/(1+x)^2 = e^{-t}, chordal vertical slit sqrt(z^2+4t)), the conjugation
identity between the covering and radial flows, hydrodynamic asymptotics,
and the exact semigroup property of composed micro-step maps.
"""
import cmath
import math

import numpy as np
import pytest

from twocurve import loewner as lw

SMOOTH = lw.DrivingPath.from_function(
    lambda t: 0.4 * math.sin(2.0 * t) + 0.3 * t, 1.0, 1000)


class TestDrivingPath:
    def test_validation(self):
        with pytest.raises(ValueError, match="start at 0"):
            lw.DrivingPath([0.5, 1.0], [0.0, 0.0])
        with pytest.raises(ValueError, match="increasing"):
            lw.DrivingPath([0.0, 0.5, 0.5], [0.0, 0.0, 0.0])
        with pytest.raises(ValueError, match="finite"):
            lw.DrivingPath([0.0, 1.0], [0.0, math.nan])
        with pytest.raises(ValueError, match="speed"):
            lw.DrivingPath([0.0, 1.0], [0.0, 0.0], [-1.0])
        with pytest.raises(ValueError, match="per interval"):
            lw.DrivingPath([0.0, 1.0], [0.0, 0.0], [1.0, 1.0])

    def test_capacity(self):
        p = lw.DrivingPath([0.0, 1.0, 3.0], [0.0, 0.1, 0.2], [2.0, 0.5])
        assert p.total_capacity == pytest.approx(2.0 + 1.0)
        assert p.capacity_at(0.0) == 0.0
        assert p.capacity_at(1.0) == pytest.approx(2.0)
        assert p.capacity_at(2.0) == pytest.approx(2.5)
        # default speed is 1: capacity equals elapsed time
        q = lw.DrivingPath.constant(0.3, 2.0)
        assert q.capacity_at(1.7) == pytest.approx(1.7)

    def test_value_interpolation(self):
        p = lw.DrivingPath([0.0, 1.0, 2.0], [0.0, 2.0, 2.0])
        assert p.value_at(0.5) == pytest.approx(1.0)
        assert p.value_at(2.0) == pytest.approx(2.0)
        with pytest.raises(ValueError, match="outside"):
            p.value_at(2.5)

    def test_csv_round_trip(self, tmp_path):
        f = tmp_path / "drv.csv"
        SMOOTH.to_csv(f)
        header = f.read_text().splitlines()[0]
        assert header == "t,w,speed"
        back = lw.DrivingPath.from_csv(f)
        np.testing.assert_array_equal(back.times, SMOOTH.times)
        np.testing.assert_array_equal(back.values, SMOOTH.values)
        np.testing.assert_array_equal(back.speed, SMOOTH.speed)

    def test_restarted(self):
        r = SMOOTH.restarted(0.5)
        assert r.times[0] == 0.0
        assert r.value_at(0.0) == pytest.approx(SMOOTH.value_at(0.5))
        assert r.total_capacity == pytest.approx(
            SMOOTH.total_capacity - SMOOTH.capacity_at(0.5))


class TestRadialFlow:
    def test_origin_fixed(self):
        res = lw.radial_flow(SMOOTH, [0.0], 0.9)
        assert res.images[0] == 0.0
        assert not res.swallowed[0]

    def test_origin_derivative_growth(self):
        # |g'(0)| = e^t in capacity parametrization; forward-difference
        # at eps = 1e-6 so the check tolerance is the FD truncation
        p = lw.DrivingPath.constant(0.0, 1.0, 10)
        eps = 1e-6
        res = lw.radial_flow(p, [eps], 0.7)
        assert abs(res.images[0]) / eps == pytest.approx(
            math.exp(0.7), rel=1e-5)

    def test_slit_tip_law(self):
        # constant driver at 0 grows the radial slit [x(t), 1] with
        # 4x/(1+x)^2 = e^{-t}
        x = lw.slit_tip_modulus(0.5)
        assert 4.0 * x / (1.0 + x) ** 2 == pytest.approx(
            math.exp(-0.5), abs=1e-15)
        assert lw.slit_tip_modulus(0.0) == 1.0

    def test_swallowing_classification(self):
        p = lw.DrivingPath.constant(0.0, 1.0, 10)
        x = lw.slit_tip_modulus(0.5)           # ~0.229
        res = lw.radial_flow(p, [x - 0.02, x + 0.02], 0.5)
        assert not res.swallowed[0]
        assert res.swallowed[1]
        # the swallowed point's exit time inverts the tip law
        x1 = x + 0.02
        t_exit = -math.log(4.0 * x1 / (1.0 + x1) ** 2)
        assert res.exit_times[1] == pytest.approx(t_exit, abs=1e-3)
        # the survivor of a real-axis start keeps a real image
        assert abs(res.images[0].imag) < 1e-12

    def test_rotation_equivariance(self):
        alpha = 0.7
        pts = np.array([0.3 + 0.2j, -0.4j, 0.5])
        shifted = lw.DrivingPath(SMOOTH.times, SMOOTH.values + alpha)
        a = lw.radial_flow(SMOOTH, pts, 0.6)
        b = lw.radial_flow(shifted, pts * cmath.exp(1j * alpha), 0.6)
        np.testing.assert_allclose(
            b.images, a.images * cmath.exp(1j * alpha), atol=1e-11)

    def test_semigroup(self):
        pts = [0.3 + 0.2j, -0.5j, 0.1, 0.2 - 0.6j]
        full = lw.radial_flow(SMOOTH, pts, 1.0)
        half = lw.radial_flow(SMOOTH, pts, 0.5)
        rest = lw.radial_flow(SMOOTH.restarted(0.5), half.images, 0.5)
        np.testing.assert_allclose(rest.images, full.images, atol=1e-8)

    def test_rejects_points_outside_disc(self):
        with pytest.raises(ValueError, match="closed disc"):
            lw.radial_flow(SMOOTH, [1.5], 0.1)

    def test_every_point_classified_once(self):
        p = lw.DrivingPath.constant(0.0, 1.0, 10)
        pts = np.linspace(0.05, 0.95, 19)
        res = lw.radial_flow(p, pts, 1.0)
        gone = res.swallowed
        assert np.all(np.isfinite(res.exit_times[gone]))
        assert np.all(np.isfinite(res.images[~gone]))
        assert res.n_swallowed == int(np.sum(pts > lw.slit_tip_modulus(1.0)))


class TestCoveringFlow:
    def test_zero_time_identity(self):
        pts = [2.0, 1.0 + 0.5j]
        res = lw.covering_flow(SMOOTH, pts, 0.0)
        np.testing.assert_allclose(res.images, pts, atol=1e-14)
        assert res.final_capacity == 0.0

    def test_two_pi_equivariance(self):
        v = 2.0
        a = lw.covering_flow(SMOOTH, [v], 0.8).images[0]
        b = lw.covering_flow(SMOOTH, [v + 2.0 * math.pi], 0.8).images[0]
        assert b == pytest.approx(a + 2.0 * math.pi, abs=1e-12)

    def test_conjugation_with_radial(self):
        # e^{i g~(z)} = g(e^{iz}) along whole trajectories, for both
        # boundary and interior starting points
        starts = [2.0, 3.5, 1.0 + 0.5j, 4.0 + 1.2j]
        for t in (0.2, 0.5, 0.8):
            cov = lw.covering_flow(SMOOTH, starts, t)
            rad = lw.radial_flow(
                SMOOTH, [cmath.exp(1j * v) for v in starts], t)
            for a, b in zip(cov.images, rad.images):
                assert abs(cmath.exp(1j * a) - b) < 1e-9

    def test_real_points_stay_real(self):
        res = lw.covering_flow(SMOOTH, [2.0, 5.0], 1.0)
        assert res.images[0].imag == 0.0
        assert res.images[1].imag == 0.0

    def test_semigroup(self):
        pts = [2.0, 1.5 + 0.5j]
        full = lw.covering_flow(SMOOTH, pts, 1.0)
        half = lw.covering_flow(SMOOTH, pts, 0.5)
        rest = lw.covering_flow(SMOOTH.restarted(0.5), half.images, 0.5)
        np.testing.assert_allclose(rest.images, full.images, atol=1e-8)


class TestChordalFlow:
    def test_vertical_closed_form(self):
        # constant driver at 0: g^2 = z^2 + 4t from the separable ODE,
        # so g_t(iy) = i sqrt(y^2 - 4t) while 4t < y^2
        p = lw.DrivingPath.constant(0.0, 1.0, 10)
        for y, t in ((2.0, 0.5), (1.5, 0.4), (3.0, 1.0)):
            res = lw.chordal_flow(p, [1j * y], t)
            assert res.images[0] == pytest.approx(
                1j * math.sqrt(y * y - 4.0 * t), abs=1e-10)

    def test_swallow_time(self):
        p = lw.DrivingPath.constant(0.0, 1.0, 10)
        res = lw.chordal_flow(p, [0.5j], 0.2)
        assert res.swallowed[0]
        assert res.exit_times[0] == pytest.approx(0.5 ** 2 / 4.0, abs=2e-3)

    def test_real_force_point(self):
        # dv = 2 dt / v integrates to v(t) = sqrt(v0^2 + 4t); the exact
        # micro-maps telescope so this holds to rounding
        p = lw.DrivingPath.constant(0.0, 1.0, 10)
        res = lw.chordal_flow(p, [1.0, -2.0], 0.7)
        assert res.images[0] == pytest.approx(math.sqrt(1.0 + 2.8),
                                              abs=1e-12)
        assert res.images[1] == pytest.approx(-math.sqrt(4.0 + 2.8),
                                              abs=1e-12)

    def test_zero_time_identity(self):
        res = lw.chordal_flow(SMOOTH, [1.0 + 2.0j], 0.0)
        assert res.images[0] == 1.0 + 2.0j

    def test_hydrodynamic_normalization(self):
        # g_t(z) = z + 2t/z + O(1/z^2) far away; checked at z = 1e4 i
        p = lw.DrivingPath.from_function(math.sin, 1.0, 500)
        res = lw.chordal_flow(p, [1e4j], 1.0)
        assert abs(res.images[0] - 1e4j - 2.0 / 1e4j) < 1e-6

    def test_semigroup(self):
        pts = [1.0 + 1.0j, -2.0 + 0.5j, 3.0]
        full = lw.chordal_flow(SMOOTH, pts, 1.0)
        half = lw.chordal_flow(SMOOTH, pts, 0.5)
        rest = lw.chordal_flow(SMOOTH.restarted(0.5), half.images, 0.5)
        np.testing.assert_allclose(rest.images, full.images, atol=1e-8)


class TestTipPosition:
    def test_time_zero(self):
        assert lw.tip_position(SMOOTH, 0.0) == pytest.approx(
            cmath.exp(1j * SMOOTH.value_at(0.0)))

    def test_constant_driver_modulus(self):
        p = lw.DrivingPath.constant(0.0, 1.0, 10)
        for t in (0.25, 0.5, 1.0):
            tip = lw.tip_position(p, t)
            assert abs(tip) == pytest.approx(lw.slit_tip_modulus(t),
                                             abs=1e-10)
            assert tip.imag == pytest.approx(0.0, abs=1e-10)

    def test_tip_inside_closed_disc(self):
        for t in (0.1, 0.4, 0.7, 1.0):
            assert abs(lw.tip_position(SMOOTH, t)) <= 1.0 + 1e-12


class TestMinDistance:
    def test_constant_driver(self):
        # the slit grows monotonically inward: min distance = tip modulus
        p = lw.DrivingPath.constant(0.0, 1.0, 10)
        assert lw.min_distance_to_origin(p, 1.0) == pytest.approx(
            lw.slit_tip_modulus(1.0), abs=1e-10)

    def test_koebe_sandwich(self):
        # dist(0, curve) is comparable to the conformal radius e^{-t}:
        # e^{-t}/4 <= dist <= e^{-t} when the minimum sits at time t
        for path in (lw.DrivingPath.constant(0.0, 1.0, 10), SMOOTH):
            d = lw.min_distance_to_origin(path, 1.0)
            assert math.exp(-1.0) / 4.0 <= d <= math.exp(-1.0)

    def test_monotone_nonincreasing(self):
        prev = 1.0
        for t in (0.2, 0.4, 0.6, 0.8, 1.0):
            d = lw.min_distance_to_origin(SMOOTH, t)
            assert d <= prev + 1e-14
            prev = d


class TestCapacityAdditivity:
    def test_split_capacity(self):
        s = 0.5
        first = SMOOTH.capacity_at(s)
        rest = SMOOTH.restarted(s).total_capacity
        assert first + rest == pytest.approx(SMOOTH.total_capacity,
                                             abs=1e-12)
