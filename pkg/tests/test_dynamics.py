import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from satinspect import dynamics as dyn

N = dyn.OrbitParams().n
finite = st.floats(-1e3, 1e3, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


def cw_system_matrix(n):
    # Written out independently of cw_matrices.
    M = np.zeros((6, 6))
    M[0:3, 3:6] = np.eye(3)
    M[3, 0] = 3 * n**2
    M[5, 2] = -n**2
    M[3, 4] = 2 * n
    M[4, 3] = -2 * n
    return M


def random_rel(rng, r_max=1000.0, v_max=3.0):
    p = rng.normal(size=3)
    v = rng.normal(size=3)
    p *= rng.uniform(0, r_max) / np.linalg.norm(p)
    v *= rng.uniform(0, v_max) / np.linalg.norm(v)
    return dyn.RelativeState(p, v)


class TestMeanMotion:
    def test_identity_case(self):
        assert dyn.mean_motion(8.0, 2.0) == 1.0

    def test_default_orbit(self):
        n = dyn.mean_motion(3.986004418e14, 7.0e6)
        assert n == pytest.approx(1.078e-3, rel=1e-3)
        assert n**2 * 7.0e6**3 == pytest.approx(3.986004418e14, rel=1e-12)

    def test_power_law(self):
        assert dyn.mean_motion(1e14, 4e6) == pytest.approx(dyn.mean_motion(1e14, 1e6) / 8)

    @pytest.mark.parametrize("mu,r", [(0, 1), (1, 0), (-1, 1), (1, -2)])
    def test_domain(self, mu, r):
        with pytest.raises(dyn.DomainError):
            dyn.mean_motion(mu, r)


class TestCwDerivative:
    def test_origin_equilibrium(self):
        d = dyn.cw_derivative(dyn.RelativeState.zero(), np.zeros(3), N, 1.0)
        assert np.array_equal(d, np.zeros(6))

    def test_radial_offset(self):
        d = dyn.cw_derivative(dyn.RelativeState([1, 0, 0], [0, 0, 0]), np.zeros(3), N, 1.0)
        assert np.allclose(d[3:], [3 * N**2, 0, 0], rtol=0, atol=1e-20)

    def test_along_track_velocity(self):
        d = dyn.cw_derivative(dyn.RelativeState([0, 0, 0], [0, 1, 0]), np.zeros(3), N, 1.0)
        assert np.allclose(d, [0, 1, 0, 2 * N, 0, 0], rtol=0, atol=1e-20)

    def test_thrust_over_mass(self):
        d = dyn.cw_derivative(dyn.RelativeState.zero(), [1.0, -2.0, 4.0], N, 2.0)
        assert np.array_equal(d[3:], [0.5, -1.0, 2.0])

    @settings(max_examples=50)
    @given(vec3, vec3, vec3, vec3, vec3, vec3, st.integers(-4, 4), st.integers(-4, 4))
    def test_linearity(self, p1, v1, u1, p2, v2, u2, a, b):
        # Integer weights keep the arithmetic exact.
        s1, s2 = dyn.RelativeState(p1, v1), dyn.RelativeState(p2, v2)
        mix = dyn.RelativeState(a * p1 + b * p2, a * v1 + b * v2)
        lhs = dyn.cw_derivative(mix, a * u1 + b * u2, N, 1.0)
        rhs = a * dyn.cw_derivative(s1, u1, N, 1.0) + b * dyn.cw_derivative(s2, u2, N, 1.0)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


class TestRk4:
    def test_zero_derivative(self):
        x = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(dyn.rk4_step(lambda s: np.zeros_like(s), x, 0.5), x)

    def test_exponential(self):
        x1 = dyn.rk4_step(lambda s: s, np.array([1.0]), 0.1)
        assert abs(x1[0] - math.exp(0.1)) < 1e-7
        assert x1[0] == pytest.approx(1.10517091, abs=1e-7)

    def test_non_finite_raises(self):
        with pytest.raises(dyn.IntegrationError):
            dyn.rk4_step(lambda s: s * np.inf, np.array([1.0]), 1.0)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            dyn.rk4_step(lambda s: s, np.array([1.0]), 0.0)


class TestClosedForm:
    def test_identity_at_zero(self):
        s = dyn.RelativeState([10, -20, 30], [0.1, 0.2, -0.3])
        out = dyn.cw_closed_form(s, N, 0.0)
        assert np.allclose(out.as_vector(), s.as_vector(), rtol=0, atol=1e-15)

    def test_out_of_plane_half_period(self):
        out = dyn.cw_closed_form(dyn.RelativeState([0, 0, 1], [0, 0, 0]), N, math.pi / N)
        assert out.pos[2] == pytest.approx(-1.0, abs=1e-12)

    def test_matches_matrix_exponential(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = random_rel(rng)
            t = rng.uniform(0, 6000)
            ref = expm(cw_system_matrix(N) * t) @ s.as_vector()
            got = dyn.cw_closed_form(s, N, t).as_vector()
            assert np.allclose(got, ref, rtol=1e-9, atol=1e-9)

    def test_matches_fine_rk4(self):
        rng = np.random.default_rng(1)
        s = random_rel(rng)
        x = s.as_vector()
        f = dyn.cw_vector_field(N, 1.0)
        for _ in range(30000):
            x = dyn.rk4_step(f, x, 0.01)
        ref = dyn.cw_closed_form(s, N, 300.0).as_vector()
        assert np.allclose(x, ref, rtol=1e-8, atol=1e-8)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            dyn.cw_closed_form(dyn.RelativeState.zero(), N, -1.0)


def test_rk4_matches_closed_form_over_500s():
    rng = np.random.default_rng(2)
    f = dyn.cw_vector_field(N, 1.0)
    for _ in range(10):
        s = random_rel(rng)
        x = s.as_vector()
        for _ in range(500):
            x = dyn.rk4_step(f, x, 1.0)
        ref = dyn.cw_closed_form(s, N, 500.0).as_vector()
        assert np.linalg.norm(x - ref) / np.linalg.norm(ref) < 1e-6


class TestTwoBody:
    params = dyn.OrbitParams()

    def test_point_mass(self):
        R = 7e6
        st_ = dyn.InertialState([R, 0, 0], [0, 7000, 0])
        a = dyn.two_body_j2_accel(st_, np.zeros(3), self.params, j2_enabled=False)
        assert np.allclose(a, [-dyn.MU_EARTH / R**2, 0, 0], rtol=1e-14)

    def test_external_force_over_mass(self):
        st_ = dyn.InertialState([7e6, 0, 0], [0, 7000, 0], mass=4.0)
        a0 = dyn.two_body_j2_accel(st_, np.zeros(3), self.params, j2_enabled=False)
        a1 = dyn.two_body_j2_accel(st_, [4.0, 0, -8.0], self.params, j2_enabled=False)
        assert np.allclose(a1 - a0, [1.0, 0, -2.0], atol=1e-12)

    def test_polar_j2_structure(self):
        R = 7e6
        p = self.params
        f = dyn.j2_perturbation_accel(np.array([0, 0, R]), p)
        scale = 1.5 * p.j2 * p.mu * p.earth_radius**2 / R**5
        assert f[0] == 0 and f[1] == 0
        assert f[2] == pytest.approx(-scale * (-2 * R), rel=1e-12)

    def test_equatorial_j2_structure(self):
        R = 7e6
        p = self.params
        f = dyn.j2_perturbation_accel(np.array([R, 0, 0]), p)
        scale = 1.5 * p.j2 * p.mu * p.earth_radius**2 / R**5
        assert f[0] == pytest.approx(-scale * R, rel=1e-12)
        assert f[2] == 0.0

    @given(st.floats(6.5e6, 8e6), st.floats(-1, 1), st.floats(0, 2 * math.pi))
    def test_j2_mirror_symmetry(self, r, s, lon):
        c = math.sqrt(1 - s * s)
        pos = r * np.array([c * math.cos(lon), c * math.sin(lon), s])
        mirror = pos * np.array([1, 1, -1])
        f, g = dyn.j2_perturbation_accel(pos, self.params), dyn.j2_perturbation_accel(mirror, self.params)
        assert np.allclose(f[:2], g[:2], rtol=1e-12, atol=1e-20)
        assert np.isclose(f[2], -g[2], rtol=1e-12, atol=1e-20)

    def test_zero_radius(self):
        with pytest.raises(dyn.DomainError):
            dyn.j2_perturbation_accel(np.zeros(3), self.params)
        with pytest.raises(dyn.DomainError):
            dyn.InertialState(np.zeros(3), np.zeros(3))

    def test_circular_chief_stays_circular_with_j2(self):
        chief = dyn.circular_chief(self.params, j2_enabled=True)
        states = [chief]
        for _ in range(2000):
            states = dyn.propagate_inertial(states, np.zeros((1, 3)), self.params, 1.0)
        r = np.linalg.norm(states[0].pos)
        assert abs(r - self.params.r0_mag) < 1e-3


class TestHillFrame:
    def test_literal_axes(self):
        chief = dyn.InertialState([7e6, 0, 0], [0, 7500, 0])
        R = dyn.hill_rotation(chief)
        assert np.allclose(R[:, 0], [-1, 0, 0])
        assert np.allclose(R[:, 2], [0, 0, 1])
        assert np.allclose(R[:, 1], [0, -1, 0])

    def test_outward_flag(self):
        chief = dyn.InertialState([7e6, 0, 0], [0, 7500, 0])
        R = dyn.hill_rotation(chief, radial_outward=True)
        assert np.allclose(R[:, 0], [1, 0, 0])
        assert np.allclose(R[:, 1], [0, 1, 0])

    def test_orthonormal_right_handed(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            r = rng.normal(size=3) * 7e6
            v = rng.normal(size=3) * 7e3
            R = dyn.hill_rotation(dyn.InertialState(r, v), radial_outward=bool(rng.integers(2)))
            assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(dyn.FrameError):
            dyn.hill_rotation(dyn.InertialState([7e6, 0, 0], [100, 0, 0]))

    def test_deputy_equals_chief(self):
        chief = dyn.circular_chief(dyn.OrbitParams())
        rel = dyn.to_hill(chief, chief)
        assert np.array_equal(rel.as_vector(), np.zeros(6))

    @pytest.mark.parametrize("outward,sign", [(False, -1.0), (True, 1.0)])
    def test_radial_offset(self, outward, sign):
        chief = dyn.circular_chief(dyn.OrbitParams())
        dep = dyn.InertialState(chief.pos * (1 + 10 / np.linalg.norm(chief.pos)), chief.vel)
        rel = dyn.to_hill(dep, chief, radial_outward=outward)
        assert np.allclose(rel.pos, [sign * 10, 0, 0], atol=1e-9)

    def test_round_trip(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            chief = dyn.InertialState(rng.normal(size=3) * 7e6, rng.normal(size=3) * 7e3)
            rel = random_rel(rng)
            flag = bool(rng.integers(2))
            back = dyn.to_hill(dyn.from_hill(rel, chief, radial_outward=flag), chief, flag)
            assert np.allclose(back.pos, rel.pos, rtol=1e-9, atol=1e-9 * 1e3)
            assert np.allclose(back.vel, rel.vel, rtol=1e-9, atol=1e-9)

    def test_hill_velocity_matches_cw_short_term(self):
        # A deputy placed by from_hill and propagated inertially should track
        # the CW prediction closely over a few minutes.
        p = dyn.OrbitParams()
        chief = dyn.circular_chief(p, j2_enabled=False)
        rel0 = dyn.RelativeState([50.0, -80.0, 30.0], [0.05, -0.02, 0.01])
        bodies = [chief, dyn.from_hill(rel0, chief)]
        for _ in range(300):
            bodies = dyn.propagate_inertial(bodies, np.zeros((2, 3)), p, 1.0, j2_enabled=False)
        got = dyn.to_hill(bodies[1], bodies[0])
        ref = dyn.cw_closed_form(rel0, p.n, 300.0)
        assert np.linalg.norm(got.pos - ref.pos) < 0.05


def test_two_body_conservation_one_orbit():
    p = dyn.OrbitParams()
    s0 = dyn.InertialState([7e6, 0, 0], [0, 7600, 1000])
    e0, h0 = dyn.specific_energy(s0, p.mu), dyn.angular_momentum(s0)
    a = -p.mu / (2 * e0)
    period = 2 * math.pi * math.sqrt(a**3 / p.mu)
    states = [s0]
    for _ in range(int(round(period))):
        states = dyn.propagate_inertial(states, np.zeros((1, 3)), p, 1.0, j2_enabled=False)
    s1 = states[0]
    assert abs(dyn.specific_energy(s1, p.mu) - e0) / abs(e0) < 1e-8
    assert abs(dyn.angular_momentum(s1) - h0) / h0 < 1e-8


def test_relative_state_rejects_non_finite():
    with pytest.raises(ValueError):
        dyn.RelativeState([np.nan, 0, 0], [0, 0, 0])


def test_cw_step_equals_generic_rk4():
    rng = np.random.default_rng(5)
    for _ in range(50):
        s = random_rel(rng)
        u = rng.uniform(-1, 1, 3)
        dt, mass = float(rng.uniform(0.1, 5)), float(rng.uniform(0.5, 3))
        ref = dyn.rk4_step(dyn.cw_vector_field(N, mass, u), s.as_vector(), dt)
        got = dyn.cw_step(s, u, N, mass, dt).as_vector()
        assert np.allclose(got, ref, rtol=1e-12, atol=1e-12)
