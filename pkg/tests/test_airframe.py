import numpy as np
import pytest

from fwctl.airframe import (
    AeroModel,
    RigidBodyState,
    SurfaceDeflections,
    aero_forces_moments,
    air_state,
    body_to_inertial_velocity,
    rk4_step_arrays,
    step_dynamics,
)
from fwctl.errors import ConfigError
from fwctl.frames import euler_to_quat, quat_derivative
from fwctl.wind import WindSample

IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def ballistic_model():
    """All aero coefficients zero: gravity and thrust only."""
    return AeroModel(mass=2.0, inertia=np.diag([0.2, 0.25, 0.3]), S=1.0, b=2.0,
                     c=0.5, thrust_gain=5.9, coefficients={})


class TestAirState:
    def test_still_air(self):
        a = air_state(np.array([17.0, 0, 0]), np.zeros(3), IDENTITY_Q, WindSample.zero())
        assert a.Va == pytest.approx(17.0)
        assert a.alpha == 0.0 and a.beta == 0.0
        assert not a.degenerate

    def test_steady_headwind_adds_to_relative_speed(self):
        wind = WindSample.zero()
        wind.steady_ned = np.array([-5.0, 0.0, 0.0])
        a = air_state(np.array([17.0, 0, 0]), np.zeros(3), IDENTITY_Q, wind)
        assert a.v_r[0] == pytest.approx(22.0)
        assert a.Va == pytest.approx(22.0)

    def test_alpha_convention(self):
        a = air_state(np.array([17.0, 0.0, 1.7]), np.zeros(3), IDENTITY_Q, WindSample.zero())
        assert a.alpha == pytest.approx(np.arctan2(1.7, 17.0))
        assert a.alpha == pytest.approx(0.0997, abs=2e-4)

    def test_zero_airspeed_degenerate(self):
        a = air_state(np.zeros(3), np.zeros(3), IDENTITY_Q, WindSample.zero())
        assert a.degenerate
        assert a.beta == 0.0 and a.Va == 0.0

    def test_turbulence_rates_subtract(self):
        wind = WindSample.zero()
        wind.turb_rates_body = np.array([0.1, -0.2, 0.05])
        a = air_state(np.array([17.0, 0, 0]), np.array([1.0, 1.0, 1.0]), IDENTITY_Q, wind)
        assert np.allclose(a.omega_r, [0.9, 1.2, 0.95])

    def test_zero_wind_relative_equals_body_velocity(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = rng.normal(0, 10, 3)
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            a = air_state(v, np.zeros(3), q, WindSample.zero())
            assert np.all(a.v_r == v)


class TestAeroForces:
    def test_zero_airspeed_zero_forces(self):
        model = AeroModel.linear_test()
        a = air_state(np.zeros(3), np.zeros(3), IDENTITY_Q, WindSample.zero())
        f, m = aero_forces_moments(a, SurfaceDeflections(0.1, -0.1, 0.5), model)
        assert np.all(f == 0.0) and np.all(m == 0.0)

    def test_doubling_speed_quadruples_forces(self):
        # alpha = beta = 0 and zero rates keep the coefficients fixed
        model = AeroModel.linear_test()
        f1, m1 = aero_forces_moments(
            air_state(np.array([10.0, 0, 0]), np.zeros(3), IDENTITY_Q, WindSample.zero()),
            SurfaceDeflections(0.1, -0.2, 0.0), model)
        f2, m2 = aero_forces_moments(
            air_state(np.array([20.0, 0, 0]), np.zeros(3), IDENTITY_Q, WindSample.zero()),
            SurfaceDeflections(0.1, -0.2, 0.0), model)
        assert np.allclose(f2, 4.0 * f1, rtol=1e-12)
        assert np.allclose(m2, 4.0 * m1, rtol=1e-12)

    def test_lift_closed_form_at_zero_alpha(self):
        model = AeroModel.linear_test()  # C_L = 0.4 + 2.0 alpha, C_D = 0.1
        va = 15.0
        a = air_state(np.array([va, 0, 0]), np.zeros(3), IDENTITY_Q, WindSample.zero())
        f, _ = aero_forces_moments(a, SurfaceDeflections(0.0, 0.0, 0.0), model)
        qbar_s = 0.5 * model.rho * va ** 2 * model.S
        assert f[2] == pytest.approx(-qbar_s * 0.4, rel=1e-12)   # lift along -z
        assert f[0] == pytest.approx(-qbar_s * 0.1, rel=1e-12)   # drag along -x
        assert f[1] == pytest.approx(0.0, abs=1e-12)

    def test_roll_moment_from_aileron(self):
        model = AeroModel.linear_test()  # C_l = 0.15 delta_a - 0.5 p_hat
        va = 12.0
        a = air_state(np.array([va, 0, 0]), np.zeros(3), IDENTITY_Q, WindSample.zero())
        _, m = aero_forces_moments(a, SurfaceDeflections(0.2, 0.0, 0.0), model)
        qbar_s = 0.5 * model.rho * va ** 2 * model.S
        assert m[0] == pytest.approx(qbar_s * model.b * 0.15 * 0.2, rel=1e-12)


class TestStepDynamics:
    def test_ballistic_fall_matches_closed_form(self):
        model = ballistic_model()
        state = RigidBodyState(p=np.zeros(3), q=IDENTITY_Q.copy(),
                               v=np.array([17.0, 0.0, 0.0]), omega=np.zeros(3))
        dt = 0.01
        out = step_dynamics(state, SurfaceDeflections(0, 0, 0.0), WindSample.zero(),
                            model, dt)
        g = model.gravity
        assert out.v[2] == pytest.approx(g * dt, rel=1e-12)
        assert out.p[2] == pytest.approx(0.5 * g * dt ** 2, rel=1e-9)
        assert out.p[0] == pytest.approx(17.0 * dt, rel=1e-12)
        assert np.allclose(out.omega, 0.0)

    def test_zero_moments_keep_zero_rates(self):
        model = ballistic_model()
        state = RigidBodyState(p=np.zeros(3), q=euler_to_quat(0.3, -0.2, 0.5),
                               v=np.array([15.0, 1.0, -0.5]), omega=np.zeros(3))
        out = state
        for _ in range(50):
            out = step_dynamics(out, SurfaceDeflections(0, 0, 0.3), WindSample.zero(),
                                model, 0.01)
        assert np.allclose(out.omega, 0.0, atol=1e-15)

    def test_refinement_against_substeps(self):
        model = AeroModel.x8()
        state = RigidBodyState(p=np.array([0, 0, -600.0]), q=euler_to_quat(0.1, 0.05, 0.0),
                               v=np.array([17.0, 0.5, 1.0]), omega=np.array([0.3, -0.2, 0.1]))
        surf = SurfaceDeflections(0.05, -0.08, 0.5)
        coarse = step_dynamics(state, surf, WindSample.zero(), model, 0.01)
        fine = state
        for _ in range(10):
            fine = step_dynamics(fine, surf, WindSample.zero(), model, 0.001)
        assert np.linalg.norm(coarse.p - fine.p) < 1e-6

    def test_rk4_order(self):
        # halving dt shrinks the one-step error by roughly 2^4
        model = AeroModel.x8()
        args = dict(q=euler_to_quat(0.2, 0.1, 0.0), v=np.array([17.0, 1.0, 0.8]),
                    omega=np.array([0.5, -0.3, 0.2]))
        surf = SurfaceDeflections(0.1, -0.1, 0.6)

        def one_step(dt, n):
            s = RigidBodyState(p=np.array([0.0, 0.0, -600.0]), **{k: v.copy() for k, v in args.items()})
            for _ in range(n):
                s = step_dynamics(s, surf, WindSample.zero(), model, dt)
            return s

        ref = one_step(0.02 / 64, 64)
        err_h = np.linalg.norm(one_step(0.02, 1).p - ref.p)
        err_h2 = np.linalg.norm(one_step(0.01, 2).p - ref.p)
        ratio = err_h / err_h2
        assert 8.0 < ratio < 32.0

    @pytest.mark.parametrize("rate_cap,bound", [(10.0, 2e-10), (3.0, 1e-12)])
    def test_quaternion_norm_drift_small(self, rate_cap, bound):
        # RK4 truncation drifts the norm by ~(|w| dt / 2)^6 / 144 per step;
        # at dt = 0.01 that is ~1e-10 for |w| = 10 and < 1e-13 for |w| <= 3
        rng = np.random.default_rng(5)
        for _ in range(50):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            omega = direction * rng.uniform(0, rate_cap)
            dt = 0.01
            k1 = quat_derivative(q, omega)
            k2 = quat_derivative(q + 0.5 * dt * k1, omega)
            k3 = quat_derivative(q + 0.5 * dt * k2, omega)
            k4 = quat_derivative(q + dt * k3, omega)
            q_raw = q + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            assert abs(np.linalg.norm(q_raw) - 1.0) < bound

    def test_step_renormalizes_quaternion(self):
        model = AeroModel.x8()
        state = RigidBodyState(p=np.array([0, 0, -600.0]), q=IDENTITY_Q.copy(),
                               v=np.array([17.0, 0, 0]), omega=np.array([3.0, 2.0, 1.0]))
        out = step_dynamics(state, SurfaceDeflections(0, 0, 0.5), WindSample.zero(),
                            model, 0.01)
        assert abs(np.linalg.norm(out.q) - 1.0) < 1e-9

    def test_rejects_bad_dt(self):
        model = ballistic_model()
        state = RigidBodyState(p=np.zeros(3), q=IDENTITY_Q.copy(),
                               v=np.zeros(3), omega=np.zeros(3))
        with pytest.raises(ConfigError):
            step_dynamics(state, SurfaceDeflections(0, 0, 0), WindSample.zero(), model, 0.0)


class TestBatchedParity:
    def test_batched_rk4_matches_scalar(self):
        model = AeroModel.x8()
        rng = np.random.default_rng(11)
        n = 8
        pos = rng.normal(0, 10, (n, 3))
        q = rng.normal(size=(n, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        v = rng.normal(0, 5, (n, 3)) + np.array([17.0, 0, 0])
        om = rng.normal(0, 1, (n, 3))
        da, de = rng.uniform(-0.5, 0.5, (2, n))
        dtt = rng.uniform(0, 1, n)
        zero3 = np.zeros(3)
        batched = rk4_step_arrays(pos, q, v, om, da, de, dtt, zero3, zero3, zero3,
                                  model, 0.01)
        for i in range(n):
            single = rk4_step_arrays(pos[i], q[i], v[i], om[i], da[i], de[i], dtt[i],
                                     zero3, zero3, zero3, model, 0.01)
            for b, s in zip(batched, single):
                assert np.allclose(b[i], s, atol=1e-14)


class TestModelLoading:
    def test_x8_loads_and_validates(self):
        m = AeroModel.x8()
        assert m.mass > 0 and m.S > 0
        assert np.allclose(m.inertia, m.inertia.T)
        assert np.all(np.linalg.eigvalsh(m.inertia) > 0)

    def test_body_to_inertial_velocity(self):
        q = euler_to_quat(0.0, 0.0, np.pi / 2)
        out = body_to_inertial_velocity(q, np.array([17.0, 0, 0]))
        assert np.allclose(out, [0, 17, 0], atol=1e-12)

    def test_invalid_inertia_rejected(self):
        with pytest.raises(ConfigError):
            AeroModel(mass=1.0, inertia=np.diag([1.0, -1.0, 1.0]), S=1.0, b=1.0,
                      c=1.0, thrust_gain=1.0)

    def test_unknown_coefficient_term_rejected(self):
        from fwctl.config import parse_airframe_config, read_ini
        text = """
[geometry]
S = 1.0
b = 1.0
c = 1.0
[mass]
mass = 1.0
ixx = 1.0
iyy = 1.0
izz = 1.0
[propulsion]
thrust_gain = 1.0
[coefficients.CL]
bogus_term = 1.0
"""
        with pytest.raises(ConfigError):
            parse_airframe_config(read_ini(text, is_text=True))
