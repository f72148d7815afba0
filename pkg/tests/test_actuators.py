import numpy as np
import pytest

from fwctl.actuators import (
    MAX_DEFLECTION_RAD,
    MAX_RATE_RAD_S,
    ServoParams,
    ServoState,
    ThrottleState,
    step_servo,
    step_throttle,
)


def simulate_servo_oracle(command, t_end, dt=1e-4, params=ServoParams()):
    """Independent fine-step integration of the clamped servo ODE."""
    target = np.clip(command, -1, 1) * params.max_deflection
    x, v = 0.0, 0.0
    t = 0.0
    history = [(t, x)]
    while t < t_end:
        def acc(x_, v_):
            return params.omega0 ** 2 * (target - x_) - 2 * params.zeta * params.omega0 * v_
        k1v, k1x = acc(x, v), v
        k2v = acc(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
        k2x = v + 0.5 * dt * k1v
        k3v = acc(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
        k3x = v + 0.5 * dt * k2v
        k4v = acc(x + dt * k3x, v + dt * k3v)
        k4x = v + dt * k3v
        x_new = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = np.clip(v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v),
                    -params.max_rate, params.max_rate)
        x = np.clip(np.clip(x_new, x - params.max_rate * dt, x + params.max_rate * dt),
                    -params.max_deflection, params.max_deflection)
        t += dt
        history.append((t, x))
    return history


class TestServo:
    def test_equilibrium_unchanged(self):
        state = ServoState(position=0.2, velocity=0.0)
        out = step_servo(state, 0.2 / MAX_DEFLECTION_RAD, 0.01)
        assert out.position == pytest.approx(0.2, abs=1e-12)
        assert out.velocity == pytest.approx(0.0, abs=1e-12)

    def test_step_response_vs_fine_oracle(self):
        # the rate limit caps travel at 200 deg/s, so reaching 90% of 30 deg
        # (27 deg) takes at least 0.135 s; the oracle pins the actual time
        oracle = simulate_servo_oracle(1.0, 0.25)
        target_90 = 0.9 * np.degrees(MAX_DEFLECTION_RAD)
        t90_oracle = next(t for t, x in oracle if np.degrees(x) >= target_90)
        assert 0.135 <= t90_oracle <= 0.2

        state = ServoState()
        t = 0.0
        while np.degrees(state.position) < target_90:
            state = step_servo(state, 1.0, 0.01)
            t += 0.01
            assert t < 0.5
        assert t <= t90_oracle + 0.03

    def test_rate_limit_respected(self):
        state = ServoState()
        prev = state.position
        max_step = 0.0
        for _ in range(50):
            state = step_servo(state, 1.0, 0.01)
            max_step = max(max_step, abs(state.position - prev) / 0.01)
            prev = state.position
        assert max_step <= MAX_RATE_RAD_S + 1e-12

    def test_overshoot_without_rate_limit(self):
        # zeta = 0.707 gives ~4.3% overshoot when the rate limit is inactive
        params = ServoParams(max_rate=1e9)
        state = ServoState()
        peak = 0.0
        for _ in range(2000):
            state = step_servo(state, 0.5, 0.001, params)
            peak = max(peak, state.position)
        target = 0.5 * MAX_DEFLECTION_RAD
        overshoot = (peak - target) / target
        assert 0.0 < overshoot <= 0.05

    def test_saturation_fuzz(self):
        rng = np.random.default_rng(0)
        state = ServoState()
        for _ in range(2000):
            cmd = rng.uniform(-3.0, 3.0)  # beyond valid range: must clip
            state = step_servo(state, cmd, 0.01)
            assert abs(state.position) <= MAX_DEFLECTION_RAD + 1e-12
            assert abs(state.velocity) <= MAX_RATE_RAD_S + 1e-12


class TestThrottle:
    def test_equilibrium(self):
        out = step_throttle(ThrottleState(level=0.4), 0.4, 0.01)
        assert out.level == pytest.approx(0.4, abs=1e-15)

    def test_first_order_closed_form(self):
        state = ThrottleState(level=0.0)
        for _ in range(20):  # 0.2 s at dt = 0.01, one time constant
            state = step_throttle(state, 1.0, 0.01)
        assert state.level == pytest.approx(1.0 - np.exp(-1.0), rel=1e-12)

    def test_unity_dc_gain(self):
        state = ThrottleState(level=0.0)
        for _ in range(1000):
            state = step_throttle(state, 1.0, 0.01)
        assert state.level == pytest.approx(1.0, abs=1e-9)

    def test_monotone_no_overshoot(self):
        state = ThrottleState(level=0.0)
        prev = 0.0
        for _ in range(200):
            state = step_throttle(state, 0.8, 0.01)
            assert prev <= state.level <= 0.8 + 1e-12
            prev = state.level

    def test_out_of_range_command_clipped(self):
        state = ThrottleState(level=0.5)
        out = step_throttle(state, 2.0, 10.0)
        assert out.level == pytest.approx(1.0, abs=1e-9)
        out = step_throttle(state, -1.0, 10.0)
        assert out.level == pytest.approx(0.0, abs=1e-9)
