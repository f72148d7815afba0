import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fwctl.env import (
    OBS_DIM,
    OBS_FIELDS,
    EpisodeConfig,
    FixedWingEnv,
    RewardConfig,
    SimState,
    advance_sim,
    advance_sim_reference,
    reward_avp,
    reward_base,
    sample_reference,
)
from fwctl.errors import ConfigError, LifecycleError
from fwctl.wind import WindSample


class TestReferences:
    def test_nominal_ranges(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            phi, theta = sample_reference("nominal", rng)
            assert abs(phi) <= np.radians(45.0)
            assert abs(theta) <= np.radians(25.0)

    def test_hard_band_membership(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            phi, theta = sample_reference("hard", rng)
            assert np.radians(45.0) <= abs(phi) <= np.radians(60.0)
            assert np.radians(25.0) <= abs(theta) <= np.radians(30.0)

    def test_nominal_mean_near_zero(self):
        rng = np.random.default_rng(2)
        n = 10_000
        phis = np.array([sample_reference("nominal", rng)[0] for _ in range(n)])
        sigma = np.radians(90.0) / np.sqrt(12.0)
        assert abs(phis.mean()) <= 3.0 * sigma / np.sqrt(n)

    def test_hard_signs_both_occur(self):
        rng = np.random.default_rng(3)
        signs = {np.sign(sample_reference("hard", rng)[0]) for _ in range(100)}
        assert signs == {-1.0, 1.0}

    def test_roll_only_pins_pitch(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            _, theta = sample_reference("nominal", rng, roll_only=True)
            assert theta == 0.0

    def test_unknown_difficulty(self):
        with pytest.raises(ConfigError):
            sample_reference("extreme", np.random.default_rng(0))


class TestRewards:
    def test_perfect_tracking_zero(self):
        cfg = RewardConfig.base()
        assert reward_base(0.3, -0.1, 0.3, -0.1, cfg) == 0.0

    def test_saturated_errors_give_minus_one(self):
        cfg = RewardConfig.base()
        # both components clipped at 0.5 each
        assert reward_base(0.5 * 3.3 + 1.0, 0.0, 0.0, 0.5 * 2.25 + 1.0, cfg) == -1.0

    def test_linear_region_example(self):
        cfg = RewardConfig.base()
        assert reward_base(0.33, 0.0, 0.0, 0.0, cfg) == pytest.approx(-0.1, rel=1e-12)

    def test_avp_repeated_action_zero_penalty(self):
        cfg = RewardConfig.avp()
        r = reward_avp(0.0, 0.0, 0.0, 0.0, np.array([0.3, -0.2]), np.array([0.3, -0.2]), cfg)
        assert r == 0.0

    def test_avp_full_swing_clipped(self):
        cfg = RewardConfig.avp()
        # mean |delta| = 2 -> 2 / zeta_delta = 1, clipped to c_delta = 0.5
        r = reward_avp(0.0, 0.0, 0.0, 0.0, np.array([1.0, 1.0]), np.array([-1.0, -1.0]), cfg)
        assert r == pytest.approx(-0.5, rel=1e-12)

    def test_avp_worst_case_minus_one(self):
        cfg = RewardConfig.avp()
        r = reward_avp(10.0, 10.0, 0.0, 0.0, np.array([1.0, 1.0]), np.array([-1.0, -1.0]), cfg)
        assert r == pytest.approx(-1.0, rel=1e-12)

    def test_clip_coefficients_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            RewardConfig(c_phi=0.5, c_theta=0.3)
        with pytest.raises(ConfigError):
            RewardConfig(c_phi=0.5, c_theta=0.3, c_delta=0.1, mode="avp")

    def test_ppo_profile(self):
        cfg = RewardConfig.avp_ppo_profile()
        assert (cfg.c_phi, cfg.c_theta, cfg.c_delta) == (0.45, 0.45, 0.1)

    @given(st.integers(0, 100_000))
    @settings(max_examples=200)
    def test_rewards_bounded(self, seed):
        rng = np.random.default_rng(seed)
        phi, theta = rng.uniform(-4, 4, 2)
        pr, tr = rng.uniform(-4, 4, 2)
        a = rng.uniform(-1, 1, 2)
        b = rng.uniform(-1, 1, 2)
        for cfg in (RewardConfig.base(), RewardConfig.avp(), RewardConfig.avp_ppo_profile()):
            if cfg.mode == "avp":
                r = reward_avp(phi, theta, pr, tr, a, b, cfg)
            else:
                r = reward_base(phi, theta, pr, tr, cfg)
            assert -1.0 <= r <= 0.0


class TestLifecycle:
    def test_reset_initial_observation(self):
        env = FixedWingEnv(EpisodeConfig(seed=5))
        obs = env.reset()
        assert obs.shape == (OBS_DIM,)
        assert len(OBS_FIELDS) == OBS_DIM == 14
        # initial attitude zero: errors equal the references, integrals zero
        assert obs[OBS_FIELDS.index("e_phi")] == pytest.approx(obs[8])
        assert obs[OBS_FIELDS.index("ie_phi")] == 0.0
        assert obs[OBS_FIELDS.index("ie_theta")] == 0.0
        assert obs[OBS_FIELDS.index("va")] == pytest.approx(17.0)
        assert obs[OBS_FIELDS.index("phi")] == 0.0

    def test_reset_deterministic(self):
        a = FixedWingEnv(EpisodeConfig(seed=9, severity="severe")).reset()
        b = FixedWingEnv(EpisodeConfig(seed=9, severity="severe")).reset()
        assert np.array_equal(a, b)

    def test_step_before_reset_raises(self):
        env = FixedWingEnv(EpisodeConfig())
        with pytest.raises(LifecycleError):
            env.step(np.zeros(2))

    def test_episode_ends_exactly_at_step_limit(self):
        env = FixedWingEnv(EpisodeConfig(seed=0, steps=50))
        env.reset()
        for k in range(50):
            _, _, done, info = env.step(np.zeros(2))
        assert done and info["step"] == 50
        with pytest.raises(LifecycleError):
            env.step(np.zeros(2))

    def test_action_clipping_flagged(self):
        env = FixedWingEnv(EpisodeConfig(seed=0))
        env.reset()
        _, _, _, info = env.step(np.array([2.0, -3.0]))
        assert info["action_clipped"]
        assert np.allclose(info["commanded_action"], [1.0, -1.0])

    def test_bad_action_shape(self):
        env = FixedWingEnv(EpisodeConfig(seed=0))
        env.reset()
        with pytest.raises(ConfigError):
            env.step(np.zeros(3))

    def test_integral_error_accumulation(self):
        cfg = EpisodeConfig(seed=3, steps=40)
        env = FixedWingEnv(cfg)
        obs = env.reset()
        total = 0.0
        for _ in range(10):
            obs, _, _, _ = env.step(np.zeros(2))
            total += obs[OBS_FIELDS.index("e_phi")] * cfg.dt
        assert obs[OBS_FIELDS.index("ie_phi")] == pytest.approx(total, rel=1e-12)

    def test_rewards_in_range_during_episode(self):
        env = FixedWingEnv(EpisodeConfig(seed=1, severity="severe", wind_mode="eval"))
        env.reset()
        rng = np.random.default_rng(0)
        done = False
        while not done:
            _, r, done, _ = env.step(rng.uniform(-1, 1, 2))
            assert -1.0 <= r <= 0.0

    def test_observation_error_fields_consistent(self):
        env = FixedWingEnv(EpisodeConfig(seed=2))
        obs = env.reset()
        for _ in range(20):
            obs, _, _, info = env.step(np.array([0.1, -0.1]))
            assert obs[8] == pytest.approx(info["phi_ref"] - obs[0], abs=1e-15)
            assert obs[9] == pytest.approx(info["theta_ref"] - obs[1], abs=1e-15)

    def test_divergence_cutoff(self):
        # hard-over aileron rolls the aircraft past the attitude cutoff
        env = FixedWingEnv(EpisodeConfig(seed=0))
        env.reset()
        done = False
        k = 0
        while not done and k < 2000:
            _, r, done, info = env.step(np.array([1.0, 0.0]))
            k += 1
        assert info["diverged"] and done
        assert r == -1.0
        assert k < 500

    def test_reference_resample_resets_integrals(self):
        cfg = EpisodeConfig(seed=6, steps=60, reference_resample_steps=20)
        env = FixedWingEnv(cfg)
        env.reset()
        for k in range(1, 41):
            obs, _, _, _ = env.step(np.zeros(2))
            if k == 20 or k == 40:
                assert obs[OBS_FIELDS.index("ie_phi")] == 0.0
                assert obs[OBS_FIELDS.index("ie_theta")] == 0.0

    def test_replay_bit_exact(self):
        def run():
            env = FixedWingEnv(EpisodeConfig(seed=77, severity="moderate",
                                             difficulty="hard", steps=300))
            obs = env.reset()
            rng = np.random.default_rng(5)
            tape = [obs]
            rewards = []
            done = False
            while not done:
                obs, r, done, _ = env.step(rng.uniform(-1, 1, 2))
                tape.append(obs)
                rewards.append(r)
            return np.vstack(tape), np.array(rewards)

        obs_a, rew_a = run()
        obs_b, rew_b = run()
        assert np.array_equal(obs_a, obs_b)
        assert np.array_equal(rew_a, rew_b)

    def test_normalize_obs_hook_defaults_off(self):
        env = FixedWingEnv(EpisodeConfig(seed=0))
        obs = env.reset()
        assert obs[OBS_FIELDS.index("va")] == pytest.approx(17.0)
        env_n = FixedWingEnv(EpisodeConfig(seed=0, normalize_obs=True))
        obs_n = env_n.reset()
        assert obs_n[OBS_FIELDS.index("va")] == pytest.approx(17.0 / 20.0)


class TestTransitionKernel:
    def test_kernel_matches_reference_implementation(self):
        rng = np.random.default_rng(12)
        from fwctl.airframe import AeroModel
        model = AeroModel.x8()
        for _ in range(25):
            sim = SimState.initial(EpisodeConfig(), rng.uniform(-1, 1), rng.uniform(-0.5, 0.5))
            sim.vel = np.array([17.0, 0, 0]) + rng.normal(0, 2, 3)
            sim.omega = rng.normal(0, 0.5, 3)
            q = rng.normal(size=4) + np.array([2.0, 0, 0, 0])
            sim.quat = q / np.linalg.norm(q)
            sim.servo_pos = rng.uniform(-0.4, 0.4, 2)
            sim.servo_vel = rng.uniform(-2, 2, 2)
            sim.throttle = np.float64(rng.uniform(0, 1))
            sim.pi_integral = np.float64(rng.uniform(-1, 1))
            sim.ie_phi = np.float64(rng.uniform(-2, 2))
            wind = WindSample(rng.normal(0, 4, 3), rng.normal(0, 1, 3),
                              rng.normal(0, 0.2, 3), rng.normal(0, 3, 3))
            action = rng.uniform(-1.2, 1.2, 2)
            fast, ef = advance_sim(sim, action, wind, model, 0.01, 17.0)
            ref, er = advance_sim_reference(sim, action, wind, model, 0.01, 17.0)
            for name in fast.__dataclass_fields__:
                a = np.asarray(getattr(fast, name), float)
                b = np.asarray(getattr(ref, name), float)
                assert np.allclose(a, b, atol=1e-12), name
            for key in ("phi", "theta", "va", "alpha", "beta", "delta_t_cmd"):
                assert np.allclose(np.asarray(ef[key], float),
                                   np.asarray(er[key], float), atol=1e-12), key
