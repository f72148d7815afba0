import numpy as np
import pytest

from fwctl.errors import ConfigError
from fwctl.wind import (
    SEVERITY_TABLE,
    DrydenState,
    GustSpec,
    WindField,
    dryden_step,
    gust_envelope,
    gust_velocity,
    sample_wind_config,
    total_wind,
)


def make_gust(magnitude=10.0, triggers=(500, 1500)):
    dirs = np.tile(np.array([1.0, 0.0, 0.0]), (len(triggers), 1))
    return GustSpec(trigger_steps=triggers, magnitude=magnitude, directions_ned=dirs)


class TestGusts:
    def test_zero_before_trigger(self):
        spec = make_gust()
        assert np.all(gust_velocity(4.99, spec) == 0.0)

    def test_peak_at_end_of_startup(self):
        # startup lasts 0.25 s; the envelope tops out at the full magnitude
        spec = make_gust(magnitude=15.0)
        v = gust_velocity(5.0 + 0.25, spec)
        assert np.linalg.norm(v) == pytest.approx(15.0, rel=1e-12)

    def test_half_magnitude_at_ramp_midpoint(self):
        spec = make_gust(magnitude=15.0)
        v = gust_velocity(5.0 + 0.125, spec)
        assert np.linalg.norm(v) == pytest.approx(7.5, rel=1e-12)

    def test_envelope_c1_continuous_at_boundaries(self):
        spec = make_gust(magnitude=10.0)
        eps = 1e-6
        for boundary in (0.0, 0.25, 0.75, 1.0):
            left = gust_envelope(boundary - eps, spec)
            right = gust_envelope(boundary + eps, spec)
            assert abs(left - right) < 1e-4  # continuity
            dl = (gust_envelope(boundary, spec) - gust_envelope(boundary - eps, spec)) / eps
            dr = (gust_envelope(boundary + eps, spec) - gust_envelope(boundary, spec)) / eps
            assert abs(dl - dr) < 1e-3  # first derivative

    def test_two_active_windows_per_eval_episode(self):
        spec = make_gust(magnitude=10.0, triggers=(500, 1500))
        active = [k for k in range(2000)
                  if np.linalg.norm(gust_velocity((k + 0.5) * 0.01, spec)) > 0]
        # two disjoint 1 s windows of 100 steps each
        assert len(active) == 200
        assert active[0] == 500 and active[99] == 599
        assert active[100] == 1500 and active[-1] == 1599

    def test_bad_durations_rejected(self):
        with pytest.raises(ConfigError):
            GustSpec(startup_s=0.0)


class TestSeverity:
    def test_off_all_zero(self):
        rng = np.random.default_rng(0)
        steady, w20, gusts = sample_wind_config(rng, "eval", "off")
        assert np.all(steady == 0.0) and w20 == 0.0 and gusts.magnitude == 0.0

    def test_severe_values(self):
        rng = np.random.default_rng(0)
        steady, w20, gusts = sample_wind_config(rng, "eval", "severe")
        assert np.linalg.norm(steady) == pytest.approx(23.0)
        assert w20 == pytest.approx(22.86)
        assert gusts.magnitude == pytest.approx(23.0)

    def test_table_program(self):
        assert SEVERITY_TABLE["light"] == (7.0, 7.6, 7.0)
        assert SEVERITY_TABLE["moderate"] == (15.0, 15.25, 15.0)

    def test_directions_unit_norm(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            steady, _, gusts = sample_wind_config(rng, "eval", "moderate")
            assert np.linalg.norm(steady / 15.0) == pytest.approx(1.0)
            for d in gusts.directions_ned:
                assert np.linalg.norm(d) == pytest.approx(1.0)

    def test_train_mode_uniform_ranges(self):
        rng = np.random.default_rng(2)
        mags = []
        for _ in range(200):
            steady, w20, gusts = sample_wind_config(rng, "train", "severe")
            mags.append((np.linalg.norm(steady), w20, gusts.magnitude))
        mags = np.array(mags)
        assert np.all(mags[:, 0] <= 23.0) and np.all(mags[:, 1] <= 22.86)
        assert np.all(mags[:, 2] <= 23.0)
        assert mags[:, 0].max() > 15.0  # actually spans the range

    def test_unknown_severity_rejected(self):
        with pytest.raises(ConfigError):
            sample_wind_config(np.random.default_rng(0), "eval", "hurricane")

    def test_unknown_mode_rejected(self):
        with pytest.raises(ConfigError):
            sample_wind_config(np.random.default_rng(0), "test", "off")


class TestDryden:
    def test_zero_intensity_zero_output(self):
        d = DrydenState(0.0, 2.1, np.random.default_rng(0))
        for _ in range(100):
            turb, rates = dryden_step(d, 17.0, 600.0, 0.01)
            assert np.all(turb == 0.0) and np.all(rates == 0.0)

    def test_deterministic_given_seed(self):
        def run(seed):
            d = DrydenState(15.25, 2.1, np.random.default_rng(seed))
            return np.array([np.concatenate(dryden_step(d, 17.0, 600.0, 0.01))
                             for _ in range(200)])
        assert np.array_equal(run(42), run(42))
        assert not np.array_equal(run(42), run(43))

    def test_frozen_when_airspeed_nonpositive(self):
        d = DrydenState(15.25, 2.1, np.random.default_rng(0))
        t1, r1 = dryden_step(d, 17.0, 600.0, 0.01)
        t2, r2 = dryden_step(d, 0.0, 600.0, 0.01)
        assert np.array_equal(t1, t2) and np.array_equal(r1, r2)
        assert d.frozen_steps == 1

    def test_zero_mean_replicates(self):
        # z-test across independent runs: the mean of per-run means must be
        # within 3 standard errors of zero
        runs = 64
        steps = 2000  # 20 s
        d = DrydenState(15.25, 2.1, np.random.default_rng(7), batch_shape=(runs,))
        sums = np.zeros((runs, 3))
        for _ in range(steps):
            turb, _ = dryden_step(d, 17.0, 600.0, 0.01)
            sums += turb
        means = sums / steps
        for axis in range(3):
            m = means[:, axis]
            assert abs(m.mean()) <= 3.0 * m.std(ddof=1) / np.sqrt(runs)

    def test_intensity_scales_linearly_with_w20(self):
        # doubling W20 doubles the w-channel standard deviation
        def pooled_std(w20, seed):
            runs, steps = 64, 3000
            d = DrydenState(w20, 2.1, np.random.default_rng(seed), batch_shape=(runs,))
            vals = np.empty((steps, runs))
            for k in range(steps):
                turb, _ = dryden_step(d, 17.0, 600.0, 0.01)
                vals[k] = turb[:, 2]
            return vals.std()

        ratio = pooled_std(15.25, 3) / pooled_std(7.625, 4)
        assert ratio == pytest.approx(2.0, rel=0.10)

    def test_low_altitude_intensity_relations(self):
        d = DrydenState(15.25, 2.1, np.random.default_rng(0))
        sig_u, sig_v, sig_w, lu, lv, lw = d.intensities(600.0)
        assert sig_w == pytest.approx(1.525)
        # at the 1000 ft clamp the ratio term equals 1
        assert sig_u == pytest.approx(sig_w, rel=1e-12)
        assert lu == pytest.approx(lw, rel=1e-12)


class TestWindField:
    def test_all_zero(self):
        field = WindField.calm()
        s = field.sample(0.0, 17.0, 600.0, 0.01)
        assert np.all(s.ned_total() == 0.0) and np.all(s.turb_body == 0.0)

    def test_steady_only(self):
        field = WindField(np.array([3.0, -1.0, 0.5]),
                          DrydenState(0.0, 2.1, np.random.default_rng(0)), GustSpec())
        s = total_wind(field, 1.0, 17.0, 600.0, 0.01)
        assert np.allclose(s.ned_total(), [3.0, -1.0, 0.5])
        assert np.all(s.turb_body == 0.0) and np.all(s.turb_rates_body == 0.0)

    def test_steady_plus_gust_vector_sum(self):
        gusts = make_gust(magnitude=10.0, triggers=(0,))
        steady = np.array([5.0, 0.0, 0.0])
        field = WindField(steady, DrydenState(0.0, 2.1, np.random.default_rng(0)), gusts)
        s = field.sample(0.5, 17.0, 600.0, 0.01)  # inside the steady plateau
        assert np.allclose(s.ned_total(), steady + 10.0 * np.array([1.0, 0.0, 0.0]))
