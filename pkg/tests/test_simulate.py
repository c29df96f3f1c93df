import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from conftest import zero_noise
from lanlab.errors import InvalidParameterError, SimulationDivergedError, UnsupportedError
from lanlab.model import ParameterContext, gaussian_levy, make_builtin_model
from lanlab.rng import stream
from lanlab.simulate import (
    ObservationRecord,
    SimulationScheme,
    euler_vs_exact_check,
    simulate_endpoints,
    simulate_grid,
)

EULER = SimulationScheme(method="euler", substeps_per_interval=8)


class TestDeterministic:
    @pytest.mark.parametrize("scheme", [SimulationScheme(), EULER])
    def test_pure_drift(self, scheme):
        m = zero_noise(make_builtin_model("additive", 1.0))
        rec = simulate_grid(m, 1.0, 0.0, ParameterContext(1.0, 0.0, 4, 0.5), scheme=scheme, rng=stream(0))
        np.testing.assert_allclose(rec.values[:, 0], [0.0, 0.5, 1.0, 1.5, 2.0], atol=1e-14)

    def test_values_start_at_x0(self, ou_jumps):
        rec = simulate_grid(ou_jumps, 1.0, 0.7, ParameterContext(1.0, 0.0, 50, 0.1), rng=stream(1))
        assert rec.values[0, 0] == 0.7
        assert rec.values.shape == (51, 1)


class TestLaws:
    def test_pure_jump_variance(self):
        """sigma = 0, centred jumps: Var X_T = lambda E z^2 T."""
        m = zero_noise(make_builtin_model("additive", 1.0, gaussian_levy(1.0, 0.0, 1.0)))
        reps = 100_000
        x = simulate_endpoints(m, 0.0, np.zeros(reps), 1.0, stream(2))
        for _ in range(4):
            x = simulate_endpoints(m, 0.0, x, 1.0, stream(3, _))
        T = 5.0
        assert abs(x.mean()) < 3 * math.sqrt(T / reps)
        se = math.sqrt((np.mean(x**4) - T**2) / reps)
        assert abs(x.var() - T) < 3 * se

    def test_ou_stationary_variance(self):
        m = make_builtin_model("ou", 1.0)
        rec = simulate_grid(m, 1.0, 0.0, ParameterContext(1.0, 0.0, 400_000, 0.05), rng=stream(4))
        assert rec.values[1000:, 0].var() == pytest.approx(0.5, rel=0.03)

    def test_jump_counts_poisson(self, ou_jumps):
        ctx = ParameterContext(1.0, 0.0, 200_000, 0.5)
        rec = simulate_grid(ou_jumps, 1.0, 0.0, ctx, retain_latent=True, rng=stream(5))
        counts = rec.latent.jump_counts
        kmax = 4
        obs = np.bincount(np.minimum(counts, kmax), minlength=kmax + 1)
        p = stats.poisson.pmf(np.arange(kmax), 0.5)
        exp = counts.size * np.append(p, 1 - p.sum())
        assert stats.chisquare(obs, exp).pvalue > 1e-3

    @pytest.mark.parametrize("scheme", [SimulationScheme(), EULER])
    def test_latent_jump_times_inside_intervals(self, ou_jumps, scheme):
        ctx = ParameterContext(1.0, 0.0, 2000, 0.2)
        lat = simulate_grid(ou_jumps, 1.0, 0.0, ctx, scheme=scheme, retain_latent=True, rng=stream(6)).latent
        k = lat.jump_interval
        assert np.all(lat.jump_times > k * 0.2) and np.all(lat.jump_times < (k + 1) * 0.2)
        np.testing.assert_array_equal(np.bincount(k, minlength=ctx.n), lat.jump_counts)

    @pytest.mark.parametrize("kind", ["additive", "ou"])
    def test_increment_second_moment_linear(self, kind):
        m = make_builtin_model(kind, 1.0, gaussian_levy(1.0, 0.0, 1.0))
        ratios = []
        for s in (0.001, 0.01, 0.1):
            x1 = simulate_endpoints(m, 1.0, np.full(200_000, 1.0), s, stream(7, int(1 / s)))
            ratios.append(np.mean((x1 - 1.0) ** 2) / s)
        assert max(ratios) < 3.0 and min(ratios) > 1.0  # sigma^2 + lambda E z^2 = 2

    def test_fourth_moment_stabilises(self, ou_jumps):
        """Running mean of X^4 moves by < 5% over the second half (OU only: the additive walk is not ergodic)."""
        rec = simulate_grid(ou_jumps, 1.0, 0.0, ParameterContext(1.0, 0.0, 400_000, 0.05), rng=stream(8))
        x4 = rec.values[:, 0] ** 4
        running = np.cumsum(x4) / np.arange(1, x4.size + 1)
        mid, end = running[x4.size // 2], running[-1]
        assert abs(end - mid) / end < 0.05


class TestReproducibility:
    def test_same_key_same_record(self, ou_jumps):
        ctx = ParameterContext(1.0, 0.0, 500, 0.05)
        a = simulate_grid(ou_jumps, 1.0, 0.0, ctx, retain_latent=True, rng=stream(11, 3))
        _ = simulate_grid(ou_jumps, 1.0, 0.0, ctx, rng=stream(11, 2))
        b = simulate_grid(ou_jumps, 1.0, 0.0, ctx, retain_latent=True, rng=stream(11, 3))
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.latent.dB, b.latent.dB)

    def test_different_reps_differ(self, ou_jumps):
        ctx = ParameterContext(1.0, 0.0, 50, 0.05)
        a = simulate_grid(ou_jumps, 1.0, 0.0, ctx, rng=stream(11, 0))
        b = simulate_grid(ou_jumps, 1.0, 0.0, ctx, rng=stream(11, 1))
        assert not np.array_equal(a.values, b.values)

    @given(seed=st.integers(0, 2**32), rep=st.integers(0, 10**6))
    def test_stream_keying(self, seed, rep):
        assert stream(seed, rep).random() == stream(seed, rep).random()


class TestFinePath:
    @pytest.mark.parametrize("scheme", [SimulationScheme(), EULER])
    def test_fine_endpoints_match_grid(self, ou_jumps, scheme):
        ctx = ParameterContext(1.0, 0.0, 300, 0.1)
        rec = simulate_grid(ou_jumps, 1.0, 0.5, ctx, scheme=scheme, fine=True, rng=stream(12))
        fv = rec.latent.fine_values
        np.testing.assert_allclose(fv[:, 0], rec.values[:-1], atol=1e-12)
        np.testing.assert_allclose(fv[:, -1], rec.values[1:], atol=1e-12)
        np.testing.assert_allclose(rec.latent.fine_dW.sum(axis=1), rec.latent.dB, atol=1e-12)

    def test_fine_does_not_change_grid_law(self):
        """Coarse observations from the fine simulator have the exact transition variance."""
        ctx = ParameterContext(1.0, 0.0, 100_000, 0.1)
        m = make_builtin_model("ou", 1.0)
        rec = simulate_grid(m, 1.0, 0.0, ctx, fine=True, rng=stream(13))
        resid = rec.values[1:, 0] - math.exp(-0.1) * rec.values[:-1, 0]
        assert resid.var() == pytest.approx(-math.expm1(-0.2) / 2, rel=0.02)


class TestSerialization:
    def test_csv_round_trip(self, ou_jumps, tmp_path):
        rec = simulate_grid(ou_jumps, 1.0, 0.0, ParameterContext(1.0, 0.0, 40, 0.05), rng=stream(14))
        rec.to_csv(tmp_path / "p.csv")
        back = ObservationRecord.from_csv(tmp_path / "p.csv")
        np.testing.assert_array_equal(back.values, rec.values)
        assert back.delta_n == rec.delta_n
        assert (tmp_path / "p.csv").read_text().splitlines()[0] == "k,t,x_1"

    def test_latent_round_trip(self, ou_jumps, tmp_path):
        rec = simulate_grid(ou_jumps, 1.0, 0.0, ParameterContext(1.0, 0.0, 30, 0.5), fine=True, rng=stream(15))
        rec.write_latent(tmp_path / "l.bin")
        header, lat = ObservationRecord.read_latent(tmp_path / "l.bin")
        assert header["n"] == 30 and header["d"] == 1
        np.testing.assert_array_equal(lat.dB, rec.latent.dB)
        np.testing.assert_array_equal(lat.jump_times, rec.latent.jump_times)
        np.testing.assert_array_equal(lat.fine_values, rec.latent.fine_values)


class TestErrors:
    def test_ou_needs_positive_theta(self, ou_jumps):
        with pytest.raises(InvalidParameterError):
            simulate_grid(ou_jumps, -1.0, 0.0, ParameterContext(1.0, 0.0, 5, 0.1))

    def test_exact_needs_closed_form(self, ou_jumps):
        import dataclasses

        with pytest.raises(UnsupportedError):
            simulate_grid(dataclasses.replace(ou_jumps, closed_form="none"), 1.0, 0.0, ParameterContext(1.0, 0.0, 5, 0.1))

    def test_divergence_reports_step(self):
        import dataclasses

        m = make_builtin_model("ou", 1.0)
        explode = dataclasses.replace(m, closed_form="none", drift=lambda th, x: 1e200 * np.asarray(x) ** 3)
        with np.errstate(all="ignore"), pytest.raises(SimulationDivergedError) as info:
            simulate_grid(explode, 1.0, 1.0, ParameterContext(1.0, 0.0, 20, 0.5), scheme=EULER, rng=stream(0))
        assert info.value.step >= 1

    def test_invalid_substeps(self):
        with pytest.raises(InvalidParameterError):
            SimulationScheme(method="euler", substeps_per_interval=0)


class TestWeakError:
    def test_additive_schemes_coincide(self, additive_jumps):
        rep = euler_vs_exact_check(additive_jumps, 1.0, ParameterContext(1.0, 0.0, 1, 0.1), 3, 100_000, stream(20))
        lo, hi = rep.mean_ci(3.0)
        assert lo <= 0.0 <= hi
        assert abs(rep.var_discrepancy) < 3 * rep.var_se

    def test_ou_first_order(self):
        m = make_builtin_model("ou", 1.0)
        ctx = ParameterContext(1.0, 0.0, 1, 0.5)
        errs = []
        for sub in (1, 4):
            rep = euler_vs_exact_check(m, 1.0, ctx, sub, 400_000, stream(21, sub), x0=5.0)
            errs.append(abs(rep.mean_discrepancy))
        assert 2.0 <= errs[0] / errs[1] <= 6.0

    def test_ou_small_step(self):
        m = make_builtin_model("ou", 1.0)
        rep = euler_vs_exact_check(m, 1.0, ParameterContext(1.0, 0.0, 1, 0.01), 10, 100_000, stream(22))
        assert abs(rep.mean_discrepancy) < 1e-3
