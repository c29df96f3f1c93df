import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from lanlab.errors import DomainError, InvalidParameterError, UnsupportedError
from lanlab.model import (
    ParameterContext,
    class_levy,
    gaussian_levy,
    make_builtin_model,
    no_jumps,
    probe_assumptions,
    psi_prime,
    psi_prime_bounds,
    small_ball_mass_closed_form,
)

CLASS_PARAMS = {
    1: dict(intensity=1.0, radius=1.0, scale=0.5),
    2: dict(alpha=-1.0),
    3: dict(c1=0.5, c2=1.0, kappa=0.0),
    4: dict(c1=0.5, c2=1.0, kappa=1.0, gamma_alpha=1.0, gamma_beta=2.0),
}


class TestBuiltinModels:
    def test_additive_no_jumps(self):
        m = make_builtin_model("additive", 1.0)
        x = np.array([[0.3], [-2.0]])
        np.testing.assert_array_equal(m.drift(0.7, x), np.full((2, 1), 0.7))
        assert m.compensator_constant == 0.0
        assert m.closed_form == "additive"

    def test_ou_symmetric_jumps_have_zero_compensator(self):
        m = make_builtin_model("ou", 1.0, gaussian_levy(1.0, 0.0, 1.0))
        x = np.array([[0.5], [-1.5]])
        np.testing.assert_allclose(m.drift(2.0, x), -2.0 * x)
        np.testing.assert_allclose(m.drift_theta_deriv(2.0, x), -x)
        assert m.compensator_constant == 0.0

    def test_compensator_is_intensity_times_mean(self):
        m = make_builtin_model("additive", 2.0, gaussian_levy(0.5, 1.0, 1.0))
        assert m.compensator_constant == pytest.approx(0.5)
        np.testing.assert_allclose(m.jump_compensator(np.zeros((3, 1))), 0.5)

    @pytest.mark.parametrize("sigma", [0.0, -1.0])
    def test_nonpositive_sigma_rejected(self, sigma):
        with pytest.raises(InvalidParameterError):
            make_builtin_model("ou", sigma)

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidParameterError):
            make_builtin_model("cir", 1.0)

    @pytest.mark.parametrize("kind", ["additive", "ou"])
    def test_jump_coefficient_vanishes_at_zero(self, kind):
        m = make_builtin_model(kind, 1.0, gaussian_levy(1.0))
        x = np.linspace(-5, 5, 11)[:, None]
        np.testing.assert_array_equal(m.jump_coeff(x, np.zeros_like(x)), 0.0)


class TestSmallBallMass:
    def test_class1_below_support(self):
        assert small_ball_mass_closed_form(1, CLASS_PARAMS[1], 0.5) == 0.0

    def test_class2_value(self):
        assert small_ball_mass_closed_form(2, {"alpha": -1.0}, 0.1) == pytest.approx(0.2)

    def test_class3_value(self):
        assert small_ball_mass_closed_form(3, {"c1": 1.0, "c2": 1.0, "kappa": 0.0}, 0.2) == pytest.approx(0.4)

    @pytest.mark.parametrize("alpha", [-0.5, -1.0, -1.7])
    def test_class2_matches_quadrature(self, alpha):
        r = 0.3
        quad, _ = integrate.quad(lambda z: 2.0 * z ** (-alpha - 1.0), 0.0, r)
        assert small_ball_mass_closed_form(2, {"alpha": alpha}, r) == pytest.approx(quad, rel=1e-8)

    @pytest.mark.parametrize("tag", [3, 4])
    @pytest.mark.parametrize("r", [0.2, 0.9, 1.5, 3.0])
    def test_classes_3_4_match_quadrature(self, tag, r):
        p = CLASS_PARAMS[tag]
        if tag == 3:
            big = lambda z: p["c1"] * math.exp(-z * z / 2) / math.sqrt(2 * math.pi)  # noqa: E731
        else:
            big = lambda z: p["c1"] * p["gamma_alpha"] * math.exp(-p["gamma_beta"] * z) / z  # noqa: E731

        def density(z):
            return p["c2"] * z ** p["kappa"] if z <= 1 else big(z)

        quad = 2 * sum(integrate.quad(density, a, b)[0] for a, b in [(0, min(r, 1.0)), (1.0, max(r, 1.0))])
        assert small_ball_mass_closed_form(tag, p, r) == pytest.approx(quad, rel=1e-7)

    def test_negative_radius(self):
        with pytest.raises(DomainError):
            small_ball_mass_closed_form(2, {"alpha": -1.0}, -0.1)

    def test_unsupported_class(self):
        with pytest.raises(UnsupportedError):
            small_ball_mass_closed_form("custom", {}, 0.1)

    @pytest.mark.parametrize("tag", [1, 2, 3, 4])
    def test_total_mass_is_intensity(self, tag):
        levy = class_levy(tag, **CLASS_PARAMS[tag])
        assert levy.small_ball_mass(math.inf) == pytest.approx(levy.intensity)

    @pytest.mark.parametrize("tag", [1, 2, 3, 4])
    def test_sampler_matches_small_ball_law(self, tag):
        levy = class_levy(tag, **CLASS_PARAMS[tag])
        z = np.abs(levy.sample(np.random.default_rng(5), 200_000)[:, 0])
        for r in (0.3, 1.0, 1.6):
            p = levy.small_ball_mass(r) / levy.intensity
            se = math.sqrt(p * (1 - p) / z.size) + 1e-12
            assert abs(np.mean(z <= r) - p) < 5 * se

    @pytest.mark.parametrize("tag", [1, 2, 3, 4])
    def test_second_moment_matches_sampler(self, tag):
        levy = class_levy(tag, **CLASS_PARAMS[tag])
        z2 = levy.sample(np.random.default_rng(6), 400_000)[:, 0] ** 2
        assert z2.mean() == pytest.approx(levy.jump_second_moment, abs=5 * z2.std() / math.sqrt(z2.size))

    @pytest.mark.parametrize("tag", [2, 3, 4])
    @given(beta=st.floats(0.1, 0.9), upsilon=st.floats(0.05, 0.49))
    def test_small_ball_shrinks_along_grid(self, tag, beta, upsilon):
        levy = class_levy(tag, **CLASS_PARAMS[tag])
        ns = np.array([10, 100, 1_000, 10_000, 100_000])
        masses = [levy.small_ball_mass(float(n) ** (-beta * upsilon)) for n in ns]
        assert np.all(np.diff(masses) <= 1e-15)

    def test_class1_vanishes_at_large_n(self):
        levy = class_levy(1, **CLASS_PARAMS[1])
        assert all(levy.small_ball_mass(float(n) ** (-0.6 * 0.4)) == 0.0 for n in (1e3, 1e5, 1e7))

    @given(r1=st.floats(0, 5), r2=st.floats(0, 5), tag=st.sampled_from([1, 2, 3, 4]))
    def test_nondecreasing(self, r1, r2, tag):
        lo, hi = sorted((r1, r2))
        levy = class_levy(tag, **CLASS_PARAMS[tag])
        assert levy.small_ball_mass(lo) <= levy.small_ball_mass(hi) + 1e-15

    def test_gaussian_total(self):
        levy = gaussian_levy(2.5, 0.3, 1.1)
        assert levy.small_ball_mass(math.inf) == 2.5
        assert no_jumps().small_ball_mass(math.inf) == 0.0


class TestParameterContext:
    def test_theta_n(self):
        ctx = ParameterContext(1.0, 2.0, 100, 0.04)
        assert ctx.rate == pytest.approx(2.0)
        assert ctx.theta_n == pytest.approx(2.0)

    def test_power_rule(self):
        ctx = ParameterContext.power_rule(1.0, 1.0, 10_000, 0.6)
        assert ctx.delta_n == pytest.approx(10_000 ** -0.6)

    @pytest.mark.parametrize("n, delta", [(0, 0.1), (10, 0.0), (10, 1.5)])
    def test_invalid(self, n, delta):
        with pytest.raises(InvalidParameterError):
            ParameterContext(1.0, 1.0, n, delta)

    @given(
        theta0=st.floats(-5, 5),
        u=st.floats(-5, 5),
        n=st.integers(1, 10**6),
        delta=st.floats(1e-6, 1.0),
    )
    def test_interpolation_endpoints(self, theta0, u, n, delta):
        ctx = ParameterContext(theta0, u, n, delta)
        assert float(ctx.theta_of(0.0)) == theta0
        assert float(ctx.theta_of(1.0)) == pytest.approx(ctx.theta_n, rel=1e-12, abs=1e-12)
        assert ctx.horizon > 0


class TestProbe:
    @pytest.mark.parametrize("kind", ["additive", "ou"])
    @pytest.mark.parametrize("sigma", [1.0, 0.5])
    def test_builtins(self, kind, sigma):
        rep = probe_assumptions(make_builtin_model(kind, sigma, gaussian_levy(1.0)))
        assert rep.min_ellipticity == sigma**2
        assert rep.max_ellipticity == sigma**2
        assert rep.min_jump_ratio == 1.0
        assert rep.jump_at_zero_max == 0.0
        assert rep.psi_all_ok
        assert rep.failures == []

    def test_lipschitz(self):
        rep = probe_assumptions(make_builtin_model("ou", 1.0))
        assert rep.lipschitz_drift == pytest.approx(2.0, rel=0.01)  # theta_box upper end
        assert rep.lipschitz_diffusion == 0.0

    def test_psi_identity_at_zero_jump(self):
        v = np.linspace(-0.99, 0.99, 199)
        np.testing.assert_allclose(psi_prime(v, np.zeros_like(v)), 1.0, rtol=1e-7)
        lo, hi = psi_prime_bounds(0.0)
        assert lo == hi == 1.0

    def test_nonfinite_coefficients_recorded(self):
        import dataclasses

        m = make_builtin_model("ou", 1.0)
        bad = dataclasses.replace(m, drift=lambda theta, x: np.asarray(x, float) / 0.0)
        with np.errstate(all="ignore"):
            rep = probe_assumptions(bad, sample_count=10)
        assert any(f["quantity"] == "drift" for f in rep.failures)

    def test_to_dict_keys(self):
        d = probe_assumptions(make_builtin_model("ou", 1.0)).to_dict()
        assert d["a2_min_eigenvalue"] == 1.0
        assert d["a3_min_ratio"] == 1.0

    def test_empty_box(self):
        with pytest.raises(InvalidParameterError):
            probe_assumptions(make_builtin_model("ou", 1.0), x_box=(1.0, -1.0))
