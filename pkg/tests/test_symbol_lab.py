import dataclasses
import math

import numpy as np
import pytest

from gevolab import symbol_lab as sl


class TestCutoffs:
    def test_plateaus_and_supports(self, cutoffs):
        ys = np.linspace(-3, 3, 1201)
        psi = cutoffs.psi(ys)
        assert np.all((psi >= 0) & (psi <= 1))
        assert np.all(psi[np.abs(ys) <= 0.5] == 1.0)
        assert np.all(psi[np.abs(ys) >= 1.0] == 0.0)
        assert float(cutoffs.psi(0.25)) == 1.0
        assert float(cutoffs.chi(2.0)) == 0.0
        assert float(cutoffs.chi(-0.4)) == 1.0

    def test_chi_transition_strictly_monotone(self, cutoffs):
        # y * chi'(y) < 0 on the transition bands; at the flat bump ends the
        # derivative underflows to -0, so strictness is checked where it is
        # representable at all
        for band in (np.linspace(0.501, 0.999, 200),
                     np.linspace(-0.999, -0.501, 200)):
            vals = band * cutoffs.chi_prime(band)
            assert np.all(vals <= 0)
        for band in (np.linspace(0.55, 0.95, 200),
                     np.linspace(-0.95, -0.55, 200)):
            vals = band * cutoffs.chi_prime(band)
            assert np.all(vals < 0)

    def test_chi_prime_matches_finite_difference(self, cutoffs):
        h = 1e-6
        for y in (0.6, 0.75, 0.9, -0.65):
            fd = (cutoffs.chi(y + h) - cutoffs.chi(y - h)) / (2 * h)
            assert float(cutoffs.chi_prime(y)) == pytest.approx(fd, rel=1e-6)
        assert float(cutoffs.chi_prime(0.75)) < 0

    def test_omega_plateaus(self, cutoffs):
        xs = np.linspace(-10, 10, 2001)
        om = cutoffs.omega(xs)
        assert np.all(np.abs(om) <= 1)
        assert np.all(om[np.abs(xs) <= 1.0] == 0.0)
        assert np.all(om[np.abs(xs) >= cutoffs.R] == -1.0)
        flipped = sl.make_cutoffs(a3_sign=-1)
        assert float(flipped.omega(5.0)) == 1.0

    def test_make_cutoffs_validation(self):
        with pytest.raises(ValueError):
            sl.make_cutoffs(R=1.0)
        with pytest.raises(ValueError):
            sl.make_cutoffs(transition_sharpness=0.0)
        with pytest.raises(ValueError):
            sl.make_cutoffs(a3_sign=2)


class TestLevelWeights:
    def test_trivial_zeros(self, default_profile, default_consts, default_plan,
                           cutoffs):
        kw = dict(profile=default_profile, consts=default_consts,
                  cutoffs=cutoffs)
        assert sl.lambda2(0.0, 40.0, q2=default_plan.q2, **kw) == 0.0
        assert sl.lambda1(0.0, 40.0, q1=default_plan.q1, **kw) == 0.0
        # the frequency switch vanishes for |xi| <= h
        assert sl.lambda2(3.0, 0.9, q2=default_plan.q2, **kw) == 0.0
        assert sl.lambda2(3.0, -1.0, q2=default_plan.q2, **kw) == 0.0

    def test_odd_symmetry(self, default_profile, default_consts, default_plan,
                          cutoffs, rng):
        for _ in range(20):
            x = float(rng.uniform(0.1, 60.0))
            xi = float(rng.uniform(2.0, 200.0))
            plus = sl.lambda2(x, xi, profile=default_profile,
                              consts=default_consts, q2=default_plan.q2,
                              cutoffs=cutoffs)
            minus = sl.lambda2(-x, xi, profile=default_profile,
                               consts=default_consts, q2=default_plan.q2,
                               cutoffs=cutoffs)
            assert plus == -minus

    def test_sign_relation_level1(self, default_profile, default_consts,
                                  default_plan, cutoffs):
        for x, xi in ((3.0, 50.0), (-3.0, 50.0), (7.0, -50.0)):
            val = sl.lambda1(x, xi, profile=default_profile,
                             consts=default_consts, q1=default_plan.q1,
                             cutoffs=cutoffs)
            w = float(cutoffs.omega(xi / default_consts.h))
            assert math.copysign(1, val) == math.copysign(1, x) * \
                math.copysign(1, w)

    def test_trapezoid_oracle_beyond_support(self, default_profile,
                                             default_consts, default_plan,
                                             cutoffs):
        # <xi>_h = 100, x beyond the interior-cutoff edge: the integral
        # saturates; compare adaptive quadrature with a 1e6-point trapezoid
        sigma2, q2 = 0.8, default_plan.q2
        xi = math.sqrt(100.0 ** 2 - default_consts.h ** 2)
        Y = 100.0 ** ((2 - q2) / sigma2)
        y_end = math.sqrt(Y * Y - 1.0)
        x = 2.0 * y_end
        val = sl.lambda2(x, xi, profile=default_profile,
                         consts=default_consts, q2=q2, cutoffs=cutoffs)
        ys = np.linspace(0.0, y_end, 1_000_001)
        integrand = (1 + ys ** 2) ** (-sigma2 / 2) * \
            cutoffs.psi(np.sqrt(1 + ys ** 2) / Y)
        oracle = default_consts.M2 * float(cutoffs.omega(xi)) * \
            np.trapezoid(integrand, ys)
        assert val == pytest.approx(oracle, rel=1e-8, abs=1e-10)
        # bounded by M2 * C * <xi>_h^((2-q2)(1-sigma2)/sigma2)
        cap = default_consts.M2 * (1 / (1 - sigma2) + 1) * \
            100.0 ** ((2 - q2) * (1 - sigma2) / sigma2)
        assert abs(val) <= cap

    def test_sigma1_equal_one_asinh_primitive(self, default_consts, cutoffs):
        # at sigma = 1 the plateau part of the integral is asinh
        from gevolab.classification import DegeneracyProfile
        prof = DegeneracyProfile(ell=2.0, k=1.0, kprime=1.0, sigma1=1.0,
                                 sigma2=0.8)
        plan = sl.make_plan(prof)
        xi = 300.0
        hz = math.hypot(default_consts.h, xi)
        Y = hz ** ((1 - plan.q1) / 1.0)
        x = 0.25 * Y  # inside the plateau, cutoff identically one
        val = sl.lambda1(x, xi, profile=prof, consts=default_consts,
                         q1=plan.q1, cutoffs=cutoffs)
        expected = default_consts.M1 * float(cutoffs.omega(xi)) * \
            math.asinh(x) / hz
        assert val == pytest.approx(expected, rel=1e-10)
        # log-type envelope: |lambda1| <= M1 * C * log<x> / <xi>_h
        assert abs(val) <= default_consts.M1 * 2.0 * math.log(
            math.hypot(x, 1.0)) / hz

    def test_dual_route_agreement(self, default_profile, default_consts,
                                  default_plan, cutoffs, rng):
        xs = rng.uniform(-900.0, 900.0, 120)
        xis = rng.uniform(-900.0, 900.0, 120)
        quad2 = np.array([
            sl.lambda2(float(x), float(xi), profile=default_profile,
                       consts=default_consts, q2=default_plan.q2,
                       cutoffs=cutoffs) for x, xi in zip(xs, xis)])
        grid2 = sl.lambda2_grid(xs, xis, sigma2=default_plan.sigma2,
                                consts=default_consts, q2=default_plan.q2,
                                cutoffs=cutoffs)
        assert np.max(np.abs(quad2 - grid2)) < 2e-9
        quad1 = np.array([
            sl.lambda1(float(x), float(xi), profile=default_profile,
                       consts=default_consts, q1=default_plan.q1,
                       cutoffs=cutoffs) for x, xi in zip(xs, xis)])
        grid1 = sl.lambda1_grid(xs, xis, sigma1=default_plan.sigma1,
                                consts=default_consts, q1=default_plan.q1,
                                cutoffs=cutoffs)
        assert np.max(np.abs(quad1 - grid1)) < 2e-9


class TestCombinedWeight:
    def test_vanishes_at_time_zero(self, default_profile, default_consts,
                                   default_plan, cutoffs, rng):
        field = sl.Lambda_field(default_profile, default_consts, default_plan,
                                cutoffs)
        xs = rng.uniform(-100, 100, 50)
        xis = rng.uniform(-500, 500, 50)
        vals = field.eval(0.0, xs, xis)
        assert np.max(np.abs(vals)) == 0.0

    def test_zone_pieces_nonpositive(self, default_profile, default_consts,
                                     default_plan, cutoffs):
        hz = sl.xi_weight(np.geomspace(1.0, 500.0, 60), default_consts.h)
        for level in (2, 1):
            args = sl._level_args(level, default_profile, default_consts,
                                  default_plan, cutoffs, hz,
                                  np.zeros_like(hz))
            for t in (0.05, 0.3, 1.0):
                _, big_evo, big_psi = sl._zone_pieces(t, **args)
                assert np.all(big_evo <= 1e-15)
                assert np.all(big_psi <= 1e-15)

    def test_order_bound_on_dense_grid(self, default_profile, default_consts,
                                       default_plan, cutoffs):
        # brute-force sup of |Lambda| / <xi>_h^q over a 200x200x20 grid
        field = sl.Lambda_field(default_profile, default_consts, default_plan,
                                cutoffs)
        x = np.linspace(-800.0, 800.0, 200)[:, None, None]
        xi = np.geomspace(1.0, 1000.0, 200)[None, :, None]
        t = np.linspace(0.0, 1.0, 20)[None, None, :]
        vals = np.abs(field.eval(t, x, xi))
        hz = sl.xi_weight(xi, default_consts.h)
        ratio = vals / hz ** default_plan.q
        C = float(np.max(ratio))
        assert np.isfinite(C) and C < 30.0
        # frequency order really is q: the supremum over (x, t) including
        # zone-edge-refined times grows with fitted exponent close to q
        xis = np.geomspace(10.0, 1000.0, 12)
        sups = []
        for xi_v in xis:
            hz_v = float(sl.xi_weight(xi_v, default_consts.h))
            edge = hz_v ** (-default_plan.zone_exp2)
            ts = np.unique(np.concatenate([
                np.linspace(0.0, 1.0, 12),
                edge * np.geomspace(0.26, 4.0, 24)]))
            ts = ts[ts <= 1.0][:, None]
            sups.append(float(np.max(np.abs(
                field.eval(ts, np.linspace(-400, 400, 41)[None, :], xi_v)))))
        slope = float(np.polyfit(np.log(xis), np.log(sups), 1)[0])
        assert slope == pytest.approx(default_plan.q, abs=0.1)

    def test_zone_balance_identity(self, default_profile, default_plan):
        from gevolab.classification import compute_q1
        ell, k, kp = (float(default_profile.ell), float(default_profile.k),
                      float(default_profile.kprime))
        s2, s1 = default_plan.sigma2, default_plan.sigma1
        q2 = default_plan.q2
        assert abs((2 - q2) * ((ell - k) / (k + 1) + (1 - s2) / s2) - q2) \
            < 1e-12
        q1_raw = compute_q1(ell, kp, s1)
        assert abs((1 - q1_raw) * ((ell - kp) / (kp + 1) + (1 - s1) / s1)
                   - 1 - q1_raw) < 1e-12


class TestTimeDerivative:
    def test_zero_below_zone_thresholds(self, default_profile, default_consts,
                                        default_plan, cutoffs):
        field = sl.dt_Lambda_field(default_profile, default_consts,
                                   default_plan, cutoffs)
        assert float(field(0.0, 3.0, 40.0)) == 0.0
        # t so small that every zone factor vanishes except the level
        # integrals, which carry t**k -> the value is the pseudo zone term
        hz = sl.xi_weight(40.0, default_consts.h)
        t = 1e-9
        val = float(field(t, 3.0, 40.0))
        expected = (-default_consts.Mpsi2 * t * hz ** 2
                    - default_consts.Mpsi1 * t * hz)
        assert val == pytest.approx(expected, rel=1e-9)

    def test_pseudo_zone_exact_identity(self, default_profile, default_consts,
                                        default_plan, cutoffs):
        # inside the level-2 pseudodifferential zone the level-2 time
        # derivative is exactly -Mpsi2 * t^k * <xi>_h^2
        hz = sl.xi_weight(30.0, default_consts.h)
        args = sl._level_args(2, default_profile, default_consts,
                              default_plan, cutoffs, np.asarray(hz),
                              np.asarray(0.77))
        # t * Xi = 0.2 <= 1/4: deep enough that the overlapping evolution
        # supports (which start at 1/4) are inactive too
        t = 0.2 / hz ** default_plan.zone_exp2
        val = sl._dt_zone_pieces(t, **args)
        assert float(val) == pytest.approx(
            -default_consts.Mpsi2 * t * hz ** 2, rel=1e-13)

    def test_matches_finite_difference(self, default_profile, default_consts,
                                       default_plan, cutoffs, rng):
        F = sl.Lambda_field(default_profile, default_consts, default_plan,
                            cutoffs)
        dF = sl.dt_Lambda_field(default_profile, default_consts, default_plan,
                                cutoffs)
        checked = 0
        while checked < 100:
            t = float(rng.uniform(0.1, 0.95))
            x = float(rng.uniform(-50, 50))
            xi = float(rng.uniform(5.0, 400.0))
            hz = float(sl.xi_weight(xi, default_consts.h))
            # stay away from zone transitions where high time derivatives
            # make the finite-difference reference itself inaccurate
            edges = []
            for z in (default_plan.zone_exp2, default_plan.zone_exp1):
                s = t * hz ** z
                edges.extend([abs(s - 0.25), abs(s - 0.5), abs(s - 1.0)])
            if min(edges) < 0.05:
                continue
            dt = 1e-6
            fd = (float(F(t + dt, x, xi)) - float(F(t - dt, x, xi))) / (2 * dt)
            an = float(dF(t, x, xi))
            if abs(an) < 1e-8:
                continue
            assert an == pytest.approx(fd, rel=1e-6)
            checked += 1

    def test_level2_derivative_bounds(self, default_profile, default_consts,
                                      default_plan, cutoffs):
        # |level-2 part| <= C min(t^k <xi>_h^2, <xi>_h^(2-(2-q2)k/(k+1)))
        k = float(default_profile.k)
        q2 = default_plan.q2
        ts = np.linspace(0.002, 1.0, 120)[:, None]
        xis = np.geomspace(2.0, 1000.0, 120)[None, :]
        hz = sl.xi_weight(xis, default_consts.h)
        lam2 = sl.lambda2_grid(5.0, xis, sigma2=default_plan.sigma2,
                               consts=default_consts, q2=q2, cutoffs=cutoffs)
        args = sl._level_args(2, default_profile, default_consts,
                              default_plan, cutoffs, hz, lam2)
        vals = np.abs(sl._dt_zone_pieces(ts, **args))
        envelope = np.minimum(ts ** k * hz ** 2,
                              hz ** (2 - (2 - q2) * k / (k + 1)))
        C = float(np.max(vals / envelope))
        assert np.isfinite(C) and C < 20.0


class TestEstimateChecker:
    def test_constant_field_passes_with_unit_constants(self, default_profile,
                                                       default_consts,
                                                       default_plan, cutoffs):
        grid = sl.make_estimate_grid(default_profile, default_consts,
                                     default_plan, cutoffs, nx=8, nxi=8, nt=3)
        rep = sl.verify_symbol_estimate(sl.constant_field(1.0), 2, 2, grid,
                                        mu=1.01, h=1.0, cap=100.0)
        assert rep.passed
        assert all(c <= 1.0 + 1e-9 for c in rep.best_constants.values())

    def test_misdeclared_order_is_caught(self, default_profile,
                                         default_consts, default_plan,
                                         cutoffs):
        grid = sl.make_estimate_grid(default_profile, default_consts,
                                     default_plan, cutoffs)
        good = sl.lambda2_field(default_profile, default_consts, default_plan,
                                cutoffs)
        bad = dataclasses.replace(good, order_xi=-1.0)
        rep = sl.verify_symbol_estimate(bad, 2, 2, grid, mu=1.01, h=1.0,
                                        cap=100.0)
        assert not rep.passed
        # the violations concentrate at large frequencies
        assert min(v["xi"] for v in rep.violations) > 30.0

    def test_depth_cap(self, default_profile, default_consts, default_plan,
                       cutoffs):
        grid = sl.make_estimate_grid(default_profile, default_consts,
                                     default_plan, cutoffs, nx=6, nxi=6, nt=2)
        with pytest.raises(ValueError, match="depth"):
            sl.verify_symbol_estimate(sl.constant_field(), 5, 2, grid)

    def test_all_fields_certify(self, default_profile, default_consts,
                                default_plan, cutoffs):
        grid = sl.make_estimate_grid(default_profile, default_consts,
                                     default_plan, cutoffs, nx=10, nxi=10,
                                     nt=4)
        for maker in (sl.lambda2_field, sl.lambda1_field, sl.Lambda_field,
                      sl.dt_Lambda_field):
            field = maker(default_profile, default_consts, default_plan,
                          cutoffs)
            rep = sl.verify_symbol_estimate(field, 2, 2, grid, mu=1.01,
                                            h=1.0, cap=100.0)
            assert rep.passed, (field.label, rep.best_constants)


class TestSpatialDerivativeDecay:
    def test_level2_slopes(self, default_profile, default_consts,
                           default_plan, cutoffs):
        """d_x of the level-2 evolution piece: decay -sigma2 in x and
        frequency order (2-q2)(ell-k)/(k+1) after the sup over time."""
        M2 = default_consts.M2
        sigma2 = default_plan.sigma2
        gap = float(default_profile.ell) - float(default_profile.k)
        zone = default_plan.zone_exp2

        def dx_piece(t, x, xi):
            hz = float(sl.xi_weight(xi, default_consts.h))
            Y = hz ** default_plan.psi_exp2
            s = t * hz ** zone
            return (t ** (-gap) * M2 * float(cutoffs.omega(xi))
                    * math.hypot(x, 1.0) ** (-sigma2)
                    * float(cutoffs.psi(math.hypot(x, 1.0) / Y))
                    * float(1.0 - cutoffs.chi(s)))

        # x-decay at fixed (t, xi), two decades of x
        xs = np.geomspace(5.0, 500.0, 30)
        vals = np.array([abs(dx_piece(0.9, x, 300.0)) for x in xs])
        slope_x = np.polyfit(np.log(xs), np.log(vals), 1)[0]
        assert slope_x == pytest.approx(-sigma2, abs=0.05)

        # frequency order of the sup over time, two decades of xi
        xis = np.geomspace(10.0, 1000.0, 25)
        sups = []
        for xi in xis:
            hz = float(sl.xi_weight(xi, default_consts.h))
            edge = hz ** (-zone)
            ts = edge * np.geomspace(0.26, 4.0, 400)
            ts = ts[ts <= 1.0]
            sups.append(max(abs(dx_piece(t, 2.0, xi)) for t in ts))
        slope_xi = np.polyfit(np.log(xis), np.log(sups), 1)[0]
        assert slope_xi == pytest.approx((2 - default_plan.q2) * gap / 2.0,
                                         abs=0.05)


class TestCalibration:
    def test_calibrated_amplitudes_make_evolution_bracket_definite(
            self, default_profile, default_plan, cutoffs):
        seed = sl.TransformConstants(M2=0.05, M1=0.05, Me2=1.0, Me1=1.0,
                                     Mpsi2=0.075, Mpsi1=0.075, rho0=0.1)
        me2, me1 = sl.calibrate_evolution_amplitudes(
            default_profile, seed, default_plan, cutoffs)
        consts = dataclasses.replace(seed, Me2=me2, Me1=me1)
        # with the calibrated amplitudes every piece of the combined weight
        # loses mass in time: the full per-level time derivative stays
        # nonpositive on the test region
        x = np.linspace(-900, 900, 101)[:, None]
        xi = np.geomspace(1.0, 1000.0, 80)[None, :]
        hz = sl.xi_weight(xi, consts.h)
        lam2 = sl.lambda2_grid(x, xi, sigma2=default_plan.sigma2,
                               consts=consts, q2=default_plan.q2,
                               cutoffs=cutoffs)
        lam1 = sl.lambda1_grid(x, xi, sigma1=default_plan.sigma1,
                               consts=consts, q1=default_plan.q1,
                               cutoffs=cutoffs)
        for t in (0.05, 0.2, 0.6, 1.0):
            for level, lam in ((2, lam2), (1, lam1)):
                args = sl._level_args(level, default_profile, consts,
                                      default_plan, cutoffs, hz, lam)
                vals = sl._dt_zone_pieces(t, **args)
                assert np.max(vals) <= 1e-12
        # under-sized amplitudes break the sign, so the calibration bites
        small = dataclasses.replace(seed, Me2=me2 / 50.0, Me1=me1)
        args = sl._level_args(2, default_profile, small, default_plan,
                              cutoffs, hz, lam2)
        assert np.max(sl._dt_zone_pieces(0.2, **args)) > 0
