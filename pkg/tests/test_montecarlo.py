"""Tests for the Monte Carlo estimators.

Oracles used here:

* the four-angle drift is checked against an independent finite-difference
  Girsanov computation: kappa times the partial derivative of the ensemble
  module's log-martingale at a fresh (zero-capacity) state;
* recorded driving paths are re-integrated step by step from the raw
  uniform stream (Box-Muller pairs at counters 2s, 2s+1) and the exact
  drift formula;
* weighted survival estimates are compared with the spectral expansion;
* the power-law fitter is exercised on synthetic data with known slope;
* stopping radii are validated with the Koebe quarter-theorem sandwich
  between conformal radius and Euclidean distance.
"""

import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from twocurve import _kernels, _rng, ensemble, loewner, montecarlo as mc
from twocurve.context import KappaContext
from twocurve.density import SpectralBasis, survival_P2
from twocurve.green import BoundaryConfig, G_quad, alpha0
from twocurve.timecurve import ZState

TWO_PI = 2.0 * math.pi
CTX6 = KappaContext(6.0)
S8 = math.pi / 4.0
SYM_CFG = BoundaryConfig(w1=3 * S8, v1=S8, w2=-S8, v2=-3 * S8)
ASYM_CFG = BoundaryConfig(w1=2.2, v1=0.9, w2=-0.4, v2=-1.9)


def random_quads(n, seed, min_gap=0.15):
    """Descending marked quadruples (w1 > v1 > w2 > v2) with safe gaps."""
    rng = np.random.default_rng(seed)
    quads = []
    while len(quads) < n:
        cuts = rng.uniform(min_gap, 1.0, size=4)
        gaps = cuts / cuts.sum() * TWO_PI
        if gaps.min() < min_gap:
            continue
        w1 = rng.uniform(-math.pi, math.pi)
        v1 = w1 - gaps[0]
        w2 = v1 - gaps[1]
        v2 = w2 - gaps[2]
        quads.append((w1, v1, w2, v2))
    return quads


class TestHsleDrift:
    def test_matches_displayed_formula(self):
        # independent recomputation: (kappa-6)/2 cot2(w0-winf)
        #   + (1/2)(cot2(w0-v1) - cot2(w0-v2)) * Gtilde(R)
        from twocurve.special import hyp_tilde_G
        from twocurve.trig import cot2, sin2
        for kappa in (3.0, 6.0, 7.5):
            ctx = KappaContext(kappa)
            for w1, v1, w2, v2 in random_quads(6, seed=int(10 * kappa)):
                # ascending curve-1 tuple: w0 < v1s < v2s < winf
                w0, v1s, v2s, winf = w1, v2 + TWO_PI, w2 + TWO_PI, v1 + TWO_PI
                R = 1.0 - (sin2(w0 - winf) * sin2(v1s - v2s)
                           / (sin2(w0 - v2s) * sin2(v1s - winf)))
                assert 0.0 < R < 1.0
                expect = (0.5 * (kappa - 6.0) * cot2(w0 - winf)
                          + 0.5 * (cot2(w0 - v1s) - cot2(w0 - v2s))
                          * hyp_tilde_G(ctx, R))
                got = mc.hsle_drift(ctx, w0, winf, v1s, v2s)
                assert_allclose(got, expect, rtol=1e-12, atol=1e-12)

    def test_orientation_antisymmetry(self):
        # mirror the circle (negate all angles): drift flips sign
        for w1, v1, w2, v2 in random_quads(8, seed=3):
            w0, v1s, v2s, winf = w1, v2 + TWO_PI, w2 + TWO_PI, v1 + TWO_PI
            d_up = mc.hsle_drift(CTX6, w0, winf, v1s, v2s)
            d_dn = mc.hsle_drift(CTX6, -w0, -winf, -v1s, -v2s)
            assert_allclose(d_dn, -d_up, rtol=1e-12, atol=1e-12)

    def test_pi_separation_kills_endpoint_term(self):
        # when the target sits diametrically opposite the driver the
        # (kappa-6)/2 cot2 term vanishes and the drift reduces to the
        # flank term alone -- for every kappa
        from twocurve.special import hyp_tilde_G
        from twocurve.trig import cot2, sin2
        w0, winf = 2.0, 2.0 - math.pi
        v1s, v2s = 1.2, 0.2
        for kappa in (2.5, 4.0, 6.0, 7.9):
            ctx = KappaContext(kappa)
            R = 1.0 - (sin2(w0 - winf) * sin2(v1s - v2s)
                       / (sin2(w0 - v2s) * sin2(v1s - winf)))
            flank = (0.5 * (cot2(w0 - v1s) - cot2(w0 - v2s))
                     * hyp_tilde_G(ctx, R))
            got = mc.hsle_drift(ctx, w0, winf, v1s, v2s)
            assert_allclose(got, flank, rtol=1e-10, atol=1e-12)

    def test_girsanov_finite_difference(self):
        # kappa * d/dW_j log M at a fresh state equals the drift (the
        # tilt of the driving Brownian motion under the two-curve law)
        h = 1e-5
        for kappa in (2.0, 3.5, 6.0, 7.5):
            ctx = KappaContext(kappa)
            for w1, v1, w2, v2 in random_quads(6, seed=int(7 * kappa)):
                st = ensemble.fresh_state(w1, v1, w2, v2)
                for j, field in ((1, "W1"), (2, "W2")):
                    base = getattr(st, field)
                    lp = ensemble.log_M_iB_ch(
                        ctx, dataclasses.replace(st, **{field: base + h}))
                    lm = ensemble.log_M_iB_ch(
                        ctx, dataclasses.replace(st, **{field: base - h}))
                    fd = kappa * (lp - lm) / (2.0 * h)
                    if j == 1:
                        drift = mc.hsle_drift(ctx, w1, v1 + TWO_PI,
                                              v2 + TWO_PI, w2 + TWO_PI)
                    else:
                        drift = mc.hsle_drift(ctx, w2, v2 + TWO_PI, v1, w1)
                    assert abs(fd - drift) < 1e-8

    def test_rejects_broken_cyclic_order(self):
        # v1 and v2 on the same side of the driver (not bracketing winf)
        with pytest.raises(ValueError):
            mc.hsle_drift(CTX6, 0.0, 3.0, 1.0, -1.0)
        # coincident points
        with pytest.raises(ValueError):
            mc.hsle_drift(CTX6, 0.0, 2.0, 1.0, 1.0)
        # span beyond a full turn
        with pytest.raises(ValueError):
            mc.hsle_drift(CTX6, 0.0, 7.0, 1.0, 2.0)


class TestSimulateHsle:
    def test_capacity_stop_and_series_shapes(self):
        dt = 1e-4
        path, comp = mc.simulate_hsle(CTX6, SYM_CFG, 1, dt, 0,
                                      {"capacity": 0.05})
        assert comp["stop_reason"] == "capacity"
        assert abs(comp["capacity"] - 0.05) <= dt + 1e-12
        n = len(path.times)
        assert n == 501
        assert path.times[0] == 0.0
        assert_allclose(np.diff(path.times), dt)
        for key in ("v1", "v2", "winf"):
            assert len(comp[key]) == n
        assert comp["flags"] == ()

    def test_per_step_reproduction(self):
        # re-integrate the recorded series from the raw uniform stream
        # and the exact drift; the kernel's tabulated special-function
        # factor differs from the exact one by ~5e-8, i.e. ~5e-11 per
        # step at dt=1e-3
        for kappa, j, seed, dt in ((6.0, 1, 0, 1e-3), (7.5, 2, 5, 1e-4)):
            ctx = KappaContext(kappa)
            path, comp = mc.simulate_hsle(ctx, SYM_CFG, j, dt, seed,
                                          {"capacity": 0.04})
            w = path.values
            v1, v2, winf = comp["v1"], comp["v2"], comp["winf"]
            stream = _rng.derive_stream(seed, 0)
            sqkdt = math.sqrt(kappa * dt)
            worst = 0.0
            for k in range(len(w) - 1):
                u0 = _rng.uniform(stream, 2 * k)
                u1 = _rng.uniform(stream, 2 * k + 1)
                g = math.sqrt(-2.0 * math.log(u0)) * math.cos(TWO_PI * u1)
                drift = mc.hsle_drift(ctx, w[k], winf[k], v1[k], v2[k])
                pred = w[k] + drift * dt + sqkdt * g
                worst = max(worst, abs(pred - w[k + 1]))
                # flank points follow the deterministic Loewner flow
                for series in (v1, v2, winf):
                    gap = series[k] - w[k]
                    step = series[k] + dt * math.cos(0.5 * gap) \
                        / math.sin(0.5 * gap)
                    worst = max(worst, abs(step - series[k + 1]))
            assert worst < 1e-9

    def test_radius_stop_koebe_sandwich(self):
        dt, r = 2e-4, 0.45
        path, comp = mc.simulate_hsle(CTX6, SYM_CFG, 1, dt, 1, {"radius": r})
        assert comp["stop_reason"] == "radius"
        t = comp["capacity"]
        lo, hi = comp["radius_bracket"]
        assert_allclose(lo, math.exp(-t) / 4.0, rtol=1e-12)
        assert_allclose(hi, math.exp(-t), rtol=1e-12)
        # Koebe quarter theorem: crad/4 <= dist <= crad, and the stop
        # radius was reached (one-step slack on the far side)
        assert lo <= r <= hi * math.exp(dt)
        assert comp["min_distance"] <= r
        assert comp["min_distance"] >= lo
        # capacity equals the step grid
        assert_allclose(t, round(t / dt) * dt, atol=1e-12)

    def test_completion_and_collision(self):
        # at dt=1e-3 the pinned tolerance 10*sqrt(kappa*dt) is coarse,
        # so short runs end by completion or flank collision
        path, comp = mc.simulate_hsle(CTX6, SYM_CFG, 1, 1e-3, 0,
                                      {"capacity": 5.0})
        assert comp["stop_reason"] == "completed"
        assert comp["capacity"] < 5.0
        assert comp["flags"] == ()
        path, comp = mc.simulate_hsle(CTX6, SYM_CFG, 1, 1e-3, 3,
                                      {"capacity": 5.0})
        assert comp["stop_reason"] == "collision"
        assert comp["flags"] == ("early_termination",)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            mc.simulate_hsle(CTX6, SYM_CFG, 1, 1e-3, 0, {"radius": 1.2})
        with pytest.raises(ValueError):
            mc.simulate_hsle(CTX6, SYM_CFG, 1, 1e-3, 0, {"radius": -0.1})
        with pytest.raises(ValueError):
            mc.simulate_hsle(CTX6, SYM_CFG, 1, 1e-3, 0, {"length": 1.0})
        with pytest.raises(ValueError):
            mc.simulate_hsle(CTX6, SYM_CFG, 1, 1e-3, 0,
                             {"radius": 0.3, "capacity": 1.0})
        with pytest.raises(ValueError):
            mc.simulate_hsle(CTX6, SYM_CFG, 1, -1e-3, 0, {"capacity": 1.0})


TEST_OVERRIDES = dict(bmax=32768)


class TestTwoCurveHit:
    def test_reproducible_and_chunk_invariant(self):
        kw = dict(n_paths=1200, dt=1e-3, seed=11, **TEST_OVERRIDES)
        a = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.2], **kw)
        b = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.2], **kw)
        c = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.2],
                                      chunk_paths=500, **kw)
        assert a[0] == b[0]
        assert a[0].estimate == c[0].estimate
        assert a[0].stderr == c[0].stderr
        assert a[0].config["certified"] == c[0].config["certified"]

    def test_path_range_merge(self):
        # disjoint path ranges reproduce the exact per-path outcomes of
        # the full run (counter-based streams), so counts add
        kw = dict(dt=1e-3, seed=4, **TEST_OVERRIDES)
        full = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.2],
                                         n_paths=1200, **kw)[0]
        lo = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.2],
                                       n_paths=600, **kw)[0]
        hi = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.2],
                                       n_paths=600, path_start=600, **kw)[0]
        hits = lambda rec: round(rec.estimate * rec.n_paths)
        assert hits(lo) + hits(hi) == hits(full)
        assert (lo.config["certified"] + hi.config["certified"]
                == full.config["certified"])

    def test_record_contract(self):
        recs = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.2, 0.1, 1.5],
                                         n_paths=800, dt=1e-3, seed=2,
                                         **TEST_OVERRIDES)
        assert [r.r_or_t for r in recs] == [0.1, 0.2, 1.5]
        for rec in recs:
            assert rec.kappa == 6.0
            assert rec.method == "two_curve_hit"
            assert rec.stderr > 0.0
            assert 0.0 <= rec.estimate <= 1.0
            assert rec.ess == rec.n_paths == 800
            assert rec.accepted
        assert recs[2].estimate == 1.0
        assert "trivial_radius" in recs[2].flags
        # certificate bookkeeping is present and consistent
        for rec in recs[:2]:
            cfgd = rec.config
            total = (cfgd["hit_swallow"] + cfgd["hit_alive"]
                     + cfgd["hit_probe"])
            assert total == round(rec.estimate * rec.n_paths)
            assert cfgd["certified"] <= rec.n_paths
            # first-stage horizon is log(1/r) rounded to the snapshot
            # stride (10 steps)
            assert abs(cfgd["stop_capacity"] - math.log(1.0 / rec.r_or_t)) \
                <= 5.0 * rec.dt + 1e-12
        # deeper radius hits less often (3-sigma slack)
        p_small, p_big = recs[0], recs[1]
        slack = 3.0 * math.hypot(p_small.stderr, p_big.stderr)
        assert p_small.estimate <= p_big.estimate + slack

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.3], n_paths=10,
                                      dt=1e-3, seed=0)
        with pytest.raises(ValueError):
            mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.25], n_paths=10,
                                      dt=1e-3, seed=0)
        with pytest.raises(ValueError):
            mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.1], n_paths=10,
                                      dt=1e-2, seed=0)
        with pytest.raises(ValueError):
            mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.1], n_paths=0,
                                      dt=1e-3, seed=0)
        with pytest.raises(TypeError):
            mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.1], n_paths=10,
                                      dt=1e-3, seed=0, not_a_param=1)

    def test_tiny_run_flags(self):
        recs = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.01], n_paths=3,
                                         dt=1e-3, seed=0, **TEST_OVERRIDES)
        rec = recs[0]
        assert not rec.accepted
        # with three paths at r=0.01 nothing gets certified deep enough:
        # degenerate counts produce the 3/n bound
        if round(rec.estimate * 3) in (0, 3):
            assert "degenerate_counts" in rec.flags
            assert rec.stderr >= 1.0


class TestSurvivalWeighted:
    def test_time_zero_is_exact(self):
        recs = mc.estimate_survival_weighted(CTX6, (0.3, 0.9), [0.0],
                                             n_paths=50, dt=1e-3, seed=0)
        assert recs[0].estimate == 1.0
        assert recs[0].stderr < 1e-14

    def test_matches_spectral_oracle(self):
        basis = SpectralBasis(CTX6, 12)
        z0 = ZState(0.3, 0.9)
        recs = mc.estimate_survival_weighted(CTX6, z0, [1.0, 2.0],
                                             n_paths=20000, dt=1e-3, seed=9)
        for rec in recs:
            exact = survival_P2(CTX6, basis, z0, rec.r_or_t)
            assert rec.method == "survival_weighted"
            assert abs(rec.estimate - exact) < 3.0 * rec.stderr
            assert rec.ess > 100.0 and rec.accepted

    def test_low_ess_flag(self):
        recs = mc.estimate_survival_weighted(CTX6, (0.3, 0.9), [1.0],
                                             n_paths=40, dt=1e-3, seed=1)
        assert not recs[0].accepted
        assert "low_ess" in recs[0].flags

    def test_input_validation(self):
        with pytest.raises(ValueError):
            mc.estimate_survival_weighted(CTX6, (0.3, 0.9), [],
                                          n_paths=10, dt=1e-3, seed=0)
        with pytest.raises(ValueError):
            mc.estimate_survival_weighted(CTX6, (0.3, 0.9), [-1.0],
                                          n_paths=10, dt=1e-3, seed=0)


class TestFitPowerLaw:
    def test_exact_power_law(self):
        rs = np.array([0.05, 0.1, 0.2])
        pts = [(r, 3.0 * r ** 2.0, 0.0) for r in rs]
        expo, c0, cov = mc.fit_power_law(pts)
        assert_allclose(expo, 2.0, atol=1e-12)
        assert_allclose(c0, 3.0, rtol=1e-12)
        assert np.all(np.abs(cov) < 1e-20)

    def test_weighted_coverage(self):
        # synthetic noisy data with slope alpha0: the reported slope
        # sigma must give ~95% coverage at 2 sigma
        rng = np.random.default_rng(42)
        alpha, c0 = 1.25, 1.7
        rs = np.array([0.05, 0.1, 0.2])
        truth = c0 * rs ** alpha
        n = 100000
        sig = np.sqrt(truth * (1.0 - truth) / n)
        cover = 0
        trials = 400
        for _ in range(trials):
            ps = truth + sig * rng.standard_normal(3)
            expo, _, cov = mc.fit_power_law(list(zip(rs, ps, sig)))
            if abs(expo - alpha) < 2.0 * math.sqrt(cov[0, 0]):
                cover += 1
        assert cover / trials > 0.90

    def test_unweighted_fallback(self):
        # zero stderr entries select the unweighted fit with
        # residual-scaled covariance
        pts = [(0.05, 0.02, 0.0), (0.1, 0.048, 0.0), (0.2, 0.11, 0.0)]
        expo, c0, cov = mc.fit_power_law(pts)
        assert 1.0 < expo < 1.5
        assert cov[0, 0] >= 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            mc.fit_power_law([(0.1, 0.5, 0.01)])
        with pytest.raises(ValueError):
            mc.fit_power_law([(0.1, 0.5, 0.01), (0.1, 0.4, 0.01)])
        with pytest.raises(ValueError):
            mc.fit_power_law([(0.1, 0.5, 0.01), (0.2, -0.1, 0.01)])


class TestIntersectionHit:
    def test_subset_of_two_curve(self):
        kw = dict(n_paths=900, dt=1e-3, seed=21, **TEST_OVERRIDES)
        both = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.2, 0.1], **kw)
        inter = mc.estimate_intersection_hit(CTX6, SYM_CFG, [0.2, 0.1], **kw)
        for b, i in zip(both, inter):
            assert i.method == "intersection_hit"
            assert i.r_or_t == b.r_or_t
            # same seed, same paths: structural inclusion
            assert i.estimate <= b.estimate + 1e-15
            assert "surrogate_meet_rule" in i.flags
            assert i.config["two_curve_hits"] == round(b.estimate
                                                       * b.n_paths)

    def test_requires_intersecting_regime(self):
        ctx3 = KappaContext(3.0)
        with pytest.raises(ValueError):
            mc.estimate_intersection_hit(ctx3, SYM_CFG, [0.1], n_paths=10,
                                         dt=1e-3, seed=0)


class TestC0Estimate:
    def test_two_config_record(self):
        cfgs = [SYM_CFG, ASYM_CFG]
        rec = mc.estimate_C0(CTX6, cfgs, [0.2, 0.12], n_paths=1500,
                             dt=1e-3, seed=5, **TEST_OVERRIDES)
        assert rec.method == "C0"
        assert math.isnan(rec.r_or_t)
        assert rec.estimate > 0.0
        assert rec.stderr > 0.0
        assert rec.ess == 3000.0
        cells = rec.config["cells"]
        assert len(cells) == 4
        for cell in cells:
            # each cell rescales a hit frequency by G * r^alpha0
            assert cell["C0"] > 0.0


class TestCsvRoundTrip:
    def test_round_trip(self, tmp_path):
        recs = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.2, 1.5],
                                         n_paths=400, dt=1e-3, seed=8,
                                         **TEST_OVERRIDES)
        out = tmp_path / "est.csv"
        mc.records_to_csv(recs, out)
        back = mc.read_records_csv(out)
        assert len(back) == len(recs)
        for rec, row in zip(recs, back):
            assert row["kappa"] == rec.kappa
            assert row["method"] == rec.method
            assert row["r_or_t"] == rec.r_or_t
            assert row["estimate"] == rec.estimate
            assert row["stderr"] == rec.stderr
            assert row["n_paths"] == rec.n_paths
            assert row["flags"] == rec.flags

    def test_rejects_foreign_csv(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            mc.read_records_csv(bad)


class TestBackwardFlow:
    def test_backends_agree(self):
        if not _kernels.HAS_NUMBA:
            pytest.skip("numba not available")
        rng = np.random.default_rng(0)
        drivers = rng.uniform(-0.5, 0.5, size=(40, 200))
        lengths = rng.integers(1, 201, size=40).astype(np.int64)
        y1 = (0.999 * np.exp(1j * rng.uniform(-np.pi, np.pi, 40)))
        y2 = y1.copy()
        _kernels.backward_flow(drivers, lengths, 1e-3, y1, backend="numpy")
        _kernels.backward_flow(drivers, lengths, 1e-3, y2, backend="numba")
        assert np.max(np.abs(y1 - y2)) < 1e-12

    def test_constant_driver_reproduces_slit_tip(self):
        # pulling the near-tip boundary point back through a constant
        # driver recovers the radial slit tip modulus
        du, n = 1e-3, 1000
        drivers = np.zeros((1, n))
        lengths = np.array([n], dtype=np.int64)
        y = np.array([(1.0 - 1e-6) * np.exp(1j * 0.0)])
        _kernels.backward_flow(drivers, lengths, du, y)
        assert_allclose(abs(y[0]), loewner.slit_tip_modulus(n * du),
                        rtol=2e-3)

    def test_origin_is_fixed(self):
        drivers = np.full((1, 50), 0.3)
        lengths = np.array([50], dtype=np.int64)
        y = np.array([0.0 + 0.0j])
        _kernels.backward_flow(drivers, lengths, 1e-3, y)
        assert y[0] == 0.0


class TestCrossEstimatorConsistency:
    def test_two_curve_slope_versus_spectral_alpha(self):
        # the hit-probability log-log slope and the spectral decay rate
        # are two routes to the same exponent; at modest sample size
        # they must agree within combined uncertainty
        recs = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.2, 0.1],
                                         n_paths=1500, dt=1e-3, seed=13,
                                         **TEST_OVERRIDES)
        pts = [(r.r_or_t, r.estimate, r.stderr) for r in recs]
        expo, _, cov = mc.fit_power_law(pts)
        sig = math.sqrt(cov[0, 0])
        assert abs(expo - alpha0(6.0)) < 3.0 * sig + 0.05

    def test_backend_statistical_agreement(self):
        if not _kernels.HAS_NUMBA:
            pytest.skip("numba not available")
        kw = dict(n_paths=700, dt=1e-3, seed=17, **TEST_OVERRIDES)
        a = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.2],
                                      backend="numba", **kw)[0]
        b = mc.estimate_two_curve_hit(CTX6, SYM_CFG, [0.2],
                                      backend="numpy", **kw)[0]
        # identical streams, but transcendental rounding may flip rare
        # marginal paths; estimates must agree within a few sigma
        assert abs(a.estimate - b.estimate) <= 4.0 * math.hypot(a.stderr,
                                                                b.stderr)
