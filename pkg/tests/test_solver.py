import math

import numpy as np
import pytest

from critheat.errors import ConfigurationError, InsufficientData
from critheat.groundstate import (
    Parameters,
    RadialField,
    eval_dr_q,
    eval_q,
    kappa_const,
    make_radial_grid,
    sphere_area,
)
from critheat.solver import (
    RunRecord,
    SolverConfig,
    comparison_check,
    discrete_ground_state,
    energy,
    energy_fast,
    estimate_blowup_time,
    evolve,
    step,
)


def synthetic_blowup_record(params, grid, times, linf):
    """RunRecord carrying only the traces needed by the fit."""
    return RunRecord(
        grid=grid,
        params=params,
        config=SolverConfig(),
        times=np.asarray(times),
        dts=np.zeros(len(times)),
        linf_trace=np.asarray(linf),
        h1dot_trace=np.ones(len(times)),
        energy_trace=np.zeros(len(times)),
        snapshot_times=[times[0]],
        snapshots=[RadialField(grid, np.zeros(grid.n))],
        verdict="Blowup",
        t_final=float(times[-1]),
    )


class TestEnergy:
    def test_zero_field(self, grid, params7):
        assert energy(RadialField(grid, np.zeros(grid.n)), params7) == 0.0

    def test_bubble_against_fine_quadrature_oracle(self, grid, params7):
        # independent oracle: closed forms on a 10x finer grid, same tail
        # convention, different integration rule
        q = RadialField(grid, eval_q(grid.nodes, params7))
        fine = make_radial_grid(params7, n=40000)
        s = sphere_area(7)
        rmax = fine.rmax
        qr = float(eval_q(rmax, params7))
        grad = eval_dr_q(fine.nodes, params7)
        i_grad = fine.integrate(grad ** 2) + 5.0 * qr * qr * rmax ** 5
        i_pot = fine.integrate(eval_q(fine.nodes, params7) ** 2.8) + qr ** 2.8 * rmax ** 7 / 7
        oracle = s * (0.5 * i_grad - (5.0 / 14.0) * i_pot)
        got = energy(q, params7)
        assert got > 0
        assert abs(got - oracle) / oracle < 1e-6

    def test_scale_invariance(self, grid, params7):
        q_energy = energy(RadialField(grid, eval_q(grid.nodes, params7)), params7)
        for mu in (0.5, 2.0):
            vals = mu ** (-2.5) * eval_q(grid.nodes / mu, params7)
            e_mu = energy(RadialField(grid, vals), params7)
            assert abs(e_mu - q_energy) / q_energy < 1e-5

    def test_nonfinite_rejected(self, grid, params7):
        vals = np.ones(grid.n)
        field = RadialField(grid, vals)
        object.__setattr__(field, "values", vals * np.inf)
        with pytest.raises(ConfigurationError):
            energy(field, params7)


class TestStep:
    def test_zero_fixed_point(self, grid, params7):
        cfg = SolverConfig()
        u0 = RadialField(grid, np.zeros(grid.n))
        u1, err = step(u0, 1e-3, cfg, params7)
        assert np.all(u1.values == 0.0)
        assert err == 0.0

    def test_bubble_near_steady(self, grid, params7, qh):
        # sampled profile: the dt^2-scaled drift is bounded on the practical
        # range by the spatial residual floor; the discrete steady state is
        # a fixed point of the step to roundoff at every dt
        cfg = SolverConfig()
        q = RadialField(grid, eval_q(grid.nodes, params7))
        for dt in (1e-2, 3e-3, 1e-3):
            u1, _ = step(q, dt, cfg, params7)
            assert np.max(np.abs(u1.values - q.values)) / dt ** 2 < 1.0
        for dt in (1e-2, 1e-3, 1e-4):
            u1, _ = step(qh, dt, cfg, params7)
            assert np.max(np.abs(u1.values - qh.values)) / dt ** 2 < 1e-4

    def test_dt_bounds_enforced(self, grid, params7):
        cfg = SolverConfig()
        q = RadialField(grid, eval_q(grid.nodes, params7))
        with pytest.raises(ConfigurationError):
            step(q, 1.0, cfg, params7)

    def test_rejection_signal_on_overflow(self, grid, params7):
        cfg = SolverConfig(blowup_linf=1e300)
        huge = RadialField(grid, np.full(grid.n, 1e200))
        _, err = step(huge, 1e-3, cfg, params7)
        assert err == math.inf


class TestConstantReactionMode:
    def test_matches_flat_blowup_solution(self, grid, params7):
        # with no outer flux, constants follow du/dt = u^p whose solution is
        # kappa (T - t)^{-1/(p-1)}
        c0 = 1.0
        p = params7.p
        t_blow = c0 ** (1 - p) / (p - 1)
        cfg = SolverConfig(
            outer_bc="neumann", t_end=0.5 * t_blow, dt_max=1e-3, tol=1e-7
        )
        rec = evolve(RadialField(grid, np.full(grid.n, c0)), cfg, params7)
        kappa = kappa_const(params7)
        exact = kappa * (t_blow - rec.times) ** (-params7.inv_p_minus_1)
        rel = np.abs(rec.linf_trace - exact) / exact
        assert np.max(rel) < 1e-4


class TestEvolveVerdicts:
    def test_half_bubble_dissipates(self, qh, params7):
        rec = evolve(
            RadialField(qh.grid, 0.5 * qh.values),
            SolverConfig(t_end=220.0, dt_max=0.5),
            params7,
        )
        assert rec.verdict == "Global-Dissipation"
        # nonnegative data stays nonnegative up to tiny undershoots
        worst = min(float(s.values.min()) for s in rec.snapshots)
        assert worst >= -1e-12

    def test_up_seed_blows_up(self, blowup_record):
        assert blowup_record.verdict == "Blowup"
        assert blowup_record.t_est is not None
        assert blowup_record.t_est_uncertainty < 1e-3

    def test_down_seed_dissipates(self, dissipation_record):
        assert dissipation_record.verdict == "Global-Dissipation"

    def test_steady_state_trapped(self, trapped_record, qh):
        assert trapped_record.verdict == "Trapped-at-horizon"
        drift = np.max(np.abs(trapped_record.final_state.values - qh.values))
        assert drift / np.max(qh.values) < 1e-4

    def test_sampled_bubble_stationary_over_unit_time(self, grid, params7):
        q = RadialField(grid, eval_q(grid.nodes, params7))
        rec = evolve(q, SolverConfig(t_end=1.0), params7)
        drift = np.max(np.abs(rec.final_state.values[:-1] - q.values[:-1]))
        assert drift / np.max(q.values) <= 1e-4

    def test_energy_monotone_on_all_runs(
        self, blowup_record, dissipation_record, trapped_record
    ):
        for rec in (blowup_record, dissipation_record, trapped_record):
            scale = max(1.0, float(np.max(np.abs(rec.energy_trace[:50]))))
            assert rec.energy_violation <= 10.0 * rec.config.tol * scale

    def test_dissipation_identity(self, dissipation_record, params7):
        # -dE/dt tracks int u_t^2 on a smooth stretch of the run
        rec = dissipation_record
        grid = rec.grid
        s = sphere_area(7)
        ts = np.asarray(rec.snapshot_times)
        sel = np.where((ts >= 1.0) & (ts <= 6.0))[0]
        errs = []
        for k in sel[1:-1]:
            tm, tp = ts[k - 1], ts[k + 1]
            um, up = rec.snapshots[k - 1].values, rec.snapshots[k + 1].values
            ut = (up - um) / (tp - tm)
            diss = s * grid.integrate(ut * ut)
            de = (
                energy_fast(grid, up, params7) - energy_fast(grid, um, params7)
            ) / (tp - tm)
            errs.append(abs(-de / diss - 1.0))
        assert np.median(errs) < 0.05


class TestHeatKernel:
    @staticmethod
    def _exact(r, t, s0=3.0):
        return (s0 / (s0 + t)) ** 3.5 * np.exp(-(r ** 2) / (4 * (s0 + t)))

    def _error(self, params, n, dt, t_end):
        grid = make_radial_grid(params, n=n)
        cfg = SolverConfig(
            reaction=False, dt_min=dt / 100, dt_init=dt / 2, dt_max=max(dt, 0.051)
        )
        u = RadialField(grid, self._exact(grid.nodes, 0.0))
        t = 0.0
        while t < t_end - 1e-12:
            u, _ = step(u, dt, cfg, params)
            t += dt
        exact = self._exact(grid.nodes, t)
        exact[-1] = 0.0
        return math.sqrt(
            sphere_area(7) * grid.integrate((u.values - exact) ** 2)
        )

    def test_second_order_in_space(self, params7):
        errs = [self._error(params7, n, 5e-4, 0.25) for n in (500, 1000, 2000)]
        orders = [math.log2(a / b) for a, b in zip(errs[:-1], errs[1:])]
        assert min(orders) > 1.8

    def test_second_order_in_time(self, params7):
        errs = [self._error(params7, 3000, dt, 0.5) for dt in (0.05, 0.025, 0.0125)]
        orders = [math.log2(a / b) for a, b in zip(errs[:-1], errs[1:])]
        assert min(orders) > 1.8


class TestEstimateBlowupTime:
    @staticmethod
    def _synthetic_times():
        # adaptive runs sample roughly uniformly in log(T - t)
        return 1.0 - np.logspace(0.0, -6.0, 4000)

    def test_exact_synthetic_trace(self, grid, params7):
        kappa = kappa_const(params7)
        t = self._synthetic_times()
        linf = kappa * (1.0 - t) ** (-1.25)
        rec = synthetic_blowup_record(params7, grid, t, linf)
        fit = estimate_blowup_time(rec)
        assert abs(fit.t_est - 1.0) < 1e-6
        assert fit.kappa_slope == pytest.approx(kappa, rel=1e-6)
        assert fit.exponent == pytest.approx(1.25, rel=1e-6)

    def test_noisy_synthetic_trace(self, grid, params7):
        kappa = kappa_const(params7)
        t = self._synthetic_times()
        base = kappa * (1.0 - t) ** (-1.25)
        for seed in range(10):
            rng = np.random.default_rng(seed)
            noisy = base * (1.0 + 0.01 * rng.standard_normal(base.size))
            rec = synthetic_blowup_record(params7, grid, t, np.maximum(noisy, 1e-12))
            fit = estimate_blowup_time(rec)
            assert abs(fit.t_est - 1.0) < 1e-2

    def test_real_run_exponent(self, blowup_record, params7):
        fit = estimate_blowup_time(blowup_record)
        assert fit.exponent == pytest.approx(1.25, rel=0.05)

    def test_insufficient_data(self, grid, params7):
        t = np.linspace(0, 0.5, 10)
        rec = synthetic_blowup_record(params7, grid, t, np.exp(t))
        rec.verdict = "Trapped-at-horizon"
        with pytest.raises(InsufficientData):
            estimate_blowup_time(rec)


class TestComparison:
    def test_zero_below_bubble(self, grid, params7):
        q = RadialField(grid, eval_q(grid.nodes, params7))
        zero = RadialField(grid, np.zeros(grid.n))
        res = comparison_check(zero, q, SolverConfig(t_end=2.0), params7)
        assert res.ordered

    def test_down_seed_below_base_and_monotone(self, qh, spec, params7):
        low = RadialField(qh.grid, np.maximum(qh.values - 0.05 * spec.y.values, 0.0))
        res = comparison_check(low, qh, SolverConfig(t_end=8.0), params7)
        assert res.ordered
        assert res.monotone_low

    def test_base_below_up_seed_until_blowup(self, qh, spec, params7):
        high = RadialField(qh.grid, qh.values + 0.05 * spec.y.values)
        res = comparison_check(qh, high, SolverConfig(t_end=80.0), params7)
        assert res.ordered
        assert res.t_covered > 10.0

    def test_unordered_input_rejected(self, qh, spec, params7):
        high = RadialField(qh.grid, qh.values + 0.05 * spec.y.values)
        with pytest.raises(ConfigurationError):
            comparison_check(high, qh, SolverConfig(), params7)


class TestDiscreteGroundState:
    def test_steady_under_flow(self, qh, params7):
        rec = evolve(qh, SolverConfig(t_end=10.0), params7)
        drift = np.max(np.abs(rec.final_state.values - qh.values))
        assert drift < 1e-7

    def test_close_to_sampled_profile(self, qh, params7):
        q = eval_q(qh.grid.nodes, params7)
        assert np.max(np.abs(qh.values - q)) < 5e-3


class TestConfigValidation:
    def test_bad_dt_ordering(self):
        with pytest.raises(ConfigurationError):
            SolverConfig(dt_min=1.0, dt_init=0.1, dt_max=10.0)

    def test_bad_outer_bc(self):
        with pytest.raises(ConfigurationError):
            SolverConfig(outer_bc="robin")
