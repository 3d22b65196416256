"""Backward-trapping approximants of the two minimal solutions.

The approximant of depth n starts from Q +/- eps e^{-n e0} Y and evolves
over a window of length n at frozen scale, so the unstable amplitude
re-enters at eps while the remainder stays quadratically small.  Deeper
starts converge geometrically to the minimal pair; forward continuation
of the + sign blows up in the flat self-similar regime while the - sign
dissipates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigurationError, ConstructionFailure, InsufficientData
from .groundstate import Parameters, RadialField, RadialGrid, sphere_area
from .modulation import even_interpolator
from .selfsim import rate_check
from .solver import (
    RunRecord,
    SolverConfig,
    VERDICT_BLOWUP,
    VERDICT_DISSIPATION,
    discrete_ground_state,
    evolve,
)
from .spectral import SpectralData

__all__ = [
    "MinimalApproximant",
    "construct",
    "cauchy_in_n",
    "forward_fate",
    "jensen_lower_bound",
]


@dataclass(frozen=True)
class MinimalApproximant:
    sign: int  # +1 or -1
    depth: int  # backward depth n; the start time is -n
    epsilon: float
    base: RadialField  # steady profile the construction perturbs
    u_at_0: RadialField
    times: np.ndarray  # in [-n, 0]
    a_trace: np.ndarray  # fixed-scale projection <u - base, Y>
    v_linf_trace: np.ndarray  # sup norm of u - base - a Y
    e0: float

    def ordered_against_base(self, tol: float = 1e-10) -> bool:
        gap = self.sign * (self.u_at_0.values - self.base.values)
        return bool(np.min(gap) >= -tol)


def _project_fixed_scale(
    snap: RadialField, q_vals: np.ndarray, y_vals: np.ndarray, sph: float
):
    diff = snap.values - q_vals
    a = sph * snap.grid.inner(diff, y_vals)
    v = diff - a * y_vals
    return a, float(np.max(np.abs(v)))


def construct(
    sign: int,
    depth: int,
    epsilon: float,
    cfg: SolverConfig,
    spec: SpectralData,
    grid: RadialGrid | None = None,
    base: RadialField | None = None,
) -> MinimalApproximant:
    """Evolve the seeded data over [-n, 0] and record fixed-scale traces.

    The base profile defaults to the grid's own steady state, whose
    unstable residual sits orders of magnitude below the smallest seed
    amplitudes used here; traces measure the deviation from that base.
    """
    if sign not in (+1, -1):
        raise ConfigurationError("sign must be +1 or -1")
    if not (0.0 <= epsilon <= 0.1):
        raise ConfigurationError("epsilon must lie in [0, 0.1]")
    if depth < 1:
        raise ConfigurationError("backward depth must be >= 1")
    params = spec.params
    seed_amp = epsilon * math.exp(-depth * spec.e0)
    if epsilon > 0.0 and seed_amp < 1e-14:
        raise ConfigurationError(
            f"seed amplitude {seed_amp:.3e} below resolvable floor; reduce depth"
        )
    grid = grid or spec.grid
    if grid is spec.grid:
        y_vals = spec.y.values
    else:
        y_vals = even_interpolator(spec.y)(grid.nodes)
    if base is None:
        base = discrete_ground_state(grid, params)
    q_vals = base.values
    u0 = RadialField(grid, q_vals + sign * seed_amp * y_vals)

    cfg_run = replace(cfg, t_end=float(depth))
    record = evolve(u0, cfg_run, params)
    if record.verdict == VERDICT_BLOWUP:
        raise ConstructionFailure(
            f"approximant blew up at t = {record.t_final - depth:.4f} before "
            "reaching t = 0; reduce epsilon"
        )

    sph = sphere_area(params.d)
    times = []
    a_tr = []
    v_tr = []
    for t_snap, snap in zip(record.snapshot_times, record.snapshots):
        a, v_linf = _project_fixed_scale(snap, q_vals, y_vals, sph)
        times.append(t_snap - depth)
        a_tr.append(a)
        v_tr.append(v_linf)
    return MinimalApproximant(
        sign=sign,
        depth=depth,
        epsilon=epsilon,
        base=base,
        u_at_0=record.final_state,
        times=np.asarray(times),
        a_trace=np.asarray(a_tr),
        v_linf_trace=np.asarray(v_tr),
        e0=spec.e0,
    )


@dataclass(frozen=True)
class CauchyReport:
    depths: list[int]
    sup_diffs: list[float]
    ratios: list[float]
    expected_ratio: float
    geometric: bool


def cauchy_in_n(
    sign: int,
    epsilon: float,
    depths: list[int],
    cfg: SolverConfig,
    spec: SpectralData,
    grid: RadialGrid | None = None,
    base: RadialField | None = None,
) -> tuple[CauchyReport, list[MinimalApproximant]]:
    """Sup-norm Cauchy differences of u(0) across increasing depths.

    Differences should shrink by about exp(-e0 dn) per step of dn in
    depth, the scale set by the seed amplitude.
    """
    if len(depths) < 3 or any(b <= a for a, b in zip(depths[:-1], depths[1:])):
        raise ConfigurationError("depths must be increasing with >= 3 entries")
    if base is None:
        base = discrete_ground_state(grid or spec.grid, spec.params)
    approxs = [construct(sign, n, epsilon, cfg, spec, grid, base=base) for n in depths]
    sup_diffs = [
        float(np.max(np.abs(b.u_at_0.values - a.u_at_0.values)))
        for a, b in zip(approxs[:-1], approxs[1:])
    ]
    ratios = [b / a for a, b in zip(sup_diffs[:-1], sup_diffs[1:])]
    dn = depths[1] - depths[0]
    expected = math.exp(-spec.e0 * dn)
    geometric = all(b < a for a, b in zip(sup_diffs[:-1], sup_diffs[1:]))
    return (
        CauchyReport(
            depths=list(depths),
            sup_diffs=sup_diffs,
            ratios=ratios,
            expected_ratio=expected,
            geometric=geometric,
        ),
        approxs,
    )


@dataclass(frozen=True)
class FateReport:
    verdict: str
    matches_theory: bool
    record: RunRecord
    exponent_hat: float | None
    kappa_hat: float | None
    h1_final_over_initial: float | None


def forward_fate(
    approx: MinimalApproximant, cfg: SolverConfig, params: Parameters
) -> FateReport:
    """Forward continuation of an approximant and its verdict.

    The + sign must blow up in the flat self-similar regime and the -
    sign must dissipate with vanishing Dirichlet norm; a mismatch is
    reported (it indicts the numerics, not the theory).
    """
    record = evolve(approx.u_at_0, cfg, params)
    exponent = kappa = h1_ratio = None
    if approx.sign > 0:
        matches = record.verdict == VERDICT_BLOWUP
        if matches and record.t_est is not None:
            rr = rate_check(record, record.t_est)
            exponent, kappa = rr.exponent_hat, rr.kappa_hat
    else:
        matches = record.verdict == VERDICT_DISSIPATION
        h1_ratio = float(record.h1dot_trace[-1] / record.h1dot_trace[0])
    return FateReport(
        verdict=record.verdict,
        matches_theory=matches,
        record=record,
        exponent_hat=exponent,
        kappa_hat=kappa,
        h1_final_over_initial=h1_ratio,
    )


@dataclass(frozen=True)
class JensenReport:
    min_slack: float  # min over time of dm/dt - (e0 m + g(m)); >= -tol passes
    ok: bool
    m_initial: float
    m_convex_increasing: bool
    ode_blowup_time: float  # finite-time divergence of the comparison ODE


def jensen_lower_bound(
    approx: MinimalApproximant,
    record: RunRecord,
    spec: SpectralData,
    tol_rel: float = 5e-2,
) -> JensenReport:
    """Convexity lower bound for the mass-weighted unstable component.

    Along the forward run of a + approximant, m(t) = int (u - Q) Y dx
    (with Y normalized to unit mass) must satisfy dm/dt >= e0 m + g(m)
    where g is the Q-weighted convex gap of the nonlinearity, evaluated
    by quadrature.  The scalar comparison ODE m' = e0 m + g(m) diverges
    in finite time, which is the blow-up witness.
    """
    if approx.sign <= 0:
        raise ConfigurationError("the lower bound applies to the + approximant")
    params = spec.params
    run_grid = record.grid
    sph = sphere_area(params.d)
    if run_grid is spec.grid:
        y_mn = spec.y_mass_normalized
    else:
        y_mn = even_interpolator(
            RadialField(spec.grid, spec.y_mass_normalized)
        )(run_grid.nodes)
    q_vals = approx.base.values
    p = params.p

    def gap_of(x: float) -> float:
        # int [(Q+x)^p - Q^p - p Q^{p-1} x] Y dx for scalar x >= 0
        phi = (q_vals + x) ** p - q_vals ** p - p * q_vals ** (p - 1.0) * x
        return sph * run_grid.inner(phi, y_mn)

    times = []
    ms = []
    for t_snap, snap in zip(record.snapshot_times, record.snapshots):
        if snap.linf > 1e3:
            break  # quadrature of the gap saturates once u leaves all scales
        times.append(t_snap)
        ms.append(sph * run_grid.inner(snap.values - q_vals, y_mn))
    if len(ms) < 5:
        raise InsufficientData("too few usable snapshots for the bound")
    times = np.asarray(times)
    ms = np.asarray(ms)
    dm = np.gradient(ms, times, edge_order=2)
    rhs = np.array([spec.e0 * m + gap_of(m) for m in ms])
    slack = dm - rhs
    scale = np.maximum(np.abs(rhs), 1e-12)
    min_slack = float(np.min(slack / scale))
    ddm = np.gradient(dm, times, edge_order=2)
    convex_increasing = bool(np.all(dm[1:-1] > 0) and np.median(ddm[1:-1]) > 0)

    def ode(t, y):
        return [spec.e0 * y[0] + gap_of(min(y[0], 1e6))]

    blow_t = math.inf
    sol = solve_ivp(
        ode,
        (0.0, 1e3),
        [max(ms[0], 1e-12)],
        method="RK45",
        rtol=1e-8,
        events=lambda t, y: y[0] - 1e5,
    )
    if sol.t_events[0].size:
        blow_t = float(sol.t_events[0][0])
    return JensenReport(
        min_slack=min_slack,
        ok=min_slack >= -tol_rel,
        m_initial=float(ms[0]),
        m_convex_increasing=convex_increasing,
        ode_blowup_time=blow_t,
    )
