"""Config-driven experiment harness: classification, threshold bisection,
parameter sweeps, and artifact emission.

Every experiment is deterministic given (config, seed): reruns produce
bit-identical CSVs.  The trichotomy classifier combines the solver
verdict, the modulation trace and the self-similar diagnostics into one
of Soliton / Dissipation / TypeI-Blowup / Undecided, reporting the
measured instability, transition and exit times as evidence.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import reporting
from .errors import ConfigurationError, DecompositionFailure, InsufficientData
from .groundstate import (
    Parameters,
    RadialField,
    RadialGrid,
    eval_q,
    kappa_const,
    make_radial_grid,
    sample_q,
)
from .minimal import cauchy_in_n, forward_fate
from .modulation import ModulationTrace, decompose, track
from .selfsim import (
    blowup_criterion,
    energy_w,
    frames_from_record,
    i_w,
    make_selfsim_grid,
    rate_check,
)
from .solver import (
    RunRecord,
    SolverConfig,
    VERDICT_BLOWUP,
    VERDICT_DISSIPATION,
    VERDICT_TRAPPED,
    discrete_ground_state,
    evolve,
)
from .spectral import (
    SpectralData,
    assemble_h,
    coercivity_estimate,
    compute_spectral_data,
    e0_by_shooting,
    ground_eig,
    negative_eigenvalue_count,
    zero_modes,
)

__all__ = [
    "ExperimentConfig",
    "Workspace",
    "Verdict",
    "build_workspace",
    "make_initial_data",
    "classify",
    "classify_record",
    "measure_trapped_time",
    "bisect_threshold",
    "probe_type2_exclusion",
    "selfsim_sweep",
    "run_config",
]

SOLITON = "Soliton"
DISSIPATION = "Dissipation"
TYPE_I = "TypeI-Blowup"
UNDECIDED = "Undecided"

_KINDS = ("spectrum", "evolve", "shoot", "minimal", "classify", "selfsim-sweep")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    d: int = 7
    allow_low_dimension: bool = False
    grid_n: int = 4000
    grid_rmax: float = 100.0
    grid_first_cell: float | None = None
    m_loc: float = 20.0
    solver: dict = field(default_factory=dict)
    initial_data: dict = field(default_factory=lambda: {"family": "q"})
    seed: int = 0
    workers: int = 1
    override_neighborhood: bool = False
    horizon: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(
                f"unknown experiment kind {self.kind!r}; expected one of {_KINDS}"
            )
        if self.d < 7 and not self.allow_low_dimension:
            raise ConfigurationError(
                f"d={self.d} < 7 requires allow_low_dimension (exploratory, "
                "not covered by the theory this package checks)"
            )

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        extra = dict(raw.get("extra", {}))
        for key, value in raw.items():
            if key == "grid" and isinstance(value, dict):
                for gk, gv in value.items():
                    name = f"grid_{gk}"
                    if name not in known:
                        raise ConfigurationError(f"unknown grid field {gk!r}")
                    kwargs[name] = gv
            elif key in known:
                kwargs[key] = value
            else:
                extra[key] = value
        kwargs["extra"] = extra
        if "kind" not in kwargs:
            raise ConfigurationError("config must name an experiment 'kind'")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix in (".yaml", ".yml"):
            import yaml

            try:
                raw = yaml.safe_load(text)
            except yaml.YAMLError as exc:
                raise ConfigurationError(f"{path}: {exc}") from exc
        else:
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(
                    f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"
                ) from exc
        if not isinstance(raw, dict):
            raise ConfigurationError(f"{path}: config must be a mapping")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return out

    def solver_config(self) -> SolverConfig:
        kwargs = dict(self.solver)
        if self.horizon is not None:
            kwargs.setdefault("t_end", self.horizon)
        try:
            return SolverConfig(**kwargs)
        except TypeError as exc:
            raise ConfigurationError(f"bad solver settings: {exc}") from exc


@dataclass(frozen=True)
class Workspace:
    params: Parameters
    grid: RadialGrid
    spec: SpectralData
    solver_cfg: SolverConfig
    run_grid: RadialGrid  # may be finer at the origin than the spectral grid


_SPECTRAL_GRID_CAP = 1e-3  # finer origin cells degrade the eigensolve


def build_workspace(cfg: ExperimentConfig) -> Workspace:
    params = Parameters(cfg.d, allow_low_dimension=cfg.allow_low_dimension)
    run_grid = make_radial_grid(
        params, n=cfg.grid_n, rmax=cfg.grid_rmax, first_cell=cfg.grid_first_cell
    )
    first = run_grid.nodes[1]
    if first >= 0.25 * _SPECTRAL_GRID_CAP:
        spec_grid = run_grid
    else:
        # the eigensolve needs a moderate matrix norm; keep a standard grid
        spec_grid = make_radial_grid(
            params, n=max(cfg.grid_n, 4000), rmax=cfg.grid_rmax, first_cell=None
        )
    spec = compute_spectral_data(params, spec_grid, m_loc=cfg.m_loc)
    return Workspace(
        params=params,
        grid=spec_grid,
        spec=spec,
        solver_cfg=cfg.solver_config(),
        run_grid=run_grid,
    )


_GROUND_CACHE: dict[int, tuple[RadialGrid, np.ndarray]] = {}


def _ground_values(grid: RadialGrid, params: Parameters, discrete: bool) -> np.ndarray:
    """Soliton profile used as the base point of experiment families.

    The discrete steady state (default) keeps trapped and threshold runs
    free of the truncation-error seed on the unstable mode; the sampled
    closed form is available for convergence studies.
    """
    if not discrete:
        return eval_q(grid.nodes, params)
    key = id(grid)
    hit = _GROUND_CACHE.get(key)
    if hit is not None and hit[0] is grid:
        return hit[1]
    vals = discrete_ground_state(grid, params).values
    _GROUND_CACHE[key] = (grid, vals)
    return vals


def make_initial_data(
    descriptor: dict,
    grid: RadialGrid,
    spec: SpectralData,
    params: Parameters,
    rng: np.random.Generator | None = None,
) -> RadialField:
    """Initial data families addressed by name in configs."""
    family = descriptor.get("family", "q")
    discrete = bool(descriptor.get("discrete_base", True))
    r = grid.nodes
    if grid is spec.grid:
        y_vals = spec.y.values
    else:
        from .modulation import even_interpolator

        y_vals = even_interpolator(spec.y)(r)
    if family == "q":
        lam = float(descriptor.get("scale", 1.0))
        if lam != 1.0:
            vals = lam ** (-(params.d - 2) / 2.0) * eval_q(r / lam, params)
        else:
            vals = _ground_values(grid, params, discrete)
    elif family == "q_plus_y":
        c = float(descriptor["coefficient"])
        vals = _ground_values(grid, params, discrete) + c * y_vals
    elif family == "q_plus_gauss":
        c = float(descriptor["coefficient"])
        sigma = float(descriptor.get("sigma", 1.0))
        vals = _ground_values(grid, params, discrete) + c * np.exp(-(r / sigma) ** 2)
    elif family == "gauss":
        c = float(descriptor["coefficient"])
        sigma = float(descriptor.get("sigma", 1.0))
        vals = c * np.exp(-(r / sigma) ** 2)
    elif family == "random_near_q":
        if rng is None:
            rng = np.random.default_rng(int(descriptor.get("seed", 0)))
        amp = float(descriptor.get("amplitude", 0.01))
        n_modes = int(descriptor.get("n_modes", 3))
        bump = np.zeros_like(r)
        for _ in range(n_modes):
            sigma = rng.uniform(0.5, 6.0)
            center = rng.uniform(0.0, 5.0)
            bump += rng.standard_normal() * np.exp(-((r - center) / sigma) ** 2)
        peak = np.max(np.abs(bump))
        vals = _ground_values(grid, params, discrete) + amp * bump / max(peak, 1e-300)
    else:
        raise ConfigurationError(f"unknown initial-data family {family!r}")
    vals = vals.copy()
    vals[-1] = 0.0
    return RadialField(grid, vals)


@dataclass(frozen=True)
class Verdict:
    cls: str
    evidence: dict

    def __post_init__(self):
        if self.cls not in (SOLITON, DISSIPATION, TYPE_I, UNDECIDED):
            raise ConfigurationError(f"invalid class {self.cls!r}")


def _instability_times(
    trace: ModulationTrace, k_gate: float = 10.0, a_floor: float = 1e-8
) -> dict:
    """Measured analogues of the instability / transition / exit times.

    All three detectors act on the amplitude growth |a(t) - a(0)|: both
    the amplitude and the remainder norms carry static discretization
    floors (the measured template offset), so the raw values would flag
    spurious instability at time zero.  The instability time is when the
    growth exceeds k_gate times the squared H^2 remainder (with an
    absolute floor so roundoff never counts); the transition time is when
    the squared growth dominates the H^2 remainder; the exit time is when
    the growth reaches 0.15.
    """
    t_ins = t_trans = t_exit = None
    a0 = trace.states[0].a if trace.states else 0.0
    for st in trace.states:
        da = abs(st.a - a0)
        gate = max(k_gate * st.eps_h2 ** 2, a_floor)
        if t_ins is None and da >= gate:
            t_ins = st.t
        if t_trans is None and da ** 2 >= max(st.eps_h2, a_floor):
            t_trans = st.t
        if t_exit is None and da > 0.15:
            t_exit = st.t
    if t_exit is None and not trace.completed:
        t_exit = trace.exit_time
    return {"t_ins": t_ins, "t_trans": t_trans, "t_exit": t_exit}


def classify_record(
    record: RunRecord,
    spec: SpectralData,
    trace: ModulationTrace | None = None,
    k_gate: float = 10.0,
    a_floor: float = 1e-8,
) -> Verdict:
    """Trichotomy verdict for an existing run."""
    params = record.params
    if trace is None:
        trace = track(record, spec)
    times = _instability_times(trace, k_gate=k_gate, a_floor=a_floor)
    evidence: dict = dict(times)
    evidence["solver_verdict"] = record.verdict
    evidence["completed_trace"] = trace.completed
    if len(trace):
        evidence["a_final"] = trace.states[-1].a
        evidence["lambda_final"] = trace.states[-1].lam
        evidence["eps_h2_final"] = trace.states[-1].eps_h2

    if record.verdict == VERDICT_BLOWUP and record.t_est is not None:
        try:
            rr = rate_check(record, record.t_est)
        except InsufficientData:
            return Verdict(UNDECIDED, evidence)
        evidence["exponent_hat"] = rr.exponent_hat
        evidence["kappa_hat"] = rr.kappa_hat
        target = params.inv_p_minus_1
        if abs(rr.exponent_hat - target) <= 0.1 * target:
            # probe the before-T semantics of the indicator: a positive
            # I(w) certifies blow-up before the renormalization time, so
            # overshooting T must trip it while undershooting need not
            ssg = make_selfsim_grid(params)
            t_mid = 0.5 * record.t_final
            probe = {}
            for fac in (0.9, 1.0, 1.1):
                t_r = t_mid + fac * (record.t_est - t_mid)
                frames = frames_from_record(record, t_r, ssg, linf_min=10.0)
                probe[f"{fac:.1f}"] = bool(
                    any(blowup_criterion(f) for f in frames)
                )
            evidence["i_w_probe"] = probe
            return Verdict(TYPE_I, evidence)
        return Verdict(UNDECIDED, evidence)

    if record.verdict == VERDICT_DISSIPATION:
        evidence["h1_ratio"] = float(
            record.h1dot_trace[-1] / max(record.h1dot_trace[0], 1e-300)
        )
        return Verdict(DISSIPATION, evidence)

    # trapped at the horizon: soliton when the instability never took over
    if trace.completed and len(trace) >= 4:
        ins_never = times["t_ins"] is None
        h2 = trace.array("eps_h2")
        quarter = max(len(h2) // 4, 1)
        trend_down = np.mean(h2[-quarter:]) <= max(
            np.mean(h2[:quarter]) * 1.05, a_floor
        )
        if ins_never and trend_down:
            return Verdict(SOLITON, evidence)
    return Verdict(UNDECIDED, evidence)


def classify(
    u0: RadialField,
    ws: Workspace,
    override_neighborhood: bool = False,
    k_gate: float = 10.0,
    a_floor: float = 1e-8,
) -> tuple[Verdict, RunRecord, ModulationTrace]:
    """Run the solver and classify, enforcing the near-soliton gate."""
    params = ws.params
    q = sample_q(u0.grid, params)
    diff = RadialField(u0.grid, u0.values - q.values)
    if not override_neighborhood and diff.h1_norm() > 0.3 * q.h1_norm():
        raise ConfigurationError(
            "initial data outside the 0.3 |Q|_H1 neighbourhood; pass "
            "override_neighborhood for exploratory runs"
        )
    record = evolve(u0, ws.solver_cfg, params)
    trace = track(record, ws.spec)
    verdict = classify_record(record, ws.spec, trace, k_gate=k_gate, a_floor=a_floor)
    return verdict, record, trace


def measure_trapped_time(
    record: RunRecord,
    spec: SpectralData,
    trap_radius: float = 0.5,
) -> float:
    """Length of the longest interval spent near some rescaled soliton.

    Each snapshot is decomposed with a fresh scale guess from its peak
    height, so orbits trapped near Q_lambda with lambda far from one are
    still detected.  Trapping is judged on the core distance
    |a| + |eps|_{H^2}: the H^1 remainder of an orbit grown from compactly
    supported data is dominated by the soliton's slowly filling far tail,
    which says nothing about trapping at the core.
    """
    d = spec.params.d
    best = 0.0
    start = None
    for t_snap, snap in zip(record.snapshot_times, record.snapshots):
        peak = float(np.max(snap.values))
        trapped = False
        if peak > 1e-6:
            lam_guess = peak ** (-2.0 / (d - 2.0))
            try:
                st = decompose(snap, spec, guess=(lam_guess, 0.0))
                trapped = (abs(st.a) + st.eps_h2) <= trap_radius
            except DecompositionFailure:
                trapped = False
        if trapped:
            if start is None:
                start = t_snap
            best = max(best, t_snap - start)
        else:
            start = None
    return best


@dataclass(frozen=True)
class BisectionResult:
    c_star: float
    bracket: tuple[float, float]
    width: float
    levels: list[dict]


def _blowup_side(
    record: RunRecord, spec: SpectralData
) -> bool:
    """True when the run exits on the blow-up side of the threshold."""
    if record.verdict == VERDICT_BLOWUP:
        return True
    if record.verdict == VERDICT_DISSIPATION:
        return False
    # trapped at the horizon: the sign of the growing part of the unstable
    # amplitude decides (the raw value carries a static template offset)
    trace = track(record, spec)
    if len(trace) >= 4:
        coef = trace.growth_coefficient(spec.e0)
        if abs(coef) > 1e-11:
            return coef > 0
    # fall back to the sup-norm trend
    linf = record.linf_trace
    return bool(linf[-1] > linf[max(0, len(linf) - 50)])


def bisect_threshold(
    family,
    c_low: float,
    c_high: float,
    ws: Workspace,
    target_rel_width: float = 1e-6,
    max_levels: int = 40,
    measure_trapping: bool = True,
) -> BisectionResult:
    """Bisect a one-parameter family between dissipation and blow-up.

    `family` maps a coefficient to initial data.  The endpoints must
    classify to opposite sides, else a bracket error is raised.
    """
    cfg = ws.solver_cfg
    params = ws.params

    def side(c):
        record = evolve(family(c), cfg, params)
        return _blowup_side(record, ws.spec), record

    up_low, _ = side(c_low)
    up_high, _ = side(c_high)
    if up_low or not up_high:
        raise ConfigurationError(
            "bracket endpoints do not classify to opposite sides "
            f"(c_low up={up_low}, c_high up={up_high})"
        )
    width0 = c_high - c_low
    levels = []
    lo, hi = c_low, c_high
    for _ in range(max_levels):
        if hi - lo <= target_rel_width * width0:
            break
        mid = 0.5 * (lo + hi)
        up, record = side(mid)
        trapped = (
            measure_trapped_time(record, ws.spec) if measure_trapping else math.nan
        )
        levels.append(
            {
                "c_mid": mid,
                "blowup_side": up,
                "width": hi - lo,
                "trapped_time": trapped,
                "solver_verdict": record.verdict,
            }
        )
        if up:
            hi = mid
        else:
            lo = mid
    return BisectionResult(
        c_star=0.5 * (lo + hi),
        bracket=(lo, hi),
        width=hi - lo,
        levels=levels,
    )


@dataclass(frozen=True)
class TypeTwoProbe:
    rows: list[dict]
    all_blowups_h1_grow: bool
    no_bounded_h1_concentration: bool


def _classify_probe_sample(args):
    ws, values = args
    u0 = RadialField(ws.run_grid, values)
    return classify(u0, ws)


def _pmap(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def probe_type2_exclusion(
    ws: Workspace,
    n_samples: int = 20,
    amplitude: float = 0.02,
    seed: int = 7,
    workers: int = 1,
) -> TypeTwoProbe:
    """Random near-soliton data: blow-ups must carry a growing Dirichlet norm.

    Checks that every blow-up run has its H^1 norm increasing through the
    last decade of sup-norm growth, and that no run concentrates scale
    while keeping the H^1 norm bounded.  The sample fields are generated
    up front from one seeded stream, so results do not depend on the
    worker count.
    """
    rng = np.random.default_rng(seed)
    fields = [
        make_initial_data(
            {"family": "random_near_q", "amplitude": amplitude},
            ws.run_grid,
            ws.spec,
            ws.params,
            rng=rng,
        ).values
        for _ in range(n_samples)
    ]
    results = _pmap(_classify_probe_sample, [(ws, v) for v in fields], workers)
    rows = []
    grow_ok = True
    conc_ok = True
    for k, (verdict, record, trace) in enumerate(results):
        row = {"sample": k, "class": verdict.cls}
        if verdict.cls == TYPE_I or record.verdict == VERDICT_BLOWUP:
            linf = record.linf_trace
            h1 = record.h1dot_trace
            m = linf >= linf[-1] / 10.0
            h1_window = h1[m]
            increasing = bool(
                h1_window[-1] > h1_window[0]
                and np.all(np.diff(h1_window) > -1e-8 * h1_window[:-1])
            )
            ratio = float(h1[-1] / max(np.min(h1), 1e-300))
            row["h1_growth_ratio"] = ratio
            row["h1_increasing_last_decade"] = increasing
            if not (increasing and ratio > 1.5):
                grow_ok = False
        else:
            lam = trace.array("lam") if len(trace) else np.array([1.0])
            h1_bounded = float(np.max(record.h1dot_trace)) < 10.0 * float(
                record.h1dot_trace[0]
            )
            concentrating = float(np.min(lam)) < 0.5 * float(lam[0])
            row["min_lambda"] = float(np.min(lam))
            if concentrating and h1_bounded:
                conc_ok = False
        rows.append(row)
    return TypeTwoProbe(
        rows=rows,
        all_blowups_h1_grow=grow_ok,
        no_bounded_h1_concentration=conc_ok,
    )


def _sweep_one_amplitude(args):
    ws, amp, sigma, t_renorm_offsets = args
    params = ws.params
    ssg = make_selfsim_grid(params)
    p = params.p
    u0 = make_initial_data(
        {"family": "gauss", "coefficient": amp, "sigma": sigma},
        ws.run_grid,
        ws.spec,
        ws.params,
    )
    record = evolve(u0, ws.solver_cfg, params)
    if record.verdict == VERDICT_BLOWUP:
        return {"amplitude": amp, "global": False}
    worst_i = -math.inf
    e0_frame = None
    mass_max = 0.0
    spacetime = 0.0
    for off in t_renorm_offsets:
        t_r = record.t_final + off
        frames = frames_from_record(record, t_r, ssg, max_frames=40)
        if len(frames) < 3:
            continue
        energies = [energy_w(f) for f in frames]
        ivals = [i_w(f) for f in frames]
        worst_i = max(worst_i, max(ivals))
        if e0_frame is None:
            e0_frame = energies[0]
            masses = [f.grid.integrate(f.w ** 2) for f in frames]
            mass_max = max(masses)
            s_vals = np.array([f.s_ss for f in frames])
            dens = np.array(
                [
                    (
                        f.grid.integrate(
                            np.gradient(f.w, f.grid.y, edge_order=2) ** 2
                            + f.w ** 2
                            + np.abs(f.w) ** (p + 1.0)
                        )
                    )
                    ** 2
                    for f in frames
                ]
            )
            spacetime = float(np.trapezoid(dens, s_vals))
    return {
        "amplitude": amp,
        "global": True,
        "E0": e0_frame,
        "worst_I": worst_i,
        "mass_sup": mass_max,
        "mass_bound_const": (
            mass_max / e0_frame ** (2.0 / (p + 1.0))
            if e0_frame and e0_frame > 0
            else math.nan
        ),
        "spacetime_integral": spacetime,
    }


def selfsim_sweep(
    ws: Workspace,
    amplitudes: list[float],
    sigma: float = 2.0,
    t_renorm_offsets: tuple[float, ...] = (5.0, 20.0, 50.0),
    workers: int = 1,
) -> list[dict]:
    """Gaussian-data sweep of the weighted-energy bounds on global runs.

    For each amplitude the run must stay global; the reported rows carry
    the initial weighted energy, the mass bound constant, the sliding
    space-time integral, and the worst I(w) across the tested
    renormalization times.  Renormalization times are offsets past the end
    of the run, within the window the radial domain can cover.  Amplitudes
    are independent and fan out across the worker pool.
    """
    items = [(ws, amp, sigma, t_renorm_offsets) for amp in amplitudes]
    return _pmap(_sweep_one_amplitude, items, workers)


# --------------------------------------------------------------------------
# config-driven artifact emission
# --------------------------------------------------------------------------


def run_config(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Execute a configured experiment and write its artifacts.

    Returns the manifest dictionary.  Outputs are deterministic for a
    fixed (config, seed).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_hash = reporting.config_hash(cfg.to_dict())
    ws = build_workspace(cfg)
    meta = {
        "kind": cfg.kind,
        "d": cfg.d,
        "p": ws.params.p,
        "grid_n": cfg.grid_n,
        "grid_rmax": cfg.grid_rmax,
        "seed": cfg.seed,
        "config_hash": cfg_hash,
    }
    paths: list[Path] = []
    runner = {
        "spectrum": _run_spectrum,
        "evolve": _run_evolve,
        "shoot": _run_shoot,
        "minimal": _run_minimal,
        "classify": _run_classify,
        "selfsim-sweep": _run_selfsim_sweep,
    }[cfg.kind]
    runner(cfg, ws, out, meta, paths)
    manifest_path = reporting.write_manifest(out, cfg_hash, paths)
    return json.loads(manifest_path.read_text())


def _record_csv(record: RunRecord, path: Path, meta: dict) -> Path:
    flags = {
        VERDICT_BLOWUP: 1,
        VERDICT_DISSIPATION: 2,
        VERDICT_TRAPPED: 0,
    }
    comments = dict(meta)
    comments["verdict"] = record.verdict
    if record.t_est is not None:
        comments["t_est"] = record.t_est
        comments["t_est_uncertainty"] = record.t_est_uncertainty
    return reporting.write_csv(
        path,
        comments,
        {
            "t": record.times,
            "dt": record.dts,
            "linf": record.linf_trace,
            "h1dot": record.h1dot_trace,
            "energy": record.energy_trace,
            "verdict_flag": np.full(record.times.size, flags[record.verdict]),
        },
    )


def _trace_csv(trace: ModulationTrace, path: Path, meta: dict) -> Path:
    return reporting.write_csv(
        path,
        meta,
        {
            "t": trace.t,
            "s": trace.s,
            "lambda": trace.array("lam"),
            "a": trace.array("a"),
            "eps_h1": trace.array("eps_h1"),
            "eps_h2": trace.array("eps_h2"),
            "int_eH_e": trace.array("int_e_he"),
            "dist_M": trace.array("dist"),
        },
    )


def _run_spectrum(cfg, ws, out, meta, paths):
    spec = ws.spec
    op = assemble_h(0, spec.grid, ws.params)
    e0_dense, y = ground_eig(op)
    n_neg = negative_eigenvalue_count(op)
    e0_shoot = e0_by_shooting(ws.params)
    nn = spec.grid.n - 1
    res = op.matvec(y.values[:nn]) + e0_dense * y.values[:nn]
    eig_res = math.sqrt(
        float(np.dot(op.mass, res ** 2))
        / float(np.dot(op.mass, y.values[:nn] ** 2))
    )
    samples = int(cfg.extra.get("coercivity_samples", 1000))
    coer = coercivity_estimate(spec, samples=samples, seed=cfg.seed)
    pairs = [zero_modes(n, spec.grid, ws.params) for n in (0, 1, 2)]
    paths.append(
        reporting.write_csv(
            out / "spectral_report.csv",
            meta,
            {
                "e0": [e0_dense],
                "e0_shooting": [e0_shoot],
                "e0_rel_gap": [abs(e0_dense - e0_shoot) / e0_dense],
                "negative_count": [n_neg],
                "eigen_residual": [eig_res],
                "coercivity_min_h1": [coer.min_h1],
                "coercivity_min_h2": [coer.min_h2],
                "coercivity_min_h3": [coer.min_h3],
                "gamma0_exponent": [pairs[0].origin_exponent],
                "gamma1_exponent": [pairs[1].origin_exponent],
                "gamma2_exponent": [pairs[2].origin_exponent],
                "t2_infinity_exponent": [pairs[2].infinity_exponent],
            },
        )
    )
    paths.append(
        reporting.write_csv(
            out / "unstable_mode.csv",
            meta,
            {"r": spec.grid.nodes, "y": spec.y.values, "psi0": spec.psi0.values},
        )
    )
    paths.append(reporting.plot_spectrum(spec, pairs, out / "spectrum.png"))


def _run_evolve(cfg, ws, out, meta, paths):
    rng = np.random.default_rng(cfg.seed)
    u0 = make_initial_data(cfg.initial_data, ws.run_grid, ws.spec, ws.params, rng)
    record = evolve(u0, ws.solver_cfg, ws.params)
    paths.append(_record_csv(record, out / "run.csv", meta))
    final = record.final_state
    paths.append(
        reporting.write_field(
            out / "final_state.csv",
            final.grid.nodes,
            final.values,
            {**meta, "t": record.t_final},
        )
    )
    paths.append(reporting.plot_run(record, out / "run.png"))


def _run_classify(cfg, ws, out, meta, paths):
    rng = np.random.default_rng(cfg.seed)
    u0 = make_initial_data(cfg.initial_data, ws.run_grid, ws.spec, ws.params, rng)
    verdict, record, trace = classify(
        u0, ws, override_neighborhood=cfg.override_neighborhood
    )
    paths.append(_record_csv(record, out / "run.csv", meta))
    if len(trace):
        paths.append(_trace_csv(trace, out / "modulation.csv", meta))
        paths.append(reporting.plot_modulation(trace, out / "modulation.png"))
    if record.verdict == VERDICT_BLOWUP and record.t_est is not None:
        paths.extend(_selfsim_frame_outputs(record, ws.params, out, meta))
    verdict_path = out / "verdict.json"
    verdict_path.write_text(
        json.dumps(
            {"class": verdict.cls, "evidence": _jsonable(verdict.evidence)},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    paths.append(verdict_path)
    paths.append(reporting.plot_run(record, out / "run.png"))


def _selfsim_frame_outputs(record, params, out, meta):
    """Frame diagnostics along a blow-up run renormalized at its fitted time."""
    from .groundstate import kappa_const

    ssg = make_selfsim_grid(params)
    frames = frames_from_record(record, record.t_est, ssg, max_frames=60)
    if len(frames) < 3:
        return []
    inv = params.inv_p_minus_1
    t_vals = np.array([f.t for f in frames])
    s_vals = np.array([f.s_ss for f in frames])
    e_vals = np.array([energy_w(f) for f in frames])
    i_vals = np.array([i_w(f) for f in frames])
    crit = np.array([blowup_criterion(f) for f in frames])
    linf_interp = np.interp(t_vals, record.times, record.linf_trace)
    kap_run = linf_interp * (record.t_est - t_vals) ** inv
    csv = reporting.write_csv(
        out / "selfsim_frames.csv",
        {**meta, "t_renorm": record.t_est},
        {
            "t": t_vals,
            "s_ss": s_vals,
            "E_w": e_vals,
            "I_w": i_vals,
            "criterion": crit,
            "kappa_hat_running": kap_run,
        },
    )
    p = params.p
    target = kappa_const(params) ** 2 / (2.0 * (p + 1.0))
    fig = reporting.plot_selfsim(s_vals, e_vals, i_vals, target, out / "selfsim.png")
    return [csv, fig]


def _run_shoot(cfg, ws, out, meta, paths):
    shoot = cfg.extra.get("shoot", {})
    family_desc = dict(shoot.get("family", {"family": "q_plus_y"}))
    c_low = float(shoot.get("c_low", -0.1))
    c_high = float(shoot.get("c_high", 0.1))
    target = float(shoot.get("target_rel_width", 1e-6))

    def family(c):
        desc = dict(family_desc)
        desc["coefficient"] = c
        return make_initial_data(desc, ws.run_grid, ws.spec, ws.params)

    result = bisect_threshold(
        family, c_low, c_high, ws, target_rel_width=target
    )
    paths.append(
        reporting.write_csv(
            out / "bisection.csv",
            {**meta, "c_star": result.c_star, "width": result.width},
            {
                "level": np.arange(len(result.levels)),
                "c_mid": [lv["c_mid"] for lv in result.levels],
                "blowup_side": [lv["blowup_side"] for lv in result.levels],
                "width": [lv["width"] for lv in result.levels],
                "trapped_time": [lv["trapped_time"] for lv in result.levels],
            },
        )
    )
    paths.append(reporting.plot_bisection(result.levels, out / "bisection.png"))


def _run_minimal(cfg, ws, out, meta, paths):
    mcfg = cfg.extra.get("minimal", {})
    eps = float(mcfg.get("epsilon", 0.01))
    depths = list(mcfg.get("depths", [3, 5, 7]))
    rows = []
    all_approx = []
    for sign in (+1, -1):
        report, approxs = cauchy_in_n(sign, eps, depths, ws.solver_cfg, ws.spec)
        all_approx.extend(approxs)
        for ap, sup_diff in zip(approxs[1:], report.sup_diffs):
            fate = forward_fate(ap, ws.solver_cfg, ws.params)
            rows.append(
                {
                    "sign": sign,
                    "n": ap.depth,
                    "epsilon": eps,
                    "sup_diff": sup_diff,
                    "fate": fate.verdict,
                    "exponent_hat": fate.exponent_hat or math.nan,
                    "kappa_hat": fate.kappa_hat or math.nan,
                }
            )
    paths.append(
        reporting.write_csv(
            out / "minimal_summary.csv",
            meta,
            {k: [row[k] for row in rows] for k in rows[0]},
        )
    )
    paths.append(reporting.plot_minimal(all_approx, out / "minimal.png"))


def _run_selfsim_sweep(cfg, ws, out, meta, paths):
    sweep = cfg.extra.get("selfsim", {})
    amplitudes = list(sweep.get("amplitudes", [0.2, 0.5, 1.0]))
    sigma = float(sweep.get("sigma", 2.0))
    rows = selfsim_sweep(ws, amplitudes, sigma=sigma, workers=cfg.workers)
    keys = sorted({k for row in rows for k in row})
    paths.append(
        reporting.write_csv(
            out / "selfsim_sweep.csv",
            meta,
            {k: [row.get(k, math.nan) for row in rows] for k in keys},
        )
    )
    paths.append(reporting.plot_sweep(rows, out / "selfsim_sweep.png"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
