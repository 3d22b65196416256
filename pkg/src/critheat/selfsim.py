"""Self-similar renormalization at a putative blow-up time and diagnostics.

A state u(t) renormalizes to w(y) = (T-t)^{1/(p-1)} u(t, sqrt(T-t) y) on a
fixed uniform y-grid carrying Gaussian quadrature weights for the measure
rho(y) dy, rho = (4 pi)^{-d/2} exp(-|y|^2/4).  The weighted energy E(w) is
monotone along the renormalized flow and the functional

    I(w) = -2 E(w) + (p-1)/(p+1) (int w^2 rho)^{(p+1)/2}

is nonpositive for globally defined solutions; I > 0 certifies blow-up
before T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainExceeded, InsufficientData
from .groundstate import Parameters, RadialField, sphere_area
from .modulation import even_interpolator
from .solver import RunRecord, VERDICT_BLOWUP

__all__ = [
    "SelfSimGrid",
    "SelfSimFrame",
    "make_selfsim_grid",
    "renormalize",
    "energy_w",
    "i_w",
    "blowup_criterion",
    "lyapunov_check",
    "rate_check",
    "frames_from_record",
    "constant_energy",
    "constant_i",
]


@dataclass(frozen=True)
class SelfSimGrid:
    d: int
    y: np.ndarray
    rho_weights: np.ndarray  # quadrature for int f(|y|) rho(y) dy over R^d

    @property
    def y_max(self) -> float:
        return float(self.y[-1])

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.rho_weights, values))


def make_selfsim_grid(params: Parameters, y_max: float = 12.0, n: int = 600) -> SelfSimGrid:
    """Uniform y-grid whose weights integrate rho to one.

    The integrand y^{d-1} e^{-y^2/4} has all odd derivatives vanishing at
    both ends of [0, y_max], so the trapezoid rule is spectrally accurate
    here; y_max = 12 keeps the truncated Gaussian tail below 1e-15.
    """
    if y_max <= 0 or n < 10:
        raise ConfigurationError("invalid self-similar grid settings")
    d = params.d
    y = np.linspace(0.0, y_max, n + 1)
    h = y[1] - y[0]
    trap = np.full(n + 1, h)
    trap[0] = trap[-1] = 0.5 * h
    dens = (4.0 * math.pi) ** (-d / 2.0) * np.exp(-y * y / 4.0) * y ** (d - 1)
    return SelfSimGrid(d=d, y=y, rho_weights=sphere_area(d) * dens * trap)


@dataclass(frozen=True)
class SelfSimFrame:
    t: float
    t_renorm: float  # the time T used in the renormalization
    s_ss: float  # -log(T - t)
    w: np.ndarray
    grid: SelfSimGrid
    params: Parameters


def renormalize(
    u: RadialField, t: float, t_renorm: float, params: Parameters, grid: SelfSimGrid
) -> SelfSimFrame:
    """Map a state at time t < T into the self-similar frame at T."""
    if t >= t_renorm:
        raise ConfigurationError(f"need t < T (got t={t}, T={t_renorm})")
    root = math.sqrt(t_renorm - t)
    if root * grid.y_max > u.grid.rmax:
        raise DomainExceeded(
            f"y-grid reaches r = {root * grid.y_max:.3g} beyond the domain; "
            f"maximal usable y is {u.grid.rmax / root:.3g}"
        )
    interp = even_interpolator(u)
    w = (t_renorm - t) ** params.inv_p_minus_1 * interp(root * grid.y)
    return SelfSimFrame(
        t=t,
        t_renorm=t_renorm,
        s_ss=-math.log(t_renorm - t),
        w=np.asarray(w, dtype=float),
        grid=grid,
        params=params,
    )


def energy_w(frame: SelfSimFrame) -> float:
    """Gaussian-weighted energy of a self-similar frame."""
    p = frame.params.p
    w = frame.w
    dw = np.gradient(w, frame.grid.y, edge_order=2)
    dens = 0.5 * dw * dw + w * w / (2.0 * (p - 1.0)) - np.abs(w) ** (p + 1.0) / (p + 1.0)
    return frame.grid.integrate(dens)


def i_w(frame: SelfSimFrame) -> float:
    """Blow-up indicator functional of a frame."""
    p = frame.params.p
    mass = frame.grid.integrate(frame.w ** 2)
    return -2.0 * energy_w(frame) + (p - 1.0) / (p + 1.0) * mass ** ((p + 1.0) / 2.0)


def blowup_criterion(frame: SelfSimFrame, tol: float = 1e-8) -> bool:
    """True when I(w) is positive beyond the frame-scaled tolerance.

    A positive value certifies that the underlying solution blows up
    before the renormalization time.
    """
    p = frame.params.p
    mass = frame.grid.integrate(frame.w ** 2)
    scale = (1.0 + mass) ** ((p + 1.0) / 2.0)
    return i_w(frame) > tol * scale


def constant_energy(c: float, params: Parameters) -> float:
    """Closed-form E(w) for a spatially constant frame."""
    p = params.p
    return c * c / (2.0 * (p - 1.0)) - abs(c) ** (p + 1.0) / (p + 1.0)


def constant_i(c: float, params: Parameters) -> float:
    """Closed-form I(w) for a spatially constant frame."""
    p = params.p
    return -2.0 * constant_energy(c, params) + (p - 1.0) / (p + 1.0) * (
        c * c
    ) ** ((p + 1.0) / 2.0)


@dataclass(frozen=True)
class LyapunovReport:
    monotone: bool
    worst_increase: float
    dissipation_agreement: float  # median |(-dE/ds) / int w_s^2 rho - 1|
    e_final: float


def lyapunov_check(frames: list[SelfSimFrame], slack: float = 1e-8) -> LyapunovReport:
    """Monotonicity of E(w(s)) and the dissipation identity across frames.

    Compares the finite-difference decay -dE/ds with the quadrature of
    w_s^2 rho, with w_s by central differences between adjacent frames.
    """
    if len(frames) < 3:
        raise InsufficientData("need at least 3 frames from one run")
    t_r = frames[0].t_renorm
    if any(abs(f.t_renorm - t_r) > 1e-12 * max(1.0, abs(t_r)) for f in frames):
        raise ConfigurationError("frames renormalized at inconsistent times")
    s = np.array([f.s_ss for f in frames])
    if np.any(np.diff(s) <= 0):
        raise ConfigurationError("frames must be time-ordered")
    energies = np.array([energy_w(f) for f in frames])
    scale = np.max(np.abs(energies)) + 1e-300
    rises = np.diff(energies)
    worst = float(np.max(rises))
    monotone = worst <= slack * scale

    ratios = []
    for k in range(1, len(frames) - 1):
        ds = s[k + 1] - s[k - 1]
        w_s = (frames[k + 1].w - frames[k - 1].w) / ds
        dissip = frames[k].grid.integrate(w_s * w_s)
        de = (energies[k + 1] - energies[k - 1]) / ds
        if dissip > 1e-300:
            ratios.append(abs(-de / dissip - 1.0))
    agreement = float(np.median(ratios)) if ratios else math.inf
    return LyapunovReport(
        monotone=monotone,
        worst_increase=worst,
        dissipation_agreement=agreement,
        e_final=float(energies[-1]),
    )


def frames_from_record(
    record: RunRecord,
    t_renorm: float,
    grid: SelfSimGrid,
    max_frames: int = 60,
    linf_min: float = 0.0,
) -> list[SelfSimFrame]:
    """Renormalize stored snapshots at a common T, skipping out-of-domain ones."""
    frames = []
    for t_snap, snap in zip(record.snapshot_times, record.snapshots):
        if t_snap >= t_renorm:
            break
        if snap.linf < linf_min:
            continue
        try:
            frames.append(renormalize(snap, t_snap, t_renorm, record.params, grid))
        except DomainExceeded:
            continue
    if len(frames) > max_frames:
        idx = np.unique(np.linspace(0, len(frames) - 1, max_frames).astype(int))
        frames = [frames[i] for i in idx]
    return frames


@dataclass(frozen=True)
class RateReport:
    kappa_hat: float
    exponent_hat: float
    samples: int
    s_window: tuple[float, float]


def rate_check(record: RunRecord, t_est: float, decades: float = 1.0) -> RateReport:
    """Blow-up rate constants from the sup-norm trace.

    kappa_hat is the median of |u(t)|_inf (T - t)^{1/(p-1)} over the last
    `decades` of sup-norm growth before cutoff; the exponent comes from a
    log-log fit of |u(t)|_inf against T - t on the same window.
    """
    if record.verdict != VERDICT_BLOWUP:
        raise InsufficientData("rate check requires a blow-up verdict")
    p = record.params.p
    linf = record.linf_trace
    ts = record.times
    peak = linf[-1]
    mask = (linf >= peak / 10.0 ** decades) & (t_est - ts > 0.0)
    if int(np.sum(mask)) < 20:
        raise InsufficientData("fewer than 20 samples in the rate window")
    tt = t_est - ts[mask]
    kappa_hat = float(np.median(linf[mask] * tt ** (1.0 / (p - 1.0))))
    coeff = np.polyfit(np.log(tt), np.log(linf[mask]), 1)
    s_window = (-math.log(float(np.max(tt))), -math.log(float(np.min(tt))))
    return RateReport(
        kappa_hat=kappa_hat,
        exponent_hat=-float(coeff[0]),
        samples=int(np.sum(mask)),
        s_window=s_window,
    )
