"""Discrete linearized operators, the unstable eigenpair, and spectral checks.

The operator on the spherical-harmonic sector n,

    H^(n) = -d_rr - (d-1)/r d_r + n(d+n-2)/r^2 + V(r),

is discretized in conservative flux form so that, weighted by the cell
volumes, the matrix is exactly symmetric.  The ground eigenpair of H^(0)
is the unstable direction; an ODE shooting solve provides an independent
value of the eigenvalue for cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal, eigvalsh_tridiagonal
from scipy.optimize import brentq

from .errors import (
    ConfigurationError,
    DegenerateInput,
    DiscretizationFailure,
)
from .groundstate import (
    Parameters,
    RadialField,
    RadialGrid,
    eval_lambda_q,
    eval_v,
    sphere_area,
)

__all__ = [
    "RadialOperator",
    "SpectralData",
    "ZeroModePair",
    "assemble_h",
    "ground_eig",
    "negative_eigenvalue_count",
    "e0_by_shooting",
    "smooth_cutoff",
    "build_psi0",
    "zero_modes",
    "coercivity_estimate",
    "hardy_check",
    "compute_spectral_data",
    "random_smooth_field",
]


@dataclass(frozen=True)
class RadialOperator:
    """Discretized H^(n) with its own volume weights.

    Unknowns exclude the Dirichlet node at rmax; for n >= 1 they also
    exclude the origin (u(0) = 0), while n = 0 keeps the origin with the
    no-flux face built into the stencil.
    """

    n: int
    grid: RadialGrid
    params: Parameters
    diag: np.ndarray = field(repr=False)
    lower: np.ndarray = field(repr=False)
    mass: np.ndarray = field(repr=False)
    idx: np.ndarray = field(repr=False)

    @property
    def boundary_condition(self) -> str:
        """Origin regularity and outer boundary of the discretization."""
        origin = "neumann" if self.n == 0 else "dirichlet"
        return f"{origin}-at-origin, dirichlet-at-rmax"

    def matvec(self, u: np.ndarray) -> np.ndarray:
        """H applied to coefficients on the unknown nodes (Dirichlet)."""
        au = self.diag * u
        au[:-1] += self.lower * u[1:]
        au[1:] += self.lower * u[:-1]
        return au / self.mass

    def quad_form(self, u: np.ndarray) -> float:
        """<u, H u> in the volume-weighted inner product; exactly the
        discrete Dirichlet form, so its sign structure is preserved."""
        au = self.diag * u
        au[:-1] += self.lower * u[1:]
        au[1:] += self.lower * u[:-1]
        return float(np.dot(u, au))

    def apply(self, values: np.ndarray) -> np.ndarray:
        """H applied to full node samples, using the true boundary value.

        Returns samples on the unknown nodes.  Unlike ``matvec`` this does
        not force the field to vanish at rmax, which matters for slowly
        decaying kernel elements.
        """
        fv = self.grid.fv
        u = np.asarray(values, dtype=float)
        ii = self.idx
        flux = fv["f_right"][ii] * (u[ii + 1] - u[ii])
        left = fv["f_left"][ii] * (u[ii] - u[np.maximum(ii - 1, 0)])
        left[ii == 0] = 0.0
        pot = self._potential()
        return -(flux - left) / self.mass + pot * u[ii]

    def _potential(self) -> np.ndarray:
        r = self.grid.nodes[self.idx]
        pot = eval_v(r, self.params)
        if self.n > 0:
            pot = pot + self.n * (self.params.d + self.n - 2) / (r * r)
        return pot

    def symmetric_tridiagonal(self):
        """Bands of the symmetrized matrix D^{-1/2} (W H) D^{-1/2}."""
        s = np.sqrt(self.mass)
        return self.diag / self.mass, self.lower / (s[:-1] * s[1:])

    def symmetry_defect(self) -> float:
        """Relative asymmetry of W H in the volume-weighted product.

        The construction is symmetric by design; this measures roundoff.
        """
        rng = np.random.default_rng(0)
        u = rng.standard_normal(self.mass.size)
        v = rng.standard_normal(self.mass.size)
        left = np.dot(v * self.mass, self.matvec(u))
        right = np.dot(u * self.mass, self.matvec(v))
        scale = abs(left) + abs(right) + 1e-300
        return abs(left - right) / scale


def assemble_h(n: int, grid: RadialGrid, params: Parameters) -> RadialOperator:
    """Assemble the flux-form discretization of H^(n)."""
    if n < 0:
        raise ConfigurationError(f"harmonic index n={n} must be >= 0")
    if grid.n < 10:
        raise ConfigurationError("grid too coarse to assemble an operator")
    fv = grid.fv
    nn = grid.n - 1
    idx = np.arange(0, nn) if n == 0 else np.arange(1, nn)
    f_right = fv["f_right"][idx]
    f_left = fv["f_left"][idx].copy()
    f_left[idx == 0] = 0.0
    mass = fv["vol"][idx]
    r = grid.nodes[idx]
    pot = eval_v(r, params)
    if n > 0:
        pot = pot + n * (params.d + n - 2) / (r * r)
    diag = f_right + f_left + mass * pot
    lower = -f_left[1:]
    return RadialOperator(
        n=n, grid=grid, params=params, diag=diag, lower=lower, mass=mass, idx=idx
    )


def ground_eig(op: RadialOperator):
    """Smallest eigenpair of the discretized H^(0).

    Returns (e0, y) with H y = -e0 y, e0 > 0, y positive and normalized to
    unit L^2(R^d).  Raises DiscretizationFailure when the lowest
    eigenvalue is not negative.
    """
    if op.n != 0:
        raise ConfigurationError("ground_eig expects the n=0 operator")
    dsym, esym = op.symmetric_tridiagonal()
    w, v = eigh_tridiagonal(dsym, esym, select="i", select_range=(0, 0))
    lam = w[0]
    if lam >= 0:
        raise DiscretizationFailure(
            f"lowest eigenvalue {lam:.3e} is not negative; grid too coarse "
            "or rmax too small"
        )
    y = v[:, 0] / np.sqrt(op.mass)
    if y[0] < 0:
        y = -y
    if np.any(y <= 0):
        # clip roundoff-level sign noise in the far tail
        floor = np.max(np.abs(y)) * 1e-13
        if np.any(y < -floor):
            raise DiscretizationFailure("ground eigenvector is not positive")
        y = np.maximum(y, 0.0)
    full = np.append(y, 0.0)
    s = sphere_area(op.params.d)
    norm = math.sqrt(s * op.grid.integrate(full ** 2))
    return -lam, RadialField(op.grid, full / norm)


def negative_eigenvalue_count(op: RadialOperator, zero_tol: float = 1e-6) -> int:
    """Number of genuinely negative eigenvalues of the discretized operator.

    The scaling kernel mode sits at a numerical zero that discretization
    and domain truncation perturb by O(1e-7) to either side; eigenvalues
    within `zero_tol` of zero are therefore not counted as negative.
    """
    dsym, esym = op.symmetric_tridiagonal()
    lo = float(np.min(dsym) - 2.0 * np.max(np.abs(esym)) - 1.0)
    w = eigvalsh_tridiagonal(dsym, esym, select="v", select_range=(lo, 0.0))
    return int(np.sum(w < -abs(zero_tol)))


def e0_by_shooting(
    params: Parameters,
    r_match: float = 60.0,
    scan: int = 24,
    rtol: float = 1e-12,
) -> float:
    """Independent e0 from shooting on the radial eigenvalue ODE.

    Integrates u'' + (d-1)/r u' + (lam - V) u = 0 outward from a series
    start at the origin and bisects the eigenvalue on the sign of
    u(r_match).  The eigenfunction decays exponentially, so the Dirichlet
    truncation at r_match is far below the cross-check tolerance.
    """
    d = params.d
    v0 = eval_v(0.0, params)

    def rhs(r, y, lam):
        u, up = y
        return (up, -(d - 1) / r * up + (eval_v(r, params) - lam) * u)

    def end_value(lam, tol):
        r0 = 1e-8
        u0 = 1.0
        up0 = (v0 - lam) * r0 / d
        sol = solve_ivp(
            rhs,
            (r0, r_match),
            (u0, up0),
            args=(lam,),
            method="RK45",
            rtol=tol,
            atol=1e-30,
            first_step=1e-6,
        )
        return sol.y[0, -1]

    lams = np.linspace(v0 * 0.98, -1e-4, scan)
    vals = [end_value(lam, 1e-6) for lam in lams]
    for a, b, va, vb in zip(lams[:-1], lams[1:], vals[:-1], vals[1:]):
        if va == 0.0:
            return -float(a)
        if va * vb < 0:
            root = brentq(lambda lam: end_value(lam, rtol), a, b, xtol=1e-13)
            return -float(root)
    raise DiscretizationFailure(
        "shooting found no sign change; no bound state in the scanned window"
    )


def smooth_cutoff(x):
    """C-infinity cutoff: 1 on [0, 1], 0 on [2, inf)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[x <= 1.0] = 1.0
    mid = (x > 1.0) & (x < 2.0)
    if np.any(mid):
        t = x[mid]
        a = np.exp(-1.0 / (2.0 - t))
        b = np.exp(-1.0 / (t - 1.0))
        out[mid] = a / (a + b)
    return out


def build_psi0(
    y: RadialField, grid: RadialGrid, params: Parameters, m_loc: float
) -> RadialField:
    """Localized orthogonality profile built from the scaling mode.

    psi0 = chi_M * (scaling mode of Q) minus its component along the
    unstable eigenfunction, so <psi0, y> = 0 while <psi0, scaling mode>
    stays strictly positive.
    """
    if m_loc <= 0:
        raise ConfigurationError("localization radius must be positive")
    r = grid.nodes
    lq = eval_lambda_q(r, params)
    chi = smooth_cutoff(r / m_loc)
    core = chi * lq
    mass = grid.integrate(chi * lq * lq)
    if mass < 1e-6:
        raise ConfigurationError(
            f"localization radius {m_loc} leaves a degenerate profile "
            f"(int chi (scaling mode)^2 = {mass:.3e})"
        )
    coef = grid.inner(core, y.values) / grid.inner(y.values, y.values)
    return RadialField(grid, core - coef * y.values)


@dataclass(frozen=True)
class SpectralData:
    """Unstable eigenpair and orthogonality profile on a reference grid."""

    params: Parameters
    grid: RadialGrid
    e0: float
    y: RadialField
    psi0: RadialField
    m_loc: float
    y_mass: float  # int Y dx, for recovering the mass-normalized convention

    @property
    def y_mass_normalized(self) -> np.ndarray:
        """Eigenfunction scaled so its full-space integral is one."""
        return self.y.values / self.y_mass


def compute_spectral_data(
    params: Parameters, grid: RadialGrid, m_loc: float = 20.0
) -> SpectralData:
    op = assemble_h(0, grid, params)
    e0, y = ground_eig(op)
    psi0 = build_psi0(y, grid, params, m_loc)
    y_mass = sphere_area(params.d) * grid.integrate(y.values)
    return SpectralData(
        params=params, grid=grid, e0=e0, y=y, psi0=psi0, m_loc=m_loc, y_mass=y_mass
    )


# --------------------------------------------------------------------------
# zero modes of H^(n) via the log-radius ODE
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroModePair:
    """Regular and singular zero modes of H^(n) with measured exponents."""

    n: int
    t_reg: RadialField  # regular at the origin
    gamma_values: np.ndarray  # singular mode, sampled on gamma_nodes
    gamma_nodes: np.ndarray
    origin_exponent: float  # power-law exponent of the singular mode at 0
    infinity_exponent: float  # growth exponent of the regular mode at rmax


def _log_ode_rhs_factory(n: int, params: Parameters):
    coef = n * (params.d + n - 2)

    def rhs(t, w):
        r = math.exp(t)
        pot = r * r * eval_v(r, params) + coef
        return (w[1], -(params.d - 2) * w[1] + pot * w[0])

    return rhs


def _slope(ts, ws):
    """Least-squares slope of log|w| against t."""
    ly = np.log(np.abs(ws))
    a = np.polyfit(ts, ly, 1)
    return float(a[0])


def zero_modes(
    n: int,
    grid: RadialGrid,
    params: Parameters,
    t_min: float = math.log(1e-6),
    rtol: float = 1e-10,
) -> ZeroModePair:
    """Integrate the log-variable zero-mode ODE in both directions.

    Forward integration from t << 0 with the regular seed e^{nt} follows
    the regular solution (the singular branch decays forward); backward
    integration from t >> 0 with the decaying seed picks up the singular
    branch near the origin, whose measured power-law exponent is
    -(d + n - 2).
    """
    if n < 0:
        raise ConfigurationError("harmonic index must be >= 0")
    d = params.d
    rhs = _log_ode_rhs_factory(n, params)
    # the potential correction to the indicial exponents decays like r^-2,
    # so exponents are measured on a far-field stretch beyond the grid
    t_max = math.log(max(grid.rmax, 300.0))

    # regular mode: forward sweep
    w0 = (1.0, float(n))  # e^{nt} normalized at t_min
    sol_f = solve_ivp(
        rhs,
        (t_min, t_max),
        w0,
        method="DOP853",
        rtol=rtol,
        atol=1e-280,
        dense_output=True,
        first_step=1e-3,
    )
    if not sol_f.success:
        raise DiscretizationFailure(f"forward zero-mode sweep failed: {sol_f.message}")

    nodes = grid.nodes
    t_nodes = np.log(np.maximum(nodes[1:], 1e-300))
    reg = np.empty(grid.n)
    reg[1:] = sol_f.sol(np.minimum(t_nodes, t_max))[0]
    reg[0] = 1.0 if n == 0 else 0.0

    t_hi = np.linspace(t_max - math.log(2.0), t_max - 0.01, 40)
    infinity_exponent = _slope(t_hi, sol_f.sol(t_hi)[0])

    # singular mode: backward sweep with the decaying seed
    mu = d + n - 2
    w1 = (1.0, -float(mu))  # e^{-mu t} normalized at t_max
    sol_b = solve_ivp(
        rhs,
        (t_max, t_min),
        w1,
        method="DOP853",
        rtol=rtol,
        atol=1e-280,
        dense_output=True,
        first_step=1e-3,
    )
    if not sol_b.success:
        raise DiscretizationFailure(f"backward zero-mode sweep failed: {sol_b.message}")

    gamma_nodes = nodes[(nodes >= math.exp(t_min)) & (nodes > 0)]
    gamma_values = sol_b.sol(np.log(gamma_nodes))[0]

    t_lo = np.linspace(t_min + math.log(2.0), t_min + math.log(100.0), 40)
    origin_exponent = _slope(t_lo, sol_b.sol(t_lo)[0])

    return ZeroModePair(
        n=n,
        t_reg=RadialField(grid, reg / np.max(np.abs(reg[np.isfinite(reg)]))
                          if np.max(np.abs(reg)) > 0 else reg),
        gamma_values=gamma_values,
        gamma_nodes=gamma_nodes,
        origin_exponent=origin_exponent,
        infinity_exponent=infinity_exponent,
    )


# --------------------------------------------------------------------------
# empirical coercivity and Hardy checks
# --------------------------------------------------------------------------


def random_smooth_field(
    grid: RadialGrid, rng: np.random.Generator, k_max: int = 6, n_sigma: int = 3
) -> np.ndarray:
    """Random decaying field: sum of r^k exp(-r^2/sigma^2) with normal
    coefficients, sigma drawn in [1, 10]."""
    r = grid.nodes
    v = np.zeros(grid.n)
    for _ in range(n_sigma):
        sigma = rng.uniform(1.0, 10.0)
        envelope = np.exp(-(r / sigma) ** 2)
        coeffs = rng.standard_normal(k_max + 1)
        poly = np.polynomial.polynomial.polyval(r, coeffs)
        v += poly * envelope
    norm = math.sqrt(grid.integrate(v * v))
    if norm == 0.0:
        return v
    return v / norm


@dataclass(frozen=True)
class CoercivityReport:
    min_h1: float
    min_h2: float
    min_h3: float
    samples: int
    witness: np.ndarray | None  # field achieving a nonpositive quotient, if any

    @property
    def all_positive(self) -> bool:
        return min(self.min_h1, self.min_h2, self.min_h3) > 0.0


def _project_off(grid: RadialGrid, v: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    """Gram-Schmidt projection of v onto the complement of span(basis)."""
    u = v.copy()
    ortho = []
    for b in basis:
        w = b.copy()
        for o in ortho:
            w = w - grid.inner(w, o) * o
        w = w / math.sqrt(grid.inner(w, w))
        ortho.append(w)
    for o in ortho:
        u = u - grid.inner(u, o) * o
    return u


def coercivity_quotients(
    spec: SpectralData, v: np.ndarray, op: RadialOperator
) -> tuple[float, float, float]:
    """Rayleigh quotients of the three weighted forms for one field."""
    grid = spec.grid
    nn = grid.n - 1
    vi = v[:nn]
    q_h = op.quad_form(vi)  # int |v'|^2 - p Q^{p-1} v^2 (Dirichlet form)
    h1 = grid.h1_seminorm_sq(v)
    hv = op.matvec(vi)
    lap = grid.laplacian_apply(v)
    h2 = grid.integrate(lap * lap)
    num2 = float(np.dot(op.mass, hv * hv))
    q3 = op.quad_form(hv)
    dlap = grid.d_dr(lap)
    h3 = grid.integrate(dlap * dlap)
    return q_h / h1, num2 / h2, q3 / h3


def coercivity_estimate(
    spec: SpectralData, samples: int = 1000, seed: int = 0
) -> CoercivityReport:
    """Minimum observed Rayleigh quotients over random projected fields.

    Fields are projected onto the complement of the unstable eigenfunction
    and the localized orthogonality profile before the quotients of the
    H^1-, H^2- and H^3-level forms are evaluated.  All three minima must
    be strictly positive for the discretization to certify coercivity
    empirically.
    """
    if samples < 100:
        raise ConfigurationError("need at least 100 samples")
    grid = spec.grid
    op = assemble_h(0, grid, spec.params)
    rng = np.random.default_rng(seed)
    basis = [spec.y.values, spec.psi0.values]
    mins = [np.inf, np.inf, np.inf]
    witness = None
    for _ in range(samples):
        v = random_smooth_field(grid, rng)
        v = _project_off(grid, v, basis)
        norm = math.sqrt(grid.integrate(v * v))
        if norm < 1e-12:
            continue
        v /= norm
        q1, q2, q3 = coercivity_quotients(spec, v, op)
        if q1 < mins[0]:
            mins[0] = q1
        if q2 < mins[1]:
            mins[1] = q2
        if q3 < mins[2]:
            mins[2] = q3
        if min(q1, q2, q3) <= 0.0 and witness is None:
            witness = v.copy()
    return CoercivityReport(
        min_h1=mins[0], min_h2=mins[1], min_h3=mins[2],
        samples=samples, witness=witness,
    )


def hardy_check(v: RadialField, s: int) -> float:
    """Ratio of the weighted mass int v^2 / r^{2s} to the H^s seminorm.

    The origin node is excluded from the singular integral; its cell
    contributes O(r_1^{d-2s}) which is negligible for d >= 7, s <= 3.
    """
    if s not in (1, 2, 3):
        raise ConfigurationError("s must be 1, 2 or 3")
    grid = v.grid
    vals = v.values
    if np.max(np.abs(vals)) == 0.0:
        raise DegenerateInput("hardy_check needs a nonzero field")
    r = grid.nodes[1:]
    num = float(np.dot(grid.weights[1:], vals[1:] ** 2 / r ** (2 * s)))
    if s == 1:
        den = grid.h1_seminorm_sq(vals)
    elif s == 2:
        lap = grid.laplacian_apply(vals)
        den = grid.integrate(lap * lap)
    else:
        lap = grid.laplacian_apply(vals)
        dlap = grid.d_dr(lap)
        den = grid.integrate(dlap * dlap)
    return num / den
