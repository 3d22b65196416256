"""Ground state closed forms, the radial grid, and radial fields.

Everything here is exact arithmetic on the stationary bubble

    Q(r) = (1 + r^2 / (d(d-2)))^{-(d-2)/2},

its potential V = -p Q^{p-1}, the scaling generator applied to Q, and the
constant kappa of the spatially flat blow-up solution.  Derivatives are
hand-differentiated closed forms; no finite differences are used in this
module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError

__all__ = [
    "Parameters",
    "RadialGrid",
    "RadialField",
    "make_radial_grid",
    "eval_q",
    "eval_v",
    "eval_dr_q",
    "eval_d2r_q",
    "eval_lambda_q",
    "eval_laplacian_q",
    "kappa_const",
    "sphere_area",
]


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class Parameters:
    """Dimension and derived exponents.

    The exponent p = (d+2)/(d-2) is kept as an exact rational so that
    identities like 1/(p-1) = (d-2)/4 hold without rounding.
    """

    d: int
    allow_low_dimension: bool = False
    e0_hint: float | None = None

    def __post_init__(self):
        if self.d < 3:
            raise ConfigurationError(f"dimension d={self.d} must be >= 3")
        if self.d < 7 and not self.allow_low_dimension:
            raise ConfigurationError(
                f"d={self.d} < 7 is outside the regime this package covers; "
                "pass allow_low_dimension=True for exploratory runs"
            )

    @property
    def p_exact(self) -> Fraction:
        return Fraction(self.d + 2, self.d - 2)

    @property
    def p(self) -> float:
        return float(self.p_exact)

    @property
    def inv_p_minus_1(self) -> float:
        # 1/(p-1) = (d-2)/4, exact in binary floating point
        return (self.d - 2) / 4.0

    @property
    def qc(self) -> float:
        """The constant d(d-2) in the bubble profile."""
        return float(self.d * (self.d - 2))

    @property
    def sphere(self) -> float:
        return sphere_area(self.d)


def eval_q(r, params: Parameters):
    """Bubble profile Q(r); vectorized over r >= 0."""
    r = np.asarray(r, dtype=float)
    return (1.0 + r * r / params.qc) ** (-(params.d - 2) / 2.0)


def eval_v(r, params: Parameters):
    """Potential V(r) = -p Q(r)^{p-1} = -p (1 + r^2/(d(d-2)))^{-2}."""
    r = np.asarray(r, dtype=float)
    return -params.p * (1.0 + r * r / params.qc) ** (-2.0)


def eval_dr_q(r, params: Parameters):
    """Radial derivative Q'(r) from the differentiated closed form."""
    r = np.asarray(r, dtype=float)
    d, c = params.d, params.qc
    return -(d - 2) / c * r * (1.0 + r * r / c) ** (-d / 2.0)


def eval_d2r_q(r, params: Parameters):
    """Second radial derivative Q''(r)."""
    r = np.asarray(r, dtype=float)
    d, c = params.d, params.qc
    s = 1.0 + r * r / c
    return -(d - 2) / c * s ** (-d / 2.0) + (d - 2) * d / (c * c) * r * r * s ** (
        -d / 2.0 - 1.0
    )


def eval_laplacian_q(r, params: Parameters):
    """Radial Laplacian of Q, equal to -Q^p identically."""
    r = np.asarray(r, dtype=float)
    d, c = params.d, params.qc
    # Q'' + (d-1)/r Q' simplifies to -(1 + r^2/c)^{-(d+2)/2}
    return -((1.0 + r * r / c) ** (-(d + 2) / 2.0))


def eval_lambda_q(r, params: Parameters):
    """Scaling generator applied to Q: (d-2)/2 Q + r Q'."""
    r = np.asarray(r, dtype=float)
    d, c = params.d, params.qc
    s = r * r / c
    return (d - 2) / 2.0 * (1.0 + s) ** (-d / 2.0) * (1.0 - s)


def eval_dr_lambda_q(r, params: Parameters):
    """Radial derivative of the scaling mode, closed form."""
    r = np.asarray(r, dtype=float)
    d, c = params.d, params.qc
    s = r * r / c
    # d/dr [ (d-2)/2 (1+s)^{-d/2} (1-s) ] with ds/dr = 2r/c
    return (
        (d - 2)
        / 2.0
        * (2.0 * r / c)
        * (1.0 + s) ** (-d / 2.0 - 1.0)
        * (-d / 2.0 * (1.0 - s) - (1.0 + s))
    )


def kappa_const(params: Parameters) -> float:
    """ODE blow-up constant kappa_p = (1/(p-1))^{1/(p-1)}."""
    a = params.inv_p_minus_1
    return a ** a


@dataclass(frozen=True)
class RadialGrid:
    """Graded radial grid with quadrature folding in the r^{d-1} Jacobian.

    nodes[0] = 0 < nodes[1] < ... < nodes[-1] = rmax.  The quadrature
    weights integrate the piecewise-linear interpolant of f against
    r^{d-1} dr exactly on each cell, so constants are integrated to
    machine precision.
    """

    d: int
    nodes: np.ndarray
    weights: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.size < 10:
            raise ConfigurationError("radial grid needs at least 10 nodes")
        if nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0):
            raise ConfigurationError("nodes must satisfy 0 = r0 < r1 < ... < rmax")
        object.__setattr__(self, "nodes", nodes)
        if self.weights is None:
            object.__setattr__(self, "weights", _p1_weights(nodes, self.d))

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def rmax(self) -> float:
        return float(self.nodes[-1])

    def integrate(self, values: np.ndarray) -> float:
        """Quadrature of f against r^{d-1} dr (no sphere factor)."""
        return float(np.dot(self.weights, values))

    def inner(self, fa: np.ndarray, fb: np.ndarray) -> float:
        """Radial inner product <fa, fb> = int fa fb r^{d-1} dr."""
        return float(np.dot(self.weights, fa * fb))

    # --- finite-volume machinery shared by the operator and the solver ---

    @cached_property
    def fv(self) -> dict:
        """Flux coefficients and cell volumes of the conservative stencil.

        Unknowns are nodes 0..n-2 (homogeneous Dirichlet at rmax); the
        origin cell has no left face which encodes the Neumann condition.
        """
        r = self.nodes
        d = self.d
        nn = r.size - 1
        rm = 0.5 * (r[1:] + r[:-1])
        h = np.diff(r)
        f_right = rm[:nn] ** (d - 1) / h[:nn]
        f_left = np.zeros(nn)
        f_left[1:] = rm[: nn - 1] ** (d - 1) / h[: nn - 1]
        vol_left = np.zeros(nn)
        vol_left[1:] = rm[: nn - 1] ** d
        vol = (rm[:nn] ** d - vol_left) / d
        return {"f_right": f_right, "f_left": f_left, "vol": vol, "rm": rm, "h": h}

    def laplacian_bands(self, neumann_outer: bool = False):
        """(diag, upper, lower) of the radial Laplacian on the unknowns.

        With `neumann_outer` the flux through the outermost face is
        dropped, so spatial constants become exact steady states (used by
        the reaction-only test configuration).
        """
        fv = self.fv
        key = "bands_neumann" if neumann_outer else "bands"
        if key not in fv:
            vol = fv["vol"]
            f_right = fv["f_right"]
            if neumann_outer:
                f_right = f_right.copy()
                f_right[-1] = 0.0
            diag = -(f_right + fv["f_left"]) / vol
            upper = f_right[:-1] / vol[:-1]
            lower = fv["f_left"][1:] / vol[1:]
            fv[key] = (diag, upper, lower)
        return fv[key]

    def laplacian_apply(self, values: np.ndarray) -> np.ndarray:
        """Apply the radial Laplacian to full node samples.

        Returns values on all nodes; the last node is copied from its
        neighbour (one-sided, only used by diagnostics).  The true sample
        at rmax is used in the stencil, so no artificial Dirichlet
        truncation pollutes fields that do not vanish there.
        """
        fv = self.fv
        u = np.asarray(values, dtype=float)
        nn = self.n - 1
        flux = fv["f_right"] * (u[1 : nn + 1] - u[:nn])
        flux[1:] -= fv["f_left"][1:] * (u[1:nn] - u[: nn - 1])
        out = np.empty_like(u)
        out[:nn] = flux / fv["vol"]
        out[nn] = out[nn - 1]
        return out

    def d_dr(self, values: np.ndarray) -> np.ndarray:
        """Second-order first derivative on the nonuniform grid."""
        return np.gradient(np.asarray(values, dtype=float), self.nodes, edge_order=2)

    def h1_seminorm_sq(self, values: np.ndarray) -> float:
        """Face-based Dirichlet energy int |f'|^2 r^{d-1} dr.

        Consistent with the quadratic form of the finite-volume operator,
        which keeps coercivity checks sign-exact.
        """
        fv = self.fv
        u = np.asarray(values, dtype=float)
        dv = np.diff(u)
        return float(np.sum(fv["rm"] ** (self.d - 1) * dv * dv / fv["h"]))


def _p1_weights(nodes: np.ndarray, d: int) -> np.ndarray:
    """Quadrature weights: exact moments of hat functions against r^{d-1}."""
    a = nodes[:-1]
    b = nodes[1:]
    h = b - a
    m0 = (b ** d - a ** d) / d
    m1 = (b ** (d + 1) - a ** (d + 1)) / (d + 1)
    w = np.zeros_like(nodes)
    w[:-1] += (b * m0 - m1) / h
    w[1:] += (m1 - a * m0) / h
    return w


def make_radial_grid(
    params: Parameters,
    n: int = 4000,
    rmax: float = 100.0,
    first_cell: float | None = None,
) -> RadialGrid:
    """Geometrically graded grid on [0, rmax] with n cells.

    The first cell width defaults to 1e-3 * (4000/n) so that grid doubling
    refines self-similarly; it is clamped to at most 1e-3 for n >= 4000.
    """
    if n < 10:
        raise ConfigurationError("n must be at least 10")
    if rmax <= 0:
        raise ConfigurationError("rmax must be positive")
    if first_cell is None:
        first_cell = 1e-3 * (4000.0 / n)
    if first_cell <= 0:
        raise ConfigurationError("first_cell must be positive")
    if first_cell * n >= rmax:
        nodes = np.linspace(0.0, rmax, n + 1)
    else:
        def gap(logq):
            return first_cell * np.expm1(n * logq) / np.expm1(logq) - rmax

        logq = brentq(gap, 1e-14, 60.0 / n, xtol=1e-16)
        i = np.arange(n + 1)
        nodes = first_cell * np.expm1(i * logq) / np.expm1(logq)
        nodes[-1] = rmax
    return RadialGrid(d=params.d, nodes=nodes)


@dataclass(frozen=True)
class RadialField:
    """Samples of a radial function on a RadialGrid."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise ConfigurationError(
                f"field has {values.shape} values for a grid of {self.grid.n} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("field values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def linf(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2_norm(self) -> float:
        """Full L^2(R^d) norm including the sphere factor."""
        s = sphere_area(self.grid.d)
        return math.sqrt(s * self.grid.integrate(self.values ** 2))

    def h1_norm(self) -> float:
        """Full homogeneous H^1 norm including the sphere factor."""
        s = sphere_area(self.grid.d)
        return math.sqrt(s * self.grid.h1_seminorm_sq(self.values))


def sample_q(grid: RadialGrid, params: Parameters) -> RadialField:
    return RadialField(grid, eval_q(grid.nodes, params))


def sample_lambda_q(grid: RadialGrid, params: Parameters) -> RadialField:
    return RadialField(grid, eval_lambda_q(grid.nodes, params))
