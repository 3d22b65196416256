"""Shared fixtures: the reference discretization and a few expensive runs
reused across test modules."""

import numpy as np
import pytest

from critheat.experiments import ExperimentConfig, build_workspace
from critheat.groundstate import Parameters, RadialField, make_radial_grid
from critheat.modulation import decompose
from critheat.solver import SolverConfig, discrete_ground_state, evolve
from critheat.spectral import compute_spectral_data


@pytest.fixture(scope="session")
def params7():
    return Parameters(7)


@pytest.fixture(scope="session")
def grid(params7):
    return make_radial_grid(params7, n=4000, rmax=100.0)


@pytest.fixture(scope="session")
def spec(params7, grid):
    return compute_spectral_data(params7, grid, m_loc=20.0)


@pytest.fixture(scope="session")
def qh(grid, params7):
    """Discrete steady state, the base point of near-soliton experiments."""
    return discrete_ground_state(grid, params7)


@pytest.fixture(scope="session")
def base_state(qh, spec):
    """Decomposition of the base, whose amplitude is the measurement offset."""
    return decompose(qh, spec)


@pytest.fixture(scope="session")
def blowup_record(qh, spec, params7):
    """Shallow blow-up run from the upward-seeded soliton (cutoff 1e6)."""
    u0 = RadialField(qh.grid, qh.values + 0.05 * spec.y.values)
    cfg = SolverConfig(t_end=80.0, snapshot_stride=4)
    rec = evolve(u0, cfg, params7)
    assert rec.verdict == "Blowup"
    return rec


@pytest.fixture(scope="session")
def dissipation_record(qh, spec, params7):
    """Dissipating run from the downward-seeded soliton."""
    u0 = RadialField(qh.grid, qh.values - 0.05 * spec.y.values)
    cfg = SolverConfig(t_end=900.0, dt_max=0.5, dissip_linf=1e-5, snapshot_stride=8)
    rec = evolve(u0, cfg, params7)
    assert rec.verdict == "Global-Dissipation"
    return rec


@pytest.fixture(scope="session")
def trapped_record(qh, params7):
    """The base state itself, trapped to the horizon."""
    cfg = SolverConfig(t_end=30.0, snapshot_stride=4)
    rec = evolve(qh, cfg, params7)
    assert rec.verdict == "Trapped-at-horizon"
    return rec


@pytest.fixture(scope="session")
def workspace():
    """Default classify workspace with a moderate horizon."""
    return build_workspace(
        ExperimentConfig(kind="classify", solver={"t_end": 60.0, "snapshot_stride": 4})
    )
