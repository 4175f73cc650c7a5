import warnings

import numpy as np
import pytest

from nskper.model import FluidParams, PeriodicForcing, derive_params
from nskper.periodic import TripleNormSpec, fixed_point_solve
from nskper.spectral import make_grid


def band_limited(grid, rng, max_mode=None, vector=False):
    """Real random field with modes ``|m_j| <= max_mode`` and no Nyquist content."""
    max_mode = grid.points_per_dim // 3 if max_mode is None else max_mode
    shape = ((grid.n,) if vector else ()) + grid.shape
    u_hat = grid.forward(rng.standard_normal(shape))
    keep = np.all(np.abs(grid.mode_index) <= max_mode, axis=0)
    return grid.inverse(np.where(keep, u_hat, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def fp():
    return FluidParams()


@pytest.fixture(scope="session")
def grid2():
    return make_grid(2, 16, 2 * np.pi)


@pytest.fixture(scope="session")
def rp2(fp):
    return derive_params(fp, 2)


@pytest.fixture(scope="session")
def periodic_case(fp):
    """Converged periodic solution on the small reference setup (n=2, P=32, M=32)."""
    grid = make_grid(2, 32, 2 * np.pi)
    rp = derive_params(fp, 2)
    forcing = PeriodicForcing.symmetric(grid, 1.0, 32, 1e-3)
    spec = TripleNormSpec(4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        traj, trace = fixed_point_solve(forcing, rp, fp, spec, tol=1e-10)
    return {"grid": grid, "rp": rp, "fp": fp, "forcing": forcing, "spec": spec, "traj": traj, "trace": trace}


# -- acceptance reporting --------------------------------------------------------

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
