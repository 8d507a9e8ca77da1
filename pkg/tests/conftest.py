import numpy as np
import pytest

from qtmlab.config import RunConfig
from qtmlab.model import DisorderParam, ModelParams
from qtmlab.verify import VerifyContext

BASE_GAMMA = np.pi / 4
BASE_ALPHA = 0.2


@pytest.fixture(scope="session")
def ctx():
    """Shared solver context at the baseline parameter point
    (gamma = pi/4, J = 1, T = 1, h = 0.2, alpha = 0.2, default grids).

    Grids, integral-equation solves and root sets are cached inside, so the
    expensive objects are built once per test session.
    """
    return VerifyContext(RunConfig.load())


@pytest.fixture(scope="session")
def params(ctx):
    return ctx.p


@pytest.fixture(scope="session")
def alpha(ctx):
    return ctx.alpha


@pytest.fixture(scope="session")
def outer_grid(ctx):
    return ctx.outer_grid()


@pytest.fixture(scope="session")
def work_grid(ctx):
    return ctx.work_grid()


@pytest.fixture(scope="session")
def aux_limit_k(ctx):
    return ctx.aux_limit(ctx.p.kappa)


@pytest.fixture(scope="session")
def bundle8(ctx):
    return ctx.bundle(8)


@pytest.fixture(scope="session")
def calc8(ctx):
    return ctx.calculator(8)


@pytest.fixture(scope="session")
def free_spin_params():
    return ModelParams(gamma=BASE_GAMMA, J=0.0, T=1.0, h=0.6)


@pytest.fixture(scope="session")
def alpha_imag():
    return DisorderParam(0.3j)
