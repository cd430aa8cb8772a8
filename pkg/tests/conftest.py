import numpy as np
import pytest

from gevolab import symbol_lab as sl
from gevolab.classification import DegeneracyProfile


@pytest.fixture(scope="session")
def default_profile():
    """Level-2 gap model with slow decay at both levels; q2 = 6/7."""
    return DegeneracyProfile(ell=2.0, k=1.0, kprime=1.0, sigma1=0.9,
                             sigma2=0.8, T=1.0, C_a2=0.05, C_a1=0.05,
                             C_a0=0.01)


@pytest.fixture(scope="session")
def default_plan(default_profile):
    return sl.make_plan(default_profile)


@pytest.fixture(scope="session")
def cutoffs():
    return sl.make_cutoffs()


@pytest.fixture(scope="session")
def default_consts():
    return sl.TransformConstants(M2=0.05, M1=0.05, Me2=0.78, Me1=1.1,
                                 Mpsi2=0.075, Mpsi1=0.075, rho0=0.1, h=1.0,
                                 theta=1.05, mu=1.01)


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
