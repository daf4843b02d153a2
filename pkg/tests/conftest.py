import numpy as np
import pytest

from stochcycle.model import ModelParameters


def make_params(**overrides) -> ModelParameters:
    """Single-frequency AR(1) baseline used across the suite."""
    base = dict(
        a=1.5,
        q=np.empty(0),
        lam=np.array([0.9]),
        p_shift=np.array([0.4]),
        beta=np.array([0.0]),
        phi=np.array([0.5]),
        alpha_A=0.4,
        alpha_P=0.5,
        omega=1.0,
        a_init=np.array([0.0]),
        psi_P=1.0,
    )
    base.update(overrides)
    return ModelParameters(**base)


@pytest.fixture
def params_k1():
    return make_params()


@pytest.fixture
def params_k2():
    return make_params(
        q=np.array([-0.8]),
        lam=np.array([0.9, 0.3]),
        p_shift=np.array([0.4, 1.2]),
    )
