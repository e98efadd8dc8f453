import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def one_site():
    from dynprobit.model import DynamicProbitModel, build_prior_covariance

    model = DynamicProbitModel(X=np.ones((1, 1)), G=np.eye(1), W=0.0, P0=1.0, y=[1])
    return model, build_prior_covariance(model)


@pytest.fixture
def random_walk_pair():
    """n=2, p=1 random walk with P0 = W = 1, so Omega = [[2, 2], [2, 3]]."""
    from dynprobit.model import DynamicProbitModel, build_prior_covariance

    model = DynamicProbitModel(X=np.ones((2, 1)), G=np.eye(1), W=1.0, P0=1.0, y=[1, 1])
    return model, build_prior_covariance(model)
