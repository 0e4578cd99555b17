import pytest
from hypothesis import HealthCheck, settings

from filterstab.measure import FiniteDistribution
from filterstab.models import Normal, build_finite_hmm

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def prop4_model():
    """Two-state mixing chain observed through N(0,1) / N(1,1)."""
    return build_finite_hmm([[0.7, 0.3], [0.3, 0.7]], obs_dists=(Normal(0.0, 1.0), Normal(1.0, 1.0)))


@pytest.fixture
def prop4_priors(prop4_model):
    states = prop4_model.states
    return FiniteDistribution(states, [0.5, 0.5]), FiniteDistribution(states, [0.99, 0.01])
