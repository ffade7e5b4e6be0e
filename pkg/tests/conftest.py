import pytest

from llp.models import LoadBalancing, ServerAllocation


@pytest.fixture
def lb():
    return LoadBalancing(lam=1.5, mu1=0.1, mu2=0.35, mu_tilde=10.8, p_r=0.45, p_g=0.8)


@pytest.fixture
def sa_witness():
    return ServerAllocation(lam=1.0, mu=1.2, mu_tilde=7.0)
