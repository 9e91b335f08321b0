import pytest

from mgtlab.config import get_settings
from mgtlab.models import MgtParameters
from mgtlab.services.kernels import MemoryKernel
from mgtlab.services.spectrum import OperatorSpectrum


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Every test sees default settings, whatever the local .env says"""
    monkeypatch.delenv("MGT_THREADS", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def critical_params():
    return MgtParameters(tau=1.0, alpha=1.0, b=1.0, c2=1.0)


@pytest.fixture
def damped_params():
    # gamma = 1, admissible k in (1, 2)
    return MgtParameters(tau=1.0, alpha=2.0, b=1.0, c2=1.0)


@pytest.fixture
def one_mode():
    return OperatorSpectrum.from_eigenvalues([1.0])


@pytest.fixture
def two_modes():
    return OperatorSpectrum.from_eigenvalues([1.0, 4.0])


@pytest.fixture
def weak_kernel():
    return MemoryKernel.prony([0.2], [2.0])
