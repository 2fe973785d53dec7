import pytest

from hdrfuse import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """JIT-compile the reconstruction kernels once so timed tests see steady state."""
    _kernels.warmup()
