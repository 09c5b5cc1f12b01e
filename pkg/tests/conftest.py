import pytest

from blocknas import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the njit kernels once so timed tests measure the algorithms,
    # not compilation
    _kernels.warmup()
