import pytest

from canardlab import SystemParams, make_context


@pytest.fixture(scope="session")
def ctx():
    """Workhorse 50-digit context shared across tests."""
    return make_context(50)


@pytest.fixture()
def params(ctx):
    """Standard parameters h=0.1, eps=0.01."""
    return SystemParams.create(ctx, "0.01", "0.1")
