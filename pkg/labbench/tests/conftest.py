import pytest

from labbench.config import BenchConfig
from labbench.server import BridgeServer


@pytest.fixture
def bridge():
    """Bridge on the default bench, listening on a free local port."""
    server = BridgeServer(BenchConfig(),host='127.0.0.1',port=0).start()
    yield server
    server.shutdown()


@pytest.fixture
def address(bridge):
    return '127.0.0.1', bridge.port
