import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from aamix import backend


@pytest.fixture(params=backend.available_backends())
def kernel_backend(request):
    """Run a test once per available kernel backend."""
    previous = backend.use_backend(request.param)
    yield request.param
    backend.use_backend(previous)
