import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from potholemap.store import Store


@pytest.fixture
def store(tmp_path):
    s = Store(tmp_path / "registry.db")
    yield s
    s.close()
