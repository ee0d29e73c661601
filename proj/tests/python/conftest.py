import os
from pathlib import Path

import pytest

FIXTURES = Path(os.environ.get("BUDGETSEG_FIXTURES", Path(__file__).resolve().parents[1] / "fixtures"))


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def cli():
    path = os.environ.get("BUDGETSEG_CLI")
    if not path or not Path(path).exists():
        pytest.skip("budgetseg CLI not built")
    return path
