import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def naca_case(tmp_path: Path) -> Path:
    target = tmp_path / "naca0012"
    shutil.copytree(FIXTURES / "cases" / "naca0012", target)
    return target


@pytest.fixture
def hl_case(tmp_path: Path) -> Path:
    target = tmp_path / "hl30p30n"
    shutil.copytree(FIXTURES / "cases" / "hl30p30n", target)
    return target
