from pathlib import Path

import pytest

from src.binary import BinaryInstance
from src.instances import load_instance

INSTANCES_DIR = Path(__file__).parent / "instances"
FIRST_TABLE = INSTANCES_DIR / "three_label_four_letter.json"
SECOND_TABLE = INSTANCES_DIR / "three_label_three_letter.json"
BINARY_P03 = INSTANCES_DIR / "binary_p03.json"


@pytest.fixture
def binary_p03():
    return BinaryInstance(0.3).to_problem()


@pytest.fixture
def second_table():
    return load_instance(SECOND_TABLE)


@pytest.fixture
def first_table():
    def load(c: float = 1.0):
        return load_instance(FIRST_TABLE, {"c": c})
    return load
