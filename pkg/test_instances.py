import json

import numpy as np
import pytest

from conftest import FIRST_TABLE, SECOND_TABLE
from src.instances import instance_from_dict, instance_to_dict, load_instance, parse_cost_params
from src.probability import ValidationError


def _doc(**overrides):
    doc = {
        "labels": ["a", "b"],
        "prior": [0.5, 0.5],
        "data_letters": ["u", "v"],
        "generation": [[0.8, 0.2], [0.2, 0.8]],
        "compressed_size": 2,
    }
    doc.update(overrides)
    return doc


def test_bundled_first_table_fields():
    doc = json.loads(FIRST_TABLE.read_text())
    assert doc["generation"] == [
        [0.995, 0.001, 0.002, 0.002],
        [0.001, 0.996, 0.001, 0.002],
        [0.002, 0.002, 0.994, 0.002],
    ]
    assert doc["compressed_size"] == 3
    assert doc["cost"] == [[0, "c", "c"], [1, 0, 1], [1, 1, 0]]


def test_bundled_second_table_fields():
    doc = json.loads(SECOND_TABLE.read_text())
    assert doc["prior"] == [0.25, 0.25, 0.5]
    assert doc["generation"] == [[0.9, 0.1, 0], [0.1, 0.9, 0], [0.05, 0.05, 0.9]]
    assert doc["cost"] == [[0, 1, 1], [1, 0, 1], [0.0001, 0.0001, 0]]


def test_cost_parameter_default_and_override():
    default = load_instance(FIRST_TABLE)
    np.testing.assert_array_equal(default.cost.matrix[0], [0, 1, 1])
    halved = load_instance(FIRST_TABLE, {"c": 0.5})
    np.testing.assert_array_equal(halved.cost.matrix[0], [0, 0.5, 0.5])
    assert halved.cost.matrix[1].tolist() == [1, 0, 1]


def test_unbound_cost_parameter():
    doc = _doc(cost=[[0, "k"], [1, 0]])
    with pytest.raises(ValidationError, match="unbound parameter 'k'"):
        instance_from_dict(doc)
    inst = instance_from_dict(doc, {"k": 3.0})
    assert inst.cost.matrix[0, 1] == 3.0


def test_missing_fields_listed():
    doc = _doc()
    del doc["prior"]
    del doc["compressed_size"]
    with pytest.raises(ValidationError, match="prior, compressed_size"):
        instance_from_dict(doc)


def test_bad_generation_row_is_named():
    with pytest.raises(ValidationError, match="row 1 \\('b'\\)"):
        instance_from_dict(_doc(generation=[[0.8, 0.2], [0.3, 0.8]]))


def test_ragged_generation_rows():
    with pytest.raises(ValidationError, match="differing lengths"):
        instance_from_dict(_doc(generation=[[0.8, 0.2], [1.0]]))


def test_non_integer_compressed_size():
    with pytest.raises(ValidationError, match="integer"):
        instance_from_dict(_doc(compressed_size=2.5))


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError, match="invalid JSON"):
        load_instance(path)


def test_missing_file_is_an_os_error(tmp_path):
    with pytest.raises(OSError):
        load_instance(tmp_path / "absent.json")


def test_parse_cost_params():
    assert parse_cost_params(["c=2", " d = 0.5"]) == {"c": 2.0, "d": 0.5}
    assert parse_cost_params(None) == {}
    with pytest.raises(ValidationError, match="name=value"):
        parse_cost_params(["c"])
    with pytest.raises(ValidationError, match="non-numeric"):
        parse_cost_params(["c=abc"])


def test_dict_round_trip(second_table):
    again = instance_from_dict(instance_to_dict(second_table))
    np.testing.assert_array_equal(again.generation.matrix, second_table.generation.matrix)
    np.testing.assert_array_equal(again.cost.matrix, second_table.cost.matrix)
    assert again.labels == second_table.labels
