import json

import pytest

from weakkam.scenarios import BUILTINS, ScenarioError, builtin, load_scenario, scenario_from_dict


def test_all_builtins_load():
    for key in BUILTINS:
        sc = builtin(key)
        assert sc.name == key
        assert sc.model.momentum_box > 0
        assert list(sc.lambda_schedule) == sorted(sc.lambda_schedule, reverse=True)


def test_builtin_specifics():
    assert builtin("oscillating").oscillating is not None
    assert builtin("oscillating").c == 1.0
    two = builtin("pendulum-2d")
    assert two.model.dim == 2 and two.grid.size == 32 * 32


def test_unknown_builtin():
    with pytest.raises(ScenarioError, match="unknown key"):
        builtin("pendulum-3d")


def test_custom_model_document():
    sc = scenario_from_dict(
        {
            "name": "tilted",
            "model": {"kind": "discounted", "expressions": {"G": "0.5*p1^2 + 0.3*sin(2*pi*x1)"}},
            "resolution": 64,
            "kernel": {"tau": 0.03125, "window": [4, 8]},
            "lambda_schedule": [0.5, 0.25],
        }
    )
    assert sc.name == "tilted" and sc.resolution == 64
    assert sc.kernel.window == (4.0, 8.0) and sc.kernel.t_max == 16.0
    assert sc.lambda_schedule == (0.5, 0.25)
    assert sc.model.momentum_box > 0


@pytest.mark.parametrize(
    "doc, path",
    [
        ([], r"^\$: expected an object"),
        ({"builtin": "pendulum", "colour": 1}, r"^\$\.colour: unknown key"),
        ({}, r"^\$: exactly one"),
        ({"builtin": "pendulum", "model": {}}, r"^\$: exactly one"),
        ({"builtin": 3}, r"^\$\.builtin"),
        ({"builtin": "pendulum", "resolution": 2}, r"^\$\.resolution: must be at least 4"),
        ({"builtin": "pendulum", "resolution": 10.5}, r"^\$\.resolution: expected an integer"),
        ({"builtin": "pendulum", "kernel": {"tau": -1}}, r"^\$\.kernel\.tau: must be positive"),
        ({"builtin": "pendulum", "kernel": {"window": [3, 1]}}, r"^\$\.kernel\.window"),
        ({"builtin": "pendulum", "kernel": {"speed": 1}}, r"^\$\.kernel\.speed: unknown key"),
        ({"builtin": "pendulum", "solver": {"scheme": "weno"}}, r"^\$\.solver\.scheme"),
        ({"builtin": "pendulum", "lambda_schedule": []}, r"^\$\.lambda_schedule"),
        ({"builtin": "pendulum", "lambda_schedule": [0.1, -1]}, r"^\$\.lambda_schedule\[1\]"),
        ({"builtin": "pendulum", "lambda_schedule": [0.1, 0.2]}, r"^\$\.lambda_schedule\[1\]: .*decreasing"),
        ({"builtin": "pendulum", "name": "a/b"}, r"^\$\.name"),
        ({"builtin": "pendulum", "c": "one"}, r"^\$\.c: expected a number"),
        ({"model": {"kind": "discounted", "expressions": {"G": "cos(x1"}}}, r"^\$\.model"),
    ],
)
def test_schema_errors_carry_field_path(doc, path):
    with pytest.raises(ScenarioError, match=path):
        scenario_from_dict(doc)


def test_load_from_file(tmp_path):
    p = tmp_path / "mine.json"
    p.write_text(json.dumps({"builtin": "double-well", "resolution": 32}))
    sc = load_scenario(str(p))
    assert sc.name == "mine" and sc.resolution == 32
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(str(tmp_path / "bad.json"))
    with pytest.raises(ScenarioError, match="no such file"):
        load_scenario(str(tmp_path / "absent.json"))
    assert load_scenario("pendulum").name == "pendulum"
