import json

import numpy as np
import pytest

from pmllab.core_prob import ProbError
from pmllab.instances import BUILTINS, SETTINGS, bound_report, builtin, load_instance, primary_bound


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_load_and_bound(name):
    inst = builtin(name)
    assert inst.name == name and inst.setting in SETTINGS
    rep = bound_report(inst, trials=2000, seed=1)
    v = rep[primary_bound(inst.setting)]
    assert 0.0 <= v <= 1.0


def test_noiseless_primary_values():
    assert bound_report(builtin("noiseless-l2"))["prop1"] == pytest.approx(0.5)
    assert bound_report(builtin("list-noiseless-l2"))["list"] == pytest.approx(0.25)


def test_json_roundtrip(tmp_path):
    inst = builtin("gp-dirty-n6")
    path = tmp_path / "gp.json"
    path.write_text(json.dumps(inst.to_json()))
    back = load_instance(path)
    assert back.name == "gp" and back.n == inst.n and back.params == inst.params
    for k, v in inst.arrays.items():
        np.testing.assert_array_equal(back.arrays[k], v)
    assert load_instance(json.dumps(inst.to_json())).n == 6


def test_builtin_name_resolves_as_path():
    assert load_instance("bsc-n8-l4").params["L"] == 4


def test_replace_params_and_n():
    inst = builtin("bsc-n8-l4").replace(L=16, n=2)
    assert inst["L"] == 16 and inst.n == 2
    with pytest.raises(ProbError):
        builtin("bsc-n8-l4").replace(L=0)
    with pytest.raises(ProbError):
        builtin("bsc-n8-l4").replace(n=0)


@pytest.mark.parametrize(
    "patch, msg",
    [
        ({"setting": "nope"}, "unknown setting"),
        ({"extra": 1}, "unexpected fields"),
        ({"ch": [[0.5, 0.4], [0.5, 0.5]]}, "row"),
        ({"p_x": [0.5, 0.6]}, "mass"),
        ({"L": None}, "missing"),
        ({"ch": [0.5, 0.5]}, "axes"),
    ],
)
def test_validation_errors(patch, msg):
    doc = dict(BUILTINS["noiseless-l2"])
    doc.update(patch)
    with pytest.raises(ProbError, match=msg):
        load_instance(doc)


def test_missing_array_and_file():
    doc = dict(BUILTINS["noiseless-l2"])
    del doc["ch"]
    with pytest.raises(ProbError, match="missing array"):
        load_instance(doc)
    with pytest.raises(ProbError, match="does not exist"):
        load_instance("/nonexistent/instance.json")
    with pytest.raises(ProbError):
        builtin("no-such-builtin")


def test_map_must_be_integer_valued():
    doc = dict(BUILTINS["gp-dirty-n6"])
    doc["x_fn"] = [[0, -1], [1, 0]]
    with pytest.raises(ProbError, match="nonnegative integers"):
        load_instance(doc)
