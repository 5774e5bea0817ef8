import json

import numpy as np
import pytest

from treelstm import checkpoint
from treelstm.baselines import BaselineModel
from treelstm.checkpoint import (CheckpointShapeError, CheckpointVersionError,
                                 CorruptCheckpointError)
from treelstm.data import ScalerParams
from treelstm.model import TreeLstmConfig, TreeLstmModel


@pytest.fixture(params=["tree", "tree-shared", "tree-subset", "zi", "fi"])
def model(request):
    kind = request.param
    if kind == "zi" or kind == "fi":
        return BaselineModel.init(kind, 4, 2, seed=3, score_from=2)
    kw = {"tree-shared": dict(shared_combination=True),
          "tree-subset": dict(leaf_selection=[2, 5], leaf_init="before")}.get(kind, {})
    return TreeLstmModel.init(TreeLstmConfig(L=3, q=4, m=2, seed=3, **kw))


def test_round_trip_is_bit_exact(model, tmp_path):
    rng = np.random.default_rng(0)
    for arr in model.parameters().values():
        arr[...] = rng.normal(size=arr.shape) * 1e-3 + 1 / 3
    path = tmp_path / "m.ckpt"
    checkpoint.save(model, path)
    back, scaler = checkpoint.load(path)
    assert back == model and scaler is None
    for k, v in model.parameters().items():
        assert v.tobytes() == back.parameters()[k].tobytes()


def test_scaler_round_trip(tmp_path):
    m = BaselineModel.init("zi", 3, 2)
    sp = ScalerParams(np.array([-1.0 / 3, 2.0]), np.array([5.5, 2.0]))
    checkpoint.save(m, tmp_path / "c", sp)
    _, back = checkpoint.load(tmp_path / "c")
    assert np.array_equal(back.lo, sp.lo) and np.array_equal(back.hi, sp.hi)


def test_text_is_deterministic(model):
    assert checkpoint.dumps(model) == checkpoint.dumps(model.copy())


def test_header_describes_model():
    m = TreeLstmModel.init(TreeLstmConfig(L=2, q=3, m=1, shared_combination=True))
    head = json.loads(checkpoint.dumps(m))["header"]
    assert head["L"] == 2 and head["q"] == 3 and head["m"] == 1
    assert head["leaf_indices"] == [1, 2, 3] and head["shared_combination"] is True
    assert head["format_version"] == checkpoint.FORMAT_VERSION


def test_wrong_q_is_a_shape_error():
    doc = json.loads(checkpoint.dumps(TreeLstmModel.init(TreeLstmConfig(L=2, q=3))))
    doc["header"]["q"] = 4
    with pytest.raises(CheckpointShapeError):
        checkpoint.loads(json.dumps(doc))


def test_future_version_names_both():
    doc = json.loads(checkpoint.dumps(BaselineModel.init("zi", 2, 1)))
    doc["header"]["format_version"] = 99
    with pytest.raises(CheckpointVersionError, match=r"99.*1"):
        checkpoint.loads(json.dumps(doc))


@pytest.mark.parametrize("text", ["", "{", "[]", '{"header": {}}',
                                  '{"header": {"format_version": 1}, "tensors": {}}'])
def test_corrupt(text):
    with pytest.raises(CorruptCheckpointError):
        checkpoint.loads(text)


def test_bad_number_is_corrupt():
    doc = json.loads(checkpoint.dumps(BaselineModel.init("zi", 2, 1)))
    doc["tensors"]["w_hat"][0] = "not-hex"
    with pytest.raises(CorruptCheckpointError):
        checkpoint.loads(json.dumps(doc))


def test_missing_tensor_is_shape_error():
    doc = json.loads(checkpoint.dumps(BaselineModel.init("zi", 2, 1)))
    del doc["tensors"]["lstm.R"]
    with pytest.raises(CheckpointShapeError):
        checkpoint.loads(json.dumps(doc))


def test_error_kinds_are_distinct():
    kinds = {CheckpointShapeError, CheckpointVersionError, CorruptCheckpointError}
    assert len(kinds) == 3
    for a in kinds:
        for b in kinds - {a}:
            assert not issubclass(a, b)
