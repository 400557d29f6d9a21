import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from wenet import WritingEditingNetwork
from wenet.checkpoint import from_bytes, to_bytes

TITLES = ["neural relation extraction", "dependency parsing with graphs", "topic models"]
ABSTRACTS = ["we extract relations with a network .", "we parse sentences with graphs .",
             "we model topics in documents ."]
FAST = dict(embedding_dim=8, encoder_hidden=6, iterations=1, epochs=3, max_decode_len=10,
            learning_rate=5e-3)


@pytest.fixture(scope="module")
def fitted():
    return WritingEditingNetwork(**FAST).fit(TITLES, ABSTRACTS, max_steps=6)


def test_get_params_and_clone():
    est = WritingEditingNetwork(**FAST)
    params = est.get_params()
    assert params["encoder_hidden"] == 6 and params["random_state"] == 0
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    assert est.set_params(iterations=3).iterations == 3


def test_fit_sets_attributes(fitted):
    assert fitted.n_steps_ == 6
    assert len(fitted.history_) >= 1
    assert fitted.params_.decoder_hidden == 12
    assert "relations" in fitted.vocab_


def test_predict_shapes(fitted):
    preds = fitted.predict(TITLES)
    assert len(preds) == 3 and all(isinstance(p, str) for p in preds)
    drafts = fitted.generate_drafts(TITLES[:1], iterations=2)
    assert len(drafts) == 1 and len(drafts[0]) == 3


def test_predict_deterministic(fitted):
    assert fitted.predict(TITLES) == fitted.predict(TITLES)


def test_score_in_unit_interval(fitted):
    assert 0.0 <= fitted.score(TITLES, ABSTRACTS) <= 1.0


def test_same_seed_same_model():
    a = WritingEditingNetwork(**FAST).fit(TITLES, ABSTRACTS, max_steps=3)
    b = WritingEditingNetwork(**FAST).fit(TITLES, ABSTRACTS, max_steps=3)
    for x, y in zip(a.params_.named_tensors().values(), b.params_.named_tensors().values()):
        np.testing.assert_array_equal(x.data, y.data)


def test_from_checkpoint(fitted):
    again = WritingEditingNetwork.from_checkpoint(from_bytes(to_bytes(fitted.checkpoint_)))
    assert again.predict(TITLES) == fitted.predict(TITLES)
    assert again.get_params()["encoder_hidden"] == 6


def test_validation_data_tracked():
    est = WritingEditingNetwork(**FAST).fit(TITLES[:2], ABSTRACTS[:2], TITLES[2:], ABSTRACTS[2:],
                                            max_steps=4)
    assert all(e.valid_loss is not None for e in est.history_)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        WritingEditingNetwork().predict(TITLES)


@pytest.mark.parametrize("X,y,err", [
    ("a title", ["abstract"], ValueError),
    ([["nested"]], ["abstract"], ValueError),
    ([], [], ValueError),
    (["t1", "t2"], ["a1"], ValueError),
    ([1], ["a"], TypeError),
    (["   "], ["a"], ValueError),
])
def test_input_validation(X, y, err):
    with pytest.raises(err):
        WritingEditingNetwork(**FAST).fit(X, y, max_steps=1)


def test_invalid_hyperparameter_surfaces_as_value_error():
    with pytest.raises(ValueError):
        WritingEditingNetwork(**{**FAST, "iterations": -1}).fit(TITLES, ABSTRACTS, max_steps=1)
